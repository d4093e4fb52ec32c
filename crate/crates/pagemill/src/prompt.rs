//! Layout-aware prompt assembly.
//!
//! A prompt is a typed slot sequence: fixed template text, one slot per
//! image patch, each segment's text in reading order, the segment's box
//! (as rendered text or as a single embedded slot, depending on the
//! coordinate mode), and the question. Token accounting works over the
//! same sequence, so the textual-vs-embedded length comparison uses one
//! counter for both modes.

use crate::page::{DocumentPage, TextSegment};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

/// Fixed text that opens every prompt, ahead of the patch slots.
pub const PREAMBLE: &str = "Given the document patches: ";

/// Fixed text bridging the patch slots and the per-segment listing.
pub const CONNECTIVE: &str = " and the document text contents and locations in the form of \"text, [left, top, right, bottom]\": ";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("image side {image_side} is not divisible by patch side {patch_side}")]
    NonDivisiblePatch { image_side: u32, patch_side: u32 },
    #[error("{name} must be positive")]
    NonPositive { name: &'static str },
    #[error("no pages to report on")]
    EmptyCorpus,
}

/// Square patch grid: an `image_side` × `image_side` page image cut into
/// `patch_side` × `patch_side` squares, one slot each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    image_side: u32,
    patch_side: u32,
    m: usize,
}

impl PatchGrid {
    pub fn new(image_side: u32, patch_side: u32) -> Result<PatchGrid, PromptError> {
        let m = patch_count(image_side, patch_side)?;
        Ok(PatchGrid {
            image_side,
            patch_side,
            m,
        })
    }

    pub fn image_side(&self) -> u32 {
        self.image_side
    }

    pub fn patch_side(&self) -> u32 {
        self.patch_side
    }

    /// Number of patch slots, `(image_side / patch_side)²`.
    pub fn patch_tokens(&self) -> usize {
        self.m
    }
}

/// `(image_side / patch_side)²`, requiring exact divisibility.
pub fn patch_count(image_side: u32, patch_side: u32) -> Result<usize, PromptError> {
    if image_side == 0 {
        return Err(PromptError::NonPositive { name: "image_side" });
    }
    if patch_side == 0 {
        return Err(PromptError::NonPositive { name: "patch_side" });
    }
    if image_side % patch_side != 0 {
        return Err(PromptError::NonDivisiblePatch {
            image_side,
            patch_side,
        });
    }
    let per_side = (image_side / patch_side) as usize;
    Ok(per_side * per_side)
}

/// How a segment's coordinates enter the prompt: spelled out as text
/// (mode I) or compressed into one embedded slot per box (mode II).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordMode {
    TextualCoords,
    EmbeddedCoords,
}

impl CoordMode {
    pub fn name(&self) -> &'static str {
        match self {
            CoordMode::TextualCoords => "textual",
            CoordMode::EmbeddedCoords => "embedded",
        }
    }
}

/// One position in the assembled prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "slot", rename_all = "snake_case")]
pub enum PromptSlot {
    FixedText { text: String },
    SegmentText { index: usize, text: String },
    BoxSlot { index: usize },
    PatchSlot { index: usize },
    QuestionText { text: String },
}

/// Assembled prompt plus the slot range holding the per-segment listing
/// (`ocr_span`), so OCR-content length can be measured apart from the
/// fixed template, patches, and question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSlotSequence {
    pub slots: Vec<PromptSlot>,
    pub ocr_span: Range<usize>,
}

/// Builds the slot sequence: preamble, M patch slots, connective, then
/// per segment in reading order `SegmentText`, `", "`, and the box (a
/// rendered coordinate string in mode I, a `BoxSlot` in mode II) with
/// `"; "` separators, then a space and the question. Reading order is
/// recomputed here, so storage order of the segment list cannot affect
/// the result.
pub fn assemble(
    page: &DocumentPage,
    question: &str,
    mode: CoordMode,
    grid: &PatchGrid,
) -> Result<PromptSlotSequence, PromptError> {
    if question.is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    let mut slots = Vec::with_capacity(grid.patch_tokens() + page.n_segments() * 4 + 4);
    slots.push(PromptSlot::FixedText {
        text: PREAMBLE.to_string(),
    });
    for index in 0..grid.patch_tokens() {
        slots.push(PromptSlot::PatchSlot { index });
    }
    slots.push(PromptSlot::FixedText {
        text: CONNECTIVE.to_string(),
    });
    let ocr_start = slots.len();
    let mut ordered: Vec<&TextSegment> = page.segments.iter().collect();
    ordered.sort_by_key(|s| (s.bbox.top, s.bbox.left, s.index));
    for (position, segment) in ordered.iter().enumerate() {
        if position > 0 {
            slots.push(PromptSlot::FixedText {
                text: "; ".to_string(),
            });
        }
        slots.push(PromptSlot::SegmentText {
            index: segment.index,
            text: segment.text.clone(),
        });
        slots.push(PromptSlot::FixedText {
            text: ", ".to_string(),
        });
        match mode {
            CoordMode::TextualCoords => slots.push(PromptSlot::FixedText {
                text: segment.bbox.render(),
            }),
            CoordMode::EmbeddedCoords => slots.push(PromptSlot::BoxSlot {
                index: segment.index,
            }),
        }
    }
    let ocr_end = slots.len();
    slots.push(PromptSlot::FixedText {
        text: " ".to_string(),
    });
    slots.push(PromptSlot::QuestionText {
        text: question.to_string(),
    });
    Ok(PromptSlotSequence {
        slots,
        ocr_span: ocr_start..ocr_end,
    })
}

/// Counts tokens in plain text. Pluggable because production tokenizers
/// differ; the mode comparison's direction is counter-invariant.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

/// Default counter: each alphanumeric run is one token, and every
/// non-whitespace punctuation character is one token. Under this counter
/// a rendered box like `[100, 200, 180, 220]` costs 9 tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctCounter;

impl TokenCounter for WordPunctCounter {
    fn count(&self, text: &str) -> usize {
        let mut tokens = 0;
        let mut in_word = false;
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                if !in_word {
                    tokens += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !ch.is_whitespace() {
                    tokens += 1;
                }
            }
        }
        tokens
    }
}

/// Which embedding stream feeds a slot: text embedding (TE), vision
/// embedding plus vision position (VE+VP), or layout embedding plus
/// layout position (LE+LP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Text,
    VisionPatch,
    LayoutBox,
}

impl SourceTag {
    pub fn name(&self) -> &'static str {
        match self {
            SourceTag::Text => "TE",
            SourceTag::VisionPatch => "VE+VP",
            SourceTag::LayoutBox => "LE+LP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    FixedText,
    SegmentText,
    BoxSlot,
    PatchSlot,
    QuestionText,
}

impl SlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            SlotKind::FixedText => "fixed_text",
            SlotKind::SegmentText => "segment_text",
            SlotKind::BoxSlot => "box_slot",
            SlotKind::PatchSlot => "patch_slot",
            SlotKind::QuestionText => "question_text",
        }
    }
}

/// Per-slot token accounting entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeEntry {
    pub kind: SlotKind,
    pub tokens: usize,
    pub source: SourceTag,
}

/// Token accounting for a whole sequence: one entry per slot plus the
/// total, which is always the sum of the entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSequenceShape {
    pub entries: Vec<ShapeEntry>,
    pub total: usize,
}

fn slot_entry(
    slot: &PromptSlot,
    counter: &impl TokenCounter,
    box_tokens_per_slot: usize,
    patch_tokens_per_slot: usize,
) -> ShapeEntry {
    match slot {
        PromptSlot::FixedText { text } => ShapeEntry {
            kind: SlotKind::FixedText,
            tokens: counter.count(text),
            source: SourceTag::Text,
        },
        PromptSlot::SegmentText { text, .. } => ShapeEntry {
            kind: SlotKind::SegmentText,
            tokens: counter.count(text),
            source: SourceTag::Text,
        },
        PromptSlot::QuestionText { text } => ShapeEntry {
            kind: SlotKind::QuestionText,
            tokens: counter.count(text),
            source: SourceTag::Text,
        },
        PromptSlot::BoxSlot { .. } => ShapeEntry {
            kind: SlotKind::BoxSlot,
            tokens: box_tokens_per_slot,
            source: SourceTag::LayoutBox,
        },
        PromptSlot::PatchSlot { .. } => ShapeEntry {
            kind: SlotKind::PatchSlot,
            tokens: patch_tokens_per_slot,
            source: SourceTag::VisionPatch,
        },
    }
}

/// Token accounting over every slot. Text slots are counted with
/// `counter`; each box and patch slot costs its fixed per-slot count
/// (default 1 each), which must be positive.
pub fn sequence_shape(
    seq: &PromptSlotSequence,
    counter: &impl TokenCounter,
    box_tokens_per_slot: usize,
    patch_tokens_per_slot: usize,
) -> Result<FeatureSequenceShape, PromptError> {
    if box_tokens_per_slot == 0 {
        return Err(PromptError::NonPositive {
            name: "box_tokens_per_slot",
        });
    }
    if patch_tokens_per_slot == 0 {
        return Err(PromptError::NonPositive {
            name: "patch_tokens_per_slot",
        });
    }
    let entries: Vec<ShapeEntry> = seq
        .slots
        .iter()
        .map(|slot| slot_entry(slot, counter, box_tokens_per_slot, patch_tokens_per_slot))
        .collect();
    let total = entries.iter().map(|e| e.tokens).sum();
    Ok(FeatureSequenceShape { entries, total })
}

/// Token count of the per-segment listing alone (the `ocr_span`).
pub fn ocr_span_tokens(
    seq: &PromptSlotSequence,
    counter: &impl TokenCounter,
    box_tokens_per_slot: usize,
    patch_tokens_per_slot: usize,
) -> usize {
    seq.slots[seq.ocr_span.clone()]
        .iter()
        .map(|slot| slot_entry(slot, counter, box_tokens_per_slot, patch_tokens_per_slot).tokens)
        .sum()
}

/// Result of measuring a sequence against a length budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthCheck {
    pub total: usize,
    pub over_length: bool,
    pub dropped_segments: usize,
}

/// Measures `seq` against `max_length`. When `truncate` is set and the
/// sequence is over budget, trailing segment groups (segment text, its
/// separator, and its box) are dropped from the end of the listing —
/// never patches, fixed template text, or the question — until the
/// sequence fits or no segments remain. `over_length` stays set if even
/// the segment-free sequence exceeds the budget.
pub fn enforce_length(
    seq: &PromptSlotSequence,
    counter: &impl TokenCounter,
    box_tokens_per_slot: usize,
    patch_tokens_per_slot: usize,
    max_length: usize,
    truncate: bool,
) -> Result<(PromptSlotSequence, LengthCheck), PromptError> {
    let mut current = seq.clone();
    let mut dropped = 0usize;
    loop {
        let shape = sequence_shape(&current, counter, box_tokens_per_slot, patch_tokens_per_slot)?;
        if shape.total <= max_length {
            return Ok((
                current,
                LengthCheck {
                    total: shape.total,
                    over_length: false,
                    dropped_segments: dropped,
                },
            ));
        }
        if !truncate {
            return Ok((
                current,
                LengthCheck {
                    total: shape.total,
                    over_length: true,
                    dropped_segments: dropped,
                },
            ));
        }
        // Last segment group: from the separator before its SegmentText
        // (or the span start for the only group) through the span end.
        let group_starts: Vec<usize> = current.ocr_span.clone()
            .filter(|&i| matches!(current.slots[i], PromptSlot::SegmentText { .. }))
            .collect();
        let Some(&last_start) = group_starts.last() else {
            return Ok((
                current,
                LengthCheck {
                    total: shape.total,
                    over_length: true,
                    dropped_segments: dropped,
                },
            ));
        };
        let cut = if group_starts.len() == 1 {
            current.ocr_span.start
        } else {
            last_start - 1
        };
        let tail: Vec<PromptSlot> = current.slots[current.ocr_span.end..].to_vec();
        current.slots.truncate(cut);
        current.slots.extend(tail);
        current.ocr_span = current.ocr_span.start..cut;
        dropped += 1;
    }
}

/// One page's OCR-listing token counts under both coordinate modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRow {
    pub page_id: String,
    pub n_segments: usize,
    pub len_mode_i: usize,
    pub len_mode_ii: usize,
}

/// Corpus-level mode comparison. Lengths count the OCR listing only;
/// the constant patch cost is reported separately so whole-prompt totals
/// are recoverable by adding `patch_tokens` plus fixed-text overhead.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthReport {
    pub rows: Vec<LengthRow>,
    pub mean_i: f64,
    pub mean_ii: f64,
    /// mean_i / mean_ii; NaN when mean_ii is zero (no OCR content).
    pub ratio: f64,
    pub patch_tokens: usize,
}

impl LengthReport {
    /// CSV with columns `page_id, n_segments, len_mode_I, len_mode_II`:
    /// one row per page plus a summary row (page_id "mean", two-decimal
    /// means).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["page_id", "n_segments", "len_mode_I", "len_mode_II"])?;
        for row in &self.rows {
            w.write_record([
                row.page_id.as_str(),
                &row.n_segments.to_string(),
                &row.len_mode_i.to_string(),
                &row.len_mode_ii.to_string(),
            ])?;
        }
        let mean_segments =
            self.rows.iter().map(|r| r.n_segments).sum::<usize>() as f64 / self.rows.len() as f64;
        w.write_record([
            "mean".to_string(),
            format!("{mean_segments:.2}"),
            format!("{:.2}", self.mean_i),
            format!("{:.2}", self.mean_ii),
        ])?;
        w.flush()
    }
}

/// Measures every page under both coordinate modes with one counter and
/// reports per-page lengths, means, and the mode-I/mode-II ratio.
pub fn length_report(
    pages: &[DocumentPage],
    counter: &impl TokenCounter,
    grid: &PatchGrid,
) -> Result<LengthReport, PromptError> {
    if pages.is_empty() {
        return Err(PromptError::EmptyCorpus);
    }
    let mut rows = Vec::with_capacity(pages.len());
    for page in pages {
        // The question does not intersect the OCR span; any placeholder
        // satisfies the non-empty precondition without affecting counts.
        let seq_i = assemble(page, "?", CoordMode::TextualCoords, grid)?;
        let seq_ii = assemble(page, "?", CoordMode::EmbeddedCoords, grid)?;
        rows.push(LengthRow {
            page_id: page.page_id.clone(),
            n_segments: page.n_segments(),
            len_mode_i: ocr_span_tokens(&seq_i, counter, 1, 1),
            len_mode_ii: ocr_span_tokens(&seq_ii, counter, 1, 1),
        });
    }
    let n = rows.len() as f64;
    let mean_i = rows.iter().map(|r| r.len_mode_i).sum::<usize>() as f64 / n;
    let mean_ii = rows.iter().map(|r| r.len_mode_ii).sum::<usize>() as f64 / n;
    let ratio = mean_i / mean_ii;
    Ok(LengthReport {
        rows,
        mean_i,
        mean_ii,
        ratio,
        patch_tokens: grid.patch_tokens(),
    })
}
