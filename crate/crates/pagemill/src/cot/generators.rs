//! The seven task generators.
//!
//! Every generator is a pure function of (page, parameters, rng): the rng
//! is an explicit input, never ambient state, so a fixed seed reproduces a
//! record byte-for-byte. The three CoT families (layout, table, geometric)
//! delegate their step bodies to shared builders that the verifier reuses,
//! which keeps generation and verification consistent by construction.

use crate::cot::{
    fmt_2dp, fmt_real, quote_text, BoundValue, CotStep, GenError, InstructionRecord, TaskKind,
};
use crate::geometry::{
    center, distance_breakdown, nearest_segments, page_region, projection_relation,
    relative_direction, BBox, DistanceBreakdown, DistanceCase, IntervalRelation, PageRegion,
    RelativeDirection, GRID_MAX,
};
use crate::page::{DocumentPage, LayoutType};
use crate::xycut::{cell_at, derive_table_model, TableModel, TableProvenance, XyCutError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// What a geometric-analysis record asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricQuery {
    Distance,
    Direction,
}

impl GeometricQuery {
    pub fn name(&self) -> &'static str {
        match self {
            GeometricQuery::Distance => "distance",
            GeometricQuery::Direction => "direction",
        }
    }

    pub fn from_name(name: &str) -> Option<GeometricQuery> {
        match name {
            "distance" => Some(GeometricQuery::Distance),
            "direction" => Some(GeometricQuery::Direction),
            _ => None,
        }
    }
}

/// Template revision recorded in every record's metadata; bump when any
/// narration or question template changes, so corpora stay reproducible.
pub const TEMPLATE_VERSION: &str = "1";

fn base_metadata() -> BTreeMap<String, serde_json::Value> {
    let mut m = BTreeMap::new();
    m.insert(
        "template_version".to_string(),
        serde_json::Value::String(TEMPLATE_VERSION.to_string()),
    );
    m
}

fn pick(rng: &mut impl Rng, variants: &[String]) -> String {
    variants[rng.random_range(0..variants.len())].clone()
}

fn ensure_nonempty(page: &DocumentPage) -> Result<(), GenError> {
    if page.segments.is_empty() {
        Err(GenError::EmptyPage {
            page_id: page.page_id.clone(),
        })
    } else {
        Ok(())
    }
}

fn ensure_mask_rate(page: &DocumentPage, mask_rate: f64) -> Result<(), GenError> {
    if mask_rate > 0.0 && mask_rate <= 0.5 {
        Ok(())
    } else {
        Err(GenError::MaskRateOutOfRange {
            page_id: page.page_id.clone(),
            got: mask_rate,
        })
    }
}

/// Display label for a segment: its text, disambiguated with the
/// reading-order index whenever another segment shares the same text.
pub fn segment_label(page: &DocumentPage, idx: usize) -> String {
    let text = &page.segments[idx].text;
    let duplicated = page
        .segments
        .iter()
        .any(|s| s.index != idx && s.text == *text);
    if duplicated {
        format!("{text} (segment {idx})")
    } else {
        text.clone()
    }
}

fn joined_list(items: &[String]) -> String {
    items.join(", ")
}

// ---------------------------------------------------------------------------
// Document description
// ---------------------------------------------------------------------------

/// The deterministic answer body of a document-description record. A pure
/// function of the page, so the verifier can recompute it exactly.
pub fn description_answer(page: &DocumentPage) -> Result<String, GenError> {
    ensure_nonempty(page)?;
    let n = page.n_segments();
    let seg_noun = if n == 1 { "segment" } else { "segments" };
    let answer = match page.layout_annotations.as_deref() {
        Some(annotations) if !annotations.is_empty() => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for a in annotations {
                let slot = LayoutType::ALL
                    .iter()
                    .position(|t| *t == a.layout_type)
                    .expect("layout type in closed set");
                *counts.entry(slot).or_insert(0) += 1;
            }
            let parts: Vec<String> = counts
                .iter()
                .map(|(&slot, &count)| {
                    let noun = if count == 1 { "region" } else { "regions" };
                    format!("{count} {} {noun}", LayoutType::ALL[slot].prose_name())
                })
                .collect();
            format!(
                "The document contains {n} text {seg_noun}. Its layout includes {}.",
                joined_list(&parts)
            )
        }
        _ => {
            let mut occupied = [false; 9];
            for seg in &page.segments {
                let region = page_region(&seg.bbox, GRID_MAX as f64, GRID_MAX as f64)?;
                let slot = PageRegion::ALL
                    .iter()
                    .position(|r| *r == region)
                    .expect("region in closed set");
                occupied[slot] = true;
            }
            let names: Vec<String> = PageRegion::ALL
                .iter()
                .enumerate()
                .filter(|(slot, _)| occupied[*slot])
                .map(|(_, r)| r.name().to_string())
                .collect();
            let region_noun = if names.len() == 1 { "region" } else { "regions" };
            format!(
                "The document contains {n} text {seg_noun}. Text appears in the {} {region_noun} of the page.",
                joined_list(&names)
            )
        }
    };
    Ok(answer)
}

/// Template-filled overview of the page: segment count plus either layout
/// type counts or, without annotations, the page regions text occupies.
/// No CoT steps.
pub fn gen_document_description(
    page: &DocumentPage,
    rng: &mut impl Rng,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    let answer = description_answer(page)?;
    let question = pick(
        rng,
        &[
            "Provide a brief overview of the document.".to_string(),
            "Give a short description of this document page.".to_string(),
            "Summarize the contents of this document.".to_string(),
        ],
    );
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::DocumentDescription,
        question,
        cot_steps: None,
        final_answer: answer,
        metadata: base_metadata(),
    })
}

// ---------------------------------------------------------------------------
// Text box reconstruction
// ---------------------------------------------------------------------------

/// Asks for the boxes of `sample_k` segments named by text alone; the
/// answer lists each as `text, [left, top, right, bottom]`. Sampled texts
/// must be pairwise distinct or the question would be ambiguous.
pub fn gen_text_box_reconstruction(
    page: &DocumentPage,
    rng: &mut impl Rng,
    sample_k: usize,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    ensure_nonempty(page)?;
    let n = page.n_segments();
    if sample_k < 1 || sample_k > n {
        return Err(GenError::BadParam {
            name: "sample_k".to_string(),
            reason: format!("{sample_k} outside 1..={n}"),
        });
    }
    let question_template = rng.random_range(0..3usize);
    let distinct: std::collections::BTreeSet<&str> =
        page.segments.iter().map(|s| s.text.as_str()).collect();
    if distinct.len() < sample_k {
        return Err(GenError::AmbiguousTexts {
            page_id: page.page_id.clone(),
            distinct: distinct.len(),
            needed: sample_k,
        });
    }
    // Rejection-sample an index set whose texts are pairwise distinct;
    // a valid draw exists, so the bound is a determinism guard, not a
    // correctness requirement.
    let mut chosen: Option<Vec<usize>> = None;
    for _ in 0..64 {
        let mut draw = rand::seq::index::sample(rng, n, sample_k).into_vec();
        draw.sort_unstable();
        let texts: std::collections::BTreeSet<&str> =
            draw.iter().map(|&i| page.segments[i].text.as_str()).collect();
        if texts.len() == sample_k {
            chosen = Some(draw);
            break;
        }
    }
    let chosen = chosen.ok_or_else(|| GenError::AmbiguousTexts {
        page_id: page.page_id.clone(),
        distinct: distinct.len(),
        needed: sample_k,
    })?;
    let listed: Vec<String> = chosen
        .iter()
        .map(|&i| quote_text(&page.segments[i].text))
        .collect();
    let list = joined_list(&listed);
    let question = match question_template {
        0 => format!(
            "Recover the coordinates of the bounding boxes for the following OCR text: {list}."
        ),
        1 => format!("Provide the bounding box of each of these text segments: {list}."),
        _ => format!(
            "Where do the following text segments appear on the page? Answer with their boxes: {list}."
        ),
    };
    let answer = chosen
        .iter()
        .map(|&i| {
            let seg = &page.segments[i];
            format!("{}, {}", seg.text, seg.bbox.render())
        })
        .collect::<Vec<_>>()
        .join("\n");
    let mut metadata = base_metadata();
    metadata.insert("sample_k".to_string(), serde_json::json!(sample_k));
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::TextBoxReconstruction,
        question,
        cot_steps: None,
        final_answer: answer,
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Layout analysis (CoT)
// ---------------------------------------------------------------------------

fn layout_annotations(
    page: &DocumentPage,
) -> Result<&[crate::page::LayoutAnnotation], GenError> {
    match page.layout_annotations.as_deref() {
        Some(a) if !a.is_empty() => Ok(a),
        _ => Err(GenError::MissingLayoutAnnotations {
            page_id: page.page_id.clone(),
        }),
    }
}

/// The annotation overlapping `target` most (positive area), ties to the
/// smaller annotation index.
fn best_overlap(
    page: &DocumentPage,
    target: &BBox,
) -> Result<(usize, i64), GenError> {
    let annotations = layout_annotations(page)?;
    let mut best: Option<(usize, i64)> = None;
    for (i, a) in annotations.iter().enumerate() {
        let area = target.overlap_area(&a.bbox);
        if area > 0 && best.map(|(_, b)| area > b).unwrap_or(true) {
            best = Some((i, area));
        }
    }
    best.ok_or_else(|| GenError::NoIntersectingAnnotation {
        page_id: page.page_id.clone(),
        target: target.render(),
    })
}

/// The three layout-analysis reasoning steps: (1) text inside the area and
/// its page region, (2) nearest annotated regions, (3) the layout type of
/// the maximally overlapping annotation. Shared by generator and verifier.
pub fn layout_steps(
    page: &DocumentPage,
    target: &BBox,
    k_neighbors: usize,
) -> Result<(Vec<CotStep>, LayoutType), GenError> {
    let annotations = layout_annotations(page)?;
    let (best_idx, best_area) = best_overlap(page, target)?;

    let region = page_region(target, GRID_MAX as f64, GRID_MAX as f64)?;
    let inside: Vec<String> = page
        .segments
        .iter()
        .filter(|s| target.overlap_area(&s.bbox) > 0)
        .map(|s| quote_text(&s.text))
        .collect();
    let narration_1 = if inside.is_empty() {
        format!(
            "The area {} lies in the {} region of the page. It contains no text segments.",
            target.render(),
            region.name()
        )
    } else {
        format!(
            "The area {} lies in the {} region of the page. It contains the text: {}.",
            target.render(),
            region.name(),
            joined_list(&inside)
        )
    };
    let mut values_1 = BTreeMap::new();
    values_1.insert("target".to_string(), BoundValue::Box(*target));
    values_1.insert("region".to_string(), BoundValue::Region(region));
    let step_1 = CotStep {
        step_no: 1,
        narration: narration_1,
        bound_values: values_1,
    };

    let candidates: Vec<(usize, BBox)> =
        annotations.iter().enumerate().map(|(i, a)| (i, a.bbox)).collect();
    let ranked = nearest_segments(target, None, &candidates, k_neighbors)?;
    let mut values_2 = BTreeMap::new();
    values_2.insert(
        "n_neighbors".to_string(),
        BoundValue::Int(ranked.len() as i64),
    );
    let mut items = Vec::new();
    for (pos, &ann_idx) in ranked.iter().enumerate() {
        let a = &annotations[ann_idx];
        let d = crate::geometry::min_distance(target, &a.bbox);
        items.push(format!(
            "a {} at {} (distance {})",
            a.layout_type.prose_name(),
            a.bbox.render(),
            fmt_2dp(d)
        ));
        let key = pos + 1;
        values_2.insert(format!("neighbor_{key}_box"), BoundValue::Box(a.bbox));
        values_2.insert(
            format!("neighbor_{key}_type"),
            BoundValue::Label(a.layout_type.name().to_string()),
        );
        values_2.insert(format!("neighbor_{key}_distance"), BoundValue::Real(d));
    }
    let narration_2 = if ranked.len() == 1 {
        format!("The nearest annotated region is {}.", items[0])
    } else {
        format!(
            "The {} nearest annotated regions are: {}.",
            ranked.len(),
            joined_list(&items)
        )
    };
    let step_2 = CotStep {
        step_no: 2,
        narration: narration_2,
        bound_values: values_2,
    };

    let best = &annotations[best_idx];
    let narration_3 = format!(
        "Following from the position and neighbors above, the area overlaps the {} annotation at {} most, with overlap area {}; the layout type is {}.",
        best.layout_type.prose_name(),
        best.bbox.render(),
        best_area,
        best.layout_type.name()
    );
    let mut values_3 = BTreeMap::new();
    values_3.insert("best_box".to_string(), BoundValue::Box(best.bbox));
    values_3.insert(
        "best_type".to_string(),
        BoundValue::Label(best.layout_type.name().to_string()),
    );
    values_3.insert("overlap_area".to_string(), BoundValue::Int(best_area));
    let step_3 = CotStep {
        step_no: 3,
        narration: narration_3,
        bound_values: values_3,
    };

    Ok((vec![step_1, step_2, step_3], best.layout_type))
}

/// CoT record asking for the layout type of a target area, reasoned via
/// region naming, nearest annotations, and maximal overlap.
pub fn gen_layout_analysis(
    page: &DocumentPage,
    target_area: BBox,
    rng: &mut impl Rng,
    k_neighbors: usize,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    if k_neighbors < 1 {
        return Err(GenError::BadParam {
            name: "k_neighbors".to_string(),
            reason: format!("{k_neighbors} must be at least 1"),
        });
    }
    let area = target_area.render();
    let question = pick(
        rng,
        &[
            format!(
                "Identify the text within the area {area} and determine the layout type of its region."
            ),
            format!(
                "What type of layout element occupies the area {area}? Consider the text inside it and its surroundings."
            ),
            format!("Examine the region {area}: what kind of layout element is it?"),
        ],
    );
    let (steps, answer_type) = layout_steps(page, &target_area, k_neighbors)?;
    let mut metadata = base_metadata();
    metadata.insert(
        "target_area".to_string(),
        serde_json::json!([
            target_area.left,
            target_area.top,
            target_area.right,
            target_area.bottom
        ]),
    );
    metadata.insert("k_neighbors".to_string(), serde_json::json!(k_neighbors));
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::LayoutAnalysis,
        question,
        cot_steps: Some(steps),
        final_answer: answer_type.name().to_string(),
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Table analysis (CoT)
// ---------------------------------------------------------------------------

/// The three table-analysis reasoning steps: (1) headers with locations,
/// (2) the cells of the target column top-to-bottom, (3) the row_i-th
/// entry. Shared by generator and verifier.
pub fn table_steps(
    page: &DocumentPage,
    model: &TableModel,
    row_i: usize,
    col_j: usize,
) -> Result<(Vec<CotStep>, String), GenError> {
    let target = cell_at(model, row_i, col_j)?;
    let header_seg = model.headers[col_j - 1];
    let header_label = quote_text(&page.segments[header_seg].text);

    let mut values_1 = BTreeMap::new();
    values_1.insert("n_cols".to_string(), BoundValue::Int(model.n_cols as i64));
    values_1.insert("col_j".to_string(), BoundValue::Int(col_j as i64));
    let mut header_items = Vec::new();
    for (pos, &h) in model.headers.iter().enumerate() {
        let seg = &page.segments[h];
        header_items.push(format!("{} at {}", quote_text(&seg.text), seg.bbox.render()));
        values_1.insert(format!("header_{}_box", pos + 1), BoundValue::Box(seg.bbox));
    }
    let narration_1 = if model.n_cols == 1 {
        format!(
            "The table has 1 header: {}. Header 1 is {header_label}.",
            header_items[0]
        )
    } else {
        format!(
            "The table has {} headers, left to right: {}. Header {col_j} is {header_label}.",
            model.n_cols,
            joined_list(&header_items)
        )
    };
    let step_1 = CotStep {
        step_no: 1,
        narration: narration_1,
        bound_values: values_1,
    };

    let column = &model.columns[col_j - 1];
    let mut values_2 = BTreeMap::new();
    values_2.insert("col_j".to_string(), BoundValue::Int(col_j as i64));
    let mut cell_items = Vec::new();
    for (pos, &c) in column.iter().enumerate() {
        let seg = &page.segments[c];
        cell_items.push(format!("{} at {}", quote_text(&seg.text), seg.bbox.render()));
        values_2.insert(format!("cell_{}_box", pos + 1), BoundValue::Box(seg.bbox));
    }
    let narration_2 = format!(
        "Column {col_j} holds the cells vertically aligned under {header_label}, top to bottom: {}.",
        joined_list(&cell_items)
    );
    let step_2 = CotStep {
        step_no: 2,
        narration: narration_2,
        bound_values: values_2,
    };

    let answer = page.segments[target].text.clone();
    let narration_3 = format!(
        "Row {row_i} of column {col_j} selects entry {row_i} of that list: {}.",
        quote_text(&answer)
    );
    let mut values_3 = BTreeMap::new();
    values_3.insert("row_i".to_string(), BoundValue::Int(row_i as i64));
    values_3.insert("col_j".to_string(), BoundValue::Int(col_j as i64));
    let step_3 = CotStep {
        step_no: 3,
        narration: narration_3,
        bound_values: values_3,
    };

    Ok((vec![step_1, step_2, step_3], answer))
}

/// CoT record locating the cell at content row `row_i` of column `col_j`,
/// using annotated structure when present and XY-Cut recovery otherwise.
#[allow(clippy::too_many_arguments)]
pub fn gen_table_analysis(
    page: &DocumentPage,
    row_i: usize,
    col_j: usize,
    rng: &mut impl Rng,
    min_gap: i32,
    column_tolerance: f64,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    ensure_nonempty(page)?;
    let (model, provenance) = derive_table_model(page, min_gap, column_tolerance)?;
    if provenance == TableProvenance::Recovered && !model.unassigned.is_empty() {
        return Err(GenError::Table(XyCutError::UnassignedCell {
            segment: model.unassigned[0],
            reason: "column alignment failed during structure recovery".to_string(),
        }));
    }
    let question = pick(
        rng,
        &[
            format!(
                "Locate the element at row {row_i}, column {col_j} of the table (content rows, headers excluded)."
            ),
            format!(
                "What is the content of the cell at content row {row_i}, column {col_j} of the table?"
            ),
            format!(
                "Find the table entry in row {row_i} of column {col_j}, not counting the header row."
            ),
        ],
    );
    let (steps, answer) = table_steps(page, &model, row_i, col_j)?;
    let mut metadata = base_metadata();
    metadata.insert("row_i".to_string(), serde_json::json!(row_i));
    metadata.insert("col_j".to_string(), serde_json::json!(col_j));
    metadata.insert("min_gap".to_string(), serde_json::json!(min_gap));
    metadata.insert(
        "column_tolerance".to_string(),
        serde_json::json!(column_tolerance),
    );
    metadata.insert(
        "structure".to_string(),
        serde_json::json!(provenance.name()),
    );
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::TableAnalysis,
        question,
        cot_steps: Some(steps),
        final_answer: answer,
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Masked language
// ---------------------------------------------------------------------------

fn is_sentinel(word: &str) -> bool {
    word.strip_prefix("[MASK_")
        .and_then(|rest| rest.strip_suffix(']'))
        .map(|digits| !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()))
        .unwrap_or(false)
}

/// Masks whitespace-delimited words of the page text (reading order,
/// single-space joined) i.i.d. at `mask_rate`, at least one forced. The
/// question shows the masked text; the answer maps each `[MASK_n]` back to
/// its word. No CoT steps.
pub fn gen_masked_language(
    page: &DocumentPage,
    rng: &mut impl Rng,
    mask_rate: f64,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    ensure_nonempty(page)?;
    ensure_mask_rate(page, mask_rate)?;
    let preamble = pick(
        rng,
        &[
            "Restore the masked words in the following OCR text:".to_string(),
            "Fill in each masked placeholder in this text:".to_string(),
            "The following OCR text has masked words. Recover them:".to_string(),
        ],
    );
    let words: Vec<&str> = page
        .segments
        .iter()
        .flat_map(|s| s.text.split_whitespace())
        .collect();
    debug_assert!(!words.is_empty(), "segments are non-empty after trim");
    if words.iter().any(|w| is_sentinel(w)) {
        return Err(GenError::SentinelCollision {
            page_id: page.page_id.clone(),
        });
    }
    let mut masked: Vec<bool> = words.iter().map(|_| rng.random_bool(mask_rate)).collect();
    if !masked.iter().any(|&m| m) {
        let forced = rng.random_range(0..words.len());
        masked[forced] = true;
    }
    let mut shown = Vec::with_capacity(words.len());
    let mut answers = Vec::new();
    for (word, &is_masked) in words.iter().zip(&masked) {
        if is_masked {
            let k = answers.len() + 1;
            shown.push(format!("[MASK_{k}]"));
            answers.push(format!("[MASK_{k}]: {word}"));
        } else {
            shown.push((*word).to_string());
        }
    }
    let question = format!("{preamble}\n{}", shown.join(" "));
    let mut metadata = base_metadata();
    metadata.insert("mask_rate".to_string(), serde_json::json!(mask_rate));
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::MaskedLanguage,
        question,
        cot_steps: None,
        final_answer: answers.join("\n"),
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Masked position
// ---------------------------------------------------------------------------

/// Lists every segment as `text, [box]` but replaces between 1 and N-1
/// boxes with `[BOX?]`; the answer supplies the missing boxes in order.
/// No CoT steps.
pub fn gen_masked_position(
    page: &DocumentPage,
    rng: &mut impl Rng,
    mask_rate: f64,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    let n = page.n_segments();
    if n < 2 {
        return Err(GenError::NotEnoughSegments {
            page_id: page.page_id.clone(),
            needed: 2,
            have: n,
        });
    }
    ensure_mask_rate(page, mask_rate)?;
    let preamble = pick(
        rng,
        &[
            "Reconstruct the bounding box for each text element marked [BOX?]:".to_string(),
            "Some coordinates below are missing. Provide the box for every [BOX?] entry:"
                .to_string(),
            "Recover the missing bounding boxes in this listing:".to_string(),
        ],
    );
    let mut masked: Vec<bool> = (0..n).map(|_| rng.random_bool(mask_rate)).collect();
    let masked_count = masked.iter().filter(|&&m| m).count();
    if masked_count == 0 {
        masked[rng.random_range(0..n)] = true;
    } else if masked_count == n {
        // Keep at least one unmasked anchor.
        masked[rng.random_range(0..n)] = false;
    }
    let mut lines = Vec::with_capacity(n);
    let mut answers = Vec::new();
    for (seg, &is_masked) in page.segments.iter().zip(&masked) {
        if is_masked {
            lines.push(format!("{}, [BOX?]", seg.text));
            answers.push(seg.bbox.render());
        } else {
            lines.push(format!("{}, {}", seg.text, seg.bbox.render()));
        }
    }
    let question = format!("{preamble}\n{}", lines.join("\n"));
    let mut metadata = base_metadata();
    metadata.insert("mask_rate".to_string(), serde_json::json!(mask_rate));
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::MaskedPosition,
        question,
        cot_steps: None,
        final_answer: answers.join("\n"),
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Geometric analysis (CoT)
// ---------------------------------------------------------------------------

fn direction_phrase(d: RelativeDirection) -> &'static str {
    use RelativeDirection::*;
    match d {
        Above => "above",
        Below => "below",
        Left => "to the left of",
        Right => "to the right of",
        AboveLeft => "above and to the left of",
        AboveRight => "above and to the right of",
        BelowLeft => "below and to the left of",
        BelowRight => "below and to the right of",
        Coincident => "at the same center as",
    }
}

fn interval_phrase(lo_a: i32, hi_a: i32, lo_b: i32, hi_b: i32, rel: IntervalRelation) -> String {
    let base = format!("the intervals [{lo_a}, {hi_a}] and [{lo_b}, {hi_b}]");
    match rel {
        IntervalRelation::Overlap(v) => format!("{base} overlap by {}", fmt_real(v)),
        IntervalRelation::Gap(v) => format!("{base} are separated by a gap of {}", fmt_real(v)),
    }
}

fn relation_kind(rel: IntervalRelation) -> &'static str {
    match rel {
        IntervalRelation::Overlap(_) => "overlap",
        IntervalRelation::Gap(_) => "gap",
    }
}

fn ensure_segment_index(page: &DocumentPage, name: &str, idx: usize) -> Result<(), GenError> {
    if idx < page.n_segments() {
        Ok(())
    } else {
        Err(GenError::BadParam {
            name: name.to_string(),
            reason: format!(
                "segment {idx} does not exist on page {} (N = {})",
                page.page_id,
                page.n_segments()
            ),
        })
    }
}

/// The four geometric-analysis reasoning steps: (1) both boxes, (2) the
/// projection relations, (3) centers and relative direction, (4) the
/// minimum distance with its case named. Shared by generator and verifier.
pub fn geometric_steps(
    page: &DocumentPage,
    idx_a: usize,
    idx_b: usize,
) -> Result<(Vec<CotStep>, DistanceBreakdown, RelativeDirection), GenError> {
    ensure_segment_index(page, "idx_a", idx_a)?;
    ensure_segment_index(page, "idx_b", idx_b)?;
    let a = page.segments[idx_a].bbox;
    let b = page.segments[idx_b].bbox;
    let label_a = quote_text(&segment_label(page, idx_a));
    let label_b = quote_text(&segment_label(page, idx_b));

    let mut values_1 = BTreeMap::new();
    values_1.insert("box_a".to_string(), BoundValue::Box(a));
    values_1.insert("box_b".to_string(), BoundValue::Box(b));
    let step_1 = CotStep {
        step_no: 1,
        narration: format!(
            "Segment {label_a} has bounding box {}; segment {label_b} has bounding box {}.",
            a.render(),
            b.render()
        ),
        bound_values: values_1,
    };

    let rel = projection_relation(&a, &b);
    let mut values_2 = BTreeMap::new();
    values_2.insert("box_a".to_string(), BoundValue::Box(a));
    values_2.insert("box_b".to_string(), BoundValue::Box(b));
    values_2.insert(
        "h_kind".to_string(),
        BoundValue::Label(relation_kind(rel.horizontal).to_string()),
    );
    values_2.insert("h_value".to_string(), BoundValue::Real(rel.horizontal.value()));
    values_2.insert(
        "v_kind".to_string(),
        BoundValue::Label(relation_kind(rel.vertical).to_string()),
    );
    values_2.insert("v_value".to_string(), BoundValue::Real(rel.vertical.value()));
    let step_2 = CotStep {
        step_no: 2,
        narration: format!(
            "Horizontally, {}; vertically, {}.",
            interval_phrase(a.left, a.right, b.left, b.right, rel.horizontal),
            interval_phrase(a.top, a.bottom, b.top, b.bottom, rel.vertical)
        ),
        bound_values: values_2,
    };

    let ca = center(&a);
    let cb = center(&b);
    let direction = relative_direction(&a, &b);
    let mut values_3 = BTreeMap::new();
    values_3.insert("center_a_x".to_string(), BoundValue::Real(ca.x));
    values_3.insert("center_a_y".to_string(), BoundValue::Real(ca.y));
    values_3.insert("center_b_x".to_string(), BoundValue::Real(cb.x));
    values_3.insert("center_b_y".to_string(), BoundValue::Real(cb.y));
    values_3.insert("direction".to_string(), BoundValue::Direction(direction));
    let step_3 = CotStep {
        step_no: 3,
        narration: format!(
            "The center of {label_a} is ({}, {}) and the center of {label_b} is ({}, {}); comparing centers, {label_b} is {} {label_a}.",
            fmt_real(ca.x),
            fmt_real(ca.y),
            fmt_real(cb.x),
            fmt_real(cb.y),
            direction_phrase(direction)
        ),
        bound_values: values_3,
    };

    let breakdown = distance_breakdown(&a, &b);
    let mut values_4 = BTreeMap::new();
    values_4.insert(
        "case".to_string(),
        BoundValue::Label(breakdown.case.name().to_string()),
    );
    values_4.insert("distance".to_string(), BoundValue::Real(breakdown.distance));
    let narration_4 = match breakdown.case {
        DistanceCase::Overlap => format!(
            "Both projections overlap, so the boxes intersect or touch; the minimum distance is {}.",
            fmt_2dp(breakdown.distance)
        ),
        DistanceCase::HorizontalGap => format!(
            "Only the vertical projections overlap, so the minimum distance is the horizontal gap: {}.",
            fmt_2dp(breakdown.distance)
        ),
        DistanceCase::VerticalGap => format!(
            "Only the horizontal projections overlap, so the minimum distance is the vertical gap: {}.",
            fmt_2dp(breakdown.distance)
        ),
        DistanceCase::Corner => {
            values_4.insert("h_gap".to_string(), BoundValue::Real(breakdown.h_gap));
            values_4.insert("v_gap".to_string(), BoundValue::Real(breakdown.v_gap));
            format!(
                "Neither projection overlaps, so the distance is measured between the nearest corners: with a horizontal gap of {} and a vertical gap of {}, the minimum distance is {}.",
                fmt_real(breakdown.h_gap),
                fmt_real(breakdown.v_gap),
                fmt_2dp(breakdown.distance)
            )
        }
    };
    let step_4 = CotStep {
        step_no: 4,
        narration: narration_4,
        bound_values: values_4,
    };

    Ok((vec![step_1, step_2, step_3, step_4], breakdown, direction))
}

/// CoT record about the minimum distance between, or relative direction
/// of, two segments, reasoned through projections, centers, and the
/// three-case distance rule.
pub fn gen_geometric_analysis(
    page: &DocumentPage,
    idx_a: usize,
    idx_b: usize,
    query: GeometricQuery,
    rng: &mut impl Rng,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    if idx_a == idx_b {
        return Err(GenError::BadParam {
            name: "idx_b".to_string(),
            reason: format!("must differ from idx_a ({idx_a})"),
        });
    }
    ensure_segment_index(page, "idx_a", idx_a)?;
    ensure_segment_index(page, "idx_b", idx_b)?;
    let label_a = quote_text(&segment_label(page, idx_a));
    let label_b = quote_text(&segment_label(page, idx_b));
    let question = match query {
        GeometricQuery::Distance => pick(
            rng,
            &[
                format!(
                    "What is the minimum distance between the text segments {label_a} and {label_b}?"
                ),
                format!("Compute the minimum distance between {label_a} and {label_b} on the page."),
                format!("How far apart are {label_a} and {label_b} at their closest points?"),
            ],
        ),
        GeometricQuery::Direction => pick(
            rng,
            &[
                format!("Where is {label_b} located relative to {label_a}?"),
                format!("In which direction does {label_b} lie from {label_a}?"),
                format!("Relative to {label_a}, where on the page is {label_b}?"),
            ],
        ),
    };
    let (steps, breakdown, direction) = geometric_steps(page, idx_a, idx_b)?;
    let final_answer = match query {
        GeometricQuery::Distance => fmt_2dp(breakdown.distance),
        GeometricQuery::Direction => direction.name().to_string(),
    };
    let mut metadata = base_metadata();
    metadata.insert("idx_a".to_string(), serde_json::json!(idx_a));
    metadata.insert("idx_b".to_string(), serde_json::json!(idx_b));
    metadata.insert("query".to_string(), serde_json::json!(query.name()));
    Ok(InstructionRecord {
        record_id: record_id.to_string(),
        page_id: page.page_id.clone(),
        task: TaskKind::GeometricAnalysis,
        question,
        cot_steps: Some(steps),
        final_answer,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cot::{render, unbound_narration_numbers, RenderMode};
    use crate::page::{ingest_page, RawLayout, RawPage, RawSegment, RawTable, RawTableCell};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn page_with(
        segments: &[(&str, [f64; 4])],
        layout: Option<Vec<RawLayout>>,
        table: Option<RawTable>,
    ) -> DocumentPage {
        let raw = RawPage {
            page_id: "p1".to_string(),
            width: 1000.0,
            height: 1000.0,
            segments: segments
                .iter()
                .map(|(t, b)| RawSegment {
                    text: (*t).to_string(),
                    bbox: *b,
                })
                .collect(),
            layout,
            table,
            image: None,
        };
        ingest_page(&raw).unwrap().page
    }

    fn two_segment_page() -> DocumentPage {
        page_with(
            &[
                ("alpha", [0.0, 0.0, 10.0, 10.0]),
                ("beta", [14.0, 0.0, 20.0, 10.0]),
            ],
            None,
            None,
        )
    }

    #[test]
    fn description_counts_layout_types() {
        let mut segments: Vec<(String, [f64; 4])> = Vec::new();
        for i in 0..12 {
            let top = (i * 60) as f64;
            segments.push((format!("line{i}"), [10.0, top, 400.0, top + 40.0]));
        }
        let refs: Vec<(&str, [f64; 4])> =
            segments.iter().map(|(t, b)| (t.as_str(), *b)).collect();
        let layout = vec![
            RawLayout { bbox: [10.0, 0.0, 400.0, 40.0], layout_type: "Title".into() },
            RawLayout { bbox: [10.0, 60.0, 400.0, 300.0], layout_type: "Paragraph".into() },
            RawLayout { bbox: [10.0, 320.0, 400.0, 500.0], layout_type: "Paragraph".into() },
            RawLayout { bbox: [10.0, 520.0, 400.0, 700.0], layout_type: "Paragraph".into() },
        ];
        let page = page_with(&refs, Some(layout), None);
        let record = gen_document_description(&page, &mut rng(1), "r1").unwrap();
        assert!(record.final_answer.contains("12 text segments"));
        assert!(record.final_answer.contains("1 title region"));
        assert!(record.final_answer.contains("3 paragraph regions"));
        assert!(record.cot_steps.is_none());
    }

    #[test]
    fn description_falls_back_to_regions() {
        let page = page_with(
            &[("top", [100.0, 50.0, 200.0, 80.0]), ("bottom", [100.0, 900.0, 200.0, 950.0])],
            None,
            None,
        );
        let record = gen_document_description(&page, &mut rng(2), "r1").unwrap();
        assert!(record.final_answer.contains("top-left"));
        assert!(record.final_answer.contains("bottom-left"));
    }

    #[test]
    fn description_rejects_empty_page() {
        let page = page_with(&[], None, None);
        assert!(matches!(
            gen_document_description(&page, &mut rng(3), "r1"),
            Err(GenError::EmptyPage { .. })
        ));
    }

    #[test]
    fn reconstruction_uses_exact_surface_form() {
        let page = page_with(&[("Total", [100.0, 200.0, 180.0, 220.0])], None, None);
        let record = gen_text_box_reconstruction(&page, &mut rng(4), 1, "r1").unwrap();
        assert!(record.final_answer.contains("Total, [100, 200, 180, 220]"));
    }

    #[test]
    fn reconstruction_covers_all_when_k_equals_n() {
        let page = two_segment_page();
        let record = gen_text_box_reconstruction(&page, &mut rng(5), 2, "r1").unwrap();
        assert!(record.final_answer.contains("alpha"));
        assert!(record.final_answer.contains("beta"));
        assert_eq!(record.final_answer.lines().count(), 2);
    }

    #[test]
    fn reconstruction_rejects_identical_texts() {
        let page = page_with(
            &[("x", [0.0, 0.0, 10.0, 10.0]), ("x", [0.0, 50.0, 10.0, 60.0])],
            None,
            None,
        );
        assert!(matches!(
            gen_text_box_reconstruction(&page, &mut rng(6), 2, "r1"),
            Err(GenError::AmbiguousTexts { .. })
        ));
    }

    fn layout_page() -> DocumentPage {
        page_with(
            &[
                ("Annual Report", [300.0, 20.0, 700.0, 60.0]),
                ("J. Doe", [400.0, 80.0, 600.0, 100.0]),
                ("Body text here", [100.0, 140.0, 900.0, 400.0]),
            ],
            Some(vec![
                RawLayout { bbox: [300.0, 20.0, 700.0, 60.0], layout_type: "Title".into() },
                RawLayout { bbox: [400.0, 80.0, 600.0, 100.0], layout_type: "Author".into() },
                RawLayout { bbox: [100.0, 140.0, 900.0, 400.0], layout_type: "Paragraph".into() },
            ]),
            None,
        )
    }

    #[test]
    fn layout_record_names_region_and_type() {
        let page = layout_page();
        let target = BBox::new(300, 20, 700, 60).unwrap();
        let record = gen_layout_analysis(&page, target, &mut rng(7), 3, "r1").unwrap();
        let steps = record.cot_steps.as_ref().unwrap();
        assert_eq!(steps.len(), 3);
        assert!(steps[0].narration.contains("top-center"));
        assert_eq!(record.final_answer, "Title");
        assert!(steps[2].narration.contains("Title"));
        for step in steps {
            assert!(
                unbound_narration_numbers(step).is_empty(),
                "unbound numbers in: {}",
                step.narration
            );
        }
    }

    #[test]
    fn layout_identity_target_is_total_overlap() {
        let page = layout_page();
        let target = BBox::new(400, 80, 600, 100).unwrap();
        let record = gen_layout_analysis(&page, target, &mut rng(8), 2, "r1").unwrap();
        assert_eq!(record.final_answer, "Author");
    }

    #[test]
    fn layout_whitespace_target_errors() {
        let page = layout_page();
        let target = BBox::new(0, 900, 50, 950).unwrap();
        assert!(matches!(
            gen_layout_analysis(&page, target, &mut rng(9), 3, "r1"),
            Err(GenError::NoIntersectingAnnotation { .. })
        ));
    }

    #[test]
    fn layout_requires_annotations() {
        let page = two_segment_page();
        let target = BBox::new(0, 0, 10, 10).unwrap();
        assert!(matches!(
            gen_layout_analysis(&page, target, &mut rng(10), 3, "r1"),
            Err(GenError::MissingLayoutAnnotations { .. })
        ));
    }

    fn table_page() -> DocumentPage {
        page_with(
            &[
                ("Item", [0.0, 0.0, 100.0, 50.0]),
                ("Price", [200.0, 0.0, 300.0, 50.0]),
                ("Apple", [0.0, 100.0, 100.0, 150.0]),
                ("3", [200.0, 100.0, 300.0, 150.0]),
            ],
            None,
            None,
        )
    }

    #[test]
    fn table_record_selects_correct_cell() {
        let page = table_page();
        let record = gen_table_analysis(&page, 1, 2, &mut rng(11), 20, 50.0, "r1").unwrap();
        assert_eq!(record.final_answer, "3");
        let steps = record.cot_steps.as_ref().unwrap();
        assert_eq!(steps.len(), 3);
        assert!(steps[0].narration.contains("\"Price\""));
        assert!(steps[1].narration.contains("vertically aligned"));
        for step in steps {
            assert!(
                unbound_narration_numbers(step).is_empty(),
                "unbound numbers in: {}",
                step.narration
            );
        }
        assert_eq!(record.metadata["structure"], serde_json::json!("recovered"));
    }

    #[test]
    fn table_single_cell_still_three_steps() {
        let page = page_with(
            &[("H", [0.0, 0.0, 100.0, 50.0]), ("only", [0.0, 100.0, 100.0, 150.0])],
            None,
            None,
        );
        let record = gen_table_analysis(&page, 1, 1, &mut rng(12), 20, 50.0, "r1").unwrap();
        assert_eq!(record.cot_steps.as_ref().unwrap().len(), 3);
        assert_eq!(record.final_answer, "only");
    }

    #[test]
    fn table_out_of_range_errors() {
        let page = table_page();
        assert!(matches!(
            gen_table_analysis(&page, 3, 1, &mut rng(13), 20, 50.0, "r1"),
            Err(GenError::Table(XyCutError::RowOutOfRange { .. }))
        ));
    }

    #[test]
    fn table_annotated_path_recorded() {
        let page = page_with(
            &[
                ("Item", [0.0, 0.0, 100.0, 50.0]),
                ("Price", [200.0, 0.0, 300.0, 50.0]),
                ("Apple", [0.0, 100.0, 100.0, 150.0]),
                ("3", [200.0, 100.0, 300.0, 150.0]),
            ],
            None,
            Some(RawTable {
                cells: vec![
                    RawTableCell { segment_index: 0, row: 0, col: 0, is_header: true },
                    RawTableCell { segment_index: 1, row: 0, col: 1, is_header: true },
                    RawTableCell { segment_index: 2, row: 1, col: 0, is_header: false },
                    RawTableCell { segment_index: 3, row: 1, col: 1, is_header: false },
                ],
            }),
        );
        let record = gen_table_analysis(&page, 1, 2, &mut rng(14), 20, 50.0, "r1").unwrap();
        assert_eq!(record.metadata["structure"], serde_json::json!("annotated"));
        assert_eq!(record.final_answer, "3");
    }

    #[test]
    fn masked_language_round_trips() {
        let page = page_with(
            &[
                ("Total Amount Due", [0.0, 0.0, 200.0, 20.0]),
                ("Pay by Friday", [0.0, 40.0, 200.0, 60.0]),
            ],
            None,
            None,
        );
        let record = gen_masked_language(&page, &mut rng(15), 0.3, "r1").unwrap();
        let masked_text = record.question.lines().nth(1).unwrap();
        let mut restored: Vec<String> =
            masked_text.split(' ').map(String::from).collect();
        for line in record.final_answer.lines() {
            let (sentinel, word) = line.split_once(": ").unwrap();
            let slot = restored
                .iter()
                .position(|t| t == sentinel)
                .expect("sentinel present in masked text");
            restored[slot] = word.to_string();
        }
        assert_eq!(restored.join(" "), "Total Amount Due Pay by Friday");
    }

    #[test]
    fn masked_language_forces_at_least_one_mask() {
        let page = page_with(&[("one two three", [0.0, 0.0, 100.0, 20.0])], None, None);
        // A tiny rate makes natural masking unlikely; forcing must kick in.
        let record = gen_masked_language(&page, &mut rng(16), 0.001, "r1").unwrap();
        assert!(record.question.contains("[MASK_1]"));
        assert_eq!(record.final_answer.lines().count(), 1);
    }

    #[test]
    fn masked_language_rejects_bad_rate() {
        let page = two_segment_page();
        assert!(matches!(
            gen_masked_language(&page, &mut rng(17), 0.0, "r1"),
            Err(GenError::MaskRateOutOfRange { .. })
        ));
        assert!(matches!(
            gen_masked_language(&page, &mut rng(17), 0.6, "r1"),
            Err(GenError::MaskRateOutOfRange { .. })
        ));
    }

    #[test]
    fn masked_language_rejects_sentinel_collision() {
        let page = page_with(&[("[MASK_1] looks masked", [0.0, 0.0, 100.0, 20.0])], None, None);
        assert!(matches!(
            gen_masked_language(&page, &mut rng(18), 0.3, "r1"),
            Err(GenError::SentinelCollision { .. })
        ));
    }

    #[test]
    fn masked_position_round_trips() {
        let page = page_with(
            &[
                ("alpha", [0.0, 0.0, 100.0, 20.0]),
                ("beta", [0.0, 40.0, 100.0, 60.0]),
                ("gamma", [0.0, 80.0, 100.0, 100.0]),
            ],
            None,
            None,
        );
        let record = gen_masked_position(&page, &mut rng(19), 0.4, "r1").unwrap();
        let mut answers = record.final_answer.lines();
        let mut restored = Vec::new();
        for line in record.question.lines().skip(1) {
            if let Some(text) = line.strip_suffix(", [BOX?]") {
                restored.push(format!("{}, {}", text, answers.next().unwrap()));
            } else {
                restored.push(line.to_string());
            }
        }
        assert!(answers.next().is_none(), "every answer consumed");
        let expected: Vec<String> = page
            .segments
            .iter()
            .map(|s| format!("{}, {}", s.text, s.bbox.render()))
            .collect();
        assert_eq!(restored, expected);
    }

    #[test]
    fn masked_position_never_masks_everything() {
        let page = two_segment_page();
        for seed in 0..50 {
            let record = gen_masked_position(&page, &mut rng(seed), 0.5, "r1").unwrap();
            let masked = record
                .question
                .lines()
                .filter(|l| l.ends_with(", [BOX?]"))
                .count();
            assert!(masked >= 1 && masked <= 1, "seed {seed}: {masked} masked of 2");
        }
    }

    #[test]
    fn masked_position_requires_two_segments() {
        let page = page_with(&[("solo", [0.0, 0.0, 10.0, 10.0])], None, None);
        assert!(matches!(
            gen_masked_position(&page, &mut rng(20), 0.3, "r1"),
            Err(GenError::NotEnoughSegments { .. })
        ));
    }

    #[test]
    fn geometric_overlap_answer_is_zero() {
        let page = page_with(
            &[("a", [0.0, 0.0, 10.0, 10.0]), ("b", [5.0, 5.0, 15.0, 15.0])],
            None,
            None,
        );
        let record =
            gen_geometric_analysis(&page, 0, 1, GeometricQuery::Distance, &mut rng(21), "r1")
                .unwrap();
        assert_eq!(record.final_answer, "0.00");
        let steps = record.cot_steps.as_ref().unwrap();
        assert_eq!(steps.len(), 4);
        assert!(steps[3].narration.contains("overlap"));
    }

    #[test]
    fn geometric_gap_case_reports_values() {
        let page = two_segment_page();
        let record =
            gen_geometric_analysis(&page, 0, 1, GeometricQuery::Distance, &mut rng(22), "r1")
                .unwrap();
        assert_eq!(record.final_answer, "4.00");
        let steps = record.cot_steps.as_ref().unwrap();
        assert!(steps[1].narration.contains("gap of 4"));
        assert!(steps[1].narration.contains("overlap by 10"));
        for step in steps {
            assert!(
                unbound_narration_numbers(step).is_empty(),
                "unbound numbers in: {}",
                step.narration
            );
        }
    }

    #[test]
    fn geometric_corner_direction() {
        let page = page_with(
            &[("a", [0.0, 0.0, 10.0, 10.0]), ("b", [13.0, 14.0, 20.0, 20.0])],
            None,
            None,
        );
        let record =
            gen_geometric_analysis(&page, 0, 1, GeometricQuery::Direction, &mut rng(23), "r1")
                .unwrap();
        assert_eq!(record.final_answer, "below-right");
        let steps = record.cot_steps.as_ref().unwrap();
        assert!(steps[3].narration.contains("nearest corners"));
        assert!(steps[3].narration.contains("5.00"));
    }

    #[test]
    fn geometric_rejects_equal_indices() {
        let page = two_segment_page();
        assert!(matches!(
            gen_geometric_analysis(&page, 1, 1, GeometricQuery::Distance, &mut rng(24), "r1"),
            Err(GenError::BadParam { .. })
        ));
    }

    #[test]
    fn geometric_disambiguates_equal_texts() {
        let page = page_with(
            &[("x", [0.0, 0.0, 10.0, 10.0]), ("x", [50.0, 0.0, 60.0, 10.0])],
            None,
            None,
        );
        let record =
            gen_geometric_analysis(&page, 0, 1, GeometricQuery::Distance, &mut rng(25), "r1")
                .unwrap();
        assert!(record.question.contains("x (segment 0)"));
        assert!(record.question.contains("x (segment 1)"));
    }

    #[test]
    fn determinism_fixed_seed_fixed_record() {
        let page = layout_page();
        let target = BBox::new(300, 20, 700, 60).unwrap();
        let r1 = gen_layout_analysis(&page, target, &mut rng(42), 3, "r1").unwrap();
        let r2 = gen_layout_analysis(&page, target, &mut rng(42), 3, "r1").unwrap();
        assert_eq!(r1, r2);
        let j1 = serde_json::to_string(&r1).unwrap();
        let j2 = serde_json::to_string(&r2).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn direct_render_equals_final_answer_for_all_generators() {
        let page = table_page();
        let records = vec![
            gen_document_description(&page, &mut rng(30), "r1").unwrap(),
            gen_text_box_reconstruction(&page, &mut rng(31), 2, "r2").unwrap(),
            gen_table_analysis(&page, 1, 1, &mut rng(32), 20, 50.0, "r3").unwrap(),
            gen_masked_language(&page, &mut rng(33), 0.2, "r4").unwrap(),
            gen_masked_position(&page, &mut rng(34), 0.2, "r5").unwrap(),
            gen_geometric_analysis(&page, 0, 3, GeometricQuery::Distance, &mut rng(35), "r6")
                .unwrap(),
        ];
        for record in &records {
            let direct = render(record, RenderMode::DirectAnswer).unwrap();
            assert_eq!(direct.response, record.final_answer);
            if let Some(_steps) = &record.cot_steps {
                let cot = render(record, RenderMode::WithCot).unwrap();
                let tail = cot.response.lines().last().unwrap();
                assert_eq!(tail, format!("Answer: {}", record.final_answer));
            }
        }
    }
}
