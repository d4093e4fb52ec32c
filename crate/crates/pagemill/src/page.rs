//! OCR page data model and ingestion.
//!
//! Raw OCR JSONL (one page per line, coordinates in source units) is parsed,
//! validated, and normalized onto the integer `[0, 1000]` grid. Pages carry
//! optional layout and table ground-truth annotations. Reading-order sorting
//! reassigns segment indices and remaps any table-cell references so that
//! annotations stay attached to the right segments.

use crate::geometry::{BBox, GeometryError, GRID_MAX};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt;
use thiserror::Error;

/// Relative slack for raw coordinates at the page edge, absorbing float
/// spill from upstream OCR arithmetic without accepting true overflow.
const EDGE_SLACK: f64 = 1e-9;

/// Errors raised while parsing, validating, or normalizing a page.
#[derive(Debug, Error)]
pub enum PageError {
    #[error("page {page_id}: invalid JSON: {message}")]
    Json { page_id: String, message: String },
    #[error("page {page_id}: dimensions must be positive, got {width} x {height}")]
    InvalidDimensions {
        page_id: String,
        width: f64,
        height: f64,
    },
    #[error("page {page_id}: {path} = {value} outside [0, {limit}]")]
    CoordOutOfPage {
        page_id: String,
        path: String,
        value: f64,
        limit: f64,
    },
    #[error("page {page_id}: {path}: low edge {low} exceeds high edge {high}")]
    InvertedBox {
        page_id: String,
        path: String,
        low: f64,
        high: f64,
    },
    #[error("page {page_id}: {path}: text is empty after trimming")]
    EmptyText { page_id: String, path: String },
    #[error("page {page_id}: table: {reason}")]
    BadTable { page_id: String, reason: String },
    #[error("page {page_id}: {path}: {source}")]
    Geometry {
        page_id: String,
        path: String,
        source: GeometryError,
    },
}

/// One OCR text span with its normalized bounding box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSegment {
    /// 0-based reading-order id, unique within the page.
    pub index: usize,
    /// Non-empty (after trim) UTF-8 text content.
    pub text: String,
    pub bbox: BBox,
}

/// Closed vocabulary of layout element types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutType {
    Title,
    Author,
    Paragraph,
    List,
    Table,
    Figure,
    Caption,
    Header,
    Footer,
    Other,
}

impl LayoutType {
    pub const ALL: [LayoutType; 10] = [
        LayoutType::Title,
        LayoutType::Author,
        LayoutType::Paragraph,
        LayoutType::List,
        LayoutType::Table,
        LayoutType::Figure,
        LayoutType::Caption,
        LayoutType::Header,
        LayoutType::Footer,
        LayoutType::Other,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayoutType::Title => "Title",
            LayoutType::Author => "Author",
            LayoutType::Paragraph => "Paragraph",
            LayoutType::List => "List",
            LayoutType::Table => "Table",
            LayoutType::Figure => "Figure",
            LayoutType::Caption => "Caption",
            LayoutType::Header => "Header",
            LayoutType::Footer => "Footer",
            LayoutType::Other => "Other",
        }
    }

    /// Case-insensitive lookup; labels outside the vocabulary map to
    /// `Other` and the caller records a warning.
    pub fn from_label(label: &str) -> (LayoutType, bool) {
        for t in LayoutType::ALL {
            if t.name().eq_ignore_ascii_case(label) {
                return (t, true);
            }
        }
        (LayoutType::Other, false)
    }

    /// Lowercase name for prose, e.g. "paragraph".
    pub fn prose_name(&self) -> &'static str {
        match self {
            LayoutType::Title => "title",
            LayoutType::Author => "author",
            LayoutType::Paragraph => "paragraph",
            LayoutType::List => "list",
            LayoutType::Table => "table",
            LayoutType::Figure => "figure",
            LayoutType::Caption => "caption",
            LayoutType::Header => "header",
            LayoutType::Footer => "footer",
            LayoutType::Other => "other",
        }
    }
}

impl fmt::Display for LayoutType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One annotated layout element: a region box with its type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutAnnotation {
    pub bbox: BBox,
    pub layout_type: LayoutType,
}

/// One annotated table cell, keyed by the segment it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCell {
    pub segment_index: usize,
    /// 0-based; headers are always row 0.
    pub row: usize,
    pub col: usize,
    pub is_header: bool,
}

/// Ground-truth table structure: a set of cells with (row, col) positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableAnnotation {
    pub cells: Vec<TableCell>,
}

/// A normalized OCR page: the unit of ingestion and generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPage {
    pub page_id: String,
    /// Source dimensions the raw coordinates were expressed in.
    pub raw_width: f64,
    pub raw_height: f64,
    /// Segments in list order; `segments[i].index == i`.
    pub segments: Vec<TextSegment>,
    pub layout_annotations: Option<Vec<LayoutAnnotation>>,
    pub table_annotations: Option<Vec<TableAnnotation>>,
    pub image_ref: Option<String>,
}

/// Raw wire form of one page line, field names fixed by the input contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPage {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub segments: Vec<RawSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<RawLayout>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<RawTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSegment {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawLayout {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(rename = "type")]
    pub layout_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawTable {
    pub cells: Vec<RawTableCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawTableCell {
    pub segment_index: usize,
    pub row: usize,
    pub col: usize,
    pub is_header: bool,
}

/// Result of ingesting one raw page: the normalized page plus any
/// non-fatal warnings (e.g. unknown layout labels mapped to Other).
#[derive(Debug, Clone)]
pub struct Ingested {
    pub page: DocumentPage,
    pub warnings: Vec<String>,
}

fn normalize_coord(
    raw: f64,
    dim: f64,
    page_id: &str,
    path: &str,
) -> Result<i32, PageError> {
    let slack = dim * EDGE_SLACK;
    if raw < -slack || raw > dim + slack {
        return Err(PageError::CoordOutOfPage {
            page_id: page_id.to_string(),
            path: path.to_string(),
            value: raw,
            limit: dim,
        });
    }
    let scaled = (raw * GRID_MAX as f64 / dim).floor() as i32;
    Ok(scaled.clamp(0, GRID_MAX))
}

fn normalize_box(
    raw: &[f64; 4],
    width: f64,
    height: f64,
    page_id: &str,
    path: &str,
) -> Result<BBox, PageError> {
    let [l, t, r, b] = *raw;
    if l > r {
        return Err(PageError::InvertedBox {
            page_id: page_id.to_string(),
            path: format!("{path}.left/right"),
            low: l,
            high: r,
        });
    }
    if t > b {
        return Err(PageError::InvertedBox {
            page_id: page_id.to_string(),
            path: format!("{path}.top/bottom"),
            low: t,
            high: b,
        });
    }
    let left = normalize_coord(l, width, page_id, &format!("{path}.left"))?;
    let top = normalize_coord(t, height, page_id, &format!("{path}.top"))?;
    let right = normalize_coord(r, width, page_id, &format!("{path}.right"))?;
    let bottom = normalize_coord(b, height, page_id, &format!("{path}.bottom"))?;
    BBox::new(left, top, right, bottom).map_err(|source| PageError::Geometry {
        page_id: page_id.to_string(),
        path: path.to_string(),
        source,
    })
}

/// Validates and normalizes one raw page record. Segments are re-indexed
/// in the given order; call [`reading_order_sort_page`] afterwards to put
/// them in (top, left) reading order.
pub fn ingest_page(raw: &RawPage) -> Result<Ingested, PageError> {
    let page_id = raw.page_id.clone();
    if raw.width <= 0.0 || raw.height <= 0.0 || !raw.width.is_finite() || !raw.height.is_finite() {
        return Err(PageError::InvalidDimensions {
            page_id,
            width: raw.width,
            height: raw.height,
        });
    }
    let mut warnings = Vec::new();
    let mut segments = Vec::with_capacity(raw.segments.len());
    for (i, seg) in raw.segments.iter().enumerate() {
        if seg.text.trim().is_empty() {
            return Err(PageError::EmptyText {
                page_id,
                path: format!("segments[{i}].text"),
            });
        }
        let bbox = normalize_box(
            &seg.bbox,
            raw.width,
            raw.height,
            &page_id,
            &format!("segments[{i}].box"),
        )?;
        segments.push(TextSegment {
            index: i,
            text: seg.text.clone(),
            bbox,
        });
    }

    let layout_annotations = match &raw.layout {
        None => None,
        Some(items) => {
            let mut out = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let bbox = normalize_box(
                    &item.bbox,
                    raw.width,
                    raw.height,
                    &page_id,
                    &format!("layout[{i}].box"),
                )?;
                let (layout_type, known) = LayoutType::from_label(&item.layout_type);
                if !known {
                    warnings.push(format!(
                        "page {page_id}: layout[{i}].type: unknown label {:?} mapped to Other",
                        item.layout_type
                    ));
                }
                out.push(LayoutAnnotation { bbox, layout_type });
            }
            Some(out)
        }
    };

    let table_annotations = match &raw.table {
        None => None,
        Some(t) => {
            let cells: Vec<TableCell> = t
                .cells
                .iter()
                .map(|c| TableCell {
                    segment_index: c.segment_index,
                    row: c.row,
                    col: c.col,
                    is_header: c.is_header,
                })
                .collect();
            let annotation = TableAnnotation { cells };
            validate_table(&annotation, segments.len(), &page_id)?;
            Some(vec![annotation])
        }
    };

    let page = DocumentPage {
        page_id,
        raw_width: raw.width,
        raw_height: raw.height,
        segments,
        layout_annotations,
        table_annotations,
        image_ref: raw.image.clone(),
    };
    Ok(Ingested { page, warnings })
}

fn validate_table(
    table: &TableAnnotation,
    n_segments: usize,
    page_id: &str,
) -> Result<(), PageError> {
    let mut seen = std::collections::BTreeSet::new();
    for cell in &table.cells {
        if cell.segment_index >= n_segments {
            return Err(PageError::BadTable {
                page_id: page_id.to_string(),
                reason: format!(
                    "cell references segment {} but the page has {} segments",
                    cell.segment_index, n_segments
                ),
            });
        }
        if cell.is_header && cell.row != 0 {
            return Err(PageError::BadTable {
                page_id: page_id.to_string(),
                reason: format!(
                    "header cell for segment {} has row {} (headers must be row 0)",
                    cell.segment_index, cell.row
                ),
            });
        }
        if !seen.insert((cell.row, cell.col)) {
            return Err(PageError::BadTable {
                page_id: page_id.to_string(),
                reason: format!("duplicate cell position ({}, {})", cell.row, cell.col),
            });
        }
    }
    Ok(())
}

/// Parses one JSONL line and ingests it.
pub fn parse_page_line(line: &str) -> Result<Ingested, PageError> {
    let raw: RawPage = serde_json::from_str(line).map_err(|e| PageError::Json {
        page_id: extract_page_id(line),
        message: e.to_string(),
    })?;
    ingest_page(&raw)
}

/// Best-effort page id recovery from a malformed line, for error messages.
fn extract_page_id(line: &str) -> String {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("page_id").and_then(|p| p.as_str().map(String::from)))
        .unwrap_or_else(|| "<unparsed>".to_string())
}

/// Stable sort by (top, left) of the box; indices reassigned to match the
/// new order. Identical boxes keep their input order.
pub fn reading_order_sort(mut segments: Vec<TextSegment>) -> Vec<TextSegment> {
    segments.sort_by_key(|s| (s.bbox.top, s.bbox.left));
    for (i, seg) in segments.iter_mut().enumerate() {
        seg.index = i;
    }
    segments
}

/// Sorts a page's segments into reading order and remaps table-cell
/// segment references through the same permutation, so annotations keep
/// pointing at the same text.
pub fn reading_order_sort_page(page: &mut DocumentPage) {
    let mut order: Vec<usize> = (0..page.segments.len()).collect();
    order.sort_by_key(|&i| (page.segments[i].bbox.top, page.segments[i].bbox.left));
    // old index -> new index
    let mut remap = vec![0usize; order.len()];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        remap[old_idx] = new_idx;
    }
    let mut sorted = Vec::with_capacity(page.segments.len());
    for &old_idx in &order {
        let mut seg = page.segments[old_idx].clone();
        seg.index = sorted.len();
        sorted.push(seg);
    }
    page.segments = sorted;
    if let Some(tables) = &mut page.table_annotations {
        for table in tables {
            for cell in &mut table.cells {
                cell.segment_index = remap[cell.segment_index];
            }
        }
    }
}

/// Serializes a normalized page back into the wire schema. The emitted
/// record declares the normalized grid as its dimensions, so re-ingesting
/// the output is the identity (normalized pages are a fixed point).
pub fn page_to_json(page: &DocumentPage) -> serde_json::Value {
    let segments: Vec<serde_json::Value> = page
        .segments
        .iter()
        .map(|s| {
            json!({
                "text": s.text,
                "box": [s.bbox.left, s.bbox.top, s.bbox.right, s.bbox.bottom],
            })
        })
        .collect();
    let mut obj = json!({
        "page_id": page.page_id,
        "width": GRID_MAX,
        "height": GRID_MAX,
        "segments": segments,
    });
    let map = obj.as_object_mut().expect("object literal");
    if let Some(layouts) = &page.layout_annotations {
        let items: Vec<serde_json::Value> = layouts
            .iter()
            .map(|a| {
                json!({
                    "box": [a.bbox.left, a.bbox.top, a.bbox.right, a.bbox.bottom],
                    "type": a.layout_type.name(),
                })
            })
            .collect();
        map.insert("layout".to_string(), serde_json::Value::Array(items));
    }
    if let Some(tables) = &page.table_annotations {
        if let Some(table) = tables.first() {
            let cells: Vec<serde_json::Value> = table
                .cells
                .iter()
                .map(|c| {
                    json!({
                        "segment_index": c.segment_index,
                        "row": c.row,
                        "col": c.col,
                        "is_header": c.is_header,
                    })
                })
                .collect();
            map.insert("table".to_string(), json!({ "cells": cells }));
        }
    }
    if let Some(image) = &page.image_ref {
        map.insert(
            "image".to_string(),
            serde_json::Value::String(image.clone()),
        );
    }
    obj
}

impl DocumentPage {
    /// Number of text segments (N).
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    /// All segments as (index, bbox) pairs for nearest-neighbor queries.
    pub fn indexed_boxes(&self) -> Vec<(usize, BBox)> {
        self.segments.iter().map(|s| (s.index, s.bbox)).collect()
    }

    /// The first table annotation, if any.
    pub fn table(&self) -> Option<&TableAnnotation> {
        self.table_annotations.as_ref().and_then(|t| t.first())
    }
}
