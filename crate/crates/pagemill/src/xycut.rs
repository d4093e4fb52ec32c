//! Recursive XY-Cut segmentation and table-structure recovery.
//!
//! `xy_cut` splits a set of segment boxes at whitespace gaps in alternating
//! axis projections (y first), producing a block tree whose leaves partition
//! the input. On top of that sit the table operations: header detection
//! (annotated or recovered via the top XY-Cut row), nearest-header column
//! assignment, and 1-based `cell_at` addressing used by table reasoning.

use crate::geometry::{center, BBox};
use crate::page::{DocumentPage, TextSegment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from segmentation and table-structure queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum XyCutError {
    #[error("segment list is empty")]
    EmptySegments,
    #[error("min_gap must be positive, got {0}")]
    MinGapNotPositive(i32),
    #[error("tolerance must be non-negative, got {0}")]
    NegativeTolerance(f64),
    #[error("table has no header cells")]
    NoHeaders,
    #[error("row {got} out of range 1..={max}")]
    RowOutOfRange { got: usize, max: usize },
    #[error("column {got} out of range 1..={max}")]
    ColOutOfRange { got: usize, max: usize },
    #[error("page has no table annotation")]
    NoTableAnnotation,
    #[error("segment {segment} not assignable to any column: {reason}")]
    UnassignedCell { segment: usize, reason: String },
}

/// How a block was split, or `Leaf` when no axis had a qualifying gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutAxis {
    /// Split along y: children are stacked top-to-bottom.
    Horizontal,
    /// Split along x: children are side-by-side left-to-right.
    Vertical,
    Leaf,
}

/// Node of the XY-Cut block tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockNode {
    /// Tight union of the member boxes.
    pub bbox: BBox,
    /// Segment indices in this block.
    pub members: Vec<usize>,
    pub cut_axis: CutAxis,
    /// Ordered by position along the cut axis; empty for leaves.
    pub children: Vec<BlockNode>,
}

impl BlockNode {
    /// All leaf nodes in depth-first order.
    pub fn leaves(&self) -> Vec<&BlockNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node)= stack.pop() {
            if node.children.is_empty() {
                out.push(node);
            } else {
                for child in node.children.iter().rev() {
                    stack.push(child);
                }
            }
        }
        out
    }
}

/// Which path produced a table model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableProvenance {
    /// Built from ground-truth cell annotations.
    Annotated,
    /// Recovered by XY-Cut header detection plus column assignment.
    Recovered,
}

impl TableProvenance {
    pub fn name(&self) -> &'static str {
        match self {
            TableProvenance::Annotated => "annotated",
            TableProvenance::Recovered => "recovered",
        }
    }
}

/// Column-structured table: a header row plus per-column cell lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    /// Header segment indices, left to right.
    pub headers: Vec<usize>,
    /// `columns[j]` = content cells under header `j`, top to bottom.
    /// The header row is not a content row.
    pub columns: Vec<Vec<usize>>,
    /// Maximum content-row count over all columns.
    pub n_rows: usize,
    pub n_cols: usize,
    /// Cells that matched no header under the alignment rule.
    pub unassigned: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    Y,
    X,
}

impl Axis {
    fn other(self) -> Axis {
        match self {
            Axis::Y => Axis::X,
            Axis::X => Axis::Y,
        }
    }

    fn interval(self, b: &BBox) -> (i32, i32) {
        match self {
            Axis::Y => (b.top, b.bottom),
            Axis::X => (b.left, b.right),
        }
    }

    fn cut(self) -> CutAxis {
        match self {
            Axis::Y => CutAxis::Horizontal,
            Axis::X => CutAxis::Vertical,
        }
    }
}

fn union_bbox(members: &[usize], boxes: &[(usize, BBox)]) -> BBox {
    let lookup = |idx: usize| -> BBox {
        boxes
            .iter()
            .find(|(i, _)| *i == idx)
            .map(|(_, b)| *b)
            .expect("member index present in box list")
    };
    let mut acc = lookup(members[0]);
    for &m in &members[1..] {
        acc = acc.union(&lookup(m));
    }
    acc
}

/// Groups member boxes into runs along `axis`, where runs are separated by
/// whitespace gaps of width >= min_gap in the merged projection profile.
/// Returns one group of member indices per run, ordered along the axis.
fn split_runs(
    members: &[usize],
    boxes: &[(usize, BBox)],
    axis: Axis,
    min_gap: i32,
) -> Vec<Vec<usize>> {
    let mut projected: Vec<(i32, i32, usize)> = members
        .iter()
        .map(|&m| {
            let b = boxes
                .iter()
                .find(|(i, _)| *i == m)
                .map(|(_, b)| *b)
                .expect("member index present in box list");
            let (lo, hi) = axis.interval(&b);
            (lo, hi, m)
        })
        .collect();
    projected.sort_by_key(|&(lo, hi, m)| (lo, hi, m));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut run_hi = i32::MIN;
    for (lo, hi, m) in projected {
        let starts_new_run = match groups.last() {
            None => true,
            // A new run begins only when the whitespace since the previous
            // run's far edge is at least min_gap.
            Some(_) => lo - run_hi >= min_gap,
        };
        if starts_new_run {
            groups.push(vec![m]);
            run_hi = hi;
        } else {
            groups.last_mut().expect("non-empty groups").push(m);
            run_hi = run_hi.max(hi);
        }
    }
    groups
}

fn build_node(
    members: Vec<usize>,
    boxes: &[(usize, BBox)],
    preferred: Axis,
    min_gap: i32,
) -> BlockNode {
    let bbox = union_bbox(&members, boxes);
    if members.len() == 1 {
        return BlockNode {
            bbox,
            members,
            cut_axis: CutAxis::Leaf,
            children: Vec::new(),
        };
    }
    // Try the preferred axis first, then the other; Leaf only when neither
    // projection has a qualifying gap.
    for axis in [preferred, preferred.other()] {
        let runs = split_runs(&members, boxes, axis, min_gap);
        if runs.len() >= 2 {
            let children = runs
                .into_iter()
                .map(|run| build_node(run, boxes, axis.other(), min_gap))
                .collect();
            return BlockNode {
                bbox,
                members,
                cut_axis: axis.cut(),
                children,
            };
        }
    }
    BlockNode {
        bbox,
        members,
        cut_axis: CutAxis::Leaf,
        children: Vec::new(),
    }
}

/// Recursively segments boxes into a block tree, starting with the y axis
/// and alternating. Splits happen at every whitespace gap of width
/// >= min_gap in the projection profile; deterministic for fixed input.
pub fn xy_cut(boxes: &[(usize, BBox)], min_gap: i32) -> Result<BlockNode, XyCutError> {
    if boxes.is_empty() {
        return Err(XyCutError::EmptySegments);
    }
    if min_gap <= 0 {
        return Err(XyCutError::MinGapNotPositive(min_gap));
    }
    let members: Vec<usize> = boxes.iter().map(|(i, _)| *i).collect();
    Ok(build_node(members, boxes, Axis::Y, min_gap))
}

/// Header segment indices in left-to-right order.
///
/// With table annotations, returns the annotated header cells sorted by
/// left edge. Without, runs XY-Cut and takes the members of the topmost
/// child of the root row split; a page whose root split is vertical or
/// absent is treated as a single header row (all segments, sorted by left).
pub fn detect_headers(page: &DocumentPage, min_gap: i32) -> Result<Vec<usize>, XyCutError> {
    if page.segments.is_empty() {
        return Err(XyCutError::EmptySegments);
    }
    let by_left = |indices: &mut Vec<usize>| {
        indices.sort_by_key(|&i| (page.segments[i].bbox.left, i));
    };
    if let Some(table) = page.table() {
        let mut headers: Vec<usize> = table
            .cells
            .iter()
            .filter(|c| c.is_header)
            .map(|c| c.segment_index)
            .collect();
        if headers.is_empty() {
            return Err(XyCutError::NoHeaders);
        }
        by_left(&mut headers);
        return Ok(headers);
    }
    let tree = xy_cut(&page.indexed_boxes(), min_gap)?;
    let mut headers = match tree.cut_axis {
        CutAxis::Horizontal => tree.children[0].members.clone(),
        // No row structure: the whole page is one row; every segment is a
        // header of its own column.
        CutAxis::Vertical | CutAxis::Leaf => tree.members.clone(),
    };
    by_left(&mut headers);
    Ok(headers)
}

fn center_x(seg: &TextSegment) -> f64 {
    center(&seg.bbox).x
}

fn x_overlaps(a: &BBox, b: &BBox) -> bool {
    a.left.max(b.left) <= a.right.min(b.right)
}

/// Assigns each body cell to the column of the nearest header center-x,
/// accepting the match when |delta center-x| <= tolerance or the cell's
/// x-interval overlaps the header's. Equidistant ties go to the smaller
/// header index. Cells matching no header land in `unassigned`.
pub fn assign_columns(
    page: &DocumentPage,
    headers: &[usize],
    body_cells: &[usize],
    tolerance: f64,
) -> Result<TableModel, XyCutError> {
    if headers.is_empty() {
        return Err(XyCutError::NoHeaders);
    }
    if tolerance < 0.0 {
        return Err(XyCutError::NegativeTolerance(tolerance));
    }
    let header_cx: Vec<f64> = headers
        .iter()
        .map(|&h| center_x(&page.segments[h]))
        .collect();
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); headers.len()];
    let mut unassigned = Vec::new();
    for &cell in body_cells {
        let cx = center_x(&page.segments[cell]);
        // Nearest header by |delta center-x|; ties to the smaller index.
        let (best_j, best_d) = header_cx
            .iter()
            .enumerate()
            .map(|(j, &hx)| (j, (cx - hx).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("headers non-empty");
        let overlap = x_overlaps(
            &page.segments[cell].bbox,
            &page.segments[headers[best_j]].bbox,
        );
        if best_d <= tolerance || overlap {
            columns[best_j].push(cell);
        } else {
            unassigned.push(cell);
        }
    }
    for column in &mut columns {
        column.sort_by_key(|&c| (page.segments[c].bbox.top, c));
    }
    let n_rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    Ok(TableModel {
        n_cols: headers.len(),
        headers: headers.to_vec(),
        columns,
        n_rows,
        unassigned,
    })
}

/// The `row_i`-th content cell (1-based, top to bottom) of column `col_j`
/// (1-based, left to right). The header row is not a content row.
pub fn cell_at(table: &TableModel, row_i: usize, col_j: usize) -> Result<usize, XyCutError> {
    if col_j < 1 || col_j > table.n_cols {
        return Err(XyCutError::ColOutOfRange {
            got: col_j,
            max: table.n_cols,
        });
    }
    let column = &table.columns[col_j - 1];
    if row_i < 1 || row_i > column.len() {
        return Err(XyCutError::RowOutOfRange {
            got: row_i,
            max: column.len(),
        });
    }
    Ok(column[row_i - 1])
}

/// Builds a table model straight from ground-truth annotations: headers
/// sorted by left edge; each column holds the body cells sharing the
/// header's annotated column id, ordered by annotated row.
pub fn table_model_from_annotation(page: &DocumentPage) -> Result<TableModel, XyCutError> {
    let table = page.table().ok_or(XyCutError::NoTableAnnotation)?;
    let mut headers: Vec<&crate::page::TableCell> =
        table.cells.iter().filter(|c| c.is_header).collect();
    if headers.is_empty() {
        return Err(XyCutError::NoHeaders);
    }
    headers.sort_by_key(|c| (page.segments[c.segment_index].bbox.left, c.segment_index));
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); headers.len()];
    let mut unassigned = Vec::new();
    for cell in table.cells.iter().filter(|c| !c.is_header) {
        match headers.iter().position(|h| h.col == cell.col) {
            Some(j) => columns[j].push(cell.segment_index),
            None => unassigned.push(cell.segment_index),
        }
    }
    let row_of = |seg: usize| -> usize {
        table
            .cells
            .iter()
            .find(|c| c.segment_index == seg)
            .map(|c| c.row)
            .unwrap_or(usize::MAX)
    };
    for column in &mut columns {
        column.sort_by_key(|&c| row_of(c));
    }
    let n_rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    Ok(TableModel {
        n_cols: headers.len(),
        headers: headers.iter().map(|c| c.segment_index).collect(),
        columns,
        n_rows,
        unassigned,
    })
}

/// Recovers table structure without annotations: XY-Cut header detection,
/// then nearest-header column assignment over the remaining segments.
pub fn recover_table_model(
    page: &DocumentPage,
    min_gap: i32,
    tolerance: f64,
) -> Result<TableModel, XyCutError> {
    let headers = detect_headers(page, min_gap)?;
    let body: Vec<usize> = page
        .segments
        .iter()
        .map(|s| s.index)
        .filter(|i| !headers.contains(i))
        .collect();
    assign_columns(page, &headers, &body, tolerance)
}

/// Annotation-backed model when the page has one, recovery otherwise;
/// reports which path ran so records can carry their structure provenance.
pub fn derive_table_model(
    page: &DocumentPage,
    min_gap: i32,
    tolerance: f64,
) -> Result<(TableModel, TableProvenance), XyCutError> {
    if page.table().is_some() {
        Ok((table_model_from_annotation(page)?, TableProvenance::Annotated))
    } else {
        Ok((recover_table_model(page, min_gap, tolerance)?, TableProvenance::Recovered))
    }
}
