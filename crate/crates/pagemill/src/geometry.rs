//! Pure geometric primitives over axis-aligned bounding boxes.
//!
//! Everything here operates on boxes normalized to the integer `[0, 1000]`
//! page grid: interval projections, overlap/gap analysis, relative
//! directions between box centers, minimum rectangle distance with the
//! three-case rule, nearest-neighbor search, and coarse 3x3 page regions.
//!
//! All functions are pure; inputs are immutable and nothing here holds
//! shared state.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Upper bound of the normalized coordinate grid.
pub const GRID_MAX: i32 = 1000;

/// Errors from geometric validation and queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid interval: lo {lo} > hi {hi}")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid box: {field} = {value} outside [0, {GRID_MAX}]")]
    CoordOutOfRange { field: &'static str, value: i32 },
    #[error("invalid box: {low_field} {low} > {high_field} {high}")]
    InvertedBounds {
        low_field: &'static str,
        low: i32,
        high_field: &'static str,
        high: i32,
    },
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("page dimensions must be positive, got {width} x {height}")]
    NonPositivePage { width: f64, height: f64 },
    #[error("box center outside page along {axis} axis: {value} not in [0, {limit}]")]
    CenterOutsidePage {
        axis: &'static str,
        value: f64,
        limit: f64,
    },
}

/// Axis-aligned bounding box on the normalized `[0, 1000]` grid.
///
/// `left <= right` and `top <= bottom`; y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl BBox {
    /// Validated constructor; rejects out-of-range or inverted coordinates.
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Result<Self, GeometryError> {
        for (field, value) in [
            ("left", left),
            ("top", top),
            ("right", right),
            ("bottom", bottom),
        ] {
            if !(0..=GRID_MAX).contains(&value) {
                return Err(GeometryError::CoordOutOfRange { field, value });
            }
        }
        if left > right {
            return Err(GeometryError::InvertedBounds {
                low_field: "left",
                low: left,
                high_field: "right",
                high: right,
            });
        }
        if top > bottom {
            return Err(GeometryError::InvertedBounds {
                low_field: "top",
                low: top,
                high_field: "bottom",
                high: bottom,
            });
        }
        Ok(Self {
            left,
            top,
            right,
            bottom,
        })
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    /// Projection onto the x axis as `[left, right]`.
    pub fn x_interval(&self) -> Interval {
        Interval {
            lo: self.left as f64,
            hi: self.right as f64,
        }
    }

    /// Projection onto the y axis as `[top, bottom]`.
    pub fn y_interval(&self) -> Interval {
        Interval {
            lo: self.top as f64,
            hi: self.bottom as f64,
        }
    }

    /// Smallest box containing both `self` and `other`.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            left: self.left.min(other.left),
            top: self.top.min(other.top),
            right: self.right.max(other.right),
            bottom: self.bottom.max(other.bottom),
        }
    }

    /// Area of the intersection, 0 when the boxes only touch or are apart.
    pub fn overlap_area(&self, other: &BBox) -> i64 {
        let w = (self.right.min(other.right) - self.left.max(other.left)).max(0) as i64;
        let h = (self.bottom.min(other.bottom) - self.top.max(other.top)).max(0) as i64;
        w * h
    }

    /// Renders as `[left, top, right, bottom]` with single spaces after commas.
    pub fn render(&self) -> String {
        format!(
            "[{}, {}, {}, {}]",
            self.left, self.top, self.right, self.bottom
        )
    }
}

/// A 2D point; centers are exact, never rounded to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Closed interval with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if lo > hi {
            return Err(GeometryError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

/// Outcome of comparing two interval projections.
///
/// Touching intervals (shared endpoint) report `Overlap(0.0)`; a `Gap`
/// distance is always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntervalRelation {
    Overlap(f64),
    Gap(f64),
}

impl IntervalRelation {
    pub fn is_overlap(&self) -> bool {
        matches!(self, IntervalRelation::Overlap(_))
    }

    /// Overlap length or gap distance, whichever applies.
    pub fn value(&self) -> f64 {
        match self {
            IntervalRelation::Overlap(v) | IntervalRelation::Gap(v) => *v,
        }
    }
}

/// Horizontal and vertical projection relations of a box pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRelation {
    pub horizontal: IntervalRelation,
    pub vertical: IntervalRelation,
}

/// Position of one box center relative to another.
///
/// Pure axis directions require a zero delta on the other axis;
/// `Coincident` means both centers are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelativeDirection {
    Above,
    Below,
    Left,
    Right,
    AboveLeft,
    AboveRight,
    BelowLeft,
    BelowRight,
    Coincident,
}

impl RelativeDirection {
    /// The direction seen from the other box's point of view.
    pub fn opposite(&self) -> RelativeDirection {
        use RelativeDirection::*;
        match self {
            Above => Below,
            Below => Above,
            Left => Right,
            Right => Left,
            AboveLeft => BelowRight,
            AboveRight => BelowLeft,
            BelowLeft => AboveRight,
            BelowRight => AboveLeft,
            Coincident => Coincident,
        }
    }

    /// Hyphenated lowercase name, e.g. `below-right`.
    pub fn name(&self) -> &'static str {
        use RelativeDirection::*;
        match self {
            Above => "above",
            Below => "below",
            Left => "left",
            Right => "right",
            AboveLeft => "above-left",
            AboveRight => "above-right",
            BelowLeft => "below-left",
            BelowRight => "below-right",
            Coincident => "coincident",
        }
    }
}

impl fmt::Display for RelativeDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cell of the coarse 3x3 page grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PageRegion {
    TopLeft,
    TopCenter,
    TopRight,
    MiddleLeft,
    Center,
    MiddleRight,
    BottomLeft,
    BottomCenter,
    BottomRight,
}

impl PageRegion {
    /// Row-major grid order, top-left to bottom-right.
    pub const ALL: [PageRegion; 9] = [
        PageRegion::TopLeft,
        PageRegion::TopCenter,
        PageRegion::TopRight,
        PageRegion::MiddleLeft,
        PageRegion::Center,
        PageRegion::MiddleRight,
        PageRegion::BottomLeft,
        PageRegion::BottomCenter,
        PageRegion::BottomRight,
    ];

    pub fn name(&self) -> &'static str {
        use PageRegion::*;
        match self {
            TopLeft => "top-left",
            TopCenter => "top-center",
            TopRight => "top-right",
            MiddleLeft => "middle-left",
            Center => "center",
            MiddleRight => "middle-right",
            BottomLeft => "bottom-left",
            BottomCenter => "bottom-center",
            BottomRight => "bottom-right",
        }
    }

    fn from_thirds(col: usize, row: usize) -> PageRegion {
        use PageRegion::*;
        match (row, col) {
            (0, 0) => TopLeft,
            (0, 1) => TopCenter,
            (0, 2) => TopRight,
            (1, 0) => MiddleLeft,
            (1, 1) => Center,
            (1, 2) => MiddleRight,
            (2, 0) => BottomLeft,
            (2, 1) => BottomCenter,
            _ => BottomRight,
        }
    }
}

impl fmt::Display for PageRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which of the three distance cases applied to a box pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceCase {
    /// Both projections overlap; the boxes intersect or touch.
    Overlap,
    /// Vertical projections overlap; distance is the horizontal gap.
    HorizontalGap,
    /// Horizontal projections overlap; distance is the vertical gap.
    VerticalGap,
    /// Neither projection overlaps; distance runs corner to corner.
    Corner,
}

impl DistanceCase {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceCase::Overlap => "overlap",
            DistanceCase::HorizontalGap => "horizontal-gap",
            DistanceCase::VerticalGap => "vertical-gap",
            DistanceCase::Corner => "corner",
        }
    }
}

/// Minimum distance together with the case that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBreakdown {
    pub distance: f64,
    pub case: DistanceCase,
    /// Horizontal gap when one applies, 0 otherwise.
    pub h_gap: f64,
    /// Vertical gap when one applies, 0 otherwise.
    pub v_gap: f64,
}

/// Compares two intervals: overlap length when they meet, gap distance
/// when they are apart. A shared endpoint counts as `Overlap(0)`.
pub fn interval_relation(a: Interval, b: Interval) -> IntervalRelation {
    let span = a.hi.min(b.hi) - a.lo.max(b.lo);
    if span >= 0.0 {
        IntervalRelation::Overlap(span)
    } else {
        IntervalRelation::Gap(-span)
    }
}

/// Horizontal and vertical interval relations of two boxes.
pub fn projection_relation(a: &BBox, b: &BBox) -> ProjectionRelation {
    ProjectionRelation {
        horizontal: interval_relation(a.x_interval(), b.x_interval()),
        vertical: interval_relation(a.y_interval(), b.y_interval()),
    }
}

/// Exact center of a box; midpoints are kept fractional.
pub fn center(b: &BBox) -> Point {
    Point {
        x: (b.left + b.right) as f64 / 2.0,
        y: (b.top + b.bottom) as f64 / 2.0,
    }
}

/// Classifies `b`'s center relative to `a`'s center.
pub fn relative_direction(a: &BBox, b: &BBox) -> RelativeDirection {
    use RelativeDirection::*;
    let ca = center(a);
    let cb = center(b);
    let dx = cb.x - ca.x;
    let dy = cb.y - ca.y;
    match (dx.partial_cmp(&0.0).unwrap(), dy.partial_cmp(&0.0).unwrap()) {
        (std::cmp::Ordering::Equal, std::cmp::Ordering::Equal) => Coincident,
        (std::cmp::Ordering::Equal, std::cmp::Ordering::Less) => Above,
        (std::cmp::Ordering::Equal, std::cmp::Ordering::Greater) => Below,
        (std::cmp::Ordering::Less, std::cmp::Ordering::Equal) => Left,
        (std::cmp::Ordering::Greater, std::cmp::Ordering::Equal) => Right,
        (std::cmp::Ordering::Less, std::cmp::Ordering::Less) => AboveLeft,
        (std::cmp::Ordering::Greater, std::cmp::Ordering::Less) => AboveRight,
        (std::cmp::Ordering::Less, std::cmp::Ordering::Greater) => BelowLeft,
        (std::cmp::Ordering::Greater, std::cmp::Ordering::Greater) => BelowRight,
    }
}

/// Minimum Euclidean distance between two boxes by the three-case rule:
/// 0 when they overlap or touch, the single-axis gap when exactly one
/// projection overlaps, and the nearest-corner distance otherwise.
pub fn min_distance(a: &BBox, b: &BBox) -> f64 {
    distance_breakdown(a, b).distance
}

/// Like [`min_distance`] but also reports which case applied and the
/// per-axis gaps, for narration and verification.
pub fn distance_breakdown(a: &BBox, b: &BBox) -> DistanceBreakdown {
    let rel = projection_relation(a, b);
    match (rel.horizontal, rel.vertical) {
        (IntervalRelation::Overlap(_), IntervalRelation::Overlap(_)) => DistanceBreakdown {
            distance: 0.0,
            case: DistanceCase::Overlap,
            h_gap: 0.0,
            v_gap: 0.0,
        },
        (IntervalRelation::Gap(h), IntervalRelation::Overlap(_)) => DistanceBreakdown {
            distance: h,
            case: DistanceCase::HorizontalGap,
            h_gap: h,
            v_gap: 0.0,
        },
        (IntervalRelation::Overlap(_), IntervalRelation::Gap(v)) => DistanceBreakdown {
            distance: v,
            case: DistanceCase::VerticalGap,
            h_gap: 0.0,
            v_gap: v,
        },
        (IntervalRelation::Gap(h), IntervalRelation::Gap(v)) => DistanceBreakdown {
            distance: h.hypot(v),
            case: DistanceCase::Corner,
            h_gap: h,
            v_gap: v,
        },
    }
}

/// The `k` candidates closest to `target` by [`min_distance`], ascending,
/// ties broken by smaller index. A candidate sharing `target_index` is
/// skipped. Returns fewer than `k` only when candidates run out.
pub fn nearest_segments(
    target: &BBox,
    target_index: Option<usize>,
    candidates: &[(usize, BBox)],
    k: usize,
) -> Result<Vec<usize>, GeometryError> {
    if k == 0 {
        return Err(GeometryError::ZeroK);
    }
    if candidates.is_empty() {
        return Err(GeometryError::EmptyCandidates);
    }
    let mut ranked: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|(idx, _)| Some(*idx) != target_index)
        .map(|(idx, bbox)| (min_distance(target, bbox), *idx))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k).map(|(_, idx)| idx).collect())
}

/// Names the third-by-third page region containing the box center.
/// Boundary centers belong to the lower-indexed third (left/top wins).
pub fn page_region(b: &BBox, page_width: f64, page_height: f64) -> Result<PageRegion, GeometryError> {
    if page_width <= 0.0 || page_height <= 0.0 {
        return Err(GeometryError::NonPositivePage {
            width: page_width,
            height: page_height,
        });
    }
    let c = center(b);
    if c.x < 0.0 || c.x > page_width {
        return Err(GeometryError::CenterOutsidePage {
            axis: "x",
            value: c.x,
            limit: page_width,
        });
    }
    if c.y < 0.0 || c.y > page_height {
        return Err(GeometryError::CenterOutsidePage {
            axis: "y",
            value: c.y,
            limit: page_height,
        });
    }
    let third = |v: f64, limit: f64| -> usize {
        if v <= limit / 3.0 {
            0
        } else if v <= 2.0 * limit / 3.0 {
            1
        } else {
            2
        }
    };
    Ok(PageRegion::from_thirds(
        third(c.x, page_width),
        third(c.y, page_height),
    ))
}
