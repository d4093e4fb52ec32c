//! Instruction-record synthesis with machine-verifiable reasoning steps.
//!
//! Records for seven document pre-training tasks are generated from
//! normalized pages. Three task families carry chain-of-thought (CoT)
//! steps whose every narrated number is bound to a typed value that can be
//! recomputed from the page — see [`verify`] for the checker and
//! [`generators`] for the per-task builders. Records render either with
//! the full step-by-step body or as a bare final answer.

pub mod generators;
pub mod verify;

use crate::geometry::{BBox, PageRegion, RelativeDirection};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// The seven pre-training task kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DocumentDescription,
    TextBoxReconstruction,
    LayoutAnalysis,
    TableAnalysis,
    MaskedLanguage,
    MaskedPosition,
    GeometricAnalysis,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::DocumentDescription,
        TaskKind::TextBoxReconstruction,
        TaskKind::LayoutAnalysis,
        TaskKind::TableAnalysis,
        TaskKind::MaskedLanguage,
        TaskKind::MaskedPosition,
        TaskKind::GeometricAnalysis,
    ];

    /// Snake-case name used in config keys and JSONL fields.
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::DocumentDescription => "document_description",
            TaskKind::TextBoxReconstruction => "text_box_reconstruction",
            TaskKind::LayoutAnalysis => "layout_analysis",
            TaskKind::TableAnalysis => "table_analysis",
            TaskKind::MaskedLanguage => "masked_language",
            TaskKind::MaskedPosition => "masked_position",
            TaskKind::GeometricAnalysis => "geometric_analysis",
        }
    }

    pub fn from_name(name: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Whether records of this task carry CoT steps.
    pub fn has_cot(&self) -> bool {
        matches!(
            self,
            TaskKind::LayoutAnalysis | TaskKind::TableAnalysis | TaskKind::GeometricAnalysis
        )
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A typed value referenced by a reasoning step, recomputable from the
/// source page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BoundValue {
    Int(i64),
    Real(f64),
    Box(BBox),
    Region(PageRegion),
    Direction(RelativeDirection),
    /// Enum-like names: distance cases, layout types.
    Label(String),
}

impl BoundValue {
    /// Whether two values agree: exact for everything except `Real`,
    /// which allows 1e-9 relative error.
    pub fn matches(&self, other: &BoundValue) -> bool {
        match (self, other) {
            (BoundValue::Real(a), BoundValue::Real(b)) => {
                (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
            }
            _ => self == other,
        }
    }
}

/// One numbered reasoning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotStep {
    /// 1-based position in the chain.
    pub step_no: usize,
    pub narration: String,
    /// Every numeric token in `narration` (outside quoted document text)
    /// must be a rendering of one of these values.
    pub bound_values: BTreeMap<String, BoundValue>,
}

/// One QA training example, optionally with verified reasoning steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub record_id: String,
    pub page_id: String,
    pub task: TaskKind,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cot_steps: Option<Vec<CotStep>>,
    pub final_answer: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// How to render a record's response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    WithCot,
    DirectAnswer,
}

impl RenderMode {
    pub fn name(&self) -> &'static str {
        match self {
            RenderMode::WithCot => "cot",
            RenderMode::DirectAnswer => "direct",
        }
    }
}

/// A rendered question/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rendered {
    pub question: String,
    pub response: String,
}

/// Errors from generation and rendering.
#[derive(Debug, Error)]
pub enum GenError {
    #[error("page {page_id}: page has no segments")]
    EmptyPage { page_id: String },
    #[error("page {page_id}: need at least {needed} segments, have {have}")]
    NotEnoughSegments {
        page_id: String,
        needed: usize,
        have: usize,
    },
    #[error("page {page_id}: layout annotations required but absent")]
    MissingLayoutAnnotations { page_id: String },
    #[error("page {page_id}: target area {target} intersects no layout annotation")]
    NoIntersectingAnnotation { page_id: String, target: String },
    #[error(
        "page {page_id}: only {distinct} distinct texts, cannot sample {needed} unambiguously"
    )]
    AmbiguousTexts {
        page_id: String,
        distinct: usize,
        needed: usize,
    },
    #[error("page {page_id}: mask_rate {got} outside (0, 0.5]")]
    MaskRateOutOfRange { page_id: String, got: f64 },
    #[error("page {page_id}: text contains literal mask sentinels; masking would be ambiguous")]
    SentinelCollision { page_id: String },
    #[error("invalid parameter {name}: {reason}")]
    BadParam { name: String, reason: String },
    #[error("record {record_id}: cannot render with CoT, record has no steps")]
    RenderWithoutSteps { record_id: String },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Table(#[from] crate::xycut::XyCutError),
    #[error(transparent)]
    Page(#[from] crate::page::PageError),
}

/// Renders a record: `WithCot` emits the numbered steps then
/// `Answer: <final_answer>`; `DirectAnswer` emits the final answer alone.
/// The question is identical in both modes.
pub fn render(record: &InstructionRecord, mode: RenderMode) -> Result<Rendered, GenError> {
    let response = match mode {
        RenderMode::DirectAnswer => record.final_answer.clone(),
        RenderMode::WithCot => {
            let steps = record
                .cot_steps
                .as_ref()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| GenError::RenderWithoutSteps {
                    record_id: record.record_id.clone(),
                })?;
            let mut lines: Vec<String> = steps
                .iter()
                .map(|s| format!("Step {}: {}", s.step_no, s.narration))
                .collect();
            lines.push(format!("Answer: {}", record.final_answer));
            lines.join("\n")
        }
    };
    Ok(Rendered {
        question: record.question.clone(),
        response,
    })
}

/// Formats a real for narration: whole values as integers, half-unit
/// values with one decimal, everything else with two.
pub fn fmt_real(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else if (v * 10.0).fract() == 0.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Formats a distance for answers: always two decimals.
pub fn fmt_2dp(v: f64) -> String {
    format!("{v:.2}")
}

/// Wraps document text in double quotes for narration; embedded quotes
/// become apostrophes so quoted spans stay balanced for the scanner.
pub fn quote_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'"))
}

/// The strings a bound value may legitimately appear as in narration.
pub fn value_renderings(v: &BoundValue) -> Vec<String> {
    match v {
        BoundValue::Int(i) => vec![i.to_string()],
        BoundValue::Real(r) => {
            let mut out = vec![format!("{r:.2}"), format!("{r:.1}")];
            if r.fract() == 0.0 {
                out.push(format!("{}", *r as i64));
            }
            out
        }
        BoundValue::Box(b) => [b.left, b.top, b.right, b.bottom]
            .iter()
            .map(|c| c.to_string())
            .collect(),
        BoundValue::Region(_) | BoundValue::Direction(_) | BoundValue::Label(_) => Vec::new(),
    }
}

/// Numeric tokens in `narration` outside double-quoted spans.
pub fn narration_numbers(narration: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let flush = |buf: &mut String, out: &mut Vec<String>| {
        if buf.is_empty() {
            return;
        }
        let trimmed = buf.trim_matches('.');
        if !trimmed.is_empty() {
            out.push(trimmed.to_string());
        }
        buf.clear();
    };
    for ch in narration.chars() {
        if ch == '"' {
            flush(&mut current, &mut tokens);
            in_quotes = !in_quotes;
            continue;
        }
        if in_quotes {
            continue;
        }
        if ch.is_ascii_digit() || (ch == '.' && !current.is_empty()) {
            current.push(ch);
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// Numeric tokens in the narration that no bound value accounts for.
/// Empty for every well-formed step.
pub fn unbound_narration_numbers(step: &CotStep) -> Vec<String> {
    let mut sanctioned = std::collections::BTreeSet::new();
    for v in step.bound_values.values() {
        for s in value_renderings(v) {
            sanctioned.insert(s);
        }
    }
    narration_numbers(&step.narration)
        .into_iter()
        .filter(|t| !sanctioned.contains(t))
        .collect()
}
