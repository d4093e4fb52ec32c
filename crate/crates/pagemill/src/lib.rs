//! Layout-aware instruction data for OCR'd document pages.
//!
//! `pagemill` turns raw OCR output — text segments with pixel boxes —
//! into training-ready instruction data in which every answer, and every
//! intermediate reasoning step, is recomputable from the page itself:
//!
//! - [`geometry`]: integer boxes on a normalized `[0, 1000]` page grid,
//!   with distances, directions, and page regions.
//! - [`page`]: ingestion of raw OCR JSONL into normalized
//!   [`DocumentPage`]s in reading order.
//! - [`xycut`]: recursive projection cuts that recover table structure
//!   from coordinates alone.
//! - [`cot`]: seven synthesis tasks, three of which carry verifiable
//!   step-by-step reasoning chains, plus the verifier that re-derives
//!   every step.
//! - [`anneal`]: schedules that start training on reasoning-heavy
//!   batches and anneal toward direct answers, with a stochastic
//!   batch-mix planner.
//! - [`prompt`]: prompt assembly with vision-patch slots and two
//!   coordinate modes, token accounting, and length enforcement.
//! - [`pipeline`]: configuration plus the corpus-scale commands behind
//!   the `pagemill` binary.
//!
//! Determinism is the load-bearing property throughout: generation is a
//! pure function of (page, config, seed), and each emitted record stores
//! enough metadata to be regenerated byte-for-byte during validation.
//!
//! ```
//! use pagemill::geometry::{min_distance, BBox};
//!
//! let a = BBox::new(0, 0, 100, 50)?;
//! let b = BBox::new(200, 0, 300, 50)?;
//! assert_eq!(min_distance(&a, &b), 100.0);
//! # Ok::<(), pagemill::geometry::GeometryError>(())
//! ```

pub mod anneal;
pub mod cot;
pub mod geometry;
pub mod page;
pub mod pipeline;
pub mod prompt;
pub mod xycut;

pub use anneal::{AnnealSchedule, MixPlan, ScheduleShape};
pub use cot::{InstructionRecord, RenderMode, TaskKind};
pub use geometry::{BBox, GRID_MAX};
pub use page::DocumentPage;
pub use pipeline::PipelineConfig;
pub use prompt::{PatchGrid, PromptSlotSequence};
pub use xycut::TableModel;

/// The user guide, chapter by chapter.
///
/// Each module's documentation *is* the corresponding chapter of the
/// rendered book, included verbatim so that every code block in the
/// guide compiles and runs under `cargo test --doc`.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub mod geometry {}
    #[doc = include_str!("../../../book/src/structure.md")]
    pub mod structure {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    pub mod tasks {}
    #[doc = include_str!("../../../book/src/annealing.md")]
    pub mod annealing {}
    #[doc = include_str!("../../../book/src/prompts.md")]
    pub mod prompts {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
