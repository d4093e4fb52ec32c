//! Corpus-scale drivers behind the CLI subcommands.
//!
//! Reproducibility model: every page owns an rng substream keyed by
//! (base seed, page id), from which the task choice, task parameters,
//! and a generator seed are drawn. The parameters and generator seed are
//! stored in each emitted record's metadata, so `cmd_validate` can
//! regenerate any record byte-for-byte from its source page alone —
//! without the config — and corpus sharding or reordering can never
//! change what a page produces.

use crate::anneal::derive_direct;
use crate::cot::generators::*;
use crate::cot::verify::{verify_record, Violation};
use crate::cot::{render, CotStep, GenError, InstructionRecord, RenderMode, TaskKind};
use crate::geometry::{BBox, GRID_MAX};
use crate::page::{parse_page_line, page_to_json, reading_order_sort_page, DocumentPage};
use crate::pipeline::config::{ConfigError, PipelineConfig};
use crate::prompt::{length_report, WordPunctCounter};
use crate::xycut::{derive_table_model, TableProvenance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Anneal(#[from] crate::anneal::AnnealError),
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
    #[error("no valid pages in {path}")]
    NoValidPages { path: String },
    #[error("no OCR content to measure in {path} (every page is empty)")]
    NoOcrContent { path: String },
    #[error("cannot build worker pool: {0}")]
    Workers(String),
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open_reader(path: &Path) -> Result<BufReader<std::fs::File>, PipelineError> {
    Ok(BufReader::new(
        std::fs::File::open(path).map_err(|e| io_err(path, e))?,
    ))
}

fn create_writer(path: &Path) -> Result<BufWriter<std::fs::File>, PipelineError> {
    Ok(BufWriter::new(
        std::fs::File::create(path).map_err(|e| io_err(path, e))?,
    ))
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for a page's private rng stream: FNV-1a over (base seed, page
/// id, stream index), finished with a splitmix64 round so neighboring
/// inputs do not yield neighboring streams.
pub fn substream_seed(seed: u64, page_id: &str, stream: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&seed.to_le_bytes());
    eat(page_id.as_bytes());
    eat(&stream.to_le_bytes());
    splitmix64(h)
}

// ---------------------------------------------------------------------------
// Generation parameters
// ---------------------------------------------------------------------------

/// The sampled parameters of one record, in storable form. Together with
/// the generator seed these make the record reproducible without the
/// original rng stream.
#[derive(Debug, Clone, PartialEq)]
pub enum GenParams {
    DocumentDescription,
    TextBoxReconstruction {
        sample_k: usize,
    },
    LayoutAnalysis {
        target_area: BBox,
        k_neighbors: usize,
    },
    TableAnalysis {
        row_i: usize,
        col_j: usize,
        min_gap: i32,
        column_tolerance: f64,
    },
    MaskedLanguage {
        mask_rate: f64,
    },
    MaskedPosition {
        mask_rate: f64,
    },
    GeometricAnalysis {
        idx_a: usize,
        idx_b: usize,
        query: GeometricQuery,
    },
}

impl GenParams {
    /// Rebuilds parameters from record metadata (the inverse of what the
    /// generators store).
    pub fn from_metadata(
        task: TaskKind,
        metadata: &BTreeMap<String, serde_json::Value>,
    ) -> Result<GenParams, String> {
        let get = |key: &str| {
            metadata
                .get(key)
                .ok_or_else(|| format!("metadata key '{key}' is missing"))
        };
        let get_usize = |key: &str| {
            get(key)?
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| format!("metadata key '{key}' is not a non-negative integer"))
        };
        let get_f64 = |key: &str| {
            get(key)?
                .as_f64()
                .ok_or_else(|| format!("metadata key '{key}' is not a number"))
        };
        Ok(match task {
            TaskKind::DocumentDescription => GenParams::DocumentDescription,
            TaskKind::TextBoxReconstruction => GenParams::TextBoxReconstruction {
                sample_k: get_usize("sample_k")?,
            },
            TaskKind::LayoutAnalysis => {
                let raw = get("target_area")?
                    .as_array()
                    .filter(|a| a.len() == 4)
                    .ok_or("metadata key 'target_area' is not a 4-element array")?;
                let mut coords = [0i32; 4];
                for (slot, value) in coords.iter_mut().zip(raw) {
                    *slot = value
                        .as_i64()
                        .and_then(|v| i32::try_from(v).ok())
                        .ok_or("metadata key 'target_area' holds a non-integer coordinate")?;
                }
                let target_area = BBox::new(coords[0], coords[1], coords[2], coords[3])
                    .map_err(|e| format!("metadata key 'target_area' is not a valid box: {e}"))?;
                GenParams::LayoutAnalysis {
                    target_area,
                    k_neighbors: get_usize("k_neighbors")?,
                }
            }
            TaskKind::TableAnalysis => GenParams::TableAnalysis {
                row_i: get_usize("row_i")?,
                col_j: get_usize("col_j")?,
                min_gap: get("min_gap")?
                    .as_i64()
                    .and_then(|v| i32::try_from(v).ok())
                    .ok_or("metadata key 'min_gap' is not an integer")?,
                column_tolerance: get_f64("column_tolerance")?,
            },
            TaskKind::MaskedLanguage => GenParams::MaskedLanguage {
                mask_rate: get_f64("mask_rate")?,
            },
            TaskKind::MaskedPosition => GenParams::MaskedPosition {
                mask_rate: get_f64("mask_rate")?,
            },
            TaskKind::GeometricAnalysis => {
                let query_name = get("query")?
                    .as_str()
                    .ok_or("metadata key 'query' is not a string")?;
                GenParams::GeometricAnalysis {
                    idx_a: get_usize("idx_a")?,
                    idx_b: get_usize("idx_b")?,
                    query: GeometricQuery::from_name(query_name)
                        .ok_or_else(|| format!("unknown geometric query '{query_name}'"))?,
                }
            }
        })
    }
}

/// Whether a task can possibly succeed on this page (cheap checks only;
/// residual failures are logged and skipped at generation time).
pub fn task_feasible(page: &DocumentPage, task: TaskKind) -> bool {
    let n = page.n_segments();
    match task {
        TaskKind::DocumentDescription | TaskKind::TextBoxReconstruction | TaskKind::MaskedLanguage => {
            n >= 1
        }
        TaskKind::LayoutAnalysis => {
            n >= 1
                && page
                    .layout_annotations
                    .as_ref()
                    .map(|a| !a.is_empty())
                    .unwrap_or(false)
        }
        TaskKind::TableAnalysis | TaskKind::MaskedPosition | TaskKind::GeometricAnalysis => n >= 2,
    }
}

fn choose_task(
    page: &DocumentPage,
    weights: &[(TaskKind, f64)],
    rng: &mut impl Rng,
) -> Result<TaskKind, GenError> {
    let feasible: Vec<(TaskKind, f64)> = weights
        .iter()
        .filter(|(task, weight)| *weight > 0.0 && task_feasible(page, *task))
        .copied()
        .collect();
    let total: f64 = feasible.iter().map(|(_, w)| w).sum();
    if feasible.is_empty() || total <= 0.0 {
        return Err(GenError::BadParam {
            name: "task_mix".to_string(),
            reason: format!("no feasible task for page {}", page.page_id),
        });
    }
    let mut draw = rng.random_range(0.0..total);
    for &(task, weight) in &feasible {
        if draw < weight {
            return Ok(task);
        }
        draw -= weight;
    }
    Ok(feasible.last().unwrap().0)
}

/// Draws the task parameters from the page rng in a fixed order.
pub fn sample_params(
    page: &DocumentPage,
    task: TaskKind,
    rng: &mut impl Rng,
    config: &PipelineConfig,
) -> Result<GenParams, GenError> {
    Ok(match task {
        TaskKind::DocumentDescription => GenParams::DocumentDescription,
        TaskKind::TextBoxReconstruction => {
            let distinct: std::collections::BTreeSet<&str> =
                page.segments.iter().map(|s| s.text.as_str()).collect();
            let k_max = page.n_segments().min(5).min(distinct.len()).max(1);
            GenParams::TextBoxReconstruction {
                sample_k: rng.random_range(1..=k_max),
            }
        }
        TaskKind::LayoutAnalysis => {
            let annotations = page.layout_annotations.as_deref().unwrap_or(&[]);
            if annotations.is_empty() {
                return Err(GenError::MissingLayoutAnnotations {
                    page_id: page.page_id.clone(),
                });
            }
            let base = annotations[rng.random_range(0..annotations.len())].bbox;
            // Expand-only jitter keeps the target overlapping its source
            // annotation with positive area.
            let left = (base.left - rng.random_range(0..=8)).max(0);
            let top = (base.top - rng.random_range(0..=8)).max(0);
            let right = (base.right + rng.random_range(0..=8)).min(GRID_MAX);
            let bottom = (base.bottom + rng.random_range(0..=8)).min(GRID_MAX);
            let target_area = BBox::new(left, top, right, bottom).map_err(|source| {
                GenError::BadParam {
                    name: "target_area".to_string(),
                    reason: source.to_string(),
                }
            })?;
            GenParams::LayoutAnalysis {
                target_area,
                k_neighbors: config.k_neighbors.min(annotations.len()).max(1),
            }
        }
        TaskKind::TableAnalysis => {
            let (model, provenance) =
                derive_table_model(page, config.min_gap, config.column_tolerance)?;
            if provenance == TableProvenance::Recovered && !model.unassigned.is_empty() {
                return Err(GenError::Table(crate::xycut::XyCutError::UnassignedCell {
                    segment: model.unassigned[0],
                    reason: "column alignment failed during structure recovery".to_string(),
                }));
            }
            let non_empty: Vec<usize> = (1..=model.n_cols)
                .filter(|&j| !model.columns[j - 1].is_empty())
                .collect();
            if non_empty.is_empty() {
                return Err(GenError::BadParam {
                    name: "col_j".to_string(),
                    reason: format!("table on page {} has no content cells", page.page_id),
                });
            }
            let col_j = non_empty[rng.random_range(0..non_empty.len())];
            let row_i = rng.random_range(1..=model.columns[col_j - 1].len());
            GenParams::TableAnalysis {
                row_i,
                col_j,
                min_gap: config.min_gap,
                column_tolerance: config.column_tolerance,
            }
        }
        TaskKind::MaskedLanguage => GenParams::MaskedLanguage {
            mask_rate: config.mask_rate,
        },
        TaskKind::MaskedPosition => GenParams::MaskedPosition {
            mask_rate: config.mask_rate,
        },
        TaskKind::GeometricAnalysis => {
            let n = page.n_segments();
            if n < 2 {
                return Err(GenError::NotEnoughSegments {
                    page_id: page.page_id.clone(),
                    needed: 2,
                    have: n,
                });
            }
            let idx_a = rng.random_range(0..n);
            let idx_b = (idx_a + 1 + rng.random_range(0..n - 1)) % n;
            let query = if rng.random_bool(0.5) {
                GeometricQuery::Distance
            } else {
                GeometricQuery::Direction
            };
            GenParams::GeometricAnalysis { idx_a, idx_b, query }
        }
    })
}

/// Runs the right generator with a fresh rng seeded from `gen_seed`.
pub fn run_generator(
    page: &DocumentPage,
    params: &GenParams,
    gen_seed: u64,
    record_id: &str,
) -> Result<InstructionRecord, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(gen_seed);
    match params {
        GenParams::DocumentDescription => gen_document_description(page, &mut rng, record_id),
        GenParams::TextBoxReconstruction { sample_k } => {
            gen_text_box_reconstruction(page, &mut rng, *sample_k, record_id)
        }
        GenParams::LayoutAnalysis {
            target_area,
            k_neighbors,
        } => gen_layout_analysis(page, *target_area, &mut rng, *k_neighbors, record_id),
        GenParams::TableAnalysis {
            row_i,
            col_j,
            min_gap,
            column_tolerance,
        } => gen_table_analysis(
            page,
            *row_i,
            *col_j,
            &mut rng,
            *min_gap,
            *column_tolerance,
            record_id,
        ),
        GenParams::MaskedLanguage { mask_rate } => {
            gen_masked_language(page, &mut rng, *mask_rate, record_id)
        }
        GenParams::MaskedPosition { mask_rate } => {
            gen_masked_position(page, &mut rng, *mask_rate, record_id)
        }
        GenParams::GeometricAnalysis { idx_a, idx_b, query } => {
            gen_geometric_analysis(page, *idx_a, *idx_b, *query, &mut rng, record_id)
        }
    }
}

// ---------------------------------------------------------------------------
// Rendered wire format
// ---------------------------------------------------------------------------

/// One training-data line: a record rendered in one mode. The metadata
/// carries the sampled parameters, the generator seed, and (for CoT
/// lines) the structured steps, so the line is self-validating given its
/// source page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedExample {
    pub record_id: String,
    pub page_id: String,
    pub task: TaskKind,
    pub mode: String,
    pub question: String,
    pub response: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// All rendered lines for one page: a CoT render plus its derived direct
/// render for CoT-family tasks, a single direct render otherwise.
pub fn generate_for_page(
    page: &DocumentPage,
    config: &PipelineConfig,
    weights: &[(TaskKind, f64)],
) -> Result<Vec<RenderedExample>, GenError> {
    let mut page_rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, &page.page_id, 0));
    let task = choose_task(page, weights, &mut page_rng)?;
    let params = sample_params(page, task, &mut page_rng, config)?;
    let gen_seed: u64 = page_rng.random();
    let record_id = format!("{}#r0", page.page_id);
    let record = run_generator(page, &params, gen_seed, &record_id)?;
    let gen_seed_hex = format!("{gen_seed:016x}");

    let mut lines = Vec::with_capacity(2);
    if record.cot_steps.is_some() {
        let cot = render(&record, RenderMode::WithCot)?;
        let mut metadata = record.metadata.clone();
        metadata.insert("gen_seed".to_string(), serde_json::json!(gen_seed_hex));
        metadata.insert(
            "cot_steps".to_string(),
            serde_json::to_value(record.cot_steps.as_ref().unwrap())
                .expect("steps serialize"),
        );
        metadata.insert(
            "final_answer".to_string(),
            serde_json::json!(record.final_answer),
        );
        lines.push(RenderedExample {
            record_id: record.record_id.clone(),
            page_id: record.page_id.clone(),
            task: record.task,
            mode: "cot".to_string(),
            question: record.question.clone(),
            response: cot.response,
            metadata,
        });
        let direct_record = derive_direct(&record).expect("CoT record has steps");
        let direct = render(&direct_record, RenderMode::DirectAnswer)?;
        let mut metadata = direct_record.metadata.clone();
        metadata.insert("gen_seed".to_string(), serde_json::json!(gen_seed_hex));
        lines.push(RenderedExample {
            record_id: direct_record.record_id,
            page_id: direct_record.page_id,
            task: direct_record.task,
            mode: "direct".to_string(),
            question: direct_record.question,
            response: direct.response,
            metadata,
        });
    } else {
        let direct = render(&record, RenderMode::DirectAnswer)?;
        let mut metadata = record.metadata.clone();
        metadata.insert("gen_seed".to_string(), serde_json::json!(gen_seed_hex));
        lines.push(RenderedExample {
            record_id: record.record_id,
            page_id: record.page_id,
            task: record.task,
            mode: "direct".to_string(),
            question: record.question,
            response: direct.response,
            metadata,
        });
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub pages_written: usize,
    pub lines_failed: usize,
}

/// Reads raw OCR JSONL, normalizes each page onto the integer grid in
/// reading order, and writes normalized JSONL. Bad lines are logged with
/// their line number and skipped; the command fails only when nothing at
/// all is valid.
pub fn cmd_ingest(
    input: &Path,
    output: &Path,
    log: &mut dyn Write,
) -> Result<IngestReport, PipelineError> {
    let reader = open_reader(input)?;
    let mut writer = create_writer(output)?;
    let mut pages_written = 0usize;
    let mut lines_failed = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_page_line(&line) {
            Ok(ingested) => {
                for warning in &ingested.warnings {
                    writeln!(log, "line {line_no}: warning: {warning}")
                        .map_err(|e| io_err(output, e))?;
                }
                let mut page = ingested.page;
                reading_order_sort_page(&mut page);
                let value = page_to_json(&page);
                serde_json::to_writer(&mut writer, &value).map_err(|e| {
                    io_err(output, std::io::Error::other(e))
                })?;
                writer.write_all(b"\n").map_err(|e| io_err(output, e))?;
                pages_written += 1;
            }
            Err(e) => {
                lines_failed += 1;
                writeln!(log, "line {line_no}: {e}").map_err(|e| io_err(output, e))?;
            }
        }
    }
    writer.flush().map_err(|e| io_err(output, e))?;
    if pages_written == 0 {
        return Err(PipelineError::NoValidPages {
            path: input.display().to_string(),
        });
    }
    Ok(IngestReport {
        pages_written,
        lines_failed,
    })
}

/// Loads every valid page from a JSONL file (raw or normalized), sorted
/// into reading order; bad lines are logged and skipped.
pub fn load_pages(path: &Path, log: &mut dyn Write) -> Result<Vec<DocumentPage>, PipelineError> {
    let reader = open_reader(path)?;
    let mut pages = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_page_line(&line) {
            Ok(ingested) => {
                let mut page = ingested.page;
                reading_order_sort_page(&mut page);
                pages.push(page);
            }
            Err(e) => {
                writeln!(log, "line {line_no}: {e}").map_err(|e| io_err(path, e))?;
            }
        }
    }
    Ok(pages)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateReport {
    pub pages_processed: usize,
    pub pages_skipped: usize,
    pub records: usize,
    pub lines_written: usize,
}

const GENERATE_CHUNK: usize = 512;

/// Streams pages through the generators with page-level parallelism and
/// in-order output. Per-page failures are logged and skipped; output
/// bytes depend only on (corpus, config, seed), never on worker count or
/// chunking.
pub fn cmd_generate(
    pages_path: &Path,
    config: &PipelineConfig,
    output: &Path,
    workers: Option<usize>,
    log: &mut dyn Write,
) -> Result<GenerateReport, PipelineError> {
    config.validate()?;
    let weights = config.task_weights()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Workers(e.to_string()))?;
    let reader = open_reader(pages_path)?;
    let mut writer = create_writer(output)?;
    let mut report = GenerateReport {
        pages_processed: 0,
        pages_skipped: 0,
        records: 0,
        lines_written: 0,
    };
    let mut chunk: Vec<(usize, String)> = Vec::with_capacity(GENERATE_CHUNK);
    let mut lines = reader.lines().enumerate();
    loop {
        chunk.clear();
        for (idx, line) in lines.by_ref() {
            let line = line.map_err(|e| io_err(pages_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push((idx + 1, line));
            if chunk.len() == GENERATE_CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let results: Vec<Result<String, String>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(line_no, line)| {
                    let ingested =
                        parse_page_line(line).map_err(|e| format!("line {line_no}: {e}"))?;
                    let mut page = ingested.page;
                    reading_order_sort_page(&mut page);
                    let examples = generate_for_page(&page, config, &weights)
                        .map_err(|e| format!("line {line_no}: {e}"))?;
                    let mut out = String::new();
                    for example in &examples {
                        out.push_str(
                            &serde_json::to_string(example).expect("example serializes"),
                        );
                        out.push('\n');
                    }
                    Ok(out)
                })
                .collect()
        });
        for result in results {
            match result {
                Ok(block) => {
                    report.pages_processed += 1;
                    report.records += 1;
                    report.lines_written += block.matches('\n').count();
                    writer
                        .write_all(block.as_bytes())
                        .map_err(|e| io_err(output, e))?;
                }
                Err(message) => {
                    report.pages_skipped += 1;
                    writeln!(log, "{message}").map_err(|e| io_err(output, e))?;
                }
            }
        }
    }
    writer.flush().map_err(|e| io_err(output, e))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealReport {
    pub steps: usize,
    pub max_window_deviation: f64,
}

/// Builds the batch mix plan from the config schedule and writes it as
/// JSONL, printing the sliding-window audit summary.
pub fn cmd_anneal_plan(
    config: &PipelineConfig,
    output: &Path,
    log: &mut dyn Write,
) -> Result<AnnealReport, PipelineError> {
    let schedule = config.build_schedule()?;
    let plan = crate::anneal::plan_batches(&schedule, config.schedule.batch_size, config.seed)?;
    let mut writer = create_writer(output)?;
    plan.write_jsonl(&mut writer).map_err(|e| io_err(output, e))?;
    writer.flush().map_err(|e| io_err(output, e))?;
    let max_window_deviation = plan
        .windows
        .iter()
        .map(|w| (w.realized_fraction - w.target_fraction).abs())
        .fold(0.0f64, f64::max);
    writeln!(
        log,
        "{} steps, {} audit windows, max |realized - target| = {max_window_deviation:.6}",
        plan.entries.len(),
        plan.windows.len()
    )
    .map_err(|e| io_err(output, e))?;
    Ok(AnnealReport {
        steps: plan.entries.len(),
        max_window_deviation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthSummary {
    pub pages: usize,
    pub mean_i: f64,
    pub mean_ii: f64,
    pub ratio: f64,
    pub patch_tokens: usize,
}

/// Measures the corpus under both coordinate modes and writes the CSV.
pub fn cmd_length_report(
    pages_path: &Path,
    config: &PipelineConfig,
    output: &Path,
    log: &mut dyn Write,
) -> Result<LengthSummary, PipelineError> {
    let pages = load_pages(pages_path, log)?;
    if pages.is_empty() {
        return Err(PipelineError::NoValidPages {
            path: pages_path.display().to_string(),
        });
    }
    if pages.iter().all(|p| p.n_segments() == 0) {
        return Err(PipelineError::NoOcrContent {
            path: pages_path.display().to_string(),
        });
    }
    let grid = config.build_grid()?;
    let report = length_report(&pages, &WordPunctCounter, &grid)?;
    let writer = create_writer(output)?;
    report
        .write_csv(writer)
        .map_err(|e| io_err(output, e))?;
    Ok(LengthSummary {
        pages: report.rows.len(),
        mean_i: report.mean_i,
        mean_ii: report.mean_ii,
        ratio: report.ratio,
        patch_tokens: report.patch_tokens,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateReport {
    pub records_checked: usize,
    pub violations: Vec<Violation>,
}

fn reconstruct_record(example: &RenderedExample) -> Result<InstructionRecord, String> {
    let mut metadata = example.metadata.clone();
    metadata.remove("gen_seed");
    let cot_steps = match metadata.remove("cot_steps") {
        Some(value) => Some(
            serde_json::from_value::<Vec<CotStep>>(value)
                .map_err(|e| format!("metadata cot_steps malformed: {e}"))?,
        ),
        None => None,
    };
    let final_answer = match metadata.remove("final_answer") {
        Some(value) => value
            .as_str()
            .ok_or("metadata final_answer is not a string")?
            .to_string(),
        None => example.response.clone(),
    };
    if example.mode == "cot" && cot_steps.is_none() {
        return Err("cot record lacks metadata cot_steps".to_string());
    }
    Ok(InstructionRecord {
        record_id: example.record_id.clone(),
        page_id: example.page_id.clone(),
        task: example.task,
        question: example.question.clone(),
        cot_steps,
        final_answer,
        metadata,
    })
}

fn validate_example(
    example: &RenderedExample,
    pages: &BTreeMap<String, DocumentPage>,
    out: &mut Vec<Violation>,
) {
    let push = |out: &mut Vec<Violation>, message: String| {
        out.push(Violation {
            record_id: example.record_id.clone(),
            step_no: None,
            message,
        });
    };
    if example.mode != "cot" && example.mode != "direct" {
        push(out, format!("unknown render mode '{}'", example.mode));
        return;
    }
    if example.question.is_empty() {
        push(out, "question is empty".to_string());
    }
    if example.response.is_empty() {
        push(out, "response is empty".to_string());
    }
    let Some(page) = pages.get(&example.page_id) else {
        push(out, "source page not found".to_string());
        return;
    };
    let derived = example
        .metadata
        .get("derived_direct")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    if example.mode == "cot" {
        if !example.task.has_cot() {
            push(
                out,
                format!("task {} has no CoT render", example.task),
            );
            return;
        }
        if derived {
            push(out, "derived records must be direct mode".to_string());
        }
    }
    if example.mode == "direct" && example.task.has_cot() && !derived {
        push(
            out,
            "direct render of a CoT-family task must be marked derived_direct".to_string(),
        );
    }
    let gen_seed = example
        .metadata
        .get("gen_seed")
        .and_then(|v| v.as_str())
        .and_then(|s| u64::from_str_radix(s, 16).ok());
    let Some(gen_seed) = gen_seed else {
        push(out, "metadata gen_seed missing or malformed".to_string());
        return;
    };
    let params = match GenParams::from_metadata(example.task, &example.metadata) {
        Ok(p) => p,
        Err(message) => {
            push(out, message);
            return;
        }
    };

    // Step-wise verification against the stored structure, so tampered
    // steps are cited by number.
    if example.mode == "cot" || !example.task.has_cot() {
        match reconstruct_record(example) {
            Ok(record) => out.extend(verify_record(&record, page)),
            Err(message) => push(out, message),
        }
    }

    // Full regeneration: the catch-all equality check.
    let base_id = if derived {
        example
            .record_id
            .strip_suffix("#direct")
            .unwrap_or(&example.record_id)
            .to_string()
    } else {
        example.record_id.clone()
    };
    match run_generator(page, &params, gen_seed, &base_id) {
        Ok(expected) => {
            let expected = if derived {
                match derive_direct(&expected) {
                    Ok(d) => d,
                    Err(e) => {
                        push(out, format!("cannot derive direct render: {e}"));
                        return;
                    }
                }
            } else {
                expected
            };
            let mode = if example.mode == "cot" {
                RenderMode::WithCot
            } else {
                RenderMode::DirectAnswer
            };
            match render(&expected, mode) {
                Ok(rendered) => {
                    if example.record_id != expected.record_id {
                        push(
                            out,
                            format!(
                                "record id does not regenerate (expected '{}')",
                                expected.record_id
                            ),
                        );
                    }
                    if example.question != expected.question {
                        push(out, "question does not regenerate byte-identically".to_string());
                    }
                    if example.response != rendered.response {
                        push(out, "response does not regenerate byte-identically".to_string());
                    }
                }
                Err(e) => push(out, format!("cannot render regenerated record: {e}")),
            }
        }
        Err(e) => push(out, format!("cannot regenerate record: {e}")),
    }
}

/// Checks every rendered record against its source page: schema fields,
/// step-wise faithfulness for CoT lines, and byte-exact regeneration
/// from the stored parameters and generator seed.
pub fn cmd_validate(
    records_path: &Path,
    pages_path: &Path,
    log: &mut dyn Write,
) -> Result<ValidateReport, PipelineError> {
    let pages_vec = load_pages(pages_path, log)?;
    let mut pages = BTreeMap::new();
    for page in pages_vec {
        pages.insert(page.page_id.clone(), page);
    }
    let reader = open_reader(records_path)?;
    let mut violations = Vec::new();
    let mut records_checked = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(records_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RenderedExample>(&line) {
            Ok(example) => {
                records_checked += 1;
                validate_example(&example, &pages, &mut violations);
            }
            Err(e) => violations.push(Violation {
                record_id: format!("line {line_no}"),
                step_no: None,
                message: format!("cannot parse record: {e}"),
            }),
        }
    }
    for violation in &violations {
        match violation.step_no {
            Some(step) => writeln!(
                log,
                "record {} step {step}: {}",
                violation.record_id, violation.message
            ),
            None => writeln!(log, "record {}: {}", violation.record_id, violation.message),
        }
        .map_err(|e| io_err(records_path, e))?;
    }
    writeln!(
        log,
        "{} violations in {records_checked} records",
        violations.len()
    )
    .map_err(|e| io_err(records_path, e))?;
    Ok(ValidateReport {
        records_checked,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub total: usize,
    pub invalid_lines: usize,
    /// task name → mode → count.
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Counts rendered records per task and mode.
pub fn cmd_stats(
    records_path: &Path,
    output: Option<&Path>,
    log: &mut dyn Write,
) -> Result<StatsReport, PipelineError> {
    let reader = open_reader(records_path)?;
    let mut report = StatsReport {
        total: 0,
        invalid_lines: 0,
        counts: BTreeMap::new(),
    };
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(records_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RenderedExample>(&line) {
            Ok(example) => {
                report.total += 1;
                *report
                    .counts
                    .entry(example.task.name().to_string())
                    .or_default()
                    .entry(example.mode)
                    .or_default() += 1;
            }
            Err(e) => {
                report.invalid_lines += 1;
                writeln!(log, "line {}: cannot parse record: {e}", idx + 1)
                    .map_err(|e| io_err(records_path, e))?;
            }
        }
    }
    if let Some(path) = output {
        let mut writer = create_writer(path)?;
        serde_json::to_writer_pretty(&mut writer, &report)
            .map_err(|e| io_err(path, std::io::Error::other(e)))?;
        writer.write_all(b"\n").map_err(|e| io_err(path, e))?;
        writer.flush().map_err(|e| io_err(path, e))?;
    }
    Ok(report)
}
