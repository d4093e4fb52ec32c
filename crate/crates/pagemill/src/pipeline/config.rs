//! Pipeline configuration.
//!
//! One TOML document with dotted keys (`schedule.shape = "linear"`).
//! Every field has a default; unknown keys are rejected so typos fail
//! loudly instead of silently running with defaults.

use crate::anneal::{AnnealError, AnnealSchedule, ScheduleShape};
use crate::cot::TaskKind;
use crate::prompt::{PatchGrid, PromptError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("min_gap must be positive, got {0}")]
    BadMinGap(i32),
    #[error("column_tolerance must be non-negative and finite, got {0}")]
    BadTolerance(f64),
    #[error("mask_rate must be in (0, 0.5], got {0}")]
    BadMaskRate(f64),
    #[error("k_neighbors must be at least 1")]
    BadKNeighbors,
    #[error("max_length must be at least 1")]
    BadMaxLength,
    #[error("unknown task name '{0}' in task_mix")]
    UnknownTask(String),
    #[error("task_mix weight for {task} must be non-negative and finite, got {weight}")]
    BadWeight { task: String, weight: f64 },
    #[error("task_mix needs at least one positive weight")]
    NoPositiveWeight,
    #[error("unknown schedule shape '{0}' (expected linear, cosine, or piecewise)")]
    UnknownShape(String),
    #[error("schedule batch_size must be at least 1")]
    BadBatchSize,
    #[error(transparent)]
    Schedule(#[from] AnnealError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub image_side: u32,
    pub patch_side: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            image_side: 224,
            patch_side: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// "linear", "cosine", or "piecewise".
    pub shape: String,
    pub total_steps: u64,
    pub batch_size: u32,
    /// Interior (step, fraction) knots, only read for "piecewise".
    pub knots: Vec<(u64, f64)>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            shape: "linear".to_string(),
            total_steps: 1000,
            batch_size: 64,
            knots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Minimum whitespace gap (grid units) for an XY-Cut split.
    pub min_gap: i32,
    /// Center misalignment (grid units) tolerated when assigning table
    /// cells to header columns.
    pub column_tolerance: f64,
    /// Per-word / per-segment masking probability for the masked tasks.
    pub mask_rate: f64,
    /// Neighbor count narrated in layout-analysis reasoning.
    pub k_neighbors: usize,
    /// Token budget for assembled prompts.
    pub max_length: usize,
    /// Base seed; every page derives its own substream from it.
    pub seed: u64,
    pub grid: GridConfig,
    pub schedule: ScheduleConfig,
    /// Sampling weight per task name; empty means uniform over all
    /// seven tasks.
    pub task_mix: BTreeMap<String, f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            min_gap: 10,
            column_tolerance: 50.0,
            mask_rate: 0.15,
            k_neighbors: 3,
            max_length: 2560,
            seed: 0,
            grid: GridConfig::default(),
            schedule: ScheduleConfig::default(),
            task_mix: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<PipelineConfig, ConfigError> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|source| ConfigError::Parse {
                path: "<inline>".to_string(),
                source: Box::new(source),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_gap < 1 {
            return Err(ConfigError::BadMinGap(self.min_gap));
        }
        if !self.column_tolerance.is_finite() || self.column_tolerance < 0.0 {
            return Err(ConfigError::BadTolerance(self.column_tolerance));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 0.5) {
            return Err(ConfigError::BadMaskRate(self.mask_rate));
        }
        if self.k_neighbors < 1 {
            return Err(ConfigError::BadKNeighbors);
        }
        if self.max_length < 1 {
            return Err(ConfigError::BadMaxLength);
        }
        self.build_grid()?;
        self.build_schedule()?;
        if self.schedule.batch_size < 1 {
            return Err(ConfigError::BadBatchSize);
        }
        self.task_weights()?;
        Ok(())
    }

    pub fn build_grid(&self) -> Result<PatchGrid, ConfigError> {
        Ok(PatchGrid::new(self.grid.image_side, self.grid.patch_side)?)
    }

    pub fn build_schedule(&self) -> Result<AnnealSchedule, ConfigError> {
        let shape = match self.schedule.shape.as_str() {
            "linear" => ScheduleShape::Linear,
            "cosine" => ScheduleShape::Cosine,
            "piecewise" => ScheduleShape::Piecewise(self.schedule.knots.clone()),
            other => return Err(ConfigError::UnknownShape(other.to_string())),
        };
        Ok(AnnealSchedule::new(self.schedule.total_steps, shape)?)
    }

    /// Per-task sampling weights in a fixed task order. An empty
    /// `task_mix` yields uniform weights over all seven tasks.
    pub fn task_weights(&self) -> Result<Vec<(TaskKind, f64)>, ConfigError> {
        if self.task_mix.is_empty() {
            return Ok(TaskKind::ALL.iter().map(|&t| (t, 1.0)).collect());
        }
        for name in self.task_mix.keys() {
            if TaskKind::from_name(name).is_none() {
                return Err(ConfigError::UnknownTask(name.clone()));
            }
        }
        let mut weights = Vec::new();
        let mut any_positive = false;
        for &task in TaskKind::ALL.iter() {
            let weight = self.task_mix.get(task.name()).copied().unwrap_or(0.0);
            if !weight.is_finite() || weight < 0.0 {
                return Err(ConfigError::BadWeight {
                    task: task.name().to_string(),
                    weight,
                });
            }
            any_positive |= weight > 0.0;
            weights.push((task, weight));
        }
        if !any_positive {
            return Err(ConfigError::NoPositiveWeight);
        }
        Ok(weights)
    }
}
