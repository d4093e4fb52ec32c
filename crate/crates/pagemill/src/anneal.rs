//! CoT-to-direct mix scheduling.
//!
//! Fine-tuning starts on all chain-of-thought renders and ends on all
//! direct-answer renders; in between, a monotone non-increasing fraction
//! curve says how much CoT each training step gets. `plan_batches` turns
//! the curve into integer per-step batch counts with stochastic rounding,
//! so realized fractions are unbiased even at small batch sizes yet the
//! whole plan is a pure function of (schedule, batch size, seed).

use crate::cot::InstructionRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Length of the sliding audit window over plan steps.
pub const AUDIT_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum AnnealError {
    #[error("total_steps must be at least 1")]
    ZeroSteps,
    #[error("step {step} is outside 0..={total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("piecewise knot at step {step} is outside 0..={total}")]
    KnotOutOfRange { step: u64, total: u64 },
    #[error("piecewise knots must be strictly increasing in step; step {step} repeats or goes backward")]
    KnotsNotIncreasing { step: u64 },
    #[error("piecewise fraction {fraction} at step {step} is outside [0, 1]")]
    FractionOutOfRange { step: u64, fraction: f64 },
    #[error("piecewise fractions must be non-increasing; step {step} rises to {fraction}")]
    FractionsIncrease { step: u64, fraction: f64 },
    #[error("piecewise knot at step {step} conflicts with the fixed endpoint value {expected}")]
    EndpointConflict { step: u64, expected: f64 },
    #[error("batch_size must be at least 1")]
    ZeroBatch,
    #[error("record {record_id} has no reasoning steps to strip")]
    NoStepsToStrip { record_id: String },
}

/// Curve family for the CoT fraction. All shapes share the fixed
/// endpoints: fraction 1 at step 0, fraction 0 at the final step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleShape {
    Linear,
    Cosine,
    /// Interior (step, fraction) knots; the endpoints are implicit.
    Piecewise(Vec<(u64, f64)>),
}

/// A validated schedule over `0..=total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    total_steps: u64,
    shape: ScheduleShape,
    /// Piecewise knots augmented with the endpoints; empty otherwise.
    knots: Vec<(u64, f64)>,
}

impl AnnealSchedule {
    pub fn new(total_steps: u64, shape: ScheduleShape) -> Result<AnnealSchedule, AnnealError> {
        if total_steps == 0 {
            return Err(AnnealError::ZeroSteps);
        }
        let knots = match &shape {
            ScheduleShape::Piecewise(user_knots) => {
                let mut augmented: Vec<(u64, f64)> = Vec::with_capacity(user_knots.len() + 2);
                augmented.push((0, 1.0));
                for &(step, fraction) in user_knots {
                    if step > total_steps {
                        return Err(AnnealError::KnotOutOfRange {
                            step,
                            total: total_steps,
                        });
                    }
                    if !(0.0..=1.0).contains(&fraction) || !fraction.is_finite() {
                        return Err(AnnealError::FractionOutOfRange { step, fraction });
                    }
                    if step == 0 || step == total_steps {
                        let expected = if step == 0 { 1.0 } else { 0.0 };
                        if fraction != expected {
                            return Err(AnnealError::EndpointConflict { step, expected });
                        }
                        continue;
                    }
                    augmented.push((step, fraction));
                }
                augmented.push((total_steps, 0.0));
                for window in augmented.windows(2) {
                    let (prev_step, prev_fraction) = window[0];
                    let (step, fraction) = window[1];
                    if step <= prev_step {
                        return Err(AnnealError::KnotsNotIncreasing { step });
                    }
                    if fraction > prev_fraction {
                        return Err(AnnealError::FractionsIncrease { step, fraction });
                    }
                }
                augmented
            }
            _ => Vec::new(),
        };
        Ok(AnnealSchedule {
            total_steps,
            shape,
            knots,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn shape(&self) -> &ScheduleShape {
        &self.shape
    }

    fn interp_knots(&self, s: f64) -> f64 {
        debug_assert!(!self.knots.is_empty());
        for window in self.knots.windows(2) {
            let (s0, f0) = window[0];
            let (s1, f1) = window[1];
            let (s0, s1) = (s0 as f64, s1 as f64);
            if s <= s1 {
                return f0 + (f1 - f0) * (s - s0) / (s1 - s0);
            }
        }
        0.0
    }

    /// The curve at normalized position `u ∈ [0, 1]`, with the endpoints
    /// returned exactly.
    pub(crate) fn fraction_at_unit(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        if u >= 1.0 {
            return 0.0;
        }
        let f = match &self.shape {
            ScheduleShape::Linear => 1.0 - u,
            ScheduleShape::Cosine => (1.0 + (PI * u).cos()) / 2.0,
            ScheduleShape::Piecewise(_) => self.interp_knots(u * self.total_steps as f64),
        };
        f.clamp(0.0, 1.0)
    }

    /// CoT fraction at an integer step in `0..=total_steps`; step 0 is
    /// exactly 1.0 and the final step exactly 0.0 for every shape.
    pub fn cot_fraction(&self, step: u64) -> Result<f64, AnnealError> {
        if step > self.total_steps {
            return Err(AnnealError::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        if step == 0 {
            return Ok(1.0);
        }
        if step == self.total_steps {
            return Ok(0.0);
        }
        let t = self.total_steps as f64;
        let f = match &self.shape {
            ScheduleShape::Linear => 1.0 - step as f64 / t,
            ScheduleShape::Cosine => (1.0 + (PI * step as f64 / t).cos()) / 2.0,
            ScheduleShape::Piecewise(_) => self.interp_knots(step as f64),
        };
        Ok(f.clamp(0.0, 1.0))
    }
}

/// One plan line: how many records of each render mode a step's batch
/// takes. Field order matches the JSONL wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixEntry {
    pub step: u64,
    pub n_cot: u32,
    pub n_direct: u32,
}

/// Realized-versus-target CoT fraction over one sliding window of plan
/// steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowAudit {
    pub start: u64,
    pub target_fraction: f64,
    pub realized_fraction: f64,
}

/// A full batch plan: one entry per training step plus the window audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub seed: u64,
    pub batch_size: u32,
    pub entries: Vec<MixEntry>,
    pub windows: Vec<WindowAudit>,
}

impl MixPlan {
    /// One `{"step": .., "n_cot": .., "n_direct": ..}` line per entry.
    pub fn write_jsonl<W: std::io::Write>(&self, mut writer: W) -> std::io::Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut writer, entry)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Builds the per-step batch plan. The plan has exactly `total_steps`
/// lines; line `i` targets the curve at normalized position `i/(T-1)`,
/// so the first line is all-CoT and the last all-direct regardless of
/// seed. Each line's CoT count is the stochastic rounding of
/// `batch_size × fraction` — floor plus a Bernoulli on the fractional
/// part — consuming exactly one rng draw per line, so any prefix of the
/// plan is stable under extension.
pub fn plan_batches(
    schedule: &AnnealSchedule,
    batch_size: u32,
    seed: u64,
) -> Result<MixPlan, AnnealError> {
    if batch_size == 0 {
        return Err(AnnealError::ZeroBatch);
    }
    let lines = schedule.total_steps();
    let denominator = (lines - 1).max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(lines as usize);
    let mut targets = Vec::with_capacity(lines as usize);
    for i in 0..lines {
        let fraction = schedule.fraction_at_unit(i as f64 / denominator);
        let target = batch_size as f64 * fraction;
        let floor = target.floor();
        let draw: f64 = rng.random();
        let n_cot = (floor as u32 + u32::from(draw < target - floor)).min(batch_size);
        entries.push(MixEntry {
            step: i,
            n_cot,
            n_direct: batch_size - n_cot,
        });
        targets.push(fraction);
    }
    let mut windows = Vec::new();
    if entries.len() >= AUDIT_WINDOW {
        for start in 0..=(entries.len() - AUDIT_WINDOW) {
            let slice = &entries[start..start + AUDIT_WINDOW];
            let realized: u64 = slice.iter().map(|e| u64::from(e.n_cot)).sum();
            let target: f64 = targets[start..start + AUDIT_WINDOW].iter().sum::<f64>();
            windows.push(WindowAudit {
                start: start as u64,
                target_fraction: target / AUDIT_WINDOW as f64,
                realized_fraction: realized as f64
                    / (AUDIT_WINDOW as f64 * batch_size as f64),
            });
        }
    }
    Ok(MixPlan {
        seed,
        batch_size,
        entries,
        windows,
    })
}

/// Strips the reasoning steps from a CoT record, leaving question and
/// final answer untouched. The derived record is tagged in metadata and
/// its id gains a `#direct` suffix.
pub fn derive_direct(record: &InstructionRecord) -> Result<InstructionRecord, AnnealError> {
    match &record.cot_steps {
        Some(steps) if !steps.is_empty() => {}
        _ => {
            return Err(AnnealError::NoStepsToStrip {
                record_id: record.record_id.clone(),
            })
        }
    }
    let mut derived = record.clone();
    derived.record_id = format!("{}#direct", record.record_id);
    derived.cot_steps = None;
    derived
        .metadata
        .insert("derived_direct".to_string(), serde_json::Value::Bool(true));
    Ok(derived)
}
