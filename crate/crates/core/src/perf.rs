//! Approach speed and landing distance corrections for active failures.
//!
//! All coefficients come from a correction table; the model is additive in
//! speed and multiplicative in distance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProcedureId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEntry {
    pub failure: ProcedureId,
    /// knots, added to the reference approach speed
    pub speed_increment: f64,
    /// dimensionless, multiplies the reference landing distance
    pub distance_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfInput {
    /// knots
    pub vref: f64,
    /// meters
    pub reference_landing_distance: f64,
    pub active_failures: BTreeSet<ProcedureId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfResult {
    pub vapp: f64,
    pub landing_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerfError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate correction for {failure}")]
    DuplicateFailure { line: usize, failure: ProcedureId },
    #[error("no correction entry for {0}")]
    MissingEntry(ProcedureId),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Parses `correction <PROC_ID> speed +<kt> dist x<factor>` lines. Blank
/// lines and `#` comments are ignored.
pub fn load_correction_table(text: &str) -> Result<Vec<CorrectionEntry>, PerfError> {
    let mut out: Vec<CorrectionEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| PerfError::Parse { line, message };
        let words: Vec<&str> = content.split_whitespace().collect();
        let [kw, id, speed_kw, speed, dist_kw, dist] = words.as_slice() else {
            return Err(err("expected `correction <ID> speed +<kt> dist x<factor>`".into()));
        };
        if *kw != "correction" || *speed_kw != "speed" || *dist_kw != "dist" {
            return Err(err("expected `correction <ID> speed +<kt> dist x<factor>`".into()));
        }
        let failure: ProcedureId = id.parse().map_err(|e| err(format!("{e}")))?;
        let speed_increment = speed
            .strip_prefix('+')
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| err(format!("speed must be `+<kt>` with kt >= 0, got `{speed}`")))?;
        let distance_factor = dist
            .strip_prefix('x')
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 1.0)
            .ok_or_else(|| err(format!("dist must be `x<factor>` with factor >= 1, got `{dist}`")))?;
        if out.iter().any(|e| e.failure == failure) {
            return Err(PerfError::DuplicateFailure { line, failure });
        }
        out.push(CorrectionEntry { failure, speed_increment, distance_factor });
    }
    Ok(out)
}

/// `vapp = vref + sum(increments)`, `distance = reference * prod(factors)`
/// over the active failures. Failures are visited in sorted order so the
/// floating-point result does not depend on how the set was built.
pub fn corrected_performance(input: &PerfInput, table: &[CorrectionEntry]) -> Result<PerfResult, PerfError> {
    if !(input.vref.is_finite() && input.vref > 0.0) {
        return Err(PerfError::InvalidInput(format!("vref must be positive, got {}", input.vref)));
    }
    if !(input.reference_landing_distance.is_finite() && input.reference_landing_distance > 0.0) {
        return Err(PerfError::InvalidInput(format!(
            "reference landing distance must be positive, got {}",
            input.reference_landing_distance
        )));
    }
    let by_id: BTreeMap<&ProcedureId, &CorrectionEntry> = table.iter().map(|e| (&e.failure, e)).collect();
    let mut vapp = input.vref;
    let mut landing_distance = input.reference_landing_distance;
    for failure in &input.active_failures {
        let entry = by_id.get(failure).ok_or_else(|| PerfError::MissingEntry(failure.clone()))?;
        vapp += entry.speed_increment;
        landing_distance *= entry.distance_factor;
    }
    Ok(PerfResult { vapp, landing_distance })
}
