use crate::error::{HarnessError, Result};

/// Index of the smallest loss, earliest on ties.
pub fn best_index(losses: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if !l.is_finite() {
            return Err(HarnessError::Metrics(format!("non-finite validation loss at epoch {i}")));
        }
        if best.map_or(true, |b| l < losses[b]) {
            best = Some(i);
        }
    }
    best.ok_or(HarnessError::EmptyTrace)
}

/// The checkpoint of the epoch with minimal validation loss.
pub fn select_model<'a, C>(losses: &[f64], checkpoints: &'a [C]) -> Result<&'a C> {
    if losses.len() != checkpoints.len() {
        return Err(HarnessError::Metrics(format!(
            "{} losses for {} checkpoints",
            losses.len(),
            checkpoints.len()
        )));
    }
    Ok(&checkpoints[best_index(losses)?])
}
