//! Tracking accuracy over the steady part of each row.
//!
//! A record belongs to the metric window when it was logged while tracking
//! a row and the vehicle has already reached 90 % of the cruise speed at
//! least once in that row. Transit, hold and the acceleration transient are
//! excluded.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::trace::{Trace, TraceRow};

/// Fraction of the cruise speed that opens the window in a row.
pub const WINDOW_SPEED_FRACTION: f64 = 0.9;

const TRACK_PHASE: &str = "track";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub row: usize,
    pub samples: usize,
    /// Root mean square of the true navigation error, meters.
    pub rmse: f64,
    /// Mean and standard deviation of the absolute cross-track error.
    pub mu_e: f64,
    pub sigma_e: f64,
    /// RMS of the filter errors `a_hat - a` and `b_hat - b`.
    pub ekf_a_rmse: f64,
    pub ekf_b_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rmse: f64,
    pub mu_e: f64,
    pub sigma_e: f64,
    pub ekf_a_rmse: f64,
    pub ekf_b_rmse: f64,
    pub samples: usize,
    pub rows: Vec<RowMetrics>,
    /// Lines detected and accepted over the whole trace.
    pub observations: u64,
    pub accepted: u64,
    /// Records excluded from the window, by reason.
    pub excluded_transit: usize,
    pub excluded_hold: usize,
    pub excluded_transient: usize,
    /// Wall-clock duration of the run, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    xi2: f64,
    e: f64,
    e2: f64,
    da2: f64,
    db2: f64,
}

impl Acc {
    fn push(&mut self, r: &TraceRow) {
        let e = r.e.abs();
        self.n += 1;
        self.xi2 += r.xi * r.xi;
        self.e += e;
        self.e2 += e * e;
        let (da, db) = (r.ekf_a - r.true_a, r.ekf_b - r.true_b);
        self.da2 += da * da;
        self.db2 += db * db;
    }

    fn finish(&self, row: usize) -> RowMetrics {
        let n = self.n as f64;
        let mu = self.e / n;
        let var = (self.e2 / n - mu * mu).max(0.0);
        RowMetrics {
            row,
            samples: self.n,
            rmse: (self.xi2 / n).sqrt(),
            mu_e: mu,
            sigma_e: var.sqrt(),
            ekf_a_rmse: (self.da2 / n).sqrt(),
            ekf_b_rmse: (self.db2 / n).sqrt(),
        }
    }
}

/// Window membership of every record, in order.
pub fn window_mask(rows: &[TraceRow], cruise_speed: f64) -> Vec<bool> {
    let mut open: Option<usize> = None;
    rows.iter()
        .map(|r| {
            if r.phase != TRACK_PHASE {
                open = None;
                return false;
            }
            if open != Some(r.row) && r.speed >= WINDOW_SPEED_FRACTION * cruise_speed {
                open = Some(r.row);
            }
            open == Some(r.row)
        })
        .collect()
}

/// Accuracy metrics of a trace. Fails with [`HarnessError::EmptyWindow`]
/// when no record falls inside the window.
pub fn compute_metrics(trace: &Trace) -> Result<RunMetrics> {
    if !(trace.cruise_speed > 0.0) {
        return Err(HarnessError::Trace("cruise speed must be positive".into()));
    }
    let mask = window_mask(&trace.rows, trace.cruise_speed);
    let mut all = Acc::default();
    let mut per_row: Vec<(usize, Acc)> = Vec::new();
    let (mut transit, mut hold, mut transient) = (0, 0, 0);
    let (mut observations, mut accepted) = (0u64, 0u64);
    for (r, &inside) in trace.rows.iter().zip(&mask) {
        observations += u64::from(r.obs);
        accepted += u64::from(r.accepted);
        if inside {
            all.push(r);
            match per_row.last_mut() {
                Some((k, acc)) if *k == r.row => acc.push(r),
                _ => {
                    let mut acc = Acc::default();
                    acc.push(r);
                    per_row.push((r.row, acc));
                }
            }
            continue;
        }
        match r.phase.as_str() {
            "transit" => transit += 1,
            "hold" => hold += 1,
            TRACK_PHASE => transient += 1,
            _ => {}
        }
    }
    if all.n == 0 {
        return Err(HarnessError::EmptyWindow);
    }
    let total = all.finish(0);
    Ok(RunMetrics {
        rmse: total.rmse,
        mu_e: total.mu_e,
        sigma_e: total.sigma_e,
        ekf_a_rmse: total.ekf_a_rmse,
        ekf_b_rmse: total.ekf_b_rmse,
        samples: all.n,
        rows: per_row.iter().map(|(k, acc)| acc.finish(*k)).collect(),
        observations,
        accepted,
        excluded_transit: transit,
        excluded_hold: hold,
        excluded_transient: transient,
        wall_time_s: None,
    })
}
