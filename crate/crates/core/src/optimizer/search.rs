//! Two-stage bounded threshold search.
//!
//! Stage one tunes the HSV bounds on the RGB shape terms alone. Stage two
//! freezes them and tunes the thermal thresholds on the thermal shape and
//! thermal-to-RGB correlation terms. The cost is piecewise constant in the
//! thresholds, so the default search is derivative-free.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Bounds, CostBreakdown, CostConfig, CostModel, ThresholdSet};
use crate::error::{Error, Result};
use crate::raster::{GrayImage, RgbImage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    /// Coordinate descent with a halving step.
    #[default]
    CoordinateDescent,
    /// Projected BFGS on finite-difference gradients.
    QuasiNewton,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub method: SearchMethod,
    /// First coordinate step, threshold units.
    pub initial_step: f64,
    /// Search stops after the step falls below this.
    pub min_step: f64,
    /// Evaluation budget per stage.
    pub max_evals: usize,
    /// Finite-difference half-width for the quasi-Newton mode.
    pub fd_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { method: SearchMethod::CoordinateDescent, initial_step: 16.0, min_step: 1.0, max_evals: 400, fd_step: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub thresholds: ThresholdSet,
    pub cost: CostBreakdown,
    pub initial_cost: CostBreakdown,
    pub elapsed: Duration,
    pub evaluations: usize,
    /// Every threshold vector the search evaluated, in order.
    pub iterates: Vec<[f64; 9]>,
}

const THERMAL_VARS: [usize; 3] = [0, 1, 2];
const RGB_VARS: [usize; 6] = [3, 4, 5, 6, 7, 8];

struct Stage<'m, 'a> {
    model: &'m mut CostModel<'a>,
    base: ThresholdSet,
    thermal: bool,
    iterates: &'m mut Vec<[f64; 9]>,
    evals: usize,
}

impl Stage<'_, '_> {
    /// Stage objective, `None` when the candidate violates an ordering
    /// constraint.
    fn eval(&mut self, x: &[f64; 9]) -> Option<f64> {
        self.iterates.push(*x);
        self.evals += 1;
        let th = self.base.with_array(*x);
        th.validate().ok()?;
        let c = if self.thermal {
            self.model.evaluate_parts(&th, true, false, true).ok()?.thermal_part()
        } else {
            self.model.evaluate_parts(&th, false, true, false).ok()?.rgb_shape_part()
        };
        Some(c)
    }
}

fn coordinate_descent(stage: &mut Stage, x0: [f64; 9], vars: &[usize], bounds: &Bounds, opts: &OptimizeOptions) -> [f64; 9] {
    let mut x = x0;
    let Some(mut fx) = stage.eval(&x) else { return x };
    let mut step = opts.initial_step;
    while step >= opts.min_step && stage.evals < opts.max_evals {
        let mut improved = true;
        while improved && stage.evals < opts.max_evals {
            improved = false;
            for &i in vars {
                for dir in [1.0, -1.0] {
                    let mut cand = x;
                    cand[i] = bounds.clamp(i, x[i] + dir * step);
                    if cand[i].round() == x[i].round() {
                        continue;
                    }
                    if let Some(fc) = stage.eval(&cand) {
                        if fc < fx {
                            x = cand;
                            fx = fc;
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        step *= 0.5;
    }
    x
}

fn project(bounds: &Bounds, vars: &[usize], mut x: [f64; 9]) -> [f64; 9] {
    for &i in vars {
        x[i] = bounds.clamp(i, x[i]);
    }
    x
}

fn fd_gradient(stage: &mut Stage, x: &[f64; 9], fx: f64, vars: &[usize], bounds: &Bounds, h: f64) -> Vec<f64> {
    vars.iter()
        .map(|&i| {
            let (mut hi, mut lo) = (*x, *x);
            hi[i] = bounds.clamp(i, x[i] + h);
            lo[i] = bounds.clamp(i, x[i] - h);
            let fh = stage.eval(&hi).unwrap_or(f64::INFINITY);
            let fl = stage.eval(&lo).unwrap_or(f64::INFINITY);
            match (fh.is_finite(), fl.is_finite()) {
                (true, true) if hi[i] > lo[i] => (fh - fl) / (hi[i] - lo[i]),
                (true, false) if hi[i] > x[i] => (fh - fx) / (hi[i] - x[i]),
                (false, true) if x[i] > lo[i] => (fx - fl) / (x[i] - lo[i]),
                _ => 0.0,
            }
        })
        .collect()
}

fn quasi_newton(stage: &mut Stage, x0: [f64; 9], vars: &[usize], bounds: &Bounds, opts: &OptimizeOptions) -> [f64; 9] {
    let n = vars.len();
    let mut x = x0;
    let Some(mut fx) = stage.eval(&x) else { return x };
    let mut g = fd_gradient(stage, &x, fx, vars, bounds, opts.fd_step);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if gmax > 0.0 { opts.initial_step / gmax } else { 1.0 };
    let mut hinv: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| if r == c { scale } else { 0.0 }).collect()).collect();
    while stage.evals < opts.max_evals {
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        let d: Vec<f64> = (0..n).map(|r| -(0..n).map(|c| hinv[r][c] * g[c]).sum::<f64>()).collect();
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..8 {
            let mut cand = x;
            for (k, &i) in vars.iter().enumerate() {
                cand[i] += alpha * d[k];
            }
            let cand = project(bounds, vars, cand);
            if let Some(fc) = stage.eval(&cand) {
                if fc < fx {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_)) = accepted else { break };
        let gn = fd_gradient(stage, &xn, fn_, vars, bounds, opts.fd_step);
        let s: Vec<f64> = vars.iter().map(|&i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|k| gn[k] - g[k]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            // BFGS inverse-Hessian update
            let hy: Vec<f64> = (0..n).map(|r| (0..n).map(|c| hinv[r][c] * y[c]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for r in 0..n {
                for c in 0..n {
                    hinv[r][c] += (sy + yhy) * s[r] * s[c] / (sy * sy) - (hy[r] * s[c] + s[r] * hy[c]) / sy;
                }
            }
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    x
}

/// Tunes `init` on an image pair. The result never scores worse than
/// `init` on the full cost.
pub fn optimize_thresholds(
    thermal: &GrayImage,
    rgb: &RgbImage,
    init: &ThresholdSet,
    cfg: &CostConfig,
    opts: &OptimizeOptions,
) -> Result<TuneResult> {
    let started = Instant::now();
    init.validate()?;
    let mut model = CostModel::new(thermal, rgb, *cfg)?;
    let initial_cost = model.evaluate(init)?;
    let bounds = init.bounds;
    let mut iterates = vec![init.to_array()];

    let run = |stage: &mut Stage, x: [f64; 9], vars: &[usize]| match opts.method {
        SearchMethod::CoordinateDescent => coordinate_descent(stage, x, vars, &bounds, opts),
        SearchMethod::QuasiNewton => quasi_newton(stage, x, vars, &bounds, opts),
    };

    let mut stage = Stage { model: &mut model, base: *init, thermal: false, iterates: &mut iterates, evals: 0 };
    let x1 = run(&mut stage, init.to_array(), &RGB_VARS);
    let mut stage = Stage { model: &mut model, base: init.with_array(x1), thermal: true, iterates: &mut iterates, evals: 0 };
    let x2 = run(&mut stage, x1, &THERMAL_VARS);

    let tuned = init.with_array(x2).rounded();
    let tuned = if tuned.validate().is_ok() { tuned } else { *init };
    let cost = model.evaluate(&tuned)?;
    let (thresholds, cost) = if cost.total <= initial_cost.total { (tuned, cost) } else { (*init, initial_cost.clone()) };
    if cost.n_thermal() == 0 && cost.n_rgb() == 0 {
        return Err(Error::NoRegionsDetected);
    }
    Ok(TuneResult { thresholds, cost, initial_cost, elapsed: started.elapsed(), evaluations: model.evaluations(), iterates })
}
