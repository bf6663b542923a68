//! Fisher–Rao instrumentation for the one-step transition kernel
//! `N(x + f·dt, g²·dt·I)`.
//!
//! With parameters `θ = (f, g)` the Fisher information is block diagonal,
//! `I_ff = (dt/g²)·I`, `I_fg = 0`, `I_gg = 2D/g²`, so a step moves
//! `ds² = (dt/g²)‖Δf‖² + (2D/g²)(Δg)²` along the statistical manifold.

use rayon::prelude::*;
use serde::Serialize;

use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::rng::RandomStream;
use crate::state::{squared_distance, SystemState};

/// Per-step line-element contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineElementSample {
    pub t: f64,
    pub dt: f64,
    pub ds2_drift: f64,
    pub ds2_noise: f64,
}

/// `(dt/g²)·‖df‖²`.
pub fn drift_line_element(df: &[f64], g: f64, dt: f64) -> f64 {
    let sq: f64 = df.iter().map(|v| v * v).sum();
    dt / (g * g) * sq
}

/// `(2D/g²)·dg²`.
pub fn noise_line_element(dg: f64, g: f64, dim: usize) -> f64 {
    2.0 * dim as f64 / (g * g) * dg * dg
}

/// Monte-Carlo estimate of the joint `(f, g)` Fisher information.
#[derive(Debug, Clone, Serialize)]
pub struct FimEstimate {
    pub dim: usize,
    pub samples: usize,
    /// Row-major `(D+1)×(D+1)` mean outer product of the score.
    pub matrix: Vec<f64>,
    /// Standard error of each entry of `matrix`.
    pub std_err: Vec<f64>,
}

impl FimEstimate {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * (self.dim + 1) + j]
    }

    pub fn entry_std_err(&self, i: usize, j: usize) -> f64 {
        self.std_err[i * (self.dim + 1) + j]
    }
}

const FIM_SHARD: usize = 1 << 16;

/// Draws residuals `r ~ N(0, g²·dt·I)`, forms the score
/// `[r/g², r·r/(g³·dt) − D/g]` and averages its outer product.
///
/// Work is split into fixed-size shards, each on its own substream, and the
/// shard sums are combined in shard order, so the result does not depend on
/// the worker count.
pub fn fim_monte_carlo_oracle(
    g: f64,
    dt: f64,
    dim: usize,
    n_samples: usize,
    stream: &RandomStream,
) -> Result<FimEstimate> {
    if !(g > 0.0 && dt > 0.0) || dim == 0 || n_samples == 0 {
        return Err(Error::Contract(format!(
            "FIM oracle needs g > 0, dt > 0, D >= 1, n >= 1 (got {g}, {dt}, {dim}, {n_samples})"
        )));
    }
    let p = dim + 1;
    let n_shards = n_samples.div_ceil(FIM_SHARD);
    let sigma = g * dt.sqrt();

    let shard_sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_shards)
        .into_par_iter()
        .map(|shard| {
            let count = FIM_SHARD.min(n_samples - shard * FIM_SHARD);
            let mut rng = stream.substream(shard as u64);
            let mut sum = vec![0.0; p * p];
            let mut sum_sq = vec![0.0; p * p];
            let mut z = vec![0.0; dim];
            let mut score = vec![0.0; p];
            for _ in 0..count {
                rng.fill_gaussian(&mut z);
                let mut rr = 0.0;
                for (d, zd) in z.iter().enumerate() {
                    let r = sigma * zd;
                    rr += r * r;
                    score[d] = r / (g * g);
                }
                score[dim] = rr / (g * g * g * dt) - dim as f64 / g;
                for i in 0..p {
                    for j in 0..p {
                        let v = score[i] * score[j];
                        sum[i * p + j] += v;
                        sum_sq[i * p + j] += v * v;
                    }
                }
            }
            (sum, sum_sq)
        })
        .collect();

    let mut sum = vec![0.0; p * p];
    let mut sum_sq = vec![0.0; p * p];
    for (s, sq) in &shard_sums {
        for i in 0..p * p {
            sum[i] += s[i];
            sum_sq[i] += sq[i];
        }
    }
    let n = n_samples as f64;
    let matrix: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = matrix
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| {
            let var = (sq / n - m * m).max(0.0) * n / (n - 1.0).max(1.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(FimEstimate {
        dim,
        samples: n_samples,
        matrix,
        std_err,
    })
}

/// Mean ratio `‖Δf‖ / |Δg|` over one-step Euler transitions, per probe step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub dt: f64,
    pub mean_ratio: f64,
}

/// Measures drift variation against noise-schedule variation across a grid
/// of step sizes. The log-log slope of the result against `dt` approaches
/// `−1/2` when the drift depends on the state.
///
/// `noise` draws one Gaussian perturbation shaped like `state`.
#[allow(clippy::too_many_arguments)]
pub fn scaling_ratio_probe(
    field: &dyn DriftField,
    schedule: &NoiseSchedule,
    state: &SystemState,
    t: f64,
    dt_grid: &[f64],
    n_reps: usize,
    stream: &mut RandomStream,
    noise: impl Fn(&mut RandomStream) -> SystemState,
) -> Result<Vec<ScalingPoint>> {
    if schedule.g_dot(t) == 0.0 {
        return Err(Error::DegenerateProbe(format!(
            "g is stationary at t = {t}; the drift/noise ratio is undefined"
        )));
    }
    if n_reps == 0 || dt_grid.is_empty() {
        return Err(Error::Contract("probe needs at least one step size and one repetition".into()));
    }
    let f0 = field.eval(state, t)?;
    let g = schedule.g(t);
    let mut out = Vec::with_capacity(dt_grid.len());
    for &dt in dt_grid {
        if !(dt > 0.0) {
            return Err(Error::Contract(format!("probe step must be positive, got {dt}")));
        }
        let dg = (schedule.g(t + dt) - g).abs();
        if dg == 0.0 {
            return Err(Error::DegenerateProbe(format!("g(t + {dt}) == g(t)")));
        }
        let mut total = 0.0;
        for _ in 0..n_reps {
            let z = noise(stream);
            let next = crate::integrator::euler_step(state, &f0, g, dt, &z)?;
            let f1 = field.eval(&next, t + dt)?;
            let df2 = squared_distance(&f1.node, &f0.node) + squared_distance(f1.edge_slice(), f0.edge_slice());
            total += df2.sqrt() / dg;
        }
        out.push(ScalingPoint {
            dt,
            mean_ratio: total / n_reps as f64,
        });
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Summary of per-step drift line elements along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcProfile {
    pub mean: f64,
    pub std: f64,
    pub cv: f64,
    /// Running sum of `ds2_drift`.
    pub cumulative: Vec<f64>,
}

impl ArcProfile {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Mean, population standard deviation and coefficient of variation of
/// `ds2_drift`. The CV is 0 when the mean is 0.
pub fn arc_length_profile(samples: &[LineElementSample]) -> Result<ArcProfile> {
    if samples.is_empty() {
        return Err(Error::Shape("arc-length profile of an empty trajectory".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.ds2_drift).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.ds2_drift - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let cv = if mean == 0.0 { 0.0 } else { std / mean };
    let cumulative = samples
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.ds2_drift;
            Some(*acc)
        })
        .collect();
    Ok(ArcProfile { mean, std, cv, cumulative })
}

/// Drops the trailing `fraction` of steps, for plots that cut off the
/// blow-up right before the horizon. Keeps at least one sample.
pub fn truncate_tail(samples: &[LineElementSample], fraction: f64) -> &[LineElementSample] {
    let drop = (samples.len() as f64 * fraction.clamp(0.0, 1.0)).floor() as usize;
    let keep = samples.len().saturating_sub(drop).max(1).min(samples.len());
    &samples[..keep]
}
