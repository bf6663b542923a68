//! Drift-variation step-size control.
//!
//! The controller watches how fast consecutive drift evaluations move,
//! measured in the Fisher–Rao geometry of the one-step Gaussian transition
//! kernel `N(x + f·dt, g²·dt·I)`. In drift coordinates that metric is
//! `(dt / g²)·I`, so a step contributes `Δs² = V·Δt` with the drift
//! variation score `V = ‖f_k − f_{k−1}‖² / g²`. Holding `Δs²` roughly
//! constant means the step must shrink where `V` is large:
//!
//! ```text
//! V̄   ← (1 − α)·V̄ + α·V                         (per component)
//! Δt_c = clip(Δt_base · (κ_ref / V̄_c)^β, Δt_min, Δt_max)
//! Δt   = min(Δt_X, Δt_A)                         (bottleneck)
//! V̄_X, V̄_A ← γ·(V̄_X + V̄_A)                      (aggregation)
//! Δt   ← min(Δt, T − t)
//! ```
//!
//! The first step, and any step outside the configured active ranges, uses
//! `Δt_base` and leaves `V̄` untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{squared_distance, SystemState};

fn default_alpha() -> f64 {
    0.2
}
fn default_beta() -> f64 {
    0.5
}
fn default_kappa_ref() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.2
}
fn default_dt_base() -> f64 {
    1e-3
}
fn default_dt_min() -> f64 {
    2e-4
}
fn default_dt_max() -> f64 {
    5e-3
}
fn default_eps_num() -> f64 {
    1e-12
}
fn default_eps_bound() -> f64 {
    1e-6
}

/// Controller hyperparameters. Field defaults are the common settings
/// (`α = 0.2`, `β = 0.5`, `Δt ∈ [2e-4, 5e-3]` around `1e-3`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_kappa_ref")]
    pub kappa_ref: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_dt_base")]
    pub dt_base: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Closed intervals where the controller adapts. Empty means everywhere.
    #[serde(default)]
    pub active_ranges: Vec<[f64; 2]>,
    #[serde(default = "default_eps_num")]
    pub eps_num: f64,
    #[serde(default = "default_eps_bound")]
    pub eps_bound: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            kappa_ref: default_kappa_ref(),
            gamma: default_gamma(),
            dt_base: default_dt_base(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            active_ranges: Vec::new(),
            eps_num: default_eps_num(),
            eps_bound: default_eps_bound(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !pos(self.beta) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !pos(self.kappa_ref) {
            return bad(format!("kappa_ref must be positive, got {}", self.kappa_ref));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        if !(pos(self.dt_min) && pos(self.dt_base) && pos(self.dt_max)) {
            return bad("step sizes must be positive".into());
        }
        if !(self.dt_min <= self.dt_base && self.dt_base <= self.dt_max) {
            return bad(format!(
                "need dt_min <= dt_base <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_base, self.dt_max
            ));
        }
        if !pos(self.eps_num) || !pos(self.eps_bound) {
            return bad("eps_num and eps_bound must be positive".into());
        }
        let mut ranges = self.active_ranges.clone();
        ranges.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for r in &ranges {
            if !(r[0] <= r[1] && r[0] >= 0.0 && r[1] <= horizon) {
                return bad(format!("active range [{}, {}] not inside [0, {horizon}]", r[0], r[1]));
            }
        }
        for w in ranges.windows(2) {
            if w[1][0] <= w[0][1] {
                return bad(format!(
                    "active ranges [{}, {}] and [{}, {}] overlap",
                    w[0][0], w[0][1], w[1][0], w[1][1]
                ));
            }
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.active_ranges.is_empty() || self.active_ranges.iter().any(|r| r[0] <= t && t <= r[1])
    }
}

/// Running controller memory for a single trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerState {
    pub vbar_x: f64,
    pub vbar_a: f64,
    /// Drift from the previous step, present once `step > 1`.
    pub prev_drift: Option<SystemState>,
    step: u64,
}

impl ControllerState {
    pub fn new() -> Self {
        Self {
            vbar_x: 0.0,
            vbar_a: 0.0,
            prev_drift: None,
            step: 1,
        }
    }

    /// 1-based index of the step about to be taken.
    pub fn step_index(&self) -> u64 {
        self.step.max(1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub v_x: f64,
    pub v_a: f64,
    pub dt_x: f64,
    pub dt_a: f64,
    /// Whether the adaptive branch produced this step.
    pub adaptive: bool,
}

/// `‖f_curr − f_prev‖² / max(g², eps_num)`.
pub fn drift_variation_score(f_curr: &[f64], f_prev: &[f64], g: f64, eps_num: f64) -> Result<f64> {
    if f_curr.len() != f_prev.len() {
        return Err(Error::Shape(format!(
            "drift lengths differ: {} vs {}",
            f_curr.len(),
            f_prev.len()
        )));
    }
    Ok(squared_distance(f_curr, f_prev) / (g * g).max(eps_num))
}

pub fn ema_update(vbar: f64, v: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * vbar + alpha * v
}

/// The power-law step before clipping.
pub fn unclipped_step_size(vbar: f64, cfg: &ControllerConfig) -> f64 {
    cfg.dt_base * (cfg.kappa_ref / vbar.max(cfg.eps_num)).powf(cfg.beta)
}

pub fn adaptive_step_size(vbar: f64, cfg: &ControllerConfig) -> f64 {
    unclipped_step_size(vbar, cfg).max(cfg.dt_min).min(cfg.dt_max)
}

/// The stiffer component sets the step. `None` for single-component systems.
pub fn bottleneck(dt_x: f64, dt_a: Option<f64>) -> f64 {
    match dt_a {
        Some(dt_a) => dt_x.min(dt_a),
        None => dt_x,
    }
}

pub fn aggregate(vbar_x: f64, vbar_a: f64, gamma: f64) -> (f64, f64) {
    let shared = gamma * (vbar_x + vbar_a);
    (shared, shared)
}

/// One controller decision for the step starting at `t`.
///
/// `drift` is the drift just evaluated at the current state; it is cached for
/// the next call. Returns the step size, the advanced controller state and
/// the per-component diagnostics.
pub fn controller_step(
    mut ctrl: ControllerState,
    cfg: &ControllerConfig,
    drift: &SystemState,
    g: f64,
    t: f64,
    horizon: f64,
) -> Result<(f64, ControllerState, StepDiagnostics)> {
    if t >= horizon - cfg.eps_bound {
        return Err(Error::Contract(format!(
            "controller called at t = {t}, at or past the horizon {horizon}"
        )));
    }
    let k = ctrl.step_index();
    let two = drift.edge.is_some();

    let (v_x, v_a) = match &ctrl.prev_drift {
        Some(prev) => {
            prev.check_shape(drift, "cached drift")?;
            let v_x = drift_variation_score(&drift.node, &prev.node, g, cfg.eps_num)?;
            let v_a = if two {
                drift_variation_score(drift.edge_slice(), prev.edge_slice(), g, cfg.eps_num)?
            } else {
                0.0
            };
            (v_x, v_a)
        }
        None => (0.0, 0.0),
    };

    let mut diag = StepDiagnostics {
        v_x,
        v_a,
        dt_x: cfg.dt_base,
        dt_a: cfg.dt_base,
        adaptive: false,
    };

    let mut dt = cfg.dt_base;
    if k > 1 && cfg.is_active(t) {
        ctrl.vbar_x = ema_update(ctrl.vbar_x, v_x, cfg.alpha);
        diag.dt_x = adaptive_step_size(ctrl.vbar_x, cfg);
        if two {
            ctrl.vbar_a = ema_update(ctrl.vbar_a, v_a, cfg.alpha);
            diag.dt_a = adaptive_step_size(ctrl.vbar_a, cfg);
            dt = bottleneck(diag.dt_x, Some(diag.dt_a));
            (ctrl.vbar_x, ctrl.vbar_a) = aggregate(ctrl.vbar_x, ctrl.vbar_a, cfg.gamma);
        } else {
            diag.dt_a = diag.dt_x;
            dt = bottleneck(diag.dt_x, None);
            ctrl.vbar_x = aggregate(ctrl.vbar_x, 0.0, cfg.gamma).0;
        }
        diag.adaptive = true;
    }

    dt = dt.min(horizon - t);
    ctrl.prev_drift = Some(drift.clone());
    ctrl.step = k + 1;
    Ok((dt, ctrl, diag))
}
