//! Diffusion-coefficient schedules `g(t)` with closed-form derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Linear,
    Cosine,
}

/// Parameters for [`make_schedule`]. Unused fields are ignored by a kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// `g0` for constant/linear, `g_max` for cosine.
    pub start: f64,
    /// `g1` for linear, `g_min` for cosine.
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    start: f64,
    end: f64,
    horizon: f64,
}

pub fn make_schedule(kind: ScheduleKind, horizon: f64, params: ScheduleParams) -> Result<NoiseSchedule> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("schedule horizon must be positive, got {horizon}")));
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    match kind {
        ScheduleKind::Constant if !positive(params.start) => {
            return Err(Error::Config(format!("constant g0 must be positive, got {}", params.start)))
        }
        ScheduleKind::Linear | ScheduleKind::Cosine
            if !(positive(params.start) && positive(params.end)) =>
        {
            return Err(Error::Config(format!(
                "{kind:?} schedule endpoints must be positive, got {} and {}",
                params.start, params.end
            )))
        }
        _ => {}
    }
    Ok(NoiseSchedule {
        kind,
        start: params.start,
        end: if kind == ScheduleKind::Constant { params.start } else { params.end },
        horizon,
    })
}

impl NoiseSchedule {
    pub fn constant(g0: f64, horizon: f64) -> Result<Self> {
        make_schedule(ScheduleKind::Constant, horizon, ScheduleParams { start: g0, end: g0 })
    }

    pub fn linear(g0: f64, g1: f64, horizon: f64) -> Result<Self> {
        make_schedule(ScheduleKind::Linear, horizon, ScheduleParams { start: g0, end: g1 })
    }

    pub fn cosine(g_max: f64, g_min: f64, horizon: f64) -> Result<Self> {
        make_schedule(ScheduleKind::Cosine, horizon, ScheduleParams { start: g_max, end: g_min })
    }

    /// `g ≡ 0`: the deterministic (ODE) limit. Only meant for integrator
    /// cross-checks; the controller's `eps_num` guard keeps scores finite.
    pub fn zero(horizon: f64) -> Self {
        NoiseSchedule {
            kind: ScheduleKind::Constant,
            start: 0.0,
            end: 0.0,
            horizon,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn g(&self, t: f64) -> f64 {
        let u = t / self.horizon;
        match self.kind {
            ScheduleKind::Constant => self.start,
            ScheduleKind::Linear => self.start + (self.end - self.start) * u,
            ScheduleKind::Cosine => {
                self.end + (self.start - self.end) * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
            }
        }
    }

    pub fn g_dot(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => 0.0,
            ScheduleKind::Linear => (self.end - self.start) / self.horizon,
            ScheduleKind::Cosine => {
                let w = std::f64::consts::PI / self.horizon;
                -(self.start - self.end) * 0.5 * w * (w * t).sin()
            }
        }
    }
}
