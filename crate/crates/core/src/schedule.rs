//! Time grids for fixed, quadratic and adaptive stepping.

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Fixed,
    Quadratic,
    Dvs,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Fixed => "fixed",
            ScheduleKind::Quadratic => "quadratic",
            ScheduleKind::Dvs => "dvs",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ScheduleKind::Fixed),
            "quadratic" => Ok(ScheduleKind::Quadratic),
            "dvs" => Ok(ScheduleKind::Dvs),
            other => Err(Error::Config(format!(
                "unknown schedule `{other}` (expected fixed, quadratic or dvs)"
            ))),
        }
    }
}

/// How the sampler picks its step sizes.
///
/// `n_steps` is required for grid schedules and rejected for `dvs`, whose
/// step count is an outcome of the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
}

impl ScheduleSpec {
    pub fn fixed(n_steps: u64) -> Self {
        Self { kind: ScheduleKind::Fixed, n_steps: Some(n_steps), controller: None }
    }

    pub fn quadratic(n_steps: u64) -> Self {
        Self { kind: ScheduleKind::Quadratic, n_steps: Some(n_steps), controller: None }
    }

    pub fn dvs(controller: ControllerConfig) -> Self {
        Self { kind: ScheduleKind::Dvs, n_steps: None, controller: Some(controller) }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        match self.kind {
            ScheduleKind::Fixed | ScheduleKind::Quadratic => {
                match self.n_steps {
                    Some(n) if n >= 1 => {}
                    Some(_) => return Err(Error::Config("n_steps must be at least 1".into())),
                    None => {
                        return Err(Error::Config(format!(
                            "{} schedule needs n_steps",
                            self.kind.name()
                        )))
                    }
                }
                if self.controller.is_some() {
                    return Err(Error::Config(format!(
                        "{} schedule takes no controller settings",
                        self.kind.name()
                    )));
                }
                Ok(())
            }
            ScheduleKind::Dvs => {
                if self.n_steps.is_some() {
                    return Err(Error::Config(
                        "dvs step counts are decided by the controller; remove n_steps".into(),
                    ));
                }
                self.controller_config().validate(horizon)
            }
        }
    }

    /// Controller settings, falling back on defaults when absent.
    pub fn controller_config(&self) -> ControllerConfig {
        self.controller.clone().unwrap_or_default()
    }

    /// The full time grid for grid schedules; `None` for `dvs`.
    pub fn grid(&self, horizon: f64) -> Result<Option<Vec<f64>>> {
        self.validate(horizon)?;
        let n = self.n_steps.unwrap_or(0);
        Ok(match self.kind {
            ScheduleKind::Fixed => Some(fixed_grid(horizon, n)?),
            ScheduleKind::Quadratic => Some(quadratic_grid(horizon, n)?),
            ScheduleKind::Dvs => None,
        })
    }
}

fn check_grid_args(horizon: f64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("a time grid needs at least one step".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// `t_k = k·T/n`, with `t_n = T` exactly.
pub fn fixed_grid(horizon: f64, n: u64) -> Result<Vec<f64>> {
    check_grid_args(horizon, n)?;
    let mut out: Vec<f64> = (0..=n).map(|k| k as f64 * horizon / n as f64).collect();
    out[n as usize] = horizon;
    Ok(out)
}

/// `t_k = T·(1 − ((n−k)/n)²)`: steps shrink towards `t = T`.
pub fn quadratic_grid(horizon: f64, n: u64) -> Result<Vec<f64>> {
    check_grid_args(horizon, n)?;
    let nf = n as f64;
    let mut out: Vec<f64> = (0..=n)
        .map(|k| {
            let r = (nf - k as f64) / nf;
            horizon * (1.0 - r * r)
        })
        .collect();
    out[0] = 0.0;
    out[n as usize] = horizon;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(fixed_grid(1.0, 4).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(fixed_grid(2.5, 1).unwrap(), vec![0.0, 2.5]);
        let g = fixed_grid(1.0, 1000).unwrap();
        for w in g.windows(2) {
            let inc = w[1] - w[0];
            assert!((inc - 1e-3).abs() <= f64::EPSILON * w[1].max(1e-3));
        }
        assert!(fixed_grid(1.0, 0).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let g = quadratic_grid(1.0, 4).unwrap();
        let expect = [0.0, 0.4375, 0.75, 0.9375, 1.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(quadratic_grid(3.0, 1).unwrap(), vec![0.0, 3.0]);
        let g = quadratic_grid(1.0, 200).unwrap();
        let inc: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(inc.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn grid_endpoints_agree() {
        for n in [1, 3, 17, 1000] {
            let (f, q) = (fixed_grid(1.7, n).unwrap(), quadratic_grid(1.7, n).unwrap());
            assert_eq!((f[0], f[n as usize]), (q[0], q[n as usize]));
            assert_eq!(f.len(), q.len());
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ScheduleSpec::fixed(10).validate(1.0).is_ok());
        assert!(ScheduleSpec::fixed(0).validate(1.0).is_err());
        let mut dvs = ScheduleSpec::dvs(ControllerConfig::default());
        assert!(dvs.validate(1.0).is_ok());
        dvs.n_steps = Some(100);
        assert!(matches!(dvs.validate(1.0), Err(Error::Config(_))));
        let missing = ScheduleSpec { kind: ScheduleKind::Quadratic, n_steps: None, controller: None };
        assert!(missing.validate(1.0).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: ScheduleSpec = serde_json::from_str(r#"{"kind":"dvs","controller":{"gamma":0.3}}"#).unwrap();
        assert_eq!(spec.controller_config().gamma, 0.3);
        assert_eq!(spec.controller_config().alpha, 0.2);
        let spec: ScheduleSpec = serde_json::from_str(r#"{"kind":"fixed","n_steps":50}"#).unwrap();
        assert_eq!(spec, ScheduleSpec::fixed(50));
        assert!(serde_json::from_str::<ScheduleSpec>(r#"{"kind":"fixed","steps":50}"#).is_err());
    }
}
