//! Euler–Maruyama and Heun step kernels.
//!
//! Both kernels are pure: they never touch their inputs and the caller
//! supplies the Gaussian draw, so a step is reproducible from its arguments.

use serde::{Deserialize, Serialize};

use crate::drift::CountedDrift;
use crate::error::{Error, Result};
use crate::state::SystemState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Euler,
    Heun,
}

impl Solver {
    /// Drift evaluations per component per step.
    pub fn evals_per_step(self) -> u64 {
        match self {
            Solver::Euler => 1,
            Solver::Heun => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Solver::Euler => "euler",
            Solver::Heun => "heun",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Solver::Euler),
            "heun" => Ok(Solver::Heun),
            other => Err(Error::Config(format!("unknown solver `{other}` (expected euler or heun)"))),
        }
    }
}

fn check_step(dt: f64, g: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Contract(format!("step size must be positive and finite, got {dt}")));
    }
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::Contract(format!("diffusion coefficient must be nonnegative, got {g}")));
    }
    Ok(())
}

/// `state + drift·dt + g·√dt·noise`, component-wise.
pub fn euler_step(
    state: &SystemState,
    drift: &SystemState,
    g: f64,
    dt: f64,
    noise: &SystemState,
) -> Result<SystemState> {
    check_step(dt, g)?;
    state.check_shape(drift, "euler drift")?;
    state.check_shape(noise, "euler noise")?;
    let scale = g * dt.sqrt();
    let partial = state.zip_with(drift, |x, f| x + f * dt);
    let out = partial.zip_with(noise, |x, z| x + scale * z);
    if !out.is_finite() {
        return Err(Error::NonFinite { step: None });
    }
    Ok(out)
}

/// Heun predictor–corrector using an already evaluated first drift.
///
/// The same `noise` enters both the predictor and the corrected update.
pub fn heun_step_with(
    state: &SystemState,
    first_drift: &SystemState,
    field: &mut CountedDrift<'_>,
    g: f64,
    dt: f64,
    t: f64,
    noise: &SystemState,
) -> Result<SystemState> {
    let predictor = euler_step(state, first_drift, g, dt, noise)?;
    let second_drift = field.eval(&predictor, t + dt)?;
    let mean_drift = first_drift.zip_with(&second_drift, |a, b| 0.5 * (a + b));
    euler_step(state, &mean_drift, g, dt, noise)
}

/// Full Heun step; returns the corrected state and the first drift, which
/// the DVS controller reuses.
pub fn heun_step(
    state: &SystemState,
    field: &mut CountedDrift<'_>,
    g: f64,
    dt: f64,
    t: f64,
    noise: &SystemState,
) -> Result<(SystemState, SystemState)> {
    check_step(dt, g)?;
    let first = field.eval(state, t)?;
    let next = heun_step_with(state, &first, field, g, dt, t, noise)?;
    Ok((next, first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftField;
    use approx::assert_relative_eq;

    fn decay(s: &SystemState, _t: f64) -> Result<SystemState> {
        Ok(SystemState {
            node: s.node.iter().map(|v| -v).collect(),
            edge: s.edge.as_ref().map(|e| e.iter().map(|v| -v).collect()),
        })
    }

    fn one(v: f64) -> SystemState {
        SystemState::single(vec![v])
    }

    #[test]
    fn euler_drift_only() {
        let out = euler_step(&one(0.0), &one(1.0), 0.0, 0.1, &one(0.0)).unwrap();
        assert_relative_eq!(out.node[0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn euler_noise_scaling() {
        let s = SystemState::single(vec![1.0, 1.0]);
        let z = SystemState::single(vec![1.0, -1.0]);
        let out = euler_step(&s, &SystemState::zeros_like(&s), 1.0, 0.04, &z).unwrap();
        assert_relative_eq!(out.node[0], 1.2, epsilon = 1e-12);
        assert_relative_eq!(out.node[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn euler_updates_edge_part() {
        let s = SystemState::graph(vec![0.0], vec![1.0, 2.0]);
        let f = SystemState::graph(vec![1.0], vec![-1.0, 0.0]);
        let z = SystemState::zeros_like(&s);
        let out = euler_step(&s, &f, 1.0, 0.5, &z).unwrap();
        assert_eq!(out.edge.unwrap(), vec![0.5, 2.0]);
    }

    #[test]
    fn euler_decay_matches_exponential() {
        let mut x = one(2.0);
        let zero = one(0.0);
        for _ in 0..1000 {
            let f = decay(&x, 0.0).unwrap();
            x = euler_step(&x, &f, 0.0, 1e-3, &zero).unwrap();
        }
        let exact = 2.0 * (-1.0f64).exp();
        assert!((x.node[0] - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn euler_errors() {
        let s = one(0.0);
        assert!(matches!(
            euler_step(&s, &SystemState::single(vec![0.0, 1.0]), 1.0, 0.1, &s),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            euler_step(&one(f64::MAX), &one(f64::MAX), 0.0, 10.0, &s),
            Err(Error::NonFinite { step: None })
        ));
        assert!(euler_step(&s, &s, 1.0, 0.0, &s).is_err());
    }

    #[test]
    fn heun_hand_arithmetic() {
        let mut f = CountedDrift::new(&decay);
        let (next, first) = heun_step(&one(1.0), &mut f, 0.0, 0.1, 0.0, &one(0.0)).unwrap();
        assert_relative_eq!(first.node[0], -1.0);
        assert_relative_eq!(next.node[0], 0.905, epsilon = 1e-15);
        assert_eq!(f.eval_count(), 2);
    }

    #[test]
    fn heun_constant_drift_equals_euler() {
        let c = |s: &SystemState, _t: f64| -> Result<SystemState> {
            Ok(SystemState {
                node: vec![0.7; s.node.len()],
                edge: s.edge.as_ref().map(|e| vec![-0.2; e.len()]),
            })
        };
        let s = SystemState::graph(vec![1.0, 2.0], vec![0.5]);
        let z = SystemState::graph(vec![0.3, -0.1], vec![1.1]);
        let mut f = CountedDrift::new(&c);
        let (heun, _) = heun_step(&s, &mut f, 0.0, 0.05, 0.2, &z).unwrap();
        let euler = euler_step(&s, &c.eval(&s, 0.2).unwrap(), 0.0, 0.05, &z).unwrap();
        assert_eq!(heun, euler);
        assert_eq!(f.eval_count(), 4);
    }

    #[test]
    fn heun_reuses_single_noise_draw() {
        // constant drift: corrected update must use g·√dt·z exactly once
        let c = |s: &SystemState, _t: f64| -> Result<SystemState> { Ok(SystemState::zeros_like(s)) };
        let mut f = CountedDrift::new(&c);
        let (next, _) = heun_step(&one(0.0), &mut f, 2.0, 0.25, 0.0, &one(1.5)).unwrap();
        assert_relative_eq!(next.node[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn kernels_do_not_mutate_and_repeat() {
        let s = SystemState::graph(vec![0.4, -0.6], vec![1.0, 0.0, 0.0, 1.0]);
        let z = SystemState::graph(vec![0.1, 0.2], vec![0.3, -0.3, -0.3, 0.3]);
        let snapshot = (s.clone(), z.clone());
        let mut f = CountedDrift::new(&decay);
        let a = heun_step(&s, &mut f, 0.5, 0.01, 0.1, &z).unwrap();
        let b = heun_step(&s, &mut f, 0.5, 0.01, 0.1, &z).unwrap();
        assert_eq!(a, b);
        assert_eq!((s, z), snapshot);
    }

    fn global_error(solver: Solver, dt: f64) -> f64 {
        let n = (1.0 / dt).round() as usize;
        let mut x = one(1.0);
        let zero = one(0.0);
        let mut f = CountedDrift::new(&decay);
        for k in 0..n {
            let t = k as f64 * dt;
            x = match solver {
                Solver::Euler => {
                    let d = f.eval(&x, t).unwrap();
                    euler_step(&x, &d, 0.0, dt, &zero).unwrap()
                }
                Solver::Heun => heun_step(&x, &mut f, 0.0, dt, t, &zero).unwrap().0,
            };
        }
        (x.node[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn heun_error_halves_quadratically() {
        let e: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&dt| global_error(Solver::Heun, dt))
            .collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for s in [Solver::Euler, Solver::Heun] {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
        }
        assert!("rk4".parse::<Solver>().is_err());
    }
}
