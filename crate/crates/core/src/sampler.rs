//! The reverse-time sampling loop.

use serde::Serialize;

use crate::control::{controller_step, drift_variation_score, ControllerState};
use crate::drift::CountedDrift;
use crate::error::{Error, Result};
use crate::geometry::{drift_line_element, noise_line_element, LineElementSample};
use crate::integrator::{euler_step, heun_step_with, Solver};
use crate::rng::RandomStream;
use crate::schedule::ScheduleSpec;
use crate::state::SystemState;
use crate::toys::ToyProblem;

/// Extra steps allowed past `ceil(T/dt_min)` before an adaptive run is
/// declared runaway.
pub const RUNAWAY_SLACK: u64 = 64;

/// One row of the per-step log. `t` is the start of the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub k: u64,
    pub t: f64,
    pub dt: f64,
    pub v_x: f64,
    pub v_a: f64,
    pub vbar_x: f64,
    pub vbar_a: f64,
    pub ds2_drift: f64,
    pub ds2_noise: f64,
    pub nfe_cum: u64,
    pub state_norm: f64,
}

impl TrajectoryRecord {
    pub fn line_element(&self) -> LineElementSample {
        LineElementSample {
            t: self.t,
            dt: self.dt,
            ds2_drift: self.ds2_drift,
            ds2_noise: self.ds2_noise,
        }
    }
}

/// Line elements of every step that has a predecessor drift (`k ≥ 2`).
pub fn line_elements(records: &[TrajectoryRecord]) -> Vec<LineElementSample> {
    records.iter().filter(|r| r.k >= 2).map(TrajectoryRecord::line_element).collect()
}

/// Integrates `problem` from `t = 0` to its horizon.
///
/// The initial state and every noise draw come from `stream`. For `dvs` the
/// drift evaluated at the start of each step feeds both the controller and
/// the update (the first Heun stage for `heun`).
pub fn run_sampler(
    problem: &ToyProblem,
    spec: &ScheduleSpec,
    solver: Solver,
    stream: &mut RandomStream,
) -> Result<(SystemState, Vec<TrajectoryRecord>)> {
    let cfg = spec.controller_config();
    let limit = (problem.horizon / cfg.dt_min).ceil() as u64 + RUNAWAY_SLACK;
    sample_with_limit(problem, spec, solver, stream, limit)
}

pub(crate) fn sample_with_limit(
    problem: &ToyProblem,
    spec: &ScheduleSpec,
    solver: Solver,
    stream: &mut RandomStream,
    adaptive_limit: u64,
) -> Result<(SystemState, Vec<TrajectoryRecord>)> {
    let horizon = problem.horizon;
    let grid = spec.grid(horizon)?;
    let cfg = spec.controller_config();
    let limit = match &grid {
        Some(g) => g.len() as u64 - 1,
        None => adaptive_limit,
    };

    let mut counted = CountedDrift::new(problem.field.as_ref());
    let mut state = problem.sample_initial(stream);
    let mut ctrl = ControllerState::new();
    let mut prev: Option<(SystemState, f64)> = None;
    let mut records = Vec::with_capacity(grid.as_ref().map_or(1024, |g| g.len()));
    let mut t = 0.0;
    let mut k: u64 = 1;

    loop {
        let more = match &grid {
            Some(g) => (k as usize) < g.len(),
            None => t < horizon - cfg.eps_bound,
        };
        if !more {
            break;
        }
        if k > limit {
            return Err(Error::RunawayLoop { limit, t });
        }

        let g = problem.schedule.g(t);
        let drift = counted.eval(&state, t).map_err(|e| e.at_step(k))?;

        let (dt, v_x, v_a, vbar_x, vbar_a) = match &grid {
            Some(times) => {
                let dt = times[k as usize] - times[k as usize - 1];
                let (v_x, v_a) = match &prev {
                    Some((f, _)) => (
                        drift_variation_score(&drift.node, &f.node, g, cfg.eps_num)?,
                        drift_variation_score(drift.edge_slice(), f.edge_slice(), g, cfg.eps_num)?,
                    ),
                    None => (0.0, 0.0),
                };
                (dt, v_x, v_a, 0.0, 0.0)
            }
            None => {
                let (dt, next, diag) = controller_step(ctrl, &cfg, &drift, g, t, horizon)?;
                ctrl = next;
                (dt, diag.v_x, diag.v_a, ctrl.vbar_x, ctrl.vbar_a)
            }
        };

        let (ds2_drift, ds2_noise) = match &prev {
            Some((f, g_prev)) if g > 0.0 => {
                let df: Vec<f64> = drift
                    .node
                    .iter()
                    .chain(drift.edge_slice())
                    .zip(f.node.iter().chain(f.edge_slice()))
                    .map(|(a, b)| a - b)
                    .collect();
                (drift_line_element(&df, g, dt), noise_line_element(g - g_prev, g, state.dim()))
            }
            _ => (0.0, 0.0),
        };

        let noise = problem.draw_noise(stream);
        let next = match solver {
            Solver::Euler => euler_step(&state, &drift, g, dt, &noise),
            Solver::Heun => heun_step_with(&state, &drift, &mut counted, g, dt, t, &noise),
        }
        .map_err(|e| e.at_step(k))?;

        records.push(TrajectoryRecord {
            k,
            t,
            dt,
            v_x,
            v_a,
            vbar_x,
            vbar_a,
            ds2_drift,
            ds2_noise,
            nfe_cum: counted.eval_count(),
            state_norm: next.norm(),
        });

        state = next;
        prev = Some((drift, g));
        t = match &grid {
            Some(times) => times[k as usize],
            None => t + dt,
        };
        k += 1;
    }
    Ok((state, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerConfig;
    use crate::toys::toy;

    #[test]
    fn fixed_run_covers_horizon() {
        let p = toy("bridge", 1.0).unwrap();
        let (end, rec) = run_sampler(&p, &ScheduleSpec::fixed(100), Solver::Euler, &mut RandomStream::new(1, 0)).unwrap();
        assert_eq!(rec.len(), 100);
        let total: f64 = rec.iter().map(|r| r.dt).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(rec.last().unwrap().nfe_cum, 100);
        // exact bridge lands on the target up to the last noise increment
        for (x, y) in end.node.iter().zip([1.0, -1.0, 0.5, 2.0]) {
            assert!((x - y).abs() < 0.5);
        }
    }

    #[test]
    fn dvs_run_records_are_consistent() {
        let p = toy("coupled-graph", 1.0).unwrap();
        let spec = ScheduleSpec::dvs(ControllerConfig::default());
        let (_, rec) = run_sampler(&p, &spec, Solver::Heun, &mut RandomStream::new(3, 2)).unwrap();
        let total: f64 = rec.iter().map(|r| r.dt).sum();
        assert!((total - 1.0).abs() <= 1e-6);
        for (i, w) in rec.windows(2).enumerate() {
            assert_eq!(w[0].k, i as u64 + 1);
            assert!(w[1].t > w[0].t);
            assert!(w[1].nfe_cum > w[0].nfe_cum);
        }
        assert_eq!(rec.last().unwrap().nfe_cum, rec.len() as u64 * 2 * 2);
        assert_eq!(rec[0].ds2_drift, 0.0);
    }

    #[test]
    fn runaway_guard_trips() {
        let p = toy("constant-drift", 1.0).unwrap();
        let spec = ScheduleSpec::dvs(ControllerConfig::default());
        let err = sample_with_limit(&p, &spec, Solver::Euler, &mut RandomStream::new(0, 0), 50);
        assert!(matches!(err, Err(Error::RunawayLoop { limit: 50, .. })), "{err:?}");
        assert!(run_sampler(&p, &spec, Solver::Euler, &mut RandomStream::new(0, 0)).is_ok());
    }
}
