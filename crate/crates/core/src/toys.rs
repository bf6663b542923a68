//! Analytic drift fields with known ground truth.
//!
//! Time runs from prior noise at `t = 0` to data at `t = T`. Every toy here
//! is linear in the state, so its terminal law is Gaussian whenever the
//! initial law is, and several expose that law in closed form.

use serde::Serialize;

use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::rng::RandomStream;
use crate::state::SystemState;

/// Brownian-bridge drift `(target − x) / (pin − t)`.
pub fn bridge_drift(state: &[f64], t: f64, target: &[f64], pin: f64, eps_bound: f64) -> Result<Vec<f64>> {
    if state.len() != target.len() {
        return Err(Error::Shape(format!(
            "bridge target has {} entries, state has {}",
            target.len(),
            state.len()
        )));
    }
    let remaining = pin - t;
    if remaining < eps_bound {
        return Err(Error::Singularity { t, pin });
    }
    Ok(state.iter().zip(target).map(|(x, y)| (y - x) / remaining).collect())
}

/// Marginal mean/variance of a variance-preserving process with `N(μ, v)` data.
#[derive(Debug, Clone, Copy)]
pub struct VpMarginal {
    pub beta0: f64,
    pub horizon: f64,
    pub data_var: f64,
}

impl VpMarginal {
    /// `e^{−β₀(T−t)/2}`, the factor applied to the data mean.
    pub fn mean_factor(&self, t: f64) -> f64 {
        (-0.5 * self.beta0 * (self.horizon - t)).exp()
    }

    pub fn variance(&self, t: f64) -> f64 {
        let decay = (-self.beta0 * (self.horizon - t)).exp();
        self.data_var * decay + (1.0 - decay)
    }
}

/// Exact reverse drift `½β₀·x + β₀·(m(t) − x)/s(t)` for Gaussian data.
pub fn vp_gaussian_drift(state: &[f64], t: f64, data_mean: &[f64], data_var: f64, beta0: f64, horizon: f64) -> Vec<f64> {
    let marginal = VpMarginal { beta0, horizon, data_var };
    let s = marginal.variance(t);
    assert!(s > 0.0, "VP marginal variance must stay positive (s = {s})");
    let mf = marginal.mean_factor(t);
    state
        .iter()
        .zip(data_mean)
        .map(|(x, mu)| 0.5 * beta0 * x + beta0 * (mu * mf - x) / s)
        .collect()
}

/// Parameters of the coupled node/edge toy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledGraphParams {
    pub node_target: Vec<f64>,
    pub edge_target: Vec<f64>,
    pub stiffness_x: f64,
    pub stiffness_a: f64,
    /// Late-time sharpening `1 + c/(T − t + δ)` on the edge part.
    pub sharpen_c: f64,
    pub sharpen_delta: f64,
    pub horizon: f64,
    /// Both bridges pin at `horizon + pin_offset`.
    pub pin_offset: f64,
    pub eps_bound: f64,
}

pub fn coupled_graph_drift(state: &SystemState, t: f64, p: &CoupledGraphParams) -> Result<SystemState> {
    let edge = state
        .edge
        .as_deref()
        .ok_or_else(|| Error::Shape("coupled graph drift needs an edge part".into()))?;
    let pin = p.horizon + p.pin_offset;
    let node: Vec<f64> = bridge_drift(&state.node, t, &p.node_target, pin, p.eps_bound)?
        .into_iter()
        .map(|v| p.stiffness_x * v)
        .collect();
    let sharpen = 1.0 + p.sharpen_c / (p.horizon - t + p.sharpen_delta);
    let edge: Vec<f64> = bridge_drift(edge, t, &p.edge_target, pin, p.eps_bound)?
        .into_iter()
        .map(|v| p.stiffness_a * sharpen * v)
        .collect();
    Ok(SystemState::graph(node, edge))
}

/// Single-component bridge scaled by `stiffness`.
#[derive(Debug, Clone)]
pub struct BridgeField {
    pub target: Vec<f64>,
    pub pin: f64,
    pub stiffness: f64,
    pub eps_bound: f64,
}

impl DriftField for BridgeField {
    fn eval(&self, state: &SystemState, t: f64) -> Result<SystemState> {
        let node = bridge_drift(&state.node, t, &self.target, self.pin, self.eps_bound)?;
        Ok(SystemState::single(node.into_iter().map(|v| self.stiffness * v).collect()))
    }
}

#[derive(Debug, Clone)]
pub struct VpGaussianField {
    pub data_mean: Vec<f64>,
    pub data_var: f64,
    pub beta0: f64,
    pub horizon: f64,
}

impl DriftField for VpGaussianField {
    fn eval(&self, state: &SystemState, t: f64) -> Result<SystemState> {
        if state.node.len() != self.data_mean.len() {
            return Err(Error::Shape("VP state and data mean differ in length".into()));
        }
        Ok(SystemState::single(vp_gaussian_drift(
            &state.node,
            t,
            &self.data_mean,
            self.data_var,
            self.beta0,
            self.horizon,
        )))
    }
}

#[derive(Debug, Clone)]
pub struct CoupledGraphField(pub CoupledGraphParams);

impl DriftField for CoupledGraphField {
    fn eval(&self, state: &SystemState, t: f64) -> Result<SystemState> {
        coupled_graph_drift(state, t, &self.0)
    }
}

/// `f(x) = −rate·x` on every component.
#[derive(Debug, Clone, Copy)]
pub struct LinearDecayField {
    pub rate: f64,
}

impl DriftField for LinearDecayField {
    fn eval(&self, state: &SystemState, _t: f64) -> Result<SystemState> {
        Ok(SystemState {
            node: state.node.iter().map(|x| -self.rate * x).collect(),
            edge: state.edge.as_ref().map(|e| e.iter().map(|x| -self.rate * x).collect()),
        })
    }
}

/// A drift that ignores both state and time.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub value: Vec<f64>,
}

impl DriftField for ConstantField {
    fn eval(&self, state: &SystemState, _t: f64) -> Result<SystemState> {
        if state.node.len() != self.value.len() {
            return Err(Error::Shape("constant drift length differs from state".into()));
        }
        Ok(SystemState::single(self.value.clone()))
    }
}

/// Shape of a toy's state: node dimension and, for graphs, the node count
/// of the flattened `n×n` edge part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub node_dim: usize,
    pub graph_nodes: Option<usize>,
}

/// Independent per-entry Gaussian law. Edge entries share one variance and
/// are symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitLaw {
    pub node_mean: Vec<f64>,
    pub node_var: f64,
    pub edge_mean: Option<Vec<f64>>,
    pub edge_var: f64,
}

/// Per-dimension Gaussian law of the node part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianLaw {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub struct ToyProblem {
    pub name: String,
    pub field: Box<dyn DriftField>,
    pub schedule: NoiseSchedule,
    pub horizon: f64,
    pub layout: Layout,
    pub init: InitLaw,
    /// Exact law of the node part at `t = T`, when known.
    pub terminal: Option<GaussianLaw>,
    /// Reference adjacency for graph metrics.
    pub edge_target: Option<Vec<f64>>,
}

impl std::fmt::Debug for ToyProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyProblem")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl ToyProblem {
    /// Standard normal noise shaped like the state. Edge noise is drawn for
    /// the strict upper triangle (row-major) and mirrored.
    pub fn draw_noise(&self, stream: &mut RandomStream) -> SystemState {
        let node = stream.gaussian(self.layout.node_dim);
        let edge = self.layout.graph_nodes.map(|n| symmetric_noise(n, stream));
        SystemState { node, edge }
    }

    pub fn sample_initial(&self, stream: &mut RandomStream) -> SystemState {
        let sd = self.init.node_var.sqrt();
        let node = stream
            .gaussian(self.layout.node_dim)
            .into_iter()
            .zip(&self.init.node_mean)
            .map(|(z, m)| m + sd * z)
            .collect();
        let edge = self.layout.graph_nodes.map(|n| {
            let sd = self.init.edge_var.sqrt();
            let z = symmetric_noise(n, stream);
            match &self.init.edge_mean {
                Some(mean) => z.iter().zip(mean).map(|(z, m)| m + sd * z).collect(),
                None => z.iter().map(|z| sd * z).collect(),
            }
        });
        SystemState { node, edge }
    }

    pub fn dim(&self) -> usize {
        self.layout.node_dim + self.layout.graph_nodes.map_or(0, |n| n * n)
    }
}

fn symmetric_noise(n: usize, stream: &mut RandomStream) -> Vec<f64> {
    let upper = stream.gaussian(n * (n - 1) / 2);
    let mut out = vec![0.0; n * n];
    let mut it = upper.into_iter();
    for i in 0..n {
        for j in (i + 1)..n {
            let z = it.next().unwrap_or(0.0);
            out[i * n + j] = z;
            out[j * n + i] = z;
        }
    }
    out
}

/// Terminal law at `T` of `dx = s·(y − x)/(P − t) dt + g dw` started from
/// `N(m0, v0)` at `t = 0`, with pin time `P = T + ε`, `ε > 0`.
pub fn soft_bridge_terminal(y: f64, m0: f64, v0: f64, stiffness: f64, g: f64, horizon: f64, pin: f64) -> (f64, f64) {
    let eps = pin - horizon;
    let phi = (eps / pin).powf(stiffness);
    let mean = y + phi * (m0 - y);
    let noise = if (2.0 * stiffness - 1.0).abs() < 1e-12 {
        eps * (pin / eps).ln()
    } else {
        eps.powf(2.0 * stiffness) * (eps.powf(1.0 - 2.0 * stiffness) - pin.powf(1.0 - 2.0 * stiffness))
            / (2.0 * stiffness - 1.0)
    };
    (mean, phi * phi * v0 + g * g * noise)
}

/// Names accepted by [`toy`].
pub const TOY_NAMES: [&str; 6] = ["bridge", "vp-gaussian", "vp-stiff", "coupled-graph", "linear-decay", "constant-drift"];

/// Boundary tolerance used by the registered bridge toys.
pub const TOY_EPS_BOUND: f64 = 1e-6;

/// Two triangles `{0,1,2}` and `{3,4,5}` joined by the edge `2–3`.
pub fn two_triangles() -> Vec<f64> {
    let n = 6;
    let mut a = vec![0.0; n * n];
    for (i, j) in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)] {
        a[i * n + j] = 1.0;
        a[j * n + i] = 1.0;
    }
    a
}

/// Registered toy problems.
///
/// * `bridge`: 4-d Brownian bridge pinned exactly at `T`, `g = 1`.
/// * `vp-gaussian`: 8-d VP reverse process, data `N(μ, 0.25)`, `β₀ = 2`.
/// * `vp-stiff`: 4-d VP reverse process with nearly degenerate data
///   (`v = 1e-3`), stiff close to `T`.
/// * `coupled-graph`: 6 node features plus a 6×6 adjacency, both bridged
///   to targets, with late sharpening on the edges.
/// * `linear-decay`: `f = −x` under a linear schedule `1 → 0.2`.
/// * `constant-drift`: `f ≡ (1, −0.5)`, `g = 1`.
pub fn toy(name: &str, horizon: f64) -> Result<ToyProblem> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let problem = match name {
        "bridge" => {
            let target = vec![1.0, -1.0, 0.5, 2.0];
            ToyProblem {
                name: name.into(),
                field: Box::new(BridgeField {
                    target: target.clone(),
                    pin: horizon,
                    stiffness: 1.0,
                    eps_bound: TOY_EPS_BOUND,
                }),
                schedule: NoiseSchedule::constant(1.0, horizon)?,
                horizon,
                layout: Layout { node_dim: 4, graph_nodes: None },
                init: InitLaw { node_mean: vec![0.0; 4], node_var: 1.0, edge_mean: None, edge_var: 0.0 },
                terminal: Some(GaussianLaw { var: vec![0.0; 4], mean: target }),
                edge_target: None,
            }
        }
        "vp-gaussian" => {
            let mean: Vec<f64> = (0..8).map(|i| 2.0 + 0.5 * i as f64).collect();
            vp_problem(name, mean, 0.25, 2.0, horizon)?
        }
        "vp-stiff" => vp_problem(name, vec![1.0, -1.0, 0.5, 2.0], 1e-3, 2.0, horizon)?,
        "coupled-graph" => coupled_graph_problem(horizon, CoupledGraphDefaults::default())?,
        "linear-decay" => ToyProblem {
            name: name.into(),
            field: Box::new(LinearDecayField { rate: 1.0 }),
            schedule: NoiseSchedule::linear(1.0, 0.2, horizon)?,
            horizon,
            layout: Layout { node_dim: 4, graph_nodes: None },
            init: InitLaw { node_mean: vec![1.0; 4], node_var: 0.0, edge_mean: None, edge_var: 0.0 },
            terminal: None,
            edge_target: None,
        },
        "constant-drift" => {
            let c = vec![1.0, -0.5];
            ToyProblem {
                name: name.into(),
                field: Box::new(ConstantField { value: c.clone() }),
                schedule: NoiseSchedule::constant(1.0, horizon)?,
                horizon,
                layout: Layout { node_dim: 2, graph_nodes: None },
                init: InitLaw { node_mean: vec![0.0; 2], node_var: 1.0, edge_mean: None, edge_var: 0.0 },
                terminal: Some(GaussianLaw {
                    mean: c.iter().map(|v| v * horizon).collect(),
                    var: vec![1.0 + horizon; 2],
                }),
                edge_target: None,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown problem `{other}` (known: {})",
                TOY_NAMES.join(", ")
            )))
        }
    };
    Ok(problem)
}

/// Builds a VP toy whose initial law is the exact `t = 0` marginal.
pub fn vp_problem(name: &str, data_mean: Vec<f64>, data_var: f64, beta0: f64, horizon: f64) -> Result<ToyProblem> {
    if !(data_var > 0.0 && beta0 > 0.0) {
        return Err(Error::Config("VP toy needs positive data variance and beta0".into()));
    }
    let d = data_mean.len();
    let marginal = VpMarginal { beta0, horizon, data_var };
    Ok(ToyProblem {
        name: name.into(),
        field: Box::new(VpGaussianField { data_mean: data_mean.clone(), data_var, beta0, horizon }),
        schedule: NoiseSchedule::constant(beta0.sqrt(), horizon)?,
        horizon,
        layout: Layout { node_dim: d, graph_nodes: None },
        init: InitLaw {
            node_mean: data_mean.iter().map(|m| m * marginal.mean_factor(0.0)).collect(),
            node_var: marginal.variance(0.0),
            edge_mean: None,
            edge_var: 0.0,
        },
        terminal: Some(GaussianLaw { mean: data_mean, var: vec![data_var; d] }),
        edge_target: None,
    })
}

/// Tunable knobs of the registered coupled-graph toy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledGraphDefaults {
    pub stiffness_x: f64,
    pub stiffness_a: f64,
    pub sharpen_c: f64,
    pub sharpen_delta: f64,
    pub pin_offset: f64,
    pub g: f64,
}

impl Default for CoupledGraphDefaults {
    fn default() -> Self {
        Self {
            stiffness_x: 1.0,
            stiffness_a: 1.0,
            sharpen_c: 0.5,
            sharpen_delta: 0.05,
            pin_offset: 0.02,
            g: 1.0,
        }
    }
}

pub fn coupled_graph_problem(horizon: f64, knobs: CoupledGraphDefaults) -> Result<ToyProblem> {
    if !(knobs.pin_offset > 0.0) {
        return Err(Error::Config("coupled graph toy needs a positive pin offset".into()));
    }
    let n = 6;
    let node_target = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
    let edge_target = two_triangles();
    let params = CoupledGraphParams {
        node_target: node_target.clone(),
        edge_target: edge_target.clone(),
        stiffness_x: knobs.stiffness_x,
        stiffness_a: knobs.stiffness_a,
        sharpen_c: knobs.sharpen_c,
        sharpen_delta: knobs.sharpen_delta,
        horizon,
        pin_offset: knobs.pin_offset,
        eps_bound: TOY_EPS_BOUND,
    };
    let pin = horizon + knobs.pin_offset;
    let (mean, var): (Vec<f64>, Vec<f64>) = node_target
        .iter()
        .map(|&y| soft_bridge_terminal(y, 0.0, 1.0, knobs.stiffness_x, knobs.g, horizon, pin))
        .unzip();
    Ok(ToyProblem {
        name: "coupled-graph".into(),
        field: Box::new(CoupledGraphField(params)),
        schedule: NoiseSchedule::constant(knobs.g, horizon)?,
        horizon,
        layout: Layout { node_dim: n, graph_nodes: Some(n) },
        init: InitLaw { node_mean: vec![0.0; n], node_var: 1.0, edge_mean: None, edge_var: 1.0 },
        terminal: Some(GaussianLaw { mean, var }),
        edge_target: Some(edge_target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{controller_step, ControllerConfig, ControllerState};
    use approx::assert_relative_eq;

    #[test]
    fn bridge_examples() {
        assert_eq!(bridge_drift(&[1.0, 2.0], 0.3, &[1.0, 2.0], 1.0, 1e-6).unwrap(), vec![0.0, 0.0]);
        assert_eq!(bridge_drift(&[0.0], 0.5, &[1.0], 1.0, 1e-6).unwrap(), vec![2.0]);
        assert!(matches!(
            bridge_drift(&[0.0], 1.0 - 1e-7, &[1.0], 1.0, 1e-6),
            Err(Error::Singularity { .. })
        ));
        assert!(bridge_drift(&[0.0, 1.0], 0.0, &[1.0], 1.0, 1e-6).is_err());
    }

    #[test]
    fn vp_drift_at_marginal_mean_is_half_beta_mean() {
        let (mu, v, b0, big_t) = ([1.5, -0.5], 0.3, 2.0, 1.0);
        let m = VpMarginal { beta0: b0, horizon: big_t, data_var: v };
        for t in [0.0, 0.4, 0.9, 1.0] {
            let state: Vec<f64> = mu.iter().map(|x| x * m.mean_factor(t)).collect();
            let f = vp_gaussian_drift(&state, t, &mu, v, b0, big_t);
            for (fi, si) in f.iter().zip(&state) {
                assert_relative_eq!(*fi, 0.5 * b0 * si, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn vp_score_matches_log_density_gradient() {
        let (mu, v, b0, big_t) = (0.7, 0.2, 2.0, 1.0);
        let m = VpMarginal { beta0: b0, horizon: big_t, data_var: v };
        let h = 1e-5;
        for &t in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let (mean, var) = (mu * m.mean_factor(t), m.variance(t));
            let log_p = |x: f64| -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
            for &x in &[-2.0, -0.3, 0.0, 0.9, 2.5] {
                let fd = (log_p(x + h) - log_p(x - h)) / (2.0 * h);
                let f = vp_gaussian_drift(&[x], t, &[mu], v, b0, big_t)[0];
                let score = (f - 0.5 * b0 * x) / b0;
                assert!((score - fd).abs() < 1e-6, "t={t} x={x}: {score} vs {fd}");
            }
        }
    }

    #[test]
    fn coupled_symmetric_states_give_equal_steps() {
        let target = vec![0.5, -0.5, 0.0, 1.0];
        let p = CoupledGraphParams {
            node_target: target.clone(),
            edge_target: target,
            stiffness_x: 1.3,
            stiffness_a: 1.3,
            sharpen_c: 0.0,
            sharpen_delta: 0.05,
            horizon: 1.0,
            pin_offset: 0.0,
            eps_bound: 1e-6,
        };
        let cfg = ControllerConfig::default();
        let mut ctrl = ControllerState::new();
        let mut t = 0.0;
        let mut rng = RandomStream::new(4, 0);
        for _ in 0..20 {
            let v = rng.gaussian(4);
            let s = SystemState::graph(v.clone(), v);
            let f = coupled_graph_drift(&s, t, &p).unwrap();
            let (dt, next, diag) = controller_step(ctrl, &cfg, &f, 1.0, t, 1.0).unwrap();
            assert!((diag.dt_x - diag.dt_a).abs() <= 1e-12 * diag.dt_x);
            ctrl = next;
            t += dt;
        }
    }

    #[test]
    fn coupled_requires_edge_part() {
        let prob = coupled_graph_problem(1.0, CoupledGraphDefaults::default()).unwrap();
        assert!(prob.field.eval(&SystemState::single(vec![0.0; 6]), 0.0).is_err());
    }

    #[test]
    fn symmetric_noise_and_init() {
        let prob = toy("coupled-graph", 1.0).unwrap();
        let mut rng = RandomStream::new(1, 1);
        for s in [prob.draw_noise(&mut rng), prob.sample_initial(&mut rng)] {
            let a = s.edge.unwrap();
            for i in 0..6 {
                assert_eq!(a[i * 6 + i], 0.0);
                for j in 0..6 {
                    assert_eq!(a[i * 6 + j], a[j * 6 + i]);
                }
            }
        }
    }

    #[test]
    fn soft_bridge_terminal_matches_s_equal_one_closed_form() {
        let (eps, big_t, g) = (0.02, 1.0, 1.0);
        let pin = big_t + eps;
        let (mean, var) = soft_bridge_terminal(1.0, 0.0, 1.0, 1.0, g, big_t, pin);
        let phi = eps / pin;
        assert_relative_eq!(mean, 1.0 - phi, epsilon = 1e-14);
        assert_relative_eq!(var, phi * phi + g * g * eps * (1.0 - eps / pin), epsilon = 1e-14);
        // s = 1/2 branch is the limit of the general formula
        let (_, v_half) = soft_bridge_terminal(0.0, 0.0, 0.0, 0.5, 1.0, big_t, pin);
        let (_, v_near) = soft_bridge_terminal(0.0, 0.0, 0.0, 0.5 + 1e-7, 1.0, big_t, pin);
        assert_relative_eq!(v_half, v_near, max_relative = 1e-5);
    }

    #[test]
    fn registry_builds_every_toy() {
        for name in TOY_NAMES {
            let p = toy(name, 1.0).unwrap();
            let mut rng = RandomStream::new(0, 0);
            let s = p.sample_initial(&mut rng);
            assert_eq!(s.dim(), p.dim());
            let f = p.field.eval(&s, 0.0).unwrap();
            assert!(f.same_shape(&s));
        }
        assert!(toy("qm9", 1.0).is_err());
    }

    #[test]
    fn two_triangles_degrees() {
        let a = two_triangles();
        let deg: Vec<f64> = (0..6).map(|i| a[i * 6..i * 6 + 6].iter().sum()).collect();
        assert_eq!(deg, vec![2.0, 2.0, 3.0, 3.0, 2.0, 2.0]);
    }
}
