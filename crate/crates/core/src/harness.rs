//! Experiment runner: configs, parallel chains, reports and file output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arc_length_profile, loglog_slope, scaling_ratio_probe, ScalingPoint};
use crate::integrator::Solver;
use crate::metrics::{empirical_moments, gaussian_w2, graph_summary_mmd, threshold_adjacency};
use crate::rng::{RandomStream, RNG_ID};
use crate::sampler::{line_elements, run_sampler, TrajectoryRecord};
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::state::SystemState;
use crate::toys::{toy, ToyProblem};

/// Outputs a run can write into its `output_dir`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Trajectory,
    Summary,
    ArcProfile,
    GammaSweep,
    ScalingProbe,
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::Trajectory, Emit::Summary]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub solver: Solver,
    pub schedule: ScheduleSpec,
    pub seed: u64,
    pub n_chains: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub output_dir: PathBuf,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
}

impl RunConfig {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        toy(&self.problem, self.horizon)?;
        self.schedule.validate(self.horizon)?;
        if self.emit.contains(&Emit::GammaSweep) && self.schedule.kind != ScheduleKind::Dvs {
            return Err(Error::Config("gamma_sweep needs a dvs schedule".into()));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ToyProblem> {
        toy(&self.problem, self.horizon)
    }

    fn emits(&self, e: Emit) -> bool {
        self.emit.contains(&e)
    }
}

/// One finished trajectory.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub chain: u64,
    pub final_state: SystemState,
    pub records: Vec<TrajectoryRecord>,
}

impl ChainRun {
    pub fn steps(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn nfe(&self) -> u64 {
        self.records.last().map_or(0, |r| r.nfe_cum)
    }

    /// CV of `ds2_drift` over steps `k ≥ 2`; 0 for trajectories too short
    /// to have one.
    pub fn arc_cv(&self) -> f64 {
        let le = line_elements(&self.records);
        arc_length_profile(&le).map_or(0.0, |p| p.cv)
    }
}

/// Worker threads for chain fan-out: `DVS_WORKERS`, else all cores.
pub fn worker_count() -> usize {
    std::env::var("DVS_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs chains `0..n_chains`, each on its own stream `(seed, chain)`.
/// Results come back in chain order; the lowest failing chain wins.
pub fn run_chains(
    problem: &ToyProblem,
    spec: &ScheduleSpec,
    solver: Solver,
    seed: u64,
    n_chains: u64,
) -> Result<Vec<ChainRun>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ChainRun>> = pool.install(|| {
        (0..n_chains)
            .into_par_iter()
            .map(|chain| {
                let mut stream = RandomStream::new(seed, chain);
                let (final_state, records) = run_sampler(problem, spec, solver, &mut stream)
                    .map_err(|e| Error::Chain { chain, source: Box::new(e) })?;
                Ok(ChainRun { chain, final_state, records })
            })
            .collect()
    });
    results.into_iter().collect()
}

/// Aggregate quality metrics over a set of chains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainMetrics {
    pub total_steps: u64,
    pub mean_steps: f64,
    pub min_steps: u64,
    pub max_steps: u64,
    pub total_nfe: u64,
    pub terminal_error_w2: Option<f64>,
    pub mmd_degree: Option<f64>,
    pub mmd_spectral: Option<f64>,
    pub mmd_bandwidth_degree: Option<f64>,
    pub mmd_bandwidth_spectral: Option<f64>,
    pub arc_cv: f64,
}

/// Reduces chains in chain order and checks the NFE identity.
pub fn chain_metrics(problem: &ToyProblem, solver: Solver, chains: &[ChainRun]) -> Result<ChainMetrics> {
    if chains.is_empty() {
        return Err(Error::Contract("no chains to summarize".into()));
    }
    let components = if problem.layout.graph_nodes.is_some() { 2 } else { 1 };
    let total_steps: u64 = chains.iter().map(ChainRun::steps).sum();
    let total_nfe: u64 = chains.iter().map(ChainRun::nfe).sum();
    for c in chains {
        let expect = c.steps() * solver.evals_per_step() * components;
        if c.nfe() != expect {
            return Err(Error::Contract(format!(
                "chain {}: counted {} drift evaluations, expected {expect}",
                c.chain,
                c.nfe()
            )));
        }
    }

    let terminal_error_w2 = match (&problem.terminal, chains.len() >= 2) {
        (Some(law), true) => {
            let nodes: Vec<Vec<f64>> = chains.iter().map(|c| c.final_state.node.clone()).collect();
            let (mean, var) = empirical_moments(&nodes)?;
            Some(gaussian_w2(&mean, &var, &law.mean, &law.var)?)
        }
        _ => None,
    };

    let graph = match &problem.edge_target {
        Some(target) => {
            let generated: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| threshold_adjacency(c.final_state.edge_slice()))
                .collect();
            Some(graph_summary_mmd(&generated, std::slice::from_ref(target), None)?)
        }
        None => None,
    };

    let arc_cv = chains.iter().map(ChainRun::arc_cv).sum::<f64>() / chains.len() as f64;
    Ok(ChainMetrics {
        total_steps,
        mean_steps: total_steps as f64 / chains.len() as f64,
        min_steps: chains.iter().map(ChainRun::steps).min().unwrap_or(0),
        max_steps: chains.iter().map(ChainRun::steps).max().unwrap_or(0),
        total_nfe,
        terminal_error_w2,
        mmd_degree: graph.map(|g| g.mmd_degree),
        mmd_spectral: graph.map(|g| g.mmd_spectral),
        mmd_bandwidth_degree: graph.map(|g| g.bandwidth_degree),
        mmd_bandwidth_spectral: graph.map(|g| g.bandwidth_spectral),
        arc_cv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub problem: String,
    pub solver: Solver,
    pub schedule: ScheduleKind,
    pub n_chains: u64,
    pub components: u64,
    pub evals_per_step: u64,
    #[serde(flatten)]
    pub metrics: ChainMetrics,
    pub wall_time_per_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling_slope: Option<f64>,
    pub rng: String,
    pub config: RunConfig,
}

impl SummaryReport {
    /// Human-readable two-column table.
    pub fn table(&self) -> String {
        let m = &self.metrics;
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        let rows = [
            ("problem", self.problem.clone()),
            ("solver", self.solver.name().to_string()),
            ("schedule", self.schedule.name().to_string()),
            ("chains", self.n_chains.to_string()),
            ("total_steps", m.total_steps.to_string()),
            ("mean_steps", format!("{:.2}", m.mean_steps)),
            ("steps min/max", format!("{}/{}", m.min_steps, m.max_steps)),
            ("total_nfe", m.total_nfe.to_string()),
            ("terminal_error_w2", opt(m.terminal_error_w2)),
            ("mmd_degree", opt(m.mmd_degree)),
            ("mmd_spectral", opt(m.mmd_spectral)),
            ("arc_cv", format!("{:.6}", m.arc_cv)),
            ("wall_time_per_step", format!("{:.3e} s", self.wall_time_per_step)),
            ("scaling_slope", opt(self.scaling_slope)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<20} {v}");
        }
        out
    }
}

/// One row of a gamma sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    #[serde(flatten)]
    pub metrics: ChainMetrics,
}

/// The aggregation factors swept by default.
pub const DEFAULT_GAMMAS: [f64; 6] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35];

/// Reruns a dvs config once per `gamma`, same seed and chains.
pub fn gamma_sweep(config: &RunConfig, gammas: &[f64]) -> Result<Vec<SweepRow>> {
    if config.schedule.kind != ScheduleKind::Dvs {
        return Err(Error::Config("gamma sweep needs a dvs schedule".into()));
    }
    let problem = config.build_problem()?;
    gammas
        .iter()
        .map(|&gamma| {
            let mut ctrl = config.schedule.controller_config();
            ctrl.gamma = gamma;
            let spec = ScheduleSpec::dvs(ctrl);
            spec.validate(config.horizon)?;
            let chains = run_chains(&problem, &spec, config.solver, config.seed, config.n_chains)?;
            Ok(SweepRow { gamma, metrics: chain_metrics(&problem, config.solver, &chains)? })
        })
        .collect()
}

pub const PROBE_DT_GRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
pub const PROBE_REPS: usize = 10_000;
/// Probe point as a fraction of the horizon.
pub const PROBE_TIME_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub t: f64,
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
}

/// Drift/noise scaling probe at `t = T/2` from chain 0's initial state.
pub fn scaling_probe(config: &RunConfig, dt_grid: &[f64], n_reps: usize) -> Result<ProbeResult> {
    let problem = config.build_problem()?;
    let mut stream = RandomStream::new(config.seed, 0);
    let state = problem.sample_initial(&mut stream);
    let t = PROBE_TIME_FRACTION * problem.horizon;
    let points = scaling_ratio_probe(
        problem.field.as_ref(),
        &problem.schedule,
        &state,
        t,
        dt_grid,
        n_reps,
        &mut stream,
        |s| problem.draw_noise(s),
    )?;
    let slope = loglog_slope(&points.iter().map(|p| (p.dt, p.mean_ratio)).collect::<Vec<_>>());
    Ok(ProbeResult { t, points, slope })
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: SummaryReport,
    pub chains: Vec<ChainRun>,
    pub sweep: Option<Vec<SweepRow>>,
    pub probe: Option<ProbeResult>,
    pub files: Vec<PathBuf>,
}

/// Runs every chain, computes the summary and writes the requested files.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let problem = config.build_problem()?;
    let started = Instant::now();
    let chains = run_chains(&problem, &config.schedule, config.solver, config.seed, config.n_chains)?;
    let wall = started.elapsed().as_secs_f64();
    let metrics = chain_metrics(&problem, config.solver, &chains)?;

    let sweep = if config.emits(Emit::GammaSweep) {
        Some(gamma_sweep(config, &DEFAULT_GAMMAS)?)
    } else {
        None
    };
    let probe = if config.emits(Emit::ScalingProbe) {
        Some(scaling_probe(config, &PROBE_DT_GRID, PROBE_REPS)?)
    } else {
        None
    };

    let summary = SummaryReport {
        problem: problem.name.clone(),
        solver: config.solver,
        schedule: config.schedule.kind,
        n_chains: config.n_chains,
        components: if problem.layout.graph_nodes.is_some() { 2 } else { 1 },
        evals_per_step: config.solver.evals_per_step(),
        wall_time_per_step: if metrics.total_steps > 0 { wall / metrics.total_steps as f64 } else { 0.0 },
        metrics,
        scaling_slope: probe.as_ref().map(|p| p.slope),
        rng: RNG_ID.to_string(),
        config: config.clone(),
    };

    let dir = &config.output_dir;
    let mut files = Vec::new();
    let needs_dir = !config.emit.is_empty();
    if needs_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if config.emits(Emit::Trajectory) {
        for c in &chains {
            let path = dir.join(format!("trajectory_{}.csv", c.chain));
            write_atomic(&path, trajectory_csv(&c.records).as_bytes())?;
            files.push(path);
        }
    }
    if config.emits(Emit::ArcProfile) {
        let path = dir.join("arc_profile.csv");
        write_atomic(&path, arc_profile_csv(&chains).as_bytes())?;
        files.push(path);
    }
    if let Some(rows) = &sweep {
        let path = dir.join("gamma_sweep.csv");
        write_atomic(&path, sweep_csv(rows).as_bytes())?;
        files.push(path);
    }
    if let Some(p) = &probe {
        let path = dir.join("scaling_probe.csv");
        write_atomic(&path, probe_csv(p).as_bytes())?;
        files.push(path);
    }
    if config.emits(Emit::Summary) {
        let path = dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&summary).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
    }

    Ok(ExperimentOutput { summary, chains, sweep, probe, files })
}

/// Writes through a sibling temp file and renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// 17 significant digits, so values round-trip exactly.
fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub const TRAJECTORY_HEADER: &str = "k,t,dt,v_x,v_a,vbar_x,vbar_a,ds2_drift,ds2_noise,nfe_cum,state_norm";

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 240);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_f(r.t),
            fmt_f(r.dt),
            fmt_f(r.v_x),
            fmt_f(r.v_a),
            fmt_f(r.vbar_x),
            fmt_f(r.vbar_a),
            fmt_f(r.ds2_drift),
            fmt_f(r.ds2_noise),
            r.nfe_cum,
            fmt_f(r.state_norm)
        );
    }
    out
}

/// Steps `k ≥ 2` of every chain with the running drift arc length.
pub fn arc_profile_csv(chains: &[ChainRun]) -> String {
    let mut out = String::from("chain,k,t,dt,ds2_drift,cumulative\n");
    for c in chains {
        let mut acc = 0.0;
        for r in c.records.iter().filter(|r| r.k >= 2) {
            acc += r.ds2_drift;
            let _ = writeln!(out, "{},{},{},{},{},{}", c.chain, r.k, fmt_f(r.t), fmt_f(r.dt), fmt_f(r.ds2_drift), fmt_f(acc));
        }
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("gamma,total_steps,mean_steps,total_nfe,terminal_error_w2,arc_cv\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f(r.gamma),
            m.total_steps,
            fmt_f(m.mean_steps),
            m.total_nfe,
            fmt_opt(m.terminal_error_w2),
            fmt_f(m.arc_cv)
        );
    }
    out
}

pub fn probe_csv(p: &ProbeResult) -> String {
    let mut out = String::from("dt,mean_ratio\n");
    for pt in &p.points {
        let _ = writeln!(out, "{},{}", fmt_f(pt.dt), fmt_f(pt.mean_ratio));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> RunConfig {
        RunConfig {
            problem: "coupled-graph".into(),
            solver: Solver::Euler,
            schedule: ScheduleSpec::fixed(50),
            seed: 9,
            n_chains: 3,
            horizon: 1.0,
            output_dir: dir.to_path_buf(),
            emit: default_emit(),
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let p = Path::new("x.json");
        let good = r#"{"problem":"bridge","solver":"heun","schedule":{"kind":"fixed","n_steps":10},
            "seed":1,"n_chains":2,"T":1.0,"output_dir":"out"}"#;
        let c = RunConfig::from_json_str(good, p).unwrap();
        assert_eq!(c.emit, default_emit());
        let typo = good.replace("\"seed\"", "\"sed\"");
        assert!(matches!(RunConfig::from_json_str(&typo, p), Err(Error::Json { .. })));
        let zero = good.replace("\"n_chains\":2", "\"n_chains\":0");
        assert!(RunConfig::from_json_str(&zero, p).is_err());
        let unknown = good.replace("\"bridge\"", "\"zinc\"");
        assert!(RunConfig::from_json_str(&unknown, p).is_err());
    }

    #[test]
    fn experiment_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg(dir.path())).unwrap();
        assert_eq!(out.files.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
        assert_eq!(text.lines().count(), 51);
        let m = &out.summary.metrics;
        assert_eq!(m.total_nfe, 3 * 50 * 2);
        assert!(m.mmd_degree.is_some() && m.terminal_error_w2.is_some());
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["rng"], RNG_ID);
        assert_eq!(json["total_steps"], 150);
        assert_eq!(json["config"]["T"], 1.0);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = run_experiment(&cfg(&blocker.join("sub"))).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
        assert!(err.to_string().contains("sub"));
    }

    #[test]
    fn chain_failure_reports_chain() {
        let mut c = cfg(Path::new("unused"));
        c.problem = "bridge".into();
        c.emit.clear();
        // the quadratic grid's last step starts inside the singular band
        c.schedule = ScheduleSpec::quadratic(2000);
        let err = run_experiment(&c).unwrap_err();
        assert!(matches!(err, Error::Chain { chain: 0, .. }), "{err}");
    }
}
