use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dvs_core::geometry::fim_monte_carlo_oracle;
use dvs_core::harness::{self, write_atomic, RunConfig, PROBE_DT_GRID, PROBE_REPS};
use dvs_core::RandomStream;

#[derive(Parser)]
#[command(name = "dvs", version, about = "Adaptive-step reverse SDE sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every chain of a config and write the requested outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rerun a dvs config over a list of controller values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "gamma")]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Fit the log-log slope of drift/noise variation against dt.
    ProbeScaling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = PROBE_REPS)]
        reps: usize,
    },
    /// Compare a Monte-Carlo Fisher information with its closed form.
    VerifyFim {
        #[arg(long)]
        g: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = harness::run_experiment(&cfg)?;
            print!("{}", out.summary.table());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep { config, param, values } => {
            if param != "gamma" {
                bail!("only `gamma` can be swept, got `{param}`");
            }
            let cfg = RunConfig::load(&config)?;
            let rows = harness::gamma_sweep(&cfg, &values)?;
            println!("{:>8} {:>12} {:>12} {:>12} {:>14}", "gamma", "total_steps", "mean_steps", "total_nfe", "w2");
            for r in &rows {
                let m = &r.metrics;
                let w2 = m.terminal_error_w2.map_or("-".to_string(), |v| format!("{v:.6e}"));
                println!("{:>8.3} {:>12} {:>12.2} {:>12} {:>14}", r.gamma, m.total_steps, m.mean_steps, m.total_nfe, w2);
            }
            std::fs::create_dir_all(&cfg.output_dir)
                .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            let path = cfg.output_dir.join("gamma_sweep.csv");
            write_atomic(&path, harness::sweep_csv(&rows).as_bytes())?;
            println!("wrote {}", path.display());
        }
        Command::ProbeScaling { config, reps } => {
            let cfg = RunConfig::load(&config)?;
            let probe = harness::scaling_probe(&cfg, &PROBE_DT_GRID, reps)?;
            println!("{:>10} {:>16}", "dt", "mean_ratio");
            for p in &probe.points {
                println!("{:>10.1e} {:>16.6e}", p.dt, p.mean_ratio);
            }
            println!("slope {:.4} at t = {}", probe.slope, probe.t);
            std::fs::create_dir_all(&cfg.output_dir)
                .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            let path = cfg.output_dir.join("scaling_probe.csv");
            write_atomic(&path, harness::probe_csv(&probe).as_bytes())?;
            println!("wrote {}", path.display());
        }
        Command::VerifyFim { g, dt, dim, samples, seed } => {
            let est = fim_monte_carlo_oracle(g, dt, dim, samples, &RandomStream::new(seed, 0))?;
            let ff = dt / (g * g);
            let gg = 2.0 * dim as f64 / (g * g);
            println!("{:>6} {:>14} {:>14} {:>12} {:>8}", "entry", "estimate", "closed_form", "std_err", "z");
            for i in 0..=dim {
                for j in 0..=dim {
                    let exact = match (i == j, i == dim) {
                        (true, true) => gg,
                        (true, false) => ff,
                        _ => 0.0,
                    };
                    let (v, se) = (est.entry(i, j), est.entry_std_err(i, j));
                    println!("{:>6} {:>14.6e} {:>14.6e} {:>12.3e} {:>8.2}", format!("{i},{j}"), v, exact, se, (v - exact) / se);
                }
            }
        }
    }
    Ok(())
}
