use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use semiquantum_cli::commands::{self, Outcome};
use semiquantum_cli::config::{ModelChoice, PlaneChoice, RunConfig};

#[derive(Parser)]
#[command(name = "semiquantum", version, about = "Mean-field and exact dynamics of the two-mode gauge model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelChoice>,
    /// Coupling constant.
    #[arg(long)]
    e: Option<f64>,
    /// Total energy (replaces any explicit initial state).
    #[arg(long)]
    energy: Option<f64>,
    /// Time step of this command's integrator.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon of this command.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory per model and write it out.
    Simulate(Common),
    /// Running maximal Lyapunov exponent.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        /// Also compute the two-trajectory estimate.
        #[arg(long)]
        twin_check: bool,
    },
    /// Poincaré section of an energy-shell family.
    Poincare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_plane)]
        plane: Option<PlaneChoice>,
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Regular/chaotic classification over a grid of (e, E).
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_ic: Option<usize>,
    },
    /// Large N and Hartree against the exact solution, with break times.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Growth of a small initial width offset.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        offset: Option<f64>,
    },
    /// Probability density of A from the exact solver.
    Density {
        #[command(flatten)]
        common: Common,
        /// Comma-separated output times.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        checkpoint: bool,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the default configuration as JSON.
    ShowDefaults,
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown model {s:?} (large_n, hartree, replica, exact, all)"))
}

fn parse_plane(s: &str) -> Result<PlaneChoice, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown plane {s:?} (A_pA, G_PiG, D_PiD)"))
}

#[derive(Clone, Copy)]
enum Target {
    Simulate,
    Lyapunov,
    Poincare,
    Scan,
    Compare,
    Sensitivity,
    Density,
}

fn build_config(c: &Common, target: Target) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = c.model {
        cfg.model = m;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Target::Scan = target {
        // A single value pins that axis of the scan.
        if let Some(e) = c.e {
            cfg.scan.e_values = vec![e];
        }
        if let Some(en) = c.energy {
            cfg.scan.energy_values = vec![en];
        }
        if let Some(dt) = c.dt {
            cfg.scan.dt = dt;
        }
        if let Some(t) = c.t_max {
            cfg.scan.t_max = t;
        }
        return Ok(cfg);
    }
    if let Some(e) = c.e {
        cfg.params.e = e;
    }
    if let Some(en) = c.energy {
        cfg.energy = Some(en);
        cfg.initial_state = None;
    }
    match target {
        Target::Poincare => {
            if let Some(dt) = c.dt {
                cfg.poincare.dt = dt;
            }
        }
        _ => {
            if let Some(dt) = c.dt {
                cfg.integrator.dt = dt;
            }
        }
    }
    if let Some(t) = c.t_max {
        let h = &mut cfg.horizons;
        match target {
            Target::Simulate => h.simulate = t,
            Target::Lyapunov => h.lyapunov = t,
            Target::Poincare => h.poincare = t,
            Target::Compare => h.compare = t,
            Target::Sensitivity => h.sensitivity = t,
            Target::Density => cfg.density.times = vec![0.0, t],
            Target::Scan => unreachable!(),
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Option<Outcome>> {
    let outcome = match cli.command {
        Command::Simulate(c) => commands::cmd_simulate(&build_config(&c, Target::Simulate)?)?,
        Command::Lyapunov { common, twin_check } => {
            let mut cfg = build_config(&common, Target::Lyapunov)?;
            cfg.lyapunov.twin_check |= twin_check;
            commands::cmd_lyapunov(&cfg)?
        }
        Command::Poincare { common, plane, n_traj } => {
            let mut cfg = build_config(&common, Target::Poincare)?;
            if let Some(p) = plane {
                cfg.poincare.plane = p;
            }
            if let Some(n) = n_traj {
                cfg.poincare.n_traj = n;
            }
            commands::cmd_poincare(&cfg)?
        }
        Command::Scan { common, n_ic } => {
            let mut cfg = build_config(&common, Target::Scan)?;
            if let Some(n) = n_ic {
                cfg.scan.n_ic = n;
            }
            commands::cmd_scan(&cfg)?
        }
        Command::Compare { common, threshold } => {
            let mut cfg = build_config(&common, Target::Compare)?;
            if let Some(t) = threshold {
                cfg.compare.threshold = t;
            }
            commands::cmd_compare(&cfg)?
        }
        Command::Sensitivity { common, offset } => {
            let mut cfg = build_config(&common, Target::Sensitivity)?;
            if let Some(o) = offset {
                cfg.sensitivity.offset = o;
            }
            commands::cmd_sensitivity(&cfg)?
        }
        Command::Density {
            common,
            times,
            checkpoint,
        } => {
            let mut cfg = build_config(&common, Target::Density)?;
            if common.model.is_none() && !cfg.model.includes_exact() {
                cfg.model = ModelChoice::Exact;
            }
            if let Some(t) = times {
                cfg.density.times = t;
            }
            cfg.density.checkpoint |= checkpoint;
            commands::cmd_density(&cfg)?
        }
        Command::Config {
            action: ConfigAction::ShowDefaults,
        } => {
            println!("{}", RunConfig::default().to_json());
            return Ok(None);
        }
    };
    Ok(Some(outcome))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.partial {
                eprintln!("warning: at least one run stopped early; outputs cover the shortened window");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
