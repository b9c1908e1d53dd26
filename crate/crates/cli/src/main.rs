use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod instance;

use commands::Figure;
use config::{ExperimentConfig, SigmaSpec, StoppingSpec};
use error::CliError;

/// Iterative regularization with a preconditioned primal-dual method:
/// instance generation, early-stopped solves, Lasso comparison and figure
/// reproduction.
///
/// A run is described by a JSON config (`--config`), a built-in preset
/// (`--preset`), or a preset with a config merged on top. Flags override
/// both. Exit codes: 0 ok, 2 configuration, 3 numerical, 4 parse.
/// ITERREG_THREADS caps the worker pool.
#[derive(Parser, Debug)]
#[command(name = "iterreg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated instance directory.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Overwrite an existing instance.
        #[arg(long)]
        force: bool,
    },
    /// Run the solver; writes metrics.csv and summary.json.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated primal-dual against a cross-validated Lasso path.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce a figure as one CSV per curve.
    Repro {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StoppingKind {
    MaxIters,
    FixedK,
    Holdout,
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig3, fig4, fig5, fig6, completion-200, certified, unfeasible-toy
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Run a single replicate with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// datadriven, symmetric, strict, or a number.
    #[arg(long)]
    sigma: Option<SigmaSpec>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    stopping: Option<StoppingKind>,
    #[arg(long)]
    iters: Option<usize>,
    /// C̃ of the fixed-k rule `k = ⌈C̃/δ⌉`.
    #[arg(long)]
    ctilde: Option<f64>,
    /// δ of the fixed-k rule (defaults to the instance noise level).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    holdout_rows: Option<usize>,
    #[arg(long)]
    averaging: Option<bool>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
}

impl Common {
    fn resolve(&self, default_preset: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let preset = self.preset.as_deref().or(if self.config.is_none() { default_preset } else { None });
        let mut cfg = config::load(self.config.as_deref(), preset)?;
        self.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = self.sigma {
            cfg.solver.sigma = s;
            if !matches!(s, SigmaSpec::Value(_)) {
                cfg.solver.tau = None;
            }
        }
        if let Some(t) = self.tau {
            cfg.solver.tau = Some(t);
        }
        if let Some(a) = self.averaging {
            cfg.solver.averaging = a;
        }
        if let Some(l) = self.log_every {
            cfg.solver.log_every = Some(l);
        }
        if let Some(f) = self.folds {
            cfg.compare.folds = f;
        }
        cfg.solver.stopping = self.stopping_rule(cfg.solver.stopping)?;
        Ok(())
    }

    fn stopping_rule(&self, current: StoppingSpec) -> Result<StoppingSpec, CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        let kind = self.stopping.unwrap_or(match current {
            StoppingSpec::MaxIters { .. } => StoppingKind::MaxIters,
            StoppingSpec::FixedK { .. } => StoppingKind::FixedK,
            StoppingSpec::Holdout { .. } => StoppingKind::Holdout,
        });
        if kind != StoppingKind::FixedK && (self.ctilde.is_some() || self.delta.is_some()) {
            return bad("--ctilde/--delta apply to fixed-k stopping only");
        }
        if kind != StoppingKind::Holdout && self.holdout_rows.is_some() {
            return bad("--holdout-rows applies to holdout stopping only");
        }
        let budget = match current {
            StoppingSpec::MaxIters { iters } => Some(iters),
            StoppingSpec::Holdout { max_iters, .. } => Some(max_iters),
            StoppingSpec::FixedK { .. } => None,
        };
        Ok(match kind {
            StoppingKind::MaxIters => StoppingSpec::MaxIters {
                iters: self.iters.or(budget).unwrap_or(1000),
            },
            StoppingKind::FixedK => {
                if self.iters.is_some() {
                    return bad("--iters does not apply to fixed-k stopping");
                }
                let (c0, d0) = match current {
                    StoppingSpec::FixedK { ctilde, delta } => (Some(ctilde), delta),
                    _ => (None, None),
                };
                match self.ctilde.or(c0) {
                    Some(ctilde) => StoppingSpec::FixedK { ctilde, delta: self.delta.or(d0) },
                    None => return bad("fixed-k stopping needs --ctilde"),
                }
            }
            StoppingKind::Holdout => {
                let r0 = match current {
                    StoppingSpec::Holdout { rows, .. } => Some(rows),
                    _ => None,
                };
                match self.holdout_rows.or(r0) {
                    Some(rows) => StoppingSpec::Holdout {
                        rows,
                        max_iters: self.iters.or(budget).unwrap_or(1000),
                    },
                    None => return bad("holdout stopping needs --holdout-rows"),
                }
            }
        })
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ITERREG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("ITERREG_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Gen { common, force } => commands::gen(&common.resolve(None)?, force),
        Command::Solve { common } => commands::solve(&common.resolve(None)?),
        Command::Compare { common } => commands::compare(&common.resolve(None)?),
        Command::Repro { figure, common } => commands::repro(&common.resolve(Some(figure.preset()))?, figure),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iterreg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
