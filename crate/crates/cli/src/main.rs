use std::path::PathBuf;
use std::process::ExitCode;

use angio_cli::commands::{self, Overrides, TheorySource};
use angio_cli::output::{resolve_out, ENV_OUT};
use angio_core::levy::VerifyOptions;
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "angio", version, about = "Angiogenesis tip ensembles, moment statistics and intermittency theory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; defaults are used for anything it leaves out
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of realizations
    #[arg(long)]
    realizations: Option<u64>,
    /// Comma-separated snapshot times, e.g. "16h,20h,24h"
    #[arg(long)]
    snapshots: Option<String>,
    /// Output directory [default: $ANGIO_OUT or ./angio-out]
    #[arg(long, env = ENV_OUT)]
    out: Option<PathBuf>,
    /// Worker threads [default: one per hardware thread]
    #[arg(long)]
    workers: Option<usize>,
    /// desk (100 realizations) or paper (400)
    #[arg(long)]
    preset: Option<String>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            seed: self.seed,
            realizations: self.realizations,
            snapshots: self.snapshots.clone(),
            preset: self.preset.clone(),
        }
    }

    fn has_config_flags(&self) -> bool {
        self.config.is_some()
            || self.seed.is_some()
            || self.realizations.is_some()
            || self.snapshots.is_some()
            || self.preset.is_some()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble and write one snapshot file per realization
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Discard a run with a different config in the output directory
        #[arg(long)]
        force: bool,
    },
    /// Traveling-frame moment profiles of a finished run
    Moments {
        #[command(flatten)]
        common: Common,
        /// Comma-separated orders [default: from the config]
        #[arg(long, value_delimiter = ',')]
        orders: Option<Vec<u32>>,
        /// Fail when <p^2> < <p>^2 in any cell
        #[arg(long)]
        jensen: bool,
    },
    /// Theoretical moments and structure functions
    Theory {
        #[command(flatten)]
        common: Common,
        /// fit, config or reference
        #[arg(long, default_value = "fit")]
        params: String,
    },
    /// Fit the soliton frames and the moment table
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo checks of the log-Poisson and geometric Lévy formulas
    VerifyLevy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = VerifyOptions::default().samples)]
        samples: usize,
        /// Negative control: check against a wrong β
        #[arg(long)]
        tamper: bool,
    },
    /// Simulated-vs-theory overlays of a fitted run
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, force } => {
            let cfg = commands::resolve_config(&common.overrides())?;
            let out = resolve_out(common.out.as_deref());
            let m = commands::simulate(&cfg, common.config.as_deref(), &out, common.workers, force)?;
            println!(
                "simulated {} realizations ({} new) in {:.1} s -> {}",
                m.realizations,
                m.computed_now,
                m.wall_time_s,
                out.display()
            );
        }
        Command::Moments { common, orders, jensen } => {
            let out = resolve_out(common.out.as_deref());
            let idx = commands::moments(&out, orders.as_deref(), common.snapshots.as_deref(), jensen)?;
            for t in &idx.times {
                println!(
                    "{} h: center {:.4}, mean alive {:.2}, {} files",
                    t.t_hours,
                    t.center,
                    t.mean_alive,
                    t.files.len()
                );
            }
        }
        Command::Theory { common, params } => {
            let out = resolve_out(common.out.as_deref());
            let cfg = if common.has_config_flags() {
                Some(commands::resolve_config(&common.overrides())?)
            } else {
                None
            };
            let h = commands::theory(&out, TheorySource::parse(&params)?, cfg.as_ref())?;
            println!(
                "S_inf = {:.4}, B = {:.4}, zeta_2 = {:.4}; {} files",
                h.s_inf,
                h.big_b,
                h.zeta2_formula,
                h.files.len()
            );
        }
        Command::Fit { common } => {
            let out = resolve_out(common.out.as_deref());
            let f = commands::fit(&out)?;
            print!("{}", f.table.to_csv());
        }
        Command::VerifyLevy { common, samples, tamper } => {
            let out = resolve_out(common.out.as_deref());
            let cfg = commands::resolve_config(&common.overrides())?;
            let opts = VerifyOptions {
                seed: cfg.run.seed,
                samples,
                tamper,
                ..VerifyOptions::default()
            };
            let r = commands::verify_levy_cmd(&out, &opts, &cfg.hash());
            match r {
                Ok(r) => {
                    for c in &r.checks {
                        println!("pass {}", c.name);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Command::Report { common } => {
            let out = resolve_out(common.out.as_deref());
            let files = commands::report(&out)?;
            println!("{} overlay files in {}", files.len(), out.join("report").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
