//! Experiment driver for the `pdsub` library. Every subcommand writes CSV
//! curve data plus a JSON summary into the output directory; runs are
//! deterministic given the seed (set `RAYON_NUM_THREADS=1` to also pin the
//! thread count, though results do not depend on it).

mod commands;
mod spec;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{
    cmd_equivalence, cmd_fig1, cmd_run, cmd_table1, cmd_table2, cmd_toy, default_sigmas,
    default_sweep_schedules, side, EquivalenceArgs, Fig1Args, RunArgs, Table1Args, Table2Args,
    ToyArgs,
};
use spec::{
    parse_schedule_list, parse_sigma_list, ExperimentSpec, InstanceSpec, ScheduleChoice,
};

#[derive(Parser)]
#[command(
    name = "pdsub",
    about = "Subgradient-method experiments with primal-dual certificates",
    after_help = "Artifacts are deterministic for a fixed seed regardless of the \
thread count; set RAYON_NUM_THREADS to control parallelism.",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Master seed for instance generation and noise streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Shrink the problem to 20x20 for quick runs (default 100x100).
    #[arg(long)]
    small: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the weight families on one instance and record observed
    /// aggregates against their guaranteed bounds.
    Fig1 {
        #[command(flatten)]
        common: Common,
        /// Iteration horizon.
        #[arg(long, visible_alias = "T", default_value_t = 100_000)]
        t_max: usize,
        /// Comma-separated schedule names (subset of the sweep default).
        #[arg(long)]
        schedule: Option<String>,
    },
    /// Record first-hit stopping times for every gap criterion and weight
    /// family at a fixed threshold.
    Table1 {
        #[command(flatten)]
        common: Common,
        /// Iteration budget per schedule (cells still unmet are censored).
        #[arg(long, visible_alias = "T", default_value_t = 10_000_000)]
        t_max: usize,
        /// Stopping threshold.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Comma-separated schedule names.
        #[arg(long)]
        schedule: Option<String>,
    },
    /// Sweep the conditioning parameter sigma and compare the plain linear
    /// weights against the capped-stepsize variant.
    Table2 {
        #[command(flatten)]
        common: Common,
        /// Iteration horizon.
        #[arg(long, visible_alias = "T", default_value_t = 2_000)]
        t_max: usize,
        /// Comma-separated sigma values.
        #[arg(long)]
        sigma: Option<String>,
    },
    /// Trace the two-dimensional instance whose early iterates blow up
    /// before converging.
    Toy {
        /// Output directory for CSV/JSON artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Iteration horizon.
        #[arg(long, visible_alias = "T", default_value_t = 600)]
        t_max: usize,
    },
    /// Run the primal method and its model-minimizing form side by side and
    /// report the largest iterate deviation.
    Equivalence {
        /// Master seed for instance generation and noise streams.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for CSV/JSON artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Iteration horizon.
        #[arg(long, visible_alias = "T", default_value_t = 1_000)]
        t_max: usize,
    },
    /// Run a custom experiment described by a JSON config (or by flags).
    Run {
        #[command(flatten)]
        common: Common,
        /// JSON experiment config; flags below are ignored when set.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Iteration horizon (flag-built spec only).
        #[arg(long, visible_alias = "T", default_value_t = 10_000)]
        t_max: usize,
        /// Stopping threshold to track (flag-built spec only).
        #[arg(long)]
        eps: Option<f64>,
        /// Comma-separated schedule names (flag-built spec only).
        #[arg(long)]
        schedule: Option<String>,
        /// Gaussian subgradient noise level (flag-built spec only).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Independent replicate runs for noisy instances.
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Write the generated instance as JSON before running.
        #[arg(long)]
        dump_instance: Option<PathBuf>,
        /// Load an instance dump instead of generating one.
        #[arg(long)]
        load_instance: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Fig1 {
            common,
            t_max,
            schedule,
        } => cmd_fig1(&Fig1Args {
            seed: common.seed,
            t_max,
            small: common.small,
            schedules: match schedule {
                Some(s) => parse_schedule_list(&s)?,
                None => default_sweep_schedules(),
            },
            out: common.out,
        }),
        Cmd::Table1 {
            common,
            t_max,
            eps,
            schedule,
        } => cmd_table1(&Table1Args {
            seed: common.seed,
            t_max,
            eps,
            small: common.small,
            schedules: match schedule {
                Some(s) => parse_schedule_list(&s)?,
                None => default_sweep_schedules(),
            },
            out: common.out,
        }),
        Cmd::Table2 {
            common,
            t_max,
            sigma,
        } => cmd_table2(&Table2Args {
            seed: common.seed,
            t_max,
            small: common.small,
            sigmas: match sigma {
                Some(s) => parse_sigma_list(&s)?,
                None => default_sigmas(),
            },
            out: common.out,
        }),
        Cmd::Toy { out, t_max } => cmd_toy(&ToyArgs { t_max, out }),
        Cmd::Equivalence { seed, out, t_max } => {
            cmd_equivalence(&EquivalenceArgs { seed, t_max, out })
        }
        Cmd::Run {
            common,
            config,
            t_max,
            eps,
            schedule,
            noise,
            replicates,
            dump_instance,
            load_instance,
        } => {
            let n = side(common.small);
            let spec = ExperimentSpec {
                experiment: "custom".into(),
                instance: InstanceSpec::L1Ls {
                    m: n,
                    n,
                    sigma: 0.0,
                    seed: common.seed,
                    noise,
                    regularizer: None,
                },
                schedules: match schedule {
                    Some(s) => parse_schedule_list(&s)?,
                    None => vec!["linear".into()],
                }
                .iter()
                .map(|s| ScheduleChoice::plain(s))
                .collect(),
                t_max,
                eps,
                stop_when_all_hit: false,
                replicates,
                seed: common.seed,
                record_every: 0,
            };
            cmd_run(&RunArgs {
                config,
                spec,
                dump_instance,
                load_instance,
                out: common.out,
            })
        }
    }
}
