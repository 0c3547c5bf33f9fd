//! Config-file experiment description: one JSON document pins the instance,
//! the schedules, the horizon, and the seeds, so a run is reproducible from a
//! single command.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use pdsub::problem::{gen_constrained, gen_l1_ls, gen_smooth_ls, toy_divergent, Instance, Regularizer};
use pdsub::schedule::Schedule;

/// Full description of a custom experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Free-form label; prefixes the output file names.
    #[serde(default = "default_label")]
    pub experiment: String,
    pub instance: InstanceSpec,
    pub schedules: Vec<ScheduleChoice>,
    /// Iteration horizon.
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    /// Stopping threshold to track (first-hit times for every criterion).
    #[serde(default)]
    pub eps: Option<f64>,
    /// Stop as soon as every tracked criterion has fired.
    #[serde(default)]
    pub stop_when_all_hit: bool,
    /// Independent replicate runs (fresh noise streams) for expectation
    /// estimates; only meaningful with a noisy oracle.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Master seed for derived noise streams.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Row recording cadence: 0 = every iteration below 10^4, every 100th
    /// beyond.
    #[serde(default)]
    pub record_every: usize,
}

fn default_label() -> String {
    "custom".into()
}
fn default_t_max() -> usize {
    10_000
}
fn default_replicates() -> usize {
    1
}
fn default_seed() -> u64 {
    1
}

/// Instance description (generated from a seed, or loaded from a dump).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    /// `||Ax-b||_1 + 1/2 ||Cx-d||^2` with `C = I + sigma*Ctilde`.
    L1Ls {
        m: usize,
        n: usize,
        #[serde(default)]
        sigma: f64,
        seed: u64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        regularizer: Option<RegularizerSpec>,
    },
    /// Pure least-squares variant (no l1 rows).
    SmoothLs {
        n: usize,
        #[serde(default)]
        sigma: f64,
        seed: u64,
        #[serde(default)]
        noise: f64,
    },
    /// Ball-constrained quadratic with brute-force optimality references.
    Constrained { n: usize, m: usize, seed: u64 },
    /// The two-dimensional diverging quadratic.
    Toy,
    /// Load a previously dumped instance verbatim.
    Load { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    L1 { weight: f64 },
    Ball { radius: f64 },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        match self {
            InstanceSpec::L1Ls {
                m,
                n,
                sigma,
                seed,
                noise,
                regularizer,
            } => {
                let mut inst = gen_l1_ls(*m, *n, *sigma, *seed)?;
                if let Some(reg) = regularizer {
                    inst = inst.with_regularizer(match reg {
                        RegularizerSpec::L1 { weight } => Regularizer::L1 { weight: *weight },
                        RegularizerSpec::Ball { radius } => Regularizer::Ball { radius: *radius },
                    });
                }
                Ok(inst.with_noise(*noise))
            }
            InstanceSpec::SmoothLs { n, sigma, seed, noise } => {
                Ok(gen_smooth_ls(*n, *sigma, *seed)?.with_noise(*noise))
            }
            InstanceSpec::Constrained { n, m, seed } => Ok(gen_constrained(*n, *m, *seed)?),
            InstanceSpec::Toy => Ok(toy_divergent()),
            InstanceSpec::Load { path } => load_instance(path),
        }
    }
}

pub fn load_instance(path: &str) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read instance dump {path}"))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse instance dump {path}"))
}

pub fn dump_instance(inst: &Instance, path: &str) -> Result<()> {
    let text = serde_json::to_string(inst)?;
    std::fs::write(path, text).with_context(|| format!("cannot write instance dump {path}"))?;
    Ok(())
}

/// A schedule picked by name, with an optional pairing offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleChoice {
    pub name: String,
    #[serde(default)]
    pub beta_bar: f64,
}

impl ScheduleChoice {
    pub fn plain(name: &str) -> Self {
        ScheduleChoice {
            name: name.into(),
            beta_bar: 0.0,
        }
    }
}

/// Every named schedule family the commands understand.
pub const SCHEDULE_NAMES: [&str; 9] = [
    "uniform",
    "linear",
    "poly2",
    "poly3",
    "poly4",
    "optimized",
    "smooth",
    "capped",
    "capped_strict",
];

/// Build a named schedule for an instance with modulus `mu` and (optional)
/// growth constant `l1`. `smooth`/`capped` variants need `l1`.
pub fn schedule_by_name(name: &str, mu: f64, l1: Option<f64>) -> Result<Schedule> {
    let need_l1 = || l1.ok_or_else(|| anyhow!("schedule '{name}' needs the growth constant l1"));
    let sched = match name {
        "uniform" => Schedule::uniform(mu)?,
        "linear" => Schedule::linear(mu)?,
        "poly2" => Schedule::poly(mu, 2)?,
        "poly3" => Schedule::poly(mu, 3)?,
        "poly4" => Schedule::poly(mu, 4)?,
        "optimized" => Schedule::optimized(mu)?,
        "smooth" => Schedule::smooth(mu, need_l1()?)?,
        // First stepsize left at 1/mu, cap from the second step on.
        "capped" => Schedule::capped(mu, need_l1()?, false)?,
        // Cap applied from the very first step (no growth phase at all).
        "capped_strict" => Schedule::capped(mu, need_l1()?, true)?,
        other => bail!("unknown schedule '{other}' (expected one of {SCHEDULE_NAMES:?})"),
    };
    Ok(sched)
}

pub fn build_schedule(choice: &ScheduleChoice, mu: f64, l1: Option<f64>) -> Result<Schedule> {
    let sched = schedule_by_name(&choice.name, mu, l1)?;
    if choice.beta_bar != 0.0 {
        Ok(sched.with_beta_bar(choice.beta_bar)?)
    } else {
        Ok(sched)
    }
}

/// Parse a comma-separated `--schedule` list.
pub fn parse_schedule_list(arg: &str) -> Result<Vec<String>> {
    let names: Vec<String> = arg
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        bail!("empty schedule list");
    }
    for n in &names {
        if !SCHEDULE_NAMES.contains(&n.as_str()) {
            bail!("unknown schedule '{n}' (expected one of {SCHEDULE_NAMES:?})");
        }
    }
    Ok(names)
}

/// Parse a comma-separated `--sigma` list.
pub fn parse_sigma_list(arg: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>> = arg
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| anyhow!("bad sigma value '{s}': {e}"))
                .and_then(|v| {
                    if v >= 0.0 && v.is_finite() {
                        Ok(v)
                    } else {
                        bail!("sigma must be finite and nonnegative, got {v}")
                    }
                })
        })
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        bail!("empty sigma list");
    }
    Ok(vals)
}
