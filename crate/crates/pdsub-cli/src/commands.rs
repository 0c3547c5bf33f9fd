//! The experiment subcommands: curve sweeps, stopping-time tables, the
//! conditioning/divergence table, the two-dimensional divergence profile, the
//! primal/dual pairing check, and fully custom config-driven runs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use pdsub::certificates::{
    self, combined_history, divergence_constants, divergence_constants_replicated,
    growth_phase_end, rate_lhs, rate_rhs, DivergenceConstants,
};
use pdsub::num::derive_seed;
use pdsub::problem::{gen_constrained, gen_l1_ls, gen_smooth_ls, toy_divergent, Instance, Regularizer};
use pdsub::schedule::Schedule;
use pdsub::solver::{run, Method, RuleKind, RunConfig, RunLog, ALL_RULES};

use crate::spec::{build_schedule, schedule_by_name, ExperimentSpec, ScheduleChoice};

/// Default problem side length; `--small` switches to 20 for quick runs.
pub fn side(small: bool) -> usize {
    if small {
        20
    } else {
        100
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn instance_block(inst: &Instance) -> Value {
    json!({
        "name": inst.name,
        "n": inst.n,
        "constraints": inst.m(),
        "mu": inst.mu(),
        "l0_sq": inst.constants.l0_sq,
        "l1": inst.constants.l1,
        "seed": inst.seed,
        "noise": inst.noise_sigma,
    })
}

fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn json_opt(v: Option<f64>) -> Value {
    v.map(json_f64).unwrap_or(Value::Null)
}

/// Run one schedule on an instance, sizing the suboptimality history so the
/// growth constants are computable, and return both.
fn run_with_constants(
    inst: &Instance,
    sched: &Schedule,
    mut cfg: RunConfig,
) -> Result<(RunLog, Option<DivergenceConstants>)> {
    let l1 = inst.constants.l1;
    let t0 = match l1 {
        Some(l1) => growth_phase_end(sched, l1)?,
        None => None,
    };
    if let Some(t0) = t0 {
        if t0 + 1 <= cfg.t_max {
            cfg.delta_history_cap = cfg.delta_history_cap.max(t0 + 1);
        }
    }
    let log = run(inst, sched, &cfg)?;
    let dc = l1.and_then(|l1| divergence_constants(sched, l1, &combined_history(&log)).ok());
    Ok((log, dc))
}

// ---------------------------------------------------------------------------
// fig1: bounds and observed aggregates for the weight families
// ---------------------------------------------------------------------------

pub struct Fig1Args {
    pub seed: u64,
    pub t_max: usize,
    pub small: bool,
    pub schedules: Vec<String>,
    pub out: PathBuf,
}

pub fn cmd_fig1(a: &Fig1Args) -> Result<()> {
    let n = side(a.small);
    let inst = gen_l1_ls(n, n, 0.0, a.seed)?;
    let mu = inst.mu();
    let l0_sq = inst.constants.l0_sq.expect("generated instance has l0_sq");
    let l1 = inst.constants.l1;

    struct Cell {
        name: String,
        lines: Vec<String>,
        bounds: Vec<(usize, f64)>,
        aggregates: Vec<(usize, Option<f64>)>,
        final_p: Option<f64>,
        violations: usize,
        t0: Option<usize>,
        log10_c0: Option<f64>,
    }

    let cells: Result<Vec<Cell>> = a
        .schedules
        .par_iter()
        .map(|name| {
            let sched = schedule_by_name(name, mu, l1)?;
            let cfg = RunConfig::new(Method::Primal, a.t_max);
            let (log, dc) = run_with_constants(&inst, &sched, cfg)?;
            let dc = dc.ok_or_else(|| anyhow!("growth constants unavailable for {name}"))?;
            let mut lines = Vec::new();
            let mut bounds = Vec::new();
            let mut aggregates = Vec::new();
            let mut violations = 0usize;
            let mut final_p = None;
            for row in log.rows.iter().filter(|r| r.t >= 1) {
                let agg = rate_lhs(row, mu);
                let bound = rate_rhs(row, l0_sq, dc.c0)
                    .map(|b| b.to_f64())
                    .unwrap_or(f64::INFINITY);
                if let Some(v) = agg {
                    if v > bound * (1.0 + 1e-9) {
                        violations += 1;
                    }
                }
                lines.push(format!(
                    "{},{},{},{},{},{},{}",
                    name,
                    row.t,
                    fmt_opt(agg),
                    fmt_opt(row.p),
                    fmt_opt(row.d),
                    fmt_opt(row.dist2_opt),
                    bound
                ));
                bounds.push((row.t, bound));
                aggregates.push((row.t, agg));
                final_p = row.p;
            }
            Ok(Cell {
                name: name.clone(),
                lines,
                bounds,
                aggregates,
                final_p,
                violations,
                t0: dc.t0,
                log10_c0: Some(dc.c0.log10_abs()),
            })
        })
        .collect();
    let cells = cells?;

    let mut csv = String::from("schedule,t,aggregate,primal_gap,dual_gap,dist2,bound_rhs\n");
    for c in &cells {
        for l in &c.lines {
            csv.push_str(l);
            csv.push('\n');
        }
    }
    write_text(&a.out.join("fig1_curves.csv"), &csv)?;

    // Qualitative checks: the rate-optimal weights should hold the smallest
    // guaranteed bound at every recorded iteration, every observed aggregate
    // should stay below its bound, and uniform weights should show the
    // slowest final primal gap.
    let optimized = cells.iter().find(|c| c.name == "optimized");
    let mut optimized_best_everywhere = optimized.is_some();
    let mut optimized_best_from_t3 = optimized.is_some();
    if let Some(opt) = optimized {
        for c in cells.iter().filter(|c| c.name != "optimized") {
            for ((t_o, b_o), (t_c, b_c)) in opt.bounds.iter().zip(c.bounds.iter()) {
                if t_o == t_c && *b_o > *b_c * (1.0 + 1e-9) {
                    optimized_best_everywhere = false;
                    if *t_o >= 3 {
                        optimized_best_from_t3 = false;
                    }
                }
            }
        }
    }
    let uniform_final = cells
        .iter()
        .find(|c| c.name == "uniform")
        .and_then(|c| c.final_p);
    let uniform_slowest = match uniform_final {
        Some(u) => cells
            .iter()
            .filter(|c| c.name != "uniform")
            .all(|c| c.final_p.map(|p| p <= u).unwrap_or(false)),
        None => false,
    };
    let all_within = cells.iter().all(|c| c.violations == 0);

    let summary = json!({
        "instance": instance_block(&inst),
        "t_max": a.t_max,
        "schedules": cells.iter().map(|c| json!({
            "name": c.name,
            "growth_end_t0": c.t0,
            "log10_c0": json_opt(c.log10_c0),
            "bound_violations": c.violations,
            "final_primal_gap": json_opt(c.final_p),
            "final_aggregate": json_opt(c.aggregates.last().and_then(|(_, v)| *v)),
            "final_bound": c.bounds.last().map(|(_, b)| json_f64(*b)).unwrap_or(Value::Null),
        })).collect::<Vec<_>>(),
        "checks": {
            "optimized_has_best_bound_everywhere": optimized_best_everywhere,
            "optimized_has_best_bound_from_t3": optimized_best_from_t3,
            "shared_prefix_note": "the optimized and uniform weights coincide for the first two steps, where the bound difference reduces to the growth constant alone; t >= 3 compares genuinely distinct schedules",
            "all_aggregates_within_bounds": all_within,
            "uniform_slowest_final_primal_gap": uniform_slowest,
        },
    });
    write_json(&a.out.join("fig1_summary.json"), &summary)
}

// ---------------------------------------------------------------------------
// table1: stopping times per criterion and weight family
// ---------------------------------------------------------------------------

pub struct Table1Args {
    pub seed: u64,
    pub t_max: usize,
    pub eps: f64,
    pub small: bool,
    pub schedules: Vec<String>,
    pub out: PathBuf,
}

/// Reference stopping counts for comparison, measured on a different draw of
/// the same family (m = n = 100, sigma = 0, eps = 0.05). Counts for a fresh
/// seed match in qualitative structure, not in value.
const REFERENCE_STOP_COUNTS: [(&str, [u64; 6]); 7] = [
    ("pbar", [1_204_821, 1_940, 997, 1_331, 1_664, 4_122]),
    ("pbar+d", [1_204_821, 2_000, 1_223, 1_630, 2_038, 4_156]),
    ("delta", [237_426, 443_222, 664_834, 886_445, 1_108_056, 533_876]),
    ("delta+d", [237_428, 443_223, 664_835, 886_446, 1_108_058, 533_876]),
    ("p", [4_713_468, 886_456, 997_251, 1_181_927, 1_385_070, 1_067_789]),
    ("p+d", [4_713_468, 886_456, 997_252, 1_181_928, 1_385_071, 1_067_790]),
    ("d", [263, 470, 705, 941, 1_176, 509]),
];
const REFERENCE_SCHEDULES: [&str; 6] = ["uniform", "linear", "poly2", "poly3", "poly4", "optimized"];

pub fn cmd_table1(a: &Table1Args) -> Result<()> {
    let n = side(a.small);
    let inst = gen_l1_ls(n, n, 0.0, a.seed)?;
    let mu = inst.mu();
    let l1 = inst.constants.l1;

    let hits: Result<Vec<_>> = a
        .schedules
        .par_iter()
        .map(|name| {
            let sched = schedule_by_name(name, mu, l1)?;
            let mut cfg = RunConfig::new(Method::Primal, a.t_max);
            cfg.track_eps = Some(a.eps);
            cfg.stop_when_all_hit = true;
            cfg.record_every = usize::MAX;
            let log = run(&inst, &sched, &cfg)?;
            Ok((name.clone(), log.first_hits, log.t_final))
        })
        .collect();
    let hits = hits?;

    // CSV grid: one row per criterion, one column per schedule.
    let mut csv = String::from("criterion");
    for (name, _, _) in &hits {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for rule in ALL_RULES {
        csv.push_str(certificates::rule_name(rule));
        for (_, fh, _) in &hits {
            csv.push(',');
            match fh.get(rule) {
                Some(t) => csv.push_str(&t.to_string()),
                None => csv.push_str("censored"),
            }
        }
        csv.push('\n');
    }
    write_text(&a.out.join("table1.csv"), &csv)?;

    // Ratio/offset checks between the composite criteria and their
    // reference-dependent counterparts, where both fired.
    let mut checks = Vec::new();
    for (name, fh, _) in &hits {
        let within = |a: Option<usize>, b: Option<usize>, extra: usize| match (a, b) {
            (Some(x), Some(y)) => Some(y <= x + extra),
            _ => None,
        };
        let pbar_ratio = match (fh.get(RuleKind::PBar), fh.get(RuleKind::PBarPlusD)) {
            (Some(x), Some(y)) if x > 0 => Some(y as f64 / x as f64),
            _ => None,
        };
        let d_vs_p = match (fh.get(RuleKind::D), fh.get(RuleKind::P)) {
            (Some(d), Some(p)) => Some(d.saturating_mul(100) <= p),
            _ => None,
        };
        checks.push(json!({
            "schedule": name,
            "delta_d_within_2": within(fh.get(RuleKind::Delta), fh.get(RuleKind::DeltaPlusD), 2),
            "p_d_within_2": within(fh.get(RuleKind::P), fh.get(RuleKind::PPlusD), 2),
            "pbar_d_over_pbar": pbar_ratio,
            "pbar_d_within_25_percent": if name == "uniform" { Value::Null } else {
                pbar_ratio.map(|r| r <= 1.25).map(Value::from).unwrap_or(Value::Null)
            },
            "d_fires_100x_before_p": if name == "linear" {
                d_vs_p.map(Value::from).unwrap_or(Value::Null)
            } else { Value::Null },
        }));
    }

    let summary = json!({
        "instance": instance_block(&inst),
        "eps": a.eps,
        "t_max": a.t_max,
        "stopping_times": hits.iter().map(|(name, fh, t_final)| json!({
            "schedule": name,
            "t_final": t_final,
            "hits": ALL_RULES.iter().map(|&r| json!({
                "criterion": certificates::rule_name(r),
                "t": fh.get(r),
                "censored": fh.get(r).is_none(),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "checks": checks,
        "reference_counts": {
            "note": "counts from a different random draw of the same family at m=n=100, sigma=0, eps=0.05; structure is comparable, values are draw-dependent",
            "schedules": REFERENCE_SCHEDULES,
            "criteria": REFERENCE_STOP_COUNTS.iter().map(|(crit, row)| json!({
                "criterion": crit,
                "counts": row,
            })).collect::<Vec<_>>(),
        },
    });
    write_json(&a.out.join("table1.json"), &summary)
}

// ---------------------------------------------------------------------------
// table2: conditioning, growth constants, and the capped-stepsize fix
// ---------------------------------------------------------------------------

pub struct Table2Args {
    pub seed: u64,
    pub t_max: usize,
    pub small: bool,
    pub sigmas: Vec<f64>,
    pub out: PathBuf,
}

/// Reference conditioning table for comparison (same family, different
/// draw): sigma, l1/mu, growth-phase end, growth constant.
const REFERENCE_CONDITIONING: [(f64, f64, u64, f64); 6] = [
    (0.0, 4.0, 6, 1.472e5),
    (1e-4, 4.022, 7, 1.497e5),
    (1e-3, 4.224, 7, 1.735e5),
    (1e-2, 6.911, 12, 6.985e5),
    (2e-2, 12.107, 23, 3.770e6),
    (5e-2, 81.179, 161, 2.663e23),
];

struct VariantSummary {
    t0: Option<usize>,
    log10_c0: Option<f64>,
    peak_delta: Option<f64>,
    peak_t: Option<usize>,
    peak_norm: f64,
    first_delta: Option<f64>,
    lines: Vec<String>,
}

fn table2_variant(
    inst: &Instance,
    sched: &Schedule,
    label: &str,
    sigma: f64,
    t_max: usize,
) -> Result<VariantSummary> {
    let cfg = RunConfig::new(Method::Primal, t_max);
    let (log, dc) = run_with_constants(inst, sched, cfg)?;
    let mut peak_delta: Option<f64> = None;
    let mut peak_t = None;
    let mut first_delta = None;
    let mut lines = Vec::new();
    for row in &log.rows {
        if let Some(d) = row.delta {
            if first_delta.is_none() {
                first_delta = Some(d);
            }
            if peak_delta.map(|p| d > p).unwrap_or(true) {
                peak_delta = Some(d);
                peak_t = Some(row.t);
            }
        }
        lines.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            sigma,
            label,
            row.t,
            fmt_opt(row.delta),
            fmt_opt(row.pbar),
            fmt_opt(row.p),
            fmt_opt(row.d),
            fmt_opt(row.dist2_opt),
            row.norm_x
        ));
    }
    Ok(VariantSummary {
        t0: dc.as_ref().and_then(|d| d.t0),
        log10_c0: dc.as_ref().map(|d| d.c0.log10_abs()),
        peak_delta,
        peak_t,
        peak_norm: log.max_norm_x,
        first_delta,
        lines,
    })
}

pub fn cmd_table2(a: &Table2Args) -> Result<()> {
    let n = side(a.small);

    struct SigmaCell {
        sigma: f64,
        l1_over_mu: f64,
        dist0: f64,
        uncapped: VariantSummary,
        capped: VariantSummary,
    }

    let cells: Result<Vec<SigmaCell>> = a
        .sigmas
        .par_iter()
        .map(|&sigma| {
            let inst = gen_l1_ls(n, n, sigma, a.seed)?;
            let mu = inst.mu();
            let l1 = inst.constants.l1.expect("generated instance has l1");
            let dist0 = inst
                .refs
                .x_opt
                .as_ref()
                .map(|x| {
                    x.iter()
                        .zip(inst.x0.iter())
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                })
                .unwrap_or(f64::NAN);
            let uncapped = table2_variant(
                &inst,
                &Schedule::linear(mu)?,
                "linear",
                sigma,
                a.t_max,
            )?;
            let capped = table2_variant(
                &inst,
                &Schedule::capped(mu, l1, false)?,
                "capped",
                sigma,
                a.t_max,
            )?;
            Ok(SigmaCell {
                sigma,
                l1_over_mu: l1 / mu,
                dist0,
                uncapped,
                capped,
            })
        })
        .collect();
    let cells = cells?;

    let mut csv =
        String::from("sigma,schedule,t,delta,pbar,p,d,dist2,norm_x\n");
    for c in &cells {
        for l in c.uncapped.lines.iter().chain(c.capped.lines.iter()) {
            csv.push_str(l);
            csv.push('\n');
        }
    }
    write_text(&a.out.join("table2_curves.csv"), &csv)?;

    // Monotone-trend checks across the sigma sweep (uncapped schedule).
    let t0s: Vec<Option<usize>> = cells.iter().map(|c| c.uncapped.t0).collect();
    let c0s: Vec<Option<f64>> = cells.iter().map(|c| c.uncapped.log10_c0).collect();
    let mono = |xs: &[Option<f64>]| -> bool {
        xs.windows(2).all(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => a <= b,
            _ => false,
        })
    };
    let t0_mono = t0s.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => a <= b,
        _ => false,
    });
    let variant_json = |v: &VariantSummary, dist0: f64| {
        let spike_ratio = match (v.peak_delta, v.first_delta) {
            (Some(p), Some(f)) if f > 0.0 => Some(p / f),
            _ => None,
        };
        json!({
            "growth_end_t0": v.t0,
            "log10_c0": json_opt(v.log10_c0),
            "peak_delta": json_opt(v.peak_delta),
            "peak_log10_delta": json_opt(v.peak_delta.map(|p| p.log10())),
            "peak_t": v.peak_t,
            "decreasing_before_t0": match (v.peak_t, v.t0) {
                (Some(p), Some(t0)) => json!(p <= t0),
                _ => Value::Null,
            },
            "peak_norm": json_f64(v.peak_norm),
            "peak_norm_over_dist0": json_f64(v.peak_norm / dist0),
            "spike_ratio": json_opt(spike_ratio),
            "no_divergence_spike": json_opt(spike_ratio).as_f64().map(|r| r < 1e6)
                .map(Value::from).unwrap_or(Value::Null),
        })
    };

    let summary = json!({
        "n": n,
        "seed": a.seed,
        "t_max": a.t_max,
        "rows": cells.iter().map(|c| json!({
            "sigma": c.sigma,
            "l1_over_mu": c.l1_over_mu,
            "dist0": json_f64(c.dist0),
            "uncapped": variant_json(&c.uncapped, c.dist0),
            "capped": variant_json(&c.capped, c.dist0),
        })).collect::<Vec<_>>(),
        "checks": {
            "t0_monotone_in_sigma": t0_mono,
            "log10_c0_monotone_in_sigma": mono(&c0s),
        },
        "reference_conditioning": {
            "note": "values from a different random draw of the same family at m=n=100; the growth-phase end there counts the last step of a non-strict threshold test, one above the strict convention used here at sigma=0",
            "rows": REFERENCE_CONDITIONING.iter().map(|(s, k, t0, c0)| json!({
                "sigma": s, "l1_over_mu": k, "t0": t0, "c0": c0,
            })).collect::<Vec<_>>(),
        },
    });
    write_json(&a.out.join("table2.json"), &summary)
}

// ---------------------------------------------------------------------------
// toy: the two-dimensional divergence profile
// ---------------------------------------------------------------------------

pub struct ToyArgs {
    pub t_max: usize,
    pub out: PathBuf,
}

pub fn cmd_toy(a: &ToyArgs) -> Result<()> {
    let inst = toy_divergent();
    let sched = Schedule::linear(inst.mu())?;
    let mut cfg = RunConfig::new(Method::Primal, a.t_max);
    cfg.record_every = 1;
    let (log, dc) = run_with_constants(&inst, &sched, cfg)?;

    let mut csv = String::from("t,f,delta,norm_x,alpha,lambda\n");
    for row in &log.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.t,
            row.f_x,
            fmt_opt(row.delta),
            row.norm_x,
            fmt_opt(row.alpha),
            fmt_opt(row.lambda)
        ));
    }
    write_text(&a.out.join("toy_trajectory.csv"), &csv)?;

    let norm_100 = log.rows.iter().find(|r| r.t == 100).map(|r| r.norm_x);
    let window_ok = norm_100
        .map(|v| v > 1e56 && v < 1e57)
        .unwrap_or(false);
    // Objective decrease after the norm peak, up to round-off.
    let peak_t = log.peak_norm_t;
    let mut monotone = true;
    let mut prev: Option<f64> = None;
    for row in log.rows.iter().filter(|r| r.t >= peak_t) {
        if let Some(p) = prev {
            if row.f_x > p * (1.0 + 1e-12) {
                monotone = false;
            }
        }
        prev = Some(row.f_x);
    }

    let summary = json!({
        "instance": instance_block(&inst),
        "t_max": a.t_max,
        "norm_at_100": json_opt(norm_100),
        "log10_norm_at_100": json_opt(norm_100.map(|v| v.log10())),
        "norm_at_100_in_(1e56,1e57)": window_ok,
        "peak_norm_t": peak_t,
        "objective_monotone_after_peak": monotone,
        "growth_end_t0": dc.as_ref().and_then(|d| d.t0),
        "log10_c0": json_opt(dc.as_ref().map(|d| d.c0.log10_abs())),
    });
    write_json(&a.out.join("toy_summary.json"), &summary)
}

// ---------------------------------------------------------------------------
// equivalence: the primal method against its model-minimizing form
// ---------------------------------------------------------------------------

pub struct EquivalenceArgs {
    pub seed: u64,
    pub t_max: usize,
    pub out: PathBuf,
}

pub fn cmd_equivalence(a: &EquivalenceArgs) -> Result<()> {
    let families: Vec<(&str, Instance)> = vec![
        ("l1_ls", gen_l1_ls(8, 6, 0.05, a.seed)?),
        (
            "smooth_ls_noisy",
            gen_smooth_ls(6, 0.2, a.seed + 1)?.with_noise(0.1),
        ),
        ("constrained", gen_constrained(3, 2, a.seed + 2)?),
        (
            "l1_ls_regularized",
            gen_l1_ls(5, 5, 0.0, a.seed + 3)?.with_regularizer(Regularizer::L1 { weight: 0.2 }),
        ),
    ];
    let schedule_names = ["uniform", "linear", "poly2", "poly3", "poly4"];
    let betas = [0.0, 1.0, 10.0];

    let mut jobs = Vec::new();
    for (fi, (fname, inst)) in families.iter().enumerate() {
        for sname in schedule_names {
            for &beta in &betas {
                jobs.push((fi, *fname, inst, sname, beta));
            }
        }
    }
    let rows: Result<Vec<Value>> = jobs
        .par_iter()
        .map(|(fi, fname, inst, sname, beta)| {
            let choice = ScheduleChoice {
                name: sname.to_string(),
                beta_bar: *beta,
            };
            let sched = build_schedule(&choice, inst.mu(), inst.constants.l1)?;
            let mut cfg = RunConfig::new(Method::Both, a.t_max);
            cfg.noise_seed = derive_seed(a.seed, 0xE9, *fi as u64);
            cfg.record_every = usize::MAX;
            let log = run(inst, &sched, &cfg)?;
            Ok(json!({
                "family": fname,
                "schedule": sname,
                "beta_bar": beta,
                "t_final": log.t_final,
                "max_deviation": json_f64(log.max_dev),
            }))
        })
        .collect();
    let rows = rows?;

    let overall = rows
        .iter()
        .filter_map(|r| r["max_deviation"].as_f64())
        .fold(0.0f64, f64::max);
    let summary = json!({
        "t_max": a.t_max,
        "rows": rows,
        "overall_max_deviation": json_f64(overall),
        "all_below_1e-9": overall <= 1e-9,
    });
    write_json(&a.out.join("equivalence.json"), &summary)
}

// ---------------------------------------------------------------------------
// run: a custom config-driven experiment
// ---------------------------------------------------------------------------

pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub spec: ExperimentSpec,
    pub dump_instance: Option<PathBuf>,
    pub load_instance: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let spec = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str::<ExperimentSpec>(&text)
                .with_context(|| format!("cannot parse config {}", path.display()))?
        }
        None => a.spec.clone(),
    };
    let inst = match &a.load_instance {
        Some(path) => crate::spec::load_instance(
            path.to_str()
                .ok_or_else(|| anyhow!("non-UTF8 instance path"))?,
        )?,
        None => spec.instance.build()?,
    };
    if let Some(path) = &a.dump_instance {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        crate::spec::dump_instance(
            &inst,
            path.to_str()
                .ok_or_else(|| anyhow!("non-UTF8 instance path"))?,
        )?;
        println!("wrote {}", path.display());
    }
    let mu = inst.mu();
    let l1 = inst.constants.l1;
    let l0_sq = inst.constants.l0_sq;

    let mut schedule_summaries = Vec::new();
    for choice in &spec.schedules {
        let sched = build_schedule(choice, mu, l1)?;
        let label = if choice.beta_bar != 0.0 {
            format!("{}_beta{}", choice.name, choice.beta_bar)
        } else {
            choice.name.clone()
        };

        // Replicate runs share everything except the noise stream; the first
        // replicate provides the logged trajectory.
        let replicates = spec.replicates.max(1);
        let mut logs: Vec<RunLog> = Vec::with_capacity(replicates);
        for r in 0..replicates {
            let mut cfg = RunConfig::new(Method::Primal, spec.t_max);
            cfg.noise_seed = derive_seed(spec.seed, 0xA0, r as u64);
            cfg.record_every = spec.record_every;
            cfg.track_eps = spec.eps;
            cfg.stop_when_all_hit = spec.stop_when_all_hit && spec.eps.is_some();
            if let Some(l1v) = l1 {
                if let Some(t0) = growth_phase_end(&sched, l1v)? {
                    if t0 + 1 <= spec.t_max {
                        cfg.delta_history_cap = t0 + 1;
                    }
                }
            }
            logs.push(run(&inst, &sched, &cfg)?);
        }
        let log = &logs[0];

        let dc = l1.and_then(|l1v| {
            divergence_constants(&sched, l1v, &combined_history(log)).ok()
        });
        let replicated = if replicates > 1 {
            l1.and_then(|l1v| {
                let opt: Vec<Vec<f64>> = logs.iter().map(|l| l.delta_opt_hist.clone()).collect();
                let mut sl: Vec<Vec<f64>> =
                    logs.iter().map(|l| l.delta_sl_hist.clone()).collect();
                if sl.iter().all(Vec::is_empty) {
                    sl.clear();
                }
                divergence_constants_replicated(&sched, l1v, &opt, &sl).ok()
            })
        } else {
            None
        };

        // Per-iteration certificate rows.
        let mut csv = certificates::csv_header(inst.m());
        csv.push('\n');
        for row in &log.rows {
            csv.push_str(&certificates::csv_row(
                row,
                &inst,
                l0_sq,
                dc.as_ref().map(|d| d.c0),
            ));
            csv.push('\n');
        }
        write_text(&a.out.join(format!("{}_{label}.csv", spec.experiment)), &csv)?;

        // Raw rows, one JSON record per logged iteration.
        let mut jsonl = String::new();
        for row in &log.rows {
            jsonl.push_str(&serde_json::to_string(row)?);
            jsonl.push('\n');
        }
        write_text(
            &a.out.join(format!("{}_{label}.jsonl", spec.experiment)),
            &jsonl,
        )?;

        let report = certificates::full_report(log, &inst, &sched)?;
        schedule_summaries.push(json!({
            "schedule": label,
            "t_final": log.t_final,
            "report": report,
            "first_hits": if spec.eps.is_some() { json!(&log.first_hits) } else { Value::Null },
            "diverged": &log.diverged,
            "replicated_growth": replicated.as_ref().map(|r| json!({
                "t0": r.constants.t0,
                "log10_c0": json_f64(r.constants.c0.log10_abs()),
                "log10_c0_stderr": json_f64(r.c0_stderr.log10_abs()),
                "replicates": r.replicates,
            })).unwrap_or(Value::Null),
        }));
    }

    let summary = json!({
        "spec": spec,
        "instance": instance_block(&inst),
        "schedules": schedule_summaries,
    });
    write_json(&a.out.join(format!("{}_summary.json", spec.experiment)), &summary)
}

/// Default schedule list for the sweep commands.
pub fn default_sweep_schedules() -> Vec<String> {
    ["uniform", "linear", "poly2", "poly3", "poly4", "optimized"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Default sigma list for the conditioning table.
pub fn default_sigmas() -> Vec<f64> {
    vec![0.0, 1e-4, 1e-3, 1e-2, 2e-2, 5e-2]
}
