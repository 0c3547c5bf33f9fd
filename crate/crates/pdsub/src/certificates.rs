//! Optimality certificates computed from run logs: the aggregated-model dual
//! lower bound, primal upper bounds and the gap quantities between them,
//! stopping rules, Lagrange-multiplier recovery, the early-growth constants
//! of a schedule, and evaluators for the convergence, feasibility, and
//! trajectory-growth guarantees the method satisfies.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::num::LogNum;
use crate::problem::Instance;
use crate::schedule::Schedule;
use crate::solver::{Row, RuleKind, RunLog};
use crate::{Error, Result};

/// Everything certifiable about a run at its final logged iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub t: usize,
    /// `inf M / feasible weight`: certified lower bound on the optimal value.
    pub dual_lower_bound: Option<f64>,
    /// Weighted mean objective over feasible iterates (upper-bound surrogate).
    pub primal_avg_value: Option<f64>,
    /// Objective at the weighted average of feasible iterates.
    pub avg_iterate_value: Option<f64>,
    /// Objective at the latest iterate.
    pub last_iterate_value: f64,
    /// Weight-ratio multiplier estimates `u_s`.
    pub multipliers: Vec<f64>,
    /// Diagnostic residuals `u_s * f_s(xbar)`: complementary slackness.
    pub comp_slack: Vec<f64>,
    /// False until a feasible iterate has contributed weight; the primal/dual
    /// gap fields stay undefined until then.
    pub gaps_defined: bool,
    /// Gap of the weighted-mean objective against the reference optimum.
    pub p: Option<f64>,
    /// Gap of the averaged-iterate objective against the reference optimum.
    pub pbar: Option<f64>,
    /// Gap of the latest iterate against the reference optimum.
    pub delta: Option<f64>,
    /// Gap of the reference optimum above the dual lower bound.
    pub d: Option<f64>,
    /// `(mu/2) * ||x_T - x_opt||^2` when the minimizer is known.
    pub half_mu_dist2: Option<f64>,
    /// Fraction of dual weight landing on feasible iterations.
    pub feasible_fraction: Option<f64>,
    /// Early-growth constants of the schedule, when computable.
    pub growth: Option<DivergenceConstants>,
    /// Guaranteed value of the aggregate certificate gap at `t`.
    pub rate_bound: Option<f64>,
    /// Guaranteed lower bound on the feasible-weight fraction.
    pub feasible_bound: Option<FeasibleFractionBound>,
}

/// Gap quantities, multipliers, and slackness residuals at the end of a run.
pub fn gaps(log: &RunLog, inst: &Instance) -> Result<CertificateReport> {
    let row = log
        .rows
        .last()
        .ok_or(Error::Undefined("run log holds no recorded rows"))?;
    let gaps_defined = row.sum_lambda_feas > 0.0;
    let multipliers = if gaps_defined {
        row.constraint_weights
            .iter()
            .map(|w| w / row.sum_lambda_feas)
            .collect()
    } else {
        Vec::new()
    };
    let comp_slack = match (&log.xbar_final, gaps_defined) {
        (Some(xbar), true) => multipliers
            .iter()
            .enumerate()
            .map(|(i, u)| u * inst.constraint_value(i + 1, xbar))
            .collect(),
        _ => Vec::new(),
    };
    Ok(CertificateReport {
        t: row.t,
        dual_lower_bound: row.dual_bound,
        primal_avg_value: row.weighted_f,
        avg_iterate_value: row.f_xbar,
        last_iterate_value: row.f_x,
        multipliers,
        comp_slack,
        gaps_defined,
        p: row.p,
        pbar: row.pbar,
        delta: row.delta,
        d: row.d,
        half_mu_dist2: row.dist2_opt.map(|d2| 0.5 * inst.mu() * d2),
        feasible_fraction: (row.sum_lambda > 0.0).then(|| row.sum_lambda_feas / row.sum_lambda),
        growth: None,
        rate_bound: None,
        feasible_bound: None,
    })
}

/// [`gaps`] plus the guaranteed-bound fields, when the instance carries the
/// growth constants and the log holds enough reference-gap history.
pub fn full_report(log: &RunLog, inst: &Instance, schedule: &Schedule) -> Result<CertificateReport> {
    let mut rep = gaps(log, inst)?;
    if let Some(l1) = inst.constants.l1 {
        if let Ok(dc) = divergence_constants(schedule, l1, &combined_history(log)) {
            if let (Some(l0_sq), Some(row)) = (inst.constants.l0_sq, log.rows.last()) {
                rep.rate_bound = rate_rhs(row, l0_sq, dc.c0).map(|b| b.to_f64());
                rep.feasible_bound =
                    feasible_fraction_bound(row, inst, l0_sq, dc.c0.to_f64()).ok();
            }
            rep.growth = Some(dc);
        }
    }
    Ok(rep)
}

/// Weight-ratio multipliers `u_s = (weight on switching steps of constraint s)
/// / (feasible weight)` at the end of a run.
pub fn multipliers(log: &RunLog) -> Result<Vec<f64>> {
    if log.sum_lambda_feas <= 0.0 {
        return Err(Error::Undefined(
            "no feasible iterate has contributed weight yet",
        ));
    }
    Ok(log
        .constraint_weights
        .iter()
        .map(|w| w / log.sum_lambda_feas)
        .collect())
}

/// Diagnostic residuals `u_s * f_s(xbar)`; near zero once the multipliers and
/// the averaged iterate have both settled.
pub fn complementary_slackness(log: &RunLog, inst: &Instance) -> Result<Vec<f64>> {
    let u = multipliers(log)?;
    let xbar = log
        .xbar_final
        .as_ref()
        .ok_or(Error::Undefined("no averaged iterate available"))?;
    Ok(u.iter()
        .enumerate()
        .map(|(i, ui)| ui * inst.constraint_value(i + 1, xbar))
        .collect())
}

/// Parse a stopping-rule name. Accepted names: `pbar`, `delta`, `p`, `d`,
/// `pbar+d`, `delta+d`, `p+d`.
pub fn parse_rule(name: &str) -> Result<RuleKind> {
    match name {
        "pbar" => Ok(RuleKind::PBar),
        "delta" => Ok(RuleKind::Delta),
        "p" => Ok(RuleKind::P),
        "d" => Ok(RuleKind::D),
        "pbar+d" => Ok(RuleKind::PBarPlusD),
        "delta+d" => Ok(RuleKind::DeltaPlusD),
        "p+d" => Ok(RuleKind::PPlusD),
        other => Err(Error::InvalidCriterion(format!(
            "unknown stopping rule `{other}` (expected one of \
             pbar, delta, p, d, pbar+d, delta+d, p+d)"
        ))),
    }
}

/// Canonical name of a stopping rule (inverse of [`parse_rule`]).
pub fn rule_name(rule: RuleKind) -> &'static str {
    match rule {
        RuleKind::PBar => "pbar",
        RuleKind::Delta => "delta",
        RuleKind::P => "p",
        RuleKind::D => "d",
        RuleKind::PBarPlusD => "pbar+d",
        RuleKind::DeltaPlusD => "delta+d",
        RuleKind::PPlusD => "p+d",
    }
}

/// Value of a stopping quantity at a logged row. The composite rules subtract
/// the dual lower bound from an observed objective level, so they need no
/// reference optimal value; the plain rules read the row's reference gaps.
pub fn rule_value(row: &Row, rule: RuleKind) -> Option<f64> {
    let observable = |upper: Option<f64>| match (upper, row.dual_bound) {
        (Some(u), Some(b)) => Some(u - b),
        _ => None,
    };
    match rule {
        RuleKind::PBar => row.pbar,
        RuleKind::Delta => row.delta,
        RuleKind::P => row.p,
        RuleKind::D => row.d,
        RuleKind::PBarPlusD => observable(row.f_xbar),
        RuleKind::DeltaPlusD => observable(Some(row.f_x)),
        RuleKind::PPlusD => observable(row.weighted_f),
    }
}

/// Predicate form of a stopping rule: true once the rule's value at a row is
/// at or below `eps`. An infinite threshold is satisfied vacuously (even
/// before the quantity is defined); otherwise undefined values never fire.
pub fn stopping(rule: RuleKind, eps: f64) -> Result<impl Fn(&Row) -> bool> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidCriterion(format!(
            "stopping threshold must be positive, got {eps}"
        )));
    }
    Ok(move |row: &Row| {
        if eps == f64::INFINITY {
            return true;
        }
        matches!(rule_value(row, rule), Some(v) if v <= eps)
    })
}

/// First iteration at which a tracked run satisfied the rule. The run must
/// have been tracked at exactly this threshold.
pub fn stopping_time(log: &RunLog, rule: RuleKind, eps: f64) -> Result<Option<usize>> {
    match log.track_eps {
        Some(te) if te == eps => Ok(log.first_hits.get(rule)),
        Some(te) => Err(Error::InvalidCriterion(format!(
            "run tracked threshold {te}, not {eps}"
        ))),
        None => Err(Error::InvalidCriterion(
            "run did not track stopping thresholds".into(),
        )),
    }
}

/// Suboptimality of `x` measured against a reference point `y`: on feasible
/// steps (`s = 0`) the gap of the subgradient-corrected objective
/// `f0(x) + <n_y, x - y> - f0(y)`, on switching steps the raw constraint
/// difference `f_s(x) - f_s(y)`. A nonzero regularizer requires the
/// reference subgradient `n_y`.
pub fn delta_k(
    inst: &Instance,
    x: &Array1<f64>,
    y: &Array1<f64>,
    n_y: Option<&Array1<f64>>,
    s: usize,
) -> Result<f64> {
    if s > inst.m() {
        return Err(Error::InvalidInstance(format!(
            "constraint index {s} out of range (m = {})",
            inst.m()
        )));
    }
    if s == 0 {
        let linear = match n_y {
            Some(n) => n
                .iter()
                .zip(x.iter())
                .zip(y.iter())
                .map(|((ni, xi), yi)| ni * (xi - yi))
                .sum::<f64>(),
            None => {
                if !inst.regularizer.is_zero() {
                    return Err(Error::MissingReference(
                        "regularizer subgradient n_y at the reference point",
                    ));
                }
                0.0
            }
        };
        Ok(inst.f0(x) + linear - inst.f0(y))
    } else {
        Ok(inst.constraint_value(s, x) - inst.constraint_value(s, y))
    }
}

/// Early-growth constants of a (schedule, growth threshold) pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DivergenceConstants {
    /// Last index whose step exceeds the growth threshold (`l1 * alpha > 1`),
    /// `None` when no step ever does.
    pub t0: Option<usize>,
    /// Aggregated growth constant
    /// `sum_{k <= t0} lambda_k max(l1 alpha_k - 1, 0) delta_k`, kept in log
    /// space because divergent runs push it far beyond the double range.
    pub c0: LogNum,
}

/// Consecutive compliant steps needed before the scan concludes the growth
/// phase is over, and the overall scan budget. Step sizes of every canned
/// family are non-increasing past the opening step, so a full window of
/// compliant steps is conclusive; schedules that never settle within the
/// budget are reported as an error.
const SETTLE_WINDOW: usize = 4096;
const SCAN_HORIZON: usize = 1 << 21;

/// Last index at which `l1 * alpha_k > 1` (strictly), or `None` if no step
/// exceeds the threshold. Finite explicit schedules are scanned exactly.
pub fn growth_phase_end(schedule: &Schedule, l1: f64) -> Result<Option<usize>> {
    if !(l1 > 0.0) || !l1.is_finite() {
        return Err(Error::InvalidCriterion(format!(
            "growth threshold needs finite l1 > 0, got {l1}"
        )));
    }
    let mut cursor = schedule.cursor();
    let mut last: Option<usize> = None;
    let mut settled = 0usize;
    for k in 0..SCAN_HORIZON {
        let step = match cursor.next_step() {
            Ok(s) => s,
            // A finite schedule ends here; the supremum over its steps is
            // exact, no settling heuristic needed.
            Err(_) => return Ok(last),
        };
        if l1 * step.alpha > 1.0 {
            last = Some(k);
            settled = 0;
        } else {
            settled += 1;
            if settled >= SETTLE_WINDOW {
                return Ok(last);
            }
        }
    }
    Err(Error::UnsettledSchedule(SCAN_HORIZON))
}

/// Growth constants for a schedule against per-iteration reference gaps
/// `delta_history[k] = max(E delta_k(x_opt), E delta_k(x_sl))`. The history
/// must cover the whole growth phase; extra entries are ignored.
pub fn divergence_constants(
    schedule: &Schedule,
    l1: f64,
    delta_history: &[f64],
) -> Result<DivergenceConstants> {
    let t0 = growth_phase_end(schedule, l1)?;
    let Some(t0) = t0 else {
        return Ok(DivergenceConstants {
            t0: None,
            c0: LogNum::ZERO,
        });
    };
    if delta_history.len() <= t0 {
        return Err(Error::InsufficientHistory {
            needed: t0 + 1,
            have: delta_history.len(),
        });
    }
    let mut c0 = LogNum::ZERO;
    let mut cursor = schedule.cursor();
    for delta in delta_history.iter().take(t0 + 1) {
        let step = cursor.next_step()?;
        let w = l1 * step.alpha - 1.0;
        if w > 0.0 {
            let term =
                LogNum::from_f64(*delta).mul(LogNum::from_sign_ln(1, step.ln_lambda + w.ln()));
            c0 = c0.add(term);
        }
    }
    Ok(DivergenceConstants { t0: Some(t0), c0 })
}

/// Per-iteration `max` of the reference-gap histories a run recorded.
pub fn combined_history(log: &RunLog) -> Vec<f64> {
    if log.delta_sl_hist.is_empty() {
        return log.delta_opt_hist.clone();
    }
    if log.delta_opt_hist.is_empty() {
        return log.delta_sl_hist.clone();
    }
    log.delta_opt_hist
        .iter()
        .zip(log.delta_sl_hist.iter())
        .map(|(a, b)| a.max(*b))
        .collect()
}

/// Growth constants estimated from stochastic replicates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReplicatedConstants {
    /// Constants from the replicate-mean gap histories (the per-iteration
    /// expectations enter before the max over references).
    pub constants: DivergenceConstants,
    /// Standard error across the per-replicate constants: a scale indicator
    /// for the estimate, not a formal confidence interval.
    pub c0_stderr: LogNum,
    pub replicates: usize,
}

/// Replicate-mean growth constants with a reported standard error. Histories
/// are truncated to the shortest replicate; `sl_histories` may be empty when
/// the instance has no strictly feasible reference.
pub fn divergence_constants_replicated(
    schedule: &Schedule,
    l1: f64,
    opt_histories: &[Vec<f64>],
    sl_histories: &[Vec<f64>],
) -> Result<ReplicatedConstants> {
    let r = opt_histories.len();
    if r == 0 {
        return Err(Error::InvalidCriterion(
            "at least one replicate history is required".into(),
        ));
    }
    if !sl_histories.is_empty() && sl_histories.len() != r {
        return Err(Error::InvalidCriterion(format!(
            "reference histories must pair up across replicates ({} vs {r})",
            sl_histories.len()
        )));
    }
    let mut len = opt_histories.iter().map(Vec::len).min().unwrap_or(0);
    if !sl_histories.is_empty() {
        len = len.min(sl_histories.iter().map(Vec::len).min().unwrap_or(0));
    }
    let mut combined = Vec::with_capacity(len);
    for k in 0..len {
        let mean_opt = opt_histories.iter().map(|h| h[k]).sum::<f64>() / r as f64;
        combined.push(if sl_histories.is_empty() {
            mean_opt
        } else {
            let mean_sl = sl_histories.iter().map(|h| h[k]).sum::<f64>() / r as f64;
            mean_opt.max(mean_sl)
        });
    }
    let constants = divergence_constants(schedule, l1, &combined)?;
    let mut per_rep = Vec::with_capacity(r);
    for i in 0..r {
        let hist: Vec<f64> = (0..len)
            .map(|k| {
                if sl_histories.is_empty() {
                    opt_histories[i][k]
                } else {
                    opt_histories[i][k].max(sl_histories[i][k])
                }
            })
            .collect();
        per_rep.push(divergence_constants(schedule, l1, &hist)?.c0);
    }
    Ok(ReplicatedConstants {
        constants,
        c0_stderr: log_space_stderr(&per_rep),
        replicates: r,
    })
}

/// Standard error of the mean of sign-tracked log-space values, computed in a
/// shifted linear space so magnitudes beyond the double range survive.
fn log_space_stderr(values: &[LogNum]) -> LogNum {
    let r = values.len();
    if r < 2 {
        return LogNum::ZERO;
    }
    let shift = values
        .iter()
        .map(LogNum::ln_abs)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return LogNum::ZERO;
    }
    let scaled: Vec<f64> = values
        .iter()
        .map(|v| v.sign() as f64 * (v.ln_abs() - shift).exp())
        .collect();
    let mean = scaled.iter().sum::<f64>() / r as f64;
    let var = scaled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r as f64 - 1.0);
    let se = (var / r as f64).sqrt();
    if se > 0.0 {
        LogNum::from_sign_ln(1, se.ln() + shift)
    } else {
        LogNum::ZERO
    }
}

/// Measured left side of the aggregate convergence guarantee at a logged row:
/// feasible-weight fraction times `(p + d)` plus `(mu/2)` times the squared
/// distance to the reference minimizer.
pub fn rate_lhs(row: &Row, mu: f64) -> Option<f64> {
    let (p, d, dist2) = (row.p?, row.d?, row.dist2_opt?);
    if row.sum_lambda <= 0.0 {
        return None;
    }
    Some(row.sum_lambda_feas / row.sum_lambda * (p + d) + 0.5 * mu * dist2)
}

/// Guaranteed right side `(l0_sq * sum(lambda alpha) + c0) / sum(lambda)` at
/// a logged row, in log space (the growth constant can exceed the double
/// range).
pub fn rate_rhs(row: &Row, l0_sq: f64, c0: LogNum) -> Option<LogNum> {
    if row.sum_lambda <= 0.0 {
        return None;
    }
    let num = LogNum::from_f64(l0_sq * row.sum_lambda_alpha).add(c0);
    Some(num.mul(LogNum::from_sign_ln(1, -row.ln_sum_lambda)))
}

/// Lower bound on the fraction of dual weight on feasible iterations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeasibleFractionBound {
    pub value: f64,
    /// True when the bound is nonpositive and carries no information yet.
    pub vacuous: bool,
}

/// Feasible-weight fraction guaranteed by the margin of the strictly
/// feasible reference: `tau/(2 gap + tau) * (1 - (l0_sq sum(lambda alpha) +
/// c0)/(tau sum(lambda)))` with `gap` the reference's objective excess over
/// the unconstrained infimum. Assumes the reference carries no regularizer
/// subgradient (the default for generated instances).
pub fn feasible_fraction_bound(
    row: &Row,
    inst: &Instance,
    l0_sq: f64,
    c0: f64,
) -> Result<FeasibleFractionBound> {
    let tau = inst
        .refs
        .tau_sl
        .ok_or(Error::MissingReference("tau_sl (strict feasibility margin)"))?;
    if !(tau > 0.0) {
        return Err(Error::InvalidInstance(format!(
            "strict feasibility margin must be positive, got {tau}"
        )));
    }
    let x_sl = inst
        .refs
        .x_sl
        .as_ref()
        .ok_or(Error::MissingReference("x_sl (strictly feasible reference)"))?;
    if let Some(n) = &inst.refs.n_x_sl {
        if n.iter().any(|&v| v != 0.0) {
            return Err(Error::MissingReference(
                "closed-form model infimum for a nonzero reference subgradient",
            ));
        }
    }
    let inf0 = inst
        .objective
        .global_inf()
        .ok_or(Error::MissingReference("unconstrained objective infimum"))?;
    let gap = inst.f0(x_sl) - inf0;
    let lead = tau / (2.0 * gap + tau);
    if row.sum_lambda <= 0.0 {
        return Ok(FeasibleFractionBound {
            value: f64::NEG_INFINITY,
            vacuous: true,
        });
    }
    let value = lead * (1.0 - (l0_sq * row.sum_lambda_alpha + c0) / (tau * row.sum_lambda));
    Ok(FeasibleFractionBound {
        value,
        vacuous: value <= 0.0,
    })
}

/// Exponential envelope on the expected squared distance to a reference
/// through the early growth phase:
/// `(1 + max(2, l1/mu - 2) l1/mu)^t * (dist0_sq + l0_sq/l1^2 +
/// l0_sq/(mu max(2, l1/mu - 2) l1))`, in log space (the envelope dwarfs the
/// double range within a few hundred steps).
pub fn distance_growth_envelope(
    mu: f64,
    l1: f64,
    l0_sq: f64,
    dist0_sq: f64,
    t: usize,
) -> LogNum {
    let factor = (l1 / mu - 2.0).max(2.0);
    let base = 1.0 + factor * l1 / mu;
    let add = dist0_sq + l0_sq / (l1 * l1) + l0_sq / (mu * factor * l1);
    LogNum::from_f64(add).mul(LogNum::from_sign_ln(1, t as f64 * base.ln()))
}

/// Outcome of the fully observable convergence audit at a logged row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckableBound {
    /// Observed certificate: feasible fraction times (upper - lower bound).
    pub lhs: Option<f64>,
    /// Guaranteed value `(g_sq * sum(lambda alpha) + c0_term) / sum(lambda)`.
    pub rhs: f64,
    /// True when the observed value exceeds the guaranteed one, which
    /// certifies the second step size exceeded the inverse growth constant.
    pub violated: bool,
}

/// Growth-constant surrogate available from the opening subgradient alone:
/// `(1/(alpha_1 mu) - 1) * ||g_0||^2 / (2 mu)`. Valid for deterministic
/// unregularized runs with decreasing steps started at `alpha_0 = 1/mu`.
pub fn checkable_c0_term(alpha1: f64, mu: f64, grad0_norm_sq: f64) -> f64 {
    (1.0 / (alpha1 * mu) - 1.0) * grad0_norm_sq / (2.0 * mu)
}

/// Evaluate the observable audit at a row given a uniform subgradient bound
/// `g_sq` and the surrogate constant from [`checkable_c0_term`].
pub fn checkable_bound(row: &Row, g_sq: f64, c0_term: f64) -> CheckableBound {
    let lhs = match (row.weighted_f, row.dual_bound) {
        (Some(u), Some(b)) if row.sum_lambda > 0.0 => {
            Some(row.sum_lambda_feas / row.sum_lambda * (u - b))
        }
        _ => None,
    };
    let rhs = if row.sum_lambda > 0.0 {
        (g_sq * row.sum_lambda_alpha + c0_term) / row.sum_lambda
    } else {
        f64::INFINITY
    };
    let violated = matches!(lhs, Some(v) if v > rhs + 1e-12 * (1.0 + rhs.abs()));
    CheckableBound {
        lhs,
        rhs,
        violated,
    }
}

/// Closed-form geometric rate of the constant-step schedule for `l1`-smooth
/// objectives: `(l1/mu) * delta0 * (1 - mu/l1)^t`, in log space for long
/// horizons.
pub fn linear_rate_bound(mu: f64, l1: f64, delta0: f64, t: usize) -> LogNum {
    let q = 1.0 - mu / l1;
    let lead = LogNum::from_f64(l1 / mu * delta0);
    if t == 0 {
        return lead;
    }
    if q <= 0.0 {
        return LogNum::ZERO;
    }
    lead.mul(LogNum::from_sign_ln(1, t as f64 * q.ln()))
}

/// Header of the per-run certificate table.
pub fn csv_header(m: usize) -> String {
    let mut cols: Vec<String> = ["t", "p", "pbar", "delta", "d", "dist2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for s in 1..=m {
        cols.push(format!("u_{s}"));
    }
    cols.push("bound_rhs".into());
    cols.push("feasible_frac".into());
    cols.push("feas_lb".into());
    cols.join(",")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        _ => String::new(),
    }
}

/// One certificate CSV row; quantities not yet defined are left empty.
pub fn csv_row(row: &Row, inst: &Instance, l0_sq: Option<f64>, c0: Option<LogNum>) -> String {
    let mut cols = vec![
        row.t.to_string(),
        fmt_opt(row.p),
        fmt_opt(row.pbar),
        fmt_opt(row.delta),
        fmt_opt(row.d),
        fmt_opt(row.dist2_opt),
    ];
    for w in &row.constraint_weights {
        cols.push(fmt_opt(
            (row.sum_lambda_feas > 0.0).then(|| w / row.sum_lambda_feas),
        ));
    }
    let bound = match (l0_sq, c0) {
        (Some(l0), Some(c0)) => rate_rhs(row, l0, c0).map(|b| b.to_f64()),
        _ => None,
    };
    cols.push(fmt_opt(bound));
    cols.push(fmt_opt(
        (row.sum_lambda > 0.0).then(|| row.sum_lambda_feas / row.sum_lambda),
    ));
    let feas_lb = match (l0_sq, c0) {
        (Some(l0), Some(c0)) if inst.m() > 0 => {
            feasible_fraction_bound(row, inst, l0, c0.to_f64())
                .ok()
                .map(|b| b.value)
        }
        _ => None,
    };
    cols.push(fmt_opt(feas_lb));
    cols.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{
        gen_constrained, gen_l1_ls, toy_divergent, BallConstraint, Constants, Objective,
        References, Regularizer,
    };
    use crate::solver::{run, switching_select, Method, RunConfig, ALL_RULES};
    use approx::assert_relative_eq;
    use ndarray::Array1;

    /// Per-iteration reference gaps of the closed-form toy recurrence
    /// `u_{k+1} = u_k (k - 198)/(k + 2)` with value `50 u_k^2`.
    fn toy_delta_history(len: usize) -> Vec<f64> {
        let mut u = 1.0f64;
        let mut hist = Vec::with_capacity(len);
        for k in 0..len {
            hist.push(50.0 * u * u);
            u *= (k as f64 - 198.0) / (k as f64 + 2.0);
        }
        hist
    }

    #[test]
    fn toy_growth_constants_match_closed_form() {
        let sched = Schedule::linear(1.0).unwrap();
        let hist = toy_delta_history(398);
        let dc = divergence_constants(&sched, 200.0, &hist).unwrap();
        assert_eq!(dc.t0, Some(397));
        // frozen high-precision value computed with exact rational arithmetic
        assert!(
            (dc.c0.log10_abs() - 117.98496719829681).abs() < 1e-9,
            "log10 c0 = {}",
            dc.c0.log10_abs()
        );
        assert!(dc.c0.log10_abs() > 112.0);
        // short history is reported, not silently truncated
        match divergence_constants(&sched, 200.0, &hist[..300]) {
            Err(Error::InsufficientHistory { needed, have }) => {
                assert_eq!((needed, have), (398, 300));
            }
            other => panic!("expected InsufficientHistory, got {other:?}"),
        }
    }

    #[test]
    fn compliant_schedules_have_tiny_constants() {
        // every step at or below the threshold: no growth phase at all,
        // and no gap history is needed
        let capped = Schedule::capped(1.0, 200.0, true).unwrap();
        let dc = divergence_constants(&capped, 200.0, &[]).unwrap();
        assert_eq!(dc.t0, None);
        assert!(dc.c0.is_zero());
        // constant-step smooth schedule: only the opening step grows, so
        // c0 = (l1/mu - 1) * delta_0
        let smooth = Schedule::smooth(1.0, 4.0).unwrap();
        let dc = divergence_constants(&smooth, 4.0, &[2.5, 99.0, 99.0]).unwrap();
        assert_eq!(dc.t0, Some(0));
        assert_relative_eq!(dc.c0.to_f64(), 3.0 * 2.5, max_relative = 1e-12);
    }

    #[test]
    fn growth_phase_matches_closed_forms() {
        // alpha_k = 2/(mu (k+2)): steps exceed the threshold exactly for
        // k < 2 l1/mu - 2
        for l1 in [1.0f64, 3.0, 4.0, 200.0] {
            let sched = Schedule::linear(1.0).unwrap();
            let t0 = growth_phase_end(&sched, l1).unwrap();
            let bound = 2.0 * l1 - 2.0;
            let expect = if bound <= 0.0 {
                None
            } else {
                let ceil = bound.ceil();
                Some(if ceil == bound { bound as usize - 1 } else { ceil as usize - 1 })
            };
            assert_eq!(t0, expect, "l1 = {l1}");
        }
        // canned schedules at mu = 1 against a threshold of l1 = 4
        let cases: [(Schedule, Option<usize>); 6] = [
            (Schedule::uniform(1.0).unwrap(), Some(2)),
            (Schedule::linear(1.0).unwrap(), Some(5)),
            (Schedule::poly(1.0, 2).unwrap(), Some(9)),
            (Schedule::poly(1.0, 3).unwrap(), Some(12)),
            (Schedule::poly(1.0, 4).unwrap(), Some(16)),
            (Schedule::optimized(1.0).unwrap(), Some(4)),
        ];
        for (sched, expect) in cases {
            assert_eq!(growth_phase_end(&sched, 4.0).unwrap(), expect, "{}", sched.name());
        }
    }

    #[test]
    fn unbounded_growth_phase_is_reported() {
        // the smooth schedule holds alpha = 1/4 forever; querying a larger
        // threshold means the growth phase never ends
        let sched = Schedule::smooth(1.0, 4.0).unwrap();
        match growth_phase_end(&sched, 8.0) {
            Err(Error::UnsettledSchedule(_)) => {}
            other => panic!("expected UnsettledSchedule, got {other:?}"),
        }
        // a finite explicit schedule is scanned exactly, no settling window
        let sched = Schedule::from_alphas(vec![0.9, 0.9, 0.9, 0.2], 1.0, 1.0).unwrap();
        assert_eq!(growth_phase_end(&sched, 2.0).unwrap(), Some(2));
    }

    #[test]
    fn reference_gap_examples() {
        let inst = gen_l1_ls(4, 4, 0.0, 11).unwrap();
        let y = inst.refs.x_opt.clone().unwrap();
        assert_eq!(delta_k(&inst, &y, &y, None, 0).unwrap(), 0.0);
        // r = 0: plain objective difference, nonnegative against the minimizer
        let x = &y + 0.5;
        let d = delta_k(&inst, &x, &y, None, 0).unwrap();
        assert_relative_eq!(d, inst.f0(&x) - inst.f0(&y), max_relative = 1e-12);
        assert!(d >= 0.0);
        // a nonzero regularizer demands the reference subgradient
        let reg = inst.clone().with_regularizer(Regularizer::L1 { weight: 0.3 });
        match delta_k(&reg, &x, &y, None, 0) {
            Err(Error::MissingReference(_)) => {}
            other => panic!("expected MissingReference, got {other:?}"),
        }
        let n_y = Array1::from_elem(4, 0.1);
        let with_n = delta_k(&reg, &x, &y, Some(&n_y), 0).unwrap();
        assert_relative_eq!(
            with_n,
            reg.f0(&x) + 0.1 * 0.5 * 4.0 - reg.f0(&y),
            max_relative = 1e-12
        );
        // switching branch: raw constraint difference, at least the margin of
        // the strictly feasible reference
        let cinst = gen_constrained(2, 2, 5).unwrap();
        let x_sl = cinst.refs.x_sl.clone().unwrap();
        let tau = cinst.refs.tau_sl.unwrap();
        let far = x_sl.mapv(|v| v + 50.0);
        let s = switching_select(&cinst, &far);
        assert!(s >= 1);
        let g = delta_k(&cinst, &far, &x_sl, None, s).unwrap();
        assert!(g >= tau);
        // out-of-range constraint index
        assert!(delta_k(&cinst, &far, &x_sl, None, 3).is_err());
    }

    #[test]
    fn report_fields_and_dual_validity() {
        let inst = gen_l1_ls(5, 5, 0.0, 3).unwrap();
        let sched = Schedule::linear(1.0).unwrap();
        let log = run(&inst, &sched, &RunConfig::new(Method::Both, 400)).unwrap();
        let rep = gaps(&log, &inst).unwrap();
        assert!(rep.gaps_defined);
        assert!(rep.multipliers.is_empty() && rep.comp_slack.is_empty());
        let p_star = inst.refs.p_star.unwrap();
        let tol = 1e-9 * (1.0 + p_star.abs());
        for row in &log.rows {
            if let Some(b) = row.dual_bound {
                assert!(b <= p_star + tol, "dual bound {b} above optimum at t={}", row.t);
            }
            for g in [row.p, row.pbar, row.delta] {
                if let Some(g) = g {
                    assert!(g >= -tol, "upper bound dipped below optimum at t={}", row.t);
                }
            }
        }
        assert!(rep.dual_lower_bound.unwrap() <= p_star + tol);
        assert!(rep.primal_avg_value.unwrap() >= rep.dual_lower_bound.unwrap() - tol);
        assert_eq!(rep.feasible_fraction, Some(1.0));
        assert_eq!(rep.t, log.t_final);
        assert_relative_eq!(
            rep.last_iterate_value,
            inst.objective_total(&log.x_final),
            max_relative = 1e-12
        );
        // before any weight accumulates the gaps are flagged undefined, while
        // the point value is still reported
        let log0 = run(&inst, &sched, &RunConfig::new(Method::Primal, 0)).unwrap();
        let rep0 = gaps(&log0, &inst).unwrap();
        assert!(!rep0.gaps_defined);
        assert!(rep0.dual_lower_bound.is_none() && rep0.p.is_none());
        assert_relative_eq!(
            rep0.delta.unwrap(),
            inst.objective_total(&inst.x0) - p_star,
            max_relative = 1e-12
        );
        assert!(matches!(multipliers(&log0), Err(Error::Undefined(_))));
    }

    #[test]
    fn multipliers_approach_reference_values() {
        let inst = gen_constrained(2, 2, 5).unwrap();
        let sched = Schedule::linear(inst.mu()).unwrap();
        let log = run(&inst, &sched, &RunConfig::new(Method::Primal, 30_000)).unwrap();
        let u = multipliers(&log).unwrap();
        let u_ref = inst.refs.kkt_multipliers.clone().unwrap();
        assert_eq!(u.len(), u_ref.len());
        for (ui, ri) in u.iter().zip(u_ref.iter()) {
            assert!((ui - ri).abs() < 0.05, "u = {ui} vs reference {ri}");
        }
        for v in complementary_slackness(&log, &inst).unwrap() {
            assert!(v.abs() < 0.05, "slackness residual {v}");
        }
        // a run that never leaves the feasible region keeps every multiplier
        // at exactly zero
        let n = 2;
        let contained = Instance {
            name: "contained".into(),
            n,
            objective: Objective::SqDist {
                center: Array1::zeros(n),
            },
            constraints: vec![BallConstraint {
                center: Array1::zeros(n),
                rho: 1000.0,
            }],
            regularizer: Regularizer::Zero,
            noise_sigma: 0.0,
            x0: Array1::from_elem(n, 1.0),
            refs: References::default(),
            constants: Constants {
                mu: 1.0,
                l0_sq: None,
                l1: None,
            },
            seed: 0,
        };
        let sched = Schedule::linear(1.0).unwrap();
        let log = run(&contained, &sched, &RunConfig::new(Method::Primal, 100)).unwrap();
        assert_eq!(multipliers(&log).unwrap(), vec![0.0]);
    }

    #[test]
    fn stopping_rules_parse_and_fire() {
        assert!(matches!(parse_rule("zzz"), Err(Error::InvalidCriterion(_))));
        for name in ["pbar", "delta", "p", "d", "pbar+d", "delta+d", "p+d"] {
            assert_eq!(rule_name(parse_rule(name).unwrap()), name);
        }
        assert!(stopping(RuleKind::P, 0.0).is_err());
        assert!(stopping(RuleKind::P, -1.0).is_err());
        assert!(stopping(RuleKind::P, f64::NAN).is_err());

        let inst = gen_l1_ls(4, 4, 0.0, 11).unwrap();
        let sched = Schedule::linear(1.0).unwrap();
        let mut cfg = RunConfig::new(Method::Primal, 4000);
        cfg.track_eps = Some(0.5);
        let log = run(&inst, &sched, &cfg).unwrap();
        // an infinite threshold is satisfied immediately, even at t = 0 where
        // the composite quantities are still undefined
        let always = stopping(RuleKind::PPlusD, f64::INFINITY).unwrap();
        assert!(always(&log.rows[0]));
        // recorded first hits agree with a scan over the logged rows (the
        // cadence records every iteration at this scale)
        for rule in ALL_RULES {
            let hit = stopping_time(&log, rule, 0.5).unwrap();
            let pred = stopping(rule, 0.5).unwrap();
            let scan = log.rows.iter().find(|r| pred(r)).map(|r| r.t);
            assert_eq!(hit, scan, "{rule:?}");
        }
        // mismatched or missing tracking is rejected, not silently answered
        assert!(matches!(
            stopping_time(&log, RuleKind::P, 0.25),
            Err(Error::InvalidCriterion(_))
        ));
        let untracked = run(&inst, &sched, &RunConfig::new(Method::Primal, 10)).unwrap();
        assert!(matches!(
            stopping_time(&untracked, RuleKind::P, 0.5),
            Err(Error::InvalidCriterion(_))
        ));
    }

    #[test]
    fn rate_bound_holds_along_runs() {
        let inst = gen_l1_ls(6, 6, 0.0, 1).unwrap();
        let l0_sq = inst.constants.l0_sq.unwrap();
        let l1 = inst.constants.l1.unwrap();
        let mu = inst.mu();
        let sched = Schedule::linear(mu).unwrap();
        let t0 = growth_phase_end(&sched, l1).unwrap().unwrap();
        let mut cfg = RunConfig::new(Method::Primal, 2000);
        cfg.delta_history_cap = t0 + 1;
        let log = run(&inst, &sched, &cfg).unwrap();
        let dc = divergence_constants(&sched, l1, &combined_history(&log)).unwrap();
        let c0 = dc.c0.to_f64();
        assert!(c0 >= 0.0 && c0.is_finite());
        let mut checked = 0usize;
        for row in log.rows.iter().filter(|r| r.t > 0) {
            let lhs = rate_lhs(row, mu).unwrap();
            let rhs = rate_rhs(row, l0_sq, dc.c0).unwrap().to_f64();
            assert!(
                lhs <= rhs * (1.0 + 1e-9) + 1e-12,
                "t={} lhs={lhs} rhs={rhs}",
                row.t
            );
            // closed form for these weights: sums telescope to
            // 4 l0^2/(mu (t+1)) + 2 c0/(t (t+1))
            let t = row.t as f64;
            let closed = 4.0 * l0_sq / (mu * (t + 1.0)) + 2.0 * c0 / (t * (t + 1.0));
            assert!(rhs <= closed * (1.0 + 1e-9), "t={}", row.t);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn observable_audit_flags_oversized_steps() {
        let inst = toy_divergent();
        let g0 = inst.eval_objective(&inst.x0).1;
        let g0_sq = g0.iter().map(|v| v * v).sum::<f64>();
        // steps 2/(k+2): alpha_1 = 2/3, surrogate constant (3/2 - 1) 10^4 / 2
        let sched = Schedule::linear(1.0).unwrap();
        let alpha1 = sched.steps(2).unwrap()[1].alpha;
        let c0_term = checkable_c0_term(alpha1, 1.0, g0_sq);
        assert_relative_eq!(c0_term, 2500.0, max_relative = 1e-12);
        let log = run(&inst, &sched, &RunConfig::new(Method::Primal, 600)).unwrap();
        assert!(
            log.rows
                .iter()
                .any(|r| checkable_bound(r, 0.0, c0_term).violated),
            "audit must flag the oversized second step"
        );
        // compliant capped steps never trip the audit
        let capped = Schedule::capped(1.0, 200.0, false).unwrap();
        let alpha1 = capped.steps(2).unwrap()[1].alpha;
        let c0_term = checkable_c0_term(alpha1, 1.0, g0_sq);
        let log = run(&inst, &capped, &RunConfig::new(Method::Primal, 600)).unwrap();
        assert!(log
            .rows
            .iter()
            .all(|r| !checkable_bound(r, 0.0, c0_term).violated));
    }

    #[test]
    fn growth_envelope_caps_measured_trajectory() {
        let env = distance_growth_envelope(1.0, 200.0, 0.0, 1.0, 397);
        assert_relative_eq!(env.log10_abs(), 1825.289343, epsilon = 1e-5);
        let inst = toy_divergent();
        let sched = Schedule::linear(1.0).unwrap();
        let log = run(&inst, &sched, &RunConfig::new(Method::Primal, 398)).unwrap();
        for row in &log.rows {
            let d2 = row.dist2_opt.unwrap();
            if d2 > 0.0 {
                let env = distance_growth_envelope(1.0, 200.0, 0.0, 1.0, row.t);
                assert!(
                    d2.log10() <= env.log10_abs() + 1e-9,
                    "t={} dist2={d2}",
                    row.t
                );
            }
        }
    }

    #[test]
    fn linear_rate_matches_schedule_bound() {
        let (mu, l1, delta0) = (1.0, 4.0, 2.5);
        let sched = Schedule::smooth(mu, l1).unwrap();
        for t in [1usize, 2, 5, 10, 50] {
            let closed = linear_rate_bound(mu, l1, delta0, t).to_f64();
            let from_sched = sched.rate_bound(t, 0.0, (l1 / mu - 1.0) * delta0).unwrap();
            assert_relative_eq!(closed, from_sched, max_relative = 1e-9);
        }
        assert_relative_eq!(
            linear_rate_bound(mu, l1, delta0, 0).to_f64(),
            10.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn replicated_constants_report_spread() {
        let sched = Schedule::smooth(1.0, 4.0).unwrap();
        let opt = vec![vec![1.0, 9.0], vec![2.0, 9.0], vec![3.0, 9.0]];
        let rep = divergence_constants_replicated(&sched, 4.0, &opt, &[]).unwrap();
        assert_eq!(rep.replicates, 3);
        assert_eq!(rep.constants.t0, Some(0));
        assert_relative_eq!(rep.constants.c0.to_f64(), 6.0, max_relative = 1e-12);
        // per-replicate constants are {3, 6, 9}: stderr = stddev/sqrt(3)
        assert_relative_eq!(
            rep.c0_stderr.to_f64(),
            3.0f64.sqrt(),
            max_relative = 1e-12
        );
        let rep1 = divergence_constants_replicated(&sched, 4.0, &opt[..1], &[]).unwrap();
        assert!(rep1.c0_stderr.is_zero());
        // means enter before the max across references
        let sl = vec![vec![5.0, 0.0], vec![5.0, 0.0], vec![5.0, 0.0]];
        let rep2 = divergence_constants_replicated(&sched, 4.0, &opt, &sl).unwrap();
        assert_relative_eq!(rep2.constants.c0.to_f64(), 15.0, max_relative = 1e-12);
        // shape errors are rejected
        assert!(divergence_constants_replicated(&sched, 4.0, &[], &[]).is_err());
        assert!(divergence_constants_replicated(&sched, 4.0, &opt, &sl[..2]).is_err());
    }

    #[test]
    fn csv_rows_align_with_header() {
        let inst = gen_constrained(2, 2, 5).unwrap();
        let sched = Schedule::linear(inst.mu()).unwrap();
        let log = run(&inst, &sched, &RunConfig::new(Method::Primal, 50)).unwrap();
        let header = csv_header(inst.m());
        let cols = header.split(',').count();
        for row in &log.rows {
            let line = csv_row(row, &inst, inst.constants.l0_sq, Some(LogNum::ZERO));
            assert_eq!(line.split(',').count(), cols, "row t={}", row.t);
        }
        assert!(header.starts_with("t,p,pbar,delta,d,dist2,u_1,u_2,"));
        assert!(header.ends_with("bound_rhs,feasible_frac,feas_lb"));
    }

    #[test]
    fn full_report_attaches_guarantees() {
        let inst = gen_constrained(2, 2, 5).unwrap();
        let sched = Schedule::linear(inst.mu()).unwrap();
        let l1 = inst.constants.l1.unwrap();
        let t0 = growth_phase_end(&sched, l1).unwrap();
        let mut cfg = RunConfig::new(Method::Primal, 50_000);
        cfg.delta_history_cap = t0.map_or(0, |t| t + 1);
        let log = run(&inst, &sched, &cfg).unwrap();
        let rep = full_report(&log, &inst, &sched).unwrap();
        let dc = rep.growth.expect("constants are computable here");
        assert_eq!(dc.t0, t0);
        let bound = rep.rate_bound.expect("rate bound");
        let lhs = rate_lhs(log.rows.last().unwrap(), inst.mu()).unwrap();
        assert!(lhs <= bound * (1.0 + 1e-9) + 1e-12);
        // by 5*10^4 weighted iterations the feasibility guarantee is active
        // and respected by the measured feasible fraction
        let fb = rep.feasible_bound.expect("feasibility bound");
        assert!(!fb.vacuous, "bound still vacuous: {}", fb.value);
        assert!(rep.feasible_fraction.unwrap() >= fb.value - 1e-9);
    }
}
