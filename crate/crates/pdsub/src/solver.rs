//! Subgradient solvers: the projected/switching primal method, the
//! equivalent aggregated dual-model method, and a runner that executes
//! either (or both, comparing them) while maintaining the certificate
//! model, weighted averages, and stopping diagnostics.

use crate::model::{minimize_with_prox, GradQuadratic, ModelSnapshot, QuadraticModel, RegularizerTerm};
use crate::num::{gaussian_counter, Kahan, KahanVec};
use crate::problem::Instance;
use crate::schedule::Schedule;
use crate::{Error, Result};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Magnitude at which a run is declared divergent and aborted.
pub const DIVERGENCE_LIMIT: f64 = 1e300;

/// Constraint selection: 0 when every `f_s(x) <= 0` (exact test, no
/// tolerance), otherwise the smallest violated 1-based index.
pub fn switching_select(inst: &Instance, x: &Array1<f64>) -> usize {
    for (i, c) in inst.constraints.iter().enumerate() {
        if c.value(x) > 0.0 {
            return i + 1;
        }
    }
    0
}

/// Everything one iteration produces: the selected branch, the bound data
/// entering the aggregated model, and the next iterate with its recovered
/// regularizer subgradient.
#[derive(Debug, Clone)]
pub struct StepData {
    pub s: usize,
    /// `f0(x)` when `s = 0`, else `f_s(x)`: the value anchoring the model term.
    pub f_bound: f64,
    /// `f0(x)` when it was computed by this step (feasible branch).
    pub f0_val: Option<f64>,
    /// Subgradient actually used (noise included on the objective branch).
    pub g: Array1<f64>,
    pub next: Array1<f64>,
    /// Recovered regularizer subgradient at `next` (zero on switching steps).
    pub n_next: Array1<f64>,
}

/// One primal iteration from `x` with stepsize `alpha`:
/// `prox_{alpha, r}(x - alpha g0)` on feasible points, a plain subgradient
/// step on the smallest violated constraint otherwise.
pub fn primal_step(
    inst: &Instance,
    x: &Array1<f64>,
    alpha: f64,
    xi: Option<&Array1<f64>>,
) -> StepData {
    let s = switching_select(inst, x);
    if s == 0 {
        let (f0v, mut g) = inst.eval_objective(x);
        if let Some(xi) = xi {
            g = g + &(xi * inst.noise_sigma);
        }
        let z = x - &(&g * alpha);
        let next = inst.prox(&z, alpha);
        let n_next = (&z - &next) / alpha;
        StepData {
            s,
            f_bound: f0v,
            f0_val: Some(f0v),
            g,
            next,
            n_next,
        }
    } else {
        let f_bound = inst.constraint_value(s, x);
        let g = inst.constraint_gradient(s, x);
        let next = x - &(&g * alpha);
        StepData {
            s,
            f_bound,
            f0_val: None,
            g,
            next,
            n_next: Array1::zeros(x.len()),
        }
    }
}

/// One dual iteration from `y` with weight `lambda`: minimize the aggregated
/// model plus the fresh bound at `y` (plus the regularizer and the
/// `beta_bar/2 ||.-y0||^2` term on feasible points). The model itself is not
/// mutated here; append the returned data afterwards.
pub fn dual_step(
    inst: &Instance,
    model: &QuadraticModel,
    y: &Array1<f64>,
    lambda: f64,
    beta_bar: f64,
    y0: &Array1<f64>,
    xi: Option<&Array1<f64>>,
) -> Result<StepData> {
    let s = switching_select(inst, y);
    let mu = inst.mu();
    if s == 0 {
        let (f0v, mut g) = inst.eval_objective(y);
        if let Some(xi) = xi {
            g = g + &(xi * inst.noise_sigma);
        }
        let term = GradQuadratic {
            f_val: f0v,
            g: &g,
            anchor: y,
            lambda,
            mu,
        };
        let (next, n_next) =
            minimize_with_prox(model, &term, |z, step| inst.prox(z, step), beta_bar, y0)?;
        Ok(StepData {
            s,
            f_bound: f0v,
            f0_val: Some(f0v),
            g,
            next,
            n_next,
        })
    } else {
        let f_bound = inst.constraint_value(s, y);
        let g = inst.constraint_gradient(s, y);
        let term = GradQuadratic {
            f_val: f_bound,
            g: &g,
            anchor: y,
            lambda,
            mu,
        };
        // Switching steps carry no regularizer: plain quadratic minimization.
        let (next, _) = minimize_with_prox(model, &term, |z, _| z.clone(), beta_bar, y0)?;
        Ok(StepData {
            s,
            f_bound,
            f0_val: None,
            g,
            next,
            n_next: Array1::zeros(y.len()),
        })
    }
}

/// Append one step's lower bound into the aggregated model.
fn append_step(model: &mut QuadraticModel, inst: &Instance, x: &Array1<f64>, lambda: f64, step: &StepData) -> Result<()> {
    let term = GradQuadratic {
        f_val: step.f_bound,
        g: &step.g,
        anchor: x,
        lambda,
        mu: inst.mu(),
    };
    if step.s == 0 {
        let r_val = inst.regularizer.value(&step.next);
        let r_part = RegularizerTerm {
            r_val,
            n: &step.n_next,
            y_next: &step.next,
        };
        model.append_model_term(true, &term, Some(&r_part))
    } else {
        model.append_model_term(false, &term, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Primal,
    Dual,
    Both,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Primal => "primal",
            Method::Dual => "dual",
            Method::Both => "both",
        }
    }
}

/// The gap quantities a run can stop on. Plain gaps need the reference
/// optimal value; the `*_d` composites are observable certificates
/// (objective value minus the running dual lower bound).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    PBar,
    Delta,
    P,
    D,
    PBarPlusD,
    DeltaPlusD,
    PPlusD,
}

pub const ALL_RULES: [RuleKind; 7] = [
    RuleKind::PBar,
    RuleKind::Delta,
    RuleKind::P,
    RuleKind::D,
    RuleKind::PBarPlusD,
    RuleKind::DeltaPlusD,
    RuleKind::PPlusD,
];

/// First iteration at which each tracked gap dropped to the threshold.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FirstHits {
    pub pbar: Option<usize>,
    pub delta: Option<usize>,
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub pbar_d: Option<usize>,
    pub delta_d: Option<usize>,
    pub p_d: Option<usize>,
}

impl FirstHits {
    pub fn get(&self, rule: RuleKind) -> Option<usize> {
        match rule {
            RuleKind::PBar => self.pbar,
            RuleKind::Delta => self.delta,
            RuleKind::P => self.p,
            RuleKind::D => self.d,
            RuleKind::PBarPlusD => self.pbar_d,
            RuleKind::DeltaPlusD => self.delta_d,
            RuleKind::PPlusD => self.p_d,
        }
    }

    fn slot(&mut self, rule: RuleKind) -> &mut Option<usize> {
        match rule {
            RuleKind::PBar => &mut self.pbar,
            RuleKind::Delta => &mut self.delta,
            RuleKind::P => &mut self.p,
            RuleKind::D => &mut self.d,
            RuleKind::PBarPlusD => &mut self.pbar_d,
            RuleKind::DeltaPlusD => &mut self.delta_d,
            RuleKind::PPlusD => &mut self.p_d,
        }
    }

    pub fn all_hit(&self) -> bool {
        ALL_RULES.iter().all(|&r| self.get(r).is_some())
    }
}

/// One recorded observation of a run at iteration `t` (state before the
/// `t`-th step; all aggregates range over `k < t`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub t: usize,
    /// Constraint selected at this iterate (0 = feasible).
    pub s: usize,
    /// Full objective `f0 + r` at the current iterate.
    pub f_x: f64,
    pub f0_x: f64,
    /// Full objective at the weighted average of feasible iterates.
    pub f_xbar: Option<f64>,
    /// Weighted average of full objective values over feasible iterates.
    pub weighted_f: Option<f64>,
    /// Infimum of the aggregated model (unnormalized).
    pub model_inf: Option<f64>,
    /// `model_inf / sum_lambda_feas`: the certified lower bound.
    pub dual_bound: Option<f64>,
    pub delta: Option<f64>,
    pub p: Option<f64>,
    pub pbar: Option<f64>,
    pub d: Option<f64>,
    pub dist2_opt: Option<f64>,
    pub norm_x: f64,
    pub sum_lambda: f64,
    pub ln_sum_lambda: f64,
    pub sum_lambda_alpha: f64,
    pub sum_lambda_feas: f64,
    pub constraint_weights: Vec<f64>,
    pub feasible_count: usize,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub t: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub name: String,
    pub method: String,
    pub schedule: String,
    pub beta_bar: f64,
    pub noise_seed: u64,
    pub t_final: usize,
    pub rows: Vec<Row>,
    pub x_final: Array1<f64>,
    pub xbar_final: Option<Array1<f64>>,
    /// Reference-suboptimality history `delta_k(x_opt)` for `k <` cap.
    pub delta_opt_hist: Vec<f64>,
    pub delta_sl_hist: Vec<f64>,
    pub max_abs_delta_opt: Option<f64>,
    pub max_abs_delta_sl: Option<f64>,
    /// Largest `||g + n_y||^2 - L1 * delta_k(x_opt)` seen (compare to L0^2).
    pub grad_growth_excess: Option<f64>,
    /// Largest ratio `|delta_k(x_opt)| / (L1 ||x_k - x_opt||^2 + L0^2/L1)`.
    pub growth_ratio_max: Option<f64>,
    pub max_norm_x: f64,
    pub peak_norm_t: usize,
    /// `Both` runs: largest `||x_k - y_k|| / (1 + ||x_k||)` between the two
    /// methods.
    pub max_dev: f64,
    pub first_hits: FirstHits,
    pub track_eps: Option<f64>,
    pub diverged: Option<DivergenceEvent>,
    pub model: ModelSnapshot,
    pub count_feasible: usize,
    pub constraint_weights: Vec<f64>,
    pub sum_lambda: f64,
    pub sum_lambda_feas: f64,
    pub sum_lambda_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub t_max: usize,
    pub noise_seed: u64,
    /// 0 = automatic cadence (every iteration below 10^4, every 100th after).
    pub record_every: usize,
    /// Enable first-hit tracking of every stopping quantity at this threshold.
    pub track_eps: Option<f64>,
    /// Stop early once every tracked quantity has hit the threshold.
    pub stop_when_all_hit: bool,
    /// Record per-iteration reference suboptimalities for `k <` this cap.
    pub delta_history_cap: usize,
    /// Track the pointwise second-growth bound and gradient-growth excess.
    pub check_growth: bool,
}

impl RunConfig {
    pub fn new(method: Method, t_max: usize) -> Self {
        RunConfig {
            method,
            t_max,
            noise_seed: 0,
            record_every: 0,
            track_eps: None,
            stop_when_all_hit: false,
            delta_history_cap: 0,
            check_growth: false,
        }
    }
}

/// Precomputed data for suboptimality measured against a fixed reference
/// point `y` (with its regularizer subgradient `n_y`).
struct RefEval {
    y: Array1<f64>,
    n_y: Array1<f64>,
    n_y_zero: bool,
    f0_y: f64,
    fs_y: Vec<f64>,
}

impl RefEval {
    fn new(inst: &Instance, y: Array1<f64>, n_y: Option<&Array1<f64>>) -> Self {
        let n_y = n_y.cloned().unwrap_or_else(|| Array1::zeros(y.len()));
        let f0_y = inst.f0(&y);
        let fs_y = (1..=inst.m()).map(|s| inst.constraint_value(s, &y)).collect();
        let n_y_zero = n_y.iter().all(|&v| v == 0.0);
        RefEval {
            y,
            n_y,
            n_y_zero,
            f0_y,
            fs_y,
        }
    }

    /// `delta_t(y)`: on feasible steps `f0(x) + <n_y, x - y> - f0(y)`, on
    /// switching steps `f_s(x) - f_s(y)`.
    fn delta(&self, s: usize, f_bound: f64, x: &Array1<f64>) -> f64 {
        if s == 0 {
            let mut dot = 0.0;
            if !self.n_y_zero {
                for ((ni, xi), yi) in self.n_y.iter().zip(x.iter()).zip(self.y.iter()) {
                    dot += ni * (xi - yi);
                }
            }
            f_bound + dot - self.f0_y
        } else {
            f_bound - self.fs_y[s - 1]
        }
    }
}

fn norm(x: &Array1<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist2(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

/// Run the configured method for up to `t_max` iterations.
pub fn run(inst: &Instance, schedule: &Schedule, cfg: &RunConfig) -> Result<RunLog> {
    let mu_rel = (schedule.mu() - inst.mu()).abs() / (1.0 + inst.mu().abs());
    if mu_rel > 1e-9 {
        return Err(Error::InvalidSchedule(format!(
            "schedule modulus {} does not match instance modulus {}",
            schedule.mu(),
            inst.mu()
        )));
    }
    let n = inst.n;
    let m = inst.m();
    let beta_bar = schedule.beta_bar();
    let y0 = inst.x0.clone();
    let run_primal = matches!(cfg.method, Method::Primal | Method::Both);
    let run_dual = matches!(cfg.method, Method::Dual | Method::Both);
    let mut xp = inst.x0.clone();
    let mut yd = inst.x0.clone();
    let mut model_p = QuadraticModel::new();
    let mut model_d = QuadraticModel::new();

    let mut cursor = schedule.cursor();
    let mut w_feas = Kahan::new();
    let mut sum_f_feas = Kahan::new();
    let mut sum_x = KahanVec::zeros(n);
    let mut w_cons: Vec<Kahan> = (0..m).map(|_| Kahan::new()).collect();
    let mut count_feas = 0usize;
    let mut prev_sum_lambda = 0.0f64;
    let mut prev_ln_sum_lambda = f64::NEG_INFINITY;
    let mut prev_sum_lambda_alpha = 0.0f64;

    let p_star = inst.refs.p_star;
    let ref_opt = inst
        .refs
        .x_opt
        .as_ref()
        .map(|y| RefEval::new(inst, y.clone(), inst.refs.n_x_opt.as_ref()));
    let ref_sl = inst
        .refs
        .x_sl
        .as_ref()
        .map(|y| RefEval::new(inst, y.clone(), inst.refs.n_x_sl.as_ref()));

    let mut rows: Vec<Row> = Vec::new();
    let mut hits = FirstHits::default();
    let mut delta_opt_hist: Vec<f64> = Vec::new();
    let mut delta_sl_hist: Vec<f64> = Vec::new();
    let mut max_abs_delta_opt: Option<f64> = None;
    let mut max_abs_delta_sl: Option<f64> = None;
    let mut grad_growth_excess: Option<f64> = None;
    let mut growth_ratio_max: Option<f64> = None;
    let mut max_norm_x = f64::NEG_INFINITY;
    let mut peak_norm_t = 0usize;
    let mut max_dev = 0.0f64;
    let mut diverged: Option<DivergenceEvent> = None;

    let should_record = |t: usize| -> bool {
        if cfg.record_every == 0 {
            t < 10_000 || t % 100 == 0
        } else {
            t % cfg.record_every == 0
        }
    };

    // Shared row/tracking evaluation at iteration `t` (before the step's
    // model term is appended and before accumulators include lambda_t).
    #[allow(clippy::too_many_arguments)]
    fn observe(
        inst: &Instance,
        t: usize,
        x: &Array1<f64>,
        s_t: usize,
        f0_x: f64,
        model: &QuadraticModel,
        w_feas: f64,
        sum_f_feas: f64,
        sum_x: &KahanVec,
        sums: (f64, f64, f64),
        step: Option<(f64, f64)>,
        p_star: Option<f64>,
        ref_opt: Option<&RefEval>,
        want_pbar: bool,
        record: bool,
        rows: &mut Vec<Row>,
        hits: &mut FirstHits,
        eps: Option<f64>,
        w_cons: &[Kahan],
        count_feas: usize,
    ) {
        let f_x = f0_x + inst.regularizer.value(x);
        let weighted_f = if w_feas > 0.0 {
            Some(sum_f_feas / w_feas)
        } else {
            None
        };
        let (model_inf, dual_bound) = if w_feas > 0.0 && model.total_weight() > 0.0 {
            let inf = model.min_value();
            (Some(inf), Some(inf / w_feas))
        } else {
            (None, None)
        };
        let f_xbar = if want_pbar && w_feas > 0.0 {
            let xbar = sum_x.value() / w_feas;
            Some(inst.objective_total(&xbar))
        } else {
            None
        };
        let delta = p_star.map(|p| f_x - p);
        let p_gap = match (weighted_f, p_star) {
            (Some(wf), Some(p)) => Some(wf - p),
            _ => None,
        };
        let pbar = match (f_xbar, p_star) {
            (Some(fb), Some(p)) => Some(fb - p),
            _ => None,
        };
        let d_gap = match (dual_bound, p_star) {
            (Some(b), Some(p)) => Some(p - b),
            _ => None,
        };
        if let Some(eps) = eps {
            // Composite criteria are fully observable: an objective level
            // minus the certified lower bound. They need no reference optimum.
            let observable = |upper: Option<f64>| match (upper, dual_bound) {
                (Some(u), Some(b)) => Some(u - b),
                _ => None,
            };
            let checks: [(RuleKind, Option<f64>); 7] = [
                (RuleKind::PBar, pbar),
                (RuleKind::Delta, delta),
                (RuleKind::P, p_gap),
                (RuleKind::D, d_gap),
                (RuleKind::PBarPlusD, observable(f_xbar)),
                (RuleKind::DeltaPlusD, observable(Some(f_x))),
                (RuleKind::PPlusD, observable(weighted_f)),
            ];
            for (rule, val) in checks {
                if let Some(v) = val {
                    let slot = hits.slot(rule);
                    if slot.is_none() && v <= eps {
                        *slot = Some(t);
                    }
                }
            }
        }
        if record {
            rows.push(Row {
                t,
                s: s_t,
                f_x,
                f0_x,
                f_xbar,
                weighted_f,
                model_inf,
                dual_bound,
                delta,
                p: p_gap,
                pbar,
                d: d_gap,
                dist2_opt: ref_opt.map(|r| dist2(x, &r.y)),
                norm_x: norm(x),
                sum_lambda: sums.0,
                ln_sum_lambda: sums.1,
                sum_lambda_alpha: sums.2,
                sum_lambda_feas: w_feas,
                constraint_weights: w_cons.iter().map(|k| k.value()).collect(),
                feasible_count: count_feas,
                alpha: step.map(|(a, _)| a),
                lambda: step.map(|(_, l)| l),
            });
        }
    }

    let (l0_sq_c, l1_c) = (inst.constants.l0_sq, inst.constants.l1);
    let mut t_final = cfg.t_max;
    for t in 0..cfg.t_max {
        let step = cursor.next_step()?;
        let xi = if inst.noise_sigma > 0.0 {
            Some(gaussian_counter(cfg.noise_seed, t as u64, n))
        } else {
            None
        };
        let sp = if run_primal {
            Some(primal_step(inst, &xp, step.alpha, xi.as_ref()))
        } else {
            None
        };
        let sd = if run_dual {
            Some(dual_step(
                inst,
                &model_d,
                &yd,
                step.lambda,
                beta_bar,
                &y0,
                xi.as_ref(),
            )?)
        } else {
            None
        };
        // The certificate-bearing trajectory: primal when available.
        let (x_cur, active, model_active): (&Array1<f64>, &StepData, &QuadraticModel) =
            if run_primal {
                (&xp, sp.as_ref().unwrap(), &model_p)
            } else {
                (&yd, sd.as_ref().unwrap(), &model_d)
            };

        let record = should_record(t);
        let tracking = cfg.track_eps.is_some();
        let delta_rules_open = hits.delta.is_none() || hits.delta_d.is_none();
        let need_f0 = record || active.s == 0 || (tracking && delta_rules_open);
        let f0_x = match active.f0_val {
            Some(v) => v,
            None => {
                if need_f0 {
                    inst.f0(x_cur)
                } else {
                    f64::NAN
                }
            }
        };
        // Objective magnitudes past the representable range abort before
        // anything non-finite reaches the logs.
        if !active.f_bound.is_finite() || (need_f0 && !f0_x.is_finite()) {
            diverged = Some(DivergenceEvent {
                t,
                magnitude: norm(x_cur),
            });
            t_final = t;
            break;
        }
        let pbar_rules_open = hits.pbar.is_none() || hits.pbar_d.is_none();
        let want_pbar = record || (tracking && pbar_rules_open);
        if record || tracking {
            observe(
                inst,
                t,
                x_cur,
                active.s,
                f0_x,
                model_active,
                w_feas.value(),
                sum_f_feas.value(),
                &sum_x,
                (prev_sum_lambda, prev_ln_sum_lambda, prev_sum_lambda_alpha),
                Some((step.alpha, step.lambda)),
                p_star,
                ref_opt.as_ref(),
                want_pbar,
                record,
                &mut rows,
                &mut hits,
                cfg.track_eps,
                &w_cons,
                count_feas,
            );
        }

        // Reference suboptimalities, growth checks.
        if let Some(r) = &ref_opt {
            let d_opt = r.delta(active.s, active.f_bound, x_cur);
            if t < cfg.delta_history_cap {
                delta_opt_hist.push(d_opt);
            }
            let entry = max_abs_delta_opt.get_or_insert(0.0);
            *entry = entry.max(d_opt.abs());
            if cfg.check_growth {
                if let (Some(l0_sq), Some(l1)) = (l0_sq_c, l1_c) {
                    let mut g_norm2 = 0.0;
                    if active.s == 0 && !r.n_y_zero {
                        for (gi, ni) in active.g.iter().zip(r.n_y.iter()) {
                            let v = gi + ni;
                            g_norm2 += v * v;
                        }
                    } else {
                        for gi in active.g.iter() {
                            g_norm2 += gi * gi;
                        }
                    }
                    let excess = g_norm2 - l1 * d_opt;
                    let slot = grad_growth_excess.get_or_insert(f64::NEG_INFINITY);
                    *slot = slot.max(excess);
                    if l1 > 0.0 {
                        let rhs = l1 * dist2(x_cur, &r.y) + l0_sq / l1;
                        if rhs > 0.0 {
                            let ratio = d_opt.abs() / rhs;
                            let slot = growth_ratio_max.get_or_insert(0.0);
                            *slot = slot.max(ratio);
                        }
                    }
                }
            }
        }
        if let Some(r) = &ref_sl {
            let d_sl = r.delta(active.s, active.f_bound, x_cur);
            if t < cfg.delta_history_cap {
                delta_sl_hist.push(d_sl);
            }
            let entry = max_abs_delta_sl.get_or_insert(0.0);
            *entry = entry.max(d_sl.abs());
        }

        // Model co-update and weighted accumulators (from the active run).
        if let Some(sp) = &sp {
            append_step(&mut model_p, inst, &xp, step.lambda, sp)?;
        }
        if let Some(sd) = &sd {
            append_step(&mut model_d, inst, &yd, step.lambda, sd)?;
        }
        if active.s == 0 {
            w_feas.add(step.lambda);
            let f_full = f0_x + inst.regularizer.value(x_cur);
            sum_f_feas.add(step.lambda * f_full);
            sum_x.add_scaled(step.lambda, x_cur);
            count_feas += 1;
        } else {
            w_cons[active.s - 1].add(step.lambda);
        }
        let nx = norm(x_cur);
        if nx > max_norm_x {
            max_norm_x = nx;
            peak_norm_t = t;
        }
        prev_sum_lambda = step.sum_lambda;
        prev_ln_sum_lambda = step.ln_sum_lambda;
        prev_sum_lambda_alpha = step.sum_lambda_alpha;

        // Advance.
        let mut bad = !active.f_bound.is_finite();
        if let Some(sp) = sp {
            xp = sp.next;
            bad |= xp.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT);
        }
        if let Some(sd) = sd {
            yd = sd.next;
            bad |= yd.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT);
        }
        if run_primal && run_dual {
            let dev = xp
                .iter()
                .zip(yd.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            max_dev = max_dev.max(dev / (1.0 + norm(&xp)));
        }
        if bad {
            let mag = if run_primal { norm(&xp) } else { norm(&yd) };
            diverged = Some(DivergenceEvent {
                t: t + 1,
                magnitude: mag,
            });
            t_final = t + 1;
            break;
        }
        if cfg.stop_when_all_hit && hits.all_hit() {
            t_final = t + 1;
            break;
        }
    }

    let (x_final, model_active) = if run_primal {
        (xp, &model_p)
    } else {
        (yd, &model_d)
    };
    if diverged.is_none() {
        let t = t_final;
        let s_t = switching_select(inst, &x_final);
        let f0_x = inst.f0(&x_final);
        observe(
            inst,
            t,
            &x_final,
            s_t,
            f0_x,
            model_active,
            w_feas.value(),
            sum_f_feas.value(),
            &sum_x,
            (prev_sum_lambda, prev_ln_sum_lambda, prev_sum_lambda_alpha),
            None,
            p_star,
            ref_opt.as_ref(),
            true,
            true,
            &mut rows,
            &mut hits,
            cfg.track_eps,
            &w_cons,
            count_feas,
        );
        let nx = norm(&x_final);
        if nx > max_norm_x {
            max_norm_x = nx;
            peak_norm_t = t_final;
        }
    }

    let xbar_final = if w_feas.value() > 0.0 {
        Some(sum_x.value() / w_feas.value())
    } else {
        None
    };
    Ok(RunLog {
        name: inst.name.clone(),
        method: cfg.method.as_str().to_string(),
        schedule: schedule.name(),
        beta_bar,
        noise_seed: cfg.noise_seed,
        t_final,
        rows,
        x_final,
        xbar_final,
        delta_opt_hist,
        delta_sl_hist,
        max_abs_delta_opt,
        max_abs_delta_sl,
        grad_growth_excess,
        growth_ratio_max,
        max_norm_x,
        peak_norm_t,
        max_dev,
        first_hits: hits,
        track_eps: cfg.track_eps,
        diverged,
        model: model_active.snapshot(),
        count_feasible: count_feas,
        constraint_weights: w_cons.iter().map(|k| k.value()).collect(),
        sum_lambda: prev_sum_lambda,
        sum_lambda_feas: w_feas.value(),
        sum_lambda_alpha: prev_sum_lambda_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gen_constrained, gen_l1_ls, toy_divergent, BallConstraint, Constants, Instance, Objective, References, Regularizer};
    use crate::schedule::Schedule;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn toy_first_primal_step_is_explicit() {
        // Linear weights give alpha_0 = 2/(mu*2) = 1, so from (1,0) with
        // gradient (100, 0) the first iterate is (-99, 0).
        let inst = toy_divergent();
        let sched = Schedule::linear(1.0).unwrap();
        let cfg = RunConfig::new(Method::Primal, 1);
        let log = run(&inst, &sched, &cfg).unwrap();
        assert_eq!(log.x_final[0], -99.0);
        assert_eq!(log.x_final[1], 0.0);
    }

    #[test]
    fn dual_first_step_matches_closed_form() {
        // With an empty model, no constraints and r = 0, the first dual
        // iterate is y0 - alpha_0 * g(y0).
        let inst = gen_l1_ls(4, 3, 0.0, 9).unwrap();
        let sched = Schedule::uniform(inst.mu()).unwrap();
        let alpha0 = sched.steps(1).unwrap()[0].alpha;
        let (_, g) = inst.eval_objective(&inst.x0);
        let expected = &inst.x0 - &(&g * alpha0);
        let cfg = RunConfig::new(Method::Dual, 1);
        let log = run(&inst, &sched, &cfg).unwrap();
        for i in 0..3 {
            assert_relative_eq!(log.x_final[i], expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_iteration_run_logs_initial_state() {
        let inst = toy_divergent();
        let sched = Schedule::linear(1.0).unwrap();
        let cfg = RunConfig::new(Method::Both, 0);
        let log = run(&inst, &sched, &cfg).unwrap();
        assert_eq!(log.t_final, 0);
        assert_eq!(log.rows.len(), 1);
        assert_eq!(log.rows[0].t, 0);
        assert!(log.rows[0].dual_bound.is_none());
        assert_eq!(log.x_final, inst.x0);
    }

    #[test]
    fn both_mode_trajectories_coincide() {
        let toy = toy_divergent();
        let sched = Schedule::linear(1.0).unwrap();
        let mut cfg = RunConfig::new(Method::Both, 500);
        let log = run(&toy, &sched, &cfg).unwrap();
        assert!(
            log.max_dev <= 1e-9,
            "toy deviation {} with peak {}",
            log.max_dev,
            log.max_norm_x
        );
        let l1ls = gen_l1_ls(20, 20, 0.01, 3).unwrap();
        let sched = Schedule::optimized(l1ls.mu()).unwrap();
        cfg.t_max = 300;
        let log = run(&l1ls, &sched, &cfg).unwrap();
        assert!(log.max_dev <= 1e-9);
    }

    #[test]
    fn shared_noise_keeps_methods_paired() {
        let inst = gen_l1_ls(10, 8, 0.0, 5).unwrap().with_noise(0.3);
        let sched = Schedule::linear(inst.mu()).unwrap();
        let mut cfg = RunConfig::new(Method::Both, 200);
        cfg.noise_seed = 42;
        let log = run(&inst, &sched, &cfg).unwrap();
        assert!(
            log.max_dev <= 1e-9,
            "stochastic deviation {}",
            log.max_dev
        );
        // And a different seed gives a genuinely different trajectory.
        let mut cfg2 = RunConfig::new(Method::Primal, 200);
        cfg2.noise_seed = 43;
        let log2 = run(&inst, &sched, &cfg2).unwrap();
        let moved = log
            .x_final
            .iter()
            .zip(log2.x_final.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(moved > 1e-12);
    }

    #[test]
    fn switching_selects_smallest_violated_index() {
        let inst = Instance {
            name: "switch".into(),
            n: 2,
            objective: Objective::SqDist {
                center: array![0.0, 0.0],
            },
            constraints: vec![
                BallConstraint {
                    center: array![1.0, 0.0],
                    rho: 1.0,
                },
                BallConstraint {
                    center: array![0.0, 1.0],
                    rho: 1.0,
                },
            ],
            regularizer: Regularizer::Zero,
            noise_sigma: 0.0,
            x0: array![0.0, 0.0],
            refs: References::default(),
            constants: Constants {
                mu: 1.0,
                l0_sq: None,
                l1: None,
            },
            seed: 0,
        };
        // Violates both -> smallest index 1.
        assert_eq!(switching_select(&inst, &array![5.0, 5.0]), 1);
        // Inside ball 1, outside ball 2 -> 2.
        assert_eq!(switching_select(&inst, &array![2.0, 0.0]), 2);
        // Inside both -> feasible.
        assert_eq!(switching_select(&inst, &array![0.5, 0.5]), 0);
        // Exactly on ball 1's boundary counts as feasible (strict violation
        // test), so the selector moves on to ball 2 which is violated.
        let boundary = array![2.0, 1.0];
        assert_eq!(inst.constraints[0].value(&boundary), 0.0);
        assert_eq!(switching_select(&inst, &boundary), 2);
    }

    #[test]
    fn l1_prox_step_recovers_regularizer_subgradient() {
        let inst = gen_l1_ls(6, 5, 0.0, 8)
            .unwrap()
            .with_regularizer(Regularizer::L1 { weight: 0.7 });
        let mut x = array![1.0, -2.0, 0.4, 0.0, 3.0];
        for k in 0..50 {
            let alpha = 2.0 / (1.0 * (k as f64 + 2.0));
            let step = primal_step(&inst, &x, alpha, None);
            // x_{k+1} = x_k - alpha (g + n) by construction.
            let rebuilt = &x - &((&step.g + &step.n_next) * alpha);
            for i in 0..5 {
                assert_relative_eq!(rebuilt[i], step.next[i], epsilon = 1e-9);
            }
            // n is a valid subgradient of 0.7 ||.||_1 at the next iterate.
            for i in 0..5 {
                let ni = step.n_next[i];
                assert!(ni.abs() <= 0.7 * (1.0 + 1e-9));
                if step.next[i] != 0.0 {
                    assert_relative_eq!(ni, 0.7 * step.next[i].signum(), epsilon = 1e-9);
                }
            }
            x = step.next;
        }
    }

    #[test]
    fn ball_regularizer_keeps_iterates_inside() {
        let inst = gen_l1_ls(6, 4, 0.0, 12)
            .unwrap()
            .with_regularizer(Regularizer::Ball { radius: 1.0 });
        let sched = Schedule::linear(inst.mu()).unwrap();
        let cfg = RunConfig::new(Method::Primal, 100);
        let log = run(&inst, &sched, &cfg).unwrap();
        // Every recorded iterate from t >= 1 lies in the unit ball.
        for row in log.rows.iter().filter(|r| r.t >= 1) {
            assert!(row.norm_x <= 1.0 + 1e-12, "t={} norm={}", row.t, row.norm_x);
        }
        assert!(norm(&log.x_final) <= 1.0 + 1e-12);
    }

    #[test]
    fn divergence_is_reported_not_propagated() {
        // A monstrously stiff quadratic under weight-based stepsizes
        // overshoots beyond the abort threshold within ~100 iterations.
        let inst = Instance {
            name: "stiff".into(),
            n: 2,
            objective: Objective::DiagQuad {
                h: array![1.0e6, 1.0],
            },
            constraints: vec![],
            regularizer: Regularizer::Zero,
            noise_sigma: 0.0,
            x0: array![1.0, 0.0],
            refs: References::default(),
            constants: Constants {
                mu: 1.0,
                l0_sq: Some(0.0),
                l1: Some(4.0e6),
            },
            seed: 0,
        };
        let sched = Schedule::linear(1.0).unwrap();
        let cfg = RunConfig::new(Method::Primal, 2000);
        let log = run(&inst, &sched, &cfg).unwrap();
        let event = log.diverged.expect("run should abort");
        assert!(event.t < 2000);
        assert_eq!(log.t_final, event.t);
        // No non-finite values leak into recorded rows.
        for row in &log.rows {
            assert!(row.f_x.is_finite());
            assert!(row.norm_x.is_finite());
        }
    }

    #[test]
    fn constrained_run_accumulates_constraint_weights() {
        let inst = gen_constrained(3, 2, 7).unwrap();
        let sched = Schedule::linear(1.0).unwrap();
        let mut cfg = RunConfig::new(Method::Primal, 2000);
        cfg.delta_history_cap = 64;
        let log = run(&inst, &sched, &cfg).unwrap();
        // x0 = 0 is infeasible for generated instances often enough that some
        // switching happened; in any case weights are consistent.
        let total_feas = log.sum_lambda_feas;
        let total: f64 = log.sum_lambda;
        let cons_sum: f64 = log.constraint_weights.iter().sum();
        assert_relative_eq!(total_feas + cons_sum, total, max_relative = 1e-9);
        assert_eq!(log.delta_opt_hist.len(), 64);
        assert_eq!(log.delta_sl_hist.len(), 64);
        // Late iterates approach the constrained optimum.
        let xo = inst.refs.x_opt.clone().unwrap();
        let d2 = dist2(&log.x_final, &xo);
        assert!(d2 < 1e-4, "final squared distance {d2}");
    }

    #[test]
    fn first_hit_tracking_orders_certificates() {
        let inst = gen_l1_ls(6, 6, 0.0, 21).unwrap();
        let sched = Schedule::linear(inst.mu()).unwrap();
        let mut cfg = RunConfig::new(Method::Primal, 200_000);
        cfg.track_eps = Some(0.5);
        cfg.stop_when_all_hit = true;
        cfg.record_every = usize::MAX;
        let log = run(&inst, &sched, &cfg).unwrap();
        let h = &log.first_hits;
        for rule in ALL_RULES {
            assert!(h.get(rule).is_some(), "{rule:?} never hit");
        }
        // Composite rules can never fire before their plain counterparts.
        assert!(h.pbar_d.unwrap() >= h.pbar.unwrap());
        assert!(h.delta_d.unwrap() >= h.delta.unwrap());
        assert!(h.p_d.unwrap() >= h.p.unwrap());
        assert!(h.pbar_d.unwrap() >= h.d.unwrap());
        // Early stop triggered before the cap.
        assert!(log.t_final < 200_000);
    }
}
