//! Stepsize/dual-weight algebra: conversions between primal stepsizes
//! `alpha_k` and dual-averaging weights `lambda_k`, canned schedule families,
//! greedy rate-optimal weight selection, and the convergence-rate bound.
//!
//! Every schedule maintains the pairing invariant
//! `alpha_k = lambda_k / (mu * sum_{i<=k} lambda_i + beta_bar)`,
//! which is exactly the condition under which the primal subgradient method
//! and the dual-averaging method produce identical iterates.

use crate::num::{power_sum, Kahan};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative consistency tolerance for user-supplied `(alpha, lambda)` pairs.
const PAIR_TOL: f64 = 1e-9;

/// One emitted `(alpha_k, lambda_k)` pair together with the running sums the
/// solvers and certificates consume. Sums are inclusive of index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub k: usize,
    /// Primal stepsize `alpha_k` (always finite and positive).
    pub alpha: f64,
    /// Dual weight `lambda_k`. For geometric-weight schedules this overflows
    /// to `+inf` past roughly `k = 700 * L1/mu`; `ln_lambda` stays finite.
    pub lambda: f64,
    /// `ln(lambda_k)`, exact even where `lambda` overflows.
    pub ln_lambda: f64,
    /// `sum_{i<=k} lambda_i` (may overflow like `lambda`).
    pub sum_lambda: f64,
    /// `ln(sum_{i<=k} lambda_i)`, finite even where `sum_lambda` overflows.
    pub ln_sum_lambda: f64,
    /// `sum_{i<=k} lambda_i * alpha_i`.
    pub sum_lambda_alpha: f64,
    /// Normalized weight `lambda_k / sum_{i<=k} lambda_i`, computed stably;
    /// this ratio (not raw `lambda`) is what the algorithms need at scale.
    pub lambda_ratio: f64,
}

/// Schedule family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Kind {
    /// `lambda_k = 1`.
    Uniform,
    /// `lambda_k = k + 1`.
    Linear,
    /// `lambda_k = (k+1)^p`, `p <= 4` (running sums use exact power-sum
    /// formulas, so no drift over long runs).
    Poly { p: u32 },
    /// Greedy weights minimizing the rate bound at each index:
    /// `lambda_T = (S_lambda * S_lambda_alpha) / (S_lambda * 2/mu - S_lambda_alpha)`
    /// over the prefix sums, then `alpha_T` from the pairing invariant.
    Optimized,
    /// `alpha_0 = 1/mu`, `alpha_k = 1/l1` thereafter; the matching weights
    /// `lambda_k = (mu/l1)(1 - mu/l1)^{-k}` grow geometrically and are kept
    /// in log space.
    Smooth { l1: f64 },
    /// Stepsize-capped family `alpha_k = min(1/l1, 2/(mu (k+2)))`. With
    /// `cap_first = false` the first step is exempt (`alpha_0 = 1/mu`,
    /// pairing constant `beta_bar = 0`); with `cap_first = true` the cap
    /// applies from `k = 0` (pairing constant `beta_bar = l1 - mu` when
    /// `l1 > mu`).
    Capped { l1: f64, cap_first: bool },
    /// User-supplied stepsizes; weights follow from the conversion
    /// recurrence with the given `lambda0`.
    Explicit { alphas: Vec<f64>, lambda0: f64 },
}

/// An immutable `(alpha_k, lambda_k)` schedule. Construct via the named
/// constructors, then iterate with [`Schedule::cursor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    mu: f64,
    beta_bar: f64,
    kind: Kind,
}

impl Schedule {
    fn new(mu: f64, beta_bar: f64, kind: Kind) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "strong-convexity modulus must be finite and nonnegative, got {mu}"
            )));
        }
        if !(beta_bar >= 0.0) || !beta_bar.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "beta_bar must be finite and nonnegative, got {beta_bar}"
            )));
        }
        if mu == 0.0 && beta_bar == 0.0 {
            return Err(Error::InvalidSchedule(
                "mu and beta_bar cannot both be zero".into(),
            ));
        }
        Ok(Schedule { mu, beta_bar, kind })
    }

    /// `lambda_k = 1` (for `mu > 0`, `beta_bar = 0` this is `alpha_k = 1/(mu (k+1))`).
    pub fn uniform(mu: f64) -> Result<Self> {
        Self::new(mu, 0.0, Kind::Uniform)
    }

    /// `lambda_k = k+1` (for `beta_bar = 0` this is `alpha_k = 2/(mu (k+2))`).
    pub fn linear(mu: f64) -> Result<Self> {
        Self::new(mu, 0.0, Kind::Linear)
    }

    /// `lambda_k = (k+1)^p` with `p <= 4`.
    pub fn poly(mu: f64, p: u32) -> Result<Self> {
        if p > 4 {
            return Err(Error::InvalidSchedule(format!(
                "polynomial weight degree must be <= 4, got {p}"
            )));
        }
        Self::new(mu, 0.0, Kind::Poly { p })
    }

    /// Greedy rate-optimal weights starting from `lambda_0 = 1`,
    /// `alpha_0 = 1/mu`.
    pub fn optimized(mu: f64) -> Result<Self> {
        if mu <= 0.0 {
            return Err(Error::InvalidSchedule(
                "optimized schedule requires mu > 0".into(),
            ));
        }
        Self::new(mu, 0.0, Kind::Optimized)
    }

    /// Geometric schedule for `l1`-smooth objectives: `alpha_0 = 1/mu`,
    /// `alpha_k = 1/l1` thereafter. Requires `l1 > mu > 0`.
    pub fn smooth(mu: f64, l1: f64) -> Result<Self> {
        if !(mu > 0.0) || !(l1 > mu) || !l1.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "smooth schedule requires l1 > mu > 0, got mu={mu}, l1={l1}"
            )));
        }
        Self::new(mu, 0.0, Kind::Smooth { l1 })
    }

    /// Capped stepsizes `alpha_k = min(1/l1, 2/(mu (k+2)))`. See [`Kind::Capped`]
    /// for the `cap_first` variants.
    pub fn capped(mu: f64, l1: f64, cap_first: bool) -> Result<Self> {
        if !(mu > 0.0) || !(l1 > 0.0) || !l1.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "capped schedule requires mu > 0 and l1 > 0, got mu={mu}, l1={l1}"
            )));
        }
        let beta_bar = if cap_first {
            // lambda_0/alpha_0 - mu*lambda_0 with lambda_0 = 1, alpha_0 = min(1/l1, 1/mu)
            (l1.max(mu)) - mu
        } else {
            0.0
        };
        Self::new(mu, beta_bar, Kind::Capped { l1, cap_first })
    }

    /// Schedule from an explicit stepsize list. `beta_bar` is implied by the
    /// first stepsize via `beta_bar = lambda0 (1/alpha_0 - mu)`, the unique
    /// value consistent with the pairing invariant.
    pub fn from_alphas(alphas: Vec<f64>, lambda0: f64, mu: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidSchedule("empty stepsize list".into()));
        }
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "lambda0 must be positive and finite, got {lambda0}"
            )));
        }
        if !(mu > 0.0) {
            return Err(Error::InvalidSchedule(
                "explicit schedules require mu > 0".into(),
            ));
        }
        validate_alphas(&alphas, mu)?;
        let beta_bar = (lambda0 * (1.0 / alphas[0] - mu)).max(0.0);
        Self::new(mu, beta_bar, Kind::Explicit { alphas, lambda0 })
    }

    /// Re-pair the same weights `lambda_k` with a different `beta_bar`
    /// (stepsizes change via the pairing invariant). Only weight-defined
    /// families support this; stepsize-defined and rate-optimized families
    /// are tied to their construction-time pairing.
    pub fn with_beta_bar(self, beta_bar: f64) -> Result<Self> {
        match self.kind {
            Kind::Uniform | Kind::Linear | Kind::Poly { .. } => {
                Self::new(self.mu, beta_bar, self.kind)
            }
            _ if beta_bar == self.beta_bar => Ok(self),
            _ => Err(Error::InvalidSchedule(format!(
                "schedule family {:?} does not support re-pairing with beta_bar={beta_bar}",
                self.kind
            ))),
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// Short name used in CSV/JSON output.
    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Uniform => "uniform".into(),
            Kind::Linear => "linear".into(),
            Kind::Poly { p } => format!("poly{p}"),
            Kind::Optimized => "optimized".into(),
            Kind::Smooth { .. } => "smooth".into(),
            Kind::Capped { cap_first: false, .. } => "capped".into(),
            Kind::Capped { cap_first: true, .. } => "capped-full".into(),
            Kind::Explicit { .. } => "explicit".into(),
        }
    }

    pub fn cursor(&self) -> Cursor<'_> {
        Cursor {
            schedule: self,
            k: 0,
            sum_lambda: Kahan::new(),
            sum_lambda_alpha: Kahan::new(),
            prev: None,
        }
    }

    /// First `n` steps, materialized.
    pub fn steps(&self, n: usize) -> Result<Vec<Step>> {
        let mut cur = self.cursor();
        (0..n).map(|_| cur.next_step()).collect()
    }

    /// Convergence-rate bound after `t >= 1` iterations:
    /// `(l0_sq * sum_{k<t} lambda_k alpha_k + c0) / sum_{k<t} lambda_k`.
    pub fn rate_bound(&self, t: usize, l0_sq: f64, c0: f64) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidSchedule(
                "rate bound needs at least one iteration".into(),
            ));
        }
        if !(l0_sq >= 0.0) || !(c0 >= 0.0) {
            return Err(Error::InvalidSchedule(
                "rate bound requires l0_sq >= 0 and c0 >= 0".into(),
            ));
        }
        let last = self.steps(t)?.pop().expect("t >= 1");
        Ok((l0_sq * last.sum_lambda_alpha + c0) / last.sum_lambda)
    }
}

fn validate_alphas(alphas: &[f64], mu: f64) -> Result<()> {
    for (k, &a) in alphas.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{k} must be positive and finite, got {a}"
            )));
        }
        if k == 0 {
            if mu * a > 1.0 + PAIR_TOL {
                return Err(Error::InvalidSchedule(format!(
                    "alpha_0 = {a} exceeds 1/mu = {}",
                    1.0 / mu
                )));
            }
        } else if mu * a >= 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{k} = {a} must be strictly below 1/mu = {} for k >= 1",
                1.0 / mu
            )));
        }
    }
    Ok(())
}

/// Streaming generator over a schedule's `(alpha_k, lambda_k)` pairs.
#[derive(Debug, Clone)]
pub struct Cursor<'a> {
    schedule: &'a Schedule,
    k: usize,
    /// `sum_{i<k} lambda_i` (exclusive of the step about to be emitted).
    sum_lambda: Kahan,
    sum_lambda_alpha: Kahan,
    prev: Option<(f64, f64)>, // (lambda_{k-1}, alpha_{k-1})
}

/// Internal per-step emission before state update.
struct Emit {
    lambda: f64,
    ln_lambda: f64,
    alpha: f64,
    /// Exact closed-form value of `sum_{i<=k} lambda_i`, when the family has
    /// one; `None` means "accumulate lambda into the running Kahan sum".
    exact_sum: Option<(f64, f64)>, // (sum, ln_sum)
}

impl Cursor<'_> {
    pub fn next_step(&mut self) -> Result<Step> {
        let k = self.k;
        let mu = self.schedule.mu;
        let beta_bar = self.schedule.beta_bar;

        let e = match &self.schedule.kind {
            Kind::Uniform | Kind::Linear | Kind::Poly { .. } => {
                let p = match self.schedule.kind {
                    Kind::Uniform => 0,
                    Kind::Linear => 1,
                    Kind::Poly { p } => p,
                    _ => unreachable!(),
                };
                let lambda = ((k + 1) as f64).powi(p as i32);
                let sum = power_sum(p, (k + 1) as u64);
                let alpha = lambda / (mu * sum + beta_bar);
                Emit {
                    lambda,
                    ln_lambda: lambda.ln(),
                    alpha,
                    exact_sum: Some((sum, sum.ln())),
                }
            }
            Kind::Optimized => {
                let lambda = if k == 0 {
                    1.0
                } else {
                    let s_l = self.sum_lambda.value();
                    let s_la = self.sum_lambda_alpha.value();
                    let denom = s_l * (2.0 / mu) - s_la;
                    if !(denom > 0.0) {
                        return Err(Error::InvalidSchedule(format!(
                            "degenerate optimized-weight denominator {denom} at k={k}"
                        )));
                    }
                    s_l * s_la / denom
                };
                let sum = self.sum_lambda.value() + lambda;
                let alpha = lambda / (mu * sum + beta_bar);
                Emit {
                    lambda,
                    ln_lambda: lambda.ln(),
                    alpha,
                    exact_sum: None,
                }
            }
            Kind::Smooth { l1 } => {
                let q = mu / l1;
                // -ln(1-q) > 0; lambda_k = q (1-q)^{-k}, sum_{i<=k} = (1-q)^{-k}.
                let rate = -(-q).ln_1p();
                let (ln_lambda, ln_sum) = if k == 0 {
                    (0.0, 0.0)
                } else {
                    (q.ln() + k as f64 * rate, k as f64 * rate)
                };
                // alpha = 1/(mu * sum/lambda + beta_bar/lambda); the ratio
                // sum/lambda telescopes to exactly 1/q for k >= 1, and using
                // that closed form keeps alpha_k = 1/l1 bit-for-bit constant
                // (recovering it from the log-space terms wobbles by an ulp).
                let sum_over_lambda = if k == 0 { 1.0 } else { l1 / mu };
                let alpha = 1.0 / (mu * sum_over_lambda + beta_bar * (-ln_lambda).exp());
                Emit {
                    lambda: ln_lambda.exp(),
                    ln_lambda,
                    alpha,
                    exact_sum: Some((ln_sum.exp(), ln_sum)),
                }
            }
            Kind::Capped { l1, cap_first } => {
                let raw = 2.0 / (mu * (k + 2) as f64);
                let alpha = if k == 0 && !cap_first {
                    1.0 / mu
                } else {
                    raw.min(1.0 / l1)
                };
                let lambda = self.lambda_from_recurrence(k, alpha, 1.0, mu)?;
                Emit {
                    lambda,
                    ln_lambda: lambda.ln(),
                    alpha,
                    exact_sum: None,
                }
            }
            Kind::Explicit { alphas, lambda0 } => {
                let alpha = *alphas.get(k).ok_or_else(|| {
                    Error::InvalidSchedule(format!(
                        "explicit stepsize list exhausted at k={k} (length {})",
                        alphas.len()
                    ))
                })?;
                let lambda = self.lambda_from_recurrence(k, alpha, *lambda0, mu)?;
                Emit {
                    lambda,
                    ln_lambda: lambda.ln(),
                    alpha,
                    exact_sum: None,
                }
            }
        };

        if !(e.lambda > 0.0) || !(e.alpha > 0.0) || !e.alpha.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "schedule emitted nonpositive pair alpha_{k}={}, lambda_{k}={}",
                e.alpha, e.lambda
            )));
        }

        let (sum_lambda, ln_sum_lambda) = match e.exact_sum {
            Some((sum, ln_sum)) => {
                self.sum_lambda = Kahan::from(sum);
                (sum, ln_sum)
            }
            None => {
                self.sum_lambda.add(e.lambda);
                let sum = self.sum_lambda.value();
                (sum, sum.ln())
            }
        };
        self.sum_lambda_alpha.add(e.lambda * e.alpha);
        self.prev = Some((e.lambda, e.alpha));
        self.k += 1;

        let lambda_ratio = if e.lambda.is_finite() && sum_lambda.is_finite() {
            e.lambda / sum_lambda
        } else {
            (e.ln_lambda - ln_sum_lambda).exp()
        };

        Ok(Step {
            k,
            alpha: e.alpha,
            lambda: e.lambda,
            ln_lambda: e.ln_lambda,
            sum_lambda,
            ln_sum_lambda,
            sum_lambda_alpha: self.sum_lambda_alpha.value(),
            lambda_ratio,
        })
    }

    /// Weight update `lambda_{k} = (alpha_k/(1 - mu alpha_k)) * (lambda_{k-1}/alpha_{k-1})`.
    fn lambda_from_recurrence(&self, k: usize, alpha: f64, lambda0: f64, mu: f64) -> Result<f64> {
        if k == 0 {
            return Ok(lambda0);
        }
        let (pl, pa) = self.prev.expect("k >= 1 implies a previous step");
        let denom = 1.0 - mu * alpha;
        if !(denom > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{k} = {alpha} >= 1/mu breaks the weight recurrence"
            )));
        }
        Ok(alpha / denom * (pl / pa))
    }
}

/// Weights from stepsizes via the conversion recurrence. Preconditions:
/// `alpha_0` must be consistent with `(lambda0, beta_bar, mu)` under the
/// pairing invariant, and `alpha_k < 1/mu` strictly for `k >= 1`.
pub fn lambda_from_alpha(
    alphas: &[f64],
    lambda0: f64,
    beta_bar: f64,
    mu: f64,
) -> Result<Vec<f64>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidSchedule(format!(
            "conversion requires mu > 0, got {mu}"
        )));
    }
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return Err(Error::InvalidSchedule(format!(
            "lambda0 must be positive, got {lambda0}"
        )));
    }
    if !(beta_bar >= 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "beta_bar must be nonnegative, got {beta_bar}"
        )));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidSchedule("empty stepsize list".into()));
    }
    validate_alphas(alphas, mu)?;
    let a0_expected = lambda0 / (mu * lambda0 + beta_bar);
    if (alphas[0] - a0_expected).abs() > PAIR_TOL * a0_expected {
        return Err(Error::InvalidSchedule(format!(
            "alpha_0 = {} is inconsistent with lambda0/(mu lambda0 + beta_bar) = {}",
            alphas[0], a0_expected
        )));
    }
    let mut out = Vec::with_capacity(alphas.len());
    out.push(lambda0);
    for k in 1..alphas.len() {
        let a = alphas[k];
        let lam = a / (1.0 - mu * a) * (out[k - 1] / alphas[k - 1]);
        out.push(lam);
    }
    Ok(out)
}

/// Stepsizes from weights: `alpha_k = lambda_k / (mu sum_{i<=k} lambda_i + beta_bar)`.
/// Accepts `mu = 0` provided `beta_bar > 0`.
pub fn alpha_from_lambda(lambdas: &[f64], beta_bar: f64, mu: f64) -> Result<Vec<f64>> {
    if !(mu >= 0.0) || !(beta_bar >= 0.0) {
        return Err(Error::InvalidSchedule(
            "mu and beta_bar must be nonnegative".into(),
        ));
    }
    if mu == 0.0 && beta_bar == 0.0 {
        return Err(Error::InvalidSchedule(
            "mu and beta_bar cannot both be zero".into(),
        ));
    }
    let mut sum = Kahan::new();
    let mut out = Vec::with_capacity(lambdas.len());
    for (k, &l) in lambdas.iter().enumerate() {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "lambda_{k} must be positive and finite, got {l}"
            )));
        }
        sum.add(l);
        out.push(l / (mu * sum.value() + beta_bar));
    }
    Ok(out)
}

/// Greedy rate-optimal next pair from a prefix (paired slices of equal
/// length `T >= 1`):
/// `lambda_T = (S_l * S_la) / (S_l * 2/mu - S_la)`, `alpha_T = lambda_T / (mu S_l')`.
pub fn optimized_next_weight(lambdas: &[f64], alphas: &[f64], mu: f64) -> Result<(f64, f64)> {
    if lambdas.is_empty() || lambdas.len() != alphas.len() {
        return Err(Error::InvalidSchedule(
            "prefix must be nonempty paired slices".into(),
        ));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidSchedule("requires mu > 0".into()));
    }
    let mut s_l = Kahan::new();
    let mut s_la = Kahan::new();
    for (&l, &a) in lambdas.iter().zip(alphas) {
        s_l.add(l);
        s_la.add(l * a);
    }
    let denom = s_l.value() * (2.0 / mu) - s_la.value();
    if !(denom > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "degenerate optimized-weight denominator {denom}"
        )));
    }
    let lambda_t = s_l.value() * s_la.value() / denom;
    let alpha_t = lambda_t / (mu * (s_l.value() + lambda_t));
    Ok((lambda_t, alpha_t))
}

/// Rate bound over an explicit prefix:
/// `(l0_sq * sum lambda_k alpha_k + c0) / sum lambda_k`.
pub fn rate_bound_prefix(lambdas: &[f64], alphas: &[f64], l0_sq: f64, c0: f64) -> Result<f64> {
    if lambdas.is_empty() || lambdas.len() != alphas.len() {
        return Err(Error::InvalidSchedule(
            "prefix must be nonempty paired slices".into(),
        ));
    }
    if !(l0_sq >= 0.0) || !(c0 >= 0.0) {
        return Err(Error::InvalidSchedule(
            "rate bound requires l0_sq >= 0 and c0 >= 0".into(),
        ));
    }
    let mut s_l = Kahan::new();
    let mut s_la = Kahan::new();
    for (&l, &a) in lambdas.iter().zip(alphas) {
        s_l.add(l);
        s_la.add(l * a);
    }
    Ok((l0_sq * s_la.value() + c0) / s_l.value())
}

/// Config-file representation of a schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Uniform {
        mu: f64,
        #[serde(default)]
        beta_bar: f64,
    },
    Linear {
        mu: f64,
        #[serde(default)]
        beta_bar: f64,
    },
    Poly {
        mu: f64,
        p: u32,
        #[serde(default)]
        beta_bar: f64,
    },
    Optimized {
        mu: f64,
    },
    Smooth {
        mu: f64,
        l1: f64,
    },
    Capped {
        mu: f64,
        l1: f64,
        #[serde(default)]
        cap_first: bool,
    },
    Explicit {
        mu: f64,
        alphas: Vec<f64>,
        #[serde(default = "default_lambda0")]
        lambda0: f64,
    },
}

fn default_lambda0() -> f64 {
    1.0
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        match self {
            ScheduleSpec::Uniform { mu, beta_bar } => Schedule::uniform(*mu)?.with_beta_bar(*beta_bar),
            ScheduleSpec::Linear { mu, beta_bar } => Schedule::linear(*mu)?.with_beta_bar(*beta_bar),
            ScheduleSpec::Poly { mu, p, beta_bar } => Schedule::poly(*mu, *p)?.with_beta_bar(*beta_bar),
            ScheduleSpec::Optimized { mu } => Schedule::optimized(*mu),
            ScheduleSpec::Smooth { mu, l1 } => Schedule::smooth(*mu, *l1),
            ScheduleSpec::Capped { mu, l1, cap_first } => Schedule::capped(*mu, *l1, *cap_first),
            ScheduleSpec::Explicit { mu, alphas, lambda0 } => {
                Schedule::from_alphas(alphas.clone(), *lambda0, *mu)
            }
        }
    }
}
