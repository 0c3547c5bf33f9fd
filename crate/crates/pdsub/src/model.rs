//! Exact maintenance of the aggregate dual model as a single quadratic in
//! normal form `M(y) = min_value + (curvature/2) ||y - center||^2`.
//!
//! Sums of such quadratics, and sums with affine terms, are again of this
//! form, so the model is folded incrementally in O(dimension) memory no
//! matter how many lower bounds have been aggregated.

use crate::num::Kahan;
use crate::{Error, Result};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Aggregate model in normal form. The empty model (no curvature yet) is an
/// explicit state — `center` is `None` exactly when `curvature == 0` — so
/// center updates never divide by zero.
///
/// Extreme early-growth trajectories can push a term's data beyond the
/// double range. Folding such a term would turn the tracked minimum into
/// NaN, so the model instead flags itself as overflowed and reports the only
/// still-valid lower bound, negative infinity, from then on.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    min_value: Kahan,
    curvature: f64,
    center: Option<Array1<f64>>,
    total_weight: Kahan,
    total_weight_feasible: Kahan,
    poisoned: bool,
}

/// Plain-data view of a model for logging/serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub min_value: f64,
    pub curvature: f64,
    pub center: Vec<f64>,
    pub total_weight: f64,
    pub total_weight_feasible: f64,
}

/// One weighted strong-convexity lower bound
/// `lambda (f_val + <g, y - anchor> + mu/2 ||y - anchor||^2)`.
#[derive(Debug, Clone)]
pub struct GradQuadratic<'a> {
    pub f_val: f64,
    pub g: &'a Array1<f64>,
    pub anchor: &'a Array1<f64>,
    pub lambda: f64,
    pub mu: f64,
}

/// Regularizer data attached to a feasible step:
/// `lambda (r_val + <n, y - y_next>)`.
#[derive(Debug, Clone)]
pub struct RegularizerTerm<'a> {
    pub r_val: f64,
    pub n: &'a Array1<f64>,
    pub y_next: &'a Array1<f64>,
}

impl Default for QuadraticModel {
    fn default() -> Self {
        Self::new()
    }
}

impl QuadraticModel {
    pub fn new() -> Self {
        QuadraticModel {
            min_value: Kahan::new(),
            curvature: 0.0,
            center: None,
            total_weight: Kahan::new(),
            total_weight_feasible: Kahan::new(),
            poisoned: false,
        }
    }

    /// True once a term exceeded the double range; the tracked minimum is
    /// pinned to negative infinity from that point on.
    pub fn overflowed(&self) -> bool {
        self.poisoned
    }

    pub fn min_value(&self) -> f64 {
        if self.poisoned {
            f64::NEG_INFINITY
        } else {
            self.min_value.value()
        }
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn center(&self) -> Option<&Array1<f64>> {
        self.center.as_ref()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight.value()
    }

    pub fn total_weight_feasible(&self) -> f64 {
        self.total_weight_feasible.value()
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            min_value: self.min_value(),
            curvature: self.curvature,
            center: self.center.as_ref().map(|c| c.to_vec()).unwrap_or_default(),
            total_weight: self.total_weight(),
            total_weight_feasible: self.total_weight_feasible(),
        }
    }

    /// Evaluate the model at `y`.
    pub fn eval(&self, y: &Array1<f64>) -> f64 {
        if self.poisoned {
            return f64::NEG_INFINITY;
        }
        match &self.center {
            None => self.min_value(),
            Some(z) => {
                let mut d2 = 0.0;
                for (a, b) in y.iter().zip(z.iter()) {
                    let d = a - b;
                    d2 += d * d;
                }
                self.min_value() + 0.5 * self.curvature * d2
            }
        }
    }

    /// Fold in a quadratic `a2 + (b2/2)||y - z2||^2`. A zero-curvature addend
    /// is a constant shift; an empty model absorbs the addend verbatim.
    /// Non-finite term data overflows the model (see [`Self::overflowed`])
    /// rather than folding.
    pub fn add_quadratic(&mut self, a2: f64, b2: f64, z2: &Array1<f64>) -> Result<()> {
        if b2.is_finite() && b2 < 0.0 {
            return Err(Error::InvalidModel(format!(
                "quadratic curvature must be nonnegative, got {b2}"
            )));
        }
        if !b2.is_finite() || !a2.is_finite() || z2.iter().any(|v| !v.is_finite()) {
            self.poisoned = true;
            return Ok(());
        }
        if b2 == 0.0 {
            self.min_value.add(a2);
            return Ok(());
        }
        match &mut self.center {
            None => {
                self.min_value.add(a2);
                self.curvature = b2;
                self.center = Some(z2.clone());
            }
            Some(z1) => {
                let b1 = self.curvature;
                let b_sum = b1 + b2;
                let mut dist2 = 0.0;
                for (a, b) in z1.iter().zip(z2.iter()) {
                    let d = a - b;
                    dist2 += d * d;
                }
                self.min_value.add(a2 + b1 * b2 / (2.0 * b_sum) * dist2);
                let w = b2 / b_sum;
                for (a, b) in z1.iter_mut().zip(z2.iter()) {
                    *a += w * (b - *a);
                }
                self.curvature = b_sum;
            }
        }
        // The fold itself can overflow (squared center distances): detect it
        // after the fact so the minimum never silently turns into NaN.
        if !self.min_value.value().is_finite() {
            self.poisoned = true;
        }
        Ok(())
    }

    /// Fold in an affine term `c + <d, y>` by completing the square. Needs
    /// positive curvature (an affine term alone is unbounded below).
    /// Non-finite term data overflows the model rather than folding.
    pub fn add_linear(&mut self, c: f64, d: &Array1<f64>) -> Result<()> {
        let b = self.curvature;
        let z = self.center.as_mut().ok_or(Error::InvalidModel(
            "cannot add an affine term to a curvature-free model".into(),
        ))?;
        if !c.is_finite() || d.iter().any(|v| !v.is_finite()) {
            self.poisoned = true;
            return Ok(());
        }
        let mut dot = 0.0;
        let mut d2 = 0.0;
        for (zi, di) in z.iter().zip(d.iter()) {
            dot += zi * di;
            d2 += di * di;
        }
        self.min_value.add(c + dot - d2 / (2.0 * b));
        for (zi, di) in z.iter_mut().zip(d.iter()) {
            *zi -= di / b;
        }
        if !self.min_value.value().is_finite() {
            self.poisoned = true;
        }
        Ok(())
    }

    /// Fold in one solver step's lower bound: the weighted strong-convexity
    /// quadratic always, plus — on feasible steps — the regularizer's affine
    /// support `lambda (r(y_next) + <n, y - y_next>)`. Updates the weight
    /// accumulators.
    pub fn append_model_term(
        &mut self,
        feasible: bool,
        term: &GradQuadratic<'_>,
        r_part: Option<&RegularizerTerm<'_>>,
    ) -> Result<()> {
        let GradQuadratic {
            f_val,
            g,
            anchor,
            lambda,
            mu,
        } = *term;
        if !(lambda > 0.0) {
            return Err(Error::InvalidModel(format!(
                "model term weight must be positive, got {lambda}"
            )));
        }
        if mu > 0.0 {
            // lambda (f + <g, y-x> + mu/2 ||y-x||^2)
            //   = a + (lambda mu / 2) ||y - (x - g/mu)||^2,
            //   a = lambda (f - ||g||^2 / (2 mu)).
            let mut g2 = 0.0;
            for &gi in g.iter() {
                g2 += gi * gi;
            }
            let a = lambda * (f_val - g2 / (2.0 * mu));
            let z = anchor - &(g / mu);
            self.add_quadratic(a, lambda * mu, &z)?;
        } else {
            // Degenerate (merely convex) bound: affine only.
            let mut dot = 0.0;
            for (gi, xi) in g.iter().zip(anchor.iter()) {
                dot += gi * xi;
            }
            self.add_linear(lambda * (f_val - dot), &(g * lambda))?;
        }
        if feasible {
            if let Some(r) = r_part {
                let mut dot = 0.0;
                for (ni, yi) in r.n.iter().zip(r.y_next.iter()) {
                    dot += ni * yi;
                }
                self.add_linear(lambda * (r.r_val - dot), &(r.n * lambda))?;
            }
            self.total_weight_feasible.add(lambda);
        }
        self.total_weight.add(lambda);
        Ok(())
    }
}

/// Minimize `model(y) + lambda (f + <g, y-anchor> + mu/2 ||y-anchor||^2)
/// + r-term + (beta_bar/2) ||y - y0||^2` using the prox oracle of `r`, and
/// recover the regularizer subgradient certified by the prox optimality
/// condition.
///
/// Returns `(y_next, n_next)` with
/// `n_next = (b_tot / lambda) (z_tot - y_next)`, which equals
/// `-(grad model(y_next) + lambda(g + mu (y_next - anchor)) + beta_bar (y_next - y0)) / lambda`.
pub fn minimize_with_prox<P>(
    model: &QuadraticModel,
    term: &GradQuadratic<'_>,
    prox: P,
    beta_bar: f64,
    y0: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)>
where
    P: Fn(&Array1<f64>, f64) -> Array1<f64>,
{
    let GradQuadratic {
        g,
        anchor,
        lambda,
        mu,
        ..
    } = *term;
    if !(lambda > 0.0) {
        return Err(Error::InvalidModel(format!(
            "minimization weight must be positive, got {lambda}"
        )));
    }
    let b_tot = model.curvature + lambda * mu + beta_bar;
    if !(b_tot > 0.0) || !b_tot.is_finite() {
        return Err(Error::InvalidModel(format!(
            "total curvature must be positive and finite, got {b_tot}"
        )));
    }
    // z_tot = (curv*center + lambda*mu*anchor - lambda*g + beta_bar*y0) / b_tot
    let n = g.len();
    let mut z_tot = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut acc = lambda * mu * anchor[i] - lambda * g[i] + beta_bar * y0[i];
        if let Some(c) = &model.center {
            acc += model.curvature * c[i];
        }
        z_tot[i] = acc / b_tot;
    }
    let y_next = prox(&z_tot, lambda / b_tot);
    let scale = b_tot / lambda;
    let mut n_next = Array1::<f64>::zeros(n);
    for i in 0..n {
        n_next[i] = scale * (z_tot[i] - y_next[i]);
    }
    Ok((y_next, n_next))
}

/// Debug companion keeping every constituent lower bound explicitly, for
/// cross-checking the folded model pointwise.
#[derive(Debug, Clone, Default)]
pub struct ExplicitModel {
    terms: Vec<ExplicitTerm>,
}

#[derive(Debug, Clone)]
enum ExplicitTerm {
    Bound {
        lambda: f64,
        f_val: f64,
        g: Array1<f64>,
        anchor: Array1<f64>,
        mu: f64,
    },
    Affine {
        lambda: f64,
        r_val: f64,
        n: Array1<f64>,
        y_next: Array1<f64>,
    },
}

impl ExplicitModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append_model_term(
        &mut self,
        feasible: bool,
        term: &GradQuadratic<'_>,
        r_part: Option<&RegularizerTerm<'_>>,
    ) {
        self.terms.push(ExplicitTerm::Bound {
            lambda: term.lambda,
            f_val: term.f_val,
            g: term.g.clone(),
            anchor: term.anchor.clone(),
            mu: term.mu,
        });
        if feasible {
            if let Some(r) = r_part {
                self.terms.push(ExplicitTerm::Affine {
                    lambda: term.lambda,
                    r_val: r.r_val,
                    n: r.n.clone(),
                    y_next: r.y_next.clone(),
                });
            }
        }
    }

    /// Evaluate the explicit sum of lower bounds at `y` (independent of the
    /// folded normal form — no square-completion shared).
    pub fn eval(&self, y: &Array1<f64>) -> f64 {
        let mut total = Kahan::new();
        for t in &self.terms {
            match t {
                ExplicitTerm::Bound {
                    lambda,
                    f_val,
                    g,
                    anchor,
                    mu,
                } => {
                    let mut dot = 0.0;
                    let mut dist2 = 0.0;
                    for ((yi, xi), gi) in y.iter().zip(anchor.iter()).zip(g.iter()) {
                        let d = yi - xi;
                        dot += gi * d;
                        dist2 += d * d;
                    }
                    total.add(lambda * (f_val + dot + 0.5 * mu * dist2));
                }
                ExplicitTerm::Affine {
                    lambda,
                    r_val,
                    n,
                    y_next,
                } => {
                    let mut dot = 0.0;
                    for ((yi, yn), ni) in y.iter().zip(y_next.iter()).zip(n.iter()) {
                        dot += ni * (yi - yn);
                    }
                    total.add(lambda * (r_val + dot));
                }
            }
        }
        total.value()
    }
}
