//! Benchmark problem instances: objectives with subgradient oracles,
//! ball constraints, regularizers with prox oracles, ground-truth references
//! (minimizers, optimal values, Lagrange multipliers, Slater points), and
//! the constants under which the convergence theory applies.

use crate::num::derive_seed;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Objective oracle `f0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Objective {
    /// `||A x - b||_1 + 1/2 ||C x - d||^2` (rows of `A` may be empty, which
    /// leaves the pure least-squares part).
    L1Ls {
        a: Array2<f64>,
        c: Array2<f64>,
        b: Array1<f64>,
        d: Array1<f64>,
    },
    /// `1/2 sum_i h_i x_i^2` with positive diagonal `h`.
    DiagQuad { h: Array1<f64> },
    /// `1/2 ||x - center||^2`.
    SqDist { center: Array1<f64> },
    /// `base(x) + (eps_over_d2 / 2) ||x - x0||^2` — the strong-convexity
    /// perturbation of a merely convex base.
    Perturbed {
        base: Box<Objective>,
        eps_over_d2: f64,
        x0: Array1<f64>,
    },
}

impl Objective {
    /// Value and one subgradient at `x`, sharing residual computations.
    /// The sign convention `sign(0) = 0` picks a valid l1 subgradient.
    pub fn eval_pair(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        match self {
            Objective::L1Ls { a, c, b, d } => {
                let ra = a.dot(x) - b;
                let rc = c.dot(x) - d;
                let l1: f64 = ra.iter().map(|v| v.abs()).sum();
                let ls: f64 = 0.5 * rc.iter().map(|v| v * v).sum::<f64>();
                let sign = ra.mapv(|v| if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                });
                let g = a.t().dot(&sign) + c.t().dot(&rc);
                (l1 + ls, g)
            }
            Objective::DiagQuad { h } => {
                let mut val = 0.0;
                let mut g = Array1::zeros(x.len());
                for i in 0..x.len() {
                    val += 0.5 * h[i] * x[i] * x[i];
                    g[i] = h[i] * x[i];
                }
                (val, g)
            }
            Objective::SqDist { center } => {
                let g = x - center;
                let val = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
                (val, g)
            }
            Objective::Perturbed {
                base,
                eps_over_d2,
                x0,
            } => {
                let (bv, bg) = base.eval_pair(x);
                let dx = x - x0;
                let val = bv + 0.5 * eps_over_d2 * dx.iter().map(|v| v * v).sum::<f64>();
                (val, bg + &(dx * *eps_over_d2))
            }
        }
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        self.eval_pair(x).0
    }

    /// Global infimum of `f0` over the whole space, when known in closed form.
    pub fn global_inf(&self) -> Option<f64> {
        match self {
            // Generated instances satisfy b = A x_opt, d = C x_opt, so the
            // nonnegative objective attains 0.
            Objective::L1Ls { .. } => Some(0.0),
            Objective::DiagQuad { .. } => Some(0.0),
            Objective::SqDist { .. } => Some(0.0),
            Objective::Perturbed { .. } => None,
        }
    }
}

/// Constraint `f_s(x) = 1/2 ||x - center||^2 - rho <= 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallConstraint {
    pub center: Array1<f64>,
    pub rho: f64,
}

impl BallConstraint {
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        let mut d2 = 0.0;
        for (a, b) in x.iter().zip(self.center.iter()) {
            let d = a - b;
            d2 += d * d;
        }
        0.5 * d2 - self.rho
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        x - &self.center
    }
}

/// Regularizer `r` with its prox oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Regularizer {
    Zero,
    /// `weight * ||x||_1`.
    L1 { weight: f64 },
    /// Indicator of `{x : ||x|| <= radius}`.
    Ball { radius: f64 },
}

impl Regularizer {
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Ball { radius } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= radius * (1.0 + 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_y r(y) + ||y - z||^2 / (2 step)`.
    pub fn prox(&self, z: &Array1<f64>, step: f64) -> Array1<f64> {
        match self {
            Regularizer::Zero => z.clone(),
            Regularizer::L1 { weight } => {
                let t = step * weight;
                z.mapv(|v| {
                    if v > t {
                        v - t
                    } else if v < -t {
                        v + t
                    } else {
                        0.0
                    }
                })
            }
            Regularizer::Ball { radius } => {
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= *radius {
                    z.clone()
                } else {
                    z * (*radius / norm)
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Regularizer::Zero)
    }
}

/// Ground-truth references attached to generated instances.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct References {
    pub x_opt: Option<Array1<f64>>,
    pub x_sl: Option<Array1<f64>>,
    pub p_star: Option<f64>,
    /// When only an interval is certifiable (perturbed instances).
    pub p_star_interval: Option<(f64, f64)>,
    /// Regularizer subgradient at the references entering the certified
    /// upper-bound surrogate; zero whenever `r = 0` or differentiable there.
    pub n_x_opt: Option<Array1<f64>>,
    pub n_x_sl: Option<Array1<f64>>,
    pub kkt_multipliers: Option<Vec<f64>>,
    /// Slater margin `-max_s f_s(x_sl) > 0`.
    pub tau_sl: Option<f64>,
}

/// Constants under which the convergence statements are evaluated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Constants {
    /// Strong-convexity modulus shared by objective and constraints.
    pub mu: f64,
    pub l0_sq: Option<f64>,
    pub l1: Option<f64>,
}

/// A full problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub n: usize,
    pub objective: Objective,
    pub constraints: Vec<BallConstraint>,
    pub regularizer: Regularizer,
    /// Additive Gaussian noise scale on the objective subgradient
    /// (constraint oracles stay deterministic).
    pub noise_sigma: f64,
    pub x0: Array1<f64>,
    pub refs: References,
    pub constants: Constants,
    pub seed: u64,
}

impl Instance {
    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn mu(&self) -> f64 {
        self.constants.mu
    }

    /// Objective value + subgradient (deterministic part).
    pub fn eval_objective(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        self.objective.eval_pair(x)
    }

    pub fn f0(&self, x: &Array1<f64>) -> f64 {
        self.objective.value(x)
    }

    /// `f0 + r`, the full objective the certificates bound.
    pub fn objective_total(&self, x: &Array1<f64>) -> f64 {
        self.f0(x) + self.regularizer.value(x)
    }

    pub fn constraint_value(&self, s: usize, x: &Array1<f64>) -> f64 {
        self.constraints[s - 1].value(x)
    }

    pub fn constraint_gradient(&self, s: usize, x: &Array1<f64>) -> Array1<f64> {
        self.constraints[s - 1].gradient(x)
    }

    pub fn prox(&self, z: &Array1<f64>, step: f64) -> Array1<f64> {
        self.regularizer.prox(z, step)
    }

    /// Replace the regularizer. References and derived constants other than
    /// `mu` are cleared: they certify the unregularized problem.
    pub fn with_regularizer(mut self, reg: Regularizer) -> Self {
        self.regularizer = reg;
        self.refs = References::default();
        self.constants.l0_sq = None;
        self.constants.l1 = None;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_start(mut self, x0: Array1<f64>) -> Self {
        assert_eq!(x0.len(), self.n);
        self.x0 = x0;
        self
    }
}

/// Extreme eigenvalues of a symmetric PSD matrix to relative accuracy 1e-10:
/// dense symmetric eigendecomposition up to `n = 200`, shifted power
/// iteration with Rayleigh-residual stopping beyond.
pub fn eigen_extremes(m: &Array2<f64>) -> Result<(f64, f64)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInstance("matrix must be square".into()));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-8 * scale {
                return Err(Error::InvalidInstance(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    if n <= 200 {
        let dm = nalgebra::DMatrix::from_row_iterator(n, n, m.iter().cloned());
        let eig = nalgebra::linalg::SymmetricEigen::new(dm);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    } else {
        eigen_extremes_power(m, 1e-12, 200_000)
    }
}

/// Shifted power iteration fallback/cross-check: returns `(lambda_min,
/// lambda_max)` with Rayleigh-quotient residual certificates below
/// `tol * scale`.
pub fn eigen_extremes_power(m: &Array2<f64>, tol: f64, cap: usize) -> Result<(f64, f64)> {
    let n = m.nrows();
    let power = |mat_vec: &dyn Fn(&Array1<f64>) -> Array1<f64>, scale: f64| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xE16E);
        let mut v = Array1::from_iter((0..n).map(|_| {
            let u: f64 = StandardNormal.sample(&mut rng);
            u
        }));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v /= norm;
        for _ in 0..cap {
            let w = mat_vec(&v);
            let theta: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let mut res2 = 0.0;
            for (wi, vi) in w.iter().zip(v.iter()) {
                let r = wi - theta * vi;
                res2 += r * r;
            }
            if res2.sqrt() <= tol * scale.max(theta.abs()) {
                return Ok(theta);
            }
            let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wn == 0.0 {
                return Ok(0.0); // v is in the kernel: eigenvalue 0
            }
            v = w / wn;
        }
        Err(Error::NoConvergence(cap))
    };
    // Row-sum bound keeps the shift safely above the spectrum.
    let bound = (0..n)
        .map(|i| (0..n).map(|j| m[[i, j]].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let lambda_max = power(&|v| m.dot(v), bound)?;
    let shift = bound * (1.0 + 1e-6);
    let lambda_min = shift - power(&|v| v * shift - m.dot(v), bound)?;
    Ok((lambda_min, lambda_max))
}

/// Constants from the Lipschitz/smoothness/noise decomposition:
/// `L0^2 = 6 M^2 + sigma_sq + 6 L * slack`, `L1 = 6 L`.
pub fn growth_constants(m: f64, l: f64, sigma_sq: f64, slack: f64) -> (f64, f64) {
    (6.0 * m * m + sigma_sq + 6.0 * l * slack, 6.0 * l)
}

/// Random l1 + least-squares instance
/// `f0(x) = ||A x - b||_1 + 1/2 ||C x - d||^2` with `C = I + sigma*Ct`,
/// `b = A x_opt`, `d = C x_opt` so that `p* = 0` exactly.
pub fn gen_l1_ls(m: usize, n: usize, sigma: f64, seed: u64) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidInstance("dimension must be positive".into()));
    }
    gen_l1_ls_inner(m, n, sigma, seed, "l1ls")
}

/// Pure least-squares variant (no l1 rows): `f0(x) = 1/2 ||C x - d||^2`,
/// smooth with `L0 = 0`.
pub fn gen_smooth_ls(n: usize, sigma: f64, seed: u64) -> Result<Instance> {
    gen_l1_ls_inner(0, n, sigma, seed, "smoothls")
}

fn gen_l1_ls_inner(m: usize, n: usize, sigma: f64, seed: u64, name: &str) -> Result<Instance> {
    if sigma < 0.0 {
        return Err(Error::InvalidInstance("sigma must be nonnegative".into()));
    }
    for attempt in 0..16u64 {
        let s = derive_seed(seed, 0x11, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let a = Array2::from_shape_fn((m, n), |_| normal());
        let mut c = Array2::from_shape_fn((n, n), |_| sigma * normal());
        for i in 0..n {
            c[[i, i]] += 1.0;
        }
        let x_opt = Array1::from_shape_fn(n, |_| normal());
        let b = a.dot(&x_opt);
        let d = c.dot(&x_opt);
        let ctc = c.t().dot(&c);
        let (mu, lmax) = eigen_extremes(&ctc)?;
        if mu <= 1e-6 {
            continue; // nearly singular draw; retry with a derived seed
        }
        let row_norm_sum: f64 = a
            .outer_iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        let l0_sq = 8.0 * row_norm_sum * row_norm_sum;
        let l1 = 4.0 * lmax;
        return Ok(Instance {
            name: format!("{name}-n{n}-s{sigma}-seed{seed}"),
            n,
            objective: Objective::L1Ls { a, c, b, d },
            constraints: vec![],
            regularizer: Regularizer::Zero,
            noise_sigma: 0.0,
            x0: Array1::zeros(n),
            refs: References {
                x_opt: Some(x_opt),
                p_star: Some(0.0),
                n_x_opt: Some(Array1::zeros(n)),
                ..Default::default()
            },
            constants: Constants {
                mu,
                l0_sq: Some(l0_sq),
                l1: Some(l1),
            },
            seed,
        });
    }
    Err(Error::InvalidInstance(format!(
        "could not draw a positive-definite least-squares part after 16 attempts (sigma={sigma})"
    )))
}

/// The 2-D ill-conditioned quadratic `f(u, v) = 50 u^2 + 0.5 v^2` started at
/// `(1, 0)`: constants `(mu, L0, L1) = (1, 0, 200)` make early iterations of
/// weight-based schedules divergent before eventual convergence.
pub fn toy_divergent() -> Instance {
    let n = 2;
    Instance {
        name: "toy-divergent".into(),
        n,
        objective: Objective::DiagQuad {
            h: ndarray::arr1(&[100.0, 1.0]),
        },
        constraints: vec![],
        regularizer: Regularizer::Zero,
        noise_sigma: 0.0,
        x0: ndarray::arr1(&[1.0, 0.0]),
        refs: References {
            x_opt: Some(Array1::zeros(n)),
            p_star: Some(0.0),
            n_x_opt: Some(Array1::zeros(n)),
            ..Default::default()
        },
        constants: Constants {
            mu: 1.0,
            l0_sq: Some(0.0),
            l1: Some(200.0),
        },
        seed: 0,
    }
}

/// Strong-convexity perturbation: `f~ = f0 + (eps/(2 D^2)) ||x - x0||^2`.
/// The optimal value is certified only as an interval
/// `[p*, p* + eps ||x_opt - x0||^2 / (2 D^2)]`.
pub fn strongly_convexify(inst: &Instance, eps: f64, d_cap: f64) -> Result<Instance> {
    if !(eps > 0.0) || !(d_cap > 0.0) {
        return Err(Error::InvalidInstance(
            "perturbation requires eps > 0 and D > 0".into(),
        ));
    }
    let eps_over_d2 = eps / (d_cap * d_cap);
    let p_star_interval = match (inst.refs.p_star, &inst.refs.x_opt) {
        (Some(p), Some(xo)) => {
            let d2: f64 = xo
                .iter()
                .zip(inst.x0.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Some((p, p + 0.5 * eps_over_d2 * d2))
        }
        _ => None,
    };
    Ok(Instance {
        name: format!("{}-perturbed", inst.name),
        n: inst.n,
        objective: Objective::Perturbed {
            base: Box::new(inst.objective.clone()),
            eps_over_d2,
            x0: inst.x0.clone(),
        },
        constraints: inst.constraints.clone(),
        regularizer: inst.regularizer.clone(),
        noise_sigma: inst.noise_sigma,
        x0: inst.x0.clone(),
        refs: References {
            p_star_interval,
            x_sl: inst.refs.x_sl.clone(),
            tau_sl: inst.refs.tau_sl,
            ..Default::default()
        },
        constants: Constants {
            mu: inst.constants.mu + eps_over_d2,
            l0_sq: None,
            l1: None,
        },
        seed: inst.seed,
    })
}

/// Solve `min 1/2||x - c||^2  s.t.  1/2||x - a_s||^2 <= rho_s` by active-set
/// enumeration with a Newton corrector, returning the minimizer and its
/// Lagrange multipliers. Small problems only (the enumeration is 2^m).
pub fn kkt_solve(
    c: &Array1<f64>,
    centers: &[Array1<f64>],
    rhos: &[f64],
) -> Result<(Array1<f64>, Vec<f64>)> {
    let m = centers.len();
    if m != rhos.len() || m > 12 {
        return Err(Error::InvalidInstance(
            "kkt_solve needs matched centers/radii with at most 12 constraints".into(),
        ));
    }
    let feas_tol = 1e-9;
    let check = |x: &Array1<f64>, u: &[f64]| -> bool {
        (0..m).all(|s| {
            let v = 0.5
                * x.iter()
                    .zip(centers[s].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                - rhos[s];
            v <= feas_tol && u[s] >= -feas_tol && u[s] * v.abs() <= feas_tol.max(1e-7 * u[s])
        })
    };

    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|s| mask & (1 << s) != 0).collect();
        let solved = solve_active_set(c, centers, rhos, &active);
        if let Some((x, u_active)) = solved {
            let mut u = vec![0.0; m];
            for (idx, &s) in active.iter().enumerate() {
                u[s] = u_active[idx];
            }
            if check(&x, &u) {
                for v in u.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                return Ok((x, u));
            }
        }
    }
    Err(Error::NoConvergence(1 << m))
}

/// Newton solve of the active-set stationarity system
/// `x(u) = (c + sum u_s a_s)/(1 + sum u_s)`, `1/2||x - a_s||^2 = rho_s`.
fn solve_active_set(
    c: &Array1<f64>,
    centers: &[Array1<f64>],
    rhos: &[f64],
    active: &[usize],
) -> Option<(Array1<f64>, Vec<f64>)> {
    let k = active.len();
    if k == 0 {
        return Some((c.clone(), vec![]));
    }
    let x_of = |u: &[f64]| -> Array1<f64> {
        let total: f64 = 1.0 + u.iter().sum::<f64>();
        let mut x = c.clone();
        for (idx, &s) in active.iter().enumerate() {
            x = x + &(&centers[s] * u[idx]);
        }
        x / total
    };
    let mut u = vec![0.1; k];
    for _ in 0..200 {
        let x = x_of(&u);
        let total = 1.0 + u.iter().sum::<f64>();
        let mut phi = nalgebra::DVector::zeros(k);
        for (i, &s) in active.iter().enumerate() {
            let d2: f64 = x
                .iter()
                .zip(centers[s].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            phi[i] = 0.5 * d2 - rhos[s];
        }
        if phi.iter().all(|v| v.abs() <= 1e-12) {
            return Some((x, u));
        }
        let mut jac = nalgebra::DMatrix::zeros(k, k);
        for (i, &s) in active.iter().enumerate() {
            for (j, &t) in active.iter().enumerate() {
                let mut dot = 0.0;
                for idx in 0..x.len() {
                    dot += (x[idx] - centers[s][idx]) * (centers[t][idx] - x[idx]);
                }
                jac[(i, j)] = dot / total;
            }
        }
        let delta = jac.lu().solve(&(-phi))?;
        for i in 0..k {
            u[i] += delta[i];
            if !u[i].is_finite() || u[i].abs() > 1e12 {
                return None;
            }
        }
    }
    None
}

/// Random ball-constrained projection problem
/// `min 1/2||x - c||^2  s.t.  1/2||x - a_s||^2 <= rho_s`, with a certified
/// Slater point (the constraint-center centroid, radii inflated to give it
/// margin), the exact minimizer, and its KKT multipliers.
pub fn gen_constrained(n: usize, m_constraints: usize, seed: u64) -> Result<Instance> {
    if n == 0 || n > 10 {
        return Err(Error::InvalidInstance(
            "constrained generator supports 1 <= n <= 10 (KKT oracle scale)".into(),
        ));
    }
    if m_constraints == 0 || m_constraints > 6 {
        return Err(Error::InvalidInstance(
            "constrained generator supports 1 <= m <= 6".into(),
        ));
    }
    for attempt in 0..16u64 {
        let s = derive_seed(seed, 0x22, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let centers: Vec<Array1<f64>> = (0..m_constraints)
            .map(|_| Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng)))
            .collect();
        let mut x_sl = Array1::<f64>::zeros(n);
        for a in &centers {
            x_sl = x_sl + a;
        }
        x_sl /= m_constraints as f64;
        // Inflate each radius so the centroid has margin at least 0.3, with
        // some spread so multipliers differ across constraints.
        let rhos: Vec<f64> = centers
            .iter()
            .map(|a| {
                let d2: f64 = x_sl
                    .iter()
                    .zip(a.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                0.5 * d2 + 0.3 + 0.4 * rng.random::<f64>()
            })
            .collect();
        // Objective center placed outside the feasible region so constraints
        // bind at the optimum and the switching branch is exercised.
        let mut dir = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        dir /= dn;
        let reach = rhos.iter().fold(0.0f64, |a, &r| a.max((2.0 * r).sqrt()));
        let c = &x_sl + &(dir * (reach + 2.0));

        let (x_opt, u) = match kkt_solve(&c, &centers, &rhos) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if u.iter().all(|&v| v < 1e-6) {
            continue; // no active constraint: switching never exercised
        }
        let tau_sl = -centers
            .iter()
            .zip(&rhos)
            .map(|(a, &r)| {
                let d2: f64 = x_sl
                    .iter()
                    .zip(a.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                0.5 * d2 - r
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if tau_sl < 0.1 {
            continue;
        }
        let p_star = 0.5
            * x_opt
                .iter()
                .zip(c.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        // Subgradient-growth constants for this family (objective and
        // constraints are unit quadratics): ||grad f_s(x)||^2 = 2 f_s-relative
        // values, giving L1 = 2 and L0^2 = max over references/centers of
        // squared distances.
        let mut l0_sq = 0.0f64;
        for y in [&x_opt, &x_sl] {
            let dc: f64 = y
                .iter()
                .zip(c.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            l0_sq = l0_sq.max(dc);
            for a in &centers {
                let da: f64 = y
                    .iter()
                    .zip(a.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                l0_sq = l0_sq.max(da);
            }
        }
        l0_sq *= 1.0 + 1e-9;
        let constraints = centers
            .into_iter()
            .zip(rhos)
            .map(|(center, rho)| BallConstraint { center, rho })
            .collect();
        return Ok(Instance {
            name: format!("constrained-n{n}-m{m_constraints}-seed{seed}"),
            n,
            objective: Objective::SqDist { center: c },
            constraints,
            regularizer: Regularizer::Zero,
            noise_sigma: 0.0,
            x0: Array1::zeros(n),
            refs: References {
                x_opt: Some(x_opt),
                x_sl: Some(x_sl),
                p_star: Some(p_star),
                p_star_interval: None,
                n_x_opt: Some(Array1::zeros(n)),
                n_x_sl: Some(Array1::zeros(n)),
                kkt_multipliers: Some(u),
                tau_sl: Some(tau_sl),
            },
            constants: Constants {
                mu: 1.0,
                l0_sq: Some(l0_sq),
                l1: Some(2.0),
            },
            seed,
        });
    }
    Err(Error::InvalidInstance(
        "could not generate a constrained instance with binding constraints".into(),
    ))
}
