//! Entropic optimal transport between sets of complex matrices.

use std::cmp::Ordering;

use ndarray::Array2;

use chanest_core::CMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON_FACTOR: f64 = 0.05;
pub const DEFAULT_MAX_ITER: usize = 5000;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Square root of the sum of squared moduli.
pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `C[i][j] = ||source[i] - target[j]||_F`.
pub fn cost_matrix(source: &[CMatrix], target: &[CMatrix]) -> Result<Array2<f64>> {
    let shape = source
        .first()
        .or(target.first())
        .map(|m| m.dim())
        .ok_or_else(|| Error::InvalidArgument("both sets must be nonempty".into()))?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("both sets must be nonempty".into()));
    }
    if source.iter().chain(target).any(|m| m.dim() != shape) {
        return Err(Error::InvalidArgument("all matrices must share one shape".into()));
    }
    Ok(Array2::from_shape_fn((source.len(), target.len()), |(i, j)| {
        source[i]
            .iter()
            .zip(target[j].iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }))
}

#[derive(Debug, Clone)]
pub struct OtProblem {
    pub source: Vec<CMatrix>,
    pub target: Vec<CMatrix>,
    /// Entropic regularization; `None` selects a fraction of the median cost.
    pub epsilon: Option<f64>,
    pub max_iter: usize,
    /// Bound on the L1 violation of the row marginals.
    pub tolerance: f64,
}

impl OtProblem {
    pub fn new(source: Vec<CMatrix>, target: Vec<CMatrix>) -> Self {
        Self {
            source,
            target,
            epsilon: None,
            max_iter: DEFAULT_MAX_ITER,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub distance: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_error: f64,
    /// Transport plan, `N_S x N_T`.
    pub plan: Array2<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Default regularization: a fraction of the median cost, falling back to
/// the largest cost, then to 1 when every cost is zero.
fn default_epsilon(cost: &Array2<f64>) -> f64 {
    let vals: Vec<f64> = cost.iter().copied().collect();
    let med = median(&vals);
    let max = vals.iter().copied().fold(0.0, f64::max);
    if med > 0.0 {
        DEFAULT_EPSILON_FACTOR * med
    } else if max > 0.0 {
        DEFAULT_EPSILON_FACTOR * max
    } else {
        1.0
    }
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn on a cost matrix with uniform marginals.
fn solve(cost: &Array2<f64>, eps: f64, max_iter: usize, tol: f64) -> SinkhornResult {
    let (ns, nt) = cost.dim();
    let log_a = -(ns as f64).ln();
    let log_b = -(nt as f64).ln();
    let mut f = vec![0.0; ns];
    let mut g = vec![0.0; nt];
    let plan_of = |f: &[f64], g: &[f64]| Array2::from_shape_fn((ns, nt), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / eps).exp());
    let row_violation = |p: &Array2<f64>| p.rows().into_iter().map(|r| (r.sum() - 1.0 / ns as f64).abs()).sum::<f64>();

    let mut iterations = 0;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..ns {
            f[i] = eps * log_a - eps * log_sum_exp((0..nt).map(|j| (g[j] - cost[[i, j]]) / eps));
        }
        for j in 0..nt {
            g[j] = eps * log_b - eps * log_sum_exp((0..ns).map(|i| (f[i] - cost[[i, j]]) / eps));
        }
        violation = row_violation(&plan_of(&f, &g));
        if violation < tol {
            converged = true;
            break;
        }
    }
    let plan = plan_of(&f, &g);
    let distance = plan.iter().zip(cost.iter()).map(|(p, c)| p * c).sum();
    SinkhornResult {
        distance,
        epsilon: eps,
        iterations,
        converged,
        marginal_error: violation,
        plan,
    }
}

/// Orders the problem so that swapping source and target yields the
/// transposed computation bit for bit.
fn needs_transpose(cost: &Array2<f64>) -> bool {
    let (ns, nt) = cost.dim();
    match ns.cmp(&nt) {
        Ordering::Less => false,
        Ordering::Greater => true,
        Ordering::Equal => {
            let t = cost.t();
            for (a, b) in cost.iter().zip(t.iter()) {
                match a.total_cmp(b) {
                    Ordering::Less => return false,
                    Ordering::Greater => return true,
                    Ordering::Equal => {}
                }
            }
            false
        }
    }
}

/// Entropic Wasserstein-1 distance under the Frobenius ground metric.
///
/// Non-convergence within `max_iter` is reported through
/// [`SinkhornResult::converged`], not as an error.
pub fn sinkhorn_w1(problem: &OtProblem) -> Result<SinkhornResult> {
    let cost = cost_matrix(&problem.source, &problem.target)?;
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("matrices must have finite entries".into()));
    }
    let eps = match problem.epsilon {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(e) => return Err(Error::InvalidArgument(format!("epsilon must be positive, got {e}"))),
        None => default_epsilon(&cost),
    };
    if problem.max_iter == 0 || !(problem.tolerance > 0.0) {
        return Err(Error::InvalidArgument("max_iter and tolerance must be positive".into()));
    }
    if needs_transpose(&cost) {
        let mut r = solve(&cost.t().to_owned(), eps, problem.max_iter, problem.tolerance);
        r.plan = r.plan.t().to_owned();
        Ok(r)
    } else {
        Ok(solve(&cost, eps, problem.max_iter, problem.tolerance))
    }
}
