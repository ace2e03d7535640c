//! Squared-exponential kernel primitives.
//!
//! Everything downstream (training cost, class scores, the Mahalanobis
//! oracle) is built from the kernel
//!
//! ```text
//! κ(x_m, x_n) = σ² · exp(−‖x_m − x_n‖² / ℓ²)
//! ```
//!
//! and its regularized variant `κ_reg = κ + σ_reg²`, where the offset is
//! added to every entry. A diagonal-only (`Nugget`) variant is available as
//! a config option; the constant offset is the default.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameter set Θ of the kernel machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Signal standard deviation; kernel outputs are in units of `sigma²`.
    pub sigma: f64,
    /// Length-scale in input-space units.
    pub ell: f64,
    /// Regularization standard deviation (zero disables regularization).
    pub sigma_reg: f64,
}

impl KernelParams {
    pub fn new(sigma: f64, ell: f64, sigma_reg: f64) -> Result<Self> {
        let p = KernelParams { sigma, ell, sigma_reg };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParam(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.ell > 0.0) || !self.ell.is_finite() {
            return Err(Error::InvalidParam(format!("ell must be > 0, got {}", self.ell)));
        }
        if !(self.sigma_reg >= 0.0) || !self.sigma_reg.is_finite() {
            return Err(Error::InvalidParam(format!(
                "sigma_reg must be >= 0, got {}",
                self.sigma_reg
            )));
        }
        Ok(())
    }
}

/// How `σ_reg²` enters the Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// No regularization term.
    None,
    /// `σ_reg²` added to every entry (the definitional default).
    ConstantOffset,
    /// `σ_reg²` added to the diagonal only (the GP-standard nugget).
    Nugget,
}

/// Symmetric kernel matrix over one set of column signals.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub params: KernelParams,
    pub regularization: Regularization,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_regularized(&self) -> bool {
        self.regularization != Regularization::None
    }
}

fn check_same_dim(x_m: &[f64], x_n: &[f64]) -> Result<()> {
    if x_m.len() != x_n.len() {
        return Err(Error::DimensionMismatch { expected: x_m.len(), got: x_n.len() });
    }
    Ok(())
}

fn sq_dist(x_m: &[f64], x_n: &[f64]) -> f64 {
    x_m.iter().zip(x_n).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Squared-exponential kernel `σ²·exp(−‖x_m − x_n‖²/ℓ²)`.
pub fn se_kernel(x_m: &[f64], x_n: &[f64], params: &KernelParams) -> Result<f64> {
    params.validate()?;
    check_same_dim(x_m, x_n)?;
    Ok(params.sigma * params.sigma * (-sq_dist(x_m, x_n) / (params.ell * params.ell)).exp())
}

/// Regularized kernel `κ(x_m, x_n) + σ_reg²`; the offset applies to every
/// pair, not only the diagonal.
pub fn reg_kernel(x_m: &[f64], x_n: &[f64], params: &KernelParams) -> Result<f64> {
    Ok(se_kernel(x_m, x_n, params)? + params.sigma_reg * params.sigma_reg)
}

/// Pairwise squared distances between the columns of `x`.
pub fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mut d2 = DMatrix::zeros(n, n);
    for m in 0..n {
        for n_ in (m + 1)..n {
            let d = sq_dist(x.column(m).as_slice(), x.column(n_).as_slice());
            d2[(m, n_)] = d;
            d2[(n_, m)] = d;
        }
    }
    d2
}

/// Median of the pairwise (non-squared) distances between columns of `x`.
/// Zero when there are fewer than two columns.
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    if n < 2 {
        return 0.0;
    }
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for m in 0..n {
        for n_ in (m + 1)..n {
            dists.push(sq_dist(x.column(m).as_slice(), x.column(n_).as_slice()).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = dists.len();
    if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    }
}

/// Gram matrix from precomputed pairwise squared distances.
pub(crate) fn gram_from_sq_dists(
    d2: &DMatrix<f64>,
    params: &KernelParams,
    regularization: Regularization,
) -> DMatrix<f64> {
    let n = d2.nrows();
    let s2 = params.sigma * params.sigma;
    let sr2 = params.sigma_reg * params.sigma_reg;
    let inv_l2 = 1.0 / (params.ell * params.ell);
    let mut k = DMatrix::zeros(n, n);
    for m in 0..n {
        for n_ in m..n {
            let mut v = s2 * (-d2[(m, n_)] * inv_l2).exp();
            match regularization {
                Regularization::None => {}
                Regularization::ConstantOffset => v += sr2,
                Regularization::Nugget => {
                    if m == n_ {
                        v += sr2;
                    }
                }
            }
            k[(m, n_)] = v;
            k[(n_, m)] = v;
        }
    }
    k
}

/// Gram matrix over the columns of `x` (a `D × N` matrix of column signals).
/// Exact symmetry is enforced by computing the upper triangle and mirroring.
pub fn gram(x: &DMatrix<f64>, params: &KernelParams, regularization: Regularization) -> Result<GramMatrix> {
    params.validate()?;
    if x.ncols() == 0 {
        return Err(Error::EmptyInput("gram: zero columns"));
    }
    let d2 = pairwise_sq_dists(x);
    Ok(GramMatrix {
        values: gram_from_sq_dists(&d2, params, regularization),
        params: *params,
        regularization,
    })
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration,
/// deterministic (normalized ones start, fixed iteration budget).
fn power_iteration_lambda_max(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0f64;
    for _ in 0..200 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&v);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Smallest eigenvalue via inverse power iteration with the Cholesky factor.
fn inverse_iteration_lambda_min(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, n: usize) -> f64 {
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut mu = 0.0f64;
    for _ in 0..200 {
        let w = chol.solve(&v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&v); // Rayleigh quotient of M⁻¹
        v = w / norm;
        if (next - mu).abs() <= 1e-12 * next.abs() {
            mu = next;
            break;
        }
        mu = next;
    }
    if mu <= 0.0 {
        0.0
    } else {
        1.0 / mu
    }
}

/// Deterministic 2-norm condition estimate of a symmetric positive definite
/// matrix. Returns `None` when the Cholesky factorization fails.
pub fn condition_estimate(m: &DMatrix<f64>) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    let lmax = power_iteration_lambda_max(m);
    let lmin = inverse_iteration_lambda_min(&chol, m.nrows());
    if lmin <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(lmax / lmin)
}

/// Smallest `σ_reg` on the search ladder `{0, ε, 2ε, 4ε, …}` (with
/// `ε = 1e-8·√(mean diag)`, capped at `√(mean diag)`) such that the
/// regularized matrix factorizes and its estimated condition number is at
/// most `cond_threshold`.
pub fn select_sigma_reg(
    k: &GramMatrix,
    cond_threshold: f64,
    regularization: Regularization,
) -> Result<f64> {
    if k.is_regularized() {
        return Err(Error::InvalidParam(
            "select_sigma_reg expects an unregularized Gram matrix".into(),
        ));
    }
    if !(cond_threshold > 1.0) {
        return Err(Error::InvalidParam(format!(
            "cond_threshold must be > 1, got {cond_threshold}"
        )));
    }
    if regularization == Regularization::None {
        return Err(Error::InvalidParam(
            "select_sigma_reg needs a regularization mode".into(),
        ));
    }
    let n = k.n();
    let mean_diag = k.values.diagonal().sum() / n as f64;
    let scale = mean_diag.max(0.0).sqrt();
    let mut ladder = vec![0.0];
    let mut step = 1e-8 * scale;
    while step <= scale && step > 0.0 {
        ladder.push(step);
        step *= 2.0;
    }
    for &sr in &ladder {
        let sr2 = sr * sr;
        let mut m = k.values.clone();
        match regularization {
            Regularization::ConstantOffset => m.apply(|v| *v += sr2),
            Regularization::Nugget => {
                for i in 0..n {
                    m[(i, i)] += sr2;
                }
            }
            Regularization::None => unreachable!(),
        }
        if let Some(cond) = condition_estimate(&m) {
            if cond <= cond_threshold {
                return Ok(sr);
            }
        }
    }
    Err(Error::Conditioning(format!(
        "ladder exhausted: no sigma_reg up to {scale:.3e} reached condition {cond_threshold:.1e}"
    )))
}

/// Double centering `H·K·H` with `H = I − (1/N)·𝟙𝟙ᵀ`.
pub fn center_gram(k: &GramMatrix) -> Result<GramMatrix> {
    if k.is_regularized() {
        return Err(Error::InvalidParam("center_gram expects an unregularized Gram matrix".into()));
    }
    let n = k.n();
    let row_means: Vec<f64> = (0..n).map(|i| k.values.row(i).sum() / n as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = k.values[(i, j)] - row_means[i] - row_means[j] + grand_mean;
        }
    }
    Ok(GramMatrix { values: c, params: k.params, regularization: Regularization::None })
}

/// Center a test kernel vector `k_* = κ(X, x_*)` against its training Gram
/// matrix, returning `(k̃_*, k̃_**)` for use with [`kernel_mahalanobis_oracle`].
pub fn center_test_vector(
    k: &GramMatrix,
    k_star: &DVector<f64>,
    k_starstar: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = k.n();
    if k_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: k_star.len() });
    }
    let row_means: Vec<f64> = (0..n).map(|i| k.values.row(i).sum() / n as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    let kbar = k_star.sum() / n as f64;
    let centered =
        DVector::from_fn(n, |i, _| k_star[i] - kbar - row_means[i] + grand_mean);
    let css = k_starstar - 2.0 * kbar + grand_mean;
    Ok((centered, css))
}

/// Regularized Mahalanobis distance of a test point's feature-space image to
/// the class mean, from the eigendecomposition of the centered Gram matrix:
///
/// ```text
/// d_M = (k̃_** − Σ_j (u_jᵀ k̃_*)² / (N·ridge + λ_j)) / ridge
/// ```
///
/// This route never touches a Cholesky factorization, which keeps it
/// independent of the scoring path it cross-checks.
pub fn kernel_mahalanobis_oracle(
    k_centered: &DMatrix<f64>,
    k_star_centered: &DVector<f64>,
    k_starstar_centered: f64,
    ridge: f64,
) -> Result<f64> {
    let n = k_centered.nrows();
    if k_star_centered.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: k_star_centered.len() });
    }
    if !(ridge > 0.0) {
        return Err(Error::InvalidParam(format!("ridge must be > 0, got {ridge}")));
    }
    let eig = k_centered.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-10 * lmax.max(1.0);
    let mut quad = 0.0;
    for j in 0..n {
        let lambda = eig.eigenvalues[j];
        if lambda < -tol {
            return Err(Error::Numerical(format!(
                "centered Gram matrix is not PSD: eigenvalue {lambda:.3e}"
            )));
        }
        let lambda = lambda.max(0.0);
        let proj = eig.eigenvectors.column(j).dot(k_star_centered);
        quad += proj * proj / (n as f64 * ridge + lambda);
    }
    Ok((k_starstar_centered - quad) / ridge)
}
