//! MDD-KM training and scoring.
//!
//! Training learns the kernel hyperparameters by minimizing the GP negative
//! log marginal likelihood
//!
//! ```text
//! g(Θ) = yᵀ K_reg⁻¹ y + log |K_reg|
//! ```
//!
//! over the pooled training signals of all classes, where `y` holds the
//! polynomial target `y_target(x) = xᵀx` evaluated at each signal. Scoring
//! uses only the focal class block:
//!
//! ```text
//! d_c(x_*) = κ(x_*, x_*) − κ(X_c, x_*)ᵀ κ_reg(X_c, X_c)⁻¹ κ(X_c, x_*)
//! ```
//!
//! Per-class Cholesky factors are cached in the trained model. The
//! single-class case is one-class GP classification; nothing in the code
//! special-cases it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    self, gram_from_sq_dists, median_pairwise_distance, pairwise_sq_dists, KernelParams,
    Regularization,
};

/// One class of training signals, columns of a `D × N_c` matrix.
#[derive(Debug, Clone)]
pub struct ClassBlock {
    pub label: String,
    pub signals: DMatrix<f64>,
}

/// The full multiclass training set.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub blocks: Vec<ClassBlock>,
}

impl TrainingSet {
    pub fn new(blocks: Vec<ClassBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::EmptyInput("training set has no classes"));
        }
        let dim = blocks[0].signals.nrows();
        for b in &blocks {
            if b.signals.ncols() == 0 {
                return Err(Error::EmptyInput("training class has no signals"));
            }
            if b.signals.nrows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: b.signals.nrows() });
            }
        }
        Ok(TrainingSet { blocks })
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].signals.nrows()
    }

    pub fn n_total(&self) -> usize {
        self.blocks.iter().map(|b| b.signals.ncols()).sum()
    }

    /// Column concatenation `(X_1, …, X_C)`.
    pub fn x_train(&self) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.n_total();
        let mut x = DMatrix::zeros(d, n);
        let mut col = 0;
        for b in &self.blocks {
            for c in 0..b.signals.ncols() {
                x.set_column(col, &b.signals.column(c));
                col += 1;
            }
        }
        x
    }
}

/// Target function evaluated at every training signal.
pub type TargetFn = fn(&[f64]) -> f64;

/// Default target: squared Euclidean norm.
pub fn squared_norm_target(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Target vector `y` with `y_n = y_target(x_n)`.
pub fn target_vector(x_train: &DMatrix<f64>, target: TargetFn) -> DVector<f64> {
    DVector::from_fn(x_train.ncols(), |i, _| target(x_train.column(i).as_slice()))
}

/// How `σ_reg` is determined during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRegMode {
    /// Pre-select the smallest well-conditioning value on the ladder.
    Select { cond_threshold: f64 },
    /// Use a fixed value.
    Fixed { value: f64 },
    /// Include `log σ_reg` in the likelihood optimization.
    CoOptimize,
}

/// Optimizer configuration for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub regularization: Regularization,
    pub sigma_reg: SigmaRegMode,
    /// Maximum quasi-Newton iterations per start.
    pub max_iters: usize,
    /// Stop when the projected gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Search box as multiples of the data-scale bases (median pairwise
    /// distance for ℓ, std of the target values for σ). The multistart grid
    /// spans exactly this envelope.
    pub bound_low: f64,
    pub bound_high: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            regularization: Regularization::ConstantOffset,
            sigma_reg: SigmaRegMode::Select { cond_threshold: 1e8 },
            max_iters: 100,
            grad_tol: 1e-6,
            bound_low: 0.5,
            bound_high: 2.0,
        }
    }
}

/// Per-start record kept in the model metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartTrace {
    pub init_sigma: f64,
    pub init_ell: f64,
    pub final_sigma: f64,
    pub final_ell: f64,
    pub final_sigma_reg: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    /// Multiplier applied to features before training; recorded so scoring
    /// can apply the same scale.
    pub feature_scale: f64,
    pub config_hash: Option<String>,
    pub trace: Vec<StartTrace>,
}

/// A trained class: its signals plus the Cholesky factor of
/// `κ_reg(X_c, X_c)`.
#[derive(Debug, Clone)]
pub struct TrainedClass {
    pub label: String,
    pub signals: DMatrix<f64>,
    /// Lower-triangular factor `L` with `L Lᵀ = κ_reg(X_c, X_c)`.
    pub chol_l: DMatrix<f64>,
}

/// Trained MDD-KM model.
#[derive(Debug, Clone)]
pub struct MddKmModel {
    pub params: KernelParams,
    pub regularization: Regularization,
    pub classes: Vec<TrainedClass>,
    pub meta: TrainMeta,
}

/// Per-class raw scores for one test signal; entry `c` is `d_c(x_*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub d: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Cost and gradient
// ---------------------------------------------------------------------------

struct CostContext<'a> {
    d2: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    regularization: Regularization,
}

impl CostContext<'_> {
    /// `yᵀK⁻¹y + log|K|` via Cholesky, or `+∞` when factorization fails.
    fn cost(&self, params: &KernelParams) -> f64 {
        let k = gram_from_sq_dists(self.d2, params, self.regularization);
        let chol = match nalgebra::Cholesky::new(k) {
            Some(c) => c,
            None => return f64::INFINITY,
        };
        let alpha = chol.solve(self.y);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        self.y.dot(&alpha) + log_det
    }

    /// Gradient in (log σ, log ℓ[, log σ_reg]) space.
    fn grad(&self, params: &KernelParams, with_sigma_reg: bool) -> Option<Vec<f64>> {
        let n = self.d2.nrows();
        let k = gram_from_sq_dists(self.d2, params, self.regularization);
        let chol = nalgebra::Cholesky::new(k)?;
        let alpha = chol.solve(self.y);
        let k_inv = chol.inverse();
        let bare = KernelParams { sigma_reg: 0.0, ..*params };
        let e = gram_from_sq_dists(self.d2, &bare, Regularization::None);
        let inv_l2 = 1.0 / (params.ell * params.ell);
        let sr2 = params.sigma_reg * params.sigma_reg;

        // ∂g/∂θ = −αᵀ(∂K/∂θ)α + tr(K⁻¹ ∂K/∂θ); all ∂K are entrywise in E, D².
        let mut quad_s = 0.0; // αᵀ(2E)α
        let mut quad_l = 0.0; // αᵀ(E ⊙ 2D²/ℓ²)α
        let mut tr_s = 0.0;
        let mut tr_l = 0.0;
        for i in 0..n {
            for j in 0..n {
                let de_s = 2.0 * e[(i, j)];
                let de_l = e[(i, j)] * 2.0 * self.d2[(i, j)] * inv_l2;
                let aa = alpha[i] * alpha[j];
                let ki = k_inv[(i, j)];
                quad_s += aa * de_s;
                quad_l += aa * de_l;
                tr_s += ki * de_s;
                tr_l += ki * de_l;
            }
        }
        let mut g = vec![tr_s - quad_s, tr_l - quad_l];
        if with_sigma_reg {
            let (quad_r, tr_r) = match self.regularization {
                Regularization::ConstantOffset => {
                    let sum_alpha = alpha.sum();
                    let ones = DVector::from_element(n, 1.0);
                    let kinv_row_sum = &k_inv * &ones;
                    (2.0 * sr2 * sum_alpha * sum_alpha, 2.0 * sr2 * kinv_row_sum.sum())
                }
                Regularization::Nugget => {
                    (2.0 * sr2 * alpha.dot(&alpha), 2.0 * sr2 * k_inv.trace())
                }
                Regularization::None => (0.0, 0.0),
            };
            g.push(tr_r - quad_r);
        }
        Some(g)
    }
}

/// Negative log marginal likelihood of Θ for the pooled training signals.
/// Returns `+∞` when the regularized Gram matrix fails to factorize.
pub fn nll_cost(
    params: &KernelParams,
    x_train: &DMatrix<f64>,
    y: &DVector<f64>,
    regularization: Regularization,
) -> f64 {
    let d2 = pairwise_sq_dists(x_train);
    CostContext { d2: &d2, y, regularization }.cost(params)
}

/// Analytic gradient of [`nll_cost`] in log-parameter space, over
/// `(log σ, log ℓ)` and optionally `log σ_reg`.
pub fn nll_grad(
    params: &KernelParams,
    x_train: &DMatrix<f64>,
    y: &DVector<f64>,
    regularization: Regularization,
    with_sigma_reg: bool,
) -> Result<Vec<f64>> {
    let d2 = pairwise_sq_dists(x_train);
    CostContext { d2: &d2, y, regularization }
        .grad(params, with_sigma_reg)
        .ok_or_else(|| Error::Factorization("nll_grad: Cholesky failed".into()))
}

// ---------------------------------------------------------------------------
// Box-constrained BFGS
// ---------------------------------------------------------------------------

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimizes `f` inside the box `[lo, hi]` by BFGS with Armijo backtracking;
/// trial points are projected into the box. Deterministic.
fn minimize_box(
    f: &dyn Fn(&[f64]) -> f64,
    g: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
    grad_tol: f64,
) -> (Vec<f64>, f64, usize) {
    let dim = x0.len();
    let mut x = x0.to_vec();
    clamp_into(&mut x, lo, hi);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return (x, f64::INFINITY, 0);
    }
    let mut grad = match g(&x) {
        Some(gr) => gr,
        None => return (x, fx, 0),
    };
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut iters = 0;
    for _ in 0..max_iters {
        // projected gradient: zero out components pushing against a bound
        let mut pg_norm = 0.0f64;
        for i in 0..dim {
            let active = (x[i] <= lo[i] && grad[i] > 0.0) || (x[i] >= hi[i] && grad[i] < 0.0);
            if !active {
                pg_norm = pg_norm.max(grad[i].abs());
            }
        }
        if pg_norm < grad_tol {
            break;
        }
        iters += 1;
        let gvec = DVector::from_column_slice(&grad);
        let mut dir = -(&h * &gvec);
        if dir.dot(&gvec) > -1e-12 * dir.norm() * gvec.norm() {
            dir = -gvec.clone();
        }
        let mut t = 1.0f64;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..40 {
            let mut cand: Vec<f64> = (0..dim).map(|i| x[i] + t * dir[i]).collect();
            clamp_into(&mut cand, lo, hi);
            if cand == x {
                t *= 0.5;
                continue;
            }
            let fc = f(&cand);
            if fc.is_finite() {
                let pred: f64 = (0..dim).map(|i| grad[i] * (cand[i] - x[i])).sum();
                if fc <= fx + 1e-4 * pred.min(0.0) && fc < fx {
                    x_new = cand;
                    f_new = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let grad_new = match g(&x_new) {
            Some(gr) => gr,
            None => {
                x = x_new;
                fx = f_new;
                break;
            }
        };
        let s = DVector::from_fn(dim, |i, _| x_new[i] - x[i]);
        let yv = DVector::from_fn(dim, |i, _| grad_new[i] - grad[i]);
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let i_mat = DMatrix::<f64>::identity(dim, dim);
            let left = &i_mat - &s * yv.transpose() * rho;
            h = &left * h * left.transpose() + &s * s.transpose() * rho;
        }
        x = x_new;
        fx = f_new;
        grad = grad_new;
    }
    (x, fx, iters)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Learn Θ by bounded multistart quasi-Newton descent of the likelihood cost
/// and cache per-class factors. Deterministic given the seed (the seed is
/// recorded; the optimization itself has no random component).
pub fn train(ts: &TrainingSet, cfg: &OptimizerConfig, seed: u64) -> Result<MddKmModel> {
    train_with_target(ts, cfg, seed, squared_norm_target)
}

/// [`train`] with a custom polynomial target function.
pub fn train_with_target(
    ts: &TrainingSet,
    cfg: &OptimizerConfig,
    seed: u64,
    target: TargetFn,
) -> Result<MddKmModel> {
    if !(cfg.bound_low > 0.0 && cfg.bound_high >= cfg.bound_low) {
        return Err(Error::InvalidParam("optimizer bounds must satisfy 0 < low <= high".into()));
    }
    let x_train = ts.x_train();
    let y = target_vector(&x_train, target);
    let n = x_train.ncols();

    let mean_norm = (0..n).map(|i| x_train.column(i).norm()).sum::<f64>() / n as f64;
    let med = median_pairwise_distance(&x_train).max(1e-8 * (1.0 + mean_norm));
    let y_mean = y.sum() / n as f64;
    let y_std = ((y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>()) / n as f64).sqrt();
    let sy = y_std.max(1e-8 * (1.0 + y_mean.abs()));

    let d2 = pairwise_sq_dists(&x_train);

    // σ_reg: selected at the most ill-conditioned corner of the search box
    // (largest σ and ℓ), so every candidate Θ in the box stays feasible.
    let (sigma_reg0, co_optimize) = match cfg.sigma_reg {
        SigmaRegMode::Fixed { value } => {
            if !(value >= 0.0) {
                return Err(Error::InvalidParam("fixed sigma_reg must be >= 0".into()));
            }
            (value, false)
        }
        SigmaRegMode::Select { cond_threshold } => {
            let corner = KernelParams::new(cfg.bound_high * sy, cfg.bound_high * med, 0.0)?;
            let k = kernels::GramMatrix {
                values: gram_from_sq_dists(&d2, &corner, Regularization::None),
                params: corner,
                regularization: Regularization::None,
            };
            (kernels::select_sigma_reg(&k, cond_threshold, cfg.regularization)?, false)
        }
        SigmaRegMode::CoOptimize => {
            let corner = KernelParams::new(cfg.bound_high * sy, cfg.bound_high * med, 0.0)?;
            let k = kernels::GramMatrix {
                values: gram_from_sq_dists(&d2, &corner, Regularization::None),
                params: corner,
                regularization: Regularization::None,
            };
            let sel = kernels::select_sigma_reg(&k, 1e8, cfg.regularization)?;
            (sel.max(1e-10 * sy), true)
        }
    };

    let ctx = CostContext { d2: &d2, y: &y, regularization: cfg.regularization };
    let dim = if co_optimize { 3 } else { 2 };
    let (lo, hi) = {
        let mut lo = vec![(cfg.bound_low * sy).ln(), (cfg.bound_low * med).ln()];
        let mut hi = vec![(cfg.bound_high * sy).ln(), (cfg.bound_high * med).ln()];
        if co_optimize {
            lo.push((sigma_reg0 * 1e-2).max(1e-300).ln());
            hi.push((sy.max(sigma_reg0)).ln());
        }
        (lo, hi)
    };

    let unpack = |theta: &[f64]| -> KernelParams {
        KernelParams {
            sigma: theta[0].exp(),
            ell: theta[1].exp(),
            sigma_reg: if co_optimize { theta[2].exp() } else { sigma_reg0 },
        }
    };
    let f = |theta: &[f64]| ctx.cost(&unpack(theta));
    let g = |theta: &[f64]| ctx.grad(&unpack(theta), co_optimize);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    for &lm in &[0.5, 1.0, 2.0] {
        for &sm in &[0.5, 2.0] {
            let mut theta0 = vec![(sm * sy).ln(), (lm * med).ln()];
            if co_optimize {
                theta0.push(sigma_reg0.max(1e-300).ln());
            }
            let init_cost = f(&theta0);
            let (theta, cost, iters) = minimize_box(&f, &g, &theta0, &lo, &hi, cfg.max_iters, cfg.grad_tol);
            let final_cost = if cost.is_finite() { cost.min(init_cost) } else { init_cost };
            let chosen = if cost.is_finite() && cost <= init_cost { theta } else { theta0.clone() };
            let p = unpack(&chosen);
            trace.push(StartTrace {
                init_sigma: sm * sy,
                init_ell: lm * med,
                final_sigma: p.sigma,
                final_ell: p.ell,
                final_sigma_reg: p.sigma_reg,
                final_cost,
                iterations: iters,
            });
            if final_cost.is_finite() && best.as_ref().map_or(true, |(_, c)| final_cost < *c) {
                best = Some((chosen, final_cost));
            }
        }
    }

    let (theta_hat, _) = best.ok_or_else(|| {
        Error::Training(format!(
            "all {} multistart initializations were infeasible (n={}, med={:.3e}, sy={:.3e}, sigma_reg={:.3e})",
            trace.len(),
            n,
            med,
            sy,
            sigma_reg0
        ))
    })?;
    debug_assert_eq!(theta_hat.len(), dim);
    let params = unpack(&theta_hat);

    let mut classes = Vec::with_capacity(ts.blocks.len());
    for b in &ts.blocks {
        let k = kernels::gram(&b.signals, &params, cfg.regularization)?;
        let chol = nalgebra::Cholesky::new(k.values).ok_or_else(|| {
            Error::Factorization(format!("class {}: Cholesky of regularized Gram failed", b.label))
        })?;
        classes.push(TrainedClass {
            label: b.label.clone(),
            signals: b.signals.clone(),
            chol_l: chol.unpack(),
        });
    }

    Ok(MddKmModel {
        params,
        regularization: cfg.regularization,
        classes,
        meta: TrainMeta { seed, feature_scale: 1.0, config_hash: None, trace },
    })
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

impl MddKmModel {
    pub fn dim(&self) -> usize {
        self.classes[0].signals.nrows()
    }

    pub fn class_labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }
}

/// Per-class uncertainty scores `d_c(x_*)` for one test signal. Training
/// pooled all classes; here only the focal class block enters each entry.
pub fn score(model: &MddKmModel, x_star: &[f64]) -> Result<ScoreVector> {
    if x_star.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x_star.len() });
    }
    let s2 = model.params.sigma * model.params.sigma;
    let mut d = Vec::with_capacity(model.classes.len());
    for class in &model.classes {
        let n_c = class.signals.ncols();
        let mut k_star = DVector::zeros(n_c);
        for i in 0..n_c {
            k_star[i] = kernels::se_kernel(class.signals.column(i).as_slice(), x_star, &model.params)?;
        }
        let v = class
            .chol_l
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
        let mut dc = s2 - v.norm_squared();
        if dc < 0.0 {
            if dc >= -1e-10 {
                dc = 0.0;
            } else {
                return Err(Error::Numerical(format!(
                    "score for class {} fell below the roundoff floor: {dc:.3e}",
                    class.label
                )));
            }
        }
        d.push(dc);
    }
    Ok(ScoreVector { d })
}

/// Column-wise [`score`] over a `D × T` matrix of test signals.
pub fn score_batch(model: &MddKmModel, x_test: &DMatrix<f64>) -> Result<Vec<ScoreVector>> {
    if x_test.nrows() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x_test.nrows() });
    }
    (0..x_test.ncols()).map(|t| score(model, x_test.column(t).as_slice())).collect()
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ClassDoc {
    label: String,
    /// Column signals, one inner vector per signal.
    signals: Vec<Vec<f64>>,
    /// Lower-triangular factor, row-major including zeros above the diagonal.
    chol_rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema_version: u32,
    params: KernelParams,
    regularization: Regularization,
    dim: usize,
    classes: Vec<ClassDoc>,
    meta: TrainMeta,
}

impl MddKmModel {
    pub fn to_json(&self) -> Result<String> {
        let dim = self.dim();
        let doc = ModelDoc {
            schema_version: MODEL_SCHEMA_VERSION,
            params: self.params,
            regularization: self.regularization,
            dim,
            classes: self
                .classes
                .iter()
                .map(|c| ClassDoc {
                    label: c.label.clone(),
                    signals: (0..c.signals.ncols())
                        .map(|i| c.signals.column(i).as_slice().to_vec())
                        .collect(),
                    chol_rows: (0..c.chol_l.nrows())
                        .map(|r| (0..c.chol_l.ncols()).map(|cc| c.chol_l[(r, cc)]).collect())
                        .collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model schema version {} (expected {})",
                doc.schema_version, MODEL_SCHEMA_VERSION
            )));
        }
        doc.params.validate()?;
        let mut classes = Vec::with_capacity(doc.classes.len());
        for c in &doc.classes {
            let n_c = c.signals.len();
            if n_c == 0 {
                return Err(Error::Schema(format!("class {} has no signals", c.label)));
            }
            for s in &c.signals {
                if s.len() != doc.dim {
                    return Err(Error::Schema(format!(
                        "class {}: signal dimension {} != {}",
                        c.label,
                        s.len(),
                        doc.dim
                    )));
                }
            }
            let signals = DMatrix::from_fn(doc.dim, n_c, |r, col| c.signals[col][r]);
            if c.chol_rows.len() != n_c || c.chol_rows.iter().any(|r| r.len() != n_c) {
                return Err(Error::Schema(format!("class {}: malformed factor", c.label)));
            }
            let chol_l = DMatrix::from_fn(n_c, n_c, |r, col| c.chol_rows[r][col]);
            // the stored factor must reproduce the regularized class Gram
            let k = kernels::gram(&signals, &doc.params, doc.regularization)?;
            let recon = &chol_l * chol_l.transpose();
            let err = (&recon - &k.values).norm() / k.values.norm().max(1e-300);
            if err > 1e-8 {
                return Err(Error::Schema(format!(
                    "class {}: stored factor does not reproduce its Gram matrix (rel err {err:.3e})",
                    c.label
                )));
            }
            classes.push(TrainedClass { label: c.label.clone(), signals, chol_l });
        }
        Ok(MddKmModel {
            params: doc.params,
            regularization: doc.regularization,
            classes,
            meta: doc.meta,
        })
    }
}
