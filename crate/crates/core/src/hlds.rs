//! Hierarchical linear dynamical system front end.
//!
//! Audio is cut into overlapping windows, mapped to DCT magnitudes
//! `y_t = |A y′_t|`, and filtered by a Kalman filter over the augmented
//! state of a stack of random-walk layers coupled top-down:
//!
//! ```text
//! x^{(l)}_t = x^{(l)}_{t-1} + B^{(l)} x^{(l+1)}_{t-1} + ε^{(l)}_t
//! y_t       = H x^{(1)}_t + ε^y_t
//! ```
//!
//! The top-layer sub-vector of the posterior mean is the feature vector
//! consumed by the classifiers. Filtering is causal; note onsets therefore
//! show up in the features with a short delay.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Front-end configuration. `layer_dims` is ordered bottom (observation
/// side) to top; each dimension must be divisible by the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HldsConfig {
    pub layer_dims: Vec<usize>,
    /// Window length w′ in samples; equals the bottom layer dimension when
    /// the observation matrix is the identity.
    pub window_len: usize,
    /// Overlap q in samples between consecutive windows; the hop is
    /// `window_len − overlap`.
    pub overlap: usize,
    /// Proportionality constant: layer innovation variance is `r0 · dim`,
    /// observation noise variance is `r0 · M`, unless overridden below.
    pub r0: f64,
    /// Optional explicit per-layer innovation variances, bottom to top.
    #[serde(default)]
    pub layer_noise: Option<Vec<f64>>,
    /// Optional explicit observation noise variance.
    #[serde(default)]
    pub obs_noise: Option<f64>,
    /// Diffuse initial covariance scale (cov starts at `init_cov · I`).
    pub init_cov: f64,
}

impl Default for HldsConfig {
    fn default() -> Self {
        HldsConfig {
            layer_dims: vec![96, 24, 12],
            window_len: 96,
            overlap: 48,
            r0: 1e-3,
            layer_noise: None,
            obs_noise: None,
            init_cov: 10.0,
        }
    }
}

impl HldsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::InvalidParam("layer_dims must be non-empty".into()));
        }
        for w in self.layer_dims.windows(2) {
            if w[1] == 0 || w[0] % w[1] != 0 {
                return Err(Error::InvalidParam(format!(
                    "layer dimension {} is not divisible by the next layer's {}",
                    w[0], w[1]
                )));
            }
        }
        if self.window_len == 0 {
            return Err(Error::InvalidParam("window_len must be positive".into()));
        }
        if self.overlap >= self.window_len {
            return Err(Error::InvalidParam(format!(
                "overlap {} must be smaller than window_len {}",
                self.overlap, self.window_len
            )));
        }
        if !(self.r0 > 0.0) || !(self.init_cov > 0.0) {
            return Err(Error::InvalidParam("r0 and init_cov must be positive".into()));
        }
        if let Some(noise) = &self.layer_noise {
            if noise.len() != self.layer_dims.len() || noise.iter().any(|v| !(v > &0.0)) {
                return Err(Error::InvalidParam("layer_noise must be positive per layer".into()));
            }
        }
        if self.window_len != self.layer_dims[0] {
            return Err(Error::InvalidParam(format!(
                "identity observation requires window_len {} == bottom layer dim {}",
                self.window_len, self.layer_dims[0]
            )));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.window_len - self.overlap
    }

    pub fn top_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}

/// Coupling matrix `B` distributing an upper layer's `S`-dimensional state
/// into the `N`-dimensional layer below. Block `s` (rows `s·N/S .. (s+1)·N/S`)
/// has the value `2S/N` in column `s` and zeros elsewhere.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub b: DMatrix<f64>,
}

pub fn build_coupling(n: usize, s: usize) -> Result<CouplingMatrix> {
    if s == 0 || n == 0 || n % s != 0 {
        return Err(Error::InvalidParam(format!("{s} must divide {n}")));
    }
    let group = n / s;
    let value = 2.0 * s as f64 / n as f64;
    let mut b = DMatrix::zeros(n, s);
    for col in 0..s {
        for row in col * group..(col + 1) * group {
            b[(row, col)] = value;
        }
    }
    Ok(CouplingMatrix { b })
}

/// Augmented state-space model. The state stacks the layers top (coarsest)
/// first, so the transition matrix is block lower bidiagonal with identity
/// diagonal blocks and the couplings on the subdiagonal.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Layer dimensions in state order (top first).
    pub dims_top_first: Vec<usize>,
    pub init_cov: f64,
}

impl AugmentedModel {
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn top_dim(&self) -> usize {
        self.dims_top_first[0]
    }

    pub fn initial_state(&self) -> HldsState {
        let n = self.state_dim();
        HldsState {
            mean: DVector::zeros(n),
            cov: DMatrix::identity(n, n) * self.init_cov,
            t: 0,
        }
    }
}

/// Build the augmented model from a validated config.
pub fn assemble(config: &HldsConfig) -> Result<AugmentedModel> {
    config.validate()?;
    let dims_top_first: Vec<usize> = config.layer_dims.iter().rev().cloned().collect();
    let state_dim: usize = dims_top_first.iter().sum();
    let mut f = DMatrix::identity(state_dim, state_dim);
    let mut offset = 0;
    for i in 0..dims_top_first.len().saturating_sub(1) {
        let s = dims_top_first[i];
        let n = dims_top_first[i + 1];
        let coupling = build_coupling(n, s)?;
        f.view_mut((offset + s, offset), (n, s)).copy_from(&coupling.b);
        offset += s;
    }

    let mut q = DMatrix::zeros(state_dim, state_dim);
    let mut offset = 0;
    // layer_noise is given bottom→top; state is top→bottom
    for (i, &dim) in dims_top_first.iter().enumerate() {
        let bottom_index = dims_top_first.len() - 1 - i;
        let r = match &config.layer_noise {
            Some(noise) => noise[bottom_index],
            None => config.r0 * dim as f64,
        };
        for k in 0..dim {
            q[(offset + k, offset + k)] = r;
        }
        offset += dim;
    }

    let m = config.layer_dims[0];
    let mut h = DMatrix::zeros(m, state_dim);
    h.view_mut((0, state_dim - m), (m, m))
        .copy_from(&DMatrix::identity(m, m));
    let r_y = config.obs_noise.unwrap_or(config.r0 * m as f64);
    if !(r_y > 0.0) {
        return Err(Error::InvalidParam("observation noise must be positive".into()));
    }
    let r = DMatrix::identity(m, m) * r_y;

    Ok(AugmentedModel { f, h, q, r, dims_top_first, init_cov: config.init_cov })
}

/// Filter state: posterior mean and covariance after `t` updates.
#[derive(Debug, Clone)]
pub struct HldsState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub t: usize,
}

impl HldsState {
    /// Top-layer sub-vector of the posterior mean.
    pub fn top_layer(&self, model: &AugmentedModel) -> DVector<f64> {
        self.mean.rows(0, model.top_dim()).into_owned()
    }
}

/// One predict + update step. The covariance is re-symmetrized after the
/// update.
pub fn kalman_step(model: &AugmentedModel, state: &HldsState, y: &DVector<f64>) -> Result<HldsState> {
    if y.len() != model.obs_dim() {
        return Err(Error::DimensionMismatch { expected: model.obs_dim(), got: y.len() });
    }
    if state.mean.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            got: state.mean.len(),
        });
    }
    // predict
    let mean_pred = &model.f * &state.mean;
    let cov_pred = &model.f * &state.cov * model.f.transpose() + &model.q;
    // update
    let hp = &model.h * &cov_pred; // M × n
    let s = &hp * model.h.transpose() + &model.r;
    let chol = nalgebra::Cholesky::new(s)
        .ok_or_else(|| Error::Factorization("innovation covariance not positive definite".into()))?;
    let gain = chol.solve(&hp).transpose(); // n × M
    let innovation = y - &model.h * &mean_pred;
    let mean = &mean_pred + &gain * innovation;
    let mut cov = &cov_pred - &gain * &hp;
    // enforce symmetry
    for i in 0..cov.nrows() {
        for j in (i + 1)..cov.ncols() {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(HldsState { mean, cov, t: state.t + 1 })
}

/// Orthonormal DCT-II matrix of size `n`.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for m in 0..n {
            a[(k, m)] =
                scale * (std::f64::consts::PI * k as f64 * (2.0 * m as f64 + 1.0) / (2.0 * nf)).cos();
        }
    }
    a
}

/// Sliding windows mapped to DCT magnitudes: `y_t = |A y′_t|` with the
/// orthonormal DCT-II. Window `t` covers samples `[t·hop, t·hop + w′)`.
pub fn preprocess(audio: &[f64], window_len: usize, overlap: usize) -> Result<Vec<DVector<f64>>> {
    if window_len == 0 || overlap >= window_len {
        return Err(Error::InvalidParam("require 0 <= overlap < window_len".into()));
    }
    if audio.len() < window_len {
        return Err(Error::InvalidParam(format!(
            "audio length {} shorter than one window {}",
            audio.len(),
            window_len
        )));
    }
    let hop = window_len - overlap;
    let count = (audio.len() - window_len) / hop + 1;
    let a = dct_matrix(window_len);
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let w = DVector::from_column_slice(&audio[t * hop..t * hop + window_len]);
        let mut y = &a * w;
        y.apply(|v| *v = v.abs());
        out.push(y);
    }
    Ok(out)
}

/// Number of windows produced by [`preprocess`] for a given signal length.
pub fn window_count(len: usize, window_len: usize, overlap: usize) -> usize {
    if len < window_len {
        return 0;
    }
    (len - window_len) / (window_len - overlap) + 1
}

/// Run the full front end: preprocess, filter every window, and emit the
/// top-layer posterior mean per window.
pub fn extract_features(audio: &[f64], config: &HldsConfig) -> Result<Vec<DVector<f64>>> {
    let model = assemble(config)?;
    let ys = preprocess(audio, config.window_len, config.overlap)?;
    let mut state = model.initial_state();
    let mut out = Vec::with_capacity(ys.len());
    for y in &ys {
        state = kalman_step(&model, &state, y)?;
        out.push(state.top_layer(&model));
    }
    Ok(out)
}
