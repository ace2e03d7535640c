//! Possibilistic K-nearest-neighbor baseline.
//!
//! Training fits a small self-organizing map per class (1-D ring topology)
//! and keeps, per prototype, a representativeness weight (fraction of class
//! points it wins) and a scale (mean distance of those points). At test
//! time the K nearest prototypes overall are collected and each class's
//! possibility is the best `w · exp(−‖x−p‖²/η²)` among its members in that
//! set. Possibilities live in `[0, 1]` per class with no sum constraint:
//! all-low means unknown/outlier, several-high means ambiguous.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrainingSet;

pub const PROTOTYPE_SCHEMA_VERSION: u32 = 1;

/// Online SOM schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SomConfig {
    /// Total epochs are `epochs_per_prototype · P`.
    pub epochs_per_prototype: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Ring neighborhood radius decays exponentially from `P/2` to this.
    pub radius_end: f64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig { epochs_per_prototype: 200, lr_start: 0.5, lr_end: 0.01, radius_end: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub center: Vec<f64>,
    /// Fraction of class points whose nearest prototype is this one, in (0, 1].
    pub weight: f64,
    /// Mean distance of the assigned points (floored at 1e-8).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototypes {
    pub label: String,
    pub prototypes: Vec<Prototype>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub schema_version: u32,
    pub dim: usize,
    pub classes: Vec<ClassPrototypes>,
    pub seed: u64,
    #[serde(default)]
    pub feature_scale: f64,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Per-class possibilities in `[0, 1]`, no sum-to-one constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct PossibilityVector {
    pub p: Vec<f64>,
}

const SCALE_FLOOR: f64 = 1e-8;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn som_ring(points: &DMatrix<f64>, p: usize, cfg: &SomConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.ncols();
    let d = points.nrows();
    let mut nodes: Vec<Vec<f64>> = (0..p)
        .map(|_| points.column(rng.random_range(0..n)).as_slice().to_vec())
        .collect();
    let epochs = cfg.epochs_per_prototype * p;
    let total = (epochs * n).max(1);
    let radius_start = (p as f64 / 2.0).max(cfg.radius_end);
    let mut order: Vec<usize> = (0..n).collect();
    let mut it = 0usize;
    for _ in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            let frac = it as f64 / (total - 1).max(1) as f64;
            let lr = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
            let radius = radius_start * (cfg.radius_end / radius_start).powf(frac);
            let x = points.column(i);
            let mut bmu = 0usize;
            let mut best = f64::INFINITY;
            for (j, node) in nodes.iter().enumerate() {
                let dist = sq_dist(node, x.as_slice());
                if dist < best {
                    best = dist;
                    bmu = j;
                }
            }
            for (j, node) in nodes.iter_mut().enumerate() {
                let ring = {
                    let raw = if j >= bmu { j - bmu } else { bmu - j };
                    raw.min(p - raw) as f64
                };
                let h = (-ring * ring / (2.0 * radius * radius)).exp();
                for k in 0..d {
                    node[k] += lr * h * (x[k] - node[k]);
                }
            }
            it += 1;
        }
    }
    nodes
}

/// Fit per-class prototypes. `p` is lowered to the smallest class size when
/// a class has fewer points than requested.
pub fn train_prototypes(
    ts: &TrainingSet,
    p: usize,
    cfg: &SomConfig,
    seed: u64,
) -> Result<PrototypeSet> {
    if p == 0 {
        return Err(Error::InvalidParam("prototype count must be >= 1".into()));
    }
    let p_eff = p.min(ts.blocks.iter().map(|b| b.signals.ncols()).min().unwrap_or(0));
    if p_eff == 0 {
        return Err(Error::EmptyInput("training class has no signals"));
    }
    let mut classes = Vec::with_capacity(ts.blocks.len());
    for (ci, block) in ts.blocks.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((ci as u64).wrapping_mul(0x9E3779B97F4A7C15)));
        let nodes = som_ring(&block.signals, p_eff, cfg, &mut rng);
        let n = block.signals.ncols();
        let mut counts = vec![0usize; p_eff];
        let mut dist_sums = vec![0.0f64; p_eff];
        for i in 0..n {
            let x = block.signals.column(i);
            let mut bmu = 0usize;
            let mut best = f64::INFINITY;
            for (j, node) in nodes.iter().enumerate() {
                let dist = sq_dist(node, x.as_slice());
                if dist < best {
                    best = dist;
                    bmu = j;
                }
            }
            counts[bmu] += 1;
            dist_sums[bmu] += best.sqrt();
        }
        let prototypes = nodes
            .into_iter()
            .enumerate()
            .map(|(j, center)| Prototype {
                center,
                weight: counts[j].max(1) as f64 / n as f64,
                scale: if counts[j] > 0 {
                    (dist_sums[j] / counts[j] as f64).max(SCALE_FLOOR)
                } else {
                    SCALE_FLOOR
                },
            })
            .collect();
        classes.push(ClassPrototypes { label: block.label.clone(), prototypes });
    }
    Ok(PrototypeSet {
        schema_version: PROTOTYPE_SCHEMA_VERSION,
        dim: ts.dim(),
        classes,
        seed,
        feature_scale: 1.0,
        config_hash: None,
    })
}

/// Possibility of membership to each class from the K nearest prototypes.
pub fn possibility(set: &PrototypeSet, x_star: &[f64], k: usize) -> Result<PossibilityVector> {
    if x_star.len() != set.dim {
        return Err(Error::DimensionMismatch { expected: set.dim, got: x_star.len() });
    }
    let total: usize = set.classes.iter().map(|c| c.prototypes.len()).sum();
    if k == 0 || k > total {
        return Err(Error::InvalidParam(format!(
            "neighbor count {k} must be in 1..={total}"
        )));
    }
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (ci, class) in set.classes.iter().enumerate() {
        for (pi, proto) in class.prototypes.iter().enumerate() {
            entries.push((sq_dist(&proto.center, x_star), ci, pi));
        }
    }
    entries.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut p = vec![0.0; set.classes.len()];
    for &(d2, ci, pi) in entries.iter().take(k) {
        let proto = &set.classes[ci].prototypes[pi];
        let v = proto.weight * (-d2 / (proto.scale * proto.scale)).exp();
        if v > p[ci] {
            p[ci] = v;
        }
    }
    Ok(PossibilityVector { p })
}

impl PrototypeSet {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PrototypeSet =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if set.schema_version != PROTOTYPE_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported prototype schema version {} (expected {})",
                set.schema_version, PROTOTYPE_SCHEMA_VERSION
            )));
        }
        for c in &set.classes {
            for proto in &c.prototypes {
                if proto.center.len() != set.dim {
                    return Err(Error::Schema(format!("class {}: prototype dim mismatch", c.label)));
                }
                if !(proto.weight > 0.0 && proto.weight <= 1.0) {
                    return Err(Error::Schema(format!("class {}: weight out of (0,1]", c.label)));
                }
            }
        }
        Ok(set)
    }

    pub fn class_labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }
}
