//! Evaluation harness: confusion matrices and macro F-scores at sliding
//! window and note-instance granularity, the multi-seed experiment loop,
//! and a paired one-sided Wilcoxon signed-rank test.
//!
//! Window unit: every window is one classification decision; detection
//! delay and early cut-offs are penalized. The macro average runs over the
//! training classes plus the OOD category.
//!
//! Note unit: a predicted segment matches a true instance when it covers
//! more than half of the instance's windows. The macro average runs over
//! the training classes only; OOD has no per-class F at this granularity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::decision::{HopMeta, SegmentLabel};
use crate::error::{Error, Result};
use crate::pipeline::{self, AlgorithmSet};
use crate::synth::Corpus;

/// One labeled note span in samples; `end_sample` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSpan {
    pub start_sample: usize,
    pub end_sample: usize,
    pub label: String,
}

/// Ground truth for one clip: the instance list tiles the clip; window
/// labels derive from it through the hop metadata (window center rule).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub instances: Vec<NoteSpan>,
    pub hop: HopMeta,
}

impl GroundTruth {
    pub fn new(instances: Vec<NoteSpan>, hop: HopMeta) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptyInput("ground truth has no instances"));
        }
        let mut pos = instances[0].start_sample;
        for span in &instances {
            if span.start_sample != pos || span.end_sample <= span.start_sample {
                return Err(Error::InvalidParam("instances must tile the clip".into()));
            }
            pos = span.end_sample;
        }
        Ok(GroundTruth { instances, hop })
    }

    /// Index of the instance containing window `t`'s center sample.
    pub fn instance_of_window(&self, t: usize) -> Option<usize> {
        let center = t * self.hop.hop + self.hop.window_len / 2;
        self.instances.iter().position(|s| s.start_sample <= center && center < s.end_sample)
    }

    /// Per-window truth labels over the training alphabet (+ OOD).
    pub fn window_labels(&self, t_max: usize, train_labels: &[String]) -> Result<Vec<SegmentLabel>> {
        (0..t_max)
            .map(|t| {
                let idx = self.instance_of_window(t).ok_or_else(|| {
                    Error::InvalidParam(format!("window {t} lies outside the ground truth"))
                })?;
                let label = &self.instances[idx].label;
                Ok(match train_labels.iter().position(|l| l == label) {
                    Some(c) => SegmentLabel::Class(c),
                    None => SegmentLabel::Ood,
                })
            })
            .collect()
    }
}

/// Evaluation granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Window,
    Note,
}

/// Confusion counts and F-scores for one clip and unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub unit: Unit,
    pub seed: u64,
    /// Category labels: the training classes followed by `"OOD"`.
    pub labels: Vec<String>,
    /// Rows: true category; columns: predicted category.
    pub confusion: Vec<Vec<usize>>,
    /// Per-category F-score aligned with `labels`; `None` where the unit
    /// defines no score (OOD at note granularity).
    pub per_class_f: Vec<Option<f64>>,
    pub macro_f: f64,
    /// Note unit only: predicted non-OOD segments matching no instance,
    /// per training class (counted as false positives).
    pub spurious_predictions: Vec<usize>,
    /// Note unit only: true OOD instances assigned to a training class.
    pub ood_to_train: usize,
}

/// `2·tp / (2·tp + fp + fn)`, zero when the denominator vanishes.
pub fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Per-class F-scores and their unweighted mean from (tp, fp, fn) counts.
pub fn macro_f_from_counts(counts: &[(usize, usize, usize)]) -> (Vec<f64>, f64) {
    let per: Vec<f64> = counts.iter().map(|&(tp, fp, fn_)| f_score(tp, fp, fn_)).collect();
    let mean = per.iter().sum::<f64>() / per.len().max(1) as f64;
    (per, mean)
}

fn label_index(label: &SegmentLabel, n_classes: usize) -> Result<usize> {
    match label {
        SegmentLabel::Class(c) if *c < n_classes => Ok(*c),
        SegmentLabel::Class(c) => Err(Error::InvalidParam(format!(
            "predicted class {c} outside the alphabet of {n_classes} classes"
        ))),
        SegmentLabel::Ood => Ok(n_classes),
    }
}

/// Builds the report for one clip. `pred` holds one label per window.
pub fn confusion(
    pred: &[SegmentLabel],
    truth: &GroundTruth,
    unit: Unit,
    train_labels: &[String],
    seed: u64,
) -> Result<EvalReport> {
    if pred.is_empty() {
        return Err(Error::EmptyInput("no predictions"));
    }
    let c = train_labels.len();
    let mut labels = train_labels.to_vec();
    labels.push("OOD".into());

    match unit {
        Unit::Window => {
            let truth_labels = truth.window_labels(pred.len(), train_labels)?;
            let mut conf = vec![vec![0usize; c + 1]; c + 1];
            for (p, t) in pred.iter().zip(&truth_labels) {
                conf[label_index(t, c)?][label_index(p, c)?] += 1;
            }
            let counts: Vec<(usize, usize, usize)> = (0..=c)
                .map(|k| {
                    let tp = conf[k][k];
                    let fp = (0..=c).filter(|&r| r != k).map(|r| conf[r][k]).sum();
                    let fn_ = (0..=c).filter(|&col| col != k).map(|col| conf[k][col]).sum();
                    (tp, fp, fn_)
                })
                .collect();
            let (per, macro_f) = macro_f_from_counts(&counts);
            Ok(EvalReport {
                unit,
                seed,
                labels,
                confusion: conf,
                per_class_f: per.into_iter().map(Some).collect(),
                macro_f,
                spurious_predictions: vec![0; c],
                ood_to_train: 0,
            })
        }
        Unit::Note => {
            // window range of each true instance under the center rule
            let t_max = pred.len();
            let mut ranges: Vec<Option<(usize, usize)>> = vec![None; truth.instances.len()];
            for t in 0..t_max {
                if let Some(idx) = truth.instance_of_window(t) {
                    let r = ranges[idx].get_or_insert((t, t));
                    r.1 = t;
                }
            }
            // predicted maximal runs
            let mut segments: Vec<(usize, usize, SegmentLabel)> = Vec::new();
            let mut t = 0;
            while t < t_max {
                let mut u = t;
                while u < t_max && pred[u] == pred[t] {
                    u += 1;
                }
                segments.push((t, u - 1, pred[t]));
                t = u;
            }
            let mut conf = vec![vec![0usize; c + 1]; c + 1];
            let mut matched = vec![false; segments.len()];
            let mut ood_to_train = 0usize;
            for (idx, span) in truth.instances.iter().enumerate() {
                let true_idx = match train_labels.iter().position(|l| l == &span.label) {
                    Some(k) => k,
                    None => c,
                };
                let mut pred_idx = c; // OOD unless covered
                if let Some((w0, w1)) = ranges[idx] {
                    let inst_len = w1 - w0 + 1;
                    for (si, &(s0, s1, label)) in segments.iter().enumerate() {
                        if label == SegmentLabel::Ood {
                            continue;
                        }
                        let overlap =
                            (s1.min(w1) + 1).saturating_sub(s0.max(w0));
                        if 2 * overlap > inst_len {
                            pred_idx = label_index(&label, c)?;
                            matched[si] = true;
                        }
                    }
                }
                conf[true_idx][pred_idx] += 1;
                if true_idx == c && pred_idx < c {
                    ood_to_train += 1;
                }
            }
            let mut spurious = vec![0usize; c];
            for (si, &(_, _, label)) in segments.iter().enumerate() {
                if label != SegmentLabel::Ood && !matched[si] {
                    spurious[label_index(&label, c)?] += 1;
                }
            }
            let counts: Vec<(usize, usize, usize)> = (0..c)
                .map(|k| {
                    let tp = conf[k][k];
                    let fp: usize =
                        (0..=c).filter(|&r| r != k).map(|r| conf[r][k]).sum::<usize>() + spurious[k];
                    let fn_: usize = (0..=c).filter(|&col| col != k).map(|col| conf[k][col]).sum();
                    (tp, fp, fn_)
                })
                .collect();
            let (per, macro_f) = macro_f_from_counts(&counts);
            let mut per_class_f: Vec<Option<f64>> = per.into_iter().map(Some).collect();
            per_class_f.push(None); // OOD has no note-unit F
            Ok(EvalReport {
                unit,
                seed,
                labels,
                confusion: conf,
                per_class_f,
                macro_f,
                spurious_predictions: spurious,
                ood_to_train,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

/// Complementary error function (rational Chebyshev fit, ~1e-7 accuracy).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 2.0 / (2.0 + z);
    let ty = 4.0 * t - 2.0;
    const COF: [f64; 28] = [
        -1.3026537197817094,
        6.4196979235649026e-1,
        1.9476473204185836e-2,
        -9.561514786808631e-3,
        -9.46595344482036e-4,
        3.66839497852761e-4,
        4.2523324806907e-5,
        -2.0278578112534e-5,
        -1.624290004647e-6,
        1.303655835580e-6,
        1.5626441722e-8,
        -8.5238095915e-8,
        6.529054439e-9,
        5.059343495e-9,
        -9.91364156e-10,
        -2.27365122e-10,
        9.6467911e-11,
        2.394038e-12,
        -6.886027e-12,
        8.94487e-13,
        3.13092e-13,
        -1.12708e-13,
        3.81e-16,
        7.106e-15,
        -1.523e-15,
        -9.4e-17,
        1.21e-16,
        -2.8e-17,
    ];
    let mut d = 0.0;
    let mut dd = 0.0;
    for &c in COF.iter().rev().take(COF.len() - 1) {
        let tmp = d;
        d = ty * d - dd + c;
        dd = tmp;
    }
    let ans = t * (-z * z + 0.5 * (COF[0] + ty * d) - dd).exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

fn standard_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// One-sided Wilcoxon signed-rank p-value for the alternative `A > B`.
///
/// Zero differences are dropped (all-zero input returns `p = 1`). Tied
/// absolute differences receive average ranks. With 25 or fewer non-zero
/// pairs the null distribution is evaluated exactly by dynamic programming
/// over doubled ranks; beyond that a tie-corrected normal approximation
/// with continuity correction is used.
pub fn significance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 5 {
        return Err(Error::InvalidParam("need at least 5 paired samples".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Ok(1.0);
    }
    let n = diffs.len();
    // average ranks of |d|, doubled so ties stay integral
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && diffs[order[j]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let rank2 = (i + 1 + j) as u64; // 2 × average rank
        for &idx in &order[i..j] {
            ranks2[idx] = rank2;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    let w2_plus: u64 =
        diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();

    if n <= 25 {
        // exact: count sign patterns whose positive doubled-rank sum ≥ observed
        let total: u64 = ranks2.iter().sum();
        let mut counts = vec![0u128; total as usize + 1];
        counts[0] = 1;
        for &r in &ranks2 {
            let r = r as usize;
            for s in (r..counts.len()).rev() {
                counts[s] += counts[s - r];
            }
        }
        let ge: u128 = counts[w2_plus as usize..].iter().sum();
        Ok(ge as f64 / 2f64.powi(n as i32))
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 =
            tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            return Ok(1.0);
        }
        let w_plus = w2_plus as f64 / 2.0;
        let z = (w_plus - mean - 0.5) / var.sqrt();
        Ok(standard_normal_sf(z))
    }
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let n = v.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut ranks = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && v[order[j]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + j + 1) as f64 / 2.0;
            for &idx in &order[i..j] {
                ranks[idx] = avg;
            }
            i = j;
        }
        ranks
    };
    let ra = rank(a);
    let rb = rank(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    cov / (va.sqrt() * vb.sqrt()).max(1e-300)
}

// ---------------------------------------------------------------------------
// Multi-seed experiment
// ---------------------------------------------------------------------------

/// Mean per-class and macro F for one algorithm and unit over all seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub per_class_mean_f: Vec<Option<f64>>,
    pub macro_mean_f: f64,
    pub seeds_with_zero_ood_to_train: usize,
}

/// Table-shaped cross-algorithm summary for one evaluation unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitSummary {
    pub labels: Vec<String>,
    pub mddkm: Option<AlgoSummary>,
    pub pknn: Option<AlgoSummary>,
    /// One-sided Wilcoxon p-value for MDD-KM macro F > PKNN macro F.
    pub p_value_mddkm_gt_pknn: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub window_unit: UnitSummary,
    pub note_unit: UnitSummary,
    /// All per-seed reports, ordered by seed then algorithm.
    pub reports: Vec<EvalReport>,
}

fn summarize(reports: &[&EvalReport]) -> AlgoSummary {
    let n = reports.len().max(1) as f64;
    let k = reports[0].per_class_f.len();
    let per_class_mean_f = (0..k)
        .map(|i| {
            if reports.iter().any(|r| r.per_class_f[i].is_none()) {
                None
            } else {
                Some(reports.iter().map(|r| r.per_class_f[i].unwrap()).sum::<f64>() / n)
            }
        })
        .collect();
    AlgoSummary {
        per_class_mean_f,
        macro_mean_f: reports.iter().map(|r| r.macro_f).sum::<f64>() / n,
        seeds_with_zero_ood_to_train: reports.iter().filter(|r| r.ood_to_train == 0).count(),
    }
}

fn unit_summary(
    runs: &[pipeline::SeedRun],
    unit: Unit,
    labels: Vec<String>,
) -> Result<UnitSummary> {
    let pick = |alg: fn(&pipeline::SeedRun) -> Option<&pipeline::AlgoOutcome>| -> Vec<&EvalReport> {
        runs.iter()
            .filter_map(alg)
            .map(|o| match unit {
                Unit::Window => &o.window_report,
                Unit::Note => &o.note_report,
            })
            .collect()
    };
    let mddkm_reports = pick(|r| r.mddkm.as_ref());
    let pknn_reports = pick(|r| r.pknn.as_ref());
    let mddkm = (!mddkm_reports.is_empty()).then(|| summarize(&mddkm_reports));
    let pknn = (!pknn_reports.is_empty()).then(|| summarize(&pknn_reports));
    let p_value = if mddkm_reports.len() == pknn_reports.len() && mddkm_reports.len() >= 5 {
        let a: Vec<f64> = mddkm_reports.iter().map(|r| r.macro_f).collect();
        let b: Vec<f64> = pknn_reports.iter().map(|r| r.macro_f).collect();
        Some(significance(&a, &b)?)
    } else {
        None
    };
    Ok(UnitSummary { labels, mddkm, pknn, p_value_mddkm_gt_pknn: p_value })
}

/// Runs the full protocol for every seed (training instances sampled per
/// seed, the rest concatenated in random order as the test clip) and
/// aggregates both units and both algorithms. Seeds run in parallel; the
/// output is deterministic.
pub fn run_experiment(
    corpus: &Corpus,
    config: &PipelineConfig,
    seeds: &[u64],
    algorithms: AlgorithmSet,
) -> Result<ExperimentSummary> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("no seeds"));
    }
    let runs: Vec<pipeline::SeedRun> = seeds
        .par_iter()
        .map(|&seed| pipeline::run_seed(corpus, config, seed, algorithms))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = corpus.spec.train_classes.clone();
    labels.push("OOD".into());
    let window_unit = unit_summary(&runs, Unit::Window, labels.clone())?;
    let note_unit = unit_summary(&runs, Unit::Note, labels)?;
    let mut reports = Vec::new();
    for run in &runs {
        for outcome in [&run.mddkm, &run.pknn].into_iter().flatten() {
            reports.push(outcome.window_report.clone());
            reports.push(outcome.note_report.clone());
        }
    }
    Ok(ExperimentSummary {
        config_hash: config.config_hash(),
        seeds: seeds.to_vec(),
        window_unit,
        note_unit,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hop() -> HopMeta {
        HopMeta { window_len: 96, hop: 48, sample_rate: 22050 }
    }

    fn truth_of(windows: &[(usize, &str)]) -> GroundTruth {
        // windows: (#windows, label) consecutive spans
        let mut instances = Vec::new();
        let mut start = 0usize;
        for &(count, label) in windows {
            let end = start + count * 48;
            instances.push(NoteSpan { start_sample: start, end_sample: end, label: label.into() });
            start = end;
        }
        // pad the tail so the last window's center stays inside
        instances.last_mut().unwrap().end_sample += 96;
        GroundTruth::new(instances, hop()).unwrap()
    }

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn perfect_predictions_give_unit_macro_f() {
        let truth = truth_of(&[(50, "a"), (50, "b"), (50, "c"), (50, "x")]);
        let pred = truth.window_labels(200, &labels()).unwrap();
        let rep = confusion(&pred, &truth, Unit::Window, &labels(), 0).unwrap();
        assert_eq!(rep.macro_f, 1.0);
        for (i, row) in rep.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(v, 0);
                }
            }
        }
        let note = confusion(&pred, &truth, Unit::Note, &labels(), 0).unwrap();
        assert_eq!(note.macro_f, 1.0);
        assert_eq!(note.ood_to_train, 0);
        assert_eq!(note.per_class_f[3], None);
    }

    #[test]
    fn all_ood_predictions_zero_train_f() {
        let truth = truth_of(&[(50, "a"), (50, "b"), (50, "x")]);
        let pred = vec![SegmentLabel::Ood; 150];
        let rep = confusion(&pred, &truth, Unit::Window, &labels(), 0).unwrap();
        for c in 0..3 {
            assert_eq!(rep.per_class_f[c], Some(0.0));
        }
        // confusion row sums equal true counts
        let truth_labels = truth.window_labels(150, &labels()).unwrap();
        for k in 0..4 {
            let want = truth_labels
                .iter()
                .filter(|l| label_index(l, 3).unwrap() == k)
                .count();
            assert_eq!(rep.confusion[k].iter().sum::<usize>(), want);
        }
    }

    #[test]
    fn macro_f_hand_computed_counts() {
        let (per, macro_f) = macro_f_from_counts(&[(8, 2, 2), (5, 0, 5), (10, 0, 0)]);
        assert!((per[0] - 0.8).abs() < 1e-12);
        assert!((per[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((per[2] - 1.0).abs() < 1e-12);
        assert!((macro_f - (0.8 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-12);
        assert!((macro_f - 0.822).abs() < 1e-3);
    }

    #[test]
    fn macro_f_permutation_invariant() {
        let counts = [(8, 2, 2), (5, 0, 5), (10, 0, 0)];
        let (_, m1) = macro_f_from_counts(&counts);
        let permuted = [(10, 0, 0), (8, 2, 2), (5, 0, 5)];
        let (_, m2) = macro_f_from_counts(&permuted);
        assert_eq!(m1, m2);
    }

    #[test]
    fn delay_penalizes_window_unit_but_not_note_unit() {
        let truth = truth_of(&[(80, "a"), (80, "x")]);
        let exact = truth.window_labels(160, &labels()).unwrap();
        let mut shifted = vec![SegmentLabel::Ood; 160];
        for t in 20..100 {
            // detection delayed by 20 windows
            if t < 80 + 20 {
                shifted[t] = SegmentLabel::Class(0);
            }
        }
        let w_exact = confusion(&exact, &truth, Unit::Window, &labels(), 0).unwrap();
        let w_shift = confusion(&shifted, &truth, Unit::Window, &labels(), 0).unwrap();
        assert!(w_shift.macro_f < w_exact.macro_f);
        let n_exact = confusion(&exact, &truth, Unit::Note, &labels(), 0).unwrap();
        let n_shift = confusion(&shifted, &truth, Unit::Note, &labels(), 0).unwrap();
        // 60 of 80 windows still overlap: the note is still found
        assert_eq!(n_shift.confusion[0][0], n_exact.confusion[0][0]);
    }

    #[test]
    fn note_unit_counts_ood_to_train() {
        let truth = truth_of(&[(80, "a"), (80, "x")]);
        let mut pred = vec![SegmentLabel::Ood; 160];
        for t in 80..160 {
            pred[t] = SegmentLabel::Class(1); // the OOD note predicted as b
        }
        for t in 0..80 {
            pred[t] = SegmentLabel::Class(0);
        }
        let rep = confusion(&pred, &truth, Unit::Note, &labels(), 0).unwrap();
        assert_eq!(rep.ood_to_train, 1);
        assert_eq!(rep.confusion[3][1], 1);
    }

    #[test]
    fn wilcoxon_equal_samples_is_one() {
        let a = vec![0.5; 10];
        assert_eq!(significance(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn wilcoxon_uniform_dominance_small_p() {
        let b = vec![0.5; 50];
        let a: Vec<f64> = b.iter().map(|v| v + 1.0).collect();
        let p = significance(&a, &b).unwrap();
        assert!(p < 0.001, "p = {p}");
    }

    #[test]
    fn wilcoxon_matches_exhaustive_enumeration() {
        // mixed-sign toy of n=10 against a brute-force oracle over all 2^10
        // sign patterns of the observed |d| ranks
        let a = vec![0.9, 0.7, 0.85, 0.6, 0.95, 0.7, 0.8, 0.65, 0.9, 0.75];
        let b = vec![0.85, 0.75, 0.8, 0.65, 0.9, 0.6, 0.85, 0.6, 0.85, 0.8];
        let p = significance(&a, &b).unwrap();

        let diffs: Vec<f64> =
            a.iter().zip(&b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        let n = diffs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
        let mut ranks2 = vec![0u64; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && diffs[order[j]].abs() == diffs[order[i]].abs() {
                j += 1;
            }
            for &idx in &order[i..j] {
                ranks2[idx] = (i + 1 + j) as u64;
            }
            i = j;
        }
        let observed: u64 =
            diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();
        let mut ge = 0u64;
        for mask in 0u32..(1 << n) {
            let w: u64 =
                (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| ranks2[i]).sum();
            if w >= observed {
                ge += 1;
            }
        }
        let oracle = ge as f64 / (1u64 << n) as f64;
        assert!((p - oracle).abs() < 1e-12, "{p} vs oracle {oracle}");
    }

    #[test]
    fn wilcoxon_normal_tail_is_sane() {
        // large-n path: antisymmetric differences give p ≈ 0.5
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let p = significance(&a, &b).unwrap();
        assert!(p > 0.2 && p < 0.8, "p = {p}");
    }

    #[test]
    fn spearman_perfect_and_reversed() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![10.0, 20.0, 30.0, 40.0];
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        let c = vec![40.0, 30.0, 20.0, 10.0];
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
    }
}
