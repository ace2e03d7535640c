//! Rule-based decision layer: turns soft per-window class scores into a
//! crisp segmentation with an out-of-distribution label.
//!
//! The procedure, applied in order on a mutable copy of the track:
//! 1. zero every score below the threshold τ;
//! 2. per class, zero nonzero runs shorter than `min_note_len` windows;
//! 3. windows where one class strictly exceeds all others for more than
//!    `dominance_len` consecutive windows get that crisp label;
//! 4. the remaining undecided maximal runs get per-class run-mean scores,
//!    assigned uniformly over the run;
//! 5. per-window argmax (ties to the lowest class index); all-zero windows
//!    are out-of-distribution;
//! 6. crisp runs shorter than `min_note_len` are relabeled OOD.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of the score axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSemantics {
    /// Raw MDD-KM scores: lower means closer to the class.
    RawMddkm,
    /// Transformed MDD-KM or PKNN possibilities: higher means closer.
    HigherCloser,
}

/// Window geometry carried along with score tracks so window indices can be
/// mapped back to sample spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopMeta {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

/// Per-window score vectors for `C` classes over `T` windows.
#[derive(Debug, Clone)]
pub struct ScoreTrack {
    /// `T × C`, row per window.
    pub values: DMatrix<f64>,
    pub semantics: ScoreSemantics,
    pub hop: HopMeta,
    pub class_labels: Vec<String>,
}

impl ScoreTrack {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.values.ncols()
    }
}

/// Segment label: a training class index or out-of-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentLabel {
    Class(usize),
    Ood,
}

impl SegmentLabel {
    pub fn display(&self, class_labels: &[String]) -> String {
        match self {
            SegmentLabel::Class(c) => class_labels[*c].clone(),
            SegmentLabel::Ood => "OOD".into(),
        }
    }
}

/// Contiguous window range with a crisp label; `end_window` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSegment {
    pub start_window: usize,
    pub end_window: usize,
    pub label: SegmentLabel,
}

impl DecisionSegment {
    pub fn window_len(&self) -> usize {
        self.end_window - self.start_window + 1
    }

    /// Sample span covered by this segment's windows.
    pub fn sample_span(&self, hop: &HopMeta) -> (usize, usize) {
        (self.start_window * hop.hop, self.end_window * hop.hop + hop.window_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionConfig {
    pub tau: f64,
    pub min_note_len: usize,
    pub dominance_len: usize,
    pub transform_floor: f64,
}

impl DecisionConfig {
    pub fn with_tau(tau: f64) -> Self {
        DecisionConfig { tau, min_note_len: 35, dominance_len: 60, transform_floor: 1e-12 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_note_len < 1 {
            return Err(Error::InvalidParam("min_note_len must be >= 1".into()));
        }
        if self.dominance_len < self.min_note_len {
            return Err(Error::InvalidParam(
                "dominance_len must be >= min_note_len".into(),
            ));
        }
        if !(self.transform_floor > 0.0) {
            return Err(Error::InvalidParam("transform_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Entrywise `−log √(max(x, floor))`; strictly order-reversing above the
/// floor, so the output is flagged higher-is-closer.
pub fn transform_scores(raw: &ScoreTrack, floor: f64) -> Result<ScoreTrack> {
    if raw.semantics != ScoreSemantics::RawMddkm {
        return Err(Error::InvalidParam("transform_scores expects raw scores".into()));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidParam("transform floor must be positive".into()));
    }
    let mut values = raw.values.clone();
    values.apply(|v| *v = -0.5 * v.max(floor).ln());
    Ok(ScoreTrack {
        values,
        semantics: ScoreSemantics::HigherCloser,
        hop: raw.hop,
        class_labels: raw.class_labels.clone(),
    })
}

/// Threshold selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMethod {
    /// `τ = 1.8 / μ` with μ the maximum transformed test-on-train score.
    MddKm,
    /// Fixed `τ = 0.0015`.
    Pknn,
}

/// Computes τ from the model's scores on its own training windows.
pub fn compute_tau(scores_on_train: &ScoreTrack, method: TauMethod) -> Result<f64> {
    if scores_on_train.is_empty() {
        return Err(Error::EmptyInput("compute_tau: empty track"));
    }
    match method {
        TauMethod::Pknn => Ok(0.0015),
        TauMethod::MddKm => {
            if scores_on_train.semantics != ScoreSemantics::HigherCloser {
                return Err(Error::InvalidParam(
                    "compute_tau expects the transformed track".into(),
                ));
            }
            let mu = scores_on_train.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(mu > 0.0) {
                return Err(Error::Numerical(format!(
                    "maximum test-on-train score must be positive, got {mu}"
                )));
            }
            Ok(1.8 / mu)
        }
    }
}

const UNDECIDED: i64 = -2;
const OOD: i64 = -1;

/// Applies the six-step crisp decision procedure; returns segments that
/// exactly tile `[0, T)`.
pub fn decide(track: &ScoreTrack, config: &DecisionConfig) -> Result<Vec<DecisionSegment>> {
    if track.semantics != ScoreSemantics::HigherCloser {
        return Err(Error::InvalidParam("decide expects a higher-is-closer track".into()));
    }
    if track.is_empty() {
        return Err(Error::EmptyInput("decide: empty track"));
    }
    config.validate()?;
    let t_max = track.len();
    let c_max = track.n_classes();
    let mut s = track.values.clone();

    // step 1: discard sub-threshold scores
    s.apply(|v| {
        if *v < config.tau {
            *v = 0.0;
        }
    });

    // step 2: per class, erase short nonzero runs
    for c in 0..c_max {
        let mut t = 0;
        while t < t_max {
            if s[(t, c)] > 0.0 {
                let mut u = t;
                while u < t_max && s[(u, c)] > 0.0 {
                    u += 1;
                }
                if u - t < config.min_note_len {
                    for k in t..u {
                        s[(k, c)] = 0.0;
                    }
                }
                t = u;
            } else {
                t += 1;
            }
        }
    }

    // step 3: long strict-dominance runs become crisp labels
    let mut label = vec![UNDECIDED; t_max];
    let dominant: Vec<i64> = (0..t_max)
        .map(|t| {
            let mut best = 0usize;
            for c in 1..c_max {
                if s[(t, c)] > s[(t, best)] {
                    best = c;
                }
            }
            let strictly =
                s[(t, best)] > 0.0 && (0..c_max).all(|c| c == best || s[(t, c)] < s[(t, best)]);
            if strictly {
                best as i64
            } else {
                -1
            }
        })
        .collect();
    let mut t = 0;
    while t < t_max {
        if dominant[t] >= 0 {
            let mut u = t;
            while u < t_max && dominant[u] == dominant[t] {
                u += 1;
            }
            if u - t > config.dominance_len {
                for k in t..u {
                    label[k] = dominant[t];
                }
            }
            t = u;
        } else {
            t += 1;
        }
    }

    // steps 4 + 5: undecided maximal runs get run-mean scores and argmax
    let mut t = 0;
    while t < t_max {
        if label[t] == UNDECIDED {
            let mut u = t;
            while u < t_max && label[u] == UNDECIDED {
                u += 1;
            }
            let run = (u - t) as f64;
            let means: Vec<f64> =
                (0..c_max).map(|c| (t..u).map(|k| s[(k, c)]).sum::<f64>() / run).collect();
            let mut best = 0usize;
            for c in 1..c_max {
                if means[c] > means[best] {
                    best = c;
                }
            }
            let run_label = if means[best] > 0.0 { best as i64 } else { OOD };
            for k in t..u {
                // all-zero windows are OOD regardless of the run label
                if (0..c_max).all(|c| s[(k, c)] == 0.0) {
                    label[k] = OOD;
                } else {
                    label[k] = run_label;
                }
            }
            t = u;
        } else {
            t += 1;
        }
    }

    // step 6: erase short crisp runs
    let mut t = 0;
    while t < t_max {
        let mut u = t;
        while u < t_max && label[u] == label[t] {
            u += 1;
        }
        if label[t] >= 0 && u - t < config.min_note_len {
            for k in t..u {
                label[k] = OOD;
            }
        }
        t = u;
    }

    // merge into segments
    let mut segments = Vec::new();
    let mut t = 0;
    while t < t_max {
        let mut u = t;
        while u < t_max && label[u] == label[t] {
            u += 1;
        }
        segments.push(DecisionSegment {
            start_window: t,
            end_window: u - 1,
            label: if label[t] >= 0 {
                SegmentLabel::Class(label[t] as usize)
            } else {
                SegmentLabel::Ood
            },
        });
        t = u;
    }
    Ok(segments)
}

/// Expands segments back to one label per window.
pub fn segments_to_window_labels(segments: &[DecisionSegment], t_max: usize) -> Vec<SegmentLabel> {
    let mut out = vec![SegmentLabel::Ood; t_max];
    for seg in segments {
        for t in seg.start_window..=seg.end_window.min(t_max.saturating_sub(1)) {
            out[t] = seg.label;
        }
    }
    out
}
