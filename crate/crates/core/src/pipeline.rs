//! Orchestration shared by the experiment loop and the CLI: clip assembly,
//! feature extraction, training-block curation, feature normalization,
//! model fitting, score tracks, and segmentation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::decision::{
    compute_tau, decide, segments_to_window_labels, transform_scores, DecisionConfig, HopMeta,
    ScoreSemantics, ScoreTrack, TauMethod,
};
use crate::error::{Error, Result};
use crate::eval::{confusion, EvalReport, GroundTruth, NoteSpan, Unit};
use crate::hlds;
use crate::model::{self, ClassBlock, MddKmModel, TrainingSet};
use crate::pknn::{self, PrototypeSet};
use crate::synth::Corpus;

/// Which classifiers to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmSet {
    pub mddkm: bool,
    pub pknn: bool,
}

impl AlgorithmSet {
    pub fn both() -> Self {
        AlgorithmSet { mddkm: true, pknn: true }
    }
}

/// Evaluation outcome of one algorithm on one seed.
#[derive(Debug, Clone)]
pub struct AlgoOutcome {
    pub window_report: EvalReport,
    pub note_report: EvalReport,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub mddkm: Option<AlgoOutcome>,
    pub pknn: Option<AlgoOutcome>,
}

/// Extracts features for a clip as a `D × T` column matrix.
pub fn feature_matrix(audio: &[f64], config: &PipelineConfig) -> Result<DMatrix<f64>> {
    let zs = hlds::extract_features(audio, &config.hlds)?;
    if zs.is_empty() {
        return Err(Error::EmptyInput("no feature windows"));
    }
    let d = zs[0].len();
    Ok(DMatrix::from_fn(d, zs.len(), |r, t| zs[t][r]))
}

/// Assigns training-clip windows to class blocks (window center rule),
/// dropping the settle windows after each note start and windows straddling
/// a note boundary.
pub fn build_training_blocks(
    features: &DMatrix<f64>,
    truth: &GroundTruth,
    train_labels: &[String],
    settle_windows: usize,
) -> Result<Vec<ClassBlock>> {
    let hop = truth.hop;
    let mut per_class: Vec<Vec<DVector<f64>>> = vec![Vec::new(); train_labels.len()];
    for t in 0..features.ncols() {
        let Some(idx) = truth.instance_of_window(t) else { continue };
        let span = &truth.instances[idx];
        let Some(class) = train_labels.iter().position(|l| l == &span.label) else { continue };
        let w_start = t * hop.hop;
        let w_end = w_start + hop.window_len;
        if w_start >= span.start_sample + settle_windows * hop.hop && w_end <= span.end_sample {
            per_class[class].push(features.column(t).into_owned());
        }
    }
    let mut blocks = Vec::with_capacity(train_labels.len());
    for (ci, vectors) in per_class.iter().enumerate() {
        if vectors.is_empty() {
            return Err(Error::Training(format!(
                "class {}: no usable training windows after curation",
                train_labels[ci]
            )));
        }
        let d = vectors[0].len();
        blocks.push(ClassBlock {
            label: train_labels[ci].clone(),
            signals: DMatrix::from_fn(d, vectors.len(), |r, c| vectors[c][r]),
        });
    }
    Ok(blocks)
}

/// Scale that brings the RMS feature norm of the blocks to the target.
pub fn feature_scale(blocks: &[ClassBlock], target_rms: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for b in blocks {
        for c in 0..b.signals.ncols() {
            sum += b.signals.column(c).norm_squared();
            count += 1;
        }
    }
    let rms = (sum / count.max(1) as f64).sqrt();
    target_rms / rms.max(1e-12)
}

/// Raw MDD-KM score track (lower is closer) over scaled feature columns.
pub fn mddkm_track(
    model: &MddKmModel,
    features_scaled: &DMatrix<f64>,
    hop: HopMeta,
) -> Result<ScoreTrack> {
    let scores = model::score_batch(model, features_scaled)?;
    let c = model.classes.len();
    let values = DMatrix::from_fn(scores.len(), c, |t, k| scores[t].d[k]);
    Ok(ScoreTrack {
        values,
        semantics: ScoreSemantics::RawMddkm,
        hop,
        class_labels: model.class_labels(),
    })
}

/// PKNN possibility track (higher is closer) over scaled feature columns.
pub fn pknn_track(
    set: &PrototypeSet,
    features_scaled: &DMatrix<f64>,
    neighbors: usize,
    hop: HopMeta,
) -> Result<ScoreTrack> {
    let c = set.classes.len();
    let t_max = features_scaled.ncols();
    let mut values = DMatrix::zeros(t_max, c);
    for t in 0..t_max {
        let p = pknn::possibility(set, features_scaled.column(t).as_slice(), neighbors)?;
        for k in 0..c {
            values[(t, k)] = p.p[k];
        }
    }
    Ok(ScoreTrack {
        values,
        semantics: ScoreSemantics::HigherCloser,
        hop,
        class_labels: set.class_labels(),
    })
}

/// Everything a trained seed needs for scoring new clips.
pub struct TrainedSeed {
    pub model: Option<MddKmModel>,
    pub prototypes: Option<PrototypeSet>,
    pub tau_mddkm: Option<f64>,
    pub feature_scale: f64,
    pub train_labels: Vec<String>,
}

/// Trains the requested classifiers on a training clip.
pub fn train_on_clip(
    train_clip: &[f64],
    train_spans: &[NoteSpan],
    config: &PipelineConfig,
    seed: u64,
    algorithms: AlgorithmSet,
) -> Result<TrainedSeed> {
    let hop = config.synth.hop_meta();
    let train_labels = config.synth.train_classes.clone();
    let truth = GroundTruth::new(train_spans.to_vec(), hop)?;
    let features = feature_matrix(train_clip, config)?;
    let blocks = build_training_blocks(&features, &truth, &train_labels, config.settle_windows)?;
    let g = feature_scale(&blocks, config.feature_rms_target);
    let scaled_blocks: Vec<ClassBlock> = blocks
        .iter()
        .map(|b| ClassBlock { label: b.label.clone(), signals: &b.signals * g })
        .collect();
    let ts = TrainingSet::new(scaled_blocks)?;

    let mut out = TrainedSeed {
        model: None,
        prototypes: None,
        tau_mddkm: None,
        feature_scale: g,
        train_labels,
    };
    if algorithms.mddkm {
        let mut model = model::train(&ts, &config.optimizer, seed)?;
        model.meta.feature_scale = g;
        model.meta.config_hash = Some(config.config_hash());
        // τ from the model's scores on the full training clip
        let scaled_features = &features * g;
        let raw = mddkm_track(&model, &scaled_features, hop)?;
        let transformed = transform_scores(&raw, config.decision.transform_floor)?;
        out.tau_mddkm = Some(compute_tau(&transformed, TauMethod::MddKm)?);
        out.model = Some(model);
    }
    if algorithms.pknn {
        let mut set =
            pknn::train_prototypes(&ts, config.pknn.prototypes_per_class, &config.pknn.som, seed)?;
        set.feature_scale = g;
        set.config_hash = Some(config.config_hash());
        out.prototypes = Some(set);
    }
    Ok(out)
}

/// Scores and segments a test clip with one trained seed; returns reports
/// for both evaluation units per requested algorithm.
pub fn evaluate_on_clip(
    trained: &TrainedSeed,
    test_clip: &[f64],
    test_spans: &[NoteSpan],
    config: &PipelineConfig,
    seed: u64,
) -> Result<SeedRun> {
    let hop = config.synth.hop_meta();
    let truth = GroundTruth::new(test_spans.to_vec(), hop)?;
    let features = feature_matrix(test_clip, config)? * trained.feature_scale;
    let mut run = SeedRun { seed, mddkm: None, pknn: None };

    if let (Some(model), Some(tau)) = (&trained.model, trained.tau_mddkm) {
        let raw = mddkm_track(model, &features, hop)?;
        let transformed = transform_scores(&raw, config.decision.transform_floor)?;
        let cfg = DecisionConfig {
            tau,
            min_note_len: config.decision.min_note_len,
            dominance_len: config.decision.dominance_len,
            transform_floor: config.decision.transform_floor,
        };
        let segments = decide(&transformed, &cfg)?;
        let pred = segments_to_window_labels(&segments, transformed.len());
        run.mddkm = Some(AlgoOutcome {
            window_report: confusion(&pred, &truth, Unit::Window, &trained.train_labels, seed)?,
            note_report: confusion(&pred, &truth, Unit::Note, &trained.train_labels, seed)?,
            tau,
        });
    }
    if let Some(set) = &trained.prototypes {
        let track = pknn_track(set, &features, config.pknn.neighbors, hop)?;
        let tau = compute_tau(&track, TauMethod::Pknn)?;
        let cfg = DecisionConfig {
            tau,
            min_note_len: config.decision.min_note_len,
            dominance_len: config.decision.dominance_len,
            transform_floor: config.decision.transform_floor,
        };
        let segments = decide(&track, &cfg)?;
        let pred = segments_to_window_labels(&segments, track.len());
        run.pknn = Some(AlgoOutcome {
            window_report: confusion(&pred, &truth, Unit::Window, &trained.train_labels, seed)?,
            note_report: confusion(&pred, &truth, Unit::Note, &trained.train_labels, seed)?,
            tau,
        });
    }
    Ok(run)
}

/// Splits the corpus for one seed: two random instances per training class
/// for the training clip, everything else shuffled into the test clip.
pub fn split_corpus(corpus: &Corpus, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = corpus.indices_by_class();
    let mut train_idx = Vec::new();
    for label in &corpus.spec.train_classes {
        let (_, indices) = by_class
            .iter()
            .find(|(l, _)| l == label)
            .ok_or_else(|| Error::InvalidParam(format!("missing training class {label}")))?;
        if indices.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "training class {label} needs at least 2 instances, has {}",
                indices.len()
            )));
        }
        let mut pool = indices.clone();
        pool.shuffle(&mut rng);
        train_idx.extend_from_slice(&pool[..2]);
    }
    let mut test_idx: Vec<usize> =
        (0..corpus.instances.len()).filter(|i| !train_idx.contains(i)).collect();
    test_idx.shuffle(&mut rng);
    Ok((train_idx, test_idx))
}

/// Full protocol for one seed: split, train, score, segment, evaluate.
pub fn run_seed(
    corpus: &Corpus,
    config: &PipelineConfig,
    seed: u64,
    algorithms: AlgorithmSet,
) -> Result<SeedRun> {
    let (train_idx, test_idx) = split_corpus(corpus, seed)?;
    let (train_clip, train_spans) = corpus.concat(&train_idx)?;
    let (test_clip, test_spans) = corpus.concat(&test_idx)?;
    let trained = train_on_clip(&train_clip, &train_spans, config, seed, algorithms)?;
    evaluate_on_clip(&trained, &test_clip, &test_spans, config, seed)
}
