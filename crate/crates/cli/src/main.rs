//! Pipeline CLI: `synth`, `train`, `score`, `segment`, `eval`.
//!
//! Every artifact embeds the configuration hash and is byte-reproducible
//! for a fixed seed (no timestamps). Exit codes distinguish error classes:
//!
//! - 2: file I/O (missing inputs)
//! - 3: config or artifact schema mismatch
//! - 4: dimension mismatch
//! - 5: conditioning / factorization / training failure
//! - 6: numerical consistency failure
//! - 7: invalid or empty input

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mddkm::config::PipelineConfig;
use mddkm::decision::{
    compute_tau, decide, transform_scores, DecisionConfig, ScoreSemantics, ScoreTrack, TauMethod,
};
use mddkm::error::Error;
use mddkm::model::MddKmModel;
use mddkm::pipeline::{self, AlgorithmSet};
use mddkm::pknn::PrototypeSet;
use mddkm::synth::{synth, Corpus, NoteInstance};
use mddkm::wav;

#[derive(Parser)]
#[command(name = "mddkm", version, about = "Multiclass data description pipeline")]
struct Cli {
    /// Pipeline configuration file (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    Mddkm,
    Pknn,
    Both,
}

impl Algorithm {
    fn set(self) -> AlgorithmSet {
        match self {
            Algorithm::Mddkm => AlgorithmSet { mddkm: true, pknn: false },
            Algorithm::Pknn => AlgorithmSet { mddkm: false, pknn: true },
            Algorithm::Both => AlgorithmSet::both(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic note corpus: per-instance WAVs, a shuffled
    /// demo clip, and the ground-truth manifest.
    Synth(SynthArgs),
    /// Train classifiers on a per-seed split of the corpus.
    Train(TrainArgs),
    /// Score an audio clip with a trained model; writes a score-track CSV.
    Score(ScoreArgs),
    /// Segment an audio clip into labeled note spans.
    Segment(SegmentArgs),
    /// Run the multi-seed evaluation protocol and emit reports.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory produced by `synth` (manifest.json + instances/).
    #[arg(long)]
    corpus_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    algorithm: Algorithm,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Trained MDD-KM model (model.json) …
    #[arg(long, conflicts_with = "prototypes")]
    model: Option<PathBuf>,
    /// … or a PKNN prototype set (prototypes.json).
    #[arg(long)]
    prototypes: Option<PathBuf>,
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the front-end feature matrix (one row per window).
    #[arg(long)]
    features_out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long, conflicts_with = "prototypes")]
    model: Option<PathBuf>,
    #[arg(long)]
    prototypes: Option<PathBuf>,
    /// Training summary (train_summary.json) holding the selected τ.
    #[arg(long)]
    train_summary: Option<PathBuf>,
    /// Explicit τ override.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus_dir: PathBuf,
    /// Number of seeds; runs seeds 1..=N.
    #[arg(long, default_value_t = 50)]
    num_seeds: u64,
    #[arg(long, value_enum, default_value = "both")]
    algorithm: Algorithm,
    #[arg(long)]
    out_dir: PathBuf,
}

// ---------------------------------------------------------------------------
// Artifact schemas
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestInstance {
    label: String,
    file: String,
    n_samples: usize,
}

#[derive(Serialize, Deserialize)]
struct ClipSpan {
    start_sample: usize,
    end_sample: usize,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct CorpusManifest {
    schema_version: u32,
    config_hash: String,
    seed: u64,
    sample_rate: u32,
    window_len: usize,
    hop: usize,
    train_classes: Vec<String>,
    instances: Vec<ManifestInstance>,
    clip_file: String,
    clip_spans: Vec<ClipSpan>,
}

#[derive(Serialize, Deserialize)]
struct TrainSummary {
    schema_version: u32,
    config_hash: String,
    seed: u64,
    feature_scale: f64,
    tau_mddkm: Option<f64>,
    train_instances: Vec<usize>,
    test_instances: Vec<usize>,
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_synth(config: &PipelineConfig, args: &SynthArgs) -> Result<(), Error> {
    let seed = args.seed.unwrap_or(config.seed);
    let corpus = synth(&config.synth, seed)?;
    let hash = config.config_hash();
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir.join("instances"))?;

    let mut instances = Vec::new();
    for (i, inst) in corpus.instances.iter().enumerate() {
        let file = format!("instances/{i:03}_{}.wav", inst.label);
        wav::write_wav_f32(&dir.join(&file), &inst.samples, config.synth.sample_rate)?;
        instances.push(ManifestInstance {
            label: inst.label.clone(),
            file,
            n_samples: inst.samples.len(),
        });
    }

    // demo clip: all instances concatenated in seeded shuffled order
    let mut order: Vec<usize> = (0..corpus.instances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C11F);
    order.shuffle(&mut rng);
    let (clip, spans) = corpus.concat(&order)?;
    wav::write_wav_f32(&dir.join("clip.wav"), &clip, config.synth.sample_rate)?;

    let manifest = CorpusManifest {
        schema_version: 1,
        config_hash: hash.clone(),
        seed,
        sample_rate: config.synth.sample_rate,
        window_len: config.synth.window_len,
        hop: config.synth.hop,
        train_classes: config.synth.train_classes.clone(),
        instances,
        clip_file: "clip.wav".into(),
        clip_spans: spans
            .iter()
            .map(|s| ClipSpan {
                start_sample: s.start_sample,
                end_sample: s.end_sample,
                label: s.label.clone(),
            })
            .collect(),
    };
    write_text(
        &dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).map_err(|e| Error::Schema(e.to_string()))?,
    )?;
    // ground truth of the demo clip as CSV
    let mut csv = format!("# config_hash={hash}\nstart_sample,end_sample,label\n");
    for s in &spans {
        csv.push_str(&format!("{},{},{}\n", s.start_sample, s.end_sample, s.label));
    }
    write_text(&dir.join("clip_truth.csv"), &csv)?;
    println!("synth: {} instances + clip.wav -> {}", corpus.instances.len(), dir.display());
    Ok(())
}

fn load_corpus(config: &PipelineConfig, dir: &Path) -> Result<(Corpus, CorpusManifest), Error> {
    let manifest: CorpusManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)
            .map_err(|e| Error::Schema(format!("manifest.json: {e}")))?;
    if manifest.schema_version != 1 {
        return Err(Error::Schema(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    if manifest.config_hash != config.config_hash() {
        return Err(Error::Schema(
            "corpus was synthesized under a different configuration".into(),
        ));
    }
    let mut instances = Vec::new();
    for m in &manifest.instances {
        let (samples, rate) = wav::read_wav(&dir.join(&m.file))?;
        if rate != manifest.sample_rate {
            return Err(Error::Schema(format!("{}: sample rate {rate} != manifest", m.file)));
        }
        if samples.len() != m.n_samples {
            return Err(Error::Schema(format!("{}: length mismatch", m.file)));
        }
        instances.push(NoteInstance { label: m.label.clone(), samples });
    }
    Ok((Corpus { spec: config.synth.clone(), instances }, manifest))
}

fn cmd_train(config: &PipelineConfig, args: &TrainArgs) -> Result<(), Error> {
    let seed = args.seed.unwrap_or(config.seed);
    let (corpus, _) = load_corpus(config, &args.corpus_dir)?;
    let (train_idx, test_idx) = pipeline::split_corpus(&corpus, seed)?;
    let (train_clip, train_spans) = corpus.concat(&train_idx)?;
    let trained =
        pipeline::train_on_clip(&train_clip, &train_spans, config, seed, args.algorithm.set())?;

    std::fs::create_dir_all(&args.out_dir)?;
    if let Some(model) = &trained.model {
        write_text(&args.out_dir.join("model.json"), &model.to_json()?)?;
    }
    if let Some(set) = &trained.prototypes {
        write_text(&args.out_dir.join("prototypes.json"), &set.to_json()?)?;
    }
    let summary = TrainSummary {
        schema_version: 1,
        config_hash: config.config_hash(),
        seed,
        feature_scale: trained.feature_scale,
        tau_mddkm: trained.tau_mddkm,
        train_instances: train_idx,
        test_instances: test_idx,
    };
    write_text(
        &args.out_dir.join("train_summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| Error::Schema(e.to_string()))?,
    )?;
    println!(
        "train: seed {seed}, feature scale {:.6}, tau {:?} -> {}",
        trained.feature_scale,
        trained.tau_mddkm,
        args.out_dir.display()
    );
    Ok(())
}

enum LoadedClassifier {
    Mddkm(MddKmModel),
    Pknn(PrototypeSet),
}

fn load_classifier(
    model: &Option<PathBuf>,
    prototypes: &Option<PathBuf>,
) -> Result<LoadedClassifier, Error> {
    match (model, prototypes) {
        (Some(path), None) => {
            Ok(LoadedClassifier::Mddkm(MddKmModel::from_json(&std::fs::read_to_string(path)?)?))
        }
        (None, Some(path)) => {
            Ok(LoadedClassifier::Pknn(PrototypeSet::from_json(&std::fs::read_to_string(path)?)?))
        }
        _ => Err(Error::InvalidParam("pass exactly one of --model / --prototypes".into())),
    }
}

/// Score track plus the raw view for CSV export.
fn tracks_for(
    classifier: &LoadedClassifier,
    config: &PipelineConfig,
    audio: &[f64],
) -> Result<(ScoreTrack, Option<ScoreTrack>), Error> {
    let hop = config.synth.hop_meta();
    match classifier {
        LoadedClassifier::Mddkm(model) => {
            let features = pipeline::feature_matrix(audio, config)? * model.meta.feature_scale;
            let raw = pipeline::mddkm_track(model, &features, hop)?;
            let transformed = transform_scores(&raw, config.decision.transform_floor)?;
            Ok((transformed, Some(raw)))
        }
        LoadedClassifier::Pknn(set) => {
            let features = pipeline::feature_matrix(audio, config)? * set.feature_scale;
            let track = pipeline::pknn_track(set, &features, config.pknn.neighbors, hop)?;
            Ok((track, None))
        }
    }
}

fn cmd_score(config: &PipelineConfig, args: &ScoreArgs) -> Result<(), Error> {
    let classifier = load_classifier(&args.model, &args.prototypes)?;
    let (audio, rate) = wav::read_wav(&args.audio)?;
    if rate != config.synth.sample_rate {
        return Err(Error::DimensionMismatch {
            expected: config.synth.sample_rate as usize,
            got: rate as usize,
        });
    }
    let (track, raw) = tracks_for(&classifier, config, &audio)?;
    let hash = config.config_hash();
    if let Some(path) = &args.features_out {
        let features = pipeline::feature_matrix(&audio, config)?;
        let mut csv = format!("# config_hash={hash}\nwindow,start_sample");
        for d in 0..features.nrows() {
            csv.push_str(&format!(",z{d}"));
        }
        csv.push('\n');
        for t in 0..features.ncols() {
            csv.push_str(&format!("{t},{}", t * config.synth.hop));
            for d in 0..features.nrows() {
                csv.push_str(&format!(",{}", features[(d, t)]));
            }
            csv.push('\n');
        }
        write_text(path, &csv)?;
    }
    let mut csv = format!("# config_hash={hash}\n");
    csv.push_str("window,start_sample");
    for l in &track.class_labels {
        if raw.is_some() {
            csv.push_str(&format!(",raw_{l}"));
        } else {
            csv.push_str(&format!(",possibility_{l}"));
        }
    }
    if raw.is_some() {
        for l in &track.class_labels {
            csv.push_str(&format!(",transformed_{l}"));
        }
    }
    csv.push('\n');
    for t in 0..track.len() {
        csv.push_str(&format!("{t},{}", t * track.hop.hop));
        if let Some(raw) = &raw {
            for c in 0..track.n_classes() {
                csv.push_str(&format!(",{}", raw.values[(t, c)]));
            }
        }
        for c in 0..track.n_classes() {
            csv.push_str(&format!(",{}", track.values[(t, c)]));
        }
        csv.push('\n');
    }
    write_text(&args.out, &csv)?;
    println!("score: {} windows -> {}", track.len(), args.out.display());
    Ok(())
}

fn cmd_segment(config: &PipelineConfig, args: &SegmentArgs) -> Result<(), Error> {
    let classifier = load_classifier(&args.model, &args.prototypes)?;
    let (audio, rate) = wav::read_wav(&args.audio)?;
    if rate != config.synth.sample_rate {
        return Err(Error::DimensionMismatch {
            expected: config.synth.sample_rate as usize,
            got: rate as usize,
        });
    }
    let (track, _) = tracks_for(&classifier, config, &audio)?;
    let tau = match (args.tau, &args.train_summary, &classifier) {
        (Some(t), _, _) => t,
        (None, Some(path), LoadedClassifier::Mddkm(_)) => {
            let summary: TrainSummary =
                serde_json::from_str(&std::fs::read_to_string(path)?)
                    .map_err(|e| Error::Schema(e.to_string()))?;
            summary.tau_mddkm.ok_or_else(|| {
                Error::Schema("train summary holds no MDD-KM threshold".into())
            })?
        }
        (None, _, LoadedClassifier::Pknn(_)) => {
            compute_tau(&track, TauMethod::Pknn)?
        }
        (None, None, _) => {
            return Err(Error::InvalidParam(
                "segmenting with an MDD-KM model needs --train-summary or --tau".into(),
            ))
        }
    };
    debug_assert_eq!(track.semantics, ScoreSemantics::HigherCloser);
    let cfg = DecisionConfig {
        tau,
        min_note_len: config.decision.min_note_len,
        dominance_len: config.decision.dominance_len,
        transform_floor: config.decision.transform_floor,
    };
    let segments = decide(&track, &cfg)?;
    let hash = config.config_hash();
    let mut csv =
        format!("# config_hash={hash}\nstart_sample,end_sample,start_window,end_window,label\n");
    for seg in &segments {
        let (s0, s1) = seg.sample_span(&track.hop);
        csv.push_str(&format!(
            "{s0},{s1},{},{},{}\n",
            seg.start_window,
            seg.end_window,
            seg.label.display(&track.class_labels)
        ));
    }
    write_text(&args.out, &csv)?;
    println!("segment: {} segments (tau {tau:.4}) -> {}", segments.len(), args.out.display());
    Ok(())
}

fn cmd_eval(config: &PipelineConfig, args: &EvalArgs) -> Result<(), Error> {
    let (corpus, _) = load_corpus(config, &args.corpus_dir)?;
    let seeds: Vec<u64> = (1..=args.num_seeds).collect();
    let summary = mddkm::eval::run_experiment(&corpus, config, &seeds, args.algorithm.set())?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_text(
        &args.out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| Error::Schema(e.to_string()))?,
    )?;
    let hash = config.config_hash();

    let mut macro_csv = format!("# config_hash={hash}\nseed,unit,macro_f,ood_to_train\n");
    let mut conf_csv = format!("# config_hash={hash}\nseed,unit,true_label,pred_label,count\n");
    let mut f_csv = format!("# config_hash={hash}\nseed,unit,label,f_score\n");
    for rep in &summary.reports {
        let unit = match rep.unit {
            mddkm::eval::Unit::Window => "window",
            mddkm::eval::Unit::Note => "note",
        };
        macro_csv.push_str(&format!("{},{},{},{}\n", rep.seed, unit, rep.macro_f, rep.ood_to_train));
        for (i, row) in rep.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                conf_csv.push_str(&format!(
                    "{},{},{},{},{v}\n",
                    rep.seed, unit, rep.labels[i], rep.labels[j]
                ));
            }
        }
        for (i, f) in rep.per_class_f.iter().enumerate() {
            let val = f.map(|v| v.to_string()).unwrap_or_default();
            f_csv.push_str(&format!("{},{},{},{val}\n", rep.seed, unit, rep.labels[i]));
        }
    }
    write_text(&args.out_dir.join("macro_f.csv"), &macro_csv)?;
    write_text(&args.out_dir.join("confusion.csv"), &conf_csv)?;
    write_text(&args.out_dir.join("per_class_f.csv"), &f_csv)?;

    for (name, unit) in [("window", &summary.window_unit), ("note", &summary.note_unit)] {
        println!("{name} unit:");
        for (alg, s) in [("mddkm", &unit.mddkm), ("pknn", &unit.pknn)] {
            if let Some(s) = s {
                println!(
                    "  {alg}: macro F {:.3}, zero-OOD-to-train seeds {}/{}",
                    s.macro_mean_f,
                    s.seeds_with_zero_ood_to_train,
                    seeds.len()
                );
            }
        }
        if let Some(p) = unit.p_value_mddkm_gt_pknn {
            println!("  Wilcoxon p (mddkm > pknn): {p:.4}");
        }
    }
    println!("eval: -> {}", args.out_dir.display());
    Ok(())
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 2,
        Error::Schema(_) | Error::Config(_) => 3,
        Error::DimensionMismatch { .. } => 4,
        Error::Conditioning(_) | Error::Factorization(_) | Error::Training(_) => 5,
        Error::Numerical(_) => 6,
        Error::InvalidParam(_) | Error::EmptyInput(_) | Error::Wav(_) => 7,
    }
}

fn main() {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    };
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(&config, args),
        Command::Train(args) => cmd_train(&config, args),
        Command::Score(args) => cmd_score(&config, args),
        Command::Segment(args) => cmd_segment(&config, args),
        Command::Eval(args) => cmd_eval(&config, args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
