//! Acceptance suite: every release criterion as one test, each printing a
//! pass line with its measured numbers. Run with
//! `cargo test -p mddkm-cli --test acceptance -- --nocapture`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use mddkm::config::PipelineConfig;
use mddkm::decision::{
    decide, DecisionConfig, HopMeta, ScoreSemantics, ScoreTrack, SegmentLabel,
};
use mddkm::eval::{run_experiment, spearman};
use mddkm::hlds::{assemble, build_coupling, kalman_step, HldsConfig};
use mddkm::kernels::{
    self, center_gram, center_test_vector, kernel_mahalanobis_oracle, median_pairwise_distance,
    KernelParams, Regularization,
};
use mddkm::model::{
    nll_cost, nll_grad, score, MddKmModel, TrainMeta, TrainedClass,
};
use mddkm::pipeline::AlgorithmSet;
use mddkm::synth::synth;

fn random_matrix(rng: &mut ChaCha8Rng, d: usize, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, n, |_, _| rng.random_range(-scale..scale))
}

/// Hand-built model: per-class Cholesky factors at fixed Θ, no training.
fn model_at(
    params: KernelParams,
    regularization: Regularization,
    blocks: Vec<DMatrix<f64>>,
) -> MddKmModel {
    let classes = blocks
        .into_iter()
        .enumerate()
        .map(|(i, signals)| {
            let k = kernels::gram(&signals, &params, regularization).unwrap();
            TrainedClass {
                label: format!("c{i}"),
                signals,
                chol_l: nalgebra::Cholesky::new(k.values).unwrap().unpack(),
            }
        })
        .collect();
    MddKmModel {
        params,
        regularization,
        classes,
        meta: TrainMeta { seed: 0, feature_scale: 1.0, config_hash: None, trace: Vec::new() },
    }
}

#[test]
fn criterion_01_nll_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut trial = 0;
    let mut attempts = 0;
    while trial < 20 {
        attempts += 1;
        assert!(attempts < 200, "could not draw enough well-conditioned instances");
        let n = rng.random_range(3..=15);
        let d = rng.random_range(1..=5);
        let x = random_matrix(&mut rng, d, n, 2.0);
        let y = DVector::from_fn(n, |i, _| x.column(i).norm_squared());
        let params = KernelParams::new(
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.05..0.5),
        )
        .unwrap();
        let reg =
            if trial % 2 == 0 { Regularization::ConstantOffset } else { Regularization::Nugget };
        // central differences with h = 1e-5 are only trustworthy while the
        // cost evaluation itself is well conditioned
        let k = kernels::gram(&x, &params, reg).unwrap();
        match kernels::condition_estimate(&k.values) {
            Some(cond) if cond <= 1e6 => {}
            _ => continue,
        }
        trial += 1;
        let grad = nll_grad(&params, &x, &y, reg, true).unwrap();
        for (i, g) in grad.iter().enumerate() {
            let bump = |s: f64| -> KernelParams {
                let mut q = params;
                match i {
                    0 => q.sigma = (params.sigma.ln() + s).exp(),
                    1 => q.ell = (params.ell.ln() + s).exp(),
                    _ => q.sigma_reg = (params.sigma_reg.ln() + s).exp(),
                }
                q
            };
            let fd = (nll_cost(&bump(h), &x, &y, reg) - nll_cost(&bump(-h), &x, &y, reg)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
            assert!(
                rel <= 1e-5,
                "trial {trial} component {i}: analytic {g} vs finite difference {fd} (rel {rel:.2e})"
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "gradient check took {elapsed:.1}s (budget 10s)");
    println!("[PASS] criterion 1: NLL gradient vs central differences, worst rel err {worst:.2e}, {elapsed:.2}s");
}

#[test]
fn criterion_02_scoring_matches_dense_solve_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(2..=8);
        let params = KernelParams::new(
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.05..0.3),
        )
        .unwrap();
        let reg =
            if trial % 2 == 0 { Regularization::ConstantOffset } else { Regularization::Nugget };
        let signals = random_matrix(&mut rng, d, n, 1.5);
        let model = model_at(params, reg, vec![signals.clone()]);
        let x_star: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = score(&model, &x_star).unwrap().d[0];
        // independent dense route: LU linear solve
        let k = kernels::gram(&signals, &params, reg).unwrap();
        let k_star = DVector::from_fn(n, |i, _| {
            kernels::se_kernel(signals.column(i).as_slice(), &x_star, &params).unwrap()
        });
        let solved = k.values.clone().lu().solve(&k_star).unwrap();
        let oracle = params.sigma * params.sigma - k_star.dot(&solved);
        let diff = (got - oracle.max(0.0)).abs().min((got - oracle).abs());
        worst = worst.max(diff);
        assert!(diff <= 1e-10, "trial {trial}: {got} vs oracle {oracle} (diff {diff:.2e})");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "scoring oracle took {elapsed:.1}s (budget 5s)");
    println!("[PASS] criterion 2: class scoring vs dense solve oracle, worst abs diff {worst:.2e}, {elapsed:.2}s");
}

#[test]
fn criterion_03_score_bounds_and_clamping() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let params = KernelParams::new(1.3, 0.9, 0.2).unwrap();
    let blocks = vec![
        random_matrix(&mut rng, 3, 6, 1.0),
        random_matrix(&mut rng, 3, 5, 1.0),
        random_matrix(&mut rng, 3, 4, 1.0),
    ];
    let model = model_at(params, Regularization::Nugget, blocks);
    let bound = params.sigma * params.sigma + params.sigma_reg * params.sigma_reg + 1e-10;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-6.0..6.0)).collect();
        let s = score(&model, &x).unwrap();
        for &d in &s.d {
            assert!((-1e-10..=bound).contains(&d), "score {d} outside bounds");
        }
    }
    // clamp behavior: a factor engineered to land the score in [−1e-10, 0)
    // must clamp to zero; beyond the floor it must raise a numerical error
    let single = DMatrix::from_column_slice(1, 1, &[0.0]);
    let p1 = KernelParams::new(1.0, 1.0, 0.0).unwrap();
    let mut tiny = model_at(p1, Regularization::None, vec![single.clone()]);
    tiny.classes[0].chol_l[(0, 0)] = 1.0 - 2.5e-11; // v² ≈ 1 + 5e-11
    let clamped = score(&tiny, &[0.0]).unwrap();
    assert_eq!(clamped.d[0], 0.0, "roundoff-negative score must clamp to zero");
    tiny.classes[0].chol_l[(0, 0)] = 1.0 - 5e-9; // v² ≈ 1 + 1e-8
    assert!(score(&tiny, &[0.0]).is_err(), "scores below the floor must error");
    println!("[PASS] criterion 3: score bounds over 1000 draws and clamp behavior");
}

#[test]
fn criterion_04_training_point_and_far_field_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let params = KernelParams::new(1.1, 0.8, 0.0).unwrap(); // σ_reg = 0, nugget off
    let blocks = vec![
        random_matrix(&mut rng, 2, 5, 1.0),
        random_matrix(&mut rng, 2, 6, 1.0),
        random_matrix(&mut rng, 2, 4, 1.0),
    ];
    let model = model_at(params, Regularization::None, blocks.clone());
    let s2 = params.sigma * params.sigma;
    // training points of each class score (near) zero for that class
    for (c, block) in blocks.iter().enumerate() {
        for i in 0..block.ncols() {
            let s = score(&model, block.column(i).as_slice()).unwrap();
            assert!(s.d[c] < 1e-6 * s2, "class {c} training point scored {}", s.d[c]);
        }
    }
    // a point at least 20ℓ from everything saturates at σ² for every class
    let far = vec![100.0 * params.ell, 100.0 * params.ell];
    let s = score(&model, &far).unwrap();
    for (c, &d) in s.d.iter().enumerate() {
        assert!((d - s2).abs() <= 1e-6 * s2, "class {c}: far-field {d} vs σ² {s2}");
    }
    println!("[PASS] criterion 4: training-point and far-field limits (commensurable)");
}

#[test]
fn criterion_05_ranking_agreement_with_mahalanobis_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let n = 30;
    let d = 3;
    let x = DMatrix::from_fn(d, n, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });
    let med = median_pairwise_distance(&x);
    let params = KernelParams::new(1.0, 0.7 * med, 0.0).unwrap();
    let model = model_at(params, Regularization::None, vec![x.clone()]);
    let gram = kernels::gram(&x, &params, Regularization::None).unwrap();
    let centered = center_gram(&gram).unwrap();
    let ridge = 1e-8;
    let mut scores = Vec::with_capacity(50);
    let mut oracle = Vec::with_capacity(50);
    for _ in 0..50 {
        let t: Vec<f64> = (0..d)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            })
            .collect();
        scores.push(score(&model, &t).unwrap().d[0]);
        let k_star = DVector::from_fn(n, |i, _| {
            kernels::se_kernel(x.column(i).as_slice(), &t, &params).unwrap()
        });
        let (ks_c, kss_c) =
            center_test_vector(&gram, &k_star, params.sigma * params.sigma).unwrap();
        oracle.push(kernel_mahalanobis_oracle(&centered.values, &ks_c, kss_c, ridge).unwrap());
    }
    let rho = spearman(&scores, &oracle);
    assert!(rho >= 0.999, "Spearman {rho:.6} below 0.999");
    println!("[PASS] criterion 5: GP-variance / kernel-Mahalanobis ranking agreement, Spearman {rho:.5}");
}

#[test]
fn criterion_06_kalman_equals_batch_conditioning() {
    // two-layer toy, state dim 3, T = 10, against the explicit joint-
    // Gaussian posterior of the stacked states given all observations so far
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let config = HldsConfig {
        layer_dims: vec![2, 1],
        window_len: 2,
        overlap: 1,
        ..HldsConfig::default()
    };
    let model = assemble(&config).unwrap();
    let n = model.state_dim();
    let m = model.obs_dim();
    let ys: Vec<DVector<f64>> =
        (0..10).map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))).collect();

    // prior covariances of the state sequence
    let mut var = Vec::new();
    let mut prev = DMatrix::<f64>::identity(n, n) * model.init_cov;
    for _ in 0..ys.len() {
        let v = &model.f * &prev * model.f.transpose() + &model.q;
        var.push(v.clone());
        prev = v;
    }
    let cross = |s: usize, t: usize| -> DMatrix<f64> {
        let mut c = var[s].clone();
        for _ in s..t {
            c = c * model.f.transpose();
        }
        c
    };

    let mut state = model.initial_state();
    let mut worst: f64 = 0.0;
    for (t, y) in ys.iter().enumerate() {
        state = kalman_step(&model, &state, y).unwrap();
        let k = t + 1;
        let mut cov_yy = DMatrix::zeros(k * m, k * m);
        let mut cov_xy = DMatrix::zeros(n, k * m);
        for a in 0..k {
            for b in 0..k {
                let (lo, hi) = (a.min(b), a.max(b));
                let c = cross(lo, hi);
                let block =
                    &model.h * if a <= b { c.clone() } else { c.transpose() } * model.h.transpose();
                let block = if a <= b { block } else { block.transpose() };
                cov_yy.view_mut((a * m, b * m), (m, m)).copy_from(&block);
            }
            let with_noise = &cov_yy.view((a * m, a * m), (m, m)) + &model.r;
            cov_yy.view_mut((a * m, a * m), (m, m)).copy_from(&with_noise);
            let cxa = if t <= a { cross(t, a) } else { cross(a, t).transpose() };
            cov_xy.view_mut((0, a * m), (n, m)).copy_from(&(cxa * model.h.transpose()));
        }
        let mut y_stack = DVector::zeros(k * m);
        for a in 0..k {
            y_stack.rows_mut(a * m, m).copy_from(&ys[a]);
        }
        let batch_mean = &cov_xy * cov_yy.lu().solve(&y_stack).unwrap();
        let diff = (&state.mean - batch_mean).amax();
        worst = worst.max(diff);
        assert!(diff < 1e-8, "t={t}: filter vs batch posterior differ by {diff:.3e}");
    }
    println!("[PASS] criterion 6: Kalman filter equals batch conditioning, worst diff {worst:.2e}");
}

#[test]
fn criterion_07_coupling_and_augmentation_block_forms() {
    for (n, s) in [(4usize, 2usize), (96, 24)] {
        let b = build_coupling(n, s).unwrap().b;
        let value = 2.0 * s as f64 / n as f64;
        let group = n / s;
        for row in 0..n {
            for col in 0..s {
                let expect = if row / group == col { value } else { 0.0 };
                assert_eq!(b[(row, col)], expect, "B({n},{s}) entry ({row},{col})");
            }
        }
        // two-layer augmented model: F̃ = [[I, 0], [B, I]], H̃ = (0 | I)
        let config = HldsConfig {
            layer_dims: vec![n, s],
            window_len: n,
            overlap: n / 2,
            ..HldsConfig::default()
        };
        let model = assemble(&config).unwrap();
        assert_eq!(model.state_dim(), n + s);
        for i in 0..n + s {
            for j in 0..n + s {
                let expect = if i == j {
                    1.0
                } else if i >= s && j < s {
                    b[(i - s, j)]
                } else {
                    0.0
                };
                assert_eq!(model.f[(i, j)], expect, "F({n},{s}) entry ({i},{j})");
            }
        }
        for i in 0..n {
            for j in 0..n + s {
                let expect = if j == i + s { 1.0 } else { 0.0 };
                assert_eq!(model.h[(i, j)], expect, "H({n},{s}) entry ({i},{j})");
            }
        }
    }
    println!("[PASS] criterion 7: coupling and augmentation reproduce the exact block forms");
}

#[test]
fn criterion_08_decision_layer_behaviors() {
    let start = Instant::now();
    let hop = HopMeta { window_len: 96, hop: 48, sample_rate: 22050 };
    let track = |values: DMatrix<f64>| ScoreTrack {
        class_labels: (0..values.ncols()).map(|i| format!("c{i}")).collect(),
        values,
        semantics: ScoreSemantics::HigherCloser,
        hop,
    };
    let cfg = DecisionConfig { tau: 0.5, min_note_len: 35, dominance_len: 60, transform_floor: 1e-12 };

    // τ-discard: everything below τ becomes one OOD segment
    let segs = decide(&track(DMatrix::from_element(150, 3, 0.2)), &cfg).unwrap();
    assert_eq!(segs.len(), 1);
    assert_eq!(segs[0].label, SegmentLabel::Ood);

    // 35-window erase: a 10-window blip above τ disappears
    let mut v = DMatrix::from_element(200, 3, 0.0);
    for t in 50..60 {
        v[(t, 2)] = 5.0;
    }
    let segs = decide(&track(v), &cfg).unwrap();
    assert_eq!(segs.len(), 1);
    assert_eq!(segs[0].label, SegmentLabel::Ood);

    // 60-window dominance: one class above τ and above the others for 100
    // consecutive windows becomes a crisp segment flanked by OOD
    let mut v = DMatrix::from_element(300, 3, 0.0);
    for t in 100..200 {
        v[(t, 1)] = 2.0;
        v[(t, 0)] = 1.0;
    }
    let segs = decide(&track(v), &cfg).unwrap();
    assert_eq!(segs.len(), 3);
    assert_eq!(segs[1].label, SegmentLabel::Class(1));
    assert_eq!((segs[1].start_window, segs[1].end_window), (100, 199));

    // tiling and minimum-length invariants over random tracks
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for _ in 0..50 {
        let t_max = rng.random_range(50..400);
        let v = DMatrix::from_fn(t_max, 3, |_, _| rng.random_range(0.0..2.0));
        let segs = decide(&track(v), &cfg).unwrap();
        assert_eq!(segs[0].start_window, 0);
        assert_eq!(segs.last().unwrap().end_window, t_max - 1);
        for w in segs.windows(2) {
            assert_eq!(w[1].start_window, w[0].end_window + 1);
        }
        for seg in &segs {
            if seg.label != SegmentLabel::Ood {
                assert!(seg.window_len() >= cfg.min_note_len);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "decision layer checks took {elapsed:.2}s (budget 1s)");
    println!("[PASS] criterion 8: decision layer behaviors and tiling, {elapsed:.2}s");
}

#[test]
fn criterion_09_end_to_end_synthetic_protocol() {
    let start = Instant::now();
    let config = PipelineConfig::default();
    let counts: Vec<usize> = config.synth.classes.iter().map(|c| c.count).collect();
    assert_eq!(counts, vec![15, 6, 4, 4, 4, 6, 7, 10]);
    assert_eq!(config.synth.train_classes.len(), 3);

    let corpus = synth(&config.synth, config.seed).unwrap();
    let seeds: Vec<u64> = (1..=50).collect();
    let summary = run_experiment(&corpus, &config, &seeds, AlgorithmSet::both()).unwrap();

    // (a) reference-spec quality gate
    let note_mddkm = summary.note_unit.mddkm.as_ref().expect("mddkm note summary");
    assert!(
        note_mddkm.macro_mean_f >= 0.85,
        "MDD-KM note-unit macro F {:.3} below 0.85",
        note_mddkm.macro_mean_f
    );
    // (b) OOD containment at the note level
    assert!(
        note_mddkm.seeds_with_zero_ood_to_train >= 45,
        "only {}/50 seeds had zero OOD-to-train assignments",
        note_mddkm.seeds_with_zero_ood_to_train
    );
    // (c) table-shaped summary with a Wilcoxon p-value, both units and
    // algorithms, per-class plus overall
    for (name, unit) in [("window", &summary.window_unit), ("note", &summary.note_unit)] {
        let m = unit.mddkm.as_ref().expect("mddkm summary");
        let p = unit.pknn.as_ref().expect("pknn summary");
        assert_eq!(unit.labels.len(), 4);
        assert_eq!(m.per_class_mean_f.len(), 4);
        let p_value = unit.p_value_mddkm_gt_pknn.expect("wilcoxon p-value");
        assert!((0.0..=1.0).contains(&p_value));
        println!(
            "  {name:>6} unit | mddkm macro {:.3} | pknn macro {:.3} | p = {p_value:.4}",
            m.macro_mean_f, p.macro_mean_f
        );
        for (i, label) in unit.labels.iter().enumerate() {
            let fmt = |f: &Option<f64>| f.map(|v| format!("{v:.3}")).unwrap_or_else(|| "  - ".into());
            println!(
                "         {label:>8}: mddkm {} | pknn {}",
                fmt(&m.per_class_mean_f[i]),
                fmt(&p.per_class_mean_f[i])
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "end-to-end protocol took {elapsed:.0}s (budget 600s)");
    println!(
        "[PASS] criterion 9: end-to-end 50-seed protocol, note macro F {:.3}, zero-OOD seeds {}/50, {elapsed:.0}s",
        note_mddkm.macro_mean_f, note_mddkm.seeds_with_zero_ood_to_train
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: byte-reproducibility of every command
// ---------------------------------------------------------------------------

fn hash_dir(dir: &std::path::Path) -> Vec<(String, String)> {
    use sha2::{Digest, Sha256};
    let mut entries = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                entries.push((rel, hex));
            }
        }
    }
    entries.sort();
    entries
}

fn run_cli(args: &[&str]) {
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_mddkm"))
        .args(args)
        .status()
        .expect("spawn CLI");
    assert!(status.success(), "mddkm {args:?} failed");
}

#[test]
fn criterion_10_commands_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // reduced corpus keeps this criterion fast; quality is irrelevant here
    let mut config = PipelineConfig::default();
    config.seed = 7;
    for class in &mut config.synth.classes {
        class.count = match class.label.as_str() {
            "alpha" | "bravo" | "charlie" => 3,
            _ => 2,
        };
        class.duration_range = (40, 60);
    }
    let config_path = root.join("config.json");
    std::fs::write(&config_path, config.to_json_pretty().unwrap()).unwrap();
    let cfg = config_path.to_str().unwrap();

    let paths: Vec<std::path::PathBuf> =
        ["a", "b"].iter().map(|s| root.join(s)).collect();
    for p in &paths {
        std::fs::create_dir_all(p).unwrap();
        let corpus = p.join("corpus");
        let trained = p.join("trained");
        let evald = p.join("eval");
        run_cli(&["--config", cfg, "synth", "--seed", "7", "--out-dir", corpus.to_str().unwrap()]);
        run_cli(&[
            "--config", cfg, "train", "--corpus-dir", corpus.to_str().unwrap(),
            "--seed", "1", "--out-dir", trained.to_str().unwrap(),
        ]);
        run_cli(&[
            "--config", cfg, "score",
            "--model", trained.join("model.json").to_str().unwrap(),
            "--audio", corpus.join("clip.wav").to_str().unwrap(),
            "--out", p.join("scores.csv").to_str().unwrap(),
        ]);
        run_cli(&[
            "--config", cfg, "segment",
            "--model", trained.join("model.json").to_str().unwrap(),
            "--train-summary", trained.join("train_summary.json").to_str().unwrap(),
            "--audio", corpus.join("clip.wav").to_str().unwrap(),
            "--out", p.join("segments.csv").to_str().unwrap(),
        ]);
        run_cli(&[
            "--config", cfg, "eval", "--corpus-dir", corpus.to_str().unwrap(),
            "--num-seeds", "3", "--out-dir", evald.to_str().unwrap(),
        ]);
    }
    let a = hash_dir(&paths[0]);
    let b = hash_dir(&paths[1]);
    assert_eq!(a.len(), b.len());
    for ((fa, ha), (fb, hb)) in a.iter().zip(&b) {
        assert_eq!(fa, fb);
        assert_eq!(ha, hb, "artifact {fa} differs between runs");
    }
    println!("[PASS] criterion 10: all commands byte-reproducible ({} artifacts compared)", a.len());
}
