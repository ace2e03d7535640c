//! Deterministic synthetic note corpus.
//!
//! Each class is a pair of tones centered in two distinct coarse spectral
//! bands with quadrature amplitude modulation (the two envelopes are 90°
//! apart), plus a white noise floor. Under the default front end this puts
//! every class on its own circle in feature space: the band pair picks the
//! coordinate plane and the AM rate and amplitude set the radius. Training
//! classes are quiet and out-of-distribution classes loud, so their feature
//! geometry stays well separated. Instances of one class differ in duration
//! and in all phases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decision::HopMeta;
use crate::error::{Error, Result};
use crate::eval::NoteSpan;

/// One note class: a two-band spectral signature with AM envelope
/// parameters, an instance count, and a duration range in windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: String,
    pub count: usize,
    /// Inclusive duration range in windows.
    pub duration_range: (usize, usize),
    /// Coarse band indices; band `b` maps to the tone at DCT bin `8b + 4`.
    pub bands: (usize, usize),
    /// Quadrature AM period in windows.
    pub am_period_windows: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub classes: Vec<ClassSpec>,
    /// Labels of the designated training classes; the rest are OOD.
    pub train_classes: Vec<String>,
    pub noise_floor: f64,
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        let spec = |label: &str, count, bands, period, amp| ClassSpec {
            label: label.into(),
            count,
            duration_range: (55, 95),
            bands,
            am_period_windows: period,
            amplitude: amp,
        };
        SyntheticCorpusSpec {
            classes: vec![
                // training classes: exclusive band planes, quiet
                spec("alpha", 15, (1, 2), 8.0, 0.10),
                spec("bravo", 6, (3, 4), 10.0, 0.14),
                spec("charlie", 4, (5, 6), 7.0, 0.20),
                // OOD classes: disjoint from all training planes, loud
                spec("delta", 4, (7, 8), 9.0, 0.44),
                spec("echo", 4, (9, 10), 6.0, 0.38),
                spec("foxtrot", 6, (0, 11), 11.0, 0.50),
                spec("golf", 7, (7, 8), 7.5, 0.32),
                spec("hotel", 10, (9, 10), 8.5, 0.55),
            ],
            train_classes: vec!["alpha".into(), "bravo".into(), "charlie".into()],
            noise_floor: 0.003,
            sample_rate: 22050,
            window_len: 96,
            hop: 48,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidParam("corpus spec needs at least one class".into()));
        }
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidParam("require 0 < hop <= window_len".into()));
        }
        let n_bands = self.window_len / 8;
        let mut signatures = Vec::new();
        for c in &self.classes {
            if c.count == 0 {
                return Err(Error::InvalidParam(format!("class {}: zero instances", c.label)));
            }
            let (lo, hi) = c.duration_range;
            if lo == 0 || lo > hi {
                return Err(Error::InvalidParam(format!("class {}: bad duration range", c.label)));
            }
            if c.bands.0 >= n_bands || c.bands.1 >= n_bands || c.bands.0 == c.bands.1 {
                return Err(Error::InvalidParam(format!(
                    "class {}: bands must be distinct and below {n_bands}",
                    c.label
                )));
            }
            if !(c.amplitude > 0.0) || !(c.am_period_windows > 1.0) {
                return Err(Error::InvalidParam(format!(
                    "class {}: amplitude and AM period must be positive",
                    c.label
                )));
            }
            let sig = (c.bands, c.am_period_windows.to_bits(), c.amplitude.to_bits());
            if signatures.contains(&sig) {
                return Err(Error::InvalidParam(format!(
                    "class {}: duplicate spectral signature",
                    c.label
                )));
            }
            signatures.push(sig);
        }
        for t in &self.train_classes {
            if !self.classes.iter().any(|c| &c.label == t) {
                return Err(Error::InvalidParam(format!("unknown training class {t}")));
            }
        }
        Ok(())
    }

    pub fn hop_meta(&self) -> HopMeta {
        HopMeta { window_len: self.window_len, hop: self.hop, sample_rate: self.sample_rate }
    }

    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }
}

/// One rendered note.
#[derive(Debug, Clone)]
pub struct NoteInstance {
    pub label: String,
    pub samples: Vec<f64>,
}

/// The rendered instance pool, in class order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: SyntheticCorpusSpec,
    pub instances: Vec<NoteInstance>,
}

fn render_note(spec: &SyntheticCorpusSpec, class: &ClassSpec, rng: &mut ChaCha8Rng) -> NoteInstance {
    let (lo, hi) = class.duration_range;
    let dur_windows = rng.random_range(lo..=hi);
    let n_samples = spec.window_len + (dur_windows - 1) * spec.hop;
    let fs = spec.sample_rate as f64;
    let omega =
        2.0 * std::f64::consts::PI / (class.am_period_windows * spec.hop as f64 / fs);
    let f1 = (8 * class.bands.0 + 4) as f64 * fs / (2.0 * spec.window_len as f64);
    let f2 = (8 * class.bands.1 + 4) as f64 * fs / (2.0 * spec.window_len as f64);
    let ph_env: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ph1: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ph2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = StandardNormal;
    let mut samples = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let t = n as f64 / fs;
        let env1 = 0.55 + 0.45 * (omega * t + ph_env).cos();
        let env2 = 0.55 + 0.45 * (omega * t + ph_env).sin();
        let tone1 = (std::f64::consts::TAU * f1 * t + ph1).sin();
        let tone2 = (std::f64::consts::TAU * f2 * t + ph2).sin();
        let noise: f64 = normal.sample(rng);
        samples.push(class.amplitude * (env1 * tone1 + env2 * tone2) + spec.noise_floor * noise);
    }
    NoteInstance { label: class.label.clone(), samples }
}

/// Renders the whole instance pool deterministically from the seed.
pub fn synth(spec: &SyntheticCorpusSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    for class in &spec.classes {
        for _ in 0..class.count {
            instances.push(render_note(spec, class, &mut rng));
        }
    }
    Ok(Corpus { spec: spec.clone(), instances })
}

impl Corpus {
    /// Concatenates the chosen instances back to back (no inserted silence)
    /// and returns the clip with its exact boundary manifest.
    pub fn concat(&self, indices: &[usize]) -> Result<(Vec<f64>, Vec<NoteSpan>)> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("no instances selected"));
        }
        let mut samples = Vec::new();
        let mut spans = Vec::new();
        for &i in indices {
            let inst = self
                .instances
                .get(i)
                .ok_or_else(|| Error::InvalidParam(format!("instance index {i} out of range")))?;
            let start = samples.len();
            samples.extend_from_slice(&inst.samples);
            spans.push(NoteSpan {
                start_sample: start,
                end_sample: samples.len(),
                label: inst.label.clone(),
            });
        }
        Ok((samples, spans))
    }

    /// Instance indices grouped by class label, in spec order.
    pub fn indices_by_class(&self) -> Vec<(String, Vec<usize>)> {
        self.spec
            .classes
            .iter()
            .map(|c| {
                let idx = self
                    .instances
                    .iter()
                    .enumerate()
                    .filter(|(_, inst)| inst.label == c.label)
                    .map(|(i, _)| i)
                    .collect();
                (c.label.clone(), idx)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_matches_reference_counts() {
        let spec = SyntheticCorpusSpec::default();
        spec.validate().unwrap();
        let counts: Vec<usize> = spec.classes.iter().map(|c| c.count).collect();
        assert_eq!(counts, vec![15, 6, 4, 4, 4, 6, 7, 10]);
        assert_eq!(counts.iter().sum::<usize>(), 56);
        assert_eq!(spec.sample_rate, 22050);
        assert_eq!(spec.train_classes.len(), 3);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SyntheticCorpusSpec::default();
        let a = synth(&spec, 42).unwrap();
        let b = synth(&spec, 42).unwrap();
        assert_eq!(a.instances.len(), b.instances.len());
        for (x, y) in a.instances.iter().zip(&b.instances) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.samples.len(), y.samples.len());
            for (u, v) in x.samples.iter().zip(&y.samples) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn synth_durations_vary_within_class() {
        let corpus = synth(&SyntheticCorpusSpec::default(), 7).unwrap();
        let first_class: Vec<usize> = corpus
            .instances
            .iter()
            .filter(|i| i.label == "alpha")
            .map(|i| i.samples.len())
            .collect();
        assert_eq!(first_class.len(), 15);
        assert!(first_class.iter().any(|&l| l != first_class[0]));
    }

    #[test]
    fn concat_boundaries_tile_exactly() {
        let corpus = synth(&SyntheticCorpusSpec::default(), 3).unwrap();
        let idx: Vec<usize> = (0..corpus.instances.len()).collect();
        let (samples, spans) = corpus.concat(&idx).unwrap();
        assert_eq!(spans[0].start_sample, 0);
        for w in spans.windows(2) {
            assert_eq!(w[0].end_sample, w[1].start_sample);
        }
        assert_eq!(spans.last().unwrap().end_sample, samples.len());
    }

    #[test]
    fn rejects_empty_spec() {
        let mut spec = SyntheticCorpusSpec::default();
        spec.classes.clear();
        assert!(synth(&spec, 0).is_err());
    }
}
