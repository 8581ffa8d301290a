//! Seeded synthetic multilingual frame corpora.
//!
//! Every language draws its classes from one shared pool of spectral
//! prototypes (a few Gaussian bumps whose centres drift across a segment).
//! Each language permutes the pool, adds its own spectral tilt and skews
//! its class frequencies log-uniformly, so a shared feature extractor helps
//! while the output layers stay language specific.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{Corpus, LanguageInfo, Utterance};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub languages: usize,
    pub classes: usize,
    pub frames_per_language: usize,
    pub mel_bins: usize,
    pub seed: u64,
    /// Standard deviation of the additive white noise.
    pub noise: f32,
    /// Per-utterance spectral shift in bins, drawn uniformly from `±speaker_shift`.
    pub speaker_shift: f32,
    /// Largest ratio between two class sampling weights.
    pub max_class_ratio: f64,
    pub segment_frames: (usize, usize),
    pub utterance_frames: (usize, usize),
}

impl SynthSpec {
    pub fn new(languages: usize, classes: usize, frames_per_language: usize, mel_bins: usize, seed: u64) -> Self {
        Self {
            languages,
            classes,
            frames_per_language,
            mel_bins,
            seed,
            noise: 0.6,
            speaker_shift: 0.06 * mel_bins as f32,
            max_class_ratio: 20.0,
            segment_frames: (3, 12),
            utterance_frames: (100, 300),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.languages == 0 || self.classes == 0 || self.frames_per_language == 0 || self.mel_bins == 0 {
            return Err(Error::contract("synthetic corpus counts must all be positive"));
        }
        if self.languages > u16::MAX as usize || self.mel_bins > u16::MAX as usize {
            return Err(Error::contract("language count and mel bins must fit in 16 bits"));
        }
        let ok_range = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok_range(self.segment_frames) || !ok_range(self.utterance_frames) {
            return Err(Error::contract("segment and utterance length ranges need 1 <= min <= max"));
        }
        if !(self.noise >= 0.0) || !(self.speaker_shift >= 0.0) || !(self.max_class_ratio >= 1.0) {
            return Err(Error::contract("noise and speaker_shift must be >= 0 and max_class_ratio >= 1"));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Corpus> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let bins = self.mel_bins as f32;
        let pool: Vec<Prototype> = (0..self.classes).map(|_| Prototype::random(&mut rng, bins)).collect();
        let noise = Normal::new(0.0f32, self.noise).expect("validated");

        let languages = (0..self.languages)
            .map(|l| LanguageInfo {
                id: l as u16,
                name: format!("lang{l}"),
                classes: self.classes,
            })
            .collect();
        let mut corpus = Corpus::new(languages, self.mel_bins, 1);
        corpus.seed = Some(self.seed);

        for l in 0..self.languages {
            let mut mapping: Vec<usize> = (0..self.classes).collect();
            mapping.shuffle(&mut rng);
            let slope = rng.gen_range(-1.0f32..1.0);
            let tilt: Vec<f32> = (0..self.mel_bins).map(|b| slope * (b as f32 / bins - 0.5)).collect();
            let ln_ratio = self.max_class_ratio.ln();
            let weights: Vec<f64> = (0..self.classes).map(|_| (rng.gen::<f64>() * ln_ratio).exp()).collect();
            let cdf = cumulative(&weights);

            let mut remaining = self.frames_per_language;
            while remaining > 0 {
                let len = rng
                    .gen_range(self.utterance_frames.0..=self.utterance_frames.1)
                    .min(remaining);
                let gain = rng.gen_range(-0.3f32..0.3);
                let shift = if self.speaker_shift > 0.0 {
                    rng.gen_range(-self.speaker_shift..self.speaker_shift)
                } else {
                    0.0
                };
                let mut features = Vec::with_capacity(len * self.mel_bins);
                let mut targets = Vec::with_capacity(len);
                while targets.len() < len {
                    let class = pick(&cdf, rng.gen::<f64>());
                    let seg = rng
                        .gen_range(self.segment_frames.0..=self.segment_frames.1)
                        .min(len - targets.len());
                    let proto = &pool[mapping[class]];
                    for tau in 0..seg {
                        let phase = (tau as f32 + 0.5) / seg as f32 - 0.5;
                        for (b, &t) in tilt.iter().enumerate() {
                            let v = proto.value(b as f32 - shift, phase) + t + gain + noise.sample(&mut rng);
                            features.push(v);
                        }
                        targets.push(class as u32);
                    }
                }
                remaining -= len;
                corpus.push(Utterance::from_frames(l as u16, self.mel_bins, features, targets)?)?;
            }
        }
        Ok(corpus)
    }
}

/// Shorthand for [`SynthSpec::new`] with default noise and skew.
pub fn gen_synthetic_corpus(
    languages: usize,
    classes: usize,
    frames_per_language: usize,
    mel_bins: usize,
    seed: u64,
) -> Result<Corpus> {
    SynthSpec::new(languages, classes, frames_per_language, mel_bins, seed).generate()
}

struct Bump {
    centre: f32,
    width: f32,
    amplitude: f32,
    drift: f32,
}

struct Prototype {
    bumps: Vec<Bump>,
}

impl Prototype {
    fn random(rng: &mut ChaCha8Rng, bins: f32) -> Self {
        let count = rng.gen_range(2..=3);
        let bumps = (0..count)
            .map(|_| Bump {
                centre: rng.gen_range(0.05 * bins..0.95 * bins),
                width: rng.gen_range(0.03 * bins..0.1 * bins),
                amplitude: rng.gen_range(0.8f32..1.6) * if rng.gen_bool(0.8) { 1.0 } else { -1.0 },
                drift: rng.gen_range(-0.15 * bins..0.15 * bins),
            })
            .collect();
        Self { bumps }
    }

    /// Log-energy at bin `b`, `phase` in `[-0.5, 0.5]` across the segment.
    fn value(&self, b: f32, phase: f32) -> f32 {
        self.bumps
            .iter()
            .map(|k| {
                let d = (b - k.centre - k.drift * phase) / k.width;
                k.amplitude * (-0.5 * d * d).exp()
            })
            .sum()
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}
