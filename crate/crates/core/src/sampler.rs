//! Class-balanced mini-batch sampling.
//!
//! A target class is drawn with probability `p_i = f_i^γ / Σ_j f_j^γ`, then a
//! frame is drawn uniformly among the frames carrying that class. Draws are
//! i.i.d. (with replacement).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_multiscale, Corpus, MultiScaleSpec};
use crate::tensor::Tensor;

/// Normalized power law over class frequencies. Zero-frequency classes get
/// probability zero for every `γ`, including `γ = 0`.
pub fn class_probs(freqs: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0) {
        return Err(Error::contract(format!("gamma must be >= 0, got {gamma}")));
    }
    if freqs.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
        return Err(Error::contract("class frequencies must be finite and non-negative"));
    }
    let powered: Vec<f64> = freqs.iter().map(|&f| if f > 0.0 { f.powf(gamma) } else { 0.0 }).collect();
    let total: f64 = powered.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(powered.iter().map(|p| p / total).collect())
}

/// Priors to divide network posteriors by at decoding time: the sampling
/// distribution at the final `γ`.
pub fn decoding_priors(freqs: &[f64], final_gamma: f64) -> Result<Vec<f64>> {
    class_probs(freqs, final_gamma)
}

/// Piecewise-linear `γ` as a function of training progress in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    points: Vec<(f64, f64)>,
}

impl GammaSchedule {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("gamma schedule needs at least one breakpoint".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config("gamma schedule progress must be strictly increasing".into()));
        }
        if points.iter().any(|&(p, g)| !(0.0..=1.0).contains(&p) || !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::Config("gamma schedule needs progress in [0,1] and gamma >= 0".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(gamma: f64) -> Result<Self> {
        Self::new(vec![(0.0, gamma)])
    }

    /// γ rising linearly from 0 to 1 over training.
    pub fn ramp() -> Self {
        Self {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn final_gamma(&self) -> f64 {
        self.points.last().expect("nonempty").1
    }

    pub fn gamma_at(&self, progress: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&progress) {
            return Err(Error::contract(format!("training progress {progress} outside [0, 1]")));
        }
        let pts = &self.points;
        let i = pts.partition_point(|&(p, _)| p <= progress);
        Ok(match i {
            0 => pts[0].1,
            i if i == pts.len() => pts[i - 1].1,
            i => {
                let (p0, g0) = pts[i - 1];
                let (p1, g1) = pts[i];
                g0 + (g1 - g0) * (progress - p0) / (p1 - p0)
            }
        })
    }
}

impl fmt::Display for GammaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.points.iter().map(|(p, g)| format!("{p}:{g}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for GammaSchedule {
    type Err = Error;

    /// Comma-separated `progress:gamma` pairs, e.g. `0:0,1:1`.
    fn from_str(s: &str) -> Result<Self> {
        let points = s
            .split(',')
            .map(|pair| {
                let (p, g) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("gamma breakpoint '{pair}' is not progress:gamma")))?;
                let num = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number '{v}' in gamma schedule")))
                };
                Ok((num(p)?, num(g)?))
            })
            .collect::<Result<Vec<_>>>()?;
        GammaSchedule::new(points)
    }
}

/// Position of one frame in a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub utterance: u32,
    pub frame: u32,
}

/// Serializable position of a ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position as a decimal string (it is a 128-bit counter).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::contract(format!("bad rng word position '{}'", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// The RNG stream a language's sampler uses under a master seed.
pub fn language_rng(master_seed: u64, language: u16) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(language as u64 + 1);
    rng
}

/// A mini-batch of stacked input windows and their targets.
#[derive(Clone, Debug)]
pub struct Batch {
    pub language: u16,
    pub inputs: Tensor<f32>,
    pub targets: Vec<usize>,
    pub frames: Vec<FrameRef>,
}

/// Per-language sampling state.
#[derive(Clone, Debug)]
pub struct SamplerState {
    language: u16,
    freqs: Vec<f64>,
    by_class: Vec<Vec<FrameRef>>,
    gamma: f64,
    cdf: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SamplerState {
    pub fn new(corpus: &Corpus, language: u16, rng: ChaCha8Rng) -> Result<Self> {
        let info = corpus.language(language)?;
        let mut by_class = vec![Vec::new(); info.classes];
        for (ui, u) in corpus.utterances_of(language) {
            for (t, &c) in u.targets().iter().enumerate() {
                by_class[c as usize].push(FrameRef {
                    utterance: ui as u32,
                    frame: t as u32,
                });
            }
        }
        let freqs: Vec<f64> = by_class.iter().map(|v| v.len() as f64).collect();
        if freqs.iter().all(|&f| f == 0.0) {
            return Err(Error::EmptyLanguage(language));
        }
        let mut s = Self {
            language,
            freqs,
            by_class,
            gamma: f64::NAN,
            cdf: Vec::new(),
            rng,
        };
        s.set_gamma(1.0)?;
        Ok(s)
    }

    pub fn language(&self) -> u16 {
        self.language
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn probs(&self) -> Vec<f64> {
        class_probs(&self.freqs, self.gamma).expect("validated at construction")
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if gamma == self.gamma {
            return Ok(());
        }
        let p = class_probs(&self.freqs, gamma)?;
        let mut acc = 0.0;
        self.cdf = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        self.gamma = gamma;
        Ok(())
    }

    /// Draws a class by `p`, then a frame of that class uniformly.
    pub fn draw(&mut self) -> FrameRef {
        let u: f64 = self.rng.gen();
        let mut class = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        // u can land past the last nonzero class through rounding; walk back.
        while self.by_class[class].is_empty() {
            class -= 1;
        }
        let frames = &self.by_class[class];
        frames[self.rng.gen_range(0..frames.len())]
    }

    pub fn sample_batch(&mut self, corpus: &Corpus, spec: &MultiScaleSpec, batch_size: usize) -> Result<Batch> {
        if batch_size == 0 {
            return Err(Error::contract("batch size must be >= 1"));
        }
        let g = spec.geometry(corpus.channels, corpus.mel_bins);
        let per = g.numel();
        let mut inputs = vec![0.0f32; batch_size * per];
        let mut targets = Vec::with_capacity(batch_size);
        let mut frames = Vec::with_capacity(batch_size);
        for slot in inputs.chunks_mut(per) {
            let f = self.draw();
            let utt = &corpus.utterances[f.utterance as usize];
            write_multiscale(utt, f.frame as usize, spec, slot);
            targets.push(utt.targets()[f.frame as usize] as usize);
            frames.push(f);
        }
        Ok(Batch {
            language: self.language,
            inputs: Tensor::new([batch_size, g.channels, g.time, g.freq], inputs)?,
            targets,
            frames,
        })
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}
