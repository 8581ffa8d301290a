//! Frame-level features: utterances, multi-scale context windows, delta
//! channels and global standardization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::InputGeometry;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MEL_BINS: usize = 40;

/// One utterance: `channels × frames × mel_bins` features plus a class
/// index per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub language: u16,
    channels: usize,
    mel_bins: usize,
    features: Vec<f32>,
    targets: Vec<u32>,
}

impl Utterance {
    pub fn new(language: u16, channels: usize, mel_bins: usize, features: Vec<f32>, targets: Vec<u32>) -> Result<Self> {
        if channels == 0 || mel_bins == 0 {
            return Err(Error::contract("utterance needs at least one channel and one bin"));
        }
        let expected = channels * targets.len() * mel_bins;
        if features.len() != expected {
            return Err(Error::dim("utterance feature length", expected, features.len()));
        }
        Ok(Self {
            language,
            channels,
            mel_bins,
            features,
            targets,
        })
    }

    /// Single-channel utterance from a `frames × mel_bins` matrix.
    pub fn from_frames(language: u16, mel_bins: usize, frames: Vec<f32>, targets: Vec<u32>) -> Result<Self> {
        Self::new(language, 1, mel_bins, frames, targets)
    }

    pub fn num_frames(&self) -> usize {
        self.targets.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f32] {
        &mut self.features
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    /// Feature vector of frame `t` in channel `c`.
    pub fn frame(&self, channel: usize, t: usize) -> &[f32] {
        let start = (channel * self.num_frames() + t) * self.mel_bins;
        &self.features[start..start + self.mel_bins]
    }

    fn channel(&self, c: usize) -> &[f32] {
        let len = self.num_frames() * self.mel_bins;
        &self.features[c * len..(c + 1) * len]
    }

    /// Keeps frames `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Utterance {
        let mut features = Vec::with_capacity(self.channels * (end - start) * self.mel_bins);
        for c in 0..self.channels {
            features.extend_from_slice(&self.channel(c)[start * self.mel_bins..end * self.mel_bins]);
        }
        Utterance {
            language: self.language,
            channels: self.channels,
            mel_bins: self.mel_bins,
            features,
            targets: self.targets[start..end].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageInfo {
    pub id: u16,
    pub name: String,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub languages: Vec<LanguageInfo>,
    pub mel_bins: usize,
    pub channels: usize,
    /// Generator seed, when the corpus is synthetic.
    pub seed: Option<u64>,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(languages: Vec<LanguageInfo>, mel_bins: usize, channels: usize) -> Self {
        Self {
            languages,
            mel_bins,
            channels,
            seed: None,
            utterances: Vec::new(),
        }
    }

    /// Adds an utterance after checking it against the corpus metadata.
    pub fn push(&mut self, utt: Utterance) -> Result<()> {
        let info = self.language(utt.language)?;
        if utt.mel_bins != self.mel_bins {
            return Err(Error::dim("utterance mel bins", self.mel_bins, utt.mel_bins));
        }
        if utt.channels != self.channels {
            return Err(Error::dim("utterance channels", self.channels, utt.channels));
        }
        if let Some(&bad) = utt.targets.iter().find(|&&t| t as usize >= info.classes) {
            return Err(Error::Index {
                what: "language classes",
                index: bad as usize,
                len: info.classes,
            });
        }
        self.utterances.push(utt);
        Ok(())
    }

    pub fn language(&self, id: u16) -> Result<&LanguageInfo> {
        self.languages
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| Error::NotFound(format!("language {id}")))
    }

    /// Language ids in ascending order.
    pub fn language_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.languages.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn utterances_of(&self, id: u16) -> impl Iterator<Item = (usize, &Utterance)> {
        self.utterances.iter().enumerate().filter(move |(_, u)| u.language == id)
    }

    pub fn frames_of(&self, id: u16) -> usize {
        self.utterances_of(id).map(|(_, u)| u.num_frames()).sum()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::num_frames).sum()
    }

    /// Frame counts per class for one language.
    pub fn class_counts(&self, id: u16) -> Result<Vec<u64>> {
        let info = self.language(id)?;
        let mut counts = vec![0u64; info.classes];
        for (_, u) in self.utterances_of(id) {
            for &t in &u.targets {
                counts[t as usize] += 1;
            }
        }
        Ok(counts)
    }

    fn with_utterances(&self, utterances: Vec<Utterance>) -> Corpus {
        Corpus {
            languages: self.languages.clone(),
            mel_bins: self.mel_bins,
            channels: self.channels,
            seed: self.seed,
            utterances,
        }
    }

    /// Keeps only the first `frames` frames of language `id`, cutting the
    /// last kept utterance if needed.
    pub fn restrict_language(&self, id: u16, frames: usize) -> Corpus {
        let mut left = frames;
        let mut out = Vec::new();
        for u in &self.utterances {
            if u.language != id {
                out.push(u.clone());
            } else if left > 0 {
                let take = left.min(u.num_frames());
                out.push(if take == u.num_frames() { u.clone() } else { u.slice(0, take) });
                left -= take;
            }
        }
        self.with_utterances(out)
    }

    /// Moves the last `frames` frames of every language into a second corpus.
    pub fn split_tail(&self, frames: usize) -> (Corpus, Corpus) {
        let mut head = Vec::new();
        let mut tail = Vec::new();
        for id in self.language_ids() {
            let total = self.frames_of(id);
            let cut = total.saturating_sub(frames);
            let mut seen = 0;
            for (_, u) in self.utterances_of(id) {
                let (start, end) = (seen, seen + u.num_frames());
                if end <= cut {
                    head.push(u.clone());
                } else if start >= cut {
                    tail.push(u.clone());
                } else {
                    head.push(u.slice(0, cut - start));
                    tail.push(u.slice(cut - start, u.num_frames()));
                }
                seen = end;
            }
        }
        (self.with_utterances(head), self.with_utterances(tail))
    }

    /// Keeps the listed languages (and their utterances) only.
    pub fn select_languages(&self, ids: &[u16]) -> Corpus {
        let mut c = self.with_utterances(
            self.utterances
                .iter()
                .filter(|u| ids.contains(&u.language))
                .cloned()
                .collect(),
        );
        c.languages.retain(|l| ids.contains(&l.id));
        c
    }
}

/// Stacked context windows at several temporal strides.
///
/// The stride-`s` map holds frames `t - s·C, …, t, …, t + s·C`, so every
/// map has `2C + 1` rows regardless of stride.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiScaleSpec {
    pub context: usize,
    pub strides: Vec<usize>,
}

impl MultiScaleSpec {
    pub fn new(context: usize, strides: Vec<usize>) -> Result<Self> {
        if strides.first() != Some(&1) {
            return Err(Error::contract(format!("strides {strides:?} must start at 1")));
        }
        if strides.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract(format!("strides {strides:?} must be strictly increasing")));
        }
        Ok(Self { context, strides })
    }

    /// Plain single-scale context window `±context`.
    pub fn single(context: usize) -> Self {
        Self {
            context,
            strides: vec![1],
        }
    }

    /// `{1, 2, 4}` at `±context`.
    pub fn three_scale(context: usize) -> Self {
        Self {
            context,
            strides: vec![1, 2, 4],
        }
    }

    pub fn window(&self) -> usize {
        2 * self.context + 1
    }

    pub fn geometry(&self, base_channels: usize, mel_bins: usize) -> InputGeometry {
        InputGeometry {
            channels: self.strides.len() * base_channels,
            time: self.window(),
            freq: mel_bins,
        }
    }
}

impl fmt::Display for MultiScaleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.strides.iter().enumerate().all(|(i, &s)| s == 1 << i) {
            write!(f, "{}S/{}", self.strides.len(), self.context)
        } else {
            let s: Vec<String> = self.strides.iter().map(ToString::to_string).collect();
            write!(f, "{}/{}", s.join(","), self.context)
        }
    }
}

impl FromStr for MultiScaleSpec {
    type Err = Error;

    /// `nS/C` (strides 1, 2, 4, … up to n scales) or `s1,s2,…/C`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("multi-scale spec '{s}' is not `nS/C` or `s1,s2,.../C`"));
        let (scales, context) = s.trim().split_once('/').ok_or_else(bad)?;
        let context: usize = context.parse().map_err(|_| bad())?;
        let strides = if let Some(n) = scales.strip_suffix('S').or_else(|| scales.strip_suffix('s')) {
            let n: u32 = n.parse().map_err(|_| bad())?;
            if n == 0 || n > 16 {
                return Err(bad());
            }
            (0..n).map(|i| 1usize << i).collect()
        } else {
            scales
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<Result<Vec<usize>>>()?
        };
        MultiScaleSpec::new(context, strides)
    }
}

/// Writes the stacked windows for frame `t` into `out`
/// (`strides·channels × (2C+1) × mel_bins`, stride-major).
pub fn write_multiscale(utt: &Utterance, t: usize, spec: &MultiScaleSpec, out: &mut [f32]) {
    let bins = utt.mel_bins;
    let last = utt.num_frames() as isize - 1;
    let c = spec.context as isize;
    let mut cursor = 0;
    for &stride in &spec.strides {
        for ch in 0..utt.channels {
            for k in -c..=c {
                let idx = (t as isize + k * stride as isize).clamp(0, last) as usize;
                out[cursor..cursor + bins].copy_from_slice(utt.frame(ch, idx));
                cursor += bins;
            }
        }
    }
}

/// Multi-scale input maps centred on frame `t`; edge frames are replicated
/// where the window runs past either end of the utterance.
pub fn build_multiscale(utt: &Utterance, t: usize, spec: &MultiScaleSpec) -> Result<Tensor<f32>> {
    if t >= utt.num_frames() {
        return Err(Error::Index {
            what: "utterance frames",
            index: t,
            len: utt.num_frames(),
        });
    }
    let g = spec.geometry(utt.channels, utt.mel_bins);
    let mut out = vec![0.0; g.numel()];
    write_multiscale(utt, t, spec, &mut out);
    Tensor::new([g.channels, g.time, g.freq], out)
}

/// Regression delta over `±2` frames with clamped edges, applied to one
/// `frames × bins` matrix.
fn delta(x: &[f32], frames: usize, bins: usize) -> Vec<f32> {
    const WINDOW: usize = 2;
    let norm: f32 = 2.0 * (1..=WINDOW).map(|n| (n * n) as f32).sum::<f32>();
    let last = frames - 1;
    let mut out = vec![0.0f32; x.len()];
    for t in 0..frames {
        let row = &mut out[t * bins..(t + 1) * bins];
        for n in 1..=WINDOW {
            let ahead = &x[(t + n).min(last) * bins..][..bins];
            let behind = &x[t.saturating_sub(n) * bins..][..bins];
            for ((o, &a), &b) in row.iter_mut().zip(ahead).zip(behind) {
                *o += n as f32 * (a - b);
            }
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Appends Δ and ΔΔ channels: the result has `3·channels` channels ordered
/// static, delta, delta-delta.
pub fn add_deltas(utt: &Utterance) -> Result<Utterance> {
    let frames = utt.num_frames();
    if frames == 0 {
        return Err(Error::contract("cannot take deltas of an empty utterance"));
    }
    let bins = utt.mel_bins;
    let mut features = utt.features.clone();
    let deltas: Vec<Vec<f32>> = (0..utt.channels).map(|c| delta(utt.channel(c), frames, bins)).collect();
    for d in &deltas {
        features.extend_from_slice(d);
    }
    for d in &deltas {
        features.extend(delta(d, frames, bins));
    }
    Utterance::new(utt.language, utt.channels * 3, bins, features, utt.targets.clone())
}

pub fn add_deltas_corpus(corpus: &Corpus) -> Result<Corpus> {
    let utterances = corpus.utterances.iter().map(add_deltas).collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        languages: corpus.languages.clone(),
        mel_bins: corpus.mel_bins,
        channels: corpus.channels * 3,
        seed: corpus.seed,
        utterances,
    })
}

/// Global per-(channel, bin) mean and variance shared by every language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: usize,
    pub mel_bins: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl NormStats {
    pub fn measure(corpus: &Corpus) -> Result<Self> {
        let dims = corpus.channels * corpus.mel_bins;
        let frames = corpus.total_frames();
        if frames == 0 {
            return Err(Error::contract("cannot normalize an empty corpus"));
        }
        let mut sum = vec![0.0f64; dims];
        for u in &corpus.utterances {
            for c in 0..u.channels {
                for row in u.channel(c).chunks(u.mel_bins) {
                    let acc = &mut sum[c * u.mel_bins..(c + 1) * u.mel_bins];
                    acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v as f64);
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / frames as f64).collect();
        let mut sq = vec![0.0f64; dims];
        for u in &corpus.utterances {
            for c in 0..u.channels {
                for row in u.channel(c).chunks(u.mel_bins) {
                    let off = c * u.mel_bins;
                    for (b, &v) in row.iter().enumerate() {
                        let d = v as f64 - mean[off + b];
                        sq[off + b] += d * d;
                    }
                }
            }
        }
        let variance: Vec<f64> = sq.iter().map(|s| s / frames as f64).collect();
        if let Some(bin) = variance.iter().position(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::DegenerateFeature { bin });
        }
        Ok(Self {
            channels: corpus.channels,
            mel_bins: corpus.mel_bins,
            mean,
            variance,
        })
    }

    pub fn apply(&self, corpus: &mut Corpus) -> Result<()> {
        if corpus.channels != self.channels || corpus.mel_bins != self.mel_bins {
            return Err(Error::dim(
                "normalization feature dimension",
                self.channels * self.mel_bins,
                corpus.channels * corpus.mel_bins,
            ));
        }
        let scale: Vec<f64> = self.variance.iter().map(|v| 1.0 / v.sqrt()).collect();
        let bins = self.mel_bins;
        for u in &mut corpus.utterances {
            let frames = u.num_frames();
            for c in 0..u.channels {
                let plane = &mut u.features[c * frames * bins..(c + 1) * frames * bins];
                for row in plane.chunks_mut(bins) {
                    for (b, v) in row.iter_mut().enumerate() {
                        let k = c * bins + b;
                        *v = ((*v as f64 - self.mean[k]) * scale[k]) as f32;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Standardizes the corpus in place with statistics pooled over all languages.
pub fn normalize(corpus: &mut Corpus) -> Result<NormStats> {
    let stats = NormStats::measure(corpus)?;
    stats.apply(corpus)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize, bins: usize) -> Utterance {
        let feats = (0..frames).flat_map(|t| (0..bins).map(move |b| (t * 100 + b) as f32)).collect();
        Utterance::from_frames(0, bins, feats, vec![0; frames]).unwrap()
    }

    #[test]
    fn three_scale_shape() {
        let u = ramp(200, 40);
        let spec = MultiScaleSpec::three_scale(5);
        let x = build_multiscale(&u, 100, &spec).unwrap();
        assert_eq!(x.shape(), &[3, 11, 40]);
    }

    #[test]
    fn stride_one_is_verbatim() {
        let u = ramp(200, 40);
        let x = build_multiscale(&u, 100, &MultiScaleSpec::three_scale(5)).unwrap();
        let first_map = &x.data()[..11 * 40];
        let raw: Vec<f32> = (95..=105).flat_map(|t| u.frame(0, t).to_vec()).collect();
        assert_eq!(first_map, raw.as_slice());
    }

    #[test]
    fn clamps_to_first_frame() {
        let u = ramp(50, 4);
        let x = build_multiscale(&u, 2, &MultiScaleSpec::three_scale(5)).unwrap();
        let stride4 = &x.data()[2 * 11 * 4..];
        // offsets -5..-1 at stride 4 are frames -18..-2
        for k in 0..5 {
            assert_eq!(&stride4[k * 4..(k + 1) * 4], u.frame(0, 0));
        }
        assert_eq!(&stride4[5 * 4..6 * 4], u.frame(0, 2));
        assert_eq!(&stride4[6 * 4..7 * 4], u.frame(0, 6));
    }

    #[test]
    fn notation_round_trip() {
        let s: MultiScaleSpec = "3S/20".parse().unwrap();
        assert_eq!(s, MultiScaleSpec::three_scale(20));
        assert_eq!(s.to_string(), "3S/20");
        assert_eq!("1S/8".parse::<MultiScaleSpec>().unwrap(), MultiScaleSpec::single(8));
        assert_eq!("1,3/4".parse::<MultiScaleSpec>().unwrap().strides, vec![1, 3]);
        assert!("2,4/4".parse::<MultiScaleSpec>().is_err());
        assert!("1,1/4".parse::<MultiScaleSpec>().is_err());
    }

    #[test]
    fn deltas_of_constant_are_zero() {
        let u = Utterance::from_frames(0, 2, vec![3.0; 20], vec![0; 10]).unwrap();
        let d = add_deltas(&u).unwrap();
        assert_eq!(d.channels(), 3);
        assert!(d.features()[20..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deltas_of_ramp_are_one_inside() {
        let frames = 12;
        let u = Utterance::from_frames(0, 1, (0..frames).map(|t| t as f32).collect(), vec![0; frames]).unwrap();
        let d = add_deltas(&u).unwrap();
        for t in 2..frames - 2 {
            assert!((d.frame(1, t)[0] - 1.0).abs() < 1e-6);
        }
        // second derivative of a ramp vanishes away from the clamped edges
        for t in 4..frames - 4 {
            assert!(d.frame(2, t)[0].abs() < 1e-6);
        }
    }

    #[test]
    fn single_frame_deltas_vanish() {
        let u = Utterance::from_frames(0, 3, vec![1.0, 2.0, 3.0], vec![0]).unwrap();
        let d = add_deltas(&u).unwrap();
        assert_eq!(&d.features()[3..], &[0.0; 6]);
    }

    fn two_language_corpus() -> Corpus {
        let langs = vec![
            LanguageInfo { id: 0, name: "a".into(), classes: 1 },
            LanguageInfo { id: 1, name: "b".into(), classes: 1 },
        ];
        let mut c = Corpus::new(langs, 2, 1);
        c.push(Utterance::from_frames(0, 2, vec![0.0, 1.0, 2.0, 3.0], vec![0, 0]).unwrap()).unwrap();
        c.push(Utterance::from_frames(1, 2, vec![10.0, 11.0, 14.0, 15.0], vec![0, 0]).unwrap()).unwrap();
        c
    }

    #[test]
    fn normalization_is_shared_across_languages() {
        let mut c = two_language_corpus();
        let stats = normalize(&mut c).unwrap();
        assert_eq!(stats.mean, vec![6.5, 7.5]);
        let after = NormStats::measure(&c).unwrap();
        for (m, v) in after.mean.iter().zip(&after.variance) {
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4);
        }
        let before = c.clone();
        normalize(&mut c).unwrap();
        for (a, b) in before.utterances.iter().zip(&c.utterances) {
            for (x, y) in a.features().iter().zip(b.features()) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn constant_bin_is_degenerate() {
        let langs = vec![LanguageInfo { id: 0, name: "a".into(), classes: 1 }];
        let mut c = Corpus::new(langs, 2, 1);
        c.push(Utterance::from_frames(0, 2, vec![1.0, 5.0, 2.0, 5.0], vec![0, 0]).unwrap()).unwrap();
        assert!(matches!(normalize(&mut c), Err(Error::DegenerateFeature { bin: 1 })));
    }

    #[test]
    fn split_and_restrict() {
        let langs = vec![LanguageInfo { id: 0, name: "a".into(), classes: 1 }];
        let mut c = Corpus::new(langs, 1, 1);
        for _ in 0..3 {
            c.push(Utterance::from_frames(0, 1, vec![0.0; 10], vec![0; 10]).unwrap()).unwrap();
        }
        let (head, tail) = c.split_tail(15);
        assert_eq!((head.total_frames(), tail.total_frames()), (15, 15));
        assert_eq!(c.restrict_language(0, 12).total_frames(), 12);
    }
}
