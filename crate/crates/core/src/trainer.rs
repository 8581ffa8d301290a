//! Round-robin multilingual training, evaluation and checkpointing.

use std::io::Write;

use serde::Serialize;

use crate::arch::{ArchConfig, InputGeometry};
use crate::autodiff::Tape;
use crate::checkpoint::{Blob, Checkpoint, Manifest, SamplerEntry};
use crate::error::{Error, Result};
use crate::features::{write_multiscale, Corpus, MultiScaleSpec};
use crate::network::MultilingualNetwork;
use crate::optim::{Optimizer, OptimizerKind};
use crate::sampler::{entropy, language_rng, Batch, GammaSchedule, SamplerState};
use crate::tensor::Tensor;

pub const DEFAULT_FINETUNE_LR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub multiscale: MultiScaleSpec,
    pub batch_size: usize,
    pub epochs: usize,
    /// Updates per epoch; by default enough for one pass over the corpus
    /// when every update consumes one batch per language.
    pub steps_per_epoch: Option<usize>,
    pub optimizer: OptimizerKind,
    /// Switch to plain SGD once this many epochs have completed.
    pub finetune_after_epoch: Option<usize>,
    pub finetune_lr: f64,
    pub gamma: GammaSchedule,
    pub seed: u64,
    /// Emit per-language loss records every this many updates (0 = never).
    pub metrics_every: u64,
    /// Evaluate training accuracy at each epoch end.
    pub eval_each_epoch: bool,
    /// Cap on frames per language scored by the epoch-end evaluation.
    pub eval_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            multiscale: MultiScaleSpec::three_scale(5),
            batch_size: 64,
            epochs: 5,
            steps_per_epoch: None,
            optimizer: OptimizerKind::ADADELTA,
            finetune_after_epoch: None,
            finetune_lr: DEFAULT_FINETUNE_LR,
            gamma: GammaSchedule::ramp(),
            seed: 1,
            metrics_every: 50,
            eval_each_epoch: true,
            eval_limit: None,
        }
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    pub language: u16,
    pub loss: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub step: u64,
    /// Per language in id order; empty when epoch evaluation is off.
    pub eval: Vec<(u16, EvalResult)>,
    /// Entropy (nats) of the targets drawn during the epoch, per language.
    pub sampled_entropy: Vec<(u16, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    /// `(step, per-language losses in id order)` for every update.
    pub losses: Vec<(u64, Vec<f32>)>,
    pub epochs: Vec<EpochSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub cross_entropy: f64,
    pub frames: usize,
}

/// Anything that maps a batch of input windows to per-class scores.
pub trait FrameClassifier {
    fn logits(&self, inputs: &Tensor<f32>, language: u16) -> Result<Tensor<f32>>;
}

impl FrameClassifier for MultilingualNetwork {
    fn logits(&self, inputs: &Tensor<f32>, language: u16) -> Result<Tensor<f32>> {
        MultilingualNetwork::logits(self, inputs, language)
    }
}

const EVAL_CHUNK: usize = 256;

/// Frame accuracy and mean cross-entropy over a language's frames in corpus
/// order (optionally only the first `limit` frames).
pub fn evaluate<C: FrameClassifier + ?Sized>(
    model: &C,
    corpus: &Corpus,
    language: u16,
    spec: &MultiScaleSpec,
    limit: Option<usize>,
) -> Result<EvalResult> {
    corpus.language(language)?;
    let g = spec.geometry(corpus.channels, corpus.mel_bins);
    let per = g.numel();
    let mut frames: Vec<(usize, usize)> = corpus
        .utterances_of(language)
        .flat_map(|(ui, u)| (0..u.num_frames()).map(move |t| (ui, t)))
        .collect();
    if let Some(n) = limit {
        frames.truncate(n);
    }
    if frames.is_empty() {
        return Err(Error::EmptyLanguage(language));
    }
    let (mut correct, mut ce) = (0usize, 0.0f64);
    let mut buf = Vec::with_capacity(EVAL_CHUNK * per);
    for chunk in frames.chunks(EVAL_CHUNK) {
        buf.clear();
        buf.resize(chunk.len() * per, 0.0);
        for (slot, &(ui, t)) in buf.chunks_mut(per).zip(chunk) {
            write_multiscale(&corpus.utterances[ui], t, spec, slot);
        }
        let x = Tensor::new([chunk.len(), g.channels, g.time, g.freq], std::mem::take(&mut buf))?;
        let logits = model.logits(&x, language)?;
        buf = x.into_data();
        let k = logits.numel() / chunk.len();
        for (row, &(ui, t)) in logits.data().chunks(k).zip(chunk) {
            let target = corpus.utterances[ui].targets()[t] as usize;
            let (best, max) = row
                .iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
            correct += usize::from(best == target);
            let lse = row.iter().map(|&v| ((v - max) as f64).exp()).sum::<f64>().ln() + max as f64;
            ce += lse - row[target] as f64;
        }
    }
    Ok(EvalResult {
        accuracy: correct as f64 / frames.len() as f64,
        cross_entropy: ce / frames.len() as f64,
        frames: frames.len(),
    })
}

/// One weight update from one mini-batch per language.
///
/// Languages are processed in id order. Shared-stem gradients are summed
/// over languages; each head only sees its own language. Returns the batch
/// losses in id order. A non-finite loss aborts before any weight changes.
pub fn round_robin_update(
    network: &mut MultilingualNetwork,
    batches: &[Batch],
    optimizer: &mut Optimizer<f32>,
) -> Result<Vec<f32>> {
    let langs = network.languages();
    if batches.len() != langs.len() {
        return Err(Error::contract(format!(
            "round-robin update needs one batch per language ({}), got {}",
            langs.len(),
            batches.len()
        )));
    }
    network.params_mut().zero_grad();
    let mut losses = Vec::with_capacity(langs.len());
    for &(id, _) in &langs {
        let batch = batches
            .iter()
            .find(|b| b.language == id)
            .ok_or_else(|| Error::contract(format!("round-robin update is missing a batch for language {id}")))?;
        let (loss, grads) = {
            let mut tape = Tape::new();
            let root = network.loss(&mut tape, &batch.inputs, &batch.targets, id)?;
            (tape.value(root)[0], tape.backward(root)?)
        };
        network.params_mut().accumulate(&grads)?;
        losses.push(loss);
    }
    if losses.iter().any(|l| !l.is_finite()) {
        network.params_mut().zero_grad();
        return Err(Error::Diverged {
            step: optimizer.steps() + 1,
            last_good: None,
        });
    }
    optimizer.step(network.params_mut())?;
    Ok(losses)
}

pub struct Trainer<'c> {
    corpus: &'c Corpus,
    config: TrainConfig,
    network: MultilingualNetwork,
    optimizer: Optimizer<f32>,
    samplers: Vec<SamplerState>,
    step: u64,
    steps_per_epoch: u64,
    finetuning: bool,
    last_good: Option<Checkpoint>,
    drawn: Vec<Vec<u64>>,
}

impl<'c> Trainer<'c> {
    /// Fresh run: network weights and sampler streams derive from `config.seed`.
    pub fn new(corpus: &'c Corpus, arch: &ArchConfig, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::contract("batch size must be >= 1"));
        }
        if config.epochs == 0 {
            return Err(Error::contract("epochs must be >= 1"));
        }
        config.optimizer.validate()?;
        let ids = corpus.language_ids();
        if ids.is_empty() || corpus.total_frames() == 0 {
            return Err(Error::contract("training corpus is empty"));
        }
        let geometry = config.multiscale.geometry(corpus.channels, corpus.mel_bins);
        let arch = arch.clone().with_input_channels(geometry.channels);
        let languages: Vec<(u16, usize)> = ids
            .iter()
            .map(|&id| Ok((id, corpus.language(id)?.classes)))
            .collect::<Result<_>>()?;
        let network = MultilingualNetwork::new(&arch, geometry, &languages, config.seed)?;
        let optimizer = Optimizer::new(config.optimizer, network.params())?;
        let samplers = ids
            .iter()
            .map(|&id| SamplerState::new(corpus, id, language_rng(config.seed, id)))
            .collect::<Result<Vec<_>>>()?;
        let steps_per_epoch = match config.steps_per_epoch {
            Some(0) => return Err(Error::contract("steps per epoch must be >= 1")),
            Some(n) => n as u64,
            None => corpus.total_frames().div_ceil(config.batch_size * ids.len()) as u64,
        };
        let drawn = languages.iter().map(|&(_, k)| vec![0; k]).collect();
        let mut t = Self {
            corpus,
            config,
            network,
            optimizer,
            samplers,
            step: 0,
            steps_per_epoch,
            finetuning: false,
            last_good: None,
            drawn,
        };
        t.last_good = Some(t.checkpoint());
        Ok(t)
    }

    /// Continues a run from `ckpt`; the architecture, geometry, feature spec,
    /// language table and seed must match this configuration.
    pub fn resume(corpus: &'c Corpus, arch: &ArchConfig, config: TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(corpus, arch, config)?;
        let m = &ckpt.manifest;
        let check = |field: &str, want: String, got: &str| {
            if want != got {
                return Err(Error::incompatible(field, want, got));
            }
            Ok(())
        };
        check("architecture", t.network.config().to_text(), &m.architecture)?;
        check("geometry", t.network.geometry().to_string(), &m.geometry)?;
        check("multiscale", t.config.multiscale.to_string(), &m.multiscale)?;
        check("language table", format!("{:?}", t.network.languages()), &format!("{:?}", m.languages))?;
        check("seed", t.config.seed.to_string(), &m.seed.to_string())?;

        t.network.load_params(|name| {
            ckpt.blob(&format!("param/{name}"))
                .map(|b| (b.shape.as_slice(), b.data.as_slice()))
        })?;
        let names: Vec<String> = t.network.params().iter().map(|(_, p)| p.name.clone()).collect();
        let accs = m.optimizer.accumulators();
        let buffers = names
            .iter()
            .map(|n| {
                accs.iter()
                    .map(|a| {
                        ckpt.blob(&format!("optim/{n}/{a}"))
                            .map(|b| b.data.clone())
                            .ok_or_else(|| Error::incompatible("optimizer state", format!("{n}/{a}"), "missing"))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        t.optimizer = Optimizer::restore(m.optimizer, m.optimizer_steps, t.network.params(), buffers)?;
        for s in &mut t.samplers {
            let e = m
                .samplers
                .iter()
                .find(|e| e.language == s.language())
                .ok_or_else(|| Error::incompatible("sampler streams", s.language(), "missing"))?;
            s.set_rng(e.rng.restore()?);
        }
        t.step = m.step;
        t.finetuning = m.finetuning;
        t.last_good = Some(ckpt.clone());
        Ok(t)
    }

    pub fn network(&self) -> &MultilingualNetwork {
        &self.network
    }

    pub fn optimizer(&self) -> &Optimizer<f32> {
        &self.optimizer
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.steps_per_epoch
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_epoch * self.config.epochs as u64
    }

    pub fn geometry(&self) -> InputGeometry {
        self.network.geometry()
    }

    pub fn samplers(&self) -> &[SamplerState] {
        &self.samplers
    }

    fn progress(&self) -> f64 {
        (self.step as f64 / self.total_steps() as f64).min(1.0)
    }

    pub fn current_gamma(&self) -> Result<f64> {
        self.config.gamma.gamma_at(self.progress())
    }

    /// Draws one batch per language and applies one round-robin update.
    pub fn step(&mut self) -> Result<Vec<f32>> {
        let gamma = self.current_gamma()?;
        let mut batches = Vec::with_capacity(self.samplers.len());
        for (s, counts) in self.samplers.iter_mut().zip(&mut self.drawn) {
            s.set_gamma(gamma)?;
            let b = s.sample_batch(self.corpus, &self.config.multiscale, self.config.batch_size)?;
            b.targets.iter().for_each(|&t| counts[t] += 1);
            batches.push(b);
        }
        match round_robin_update(&mut self.network, &batches, &mut self.optimizer) {
            Ok(losses) => {
                self.step += 1;
                Ok(losses)
            }
            Err(Error::Diverged { .. }) => Err(Error::Diverged {
                step: self.step + 1,
                last_good: self.last_good.clone().map(Box::new),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn evaluate(&self, corpus: &Corpus, language: u16, limit: Option<usize>) -> Result<EvalResult> {
        evaluate(&self.network, corpus, language, &self.config.multiscale, limit)
    }

    /// Runs the remaining updates, writing metrics lines to `sink`.
    pub fn train(&mut self, sink: &mut dyn Write) -> Result<History> {
        self.train_for(sink, u64::MAX)
    }

    /// Like [`Trainer::train`] but stops after at most `updates` updates.
    pub fn train_for(&mut self, sink: &mut dyn Write, updates: u64) -> Result<History> {
        let mut history = History::default();
        let ids: Vec<u16> = self.samplers.iter().map(|s| s.language()).collect();
        let stop = self.total_steps().min(self.step.saturating_add(updates));
        while self.step < stop {
            let gamma = self.current_gamma()?;
            let losses = self.step()?;
            if self.config.metrics_every > 0 && self.step % self.config.metrics_every == 0 {
                for (&language, &loss) in ids.iter().zip(&losses) {
                    emit(sink, &MetricRecord { step: self.step, epoch: None, language, loss: loss as f64, gamma, accuracy: None })?;
                }
            }
            history.losses.push((self.step, losses));
            if self.step % self.steps_per_epoch == 0 {
                history.epochs.push(self.end_epoch(sink, gamma)?);
            }
        }
        Ok(history)
    }

    fn end_epoch(&mut self, sink: &mut dyn Write, gamma: f64) -> Result<EpochSummary> {
        let epoch = (self.step / self.steps_per_epoch) as usize;
        let ids: Vec<u16> = self.samplers.iter().map(|s| s.language()).collect();
        let mut eval = Vec::new();
        if self.config.eval_each_epoch {
            for &id in &ids {
                let r = self.evaluate(self.corpus, id, self.config.eval_limit)?;
                emit(sink, &MetricRecord {
                    step: self.step,
                    epoch: Some(epoch),
                    language: id,
                    loss: r.cross_entropy,
                    gamma,
                    accuracy: Some(r.accuracy),
                })?;
                eval.push((id, r));
            }
        }
        let sampled_entropy = ids
            .iter()
            .zip(&mut self.drawn)
            .map(|(&id, counts)| {
                let n: u64 = counts.iter().sum();
                let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
                counts.iter_mut().for_each(|c| *c = 0);
                (id, entropy(&p))
            })
            .collect();
        if !self.finetuning && self.config.finetune_after_epoch.is_some_and(|e| epoch >= e) {
            self.optimizer = Optimizer::new(OptimizerKind::Sgd { lr: self.config.finetune_lr }, self.network.params())?;
            self.finetuning = true;
        }
        self.last_good = Some(self.checkpoint());
        Ok(EpochSummary {
            epoch,
            step: self.step,
            eval,
            sampled_entropy,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let params = self.network.params();
        let mut blobs: Vec<Blob> = params
            .iter()
            .map(|(_, p)| Blob {
                name: format!("param/{}", p.name),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.data().to_vec(),
            })
            .collect();
        for (i, acc, data) in self.optimizer.state() {
            blobs.push(Blob {
                name: format!("optim/{}/{acc}", params.name(crate::autodiff::ParamId(i))),
                shape: vec![data.len()],
                data: data.to_vec(),
            });
        }
        Checkpoint {
            manifest: Manifest {
                architecture: self.network.config().to_text(),
                geometry: self.network.geometry().to_string(),
                multiscale: self.config.multiscale.to_string(),
                languages: self.network.languages(),
                optimizer: self.optimizer.kind(),
                optimizer_steps: self.optimizer.steps(),
                step: self.step,
                finetuning: self.finetuning,
                seed: self.config.seed,
                samplers: self
                    .samplers
                    .iter()
                    .map(|s| SamplerEntry {
                        language: s.language(),
                        rng: s.rng_state(),
                    })
                    .collect(),
            },
            blobs,
        }
    }
}

fn emit(sink: &mut dyn Write, record: &MetricRecord) -> Result<()> {
    serde_json::to_writer(&mut *sink, record)?;
    sink.write_all(b"\n")?;
    Ok(())
}
