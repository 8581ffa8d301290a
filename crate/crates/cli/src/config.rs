//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use convlab::arch::{ArchConfig, InputGeometry};
use convlab::features::MultiScaleSpec;
use convlab::optim::OptimizerKind;
use convlab::sampler::GammaSchedule;
use convlab::trainer::{TrainConfig, DEFAULT_FINETUNE_LR};
use convlab::{Error, Result};

/// Every key the run config accepts, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("arch", "preset name (classic, VB, VBX, ...) or path to an architecture file"),
    ("scale_down", "divide feature-map counts and hidden fc widths by this factor"),
    ("untie", "number of trailing fc layers replicated per language"),
    ("geom", "expected input geometry CxTxF; checked against the corpus and multiscale"),
    ("multiscale", "multi-scale window, e.g. 3S/5 or 1,2,4/5"),
    ("deltas", "append delta and delta-delta channels (true/false)"),
    ("normalize", "standardize features with corpus statistics (true/false)"),
    ("optimizer", "sgd | momentum | adadelta | adam"),
    ("lr", "learning rate for sgd and momentum"),
    ("mu", "momentum coefficient"),
    ("rho", "adadelta decay"),
    ("eps", "adadelta or adam epsilon"),
    ("alpha", "adam step size"),
    ("beta1", "adam first-moment decay"),
    ("beta2", "adam second-moment decay"),
    ("finetune_after_epoch", "switch to sgd after this many epochs"),
    ("finetune_lr", "sgd learning rate used after the switch"),
    ("gamma", "class-balancing schedule as progress:gamma pairs, e.g. 0:0,1:1"),
    ("batch", "frames per language per update"),
    ("epochs", "number of epochs"),
    ("steps_per_epoch", "updates per epoch (default: one pass over the corpus)"),
    ("seed", "master seed"),
    ("corpus", "training corpus file"),
    ("eval_corpus", "held-out corpus file used by eval"),
    ("checkpoint_dir", "directory for checkpoints and normalization statistics"),
    ("metrics", "metrics output path, or - for standard output"),
    ("metrics_every", "emit loss records every N updates (0 = only epoch records)"),
    ("eval_limit", "frames per language scored at each epoch end"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub geom: Option<InputGeometry>,
    pub deltas: bool,
    pub normalize: bool,
    pub train: TrainConfig,
    pub corpus: PathBuf,
    pub eval_corpus: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    /// `None` means standard output.
    pub metrics: Option<PathBuf>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

struct Values {
    map: BTreeMap<String, (String, usize)>,
}

impl Values {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(format!("line {line}: bad value '{v}' for {key}"))),
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(cfg_err(format!("line {line}: {key} must be true or false, got '{v}'"))),
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(cfg_err(format!("line {}: unknown key '{k}'", i + 1)));
            }
            if map.insert(k.to_string(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(cfg_err(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        let mut v = Values { map };
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let arch_name = v.take("arch").map(|a| a.0).unwrap_or_else(|| "VB".into());
        let mut arch = if Path::new(&arch_name).components().count() > 1 || arch_name.contains('.') {
            let path = resolve(arch_name.clone());
            let text = fs::read_to_string(&path)
                .map_err(|e| cfg_err(format!("architecture file {}: {e}", path.display())))?;
            ArchConfig::parse_text(&text)?
        } else {
            ArchConfig::parse(&arch_name)?
        };
        if let Some(d) = v.parse::<usize>("scale_down")? {
            if d == 0 {
                return Err(cfg_err("scale_down must be >= 1"));
            }
            arch = arch.scaled_down(d);
        }
        if let Some(u) = v.parse::<usize>("untie")? {
            arch = arch.with_untied_fc(u).map_err(|e| cfg_err(e.to_string()))?;
        }

        let geom = match v.take("geom") {
            None => None,
            Some((g, _)) => Some(g.parse::<InputGeometry>()?),
        };
        let multiscale: MultiScaleSpec = match v.take("multiscale") {
            None => MultiScaleSpec::three_scale(5),
            Some((m, _)) => m.parse()?,
        };
        let deltas = v.flag("deltas", false)?;
        let normalize = v.flag("normalize", true)?;

        let optimizer = optimizer(&mut v)?;
        let gamma = match v.take("gamma") {
            None => GammaSchedule::ramp(),
            Some((g, _)) => g.parse()?,
        };
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            multiscale,
            batch_size: v.parse("batch")?.unwrap_or(defaults.batch_size),
            epochs: v.parse("epochs")?.unwrap_or(defaults.epochs),
            steps_per_epoch: v.parse("steps_per_epoch")?,
            optimizer,
            finetune_after_epoch: v.parse("finetune_after_epoch")?,
            finetune_lr: v.parse("finetune_lr")?.unwrap_or(DEFAULT_FINETUNE_LR),
            gamma,
            seed: v.parse("seed")?.unwrap_or(defaults.seed),
            metrics_every: v.parse("metrics_every")?.unwrap_or(defaults.metrics_every),
            eval_each_epoch: true,
            eval_limit: v.parse("eval_limit")?,
        };
        if train.batch_size == 0 || train.epochs == 0 {
            return Err(cfg_err("batch and epochs must be >= 1"));
        }
        if !(train.finetune_lr > 0.0) {
            return Err(cfg_err("finetune_lr must be > 0"));
        }

        let corpus = resolve(v.take("corpus").ok_or_else(|| cfg_err("missing required key 'corpus'"))?.0);
        if !corpus.is_file() {
            return Err(cfg_err(format!("corpus file {} does not exist", corpus.display())));
        }
        let eval_corpus = v.take("eval_corpus").map(|p| resolve(p.0));
        if let Some(p) = &eval_corpus {
            if !p.is_file() {
                return Err(cfg_err(format!("eval corpus file {} does not exist", p.display())));
            }
        }
        let checkpoint_dir = v.take("checkpoint_dir").map(|p| resolve(p.0));
        let metrics = match v.take("metrics") {
            None => None,
            Some((m, _)) if m == "-" => None,
            Some((m, _)) => Some(resolve(m)),
        };
        debug_assert!(v.map.is_empty(), "unhandled keys {:?}", v.map.keys());
        Ok(Self {
            arch,
            geom,
            deltas,
            normalize,
            train,
            corpus,
            eval_corpus,
            checkpoint_dir,
            metrics,
        })
    }

    /// Input geometry for a corpus with `channels` base channels (before
    /// deltas) and `bins` mel bins; must match `geom` when it is set.
    pub fn input_geometry(&self, channels: usize, bins: usize) -> Result<InputGeometry> {
        let base = if self.deltas { channels * 3 } else { channels };
        let g = self.train.multiscale.geometry(base, bins);
        match self.geom {
            Some(want) if want != g => Err(cfg_err(format!(
                "geom {want} does not match multiscale {} over {base} channel(s) x {bins} bins (gives {g})",
                self.train.multiscale
            ))),
            _ => Ok(g),
        }
    }
}

fn optimizer(v: &mut Values) -> Result<OptimizerKind> {
    let name = v.take("optimizer").map(|o| o.0).unwrap_or_else(|| "adadelta".into());
    let kind = match name.as_str() {
        "sgd" => OptimizerKind::Sgd {
            lr: v.parse("lr")?.ok_or_else(|| cfg_err("optimizer sgd needs lr"))?,
        },
        "momentum" => OptimizerKind::Momentum {
            lr: v.parse("lr")?.ok_or_else(|| cfg_err("optimizer momentum needs lr"))?,
            mu: v.parse("mu")?.unwrap_or(0.9),
        },
        "adadelta" => {
            let OptimizerKind::Adadelta { rho, eps } = OptimizerKind::ADADELTA else { unreachable!() };
            OptimizerKind::Adadelta {
                rho: v.parse("rho")?.unwrap_or(rho),
                eps: v.parse("eps")?.unwrap_or(eps),
            }
        }
        "adam" => {
            let OptimizerKind::Adam { alpha, beta1, beta2, eps } = OptimizerKind::ADAM else { unreachable!() };
            OptimizerKind::Adam {
                alpha: v.parse("alpha")?.unwrap_or(alpha),
                beta1: v.parse("beta1")?.unwrap_or(beta1),
                beta2: v.parse("beta2")?.unwrap_or(beta2),
                eps: v.parse("eps")?.unwrap_or(eps),
            }
        }
        other => return Err(cfg_err(format!("unknown optimizer '{other}'"))),
    };
    for key in ["lr", "mu", "rho", "eps", "alpha", "beta1", "beta2"] {
        if let Some((_, line)) = v.take(key) {
            return Err(cfg_err(format!("line {line}: {key} does not apply to optimizer {name}")));
        }
    }
    kind.validate().map_err(|e| cfg_err(e.to_string()))?;
    Ok(kind)
}
