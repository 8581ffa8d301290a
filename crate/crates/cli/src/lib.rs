//! Command-line driver: argument table, dispatch and exit codes.

pub mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use convlab::arch::{count_params, infer_shapes, ArchConfig, InputGeometry};
use convlab::checkpoint::Checkpoint;
use convlab::corpus_io::{read_corpus, write_corpus};
use convlab::features::{add_deltas_corpus, build_multiscale, normalize, Corpus, MultiScaleSpec, NormStats};
use convlab::gradcheck::run_suite;
use convlab::synth::SynthSpec;
use convlab::trainer::Trainer;
use convlab::Error;

use crate::config::RunConfig;

/// Exit code for runtime failures.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;

/// Largest relative error the gradient suite accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "convlab", version, about = "Very deep CNN acoustic-model lab on synthetic frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic multilingual corpus.
    Gendata(GendataArgs),
    /// Train a multilingual network from a run config.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Print layer shapes and parameter counts.
    Inspect(InspectArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Dump the multi-scale input window of one frame.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    /// Number of languages
    #[arg(long, default_value_t = 3)]
    pub languages: usize,
    /// Output classes per language
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    /// Frames generated per language
    #[arg(long, default_value_t = 20000)]
    pub frames: usize,
    /// Mel bins per frame
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Standard deviation of the additive noise
    #[arg(long)]
    pub noise: Option<f32>,
    /// Largest per-utterance spectral shift in bins
    #[arg(long)]
    pub speaker_shift: Option<f32>,
    /// Master seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output corpus file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config file (key = value lines)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the metrics sink (- for standard output)
    #[arg(long)]
    pub metrics: Option<String>,
    /// Continue from this checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run config file used for training
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint to score (default: last.cvck in the checkpoint directory)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Corpus to score (default: eval_corpus, else the training corpus)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Only score this language id
    #[arg(long)]
    pub language: Option<u16>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Preset name or architecture file
    #[arg(long)]
    pub arch: String,
    /// Input geometry CxTxF
    #[arg(long)]
    pub geom: String,
    /// Width of the output layer
    #[arg(long, default_value_t = 8000)]
    pub out_width: usize,
    /// Divide map counts and hidden widths by this factor
    #[arg(long)]
    pub scale_down: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random configurations per layer type
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Corpus file
    #[arg(long)]
    pub corpus: PathBuf,
    /// Utterance index in the corpus
    #[arg(long, default_value_t = 0)]
    pub utterance: usize,
    /// Centre frame
    #[arg(long)]
    pub frame: usize,
    /// Multi-scale window, e.g. 3S/5
    #[arg(long, default_value = "3S/5")]
    pub multiscale: String,
    /// Append delta and delta-delta channels first
    #[arg(long)]
    pub deltas: bool,
}

/// Failure classified by exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    if let Err(f) = configure_threads() {
        let _ = writeln!(err, "error: {}", f.message);
        return f.code;
    }
    let result = match cli.command {
        Command::Gendata(a) => gendata(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Inspect(a) => inspect(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Features(a) => features(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(v) = std::env::var("CONVLAB_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| usage(format!("CONVLAB_THREADS must be a non-negative integer, got '{v}'")))?;
    if n > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn gendata(a: GendataArgs, out: &mut dyn Write) -> Outcome {
    let mut spec = SynthSpec::new(a.languages, a.classes, a.frames, a.bins, a.seed);
    if let Some(n) = a.noise {
        spec.noise = n;
    }
    if let Some(s) = a.speaker_shift {
        spec.speaker_shift = s;
    }
    let corpus = spec.generate().map_err(|e| usage(e.to_string()))?;
    write_corpus(&corpus, &a.out)?;
    writeln!(
        out,
        "wrote {} utterances, {} frames, {} languages to {}",
        corpus.utterances.len(),
        corpus.total_frames(),
        corpus.languages.len(),
        a.out.display()
    )?;
    Ok(())
}

/// Loads a corpus and applies the configured delta and normalization steps.
/// `stats` reuses saved statistics instead of measuring new ones.
fn prepare(cfg: &RunConfig, path: &Path, stats: Option<&NormStats>) -> std::result::Result<(Corpus, Option<NormStats>), Failure> {
    let raw = read_corpus(path)?;
    cfg.input_geometry(raw.channels, raw.mel_bins)?;
    let mut corpus = if cfg.deltas { add_deltas_corpus(&raw)? } else { raw };
    let stats = match (cfg.normalize, stats) {
        (false, _) => None,
        (true, Some(s)) => {
            s.apply(&mut corpus)?;
            Some(s.clone())
        }
        (true, None) => Some(normalize(&mut corpus)?),
    };
    Ok((corpus, stats))
}

const NORM_FILE: &str = "norm.json";
const LAST_CHECKPOINT: &str = "last.cvck";

fn open_sink<'o>(path: Option<&Path>, out: &'o mut dyn Write) -> std::result::Result<Box<dyn Write + 'o>, Failure> {
    Ok(match path {
        None => Box::new(out),
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
    })
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Outcome {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    match a.metrics.as_deref() {
        None => {}
        Some("-") => cfg.metrics = None,
        Some(p) => cfg.metrics = Some(PathBuf::from(p)),
    }
    let saved_stats = match (&a.resume, &cfg.checkpoint_dir) {
        (Some(_), Some(dir)) if dir.join(NORM_FILE).is_file() => {
            Some(serde_json::from_slice::<NormStats>(&fs::read(dir.join(NORM_FILE))?).map_err(Error::from)?)
        }
        _ => None,
    };
    let (corpus, stats) = prepare(&cfg, &cfg.corpus, saved_stats.as_ref())?;
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir)?;
        if let Some(s) = &stats {
            fs::write(dir.join(NORM_FILE), serde_json::to_vec_pretty(s).map_err(Error::from)?)?;
        }
    }
    let mut trainer = match &a.resume {
        None => Trainer::new(&corpus, &cfg.arch, cfg.train.clone())?,
        Some(p) => Trainer::resume(&corpus, &cfg.arch, cfg.train.clone(), &Checkpoint::load(p)?)?,
    };
    let mut sink = open_sink(cfg.metrics.as_deref(), out)?;
    while trainer.step_count() < trainer.total_steps() {
        let left = trainer.steps_per_epoch() - trainer.step_count() % trainer.steps_per_epoch();
        match trainer.train_for(&mut sink, left) {
            Ok(_) => {}
            Err(Error::Diverged { step, last_good }) => {
                if let (Some(dir), Some(ckpt)) = (&cfg.checkpoint_dir, &last_good) {
                    ckpt.save(dir.join("last_good.cvck"))?;
                }
                sink.flush()?;
                return Err(Error::Diverged { step, last_good }.into());
            }
            Err(e) => return Err(e.into()),
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            let ckpt = trainer.checkpoint();
            let epoch = trainer.step_count() / trainer.steps_per_epoch();
            ckpt.save(dir.join(format!("epoch{epoch}.cvck")))?;
            ckpt.save(dir.join(LAST_CHECKPOINT))?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Outcome {
    let cfg = RunConfig::load(&a.config)?;
    let ckpt_path = match (&a.checkpoint, &cfg.checkpoint_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join(LAST_CHECKPOINT),
        (None, None) => return Err(usage("eval needs --checkpoint or checkpoint_dir in the config")),
    };
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let stats = match &cfg.checkpoint_dir {
        Some(dir) if cfg.normalize => {
            let p = dir.join(NORM_FILE);
            let bytes = fs::read(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_slice::<NormStats>(&bytes).map_err(Error::from)?)
        }
        _ => None,
    };
    if cfg.normalize && stats.is_none() {
        return Err(usage("eval with normalize = true needs the checkpoint_dir holding norm.json"));
    }
    let path = a.corpus.clone().or(cfg.eval_corpus.clone()).unwrap_or(cfg.corpus.clone());
    let (corpus, _) = prepare(&cfg, &path, stats.as_ref())?;
    // rebuilt over the training language table, then restored
    let (train_prepared, _) = prepare(&cfg, &cfg.corpus, stats.as_ref())?;
    let trainer = Trainer::resume(&train_prepared, &cfg.arch, cfg.train.clone(), &ckpt)?;
    let ids: Vec<u16> = match a.language {
        Some(id) => vec![id],
        None => corpus.language_ids(),
    };
    for id in ids {
        let r = trainer.evaluate(&corpus, id, None)?;
        writeln!(
            out,
            "language {id}: accuracy {:.4} cross_entropy {:.4} frames {}",
            r.accuracy, r.cross_entropy, r.frames
        )?;
    }
    Ok(())
}

fn load_arch(name: &str) -> std::result::Result<ArchConfig, Failure> {
    let p = Path::new(name);
    if p.is_file() {
        Ok(ArchConfig::parse_text(&fs::read_to_string(p)?)?)
    } else {
        ArchConfig::parse(name).map_err(|e| usage(e.to_string()))
    }
}

fn inspect(a: InspectArgs, out: &mut dyn Write) -> Outcome {
    let mut arch = load_arch(&a.arch)?;
    if let Some(d) = a.scale_down {
        arch = arch.scaled_down(d.max(1));
    }
    let geom: InputGeometry = a.geom.parse().map_err(|e: Error| usage(e.to_string()))?;
    let arch = arch.with_input_channels(geom.channels);
    let shapes = infer_shapes(&arch, geom, Some(a.out_width))?;
    let counts = count_params(&arch, geom, a.out_width)?;
    writeln!(out, "{} on {geom}", arch.name)?;
    for (i, (layer, shape)) in arch.layers.iter().zip(&shapes.layers).enumerate() {
        let params = counts.per_layer.iter().find(|c| c.index == i).map_or(0, |c| c.total());
        writeln!(out, "{i:>3}  {:<24} {:>14}  params {params}", layer.to_string(), shape.to_string())?;
    }
    writeln!(
        out,
        "weight layers: {} conv + {} fc; untied fc: {}",
        arch.conv_count(),
        arch.fc_count(),
        arch.untied_fc
    )?;
    writeln!(out, "flatten width: {}", shapes.flatten_width)?;
    writeln!(out, "conv params: {}", counts.conv_total)?;
    writeln!(out, "fc params: {}", counts.fc_total)?;
    writeln!(out, "total params: {}", counts.total())?;
    Ok(())
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Outcome {
    if a.cases == 0 {
        return Err(usage("--cases must be >= 1"));
    }
    let reports = run_suite(a.cases, a.seed)?;
    let mut worst = 0.0f64;
    for r in &reports {
        let verdict = if r.worst <= GRADCHECK_TOLERANCE { "ok" } else { "FAIL" };
        writeln!(out, "{:<14} cases {:>4}  worst relative error {:.3e}  {verdict}", r.layer, r.cases, r.worst)?;
        worst = worst.max(r.worst);
    }
    if worst > GRADCHECK_TOLERANCE {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: format!("gradient check exceeded {GRADCHECK_TOLERANCE:e}: {worst:.3e}"),
        });
    }
    Ok(())
}

fn features(a: FeaturesArgs, out: &mut dyn Write) -> Outcome {
    let spec: MultiScaleSpec = a.multiscale.parse().map_err(|e: Error| usage(e.to_string()))?;
    let mut corpus = read_corpus(&a.corpus)?;
    if a.deltas {
        corpus = add_deltas_corpus(&corpus)?;
    }
    let utt = corpus.utterances.get(a.utterance).ok_or_else(|| Failure {
        code: EXIT_FAILURE,
        message: format!("utterance {} out of range ({} utterances)", a.utterance, corpus.utterances.len()),
    })?;
    let x = build_multiscale(utt, a.frame, &spec)?;
    let (c, t, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    writeln!(out, "utterance {} frame {} target {} window {c}x{t}x{f}", a.utterance, a.frame, utt.targets()[a.frame])?;
    for (m, map) in x.data().chunks(t * f).enumerate() {
        writeln!(out, "map {m}")?;
        for row in map.chunks(f) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            writeln!(out, "  {}", cells.join(" "))?;
        }
    }
    Ok(())
}
