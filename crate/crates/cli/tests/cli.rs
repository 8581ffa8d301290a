use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;
use convlab_cli::Cli;

fn convlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn inspect_wdx_reports_flatten_and_total() {
    let o = convlab(&["inspect", "--arch", "WDX", "--geom", "3x17x40", "--out-width", "8000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let flatten = text.lines().find(|l| l.contains(" flatten ")).unwrap();
    assert!(flatten.trim_end().contains("4096"), "{flatten}");
    assert!(text.contains("total params: 40810624"), "{text}");
}

#[test]
fn inspect_infeasible_geometry_exits_one() {
    let o = convlab(&["inspect", "--arch", "VC", "--geom", "3x9x40"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("infeasible geometry"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(convlab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(convlab(&["inspect", "--arch", "VB", "--geom", "3x17x40", "--bogus"]).status.code(), Some(2));
    assert_eq!(convlab(&["inspect", "--arch", "NOPE", "--geom", "3x17x40"]).status.code(), Some(2));
    assert_eq!(convlab(&["inspect", "--arch", "VB", "--geom", "3by17"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_convlab"))
        .env("CONVLAB_THREADS", "many")
        .args(["gradcheck", "--cases", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_with_explicit_thread_cap() {
    let o = Command::new(env!("CARGO_BIN_EXE_convlab"))
        .env("CONVLAB_THREADS", "1")
        .args(["gradcheck", "--cases", "5", "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("ok")).count(), 5);
}

/// Every flag clap knows about is listed in `--help`, carries help text,
/// and `--help` lists nothing clap does not know about.
#[test]
fn help_lists_exactly_the_defined_flags() {
    let root = Cli::command();
    for sub in root.get_subcommands() {
        let name = sub.get_name();
        let defined: BTreeSet<String> = sub
            .get_arguments()
            .filter_map(|a| {
                assert!(a.get_help().is_some(), "{name}: flag {:?} has no help text", a.get_id());
                a.get_long().map(|l| format!("--{l}"))
            })
            .chain(["--help".to_string()])
            .collect();
        let help = stdout(&convlab(&[name, "--help"]));
        let listed: BTreeSet<String> = help
            .split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']' || c == '<')
            .filter(|w| w.starts_with("--") && w.len() > 2)
            .map(|w| w.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '-').to_string())
            .collect();
        assert_eq!(listed, defined, "{name} --help");
    }
}

fn write_config(dir: &Path, name: &str, extra: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(
        &p,
        format!(
            "corpus = corpus.cvlb\narch = VB\nscale_down = 16\nmultiscale = 2S/5\nbatch = 8\nepochs = 2\n\
             steps_per_epoch = 6\nseed = 3\nmetrics_every = 2\n{extra}"
        ),
    )
    .unwrap();
    p
}

#[test]
fn gendata_train_eval_features_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.cvlb");
    let o = convlab(&["gendata", "--languages", "2", "--classes", "5", "--frames", "600", "--bins", "40", "--seed", "9", "--out", corpus.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut metrics = Vec::new();
    for run in ["a", "b"] {
        let cfg = write_config(dir.path(), &format!("{run}.cfg"), &format!("metrics = {run}.jsonl\ncheckpoint_dir = ck_{run}\n"));
        let o = convlab(&["train", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        metrics.push(fs::read(dir.path().join(format!("{run}.jsonl"))).unwrap());
        assert!(dir.path().join(format!("ck_{run}/epoch1.cvck")).is_file());
    }
    assert!(!metrics[0].is_empty());
    assert_eq!(metrics[0], metrics[1]);

    let cfg = dir.path().join("a.cfg");
    let o = convlab(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("accuracy")).count(), 2);

    // a different seed changes the metrics stream
    let o = convlab(&["train", "--config", cfg.to_str().unwrap(), "--seed", "4", "--metrics", "-"]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(o.stdout, metrics[0]);

    let o = convlab(&["features", "--corpus", corpus.to_str().unwrap(), "--frame", "3", "--multiscale", "3S/2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("window 3x5x40"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("map ")).count(), 3);
}

#[test]
fn config_problems_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "x.cfg", "");
    let o = convlab(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("does not exist"));
    fs::write(dir.path().join("corpus.cvlb"), b"junk").unwrap();
    let cfg = write_config(dir.path(), "y.cfg", "warp = 9\n");
    assert_eq!(convlab(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    // a corrupt corpus is a runtime failure, not a usage error
    let cfg = write_config(dir.path(), "z.cfg", "");
    assert_eq!(convlab(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}
