use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kdar::synth::{generate, write_raw, SynthConfig};
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(epochs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw");
        let synth = SynthConfig {
            users: 40,
            items: 50,
            clusters: 3,
            min_interactions: 6,
            max_interactions: 12,
            ..SynthConfig::default()
        };
        write_raw(&raw, &generate(&synth).raw).unwrap();
        let ws = Self { dir };
        ws.write_config("run.toml", epochs, "");
        ws
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write_config(&self, name: &str, epochs: usize, extra_model: &str) -> PathBuf {
        let p = |s| self.path(s).display().to_string();
        let text = format!(
            "seed = 3\nout = \"{}\"\n[data]\ninteractions = \"{}\"\nkg = \"{}\"\nprocessed = \"{}\"\n\
             [model]\ndim = 8\nlayers = 2\n{extra_model}\n[train]\nepochs = {epochs}\nbatch_size = 64\n\
             learning_rate = 0.01\neval_every = 2\n",
            p("run"),
            p("raw/interactions.txt"),
            p("raw/kg.txt"),
            p("processed"),
        );
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn kdar(&self, args: &[&str]) -> Output {
        let cfg = self.path("run.toml");
        self.kdar_with(&cfg, args)
    }

    fn kdar_with(&self, cfg: &Path, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_kdar"));
        cmd.arg(args[0]).arg("--config").arg(cfg).args(&args[1..]);
        cmd.env("RUST_LOG", "warn").output().unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn prepare_refuses_existing_output_and_force_is_deterministic() {
    let ws = Workspace::new(0);
    assert_ok(&ws.kdar(&["prepare"]));
    let first = fs::read(ws.path("processed/train.txt")).unwrap();
    let again = ws.kdar(&["prepare"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert_ok(&ws.kdar(&["prepare", "--force"]));
    assert_eq!(fs::read(ws.path("processed/train.txt")).unwrap(), first);
}

#[test]
fn train_then_eval_reproduces_the_report() {
    let ws = Workspace::new(0);
    assert_ok(&ws.kdar(&["prepare"]));
    assert_ok(&ws.kdar(&["train"]));
    let history = fs::read_to_string(ws.path("run/history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.starts_with("epoch\trecall@20"));
    for f in ["checkpoint.kdar", "config.toml", "report.txt"] {
        assert!(ws.path("run").join(f).exists(), "{f}");
    }
    assert_eq!(ws.kdar(&["train"]).status.code(), Some(1));

    let report = fs::read_to_string(ws.path("run/report.txt")).unwrap();
    let eval = ws.kdar(&["eval"]);
    assert_ok(&eval);
    assert_eq!(stdout(&eval), report);

    let custom = ws.kdar(&["eval", "--k", "5,100"]);
    assert_ok(&custom);
    let out = stdout(&custom);
    let keys: Vec<&str> = out.lines().filter_map(|l| l.split('\t').next()).collect();
    assert_eq!(&keys[..4], &["recall@5", "recall@100", "ndcg@5", "ndcg@100"]);

    let groups = ws.kdar(&["eval", "--groups", "long-tail"]);
    assert_ok(&groups);
    assert!(stdout(&groups).lines().count() > report.lines().count());
    assert_eq!(ws.kdar(&["eval", "--groups", "sideways"]).status.code(), Some(1));

    let bad = ws.path("bad.kdar");
    fs::write(&bad, b"KDAR\x01\x00").unwrap();
    let o = ws.kdar(&["eval", "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_configuration_exits_with_usage_code() {
    let ws = Workspace::new(0);
    let cfg = ws.write_config("bad.toml", 0, "lambda2 = -1.0\ntau = 0.0");
    let o = ws.kdar_with(&cfg, &["train"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lambda2") && err.contains("tau"), "{err}");

    let unknown = ws.path("unknown.toml");
    fs::write(&unknown, "[model]\nwidth = 3\n").unwrap();
    assert_eq!(ws.kdar_with(&unknown, &["train"]).status.code(), Some(1));
    assert_eq!(ws.kdar(&["launch"]).status.code(), Some(1));
}

#[test]
fn missing_data_exits_with_data_code() {
    let ws = Workspace::new(0);
    assert_eq!(ws.kdar(&["train"]).status.code(), Some(2));
    fs::remove_file(ws.path("raw/interactions.txt")).unwrap();
    assert_eq!(ws.kdar(&["prepare"]).status.code(), Some(2));
}

#[test]
fn ablate_and_sweep_write_summaries() {
    let ws = Workspace::new(2);
    assert_ok(&ws.kdar(&["prepare"]));
    let o = ws.kdar(&["ablate"]);
    assert_ok(&o);
    let table = fs::read_to_string(ws.path("run/ablation.tsv")).unwrap();
    let variants: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(variants, ["full", "w/o Enhancement", "w/o ATTN", "w/o CL", "w/o CG"]);
    for sub in ["full", "no_enhancement", "no_attention", "no_cl", "no_cg"] {
        assert!(ws.path("run").join(sub).join("history.tsv").exists(), "{sub}");
    }

    let o = ws.kdar(&["sweep", "--param", "tau", "--values", "0.5,1.0,0.5", "--force"]);
    assert_ok(&o);
    let sweep = fs::read_to_string(ws.path("run/sweep_tau.tsv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert_eq!(
        ws.kdar(&["sweep", "--param", "dim", "--values", "4", "--force"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["lastfm.toml", "synthetic.toml"] {
        let cfg = kdar::config::RunConfig::load(root.join(name)).unwrap();
        cfg.validate().unwrap();
    }
    let lastfm = kdar::config::RunConfig::load(root.join("lastfm.toml")).unwrap();
    assert_eq!(lastfm.hyperparameters(), kdar::model::Hyperparameters::default());
}
