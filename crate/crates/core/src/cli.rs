//! The `kdar` command line: `prepare`, `train`, `eval`, `ablate`, `sweep`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{stage_seed, ConfigError, RunConfig, Stage};
use crate::eval::{self, group_report, GroupMode, RankingReport};
use crate::graph::{build_collab_adjacency, build_kg_adjacency};
use crate::ingest::{self, load_interactions, load_kg, load_processed, write_processed, IngestError};
use crate::model::{AblationFlags, KdarModel, KdarParams, ModelError, ModelShape};
use crate::numerics::checkpoint::{self, CheckpointError};
use crate::numerics::ParameterStore;
use crate::train::{fit, history_tsv, FitResult, TrainError};

pub const CHECKPOINT_FILE: &str = "checkpoint.kdar";
pub const HISTORY_FILE: &str = "history.tsv";
pub const REPORT_FILE: &str = "report.txt";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::OutputExists(_) => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(format!("checkpoint: {e}"))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Numerical { .. } => CliError::Numerical(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(n) => CliError::Numerical(n.to_string()),
            ModelError::InvalidHyperparameter { .. } => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::NoTestUsers => CliError::Data(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "kdar",
    version,
    about = "Knowledge-aware recommendation: prepare data, train, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (for `prepare`, the processed dataset directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, remap and split raw files into a processed dataset.
    Prepare(CommonArgs),
    /// Train, keep the best checkpoint, write history and report.
    Train(CommonArgs),
    /// Evaluate a checkpoint on the processed dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to load; defaults to `<out>/checkpoint.kdar`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Add a user-group breakdown: cold-start or long-tail.
        #[arg(long)]
        groups: Option<String>,
        /// Comma-separated cutoffs, e.g. `5,20,100`.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Train the full model and the four ablated variants.
    Ablate(CommonArgs),
    /// Train once per value of `layers` or `tau`.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// `layers` (or `L`) or `tau`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command and returns its stdout text.
pub fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Prepare(common) => {
            let mut cfg = load_config(&common)?;
            if let Some(out) = &common.out {
                cfg.data.processed = out.clone();
            }
            cmd_prepare(&cfg, common.force)
        }
        Command::Train(common) => {
            let cfg = load_config(&common)?;
            let outcome = cmd_train(&cfg, common.force)?;
            Ok(format!(
                "best epoch {}\n{}",
                outcome.fit.best_epoch,
                outcome.report.to_table()
            ))
        }
        Command::Eval {
            common,
            checkpoint,
            groups,
            k,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(k) = k {
                cfg.eval.ks = k;
                cfg.validate()?;
            }
            let mode = groups.map(|g| g.parse::<GroupMode>()).transpose()?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
            let (report, group) = cmd_eval(&cfg, &ckpt, mode)?;
            let mut s = report.to_kv();
            if let Some(g) = group {
                s.push_str(&g.to_kv());
            }
            Ok(s)
        }
        Command::Ablate(common) => {
            let cfg = load_config(&common)?;
            cmd_ablate(&cfg, common.force)
        }
        Command::Sweep { common, param, values } => {
            let cfg = load_config(&common)?;
            cmd_sweep(&cfg, &param, &values, common.force)
        }
    }
}

/// Creates `dir`, refusing a non-empty one unless `force`.
pub fn ensure_output_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn cmd_prepare(cfg: &RunConfig, force: bool) -> Result<String, CliError> {
    let format = cfg
        .interaction_format()
        .ok_or_else(|| CliError::Usage(format!("unknown data.format `{}`", cfg.data.format)))?;
    let mut raw = load_interactions(&cfg.data.interactions, format)?;
    if cfg.data.kg.as_os_str().is_empty() {
        log::warn!("no KG file configured; items get no attributes");
    } else {
        raw = raw.with_kg(load_kg(&cfg.data.kg)?);
    }
    let prepared = ingest::prepare(&raw, &cfg.prepare_options())?;
    write_processed(&cfg.data.processed, &prepared, force)?;
    Ok(format!("{}{}", prepared.report.to_text(), prepared.stats.to_text()))
}

/// Everything needed to score or train on the processed dataset.
pub struct Loaded {
    pub table: ingest::InteractionTable,
    pub model: KdarModel<f32>,
    pub store: ParameterStore<f32>,
}

/// Loads the processed dataset and builds a freshly initialized model.
pub fn load_model(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let data = load_processed(&cfg.data.processed)?;
    let cg = build_collab_adjacency(&data.table);
    let kg = build_kg_adjacency(&data.kg, cfg.inverse_policy());
    let hyper = cfg.hyperparameters();
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, Stage::Init));
    let (store, params) = KdarParams::init::<f32, _>(&ModelShape::from_graphs(&cg, &kg), hyper.dim, &mut rng);
    let model = KdarModel::new(&cg, &kg, hyper, cfg.flags(), params)?;
    Ok(Loaded {
        table: data.table,
        model,
        store,
    })
}

pub struct TrainOutcome {
    pub fit: FitResult,
    /// Evaluation of the best parameters.
    pub report: RankingReport,
}

/// Fits the model and writes `config.toml`, `checkpoint.kdar`,
/// `history.tsv` and `report.txt` into `cfg.out`.
pub fn cmd_train(cfg: &RunConfig, force: bool) -> Result<TrainOutcome, CliError> {
    ensure_output_dir(&cfg.out, force)?;
    let Loaded {
        table,
        model,
        mut store,
    } = load_model(cfg)?;
    let write = |name: &str, text: &str| {
        let path = cfg.out.join(name);
        fs::write(&path, text).map_err(io_err(&path))
    };
    write(CONFIG_FILE, &cfg.to_toml())?;
    let mut tc = cfg.train_config();
    tc.checkpoint = Some(cfg.out.join(CHECKPOINT_FILE));
    let fit = fit(&tc, &model, &mut store, &table)?;
    write(HISTORY_FILE, &history_tsv(&fit.history))?;
    let report = eval::evaluate(
        &model
            .embeddings(&fit.best)
            .map_err(|e| CliError::Numerical(e.to_string()))?,
        &table,
        &cfg.eval.ks,
    )?;
    write(REPORT_FILE, &report.to_kv())?;
    Ok(TrainOutcome { fit, report })
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    groups: Option<GroupMode>,
) -> Result<(RankingReport, Option<eval::GroupReport>), CliError> {
    let Loaded {
        table,
        model,
        mut store,
    } = load_model(cfg)?;
    checkpoint::load(checkpoint_path, &mut store, None)?;
    let emb = model
        .embeddings(&store)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let report = eval::evaluate(&emb, &table, &cfg.eval.ks)?;
    let group = groups.map(|m| group_report(&report, m));
    Ok((report, group))
}

fn slug(name: &str) -> String {
    match name.strip_prefix("w/o ") {
        None => name.to_string(),
        Some("ATTN") => "no_attention".into(),
        Some(rest) => format!("no_{}", rest.to_lowercase()),
    }
}

const SUMMARY_K: usize = 20;

fn summary_row(label: &str, r: &RankingReport) -> String {
    format!(
        "{label}\t{:.6}\t{:.6}\t{:.6}\n",
        r.auc,
        r.recall_at(SUMMARY_K).unwrap_or(f64::NAN),
        r.ndcg_at(SUMMARY_K).unwrap_or(f64::NAN)
    )
}

/// Five runs sharing seed and data; writes `ablation.tsv`.
pub fn cmd_ablate(cfg: &RunConfig, force: bool) -> Result<String, CliError> {
    ensure_output_dir(&cfg.out, force)?;
    let mut cfg = cfg.clone();
    if !cfg.eval.ks.contains(&SUMMARY_K) {
        cfg.eval.ks.push(SUMMARY_K);
    }
    let mut table = String::from("variant\tauc\trecall@20\tndcg@20\n");
    for (name, flags) in AblationFlags::VARIANTS {
        let mut run = cfg.clone();
        run.set_flags(flags);
        run.out = cfg.out.join(slug(name));
        log::info!("ablation variant {name}");
        let outcome = cmd_train(&run, true)?;
        table.push_str(&summary_row(name, &outcome.report));
    }
    let path = cfg.out.join("ablation.tsv");
    fs::write(&path, &table).map_err(io_err(&path))?;
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepParam {
    Layers,
    Tau,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "L" | "layers" => Ok(SweepParam::Layers),
            "tau" => Ok(SweepParam::Tau),
            other => Err(CliError::Usage(format!(
                "unsupported sweep parameter `{other}` (expected layers or tau)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            SweepParam::Layers => "layers",
            SweepParam::Tau => "tau",
        }
    }
}

/// Parses sweep values, dropping repeats (with a warning) and keeping the
/// first occurrence order.
pub fn parse_sweep_values(param: SweepParam, raw: &[String]) -> Result<Vec<f64>, CliError> {
    let mut out: Vec<f64> = Vec::new();
    for s in raw {
        let bad = || CliError::Usage(format!("invalid {} value `{s}`", param.name()));
        let v = match param {
            SweepParam::Layers => s.trim().parse::<usize>().map_err(|_| bad())? as f64,
            SweepParam::Tau => s.trim().parse::<f64>().map_err(|_| bad())?,
        };
        if out.contains(&v) {
            log::warn!("duplicate {} value {s} ignored", param.name());
        } else {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    Ok(out)
}

/// One run per value; writes `sweep_<param>.tsv` with every cutoff.
pub fn cmd_sweep(cfg: &RunConfig, param: &str, values: &[String], force: bool) -> Result<String, CliError> {
    let param = SweepParam::parse(param)?;
    let values = parse_sweep_values(param, values)?;
    ensure_output_dir(&cfg.out, force)?;

    let mut header = param.name().to_string();
    for k in &cfg.eval.ks {
        let _ = write!(header, "\trecall@{k}");
    }
    for k in &cfg.eval.ks {
        let _ = write!(header, "\tndcg@{k}");
    }
    header.push_str("\tauc\n");
    let mut tsv = header;
    for v in values {
        let mut run = cfg.clone();
        match param {
            SweepParam::Layers => run.model.layers = v as usize,
            SweepParam::Tau => run.model.tau = v,
        }
        run.validate()?;
        run.out = cfg.out.join(format!("{}={v}", param.name()));
        log::info!("sweep {} = {v}", param.name());
        let r = cmd_train(&run, true)?.report;
        let _ = write!(tsv, "{v}");
        for x in r.recall.iter().chain(&r.ndcg) {
            let _ = write!(tsv, "\t{x:.6}");
        }
        let _ = writeln!(tsv, "\t{:.6}", r.auc);
    }
    let path = cfg.out.join(format!("sweep_{}.tsv", param.name()));
    fs::write(&path, &tsv).map_err(io_err(&path))?;
    Ok(tsv)
}
