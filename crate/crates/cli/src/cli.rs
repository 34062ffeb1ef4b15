//! Command-line entry point. Exit codes: 0 success, 1 usage error,
//! 2 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context};
use cate_core::calibration::{fit_temperature, CalibrationParams};
use cate_core::embeddings::{ContextualSentenceVectors, EmbeddingMode, EmbeddingTable};
use cate_core::evaluation::evaluate_corpus;
use cate_core::inference::{parse_with_vectors, tree_to_json, ParseConfig};
use cate_core::rnn::Checkpoint;
use cate_core::training::{train, TrainingConfig};
use cate_core::treebank::{generate_synthetic_corpus, parse_treebank_file, serialize_treebank, BranchingMode, Split};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::render::ascii_tree;
use crate::service::{parse_sentence, serve, LoadedModel, ModelRegistry, ParseRequest};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cate",
    version,
    about = "Causality tree extraction with a recursive neural network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic gold treebank.
    Generate(GenerateArgs),
    /// Train a model on a treebank and write a checkpoint.
    Train(TrainArgs),
    /// Fit the softmax temperature on the validation split.
    Calibrate(CalibrateArgs),
    /// Parse one sentence.
    Parse(ParseArgs),
    /// Score a model against a treebank split.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Branching {
    Left,
    Right,
}

impl From<Branching> for BranchingMode {
    fn from(b: Branching) -> Self {
        match b {
            Branching::Left => BranchingMode::Left,
            Branching::Right => BranchingMode::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PretrainedMode {
    Frozen,
    FineTuned,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TreeFormat {
    Ascii,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of sentences.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Binarization of flat segments.
    #[arg(long, value_enum, default_value = "left")]
    branching: Branching,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    treebank: PathBuf,
    /// Checkpoint path to write.
    #[arg(long)]
    out: PathBuf,
    /// Binarize flat treebank nodes in this mode; also recorded in the model.
    #[arg(long, value_enum, default_value = "left")]
    branching: Branching,
    #[arg(long, default_value_t = 25)]
    dim: usize,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long)]
    no_shuffle: bool,
    /// Weight of the penalty on non-gold merges (0 disables it).
    #[arg(long, default_value_t = 1.0)]
    negative_merge_weight: f64,
    /// Word vectors in text format (`word v1 v2 ...`); the dimension is
    /// taken from the file.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "frozen", requires = "embeddings")]
    embedding_mode: PretrainedMode,
    /// Read at most this many vectors.
    #[arg(long, requires = "embeddings")]
    embedding_limit: Option<usize>,
    /// Name of the embedding variant (defaults to "random" or "pretrained").
    #[arg(long)]
    variant: Option<String>,
    /// Also write the per-epoch report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    treebank: PathBuf,
    /// Defaults to overwriting the model.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    normalize: Option<Branching>,
}

#[derive(Debug, Args)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required_unless_present = "vectors", conflicts_with = "vectors")]
    sentence: Option<String>,
    /// Tokens with precomputed leaf vectors, as JSON
    /// `{"tokens": [...], "vectors": [[...], ...]}`.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Score merges with the checkpoint's fitted temperature.
    #[arg(long)]
    temperature: bool,
    #[arg(long, value_enum, default_value = "ascii")]
    format: TreeFormat,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    treebank: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    #[arg(long)]
    temperature: bool,
    #[arg(long, value_enum)]
    normalize: Option<Branching>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Directory of checkpoint files (*.json).
    #[arg(long, env = "CATE_MODEL_DIR")]
    model_dir: PathBuf,
    #[arg(long, env = "CATE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "CATE_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
}

/// Runs the CLI with the given arguments (including the program name),
/// writing results to `out`, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::Generate(a) => generate(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Calibrate(a) => calibrate(a, out),
        Command::Parse(a) => parse_cmd(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let tb = generate_synthetic_corpus(a.seed, a.n, a.branching.into());
    std::fs::write(&a.out, serialize_treebank(&tb)).with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(
        out,
        "wrote {} trees ({} train, {} validation, {} test) to {}",
        tb.len(),
        tb.split_len(Split::Train),
        tb.split_len(Split::Validation),
        tb.split_len(Split::Test),
        a.out.display()
    )?;
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let branching: BranchingMode = a.branching.into();
    let tb = parse_treebank_file(&a.treebank, Some(branching))
        .with_context(|| format!("reading {}", a.treebank.display()))?;
    let table = match &a.embeddings {
        Some(path) => {
            let mode = match a.embedding_mode {
                PretrainedMode::Frozen => EmbeddingMode::PretrainedFrozen,
                PretrainedMode::FineTuned => EmbeddingMode::PretrainedFineTuned,
            };
            EmbeddingTable::load_pretrained(path, a.embedding_limit, mode)
                .with_context(|| format!("reading {}", path.display()))?
        }
        None => EmbeddingTable::init_random(a.dim, a.seed)?,
    };
    let config = TrainingConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        l2: a.l2,
        seed: a.seed,
        shuffle: !a.no_shuffle,
        patience: a.patience,
        dim: table.dim(),
        negative_merge_weight: a.negative_merge_weight,
        branching,
    };
    let (mut params, report) = train(&tb, &config, table)?;
    if let Some(v) = a.variant {
        params.embedding_variant = v;
    }
    Checkpoint::new(params).save(&a.out)?;
    let best = report.best_epoch;
    writeln!(
        out,
        "trained {} epochs in {:.1}s; best epoch {} (validation loss {:.4}, accuracy {:.4}{})",
        report.epochs_run(),
        report.wall_time.as_secs_f64(),
        best + 1,
        report.validation_loss[best],
        report.validation_accuracy[best],
        if report.validated_on_train {
            ", measured on training split"
        } else {
            ""
        }
    )?;
    writeln!(out, "wrote {}", a.out.display())?;
    if let Some(path) = a.report {
        let json = json!({
            "train_loss": report.train_loss,
            "validation_loss": report.validation_loss,
            "validation_accuracy": report.validation_accuracy,
            "best_epoch": report.best_epoch,
            "validated_on_train": report.validated_on_train,
            "wall_time_s": report.wall_time.as_secs_f64(),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut ckpt = Checkpoint::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let tb = parse_treebank_file(&a.treebank, a.normalize.map(Into::into))
        .with_context(|| format!("reading {}", a.treebank.display()))?;
    let validation = tb.split(Split::Validation);
    if validation.is_empty() {
        bail!("{} has no validation trees", a.treebank.display());
    }
    let fit = fit_temperature(&ckpt.params, &validation)?;
    ckpt.temperature = Some(fit.temperature);
    let target = a.out.unwrap_or(a.model);
    ckpt.save(&target)?;
    writeln!(
        out,
        "T = {:.4} on {} nodes; mean NLL {:.4} -> {:.4}; wrote {}",
        fit.temperature,
        fit.fitted_on,
        fit.nll_before,
        fit.nll_after,
        target.display()
    )?;
    Ok(())
}

fn parse_cmd(a: ParseArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let model = LoadedModel::from_checkpoint(ckpt, a.model.clone())?;
    let (tree, cum_logprob) = match (&a.sentence, &a.vectors) {
        (Some(sentence), _) => {
            let request = ParseRequest {
                beam_width: a.beam,
                use_temperature: a.temperature,
                ..ParseRequest::new(sentence.clone())
            };
            let response = parse_sentence(&model, &request)?;
            (response.tree, response.cum_logprob)
        }
        (None, Some(path)) => {
            let ctx = ContextualSentenceVectors::load(path).with_context(|| format!("reading {}", path.display()))?;
            model.params.embedding.check_contextual(&ctx)?;
            let config = ParseConfig {
                beam_width: a.beam,
                use_temperature: a.temperature,
                ..ParseConfig::default()
            };
            let result = parse_with_vectors(&model.params, &model.calibration, ctx.tokens(), ctx.vectors(), &config)?;
            (tree_to_json(&result.root), result.cum_logprob)
        }
        (None, None) => bail!("either --sentence or --vectors is required"),
    };
    match a.format {
        TreeFormat::Ascii => {
            write!(out, "{}", ascii_tree(&tree))?;
            writeln!(out, "cum_logprob {cum_logprob:.6}")?;
        }
        TreeFormat::Json => {
            let body = json!({
                "tree": tree,
                "cum_logprob": cum_logprob,
                "model_version": model.params.version,
            });
            writeln!(out, "{}", serde_json::to_string(&body)?)?;
        }
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let calibration = CalibrationParams::with_temperature(ckpt.temperature_or_default())?;
    let tb = parse_treebank_file(&a.treebank, a.normalize.map(Into::into))
        .with_context(|| format!("reading {}", a.treebank.display()))?;
    let trees = tb.split(a.split.into());
    let config = ParseConfig {
        beam_width: a.beam,
        use_temperature: a.temperature,
        ..ParseConfig::default()
    };
    let report = evaluate_corpus(&ckpt.params, &calibration, &trees, &config)?;
    match a.format {
        ReportFormat::Table => write!(out, "{}", report.to_table())?,
        ReportFormat::Json => writeln!(out, "{}", report.to_json())?,
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> anyhow::Result<()> {
    let registry = ModelRegistry::load_dir(&a.model_dir)?;
    for info in registry.infos() {
        eprintln!("loaded model {} (dim {}, T = {})", info.id, info.dim, info.temperature);
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(registry, SocketAddr::new(a.host, a.port)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let code = run(std::iter::once("cate").chain(args.iter().copied()), &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["parse", "--model", "m.json"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["generate", "--n", "many", "--out", "x"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn missing_files_exit_two() {
        let (code, _) = run_args(&["parse", "--model", "/nonexistent/m.json", "--sentence", "a b"]);
        assert_eq!(code, EXIT_RUNTIME);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
