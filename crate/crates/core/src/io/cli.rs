//! Command-line pipeline: synth → pool → cca-fit/cca-eval and
//! lstm-train/lstm-eval → report.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on any data error.
//! Failures print one line `error[<kind>]: <message>` to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    generate_synthetic, load_cca, load_embeddings, load_feature_store, load_lstm, load_manifest,
    save_cca, save_embeddings, save_feature_store, save_lstm, save_manifest, FeatureStore,
    Manifest, PoolConfig, Split, SynthConfig,
};
use crate::cca::{CcaConfig, DEFAULT_POWER, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::lstm::{loss_log_jsonl, AdamConfig, EmbeddedLstm, TrainConfig};
use crate::pooling::{EmbeddingTable, PoolMode};
use crate::selection::{evaluate, fit_on_instances, Category, EvalReport, MadlibInstance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FEATURES_FILE: &str = "features.txt";
pub const WORDS_FILE: &str = "words.txt";

#[derive(Debug, Parser)]
#[command(
    name = "mbpool",
    version,
    about = "Fill-in-the-blank answering with pooled proposal features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Pool proposal features into one vector per image.
    Pool(PoolArgs),
    /// Fit one nCCA model per category.
    CcaFit(CcaFitArgs),
    /// Evaluate nCCA models.
    CcaEval(EvalArgs),
    /// Train one embedded LSTM per category.
    LstmTrain(LstmTrainArgs),
    /// Evaluate embedded LSTM checkpoints.
    LstmEval(EvalArgs),
    /// Render an accuracy report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    concepts: usize,
    #[arg(long, default_value_t = 400)]
    images: usize,
    #[arg(long, default_value_t = 64)]
    vocab: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    #[arg(long, default_value_t = 300)]
    word_dim: usize,
    #[arg(long, default_value_t = 120)]
    proposals: usize,
    #[arg(long, default_value_t = 1)]
    categories: usize,
    /// Output directory for manifest.jsonl, features.txt and words.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    nms: f64,
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    #[arg(long, default_value_t = PoolMode::Mean)]
    mode: PoolMode,
    #[arg(long)]
    l2_normalize: bool,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Pooled feature store.
    #[arg(long)]
    features: PathBuf,
    /// Word vectors in word2vec text format.
    #[arg(long)]
    words: PathBuf,
}

#[derive(Debug, Args)]
struct CcaFitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model directory, one `<category>.ncca` per category.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    #[arg(long, default_value_t = DEFAULT_POWER)]
    power: f64,
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct LstmTrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint directory, one `<category>.elstm` per category.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    dh: usize,
    #[arg(long, default_value_t = 128)]
    dt: usize,
    #[arg(long, default_value_t = 128)]
    dv: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    models: PathBuf,
    /// JSONL report destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI with `args` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return EXIT_OK;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            let _ = writeln!(stderr, "error[usage]: {first}");
            let _ = write!(stderr, "{rendered}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error[{}]: {msg}", e.kind());
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Pool(a) => pool(a),
        Command::CcaFit(a) => cca_fit(a),
        Command::CcaEval(a) => {
            let report = cca_eval(&a)?;
            finish_eval(&report, &a.out, stdout)
        }
        Command::LstmTrain(a) => lstm_train(a),
        Command::LstmEval(a) => {
            let report = lstm_eval(&a)?;
            finish_eval(&report, &a.out, stdout)
        }
        Command::Report(a) => report(a, stdout),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        concepts: a.concepts,
        images: a.images,
        vocab_size: a.vocab,
        noise: a.noise,
        seed: a.seed,
        feature_dim: a.feature_dim,
        word_dim: a.word_dim,
        proposals: a.proposals,
        categories: a.categories,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&config)?;
    fs::create_dir_all(&a.out)?;
    save_manifest(&data.manifest, a.out.join(MANIFEST_FILE))?;
    save_feature_store(&data.store, a.out.join(FEATURES_FILE))?;
    save_embeddings(&data.table, a.out.join(WORDS_FILE))
}

fn pool(a: PoolArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.nms) {
        return Err(Error::InvalidInput(format!(
            "--nms must lie in [0, 1], got {}",
            a.nms
        )));
    }
    let store = load_feature_store(&a.features)?;
    let config = PoolConfig {
        nms: a.nms,
        top_k: a.top_k,
        mode: a.mode,
        normalize: a.l2_normalize,
    };
    save_feature_store(&store.pool(&config)?, &a.out)
}

struct Loaded {
    manifest: Manifest,
    store: FeatureStore,
    table: EmbeddingTable,
}

impl Loaded {
    fn read(d: &DataArgs) -> Result<Self> {
        let manifest = load_manifest(&d.manifest)?;
        let store = load_feature_store(&d.features)?;
        if !store.is_pooled() {
            return Err(Error::Data(format!(
                "{} still has proposals; run `pool` first",
                d.features.display()
            )));
        }
        let table = load_embeddings(&d.words)?;
        Ok(Loaded {
            manifest,
            store,
            table,
        })
    }

    /// Instances of `split`, grouped by category in first-seen order.
    fn by_category(&self, split: Split) -> Result<Vec<(Category, Vec<MadlibInstance>)>> {
        let instances = self.manifest.instances(split)?;
        Ok(self
            .manifest
            .categories()
            .into_iter()
            .map(|c| {
                (
                    c,
                    instances
                        .iter()
                        .filter(|i| i.category == c)
                        .cloned()
                        .collect::<Vec<_>>(),
                )
            })
            .filter(|(_, v)| !v.is_empty())
            .collect())
    }
}

fn model_path(dir: &Path, category: Category, ext: &str) -> PathBuf {
    dir.join(format!("{}.{ext}", category.as_str()))
}

fn cca_fit(a: CcaFitArgs) -> Result<()> {
    let data = Loaded::read(&a.data)?;
    let config = CcaConfig {
        ridge: a.ridge,
        embed_dim: a.embed_dim,
        power_p: a.power,
    };
    fs::create_dir_all(&a.out)?;
    for (category, instances) in data.by_category(Split::Train)? {
        let model = fit_on_instances(
            &instances,
            |id| data.store.representation(id),
            &data.table,
            &config,
        )
        .map_err(|e| Error::Data(format!("category {category}: {e}")))?;
        save_cca(&model, model_path(&a.out, category, "ncca"))?;
    }
    Ok(())
}

fn cca_eval(a: &EvalArgs) -> Result<EvalReport> {
    let data = Loaded::read(&a.data)?;
    let mut reports = Vec::new();
    for (category, instances) in data.by_category(Split::Test)? {
        let model = load_cca(model_path(&a.models, category, "ncca"))?;
        reports.push(evaluate(
            &instances,
            &model,
            |id| data.store.representation(id),
            &data.table,
        ));
    }
    Ok(EvalReport::merge(reports))
}

fn lstm_train(a: LstmTrainArgs) -> Result<()> {
    let data = Loaded::read(&a.data)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        dh: a.dh,
        dt: a.dt,
        dv: a.dv,
        adam: AdamConfig {
            alpha: a.lr,
            ..AdamConfig::default()
        },
    };
    fs::create_dir_all(&a.out)?;
    for (category, instances) in data.by_category(Split::Train)? {
        let (model, losses) = EmbeddedLstm::fit(
            &instances,
            |id| data.store.representation(id),
            &data.table,
            &config,
        )
        .map_err(|e| Error::Data(format!("category {category}: {e}")))?;
        save_lstm(&model, model_path(&a.out, category, "elstm"))?;
        fs::write(
            model_path(&a.out, category, "loss.jsonl"),
            loss_log_jsonl(&losses),
        )?;
    }
    Ok(())
}

fn lstm_eval(a: &EvalArgs) -> Result<EvalReport> {
    let data = Loaded::read(&a.data)?;
    let mut reports = Vec::new();
    for (category, instances) in data.by_category(Split::Test)? {
        let model = load_lstm(model_path(&a.models, category, "elstm"))?;
        reports.push(model.evaluate(&instances, |id| data.store.representation(id), &data.table));
    }
    Ok(EvalReport::merge(reports))
}

fn finish_eval(report: &EvalReport, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    fs::write(out, report.to_jsonl())?;
    write!(stdout, "{}", report.render_table())?;
    Ok(())
}

fn report(a: ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    let report = EvalReport::from_jsonl(&fs::read_to_string(&a.input)?)?;
    let table = report.render_table();
    match a.out {
        Some(path) => fs::write(path, table)?,
        None => write!(stdout, "{table}")?,
    }
    Ok(())
}
