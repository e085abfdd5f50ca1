use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nnlm::artifact::ModelArtifact;
use nnlm::config::{CacheMode, DecayMode, EvalMode, RunConfig};
use nnlm::corpus::{load_corpus, reverse_sentences, Vocabulary};
use nnlm::evaluation::EvalReport;
use nnlm::experiments::{self, TableId, CORPUS_ROOT_ENV};
use nnlm::training::{write_epoch_log, EpochReport};

const EXIT_CONFIG: u8 = 2;
const EXIT_BAND: u8 = 3;

#[derive(Parser)]
#[command(name = "nnlm", version, about = "Train and evaluate neural network language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Score a corpus with a trained model.
    Eval(EvalArgs),
    /// Run a table's configurations and compare against the reference values.
    Reproduce(ReproduceArgs),
    /// List preset configurations or write them as config files.
    Presets {
        /// Directory to write one `<id>.conf` per preset into.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Print a complete config (defaults, or a preset).
    Config {
        #[arg(long)]
        preset: Option<String>,
    },
}

#[derive(Args)]
struct TrainArgs {
    config: PathBuf,
    /// Output directory for model.nnlm, vocab.tsv, epochs.tsv and report.tsv.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Directory relative corpus paths are resolved against.
    #[arg(long, env = CORPUS_ROOT_ENV)]
    corpus_root: Option<PathBuf>,
    /// Override a config key, e.g. `--set model.n_h=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    artifact: PathBuf,
    /// Text to score, one sentence per line.
    corpus: PathBuf,
    /// Vocabulary TSV; defaults to vocab.tsv next to the artifact.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Adapt parameters after each scored sentence.
    #[arg(long)]
    dynamic: bool,
    #[arg(long, default_value_t = 0.1)]
    dynamic_lr: f64,
    #[arg(long, default_value_t = 0.0)]
    dynamic_l2: f64,
    /// Score sentences right to left; the model must have been trained that way.
    #[arg(long)]
    reversed: bool,
    /// Start each sentence from the previous sentence's final state.
    #[arg(long)]
    carryover: bool,
    /// Cache unit: none, word or class.
    #[arg(long, default_value = "none")]
    cache: String,
    /// Weight of the model in the cache interpolation.
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    #[arg(long, default_value_t = 500)]
    cache_length: usize,
    /// Cache decay: constant, linear or exponential.
    #[arg(long, default_value = "constant")]
    decay: String,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// TSV report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// 1, 2, 3, 4, dynamic or domain.
    table: String,
    #[arg(long, env = CORPUS_ROOT_ENV)]
    corpus_root: Option<PathBuf>,
    /// Directory for the markdown and TSV reports.
    #[arg(long, default_value = "reproduce")]
    out: PathBuf,
    /// Cache trained models here and reuse them across tables.
    #[arg(long)]
    models: Option<PathBuf>,
}

/// Error carrying an explicit exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Exit(EXIT_CONFIG, msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    match err.downcast_ref::<nnlm::Error>() {
        Some(nnlm::Error::Config { .. }) => EXIT_CONFIG,
        _ => 1,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| config_error(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_file(header: &str, report: &EvalReport, label: &str) -> String {
    format!("{header}{}\n{}\n", EvalReport::tsv_header(), report.tsv_row(label))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config, &args.overrides)?;
    eprintln!("model: {}", experiments::describe(&cfg));
    let data = experiments::prepare_data(&cfg, args.corpus_root.as_deref())?;
    eprintln!(
        "corpus: {} / {} / {} sentences, vocabulary {}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        data.vocab.len()
    );
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let header = experiments::provenance(&cfg, &data.corpus_hashes, &[("vocabulary_sha256", data.vocab.hash())]);

    let log_path = args.out.join("epochs.tsv");
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    log.write_all(header.as_bytes())?;
    write_epoch_log(&mut log, &[], true)?;
    let mut io_error = None;
    let trained = experiments::train_model(&cfg, &data, |r: &EpochReport| {
        eprintln!("epoch {:>3}  train nll {:.4}  valid ppl {:.2}  lr {}", r.epoch, r.train_nll, r.valid_ppl, r.learning_rate);
        if let Err(e) = write_epoch_log(&mut log, std::slice::from_ref(r), false) {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e).context("writing epoch log");
    }

    let reversed = cfg.eval.mode == EvalMode::Reversed;
    let artifact = ModelArtifact::new(trained.network, &data.vocab, cfg.seed, cfg.serialize(), reversed)?;
    artifact.save(args.out.join("model.nnlm"))?;
    write_file(&args.out.join("vocab.tsv"), &data.vocab.to_tsv())?;
    write_file(&args.out.join("config.conf"), &cfg.serialize())?;

    let report = experiments::evaluate_model(&artifact.network, &cfg, &data.vocab, &data.test)?;
    print!("{}", report.table(&format!("test ({})", cfg.eval.mode.keyword())));
    write_file(&args.out.join("report.tsv"), &report_file(&header, &report, "test"))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let vocab_path = args
        .vocab
        .clone()
        .unwrap_or_else(|| args.artifact.parent().unwrap_or(Path::new(".")).join("vocab.tsv"));
    let vocab_text = fs::read_to_string(&vocab_path).with_context(|| format!("reading vocabulary {}", vocab_path.display()))?;
    let vocab = Vocabulary::from_tsv(&vocab_text)?;
    let artifact = ModelArtifact::load(&args.artifact)?;
    artifact
        .check_vocabulary(&vocab)
        .with_context(|| format!("refusing to evaluate {} with {}", args.artifact.display(), vocab_path.display()))?;

    let mut cfg = RunConfig::parse(&artifact.manifest.config).context("config stored in the model")?;
    if args.reversed && !artifact.manifest.reversed {
        return Err(config_error("--reversed needs a model trained on reversed sentences (eval.mode = reversed)"));
    }
    cfg.eval.mode = if args.dynamic { EvalMode::Dynamic } else { EvalMode::Static };
    cfg.eval.carryover = args.carryover;
    cfg.eval.dynamic_learning_rate = args.dynamic_lr;
    cfg.eval.dynamic_l2 = args.dynamic_l2;
    cfg.cache.mode = args.cache.parse::<CacheMode>().map_err(|e| config_error(format!("--cache: {e}")))?;
    cfg.cache.decay = args.decay.parse::<DecayMode>().map_err(|e| config_error(format!("--decay: {e}")))?;
    cfg.cache.lambda = args.lambda;
    cfg.cache.length = args.cache_length;
    cfg.cache.gamma = args.gamma;
    cfg.validate()?;

    let mut sentences = load_corpus(&args.corpus, cfg.corpus.lowercase)?;
    if artifact.manifest.reversed {
        sentences = reverse_sentences(&sentences);
    }
    let report = experiments::evaluate_model(&artifact.network, &cfg, &vocab, &sentences)?;
    let label = args.corpus.display().to_string();
    print!("{}", report.table(&label));
    if let Some(path) = &args.report {
        let hash = vocab.hash();
        let header = experiments::provenance(
            &cfg,
            &[],
            &[
                ("artifact", args.artifact.display().to_string()),
                ("corpus", label.clone()),
                ("vocabulary_sha256", hash),
                ("reversed", artifact.manifest.reversed.to_string()),
            ],
        );
        write_file(path, &report_file(&header, &report, &label))?;
    }
    Ok(())
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<()> {
    let table: TableId = args.table.parse().map_err(|e: nnlm::Error| config_error(e.to_string()))?;
    let root = args
        .corpus_root
        .ok_or_else(|| config_error(format!("no corpus directory; pass --corpus-root or set {CORPUS_ROOT_ENV}")))?;
    if let Some(m) = &args.models {
        fs::create_dir_all(m).with_context(|| format!("creating {}", m.display()))?;
    }
    let report = experiments::reproduce(table, &root, args.models.as_deref(), &mut |line| eprintln!("{line}"))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let cfg = experiments::base_config();
    let header = experiments::provenance(&cfg, &[], &[("table", table.to_string()), ("corpus_root", root.display().to_string())]);
    let md = report.to_markdown();
    print!("{md}");
    let md_header: String = header.lines().map(|l| format!("<!-- {} -->\n", l.trim_start_matches("# "))).collect();
    write_file(&args.out.join(format!("table-{table}.md")), &format!("{md_header}\n{md}"))?;
    write_file(&args.out.join(format!("table-{table}.tsv")), &format!("{header}{}", report.to_tsv()))?;
    if !report.passed() {
        return Err(Exit(EXIT_BAND, format!("table {table}: at least one acceptance band failed")).into());
    }
    Ok(())
}

fn cmd_presets(write: Option<PathBuf>) -> Result<()> {
    for p in experiments::presets() {
        let reference = p.reference_ppl.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!("{:<14} table {:<8} {:<32} reference {reference}", p.id, p.table.to_string(), p.label);
        if let Some(dir) = &write {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_file(&dir.join(format!("{}.conf", p.id)), &experiments::preset_file(&p)?)?;
        }
    }
    Ok(())
}

fn cmd_config(preset: Option<String>) -> Result<()> {
    match preset {
        None => print!("{}", RunConfig::default().serialize()),
        Some(id) => {
            let p = experiments::preset(&id).ok_or_else(|| config_error(format!("unknown preset `{id}`; see `nnlm presets`")))?;
            print!("{}", experiments::preset_file(&p)?);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Presets { write } => cmd_presets(write),
        Command::Config { preset } => cmd_config(preset),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
