//! `lexiforge` command-line driver.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use lexiforge::evaluation::{
    merge_reports, meta_from_reports, read_reports, render_human, render_tsv, tables_for, write_reports,
    EvalReport, Protocol,
};
use lexiforge::lexicon::ParseOptions;
use lexiforge::models::{grad_check, ModelKind, TrainConfig};
use lexiforge::pipeline::{
    evaluate_files, prepare_source, read_lexicon, rerun, run, write_lexicon_file, RunConfig, RunSummary,
    MANIFEST_FILE,
};
use lexiforge::translation::{fetch_missing, HttpTranslationClient, MissingPolicy, TranslationError};

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "lexiforge", version, about = "Generate and evaluate emotion lexicons for new languages")]
struct Cli {
    /// Flat `key = value` settings file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a source lexicon and tag entries with reference splits.
    PrepareSource(PrepareArgs),
    /// Fill a translation cache through the translation service.
    FetchTranslations(FetchArgs),
    /// Translate, train, expand and evaluate.
    Run(RunArgs),
    /// Recompute reports for an existing TargetMT / TargetPred pair.
    Evaluate(EvaluateArgs),
    /// Merge stored reports and render tables.
    Report(ReportArgs),
    /// Check backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    test_ref: Option<PathBuf>,
    #[arg(long)]
    dev_ref: Option<PathBuf>,
    /// Output TSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    source_lang: Option<String>,
}

#[derive(Args)]
struct FetchArgs {
    /// Lexicon whose words are translated.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Cache file; created if missing and appended to.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    source_lang: Option<String>,
    #[arg(long)]
    target_lang: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Repeat the run recorded in this manifest.
    #[arg(long, conflicts_with_all = ["source", "embeddings", "table", "gold", "test_ref", "dev_ref"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    test_ref: Option<PathBuf>,
    #[arg(long)]
    dev_ref: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Gold lexicon as `<id>=<path>`; repeatable.
    #[arg(long, value_name = "ID=PATH")]
    gold: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Use the source lexicon as TargetMT (source and target language coincide).
    #[arg(long)]
    skip_translation: bool,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    source_lang: Option<String>,
    #[arg(long)]
    target_lang: Option<String>,
    /// mtlffn or ridge.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Ridge penalty.
    #[arg(long)]
    alpha: Option<f64>,
    /// Train one model over all variables.
    #[arg(long)]
    joint: bool,
    /// Abort on source words without a translation instead of skipping them.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    mt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_name = "ID=PATH")]
    gold: Vec<String>,
    #[arg(long, default_value = "und")]
    language: String,
    /// Write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the tables as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    outputs: usize,
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, value_delimiter = ',', default_value = "8,6")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
}

fn parse_gold(specs: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    let mut seen = BTreeSet::new();
    specs
        .iter()
        .map(|s| {
            let (id, path) = s.split_once('=').with_context(|| format!("gold `{s}` is not <id>=<path>"))?;
            if id.is_empty() || path.is_empty() {
                bail!("gold `{s}` is not <id>=<path>");
            }
            if !seen.insert(id.to_string()) {
                bail!("gold id `{id}` given twice");
            }
            Ok((id.to_string(), PathBuf::from(path)))
        })
        .collect()
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.with_context(|| format!("--{flag} is required (flag or config file)"))
}

fn path_or(cli: Option<PathBuf>, file: &ConfigFile, key: &str) -> Option<PathBuf> {
    cli.or_else(|| file.get(key).map(PathBuf::from))
}

fn print_reports(reports: &[EvalReport]) -> Result<()> {
    print!("{}", render_human(&tables_for(reports)?));
    Ok(())
}

fn cmd_prepare(args: PrepareArgs, file: &ConfigFile) -> Result<()> {
    let source = required(path_or(args.source, file, "source"), "source")?;
    let out = required(path_or(args.out, file, "out"), "out")?;
    let lang = args.source_lang.or_else(|| file.get("source-lang").map(String::from)).unwrap_or_else(|| "en".into());
    let test_ref = path_or(args.test_ref, file, "test-ref");
    let dev_ref = path_or(args.dev_ref, file, "dev-ref");
    let lex = prepare_source(&source, test_ref.as_deref(), dev_ref.as_deref(), &lang)?;
    write_lexicon_file(&out, &lex).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", lex.split_counts());
    Ok(())
}

fn cmd_fetch(args: FetchArgs, file: &ConfigFile) -> Result<()> {
    let source = required(path_or(args.source, file, "source"), "source")?;
    let table = required(path_or(args.table, file, "table"), "table")?;
    let endpoint = required(args.endpoint.or_else(|| file.get("endpoint").map(String::from)), "endpoint")?;
    let src = args.source_lang.or_else(|| file.get("source-lang").map(String::from)).unwrap_or_else(|| "en".into());
    let tgt = required(args.target_lang.or_else(|| file.get("target-lang").map(String::from)), "target-lang")?;
    let lex = read_lexicon(&source, &ParseOptions::default().language(&src))?;
    let words: Vec<String> = lex.distinct_words().into_iter().map(String::from).collect();
    let client = HttpTranslationClient::from_env(endpoint)?;
    match fetch_missing(&words, &client, &table, &src, &tgt) {
        Ok(t) => {
            println!("{} of {} words translated in {}", words.iter().filter(|w| t.contains(w)).count(), words.len(), table.display());
            Ok(())
        }
        Err(TranslationError::Fetch { message, remaining }) => {
            bail!("{message}; {} words still untranslated, rerun to resume", remaining.len())
        }
        Err(e) => Err(e.into()),
    }
}

fn run_config(args: &RunArgs, file: &ConfigFile) -> Result<RunConfig> {
    let source = required(path_or(args.source.clone(), file, "source"), "source")?;
    let embeddings = required(path_or(args.embeddings.clone(), file, "embeddings"), "embeddings")?;
    let out = required(path_or(args.out.clone(), file, "out"), "out")?;
    let mut cfg = RunConfig::new(source, embeddings, out);
    cfg.test_ref = path_or(args.test_ref.clone(), file, "test-ref");
    cfg.dev_ref = path_or(args.dev_ref.clone(), file, "dev-ref");
    cfg.table = path_or(args.table.clone(), file, "table");
    let gold: Vec<&str> =
        if args.gold.is_empty() { file.all("gold") } else { args.gold.iter().map(String::as_str).collect() };
    cfg.gold = parse_gold(&gold)?;
    cfg.skip_translation = args.skip_translation || file.flag("skip-translation")?;
    cfg.joint = args.joint || file.flag("joint")?;
    if args.strict || file.flag("strict")? {
        cfg.missing = MissingPolicy::Strict;
    }
    if let Some(l) = args.source_lang.clone().or_else(|| file.get("source-lang").map(String::from)) {
        cfg.source_lang = l;
    }
    cfg.target_lang = match args.target_lang.clone().or_else(|| file.get("target-lang").map(String::from)) {
        Some(l) => l,
        None if cfg.skip_translation => cfg.source_lang.clone(),
        None => bail!("--target-lang is required unless --skip-translation is set"),
    };
    cfg.max_vocab = args.max_vocab.or(file.parsed("max-vocab")?);
    if let Some(m) = args.model.or(file.parsed("model")?) {
        cfg.model = m;
    }
    if let Some(a) = args.alpha.or(file.parsed("alpha")?) {
        cfg.ridge_alpha = a;
    }
    let defaults = TrainConfig::default();
    cfg.train.seed = args.seed.or(file.parsed("seed")?).unwrap_or(defaults.seed);
    cfg.train.epochs = args.epochs.or(file.parsed("epochs")?).unwrap_or(defaults.epochs);
    cfg.train.batch_size = args.batch_size.or(file.parsed("batch-size")?).unwrap_or(defaults.batch_size);
    Ok(cfg)
}

fn report_run(summary: &RunSummary) -> Result<()> {
    println!("source splits: {}", summary.source_counts);
    println!(
        "TargetMT: {} entries projected, {} skipped",
        summary.projection.projected, summary.projection.skipped
    );
    println!(
        "prediction splits: train {}, dev {}, test {}",
        summary.splits.p_train.len(),
        summary.splits.p_dev.len(),
        summary.splits.p_test.len()
    );
    print_reports(&summary.reports)?;
    println!("manifest: {}", summary.manifest.config.out.join(MANIFEST_FILE).display());
    Ok(())
}

fn cmd_run(args: RunArgs, file: &ConfigFile) -> Result<()> {
    let summary = match &args.manifest {
        Some(m) => rerun(m, args.out.as_deref())?,
        None => run(&run_config(&args, file)?)?,
    };
    report_run(&summary)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let gold: Vec<&str> = args.gold.iter().map(String::as_str).collect();
    let reports = evaluate_files(&args.mt, &args.pred, &parse_gold(&gold)?, &args.language)?;
    write_outputs(&reports, args.json.as_deref(), args.tsv.as_deref())?;
    print_reports(&reports)
}

fn write_outputs(reports: &[EvalReport], json: Option<&Path>, tsv: Option<&Path>) -> Result<()> {
    if let Some(p) = json {
        write_reports(p, reports).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = tsv {
        std::fs::write(p, render_tsv(&tables_for(reports)?)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut all = Vec::new();
    for p in &args.reports {
        all.extend(read_reports(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let mut reports = merge_reports(all)?;
    let languages: BTreeSet<&str> = reports
        .iter()
        .filter(|r| matches!(r.protocol, Protocol::Gold | Protocol::Silver))
        .map(|r| r.language.as_str())
        .collect();
    let has_meta = reports.iter().any(|r| r.protocol == Protocol::Meta);
    if languages.len() >= 2 && !has_meta {
        if let Some(meta) = meta_from_reports(&reports) {
            for (var, e) in &meta.failures {
                log::warn!("no cross-language agreement for {var}: {e}");
            }
            if !meta.report.scores.is_empty() {
                reports.push(meta.report);
            }
        }
    }
    write_outputs(&reports, args.json.as_deref(), args.tsv.as_deref())?;
    print_reports(&reports)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let mut failed = 0;
    for seed in args.seed..args.seed + args.seeds {
        let cfg = TrainConfig {
            hidden: args.hidden.clone(),
            input_dropout: 0.0,
            hidden_dropout: 0.0,
            seed,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(args.rows, args.dim, &mut rng);
        let y = normal_matrix(args.rows, args.outputs, &mut rng);
        let report = grad_check(&cfg, x.view(), y.view())?;
        let ok = report.max_rel_error < args.threshold;
        if !ok {
            failed += 1;
        }
        println!(
            "seed {seed}: max relative error {:.3e} over {} parameters {}",
            report.max_rel_error,
            report.parameters,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed > 0 {
        bail!("{failed} of {} seeds exceed {}", args.seeds, args.threshold);
    }
    Ok(())
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::PrepareSource(a) => cmd_prepare(a, &file),
        Command::FetchTranslations(a) => cmd_fetch(a, &file),
        Command::Run(a) => cmd_run(a, &file),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
