//! End-to-end runs: source preparation, translation, training, expansion and
//! evaluation, recorded in a manifest that is enough to repeat the run.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embeddings::{load_embedding_store, EmbeddingError, EmbeddingStore};
use crate::evaluation::{
    gold_eval, isr_compare, mt_vs_pred, render_human, render_tsv, silver_eval, tables_for, EvalError,
    EvalReport,
};
use crate::lexicon::{
    derive_prediction_splits, filter_source_entries, parse_lexicon, split_by_reference, write_lexicon,
    Lexicon, LexiconError, ParseOptions, Split, SplitCounts, SplitSets, VariableSet, BE5_NAMES,
    DEFAULT_DUPLICATE_TOL, VAD_NAMES,
};
use crate::models::{
    expand_lexicon, training_data, write_checkpoint, ModelError, ModelKind, TrainConfig, TrainedModel,
    DEFAULT_ALPHA,
};
use crate::text::normalize_word;
use crate::translation::{
    identity_table, load_translation_table, project_lexicon, MissingPolicy, ProjectionStats,
    TranslationError,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lexiforge.lock";
pub const SOURCE_SPLIT_FILE: &str = "source_split.tsv";
pub const TARGET_MT_FILE: &str = "target_mt.tsv";
pub const TARGET_PRED_FILE: &str = "target_pred.tsv";
pub const REPORTS_JSON_FILE: &str = "reports.json";
pub const REPORTS_TSV_FILE: &str = "reports.tsv";
pub const REPORTS_TXT_FILE: &str = "reports.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prepare,
    Translate,
    Splits,
    Train,
    Expand,
    Silver,
    Gold,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Prepare => "prepare",
            Stage::Translate => "translate",
            Stage::Splits => "splits",
            Stage::Train => "train",
            Stage::Expand => "expand",
            Stage::Silver => "silver",
            Stage::Gold => "gold",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{}: {source}", .path.display())]
    File { path: PathBuf, source: Box<StageError> },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

impl StageError {
    fn in_file(self, path: &Path) -> Self {
        StageError::File { path: path.to_path_buf(), source: Box::new(self) }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: Stage, source: StageError },
    #[error("output directory {} is in use by another run (remove {} if it is stale)", .0.display(), LOCK_FILE)]
    Locked(PathBuf),
    #[error("input {} changed since the manifest was written", .0.display())]
    InputChanged(PathBuf),
    #[error("{}: {source}", .path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("manifest {}: {message}", .path.display())]
    Manifest { path: PathBuf, message: String },
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn open(path: &Path) -> Result<BufReader<File>, StageError> {
    File::open(path).map(BufReader::new).map_err(|e| StageError::from(e).in_file(path))
}

/// One NFC-normalized word per line; blank lines are ignored.
pub fn read_word_list(path: &Path) -> Result<HashSet<String>, StageError> {
    let mut words = HashSet::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| StageError::from(e).in_file(path))?;
        let w = line.trim_end_matches('\r');
        if !w.is_empty() {
            words.insert(normalize_word(w));
        }
    }
    Ok(words)
}

pub fn read_lexicon(path: &Path, opts: &ParseOptions) -> Result<Lexicon, StageError> {
    parse_lexicon(open(path)?, opts).map_err(|e| StageError::from(e).in_file(path))
}

pub fn write_lexicon_file(path: &Path, lex: &Lexicon) -> Result<(), StageError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_lexicon(lex, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path, max_vocab: Option<usize>) -> Result<EmbeddingStore, StageError> {
    let (store, stats) =
        load_embedding_store(open(path)?, max_vocab).map_err(|e| StageError::from(e).in_file(path))?;
    log::info!("loaded {} vectors of dimension {} from {}", stats.loaded, store.dim(), path.display());
    Ok(store)
}

/// Filters the source lexicon and tags every entry with its reference split.
pub fn prepare_source(
    source: &Path,
    test_ref: Option<&Path>,
    dev_ref: Option<&Path>,
    language: &str,
) -> Result<Lexicon, StageError> {
    let raw = read_lexicon(source, &ParseOptions::default().language(language))?;
    let filtered = filter_source_entries(&raw);
    if filtered.len() < raw.len() {
        log::info!("dropped {} multi-token or cased entries", raw.len() - filtered.len());
    }
    let words = |p: Option<&Path>| p.map_or_else(|| Ok(HashSet::new()), read_word_list);
    Ok(split_by_reference(&filtered, &words(test_ref)?, &words(dev_ref)?)?)
}

/// Everything a run depends on besides the input file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source_lang: String,
    pub target_lang: String,
    /// Source lexicon: split-tagged, or raw when reference lists are given.
    pub source: PathBuf,
    pub test_ref: Option<PathBuf>,
    pub dev_ref: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub skip_translation: bool,
    pub embeddings: PathBuf,
    pub max_vocab: Option<usize>,
    pub gold: Vec<(String, PathBuf)>,
    pub out: PathBuf,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub ridge_alpha: f64,
    /// One model over all variables instead of one per variable family.
    pub joint: bool,
    pub missing: MissingPolicy,
    pub duplicate_tol: f64,
}

impl RunConfig {
    pub fn new(source: impl Into<PathBuf>, embeddings: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            source_lang: "en".into(),
            target_lang: "en".into(),
            source: source.into(),
            test_ref: None,
            dev_ref: None,
            table: None,
            skip_translation: false,
            embeddings: embeddings.into(),
            max_vocab: None,
            gold: Vec::new(),
            out: out.into(),
            model: ModelKind::default(),
            train: TrainConfig::default(),
            ridge_alpha: DEFAULT_ALPHA,
            joint: false,
            missing: MissingPolicy::default(),
            duplicate_tol: DEFAULT_DUPLICATE_TOL,
        }
    }

    /// Target language actually produced.
    pub fn effective_target(&self) -> &str {
        if self.skip_translation {
            &self.source_lang
        } else {
            &self.target_lang
        }
    }

    fn input_paths(&self) -> Vec<(String, PathBuf)> {
        let mut v = vec![("source".to_string(), self.source.clone())];
        let opt = [("test_ref", &self.test_ref), ("dev_ref", &self.dev_ref), ("table", &self.table)];
        for (role, p) in opt {
            if let Some(p) = p {
                if role != "table" || !self.skip_translation {
                    v.push((role.to_string(), p.clone()));
                }
            }
        }
        v.push(("embeddings".into(), self.embeddings.clone()));
        for (id, p) in &self.gold {
            v.push((format!("gold:{id}"), p.clone()));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Incomplete { failed_stage: Stage, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub source_lang: String,
    pub target_lang: String,
    pub config: RunConfig,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|source| PipelineError::File { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Manifest { path: path.to_path_buf(), message: e.to_string() })
    }

    fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| PipelineError::File { path: path.to_path_buf(), source })
    }

    /// Fails if any recorded input no longer has its recorded hash.
    pub fn verify_inputs(&self) -> Result<(), PipelineError> {
        for input in &self.inputs {
            let hash = sha256_file(&input.path)
                .map_err(|source| PipelineError::File { path: input.path.clone(), source })?;
            if hash != input.sha256 {
                return Err(PipelineError::InputChanged(input.path.clone()));
            }
        }
        Ok(())
    }
}

/// Exclusive ownership of an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(dir.to_path_buf()))
            }
            Err(source) => Err(PipelineError::File { path, source }),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub source_counts: SplitCounts,
    pub projection: ProjectionStats,
    pub splits: SplitSets,
    pub reports: Vec<EvalReport>,
}

/// Groups variables into one model per family, or a single joint model.
pub fn model_groups(variables: &VariableSet, joint: bool) -> Vec<(String, Vec<String>)> {
    if joint {
        return vec![("joint".into(), variables.names().to_vec())];
    }
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for v in variables.names() {
        let family = if VAD_NAMES.contains(&v.as_str()) {
            "dimensional"
        } else if BE5_NAMES.contains(&v.as_str()) {
            "discrete"
        } else {
            "other"
        };
        match groups.iter_mut().find(|(f, _)| f == family) {
            Some((_, vars)) => vars.push(v.clone()),
            None => groups.push((family.into(), vec![v.clone()])),
        }
    }
    groups
}

struct Outputs<'a> {
    dir: &'a Path,
    records: Vec<FileRecord>,
}

impl Outputs<'_> {
    fn write(
        &mut self,
        name: &str,
        role: &str,
        f: impl FnOnce(&Path) -> Result<(), StageError>,
    ) -> Result<(), StageError> {
        let path = self.dir.join(name);
        f(&path).map_err(|e| e.in_file(&path))?;
        let sha256 = sha256_file(&path)?;
        self.records.push(FileRecord { role: role.into(), path: PathBuf::from(name), sha256 });
        Ok(())
    }
}

struct Artifacts {
    source_counts: SplitCounts,
    projection: ProjectionStats,
    splits: SplitSets,
    reports: Vec<EvalReport>,
}

fn stage<T>(stage: Stage, r: Result<T, StageError>) -> Result<T, (Stage, StageError)> {
    r.map_err(|e| (stage, e))
}

fn execute(cfg: &RunConfig, out: &mut Outputs) -> Result<Artifacts, (Stage, StageError)> {
    // source
    let source = if cfg.test_ref.is_some() || cfg.dev_ref.is_some() {
        let lex = stage(
            Stage::Prepare,
            prepare_source(&cfg.source, cfg.test_ref.as_deref(), cfg.dev_ref.as_deref(), &cfg.source_lang),
        )?;
        stage(Stage::Prepare, out.write(SOURCE_SPLIT_FILE, "source_split", |p| write_lexicon_file(p, &lex)))?;
        lex
    } else {
        let lex = stage(
            Stage::Prepare,
            read_lexicon(&cfg.source, &ParseOptions::default().language(&cfg.source_lang)),
        )?;
        if lex.entries().iter().any(|e| e.split == Split::None) {
            return Err((
                Stage::Prepare,
                StageError::Invalid(format!(
                    "{} has entries without a split tag; run prepare-source or pass reference lists",
                    cfg.source.display()
                )),
            ));
        }
        lex
    };
    let source_counts = source.split_counts();
    log::info!("source splits: {source_counts}");

    // translate
    let target = cfg.effective_target().to_string();
    let table = if cfg.skip_translation {
        identity_table(&source)
    } else {
        let path = cfg.table.as_deref().ok_or_else(|| {
            (Stage::Translate, StageError::Invalid("a translation table is required unless translation is skipped".into()))
        })?;
        let reader = stage(Stage::Translate, open(path))?;
        stage(
            Stage::Translate,
            load_translation_table(reader, &cfg.source_lang, &target).map_err(|e| StageError::from(e).in_file(path)),
        )?
    };
    let (mut mt, projection) = stage(Stage::Translate, project_lexicon(&source, &table, cfg.missing).map_err(Into::into))?;
    mt.set_language(target.clone());
    stage(Stage::Translate, out.write(TARGET_MT_FILE, "target_mt", |p| write_lexicon_file(p, &mt)))?;
    log::info!("TargetMT: {} entries ({} skipped)", projection.projected, projection.skipped);

    // splits
    let store = stage(Stage::Splits, read_embeddings(&cfg.embeddings, cfg.max_vocab))?;
    let splits = derive_prediction_splits(&mt, store.words().iter().cloned());
    log::info!(
        "prediction splits: train {}, dev {}, test {}",
        splits.p_train.len(),
        splits.p_dev.len(),
        splits.p_test.len()
    );

    // train
    let mut models = Vec::new();
    for (name, vars) in model_groups(mt.variables(), cfg.joint) {
        let variables = stage(Stage::Train, VariableSet::new(&vars).map_err(Into::into))?;
        let scales = vars
            .iter()
            .map(|v| mt.scales()[mt.variables().index_of(v).expect("own variable")])
            .collect();
        let (x, y) = stage(Stage::Train, training_data(&store, &mt, &vars).map_err(Into::into))?;
        log::info!("training {:?} model `{name}` on {} rows for {}", cfg.model, x.nrows(), variables);
        let (model, log) = stage(
            Stage::Train,
            TrainedModel::fit(cfg.model, variables, scales, x.view(), y.view(), &cfg.train, cfg.ridge_alpha)
                .map_err(Into::into),
        )?;
        if let Some(log) = log {
            log::info!("`{name}`: {} optimizer steps, final epoch loss {:.6}", log.steps, log.epoch_losses.last().copied().unwrap_or(f64::NAN));
        }
        stage(
            Stage::Train,
            out.write(&format!("model-{name}.json"), "checkpoint", |p| {
                let mut w = BufWriter::new(File::create(p)?);
                write_checkpoint(&model, &mut w)?;
                w.flush()?;
                Ok(())
            }),
        )?;
        models.push(model);
    }

    // expand
    let pred = stage(Stage::Expand, expand_lexicon(&models, &store, &mt, &splits, cfg.duplicate_tol).map_err(Into::into))?;
    stage(Stage::Expand, out.write(TARGET_PRED_FILE, "target_pred", |p| write_lexicon_file(p, &pred)))?;
    log::info!("TargetPred: {} word types", pred.len());

    // evaluate
    let mut reports = vec![stage(Stage::Silver, silver_eval(&mt, &pred, &splits).map_err(Into::into))?];
    let mut golds = Vec::new();
    for (id, path) in &cfg.gold {
        let gold = stage(Stage::Gold, read_lexicon(path, &ParseOptions::unchecked().language(&target)))?;
        reports.push(stage(Stage::Gold, gold_eval(&gold, id, &pred, &splits).map_err(|e| StageError::from(e).in_file(path)))?);
        golds.push((id.as_str(), gold));
    }
    for (id, gold) in &golds {
        match mt_vs_pred(gold, id, &mt, &pred, &splits) {
            Ok(r) => reports.push(r),
            Err(e @ (EvalError::InsufficientOverlap { .. } | EvalError::NoSharedVariables(_))) => {
                log::warn!("no MT-vs-Pred comparison for {id}: {e}")
            }
            Err(e) => return Err((Stage::Gold, e.into())),
        }
    }
    for i in 0..golds.len() {
        for j in i + 1..golds.len() {
            let ((a, ga), (b, gb)) = (&golds[i], &golds[j]);
            match isr_compare(ga, a, gb, b, &pred, &splits) {
                Ok(r) => reports.push(r),
                Err(e @ (EvalError::InsufficientOverlap { .. } | EvalError::NoSharedVariables(_))) => {
                    log::warn!("no inter-study comparison for {a} / {b}: {e}")
                }
                Err(e) => return Err((Stage::Gold, e.into())),
            }
        }
    }
    write_report_files(out, &reports).map_err(|e| (Stage::Write, e))?;
    Ok(Artifacts { source_counts, projection, splits, reports })
}

fn write_report_files(out: &mut Outputs, reports: &[EvalReport]) -> Result<(), StageError> {
    let tables = tables_for(reports)?;
    out.write(REPORTS_JSON_FILE, "reports", |p| Ok(crate::evaluation::write_reports(p, reports)?))?;
    out.write(REPORTS_TSV_FILE, "report_table", |p| Ok(fs::write(p, render_tsv(&tables))?))?;
    out.write(REPORTS_TXT_FILE, "report_text", |p| Ok(fs::write(p, render_human(&tables))?))?;
    Ok(())
}

/// Runs every stage and writes the manifest, also when a stage fails.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir).map_err(|source| PipelineError::File { path: dir.to_path_buf(), source })?;
    let _lock = OutputLock::acquire(dir)?;

    let mut inputs = Vec::new();
    for (role, path) in cfg.input_paths() {
        let sha256 = sha256_file(&path).map_err(|source| PipelineError::File { path: path.clone(), source })?;
        inputs.push(FileRecord { role, path, sha256 });
    }
    let mut out = Outputs { dir, records: Vec::new() };
    let result = execute(cfg, &mut out);
    let status = match &result {
        Ok(_) => RunStatus::Complete,
        Err((stage, e)) => RunStatus::Incomplete { failed_stage: *stage, error: e.to_string() },
    };
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        source_lang: cfg.source_lang.clone(),
        target_lang: cfg.effective_target().into(),
        config: cfg.clone(),
        inputs,
        outputs: out.records,
        status,
    };
    manifest.write(&dir.join(MANIFEST_FILE))?;
    match result {
        Ok(a) => Ok(RunSummary {
            manifest,
            source_counts: a.source_counts,
            projection: a.projection,
            splits: a.splits,
            reports: a.reports,
        }),
        Err((stage, source)) => Err(PipelineError::Stage { stage, source }),
    }
}

/// Repeats the run recorded in `manifest`, optionally into another directory.
pub fn rerun(manifest: &Path, out: Option<&Path>) -> Result<RunSummary, PipelineError> {
    let m = RunManifest::read(manifest)?;
    m.verify_inputs()?;
    let mut cfg = m.config;
    if let Some(out) = out {
        cfg.out = out.to_path_buf();
    }
    run(&cfg)
}

/// Recomputes reports from a tagged TargetMT and TargetPred pair.
pub fn evaluate_files(
    mt: &Path,
    pred: &Path,
    gold: &[(String, PathBuf)],
    language: &str,
) -> Result<Vec<EvalReport>, StageError> {
    let mt = read_lexicon(mt, &ParseOptions::unchecked().language(language))?;
    let pred = read_lexicon(pred, &ParseOptions::unchecked().language(language))?;
    let splits = SplitSets::from_tagged(&mt, &pred);
    let mut reports = vec![silver_eval(&mt, &pred, &splits)?];
    let mut golds = Vec::new();
    for (id, path) in gold {
        let g = read_lexicon(path, &ParseOptions::unchecked().language(language))?;
        reports.push(gold_eval(&g, id, &pred, &splits).map_err(|e| StageError::from(e).in_file(path))?);
        golds.push((id, g));
    }
    for (id, g) in &golds {
        if let Ok(r) = mt_vs_pred(g, id, &mt, &pred, &splits) {
            reports.push(r);
        }
    }
    for i in 0..golds.len() {
        for j in i + 1..golds.len() {
            if let Ok(r) = isr_compare(&golds[i].1, golds[i].0, &golds[j].1, golds[j].0, &pred, &splits) {
                reports.push(r);
            }
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_follow_families() {
        let vars = VariableSet::new(&["Val", "Aro", "Dom", "Joy", "Ang", "Sad", "Fea", "Dis"]).unwrap();
        let g = model_groups(&vars, false);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0], ("dimensional".to_string(), vec!["Val".into(), "Aro".into(), "Dom".into()]));
        assert_eq!(g[1].1.len(), 5);
        assert_eq!(model_groups(&vars, true)[0].1.len(), 8);
        let odd = VariableSet::new(&["Val", "Novelty"]).unwrap();
        assert_eq!(model_groups(&odd, false).len(), 2);
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(PipelineError::Locked(_))));
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn word_lists_skip_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.txt");
        fs::write(&p, "alpha\r\n\nbeta\n").unwrap();
        let words = read_word_list(&p).unwrap();
        assert_eq!(words.len(), 2);
        assert!(words.contains("alpha"));
    }

    #[test]
    fn hash_is_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        fs::write(&p, "word\tVal\nfoo\tbar\n").unwrap();
        let msg = read_lexicon(&p, &ParseOptions::default()).unwrap_err().to_string();
        assert!(msg.contains("bad.tsv") && msg.contains('2'), "{msg}");
    }
}
