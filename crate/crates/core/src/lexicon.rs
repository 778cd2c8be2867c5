//! Emotion lexicon data model, TSV ingestion, and the split algebra used to
//! keep training material out of every evaluation set.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_word;

/// Default absolute tolerance for merging predicted duplicates.
pub const DEFAULT_DUPLICATE_TOL: f64 = 1e-6;

pub const VAD_NAMES: [&str; 3] = ["Val", "Aro", "Dom"];
pub const BE5_NAMES: [&str; 5] = ["Joy", "Ang", "Sad", "Fea", "Dis"];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("variable mismatch: expected [{expected}], found [{found}]")]
    Schema { expected: String, found: String },
    #[error("invalid variable set: {0}")]
    Variables(String),
    #[error("invalid scale: {0}")]
    Scale(String),
    #[error("invalid entry `{word}`: {message}")]
    Entry { word: String, message: String },
    #[error("duplicate group `{word}` has value spread {spread:e} above tolerance {tol:e}")]
    Integrity { word: String, spread: f64, tol: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dimensional,
    Discrete,
    Other,
}

/// Ordered, duplicate-free list of emotion variables.
///
/// The order is the column order of every file and matrix built from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSet {
    names: Vec<String>,
    family: Family,
}

impl VariableSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, LexiconError> {
        if names.is_empty() {
            return Err(LexiconError::Variables("no variables".into()));
        }
        let mut seen = HashSet::new();
        let mut owned = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            if name.trim().is_empty() {
                return Err(LexiconError::Variables("empty variable name".into()));
            }
            if !seen.insert(name) {
                return Err(LexiconError::Variables(format!("duplicate variable `{name}`")));
            }
            owned.push(name.to_string());
        }
        let family = if owned.iter().all(|n| VAD_NAMES.contains(&n.as_str())) {
            Family::Dimensional
        } else if owned.iter().all(|n| BE5_NAMES.contains(&n.as_str())) {
            Family::Discrete
        } else {
            Family::Other
        };
        Ok(Self { names: owned, family })
    }

    pub fn vad() -> Self {
        Self::new(&VAD_NAMES).expect("built-in set")
    }

    pub fn be5() -> Self {
        Self::new(&BE5_NAMES).expect("built-in set")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    /// Variables of `self` followed by those of `other`; the two must be disjoint.
    pub fn concat(&self, other: &VariableSet) -> Result<Self, LexiconError> {
        let names: Vec<&str> = self
            .names
            .iter()
            .chain(other.names.iter())
            .map(String::as_str)
            .collect();
        Self::new(&names)
    }

    /// Variables present in both sets, in the order of `self`.
    pub fn intersection(&self, other: &VariableSet) -> Vec<String> {
        self.names
            .iter()
            .filter(|n| other.contains(n))
            .cloned()
            .collect()
    }
}

impl fmt::Display for VariableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names.join(","))
    }
}

/// Rating scale of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    #[serde(serialize_with = "bound::serialize", deserialize_with = "bound::lower")]
    pub min: f64,
    #[serde(serialize_with = "bound::serialize", deserialize_with = "bound::upper")]
    pub max: f64,
    pub neutral: f64,
}

/// Infinite scale bounds are written as `null`.
mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn lower<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }

    pub fn upper<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ScaleSpec {
    pub const VAD: ScaleSpec = ScaleSpec { min: 1.0, max: 9.0, neutral: 5.0 };
    pub const BE5: ScaleSpec = ScaleSpec { min: 1.0, max: 5.0, neutral: 1.0 };
    pub const UNBOUNDED: ScaleSpec = ScaleSpec {
        min: f64::NEG_INFINITY,
        max: f64::INFINITY,
        neutral: 0.0,
    };

    pub fn new(min: f64, max: f64, neutral: f64) -> Result<Self, LexiconError> {
        if !(min < max) || !(min <= neutral && neutral <= max) {
            return Err(LexiconError::Scale(format!(
                "need min < max and min <= neutral <= max, got ({min}, {max}, {neutral})"
            )));
        }
        Ok(Self { min, max, neutral })
    }

    /// Built-in scale for a known variable name.
    pub fn builtin_for(name: &str) -> Option<ScaleSpec> {
        if VAD_NAMES.contains(&name) {
            Some(Self::VAD)
        } else if BE5_NAMES.contains(&name) {
            Some(Self::BE5)
        } else {
            None
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

/// How scales are attached to parsed lexicons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ScalePolicy {
    /// VAD/BE5 scales for known variable names, checked against every value;
    /// unknown names get an unbounded scale.
    #[default]
    BuiltIn,
    /// Unbounded scales, no range checks. Used for gold lexicons rated on
    /// study-specific scales.
    Unchecked,
    /// One scale for every variable, checked.
    Fixed(ScaleSpec),
}

impl ScalePolicy {
    fn scales_for(&self, variables: &VariableSet) -> Vec<ScaleSpec> {
        variables
            .names()
            .iter()
            .map(|n| match self {
                ScalePolicy::BuiltIn => ScaleSpec::builtin_for(n).unwrap_or(ScaleSpec::UNBOUNDED),
                ScalePolicy::Unchecked => ScaleSpec::UNBOUNDED,
                ScalePolicy::Fixed(s) => *s,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    None,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::None => "",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "" => Ok(Split::None),
            other => Err(format!("unknown split `{other}` (expected train|dev|test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Translated,
    Predicted,
}

/// Emotion ratings of one word, one value per variable of the owning lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionVector(Vec<f64>);

impl EmotionVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

impl From<Vec<f64>> for EmotionVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub emotions: EmotionVector,
    pub split: Split,
    pub provenance: Provenance,
}

impl LexiconEntry {
    pub fn new(word: impl Into<String>, emotions: Vec<f64>) -> Self {
        Self {
            word: word.into(),
            emotions: EmotionVector(emotions),
            split: Split::None,
            provenance: Provenance::Human,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// A word to emotion-vector table under one variable set.
///
/// Entries keep insertion order. `is_unique` reports whether every word type
/// occurs once; translated lexicons may hold partial duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    language: String,
    variables: VariableSet,
    scales: Vec<ScaleSpec>,
    entries: Vec<LexiconEntry>,
    unique: bool,
}

impl Lexicon {
    pub fn new(
        language: impl Into<String>,
        variables: VariableSet,
        scales: Vec<ScaleSpec>,
        entries: Vec<LexiconEntry>,
    ) -> Result<Self, LexiconError> {
        if scales.len() != variables.len() {
            return Err(LexiconError::Scale(format!(
                "{} scales for {} variables",
                scales.len(),
                variables.len()
            )));
        }
        for entry in &entries {
            validate_entry(entry, &variables, &scales)?;
        }
        let unique = words_unique(&entries);
        Ok(Self { language: language.into(), variables, scales, entries, unique })
    }

    /// Lexicon with the built-in scale policy applied to `variables`.
    pub fn with_builtin_scales(
        language: impl Into<String>,
        variables: VariableSet,
        entries: Vec<LexiconEntry>,
    ) -> Result<Self, LexiconError> {
        let scales = ScalePolicy::BuiltIn.scales_for(&variables);
        Self::new(language, variables, scales, entries)
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn set_language(&mut self, language: impl Into<String>) {
        self.language = language.into();
    }

    pub fn variables(&self) -> &VariableSet {
        &self.variables
    }

    pub fn scales(&self) -> &[ScaleSpec] {
        &self.scales
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<LexiconEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_unique(&self) -> bool {
        self.unique
    }

    /// Distinct word types in first-occurrence order.
    pub fn distinct_words(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.word.as_str()))
            .map(|e| e.word.as_str())
            .collect()
    }

    pub fn words_in(&self, split: Split) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.word.clone())
            .collect()
    }

    /// Word to entry index map; only meaningful for unique lexicons.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.word.as_str(), i))
            .collect()
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for e in &self.entries {
            match e.split {
                Split::Train => counts.train += 1,
                Split::Dev => counts.dev += 1,
                Split::Test => counts.test += 1,
                Split::None => counts.none += 1,
            }
        }
        counts
    }

    /// Same lexicon with every entry relabelled.
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        for e in &mut self.entries {
            e.provenance = provenance;
        }
        self
    }

    /// Keeps entries matching `keep`, preserving order.
    pub fn filtered<F: FnMut(&LexiconEntry) -> bool>(&self, mut keep: F) -> Lexicon {
        let entries: Vec<LexiconEntry> = self.entries.iter().filter(|e| keep(e)).cloned().collect();
        let unique = words_unique(&entries);
        Lexicon {
            language: self.language.clone(),
            variables: self.variables.clone(),
            scales: self.scales.clone(),
            entries,
            unique,
        }
    }

    /// Projection onto a subset of variables, in the given order.
    pub fn select_variables(&self, names: &[String]) -> Result<Lexicon, LexiconError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.variables.index_of(n).ok_or_else(|| LexiconError::Schema {
                    expected: names.join(","),
                    found: self.variables.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        let variables = VariableSet::new(names)?;
        let scales = idx.iter().map(|&i| self.scales[i]).collect();
        let entries = self
            .entries
            .iter()
            .map(|e| LexiconEntry {
                word: e.word.clone(),
                emotions: EmotionVector(idx.iter().map(|&i| e.emotions.get(i)).collect()),
                split: e.split,
                provenance: e.provenance,
            })
            .collect();
        Ok(Lexicon {
            language: self.language.clone(),
            variables,
            scales,
            entries,
            unique: self.unique,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub none: usize,
}

impl fmt::Display for SplitCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "train: {}, dev: {}, test: {}", self.train, self.dev, self.test)?;
        if self.none > 0 {
            write!(f, ", untagged: {}", self.none)?;
        }
        Ok(())
    }
}

fn words_unique(entries: &[LexiconEntry]) -> bool {
    let mut seen = HashSet::with_capacity(entries.len());
    entries.iter().all(|e| seen.insert(e.word.as_str()))
}

fn validate_entry(
    entry: &LexiconEntry,
    variables: &VariableSet,
    scales: &[ScaleSpec],
) -> Result<(), LexiconError> {
    let bad = |message: String| LexiconError::Entry { word: entry.word.clone(), message };
    if entry.word.trim().is_empty() {
        return Err(bad("empty word".into()));
    }
    if entry.emotions.len() != variables.len() {
        return Err(bad(format!(
            "{} values for {} variables",
            entry.emotions.len(),
            variables.len()
        )));
    }
    for (i, &v) in entry.emotions.values().iter().enumerate() {
        if !v.is_finite() {
            return Err(bad(format!("non-finite value for {}", variables.names()[i])));
        }
        // Predicted values are allowed to leave the rating range.
        if entry.provenance == Provenance::Human && !scales[i].contains(v) {
            return Err(bad(format!(
                "{} = {v} outside scale [{}, {}]",
                variables.names()[i],
                scales[i].min,
                scales[i].max
            )));
        }
    }
    Ok(())
}

/// Options for [`parse_lexicon`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub expected_variables: Option<VariableSet>,
    pub scale: ScalePolicy,
    pub language: Option<String>,
}

impl ParseOptions {
    pub fn expecting(variables: VariableSet) -> Self {
        Self { expected_variables: Some(variables), ..Self::default() }
    }

    pub fn unchecked() -> Self {
        Self { scale: ScalePolicy::Unchecked, ..Self::default() }
    }

    pub fn language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }
}

/// Reads a lexicon from tab-separated text.
///
/// The header is `word`, then one column per variable, then an optional
/// `split` column. Words are NFC-normalized. Every entry is marked human.
pub fn parse_lexicon<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Lexicon, LexiconError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                let line = line.strip_suffix('\r').unwrap_or(&line).to_string();
                if !line.is_empty() {
                    break (i + 1, line);
                }
            }
            None => return Err(LexiconError::Parse { line: 1, message: "missing header".into() }),
        }
    };
    let (header_line, header) = header;
    let mut columns: Vec<&str> = header.split('\t').collect();
    if columns.first() != Some(&"word") {
        return Err(LexiconError::Parse {
            line: header_line,
            message: "header must start with `word`".into(),
        });
    }
    let has_split = columns.last() == Some(&"split");
    if has_split {
        columns.pop();
    }
    let var_names = &columns[1..];
    if var_names.iter().any(|c| *c == "split" || *c == "word") {
        return Err(LexiconError::Parse {
            line: header_line,
            message: "`word` must be first and `split` last".into(),
        });
    }
    let variables = VariableSet::new(var_names).map_err(|e| LexiconError::Parse {
        line: header_line,
        message: e.to_string(),
    })?;
    if let Some(expected) = &opts.expected_variables {
        if expected.names() != variables.names() {
            return Err(LexiconError::Schema {
                expected: expected.to_string(),
                found: variables.to_string(),
            });
        }
    }
    let arity = columns.len() + usize::from(has_split);
    let scales = opts.scale.scales_for(&variables);

    let mut entries = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != arity {
            return Err(LexiconError::Parse {
                line: lineno,
                message: format!("expected {arity} columns, found {}", cells.len()),
            });
        }
        let word = normalize_word(cells[0]);
        if word.trim().is_empty() {
            return Err(LexiconError::Parse { line: lineno, message: "empty word".into() });
        }
        let mut values = Vec::with_capacity(variables.len());
        for (cell, name) in cells[1..=variables.len()].iter().zip(variables.names()) {
            let v: f64 = cell.trim().parse().map_err(|_| LexiconError::Parse {
                line: lineno,
                message: format!("non-numeric value `{cell}` for {name}"),
            })?;
            if !v.is_finite() {
                return Err(LexiconError::Parse {
                    line: lineno,
                    message: format!("non-finite value for {name}"),
                });
            }
            values.push(v);
        }
        let split = if has_split {
            cells[arity - 1]
                .parse()
                .map_err(|message| LexiconError::Parse { line: lineno, message })?
        } else {
            Split::None
        };
        let entry = LexiconEntry::new(word, values).with_split(split);
        validate_entry(&entry, &variables, &scales).map_err(|e| LexiconError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    let unique = words_unique(&entries);
    Ok(Lexicon {
        language: opts.language.clone().unwrap_or_else(|| "und".to_string()),
        variables,
        scales,
        entries,
        unique,
    })
}

/// Writes a lexicon as tab-separated text.
///
/// A `split` column is written when any entry carries a split tag; untagged
/// entries then get an empty cell.
pub fn write_lexicon<W: Write>(lex: &Lexicon, mut out: W) -> Result<(), LexiconError> {
    let has_split = lex.entries.iter().any(|e| e.split != Split::None);
    out.write_all(b"word")?;
    for name in lex.variables.names() {
        write!(out, "\t{name}")?;
    }
    if has_split {
        out.write_all(b"\tsplit")?;
    }
    out.write_all(b"\n")?;
    for e in &lex.entries {
        out.write_all(e.word.as_bytes())?;
        for v in e.emotions.values() {
            write!(out, "\t{v}")?;
        }
        if has_split {
            write!(out, "\t{}", e.split.as_str())?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Drops multi-token entries and entries containing uppercase characters.
pub fn filter_source_entries(lex: &Lexicon) -> Lexicon {
    lex.filtered(|e| !e.word.chars().any(|c| c.is_whitespace() || c.is_uppercase()))
}

/// Tags every entry of `master` as test if its word is in `test_ref`, else
/// dev if in `dev_ref`, else train. Ratings are always those of `master`.
pub fn split_by_reference(
    master: &Lexicon,
    test_ref: &HashSet<String>,
    dev_ref: &HashSet<String>,
) -> Result<Lexicon, LexiconError> {
    if !master.is_unique() {
        return Err(LexiconError::Precondition(
            "reference splitting needs unique word types".into(),
        ));
    }
    let mut out = master.clone();
    for e in &mut out.entries {
        e.split = if test_ref.contains(&e.word) {
            Split::Test
        } else if dev_ref.contains(&e.word) {
            Split::Dev
        } else {
            Split::Train
        };
    }
    Ok(out)
}

/// Word-type sets of the translated lexicon, the embedding vocabulary, and
/// the prediction splits derived from them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSets {
    pub mt_train: BTreeSet<String>,
    pub mt_dev: BTreeSet<String>,
    pub mt_test: BTreeSet<String>,
    pub embedding_vocab: BTreeSet<String>,
    pub p_train: BTreeSet<String>,
    pub p_dev: BTreeSet<String>,
    pub p_test: BTreeSet<String>,
}

impl SplitSets {
    /// Prediction split of `word`, or `Split::None` outside MT and E.
    pub fn p_split_of(&self, word: &str) -> Split {
        if self.p_train.contains(word) {
            Split::Train
        } else if self.p_dev.contains(word) {
            Split::Dev
        } else if self.p_test.contains(word) {
            Split::Test
        } else {
            Split::None
        }
    }

    /// Rebuilds split sets from a tagged translated lexicon and a tagged
    /// predicted lexicon, as written by the pipeline.
    pub fn from_tagged(mt: &Lexicon, pred: &Lexicon) -> Self {
        Self {
            mt_train: mt.words_in(Split::Train),
            mt_dev: mt.words_in(Split::Dev),
            mt_test: mt.words_in(Split::Test),
            embedding_vocab: BTreeSet::new(),
            p_train: pred.words_in(Split::Train),
            p_dev: pred.words_in(Split::Dev),
            p_test: pred.words_in(Split::Test),
        }
    }
}

/// Prediction splits: train = MT-train, dev = MT-dev minus MT-train,
/// test = (MT-test plus E) minus (MT-dev plus MT-train).
pub fn derive_prediction_splits<I, S>(mt: &Lexicon, embedding_vocab: I) -> SplitSets
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mt_train = mt.words_in(Split::Train);
    let mt_dev = mt.words_in(Split::Dev);
    let mt_test = mt.words_in(Split::Test);
    let embedding_vocab: BTreeSet<String> = embedding_vocab.into_iter().map(Into::into).collect();

    let p_train = mt_train.clone();
    let p_dev = mt_dev.difference(&mt_train).cloned().collect();
    let p_test = mt_test
        .iter()
        .chain(embedding_vocab.iter())
        .filter(|w| !mt_dev.contains(*w) && !mt_train.contains(*w))
        .cloned()
        .collect();
    SplitSets { mt_train, mt_dev, mt_test, embedding_vocab, p_train, p_dev, p_test }
}

/// Merges same-word entries of a predicted lexicon.
///
/// Every duplicate group must agree per variable to within `tol`; the first
/// occurrence is kept.
pub fn collapse_duplicates(lex: &Lexicon, tol: f64) -> Result<Lexicon, LexiconError> {
    if let Some(e) = lex.entries.iter().find(|e| e.provenance != Provenance::Predicted) {
        return Err(LexiconError::Precondition(format!(
            "collapse_duplicates expects predicted entries, `{}` is {:?}",
            e.word, e.provenance
        )));
    }
    let mut first: HashMap<&str, usize> = HashMap::with_capacity(lex.len());
    let mut kept: Vec<LexiconEntry> = Vec::with_capacity(lex.len());
    for e in &lex.entries {
        match first.get(e.word.as_str()) {
            Some(&k) => {
                let spread = kept[k]
                    .emotions
                    .values()
                    .iter()
                    .zip(e.emotions.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if spread > tol {
                    return Err(LexiconError::Integrity { word: e.word.clone(), spread, tol });
                }
            }
            None => {
                first.insert(e.word.as_str(), kept.len());
                kept.push(e.clone());
            }
        }
    }
    Ok(Lexicon {
        language: lex.language.clone(),
        variables: lex.variables.clone(),
        scales: lex.scales.clone(),
        entries: kept,
        unique: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE1: &str = "word\tVal\tAro\tDom\tJoy\tAng\tSad\tFea\tDis\n\
        sunshine\t8.1\t5.3\t5.4\t4.2\t1.2\t1.3\t1.3\t1.2\n\
        terrorism\t1.6\t7.4\t2.7\t1.2\t2.9\t3.3\t3.9\t2.5\n";

    fn lex_from(words: &[&str]) -> Lexicon {
        let entries = words.iter().map(|w| LexiconEntry::new(*w, vec![5.0])).collect();
        Lexicon::with_builtin_scales("en", VariableSet::new(&["Val"]).unwrap(), entries).unwrap()
    }

    fn set(words: &[&str]) -> HashSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn parses_sample_rows() {
        let lex = parse_lexicon(TABLE1.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(lex.variables().len(), 8);
        assert_eq!(
            lex.entries()[0].emotions.values(),
            &[8.1, 5.3, 5.4, 4.2, 1.2, 1.3, 1.3, 1.2]
        );
        let terror = &lex.entries()[1];
        assert_eq!(terror.word, "terrorism");
        assert_eq!(terror.emotions.get(0), 1.6);
        assert_eq!(terror.emotions.get(lex.variables().index_of("Fea").unwrap()), 3.9);
        assert_eq!(terror.provenance, Provenance::Human);
        assert!(lex.is_unique());
    }

    #[test]
    fn header_only_gives_empty_lexicon() {
        let lex = parse_lexicon("word\tVal\tAro\n".as_bytes(), &ParseOptions::default()).unwrap();
        assert!(lex.is_empty());
        assert_eq!(lex.variables().names(), &["Val", "Aro"]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_cell = "word\tVal\nok\t5\nbad\tfive\n";
        match parse_lexicon(bad_cell.as_bytes(), &ParseOptions::default()) {
            Err(LexiconError::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let arity = "word\tVal\tAro\nok\t5\n";
        match parse_lexicon(arity.as_bytes(), &ParseOptions::default()) {
            Err(LexiconError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let header = "term\tVal\n";
        assert!(matches!(
            parse_lexicon(header.as_bytes(), &ParseOptions::default()),
            Err(LexiconError::Parse { line: 1, .. })
        ));
        let out_of_range = "word\tVal\nx\t12\n";
        assert!(matches!(
            parse_lexicon(out_of_range.as_bytes(), &ParseOptions::default()),
            Err(LexiconError::Parse { line: 2, .. })
        ));
        assert!(parse_lexicon(out_of_range.as_bytes(), &ParseOptions::unchecked()).is_ok());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let err = parse_lexicon(
            "word\tVal\tAro\n".as_bytes(),
            &ParseOptions::expecting(VariableSet::vad()),
        )
        .unwrap_err();
        assert!(matches!(err, LexiconError::Schema { .. }));
    }

    #[test]
    fn split_column_round_trips() {
        let text = "word\tVal\tsplit\na\t1\ttrain\nb\t2\tdev\nc\t3\ttest\n";
        let lex = parse_lexicon(text.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(lex.entries()[1].split, Split::Dev);
        let mut out = Vec::new();
        write_lexicon(&lex, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn words_are_nfc_normalized() {
        // "e" + combining acute accent
        let text = "word\tVal\ncafe\u{301}\t5\n";
        let lex = parse_lexicon(text.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(lex.entries()[0].word, "caf\u{e9}");
    }

    #[test]
    fn filter_drops_multitoken_and_uppercase() {
        let lex = lex_from(&["boa constrictor", "Budweiser", "sunshine"]);
        let kept = filter_source_entries(&lex);
        assert_eq!(kept.distinct_words(), vec!["sunshine"]);

        let plain = lex_from(&["a", "b", "ß"]);
        assert_eq!(filter_source_entries(&plain), plain);
    }

    #[test]
    fn reference_split_rule() {
        let master = lex_from(&["a", "b", "c", "d"]);
        let tagged = split_by_reference(&master, &set(&["a"]), &set(&["a", "b"])).unwrap();
        assert_eq!(tagged.words_in(Split::Test), ["a".to_string()].into());
        assert_eq!(tagged.words_in(Split::Dev), ["b".to_string()].into());
        assert_eq!(tagged.words_in(Split::Train).len(), 2);

        let all_train = split_by_reference(&master, &set(&["zz"]), &HashSet::new()).unwrap();
        assert_eq!(all_train.split_counts().train, 4);
    }

    #[test]
    fn reference_split_requires_unique_master() {
        let dup = lex_from(&["a", "a"]);
        assert!(split_by_reference(&dup, &HashSet::new(), &HashSet::new()).is_err());
    }

    #[test]
    fn prediction_splits_small_case() {
        let entries = vec![
            LexiconEntry::new("x", vec![1.0]).with_split(Split::Train),
            LexiconEntry::new("x", vec![2.0]).with_split(Split::Dev),
            LexiconEntry::new("y", vec![3.0]).with_split(Split::Dev),
            LexiconEntry::new("x", vec![4.0]).with_split(Split::Test),
            LexiconEntry::new("z", vec![5.0]).with_split(Split::Test),
        ];
        let mt = Lexicon::with_builtin_scales("de", VariableSet::new(&["Val"]).unwrap(), entries)
            .unwrap();
        let s = derive_prediction_splits(&mt, ["w"]);
        let b = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(s.p_train, b(&["x"]));
        assert_eq!(s.p_dev, b(&["y"]));
        assert_eq!(s.p_test, b(&["z", "w"]));
        assert_eq!(s.p_split_of("w"), Split::Test);
        assert_eq!(s.p_split_of("q"), Split::None);
    }

    #[test]
    fn prediction_splits_identity_without_embeddings() {
        let entries = vec![
            LexiconEntry::new("a", vec![1.0]).with_split(Split::Train),
            LexiconEntry::new("b", vec![1.0]).with_split(Split::Dev),
            LexiconEntry::new("c", vec![1.0]).with_split(Split::Test),
        ];
        let mt = Lexicon::with_builtin_scales("de", VariableSet::new(&["Val"]).unwrap(), entries)
            .unwrap();
        let s = derive_prediction_splits(&mt, Vec::<String>::new());
        assert_eq!(s.p_train, s.mt_train);
        assert_eq!(s.p_dev, s.mt_dev);
        assert_eq!(s.p_test, s.mt_test);
    }

    fn predicted(entries: Vec<(&str, Vec<f64>)>) -> Lexicon {
        let entries = entries
            .into_iter()
            .map(|(w, v)| LexiconEntry::new(w, v).with_provenance(Provenance::Predicted))
            .collect();
        Lexicon::with_builtin_scales("de", VariableSet::new(&["Val", "Aro"]).unwrap(), entries)
            .unwrap()
    }

    #[test]
    fn collapse_exact_and_near_duplicates() {
        let lex = predicted(vec![("bank", vec![5.0, 3.0]), ("bank", vec![5.0, 3.0])]);
        let out = collapse_duplicates(&lex, DEFAULT_DUPLICATE_TOL).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out.is_unique());

        let near = predicted(vec![
            ("bank", vec![5.0, 3.0]),
            ("river", vec![4.0, 2.0]),
            ("bank", vec![5.0 + 1e-9, 3.0]),
        ]);
        let out = collapse_duplicates(&near, 1e-6).unwrap();
        assert_eq!(out.distinct_words(), vec!["bank", "river"]);
        assert_eq!(out.entries()[0].emotions.values(), &[5.0, 3.0]);

        let unique = predicted(vec![("a", vec![1.0, 1.0]), ("b", vec![2.0, 2.0])]);
        assert_eq!(collapse_duplicates(&unique, 1e-6).unwrap().entries(), unique.entries());
    }

    #[test]
    fn collapse_rejects_spread_and_non_predicted() {
        let lex = predicted(vec![("bank", vec![5.0, 3.0]), ("bank", vec![6.0, 3.0])]);
        assert!(matches!(
            collapse_duplicates(&lex, 1e-6),
            Err(LexiconError::Integrity { .. })
        ));
        let human = lex_from(&["a"]);
        assert!(matches!(
            collapse_duplicates(&human, 1e-6),
            Err(LexiconError::Precondition(_))
        ));
    }

    #[test]
    fn variable_set_invariants() {
        assert!(VariableSet::new::<&str>(&[]).is_err());
        assert!(VariableSet::new(&["Val", "Val"]).is_err());
        assert_eq!(VariableSet::vad().family(), Family::Dimensional);
        assert_eq!(VariableSet::be5().family(), Family::Discrete);
        let all = VariableSet::vad().concat(&VariableSet::be5()).unwrap();
        assert_eq!(all.len(), 8);
        assert_eq!(all.family(), Family::Other);
        assert!(VariableSet::vad().concat(&VariableSet::vad()).is_err());
        assert!(ScaleSpec::new(5.0, 1.0, 3.0).is_err());
        assert!(ScaleSpec::new(1.0, 5.0, 6.0).is_err());
    }

    fn word_strategy() -> impl Strategy<Value = String> {
        // lowercase, uppercase, and spaces so the filter has work to do
        "[a-cA-C ]{1,4}".prop_filter("non-blank", |w| !w.trim().is_empty())
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(words in proptest::collection::vec(word_strategy(), 0..30)) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let lex = lex_from(&refs);
            let once = filter_source_entries(&lex);
            prop_assert_eq!(filter_source_entries(&once), once);
        }

        #[test]
        fn reference_split_is_partition(
            words in proptest::collection::btree_set("[a-f]{1,3}", 0..40),
            test in proptest::collection::hash_set("[a-f]{1,3}", 0..20),
            dev in proptest::collection::hash_set("[a-f]{1,3}", 0..20),
        ) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let lex = lex_from(&refs);
            let tagged = split_by_reference(&lex, &test, &dev).unwrap();
            let c = tagged.split_counts();
            prop_assert_eq!(c.train + c.dev + c.test, words.len());
            prop_assert_eq!(c.none, 0);
            for e in tagged.entries() {
                prop_assert!(!(e.split == Split::Dev && test.contains(&e.word)));
            }
        }

        #[test]
        fn tsv_round_trip(
            rows in proptest::collection::vec(
                ("[a-zäöü' -]{0,6}[a-z]", -1.0e6f64..1.0e6, -3.0f64..3.0, 0usize..4),
                0..25,
            )
        ) {
            let entries = rows
                .iter()
                .map(|(w, a, b, s)| {
                    let split = [Split::Train, Split::Dev, Split::Test, Split::None][*s];
                    LexiconEntry::new(w.as_str(), vec![*a, *b]).with_split(split)
                })
                .collect();
            let vars = VariableSet::new(&["x1", "x2"]).unwrap();
            let lex = Lexicon::with_builtin_scales("und", vars, entries).unwrap();
            let mut buf = Vec::new();
            write_lexicon(&lex, &mut buf).unwrap();
            let back = parse_lexicon(buf.as_slice(), &ParseOptions::default()).unwrap();
            prop_assert_eq!(back.entries(), lex.entries());
            prop_assert_eq!(back.variables(), lex.variables());
        }

        #[test]
        fn collapse_keeps_one_entry_per_word(
            words in proptest::collection::vec("[a-e]", 0..40)
        ) {
            let entries: Vec<(&str, Vec<f64>)> = words
                .iter()
                .map(|w| (w.as_str(), vec![w.as_bytes()[0] as f64, 1.0]))
                .collect();
            let lex = predicted(entries);
            let out = collapse_duplicates(&lex, 1e-6).unwrap();
            let distinct: HashSet<&String> = words.iter().collect();
            prop_assert_eq!(out.len(), distinct.len());
            prop_assert!(out.is_unique());
        }
    }
}
