//! Word-emotion regressors, checkpoints, and lexicon expansion.

mod gradcheck;
mod mtlffn;
mod ridge;

use std::io::{Read, Write};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingStore;
use crate::lexicon::{
    collapse_duplicates, Lexicon, LexiconEntry, LexiconError, Provenance, ScaleSpec, SplitSets,
    VariableSet,
};

pub use gradcheck::{
    grad_check, grad_check_model, relative_error, GradCheckReport, TensorError, FD_STEP,
    REL_ERROR_FLOOR,
};
pub use mtlffn::{fit_mtlffn, Dense, MtlffnModel, TrainConfig, TrainLog};
pub use ridge::{fit_ridge, RidgeModel, DEFAULT_ALPHA};

pub const CHECKPOINT_FORMAT: &str = "lexiforge-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("input has {found} columns, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("training diverged (non-finite loss) at step {step}")]
    Divergence { step: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

pub(crate) fn check_training_data(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<(), ModelError> {
    if x.nrows() == 0 {
        return Err(ModelError::Data("no training rows".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(ModelError::Data(format!("{} input rows, {} target rows", x.nrows(), y.nrows())));
    }
    if y.ncols() == 0 {
        return Err(ModelError::Data("no target columns".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(ModelError::Data("non-finite values".into()));
    }
    Ok(())
}

/// Which regressor to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Mtlffn,
    Ridge,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mtlffn" => Ok(Self::Mtlffn),
            "ridge" => Ok(Self::Ridge),
            other => Err(format!("unknown model `{other}` (expected mtlffn|ridge)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regressor {
    Mtlffn(MtlffnModel),
    Ridge(RidgeModel),
}

impl Regressor {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        match self {
            Regressor::Mtlffn(m) => m.predict(x),
            Regressor::Ridge(m) => m.predict(x),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Regressor::Mtlffn(m) => m.output_dim(),
            Regressor::Ridge(m) => m.output_dim(),
        }
    }
}

/// A regressor together with the variables its outputs stand for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variables: VariableSet,
    pub scales: Vec<ScaleSpec>,
    pub config: Option<TrainConfig>,
    pub regressor: Regressor,
}

impl TrainedModel {
    /// Fits `kind` on `x` against `y`, whose columns are `variables`.
    pub fn fit(
        kind: ModelKind,
        variables: VariableSet,
        scales: Vec<ScaleSpec>,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        cfg: &TrainConfig,
        ridge_alpha: f64,
    ) -> Result<(Self, Option<TrainLog>), ModelError> {
        if y.ncols() != variables.len() {
            return Err(ModelError::Data(format!(
                "{} target columns for {} variables",
                y.ncols(),
                variables.len()
            )));
        }
        let (regressor, config, log) = match kind {
            ModelKind::Mtlffn => {
                let (m, log) = fit_mtlffn(x, y, cfg)?;
                (Regressor::Mtlffn(m), Some(cfg.clone()), Some(log))
            }
            ModelKind::Ridge => (Regressor::Ridge(fit_ridge(x, y, ridge_alpha)?), None, None),
        };
        Ok((Self { variables, scales, config, regressor }, log))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: TrainedModel,
}

/// Writes a JSON checkpoint. Floats are written in shortest round-trip form
/// so reading it back restores every parameter bit for bit.
pub fn write_checkpoint<W: Write>(model: &TrainedModel, out: W) -> Result<(), ModelError> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    serde_json::to_writer(out, &file).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<TrainedModel, ModelError> {
    let file: CheckpointFile =
        serde_json::from_reader(input).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unknown format `{}`", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {}", file.version)));
    }
    Ok(file.model)
}

/// Training matrices from the train split of a translated lexicon: one row
/// per entry, partial duplicates included.
pub fn training_data(
    store: &EmbeddingStore,
    mt: &Lexicon,
    variables: &[String],
) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
    let train = mt.filtered(|e| e.split == crate::lexicon::Split::Train);
    let train = train.select_variables(variables)?;
    let words: Vec<&str> = train.entries().iter().map(|e| e.word.as_str()).collect();
    let (x, _) = store.embed_matrix(&words);
    let mut y = Array2::zeros((train.len(), variables.len()));
    for (mut row, e) in y.rows_mut().into_iter().zip(train.entries()) {
        row.iter_mut().zip(e.emotions.values()).for_each(|(r, v)| *r = *v);
    }
    Ok((x, y))
}

/// Predicts ratings for every word of `mt` and of the embedding vocabulary.
///
/// Rows are predicted per translated entry (duplicates included) followed by
/// the vocabulary words not in `mt`; the outputs of all models are
/// concatenated column-wise, tagged with their prediction split, and merged
/// per word type within `tol`.
pub fn expand_lexicon(
    models: &[TrainedModel],
    store: &EmbeddingStore,
    mt: &Lexicon,
    splits: &SplitSets,
    tol: f64,
) -> Result<Lexicon, ModelError> {
    let first = models
        .first()
        .ok_or_else(|| ModelError::Config("expansion needs at least one model".into()))?;
    let mut variables = first.variables.clone();
    let mut scales = first.scales.clone();
    for m in &models[1..] {
        variables = variables.concat(&m.variables)?;
        scales.extend(&m.scales);
    }

    let in_mt: std::collections::HashSet<&str> =
        mt.entries().iter().map(|e| e.word.as_str()).collect();
    let words: Vec<&str> = mt
        .entries()
        .iter()
        .map(|e| e.word.as_str())
        .chain(store.words().iter().map(String::as_str).filter(|w| !in_mt.contains(w)))
        .collect();
    let (x, _) = store.embed_matrix(&words);
    let outputs = models
        .iter()
        .map(|m| m.regressor.predict(x.view()))
        .collect::<Result<Vec<_>, _>>()?;
    let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
    let y = concatenate(Axis(1), &views).map_err(|e| ModelError::Numeric(e.to_string()))?;

    let entries = words
        .iter()
        .zip(y.rows())
        .map(|(w, row)| LexiconEntry {
            word: w.to_string(),
            emotions: row.to_vec().into(),
            split: splits.p_split_of(w),
            provenance: Provenance::Predicted,
        })
        .collect();
    let raw = Lexicon::new(mt.language(), variables, scales, entries)?;
    Ok(collapse_duplicates(&raw, tol)?)
}

/// Pearson r of matching columns; used by tests and diagnostics.
#[cfg(test)]
pub(crate) fn pearson_columns(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    a.columns()
        .into_iter()
        .zip(b.columns())
        .map(|(x, y)| crate::evaluation::pearson(&x.to_vec(), &y.to_vec()).unwrap())
        .collect()
}
