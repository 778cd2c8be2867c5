//! Correlation-based evaluation of generated lexicons.
//!
//! Every protocol intersects word types, aligns ratings per variable, and
//! reports Pearson's r. Predicted entries are only ever read from the split
//! the protocol is defined on.

mod report;

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::lexicon::{Lexicon, SplitSets};

pub use report::{
    format_score, merge_reports, meta_from_reports, parse_tables_tsv, read_reports, render_human,
    render_tsv, tables_for, write_reports, Cell, EvalReport, Protocol, Table, VariableScore,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("series lengths differ ({0} vs {1})")]
    Length(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("non-finite observation")]
    NonFinite,
    #[error("zero variance{}; correlation undefined", .variable.as_ref().map(|v| format!(" for {v}")).unwrap_or_default())]
    DegenerateVariance { variable: Option<String> },
    #[error("insufficient overlap: {n} shared items{}, need at least 2", .context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    InsufficientOverlap { n: usize, context: Option<String> },
    #[error("lexicon `{0}` has duplicate word types")]
    NotUnique(String),
    #[error("no shared variables between {0}")]
    NoSharedVariables(String),
    #[error("cannot merge reports: {0}")]
    Merge(String),
    #[error("malformed report table at line {line}: {message}")]
    Table { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sample Pearson correlation coefficient.
///
/// Fails on a constant series instead of returning 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::Length(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(EvalError::TooShort(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    if constant(x) || constant(y) {
        return Err(EvalError::DegenerateVariance { variable: None });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateVariance { variable: None });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn pearson_for(variable: &str, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    pearson(x, y).map_err(|e| match e {
        EvalError::DegenerateVariance { .. } => {
            EvalError::DegenerateVariance { variable: Some(variable.to_string()) }
        }
        other => other,
    })
}

fn require_unique(lex: &Lexicon, id: &str) -> Result<(), EvalError> {
    if lex.is_unique() {
        Ok(())
    } else {
        Err(EvalError::NotUnique(id.to_string()))
    }
}

fn shared_variables(a: &Lexicon, b: &Lexicon, what: &str) -> Result<Vec<String>, EvalError> {
    let vars = b.variables().intersection(a.variables());
    if vars.is_empty() {
        Err(EvalError::NoSharedVariables(what.to_string()))
    } else {
        Ok(vars)
    }
}

/// Aligned value pairs: `(left entry index, right entry index)`.
type Pairs = Vec<(usize, usize)>;

/// Per-variable correlation over aligned entry pairs.
fn correlate_pairs(
    left: &Lexicon,
    right: &Lexicon,
    pairs: &Pairs,
    variables: &[String],
) -> Result<Vec<VariableScore>, EvalError> {
    variables
        .iter()
        .map(|v| {
            let li = left.variables().index_of(v).expect("shared variable");
            let ri = right.variables().index_of(v).expect("shared variable");
            let xs: Vec<f64> = pairs.iter().map(|&(l, _)| left.entries()[l].emotions.get(li)).collect();
            let ys: Vec<f64> = pairs.iter().map(|&(_, r)| right.entries()[r].emotions.get(ri)).collect();
            Ok(VariableScore { variable: v.clone(), values: vec![pearson_for(v, &xs, &ys)?], n: pairs.len() })
        })
        .collect()
}

fn check_overlap(n: usize, context: &str) -> Result<(), EvalError> {
    if n < 2 {
        Err(EvalError::InsufficientOverlap { n, context: Some(context.to_string()) })
    } else {
        Ok(())
    }
}

/// Correlates two word-unique lexicons on their shared words, per variable.
pub fn correlate_lexicons(
    a: &Lexicon,
    a_id: &str,
    b: &Lexicon,
    b_id: &str,
    variables: &[String],
) -> Result<EvalReport, EvalError> {
    require_unique(a, a_id)?;
    require_unique(b, b_id)?;
    for v in variables {
        if !a.variables().contains(v) || !b.variables().contains(v) {
            return Err(EvalError::NoSharedVariables(format!("{a_id} and {b_id} on {v}")));
        }
    }
    let b_index = b.index();
    let pairs: Pairs = a
        .entries()
        .iter()
        .enumerate()
        .filter_map(|(i, e)| b_index.get(e.word.as_str()).map(|&j| (i, j)))
        .collect();
    check_overlap(pairs.len(), &format!("{a_id} vs {b_id}"))?;
    let scores = correlate_pairs(a, b, &pairs, variables)?;
    Ok(EvalReport {
        protocol: Protocol::Pairwise,
        language: a.language().to_string(),
        ids: vec![a_id.to_string(), b_id.to_string()],
        n: pairs.len(),
        coverage: None,
        columns: vec!["r".into()],
        scores,
    })
}

/// TargetMT-test against TargetPred-test.
///
/// Each MT-test entry whose word lies in the predicted test split contributes
/// one pair, so partial duplicates pair with the single predicted value.
pub fn silver_eval(mt: &Lexicon, pred: &Lexicon, splits: &SplitSets) -> Result<EvalReport, EvalError> {
    require_unique(pred, "TargetPred")?;
    let variables = shared_variables(mt, pred, "TargetMT and TargetPred")?;
    let pred_index = pred.index();
    let pairs: Pairs = mt
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| splits.mt_test.contains(&e.word) && splits.p_test.contains(&e.word))
        .filter_map(|(i, e)| pred_index.get(e.word.as_str()).map(|&j| (i, j)))
        .collect();
    let words: HashSet<&str> = pairs.iter().map(|&(i, _)| mt.entries()[i].word.as_str()).collect();
    check_overlap(pairs.len(), "TargetMT-test vs TargetPred-test")?;
    let scores = correlate_pairs(mt, pred, &pairs, &variables)?;
    Ok(EvalReport {
        protocol: Protocol::Silver,
        language: pred.language().to_string(),
        ids: vec!["TargetMT-test".into(), "TargetPred-test".into()],
        n: words.len(),
        coverage: None,
        columns: vec!["r".into()],
        scores,
    })
}

/// Human gold ratings against TargetPred-test.
///
/// Variables missing from the gold lexicon are skipped. Coverage is the
/// shared count relative to the gold lexicon's size.
pub fn gold_eval(
    gold: &Lexicon,
    gold_id: &str,
    pred: &Lexicon,
    splits: &SplitSets,
) -> Result<EvalReport, EvalError> {
    require_unique(gold, gold_id)?;
    require_unique(pred, "TargetPred")?;
    let variables = shared_variables(gold, pred, &format!("{gold_id} and TargetPred"))?;
    let pred_index = pred.index();
    let pairs: Pairs = gold
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| splits.p_test.contains(&e.word))
        .filter_map(|(i, e)| pred_index.get(e.word.as_str()).map(|&j| (i, j)))
        .collect();
    check_overlap(pairs.len(), &format!("{gold_id} vs TargetPred-test"))?;
    let scores = correlate_pairs(gold, pred, &pairs, &variables)?;
    Ok(EvalReport {
        protocol: Protocol::Gold,
        language: pred.language().to_string(),
        ids: vec![gold_id.to_string(), "TargetPred-test".into()],
        n: pairs.len(),
        coverage: Some(pairs.len() as f64 / gold.len() as f64),
        columns: vec!["r".into()],
        scores,
    })
}

/// Two gold lexicons and TargetPred-test on their common words: per variable
/// the three pairwise correlations G1vsG2, G1vsPr, G2vsPr.
pub fn isr_compare(
    gold1: &Lexicon,
    id1: &str,
    gold2: &Lexicon,
    id2: &str,
    pred: &Lexicon,
    splits: &SplitSets,
) -> Result<EvalReport, EvalError> {
    require_unique(gold1, id1)?;
    require_unique(gold2, id2)?;
    require_unique(pred, "TargetPred")?;
    let variables: Vec<String> = shared_variables(gold1, gold2, &format!("{id1} and {id2}"))?
        .into_iter()
        .filter(|v| pred.variables().contains(v))
        .collect();
    if variables.is_empty() {
        return Err(EvalError::NoSharedVariables(format!("{id1}, {id2} and TargetPred")));
    }
    let g2 = gold2.index();
    let pr = pred.index();
    let triples: Vec<(usize, usize, usize)> = gold1
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| splits.p_test.contains(&e.word))
        .filter_map(|(i, e)| {
            let w = e.word.as_str();
            Some((i, *g2.get(w)?, *pr.get(w)?))
        })
        .collect();
    check_overlap(triples.len(), &format!("{id1} / {id2} / TargetPred-test"))?;
    let column = |lex: &Lexicon, var: &str, pick: &dyn Fn(&(usize, usize, usize)) -> usize| {
        let vi = lex.variables().index_of(var).expect("shared variable");
        triples.iter().map(|t| lex.entries()[pick(t)].emotions.get(vi)).collect::<Vec<f64>>()
    };
    let scores = variables
        .iter()
        .map(|v| {
            let a = column(gold1, v, &|t| t.0);
            let b = column(gold2, v, &|t| t.1);
            let p = column(pred, v, &|t| t.2);
            Ok(VariableScore {
                variable: v.clone(),
                values: vec![pearson_for(v, &a, &b)?, pearson_for(v, &a, &p)?, pearson_for(v, &b, &p)?],
                n: triples.len(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport {
        protocol: Protocol::Isr,
        language: pred.language().to_string(),
        ids: vec![id1.to_string(), id2.to_string(), "TargetPred-test".into()],
        n: triples.len(),
        coverage: None,
        columns: vec!["G1vsG2".into(), "G1vsPr".into(), "G2vsPr".into()],
        scores,
    })
}

/// Gold agreement of TargetPred-train versus TargetMT-train on the gold words
/// known at training time. Columns are Pred, MT, and Diff = Pred - MT.
///
/// Every MT-train entry of a shared word contributes one (gold, MT) pair.
pub fn mt_vs_pred(
    gold: &Lexicon,
    gold_id: &str,
    mt: &Lexicon,
    pred: &Lexicon,
    splits: &SplitSets,
) -> Result<EvalReport, EvalError> {
    require_unique(gold, gold_id)?;
    require_unique(pred, "TargetPred")?;
    let variables: Vec<String> = shared_variables(gold, pred, &format!("{gold_id} and TargetPred"))?
        .into_iter()
        .filter(|v| mt.variables().contains(v))
        .collect();
    if variables.is_empty() {
        return Err(EvalError::NoSharedVariables(format!("{gold_id}, TargetMT and TargetPred")));
    }
    let gold_index = gold.index();
    let pred_index = pred.index();
    let support = |w: &str| {
        splits.mt_train.contains(w)
            && splits.p_train.contains(w)
            && gold_index.contains_key(w)
            && pred_index.contains_key(w)
    };
    let mt_pairs: Pairs = mt
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == crate::lexicon::Split::Train && support(&e.word))
        .map(|(i, e)| (gold_index[e.word.as_str()], i))
        .collect();
    let mut seen = HashSet::new();
    let pred_pairs: Pairs = mt_pairs
        .iter()
        .map(|&(g, i)| (g, &mt.entries()[i].word))
        .filter(|(_, w)| seen.insert(w.as_str()))
        .map(|(g, w)| (g, pred_index[w.as_str()]))
        .collect();
    check_overlap(pred_pairs.len(), &format!("{gold_id} vs train sets"))?;
    let pred_scores = correlate_pairs(gold, pred, &pred_pairs, &variables)?;
    let mt_scores = correlate_pairs(gold, mt, &mt_pairs, &variables)?;
    let scores = pred_scores
        .into_iter()
        .zip(mt_scores)
        .map(|(p, m)| VariableScore {
            variable: p.variable,
            values: vec![p.values[0], m.values[0], p.values[0] - m.values[0]],
            n: pred_pairs.len(),
        })
        .collect();
    Ok(EvalReport {
        protocol: Protocol::MtVsPred,
        language: pred.language().to_string(),
        ids: vec![gold_id.to_string(), "TargetPred-train".into(), "TargetMT-train".into()],
        n: pred_pairs.len(),
        coverage: None,
        columns: vec!["Pred".into(), "MT".into(), "Diff".into()],
        scores,
    })
}

/// Per-language, per-variable correlations of one evaluation kind.
pub type LanguageResults = Vec<(String, BTreeMap<String, f64>)>;

/// Outcome of [`meta_agreement`]: the variables that could be correlated and
/// the reason each remaining variable could not.
#[derive(Debug)]
pub struct MetaAgreement {
    pub report: EvalReport,
    pub failures: Vec<(String, EvalError)>,
}

/// Correlates gold against silver results across languages, per variable.
///
/// Several gold results for one language are averaged first; variables are
/// taken in order of first appearance in `gold`.
pub fn meta_agreement(gold: &LanguageResults, silver: &LanguageResults) -> MetaAgreement {
    fn averaged(results: &LanguageResults) -> (Vec<String>, HashMap<(String, String), f64>) {
        let mut order = Vec::new();
        let mut sums: HashMap<(String, String), (f64, usize)> = HashMap::new();
        for (lang, vars) in results {
            for (var, r) in vars {
                if !order.contains(var) {
                    order.push(var.clone());
                }
                let e = sums.entry((lang.clone(), var.clone())).or_insert((0.0, 0));
                e.0 += r;
                e.1 += 1;
            }
        }
        let means = sums.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect();
        (order, means)
    }
    let mut languages: Vec<String> = Vec::new();
    for (lang, _) in gold {
        if !languages.contains(lang) {
            languages.push(lang.clone());
        }
    }
    let (variables, gold_means) = averaged(gold);
    let (_, silver_means) = averaged(silver);

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    let mut used_languages = HashSet::new();
    for var in &variables {
        let (mut g, mut s) = (Vec::new(), Vec::new());
        for lang in &languages {
            let key = (lang.clone(), var.clone());
            if let (Some(a), Some(b)) = (gold_means.get(&key), silver_means.get(&key)) {
                g.push(*a);
                s.push(*b);
                used_languages.insert(lang.clone());
            }
        }
        if g.len() < 2 {
            failures.push((
                var.clone(),
                EvalError::InsufficientOverlap { n: g.len(), context: Some(format!("languages for {var}")) },
            ));
            continue;
        }
        match pearson_for(var, &g, &s) {
            Ok(r) => scores.push(VariableScore { variable: var.clone(), values: vec![r], n: g.len() }),
            Err(e) => failures.push((var.clone(), e)),
        }
    }
    MetaAgreement {
        report: EvalReport {
            protocol: Protocol::Meta,
            language: "multi".into(),
            ids: vec!["gold".into(), "silver".into()],
            n: used_languages.len(),
            coverage: None,
            columns: vec!["r".into()],
            scores,
        },
        failures,
    }
}
