//! Evaluation reports, their JSON form, and tabular rendering.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{meta_agreement, EvalError, LanguageResults, MetaAgreement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Pairwise,
    Silver,
    Gold,
    Isr,
    MtVsPred,
    Meta,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Pairwise => "pairwise",
            Protocol::Silver => "silver",
            Protocol::Gold => "gold",
            Protocol::Isr => "isr",
            Protocol::MtVsPred => "mt_vs_pred",
            Protocol::Meta => "meta",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Pairwise, Self::Silver, Self::Gold, Self::Isr, Self::MtVsPred, Self::Meta]
            .into_iter()
            .find(|p| p.as_str() == s)
    }

    /// Decimals shown for correlations in human-readable tables.
    fn decimals(&self) -> usize {
        match self {
            Protocol::Isr | Protocol::MtVsPred => 3,
            _ => 2,
        }
    }
}

/// Scores of one variable; `values` line up with [`EvalReport::columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableScore {
    pub variable: String,
    pub values: Vec<f64>,
    /// Number of aligned observations behind each value.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub language: String,
    /// Identifiers of the compared lexicons.
    pub ids: Vec<String>,
    /// Shared word types (languages for `meta`).
    pub n: usize,
    /// Shared count over the gold lexicon's size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub columns: Vec<String>,
    pub scores: Vec<VariableScore>,
}

impl EvalReport {
    pub fn score(&self, variable: &str) -> Option<&VariableScore> {
        self.scores.iter().find(|s| s.variable == variable)
    }

    fn key(&self) -> (Protocol, &str, &[String]) {
        (self.protocol, &self.language, &self.ids)
    }
}

/// Reads a JSON file holding a report or an array of reports.
pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>, EvalError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<EvalReport>),
        One(EvalReport),
    }
    let file = BufReader::new(File::open(path)?);
    Ok(match serde_json::from_reader(file)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(r) => vec![r],
    })
}

pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<(), EvalError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, reports)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Deduplicates reports by protocol, language and identifiers. Two reports
/// with the same key but different content are a conflict.
pub fn merge_reports(reports: Vec<EvalReport>) -> Result<Vec<EvalReport>, EvalError> {
    let mut merged: Vec<EvalReport> = Vec::new();
    for r in reports {
        match merged.iter().find(|m| m.key() == r.key()) {
            Some(m) if *m == r => {}
            Some(m) => {
                return Err(EvalError::Merge(format!(
                    "conflicting {} reports for {} [{}]",
                    m.protocol.as_str(),
                    m.language,
                    m.ids.join(", ")
                )))
            }
            None => merged.push(r),
        }
    }
    Ok(merged)
}

/// Cross-language agreement of gold and silver results found among
/// `reports`, or `None` when either kind is absent.
pub fn meta_from_reports(reports: &[EvalReport]) -> Option<MetaAgreement> {
    let collect = |p: Protocol| -> LanguageResults {
        reports
            .iter()
            .filter(|r| r.protocol == p)
            .map(|r| (r.language.clone(), r.scores.iter().map(|s| (s.variable.clone(), s.values[0])).collect()))
            .collect()
    };
    let gold = collect(Protocol::Gold);
    let silver = collect(Protocol::Silver);
    if gold.is_empty() || silver.is_empty() {
        return None;
    }
    Some(meta_agreement(&gold, &silver))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(usize),
    Real(f64),
    Missing,
}

const MISSING: &str = "---";
const TEXT_HEADERS: [&str; 5] = ["", "ID", "Gold1", "Gold2", "Emo"];

/// A rendered table in full precision; rounding happens only when printing.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub protocol: Protocol,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// Union of the report variables in first-appearance order. Reports that
/// order shared variables differently cannot share columns.
fn variable_columns(reports: &[&EvalReport]) -> Result<Vec<String>, EvalError> {
    let mut union: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.scores {
            if !union.contains(&s.variable) {
                union.push(s.variable.clone());
            }
        }
    }
    for r in reports {
        let pos: Vec<usize> = r
            .scores
            .iter()
            .map(|s| union.iter().position(|u| *u == s.variable).expect("in union"))
            .collect();
        if pos.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Merge(format!(
                "variable order of {} report for {} conflicts with earlier reports",
                r.protocol.as_str(),
                r.language
            )));
        }
    }
    Ok(union)
}

/// Builds one table per protocol present in `reports`.
pub fn tables_for(reports: &[EvalReport]) -> Result<Vec<Table>, EvalError> {
    let order = [
        Protocol::Silver,
        Protocol::Gold,
        Protocol::Pairwise,
        Protocol::Isr,
        Protocol::MtVsPred,
        Protocol::Meta,
    ];
    let mut tables = Vec::new();
    for protocol in order {
        let group: Vec<&EvalReport> = reports.iter().filter(|r| r.protocol == protocol).collect();
        if group.is_empty() {
            continue;
        }
        tables.push(match protocol {
            Protocol::Silver | Protocol::Gold | Protocol::Pairwise => shared_table(protocol, &group)?,
            Protocol::Isr => isr_table(&group),
            Protocol::MtVsPred => mt_vs_pred_table(&group)?,
            Protocol::Meta => meta_table(&group)?,
        });
    }
    Ok(tables)
}

fn shared_table(protocol: Protocol, group: &[&EvalReport]) -> Result<Table, EvalError> {
    let vars = variable_columns(group)?;
    let mut header = vec!["ID".to_string(), "Shared".into(), "%".into()];
    header.extend(vars.iter().cloned());
    let rows = group
        .iter()
        .map(|r| {
            let id = match protocol {
                Protocol::Silver => r.language.clone(),
                Protocol::Gold => r.ids[0].clone(),
                _ => r.ids.join(" vs "),
            };
            let mut row = vec![
                Cell::Text(id),
                Cell::Int(r.n),
                r.coverage.map_or(Cell::Missing, |c| Cell::Real(c * 100.0)),
            ];
            row.extend(vars.iter().map(|v| r.score(v).map_or(Cell::Missing, |s| Cell::Real(s.values[0]))));
            row
        })
        .collect();
    Ok(Table { protocol, header, rows })
}

fn isr_table(group: &[&EvalReport]) -> Table {
    let header = ["Gold1", "Gold2", "Shared", "Emo", "G1vsG2", "G1vsPr", "G2vsPr"]
        .map(String::from)
        .to_vec();
    let rows = group
        .iter()
        .flat_map(|r| {
            r.scores.iter().map(move |s| {
                let mut row = vec![
                    Cell::Text(r.ids[0].clone()),
                    Cell::Text(r.ids[1].clone()),
                    Cell::Int(r.n),
                    Cell::Text(s.variable.clone()),
                ];
                row.extend(s.values.iter().map(|&v| Cell::Real(v)));
                row
            })
        })
        .collect();
    Table { protocol: Protocol::Isr, header, rows }
}

/// Means over all gold lexicons per variable; Diff is mean Pred - mean MT.
fn mt_vs_pred_table(group: &[&EvalReport]) -> Result<Table, EvalError> {
    let vars = variable_columns(group)?;
    let mut header = vec![String::new()];
    header.extend(vars.iter().cloned());
    let mean = |v: &str, col: usize| {
        let xs: Vec<f64> = group.iter().filter_map(|r| r.score(v)).map(|s| s.values[col]).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let mut rows = Vec::new();
    for (label, col) in [("Pred", 0), ("MT", 1)] {
        let mut row = vec![Cell::Text(label.into())];
        row.extend(vars.iter().map(|v| Cell::Real(mean(v, col))));
        rows.push(row);
    }
    let mut diff = vec![Cell::Text("Diff".into())];
    diff.extend(vars.iter().map(|v| Cell::Real(mean(v, 0) - mean(v, 1))));
    rows.push(diff);
    Ok(Table { protocol: Protocol::MtVsPred, header, rows })
}

fn meta_table(group: &[&EvalReport]) -> Result<Table, EvalError> {
    let vars = variable_columns(group)?;
    let mut header = vec![String::new()];
    header.extend(vars.iter().cloned());
    let mut rows = Vec::new();
    for r in group {
        let mut lg = vec![Cell::Text("#Lg".into())];
        lg.extend(vars.iter().map(|v| r.score(v).map_or(Cell::Missing, |s| Cell::Int(s.n))));
        let mut rr = vec![Cell::Text("r".into())];
        rr.extend(vars.iter().map(|v| r.score(v).map_or(Cell::Missing, |s| Cell::Real(s.values[0]))));
        rows.push(lg);
        rows.push(rr);
    }
    Ok(Table { protocol: Protocol::Meta, header, rows })
}

/// Correlation with two decimals and no leading zero: `.94`, `-.12`.
pub fn format_score(v: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, v.abs());
    let s = s.strip_prefix('0').unwrap_or(&s).to_string();
    let negative = v < 0.0 && s.chars().any(|c| ('1'..='9').contains(&c));
    if negative {
        format!("-{s}")
    } else {
        s
    }
}

fn human_cell(cell: &Cell, header: &str, protocol: Protocol) -> String {
    match cell {
        Cell::Text(s) => s.clone(),
        Cell::Int(n) => n.to_string(),
        Cell::Missing => MISSING.into(),
        Cell::Real(v) if header == "%" => format!("{v:.0}"),
        Cell::Real(v) => format_score(*v, protocol.decimals()),
    }
}

/// Fixed-width text tables, one block per protocol.
pub fn render_human(tables: &[Table]) -> String {
    let mut out = String::new();
    for (t, table) in tables.iter().enumerate() {
        if t > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "[{}]", table.protocol.as_str());
        let cells: Vec<Vec<String>> = std::iter::once(table.header.clone())
            .chain(table.rows.iter().map(|row| {
                row.iter()
                    .zip(&table.header)
                    .map(|(c, h)| human_cell(c, h, table.protocol))
                    .collect()
            }))
            .collect();
        let widths: Vec<usize> = (0..table.header.len())
            .map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if TEXT_HEADERS.contains(&table.header[j].as_str()) {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
    }
    out
}

fn tsv_cell(cell: &Cell) -> String {
    match cell {
        Cell::Text(s) => s.clone(),
        Cell::Int(n) => n.to_string(),
        Cell::Real(v) => format!("{v:?}"),
        Cell::Missing => MISSING.into(),
    }
}

/// Tab-separated tables in full precision, separated by blank lines. Each
/// table starts with a `# <protocol>` line followed by its header.
pub fn render_tsv(tables: &[Table]) -> String {
    let mut out = String::new();
    for (t, table) in tables.iter().enumerate() {
        if t > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# {}", table.protocol.as_str());
        let _ = writeln!(out, "{}", table.header.join("\t"));
        for row in &table.rows {
            let cells: Vec<String> = row.iter().map(tsv_cell).collect();
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
    }
    out
}

fn parse_cell(s: &str, header: &str) -> Cell {
    if TEXT_HEADERS.contains(&header) {
        return Cell::Text(s.to_string());
    }
    if s == MISSING {
        return Cell::Missing;
    }
    if s.bytes().all(|b| b.is_ascii_digit()) && !s.is_empty() {
        if let Ok(n) = s.parse() {
            return Cell::Int(n);
        }
    }
    match s.parse::<f64>() {
        Ok(v) => Cell::Real(v),
        Err(_) => Cell::Text(s.to_string()),
    }
}

/// Inverse of [`render_tsv`].
pub fn parse_tables_tsv(text: &str) -> Result<Vec<Table>, EvalError> {
    let mut tables = Vec::new();
    let mut current: Option<Table> = None;
    let mut expect_header = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let err = |message: String| EvalError::Table { line: lineno, message };
        if line.is_empty() {
            tables.extend(current.take());
            continue;
        }
        if let Some(tag) = line.strip_prefix("# ") {
            tables.extend(current.take());
            let protocol = Protocol::parse(tag).ok_or_else(|| err(format!("unknown protocol `{tag}`")))?;
            current = Some(Table { protocol, header: Vec::new(), rows: Vec::new() });
            expect_header = true;
            continue;
        }
        let table = current.as_mut().ok_or_else(|| err("row outside a table".into()))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if expect_header {
            table.header = fields.iter().map(|s| s.to_string()).collect();
            expect_header = false;
        } else {
            if fields.len() != table.header.len() {
                return Err(err(format!("{} fields, header has {}", fields.len(), table.header.len())));
            }
            table.rows.push(fields.iter().zip(&table.header).map(|(f, h)| parse_cell(f, h)).collect());
        }
    }
    tables.extend(current);
    Ok(tables)
}
