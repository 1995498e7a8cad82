//! Automatic metrics and report generation: the coverage rubric, a
//! token-overlap P/R/F1 as a lightweight stand-in for embedding-based
//! similarity, JSON reports, and CSV annotation sheets for human scoring.
//!
//! Token overlap is deliberately simple: the report keeps the
//! precision/recall/F1 shape, so an embedding-based scorer can be swapped in
//! externally without changing the schema.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::CostModel;
use crate::corpus::XgecExample;
use crate::edits::{extract_edits, format_edit, Edit};
use crate::pi::{ExplanationRecord, PiResult};
use crate::text::tokenize;

/// How completely a set of explanation records mentions the gold edits,
/// on the 0-2 rubric: 2 when everything is covered (vacuously for zero gold
/// edits), 1 when more than half is, 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageScore {
    pub covered: usize,
    pub total: usize,
    pub rubric_level: u8,
}

impl CoverageScore {
    pub fn new(covered: usize, total: usize) -> Self {
        debug_assert!(covered <= total);
        let rubric_level = if covered == total {
            2
        } else if 2 * covered > total {
            1
        } else {
            0
        };
        CoverageScore {
            covered,
            total,
            rubric_level,
        }
    }
}

/// Scores records against gold edits. A gold edit counts as covered when
/// some record's edit equals it on (source, target) text after case folding,
/// or some explanation mentions both its source and target text
/// (case-insensitive; an empty side is waived).
pub fn coverage(records: &[ExplanationRecord], gold_edits: &[Edit]) -> CoverageScore {
    let explanations: Vec<String> = records
        .iter()
        .map(|r| r.explanation.to_lowercase())
        .collect();
    let mut covered = 0;
    for gold in gold_edits {
        let src = gold.src_text.to_lowercase();
        let tgt = gold.tgt_text.to_lowercase();
        let by_edit = records.iter().any(|r| {
            r.edit.src_text.to_lowercase() == src && r.edit.tgt_text.to_lowercase() == tgt
        });
        let by_text = explanations.iter().any(|e| {
            (src.is_empty() || e.contains(&src)) && (tgt.is_empty() || e.contains(&tgt))
        });
        if by_edit || by_text {
            covered += 1;
        }
    }
    CoverageScore::new(covered, gold_edits.len())
}

fn token_multiset(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for token in tokenize(text) {
        *counts.entry(token.surface.to_lowercase()).or_insert(0) += 1;
    }
    counts
}

/// (overlap, candidate size, reference size) of the case-folded token
/// multisets.
fn overlap_counts(candidate: &str, reference: &str) -> (usize, usize, usize) {
    let cand = token_multiset(candidate);
    let reference = token_multiset(reference);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = reference.values().sum();
    let overlap: usize = cand
        .iter()
        .map(|(token, n)| (*n).min(reference.get(token).copied().unwrap_or(0)))
        .sum();
    (overlap, cand_total, ref_total)
}

fn prf_from_counts(overlap: usize, cand: usize, reference: usize) -> (f64, f64, f64) {
    if cand == 0 && reference == 0 {
        return (1.0, 1.0, 1.0);
    }
    if cand == 0 || reference == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Multiset token-overlap precision/recall/F1 after case folding. Both
/// sides empty scores (1, 1, 1); exactly one side empty scores (0, 0, 0).
pub fn token_f1(candidate: &str, reference: &str) -> (f64, f64, f64) {
    let (overlap, cand, reference) = overlap_counts(candidate, reference);
    prf_from_counts(overlap, cand, reference)
}

/// What produced a result set; stored alongside the metrics so reports are
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub seed: u64,
    pub model: String,
    pub cost_model: CostModel,
}

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint {
            seed: 0,
            model: "unspecified".into(),
            cost_model: CostModel::default(),
        }
    }
}

/// Per-example metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRow {
    pub id: String,
    pub covered: usize,
    pub total: usize,
    pub rubric_level: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregated metrics for one system. Precision/recall/F1 are
/// micro-averaged over token counts; `coverage_percent` is the mean rubric
/// level rescaled to 0-100 (level times 50), reported next to the raw mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemEval {
    pub system: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_rubric_level: f64,
    pub coverage_percent: f64,
    pub rows: Vec<ExampleRow>,
    pub fingerprint: Fingerprint,
}

/// A full report: one entry per evaluated system.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub systems: Vec<SystemEval>,
}

impl EvalReport {
    pub fn merge(reports: impl IntoIterator<Item = EvalReport>) -> EvalReport {
        EvalReport {
            systems: reports.into_iter().flat_map(|r| r.systems).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Evaluation knobs: a label for the system, the cost model used to extract
/// gold edits from the references, and the run fingerprint to embed.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub system: String,
    pub cost_model: CostModel,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{results} results cannot be evaluated against {references} references")]
    LengthMismatch { results: usize, references: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("annotation sheet row {row}: {message}")]
    Sheet { row: usize, message: String },
}

/// Evaluates one result set against references aligned by order. Per
/// example: coverage against the edits extracted from the reference
/// correction, and token overlap of the concatenated explanations against
/// the concatenated reference explanations; the report micro-averages the
/// token counts.
pub fn evaluate(
    results: &[PiResult],
    references: &[XgecExample],
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if results.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            results: results.len(),
            references: references.len(),
        });
    }

    let mut rows = Vec::with_capacity(results.len());
    let mut overlap_sum = 0usize;
    let mut cand_sum = 0usize;
    let mut ref_sum = 0usize;
    let mut level_sum = 0u64;

    for (result, reference) in results.iter().zip(references) {
        let gold = extract_edits(&reference.source, &reference.corrected, &options.cost_model);
        let cov = coverage(&result.records, &gold);
        let candidate = result
            .records
            .iter()
            .map(|r| r.explanation.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let reference_text = reference.explanations.join(" ");
        let (overlap, cand, refc) = overlap_counts(&candidate, &reference_text);
        let (precision, recall, f1) = prf_from_counts(overlap, cand, refc);
        overlap_sum += overlap;
        cand_sum += cand;
        ref_sum += refc;
        level_sum += u64::from(cov.rubric_level);
        rows.push(ExampleRow {
            id: reference.id.clone(),
            covered: cov.covered,
            total: cov.total,
            rubric_level: cov.rubric_level,
            precision,
            recall,
            f1,
        });
    }

    let (precision, recall, f1) = prf_from_counts(overlap_sum, cand_sum, ref_sum);
    let mean_rubric_level = if rows.is_empty() {
        0.0
    } else {
        level_sum as f64 / rows.len() as f64
    };
    Ok(EvalReport {
        systems: vec![SystemEval {
            system: options.system.clone(),
            precision,
            recall,
            f1,
            mean_rubric_level,
            coverage_percent: mean_rubric_level * 50.0,
            rows,
            fingerprint: options.fingerprint.clone(),
        }],
    })
}

/// Header of the annotation sheet.
pub const SHEET_HEADER: [&str; 7] = [
    "id",
    "source",
    "corrected",
    "edit",
    "explanation",
    "validity",
    "coverage",
];

/// Writes one CSV row per explanation record, with blank validity/coverage
/// columns for human annotators to fill on the 0-2 rubric.
pub fn export_annotation_sheet<W: Write>(
    labeled_results: &[(String, &PiResult)],
    writer: W,
) -> Result<(), EvalError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(SHEET_HEADER)?;
    for (id, result) in labeled_results {
        for record in &result.records {
            csv_writer.write_record([
                id.as_str(),
                result.source.as_str(),
                result.corrected.as_str(),
                &format_edit(&record.edit),
                record.explanation.as_str(),
                "",
                "",
            ])?;
        }
    }
    csv_writer.flush()?;
    Ok(())
}

/// One row of a (possibly annotator-filled) sheet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SheetRow {
    pub id: String,
    pub source: String,
    pub corrected: String,
    pub edit: String,
    pub explanation: String,
    pub validity: Option<u8>,
    pub coverage: Option<u8>,
}

/// Reads a sheet back, accepting blank or 0-2 scores.
pub fn import_annotation_sheet<R: Read>(reader: R) -> Result<Vec<SheetRow>, EvalError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let record = record?;
        let row_no = idx + 2;
        if record.len() != SHEET_HEADER.len() {
            return Err(EvalError::Sheet {
                row: row_no,
                message: format!("expected {} columns, found {}", SHEET_HEADER.len(), record.len()),
            });
        }
        let level = |field: &str, name: &str| -> Result<Option<u8>, EvalError> {
            let field = field.trim();
            if field.is_empty() {
                return Ok(None);
            }
            match field.parse::<u8>() {
                Ok(v) if v <= 2 => Ok(Some(v)),
                _ => Err(EvalError::Sheet {
                    row: row_no,
                    message: format!("{name} must be blank or 0-2, found {field:?}"),
                }),
            }
        };
        rows.push(SheetRow {
            id: record[0].to_string(),
            source: record[1].to_string(),
            corrected: record[2].to_string(),
            edit: record[3].to_string(),
            explanation: record[4].to_string(),
            validity: level(&record[5], "validity")?,
            coverage: level(&record[6], "coverage")?,
        });
    }
    Ok(rows)
}

/// Mean validity and coverage levels over the filled rows; `None` when no
/// row carries that score.
pub fn sheet_mean_levels(rows: &[SheetRow]) -> (Option<f64>, Option<f64>) {
    let mean = |values: Vec<u8>| {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64)
        }
    };
    (
        mean(rows.iter().filter_map(|r| r.validity).collect()),
        mean(rows.iter().filter_map(|r| r.coverage).collect()),
    )
}
