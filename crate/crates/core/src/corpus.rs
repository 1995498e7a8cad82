//! JSONL store for explainable-correction examples: an incorrect text, its
//! corrected text, the edits between them, and one explanation per edit.
//! Also provides seeded few-shot sampling.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::CostModel;
use crate::edits::{check_formattable, extract_edits, Edit};

/// Few-shot count used for explanation generation runs.
pub const DEFAULT_FEW_SHOT_K: usize = 16;

/// One stored example. Invariant: `explanations` has exactly one entry per
/// edit, and `edits` is what [`extract_edits`] produces for the pair under
/// the configured cost model (checked on load unless validation is off).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XgecExample {
    pub id: String,
    pub source: String,
    pub corrected: String,
    pub edits: Vec<Edit>,
    pub explanations: Vec<String>,
}

/// Where explanations appear inside a rendered few-shot example block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// No explanations at all (plain correction examples).
    None,
    /// Explanations before the corrected text.
    PreCorrection,
    /// Explanations after the corrected text.
    PostCorrection,
}

/// A sampled set of few-shot examples, drawn without replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSet {
    pub examples: Vec<XgecExample>,
    pub seed: u64,
    pub placement: Placement,
}

impl FewShotSet {
    /// The zero-shot set.
    pub fn empty() -> Self {
        FewShotSet {
            examples: Vec::new(),
            seed: 0,
            placement: Placement::PostCorrection,
        }
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line} (id {id}): stored edits disagree with recomputed edits: {detail}")]
    EditMismatch {
        line: usize,
        id: String,
        detail: String,
    },
    #[error("requested {requested} few-shot examples but the corpus has {available}")]
    NotEnoughExamples { requested: usize, available: usize },
}

/// Loads a JSONL corpus. With `validate` set, every example's stored edits
/// must equal the recomputed extraction under `costs` (positions and texts),
/// explanations must pair 1:1 with edits, and every edit must be renderable
/// as a prompt line.
pub fn load_corpus(
    path: impl AsRef<Path>,
    costs: &CostModel,
    validate: bool,
) -> Result<Vec<XgecExample>, CorpusError> {
    read_corpus(BufReader::new(File::open(path)?), costs, validate)
}

/// Reader-based variant of [`load_corpus`].
pub fn read_corpus<R: Read>(
    reader: BufReader<R>,
    costs: &CostModel,
    validate: bool,
) -> Result<Vec<XgecExample>, CorpusError> {
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut example: XgecExample =
            serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
        for (ordinal, edit) in example.edits.iter_mut().enumerate() {
            edit.index = ordinal + 1;
        }
        if example.explanations.len() != example.edits.len() {
            return Err(CorpusError::Schema {
                line: line_no,
                message: format!(
                    "{} explanations for {} edits",
                    example.explanations.len(),
                    example.edits.len()
                ),
            });
        }
        if validate {
            validate_example(&example, costs, line_no)?;
        }
        examples.push(example);
    }
    Ok(examples)
}

fn validate_example(
    example: &XgecExample,
    costs: &CostModel,
    line_no: usize,
) -> Result<(), CorpusError> {
    let recomputed = extract_edits(&example.source, &example.corrected, costs);
    if recomputed != example.edits {
        return Err(CorpusError::EditMismatch {
            line: line_no,
            id: example.id.clone(),
            detail: format!(
                "stored {} edit(s), recomputed {} edit(s)",
                example.edits.len(),
                recomputed.len()
            ),
        });
    }
    for edit in &example.edits {
        check_formattable(edit).map_err(|e| CorpusError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
    }
    Ok(())
}

/// Writes examples as one JSON object per line.
pub fn save_corpus(
    examples: &[XgecExample],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_corpus(examples, &mut writer)
}

/// Writer-based variant of [`save_corpus`].
pub fn write_corpus<W: Write>(
    examples: &[XgecExample],
    writer: &mut W,
) -> Result<(), CorpusError> {
    for example in examples {
        let line = serde_json::to_string(example).expect("corpus examples serialize");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Draws `k` examples uniformly without replacement. Deterministic for a
/// given `(corpus, k, seed)`: the same seed always yields the same ids in
/// the same order.
pub fn sample_few_shot(
    corpus: &[XgecExample],
    k: usize,
    seed: u64,
) -> Result<FewShotSet, CorpusError> {
    if k > corpus.len() {
        return Err(CorpusError::NotEnoughExamples {
            requested: k,
            available: corpus.len(),
        });
    }
    // Partial Fisher-Yates over an index table, driven by a fixed-algorithm
    // generator so runs reproduce across platforms.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut examples = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
        examples.push(corpus[indices[i]].clone());
    }
    Ok(FewShotSet {
        examples,
        seed,
        placement: Placement::PostCorrection,
    })
}

/// Seed for per-instance resampling: the base seed XORed with the instance
/// ordinal, reproducible yet varied across instances.
pub fn instance_seed(base_seed: u64, ordinal: u64) -> u64 {
    base_seed ^ ordinal
}
