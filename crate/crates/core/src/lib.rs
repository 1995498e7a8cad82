//! Edit extraction and controlled explanation generation for grammatical
//! error correction (GEC).
//!
//! The crate covers the full pipeline:
//!
//! - [`text`]: deterministic tokenization shared by everything else.
//! - [`align`]: minimum-cost token alignment with exact rational costs.
//! - [`edits`]: merging alignment ops into numbered correction spans and
//!   applying them as patches.
//! - [`m2`]: bit-exact reader/writer for the M2 corpus format.
//! - [`corpus`]: JSONL store for (incorrect, corrected, explanations)
//!   examples and few-shot sampling.
//! - [`llm`]: completion backends — a live HTTP client and a deterministic
//!   scripted mock for offline runs.
//! - [`pi`]: prompt-insertion explanation generation plus the two
//!   single-call baselines.
//! - [`eval`]: coverage and token-overlap metrics, reports, and annotation
//!   sheets.
//!
//! Prompt insertion (PI) first asks the model for a correction, extracts the
//! numbered edits between input and output, then feeds those edits back one
//! by one so the model produces exactly one explanation per edit.

pub mod align;
pub mod corpus;
pub mod edits;
pub mod eval;
pub mod llm;
pub mod m2;
pub mod pi;
pub mod text;

pub use align::{align, substitution_cost, AlignmentOp, CostModel, OpKind};
// pub use corpus::{load_corpus, sample_few_shot, save_corpus, FewShotSet, Placement, XgecExample};
pub use edits::{apply_edits, extract_edits, format_edit, merge_ops, Edit, EditError};
// pub use eval::{coverage, evaluate, token_f1, CoverageScore, EvalReport};
// pub use llm::{Backend, CompletionRequest, ScriptedBackend, Session, Transcript};
// pub use m2::{apply_m2, parse_m2, write_m2, M2Entry};
// pub use pi::{
//    build_prompt, pi_explain, post_explain_no_pi, pre_explain_no_pi, Mode, PiResult, PromptConfig,
// };
pub use text::{detokenize, tokenize, Token};
