//! Controlled explanation generation.
//!
//! The prompt-insertion (PI) controller first asks the backend for a
//! corrected line, extracts the numbered edits between input and output
//! itself, then appends each edit prompt to the growing transcript one by
//! one so the model is forced to emit exactly one explanation per edit.
//! The two single-call baselines (explanations after or before the
//! correction, no inserted prompts) share the prompt layout and the
//! numbered-line grammar but parse whatever the model happened to produce.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::CostModel;
use crate::corpus::{FewShotSet, Placement, XgecExample};
use crate::edits::{check_formattable, extract_edits, format_edit, Edit, EditError};
use crate::llm::{Backend, CompletionRequest, LlmError, Session, Transcript};

/// Instruction given to the model before the few-shot block.
pub const DEFAULT_INSTRUCTION: &str = "Correct the input text grammatically and explain the \
reason for each correction. If the input text is grammatically correct, only the input text \
should be generated as is.";

/// How explanations are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Correct first, then insert one numbered edit prompt per edit.
    PostWithPi,
    /// One call: correction line, then an explanations block.
    PostWithoutPi,
    /// One call: explanations block first, then the correction line.
    PreWithoutPi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PostWithPi => "post_with_pi",
            Mode::PostWithoutPi => "post_without_pi",
            Mode::PreWithoutPi => "pre_without_pi",
        }
    }
}

/// Example-block placement that matches a mode's final block.
pub fn default_placement(mode: Mode) -> Placement {
    match mode {
        Mode::PostWithPi | Mode::PostWithoutPi => Placement::PostCorrection,
        Mode::PreWithoutPi => Placement::PreCorrection,
    }
}

/// Everything needed to build prompts for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptConfig {
    pub instruction: String,
    pub few_shot: FewShotSet,
    pub mode: Mode,
    pub cost_model: CostModel,
}

impl PromptConfig {
    /// Builds a config with the default instruction and cost model. The
    /// few-shot placement is harmonized with the mode; use
    /// [`PromptConfig::with_placement`] to override it afterwards.
    /// Fails if any few-shot edit cannot be rendered as a prompt line.
    pub fn new(mode: Mode, few_shot: FewShotSet) -> Result<Self, PiError> {
        let config = PromptConfig {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            few_shot: few_shot.with_placement(default_placement(mode)),
            mode,
            cost_model: CostModel::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Result<Self, PiError> {
        self.instruction = instruction.into();
        self.validate()?;
        Ok(self)
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.few_shot.placement = placement;
        self
    }

    pub fn with_cost_model(mut self, cost_model: CostModel) -> Self {
        self.cost_model = cost_model;
        self
    }

    fn validate(&self) -> Result<(), PiError> {
        if self.instruction.is_empty() {
            return Err(PiError::InvalidConfig("instruction must be non-empty".into()));
        }
        for example in &self.few_shot.examples {
            if example.explanations.len() != example.edits.len() {
                return Err(PiError::InvalidConfig(format!(
                    "few-shot example {} has {} explanations for {} edits",
                    example.id,
                    example.explanations.len(),
                    example.edits.len()
                )));
            }
            for edit in &example.edits {
                check_formattable(edit)?;
            }
        }
        Ok(())
    }
}

/// One edit paired with the model's explanation for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub edit: Edit,
    pub explanation: String,
}

/// Output of one explanation run over one source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiResult {
    pub source: String,
    pub corrected: String,
    pub mode: Mode,
    pub records: Vec<ExplanationRecord>,
    /// Non-fatal issues while parsing single-call baseline output.
    pub parse_warnings: Vec<String>,
    pub transcript: Transcript,
}

#[derive(Debug, Error)]
pub enum PiError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("the model returned a blank correction line")]
    EmptyCorrection,
    #[error("operation requires mode {expected:?} but the config says {actual:?}")]
    ModeMismatch { expected: Mode, actual: Mode },
    #[error(transparent)]
    EditFormat(#[from] EditError),
    #[error("invalid prompt config: {0}")]
    InvalidConfig(String),
}

/// Renders the full prompt for `source`: instruction, blank line, one block
/// per few-shot example, then the final input block that the model must
/// continue (`Output:` for the post modes, `Explanations:` for pre).
pub fn build_prompt(config: &PromptConfig, source: &str) -> String {
    let mut out = String::new();
    out.push_str(&config.instruction);
    out.push_str("\n\n");
    for example in &config.few_shot.examples {
        render_example(&mut out, example, config.few_shot.placement);
    }
    out.push_str("Input: ");
    out.push_str(source);
    out.push('\n');
    match config.mode {
        Mode::PreWithoutPi => out.push_str("Explanations:"),
        Mode::PostWithPi | Mode::PostWithoutPi => out.push_str("Output:"),
    }
    out
}

fn render_example(out: &mut String, example: &XgecExample, placement: Placement) {
    out.push_str("Input: ");
    out.push_str(&example.source);
    out.push('\n');
    let block = explanation_block(example, placement);
    if let (Placement::PreCorrection, Some(block)) = (placement, &block) {
        out.push_str(block);
    }
    out.push_str("Output: ");
    out.push_str(&example.corrected);
    out.push('\n');
    if let (Placement::PostCorrection, Some(block)) = (placement, &block) {
        out.push_str(block);
    }
    out.push('\n');
}

fn explanation_block(example: &XgecExample, placement: Placement) -> Option<String> {
    if placement == Placement::None || example.edits.is_empty() {
        return None;
    }
    let mut block = String::from("Explanations:\n");
    for (edit, explanation) in example.edits.iter().zip(&example.explanations) {
        block.push_str(&format_edit(edit));
        if !explanation.is_empty() {
            block.push(' ');
            block.push_str(explanation);
        }
        block.push('\n');
    }
    Some(block)
}

/// Dispatches on the config's mode.
pub fn explain(
    backend: &dyn Backend,
    config: &PromptConfig,
    source: &str,
) -> Result<PiResult, PiError> {
    match config.mode {
        Mode::PostWithPi => pi_explain(backend, config, source),
        Mode::PostWithoutPi => post_explain_no_pi(backend, config, source),
        Mode::PreWithoutPi => pre_explain_no_pi(backend, config, source),
    }
}

/// Prompt-insertion generation. One backend call produces the corrected
/// line; the edits are extracted locally; then one call per edit appends the
/// numbered edit prompt and collects the model's one-line explanation. With
/// a cooperative backend the records always cover every edit.
pub fn pi_explain(
    backend: &dyn Backend,
    config: &PromptConfig,
    source: &str,
) -> Result<PiResult, PiError> {
    require_mode(config, Mode::PostWithPi)?;
    let mut session = Session::new(backend);
    let mut prompt = build_prompt(config, source);

    let reply = session.complete(&CompletionRequest::new(prompt.clone()))?;
    let corrected = reply.trim().to_string();
    if corrected.is_empty() {
        return Err(PiError::EmptyCorrection);
    }

    let edits = extract_edits(source, &corrected, &config.cost_model);
    for edit in &edits {
        check_formattable(edit)?;
    }

    let mut records = Vec::with_capacity(edits.len());
    if !edits.is_empty() {
        prompt.push_str(&reply);
        prompt.push_str("\nExplanations:\n");
        for edit in edits {
            prompt.push_str(&format_edit(&edit));
            prompt.push(' ');
            let line = session.complete(&CompletionRequest::new(prompt.clone()))?;
            records.push(ExplanationRecord {
                edit,
                explanation: line.trim().to_string(),
            });
            prompt.push_str(&line);
            prompt.push('\n');
        }
    }

    Ok(PiResult {
        source: source.to_string(),
        corrected,
        mode: Mode::PostWithPi,
        records,
        parse_warnings: Vec::new(),
        transcript: session.into_transcript(),
    })
}

/// Baseline: one call generates the corrected line and then an explanations
/// block. Numbered lines are parsed into records; anything else stays in the
/// transcript and is reported as a parse warning.
pub fn post_explain_no_pi(
    backend: &dyn Backend,
    config: &PromptConfig,
    source: &str,
) -> Result<PiResult, PiError> {
    require_mode(config, Mode::PostWithoutPi)?;
    let mut session = Session::new(backend);
    let prompt = build_prompt(config, source);
    let reply = session.complete(
        &CompletionRequest::new(prompt).with_stop(vec!["\n\n".into()]),
    )?;

    let mut lines = reply.lines();
    let corrected = lines.next().unwrap_or("").trim().to_string();
    if corrected.is_empty() {
        return Err(PiError::EmptyCorrection);
    }
    let mut warnings = Vec::new();
    let records = parse_numbered_lines(lines, source, &corrected, config, &mut warnings);

    Ok(PiResult {
        source: source.to_string(),
        corrected,
        mode: Mode::PostWithoutPi,
        records,
        parse_warnings: warnings,
        transcript: session.into_transcript(),
    })
}

/// Baseline: one call generates the explanations block first and then an
/// `Output:` line with the correction. Prompt insertion cannot help here —
/// there is no correction yet to extract edits from.
pub fn pre_explain_no_pi(
    backend: &dyn Backend,
    config: &PromptConfig,
    source: &str,
) -> Result<PiResult, PiError> {
    require_mode(config, Mode::PreWithoutPi)?;
    let mut session = Session::new(backend);
    let prompt = build_prompt(config, source);
    let reply = session.complete(
        &CompletionRequest::new(prompt).with_stop(vec!["\n\n".into()]),
    )?;

    let mut corrected = None;
    let mut explanation_lines = Vec::new();
    let mut warnings = Vec::new();
    for line in reply.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "Explanations:" {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("Output:") {
            if corrected.is_some() {
                warnings.push(format!("extra output line ignored: {trimmed:?}"));
            } else {
                corrected = Some(rest.trim().to_string());
            }
        } else {
            explanation_lines.push(line.to_string());
        }
    }
    let corrected = corrected.filter(|c| !c.is_empty()).ok_or(PiError::EmptyCorrection)?;
    let records = parse_numbered_lines(
        explanation_lines.iter().map(String::as_str),
        source,
        &corrected,
        config,
        &mut warnings,
    );

    Ok(PiResult {
        source: source.to_string(),
        corrected,
        mode: Mode::PreWithoutPi,
        records,
        parse_warnings: warnings,
        transcript: session.into_transcript(),
    })
}

fn require_mode(config: &PromptConfig, expected: Mode) -> Result<(), PiError> {
    if config.mode != expected {
        return Err(PiError::ModeMismatch {
            expected,
            actual: config.mode,
        });
    }
    Ok(())
}

/// Parses numbered explanation lines from single-call output. Lines that
/// carry the full `N. a → b:` prefix become records, resolved against the
/// actually extracted edits where the texts match so spans are real; a
/// prefix without the trailing colon still yields a synthetic record. Other
/// lines are warnings.
fn parse_numbered_lines<'l>(
    lines: impl Iterator<Item = &'l str>,
    source: &str,
    corrected: &str,
    config: &PromptConfig,
    warnings: &mut Vec<String>,
) -> Vec<ExplanationRecord> {
    let actual = extract_edits(source, corrected, &config.cost_model);
    let mut claimed = vec![false; actual.len()];
    let mut records = Vec::new();

    for line in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "Explanations:" {
            continue;
        }
        let parsed = match crate::edits::parse_edit_line(trimmed) {
            Some(parsed) => parsed,
            None => match parse_colonless_line(trimmed) {
                Some(parsed) => {
                    warnings.push(format!("explanation line missing colon: {trimmed:?}"));
                    parsed
                }
                None => {
                    warnings.push(format!("unparseable explanation line: {trimmed:?}"));
                    continue;
                }
            },
        };
        let resolved = actual
            .iter()
            .zip(claimed.iter_mut())
            .find(|(edit, claimed)| {
                !**claimed && edit.src_text == parsed.src_text && edit.tgt_text == parsed.tgt_text
            })
            .map(|(edit, claimed)| {
                *claimed = true;
                edit.clone()
            });
        let edit = resolved.unwrap_or(Edit {
            src_start: 0,
            src_end: 0,
            src_text: parsed.src_text,
            tgt_text: parsed.tgt_text,
            index: parsed.index,
        });
        records.push(ExplanationRecord {
            edit,
            explanation: parsed.explanation,
        });
    }
    records
}

/// Fallback for `N. a → b` lines that lost the trailing colon.
fn parse_colonless_line(line: &str) -> Option<crate::edits::ParsedEditLine> {
    let dot = line.find('.')?;
    let index: usize = line[..dot].trim().parse().ok()?;
    let rest = line[dot + 1..].trim_start();
    let arrow = rest.find(" → ")?;
    let decode = |s: &str| {
        let s = s.trim();
        if s == crate::edits::EMPTY_SIDE {
            String::new()
        } else {
            s.to_string()
        }
    };
    Some(crate::edits::ParsedEditLine {
        index,
        src_text: decode(&rest[..arrow]),
        tgt_text: decode(rest[arrow + " → ".len()..].trim_end_matches(':')),
        explanation: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::scripted_mock;

    const SOURCE: &str =
        "What is the difference between genetic disorder and other disorders .";
    const CORRECTED: &str =
        "What is the difference between genetic disorders and other disorders ?";

    fn config(mode: Mode) -> PromptConfig {
        PromptConfig::new(mode, FewShotSet::empty()).unwrap()
    }

    fn example_with_two_edits() -> XgecExample {
        XgecExample {
            id: "ex".into(),
            source: SOURCE.into(),
            corrected: CORRECTED.into(),
            edits: extract_edits(SOURCE, CORRECTED, &CostModel::default()),
            explanations: vec![
                "The noun must agree in number.".into(),
                "A question ends with a question mark.".into(),
            ],
        }
    }

    #[test]
    fn zero_shot_prompt_is_instruction_plus_final_block() {
        let prompt = build_prompt(&config(Mode::PostWithPi), "She go home .");
        assert_eq!(
            prompt,
            format!("{DEFAULT_INSTRUCTION}\n\nInput: She go home .\nOutput:")
        );
        let pre = build_prompt(&config(Mode::PreWithoutPi), "She go home .");
        assert_eq!(
            pre,
            format!("{DEFAULT_INSTRUCTION}\n\nInput: She go home .\nExplanations:")
        );
    }

    #[test]
    fn few_shot_example_renders_one_numbered_line_per_edit() {
        let few_shot = FewShotSet {
            examples: vec![example_with_two_edits()],
            seed: 0,
            placement: Placement::PostCorrection,
        };
        let config = PromptConfig::new(Mode::PostWithPi, few_shot).unwrap();
        let prompt = build_prompt(&config, "next input");
        assert!(prompt.contains(
            "Explanations:\n1. disorder → disorders: The noun must agree in number.\n2. . → ?: A question ends with a question mark.\n"
        ));
        assert_eq!(prompt.matches("1. ").count(), 1);
        assert_eq!(prompt.matches("2. ").count(), 1);
        // Pre placement flips the block above the output line.
        let pre = build_prompt(
            &config.clone().with_placement(Placement::PreCorrection),
            "next input",
        );
        let explanations_at = pre.find("Explanations:").unwrap();
        let output_at = pre.find("Output:").unwrap();
        assert!(explanations_at < output_at);
        // Placement::None drops explanations entirely.
        let none = build_prompt(&config.with_placement(Placement::None), "next input");
        assert!(!none.contains("Explanations:"));
    }

    #[test]
    fn zero_edit_examples_render_without_an_explanations_header() {
        let example = XgecExample {
            id: "clean".into(),
            source: "All good .".into(),
            corrected: "All good .".into(),
            edits: vec![],
            explanations: vec![],
        };
        let few_shot = FewShotSet {
            examples: vec![example],
            seed: 0,
            placement: Placement::PostCorrection,
        };
        let config = PromptConfig::new(Mode::PostWithPi, few_shot).unwrap();
        let prompt = build_prompt(&config, "y");
        assert!(prompt.contains("Input: All good .\nOutput: All good .\n\n"));
        assert!(!prompt.contains("Explanations:\n\n"));
    }

    fn pi_mock() -> crate::llm::ScriptedBackend {
        scripted_mock([
            (format!("Input: {SOURCE}\nOutput:"), format!(" {CORRECTED}")),
            (
                "1. disorder → disorders: ".to_string(),
                "The noun should be plural here.".to_string(),
            ),
            (
                "2. . → ?: ".to_string(),
                "The sentence is a question.".to_string(),
            ),
        ])
    }

    #[test]
    fn pi_explain_records_one_explanation_per_edit() {
        let backend = pi_mock();
        let result = pi_explain(&backend, &config(Mode::PostWithPi), SOURCE).unwrap();
        assert_eq!(result.corrected, CORRECTED);
        assert_eq!(result.records.len(), 2);
        assert_eq!(result.records[0].edit.src_text, "disorder");
        assert_eq!(result.records[0].explanation, "The noun should be plural here.");
        assert_eq!(result.records[1].edit.tgt_text, "?");
        let edits = extract_edits(SOURCE, &result.corrected, &CostModel::default());
        assert_eq!(result.records.len(), edits.len());
    }

    #[test]
    fn pi_explain_on_correct_input_yields_no_records() {
        let text = "This sentence is fine .";
        let backend = scripted_mock([(format!("Input: {text}\nOutput:"), format!(" {text}"))]);
        let result = pi_explain(&backend, &config(Mode::PostWithPi), text).unwrap();
        assert_eq!(result.corrected, text);
        assert!(result.records.is_empty());
        assert_eq!(result.transcript.turns().len(), 2);
    }

    #[test]
    fn pi_transcript_contains_every_edit_prompt_verbatim_in_order() {
        let backend = pi_mock();
        let result = pi_explain(&backend, &config(Mode::PostWithPi), SOURCE).unwrap();
        let prompts: Vec<&str> = result
            .transcript
            .turns()
            .iter()
            .filter(|t| t.direction == crate::llm::Direction::ToModel)
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(prompts.len(), 3);
        assert!(prompts[1].ends_with("1. disorder → disorders: "));
        assert!(prompts[2].ends_with("2. . → ?: "));
        // Prompt monotonicity: every call extends the previous prompt.
        for pair in prompts.windows(2) {
            assert!(pair[1].starts_with(pair[0]));
        }
    }

    #[test]
    fn pi_explain_rejects_blank_corrections_and_wrong_modes() {
        let backend = scripted_mock([(format!("Input: {SOURCE}\nOutput:"), "   ".to_string())]);
        assert!(matches!(
            pi_explain(&backend, &config(Mode::PostWithPi), SOURCE),
            Err(PiError::EmptyCorrection)
        ));
        assert!(matches!(
            pi_explain(&pi_mock(), &config(Mode::PostWithoutPi), SOURCE),
            Err(PiError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn post_baseline_parses_well_formed_output_like_pi() {
        let reply = format!(
            " {CORRECTED}\nExplanations:\n1. disorder → disorders: The noun should be plural here.\n2. . → ?: The sentence is a question."
        );
        let backend = scripted_mock([(format!("Input: {SOURCE}\nOutput:"), reply)]);
        let post = post_explain_no_pi(&backend, &config(Mode::PostWithoutPi), SOURCE).unwrap();
        let pi = pi_explain(&pi_mock(), &config(Mode::PostWithPi), SOURCE).unwrap();
        assert_eq!(post.corrected, pi.corrected);
        assert_eq!(post.records, pi.records);
        assert!(post.parse_warnings.is_empty());
        assert_eq!(post.transcript.turns().len(), 2);
    }

    #[test]
    fn post_baseline_tolerates_omitted_and_malformed_lines() {
        let reply = format!(
            " {CORRECTED}\nExplanations:\n1. disorder → disorders: The noun should be plural.\nrandom chatter"
        );
        let backend = scripted_mock([(format!("Input: {SOURCE}\nOutput:"), reply)]);
        let result = post_explain_no_pi(&backend, &config(Mode::PostWithoutPi), SOURCE).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.parse_warnings.len(), 1);

        let reply = format!(" {CORRECTED}");
        let backend = scripted_mock([(format!("Input: {SOURCE}\nOutput:"), reply)]);
        let result = post_explain_no_pi(&backend, &config(Mode::PostWithoutPi), SOURCE).unwrap();
        assert!(result.records.is_empty());
        assert!(result.parse_warnings.is_empty());
    }

    #[test]
    fn pre_baseline_reads_explanations_then_output_line() {
        let reply = format!(
            "\n1. disorder → disorders: Plural needed.\n2. . → ?: It is a question.\nOutput: {CORRECTED}"
        );
        let backend = scripted_mock([(format!("Input: {SOURCE}\nExplanations:"), reply)]);
        let result = pre_explain_no_pi(&backend, &config(Mode::PreWithoutPi), SOURCE).unwrap();
        assert_eq!(result.corrected, CORRECTED);
        assert_eq!(result.records.len(), 2);
        assert_eq!(result.records[0].edit.src_text, "disorder");
        // Spans resolve against the real extraction.
        assert_eq!(result.records[0].edit.src_start, 6);
        assert_eq!(result.transcript.turns().len(), 2);

        // Missing output line is a blank correction.
        let backend = scripted_mock([(
            format!("Input: {SOURCE}\nExplanations:"),
            "\n1. a → b: whatever".to_string(),
        )]);
        assert!(matches!(
            pre_explain_no_pi(&backend, &config(Mode::PreWithoutPi), SOURCE),
            Err(PiError::EmptyCorrection)
        ));
    }

    #[test]
    fn colonless_numbered_lines_become_synthetic_records() {
        let reply = format!(" {CORRECTED}\nExplanations:\n1. disorder → disorders");
        let backend = scripted_mock([(format!("Input: {SOURCE}\nOutput:"), reply)]);
        let result = post_explain_no_pi(&backend, &config(Mode::PostWithoutPi), SOURCE).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.records[0].edit.src_text, "disorder");
        assert_eq!(result.records[0].explanation, "");
        assert_eq!(result.parse_warnings.len(), 1);
    }

    #[test]
    fn explain_dispatches_on_mode() {
        let result = explain(&pi_mock(), &config(Mode::PostWithPi), SOURCE).unwrap();
        assert_eq!(result.mode, Mode::PostWithPi);
    }
}
