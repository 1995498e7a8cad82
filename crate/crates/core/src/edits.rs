//! Merging alignment ops into edit spans, rendering numbered edit prompts,
//! and applying edit sets back onto a source text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align, AlignmentOp, CostModel, OpKind};
use crate::text::{detokenize, tokenize, Token};

/// Rendering for an empty edit side (pure insertion or deletion).
pub const EMPTY_SIDE: &str = "ε";

/// A correction span: the source tokens `[src_start, src_end)` are replaced
/// by the target tokens. Texts are space-joined token surfaces; an empty
/// side is stored as the empty string and rendered as [`EMPTY_SIDE`].
/// `index` is the 1-based position of the edit in source order; it is
/// recomputed from edit order on load, so it is not serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub src_start: usize,
    pub src_end: usize,
    pub src_text: String,
    pub tgt_text: String,
    #[serde(skip)]
    pub index: usize,
}

#[derive(Debug, Error)]
pub enum EditError {
    #[error("edit {index} overlaps or precedes an earlier edit (token {position})")]
    Overlap { index: usize, position: usize },
    #[error("edit {index} spans tokens {start}..{end} but the source has {len}")]
    Range {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("edit {index} cannot be rendered: {reason}")]
    Format { index: usize, reason: String },
}

/// Merges every maximal contiguous run of non-Match ops into one [`Edit`].
/// Match runs produce nothing; indices are assigned 1..n in source order.
pub fn merge_ops(src: &[Token], tgt: &[Token], ops: &[AlignmentOp]) -> Vec<Edit> {
    let mut edits = Vec::new();
    let mut run: Option<(usize, usize, usize, usize)> = None;

    let flush = |run: &mut Option<(usize, usize, usize, usize)>, edits: &mut Vec<Edit>| {
        if let Some((ss, se, ts, te)) = run.take() {
            let src_text = src[ss..se]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let tgt_text = tgt[ts..te]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            // Degenerate cost models can pair off identical texts; a no-op
            // span is not an edit.
            if src_text != tgt_text {
                edits.push(Edit {
                    src_start: ss,
                    src_end: se,
                    src_text,
                    tgt_text,
                    index: 0,
                });
            }
        }
    };

    for op in ops {
        if op.kind == OpKind::Match {
            flush(&mut run, &mut edits);
        } else {
            run = Some(match run {
                None => (op.src_start, op.src_end, op.tgt_start, op.tgt_end),
                Some((ss, _, ts, _)) => (ss, op.src_end, ts, op.tgt_end),
            });
        }
    }
    flush(&mut run, &mut edits);

    for (ordinal, edit) in edits.iter_mut().enumerate() {
        edit.index = ordinal + 1;
    }
    edits
}

/// Tokenizes both texts, aligns them, and merges the ops into edits.
/// Returns an empty sequence iff the texts tokenize identically.
pub fn extract_edits(source: &str, corrected: &str, costs: &CostModel) -> Vec<Edit> {
    let src = tokenize(source);
    let tgt = tokenize(corrected);
    let ops = align(&src, &tgt, costs);
    merge_ops(&src, &tgt, &ops)
}

/// Renders the numbered prompt string for an edit, exactly
/// `"<index>. <src> → <tgt>:"` with `ε` standing for an empty side.
pub fn format_edit(edit: &Edit) -> String {
    let src = if edit.src_text.is_empty() {
        EMPTY_SIDE
    } else {
        &edit.src_text
    };
    let tgt = if edit.tgt_text.is_empty() {
        EMPTY_SIDE
    } else {
        &edit.tgt_text
    };
    format!("{}. {} → {}:", edit.index, src, tgt)
}

/// Rejects edits whose rendering would be ambiguous: a literal `→` inside
/// either side breaks the prompt grammar, as does an embedded newline or a
/// non-positive index. Call this at ingestion boundaries; [`format_edit`]
/// itself is total.
pub fn check_formattable(edit: &Edit) -> Result<(), EditError> {
    if edit.index == 0 {
        return Err(EditError::Format {
            index: edit.index,
            reason: "index must be 1-based".into(),
        });
    }
    for (side, text) in [("source", &edit.src_text), ("target", &edit.tgt_text)] {
        if text.contains('→') {
            return Err(EditError::Format {
                index: edit.index,
                reason: format!("{side} text contains the reserved arrow separator"),
            });
        }
        if text.contains('\n') {
            return Err(EditError::Format {
                index: edit.index,
                reason: format!("{side} text contains a newline"),
            });
        }
    }
    Ok(())
}

/// A numbered explanation line split back into its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedEditLine {
    pub index: usize,
    pub src_text: String,
    pub tgt_text: String,
    pub explanation: String,
}

/// Parses a line of the form `"N. <src> → <tgt>: <explanation>"` (the
/// inverse of [`format_edit`] plus trailing text). `ε` decodes to the empty
/// string. Returns `None` when the line does not carry the numbered prefix.
pub fn parse_edit_line(line: &str) -> Option<ParsedEditLine> {
    let line = line.trim();
    let dot = line.find('.')?;
    let index: usize = line[..dot].trim().parse().ok()?;
    let rest = line[dot + 1..].trim_start();
    let arrow = rest.find(" → ")?;
    let src_raw = &rest[..arrow];
    let after = &rest[arrow + " → ".len()..];
    let colon = after.find(':')?;
    let tgt_raw = &after[..colon];
    let explanation = after[colon + 1..].trim().to_string();
    let decode = |s: &str| {
        let s = s.trim();
        if s == EMPTY_SIDE {
            String::new()
        } else {
            s.to_string()
        }
    };
    Some(ParsedEditLine {
        index,
        src_text: decode(src_raw),
        tgt_text: decode(tgt_raw),
        explanation,
    })
}

/// Applies edits to a source text: each source token span is replaced by the
/// edit's target tokens, and the result is detokenized. Edits must be sorted
/// and non-overlapping with spans inside the tokenized source.
pub fn apply_edits(source: &str, edits: &[Edit]) -> Result<String, EditError> {
    let src = tokenize(source);
    let mut out: Vec<&str> = Vec::with_capacity(src.len());
    let mut cursor = 0usize;
    for edit in edits {
        if edit.src_start > edit.src_end || edit.src_end > src.len() {
            return Err(EditError::Range {
                index: edit.index,
                start: edit.src_start,
                end: edit.src_end,
                len: src.len(),
            });
        }
        if edit.src_start < cursor {
            return Err(EditError::Overlap {
                index: edit.index,
                position: edit.src_start,
            });
        }
        for token in &src[cursor..edit.src_start] {
            out.push(&token.surface);
        }
        if !edit.tgt_text.is_empty() {
            out.extend(edit.tgt_text.split_whitespace());
        }
        cursor = edit.src_end;
    }
    for token in &src[cursor..] {
        out.push(&token.surface);
    }
    Ok(detokenize(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::surfaces;

    const SOURCE: &str =
        "What is the difference between genetic disorder and other disorders .";
    const CORRECTED: &str =
        "What is the difference between genetic disorders and other disorders ?";

    #[test]
    fn worked_example_extracts_two_numbered_edits() {
        let edits = extract_edits(SOURCE, CORRECTED, &CostModel::default());
        assert_eq!(edits.len(), 2);
        assert_eq!(edits[0].index, 1);
        assert_eq!(edits[0].src_text, "disorder");
        assert_eq!(edits[0].tgt_text, "disorders");
        assert_eq!(edits[1].index, 2);
        assert_eq!(edits[1].src_text, ".");
        assert_eq!(edits[1].tgt_text, "?");
    }

    #[test]
    fn format_edit_reproduces_prompt_strings() {
        let edits = extract_edits(SOURCE, CORRECTED, &CostModel::default());
        assert_eq!(format_edit(&edits[0]), "1. disorder → disorders:");
        assert_eq!(format_edit(&edits[1]), "2. . → ?:");
    }

    #[test]
    fn empty_sides_render_as_epsilon() {
        let edit = Edit {
            src_start: 0,
            src_end: 0,
            src_text: String::new(),
            tgt_text: "the".into(),
            index: 1,
        };
        assert_eq!(format_edit(&edit), "1. ε → the:");
    }

    #[test]
    fn identical_texts_extract_nothing() {
        let text = "nothing to fix here .";
        assert!(extract_edits(text, text, &CostModel::default()).is_empty());
    }

    #[test]
    fn adjacent_delete_insert_merge_into_one_edit() {
        let edits = extract_edits("x a y", "x b b y", &CostModel::default());
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].src_text, "a");
        assert_eq!(edits[0].tgt_text, "b b");
    }

    #[test]
    fn transposition_merges_into_one_edit() {
        let edits = extract_edits("a b c", "b a c", &CostModel::default());
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].src_text, "a b");
        assert_eq!(edits[0].tgt_text, "b a");
    }

    #[test]
    fn no_two_edits_without_intervening_match() {
        for (s, t) in [
            ("a b c d", "w x y z"),
            ("the cat sat .", "a dog ran ?"),
            ("one two three", "three two one"),
        ] {
            let edits = extract_edits(s, t, &CostModel::default());
            let src = tokenize(s);
            for pair in edits.windows(2) {
                // The intervening Match consumes at least one source token.
                assert!(pair[1].src_start > pair[0].src_end);
            }
            for edit in &edits {
                assert_ne!(edit.src_text, edit.tgt_text);
                assert!(edit.src_end <= src.len());
            }
        }
    }

    #[test]
    fn apply_edits_round_trips_the_worked_example() {
        let edits = extract_edits(SOURCE, CORRECTED, &CostModel::default());
        let patched = apply_edits(SOURCE, &edits).unwrap();
        assert_eq!(surfaces(&tokenize(&patched)), surfaces(&tokenize(CORRECTED)));
    }

    #[test]
    fn apply_edits_with_no_edits_detokenizes_the_source() {
        assert_eq!(apply_edits("a b .", &[]).unwrap(), "a b.");
    }

    #[test]
    fn apply_edits_rejects_overlap_and_bad_ranges() {
        let edit = |s: usize, e: usize, idx: usize| Edit {
            src_start: s,
            src_end: e,
            src_text: "x".into(),
            tgt_text: "y".into(),
            index: idx,
        };
        let err = apply_edits("a b c", &[edit(0, 2, 1), edit(1, 3, 2)]).unwrap_err();
        assert!(matches!(err, EditError::Overlap { .. }));
        let err = apply_edits("a b c", &[edit(2, 9, 1)]).unwrap_err();
        assert!(matches!(err, EditError::Range { .. }));
    }

    #[test]
    fn check_formattable_rejects_reserved_arrow() {
        let edit = Edit {
            src_start: 0,
            src_end: 1,
            src_text: "a→b".into(),
            tgt_text: "c".into(),
            index: 1,
        };
        assert!(matches!(
            check_formattable(&edit),
            Err(EditError::Format { .. })
        ));
    }

    #[test]
    fn parse_edit_line_inverts_format_edit() {
        let edit = Edit {
            src_start: 3,
            src_end: 4,
            src_text: "disorder".into(),
            tgt_text: "disorders".into(),
            index: 1,
        };
        let line = format!("{} the noun must be plural", format_edit(&edit));
        let parsed = parse_edit_line(&line).unwrap();
        assert_eq!(parsed.index, 1);
        assert_eq!(parsed.src_text, "disorder");
        assert_eq!(parsed.tgt_text, "disorders");
        assert_eq!(parsed.explanation, "the noun must be plural");

        let eps = parse_edit_line("2. ε → the: missing article").unwrap();
        assert_eq!(eps.src_text, "");
        assert_eq!(eps.tgt_text, "the");

        assert!(parse_edit_line("free text without numbering").is_none());
        assert!(parse_edit_line("3. no arrow here: text").is_none());
    }
}
