//! Bit-exact reader/writer for the M2 corpus format used by the NUCLE and
//! CoNLL shared-task releases.
//!
//! An entry is a tokenized source line (`S tok tok ...`) followed by zero or
//! more annotator edit lines
//! (`A start end|||type|||correction|||REQUIRED|||-NONE-|||annotator`) and a
//! blank line. A `noop` edit with span `-1 -1` registers an annotator with
//! zero edits. The parser is strict: anything it accepts, [`write_m2`]
//! reproduces byte for byte.

use thiserror::Error;

/// One annotator edit: replace source tokens `[start, end)` with the
/// (possibly empty, whitespace-separated) correction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2Edit {
    pub start: usize,
    pub end: usize,
    pub type_code: String,
    pub correction: String,
}

/// All edits contributed by one annotator. An empty edit list round-trips
/// as the canonical noop line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2Annotation {
    pub annotator_id: u32,
    pub edits: Vec<M2Edit>,
}

/// One sentence with its annotator corrections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2Entry {
    pub source_tokens: Vec<String>,
    pub annotations: Vec<M2Annotation>,
}

impl M2Entry {
    /// The source line as text (tokens joined by single spaces).
    pub fn source_text(&self) -> String {
        self.source_tokens.join(" ")
    }
}

#[derive(Debug, Error)]
pub enum M2Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("annotator {0} not present in entry")]
    UnknownAnnotator(u32),
}

fn parse_error(line: usize, message: impl Into<String>) -> M2Error {
    M2Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses M2 text into entries, preserving input ordering. Malformed lines,
/// out-of-range spans, ungrouped annotators, and overlapping edits from one
/// annotator are all rejected with the offending line number.
pub fn parse_m2(input: &str) -> Result<Vec<M2Entry>, M2Error> {
    let mut lines: Vec<&str> = input.split('\n').collect();
    // A trailing newline produces one empty artifact after the final line.
    if lines.last() == Some(&"") {
        lines.pop();
    }

    let mut entries = Vec::new();
    let mut current: Option<M2Entry> = None;
    let mut open_line = 0usize;
    let mut current_is_noop = false;

    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        if raw.is_empty() {
            match current.take() {
                Some(entry) => {
                    validate_entry(&entry, open_line)?;
                    entries.push(entry);
                }
                None => return Err(parse_error(line_no, "blank line outside an entry")),
            }
        } else if let Some(rest) = raw.strip_prefix("S ") {
            if current.is_some() {
                return Err(parse_error(line_no, "source line while an entry is open"));
            }
            let tokens: Vec<String> = rest.split(' ').map(str::to_string).collect();
            if tokens.iter().any(String::is_empty) {
                return Err(parse_error(line_no, "empty token in source line"));
            }
            open_line = line_no;
            current_is_noop = false;
            current = Some(M2Entry {
                source_tokens: tokens,
                annotations: Vec::new(),
            });
        } else if let Some(rest) = raw.strip_prefix("A ") {
            let entry = current
                .as_mut()
                .ok_or_else(|| parse_error(line_no, "edit line outside an entry"))?;
            let (annotator_id, edit) = parse_edit_line(rest, line_no)?;
            attach_edit(entry, annotator_id, edit, line_no, &mut current_is_noop)?;
        } else {
            return Err(parse_error(line_no, "expected 'S ', 'A ', or a blank line"));
        }
    }

    if let Some(entry) = current.take() {
        validate_entry(&entry, open_line)?;
        entries.push(entry);
    }
    Ok(entries)
}

fn parse_edit_line(rest: &str, line_no: usize) -> Result<(u32, Option<M2Edit>), M2Error> {
    let fields: Vec<&str> = rest.split("|||").collect();
    if fields.len() != 6 {
        return Err(parse_error(
            line_no,
            format!("expected 6 '|||' fields, found {}", fields.len()),
        ));
    }
    let span: Vec<&str> = fields[0].split(' ').collect();
    if span.len() != 2 {
        return Err(parse_error(line_no, "span must be '<start> <end>'"));
    }
    let start: i64 = span[0]
        .parse()
        .map_err(|_| parse_error(line_no, "start index is not an integer"))?;
    let end: i64 = span[1]
        .parse()
        .map_err(|_| parse_error(line_no, "end index is not an integer"))?;
    let type_code = fields[1];
    if type_code.is_empty() {
        return Err(parse_error(line_no, "empty edit type"));
    }
    if fields[3] != "REQUIRED" || fields[4] != "-NONE-" {
        return Err(parse_error(
            line_no,
            "fields 4 and 5 must be 'REQUIRED' and '-NONE-'",
        ));
    }
    let annotator_id: u32 = fields[5]
        .parse()
        .map_err(|_| parse_error(line_no, "annotator id is not a non-negative integer"))?;

    if type_code == "noop" {
        if (start, end) != (-1, -1) {
            return Err(parse_error(line_no, "noop edits must have span -1 -1"));
        }
        return Ok((annotator_id, None));
    }
    if start < 0 || end < start {
        return Err(parse_error(line_no, "edit span must satisfy 0 <= start <= end"));
    }
    Ok((
        annotator_id,
        Some(M2Edit {
            start: start as usize,
            end: end as usize,
            type_code: type_code.to_string(),
            correction: fields[2].to_string(),
        }),
    ))
}

fn attach_edit(
    entry: &mut M2Entry,
    annotator_id: u32,
    edit: Option<M2Edit>,
    line_no: usize,
    current_is_noop: &mut bool,
) -> Result<(), M2Error> {
    let is_current = entry
        .annotations
        .last()
        .is_some_and(|a| a.annotator_id == annotator_id);
    if is_current && *current_is_noop {
        return Err(parse_error(line_no, "noop must be the annotator's only line"));
    }
    if !is_current {
        if entry.annotations.iter().any(|a| a.annotator_id == annotator_id) {
            return Err(parse_error(
                line_no,
                format!("annotator {annotator_id} appears in two separate groups"),
            ));
        }
        entry.annotations.push(M2Annotation {
            annotator_id,
            edits: Vec::new(),
        });
    }
    let annotation = entry.annotations.last_mut().expect("just ensured");
    match edit {
        None => {
            if is_current {
                return Err(parse_error(line_no, "noop must be the annotator's only line"));
            }
            *current_is_noop = true;
        }
        Some(edit) => {
            *current_is_noop = false;
            annotation.edits.push(edit);
        }
    }
    Ok(())
}

fn validate_entry(entry: &M2Entry, line_no: usize) -> Result<(), M2Error> {
    let len = entry.source_tokens.len();
    for annotation in &entry.annotations {
        for edit in &annotation.edits {
            if edit.end > len {
                return Err(parse_error(
                    line_no,
                    format!(
                        "edit span {}..{} exceeds the {} source tokens",
                        edit.start, edit.end, len
                    ),
                ));
            }
        }
        let mut spans: Vec<(usize, usize)> = annotation
            .edits
            .iter()
            .map(|e| (e.start, e.end))
            .collect();
        spans.sort_unstable();
        for pair in spans.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(parse_error(
                    line_no,
                    format!(
                        "annotator {} has overlapping edits at tokens {}..{} and {}..{}",
                        annotation.annotator_id, pair[0].0, pair[0].1, pair[1].0, pair[1].1
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Canonical serialization inverting [`parse_m2`]: each entry is the source
/// line, its edit lines (annotators with no edits become noop lines), and a
/// blank line.
pub fn write_m2(entries: &[M2Entry]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str("S ");
        out.push_str(&entry.source_tokens.join(" "));
        out.push('\n');
        for annotation in &entry.annotations {
            if annotation.edits.is_empty() {
                out.push_str(&format!(
                    "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||{}\n",
                    annotation.annotator_id
                ));
            } else {
                for edit in &annotation.edits {
                    out.push_str(&format!(
                        "A {} {}|||{}|||{}|||REQUIRED|||-NONE-|||{}\n",
                        edit.start,
                        edit.end,
                        edit.type_code,
                        edit.correction,
                        annotation.annotator_id
                    ));
                }
            }
        }
        out.push('\n');
    }
    out
}

/// The corrected text for one annotator: that annotator's edits applied to
/// the source tokens right to left, joined by single spaces (M2 corpora are
/// pre-tokenized, so the corrected side stays tokenized too).
pub fn apply_m2(entry: &M2Entry, annotator_id: u32) -> Result<String, M2Error> {
    let annotation = entry
        .annotations
        .iter()
        .find(|a| a.annotator_id == annotator_id)
        .ok_or(M2Error::UnknownAnnotator(annotator_id))?;

    let mut tokens: Vec<String> = entry.source_tokens.clone();
    let mut order: Vec<&M2Edit> = annotation.edits.iter().collect();
    order.sort_by_key(|e| (e.start, e.end));
    for edit in order.into_iter().rev() {
        let replacement: Vec<String> =
            edit.correction.split_whitespace().map(str::to_string).collect();
        tokens.splice(edit.start..edit.end, replacement);
    }
    Ok(tokens.join(" "))
}

/// Edits kept by at least `min_annotators` of the entry's annotators, where
/// two edits count as the same when they agree on span and correction.
/// Useful for building high-agreement references from multi-annotator data.
pub fn agreement_filter(entry: &M2Entry, min_annotators: usize) -> Vec<M2Edit> {
    let mut kept: Vec<(M2Edit, usize)> = Vec::new();
    for annotation in &entry.annotations {
        for edit in &annotation.edits {
            match kept.iter_mut().find(|(e, _)| {
                e.start == edit.start && e.end == edit.end && e.correction == edit.correction
            }) {
                Some((_, count)) => *count += 1,
                None => kept.push((edit.clone(), 1)),
            }
        }
    }
    let mut result: Vec<M2Edit> = kept
        .into_iter()
        .filter(|(_, count)| *count >= min_annotators)
        .map(|(edit, _)| edit)
        .collect();
    result.sort_by_key(|e| (e.start, e.end));
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "S a b .\nA 1 2|||R:X|||c|||REQUIRED|||-NONE-|||0\n\n";
    const NOOP: &str = "S a b .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\n";

    #[test]
    fn parses_a_minimal_entry() {
        let entries = parse_m2(MINIMAL).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].source_tokens, ["a", "b", "."]);
        assert_eq!(entries[0].annotations.len(), 1);
        let annotation = &entries[0].annotations[0];
        assert_eq!(annotation.annotator_id, 0);
        assert_eq!(
            annotation.edits,
            vec![M2Edit {
                start: 1,
                end: 2,
                type_code: "R:X".into(),
                correction: "c".into(),
            }]
        );
    }

    #[test]
    fn noop_yields_an_annotator_with_zero_edits() {
        let entries = parse_m2(NOOP).unwrap();
        assert_eq!(entries[0].annotations.len(), 1);
        assert!(entries[0].annotations[0].edits.is_empty());
    }

    #[test]
    fn write_inverts_parse_on_canonical_text() {
        for text in [MINIMAL, NOOP] {
            assert_eq!(write_m2(&parse_m2(text).unwrap()), text);
        }
    }

    #[test]
    fn parse_inverts_write_on_entries() {
        let entries = parse_m2(MINIMAL).unwrap();
        assert_eq!(parse_m2(&write_m2(&entries)).unwrap(), entries);
    }

    #[test]
    fn apply_replaces_tokens() {
        let entries = parse_m2(MINIMAL).unwrap();
        assert_eq!(apply_m2(&entries[0], 0).unwrap(), "a c .");
    }

    #[test]
    fn apply_noop_is_identity() {
        let entries = parse_m2(NOOP).unwrap();
        assert_eq!(apply_m2(&entries[0], 0).unwrap(), "a b .");
    }

    #[test]
    fn apply_handles_insertion_and_deletion() {
        let text = "S a b c\n\
                    A 1 1|||M:DET|||the very|||REQUIRED|||-NONE-|||0\n\
                    A 2 3|||U:X||||||REQUIRED|||-NONE-|||0\n\n";
        let entries = parse_m2(text).unwrap();
        assert_eq!(apply_m2(&entries[0], 0).unwrap(), "a the very b");
        // Deletion edits carry an empty correction and survive round-trips.
        assert_eq!(write_m2(&entries), text);
    }

    #[test]
    fn unknown_annotator_is_an_error() {
        let entries = parse_m2(MINIMAL).unwrap();
        assert!(matches!(
            apply_m2(&entries[0], 9),
            Err(M2Error::UnknownAnnotator(9))
        ));
    }

    #[test]
    fn malformed_lines_report_their_line_number() {
        let err = parse_m2("S a b\nA 0 1|||R:X|||x|||WRONG|||-NONE-|||0\n\n").unwrap_err();
        match err {
            M2Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(parse_m2("garbage\n").is_err());
        assert!(parse_m2("S a\nA 0|||R|||x|||REQUIRED|||-NONE-|||0\n\n").is_err());
    }

    #[test]
    fn overlapping_edits_from_one_annotator_are_rejected() {
        let text = "S a b c d\n\
                    A 0 2|||R:X|||x|||REQUIRED|||-NONE-|||0\n\
                    A 1 3|||R:Y|||y|||REQUIRED|||-NONE-|||0\n\n";
        assert!(parse_m2(text).is_err());
    }

    #[test]
    fn spans_beyond_the_source_are_rejected() {
        assert!(parse_m2("S a b\nA 1 5|||R:X|||x|||REQUIRED|||-NONE-|||0\n\n").is_err());
    }

    #[test]
    fn multiple_annotators_keep_first_appearance_order() {
        let text = "S a b\n\
                    A 0 1|||R:X|||x|||REQUIRED|||-NONE-|||1\n\
                    A 1 2|||R:Y|||y|||REQUIRED|||-NONE-|||0\n\n";
        let entries = parse_m2(text).unwrap();
        let ids: Vec<u32> = entries[0]
            .annotations
            .iter()
            .map(|a| a.annotator_id)
            .collect();
        assert_eq!(ids, [1, 0]);
        assert_eq!(write_m2(&entries), text);
    }

    #[test]
    fn ungrouped_annotator_lines_are_rejected() {
        let text = "S a b c\n\
                    A 0 1|||R:X|||x|||REQUIRED|||-NONE-|||0\n\
                    A 1 2|||R:Y|||y|||REQUIRED|||-NONE-|||1\n\
                    A 2 3|||R:Z|||z|||REQUIRED|||-NONE-|||0\n\n";
        assert!(parse_m2(text).is_err());
    }

    #[test]
    fn noop_followed_by_an_edit_is_rejected() {
        let text = "S a b\n\
                    A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\
                    A 0 1|||R:X|||x|||REQUIRED|||-NONE-|||0\n\n";
        assert!(parse_m2(text).is_err());
    }

    #[test]
    fn agreement_filter_counts_identical_edits() {
        let text = "S a b c\n\
                    A 0 1|||R:X|||x|||REQUIRED|||-NONE-|||0\n\
                    A 0 1|||R:Q|||x|||REQUIRED|||-NONE-|||1\n\
                    A 1 2|||R:Y|||y|||REQUIRED|||-NONE-|||1\n\
                    A 0 1|||R:X|||x|||REQUIRED|||-NONE-|||2\n\n";
        let entries = parse_m2(text).unwrap();
        let kept = agreement_filter(&entries[0], 3);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].correction, "x");
        assert_eq!(agreement_filter(&entries[0], 2).len(), 1);
        assert_eq!(agreement_filter(&entries[0], 1).len(), 2);
    }
}
