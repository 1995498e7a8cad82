//! Deterministic word/punctuation tokenization shared by every other module.
//!
//! The splitter is rule-based on purpose: identical input always yields the
//! identical token stream, with no linguistic resources involved. Offsets
//! count extended grapheme clusters and no normalization is applied, so a
//! token can always be traced back to the exact slice of the original text.

use unicode_segmentation::UnicodeSegmentation;

/// Punctuation characters that are split off the edges of a whitespace chunk.
const SPLIT_PUNCT: [char; 10] = ['.', ',', '?', '!', ';', ':', '"', '\'', '(', ')'];

/// Punctuation that attaches to the preceding token when detokenizing.
const NO_SPACE_BEFORE: [&str; 7] = [".", ",", "?", "!", ";", ":", ")"];

/// One whitespace/punctuation-delimited unit of text.
///
/// `char_start`/`char_end` are grapheme-cluster offsets into the original
/// text (end exclusive); `surface` is exactly that slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, char_start: usize, char_end: usize) -> Self {
        let surface = surface.into();
        debug_assert!(!surface.is_empty());
        debug_assert!(char_end > char_start);
        Token {
            surface,
            char_start,
            char_end,
        }
    }
}

fn is_whitespace_grapheme(g: &str) -> bool {
    g.chars().all(char::is_whitespace)
}

fn is_split_punct(g: &str) -> bool {
    let mut chars = g.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => SPLIT_PUNCT.contains(&c),
        _ => false,
    }
}

/// Splits `text` into tokens: first on whitespace, then each leading or
/// trailing punctuation character of a chunk becomes its own token.
/// Punctuation inside a chunk (e.g. the apostrophe in `don't`) is kept.
///
/// Total function; empty input yields an empty sequence.
pub fn tokenize(text: &str) -> Vec<Token> {
    let graphemes: Vec<&str> = text.graphemes(true).collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < graphemes.len() {
        if is_whitespace_grapheme(graphemes[i]) {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < graphemes.len() && !is_whitespace_grapheme(graphemes[i]) {
            i += 1;
        }
        let chunk_end = i;

        let mut lo = chunk_start;
        let mut hi = chunk_end;
        let mut leading: Vec<usize> = Vec::new();
        let mut trailing: Vec<usize> = Vec::new();
        while lo < hi && is_split_punct(graphemes[lo]) {
            leading.push(lo);
            lo += 1;
        }
        while hi > lo && is_split_punct(graphemes[hi - 1]) {
            trailing.push(hi - 1);
            hi -= 1;
        }

        for &p in &leading {
            tokens.push(Token::new(graphemes[p], p, p + 1));
        }
        if lo < hi {
            tokens.push(Token::new(graphemes[lo..hi].concat(), lo, hi));
        }
        for &p in trailing.iter().rev() {
            tokens.push(Token::new(graphemes[p], p, p + 1));
        }
    }
    tokens
}

/// Surfaces of a token slice, in order.
pub fn surfaces(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(|t| t.surface.as_str()).collect()
}

/// Joins surfaces with single spaces, except that `.,?!;:)` attach to the
/// preceding token and nothing follows an opening parenthesis.
///
/// Not a byte-exact inverse of [`tokenize`], but stable at the token level:
/// re-tokenizing the result yields the same surface sequence.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for surface in tokens {
        let surface = surface.as_ref();
        if let Some(p) = prev {
            if !NO_SPACE_BEFORE.contains(&surface) && p != "(" {
                out.push(' ');
            }
        }
        out.push_str(surface);
        prev = Some(surface);
    }
    out
}
