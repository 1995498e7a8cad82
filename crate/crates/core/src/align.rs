//! Minimum-cost token alignment between a source and a corrected token
//! sequence.
//!
//! The aligner is a Damerau-style dynamic program over whole tokens with
//! adjacent-block transpositions. Costs are exact rationals so that ties are
//! ties and traceback is reproducible: no float jitter, no platform drift.
//! The substitution cost is character-similarity based, which keeps
//! morphological variants (disorder/disorders) aligned as substitutions
//! without any linguistic resources.

use std::collections::HashMap;
use std::ops::Add;

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::text::Token;

/// What a single alignment step does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Match,
    Substitute,
    Insert,
    Delete,
    Transpose,
}

/// One step of the alignment, tiling `[src_start, src_end)` against
/// `[tgt_start, tgt_end)`. Match/Substitute cover one token on each side,
/// Insert/Delete cover one token on one side (the other range is empty at
/// the current boundary), Transpose covers an equal block of length >= 2 on
/// both sides whose target tokens are a permutation of the source tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentOp {
    pub kind: OpKind,
    pub src_start: usize,
    pub src_end: usize,
    pub tgt_start: usize,
    pub tgt_end: usize,
    pub cost: Rational64,
}

/// Alignment cost parameters. All fields must be non-negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub insert_cost: Rational64,
    pub delete_cost: Rational64,
    pub match_cost: Rational64,
    pub case_only_substitute_cost: Rational64,
    pub substitute_base: Rational64,
    pub transpose_cost_per_token: Rational64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            insert_cost: Rational64::from_integer(1),
            delete_cost: Rational64::from_integer(1),
            match_cost: Rational64::from_integer(0),
            case_only_substitute_cost: Rational64::new(1, 10),
            substitute_base: Rational64::from_integer(2),
            transpose_cost_per_token: Rational64::from_integer(1),
        }
    }
}

impl CostModel {
    /// True when every field is non-negative.
    pub fn is_valid(&self) -> bool {
        let zero = Rational64::zero();
        self.insert_cost >= zero
            && self.delete_cost >= zero
            && self.match_cost >= zero
            && self.case_only_substitute_cost >= zero
            && self.substitute_base >= zero
            && self.transpose_cost_per_token >= zero
    }
}

/// Cost of substituting token `a` by token `b`: 0 for identical surfaces,
/// the case-only cost for case-insensitively equal surfaces, otherwise
/// `substitute_base * (1 - char_similarity)` where similarity is
/// `1 - levenshtein(a, b) / max_len`, clamped to `[0, 1]`.
pub fn substitution_cost(a: &Token, b: &Token, costs: &CostModel) -> Rational64 {
    surface_substitution_cost(&a.surface, &b.surface, costs)
}

pub(crate) fn surface_substitution_cost(a: &str, b: &str, costs: &CostModel) -> Rational64 {
    if a == b {
        return Rational64::zero();
    }
    if a.to_lowercase() == b.to_lowercase() {
        return costs.case_only_substitute_cost;
    }
    let a_chars: Vec<char> = a.chars().collect();
    let b_chars: Vec<char> = b.chars().collect();
    let max_len = a_chars.len().max(b_chars.len());
    if max_len == 0 {
        return Rational64::zero();
    }
    let distance = char_levenshtein(&a_chars, &b_chars);
    let mut similarity =
        Rational64::from_integer(1) - Rational64::new(distance as i64, max_len as i64);
    similarity = similarity
        .max(Rational64::zero())
        .min(Rational64::from_integer(1));
    costs.substitute_base * (Rational64::from_integer(1) - similarity)
}

/// Cost of transposing an adjacent block of `k >= 2` tokens:
/// `k * transpose_cost_per_token - 1/2`, floored at zero. Strictly cheaper
/// than `k` deletes plus `k` inserts under the defaults, strictly dearer
/// than `k` matches.
pub fn transpose_cost(k: usize, costs: &CostModel) -> Rational64 {
    let raw = Rational64::from_integer(k as i64) * costs.transpose_cost_per_token
        - Rational64::new(1, 2);
    raw.max(Rational64::zero())
}

fn char_levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Traceback decision for one DP cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Start,
    Match,
    Substitute,
    Transpose(u16),
    Delete,
    Insert,
}

/// Aligns `src` against `tgt`, returning ops that tile both sequences with
/// globally minimal total cost. Traceback ties break in the priority order
/// Match > Substitute > Transpose > Delete > Insert (and the shortest block
/// among equal-cost transpositions), so identical inputs always produce the
/// identical op sequence.
pub fn align(src: &[Token], tgt: &[Token], costs: &CostModel) -> Vec<AlignmentOp> {
    align_impl(src, tgt, costs, false)
}

fn align_impl(
    src: &[Token],
    tgt: &[Token],
    costs: &CostModel,
    force_rational: bool,
) -> Vec<AlignmentOp> {
    let n = src.len();
    let m = tgt.len();

    // Intern surfaces so equality and multiset bookkeeping work on ints.
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut src_ids = Vec::with_capacity(n);
    for token in src {
        let next = ids.len() as u32;
        src_ids.push(*ids.entry(token.surface.as_str()).or_insert(next));
    }
    let mut tgt_ids = Vec::with_capacity(m);
    for token in tgt {
        let next = ids.len() as u32;
        tgt_ids.push(*ids.entry(token.surface.as_str()).or_insert(next));
    }
    let distinct = ids.len();

    // Per-pair substitution costs and per-length transposition costs.
    let mut sub = vec![Rational64::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            if src_ids[i] != tgt_ids[j] {
                sub[i * m + j] = substitution_cost(&src[i], &tgt[j], costs);
            }
        }
    }
    let kmax = n.min(m);
    let mut trans = vec![Rational64::zero(); kmax + 1];
    for (k, slot) in trans.iter_mut().enumerate().skip(2) {
        *slot = transpose_cost(k, costs);
    }

    let scaled = if force_rational {
        None
    } else {
        ScaledCosts::try_build(costs, &sub, &trans, n + m)
    };
    let choices = match scaled {
        Some(s) => solve(
            n, m, &src_ids, &tgt_ids, distinct, 0i64, s.match_cost, s.insert_cost,
            s.delete_cost, &s.sub, &s.trans,
        ),
        None => solve(
            n,
            m,
            &src_ids,
            &tgt_ids,
            distinct,
            Rational64::zero(),
            costs.match_cost,
            costs.insert_cost,
            costs.delete_cost,
            &sub,
            &trans,
        ),
    };

    // Traceback, emitting ops back-to-front.
    let mut ops = Vec::new();
    let mut i = n;
    let mut j = m;
    while !(i == 0 && j == 0) {
        match choices[i * (m + 1) + j] {
            Choice::Start => unreachable!("traceback reached Start off-origin"),
            Choice::Match => {
                ops.push(AlignmentOp {
                    kind: OpKind::Match,
                    src_start: i - 1,
                    src_end: i,
                    tgt_start: j - 1,
                    tgt_end: j,
                    cost: costs.match_cost,
                });
                i -= 1;
                j -= 1;
            }
            Choice::Substitute => {
                ops.push(AlignmentOp {
                    kind: OpKind::Substitute,
                    src_start: i - 1,
                    src_end: i,
                    tgt_start: j - 1,
                    tgt_end: j,
                    cost: sub[(i - 1) * m + (j - 1)],
                });
                i -= 1;
                j -= 1;
            }
            Choice::Transpose(k) => {
                let k = k as usize;
                ops.push(AlignmentOp {
                    kind: OpKind::Transpose,
                    src_start: i - k,
                    src_end: i,
                    tgt_start: j - k,
                    tgt_end: j,
                    cost: trans[k],
                });
                i -= k;
                j -= k;
            }
            Choice::Delete => {
                ops.push(AlignmentOp {
                    kind: OpKind::Delete,
                    src_start: i - 1,
                    src_end: i,
                    tgt_start: j,
                    tgt_end: j,
                    cost: costs.delete_cost,
                });
                i -= 1;
            }
            Choice::Insert => {
                ops.push(AlignmentOp {
                    kind: OpKind::Insert,
                    src_start: i,
                    src_end: i,
                    tgt_start: j - 1,
                    tgt_end: j,
                    cost: costs.insert_cost,
                });
                j -= 1;
            }
        }
    }
    ops.reverse();
    ops
}

/// Integer mirror of the rational costs over a common denominator. The DP
/// only adds and compares, so scaling preserves every decision exactly;
/// falls back to rationals when the common denominator would overflow.
struct ScaledCosts {
    match_cost: i64,
    insert_cost: i64,
    delete_cost: i64,
    sub: Vec<i64>,
    trans: Vec<i64>,
}

const MAX_DENOM_LCM: i64 = 1_000_000_000_000;
const MAX_SCALED: i64 = 1 << 50;

impl ScaledCosts {
    fn try_build(
        costs: &CostModel,
        sub: &[Rational64],
        trans: &[Rational64],
        path_len: usize,
    ) -> Option<ScaledCosts> {
        if path_len as i64 > i64::MAX / 4 / MAX_SCALED {
            return None;
        }
        let mut lcm = 1i64;
        let fold = |lcm: &mut i64, value: &Rational64| -> Option<()> {
            let denom = *value.denom();
            let g = gcd(*lcm, denom);
            *lcm = lcm.checked_mul(denom / g)?;
            (*lcm <= MAX_DENOM_LCM).then_some(())
        };
        fold(&mut lcm, &costs.match_cost)?;
        fold(&mut lcm, &costs.insert_cost)?;
        fold(&mut lcm, &costs.delete_cost)?;
        for value in sub.iter().chain(trans.iter()) {
            fold(&mut lcm, value)?;
        }
        let scale = |value: &Rational64| -> Option<i64> {
            let scaled = value.numer().checked_mul(lcm / value.denom())?;
            (scaled.abs() <= MAX_SCALED).then_some(scaled)
        };
        Some(ScaledCosts {
            match_cost: scale(&costs.match_cost)?,
            insert_cost: scale(&costs.insert_cost)?,
            delete_cost: scale(&costs.delete_cost)?,
            sub: sub.iter().map(|v| scale(v)).collect::<Option<Vec<_>>>()?,
            trans: trans.iter().map(|v| scale(v)).collect::<Option<Vec<_>>>()?,
        })
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// Forward DP over any totally ordered additive cost domain. Candidates are
/// evaluated in tie-break priority order and replaced only on strict
/// improvement.
#[allow(clippy::too_many_arguments)]
fn solve<C>(
    n: usize,
    m: usize,
    src_ids: &[u32],
    tgt_ids: &[u32],
    distinct: usize,
    zero: C,
    match_cost: C,
    insert_cost: C,
    delete_cost: C,
    sub: &[C],
    trans: &[C],
) -> Vec<Choice>
where
    C: Copy + Ord + Add<Output = C>,
{
    let w = m + 1;
    let mut cost = vec![zero; (n + 1) * w];
    let mut choice = vec![Choice::Start; (n + 1) * w];
    for i in 1..=n {
        cost[i * w] = cost[(i - 1) * w] + delete_cost;
        choice[i * w] = Choice::Delete;
    }
    for j in 1..=m {
        cost[j] = cost[j - 1] + insert_cost;
        choice[j] = Choice::Insert;
    }

    // Multiset delta between the two candidate transposition windows.
    let mut counts = vec![0i32; distinct];
    let mut nonzero = 0usize;
    fn bump(counts: &mut [i32], nonzero: &mut usize, id: u32, delta: i32) {
        let slot = &mut counts[id as usize];
        if *slot == 0 {
            *nonzero += 1;
        }
        *slot += delta;
        if *slot == 0 {
            *nonzero -= 1;
        }
    }

    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * w + (j - 1)];
            let (mut best, mut picked) = if src_ids[i - 1] == tgt_ids[j - 1] {
                (diag + match_cost, Choice::Match)
            } else {
                (diag + sub[(i - 1) * m + (j - 1)], Choice::Substitute)
            };

            let kmax = i.min(j);
            if kmax >= 2 {
                let mut positionwise_equal = true;
                for k in 1..=kmax {
                    let s = src_ids[i - k];
                    let t = tgt_ids[j - k];
                    bump(&mut counts, &mut nonzero, s, 1);
                    bump(&mut counts, &mut nonzero, t, -1);
                    positionwise_equal &= s == t;
                    if k >= 2 && nonzero == 0 && !positionwise_equal {
                        let candidate = cost[(i - k) * w + (j - k)] + trans[k];
                        if candidate < best {
                            best = candidate;
                            picked = Choice::Transpose(k as u16);
                        }
                    }
                }
                for k in 1..=kmax {
                    bump(&mut counts, &mut nonzero, src_ids[i - k], -1);
                    bump(&mut counts, &mut nonzero, tgt_ids[j - k], 1);
                }
            }

            let deleted = cost[(i - 1) * w + j] + delete_cost;
            if deleted < best {
                best = deleted;
                picked = Choice::Delete;
            }
            let inserted = cost[i * w + (j - 1)] + insert_cost;
            if inserted < best {
                best = inserted;
                picked = Choice::Insert;
            }

            cost[i * w + j] = best;
            choice[i * w + j] = picked;
        }
    }
    choice
}

/// Total cost of an op sequence.
pub fn total_cost(ops: &[AlignmentOp]) -> Rational64 {
    ops.iter().map(|op| op.cost).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn toks(text: &str) -> Vec<Token> {
        tokenize(text)
    }

    fn kinds(ops: &[AlignmentOp]) -> Vec<OpKind> {
        ops.iter().map(|op| op.kind).collect()
    }

    #[test]
    fn substitution_cost_examples() {
        let costs = CostModel::default();
        let t = |s: &str| Token::new(s, 0, 1);
        assert_eq!(substitution_cost(&t("the"), &t("the"), &costs), Rational64::zero());
        assert_eq!(
            substitution_cost(&t("The"), &t("the"), &costs),
            Rational64::new(1, 10)
        );
        // levenshtein("disorder", "disorders") = 1, max len 9: 2 * (1 - 8/9).
        assert_eq!(
            substitution_cost(&t("disorder"), &t("disorders"), &costs),
            Rational64::new(2, 9)
        );
        // Disjoint single chars hit the full base cost.
        assert_eq!(
            substitution_cost(&t("."), &t("?"), &costs),
            Rational64::from_integer(2)
        );
    }

    #[test]
    fn identity_aligns_as_all_matches_with_zero_cost() {
        let costs = CostModel::default();
        let x = toks("a b c d");
        let ops = align(&x, &x, &costs);
        assert_eq!(kinds(&ops), vec![OpKind::Match; 4]);
        assert_eq!(total_cost(&ops), Rational64::zero());
    }

    #[test]
    fn morphological_variant_is_a_substitution() {
        let costs = CostModel::default();
        let ops = align(&toks("disorder"), &toks("disorders"), &costs);
        assert_eq!(kinds(&ops), vec![OpKind::Substitute]);
        assert_eq!(ops[0].cost, Rational64::new(2, 9));
    }

    #[test]
    fn substitute_wins_cost_ties_against_delete_insert() {
        // sub(".", "?") = 2 which ties delete + insert; priority says Substitute.
        let costs = CostModel::default();
        let ops = align(&toks("."), &toks("?"), &costs);
        assert_eq!(kinds(&ops), vec![OpKind::Substitute]);
    }

    #[test]
    fn adjacent_swap_becomes_a_transposition() {
        let costs = CostModel::default();
        let ops = align(&toks("a b c"), &toks("b a c"), &costs);
        assert_eq!(kinds(&ops), vec![OpKind::Transpose, OpKind::Match]);
        assert_eq!(ops[0].src_start, 0);
        assert_eq!(ops[0].src_end, 2);
        assert_eq!(ops[0].cost, Rational64::new(3, 2));
    }

    #[test]
    fn empty_sides_align_as_pure_inserts_or_deletes() {
        let costs = CostModel::default();
        assert_eq!(kinds(&align(&[], &toks("a b"), &costs)), vec![OpKind::Insert; 2]);
        assert_eq!(kinds(&align(&toks("a b"), &[], &costs)), vec![OpKind::Delete; 2]);
        assert!(align(&[], &[], &costs).is_empty());
    }

    #[test]
    fn ops_tile_both_sequences() {
        let costs = CostModel::default();
        let src = toks("the Cat sat on on mat");
        let tgt = toks("The cat sat on the mat .");
        let ops = align(&src, &tgt, &costs);
        let mut i = 0;
        let mut j = 0;
        for op in &ops {
            assert_eq!(op.src_start, i);
            assert_eq!(op.tgt_start, j);
            assert!(op.src_end >= op.src_start);
            assert!(op.tgt_end >= op.tgt_start);
            i = op.src_end;
            j = op.tgt_end;
        }
        assert_eq!(i, src.len());
        assert_eq!(j, tgt.len());
    }

    #[test]
    fn transpose_cost_is_floored_at_zero() {
        let mut costs = CostModel::default();
        costs.transpose_cost_per_token = Rational64::zero();
        assert_eq!(transpose_cost(2, &costs), Rational64::zero());
    }

    #[test]
    fn scaled_and_rational_paths_agree() {
        let costs = CostModel::default();
        let cases = [
            ("one Two three foor .", "Two one three four ?"),
            ("a b c d e f", "f e d c b a"),
            ("the the the", "thee The"),
            ("", "a b"),
            ("Genetic disorder is common .", "Genetic disorders are common ?"),
        ];
        for (s, t) in cases {
            let src = toks(s);
            let tgt = toks(t);
            assert_eq!(
                align_impl(&src, &tgt, &costs, false),
                align_impl(&src, &tgt, &costs, true),
                "case ({s:?}, {t:?})"
            );
        }
    }

    #[test]
    fn insert_count_mirrors_delete_count_under_swap() {
        let costs = CostModel::default();
        let cases = [
            ("a b", "b a"),
            ("the cat sat", "a cat sat down"),
            ("x y z", ""),
            ("no change", "no change"),
            ("a b c d", "d c b a"),
        ];
        for (s, t) in cases {
            let forward = align(&toks(s), &toks(t), &costs);
            let backward = align(&toks(t), &toks(s), &costs);
            let inserts = forward.iter().filter(|o| o.kind == OpKind::Insert).count();
            let deletes = backward.iter().filter(|o| o.kind == OpKind::Delete).count();
            assert_eq!(inserts, deletes, "case ({s:?}, {t:?})");
        }
    }
}
