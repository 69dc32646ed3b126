//! Sum-of-max relevance kernels.
//!
//! For query rows `Q_i` and document rows `D_j`:
//!
//! - soft: `sum_i max_j <Q_i, D_j>` over every document row;
//! - hard: `sum_i max_{j : id(D_j) = id(Q_i)} <Q_i, D_j>`, where query tokens
//!   with no same-id document token contribute 0; the `HardFull` variant adds
//!   the inner product of the two summary vectors.
//!
//! Every kernel returns a [`MatchTrace`] recording the argmax position and
//! partial score of each query token. Argmax ties go to the smallest document
//! position. Partials are combined with pairwise summation, and the index
//! implementations reuse [`dot`] and [`pairwise_sum`] so their scores are
//! bit-identical to these kernels.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::store::{AsTokenMatrix, TokenEmbeddings, TokenMatrix};

/// Which sum-of-max variant to score with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchKind {
    /// Max over all document tokens.
    Soft,
    /// Max over same-id document tokens only.
    HardToken,
    /// `HardToken` plus the summary-vector inner product.
    HardFull,
}

impl MatchKind {
    pub fn is_hard(self) -> bool {
        !matches!(self, MatchKind::Soft)
    }
}

/// Best match of one query token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenMatch {
    pub query_pos: usize,
    /// `None` when the admissible set is empty (hard matching only).
    pub doc_pos: Option<usize>,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchTrace {
    /// One entry per query token, in query order.
    pub matches: Vec<TokenMatch>,
    /// Summary-vector term (`HardFull` only).
    pub summary: Option<f32>,
    pub total: f32,
}

impl MatchTrace {
    fn from_matches(matches: Vec<TokenMatch>, summary: Option<f32>) -> Self {
        let partials: Vec<f32> = matches.iter().map(|m| m.score).collect();
        let total = pairwise_sum(&partials) + summary.unwrap_or(0.0);
        Self {
            matches,
            summary,
            total,
        }
    }
}

/// A document and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: u64,
    pub score: f32,
}

/// Ranking order: descending score, then ascending doc id.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Inner product with four independent accumulators.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f32]) -> f32 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        values.iter().fold(0.0f32, |acc, v| acc + v)
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

fn check_dims(q: &TokenMatrix<'_>, d: &TokenMatrix<'_>) -> Result<()> {
    if q.dim != d.dim {
        Err(Error::Shape(format!(
            "query dimension {} differs from document dimension {}",
            q.dim, d.dim
        )))
    } else {
        Ok(())
    }
}

/// Best document row for `q_row` among `candidates` (ascending positions).
#[inline]
fn best_of(
    q_row: &[f32],
    d: &TokenMatrix<'_>,
    candidates: impl Iterator<Item = usize>,
) -> Option<(usize, f32)> {
    let mut best: Option<(usize, f32)> = None;
    for j in candidates {
        let s = dot(q_row, d.row(j));
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((j, s)),
        }
    }
    best
}

/// Soft sum-of-max: every query token takes its best inner product over all document rows.
pub fn soft_match<Q, D>(q: &Q, d: &D) -> Result<MatchTrace>
where
    Q: AsTokenMatrix + ?Sized,
    D: AsTokenMatrix + ?Sized,
{
    let (q, d) = (q.as_matrix(), d.as_matrix());
    check_dims(&q, &d)?;
    if d.is_empty() {
        return Err(Error::Shape("document has no tokens".into()));
    }
    let matches = (0..q.len())
        .map(|i| {
            let (j, s) = best_of(q.row(i), &d, 0..d.len()).expect("non-empty document");
            TokenMatch {
                query_pos: i,
                doc_pos: Some(j),
                score: s,
            }
        })
        .collect();
    Ok(MatchTrace::from_matches(matches, None))
}

/// Hard sum-of-max. Each query occurrence is matched independently, so a token
/// repeated in the query contributes once per occurrence.
pub fn hard_match<Q, D>(q: &Q, d: &D, kind: MatchKind) -> Result<MatchTrace>
where
    Q: AsTokenMatrix + ?Sized,
    D: AsTokenMatrix + ?Sized,
{
    let (q, d) = (q.as_matrix(), d.as_matrix());
    check_dims(&q, &d)?;
    let summary = match kind {
        MatchKind::Soft => {
            return Err(Error::Precondition(
                "hard_match called with MatchKind::Soft".into(),
            ))
        }
        MatchKind::HardToken => None,
        MatchKind::HardFull => Some(summary_term(&q, &d)?),
    };
    let matches = (0..q.len())
        .map(|i| {
            let qt = q.token_ids[i];
            let same = (0..d.len()).filter(|&j| d.token_ids[j] == qt);
            match best_of(q.row(i), &d, same) {
                Some((j, s)) => TokenMatch {
                    query_pos: i,
                    doc_pos: Some(j),
                    score: s,
                },
                None => TokenMatch {
                    query_pos: i,
                    doc_pos: None,
                    score: 0.0,
                },
            }
        })
        .collect();
    Ok(MatchTrace::from_matches(matches, summary))
}

pub(crate) fn summary_term(q: &TokenMatrix<'_>, d: &TokenMatrix<'_>) -> Result<f32> {
    match (q.summary, d.summary) {
        (Some(qs), Some(ds)) if qs.len() == ds.len() => Ok(dot(qs, ds)),
        (Some(qs), Some(ds)) => Err(Error::Shape(format!(
            "summary dimensions differ: query {} vs document {}",
            qs.len(),
            ds.len()
        ))),
        _ => Err(Error::Precondition(
            "HardFull matching needs summary vectors on both query and document".into(),
        )),
    }
}

/// Scores one pair with the selected kernel.
pub fn score<Q, D>(q: &Q, d: &D, kind: MatchKind) -> Result<MatchTrace>
where
    Q: AsTokenMatrix + ?Sized,
    D: AsTokenMatrix + ?Sized,
{
    match kind {
        MatchKind::Soft => soft_match(q, d),
        MatchKind::HardToken | MatchKind::HardFull => hard_match(q, d, kind),
    }
}

/// Exhaustively scores every document and returns the best `k`
/// (descending score, ties by ascending doc id).
pub fn brute_force_rank(
    q: &TokenEmbeddings,
    docs: &[TokenEmbeddings],
    kind: MatchKind,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let mut scored = docs
        .iter()
        .map(|d| {
            Ok(ScoredDoc {
                doc_id: d.id,
                score: score(q, d, kind)?.total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(rank_order);
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::TokenId;
    use proptest::prelude::*;

    fn rec(id: u64, ids: &[u32], rows: &[&[f32]]) -> TokenEmbeddings {
        let dim = rows[0].len();
        TokenEmbeddings::new(
            id,
            ids.iter().map(|&t| TokenId(t)).collect(),
            rows.concat(),
            dim,
        )
        .unwrap()
    }

    #[test]
    fn soft_orthonormal_hits() {
        let q = rec(0, &[1, 2], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = rec(1, &[3, 4, 5], &[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        let t = soft_match(&q, &d).unwrap();
        assert_eq!(t.total, 2.0);
        assert_eq!(t.matches[0].doc_pos, Some(0));
        assert_eq!(t.matches[1].doc_pos, Some(1));
    }

    #[test]
    fn soft_direct_arithmetic() {
        let q = rec(0, &[1], &[&[1.0, 0.0]]);
        let d = rec(1, &[3, 4], &[&[0.3, 0.4], &[0.6, 0.0]]);
        let t = soft_match(&q, &d).unwrap();
        assert!((t.total - 0.6).abs() < 1e-7);
        assert_eq!(t.matches[0].doc_pos, Some(1));
    }

    #[test]
    fn soft_ties_take_first_position() {
        let q = rec(0, &[1], &[&[1.0, 0.0]]);
        let d = rec(1, &[3, 4, 5], &[&[0.0, 1.0], &[0.5, 0.0], &[0.5, 0.9]]);
        assert_eq!(soft_match(&q, &d).unwrap().matches[0].doc_pos, Some(1));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let q = rec(0, &[1], &[&[1.0, 0.0]]);
        let d = rec(1, &[1], &[&[1.0, 0.0, 0.0]]);
        assert!(matches!(soft_match(&q, &d), Err(Error::Shape(_))));
        assert!(matches!(
            hard_match(&q, &d, MatchKind::HardToken),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn hard_admissible_set() {
        let q = rec(0, &[7], &[&[1.0, 0.0]]);
        let d = rec(1, &[7, 9], &[&[0.2, 0.0], &[1.0, 0.0]]);
        let t = hard_match(&q, &d, MatchKind::HardToken).unwrap();
        assert!((t.total - 0.2).abs() < 1e-7);
        assert_eq!(t.matches[0].doc_pos, Some(0));
    }

    #[test]
    fn hard_no_overlap_is_zero() {
        let q = rec(0, &[1, 2], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = rec(1, &[3], &[&[1.0, 0.0]]);
        let t = hard_match(&q, &d, MatchKind::HardToken).unwrap();
        assert_eq!(t.total, 0.0);
        assert!(t
            .matches
            .iter()
            .all(|m| m.doc_pos.is_none() && m.score == 0.0));
    }

    #[test]
    fn hard_full_adds_summary() {
        let q = rec(0, &[7], &[&[1.0, 0.0]])
            .with_summary(vec![1.0, 0.0, 0.0])
            .unwrap();
        let d = rec(1, &[7, 9], &[&[0.2, 0.0], &[1.0, 0.0]])
            .with_summary(vec![1.0, 0.0, 0.0])
            .unwrap();
        let tok = hard_match(&q, &d, MatchKind::HardToken).unwrap();
        let full = hard_match(&q, &d, MatchKind::HardFull).unwrap();
        assert_eq!(full.summary, Some(1.0));
        assert_eq!(full.total, tok.total + 1.0);
    }

    #[test]
    fn hard_full_requires_summaries() {
        let q = rec(0, &[7], &[&[1.0, 0.0]]);
        let d = rec(1, &[7], &[&[1.0, 0.0]]);
        assert!(matches!(
            hard_match(&q, &d, MatchKind::HardFull),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn repeated_query_tokens_count_per_occurrence() {
        let q = rec(0, &[7, 7], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = rec(1, &[7, 7], &[&[0.5, 0.1], &[0.1, 0.8]]);
        let t = hard_match(&q, &d, MatchKind::HardToken).unwrap();
        assert_eq!(t.matches[0].doc_pos, Some(0));
        assert_eq!(t.matches[1].doc_pos, Some(1));
        assert!((t.total - 1.3).abs() < 1e-6);
    }

    #[test]
    fn brute_force_single_doc_and_dominance() {
        let q = rec(0, &[1, 2], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let a = rec(10, &[1, 2], &[&[0.5, 0.0], &[0.0, 0.5]]);
        let b = rec(11, &[1, 2], &[&[0.9, 0.0], &[0.0, 0.7]]);
        let one = brute_force_rank(&q, std::slice::from_ref(&a), MatchKind::Soft, 5).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].doc_id, 10);
        let r = brute_force_rank(&q, &[a, b], MatchKind::Soft, 5).unwrap();
        assert_eq!(r[0].doc_id, 11);
        assert!(brute_force_rank(&q, &[], MatchKind::Soft, 0).is_err());
    }

    #[test]
    fn pairwise_sum_matches_f64_sum() {
        let v: Vec<f32> = (0..1000).map(|i| ((i * 37) % 101) as f32 * 0.013).collect();
        let exact: f64 = v.iter().map(|&x| x as f64).sum();
        assert!((pairwise_sum(&v) as f64 - exact).abs() < 1e-3);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    fn arb_matrix(
        rows: std::ops::RangeInclusive<usize>,
        dim: usize,
    ) -> impl Strategy<Value = Vec<Vec<f32>>> {
        prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), rows)
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<Vec<f32>>)> {
        (1usize..=3).prop_flat_map(|h| (arb_matrix(1..=4, h), arb_matrix(1..=6, h)))
    }

    fn build(id: u64, rows: &[Vec<f32>], ids: impl Fn(usize) -> u32) -> TokenEmbeddings {
        let dim = rows[0].len();
        TokenEmbeddings::new(
            id,
            (0..rows.len()).map(|i| TokenId(ids(i))).collect(),
            rows.concat(),
            dim,
        )
        .unwrap()
    }

    proptest! {
        // literal double loop in f64 as the reference
        #[test]
        fn soft_equals_double_loop((qr, dr) in arb_pair()) {
            let q = build(0, &qr, |i| i as u32);
            let d = build(1, &dr, |j| j as u32);
            let t = soft_match(&q, &d).unwrap();
            let mut reference = 0.0f64;
            for qi in &qr {
                let mut best = f64::NEG_INFINITY;
                for dj in &dr {
                    let s: f64 = qi.iter().zip(dj).map(|(a, b)| *a as f64 * *b as f64).sum();
                    best = best.max(s);
                }
                reference += best;
            }
            prop_assert!((t.total as f64 - reference).abs() <= 1e-4 * reference.abs().max(1.0));
            let partials: Vec<f32> = t.matches.iter().map(|m| m.score).collect();
            prop_assert_eq!(t.total, pairwise_sum(&partials));
        }

        #[test]
        fn hard_bounded_by_soft_for_nonnegative(
            (qr, dr) in arb_pair(),
            qid in prop::collection::vec(0u32..3, 4),
            did in prop::collection::vec(0u32..3, 6),
        ) {
            let abs = |m: &[Vec<f32>]| m.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect::<Vec<Vec<f32>>>();
            let (qr, dr) = (abs(&qr), abs(&dr));
            let q = build(0, &qr, |i| qid[i]);
            let d = build(1, &dr, |j| did[j]);
            let hard = hard_match(&q, &d, MatchKind::HardToken).unwrap();
            let soft = soft_match(&q, &d).unwrap();
            prop_assert!(hard.total <= soft.total + 1e-6);
        }

        #[test]
        fn permuting_doc_rows_permutes_argmax((qr, dr) in arb_pair(), seed in any::<u64>()) {
            use rand::{SeedableRng, seq::SliceRandom};
            let q = build(0, &qr, |i| i as u32);
            let d = build(1, &dr, |j| (j % 2) as u32);
            let mut perm: Vec<usize> = (0..dr.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let dp = d.select(&perm).unwrap();
            for kind in [MatchKind::Soft, MatchKind::HardToken] {
                let a = score(&q, &d, kind).unwrap();
                let b = score(&q, &dp, kind).unwrap();
                prop_assert!((a.total - b.total).abs() <= 1e-5);
                for (ma, mb) in a.matches.iter().zip(&b.matches) {
                    prop_assert_eq!(ma.score, mb.score);
                    // argmaxes may differ only among exact ties
                    if let (Some(ja), Some(jb)) = (ma.doc_pos, mb.doc_pos) {
                        prop_assert_eq!(dot(q.row(ma.query_pos), d.row(ja)), dot(q.row(mb.query_pos), d.row(perm[jb])));
                    }
                }
            }
        }

        #[test]
        fn removing_query_token_drops_its_partial((qr, dr) in arb_pair(), drop in 0usize..4) {
            prop_assume!(qr.len() > 1);
            let drop = drop % qr.len();
            let q = build(0, &qr, |i| i as u32);
            let d = build(1, &dr, |j| j as u32);
            let full = soft_match(&q, &d).unwrap();
            let keep: Vec<usize> = (0..qr.len()).filter(|&i| i != drop).collect();
            let reduced = soft_match(&q.select(&keep).unwrap(), &d).unwrap();
            let expected = full.total - full.matches[drop].score;
            prop_assert!((reduced.total - expected).abs() <= 1e-5);
        }
    }
}
