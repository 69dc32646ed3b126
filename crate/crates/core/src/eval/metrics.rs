use std::collections::BTreeMap;

use serde::Serialize;

use super::trec::{Qrels, Run};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub mean: f64,
    pub per_query: BTreeMap<u64, f64>,
    /// Run queries left out: missing from the qrels, or undefined for this metric.
    pub skipped: usize,
}

fn evaluate(
    run: &Run,
    qrels: &Qrels,
    k: usize,
    name: &str,
    per_query: impl Fn(&[u64], &BTreeMap<u64, u32>) -> Option<f64>,
) -> Result<MetricResult> {
    if k == 0 {
        return Err(Error::Config(format!("{name} cutoff must be at least 1")));
    }
    let mut values = BTreeMap::new();
    let mut skipped = 0;
    for qid in run.queries() {
        let Some(judged) = qrels.judged(qid) else {
            skipped += 1;
            continue;
        };
        let top: Vec<u64> = run
            .ranking(qid)
            .unwrap_or_default()
            .iter()
            .take(k)
            .map(|d| d.doc_id)
            .collect();
        match per_query(&top, judged) {
            Some(v) => {
                values.insert(qid, v);
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{name}: skipped {skipped} run queries");
    }
    let mean = if values.is_empty() {
        0.0
    } else {
        values.values().sum::<f64>() / values.len() as f64
    };
    Ok(MetricResult {
        mean,
        per_query: values,
        skipped,
    })
}

fn grade(judged: &BTreeMap<u64, u32>, doc: u64) -> u32 {
    judged.get(&doc).copied().unwrap_or(0)
}

/// Reciprocal rank of the first document with grade >= 1 in the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    evaluate(run, qrels, k, "MRR", |top, judged| {
        Some(
            top.iter()
                .position(|d| grade(judged, *d) >= 1)
                .map_or(0.0, |r| 1.0 / (r + 1) as f64),
        )
    })
}

/// Fraction of relevant documents found in the top `k`; queries without
/// relevant documents are skipped.
pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    evaluate(run, qrels, k, "Recall", |top, judged| {
        let relevant = judged.values().filter(|g| **g >= 1).count();
        if relevant == 0 {
            return None;
        }
        let found = top.iter().filter(|d| grade(judged, **d) >= 1).count();
        Some(found as f64 / relevant as f64)
    })
}

/// NDCG with gain `2^grade - 1` and `log2(rank + 1)` discount; queries with
/// zero ideal DCG are skipped.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
    let discount = |r: usize| (r as f64 + 2.0).log2();
    evaluate(run, qrels, k, "NDCG", |top, judged| {
        let mut ideal: Vec<u32> = judged.values().copied().filter(|g| *g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(r, g)| gain(*g) / discount(r))
            .sum();
        if idcg <= 0.0 {
            return None;
        }
        let dcg: f64 = top
            .iter()
            .enumerate()
            .map(|(r, d)| gain(grade(judged, *d)) / discount(r))
            .sum();
        Some(dcg / idcg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoredDoc;

    fn run_of(lists: &[(u64, &[u64])]) -> Run {
        let mut run = Run::new("t");
        for (q, docs) in lists {
            let n = docs.len() as f32;
            let ranking = docs
                .iter()
                .enumerate()
                .map(|(r, d)| ScoredDoc {
                    doc_id: *d,
                    score: n - r as f32,
                })
                .collect();
            run.insert(*q, ranking).unwrap();
        }
        run
    }

    fn ranked_with_relevant_at(rank: usize, len: usize) -> Vec<u64> {
        (1..=len as u64)
            .map(|i| if i as usize == rank { 0 } else { 1000 + i })
            .collect()
    }

    #[test]
    fn mrr_examples() {
        let mut qrels = Qrels::new();
        qrels.insert(1, 0, 1);
        for (rank, expect) in [(1, 1.0), (3, 1.0 / 3.0), (11, 0.0)] {
            let docs = ranked_with_relevant_at(rank, 20);
            let r = mrr_at_k(&run_of(&[(1, &docs)]), &qrels, 10).unwrap();
            assert_eq!(r.mean, expect, "rank {rank}");
        }
    }

    #[test]
    fn mrr_skips_unjudged_queries() {
        let mut qrels = Qrels::new();
        qrels.insert(1, 5, 1);
        let r = mrr_at_k(&run_of(&[(1, &[5]), (2, &[5])]), &qrels, 10).unwrap();
        assert_eq!((r.mean, r.skipped), (1.0, 1));
    }

    #[test]
    fn recall_examples() {
        let mut one = Qrels::new();
        one.insert(1, 0, 1);
        let docs = ranked_with_relevant_at(50, 120);
        assert_eq!(
            recall_at_k(&run_of(&[(1, &docs)]), &one, 100).unwrap().mean,
            1.0
        );

        let mut two = Qrels::new();
        two.insert(1, 0, 1);
        two.insert(1, 999_999, 1);
        assert_eq!(
            recall_at_k(&run_of(&[(1, &docs)]), &two, 100).unwrap().mean,
            0.5
        );
        assert_eq!(
            recall_at_k(&run_of(&[(1, &[7, 8])]), &two, 100)
                .unwrap()
                .mean,
            0.0
        );

        let mut none = Qrels::new();
        none.insert(1, 7, 0);
        let r = recall_at_k(&run_of(&[(1, &[7])]), &none, 100).unwrap();
        assert_eq!((r.per_query.len(), r.skipped), (0, 1));
    }

    #[test]
    fn ndcg_examples() {
        let mut qrels = Qrels::new();
        qrels.insert(1, 0, 1);
        let first = ndcg_at_k(&run_of(&[(1, &[0, 5, 6])]), &qrels, 10).unwrap();
        assert_eq!(first.mean, 1.0);
        let second = ndcg_at_k(&run_of(&[(1, &[5, 0, 6])]), &qrels, 10).unwrap();
        assert_eq!(second.mean, 1.0 / 3f64.log2());

        let mut graded = Qrels::new();
        for (d, g) in [(1, 3), (2, 2), (3, 2), (4, 1), (5, 0)] {
            graded.insert(9, d, g);
        }
        let perfect = ndcg_at_k(&run_of(&[(9, &[1, 2, 3, 4, 5])]), &graded, 10).unwrap();
        assert_eq!(perfect.mean, 1.0);
        let swapped = ndcg_at_k(&run_of(&[(9, &[4, 2, 3, 1, 5])]), &graded, 10).unwrap();
        assert!(swapped.mean < 1.0 && swapped.mean > 0.0);
    }

    #[test]
    fn zero_cutoff_is_rejected() {
        assert!(mrr_at_k(&Run::new("t"), &Qrels::new(), 0).is_err());
    }
}
