//! Hard-matching retrieval over an embedding inverted index.
//!
//! Each token id owns a posting list holding one entry per document
//! occurrence: the document id and the occurrence's embedding, stored
//! contiguously and grouped by document. A query token scans only its own
//! list, taking the per-document maximum inner product; per-token maxima are
//! summed (plus the summary-vector term for `HardFull`) and the best `k`
//! documents are kept in a heap.
//!
//! Partials are accumulated into one slot per query position and summed with
//! the same pairwise routine as [`crate::scoring::hard_match`], so index scores
//! are bit-identical to the kernel.
//!
//! Only documents sharing at least one token id with the query are scored;
//! under `HardFull` the summary term is added to those documents but does not
//! by itself bring a document into the candidate set.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{Retrieval, RetrievalStats};
use crate::error::{Error, Result};
use crate::io_util::{self, ByteReader};
use crate::scoring::{dot, pairwise_sum, MatchKind, ScoredDoc};
use crate::soft_index::ms;
use crate::store::{TokenEmbeddings, TokenId};
use crate::topk::{Score, TopK};

const META_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub doc_id: u64,
    /// Entry range `[start, end)` within the posting list.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PostingList {
    doc_ids: Vec<u64>,
    data: Vec<f32>,
    segments: Vec<Segment>,
}

impl PostingList {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    pub fn entry(&self, i: usize, dim: usize) -> &[f32] {
        &self.data[i * dim..(i + 1) * dim]
    }

    fn push(&mut self, doc_id: u64, row: &[f32]) {
        let i = self.doc_ids.len();
        self.doc_ids.push(doc_id);
        self.data.extend_from_slice(row);
        match self.segments.last_mut() {
            Some(seg) if seg.doc_id == doc_id => seg.end = i + 1,
            _ => self.segments.push(Segment {
                doc_id,
                start: i,
                end: i + 1,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HardMeta {
    version: u32,
    dim: usize,
    summary_dim: usize,
    num_docs: usize,
    num_tokens: usize,
    num_entries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardIndex {
    dim: usize,
    summary_dim: usize,
    postings: BTreeMap<TokenId, PostingList>,
    summaries: BTreeMap<u64, Vec<f32>>,
    doc_ids: BTreeSet<u64>,
}

/// Groups every (document, position) into its token's posting list.
pub fn build_hard_index(docs: &[TokenEmbeddings]) -> Result<HardIndex> {
    let first = docs
        .first()
        .ok_or_else(|| Error::Precondition("hard index needs a non-empty corpus".into()))?;
    let dim = first.dim();
    let summary_dim = first.summary().map_or(0, <[f32]>::len);
    let mut postings: BTreeMap<TokenId, PostingList> = BTreeMap::new();
    let mut summaries = BTreeMap::new();
    let mut doc_ids = BTreeSet::new();
    for d in docs {
        if d.dim() != dim {
            return Err(Error::Shape(format!(
                "document {} has dimension {}, expected {dim}",
                d.id,
                d.dim()
            )));
        }
        if !doc_ids.insert(d.id) {
            return Err(Error::Build(format!("duplicate document id {}", d.id)));
        }
        for (j, &t) in d.token_ids().iter().enumerate() {
            postings.entry(t).or_default().push(d.id, d.row(j));
        }
        if let Some(s) = d.summary() {
            if s.len() != summary_dim {
                return Err(Error::Shape(format!(
                    "document {} summary dimension {} differs from {summary_dim}",
                    d.id,
                    s.len()
                )));
            }
            summaries.insert(d.id, s.to_vec());
        }
    }
    Ok(HardIndex {
        dim,
        summary_dim,
        postings,
        summaries,
        doc_ids,
    })
}

impl HardIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn summary_dim(&self) -> usize {
        self.summary_dim
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_entries(&self) -> usize {
        self.postings.values().map(PostingList::len).sum()
    }

    pub fn postings(&self, t: TokenId) -> Option<&PostingList> {
        self.postings.get(&t)
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.postings.keys().copied()
    }

    pub fn summary(&self, doc_id: u64) -> Option<&[f32]> {
        self.summaries.get(&doc_id).map(Vec::as_slice)
    }

    /// Scores every document sharing a token id with the query and keeps the best `k`.
    pub fn retrieve(&self, q: &TokenEmbeddings, kind: MatchKind, k: usize) -> Result<Retrieval> {
        let start = Instant::now();
        if k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        if q.dim() != self.dim {
            return Err(Error::Shape(format!(
                "query dimension {} differs from index dimension {}",
                q.dim(),
                self.dim
            )));
        }
        let q_summary = match kind {
            MatchKind::Soft => {
                return Err(Error::Config(
                    "the hard index only serves hard matching".into(),
                ))
            }
            MatchKind::HardToken => None,
            MatchKind::HardFull => Some(q.summary().ok_or_else(|| {
                Error::Precondition("HardFull retrieval needs a query summary vector".into())
            })?),
        };

        let m = q.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&i| (q.token_ids()[i], i));
        let mut acc: HashMap<u64, Vec<f32>> = HashMap::new();
        for i in order {
            let Some(list) = self.postings.get(&q.token_ids()[i]) else {
                continue;
            };
            let row = q.row(i);
            for seg in &list.segments {
                let mut best = dot(row, list.entry(seg.start, self.dim));
                for e in seg.start + 1..seg.end {
                    let s = dot(row, list.entry(e, self.dim));
                    if s > best {
                        best = s;
                    }
                }
                acc.entry(seg.doc_id).or_insert_with(|| vec![0.0; m])[i] = best;
            }
        }
        let generated = Instant::now();

        let mut top = TopK::new(k);
        for (&doc_id, partials) in &acc {
            let mut total = pairwise_sum(partials);
            if let Some(qs) = q_summary {
                let ds = self.summary(doc_id).ok_or_else(|| {
                    Error::Precondition(format!(
                        "HardFull retrieval: document {doc_id} has no summary vector"
                    ))
                })?;
                if ds.len() != qs.len() {
                    return Err(Error::Shape(format!(
                        "summary dimensions differ: query {} vs index {}",
                        qs.len(),
                        ds.len()
                    )));
                }
                total += dot(qs, ds);
            }
            top.push((Score(total), Reverse(doc_id)));
        }
        let results: Vec<ScoredDoc> = top
            .into_sorted_vec()
            .into_iter()
            .map(|(Score(score), Reverse(doc_id))| ScoredDoc { doc_id, score })
            .collect();
        let done = Instant::now();
        Ok(Retrieval {
            results,
            stats: RetrievalStats {
                candidates: acc.len(),
                query_tokens_used: m,
                latency_ms: ms(done - start),
                candidate_ms: ms(generated - start),
                rerank_ms: ms(done - generated),
                empty_candidates: acc.is_empty(),
                qtp_fallback: false,
            },
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = HardMeta {
            version: META_VERSION,
            dim: self.dim,
            summary_dim: self.summary_dim,
            num_docs: self.doc_ids.len(),
            num_tokens: self.postings.len(),
            num_entries: self.num_entries(),
        };
        io_util::write_file(
            &dir.join("meta.json"),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;

        let mut buf = Vec::new();
        for (t, list) in &self.postings {
            io_util::put_u32(&mut buf, t.0);
            io_util::put_u32(&mut buf, list.len() as u32);
            for i in 0..list.len() {
                io_util::put_u64(&mut buf, list.doc_ids[i]);
                io_util::put_f32s(&mut buf, list.entry(i, self.dim));
            }
        }
        io_util::write_file(&dir.join("postings.bin"), &buf)?;

        buf.clear();
        io_util::put_u32(&mut buf, self.summary_dim as u32);
        io_util::put_u64(&mut buf, self.summaries.len() as u64);
        for (id, s) in &self.summaries {
            io_util::put_u64(&mut buf, *id);
            io_util::put_f32s(&mut buf, s);
        }
        io_util::write_file(&dir.join("summary.bin"), &buf)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: HardMeta =
            serde_json::from_str(&io_util::read_to_string(&dir.join("meta.json"))?)?;
        if meta.version != META_VERSION {
            return Err(Error::Format(format!(
                "unsupported hard index version {}",
                meta.version
            )));
        }
        let dim = meta.dim;

        let bytes = io_util::read_file(&dir.join("postings.bin"))?;
        let mut rd = ByteReader::new(&bytes);
        let mut postings = BTreeMap::new();
        let mut doc_ids = BTreeSet::new();
        while !rd.is_empty() {
            let at = rd.offset();
            let t = TokenId(rd.u32("token id")?);
            let count = rd.u32("entry count")? as usize;
            let mut list = PostingList::default();
            for _ in 0..count {
                let doc = rd.u64("posting doc id")?;
                let row = rd.f32_vec(dim, "posting embedding")?;
                if list.doc_ids.last().is_some_and(|&prev| prev != doc)
                    && list.segments.iter().any(|s| s.doc_id == doc)
                {
                    return Err(Error::Corrupt {
                        offset: rd.offset(),
                        message: format!("token {t}: entries of doc {doc} are not grouped"),
                    });
                }
                list.push(doc, &row);
                doc_ids.insert(doc);
            }
            if postings.insert(t, list).is_some() {
                return Err(Error::Corrupt {
                    offset: at,
                    message: format!("token {t} has two posting lists"),
                });
            }
        }

        let bytes = io_util::read_file(&dir.join("summary.bin"))?;
        let mut rd = ByteReader::new(&bytes);
        let summary_dim = rd.u32("summary dimension")? as usize;
        let count = rd.u64("summary count")?;
        let mut summaries = BTreeMap::new();
        for _ in 0..count {
            let id = rd.u64("summary doc id")?;
            summaries.insert(id, rd.f32_vec(summary_dim, "summary vector")?);
        }
        if !rd.is_empty() {
            return Err(Error::Corrupt {
                offset: rd.offset(),
                message: "trailing bytes in summary.bin".into(),
            });
        }

        let index = Self {
            dim,
            summary_dim,
            postings,
            summaries,
            doc_ids,
        };
        if index.num_docs() != meta.num_docs
            || index.num_entries() != meta.num_entries
            || summary_dim != meta.summary_dim
        {
            return Err(Error::Format(
                "hard index files disagree with meta.json".into(),
            ));
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{brute_force_rank, hard_match};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: u64, ids: &[u32], dim: usize, rng: &mut ChaCha8Rng) -> TokenEmbeddings {
        let data = (0..ids.len() * dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        TokenEmbeddings::new(id, ids.iter().map(|&t| TokenId(t)).collect(), data, dim).unwrap()
    }

    fn random_docs(n: usize, dim: usize, summary: usize, seed: u64) -> Vec<TokenEmbeddings> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.random_range(1..10);
                let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..25)).collect();
                let d = rec(i as u64, &ids, dim, &mut rng);
                if summary > 0 {
                    let s = (0..summary).map(|_| rng.random_range(-1.0..1.0)).collect();
                    d.with_summary(s).unwrap()
                } else {
                    d
                }
            })
            .collect()
    }

    #[test]
    fn postings_count_occurrences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = rec(5, &[1, 2, 1], 3, &mut rng);
        let idx = build_hard_index(&[d]).unwrap();
        assert_eq!(idx.postings(TokenId(1)).unwrap().len(), 2);
        assert_eq!(idx.postings(TokenId(2)).unwrap().len(), 1);
        assert_eq!(idx.postings(TokenId(1)).unwrap().segments().len(), 1);
    }

    #[test]
    fn entries_equal_token_total() {
        let docs = random_docs(100, 4, 0, 2);
        let idx = build_hard_index(&docs).unwrap();
        let want: usize = docs.iter().map(TokenEmbeddings::len).sum();
        assert_eq!(idx.num_entries(), want);
        assert!(build_hard_index(&[]).is_err());
    }

    #[test]
    fn no_overlap_returns_nothing() {
        let docs = random_docs(20, 4, 0, 3);
        let idx = build_hard_index(&docs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = rec(0, &[100, 101], 4, &mut rng);
        let r = idx.retrieve(&q, MatchKind::HardToken, 10).unwrap();
        assert!(r.results.is_empty());
        assert!(r.stats.empty_candidates);
    }

    #[test]
    fn matches_brute_force_and_kernel_bitwise() {
        let docs = random_docs(150, 5, 3, 5);
        let idx = build_hard_index(&docs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for qi in 0..20 {
            let ids: Vec<u32> = (0..6).map(|_| rng.random_range(0..25)).collect();
            let q = rec(qi, &ids, 5, &mut rng)
                .with_summary((0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap();
            let overlap: Vec<TokenEmbeddings> = docs
                .iter()
                .filter(|d| d.token_ids().iter().any(|t| ids.contains(&t.0)))
                .cloned()
                .collect();
            for kind in [MatchKind::HardToken, MatchKind::HardFull] {
                let got = idx.retrieve(&q, kind, 500).unwrap();
                let want = brute_force_rank(&q, &overlap, kind, 500).unwrap();
                assert_eq!(got.results, want);
                assert_eq!(got.stats.candidates, overlap.len());
                for r in &got.results {
                    let d = docs.iter().find(|d| d.id == r.doc_id).unwrap();
                    assert_eq!(
                        r.score.to_bits(),
                        hard_match(&q, d, kind).unwrap().total.to_bits()
                    );
                }
            }
            let tok = idx.retrieve(&q, MatchKind::HardToken, 500).unwrap().results;
            let full = idx.retrieve(&q, MatchKind::HardFull, 500).unwrap().results;
            for f in &full {
                let t = tok.iter().find(|t| t.doc_id == f.doc_id).unwrap();
                let s = dot(q.summary().unwrap(), idx.summary(f.doc_id).unwrap());
                assert_eq!(f.score, t.score + s);
            }
        }
    }

    #[test]
    fn hard_full_needs_summaries() {
        let docs = random_docs(10, 4, 0, 7);
        let idx = build_hard_index(&docs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = rec(0, &[1, 2, 3], 4, &mut rng);
        assert!(idx.retrieve(&q, MatchKind::HardFull, 5).is_err());
        let q = q.with_summary(vec![1.0]).unwrap();
        let any_overlap = docs
            .iter()
            .any(|d| d.token_ids().iter().any(|t| t.0 <= 3 && t.0 >= 1));
        assert_eq!(
            idx.retrieve(&q, MatchKind::HardFull, 5).is_err(),
            any_overlap
        );
        assert!(idx.retrieve(&q, MatchKind::Soft, 5).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let docs = random_docs(40, 3, 2, 9);
        let idx = build_hard_index(&docs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let back = HardIndex::load(dir.path()).unwrap();
        assert_eq!(back, idx);
    }
}
