//! Two-stage soft retrieval over an IVF-partitioned token arena.
//!
//! Every retained document-token embedding lives in one flat arena; slot `i`
//! of the arena maps back to `(doc_id, position)`. A coarse quantizer trained
//! on a seeded sample of the arena splits slots into clusters. At query time
//! each selected query token probes its `nprobe` nearest clusters and keeps the
//! `k_prime` best slots by inner product; the union of their documents is then
//! reranked with the exact soft sum-of-max against the full query.
//!
//! On disk the index is a directory:
//!
//! - `meta.json`: dimensions, counts and build parameters;
//! - `centroids.bin`: `c x h` little-endian `f32`;
//! - `arena.bin`: `T` `u32` token ids followed by `T x h` `f32`;
//! - `slots.bin`: `T` fixed-width records `u64 doc_id, u32 position`;
//! - `lists.bin`: per cluster `u32 len` then `len` `u32` slots.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Retrieval, RetrievalStats};
use crate::error::{Error, Result};
use crate::io_util::{self, ByteReader};
use crate::kmeans;
use crate::query_pruning::{select_query_tokens, QtpConfig};
use crate::scoring::{dot, soft_match, ScoredDoc};
use crate::store::{IdfTable, TokenEmbeddings, TokenId, TokenMatrix, Vocabulary};
use crate::topk::{Score, TopK};

/// Lloyd iterations used when training the coarse quantizer.
pub const KMEANS_ITERATIONS: usize = 20;
pub const DEFAULT_NPROBE: usize = 8;
pub const DEFAULT_K_PRIME: usize = 1024;
const META_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftIndexParams {
    /// Cluster count; `None` picks `max(1, floor(sqrt(tokens)))`.
    pub n_clusters: Option<usize>,
    /// Fraction of arena rows sampled to train the quantizer.
    pub train_fraction: f64,
    pub seed: u64,
    /// Default clusters probed per query token.
    pub nprobe: usize,
}

impl Default for SoftIndexParams {
    fn default() -> Self {
        Self {
            n_clusters: None,
            train_fraction: 0.05,
            seed: 0,
            nprobe: DEFAULT_NPROBE,
        }
    }
}

/// Per-query search knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub k: usize,
    /// Slots kept per query token during candidate generation.
    pub k_prime: usize,
    /// `None` uses the index default.
    pub nprobe: Option<usize>,
    pub qtp: QtpConfig,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            k: 1000,
            k_prime: DEFAULT_K_PRIME,
            nprobe: None,
            qtp: QtpConfig::none(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub doc_id: u64,
    pub position: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DocSpan {
    doc_id: u64,
    start: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SoftMeta {
    version: u32,
    dim: usize,
    n_clusters: usize,
    nprobe: usize,
    train_fraction: f64,
    seed: u64,
    num_docs: usize,
    num_tokens: usize,
}

/// Candidate documents produced by the first stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Ascending doc ids.
    pub doc_ids: Vec<u64>,
    /// Slots returned across all probed query tokens (with repeats).
    pub slot_hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftIndex {
    dim: usize,
    centroids: Vec<f32>,
    lists: Vec<Vec<u32>>,
    slots: Vec<Slot>,
    token_ids: Vec<TokenId>,
    arena: Vec<f32>,
    spans: Vec<DocSpan>,
    lookup: HashMap<u64, usize>,
    default_nprobe: usize,
    train_fraction: f64,
    seed: u64,
}

/// Trains the coarse quantizer on a seeded sample and assigns every token row.
pub fn build_soft_index(docs: &[TokenEmbeddings], params: &SoftIndexParams) -> Result<SoftIndex> {
    if !(params.train_fraction > 0.0 && params.train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1], got {}",
            params.train_fraction
        )));
    }
    if params.nprobe == 0 {
        return Err(Error::Config("nprobe must be at least 1".into()));
    }
    let dim = docs.first().map_or(0, TokenEmbeddings::dim);
    let total: usize = docs.iter().map(TokenEmbeddings::len).sum();
    let n_clusters = params
        .n_clusters
        .unwrap_or_else(|| ((total as f64).sqrt().floor() as usize).max(1));
    if n_clusters == 0 || total < n_clusters {
        return Err(Error::Build(format!(
            "{total} token rows cannot populate {n_clusters} clusters"
        )));
    }

    let mut slots = Vec::with_capacity(total);
    let mut token_ids = Vec::with_capacity(total);
    let mut arena = Vec::with_capacity(total * dim);
    let mut spans = Vec::with_capacity(docs.len());
    let mut lookup = HashMap::with_capacity(docs.len());
    for d in docs {
        if d.dim() != dim {
            return Err(Error::Shape(format!(
                "document {} has dimension {}, expected {dim}",
                d.id,
                d.dim()
            )));
        }
        if lookup.insert(d.id, spans.len()).is_some() {
            return Err(Error::Build(format!("duplicate document id {}", d.id)));
        }
        spans.push(DocSpan {
            doc_id: d.id,
            start: slots.len(),
            len: d.len(),
        });
        for (p, &t) in d.token_ids().iter().enumerate() {
            slots.push(Slot {
                doc_id: d.id,
                position: p as u32,
            });
            token_ids.push(t);
        }
        arena.extend_from_slice(d.data());
    }
    if total > u32::MAX as usize {
        return Err(Error::Build(format!(
            "{total} token rows exceed the u32 slot space"
        )));
    }

    let sample_size =
        ((total as f64 * params.train_fraction).ceil() as usize).clamp(n_clusters, total);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, sample_size).into_vec();
    picked.sort_unstable();
    let mut sample = Vec::with_capacity(sample_size * dim);
    for i in picked {
        sample.extend_from_slice(&arena[i * dim..(i + 1) * dim]);
    }
    let centroids = kmeans::train(&sample, dim, n_clusters, KMEANS_ITERATIONS, params.seed)?;

    let assignment: Vec<usize> = arena
        .par_chunks_exact(dim)
        .map(|row| kmeans::nearest(&centroids, dim, row))
        .collect();
    let mut lists = vec![Vec::new(); n_clusters];
    for (slot, c) in assignment.into_iter().enumerate() {
        lists[c].push(slot as u32);
    }

    Ok(SoftIndex {
        dim,
        centroids,
        lists,
        slots,
        token_ids,
        arena,
        spans,
        lookup,
        default_nprobe: params.nprobe,
        train_fraction: params.train_fraction,
        seed: params.seed,
    })
}

impl SoftIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_clusters(&self) -> usize {
        self.lists.len()
    }

    pub fn num_docs(&self) -> usize {
        self.spans.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.slots.len()
    }

    pub fn default_nprobe(&self) -> usize {
        self.default_nprobe
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Slot ids of one cluster, ascending.
    pub fn cluster(&self, c: usize) -> &[u32] {
        &self.lists[c]
    }

    pub fn slot(&self, slot: u32) -> Slot {
        self.slots[slot as usize]
    }

    pub fn slot_row(&self, slot: u32) -> &[f32] {
        let s = slot as usize;
        &self.arena[s * self.dim..(s + 1) * self.dim]
    }

    /// Cluster of every slot, in slot order.
    pub fn assignments(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.slots.len()];
        for (c, list) in self.lists.iter().enumerate() {
            for &s in list {
                out[s as usize] = c;
            }
        }
        out
    }

    /// Doc ids in insertion order.
    pub fn doc_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.spans.iter().map(|s| s.doc_id)
    }

    /// Borrowed view of an indexed document.
    pub fn doc(&self, doc_id: u64) -> Option<TokenMatrix<'_>> {
        self.lookup
            .get(&doc_id)
            .map(|&i| self.span_view(&self.spans[i]))
    }

    fn span_view(&self, span: &DocSpan) -> TokenMatrix<'_> {
        TokenMatrix {
            token_ids: &self.token_ids[span.start..span.start + span.len],
            data: &self.arena[span.start * self.dim..(span.start + span.len) * self.dim],
            dim: self.dim,
            summary: None,
        }
    }

    /// Clusters to scan for `row`: the `nprobe` closest centroids.
    fn probe_order(&self, row: &[f32], nprobe: usize) -> Vec<usize> {
        let mut dists: Vec<(f32, usize)> = self
            .centroids
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, centroid)| (kmeans::squared_l2(row, centroid), c))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dists
            .into_iter()
            .take(nprobe.max(1))
            .map(|(_, c)| c)
            .collect()
    }

    /// Best `k_prime` slots for one query row within its `nprobe` nearest
    /// clusters, by descending inner product then ascending slot.
    pub fn probe(&self, row: &[f32], k_prime: usize, nprobe: usize) -> Vec<(u32, f32)> {
        let mut top = TopK::new(k_prime);
        for c in self.probe_order(row, nprobe) {
            for &slot in &self.lists[c] {
                top.push((Score(dot(row, self.slot_row(slot))), Reverse(slot)));
            }
        }
        top.into_sorted_vec()
            .into_iter()
            .map(|(Score(s), Reverse(slot))| (slot, s))
            .collect()
    }

    /// Union of the documents owning the best slots of each selected query token.
    pub fn candidate_generation(
        &self,
        q: &TokenEmbeddings,
        positions: &[usize],
        k_prime: usize,
        nprobe: usize,
    ) -> Result<CandidateSet> {
        if k_prime == 0 {
            return Err(Error::Precondition("k_prime must be at least 1".into()));
        }
        if q.dim() != self.dim {
            return Err(Error::Shape(format!(
                "query dimension {} differs from index dimension {}",
                q.dim(),
                self.dim
            )));
        }
        let mut docs = BTreeSet::new();
        let mut slot_hits = 0;
        for &p in positions {
            if p >= q.len() {
                return Err(Error::Shape(format!("query position {p} out of range")));
            }
            let hits = self.probe(q.row(p), k_prime, nprobe);
            slot_hits += hits.len();
            docs.extend(
                hits.into_iter()
                    .map(|(slot, _)| self.slots[slot as usize].doc_id),
            );
        }
        Ok(CandidateSet {
            doc_ids: docs.into_iter().collect(),
            slot_hits,
        })
    }

    /// Candidate generation with the QTP-selected tokens, then exact soft
    /// rerank of every candidate with the full query.
    pub fn retrieve(
        &self,
        q: &TokenEmbeddings,
        params: &SearchParams,
        idf: Option<&IdfTable>,
        vocab: Option<&Vocabulary>,
    ) -> Result<Retrieval> {
        if params.k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        let start = Instant::now();
        let nprobe = params.nprobe.unwrap_or(self.default_nprobe);
        let selection = select_query_tokens(q, &params.qtp, idf, vocab)?;
        let candidates =
            self.candidate_generation(q, &selection.positions, params.k_prime, nprobe)?;
        let generated = Instant::now();

        let mut top = TopK::new(params.k);
        for &doc_id in &candidates.doc_ids {
            let view = self.doc(doc_id).expect("candidate comes from the index");
            let total = soft_match(q, &view)?.total;
            top.push((Score(total), Reverse(doc_id)));
        }
        let results: Vec<ScoredDoc> = top
            .into_sorted_vec()
            .into_iter()
            .map(|(Score(score), Reverse(doc_id))| ScoredDoc { doc_id, score })
            .collect();
        let done = Instant::now();

        if candidates.doc_ids.is_empty() {
            log::warn!("query {}: empty candidate set", q.id);
        }
        Ok(Retrieval {
            results,
            stats: RetrievalStats {
                candidates: candidates.doc_ids.len(),
                query_tokens_used: selection.positions.len(),
                latency_ms: ms(done - start),
                candidate_ms: ms(generated - start),
                rerank_ms: ms(done - generated),
                empty_candidates: candidates.doc_ids.is_empty(),
                qtp_fallback: selection.fell_back,
            },
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = SoftMeta {
            version: META_VERSION,
            dim: self.dim,
            n_clusters: self.lists.len(),
            nprobe: self.default_nprobe,
            train_fraction: self.train_fraction,
            seed: self.seed,
            num_docs: self.spans.len(),
            num_tokens: self.slots.len(),
        };
        io_util::write_file(
            &dir.join("meta.json"),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;

        let mut buf = Vec::new();
        io_util::put_f32s(&mut buf, &self.centroids);
        io_util::write_file(&dir.join("centroids.bin"), &buf)?;

        buf.clear();
        for t in &self.token_ids {
            io_util::put_u32(&mut buf, t.0);
        }
        io_util::put_f32s(&mut buf, &self.arena);
        io_util::write_file(&dir.join("arena.bin"), &buf)?;

        buf.clear();
        for s in &self.slots {
            io_util::put_u64(&mut buf, s.doc_id);
            io_util::put_u32(&mut buf, s.position);
        }
        io_util::write_file(&dir.join("slots.bin"), &buf)?;

        buf.clear();
        for list in &self.lists {
            io_util::put_u32(&mut buf, list.len() as u32);
            for &s in list {
                io_util::put_u32(&mut buf, s);
            }
        }
        io_util::write_file(&dir.join("lists.bin"), &buf)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: SoftMeta =
            serde_json::from_str(&io_util::read_to_string(&dir.join("meta.json"))?)?;
        if meta.version != META_VERSION {
            return Err(Error::Format(format!(
                "unsupported soft index version {}",
                meta.version
            )));
        }
        let (dim, c, t) = (meta.dim, meta.n_clusters, meta.num_tokens);

        let bytes = io_util::read_file(&dir.join("centroids.bin"))?;
        let mut rd = ByteReader::new(&bytes);
        let centroids = rd.f32_vec(c * dim, "centroids")?;
        expect_end(&rd, "centroids.bin")?;

        let bytes = io_util::read_file(&dir.join("arena.bin"))?;
        let mut rd = ByteReader::new(&bytes);
        let token_ids = rd
            .u32_vec(t, "token ids")?
            .into_iter()
            .map(TokenId)
            .collect();
        let arena = rd.f32_vec(t * dim, "arena rows")?;
        expect_end(&rd, "arena.bin")?;

        let bytes = io_util::read_file(&dir.join("slots.bin"))?;
        let mut rd = ByteReader::new(&bytes);
        let mut slots = Vec::with_capacity(t);
        for _ in 0..t {
            slots.push(Slot {
                doc_id: rd.u64("slot doc id")?,
                position: rd.u32("slot position")?,
            });
        }
        expect_end(&rd, "slots.bin")?;

        let bytes = io_util::read_file(&dir.join("lists.bin"))?;
        let mut rd = ByteReader::new(&bytes);
        let mut lists = Vec::with_capacity(c);
        let mut seen = vec![false; t];
        for _ in 0..c {
            let len = rd.u32("list length")? as usize;
            let list = rd.u32_vec(len, "list slots")?;
            for &s in &list {
                match seen.get_mut(s as usize) {
                    Some(flag) if !*flag => *flag = true,
                    _ => {
                        return Err(Error::Corrupt {
                            offset: rd.offset(),
                            message: format!("slot {s} missing from arena or listed twice"),
                        })
                    }
                }
            }
            lists.push(list);
        }
        expect_end(&rd, "lists.bin")?;
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("some arena slots are in no cluster".into()));
        }

        let mut spans: Vec<DocSpan> = Vec::new();
        let mut lookup = HashMap::new();
        for (i, s) in slots.iter().enumerate() {
            match spans.last_mut() {
                Some(span) if span.doc_id == s.doc_id => {
                    if s.position as usize != span.len {
                        return Err(Error::Format(format!(
                            "slot {i}: doc {} position {} out of sequence",
                            s.doc_id, s.position
                        )));
                    }
                    span.len += 1;
                }
                _ => {
                    if s.position != 0 || lookup.insert(s.doc_id, spans.len()).is_some() {
                        return Err(Error::Format(format!(
                            "slot {i}: doc {} is not stored contiguously",
                            s.doc_id
                        )));
                    }
                    spans.push(DocSpan {
                        doc_id: s.doc_id,
                        start: i,
                        len: 1,
                    });
                }
            }
        }
        if spans.len() != meta.num_docs {
            return Err(Error::Format(format!(
                "meta declares {} documents, slots hold {}",
                meta.num_docs,
                spans.len()
            )));
        }
        Ok(Self {
            dim,
            centroids,
            lists,
            slots,
            token_ids,
            arena,
            spans,
            lookup,
            default_nprobe: meta.nprobe,
            train_fraction: meta.train_fraction,
            seed: meta.seed,
        })
    }
}

fn expect_end(rd: &ByteReader<'_>, file: &str) -> Result<()> {
    if rd.is_empty() {
        Ok(())
    } else {
        Err(Error::Corrupt {
            offset: rd.offset(),
            message: format!("trailing bytes in {file}"),
        })
    }
}

pub(crate) fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}
