//! A common search interface over the soft and hard indexes.

use serde::Serialize;

use crate::error::Result;
use crate::hard_index::HardIndex;
use crate::scoring::{MatchKind, ScoredDoc};
use crate::soft_index::{SearchParams, SoftIndex};
use crate::store::{IdfTable, TokenEmbeddings, Vocabulary};

/// Per-query accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RetrievalStats {
    /// Documents scored exactly (the A.R.D. contribution of this query).
    pub candidates: usize,
    pub query_tokens_used: usize,
    pub latency_ms: f64,
    pub candidate_ms: f64,
    pub rerank_ms: f64,
    pub empty_candidates: bool,
    pub qtp_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    /// Descending score, ties by ascending doc id.
    pub results: Vec<ScoredDoc>,
    pub stats: RetrievalStats,
}

pub trait Retriever: Sync {
    fn search(&self, q: &TokenEmbeddings) -> Result<Retrieval>;
}

/// Soft index plus the per-query parameters and QTP resources.
pub struct SoftEngine<'a> {
    pub index: &'a SoftIndex,
    pub params: SearchParams,
    pub idf: Option<&'a IdfTable>,
    pub vocab: Option<&'a Vocabulary>,
}

impl Retriever for SoftEngine<'_> {
    fn search(&self, q: &TokenEmbeddings) -> Result<Retrieval> {
        self.index.retrieve(q, &self.params, self.idf, self.vocab)
    }
}

pub struct HardEngine<'a> {
    pub index: &'a HardIndex,
    pub kind: MatchKind,
    pub k: usize,
}

impl Retriever for HardEngine<'_> {
    fn search(&self, q: &TokenEmbeddings) -> Result<Retrieval> {
        self.index.retrieve(q, self.kind, self.k)
    }
}
