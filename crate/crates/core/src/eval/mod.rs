//! Ranking metrics, run/qrels files, equivalence testing and latency accounting.

mod latency;
mod metrics;
mod tost;
mod trec;

use rayon::prelude::*;

use crate::engine::{Retrieval, Retriever};
use crate::error::Result;
use crate::store::TokenEmbeddings;

pub use latency::{measure_latency, LatencyReport};
pub use metrics::{mrr_at_k, ndcg_at_k, recall_at_k, MetricResult};
pub use tost::{tost_paired, TostResult, DEFAULT_ALPHA, DEFAULT_DELTA};
pub use trec::{Qrels, Run};

/// Runs every query through `engine` in parallel; results keep query order.
pub fn run_queries(engine: &dyn Retriever, queries: &[TokenEmbeddings]) -> Result<Vec<Retrieval>> {
    queries.par_iter().map(|q| engine.search(q)).collect()
}
