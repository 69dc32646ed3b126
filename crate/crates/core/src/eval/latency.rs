use std::time::Instant;

use serde::Serialize;

use crate::engine::Retriever;
use crate::error::{Error, Result};
use crate::soft_index::ms;
use crate::store::TokenEmbeddings;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub queries: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Mean number of candidate documents scored per query.
    pub ard: f64,
    /// Mean wall time of each query over the measured repetitions.
    pub per_query_ms: Vec<f64>,
    pub candidates: Vec<usize>,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Runs one unmeasured warm-up pass, then `repetitions` serial passes over
/// `queries`, timing each query.
pub fn measure_latency(
    engine: &dyn Retriever,
    queries: &[TokenEmbeddings],
    repetitions: usize,
) -> Result<LatencyReport> {
    if repetitions == 0 {
        return Err(Error::Config(
            "need at least one measured repetition".into(),
        ));
    }
    for q in queries {
        engine.search(q)?;
    }
    let mut totals = vec![0.0f64; queries.len()];
    let mut candidates = vec![0usize; queries.len()];
    for _ in 0..repetitions {
        for (i, q) in queries.iter().enumerate() {
            let start = Instant::now();
            let r = engine.search(q)?;
            totals[i] += ms(start.elapsed());
            candidates[i] = r.stats.candidates;
        }
    }
    let per_query_ms: Vec<f64> = totals.iter().map(|t| t / repetitions as f64).collect();
    let mut sorted = per_query_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let n = queries.len().max(1) as f64;
    Ok(LatencyReport {
        queries: queries.len(),
        repetitions,
        mean_ms: per_query_ms.iter().sum::<f64>() / n,
        p50_ms: percentile(&sorted, 50.0),
        p95_ms: percentile(&sorted, 95.0),
        ard: candidates.iter().sum::<usize>() as f64 / n,
        per_query_ms,
        candidates,
    })
}
