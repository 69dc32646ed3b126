//! Index-time document-token pruning.
//!
//! A document of `n` tokens keeps `max(1, floor(n * alpha))` of them. Three
//! selection rules are supported:
//!
//! - **First**: the leading tokens;
//! - **IdfTop**: the highest-IDF tokens;
//! - **AttentionTop**: the tokens with the largest column sums of the
//!   row-softmaxed self-similarity matrix `softmax(D D^T)`.
//!
//! Leading special tokens (e.g. `[CLS]`, `[D]`) are always kept and count
//! toward the budget. Ties are broken by earlier position, and kept positions
//! are reported in original document order, so a smaller `alpha` always yields
//! a subset of the tokens kept at a larger one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::dot;
use crate::store::{IdfTable, TokenEmbeddings, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMethod {
    First,
    IdfTop,
    AttentionTop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub method: PruneMethod,
    /// Remaining ratio in `(0, 1]`.
    pub alpha: f64,
    pub retain_special: bool,
    /// How many leading special tokens are protected: 2 for `[CLS] [D]`
    /// style encoders, 1 for `[CLS]` only.
    pub special_prefix: usize,
}

impl PruneConfig {
    pub fn new(method: PruneMethod, alpha: f64) -> Result<Self> {
        let cfg = Self {
            method,
            alpha,
            retain_special: true,
            special_prefix: 2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_special_prefix(mut self, n: usize) -> Self {
        self.special_prefix = n;
        self
    }

    pub fn with_retain_special(mut self, retain: bool) -> Self {
        self.retain_special = retain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "remaining ratio must lie in (0, 1], got {alpha}"
        )))
    }
}

/// `max(1, floor(len * alpha))`.
pub fn remaining_count(len: usize, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    if len == 0 {
        return Err(Error::Precondition(
            "document length must be at least 1".into(),
        ));
    }
    Ok(((len as f64 * alpha).floor() as usize).clamp(1, len))
}

/// A pruned document and the original positions it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedDoc {
    pub doc_id: u64,
    /// Ascending original positions.
    pub kept_positions: Vec<usize>,
    pub doc: TokenEmbeddings,
}

fn finish(doc: &TokenEmbeddings, mut kept: Vec<usize>) -> Result<PrunedDoc> {
    kept.sort_unstable();
    Ok(PrunedDoc {
        doc_id: doc.id,
        doc: doc.select(&kept)?,
        kept_positions: kept,
    })
}

fn expect_method(cfg: &PruneConfig, method: PruneMethod) -> Result<()> {
    cfg.validate()?;
    if cfg.method != method {
        return Err(Error::Config(format!(
            "configured method {:?} does not match {method:?}",
            cfg.method
        )));
    }
    Ok(())
}

/// Number of protected leading special tokens.
fn protected_prefix(doc: &TokenEmbeddings, cfg: &PruneConfig, vocab: &Vocabulary) -> usize {
    if !cfg.retain_special {
        return 0;
    }
    doc.token_ids()
        .iter()
        .take(cfg.special_prefix)
        .take_while(|t| vocab.is_special(**t))
        .count()
}

/// Keeps the protected prefix, then fills the budget from `ranked`
/// (best first), skipping positions already kept.
fn select_budget(n: usize, budget: usize, protected: usize, ranked: &[usize]) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..protected.min(budget)).collect();
    kept.extend(
        ranked
            .iter()
            .copied()
            .filter(|&p| p >= protected)
            .take(budget - kept.len()),
    );
    debug_assert!(kept.len() == budget && kept.iter().all(|&p| p < n));
    kept
}

/// Keeps the first `l'` tokens.
pub fn prune_first(doc: &TokenEmbeddings, cfg: &PruneConfig) -> Result<PrunedDoc> {
    expect_method(cfg, PruneMethod::First)?;
    let budget = remaining_count(doc.len(), cfg.alpha)?;
    finish(doc, (0..budget).collect())
}

/// Keeps the protected special prefix plus the highest-IDF remaining tokens.
pub fn prune_idf_top(
    doc: &TokenEmbeddings,
    cfg: &PruneConfig,
    idf: &IdfTable,
    vocab: &Vocabulary,
) -> Result<PrunedDoc> {
    expect_method(cfg, PruneMethod::IdfTop)?;
    for &t in doc.token_ids() {
        vocab
            .check(t)
            .map_err(|e| Error::Vocabulary(format!("document {}: {e}", doc.id)))?;
    }
    let budget = remaining_count(doc.len(), cfg.alpha)?;
    let protected = protected_prefix(doc, cfg, vocab);
    let weights: Vec<f64> = doc.token_ids().iter().map(|&t| idf.weight(t)).collect();
    let ranked = rank_desc(&weights);
    finish(doc, select_budget(doc.len(), budget, protected, &ranked))
}

/// Keeps the protected special prefix plus the tokens with the largest
/// attention importance.
pub fn prune_attention_top(
    doc: &TokenEmbeddings,
    cfg: &PruneConfig,
    vocab: &Vocabulary,
) -> Result<PrunedDoc> {
    expect_method(cfg, PruneMethod::AttentionTop)?;
    let budget = remaining_count(doc.len(), cfg.alpha)?;
    let protected = protected_prefix(doc, cfg, vocab);
    let importance = attention_importance(doc)?;
    let ranked = rank_desc(&importance);
    finish(doc, select_budget(doc.len(), budget, protected, &ranked))
}

/// Prunes one document with whichever method `cfg` selects.
pub fn prune_doc(
    doc: &TokenEmbeddings,
    cfg: &PruneConfig,
    idf: Option<&IdfTable>,
    vocab: &Vocabulary,
) -> Result<PrunedDoc> {
    match cfg.method {
        PruneMethod::First => prune_first(doc, cfg),
        PruneMethod::IdfTop => {
            let idf =
                idf.ok_or_else(|| Error::Config("IDF-Top pruning needs an IDF table".into()))?;
            prune_idf_top(doc, cfg, idf, vocab)
        }
        PruneMethod::AttentionTop => prune_attention_top(doc, cfg, vocab),
    }
}

/// Positions sorted by descending value, ties by ascending position.
pub(crate) fn rank_desc<T: Copy + PartialOrd>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Row-softmaxed self-similarity matrix `softmax(D D^T)`, row-major `n x n`.
pub fn self_attention(doc: &TokenEmbeddings) -> Result<Vec<f64>> {
    let n = doc.len();
    let mut out = vec![0.0f64; n * n];
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for (j, g) in row.iter_mut().enumerate() {
            *g = dot(doc.row(i), doc.row(j)) as f64;
        }
        if row.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "document {}: non-finite self-similarity in row {i}",
                doc.id
            )));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for g in row.iter_mut() {
            *g = (*g - max).exp();
            z += *g;
        }
        for g in row.iter_mut() {
            *g /= z;
        }
    }
    Ok(out)
}

/// Column sums of [`self_attention`]. Each softmax row sums to one, so the
/// importances sum to `n`.
pub fn attention_importance(doc: &TokenEmbeddings) -> Result<Vec<f32>> {
    let n = doc.len();
    let att = self_attention(doc)?;
    let mut cols = vec![0.0f64; n];
    for row in att.chunks_exact(n) {
        for (c, a) in cols.iter_mut().zip(row) {
            *c += a;
        }
    }
    Ok(cols.into_iter().map(|c| c as f32).collect())
}

/// Token totals before and after pruning a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub method: Option<PruneMethod>,
    pub alpha: f64,
    pub documents: usize,
    pub tokens_before: usize,
    pub tokens_after: usize,
    /// `tokens_after / tokens_before`, 0 for an empty corpus.
    pub achieved_ratio: f64,
    /// Mean of the per-document kept fractions.
    pub mean_doc_ratio: f64,
}

/// Prunes every document in parallel. Per-document failures are gathered
/// into [`Error::Documents`].
pub fn prune_corpus(
    docs: &[TokenEmbeddings],
    cfg: &PruneConfig,
    idf: Option<&IdfTable>,
    vocab: &Vocabulary,
) -> Result<(Vec<TokenEmbeddings>, PruneReport)> {
    cfg.validate()?;
    let results: Vec<(u64, Result<PrunedDoc>)> = docs
        .par_iter()
        .map(|d| (d.id, prune_doc(d, cfg, idf, vocab)))
        .collect();

    let mut pruned = Vec::with_capacity(docs.len());
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(p) => pruned.push(p.doc),
            Err(e) => failures.push((id, e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Documents(failures));
    }

    let tokens_before: usize = docs.iter().map(TokenEmbeddings::len).sum();
    let tokens_after: usize = pruned.iter().map(TokenEmbeddings::len).sum();
    let mean_doc_ratio = if docs.is_empty() {
        0.0
    } else {
        docs.iter()
            .zip(&pruned)
            .map(|(a, b)| b.len() as f64 / a.len() as f64)
            .sum::<f64>()
            / docs.len() as f64
    };
    let report = PruneReport {
        method: Some(cfg.method),
        alpha: cfg.alpha,
        documents: docs.len(),
        tokens_before,
        tokens_after,
        achieved_ratio: if tokens_before == 0 {
            0.0
        } else {
            tokens_after as f64 / tokens_before as f64
        },
        mean_doc_ratio,
    };
    Ok((pruned, report))
}
