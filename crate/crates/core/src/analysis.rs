//! Matching-mechanism instrumentation.
//!
//! For a set of positive (query, document) pairs, every query token's argmax
//! document token is located and attributed to a bin of the document:
//! bins split the document's non-special tokens into equal parts either by
//! position or by descending IDF. Per bin we report the share of argmaxes
//! (indices contribution) and the share of matched score (score
//! contribution), next to the uniform `1 / n_bins` reference.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::doc_pruning::{rank_desc, self_attention};
use crate::error::{Error, Result};
use crate::scoring::{score, MatchKind};
use crate::store::{IdfTable, TokenEmbeddings, Vocabulary};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    Position,
    Idf,
}

/// Per-position bin assignment of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinPartition {
    pub scheme: BinScheme,
    pub n_bins: usize,
    /// `None` for special tokens.
    pub assignment: Vec<Option<usize>>,
}

impl BinPartition {
    pub fn bin_of(&self, pos: usize) -> Option<usize> {
        self.assignment.get(pos).copied().flatten()
    }

    pub fn bin_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_bins];
        for b in self.assignment.iter().flatten() {
            sizes[*b] += 1;
        }
        sizes
    }
}

/// Splits the non-special tokens of `doc` into `n_bins` near-equal bins.
/// The first `L % n_bins` bins get one extra token.
pub fn partition_bins(
    doc: &TokenEmbeddings,
    scheme: BinScheme,
    idf: Option<&IdfTable>,
    vocab: &Vocabulary,
    n_bins: usize,
) -> Result<BinPartition> {
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let eligible: Vec<usize> = (0..doc.len())
        .filter(|&j| !vocab.is_special(doc.token_ids()[j]))
        .collect();
    if eligible.is_empty() {
        return Err(Error::Precondition(format!(
            "document {} has no non-special tokens",
            doc.id
        )));
    }
    let ordered: Vec<usize> = match scheme {
        BinScheme::Position => eligible,
        BinScheme::Idf => {
            let idf = idf.ok_or_else(|| Error::Config("IDF binning needs an IDF table".into()))?;
            let w: Vec<f64> = eligible
                .iter()
                .map(|&j| idf.weight(doc.token_ids()[j]))
                .collect();
            rank_desc(&w).into_iter().map(|r| eligible[r]).collect()
        }
    };
    let len = ordered.len();
    let (base, rem) = (len / n_bins, len % n_bins);
    let mut assignment = vec![None; doc.len()];
    let mut cursor = 0;
    for b in 0..n_bins {
        let size = base + usize::from(b < rem);
        for &pos in &ordered[cursor..cursor + size] {
            assignment[pos] = Some(b);
        }
        cursor += size;
    }
    Ok(BinPartition {
        scheme,
        n_bins,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub kind: MatchKind,
    pub scheme: BinScheme,
    pub n_bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            kind: MatchKind::Soft,
            scheme: BinScheme::Position,
            n_bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionReport {
    pub p_indice: Vec<f64>,
    pub p_score: Vec<f64>,
    pub hypothetical: f64,
    pub pairs: usize,
    /// Query tokens whose argmax landed on a binned document token.
    pub matched_tokens: usize,
    /// Query tokens skipped: empty hard admissible set or argmax on a special token.
    pub skipped_tokens: usize,
    /// Normalizer of `p_score`: the summed matched score.
    pub score_total: f64,
    /// Set when there was nothing to normalize (no matches or score total <= 0).
    pub degenerate: bool,
}

impl ContributionReport {
    /// One line per bin: `bin<TAB>p_indice<TAB>p_score`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (b, (pi, ps)) in self.p_indice.iter().zip(&self.p_score).enumerate() {
            let _ = writeln!(out, "{b}\t{pi:.6}\t{ps:.6}");
        }
        out
    }

    /// Grouped bar chart of both contributions with the uniform reference line.
    pub fn to_svg(&self, title: &str) -> String {
        let n = self.p_indice.len().max(1);
        let (w, h, pad) = (60.0 * n as f64 + 80.0, 320.0, 40.0);
        let top = self
            .p_indice
            .iter()
            .chain(&self.p_score)
            .copied()
            .fold(self.hypothetical, f64::max)
            .max(1e-9);
        let y = |v: f64| h - pad - (h - 2.0 * pad) * v / top;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
        );
        let _ = writeln!(
            s,
            "<text x=\"{pad}\" y=\"20\" font-size=\"14\">{}</text>",
            escape(title)
        );
        for b in 0..n {
            let x0 = pad + 60.0 * b as f64;
            for (k, (v, color)) in [(self.p_indice[b], "#4c72b0"), (self.p_score[b], "#dd8452")]
                .into_iter()
                .enumerate()
            {
                let x = x0 + 8.0 + 22.0 * k as f64;
                let _ = writeln!(
                    s,
                    "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"20\" height=\"{:.1}\" fill=\"{color}\"/>",
                    y(v),
                    (h - pad - y(v)).max(0.0)
                );
            }
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\">{b}</text>",
                x0 + 24.0,
                h - pad + 15.0
            );
        }
        let _ = writeln!(
            s,
            "<line x1=\"{pad}\" x2=\"{:.1}\" y1=\"{ref_y:.1}\" y2=\"{ref_y:.1}\" stroke=\"#555\" stroke-dasharray=\"4 3\"/>",
            w - pad,
            ref_y = y(self.hypothetical)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"20\" fill=\"#4c72b0\">indices</text>",
            w - 150.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"20\" fill=\"#dd8452\">score</text>",
            w - 95.0
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct Tally {
    counts: Vec<u64>,
    scores: Vec<f64>,
    skipped: usize,
}

/// Bin-wise indices and score contributions over positive pairs.
pub fn contribution_metrics(
    pairs: &[(&TokenEmbeddings, &TokenEmbeddings)],
    cfg: &AnalysisConfig,
    idf: Option<&IdfTable>,
    vocab: &Vocabulary,
) -> Result<ContributionReport> {
    if pairs.is_empty() {
        return Err(Error::Precondition(
            "contribution analysis needs at least one pair".into(),
        ));
    }
    let tallies = pairs
        .par_iter()
        .map(|(q, d)| {
            let part = partition_bins(d, cfg.scheme, idf, vocab, cfg.n_bins)?;
            let trace = score(*q, *d, cfg.kind)?;
            let mut t = Tally {
                counts: vec![0; cfg.n_bins],
                scores: vec![0.0; cfg.n_bins],
                skipped: 0,
            };
            for m in &trace.matches {
                match m.doc_pos.and_then(|j| part.bin_of(j)) {
                    Some(b) => {
                        t.counts[b] += 1;
                        t.scores[b] += m.score as f64;
                    }
                    None => t.skipped += 1,
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<Tally>>>()?;

    let mut counts = vec![0u64; cfg.n_bins];
    let mut scores = vec![0.0f64; cfg.n_bins];
    let mut skipped = 0;
    for t in tallies {
        for b in 0..cfg.n_bins {
            counts[b] += t.counts[b];
            scores[b] += t.scores[b];
        }
        skipped += t.skipped;
    }
    let matched: u64 = counts.iter().sum();
    let score_total: f64 = scores.iter().sum();
    let degenerate = matched == 0 || score_total <= 0.0;
    let p_indice = if matched == 0 {
        vec![0.0; cfg.n_bins]
    } else {
        counts.iter().map(|&c| c as f64 / matched as f64).collect()
    };
    let p_score = if score_total <= 0.0 {
        vec![0.0; cfg.n_bins]
    } else {
        scores.iter().map(|s| s / score_total).collect()
    };
    Ok(ContributionReport {
        p_indice,
        p_score,
        hypothetical: 1.0 / cfg.n_bins as f64,
        pairs: pairs.len(),
        matched_tokens: matched as usize,
        skipped_tokens: skipped,
        score_total,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Matched document token also occurs in the query vs. not.
    CoOccurrence,
    /// Matched document token is a non-stop word vs. a stop word.
    Stopword,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub split: SplitKind,
    /// Co-occurring share, or non-stop-word share.
    pub first: f64,
    /// The complementary share.
    pub second: f64,
    pub degenerate: bool,
}

/// Attributes matched score mass to a binary class of the matched document token.
/// Special document tokens are left out, as in the bin analysis.
pub fn split_contribution(
    pairs: &[(&TokenEmbeddings, &TokenEmbeddings)],
    split: SplitKind,
    kind: MatchKind,
    vocab: &Vocabulary,
) -> Result<SplitReport> {
    if pairs.is_empty() {
        return Err(Error::Precondition(
            "split analysis needs at least one pair".into(),
        ));
    }
    let parts = pairs
        .par_iter()
        .map(|(q, d)| {
            let trace = score(*q, *d, kind)?;
            let query_ids: HashSet<_> = q.token_ids().iter().copied().collect();
            let mut acc = (0.0f64, 0.0f64);
            for m in &trace.matches {
                let Some(j) = m.doc_pos else { continue };
                let t = d.token_ids()[j];
                if vocab.is_special(t) {
                    continue;
                }
                let in_first = match split {
                    SplitKind::CoOccurrence => query_ids.contains(&t),
                    SplitKind::Stopword => !vocab.is_stopword(t),
                };
                if in_first {
                    acc.0 += m.score as f64;
                } else {
                    acc.1 += m.score as f64;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let (a, b) = parts
        .into_iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let total = a + b;
    if total <= 0.0 {
        return Ok(SplitReport {
            split,
            first: 0.0,
            second: 0.0,
            degenerate: true,
        });
    }
    Ok(SplitReport {
        split,
        first: a / total,
        second: b / total,
        degenerate: false,
    })
}

/// Histogram of every entry of each document's row-softmaxed self-similarity
/// matrix over `n_bins` equal-width bins of `[0, 1]`; 1.0 falls in the last bin.
pub fn attention_histogram(docs: &[TokenEmbeddings], n_bins: usize) -> Result<Vec<u64>> {
    if docs.is_empty() {
        return Err(Error::Precondition(
            "attention histogram needs documents".into(),
        ));
    }
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let per_doc = docs
        .par_iter()
        .map(|d| {
            let mut h = vec![0u64; n_bins];
            for v in self_attention(d)? {
                let b = ((v * n_bins as f64).floor() as usize).min(n_bins - 1);
                h[b] += 1;
            }
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0u64; n_bins];
    for h in per_doc {
        for (o, c) in out.iter_mut().zip(h) {
            *o += c;
        }
    }
    Ok(out)
}
