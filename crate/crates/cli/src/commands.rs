use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use latte_core::analysis::{
    contribution_metrics, split_contribution, AnalysisConfig, BinScheme, SplitKind,
};
use latte_core::doc_pruning::{prune_corpus, PruneConfig, PruneMethod};
use latte_core::engine::{HardEngine, Retriever, SoftEngine};
use latte_core::eval::{
    measure_latency, mrr_at_k, ndcg_at_k, recall_at_k, run_queries, tost_paired, MetricResult,
    Qrels, Run,
};
use latte_core::hard_index::{build_hard_index, HardIndex};
use latte_core::query_pruning::QtpConfig;
use latte_core::scoring::MatchKind;
use latte_core::soft_index::{build_soft_index, SearchParams, SoftIndex, SoftIndexParams};
use latte_core::store::{build_idf_table, load_corpus, save_corpus};
use latte_core::synthetic::{generate_collection, SyntheticConfig};
use latte_core::{Corpus, Dtype, IdfTable, TokenEmbeddings, Vocabulary};
use serde_json::json;

use crate::{
    AnalyzeArgs, BenchArgs, Command, DtypeArg, EngineArg, EvaluateArgs, HardKindArg, IdfArgs,
    IndexHardArgs, IndexSoftArgs, KindArg, MetricArg, PruneArgs, PruneMethodArg, QtpArg,
    RetrieveArgs, SchemeArg, SearchArgs, SynthArgs, TostArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Idf(a) => idf(a),
        Command::Prune(a) => prune(a),
        Command::IndexSoft(a) => index_soft(a),
        Command::IndexHard(a) => index_hard(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Analyze(a) => analyze(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Tost(a) => tost(a),
        Command::Bench(a) => bench(a),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading {}", path.display()))
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn idf_for(path: Option<&Path>, docs: &[TokenEmbeddings], vocab: &Vocabulary) -> Result<IdfTable> {
    match path {
        Some(p) => IdfTable::load(p).with_context(|| format!("loading IDF table {}", p.display())),
        None => Ok(build_idf_table(docs, vocab)?),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        num_docs: a.docs,
        num_queries: a.queries,
        dim: a.dim,
        summary_dim: a.summary_dim,
        vocab_size: a.vocab_size,
        num_stopwords: a.stopwords,
        doc_len: (a.min_doc_len, a.max_doc_len),
        query_pad_to: a.pad_to,
        dtype: match a.dtype {
            DtypeArg::F16 => Dtype::F16,
            DtypeArg::F32 => Dtype::F32,
        },
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let c = generate_collection(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_corpus(a.out.join("docs.bin"), &c.docs)?;
    save_corpus(a.out.join("queries.bin"), &c.queries)?;
    c.vocab.save(a.out.join("vocab.tsv"))?;
    let mut qrels = Qrels::new();
    for (q, d, g) in &c.qrels {
        qrels.insert(*q, *d, *g);
    }
    qrels.save(&a.out.join("qrels.tsv"))?;
    print_json(&json!({
        "out": a.out,
        "docs": c.docs.len(),
        "doc_tokens": c.docs.token_count(),
        "queries": c.queries.len(),
        "vocab_size": c.vocab.len(),
    }))
}

fn idf(a: IdfArgs) -> Result<()> {
    let docs = load(&a.docs)?;
    let vocab = load_vocab(&a.vocab)?;
    let table = build_idf_table(&docs.records, &vocab)?;
    table.save(&a.out)?;
    print_json(&json!({ "out": a.out, "corpus_size": table.corpus_size(), "tokens": table.len() }))
}

fn prune(a: PruneArgs) -> Result<()> {
    let docs = load(&a.docs)?;
    let vocab = load_vocab(&a.vocab)?;
    let method = match a.method {
        PruneMethodArg::First => PruneMethod::First,
        PruneMethodArg::IdfTop => PruneMethod::IdfTop,
        PruneMethodArg::AttentionTop => PruneMethod::AttentionTop,
    };
    let cfg = PruneConfig::new(method, a.alpha)?
        .with_special_prefix(a.special_prefix)
        .with_retain_special(!a.no_retain_special);
    let idf = match method {
        PruneMethod::IdfTop => Some(idf_for(a.idf.as_deref(), &docs.records, &vocab)?),
        _ => None,
    };
    let (pruned, report) = prune_corpus(&docs.records, &cfg, idf.as_ref(), &vocab)?;
    let out = Corpus::new(docs.dim, docs.dtype, pruned)?;
    save_corpus(&a.out, &out)?;
    let report = serde_json::to_value(&report)?;
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    print_json(&report)
}

fn index_soft(a: IndexSoftArgs) -> Result<()> {
    let docs = load(&a.docs)?;
    let params = SoftIndexParams {
        n_clusters: a.clusters,
        train_fraction: a.train_fraction,
        seed: a.seed,
        nprobe: a.nprobe,
    };
    let index = build_soft_index(&docs.records, &params)?;
    index.save(&a.out)?;
    print_json(&json!({
        "out": a.out,
        "docs": index.num_docs(),
        "tokens": index.num_tokens(),
        "clusters": index.n_clusters(),
    }))
}

fn index_hard(a: IndexHardArgs) -> Result<()> {
    let docs = load(&a.docs)?;
    let index = build_hard_index(&docs.records)?;
    index.save(&a.out)?;
    print_json(&json!({
        "out": a.out,
        "docs": index.num_docs(),
        "entries": index.num_entries(),
        "distinct_tokens": index.tokens().count(),
    }))
}

enum LoadedIndex {
    Soft(SoftIndex),
    Hard(HardIndex),
}

/// Everything a search needs, loaded from disk once.
struct SearchSetup {
    index: LoadedIndex,
    queries: Corpus,
    idf: Option<IdfTable>,
    vocab: Option<Vocabulary>,
}

impl SearchSetup {
    fn load(a: &SearchArgs) -> Result<Self> {
        let engine = match a.engine {
            EngineArg::Auto if a.index.join("centroids.bin").exists() => EngineArg::Soft,
            EngineArg::Auto if a.index.join("postings.bin").exists() => EngineArg::Hard,
            EngineArg::Auto => bail!("{} is not an index directory", a.index.display()),
            e => e,
        };
        let index = if engine == EngineArg::Soft {
            LoadedIndex::Soft(SoftIndex::load(&a.index)?)
        } else {
            LoadedIndex::Hard(HardIndex::load(&a.index)?)
        };
        let idf = a.idf.as_deref().map(IdfTable::load).transpose()?;
        let vocab = a.vocab.as_deref().map(load_vocab).transpose()?;
        Ok(Self {
            index,
            queries: load(&a.queries)?,
            idf,
            vocab,
        })
    }

    fn engine<'a>(&'a self, a: &SearchArgs) -> Result<Box<dyn Retriever + 'a>> {
        Ok(match &self.index {
            LoadedIndex::Soft(index) => {
                let qtp = match a.qtp {
                    QtpArg::None => QtpConfig::none(),
                    QtpArg::Idf => QtpConfig::idf(a.idf_keep),
                    QtpArg::Attention => QtpConfig::attention(a.att_k_min, a.att_k_max),
                };
                qtp.validate()?;
                Box::new(SoftEngine {
                    index,
                    params: SearchParams {
                        k: a.k,
                        k_prime: a.k_prime,
                        nprobe: a.nprobe,
                        qtp,
                    },
                    idf: self.idf.as_ref(),
                    vocab: self.vocab.as_ref(),
                })
            }
            LoadedIndex::Hard(index) => Box::new(HardEngine {
                index,
                kind: match a.kind {
                    HardKindArg::HardToken => MatchKind::HardToken,
                    HardKindArg::HardFull => MatchKind::HardFull,
                },
                k: a.k,
            }),
        })
    }
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let setup = SearchSetup::load(&a.search)?;
    let engine = setup.engine(&a.search)?;
    let results = run_queries(engine.as_ref(), &setup.queries.records)?;
    let mut run = Run::new(a.tag.clone());
    let mut stats_out = match &a.stats {
        Some(p) => Some(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let mut total_candidates = 0usize;
    let mut empty = 0usize;
    for (q, r) in setup.queries.records.iter().zip(results) {
        total_candidates += r.stats.candidates;
        empty += usize::from(r.stats.empty_candidates);
        if let Some(w) = stats_out.as_mut() {
            let mut line = serde_json::to_value(&r.stats)?;
            line["query_id"] = json!(q.id);
            writeln!(w, "{line}")?;
        }
        run.insert(q.id, r.results)?;
    }
    if let Some(mut w) = stats_out {
        w.flush()?;
    }
    run.save(&a.out)?;
    let n = setup.queries.len().max(1) as f64;
    print_json(&json!({
        "out": a.out,
        "queries": setup.queries.len(),
        "ard": total_candidates as f64 / n,
        "empty_candidate_queries": empty,
    }))
}

fn bench(a: BenchArgs) -> Result<()> {
    let setup = SearchSetup::load(&a.search)?;
    let engine = setup.engine(&a.search)?;
    let r = measure_latency(engine.as_ref(), &setup.queries.records, a.repetitions)?;
    print_json(&json!({
        "queries": r.queries,
        "repetitions": r.repetitions,
        "mean_ms": r.mean_ms,
        "p50_ms": r.p50_ms,
        "p95_ms": r.p95_ms,
        "ard": r.ard,
    }))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let qrels = Qrels::load(&a.pairs)?;
    let queries = load(&a.queries)?;
    let docs = load(&a.docs)?;
    let vocab = load_vocab(&a.vocab)?;
    let q_by_id: HashMap<u64, &TokenEmbeddings> =
        queries.records.iter().map(|r| (r.id, r)).collect();
    let d_by_id: HashMap<u64, &TokenEmbeddings> = docs.records.iter().map(|r| (r.id, r)).collect();
    let mut pairs = Vec::new();
    let mut missing = 0usize;
    for (qid, did) in qrels.positive_pairs() {
        match (q_by_id.get(&qid), d_by_id.get(&did)) {
            (Some(q), Some(d)) => pairs.push((*q, *d)),
            _ => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{missing} judged pairs reference missing queries or documents");
    }
    let kind = match a.kind {
        KindArg::Soft => MatchKind::Soft,
        KindArg::HardToken => MatchKind::HardToken,
        KindArg::HardFull => MatchKind::HardFull,
    };
    let scheme = match a.scheme {
        SchemeArg::Position => BinScheme::Position,
        SchemeArg::Idf => BinScheme::Idf,
    };
    let idf = match scheme {
        BinScheme::Idf => Some(idf_for(a.idf.as_deref(), &docs.records, &vocab)?),
        BinScheme::Position => None,
    };
    let cfg = AnalysisConfig {
        kind,
        scheme,
        n_bins: a.bins,
    };
    let report = contribution_metrics(&pairs, &cfg, idf.as_ref(), &vocab)?;
    fs::write(&a.out, report.to_tsv()).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.plot {
        let title = format!("{:?} bins, {:?} matching", a.scheme, a.kind);
        fs::write(p, report.to_svg(&title)).with_context(|| format!("writing {}", p.display()))?;
    }
    let co = split_contribution(&pairs, SplitKind::CoOccurrence, kind, &vocab)?;
    let stop = split_contribution(&pairs, SplitKind::Stopword, kind, &vocab)?;
    print_json(&json!({
        "pairs": report.pairs,
        "skipped_pairs": missing,
        "matched_tokens": report.matched_tokens,
        "skipped_tokens": report.skipped_tokens,
        "degenerate": report.degenerate,
        "p_indice": report.p_indice,
        "p_score": report.p_score,
        "hypothetical": report.hypothetical,
        "cooccurring_share": co.first,
        "non_stopword_share": stop.first,
    }))
}

fn metric_json(m: &MetricResult) -> serde_json::Value {
    json!({ "mean": m.mean, "queries": m.per_query.len(), "skipped": m.skipped })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let run = Run::load(&a.run)?;
    let qrels = Qrels::load(&a.qrels)?;
    print_json(&json!({
        format!("mrr@{}", a.mrr_k): metric_json(&mrr_at_k(&run, &qrels, a.mrr_k)?),
        format!("recall@{}", a.recall_k): metric_json(&recall_at_k(&run, &qrels, a.recall_k)?),
        format!("ndcg@{}", a.ndcg_k): metric_json(&ndcg_at_k(&run, &qrels, a.ndcg_k)?),
    }))
}

fn tost(a: TostArgs) -> Result<()> {
    let qrels = Qrels::load(&a.qrels)?;
    let metric = |run: &Run| match a.metric {
        MetricArg::Mrr => mrr_at_k(run, &qrels, a.k),
        MetricArg::Recall => recall_at_k(run, &qrels, a.k),
        MetricArg::Ndcg => ndcg_at_k(run, &qrels, a.k),
    };
    let ma = metric(&Run::load(&a.run_a)?)?;
    let mb = metric(&Run::load(&a.run_b)?)?;
    let (mut va, mut vb) = (Vec::new(), Vec::new());
    for (q, x) in &ma.per_query {
        if let Some(y) = mb.per_query.get(q) {
            va.push(*x);
            vb.push(*y);
        }
    }
    let unpaired = ma.per_query.len() + mb.per_query.len() - 2 * va.len();
    if unpaired > 0 {
        log::warn!("{unpaired} queries are evaluated in only one run and were left out");
    }
    let r = tost_paired(&va, &vb, a.delta, a.alpha)?;
    let mut out = serde_json::to_value(&r)?;
    out["mean_a"] = json!(ma.mean);
    out["mean_b"] = json!(mb.mean);
    print_json(&out)
}
