use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "latte", version, about = "Late-interaction retrieval toolkit")]
#[command(args_override_self = true)]
struct Cli {
    /// Read `key = value` defaults from a file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic collection (docs, queries, vocabulary, qrels).
    Synth(SynthArgs),
    /// Compute the IDF table of a document file.
    Idf(IdfArgs),
    /// Prune document tokens before indexing.
    Prune(PruneArgs),
    /// Build an IVF-partitioned index for soft matching.
    IndexSoft(IndexSoftArgs),
    /// Build an embedding inverted index for hard matching.
    IndexHard(IndexHardArgs),
    /// Retrieve and rank documents for a query file; writes a TREC run.
    Retrieve(RetrieveArgs),
    /// Bin-wise contribution analysis over positive query-document pairs.
    Analyze(AnalyzeArgs),
    /// Compute MRR, recall and NDCG of a run.
    Evaluate(EvaluateArgs),
    /// Paired TOST equivalence test between two runs.
    Tost(TostArgs),
    /// Measure per-query latency and candidate counts.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    docs: usize,
    #[arg(long, default_value_t = 20)]
    queries: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Summary vector dimension; 0 for none.
    #[arg(long, default_value_t = 0)]
    summary_dim: usize,
    #[arg(long, default_value_t = 2000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 40)]
    stopwords: usize,
    #[arg(long, default_value_t = 5)]
    min_doc_len: usize,
    #[arg(long, default_value_t = 40)]
    max_doc_len: usize,
    /// Pad queries with mask tokens to this length.
    #[arg(long)]
    pad_to: Option<usize>,
    #[arg(long, value_enum, default_value_t = DtypeArg::F16)]
    dtype: DtypeArg,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct IdfArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PruneArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, value_enum)]
    method: PruneMethodArg,
    /// Remaining ratio in (0, 1].
    #[arg(long)]
    alpha: f64,
    /// IDF table; computed from `--docs` when omitted.
    #[arg(long)]
    idf: Option<PathBuf>,
    /// Leading special tokens always kept (2 for `[CLS] [D]`, 1 for `[CLS]`).
    #[arg(long, default_value_t = 2)]
    special_prefix: usize,
    /// Treat leading special tokens like any other token.
    #[arg(long)]
    no_retain_special: bool,
    #[arg(long)]
    out: PathBuf,
    /// Write the pruning summary as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IndexSoftArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Cluster count; defaults to floor(sqrt(tokens)).
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    nprobe: usize,
}

#[derive(Args, Debug)]
struct IndexHardArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
    engine: EngineArg,
    /// Match kind for the hard engine.
    #[arg(long, value_enum, default_value_t = HardKindArg::HardToken)]
    kind: HardKindArg,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Slots kept per query token during soft candidate generation.
    #[arg(long, default_value_t = 1024)]
    k_prime: usize,
    /// Clusters probed per query token; defaults to the index setting.
    #[arg(long)]
    nprobe: Option<usize>,
    #[arg(long, value_enum, default_value_t = QtpArg::None)]
    qtp: QtpArg,
    #[arg(long, default_value_t = 8)]
    idf_keep: usize,
    #[arg(long, default_value_t = 0)]
    att_k_min: usize,
    #[arg(long, default_value_t = 0)]
    att_k_max: usize,
    /// IDF table used by IDF query pruning.
    #[arg(long)]
    idf: Option<PathBuf>,
    /// Vocabulary sidecar; special tokens are excluded from query pruning.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "latte")]
    tag: String,
    /// Write per-query statistics as JSON lines.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Qrels file; pairs with grade >= 1 are analyzed.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Position)]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = KindArg::Soft)]
    kind: KindArg,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// IDF table for IDF binning; computed from `--docs` when omitted.
    #[arg(long)]
    idf: Option<PathBuf>,
    /// Report file, one `bin<TAB>p_indice<TAB>p_score` line per bin.
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG bar chart.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 10)]
    mrr_k: usize,
    #[arg(long, default_value_t = 100)]
    recall_k: usize,
    #[arg(long, default_value_t = 10)]
    ndcg_k: usize,
}

#[derive(Args, Debug)]
struct TostArgs {
    #[arg(long)]
    run_a: PathBuf,
    #[arg(long)]
    run_b: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Mrr)]
    metric: MetricArg,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DtypeArg {
    F16,
    F32,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PruneMethodArg {
    First,
    IdfTop,
    AttentionTop,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum EngineArg {
    Auto,
    Soft,
    Hard,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum HardKindArg {
    HardToken,
    HardFull,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum KindArg {
    Soft,
    #[value(alias = "hard")]
    HardToken,
    HardFull,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum QtpArg {
    None,
    Idf,
    Attention,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SchemeArg {
    Position,
    Idf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MetricArg {
    Mrr,
    Recall,
    Ndcg,
}

fn main() {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Err(e) = commands::run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
