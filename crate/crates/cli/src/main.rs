use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spix::bench::{self, corpus, CorpusSpec, SweepOptions};
use spix::eval::{self, Gain, Metric};
use spix::index::{build_index, index_stats, load_index, quantize_index, save_index, IndexStats};
use spix::ingest::{self, ExpansionFlags};
use spix::prune::{self, PruneConfig};
use spix::search::{batch_search, Algorithm};
use spix::sparsity::{self, ActivationForm, MseForm, SparsityConfig};
use spix::{Error, ForwardIndex, InvertedIndex, QuantConfig};

/// Static pruning toolkit for learned-sparse impact indexes.
#[derive(Debug, Parser)]
#[command(name = "spix", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print progress and ingest reports to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and quantize an index from a JSONL vector file.
    Build(BuildArgs),
    /// Apply one static pruning strategy.
    Prune(PruneArgs),
    /// Run top-k retrieval for a query file and write a TREC run.
    Search(SearchArgs),
    /// Score a run against qrels, optionally comparing with a baseline run.
    Evaluate(EvaluateArgs),
    /// Measure mean query latency.
    Bench(BenchArgs),
    /// Sweep pruning configurations and write a speedup/effectiveness table.
    Sweep(SweepArgs),
    /// Sparsity-objective diagnostics over a vector file.
    Stats(StatsArgs),
    /// Generate a synthetic collection, queries and qrels.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct QuantArgs {
    /// Impact width in bits (1-32).
    #[arg(long, default_value_t = 8)]
    quant_bits: u32,
    /// Integer multiplier for query weights.
    #[arg(long, default_value_t = 100)]
    query_scale: u32,
}

impl QuantArgs {
    fn config(&self) -> Result<QuantConfig, Error> {
        QuantConfig::new(self.quant_bits, 1.0, self.query_scale)
    }
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// JSONL vectors: {"id": ..., "vector": {term: weight}}.
    #[arg(long)]
    input: PathBuf,
    /// Output SPIX index.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    quant: QuantArgs,
}

#[derive(Debug, Args)]
struct PruneArgs {
    /// JSONL vectors (a saved index holds only quantized impacts and is rejected).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Comma-separated parameters: q | k | t | L | t_orig,t_exp | q_base,pivot.
    #[arg(long, allow_hyphen_values = true)]
    param: String,
    /// Subtract the threshold from surviving impacts (global-threshold only).
    #[arg(long)]
    shift: bool,
    /// Expansion sidecar JSONL {"id": ..., "expanded": [terms]} (dual-threshold).
    #[arg(long)]
    expanded: Option<PathBuf>,
    /// Output path; `.jsonl` writes pruned vectors (document-side methods), anything else a SPIX index.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    quant: QuantArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    TermQuantile,
    DocTopk,
    GlobalThreshold,
    TermMaxlen,
    DualThreshold,
    LengthScaled,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::TermQuantile => "term-quantile",
            MethodArg::DocTopk => "doc-topk",
            MethodArg::GlobalThreshold => "global-threshold",
            MethodArg::TermMaxlen => "term-maxlen",
            MethodArg::DualThreshold => "dual-threshold",
            MethodArg::LengthScaled => "length-scaled",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Maxscore,
    Daat,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Maxscore => Algorithm::MaxScore,
            AlgorithmArg::Daat => Algorithm::Daat,
        }
    }
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    /// Queries in the JSONL vector format.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, value_enum, default_value = "maxscore")]
    algorithm: AlgorithmArg,
    /// TREC run output.
    #[arg(long)]
    output: PathBuf,
    /// Run tag written in the last column.
    #[arg(long, default_value = "spix")]
    tag: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GainArg {
    Linear,
    Exponential,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Comma-separated metrics: mrr@N, recall@N, ndcg@N.
    #[arg(long, default_value = "mrr@10,recall@1000,ndcg@10")]
    metrics: String,
    /// Baseline run for paired t-tests.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Significance level before correction.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bonferroni corrections (default: number of metrics).
    #[arg(long)]
    corrections: Option<usize>,
    /// nDCG gain function.
    #[arg(long, value_enum, default_value = "linear")]
    gain: GainArg,
    /// CSV output (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, value_enum, default_value = "maxscore")]
    algorithm: AlgorithmArg,
    /// Untimed executions per query.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Timed executions per query.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSONL vectors.
    #[arg(long)]
    input: PathBuf,
    /// JSON list of {"method", "param" | "params", "shift", "label"}; method "none" is the baseline.
    #[arg(long)]
    configs: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, value_enum, default_value = "maxscore")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Expansion sidecar for dual-threshold entries.
    #[arg(long)]
    expanded: Option<PathBuf>,
    #[command(flatten)]
    quant: QuantArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    /// sum_i (x/B)^2
    SquaredTerms,
    /// (sum_i x/B)^2
    SquaredMean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MseArg {
    /// |p_hat^2 - p_j|
    Literal,
    /// (p_hat - p_j)^2
    Symmetric,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// JSONL vectors; rows are documents, columns the vocabulary.
    #[arg(long)]
    input: PathBuf,
    /// Saturation constant.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Desired document size.
    #[arg(long, default_value_t = 64)]
    k_target: usize,
    /// Target activation probability.
    #[arg(long, default_value_t = 0.01)]
    p_target: f64,
    #[arg(long, value_enum, default_value = "squared-terms")]
    activation: ActivationArg,
    #[arg(long, value_enum, default_value = "literal")]
    mse: MseArg,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    docs: usize,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    /// Mean document length (postings per document).
    #[arg(long, default_value_t = 40)]
    doc_len: usize,
    #[arg(long, default_value_t = 50)]
    queries: usize,
    /// Mean query length.
    #[arg(long, default_value_t = 6)]
    query_len: usize,
    #[arg(long, default_value_t = 1.1)]
    zipf: f64,
    /// Log-normal weight location.
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    mu: f64,
    /// Log-normal weight scale.
    #[arg(long, default_value_t = 0.75)]
    sigma: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory receiving vectors.jsonl, queries.jsonl and qrels.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Data(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn read_vectors(path: &Path, verbose: bool) -> CliResult<ForwardIndex> {
    let (fwd, report) = ingest::parse_vectors(open(path)?)?;
    if verbose {
        eprintln!(
            "{}: {} documents, {} terms, {} non-positive weights dropped",
            path.display(),
            fwd.docs.len(),
            fwd.vocab.len(),
            report.dropped_nonpositive
        );
    }
    Ok(fwd)
}

fn is_index_file(path: &Path) -> CliResult<bool> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path)?;
    Ok(f.read_exact(&mut magic).is_ok() && &magic == b"SPIX")
}

fn save(index: &InvertedIndex, path: &Path) -> CliResult<IndexStats> {
    let mut w = create(path)?;
    save_index(index, &mut w)?;
    w.flush()?;
    Ok(index_stats(index))
}

fn report_stats(verbose: bool, stats: &IndexStats) {
    if verbose {
        eprintln!(
            "docs={} terms={} postings={} max_list_len={} bytes={} empty_lists={} empty_docs={}",
            stats.num_docs,
            stats.num_terms,
            stats.num_postings,
            stats.max_list_len,
            stats.serialized_bytes,
            stats.empty_lists,
            stats.empty_docs
        );
    }
}

fn load_queries(path: &Path, index: &InvertedIndex, verbose: bool) -> CliResult<Vec<spix::WeightedQuery>> {
    let (raw, skipped) = ingest::parse_queries(open(path)?, &index.vocab)?;
    if verbose && skipped > 0 {
        eprintln!("{skipped} query terms absent from the index vocabulary were skipped");
    }
    Ok(raw.iter().map(|q| q.scaled(&index.quant)).collect())
}

fn read_expansion(path: Option<&Path>, fwd: &ForwardIndex) -> CliResult<Option<ExpansionFlags>> {
    path.map(|p| ingest::parse_expansion(open(p)?, &fwd.vocab).map_err(Failure::from))
        .transpose()
}

fn cmd_build(args: &BuildArgs, verbose: bool) -> CliResult {
    let fwd = read_vectors(&args.input, verbose)?;
    let index = quantize_index(build_index(&fwd, &args.quant.config()?)?)?;
    report_stats(verbose, &save(&index, &args.output)?);
    Ok(())
}

fn cmd_prune(args: &PruneArgs, verbose: bool) -> CliResult {
    let params = args
        .param
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("--param `{p}` is not a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let cfg = PruneConfig::from_method(args.method.name(), &params, args.shift)?;
    if is_index_file(&args.input)? {
        return Err(Failure::Data(Error::RequiresRaw));
    }
    let fwd = read_vectors(&args.input, verbose)?;
    let flags = read_expansion(args.expanded.as_deref(), &fwd)?;

    let to_jsonl = args.output.extension().is_some_and(|e| e == "jsonl");
    if to_jsonl {
        if !cfg.is_forward() {
            return Err(Failure::Usage(format!(
                "{} prunes posting lists; write a SPIX index instead of .jsonl",
                args.method.name()
            )));
        }
        let pruned = prune::apply_forward(&fwd, &cfg, flags.as_ref())?;
        let mut w = create(&args.output)?;
        ingest::write_forward(&mut w, &pruned)?;
        w.flush()?;
        if verbose {
            eprintln!("entries {} -> {}", fwd.num_entries(), pruned.num_entries());
        }
        return Ok(());
    }
    let quant = args.quant.config()?;
    let raw = prune::pruned_index(&fwd, Some(&cfg), flags.as_ref(), &quant, fwd.max_weight())?;
    let index = quantize_index(raw)?;
    report_stats(verbose, &save(&index, &args.output)?);
    Ok(())
}

fn cmd_search(args: &SearchArgs, verbose: bool) -> CliResult {
    let index = load_index(open(&args.index)?)?;
    let queries = load_queries(&args.queries, &index, verbose)?;
    let run = batch_search(&index, &queries, args.k, args.algorithm.into())?;
    let mut w = create(&args.output)?;
    ingest::write_run(&mut w, &run, &args.tag)?;
    w.flush()?;
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, verbose: bool) -> CliResult {
    let metrics = args
        .metrics
        .split(',')
        .map(|m| m.trim().parse::<Metric>())
        .collect::<Result<Vec<_>, _>>()?;
    if metrics.is_empty() {
        return Err(Failure::Usage("no metrics requested".into()));
    }
    let gain = match args.gain {
        GainArg::Linear => Gain::Linear,
        GainArg::Exponential => Gain::Exponential,
    };
    let run = ingest::parse_run(open(&args.run)?)?;
    let (qrels, overrides) = ingest::parse_qrels(open(&args.qrels)?)?;
    if verbose && overrides > 0 {
        eprintln!("{overrides} duplicate qrels lines overrode earlier grades");
    }
    let reports: Vec<_> = metrics
        .iter()
        .map(|&m| eval::evaluate(&run, &qrels, m, gain))
        .collect();

    let comparisons = match &args.compare {
        None => None,
        Some(path) => {
            let base = ingest::parse_run(open(path)?)?;
            let corrections = args.corrections.unwrap_or(metrics.len());
            let mut out = Vec::with_capacity(metrics.len());
            for (r, &m) in reports.iter().zip(&metrics) {
                let b = eval::evaluate(&base, &qrels, m, gain);
                let sig = eval::compare_reports(r, &b, args.alpha, corrections)?;
                out.push((b, sig));
            }
            Some(out)
        }
    };

    match &args.output {
        Some(path) => {
            let mut w = create(path)?;
            eval::write_report_csv(&mut w, &reports, comparisons.as_deref())?;
            w.flush()?;
        }
        None => eval::write_report_csv(io::stdout().lock(), &reports, comparisons.as_deref())?,
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs, verbose: bool) -> CliResult {
    let index = load_index(open(&args.index)?)?;
    let queries = load_queries(&args.queries, &index, verbose)?;
    let report = bench::measure_latency(
        &index,
        &queries,
        args.k,
        args.algorithm.into(),
        args.warmup,
        args.repeats,
    )?;
    let mut out = io::stdout().lock();
    writeln!(out, "queries,samples,warmup,repeats,mean_ms")?;
    writeln!(
        out,
        "{},{},{},{},{:.6}",
        queries.len(),
        report.samples_ms.len(),
        report.warmup,
        report.repeats,
        report.mean_ms
    )?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, verbose: bool) -> CliResult {
    let mut json = String::new();
    open(&args.configs)?.read_to_string(&mut json)?;
    let entries = bench::parse_sweep_configs(&json)?;
    let fwd = read_vectors(&args.input, verbose)?;
    let flags = read_expansion(args.expanded.as_deref(), &fwd)?;
    let (queries, _) = ingest::parse_queries(open(&args.queries)?, &fwd.vocab)?;
    let (qrels, _) = ingest::parse_qrels(open(&args.qrels)?)?;
    let opts = SweepOptions {
        k: args.k,
        algorithm: args.algorithm.into(),
        warmup: args.warmup,
        repeats: args.repeats,
        quant: args.quant.config()?,
        gain: Gain::Linear,
    };
    let table = bench::sweep(&fwd, &entries, flags.as_ref(), &queries, &qrels, &opts)?;
    let mut w = create(&args.out)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    for (label, reason) in &table.failures {
        eprintln!("sweep entry {label} failed: {reason}");
    }
    Ok(())
}

fn cmd_stats(args: &StatsArgs, verbose: bool) -> CliResult {
    let cfg = SparsityConfig::new(args.tau, args.k_target, args.p_target)?;
    let fwd = read_vectors(&args.input, verbose)?;
    let activation = match args.activation {
        ActivationArg::SquaredTerms => ActivationForm::SquaredTerms,
        ActivationArg::SquaredMean => ActivationForm::SquaredMean,
    };
    let mse = match args.mse {
        MseArg::Literal => MseForm::Literal,
        MseArg::Symmetric => MseForm::Symmetric,
    };
    let report = sparsity::sparsity_report(&fwd, &cfg, activation, mse)?;
    let mut w = create(&args.out)?;
    sparsity::write_sparsity_csv(&mut w, &report)?;
    w.flush()?;
    if verbose {
        eprintln!(
            "flops_estimate={} target_mse={} kl_mean={}",
            report.flops_estimate, report.target_mse, report.kl_mean
        );
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs, verbose: bool) -> CliResult {
    let spec = CorpusSpec {
        num_docs: args.docs,
        vocab_size: args.vocab,
        mean_doc_len: args.doc_len,
        zipf_exponent: args.zipf,
        weight_mu: args.mu,
        weight_sigma: args.sigma,
        num_queries: args.queries,
        mean_query_len: args.query_len,
        seed: args.seed,
    };
    let c = corpus::gen_corpus(&spec)?;
    corpus::write_corpus(&c, &args.out_dir)?;
    if verbose {
        eprintln!(
            "wrote {} documents, {} queries, {} judged queries to {}",
            c.docs.docs.len(),
            c.queries.len(),
            c.qrels.num_queries(),
            args.out_dir.display()
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    let v = cli.verbose;
    match &cli.command {
        Command::Build(a) => cmd_build(a, v),
        Command::Prune(a) => cmd_prune(a, v),
        Command::Search(a) => cmd_search(a, v),
        Command::Evaluate(a) => cmd_evaluate(a, v),
        Command::Bench(a) => cmd_bench(a, v),
        Command::Sweep(a) => cmd_sweep(a, v),
        Command::Stats(a) => cmd_stats(a, v),
        Command::Gen(a) => cmd_gen(a, v),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e @ Error::Invariant(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
