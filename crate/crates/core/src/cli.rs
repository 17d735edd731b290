//! Command-line entry point. Every subcommand writes its outputs to declared
//! files plus a `<output>.manifest.json` recording input and output digests
//! and parameters; diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::builder::{build_benchmark, corpus_stats, BuildConfig, DEFAULT_CLEANUP_PATTERNS};
use crate::debias::{
    alpha_sweep, load_triplets, shortcut_dataset, spearman, sweep_csv, train, write_triplets, ShortcutConfig,
    TrainConfig, TripletSet, DEFAULT_TAU,
};
use crate::error::{Error, Result};
use crate::eval::evaluate_runs;
use crate::perplexity::ppl_summary;
use crate::retrieval::{search, Bm25Params, DenseScorer, Lexical, LexicalIndex, LexicalModel, Retriever, Similarity};
use crate::spectrum::{compare_spectra, embedding_spectrum};
use crate::store::{
    load_corpus, load_embeddings, load_generated_texts, load_logprobs, load_qrels, load_queries, load_run,
    write_corpus, write_embeddings, write_qrels, write_run, Corpus, EmbeddingSet, Source,
};
use crate::theorem::{random_instances, InstanceReport, KlMode, Sampler, TheoremInstance};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "sourcebias", version, about = "Source-bias measurement for mixed human/LLM corpora")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add cleaned LLM rewrites to a human corpus and transfer judgments.
    Build(BuildArgs),
    /// Lexical and embedding similarity between generated docs and their origins.
    Stats(StatsArgs),
    /// Build and store a lexical index.
    Index(IndexArgs),
    /// Rank a corpus for each query and write a TREC run.
    Search(SearchArgs),
    /// Per-source NDCG/MAP and relative differences for a run.
    Evaluate(EvaluateArgs),
    /// Singular-value spectra of human and generated embeddings.
    Spectrum(SpectrumArgs),
    /// Perplexity distributions from token log-probabilities.
    Ppl(PplArgs),
    /// Train a debiased scoring head.
    TrainDebias(TrainArgs),
    /// Train and evaluate one head per debias weight.
    Sweep(SweepArgs),
    /// Check the perplexity theorem on enumerated instances.
    VerifyTheorem(TheoremArgs),
}

#[derive(Args, Debug, Serialize)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSONL of raw rewrites keyed by origin id.
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    model_tag: String,
    /// Literal chatter prefix to strip; repeatable. Replaces the defaults.
    #[arg(long = "cleanup-pattern")]
    cleanup_patterns: Vec<String>,
    #[arg(long)]
    prompt_id: Option<String>,
    #[arg(long)]
    out_corpus: PathBuf,
    #[arg(long)]
    out_qrels: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value = "stats.json")]
    output: PathBuf,
    /// Per-pair CSV.
    #[arg(long)]
    pairs_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "index.json")]
    output: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Bm25,
    Tfidf,
    Dense,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum SimilarityArg {
    Cosine,
    Dot,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    queries: PathBuf,
    /// Corpus to index on the fly (lexical) or to rank (dense).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Prebuilt lexical index, instead of --corpus.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    #[arg(long)]
    doc_embeddings: Option<PathBuf>,
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cosine")]
    similarity: SimilarityArg,
    #[arg(long)]
    tag: Option<String>,
    #[arg(long, default_value = "run.txt")]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    cutoffs: Vec<usize>,
    #[arg(long, default_value = "report.json")]
    output: PathBuf,
    /// Also print the table (0-100 scale) to stderr.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Source labels for the embedded documents.
    #[arg(long)]
    corpus: PathBuf,
    /// Subtract the per-corpus mean before decomposing.
    #[arg(long)]
    center: bool,
    #[arg(long, default_value = "spectrum.json")]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PplArgs {
    #[arg(long)]
    logprobs: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "ppl.json")]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
struct TrainParams {
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 200)]
    batch_size: usize,
    /// Projection rank (default: embedding dim).
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
}

impl TrainParams {
    fn config(&self, alpha: f64, seed: u64, dim: usize) -> TrainConfig {
        TrainConfig {
            alpha,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            rank: self.rank.unwrap_or(dim),
            tau: self.tau,
            seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    triplets: PathBuf,
    /// Query and document vectors; repeatable, files are merged.
    #[arg(long, required = true)]
    embeddings: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.0, conflicts_with = "alpha_grid")]
    alpha: f64,
    /// Train one head per value; files are named `<out stem>.alpha-<α>.json`.
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[command(flatten)]
    params: TrainParams,
    #[arg(long, default_value = "head.json")]
    out: PathBuf,
    /// Per-epoch losses.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Use the seeded synthetic shortcut dataset instead of files.
    #[arg(long, conflicts_with_all = ["triplets", "eval_triplets", "embeddings"])]
    synthetic: bool,
    /// Synthetic queries without the shortcut component.
    #[arg(long, requires = "synthetic")]
    unshifted_queries: bool,
    /// Write the synthetic dataset (triplets and embeddings) to this directory.
    #[arg(long, requires = "synthetic")]
    write_dataset: Option<PathBuf>,
    #[arg(long)]
    triplets: Option<PathBuf>,
    #[arg(long)]
    eval_triplets: Option<PathBuf>,
    /// Repeatable; files are merged.
    #[arg(long)]
    embeddings: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.0001,0.001,0.01,0.1,1")]
    alpha_grid: Vec<f64>,
    #[command(flatten)]
    params: TrainParams,
    #[arg(long, default_value = "sweep.json")]
    output: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KlModeArg {
    PerPrefix,
    PrefixAveraged,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum SamplerArg {
    Structured,
    Dirichlet,
}

#[derive(Args, Debug, Serialize)]
struct TheoremArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Alphabet sizes to cycle through.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    alphabet: Vec<usize>,
    /// Sequence lengths to cycle through.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    length: Vec<usize>,
    #[arg(long, value_enum, default_value = "per-prefix")]
    kl_mode: KlModeArg,
    #[arg(long, value_enum, default_value = "structured")]
    sampler: SamplerArg,
    /// Verify stored instances (JSON array) instead of sampling.
    #[arg(long)]
    instance_file: Option<PathBuf>,
    /// Store the sampled instances for later regression runs.
    #[arg(long)]
    save_instances: Option<PathBuf>,
    #[arg(long, default_value = "theorem.json")]
    report: PathBuf,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    parameters: &'a P,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[&Path]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

struct Ctx {
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn manifest<P: Serialize>(
        &self,
        subcommand: &str,
        params: &P,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Result<()> {
        let primary = outputs.first().expect("at least one output");
        let m = Manifest {
            tool: "sourcebias",
            version: VERSION,
            subcommand,
            seed: self.seed,
            parameters: params,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        };
        write_json(&manifest_path(primary), &m)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 for input errors and usage, 2 for
/// internal numerical failures.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(&ctx, cli.command)),
        Err(e) => Err(Error::invalid(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

fn run(ctx: &Ctx, command: Command) -> Result<()> {
    match command {
        Command::Build(a) => cmd_build(ctx, &a),
        Command::Stats(a) => cmd_stats(ctx, &a),
        Command::Index(a) => cmd_index(ctx, &a),
        Command::Search(a) => cmd_search(ctx, &a),
        Command::Evaluate(a) => cmd_evaluate(ctx, &a),
        Command::Spectrum(a) => cmd_spectrum(ctx, &a),
        Command::Ppl(a) => cmd_ppl(ctx, &a),
        Command::TrainDebias(a) => cmd_train(ctx, &a),
        Command::Sweep(a) => cmd_sweep(ctx, &a),
        Command::VerifyTheorem(a) => cmd_theorem(ctx, &a),
    }
}

fn cmd_build(ctx: &Ctx, a: &BuildArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let generated = load_generated_texts(&a.generated)?;
    let qrels = load_qrels(&a.qrels)?;
    let mut cfg = BuildConfig::new(a.model_tag.clone());
    if !a.cleanup_patterns.is_empty() {
        cfg.cleanup_patterns = a.cleanup_patterns.clone();
    }
    cfg.prompt_id = a.prompt_id.clone();
    let (mixed, mixed_qrels) = build_benchmark(&corpus, &generated, &qrels, &cfg)?;
    write_corpus(&mixed, &a.out_corpus)?;
    write_qrels(&mixed_qrels, &a.out_qrels)?;
    ctx.note(format!(
        "built {} human + {} generated docs, {} judgments",
        mixed.count(Source::Human),
        mixed.count(Source::Generated),
        mixed_qrels.len()
    ));
    #[derive(Serialize)]
    struct P<'a> {
        args: &'a BuildArgs,
        effective_cleanup_patterns: &'a [String],
        default_cleanup_patterns: [&'static str; 3],
    }
    ctx.manifest(
        "build",
        &P {
            args: a,
            effective_cleanup_patterns: &cfg.cleanup_patterns,
            default_cleanup_patterns: DEFAULT_CLEANUP_PATTERNS,
        },
        &[&a.corpus, &a.generated, &a.qrels],
        &[&a.out_corpus, &a.out_qrels],
    )
}

fn cmd_stats(ctx: &Ctx, a: &StatsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let emb = a.embeddings.as_ref().map(load_embeddings).transpose()?;
    let stats = corpus_stats(&corpus, emb.as_ref())?;
    write_json(&a.output, &stats)?;
    let mut outputs = vec![a.output.as_path()];
    if let Some(p) = &a.pairs_csv {
        write_text(p, &stats.pairs_csv())?;
        outputs.push(p);
    }
    ctx.note(format!(
        "{} pairs, mean jaccard {:.4}",
        stats.pairs.len(),
        stats.mean_jaccard
    ));
    let mut inputs = vec![a.corpus.as_path()];
    inputs.extend(a.embeddings.as_deref());
    ctx.manifest("stats", a, &inputs, &outputs)
}

fn cmd_index(ctx: &Ctx, a: &IndexArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let index = LexicalIndex::build(&corpus)?;
    let text = serde_json::to_string(&index).map_err(|e| Error::invalid(e.to_string()))?;
    write_text(&a.output, &text)?;
    ctx.note(format!(
        "indexed {} docs, {} terms",
        index.doc_count(),
        index.vocabulary_size()
    ));
    ctx.manifest("index", a, &[&a.corpus], &[&a.output])
}

fn load_index(path: &Path) -> Result<LexicalIndex> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, 1, e.to_string()))
}

fn cmd_search(ctx: &Ctx, a: &SearchArgs) -> Result<()> {
    let queries = load_queries(&a.queries)?;
    let mut inputs: Vec<&Path> = vec![&a.queries];
    let runs = match a.model {
        ModelArg::Bm25 | ModelArg::Tfidf => {
            let index = match (&a.index, &a.corpus) {
                (Some(p), _) => {
                    inputs.push(p);
                    load_index(p)?
                }
                (None, Some(c)) => {
                    inputs.push(c);
                    LexicalIndex::build(&load_corpus(c)?)?
                }
                (None, None) => return Err(Error::invalid("lexical search needs --index or --corpus")),
            };
            let model = if a.model == ModelArg::Bm25 {
                let p = Bm25Params { k1: a.k1, b: a.b };
                p.validate()?;
                LexicalModel::Bm25(p)
            } else {
                LexicalModel::TfIdf
            };
            let r = Lexical { index: &index, model };
            search(&r as &dyn Retriever, &queries, a.top_k)?
        }
        ModelArg::Dense => {
            let (Some(c), Some(de), Some(qe)) = (&a.corpus, &a.doc_embeddings, &a.query_embeddings) else {
                return Err(Error::invalid(
                    "dense search needs --corpus, --doc-embeddings and --query-embeddings",
                ));
            };
            inputs.extend([c.as_path(), de.as_path(), qe.as_path()]);
            let corpus = load_corpus(c)?;
            let sim = match a.similarity {
                SimilarityArg::Cosine => Similarity::Cosine,
                SimilarityArg::Dot => Similarity::Dot,
            };
            let scorer = DenseScorer::for_corpus(&corpus, &load_embeddings(de)?, load_embeddings(qe)?, sim)?;
            search(&scorer, &queries, a.top_k)?
        }
    };
    let tag = a.tag.clone().unwrap_or_else(|| format!("{:?}", a.model).to_lowercase());
    write_run(&runs, &a.output, &tag)?;
    ctx.note(format!("ranked {} queries", runs.len()));
    ctx.manifest("search", a, &inputs, &[&a.output])
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let runs = load_run(&a.run)?;
    let qrels = load_qrels(&a.qrels)?;
    let corpus = load_corpus(&a.corpus)?;
    let report = evaluate_runs(&runs, &qrels, &corpus, &a.cutoffs)?;
    write_json(&a.output, &report)?;
    if !report.missing_run_queries.is_empty() {
        ctx.note(format!(
            "{} judged queries have no ranking and score 0",
            report.missing_run_queries.len()
        ));
    }
    if a.table && !ctx.quiet {
        eprint!("{}", report.render());
    }
    ctx.manifest("evaluate", a, &[&a.run, &a.qrels, &a.corpus], &[&a.output])
}

fn split_embeddings(emb: &EmbeddingSet, corpus: &Corpus) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let mut h = EmbeddingSet::new(emb.dim())?;
    let mut g = EmbeddingSet::new(emb.dim())?;
    for doc in corpus.iter() {
        let v = emb.get(&doc.id).ok_or_else(|| Error::UnknownId(doc.id.clone()))?;
        match doc.source {
            Source::Human => h.insert(doc.id.clone(), v.to_vec())?,
            Source::Generated => g.insert(doc.id.clone(), v.to_vec())?,
        }
    }
    if h.is_empty() || g.is_empty() {
        return Err(Error::invalid("both sources need at least one embedded document"));
    }
    Ok((h, g))
}

fn cmd_spectrum(ctx: &Ctx, a: &SpectrumArgs) -> Result<()> {
    let emb = load_embeddings(&a.embeddings)?;
    let corpus = load_corpus(&a.corpus)?;
    let (h, g) = split_embeddings(&emb, &corpus)?;
    let human = embedding_spectrum(&h, a.center)?;
    let generated = embedding_spectrum(&g, a.center)?;
    let comparison = compare_spectra(&human, &generated)?;
    #[derive(Serialize)]
    struct Out<'a> {
        human: &'a crate::spectrum::Spectrum,
        generated: &'a crate::spectrum::Spectrum,
        comparison: &'a crate::spectrum::SpectrumComparison,
    }
    write_json(
        &a.output,
        &Out {
            human: &human,
            generated: &generated,
            comparison: &comparison,
        },
    )?;
    ctx.note(format!("head/tail summary: {:?}", comparison.summary));
    ctx.manifest("spectrum", a, &[&a.embeddings, &a.corpus], &[&a.output])
}

fn cmd_ppl(ctx: &Ctx, a: &PplArgs) -> Result<()> {
    let all = load_logprobs(&a.logprobs)?;
    let corpus = load_corpus(&a.corpus)?;
    let (mut h, mut g) = (Vec::new(), Vec::new());
    for t in all {
        match corpus.get(&t.doc_id).map(|d| d.source) {
            Some(Source::Human) => h.push(t),
            Some(Source::Generated) => g.push(t),
            None => return Err(Error::UnknownId(t.doc_id)),
        }
    }
    let summary = ppl_summary(&h, &g)?;
    write_json(&a.output, &summary)?;
    ctx.note(format!("mean difference (generated - human): {:.4}", summary.mean_difference));
    ctx.manifest("ppl", a, &[&a.logprobs, &a.corpus], &[&a.output])
}

fn load_merged_embeddings(paths: &[PathBuf]) -> Result<EmbeddingSet> {
    let mut sets = paths.iter().map(load_embeddings);
    let mut merged = sets.next().ok_or_else(|| Error::invalid("no embedding files given"))??;
    for set in sets {
        let set = set?;
        if set.dim() != merged.dim() {
            return Err(Error::invalid(format!(
                "embedding files disagree on dimension: {} vs {}",
                merged.dim(),
                set.dim()
            )));
        }
        for (id, v) in set.iter() {
            merged.insert(id, v.to_vec())?;
        }
    }
    Ok(merged)
}

fn load_triplet_set(triplets: &Path, embeddings: &EmbeddingSet) -> Result<TripletSet> {
    TripletSet::new(load_triplets(triplets)?, embeddings.clone())
}

fn grid_path(out: &Path, alpha: f64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.alpha-{alpha}.json"))
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let emb = load_merged_embeddings(&a.embeddings)?;
    let set = load_triplet_set(&a.triplets, &emb)?;
    let grid = a.alpha_grid.clone().unwrap_or_else(|| vec![a.alpha]);
    let mut outputs = Vec::new();
    let mut logs = Vec::new();
    for &alpha in &grid {
        let cfg = a.params.config(alpha, ctx.seed, set.dim());
        let (head, log) = train(&set, &cfg)?;
        let path = if a.alpha_grid.is_some() { grid_path(&a.out, alpha) } else { a.out.clone() };
        head.save(&path)?;
        let last = log.epochs.last().expect("epochs >= 1");
        ctx.note(format!(
            "alpha {alpha}: rank {:.6} debias {:.6} total {:.6}",
            last.rank, last.debias, last.total
        ));
        outputs.push(path);
        logs.push((alpha, log));
    }
    if let Some(p) = &a.log {
        #[derive(Serialize)]
        struct Entry<'a> {
            alpha: f64,
            epochs: &'a [crate::debias::EpochLog],
        }
        let entries: Vec<Entry> = logs
            .iter()
            .map(|(alpha, l)| Entry {
                alpha: *alpha,
                epochs: &l.epochs,
            })
            .collect();
        write_json(p, &entries)?;
        outputs.push(p.clone());
    }
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let mut inputs = vec![a.triplets.as_path()];
    inputs.extend(a.embeddings.iter().map(PathBuf::as_path));
    ctx.manifest("train-debias", a, &inputs, &out_refs)
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut extra_outputs: Vec<PathBuf> = Vec::new();
    let (train_set, eval_set) = if a.synthetic {
        let cfg = ShortcutConfig {
            seed: ctx.seed,
            query_shortcut: if a.unshifted_queries { 0.0 } else { ShortcutConfig::default().query_shortcut },
            ..ShortcutConfig::default()
        };
        let data = shortcut_dataset(&cfg)?;
        if let Some(dir) = &a.write_dataset {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let mut all = data.train.embeddings().clone();
            for (id, v) in data.test.embeddings().iter() {
                all.insert(id, v.to_vec())?;
            }
            let files = [dir.join("train_triplets.tsv"), dir.join("test_triplets.tsv"), dir.join("embeddings.jsonl")];
            write_triplets(data.train.triplets(), &files[0])?;
            write_triplets(data.test.triplets(), &files[1])?;
            write_embeddings(&all, &files[2])?;
            extra_outputs.extend(files);
        }
        (data.train, data.test)
    } else {
        let (Some(t), Some(e)) = (&a.triplets, &a.eval_triplets) else {
            return Err(Error::invalid(
                "sweep needs --synthetic or all of --triplets, --eval-triplets, --embeddings",
            ));
        };
        inputs.extend([t.clone(), e.clone()]);
        inputs.extend(a.embeddings.iter().cloned());
        let embeddings = load_merged_embeddings(&a.embeddings)?;
        (load_triplet_set(t, &embeddings)?, load_triplet_set(e, &embeddings)?)
    };
    let cfg = a.params.config(0.0, ctx.seed, train_set.dim());
    let rows = alpha_sweep(&train_set, &eval_set, &cfg, &a.alpha_grid)?;
    let alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta_ndcg1).collect();
    #[derive(Serialize)]
    struct Out<'a> {
        rows: &'a [crate::debias::SweepRow],
        spearman_alpha_delta_ndcg1: Option<f64>,
    }
    let spearman = spearman(&alphas, &deltas);
    write_json(
        &a.output,
        &Out {
            rows: &rows,
            spearman_alpha_delta_ndcg1: spearman,
        },
    )?;
    let mut outputs = vec![a.output.clone()];
    if let Some(p) = &a.csv {
        write_text(p, &sweep_csv(&rows))?;
        outputs.push(p.clone());
    }
    outputs.extend(extra_outputs);
    for r in &rows {
        ctx.note(format!("alpha {}: delta NDCG@1 {:.1}", r.alpha, r.delta_ndcg1));
    }
    let in_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    ctx.manifest("sweep", a, &in_refs, &out_refs)
}

fn cmd_theorem(ctx: &Ctx, a: &TheoremArgs) -> Result<()> {
    let mode = match a.kl_mode {
        KlModeArg::PerPrefix => KlMode::PerPrefix,
        KlModeArg::PrefixAveraged => KlMode::PrefixAveraged,
    };
    let sampler = match a.sampler {
        SamplerArg::Structured => Sampler::Structured,
        SamplerArg::Dirichlet => Sampler::Dirichlet,
    };
    let mut inputs: Vec<&Path> = Vec::new();
    let instances: Vec<TheoremInstance> = match &a.instance_file {
        Some(p) => {
            inputs.push(p);
            serde_json::from_str(&read_text(p)?).map_err(|e| Error::parse(p, 1, e.to_string()))?
        }
        None => random_instances(ctx.seed, a.instances, &a.alphabet, &a.length, sampler, mode)?,
    };
    let reports: Vec<InstanceReport> = instances
        .iter()
        .map(|i| InstanceReport::build(i, mode))
        .collect::<Result<_>>()?;
    let passed = reports.iter().filter(|r| r.all_ok()).count();
    #[derive(Serialize)]
    struct Out<'a> {
        kl_mode: KlMode,
        instances: usize,
        passed: usize,
        all_pass: bool,
        reports: &'a [InstanceReport],
    }
    write_json(
        &a.report,
        &Out {
            kl_mode: mode,
            instances: reports.len(),
            passed,
            all_pass: passed == reports.len(),
            reports: &reports,
        },
    )?;
    let mut outputs = vec![a.report.as_path()];
    if let Some(p) = &a.save_instances {
        write_json(p, &instances)?;
        outputs.push(p);
    }
    ctx.note(format!("{passed}/{} instances verified", reports.len()));
    ctx.manifest("verify-theorem", a, &inputs, &outputs)
}
