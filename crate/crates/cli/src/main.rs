//! `arm`: build indexes, answer single questions, run evaluations and
//! generate the planted-bridge benchmark.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use arm_core::baselines::{Dense, OverlapReranker};
use arm_core::config::Config;
use arm_core::corpus::{load_corpus, save_corpus, Corpus};
use arm_core::embedding::{EmbeddingProvider, VectorStore};
use arm_core::eval::{load_questions, questions_to_jsonl, Harness, Method, Question};
use arm_core::index::Index;
use arm_core::pipeline::Engine;
use arm_core::synth::{planted_bridge, DEFAULT_THEMES};

#[derive(Parser)]
#[command(name = "arm", version, about = "Retrieval over tables and passages with aligned drafts")]
struct Cli {
    /// TOML config; every section is optional.
    #[arg(long, global = true, env = "ARM_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index snapshots.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Retrieve objects for one question.
    Retrieve(RetrieveArgs),
    /// Batch evaluation.
    Eval {
        #[command(subcommand)]
        action: EvalAction,
    },
    /// Synthetic benchmark data.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    /// Chunk a JSONL corpus and write an index snapshot.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rows or sentences per chunk; defaults to the config value.
        #[arg(long)]
        chunk_units: Option<usize>,
    },
}

#[derive(Args)]
struct Source {
    /// Index snapshot; defaults to the config `index`.
    #[arg(long)]
    index: Option<PathBuf>,
    /// JSONL corpus indexed on the fly when no snapshot is given.
    #[arg(long, conflicts_with = "index")]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    question: String,
    /// Keywords to script the mock keyword step, in question order.
    #[arg(long = "keyword")]
    keywords: Vec<String>,
    #[arg(long, default_value = "arm")]
    method: Method,
    /// Number of objects returned.
    #[arg(long)]
    top_k: Option<usize>,
    /// Write the retrieval trace (JSONL) here; ARM methods only.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalAction {
    /// Evaluate methods on a question file and write JSON and CSV reports.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        questions: PathBuf,
        /// Comma-separated method names.
        #[arg(long = "method", value_delimiter = ',', default_value = "dense,arm")]
        methods: Vec<Method>,
        /// Directory for report.json and report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Questions evaluated in parallel; defaults to the config value.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Subcommand)]
enum BenchAction {
    /// Write corpus.jsonl, questions.jsonl and a matching arm.toml.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THEMES)]
        themes: usize,
    },
}

/// Settings for the generated benchmark: wide hash vectors keep chance
/// collisions rare, and one row per chunk keeps header matches sharp.
const BENCH_CONFIG: &str = "corpus = \"corpus.jsonl\"\nchunk_units = 1\n\n[provider]\nkind = \"hash\"\ndimension = 16384\n";

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Index {
            action: IndexAction::Build { corpus, out, chunk_units },
        } => build_index(&config, &corpus, &out, chunk_units),
        Command::Retrieve(args) => retrieve(&config, args),
        Command::Eval {
            action: EvalAction::Run {
                source,
                questions,
                methods,
                out,
                jobs,
            },
        } => eval_run(&config, &source, &questions, &methods, out.as_deref(), jobs),
        Command::Bench {
            action: BenchAction::Generate { out, themes },
        } => bench_generate(&out, themes, cli.seed.unwrap_or(7)),
    }
}

fn build_index(config: &Config, corpus: &Path, out: &Path, chunk_units: Option<usize>) -> Result<()> {
    let units = chunk_units.unwrap_or(config.chunk_units);
    let corpus = load_corpus(corpus, units).with_context(|| format!("loading corpus {}", corpus.display()))?;
    let index = Index::build(corpus);
    index.save(out)?;
    println!(
        "objects: {}\nchunks: {}\nngrams: {}",
        index.corpus.objects().len(),
        index.corpus.chunks().len(),
        index.trie.len()
    );
    Ok(())
}

fn open_index(config: &Config, source: &Source) -> Result<Index> {
    if let Some(path) = &source.index {
        return Ok(Index::load(path)?);
    }
    if let Some(path) = &source.corpus {
        return corpus_index(path, config.chunk_units);
    }
    match (&config.index, &config.corpus) {
        (Some(p), _) => Ok(Index::load(&config.resolve(p))?),
        (None, Some(p)) => corpus_index(&config.resolve(p), config.chunk_units),
        (None, None) => bail!("no index: pass --index or --corpus, or set one in the config"),
    }
}

fn corpus_index(path: &Path, chunk_units: usize) -> Result<Index> {
    let corpus: Corpus =
        load_corpus(path, chunk_units).with_context(|| format!("loading corpus {}", path.display()))?;
    Ok(Index::build(corpus))
}

/// Everything a run needs, owned in one place so that the engine can borrow it.
struct Loaded {
    config: Config,
    index: Index,
    provider: Box<dyn EmbeddingProvider>,
    store: VectorStore,
}

impl Loaded {
    fn new(config: &Config, source: &Source) -> Result<Self> {
        let index = open_index(config, source)?;
        let provider = config.provider()?;
        let store = config.vector_store(provider.as_ref(), &index.corpus)?;
        Ok(Self {
            config: config.clone(),
            index,
            provider,
            store,
        })
    }

    fn engine(&self) -> Result<Engine<'_>> {
        let c = &self.config;
        Ok(Engine::new(
            &self.index,
            &self.store,
            self.provider.as_ref(),
            c.arm.clone(),
            c.bm25,
            c.prompts()?,
        ))
    }

    fn harness<'a>(&'a self, engine: &'a Engine<'a>) -> Harness<'a> {
        Harness {
            engine,
            dense: Dense {
                corpus: &self.index.corpus,
                store: &self.store,
                provider: self.provider.as_ref(),
            },
            reranker: &OverlapReranker,
            scorer: self.config.scorer,
            baseline: self.config.baseline,
        }
    }
}

fn retrieve(config: &Config, args: RetrieveArgs) -> Result<()> {
    let mut config = config.clone();
    if let Some(k) = args.top_k {
        config.arm.final_k = k;
        config.baseline.top_k = k;
        config.validate()?;
    }
    let loaded = Loaded::new(&config, &args.source)?;
    let engine = loaded.engine()?;
    let harness = loaded.harness(&engine);
    let question = Question {
        id: "q".into(),
        question: args.question,
        gold: Vec::new(),
        keywords: args.keywords,
    };
    let is_arm = matches!(args.method, Method::ArmIa | Method::ArmIaSa | Method::Arm);
    if !is_arm {
        if args.trace.is_some() {
            bail!("--trace is only available for ARM methods");
        }
        let r = harness.retrieve(args.method, &question)?;
        for (rank, id) in r.retrieved.iter().enumerate() {
            println!("{:>3}  {id}", rank + 1);
        }
        println!("llm calls: {}", r.llm_calls);
        return Ok(());
    }
    let mut scorer = config.scorer.build(&engine.prompts, &question);
    let out = harness.run_arm(&mut scorer, &question)?;
    if let Some(path) = &args.trace {
        fs::write(path, out.trace.to_json_line() + "\n")
            .with_context(|| format!("writing trace {}", path.display()))?;
    }
    match args.method {
        Method::Arm => {
            for (rank, id) in out.final_ids.iter().enumerate() {
                let conf = out
                    .confidences
                    .rows
                    .iter()
                    .find(|r| &r.object_id == id)
                    .map_or(0.0, |r| r.confidence);
                println!("{:>3}  {id}  {conf:.4}", rank + 1);
            }
        }
        m => {
            let ids = if m == Method::ArmIa {
                &out.stages.alignment_only
            } else {
                &out.stages.with_structure
            };
            for (rank, id) in ids.iter().enumerate() {
                println!("{:>3}  {id}", rank + 1);
            }
        }
    }
    println!("llm calls: {}", out.llm_calls);
    Ok(())
}

fn eval_run(
    config: &Config,
    source: &Source,
    questions: &Path,
    methods: &[Method],
    out: Option<&Path>,
    jobs: Option<usize>,
) -> Result<()> {
    let loaded = Loaded::new(config, source)?;
    let engine = loaded.engine()?;
    let harness = loaded.harness(&engine);
    let questions = load_questions(questions)?;
    let report = harness.run(methods, &questions, jobs.unwrap_or(config.jobs))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, body) in [("report.json", report.to_json()), ("report.csv", report.to_csv())] {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    print!("{}", report.table());
    Ok(())
}

fn bench_generate(out: &Path, themes: usize, seed: u64) -> Result<()> {
    if themes == 0 {
        bail!("--themes must be at least 1");
    }
    let bench = planted_bridge(themes, seed);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let corpus = Corpus::new(bench.objects, 1)?;
    save_corpus(&corpus, &out.join("corpus.jsonl"))?;
    let questions = out.join("questions.jsonl");
    fs::write(&questions, questions_to_jsonl(&bench.questions))
        .with_context(|| format!("writing {}", questions.display()))?;
    let config = out.join("arm.toml");
    fs::write(&config, BENCH_CONFIG).with_context(|| format!("writing {}", config.display()))?;
    println!(
        "objects: {}\nquestions: {}",
        corpus.objects().len(),
        bench.questions.len()
    );
    Ok(())
}
