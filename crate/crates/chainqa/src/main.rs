use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chainqa::config::{PipelineConfig, PlanChoice};
use chainqa::formats::{dataset, tables, triples};
use chainqa::pipeline::{self, Clients, PipelineError, RunProvenance, SolverChoice};
use chainqa_core::eval::DEFAULT_RAG_CAP;
use chainqa_core::synth::{self, SynthParams};
use clap::{Args, Parser, Subcommand};

/// Multi-hop question generation from knowledge graphs, with evaluation and
/// shortcut analysis. API keys are read from the environment variables named
/// in the config, never from flags.
#[derive(Parser)]
#[command(name = "chainqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine, verify, render, filter and split questions.
    Generate(GenerateArgs),
    /// Answer a dataset and score it.
    Eval(EvalArgs),
    /// Similarity records, accuracy-vs-similarity curve and histogram.
    Analyze(AnalyzeArgs),
    /// Question counts per difficulty and depth.
    Stats(StatsArgs),
    /// Cut every question down to a given depth.
    Truncate(TruncateArgs),
    /// Write the injected candidate lists and prompts for rag evaluation.
    InjectRag(InjectRagArgs),
    /// Write a seeded synthetic graph, seed list and starter config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = absolute(o);
        }
        if cfg.workers > 0 {
            // only fails if a pool already exists, which is fine
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
        }
        Ok(cfg)
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    walks: Option<usize>,
    /// standard, all or custom.
    #[arg(long)]
    plan: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Dataset to answer; defaults to questions.jsonl in the output directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// direct, icl or rag.
    #[arg(long, default_value = "direct")]
    mode: String,
    /// oracle, fact-only, similarity, model or constant:TEXT.
    #[arg(long, default_value = "model")]
    solver: String,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Eval results; defaults to results-direct.jsonl in the output directory.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Also write the table here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TruncateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    depth: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct InjectRagArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    entities: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn log(msg: &str) {
    eprintln!("chainqa: {msg}");
}

fn generate(a: GenerateArgs) -> Result<(), PipelineError> {
    let mut cfg = a.cfg.load()?;
    if let Some(n) = a.n_max {
        cfg.mining.n_max = n;
    }
    if let Some(w) = a.walks {
        cfg.mining.walks_per_seed = w;
    }
    if let Some(p) = &a.plan {
        cfg.split.plan = match p.as_str() {
            "standard" => PlanChoice::Standard,
            "all" => PlanChoice::All,
            "custom" => PlanChoice::Custom,
            other => return Err(PipelineError::Config(format!("unknown plan {other:?}"))),
        };
    }
    cfg.validate()?;
    let graph = pipeline::load_graph(&cfg)?;
    log(&format!("graph: {} entities, {} triples", graph.kg.entity_count(), graph.kg.triple_count()));
    let seeds = pipeline::read_seeds(&cfg)?;
    let clients = Clients::from_config(&cfg)?;
    let out = pipeline::generate(&cfg, &graph, &seeds, &clients)?;
    for s in &out.stages {
        log(&format!("{}: {}", s.stage, s.count));
    }
    pipeline::write_generate(&cfg, &out)?;
    log(&format!("wrote {}", cfg.resolve(&cfg.output_dir).display()));
    Ok(())
}

fn dataset_path(cfg: &PipelineConfig, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.output_path("questions.jsonl"))
}

fn eval(a: EvalArgs) -> Result<(), PipelineError> {
    let mut cfg = a.cfg.load()?;
    if let Some(n) = a.samples {
        cfg.eval.samples = n;
    }
    cfg.validate()?;
    let choice: SolverChoice = a.solver.parse().map_err(PipelineError::Config)?;
    let mode = pipeline::prompt_mode(&a.mode, &cfg)?;
    let questions = pipeline::read_questions(&dataset_path(&cfg, &a.dataset))?;
    let graph = pipeline::load_graph(&cfg)?;
    let (results, table, model) = pipeline::run_solver(&cfg, &choice, &graph.kg, &questions, &mode)?;
    if table.failures > 0 {
        log(&format!("warning: {} questions failed and are excluded from accuracy", table.failures));
    }
    let name = mode.name();
    dataset::write_jsonl(&cfg.output_path(&format!("results-{name}.jsonl")), &results)?;
    let tsv = tables::accuracy_tsv(&table);
    dataset::write_text(&cfg.output_path(&format!("accuracy-{name}.tsv")), &tsv)?;
    let mut prov = RunProvenance::new("eval", &cfg);
    prov.model = Some(model);
    prov.kg_snapshot = Some(graph.snapshot);
    dataset::write_json(&cfg.output_path(&format!("provenance-eval-{name}.json")), &prov)?;
    print!("{tsv}");
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), PipelineError> {
    let cfg = a.cfg.load()?;
    let questions = pipeline::read_questions(&dataset_path(&cfg, &a.dataset))?;
    let results_path = a.results.clone().unwrap_or_else(|| cfg.output_path("results-direct.jsonl"));
    let results = dataset::read_jsonl(&results_path)?;
    let embedder = pipeline::embedder(&cfg)?;
    let out = pipeline::analyze(&cfg, &questions, &results, embedder.as_ref())?;
    dataset::write_jsonl(&cfg.output_path("similarity.jsonl"), &out.records)?;
    dataset::write_text(&cfg.output_path("curve.tsv"), &tables::curve_tsv(&out.curve))?;
    dataset::write_text(&cfg.output_path("histogram.tsv"), &tables::histogram_tsv(&out.histogram))?;
    let mut prov = RunProvenance::new("analyze", &cfg);
    prov.embedder = Some(embedder.id().to_string());
    dataset::write_json(&cfg.output_path("provenance-analyze.json"), &prov)?;
    log(&format!("{} records, {} curve points", out.records.len(), out.curve.len()));
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), PipelineError> {
    let questions = pipeline::read_questions(&a.dataset)?;
    let tsv = tables::stats_tsv(&tables::bucket_counts(&questions));
    if let Some(p) = &a.output {
        dataset::write_text(p, &tsv)?;
    }
    print!("{tsv}");
    Ok(())
}

fn truncate(a: TruncateArgs) -> Result<(), PipelineError> {
    let questions = pipeline::read_questions(&a.dataset)?;
    let (out, skipped) = pipeline::truncate_all(&questions, a.depth)?;
    dataset::write_jsonl(&a.output, &out)?;
    log(&format!("{} questions at depth {}, {} skipped", out.len(), a.depth, skipped));
    Ok(())
}

fn inject_rag(a: InjectRagArgs) -> Result<(), PipelineError> {
    let cfg = a.cfg.load()?;
    let questions = pipeline::read_questions(&dataset_path(&cfg, &a.dataset))?;
    let graph = pipeline::load_graph(&cfg)?;
    let exemplars = pipeline::load_exemplars(&cfg)?;
    let cap = a.cap.unwrap_or(cfg.eval.rag_cap);
    if cap == 0 {
        return Err(PipelineError::Config(format!("cap must be at least 1 (default {DEFAULT_RAG_CAP})")));
    }
    let records = pipeline::inject_rag(&graph.kg, &questions, cap, cfg.seed, &exemplars)?;
    let path = a.output.clone().unwrap_or_else(|| cfg.output_path("rag.jsonl"));
    dataset::write_jsonl(&path, &records)?;
    log(&format!("wrote {} rag prompts to {}", records.len(), path.display()));
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), PipelineError> {
    let (raw, seeds) = synth::generate(&SynthParams::new(a.entities, a.seed));
    dataset::write_text(&a.out.join("kg.tsv"), &triples::dump_tsv3(&raw))?;
    dataset::write_text(&a.out.join("seeds.txt"), &(seeds.join("\n") + "\n"))?;
    let cfg = PipelineConfig {
        seed: a.seed,
        kg: chainqa::config::KgConfig { type_predicate: synth::TYPE_PREDICATE.into(), ..Default::default() },
        split: chainqa::config::SplitConfig { plan: PlanChoice::All, buckets: Vec::new() },
        ..Default::default()
    };
    dataset::write_text(&a.out.join("config.toml"), &cfg.to_toml())?;
    log(&format!("{} triples, {} seeds in {}", raw.len(), seeds.len(), a.out.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::Stats(a) => stats(a),
        Command::Truncate(a) => truncate(a),
        Command::InjectRag(a) => inject_rag(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
