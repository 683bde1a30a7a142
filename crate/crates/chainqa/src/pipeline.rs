//! End-to-end stages behind the CLI subcommands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use chainqa_core::analyze::{self, AnalyzeError, CurvePoint, Histogram, SimilarityRecord};
use chainqa_core::chain::{self, ChainError, ChainRecord, MiningParams, Viability};
use chainqa_core::client::{ChatClient, ChatError, EmbedError, EmbeddingProvider};
use chainqa_core::eval::{
    self, AccuracyTable, EvalError, EvalResult, EvalSettings, ExemplarSet, FactOnlySolver, OracleSolver, PromptMode,
    SimilaritySolver, Solver,
};
use chainqa_core::filters::{self, FilterError, FilterOutcome, Manifest, Provenance};
use chainqa_core::kg::KnowledgeGraph;
use chainqa_core::render::{self, ChatVerbalizer, RenderConfig, RenderError, RenderedQuestion, TemplateVerbalizer, Verbalizer};
use chainqa_core::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, EmbedderKind, PipelineConfig, VerbalizerChoice};
use crate::formats::dataset::{self, RecordError};
use crate::formats::tables;
use crate::formats::triples::{self, ParseError};
use crate::llm::cache::CachedChat;
use crate::llm::embed::TrigramEmbedder;
use crate::llm::http::{HttpChatClient, HttpEmbedder, HttpModelConfig, UreqTransport};

/// Exemplars shipped with the crate.
pub const DEFAULT_EXEMPLARS: &str = include_str!("../assets/exemplars.json");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Remote(String),
}

impl PipelineError {
    /// 1 usage/config, 2 data, 3 remote service.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Remote(_) => 3,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<RecordError> for PipelineError {
    fn from(e: RecordError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<ParseError> for PipelineError {
    fn from(e: ParseError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<ChatError> for PipelineError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::MissingAuth(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Remote(e.to_string()),
        }
    }
}

impl From<EmbedError> for PipelineError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::MissingAuth(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Remote(e.to_string()),
        }
    }
}

impl From<FilterError> for PipelineError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::Chat(c) => c.into(),
            FilterError::Render(r) => r.into(),
            FilterError::EvenRuns(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<RenderError> for PipelineError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Chat(c) => c.into(),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Embed(x) => x.into(),
            EvalError::Chain(_) => PipelineError::Data(e.to_string()),
            _ => PipelineError::Config(e.to_string()),
        }
    }
}

impl From<AnalyzeError> for PipelineError {
    fn from(e: AnalyzeError) -> Self {
        match e {
            AnalyzeError::Embed(x) => x.into(),
            AnalyzeError::NoVisibleEntities => PipelineError::Data(e.to_string()),
            _ => PipelineError::Config(e.to_string()),
        }
    }
}

impl From<ChainError> for PipelineError {
    fn from(e: ChainError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

/// Remote chat models used by `generate`. Absent entries disable the
/// corresponding feature.
#[derive(Default)]
pub struct Clients {
    pub judge: Option<Box<dyn ChatClient>>,
    pub verbalizer: Option<Box<dyn ChatClient>>,
    pub typing: Option<Box<dyn ChatClient>>,
}

fn http_chat(cfg: &PipelineConfig, model: Option<&HttpModelConfig>, role: &str) -> Result<Box<dyn ChatClient>, PipelineError> {
    let model = model.ok_or_else(|| PipelineError::Config(format!("models.{role} is not configured")))?;
    let client = HttpChatClient::new(model.clone(), Arc::new(UreqTransport::default()))?;
    Ok(match &cfg.cache_dir {
        Some(dir) => Box::new(CachedChat::new(client, cfg.resolve(dir))),
        None => Box::new(client),
    })
}

impl Clients {
    /// Builds the HTTP clients the config asks for.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let mut c = Clients::default();
        if cfg.filter.enabled {
            c.judge = Some(http_chat(cfg, cfg.models.judge.as_ref(), "judge")?);
        }
        if cfg.render.verbalizer == VerbalizerChoice::Chat {
            c.verbalizer = Some(http_chat(cfg, cfg.models.verbalizer.as_ref(), "verbalizer")?);
        }
        if cfg.render.typing {
            c.typing = Some(http_chat(cfg, cfg.models.typing.as_ref(), "typing")?);
        }
        Ok(c)
    }
}

pub fn answer_client(cfg: &PipelineConfig) -> Result<Box<dyn ChatClient>, PipelineError> {
    http_chat(cfg, cfg.models.answer.as_ref(), "answer")
}

pub fn embedder(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    Ok(match cfg.embedder.kind {
        EmbedderKind::Trigram => Box::new(TrigramEmbedder::new(cfg.embedder.dim)?),
        EmbedderKind::Http => {
            let http = cfg
                .embedder
                .http
                .clone()
                .ok_or_else(|| PipelineError::Config("embedder.http is not configured".into()))?;
            Box::new(HttpEmbedder::new(http, cfg.embedder.dim, Arc::new(UreqTransport::default()))?)
        }
    })
}

pub struct LoadedGraph {
    pub kg: KnowledgeGraph,
    /// Digest of the dump text, recorded as the snapshot id.
    pub snapshot: String,
}

pub fn load_graph(cfg: &PipelineConfig) -> Result<LoadedGraph, PipelineError> {
    let text = dataset::read_text(&cfg.resolve(&cfg.kg.path))?;
    let raw = triples::parse_triples(&text, cfg.kg.format)?;
    let labels = match &cfg.kg.labels {
        Some(p) => triples::parse_labels(&dataset::read_text(&cfg.resolve(p))?)?,
        None => BTreeMap::new(),
    };
    let kg = KnowledgeGraph::build_with_labels(raw, &cfg.kg.type_predicate, &labels);
    Ok(LoadedGraph { kg, snapshot: hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string() })
}

/// Survival count after one pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateOutput {
    /// Questions referenced by the manifest: natural ones first, then
    /// truncations.
    pub questions: Vec<RenderedQuestion>,
    /// Chains behind the natural questions, in the same order.
    pub chains: Vec<ChainRecord>,
    pub manifest: Manifest,
    pub stages: Vec<StageCount>,
}

/// Mines every seed in parallel; the result equals [`chain::mine_chains`].
pub fn mine_parallel(kg: &KnowledgeGraph, seeds: &[chainqa_core::EntityId], params: &MiningParams) -> Vec<chain::ReasoningChain> {
    let per_seed: Vec<_> = seeds.par_iter().map(|&s| chain::mine_seed(kg, s, params)).collect();
    chain::merge_unique(per_seed)
}

/// mine → viability → render → knowledge filter → split manifest.
pub fn generate(cfg: &PipelineConfig, graph: &LoadedGraph, seeds: &[String], clients: &Clients) -> Result<GenerateOutput, PipelineError> {
    let kg = &graph.kg;
    let mut stages = Vec::new();
    let mut stage = |name: &str, count: usize| stages.push(StageCount { stage: name.to_string(), count });

    let seed_ids: Vec<_> = seeds.iter().filter_map(|s| kg.entity(s)).collect();
    stage("seeds", seeds.len());
    stage("seeds in graph", seed_ids.len());

    let template = TemplateVerbalizer::default();
    let chat_verbalizer = clients.verbalizer.as_deref().map(ChatVerbalizer::new);
    let verbalizer: &dyn Verbalizer = match &chat_verbalizer {
        Some(v) => v,
        None => &template,
    };
    let render_cfg = RenderConfig { persons: cfg.persons(), allow_hypernym_fallback: cfg.render.allow_hypernym_fallback };

    let mut questions: Vec<RenderedQuestion> = Vec::new();
    let mut chains: BTreeMap<String, ChainRecord> = BTreeMap::new();
    for &difficulty in &cfg.mining.difficulties {
        let d = difficulty.as_str();
        let params = MiningParams {
            walks_per_seed: cfg.mining.walks_per_seed,
            max_depth: cfg.mining.n_max,
            difficulty,
            global_seed: cfg.seed,
        };
        let mined = mine_parallel(kg, &seed_ids, &params);
        stage(&format!("{d}: mined"), mined.len());
        let full: Vec<_> = mined.into_iter().filter(|c| c.depth() == cfg.mining.n_max).collect();
        stage(&format!("{d}: depth {}", cfg.mining.n_max), full.len());
        let viable: Vec<_> = full
            .into_iter()
            .filter(|c| matches!(chain::viability_filter(kg, c), Ok(Viability::Pass)))
            .collect();
        stage(&format!("{d}: viable"), viable.len());

        let rendered: Vec<Result<RenderedQuestion, RenderError>> = viable
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                render::render_question(kg, verbalizer, clients.typing.as_deref(), c, &render_cfg, &format!("{d}-{i:05}"))
            })
            .collect();
        let mut kept = Vec::new();
        for (c, r) in viable.iter().zip(rendered) {
            match r {
                Ok(q) => {
                    chains.insert(q.id.clone(), c.to_record(kg));
                    kept.push(q);
                }
                Err(RenderError::Chat(e)) => return Err(e.into()),
                Err(_) => {}
            }
        }
        stage(&format!("{d}: rendered"), kept.len());

        if let Some(judge) = clients.judge.as_deref() {
            let verdicts: Vec<Result<FilterOutcome, FilterError>> = kept
                .par_iter()
                .map(|q| filters::knowledge_filter(judge, q, cfg.filter.runs, cfg.filter.temperature))
                .collect();
            let mut survivors = Vec::new();
            for (q, v) in kept.into_iter().zip(verdicts) {
                if v? == FilterOutcome::Keep {
                    survivors.push(q);
                }
            }
            kept = survivors;
            stage(&format!("{d}: memorized"), kept.len());
        }
        questions.extend(kept);
    }

    let build = filters::build_manifest(&questions, &cfg.split_plan(), cfg.seed)?;
    let mut manifest = build.manifest;
    manifest.provenance = Provenance { kg_snapshot: graph.snapshot.clone(), global_seed: cfg.seed, config_hash: cfg.hash() };
    let referenced: BTreeSet<&str> = manifest.splits.values().flatten().map(String::as_str).collect();
    let natural: Vec<RenderedQuestion> = questions.into_iter().filter(|q| referenced.contains(q.id.as_str())).collect();
    let chain_records = natural.iter().map(|q| chains[&q.id].clone()).collect();
    let mut out = natural;
    out.extend(build.truncated);
    stage("dataset", out.len());
    Ok(GenerateOutput { questions: out, chains: chain_records, manifest, stages })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub command: String,
    pub config_hash: String,
    pub global_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kg_snapshot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageCount>,
}

impl RunProvenance {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        RunProvenance {
            command: command.to_string(),
            config_hash: cfg.hash(),
            global_seed: cfg.seed,
            kg_snapshot: None,
            embedder: None,
            model: None,
            stages: Vec::new(),
        }
    }
}

pub fn write_generate(cfg: &PipelineConfig, out: &GenerateOutput) -> Result<(), PipelineError> {
    dataset::write_jsonl(&cfg.output_path("questions.jsonl"), &out.questions)?;
    dataset::write_jsonl(&cfg.output_path("chains.jsonl"), &out.chains)?;
    dataset::write_json(&cfg.output_path("manifest.json"), &out.manifest)?;
    dataset::write_text(&cfg.output_path("stats.tsv"), &tables::stats_tsv(&tables::bucket_counts(&out.questions)))?;
    let mut prov = RunProvenance::new("generate", cfg);
    prov.kg_snapshot = Some(out.manifest.provenance.kg_snapshot.clone());
    prov.stages = out.stages.clone();
    dataset::write_json(&cfg.output_path("provenance.json"), &prov)?;
    Ok(())
}

pub fn read_seeds(cfg: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    Ok(triples::parse_seeds(&dataset::read_text(&cfg.resolve(&cfg.seeds))?))
}

pub fn load_exemplars(cfg: &PipelineConfig) -> Result<ExemplarSet, PipelineError> {
    match &cfg.eval.exemplars {
        Some(p) => Ok(dataset::read_json(&cfg.resolve(p))?),
        None => serde_json::from_str(DEFAULT_EXEMPLARS).map_err(|e| PipelineError::Config(format!("bundled exemplars: {e}"))),
    }
}

pub fn eval_settings(cfg: &PipelineConfig) -> Result<EvalSettings, PipelineError> {
    let aliases = match &cfg.eval.aliases {
        Some(p) => dataset::read_json(&cfg.resolve(p))?,
        None => BTreeMap::new(),
    };
    Ok(EvalSettings { samples: cfg.eval.samples, temperature: cfg.eval.temperature, rule: cfg.eval.rule, aliases })
}

pub fn prompt_mode(name: &str, cfg: &PipelineConfig) -> Result<PromptMode, PipelineError> {
    match name {
        "direct" => Ok(PromptMode::Direct),
        "icl" => Ok(PromptMode::Icl),
        "rag" => Ok(PromptMode::Rag { cap: cfg.eval.rag_cap, seed: cfg.seed }),
        other => Err(PipelineError::Config(format!("unknown mode {other:?} (direct, icl, rag)"))),
    }
}

/// Which answerer `eval` runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Oracle,
    FactOnly,
    Similarity,
    /// `models.answer` over HTTP.
    Model,
    /// Always answers the given text.
    Constant(String),
}

impl std::str::FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(SolverChoice::Oracle),
            "fact-only" => Ok(SolverChoice::FactOnly),
            "similarity" => Ok(SolverChoice::Similarity),
            "model" => Ok(SolverChoice::Model),
            _ => match s.strip_prefix("constant:") {
                Some(text) => Ok(SolverChoice::Constant(text.to_string())),
                None => Err(format!("unknown solver {s:?} (oracle, fact-only, similarity, model, constant:TEXT)")),
            },
        }
    }
}

/// Evaluates every question in parallel; results keep dataset order.
pub fn evaluate(
    solver: &dyn Solver,
    questions: &[RenderedQuestion],
    mode: &PromptMode,
    exemplars: &ExemplarSet,
    kg: Option<&KnowledgeGraph>,
    settings: &EvalSettings,
) -> Result<(Vec<EvalResult>, AccuracyTable), PipelineError> {
    let results = questions
        .par_iter()
        .map(|q| eval::evaluate_question(solver, q, mode, exemplars, kg, settings))
        .collect::<Result<Vec<_>, _>>()?;
    let table = eval::accuracy_table(questions, &results);
    Ok((results, table))
}

/// Runs `choice` over `questions` and returns results, table and the model id.
pub fn run_solver(
    cfg: &PipelineConfig,
    choice: &SolverChoice,
    kg: &KnowledgeGraph,
    questions: &[RenderedQuestion],
    mode: &PromptMode,
) -> Result<(Vec<EvalResult>, AccuracyTable, String), PipelineError> {
    let exemplars = load_exemplars(cfg)?;
    let settings = eval_settings(cfg)?;
    let run = |solver: &dyn Solver| -> Result<(Vec<EvalResult>, AccuracyTable, String), PipelineError> {
        let (r, t) = evaluate(solver, questions, mode, &exemplars, Some(kg), &settings)?;
        Ok((r, t, solver.id().to_string()))
    };
    match choice {
        SolverChoice::Oracle => run(&OracleSolver::new(kg)),
        SolverChoice::FactOnly => run(&FactOnlySolver::new(kg, cfg.seed)),
        SolverChoice::Similarity => {
            let e = embedder(cfg)?;
            run(&SimilaritySolver::new(kg, e.as_ref())?)
        }
        SolverChoice::Model => run(&eval::ChatSolver(answer_client(cfg)?)),
        SolverChoice::Constant(text) => {
            run(&eval::ChatSolver(chainqa_core::client::ScriptedChat::constant("constant", text)))
        }
    }
}

/// Memoizes embeddings by text.
struct Memo<'a> {
    inner: &'a dyn EmbeddingProvider,
    seen: Mutex<HashMap<String, Vec<f64>>>,
}

impl EmbeddingProvider for Memo<'_> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if let Some(v) = self.seen.lock().unwrap_or_else(|p| p.into_inner()).get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).insert(text.to_string(), v.clone());
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOutput {
    pub records: Vec<SimilarityRecord>,
    pub curve: Vec<CurvePoint>,
    pub histogram: Histogram,
}

/// Similarity records for every completed result, then the curve and the
/// histogram. Results naming unknown questions are an error.
pub fn analyze(
    cfg: &PipelineConfig,
    questions: &[RenderedQuestion],
    results: &[EvalResult],
    embedder: &dyn EmbeddingProvider,
) -> Result<AnalysisOutput, PipelineError> {
    let by_id: HashMap<&str, &RenderedQuestion> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let orphans: BTreeSet<&str> =
        results.iter().map(|r| r.question_id.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    if !orphans.is_empty() {
        let list: Vec<&str> = orphans.into_iter().collect();
        return Err(PipelineError::Data(format!("results reference unknown question ids: {}", list.join(", "))));
    }
    let memo = Memo { inner: embedder, seen: Mutex::new(HashMap::new()) };
    let mut records = Vec::new();
    for r in results.iter().filter(|r| r.error.is_none()) {
        let q = by_id[r.question_id.as_str()];
        let gold = q.answer_label.to_lowercase();
        let visible: Vec<String> = q.visible_labels().into_iter().filter(|v| v.to_lowercase() != gold).collect();
        records.push(SimilarityRecord {
            question_id: q.id.clone(),
            mean_similarity: analyze::instance_similarity(&memo, &q.answer_label, &visible)?,
            correct: r.correct,
            depth: q.depth,
            difficulty: q.difficulty,
        });
    }
    let a = &cfg.analysis;
    let curve = analyze::accuracy_curve(&records, a.window_start, a.window_step, a.window_width)?;
    let histogram = analyze::similarity_histogram(&records, a.bin_width)?;
    Ok(AnalysisOutput { records, curve, histogram })
}

/// Truncates every question deeper than `depth`; questions already at
/// `depth` pass through. Returns the questions and how many were skipped
/// (too shallow, or leaking after truncation).
pub fn truncate_all(questions: &[RenderedQuestion], depth: usize) -> Result<(Vec<RenderedQuestion>, usize), PipelineError> {
    if depth == 0 {
        return Err(PipelineError::Config("depth must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut skipped = 0;
    for q in questions {
        if q.depth == depth {
            out.push(q.clone());
        } else if q.depth > depth {
            match q.truncate(depth) {
                Ok(t) => out.push(t),
                Err(_) => skipped += 1,
            }
        } else {
            skipped += 1;
        }
    }
    Ok((out, skipped))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagRecord {
    pub id: String,
    pub knowledge: Vec<String>,
    pub prompt: String,
}

/// Knowledge lines and the full rag prompt per question. Lines use the same
/// per-question stream as `eval --mode rag`, so they match its prompts.
pub fn inject_rag(
    kg: &KnowledgeGraph,
    questions: &[RenderedQuestion],
    cap: usize,
    seed: u64,
    exemplars: &ExemplarSet,
) -> Result<Vec<RagRecord>, PipelineError> {
    let mode = PromptMode::Rag { cap, seed };
    questions
        .par_iter()
        .map(|q| {
            let knowledge = eval::rag_context(kg, q, cap, &mut rng::stream(seed, &q.id))?;
            let prompt = eval::build_prompt(q, &mode, exemplars, Some(kg))?;
            Ok(RagRecord { id: q.id.clone(), knowledge, prompt })
        })
        .collect()
}

pub fn read_questions(path: &Path) -> Result<Vec<RenderedQuestion>, PipelineError> {
    Ok(dataset::read_jsonl(path)?)
}
