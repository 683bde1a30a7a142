//! Prompting, scoring and reference solvers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{self, ChainError, Difficulty};
use crate::client::{dot, ChatClient, ChatError, EmbedError, EmbeddingProvider};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::render::RenderedQuestion;
use crate::rng;

/// Line placed between an exemplar question and its worked solution, and
/// after the target question.
pub const BRIDGE_LINE: &str = "Let's solve this question step by step";
/// Sampled responses per question used by default.
pub const DEFAULT_SAMPLES: usize = 5;
/// Candidate cap for injected knowledge lines used by default.
pub const DEFAULT_RAG_CAP: usize = 20;
/// What the oracle answers when the chain does not resolve to one entity.
pub const UNKNOWN_ANSWER: &str = "UNKNOWN";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need two exemplars of depth {depth}, found {found}")]
    ExemplarDepth { depth: usize, found: usize },
    #[error("rag prompting needs the knowledge graph")]
    MissingGraph,
    #[error("rag prompting needs a rag exemplar")]
    MissingRagExemplar,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PromptMode {
    /// The raw question.
    Direct,
    /// Two worked exemplars of the question's depth, then the question.
    Icl,
    /// Candidate lists for every visible triple pattern, with a one-shot
    /// worked exemplar.
    Rag { cap: usize, seed: u64 },
}

impl PromptMode {
    pub fn name(&self) -> &'static str {
        match self {
            PromptMode::Direct => "direct",
            PromptMode::Icl => "icl",
            PromptMode::Rag { .. } => "rag",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub depth: usize,
    pub question: String,
    /// Worked solution, resolving the last layer first.
    pub solution: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagExemplar {
    pub knowledge: Vec<String>,
    pub question: String,
    pub solution: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub icl: Vec<Exemplar>,
    #[serde(default)]
    pub rag: Option<RagExemplar>,
}

impl ExemplarSet {
    pub fn for_depth(&self, depth: usize) -> Result<[&Exemplar; 2], EvalError> {
        let matching: Vec<&Exemplar> = self.icl.iter().filter(|e| e.depth == depth).collect();
        match matching.as_slice() {
            [a, b, ..] => Ok([a, b]),
            _ => Err(EvalError::ExemplarDepth { depth, found: matching.len() }),
        }
    }
}

fn worked(question: &str, solution: &str) -> String {
    format!("{question}\n{BRIDGE_LINE}\n{solution}")
}

/// Builds the prompt for `question`. Rag mode needs `kg` for the candidate
/// lists.
pub fn build_prompt(
    question: &RenderedQuestion,
    mode: &PromptMode,
    exemplars: &ExemplarSet,
    kg: Option<&KnowledgeGraph>,
) -> Result<String, EvalError> {
    match mode {
        PromptMode::Direct => Ok(question.question_text.clone()),
        PromptMode::Icl => {
            let [a, b] = exemplars.for_depth(question.depth)?;
            Ok(format!(
                "{}\n\n{}\n\n{}\n{BRIDGE_LINE}",
                worked(&a.question, &a.solution),
                worked(&b.question, &b.solution),
                question.question_text
            ))
        }
        PromptMode::Rag { cap, seed } => {
            let kg = kg.ok_or(EvalError::MissingGraph)?;
            let demo = exemplars.rag.as_ref().ok_or(EvalError::MissingRagExemplar)?;
            let mut rng = rng::stream(*seed, &question.id);
            let lines = rag_context(kg, question, *cap, &mut rng)?;
            Ok(format!(
                "{}\n{}\n\n{}\n{}\n{BRIDGE_LINE}",
                demo.knowledge.join("\n"),
                worked(&demo.question, &demo.solution),
                lines.join("\n"),
                question.question_text
            ))
        }
    }
}

/// At most `cap` candidates from `pool`, always including `gold`, in random
/// order. Extra candidates are sampled without replacement.
pub fn rag_candidates<R: Rng + ?Sized>(pool: &[EntityId], gold: EntityId, cap: usize, rng: &mut R) -> Vec<EntityId> {
    let others: Vec<EntityId> = pool.iter().copied().filter(|&e| e != gold).collect();
    let extra = cap.max(1).saturating_sub(1).min(others.len());
    let mut out: Vec<EntityId> = Vec::with_capacity(extra + 1);
    out.push(gold);
    out.extend(index::sample(rng, others.len(), extra).into_iter().map(|i| others[i]));
    out.shuffle(rng);
    out
}

/// One knowledge line per visible triple pattern: every fact `(?, r^f, e^f)`
/// and the last relation `(?, r_n, e_{n+1})`, formatted
/// `<?, relation, Entity>: c1, c2, ...`.
pub fn rag_context<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    question: &RenderedQuestion,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<String>, EvalError> {
    let chain = question.to_chain(kg)?;
    let mut patterns = Vec::with_capacity(chain.depth() + 1);
    for l in &chain.layers {
        patterns.push((l.fact.relation, l.fact.target, l.entity));
    }
    if let Some(last) = chain.layers.last() {
        patterns.push((last.relation, last.next, last.entity));
    }
    Ok(patterns
        .into_iter()
        .map(|(r, known, gold)| {
            let names: Vec<&str> = rag_candidates(kg.subjects(r, known), gold, cap, rng)
                .into_iter()
                .map(|e| kg.entity_label(e))
                .collect();
            format!("<?, {}, {}>: {}", kg.relation_label(r), kg.entity_label(known), names.join(", "))
        })
        .collect())
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Whether `gold` occurs in `response`, ignoring case and whitespace runs.
pub fn string_match(response: &str, gold: &str) -> bool {
    let gold = normalize(gold);
    !gold.is_empty() && normalize(response).contains(&gold)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationRule {
    /// More than half of the responses match.
    #[default]
    Majority,
    /// At least one response matches.
    Any,
}

pub fn aggregate(matches: &[bool], rule: AggregationRule) -> bool {
    let hits = matches.iter().filter(|&&m| m).count();
    match rule {
        AggregationRule::Majority => 2 * hits > matches.len(),
        AggregationRule::Any => hits > 0,
    }
}

/// Self-consistency over sampled responses; a response matches if it
/// contains any of `golds`.
pub fn self_consistent_correct(responses: &[String], golds: &[&str], rule: AggregationRule) -> bool {
    let matches: Vec<bool> = responses.iter().map(|r| golds.iter().any(|g| string_match(r, g))).collect();
    aggregate(&matches, rule)
}

/// Anything that answers questions: a chat model or a reference solver.
pub trait Solver: Send + Sync {
    fn id(&self) -> &str;

    fn solve(&self, question: &RenderedQuestion, prompt: &str, temperature: f64, n: usize)
        -> Result<Vec<String>, ChatError>;
}

/// Answers by sending the prompt to a chat model.
pub struct ChatSolver<C>(pub C);

impl<C: ChatClient> Solver for ChatSolver<C> {
    fn id(&self) -> &str {
        self.0.id()
    }

    fn solve(&self, _q: &RenderedQuestion, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        self.0.complete(prompt, temperature, n)
    }
}

fn answer_text(label: &str) -> String {
    format!("The answer is {label}.")
}

/// Follows the chain backward from the revealed entity with
/// [`chain::brute_force_solve`] and answers the unique first entity.
pub struct OracleSolver<'a> {
    kg: &'a KnowledgeGraph,
}

impl<'a> OracleSolver<'a> {
    pub fn new(kg: &'a KnowledgeGraph) -> Self {
        OracleSolver { kg }
    }

    pub fn answer(&self, q: &RenderedQuestion) -> String {
        let Ok(chain) = q.to_chain(self.kg) else {
            return UNKNOWN_ANSWER.to_string();
        };
        let solved = chain::brute_force_solve(self.kg, &chain);
        match solved.iter().next() {
            Some(&e) if solved.len() == 1 => self.kg.entity_label(e).to_string(),
            _ => UNKNOWN_ANSWER.to_string(),
        }
    }
}

impl Solver for OracleSolver<'_> {
    fn id(&self) -> &str {
        "oracle"
    }

    fn solve(&self, q: &RenderedQuestion, _prompt: &str, _t: f64, n: usize) -> Result<Vec<String>, ChatError> {
        let a = answer_text(&self.answer(q));
        Ok((0..n).map(|_| a.clone()).collect())
    }
}

/// Shortcut baseline that reads only the first layer's fact and guesses
/// uniformly among the entities satisfying it.
pub struct FactOnlySolver<'a> {
    kg: &'a KnowledgeGraph,
    seed: u64,
}

impl<'a> FactOnlySolver<'a> {
    pub fn new(kg: &'a KnowledgeGraph, seed: u64) -> Self {
        FactOnlySolver { kg, seed }
    }

    /// The entities the first fact alone admits.
    pub fn candidates(&self, q: &RenderedQuestion) -> Vec<EntityId> {
        let Some(first) = q.layers.first() else { return Vec::new() };
        match (self.kg.relation(&first.fact_relation), self.kg.entity(&first.fact_entity)) {
            (Some(r), Some(o)) => self.kg.subjects(r, o).to_vec(),
            _ => Vec::new(),
        }
    }
}

impl Solver for FactOnlySolver<'_> {
    fn id(&self) -> &str {
        "fact-only"
    }

    fn solve(&self, q: &RenderedQuestion, _prompt: &str, _t: f64, n: usize) -> Result<Vec<String>, ChatError> {
        let pool = self.candidates(q);
        let mut rng = rng::stream(self.seed, &q.id);
        Ok((0..n)
            .map(|_| match pool.choose(&mut rng) {
                Some(&e) => answer_text(self.kg.entity_label(e)),
                None => answer_text(UNKNOWN_ANSWER),
            })
            .collect())
    }
}

/// Shortcut baseline answering the graph entity whose embedding is, on
/// average, closest to the visible entities.
pub struct SimilaritySolver<'a> {
    kg: &'a KnowledgeGraph,
    id: String,
    vectors: Vec<Vec<f64>>,
}

impl<'a> SimilaritySolver<'a> {
    pub fn new(kg: &'a KnowledgeGraph, embedder: &dyn EmbeddingProvider) -> Result<Self, EmbedError> {
        let vectors = kg.entities().map(|e| embedder.embed(kg.entity_label(e))).collect::<Result<Vec<_>, _>>()?;
        Ok(SimilaritySolver { kg, id: format!("similarity:{}", embedder.id()), vectors })
    }

    pub fn answer(&self, q: &RenderedQuestion) -> Option<EntityId> {
        let visible: BTreeSet<EntityId> = q.visible_entities.iter().filter_map(|t| self.kg.entity(t)).collect();
        if visible.is_empty() {
            return None;
        }
        let mut best: Option<(f64, EntityId)> = None;
        for e in self.kg.entities() {
            if visible.contains(&e) || self.kg.outgoing(e).is_empty() {
                continue;
            }
            let v = &self.vectors[e.0 as usize];
            let score = visible.iter().map(|o| dot(v, &self.vectors[o.0 as usize])).sum::<f64>() / visible.len() as f64;
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, e));
            }
        }
        best.map(|(_, e)| e)
    }
}

impl Solver for SimilaritySolver<'_> {
    fn id(&self) -> &str {
        &self.id
    }

    fn solve(&self, q: &RenderedQuestion, _prompt: &str, _t: f64, n: usize) -> Result<Vec<String>, ChatError> {
        let a = answer_text(self.answer(q).map_or(UNKNOWN_ANSWER, |e| self.kg.entity_label(e)));
        Ok((0..n).map(|_| a.clone()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub samples: usize,
    pub temperature: f64,
    pub rule: AggregationRule,
    /// Extra accepted strings per answer term.
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            samples: DEFAULT_SAMPLES,
            temperature: crate::client::DEFAULT_TEMPERATURE,
            rule: AggregationRule::Majority,
            aliases: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub question_id: String,
    pub mode: String,
    pub model: String,
    pub responses: Vec<String>,
    pub matches: Vec<bool>,
    pub correct: bool,
    /// Set when the solver failed; such results do not count toward accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Scores one question. Solver failures are recorded in the result; prompt
/// construction failures are returned as errors.
pub fn evaluate_question(
    solver: &dyn Solver,
    question: &RenderedQuestion,
    mode: &PromptMode,
    exemplars: &ExemplarSet,
    kg: Option<&KnowledgeGraph>,
    settings: &EvalSettings,
) -> Result<EvalResult, EvalError> {
    let prompt = build_prompt(question, mode, exemplars, kg)?;
    let mut result = EvalResult {
        question_id: question.id.clone(),
        mode: mode.name().to_string(),
        model: solver.id().to_string(),
        responses: Vec::new(),
        matches: Vec::new(),
        correct: false,
        error: None,
    };
    match solver.solve(question, &prompt, settings.temperature, settings.samples) {
        Ok(responses) => {
            let mut golds: Vec<&str> = alloc::vec![question.answer_label.as_str()];
            if let Some(extra) = settings.aliases.get(&question.answer) {
                golds.extend(extra.iter().map(String::as_str));
            }
            result.matches = responses.iter().map(|r| golds.iter().any(|g| string_match(r, g))).collect();
            result.correct = !result.matches.is_empty() && aggregate(&result.matches, settings.rule);
            result.responses = responses;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub depth: usize,
    pub difficulty: Difficulty,
    pub mode: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    /// Results excluded because the solver failed.
    pub failures: usize,
    /// Results whose question id is not in the dataset.
    pub orphans: usize,
}

/// Accuracy per (difficulty, depth, mode), ordered by those keys.
pub fn accuracy_table(questions: &[RenderedQuestion], results: &[EvalResult]) -> AccuracyTable {
    let by_id: BTreeMap<&str, &RenderedQuestion> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut buckets: BTreeMap<(Difficulty, usize, &str), (usize, usize)> = BTreeMap::new();
    let mut table = AccuracyTable::default();
    for r in results {
        if r.error.is_some() {
            table.failures += 1;
            continue;
        }
        let Some(q) = by_id.get(r.question_id.as_str()) else {
            table.orphans += 1;
            continue;
        };
        let slot = buckets.entry((q.difficulty, q.depth, r.mode.as_str())).or_default();
        slot.0 += 1;
        slot.1 += usize::from(r.correct);
    }
    table.rows = buckets
        .into_iter()
        .map(|((difficulty, depth, mode), (n, correct))| AccuracyRow {
            depth,
            difficulty,
            mode: mode.to_string(),
            n,
            correct,
            accuracy: correct as f64 / n as f64,
        })
        .collect();
    table
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub results: Vec<EvalResult>,
    pub table: AccuracyTable,
}

/// Evaluates every question in order.
pub fn run_eval(
    solver: &dyn Solver,
    questions: &[RenderedQuestion],
    mode: &PromptMode,
    exemplars: &ExemplarSet,
    kg: Option<&KnowledgeGraph>,
    settings: &EvalSettings,
) -> Result<EvalReport, EvalError> {
    let results = questions
        .iter()
        .map(|q| evaluate_question(solver, q, mode, exemplars, kg, settings))
        .collect::<Result<Vec<_>, _>>()?;
    let table = accuracy_table(questions, &results);
    Ok(EvalReport { results, table })
}
