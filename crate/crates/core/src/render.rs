//! Turning reasoning chains into questions.
//!
//! Every chain entity `e_i` is masked as "<Hypernym> <Letter>" with letters
//! assigned in chain order; fact targets and the final entity stay visible.
//! A question reads
//!
//! ```text
//! <opening> <relation_1> <fact_1> ... <relation_n> <fact_n> <terminal>
//! ```
//!
//! joined by single spaces, e.g. "Who is Person A? Person A knows Person B.
//! Person A is the child of Carol. Person B is Bob."

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, ChainRecord, Difficulty, LayerTerms, ReasoningChain};
use crate::client::{ChatClient, ChatError};
use crate::kg::{EntityId, KnowledgeGraph};

/// Hypernym used when neither the graph nor a typing model supplies one.
pub const FALLBACK_HYPERNYM: &str = "Entity";

/// Letters available for placeholders.
pub const MAX_CHAIN_ENTITIES: usize = 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("chain mentions {0} entities, placeholders run out after {MAX_CHAIN_ENTITIES}")]
    TooManyEntities(usize),
    #[error("no placeholder assigned for {0}")]
    MissingLabel(String),
    #[error("entity label is empty")]
    EmptyEntityLabel,
    #[error("verbalizer failed: {0}")]
    Verbalizer(String),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("question text contains its answer {0:?}")]
    AnswerLeak(String),
    #[error("question text contains masked entity {0:?}")]
    MaskedLeak(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Relation as handed to a verbalizer.
#[derive(Clone, Copy, Debug)]
pub struct RelationName<'a> {
    pub term: &'a str,
    pub label: &'a str,
}

/// Turns `(subject, relation, object)` into one sentence. Subject and object
/// arrive already masked or unmasked; the verbalizer must keep them verbatim.
pub trait Verbalizer: Send + Sync {
    fn verbalize(&self, subject: &str, relation: RelationName<'_>, object: &str) -> Result<String, RenderError>;
}

const DEFAULT_PHRASES: &[(&str, &str)] = &[
    ("knows", "knows"),
    ("child_of", "is the child of"),
    ("parent_of", "is the parent of"),
    ("works_at", "works at"),
    ("friend_of", "is a friend of"),
    ("born_in", "was born in"),
    ("lives_in", "lives in"),
    ("member_of", "is a member of"),
    ("starring", "stars"),
    ("directed_by", "was directed by"),
    ("written_by", "was written by"),
    ("located_in", "is located in"),
    ("founded_by", "was founded by"),
    ("artist", "is the artist for"),
    ("award", "won"),
    ("college", "attended"),
    ("almaMater", "attended"),
    ("father", "is the child of"),
    ("mother", "is the child of"),
    ("spouse", "is married to"),
    ("parentCompany", "is owned by"),
    ("birthPlace", "was born in"),
    ("director", "was directed by"),
    ("writer", "was written by"),
    ("producer", "was produced by"),
    ("team", "played for"),
    ("country", "is in"),
    ("location", "is located in"),
    ("genre", "belongs to the genre"),
    ("recordLabel", "was released by"),
];

/// Deterministic phrase-table verbalizer: "<s> <phrase> <o>.". Relations
/// missing from the table read "<s> has <relation label> <o>.".
#[derive(Clone, Debug)]
pub struct TemplateVerbalizer {
    phrases: BTreeMap<String, String>,
}

impl Default for TemplateVerbalizer {
    fn default() -> Self {
        TemplateVerbalizer {
            phrases: DEFAULT_PHRASES.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl TemplateVerbalizer {
    pub fn empty() -> Self {
        TemplateVerbalizer { phrases: BTreeMap::new() }
    }

    /// Adds or replaces the phrase for a relation term, local name or label.
    pub fn with_phrase(mut self, key: &str, phrase: &str) -> Self {
        self.phrases.insert(key.to_string(), phrase.to_string());
        self
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = (String, String)>) {
        self.phrases.extend(entries);
    }

    fn phrase(&self, relation: RelationName<'_>) -> String {
        let local = relation.term.rsplit(['/', '#']).next().unwrap_or(relation.term);
        [relation.term, local, relation.label]
            .iter()
            .find_map(|k| self.phrases.get(*k))
            .cloned()
            .unwrap_or_else(|| format!("has {}", relation.label))
    }
}

impl Verbalizer for TemplateVerbalizer {
    fn verbalize(&self, subject: &str, relation: RelationName<'_>, object: &str) -> Result<String, RenderError> {
        Ok(format!("{subject} {} {object}.", self.phrase(relation)))
    }
}

/// Verbalizer backed by a chat model. Subject and object are sent already
/// masked; a response that drops either of them verbatim is rejected.
pub struct ChatVerbalizer<C> {
    client: C,
    temperature: f64,
}

impl<C: ChatClient> ChatVerbalizer<C> {
    pub fn new(client: C) -> Self {
        ChatVerbalizer { client, temperature: 0.0 }
    }

    pub fn prompt(subject: &str, relation: &str, object: &str) -> String {
        format!(
            "Rewrite a knowledge-base triplet (subject, relation, object) as one short, fluent English sentence. \
Copy the subject and the object exactly as written, and do not add any other facts.\n\n\
Triplet: (Wes Anderson, director, Moonrise Kingdom)\nSentence: Moonrise Kingdom was directed by Wes Anderson.\n\n\
Triplet: (Actor C, artist, Along on Christmas Day)\nSentence: Actor C is the artist for Along on Christmas Day.\n\n\
Triplet: ({subject}, {relation}, {object})\nSentence:"
        )
    }
}

impl<C: ChatClient> Verbalizer for ChatVerbalizer<C> {
    fn verbalize(&self, subject: &str, relation: RelationName<'_>, object: &str) -> Result<String, RenderError> {
        let prompt = Self::prompt(subject, relation.label, object);
        let out = self.client.complete(&prompt, self.temperature, 1)?;
        let sentence = out.first().and_then(|s| s.lines().map(str::trim).find(|l| !l.is_empty())).unwrap_or("");
        if !sentence.contains(subject) || !sentence.contains(object) {
            return Err(RenderError::Verbalizer(format!("response {sentence:?} dropped {subject:?} or {object:?}")));
        }
        Ok(sentence.to_string())
    }
}

/// Prompt asking a chat model for an entity's category.
pub fn typing_prompt(entity_label: &str) -> String {
    format!(
        "Give the category (hypernym) of the entity in one or two lowercase words, at the granularity used by DBpedia types.\n\n\
Entity: Wes Anderson\nCategory: director\n\n\
Entity: You So Crazy\nCategory: film\n\n\
Entity: {entity_label}\nCategory:"
    )
}

/// Hypernym of `e`: the graph's type if present, then the typing model, then
/// [`FALLBACK_HYPERNYM`]. A typing failure propagates only when
/// `allow_fallback` is false.
pub fn resolve_hypernym(
    kg: &KnowledgeGraph,
    typing: Option<&dyn ChatClient>,
    e: EntityId,
    allow_fallback: bool,
) -> Result<String, RenderError> {
    if let Some(h) = kg.hypernym_of(e) {
        return Ok(h.to_string());
    }
    if let Some(chat) = typing {
        match chat.complete(&typing_prompt(kg.entity_label(e)), 0.0, 1) {
            Ok(out) => {
                let h = out
                    .first()
                    .and_then(|s| s.lines().map(str::trim).find(|l| !l.is_empty()))
                    .unwrap_or("")
                    .trim_end_matches('.')
                    .trim();
                if !h.is_empty() {
                    return Ok(h.to_string());
                }
            }
            Err(err) if !allow_fallback => return Err(err.into()),
            Err(_) => {}
        }
    }
    Ok(FALLBACK_HYPERNYM.to_string())
}

fn title_case(s: &str) -> String {
    s.split_whitespace()
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Placeholders for `e_1 … e_{N+1}`: hypernym in title case plus the i-th
/// uppercase letter ("Actor C", "TV Series D").
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    placeholders: Vec<String>,
}

impl LabelMap {
    pub fn get(&self, index: usize) -> Option<&str> {
        self.placeholders.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.placeholders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placeholders.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.placeholders.iter().map(String::as_str)
    }
}

/// Assigns letters in chain order to the given per-entity hypernyms.
pub fn assign_labels(hypernyms: &[String]) -> Result<LabelMap, RenderError> {
    if hypernyms.len() > MAX_CHAIN_ENTITIES {
        return Err(RenderError::TooManyEntities(hypernyms.len()));
    }
    let placeholders = hypernyms
        .iter()
        .zip(b'A'..=b'Z')
        .map(|(h, letter)| {
            let h = title_case(h);
            if h.is_empty() {
                format!("{}", letter as char)
            } else {
                format!("{h} {}", letter as char)
            }
        })
        .collect();
    Ok(LabelMap { placeholders })
}

/// Hypernyms that make the opening question ask "Who".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonCategories(BTreeSet<String>);

impl Default for PersonCategories {
    fn default() -> Self {
        PersonCategories(
            ["person", "actor", "director", "writer", "singer", "athlete", "politician"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    }
}

impl PersonCategories {
    pub fn new(items: impl IntoIterator<Item = String>) -> Self {
        PersonCategories(items.into_iter().map(|s| s.to_lowercase()).collect())
    }

    pub fn contains(&self, hypernym: &str) -> bool {
        self.0.contains(&hypernym.trim().to_lowercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// "Who is <placeholder>?" for person hypernyms, "What is <placeholder>?"
/// otherwise.
pub fn opening_question(is_person: bool, placeholder: &str) -> String {
    if is_person {
        format!("Who is {placeholder}?")
    } else {
        format!("What is {placeholder}?")
    }
}

/// "<placeholder> is <label>." for the revealed last entity.
pub fn terminal_statement(placeholder: &str, entity_label: &str) -> Result<String, RenderError> {
    if entity_label.trim().is_empty() {
        return Err(RenderError::EmptyEntityLabel);
    }
    Ok(format!("{placeholder} is {entity_label}."))
}

#[derive(Clone, Debug)]
pub struct RenderConfig {
    pub persons: PersonCategories,
    /// Fall back to [`FALLBACK_HYPERNYM`] when the typing model fails.
    pub allow_hypernym_fallback: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { persons: PersonCategories::default(), allow_hypernym_fallback: true }
    }
}

/// One layer of a rendered question with its full provenance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub entity: String,
    pub entity_label: String,
    pub entity_placeholder: String,
    pub relation: String,
    pub relation_label: String,
    pub next: String,
    pub next_label: String,
    pub next_placeholder: String,
    pub fact_relation: String,
    pub fact_relation_label: String,
    pub fact_entity: String,
    pub fact_entity_label: String,
    /// Relation statement with both ends masked.
    pub masked_relation: String,
    /// Fact statement with the entity masked and the fact target verbatim.
    pub masked_fact: String,
    /// Unmasked relation statement, used for knowledge judging.
    pub relation_statement: String,
    /// Unmasked fact statement, used for knowledge judging.
    pub fact_statement: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedQuestion {
    pub id: String,
    pub depth: usize,
    pub difficulty: Difficulty,
    pub question_text: String,
    pub answer: String,
    pub answer_label: String,
    /// Raw terms of every fact target plus the revealed last entity.
    pub visible_entities: Vec<String>,
    pub layers: Vec<LayerRecord>,
    pub opening: String,
    pub terminal: String,
    /// Id of the deeper question this one was truncated from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

impl RenderedQuestion {
    /// Display labels of the visible entities, in `visible_entities` order.
    pub fn visible_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.layers.iter().map(|l| l.fact_entity_label.clone()).collect();
        if let Some(last) = self.layers.last() {
            out.push(last.next_label.clone());
        }
        out
    }

    pub fn chain_record(&self) -> ChainRecord {
        ChainRecord {
            seed: self.answer.clone(),
            difficulty: self.difficulty,
            layers: self
                .layers
                .iter()
                .map(|l| LayerTerms {
                    entity: l.entity.clone(),
                    relation: l.relation.clone(),
                    next: l.next.clone(),
                    fact_relation: l.fact_relation.clone(),
                    fact_entity: l.fact_entity.clone(),
                })
                .collect(),
        }
    }

    pub fn to_chain(&self, kg: &KnowledgeGraph) -> Result<ReasoningChain, ChainError> {
        self.chain_record().resolve(kg)
    }

    /// Keeps layers `1..=depth` verbatim and reveals `e_{depth+1}`.
    pub fn truncate(&self, depth: usize) -> Result<RenderedQuestion, RenderError> {
        if depth == 0 || depth > self.layers.len() {
            return Err(ChainError::DepthOutOfRange { depth, max: self.layers.len() }.into());
        }
        let layers = self.layers[..depth].to_vec();
        let last = &layers[depth - 1];
        let terminal = terminal_statement(&last.next_placeholder, &last.next_label)?;
        let mut visible: Vec<String> = layers.iter().map(|l| l.fact_entity.clone()).collect();
        visible.push(last.next.clone());
        let q = RenderedQuestion {
            id: format!("{}-d{depth}", self.parent.as_deref().unwrap_or(&self.id)),
            depth,
            difficulty: self.difficulty,
            question_text: compose(&self.opening, &layers, &terminal),
            answer: self.answer.clone(),
            answer_label: self.answer_label.clone(),
            visible_entities: visible,
            layers,
            opening: self.opening.clone(),
            terminal,
            parent: Some(self.parent.clone().unwrap_or_else(|| self.id.clone())),
        };
        q.check_leaks()?;
        Ok(q)
    }

    /// Rejects text that mentions the answer or any other masked entity
    /// (case-insensitive).
    pub fn check_leaks(&self) -> Result<(), RenderError> {
        let text = self.question_text.to_lowercase();
        if text.contains(&self.answer_label.to_lowercase()) {
            return Err(RenderError::AnswerLeak(self.answer_label.clone()));
        }
        for l in self.layers.iter().skip(1) {
            if text.contains(&l.entity_label.to_lowercase()) {
                return Err(RenderError::MaskedLeak(l.entity_label.clone()));
            }
        }
        Ok(())
    }
}

fn compose(opening: &str, layers: &[LayerRecord], terminal: &str) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(2 + 2 * layers.len());
    parts.push(opening);
    for l in layers {
        parts.push(&l.masked_relation);
        parts.push(&l.masked_fact);
    }
    parts.push(terminal);
    parts.join(" ")
}

/// Renders a chain into a question.
pub fn render_question(
    kg: &KnowledgeGraph,
    verbalizer: &dyn Verbalizer,
    typing: Option<&dyn ChatClient>,
    chain: &ReasoningChain,
    config: &RenderConfig,
    id: &str,
) -> Result<RenderedQuestion, RenderError> {
    if chain.layers.is_empty() {
        return Err(ChainError::EmptyChain.into());
    }
    let entities = chain.chain_entities();
    if entities.len() > MAX_CHAIN_ENTITIES {
        return Err(RenderError::TooManyEntities(entities.len()));
    }
    let hypernyms = entities
        .iter()
        .map(|&e| resolve_hypernym(kg, typing, e, config.allow_hypernym_fallback))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = assign_labels(&hypernyms)?;
    let placeholder = |i: usize| -> Result<&str, RenderError> {
        labels.get(i).ok_or_else(|| RenderError::MissingLabel(kg.entity_term(entities[i]).to_string()))
    };

    let answer = chain.answer();
    let is_person = config.persons.contains(&hypernyms[0])
        || kg.types_of(answer).iter().any(|t| config.persons.contains(t));
    let opening = opening_question(is_person, placeholder(0)?);

    let mut layers = Vec::with_capacity(chain.layers.len());
    for (i, layer) in chain.layers.iter().enumerate() {
        let rel = RelationName { term: kg.relation_term(layer.relation), label: kg.relation_label(layer.relation) };
        let frel = RelationName {
            term: kg.relation_term(layer.fact.relation),
            label: kg.relation_label(layer.fact.relation),
        };
        let this = placeholder(i)?;
        let next = placeholder(i + 1)?;
        let entity_label = kg.entity_label(layer.entity);
        let next_label = kg.entity_label(layer.next);
        let fact_label = kg.entity_label(layer.fact.target);
        layers.push(LayerRecord {
            entity: kg.entity_term(layer.entity).to_string(),
            entity_label: entity_label.to_string(),
            entity_placeholder: this.to_string(),
            relation: rel.term.to_string(),
            relation_label: rel.label.to_string(),
            next: kg.entity_term(layer.next).to_string(),
            next_label: next_label.to_string(),
            next_placeholder: next.to_string(),
            fact_relation: frel.term.to_string(),
            fact_relation_label: frel.label.to_string(),
            fact_entity: kg.entity_term(layer.fact.target).to_string(),
            fact_entity_label: fact_label.to_string(),
            masked_relation: verbalizer.verbalize(this, rel, next)?,
            masked_fact: verbalizer.verbalize(this, frel, fact_label)?,
            relation_statement: verbalizer.verbalize(entity_label, rel, next_label)?,
            fact_statement: verbalizer.verbalize(entity_label, frel, fact_label)?,
        });
    }

    let n = chain.layers.len();
    let terminal = terminal_statement(placeholder(n)?, kg.entity_label(chain.revealed()))?;
    let mut visible: Vec<String> = layers.iter().map(|l| l.fact_entity.clone()).collect();
    visible.push(kg.entity_term(chain.revealed()).to_string());

    let q = RenderedQuestion {
        id: id.to_string(),
        depth: n,
        difficulty: chain.difficulty,
        question_text: compose(&opening, &layers, &terminal),
        answer: kg.entity_term(answer).to_string(),
        answer_label: kg.entity_label(answer).to_string(),
        visible_entities: visible,
        layers,
        opening,
        terminal,
        parent: None,
    };
    q.check_leaks()?;
    Ok(q)
}
