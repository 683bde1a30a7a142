//! Immutable in-memory knowledge graph.
//!
//! Terms are interned into dense ids. Entity-to-entity triples feed a forward
//! index `(s, p) -> {o}` and a backward index `(p, o) -> {s}`; literal objects
//! are kept in the triple set but never enter either index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiteralId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Object position of a parsed triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Entity(String),
    Literal(String),
}

impl Term {
    pub fn as_str(&self) -> &str {
        match self {
            Term::Entity(s) | Term::Literal(s) => s,
        }
    }
}

/// A triple before interning, as produced by the dump parsers.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawTriple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

impl RawTriple {
    pub fn entity(s: &str, p: &str, o: &str) -> Self {
        RawTriple { subject: s.to_string(), predicate: p.to_string(), object: Term::Entity(o.to_string()) }
    }

    pub fn literal(s: &str, p: &str, o: &str) -> Self {
        RawTriple { subject: s.to_string(), predicate: p.to_string(), object: Term::Literal(o.to_string()) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Object {
    Entity(EntityId),
    Literal(LiteralId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: Object,
}

#[derive(Clone, Debug)]
struct Node {
    term: String,
    label: String,
}

/// Display label for a raw term: the IRI local name, URL-decoded, with
/// underscores turned into spaces.
pub fn display_label(term: &str) -> String {
    let local = term
        .rsplit(['/', '#'])
        .find(|s| !s.is_empty())
        .unwrap_or(term);
    let decoded = percent_decode_str(local).decode_utf8_lossy();
    let label = decoded.replace('_', " ");
    let label = label.trim();
    if label.is_empty() {
        term.to_string()
    } else {
        label.to_string()
    }
}

#[derive(Default)]
struct Interner {
    nodes: Vec<Node>,
    index: BTreeMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, term: &str) -> u32 {
        if let Some(&id) = self.index.get(term) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { term: term.to_string(), label: display_label(term) });
        self.index.insert(term.to_string(), id);
        id
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<Node>,
    entity_index: BTreeMap<String, EntityId>,
    relations: Vec<Node>,
    relation_index: BTreeMap<String, RelationId>,
    literals: Vec<String>,
    triples: BTreeSet<Triple>,
    forward: BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
    backward: BTreeMap<(RelationId, EntityId), Vec<EntityId>>,
    outgoing: Vec<Vec<(RelationId, EntityId)>>,
    literal_pairs: BTreeSet<(EntityId, RelationId)>,
    types: Vec<Vec<String>>,
    type_predicate: Option<RelationId>,
}

impl KnowledgeGraph {
    /// Builds the graph. Duplicate triples collapse; triples whose predicate
    /// equals `type_predicate` also fill the hypernym map.
    pub fn build(triples: impl IntoIterator<Item = RawTriple>, type_predicate: &str) -> Self {
        Self::build_with_labels(triples, type_predicate, &BTreeMap::new())
    }

    /// Like [`KnowledgeGraph::build`], with display labels overridden per raw
    /// term (entities and relations alike).
    pub fn build_with_labels(
        triples: impl IntoIterator<Item = RawTriple>,
        type_predicate: &str,
        label_overrides: &BTreeMap<String, String>,
    ) -> Self {
        let mut ents = Interner::default();
        let mut rels = Interner::default();
        let mut lits = Interner::default();
        let mut set = BTreeSet::new();
        for t in triples {
            let s = EntityId(ents.intern(&t.subject));
            let p = RelationId(rels.intern(&t.predicate));
            let o = match &t.object {
                Term::Entity(o) => Object::Entity(EntityId(ents.intern(o))),
                Term::Literal(o) => Object::Literal(LiteralId(lits.intern(o))),
            };
            set.insert(Triple { subject: s, predicate: p, object: o });
        }

        let apply = |nodes: &mut Vec<Node>| {
            for n in nodes.iter_mut() {
                if let Some(l) = label_overrides.get(&n.term) {
                    n.label = l.clone();
                }
            }
        };
        apply(&mut ents.nodes);
        apply(&mut rels.nodes);

        let type_predicate = rels.index.get(type_predicate).map(|&r| RelationId(r));
        let n = ents.nodes.len();
        let mut forward: BTreeMap<(EntityId, RelationId), Vec<EntityId>> = BTreeMap::new();
        let mut backward: BTreeMap<(RelationId, EntityId), Vec<EntityId>> = BTreeMap::new();
        let mut outgoing = alloc::vec![Vec::new(); n];
        let mut literal_pairs = BTreeSet::new();
        let mut types: Vec<Vec<String>> = alloc::vec![Vec::new(); n];

        // BTreeSet iteration is sorted, so every index vector comes out sorted.
        for t in &set {
            match t.object {
                Object::Entity(o) => {
                    forward.entry((t.subject, t.predicate)).or_default().push(o);
                    backward.entry((t.predicate, o)).or_default().push(t.subject);
                    outgoing[t.subject.0 as usize].push((t.predicate, o));
                    if Some(t.predicate) == type_predicate {
                        types[t.subject.0 as usize].push(ents.nodes[o.0 as usize].label.clone());
                    }
                }
                Object::Literal(l) => {
                    literal_pairs.insert((t.subject, t.predicate));
                    if Some(t.predicate) == type_predicate {
                        types[t.subject.0 as usize].push(lits.nodes[l.0 as usize].term.clone());
                    }
                }
            }
        }
        for v in backward.values_mut() {
            v.sort_unstable();
        }
        for ts in types.iter_mut() {
            ts.sort();
            ts.dedup();
        }

        KnowledgeGraph {
            entity_index: ents.index.iter().map(|(k, &v)| (k.clone(), EntityId(v))).collect(),
            entities: ents.nodes,
            relation_index: rels.index.iter().map(|(k, &v)| (k.clone(), RelationId(v))).collect(),
            relations: rels.nodes,
            literals: lits.nodes.into_iter().map(|n| n.term).collect(),
            triples: set,
            forward,
            backward,
            outgoing,
            literal_pairs,
            types,
            type_predicate,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn entity(&self, term: &str) -> Option<EntityId> {
        self.entity_index.get(term).copied()
    }

    pub fn relation(&self, term: &str) -> Option<RelationId> {
        self.relation_index.get(term).copied()
    }

    pub fn entity_term(&self, e: EntityId) -> &str {
        &self.entities[e.0 as usize].term
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entities[e.0 as usize].label
    }

    pub fn relation_term(&self, r: RelationId) -> &str {
        &self.relations[r.0 as usize].term
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relations[r.0 as usize].label
    }

    pub fn literal(&self, l: LiteralId) -> &str {
        &self.literals[l.0 as usize]
    }

    pub fn type_predicate(&self) -> Option<RelationId> {
        self.type_predicate
    }

    /// All triples in canonical id order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.triples.iter()
    }

    pub fn contains(&self, s: EntityId, p: RelationId, o: EntityId) -> bool {
        self.triples.contains(&Triple { subject: s, predicate: p, object: Object::Entity(o) })
    }

    /// Entity objects of `(s, p, ?)`, sorted.
    pub fn objects(&self, s: EntityId, p: RelationId) -> &[EntityId] {
        self.forward.get(&(s, p)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Subjects of `(?, p, o)`, sorted.
    pub fn subjects(&self, p: RelationId, o: EntityId) -> &[EntityId] {
        self.backward.get(&(p, o)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entity-valued `(relation, object)` pairs leaving `s`, sorted.
    pub fn outgoing(&self, s: EntityId) -> &[(RelationId, EntityId)] {
        self.outgoing.get(s.0 as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether `(s, p)` has at least one literal object.
    pub fn has_literal_objects(&self, s: EntityId, p: RelationId) -> bool {
        self.literal_pairs.contains(&(s, p))
    }

    /// Lexicographically smallest type label of `e`, if typed.
    pub fn hypernym_of(&self, e: EntityId) -> Option<&str> {
        self.types.get(e.0 as usize).and_then(|t| t.first()).map(String::as_str)
    }

    /// Every type label of `e`, sorted.
    pub fn types_of(&self, e: EntityId) -> &[String] {
        self.types.get(e.0 as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The triple set back in raw-term form, sorted by terms.
    pub fn raw_triples(&self) -> Vec<RawTriple> {
        let mut out: Vec<RawTriple> = self
            .triples
            .iter()
            .map(|t| RawTriple {
                subject: self.entity_term(t.subject).to_string(),
                predicate: self.relation_term(t.predicate).to_string(),
                object: match t.object {
                    Object::Entity(o) => Term::Entity(self.entity_term(o).to_string()),
                    Object::Literal(l) => Term::Literal(self.literal(l).to_string()),
                },
            })
            .collect();
        out.sort();
        out
    }
}
