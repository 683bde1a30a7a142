//! Reasoning-chain mining.
//!
//! A chain is a list of layers `<e_i, r_i, e_{i+1}, (r_i^f, e_i^f)>`. The
//! answer is `e_1`; the question reveals only `e_{N+1}` and every fact target
//! `e_i^f`. Each layer is constrained twice: by its relation to the next
//! entity and by its fact. Mining walks the graph from a seed entity, picking
//! uniformly among relations with several objects (so `e_{i+1}` never pins
//! down `e_i` through a forward lookup) and among facts of the requested
//! difficulty.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::rng;

/// Layer limit used by default.
pub const DEFAULT_MAX_DEPTH: usize = 5;
/// Walk attempts per seed entity used by default.
pub const DEFAULT_WALKS_PER_SEED: usize = 50;
/// Attempts at completing one layer before the walk stops.
pub const LAYER_RETRIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    /// Whether a fact whose backward query `(?, r^f, e^f)` has `solutions`
    /// answers qualifies at this difficulty.
    pub fn admits(self, solutions: usize) -> bool {
        match self {
            Difficulty::Easy => solutions == 1,
            Difficulty::Hard => solutions >= 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        }
    }
}

impl core::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Difficulty {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            other => Err(ChainError::UnknownDifficulty(other.into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub relation: RelationId,
    pub target: EntityId,
    pub difficulty: Difficulty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainLayer {
    pub entity: EntityId,
    pub relation: RelationId,
    pub next: EntityId,
    pub fact: Fact,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReasoningChain {
    pub layers: Vec<ChainLayer>,
    pub difficulty: Difficulty,
}

impl ReasoningChain {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `e_1`, the answer. Panics on an empty chain.
    pub fn answer(&self) -> EntityId {
        self.layers[0].entity
    }

    /// `e_{N+1}`, the entity named outright in the question.
    pub fn revealed(&self) -> EntityId {
        self.layers[self.layers.len() - 1].next
    }

    /// `e_1 … e_{N+1}` in order.
    pub fn chain_entities(&self) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self.layers.iter().map(|l| l.entity).collect();
        if let Some(last) = self.layers.last() {
            out.push(last.next);
        }
        out
    }

    pub fn to_record(&self, kg: &KnowledgeGraph) -> ChainRecord {
        ChainRecord {
            seed: self.layers.first().map(|l| kg.entity_term(l.entity).into()).unwrap_or_default(),
            difficulty: self.difficulty,
            layers: self
                .layers
                .iter()
                .map(|l| LayerTerms {
                    entity: kg.entity_term(l.entity).into(),
                    relation: kg.relation_term(l.relation).into(),
                    next: kg.entity_term(l.next).into(),
                    fact_relation: kg.relation_term(l.fact.relation).into(),
                    fact_entity: kg.entity_term(l.fact.target).into(),
                })
                .collect(),
        }
    }
}

/// Graph-independent form of a chain, by raw terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub seed: String,
    pub difficulty: Difficulty,
    pub layers: Vec<LayerTerms>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTerms {
    pub entity: String,
    pub relation: String,
    pub next: String,
    pub fact_relation: String,
    pub fact_entity: String,
}

impl ChainRecord {
    pub fn resolve(&self, kg: &KnowledgeGraph) -> Result<ReasoningChain, ChainError> {
        let ent = |t: &str| kg.entity(t).ok_or_else(|| ChainError::UnknownTerm(t.into()));
        let rel = |t: &str| kg.relation(t).ok_or_else(|| ChainError::UnknownTerm(t.into()));
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(ChainLayer {
                    entity: ent(&l.entity)?,
                    relation: rel(&l.relation)?,
                    next: ent(&l.next)?,
                    fact: Fact {
                        relation: rel(&l.fact_relation)?,
                        target: ent(&l.fact_entity)?,
                        difficulty: self.difficulty,
                    },
                })
            })
            .collect::<Result<Vec<_>, ChainError>>()?;
        Ok(ReasoningChain { layers, difficulty: self.difficulty })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("chain has no layers")]
    EmptyChain,
    #[error("depth {depth} out of range 1..={max}")]
    DepthOutOfRange { depth: usize, max: usize },
    #[error("term {0:?} is not in the graph")]
    UnknownTerm(String),
    #[error("unknown difficulty {0:?} (expected easy or hard)")]
    UnknownDifficulty(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Viability {
    Pass,
    /// Zero-based index of the first layer whose two constraints admit more
    /// (or fewer) entities than `e_i`.
    Fail { layer: usize },
}

impl Viability {
    pub fn passed(self) -> bool {
        self == Viability::Pass
    }
}

fn walkable(kg: &KnowledgeGraph, r: RelationId) -> bool {
    Some(r) != kg.type_predicate()
}

/// Relations of `e` with at least two entity objects and no literal ones.
pub fn valid_relations(kg: &KnowledgeGraph, e: EntityId) -> Vec<RelationId> {
    let mut out: Vec<RelationId> = Vec::new();
    for &(r, _) in kg.outgoing(e) {
        if out.last() == Some(&r) || !walkable(kg, r) {
            continue;
        }
        if kg.objects(e, r).len() >= 2 && !kg.has_literal_objects(e, r) {
            out.push(r);
        }
    }
    out
}

/// Candidate facts `(r^f, e^f)` for `e` at the given difficulty.
pub fn fact_candidates(
    kg: &KnowledgeGraph,
    e: EntityId,
    difficulty: Difficulty,
    forbidden: &BTreeSet<EntityId>,
    exclude_relation: Option<RelationId>,
) -> Vec<(RelationId, EntityId)> {
    kg.outgoing(e)
        .iter()
        .copied()
        .filter(|&(r, o)| {
            walkable(kg, r)
                && Some(r) != exclude_relation
                && o != e
                && !forbidden.contains(&o)
                && difficulty.admits(kg.subjects(r, o).len())
        })
        .collect()
}

/// Draws a fact for `e` uniformly from [`fact_candidates`].
pub fn select_fact<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    e: EntityId,
    difficulty: Difficulty,
    rng: &mut R,
    forbidden: &BTreeSet<EntityId>,
    exclude_relation: Option<RelationId>,
) -> Option<Fact> {
    let candidates = fact_candidates(kg, e, difficulty, forbidden, exclude_relation);
    candidates
        .choose(rng)
        .map(|&(relation, target)| Fact { relation, target, difficulty })
}

/// One layer out of `e`. `visited` holds every entity the chain already
/// mentions; neither the next entity nor the fact target may be one of them.
pub fn extend_layer<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    e: EntityId,
    difficulty: Difficulty,
    rng: &mut R,
    visited: &BTreeSet<EntityId>,
) -> Option<ChainLayer> {
    let relations = valid_relations(kg, e);
    if relations.is_empty() {
        return None;
    }
    for _ in 0..LAYER_RETRIES {
        let relation = *relations.choose(rng)?;
        let nexts: Vec<EntityId> = kg
            .objects(e, relation)
            .iter()
            .copied()
            .filter(|o| !visited.contains(o))
            .collect();
        let Some(&next) = nexts.choose(rng) else {
            continue;
        };
        let mut forbidden = visited.clone();
        forbidden.insert(next);
        if let Some(fact) = select_fact(kg, e, difficulty, rng, &forbidden, Some(relation)) {
            return Some(ChainLayer { entity: e, relation, next, fact });
        }
    }
    None
}

/// Walks from `seed` until no valid layer is found or `max_depth` layers are
/// built.
pub fn random_walk<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    seed: EntityId,
    max_depth: usize,
    difficulty: Difficulty,
    rng: &mut R,
) -> Option<ReasoningChain> {
    let mut visited = BTreeSet::new();
    visited.insert(seed);
    let mut layers = Vec::new();
    let mut current = seed;
    while layers.len() < max_depth {
        let Some(layer) = extend_layer(kg, current, difficulty, rng, &visited) else {
            break;
        };
        visited.insert(layer.next);
        visited.insert(layer.fact.target);
        current = layer.next;
        layers.push(layer);
    }
    if layers.is_empty() {
        None
    } else {
        Some(ReasoningChain { layers, difficulty })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiningParams {
    pub walks_per_seed: usize,
    pub max_depth: usize,
    pub difficulty: Difficulty,
    pub global_seed: u64,
}

impl MiningParams {
    pub fn new(difficulty: Difficulty, global_seed: u64) -> Self {
        MiningParams {
            walks_per_seed: DEFAULT_WALKS_PER_SEED,
            max_depth: DEFAULT_MAX_DEPTH,
            difficulty,
            global_seed,
        }
    }
}

/// Rng stream for mining from `seed`.
pub fn seed_stream(kg: &KnowledgeGraph, seed: EntityId, params: &MiningParams) -> rng::StreamRng {
    let mut key = String::from(params.difficulty.as_str());
    key.push('|');
    key.push_str(kg.entity_term(seed));
    rng::stream(params.global_seed, &key)
}

/// All walks from one seed, deduplicated, in walk order.
pub fn mine_seed(kg: &KnowledgeGraph, seed: EntityId, params: &MiningParams) -> Vec<ReasoningChain> {
    let mut rng = seed_stream(kg, seed, params);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..params.walks_per_seed {
        if let Some(chain) = random_walk(kg, seed, params.max_depth, params.difficulty, &mut rng) {
            if seen.insert(chain.layers.clone()) {
                out.push(chain);
            }
        }
    }
    out
}

/// Merges per-seed results in seed order, dropping chains already seen.
pub fn merge_unique(per_seed: impl IntoIterator<Item = Vec<ReasoningChain>>) -> Vec<ReasoningChain> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for chains in per_seed {
        for c in chains {
            if seen.insert(c.layers.clone()) {
                out.push(c);
            }
        }
    }
    out
}

/// Mines every seed sequentially. The `chainqa` crate runs seeds in parallel
/// with identical output.
pub fn mine_chains(kg: &KnowledgeGraph, seeds: &[EntityId], params: &MiningParams) -> Vec<ReasoningChain> {
    merge_unique(seeds.iter().map(|&s| mine_seed(kg, s, params)))
}

fn intersect(a: &[EntityId], b: &[EntityId]) -> Vec<EntityId> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Solutions of one layer's two backward queries.
pub fn layer_solutions(kg: &KnowledgeGraph, layer: &ChainLayer) -> Vec<EntityId> {
    intersect(
        kg.subjects(layer.relation, layer.next),
        kg.subjects(layer.fact.relation, layer.fact.target),
    )
}

/// Passes iff every layer's `(?, r_i, e_{i+1})` and `(?, r_i^f, e_i^f)`
/// intersect in exactly `{e_i}`.
pub fn viability_filter(kg: &KnowledgeGraph, chain: &ReasoningChain) -> Result<Viability, ChainError> {
    if chain.layers.is_empty() {
        return Err(ChainError::EmptyChain);
    }
    for (i, layer) in chain.layers.iter().enumerate() {
        if layer_solutions(kg, layer) != [layer.entity] {
            return Ok(Viability::Fail { layer: i });
        }
    }
    Ok(Viability::Pass)
}

/// Solves the chain backward from the revealed entity, keeping every
/// assignment consistent with both triples of each layer, and returns the
/// feasible first entities.
///
/// Scans the full triple set rather than the indices, so it can serve as an
/// oracle for [`viability_filter`].
pub fn brute_force_solve(kg: &KnowledgeGraph, chain: &ReasoningChain) -> BTreeSet<EntityId> {
    let mut candidates = BTreeSet::new();
    let Some(last) = chain.layers.last() else {
        return candidates;
    };
    candidates.insert(last.next);
    for layer in chain.layers.iter().rev() {
        let mut previous = BTreeSet::new();
        for t in kg.triples() {
            if t.predicate != layer.relation {
                continue;
            }
            let crate::kg::Object::Entity(o) = t.object else {
                continue;
            };
            if candidates.contains(&o) && kg.contains(t.subject, layer.fact.relation, layer.fact.target) {
                previous.insert(t.subject);
            }
        }
        candidates = previous;
        if candidates.is_empty() {
            break;
        }
    }
    candidates
}

/// Keeps layers `1..=depth`; `e_{depth+1}` becomes the revealed entity and
/// the answer is unchanged.
pub fn truncate(chain: &ReasoningChain, depth: usize) -> Result<ReasoningChain, ChainError> {
    if depth == 0 || depth > chain.layers.len() {
        return Err(ChainError::DepthOutOfRange { depth, max: chain.layers.len() });
    }
    Ok(ReasoningChain { layers: chain.layers[..depth].to_vec(), difficulty: chain.difficulty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RawTriple;
    use crate::synth::{self, SynthParams};
    use alloc::collections::BTreeMap;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// alice knows bob; dana knows bob; alice knows eve;
    /// alice child_of carol; bob child_of carol
    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::build(
            vec![
                RawTriple::entity("Alice", "knows", "Bob"),
                RawTriple::entity("Dana", "knows", "Bob"),
                RawTriple::entity("Alice", "knows", "Eve"),
                RawTriple::entity("Alice", "child_of", "Carol"),
                RawTriple::entity("Bob", "child_of", "Carol"),
            ],
            "type",
        )
    }

    fn id(kg: &KnowledgeGraph, t: &str) -> EntityId {
        kg.entity(t).unwrap()
    }

    fn rel(kg: &KnowledgeGraph, t: &str) -> RelationId {
        kg.relation(t).unwrap()
    }

    fn layer(kg: &KnowledgeGraph, e: &str, r: &str, n: &str, fr: &str, fe: &str, d: Difficulty) -> ChainLayer {
        ChainLayer {
            entity: id(kg, e),
            relation: rel(kg, r),
            next: id(kg, n),
            fact: Fact { relation: rel(kg, fr), target: id(kg, fe), difficulty: d },
        }
    }

    #[test]
    fn valid_relations_need_two_objects() {
        let kg = KnowledgeGraph::build(
            vec![
                RawTriple::entity("Tiger", "award", "Masters"),
                RawTriple::entity("Tiger", "award", "Open"),
                RawTriple::entity("Tiger", "college", "Stanford"),
                RawTriple::entity("Solo", "college", "Yale"),
            ],
            "type",
        );
        let tiger = valid_relations(&kg, id(&kg, "Tiger"));
        assert_eq!(tiger, vec![rel(&kg, "award")]);
        assert!(valid_relations(&kg, id(&kg, "Solo")).is_empty());
    }

    #[test]
    fn easy_and_hard_fact_selection() {
        let kg = KnowledgeGraph::build(
            vec![
                RawTriple::entity("Jason_Connery", "father", "Sean_Connery"),
                RawTriple::entity("NBCUniversal", "parentCompany", "Comcast"),
                RawTriple::entity("Xfinity", "parentCompany", "Comcast"),
            ],
            "type",
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let none = BTreeSet::new();
        let easy = select_fact(&kg, id(&kg, "Jason_Connery"), Difficulty::Easy, &mut rng, &none, None).unwrap();
        assert_eq!((easy.relation, easy.target), (rel(&kg, "father"), id(&kg, "Sean_Connery")));
        let hard = select_fact(&kg, id(&kg, "NBCUniversal"), Difficulty::Hard, &mut rng, &none, None).unwrap();
        assert_eq!((hard.relation, hard.target), (rel(&kg, "parentCompany"), id(&kg, "Comcast")));
        assert!(select_fact(&kg, id(&kg, "NBCUniversal"), Difficulty::Easy, &mut rng, &none, None).is_none());
        assert!(select_fact(&kg, id(&kg, "Comcast"), Difficulty::Hard, &mut rng, &none, None).is_none());
    }

    /// Every (relation, next, fact) combination out of alice, checked against
    /// the layer criteria by direct counting.
    #[test]
    fn extend_layer_matches_enumeration() {
        let kg = toy();
        let alice = id(&kg, "Alice");
        let mut expected = BTreeSet::new();
        for (r, _) in kg.outgoing(alice) {
            let objs: Vec<_> = kg.triples().filter(|t| t.subject == alice && t.predicate == *r).collect();
            if objs.len() < 2 {
                continue;
            }
            for t in objs {
                let crate::kg::Object::Entity(next) = t.object else { continue };
                for &(fr, fe) in kg.outgoing(alice) {
                    if fr == *r || fe == next || fe == alice {
                        continue;
                    }
                    let backward = kg.triples().filter(|u| u.predicate == fr && u.object == crate::kg::Object::Entity(fe)).count();
                    if backward >= 2 {
                        expected.insert((*r, next, fr, fe));
                    }
                }
            }
        }
        assert_eq!(expected.len(), 2);
        assert!(expected.contains(&(rel(&kg, "knows"), id(&kg, "Bob"), rel(&kg, "child_of"), id(&kg, "Carol"))));
        assert!(expected.contains(&(rel(&kg, "knows"), id(&kg, "Eve"), rel(&kg, "child_of"), id(&kg, "Carol"))));
        let visited: BTreeSet<_> = [alice].into_iter().collect();
        let mut seen = BTreeSet::new();
        for s in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            if let Some(l) = extend_layer(&kg, alice, Difficulty::Hard, &mut rng, &visited) {
                seen.insert((l.relation, l.next, l.fact.relation, l.fact.target));
            }
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn extend_layer_dead_ends() {
        let kg = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let carol = id(&kg, "Carol");
        assert!(extend_layer(&kg, carol, Difficulty::Hard, &mut rng, &[carol].into_iter().collect()).is_none());

        // every fact of x is shared with y
        let kg = KnowledgeGraph::build(
            vec![
                RawTriple::entity("x", "r", "a"),
                RawTriple::entity("x", "r", "b"),
                RawTriple::entity("x", "f", "c"),
                RawTriple::entity("y", "f", "c"),
            ],
            "type",
        );
        let x = id(&kg, "x");
        let f = rel(&kg, "f");
        let c = id(&kg, "c");
        assert_eq!(kg.triples().filter(|t| t.predicate == f && t.object == crate::kg::Object::Entity(c)).count(), 2);
        for s in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            assert!(extend_layer(&kg, x, Difficulty::Easy, &mut rng, &[x].into_iter().collect()).is_none());
        }
    }

    #[test]
    fn walks_respect_depth_and_are_deterministic() {
        let (triples, seeds) = synth::generate(&SynthParams::new(150, 3));
        let kg = KnowledgeGraph::build(triples, synth::TYPE_PREDICATE);
        let seed = kg.entity(&seeds[0]).unwrap();
        for s in 0..20 {
            let a = random_walk(&kg, seed, 5, Difficulty::Hard, &mut ChaCha8Rng::seed_from_u64(s));
            let b = random_walk(&kg, seed, 5, Difficulty::Hard, &mut ChaCha8Rng::seed_from_u64(s));
            assert_eq!(a, b);
            if let Some(c) = a {
                assert!(c.depth() <= 5);
            }
        }
        let carol = id(&toy(), "Carol");
        assert!(random_walk(&toy(), carol, 5, Difficulty::Hard, &mut ChaCha8Rng::seed_from_u64(0)).is_none());
    }

    #[test]
    fn mining_dedups_and_handles_empty_seeds() {
        let kg = toy();
        let params = MiningParams::new(Difficulty::Hard, 9);
        assert!(mine_chains(&kg, &[], &params).is_empty());
        // alice has two valid walks (via Bob or Eve); 50 attempts and a repeated seed yield each once
        let alice = id(&kg, "Alice");
        let chains = mine_chains(&kg, &[alice, alice], &params);
        let mut got: Vec<_> = chains.iter().map(|c| c.layers.clone()).collect();
        got.sort();
        let mut want = vec![
            vec![layer(&kg, "Alice", "knows", "Bob", "child_of", "Carol", Difficulty::Hard)],
            vec![layer(&kg, "Alice", "knows", "Eve", "child_of", "Carol", Difficulty::Hard)],
        ];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn viability_examples() {
        let kg = toy();
        let good = ReasoningChain {
            layers: vec![layer(&kg, "Alice", "knows", "Bob", "child_of", "Carol", Difficulty::Hard)],
            difficulty: Difficulty::Hard,
        };
        assert_eq!(viability_filter(&kg, &good), Ok(Viability::Pass));
        let expected: BTreeSet<_> = [id(&kg, "Alice")].into_iter().collect();
        assert_eq!(brute_force_solve(&kg, &good), expected);

        let kg2 = KnowledgeGraph::build(
            vec![
                RawTriple::entity("Alice", "knows", "Bob"),
                RawTriple::entity("Dana", "knows", "Bob"),
                RawTriple::entity("Alice", "works_at", "Acme"),
                RawTriple::entity("Dana", "works_at", "Acme"),
            ],
            "type",
        );
        let bad = ReasoningChain {
            layers: vec![layer(&kg2, "Alice", "knows", "Bob", "works_at", "Acme", Difficulty::Hard)],
            difficulty: Difficulty::Hard,
        };
        assert_eq!(viability_filter(&kg2, &bad), Ok(Viability::Fail { layer: 0 }));
        assert_eq!(brute_force_solve(&kg2, &bad).len(), 2);

        let empty = ReasoningChain { layers: vec![], difficulty: Difficulty::Hard };
        assert_eq!(viability_filter(&kg, &empty), Err(ChainError::EmptyChain));
    }

    #[test]
    fn truncation() {
        let kg = toy();
        let l = layer(&kg, "Alice", "knows", "Bob", "child_of", "Carol", Difficulty::Hard);
        let chain = ReasoningChain { layers: vec![l; 5], difficulty: Difficulty::Hard };
        assert_eq!(truncate(&chain, 5).unwrap(), chain);
        let t3 = truncate(&chain, 3).unwrap();
        assert_eq!(t3.layers[..], chain.layers[..3]);
        assert_eq!(t3.answer(), chain.answer());
        assert_eq!(truncate(&chain, 0), Err(ChainError::DepthOutOfRange { depth: 0, max: 5 }));
        assert!(truncate(&chain, 6).is_err());
    }

    #[test]
    fn records_round_trip() {
        let kg = toy();
        let chain = ReasoningChain {
            layers: vec![layer(&kg, "Alice", "knows", "Bob", "child_of", "Carol", Difficulty::Hard)],
            difficulty: Difficulty::Hard,
        };
        let record = chain.to_record(&kg);
        assert_eq!(record.seed, "Alice");
        assert_eq!(record.resolve(&kg).unwrap(), chain);
    }

    fn check_chain(kg: &KnowledgeGraph, c: &ReasoningChain) -> Result<(), TestCaseError> {
        let mut entities = c.chain_entities();
        let n = entities.len();
        entities.sort();
        entities.dedup();
        prop_assert_eq!(entities.len(), n, "repeated chain entity");
        for (i, l) in c.layers.iter().enumerate() {
            prop_assert!(kg.contains(l.entity, l.relation, l.next));
            prop_assert!(kg.contains(l.entity, l.fact.relation, l.fact.target));
            prop_assert!(kg.objects(l.entity, l.relation).len() >= 2);
            prop_assert!(!entities.contains(&l.fact.target));
            prop_assert!(l.fact.relation != l.relation);
            if i + 1 < c.layers.len() {
                prop_assert_eq!(l.next, c.layers[i + 1].entity);
            }
            let backward = kg.subjects(l.fact.relation, l.fact.target).len();
            match c.difficulty {
                Difficulty::Easy => prop_assert_eq!(backward, 1),
                Difficulty::Hard => prop_assert!(backward >= 2),
            }
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn mined_chains_agree_with_oracle(n in 50usize..500, seed in 0u64..1000, hard in any::<bool>()) {
            let (triples, seeds) = synth::generate(&SynthParams::new(n, seed));
            let kg = KnowledgeGraph::build(triples, synth::TYPE_PREDICATE);
            let seeds: Vec<_> = seeds.iter().take(8).map(|s| kg.entity(s).unwrap()).collect();
            let difficulty = if hard { Difficulty::Hard } else { Difficulty::Easy };
            let mut params = MiningParams::new(difficulty, seed);
            params.walks_per_seed = 10;
            let chains = mine_chains(&kg, &seeds, &params);
            let mut keys = BTreeMap::new();
            for c in &chains {
                check_chain(&kg, c)?;
                prop_assert!(keys.insert(c.layers.clone(), ()).is_none());
                let pass = viability_filter(&kg, c).unwrap().passed();
                let solved = brute_force_solve(&kg, c);
                if pass {
                    prop_assert_eq!(solved.into_iter().collect::<Vec<_>>(), vec![c.answer()]);
                    for d in 1..=c.depth() {
                        prop_assert!(viability_filter(&kg, &truncate(c, d).unwrap()).unwrap().passed());
                    }
                }
            }
            prop_assert_eq!(mine_chains(&kg, &seeds, &params), chains);
        }
    }
}
