//! Seeded synthetic knowledge graphs for tests, demos and acceptance runs.
//!
//! Entities get unique two-word pronounceable names, a type literal (most of
//! them), and a few multi-object relations. A small popular pool attracts a
//! share of the edges so that both easy (unique backward) and hard (shared
//! backward) facts are common.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::RawTriple;

pub const TYPE_PREDICATE: &str = "type";

pub const RELATIONS: &[&str] = &[
    "knows",
    "child_of",
    "works_at",
    "friend_of",
    "born_in",
    "lives_in",
    "member_of",
    "starring",
    "directed_by",
    "written_by",
    "located_in",
    "founded_by",
];

pub const TYPES: &[&str] = &["person", "film", "city", "company", "band", "book"];

const SYLLABLES: &[&str] = &[
    "ba", "ko", "ri", "lu", "me", "sa", "to", "vi", "da", "ne", "po", "gu", "fe", "mi", "ra", "zo", "ki", "le",
    "nu", "ta",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub entities: usize,
    pub seed: u64,
    /// Relations per entity, inclusive range.
    pub relations_per_entity: (usize, usize),
    /// Probability that an edge targets the popular pool.
    pub popular_share: f64,
    /// Fraction of entities in the popular pool.
    pub popular_fraction: f64,
    /// Fraction of entities left without a type triple.
    pub untyped_fraction: f64,
    /// Fraction of entities returned as walk seeds.
    pub seed_fraction: f64,
}

impl SynthParams {
    pub fn new(entities: usize, seed: u64) -> Self {
        SynthParams {
            entities,
            seed,
            relations_per_entity: (2, 4),
            popular_share: 0.35,
            popular_fraction: 0.1,
            untyped_fraction: 0.1,
            seed_fraction: 0.2,
        }
    }
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let a = SYLLABLES.choose(rng).unwrap();
    let b = SYLLABLES.choose(rng).unwrap();
    let mut w = format!("{a}{b}");
    w[..1].make_ascii_uppercase();
    w
}

/// Returns the triples and the seed entity terms.
pub fn generate(params: &SynthParams) -> (Vec<RawTriple>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.entities.max(2);

    let mut names = BTreeSet::new();
    let mut terms = Vec::with_capacity(n);
    while terms.len() < n {
        let name = format!("{}_{}", word(&mut rng), word(&mut rng));
        if names.insert(name.clone()) {
            terms.push(format!("synth/{name}"));
        }
    }

    let mut triples = Vec::new();
    for t in &terms {
        if !rng.random_bool(params.untyped_fraction) {
            let ty = TYPES.choose(&mut rng).unwrap();
            triples.push(RawTriple::literal(t, TYPE_PREDICATE, ty));
        }
    }

    let popular = ((n as f64 * params.popular_fraction) as usize).max(1);
    let (lo, hi) = params.relations_per_entity;
    for (i, t) in terms.iter().enumerate() {
        let k = rng.random_range(lo..=hi).min(RELATIONS.len());
        let rels: Vec<&&str> = RELATIONS.choose_multiple(&mut rng, k).collect();
        for r in rels {
            let m = match rng.random_range(0..20) {
                0..=5 => 1,
                6..=14 => 2,
                _ => 3,
            };
            for _ in 0..m {
                let j = if rng.random_bool(params.popular_share) {
                    rng.random_range(0..popular)
                } else {
                    rng.random_range(0..n)
                };
                if j != i {
                    triples.push(RawTriple::entity(t, r, &terms[j]));
                }
            }
        }
    }

    let mut seeds: Vec<String> = terms.clone();
    seeds.shuffle(&mut rng);
    seeds.truncate(((n as f64 * params.seed_fraction) as usize).max(1));
    (triples, seeds)
}
