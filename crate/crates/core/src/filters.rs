//! Knowledge filtering and split manifests.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Difficulty;
use crate::client::{ChatClient, ChatError};
use crate::render::{RenderError, RenderedQuestion};
use crate::rng;

/// Judge samples per statement used by default.
pub const DEFAULT_JUDGE_RUNS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("judge run count must be odd, got {0}")]
    EvenRuns(usize),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("not enough questions for {}", format_deficits(.0))]
    Shortfall(Vec<Deficit>),
    #[error("truncated bucket {0} has no natural {1} bucket to draw parents from")]
    NoParentBucket(String, Difficulty),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficit {
    pub bucket: String,
    pub wanted: usize,
    pub available: usize,
}

fn format_deficits(d: &[Deficit]) -> String {
    d.iter()
        .map(|d| format!("{} (wanted {}, have {})", d.bucket, d.wanted, d.available))
        .collect::<Vec<_>>()
        .join(", ")
}

/// The judging prompt for one statement.
pub fn judge_prompt(statement: &str) -> String {
    format!("Is this statement correct: {statement} Yes or No?")
}

/// True when `response` contains the word "yes" (any case, word-bounded).
pub fn contains_yes(response: &str) -> bool {
    response
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case("yes"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub statement: String,
    pub votes: Vec<bool>,
    pub memorized: bool,
}

/// Asks the judge `runs` times and takes a strict majority of yes votes.
pub fn judge_statement(
    judge: &dyn ChatClient,
    statement: &str,
    runs: usize,
    temperature: f64,
) -> Result<JudgeVerdict, FilterError> {
    if runs.is_multiple_of(2) {
        return Err(FilterError::EvenRuns(runs));
    }
    let responses = judge.complete(&judge_prompt(statement), temperature, runs)?;
    let votes: Vec<bool> = responses.iter().map(|r| contains_yes(r)).collect();
    let yes = votes.iter().filter(|&&v| v).count();
    Ok(JudgeVerdict { statement: statement.to_string(), memorized: 2 * yes > votes.len(), votes })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatementKind {
    Relation,
    Fact,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FilterOutcome {
    Keep,
    /// First failing statement; `layer` is zero-based.
    Drop { layer: usize, kind: StatementKind },
}

/// Keeps a question only if both unmasked statements of every layer are
/// judged memorized. Stops at the first failure.
pub fn knowledge_filter(
    judge: &dyn ChatClient,
    question: &RenderedQuestion,
    runs: usize,
    temperature: f64,
) -> Result<FilterOutcome, FilterError> {
    for (i, layer) in question.layers.iter().enumerate() {
        for (kind, s) in [
            (StatementKind::Relation, &layer.relation_statement),
            (StatementKind::Fact, &layer.fact_statement),
        ] {
            if !judge_statement(judge, s, runs, temperature)?.memorized {
                return Ok(FilterOutcome::Drop { layer: i, kind });
            }
        }
    }
    Ok(FilterOutcome::Keep)
}

/// One split of the dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub difficulty: Difficulty,
    pub depth: usize,
    /// `None` takes everything available.
    #[serde(default)]
    pub count: Option<usize>,
    /// Built by truncating parents drawn at random from the natural bucket of
    /// the same difficulty.
    #[serde(default)]
    pub truncated: bool,
}

impl BucketSpec {
    pub fn natural(difficulty: Difficulty, depth: usize, count: Option<usize>) -> Self {
        BucketSpec { difficulty, depth, count, truncated: false }
    }

    pub fn truncated(difficulty: Difficulty, depth: usize, count: Option<usize>) -> Self {
        BucketSpec { difficulty, depth, count, truncated: true }
    }

    pub fn name(&self) -> String {
        format!("{}-d{}", self.difficulty.as_str(), self.depth)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub buckets: Vec<BucketSpec>,
}

impl Default for SplitPlan {
    /// 428 easy and 1363 hard five-layer questions, plus 300 hard questions at
    /// each depth from four down to one, truncated from the same 300 parents.
    fn default() -> Self {
        let mut buckets = alloc::vec![
            BucketSpec::natural(Difficulty::Easy, 5, Some(428)),
            BucketSpec::natural(Difficulty::Hard, 5, Some(1363)),
        ];
        for d in (1..=4).rev() {
            buckets.push(BucketSpec::truncated(Difficulty::Hard, d, Some(300)));
        }
        SplitPlan { buckets }
    }
}

impl SplitPlan {
    /// Every natural bucket takes all it can; truncation buckets cover
    /// depths `1..max_depth` for both difficulties.
    pub fn take_all(max_depth: usize) -> Self {
        let mut buckets = Vec::new();
        for d in [Difficulty::Easy, Difficulty::Hard] {
            buckets.push(BucketSpec::natural(d, max_depth, None));
            for depth in (1..max_depth).rev() {
                buckets.push(BucketSpec::truncated(d, depth, None));
            }
        }
        SplitPlan { buckets }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kg_snapshot: String,
    pub global_seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub splits: BTreeMap<String, Vec<String>>,
    pub provenance: Provenance,
}

/// Result of [`build_manifest`]: the manifest plus the truncated questions it
/// references.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestBuild {
    pub manifest: Manifest,
    pub truncated: Vec<RenderedQuestion>,
}

/// Groups question ids into the plan's buckets. Natural buckets take the
/// first questions of matching difficulty and depth in input order. For each
/// difficulty one parent sample is drawn from its natural bucket's selection
/// (uniformly, seeded by `seed`) and every truncated bucket of that
/// difficulty truncates a prefix of that sample.
pub fn build_manifest(
    questions: &[RenderedQuestion],
    plan: &SplitPlan,
    seed: u64,
) -> Result<ManifestBuild, FilterError> {
    let mut splits: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut deficits = Vec::new();
    let mut natural_pick: BTreeMap<Difficulty, Vec<&RenderedQuestion>> = BTreeMap::new();

    for b in plan.buckets.iter().filter(|b| !b.truncated) {
        let pool: Vec<&RenderedQuestion> = questions
            .iter()
            .filter(|q| q.parent.is_none() && q.difficulty == b.difficulty && q.depth == b.depth)
            .collect();
        let wanted = b.count.unwrap_or(pool.len());
        if pool.len() < wanted {
            deficits.push(Deficit { bucket: b.name(), wanted, available: pool.len() });
            continue;
        }
        let pick: Vec<&RenderedQuestion> = pool[..wanted].to_vec();
        splits.insert(b.name(), pick.iter().map(|q| q.id.clone()).collect());
        let entry = natural_pick.entry(b.difficulty).or_default();
        if entry.first().is_none_or(|q| q.depth < b.depth) {
            *entry = pick;
        }
    }

    let mut truncated = Vec::new();
    let mut emitted = BTreeSet::new();
    let difficulties: BTreeSet<Difficulty> =
        plan.buckets.iter().filter(|b| b.truncated).map(|b| b.difficulty).collect();
    for difficulty in difficulties {
        let buckets: Vec<&BucketSpec> =
            plan.buckets.iter().filter(|b| b.truncated && b.difficulty == difficulty).collect();
        let Some(parents) = natural_pick.get(&difficulty) else {
            if deficits.is_empty() {
                return Err(FilterError::NoParentBucket(buckets[0].name(), difficulty));
            }
            continue;
        };
        // parents whose every requested truncation renders cleanly
        let eligible: Vec<&RenderedQuestion> = parents
            .iter()
            .copied()
            .filter(|p| buckets.iter().all(|b| b.depth < p.depth && p.truncate(b.depth).is_ok()))
            .collect();
        let largest = buckets.iter().map(|b| b.count.unwrap_or(eligible.len())).max().unwrap_or(0);
        if eligible.len() < largest {
            for b in &buckets {
                let wanted = b.count.unwrap_or(eligible.len());
                if wanted > eligible.len() {
                    deficits.push(Deficit { bucket: b.name(), wanted, available: eligible.len() });
                }
            }
            continue;
        }
        let mut rng = rng::stream(seed, difficulty.as_str());
        let sample: Vec<&RenderedQuestion> =
            index::sample(&mut rng, eligible.len(), largest).into_iter().map(|i| eligible[i]).collect();
        for b in &buckets {
            let wanted = b.count.unwrap_or(eligible.len());
            let mut ids = Vec::with_capacity(wanted);
            for p in &sample[..wanted] {
                let t = p.truncate(b.depth)?;
                ids.push(t.id.clone());
                if emitted.insert(t.id.clone()) {
                    truncated.push(t);
                }
            }
            splits.insert(b.name(), ids);
        }
    }

    if !deficits.is_empty() {
        return Err(FilterError::Shortfall(deficits));
    }
    Ok(ManifestBuild { manifest: Manifest { splits, provenance: Provenance::default() }, truncated })
}
