//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chainqa::config::PipelineConfig;
use chainqa::formats::dataset;
use chainqa::pipeline::{self, Clients, SolverChoice};
use chainqa_core::analyze::{self, SimilarityRecord};
use chainqa_core::chain::{self, Difficulty, MiningParams, ReasoningChain, Viability};
use chainqa_core::client::ScriptedChat;
use chainqa_core::eval::{self, AggregationRule, PromptMode};
use chainqa_core::filters::{self, FilterOutcome};
use chainqa_core::kg::{KnowledgeGraph, Term};
use chainqa_core::render::RenderedQuestion;
use chainqa_core::rng;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

/// Lookup tables built straight from the raw triple list.
struct Naive {
    facts: HashSet<(String, String, String)>,
    subjects: HashMap<(String, String), Vec<String>>,
}

impl Naive {
    fn new(kg: &KnowledgeGraph) -> Self {
        let list = entity_triples(kg);
        let mut subjects: HashMap<(String, String), Vec<String>> = HashMap::new();
        for (s, p, o) in &list {
            subjects.entry((p.clone(), o.clone())).or_default().push(s.clone());
        }
        Naive { facts: list.into_iter().collect(), subjects }
    }

    /// Backward resolution: every first-layer entity for which some
    /// assignment satisfies every layer.
    fn solve(&self, c: &ChainRecordView) -> BTreeSet<String> {
        let mut frontier: BTreeSet<String> = [c.last_next.clone()].into_iter().collect();
        for (relation, fact_relation, fact_entity) in c.layers.iter().rev() {
            frontier = frontier
                .iter()
                .flat_map(|o| self.subjects.get(&(relation.clone(), o.clone())).into_iter().flatten())
                .filter(|s| self.facts.contains(&((*s).clone(), fact_relation.clone(), fact_entity.clone())))
                .cloned()
                .collect();
        }
        frontier
    }

    fn fact_solutions(&self, relation: &str, entity: &str) -> usize {
        self.subjects.get(&(relation.to_string(), entity.to_string())).map_or(0, |v| v.iter().collect::<BTreeSet<_>>().len())
    }
}

struct ChainRecordView {
    layers: Vec<(String, String, String)>,
    last_next: String,
}

fn view_of_question(q: &RenderedQuestion) -> ChainRecordView {
    ChainRecordView {
        layers: q.layers.iter().map(|l| (l.relation.clone(), l.fact_relation.clone(), l.fact_entity.clone())).collect(),
        last_next: q.layers.last().unwrap().next.clone(),
    }
}

fn view_of_chain(kg: &KnowledgeGraph, c: &ReasoningChain) -> ChainRecordView {
    ChainRecordView {
        layers: c
            .layers
            .iter()
            .map(|l| {
                (
                    kg.relation_term(l.relation).to_string(),
                    kg.relation_term(l.fact.relation).to_string(),
                    kg.entity_term(l.fact.target).to_string(),
                )
            })
            .collect(),
        last_next: kg.entity_term(c.layers.last().unwrap().next).to_string(),
    }
}

fn entity_triples(kg: &KnowledgeGraph) -> Vec<(String, String, String)> {
    kg.raw_triples()
        .into_iter()
        .filter_map(|t| match t.object {
            Term::Entity(o) => Some((t.subject, t.predicate, o)),
            Term::Literal(_) => None,
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let (mut questions, mut chains, mut graphs) = (0, 0, 0);
    for g in 0..20u64 {
        let entities = 50 + 23 * g as usize;
        let run = common::generate(entities, 100 + g, 10);
        let kg = &run.graph.kg;
        let naive = Naive::new(kg);
        for q in &run.out.questions {
            let solved = naive.solve(&view_of_question(q));
            ensure!(solved == [q.answer.clone()].into_iter().collect(), "question {} resolves to {solved:?}", q.id);
            let lib = chain::brute_force_solve(kg, &q.to_chain(kg).map_err(|e| e.to_string())?);
            ensure!(lib.len() == 1, "library oracle gives {} answers for {}", lib.len(), q.id);
            questions += 1;
        }
        let seeds: Vec<_> = pipeline::read_seeds(&run.cfg).unwrap().iter().filter_map(|s| kg.entity(s)).collect();
        for difficulty in [Difficulty::Easy, Difficulty::Hard] {
            let params = MiningParams { walks_per_seed: 10, max_depth: 5, difficulty, global_seed: run.cfg.seed };
            for c in pipeline::mine_parallel(kg, &seeds, &params) {
                if chain::viability_filter(kg, &c) == Ok(Viability::Pass) {
                    let solved = naive.solve(&view_of_chain(kg, &c));
                    ensure!(
                        solved == [kg.entity_term(c.answer()).to_string()].into_iter().collect(),
                        "viable chain from {} disagrees with the oracle",
                        kg.entity_term(c.answer())
                    );
                    chains += 1;
                }
            }
        }
        graphs += 1;
    }
    let elapsed = started.elapsed();
    ensure!(questions > 0, "no questions generated");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:.1?}");
    Ok(format!("{graphs} graphs, {questions} questions, {chains} viable chains, 0 disagreements, {elapsed:.1?}"))
}

fn criterion_2() -> Outcome {
    let mut checked = 0;
    for seed in [3u64, 8, 13] {
        let run = common::generate(220, seed, 15);
        let naive = Naive::new(&run.graph.kg);
        for q in &run.out.questions {
            for l in &q.layers {
                let n = naive.fact_solutions(&l.fact_relation, &l.fact_entity);
                let ok = match q.difficulty {
                    Difficulty::Easy => n == 1,
                    Difficulty::Hard => n >= 2,
                };
                ensure!(ok, "{} question {} has a fact with {n} solutions", q.difficulty, q.id);
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} facts counted"))
}

fn accuracy(cfg: &PipelineConfig, kg: &KnowledgeGraph, qs: &[RenderedQuestion], choice: SolverChoice) -> Result<f64, String> {
    let (results, _, _) = pipeline::run_solver(cfg, &choice, kg, qs, &PromptMode::Direct).map_err(|e| e.to_string())?;
    Ok(results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64)
}

fn criterion_3() -> Outcome {
    let mut worst_hard: f64 = 0.0;
    let mut smallest = usize::MAX;
    for seed in 0..5u64 {
        let run = common::generate(300, 40 + seed, 20);
        let kg = &run.graph.kg;
        let pick = |d: Difficulty, depth: usize| -> Vec<RenderedQuestion> {
            run.out.questions.iter().filter(|q| q.difficulty == d && q.depth == depth).cloned().collect()
        };
        let easy = pick(Difficulty::Easy, 5);
        ensure!(easy.len() >= 100, "seed {seed}: only {} easy questions", easy.len());
        smallest = smallest.min(easy.len());
        let a = accuracy(&run.cfg, kg, &easy, SolverChoice::FactOnly)?;
        ensure!(a == 1.0, "seed {seed}: fact-only scores {a} on easy");
        ensure!(accuracy(&run.cfg, kg, &easy, SolverChoice::Oracle)? == 1.0, "seed {seed}: oracle below 1 on easy");
        for depth in 1..=5 {
            let hard = pick(Difficulty::Hard, depth);
            ensure!(hard.len() >= 100, "seed {seed}: only {} hard questions at depth {depth}", hard.len());
            smallest = smallest.min(hard.len());
            let a = accuracy(&run.cfg, kg, &hard, SolverChoice::FactOnly)?;
            ensure!((0.0..=0.6).contains(&a), "seed {seed}: fact-only scores {a:.3} on hard depth {depth}");
            worst_hard = worst_hard.max(a);
            ensure!(
                accuracy(&run.cfg, kg, &hard, SolverChoice::Oracle)? == 1.0,
                "seed {seed}: oracle below 1 on hard depth {depth}"
            );
        }
    }
    Ok(format!("easy 1.000, hard at most {worst_hard:.3}, oracle 1.000, smallest set {smallest}"))
}

fn criterion_4() -> Outcome {
    let run = common::generate(300, 77, 20);
    let kg = &run.graph.kg;
    let (mut checked, mut leaking) = (0, 0);
    for q in run.out.questions.iter().filter(|q| q.depth == 5) {
        for d in 1..=4 {
            let t = match q.truncate(d) {
                Ok(t) => t,
                Err(_) => {
                    // the revealed entity would leak a masked label; such
                    // truncations never enter the dataset
                    leaking += 1;
                    continue;
                }
            };
            ensure!(t.answer == q.answer && t.answer_label == q.answer_label, "{} lost its answer at depth {d}", q.id);
            for (a, b) in t.layers.iter().zip(&q.layers) {
                ensure!(a.masked_relation == b.masked_relation && a.masked_fact == b.masked_fact, "{} pair changed", q.id);
            }
            let prefix: Vec<&str> = std::iter::once(q.opening.as_str())
                .chain(q.layers[..d].iter().flat_map(|l| [l.masked_relation.as_str(), l.masked_fact.as_str()]))
                .collect();
            ensure!(t.question_text.starts_with(&prefix.join(" ")), "{} text prefix differs at depth {d}", q.id);
            let solved = chain::brute_force_solve(kg, &t.to_chain(kg).map_err(|e| e.to_string())?);
            ensure!(
                solved.iter().map(|&e| kg.entity_term(e)).collect::<Vec<_>>() == [q.answer.as_str()],
                "{} depth {d} no longer resolves to its answer",
                q.id
            );
            checked += 1;
        }
    }
    for t in run.out.questions.iter().filter(|q| q.parent.is_some()) {
        let parent = run.out.questions.iter().find(|p| Some(&p.id) == t.parent.as_ref()).ok_or("missing parent")?;
        ensure!(parent.answer == t.answer && parent.layers[..t.depth] == t.layers[..], "emitted {} differs from its parent", t.id);
    }
    ensure!(checked > 0, "nothing truncated");
    Ok(format!("{checked} truncations checked, {leaking} rejected by the leak check"))
}

fn criterion_5() -> Outcome {
    let c = PipelineConfig::default();
    let pairs: [(&str, f64, f64); 9] = [
        ("n_max", c.mining.n_max as f64, 5.0),
        ("walks_per_seed", c.mining.walks_per_seed as f64, 50.0),
        ("judge runs", c.filter.runs as f64, 3.0),
        ("eval samples", c.eval.samples as f64, 5.0),
        ("eval temperature", c.eval.temperature, 0.8),
        ("rag cap", c.eval.rag_cap as f64, 20.0),
        ("window width", c.analysis.window_width, 0.1),
        ("window step", c.analysis.window_step, 0.01),
        ("window start", c.analysis.window_start, 0.0),
    ];
    for (name, got, want) in pairs {
        ensure!(got == want, "{name} defaults to {got}, expected {want}");
    }
    ensure!(c.eval.rule == AggregationRule::Majority, "aggregation is not majority");
    let plan = c.split_plan();
    let sizes: Vec<_> = plan.buckets.iter().map(|b| (b.name(), b.count)).collect();
    ensure!(
        sizes.iter().map(|(_, n)| *n).collect::<Vec<_>>() == [Some(428), Some(1363), Some(300), Some(300), Some(300), Some(300)],
        "split plan is {sizes:?}"
    );
    Ok("n_max 5, walks 50, runs 3, samples 5, T 0.8, cap 20, window 0.1/0.01".into())
}

fn criterion_6() -> Outcome {
    let run = common::generate(300, 5, 20);
    let kg = &run.graph.kg;
    let mut lines = 0;
    'outer: for q in &run.out.questions {
        let knowledge = eval::rag_context(kg, q, 20, &mut rng::stream(run.cfg.seed, &q.id)).map_err(|e| e.to_string())?;
        let mut golds: Vec<&str> = q.layers.iter().map(|l| l.entity_label.as_str()).collect();
        golds.push(&q.layers.last().unwrap().entity_label);
        ensure!(knowledge.len() == golds.len(), "{}: {} lines for depth {}", q.id, knowledge.len(), q.depth);
        for (line, gold) in knowledge.iter().zip(golds) {
            let (_, list) = line.split_once(">: ").ok_or_else(|| format!("malformed line {line:?}"))?;
            let names: Vec<&str> = list.split(", ").collect();
            ensure!(names.len() <= 20, "{} candidates in {line:?}", names.len());
            ensure!(names.contains(&gold), "gold {gold} missing from {line:?}");
            lines += 1;
            if lines == 1000 {
                break 'outer;
            }
        }
    }
    ensure!(lines == 1000, "only {lines} knowledge lines");

    // gold position over 1000 capped draws from a pool larger than the cap
    let pool: Vec<_> = kg.entities().take(120).collect();
    let mut counts = [0usize; 20];
    for i in 0..1000 {
        let gold = pool[i % pool.len()];
        let picked = eval::rag_candidates(&pool, gold, 20, &mut rng::stream(9, &format!("line-{i}")));
        ensure!(picked.len() == 20, "capped list has {} entries", picked.len());
        counts[picked.iter().position(|&e| e == gold).unwrap()] += 1;
    }
    let expected = 1000.0 / 20.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = ChiSquared::new(19.0).unwrap().sf(stat);
    ensure!(p > 0.01, "gold position chi-square {stat:.2}, p = {p:.4}");
    Ok(format!("1000 lines within cap with gold present; position chi-square {stat:.2}, p = {p:.3}"))
}

/// Double loop over window starts and records.
fn reference_curve(records: &[SimilarityRecord], start: f64, step: f64, width: f64) -> Vec<(f64, usize, Option<f64>)> {
    let max = records.iter().map(|r| r.mean_similarity).fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let x = start + k as f64 * step;
        if records.is_empty() || x > max {
            return out;
        }
        let (mut n, mut hits) = (0usize, 0usize);
        for r in records {
            if r.mean_similarity >= x && r.mean_similarity <= x + width {
                n += 1;
                hits += r.correct as usize;
            }
        }
        out.push((x, n, (n > 0).then(|| hits as f64 / n as f64)));
        k += 1;
    }
}

fn criterion_7() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut points = 0;
    for set in 0..50 {
        let n = rng.random_range(1..300);
        let coarse = set % 3 == 0;
        let records: Vec<SimilarityRecord> = (0..n)
            .map(|i| {
                let s: f64 = rng.random_range(0.0..1.0);
                SimilarityRecord {
                    question_id: format!("r{i}"),
                    // snapping to the grid puts records on window edges
                    mean_similarity: if coarse { (s * 100.0).round() / 100.0 } else { s },
                    correct: rng.random_bool(0.5),
                    depth: 5,
                    difficulty: Difficulty::Hard,
                }
            })
            .collect();
        let got: Vec<_> = analyze::accuracy_curve(&records, 0.0, 0.01, 0.1)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| (p.x_start, p.count, p.accuracy))
            .collect();
        ensure!(got == reference_curve(&records, 0.0, 0.01, 0.1), "set {set} differs from the reference");
        points += got.len();

        let all: Vec<_> = records.into_iter().map(|r| SimilarityRecord { correct: true, ..r }).collect();
        for p in analyze::accuracy_curve(&all, 0.0, 0.01, 0.1).map_err(|e| e.to_string())? {
            ensure!(p.count == 0 || p.accuracy == Some(1.0), "all-correct set {set} reports {:?}", p.accuracy);
        }
    }
    Ok(format!("50 sets, {points} points equal the reference"))
}

fn criterion_8() -> Outcome {
    let table = [("YYY", ["Yes", "Yes", "Yes"], true), ("YYN", ["Yes", "Yes", "No"], true), ("YNN", ["Yes", "No", "No"], false), ("NNN", ["No", "No", "No"], false)];
    for (name, votes, want) in table {
        let judge = ScriptedChat::new("judge").with(&filters::judge_prompt("S."), votes);
        let v = filters::judge_statement(&judge, "S.", 3, 0.8).map_err(|e| e.to_string())?;
        ensure!(v.memorized == want, "{name} judged {}", v.memorized);
    }

    let base = common::generate(200, 21, 10);
    let victim = base.out.questions.iter().find(|q| q.depth == 5 && q.parent.is_none()).ok_or("no question")?;
    let failing = victim.layers[2].fact_statement.clone();
    let judge = ScriptedChat::new("judge").with_fallback(["Yes"]).with(&filters::judge_prompt(&failing), ["Yes", "No", "No"]);
    let outcome = filters::knowledge_filter(&judge, victim, 3, 0.8).map_err(|e| e.to_string())?;
    ensure!(matches!(outcome, FilterOutcome::Drop { layer: 2, .. }), "filter returned {outcome:?}");

    let clients = Clients { judge: Some(Box::new(judge)), ..Default::default() };
    let filtered = common::generate_with(200, 21, 10, &clients);
    let uses = |q: &RenderedQuestion| q.layers.iter().any(|l| l.fact_statement == failing || l.relation_statement == failing);
    ensure!(filtered.out.questions.iter().all(|q| !uses(q)), "a question judging {failing:?} survived");
    ensure!(filtered.out.questions.len() < base.out.questions.len(), "nothing was dropped");
    Ok(format!(
        "YYY/YYN/YNN/NNN -> T/T/F/F; {} of {} questions dropped for one failing statement",
        base.out.questions.len() - filtered.out.questions.len(),
        base.out.questions.len()
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_chainqa")).args(args).output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "chainqa {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    common::synth_workspace(dir.path(), 250, 9, 20);
    let config = dir.path().join("config.toml");
    let config = config.to_str().unwrap();
    let out = |name: &str| dir.path().join(name);
    for name in ["run-a", "run-b"] {
        run_cli(&["generate", "-c", config, "--out", out(name).to_str().unwrap()])?;
    }
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let mut bytes = 0;
    for file in ["questions.jsonl", "chains.jsonl", "manifest.json", "stats.tsv"] {
        let a = read(&out("run-a").join(file))?;
        let b = read(&out("run-b").join(file))?;
        ensure!(a == b, "{file} differs between runs");
        bytes += a.len();
    }
    let n = dataset::read_jsonl::<RenderedQuestion>(&out("run-a").join("questions.jsonl")).map_err(|e| e.to_string())?.len();
    ensure!(n > 0, "empty dataset");
    Ok(format!("{n} questions, {bytes} bytes identical across runs"))
}

/// Hand-labeled responses against their gold answers.
const MATCH_FIXTURE: [(&str, &str, bool); 20] = [
    ("The answer is Leonardo DiCaprio.", "Leonardo DiCaprio", true),
    ("The answer is Adam Sandler.", "Leonardo DiCaprio", false),
    ("leonardo dicaprio", "Leonardo DiCaprio", true),
    ("LEONARDO   DiCaprio starred in it", "Leonardo DiCaprio", true),
    ("Leonardo\nDiCaprio", "Leonardo DiCaprio", true),
    ("DiCaprio", "Leonardo DiCaprio", false),
    ("Leonardo", "Leonardo DiCaprio", false),
    ("It must be Princeton University.", "Princeton University", true),
    ("Princeton", "Princeton University", false),
    ("The answer is Paris", "Paris", true),
    ("The answer is Paris, Texas.", "Paris", true),
    ("I don't know.", "Paris", false),
    ("", "Paris", false),
    ("Paris", "", false),
    ("The answer is Sean Connery.", "Sean Connery", true),
    ("Sean Connory", "Sean Connery", false),
    ("The answer is Comcast.", "Comcast", true),
    ("comcast corporation", "Comcast", true),
    ("The answer is NBCUniversal.", "Comcast", false),
    ("Barack Obama attended Princeton? No: the answer is Michelle Obama.", "Michelle Obama", true),
];

fn criterion_10() -> Outcome {
    for (i, (response, gold, want)) in MATCH_FIXTURE.iter().enumerate() {
        ensure!(eval::string_match(response, gold) == *want, "case {i}: {response:?} vs {gold:?}");
    }
    for mask in 0u32..32 {
        let responses: Vec<String> =
            (0..5).map(|i| if mask >> i & 1 == 1 { "The answer is Paris.".into() } else { "The answer is Rome.".into() }).collect();
        let want = mask.count_ones() >= 3;
        ensure!(
            eval::self_consistent_correct(&responses, &["Paris"], AggregationRule::Majority) == want,
            "majority over pattern {mask:05b}"
        );
    }
    Ok("20 fixture cases and 32 majority patterns as labeled".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", criterion_1),
        ("difficulty semantics", criterion_2),
        ("shortcut gap", criterion_3),
        ("truncation keeps the answer", criterion_4),
        ("default constants", criterion_5),
        ("rag injection contract", criterion_6),
        ("analysis fidelity", criterion_7),
        ("knowledge filter truth table", criterion_8),
        ("determinism", criterion_9),
        ("string-match scoring", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
