#![allow(dead_code)]

use std::path::Path;

use chainqa::config::{KgConfig, PipelineConfig, PlanChoice, SplitConfig};
use chainqa::formats::{dataset, triples};
use chainqa::pipeline::{self, Clients, GenerateOutput, LoadedGraph};
use chainqa_core::synth::{self, SynthParams};
use tempfile::TempDir;

/// Writes a synthetic graph and seed list into `dir` and returns a config
/// pointing at them.
pub fn synth_workspace(dir: &Path, entities: usize, seed: u64, walks: usize) -> PipelineConfig {
    let (raw, seeds) = synth::generate(&SynthParams::new(entities, seed));
    dataset::write_text(&dir.join("kg.tsv"), &triples::dump_tsv3(&raw)).unwrap();
    dataset::write_text(&dir.join("seeds.txt"), &(seeds.join("\n") + "\n")).unwrap();
    let mut cfg = PipelineConfig {
        seed,
        kg: KgConfig { type_predicate: synth::TYPE_PREDICATE.into(), ..Default::default() },
        split: SplitConfig { plan: PlanChoice::All, buckets: Vec::new() },
        base_dir: dir.to_path_buf(),
        ..Default::default()
    };
    cfg.mining.walks_per_seed = walks;
    dataset::write_text(&dir.join("config.toml"), &cfg.to_toml()).unwrap();
    cfg
}

pub struct Generated {
    pub dir: TempDir,
    pub cfg: PipelineConfig,
    pub graph: LoadedGraph,
    pub out: GenerateOutput,
}

pub fn generate(entities: usize, seed: u64, walks: usize) -> Generated {
    generate_with(entities, seed, walks, &Clients::default())
}

pub fn generate_with(entities: usize, seed: u64, walks: usize, clients: &Clients) -> Generated {
    let dir = TempDir::new().unwrap();
    let cfg = synth_workspace(dir.path(), entities, seed, walks);
    let graph = pipeline::load_graph(&cfg).unwrap();
    let seeds = pipeline::read_seeds(&cfg).unwrap();
    let out = pipeline::generate(&cfg, &graph, &seeds, clients).unwrap();
    Generated { dir, cfg, graph, out }
}
