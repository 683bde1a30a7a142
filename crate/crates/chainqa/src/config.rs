//! Pipeline configuration (TOML).
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use chainqa_core::analyze::{DEFAULT_WINDOW_START, DEFAULT_WINDOW_STEP, DEFAULT_WINDOW_WIDTH};
use chainqa_core::chain::{Difficulty, DEFAULT_MAX_DEPTH, DEFAULT_WALKS_PER_SEED};
use chainqa_core::client::DEFAULT_TEMPERATURE;
use chainqa_core::eval::{AggregationRule, DEFAULT_RAG_CAP, DEFAULT_SAMPLES};
use chainqa_core::filters::{BucketSpec, SplitPlan, DEFAULT_JUDGE_RUNS};
use chainqa_core::render::PersonCategories;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formats::triples::TripleFormat;
use crate::llm::embed::DEFAULT_TRIGRAM_DIM;
use crate::llm::http::HttpModelConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every random choice derives from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Seed entity list, one term per line.
    pub seeds: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
    /// Response cache directory for remote models; none disables caching.
    pub cache_dir: Option<PathBuf>,
    pub kg: KgConfig,
    pub mining: MiningConfig,
    pub render: RenderSection,
    pub filter: FilterConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
    pub embedder: EmbedderConfig,
    pub models: ModelsConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: "out".into(),
            seeds: "seeds.txt".into(),
            workers: 0,
            cache_dir: None,
            kg: KgConfig::default(),
            mining: MiningConfig::default(),
            render: RenderSection::default(),
            filter: FilterConfig::default(),
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
            analysis: AnalysisConfig::default(),
            embedder: EmbedderConfig::default(),
            models: ModelsConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgConfig {
    pub path: PathBuf,
    pub format: TripleFormat,
    pub type_predicate: String,
    /// Optional `term<TAB>label` overrides.
    pub labels: Option<PathBuf>,
}

impl Default for KgConfig {
    fn default() -> Self {
        KgConfig {
            path: "kg.tsv".into(),
            format: TripleFormat::Auto,
            type_predicate: "http://www.w3.org/1999/02/22-rdf-syntax-ns#type".into(),
            labels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub difficulties: Vec<Difficulty>,
    pub n_max: usize,
    pub walks_per_seed: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            difficulties: vec![Difficulty::Easy, Difficulty::Hard],
            n_max: DEFAULT_MAX_DEPTH,
            walks_per_seed: DEFAULT_WALKS_PER_SEED,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerbalizerChoice {
    #[default]
    Template,
    Chat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub verbalizer: VerbalizerChoice,
    /// Ask the typing model for hypernyms missing from the graph.
    pub typing: bool,
    pub allow_hypernym_fallback: bool,
    pub persons: Vec<String>,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            verbalizer: VerbalizerChoice::Template,
            typing: false,
            allow_hypernym_fallback: true,
            persons: PersonCategories::default().iter().map(String::from).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Run the knowledge filter (needs `models.judge`).
    pub enabled: bool,
    pub runs: usize,
    pub temperature: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { enabled: false, runs: DEFAULT_JUDGE_RUNS, temperature: DEFAULT_TEMPERATURE }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanChoice {
    /// The published split sizes.
    #[default]
    Standard,
    /// Everything available, truncated to every shallower depth.
    All,
    /// `buckets` as given.
    Custom,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub plan: PlanChoice,
    pub buckets: Vec<BucketSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub samples: usize,
    pub temperature: f64,
    pub rule: AggregationRule,
    pub rag_cap: usize,
    /// Exemplar file; the bundled set is used when absent.
    pub exemplars: Option<PathBuf>,
    /// JSON map from answer term to extra accepted strings.
    pub aliases: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: DEFAULT_SAMPLES,
            temperature: DEFAULT_TEMPERATURE,
            rule: AggregationRule::Majority,
            rag_cap: DEFAULT_RAG_CAP,
            exemplars: None,
            aliases: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub window_start: f64,
    pub window_step: f64,
    pub window_width: f64,
    pub bin_width: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window_start: DEFAULT_WINDOW_START,
            window_step: DEFAULT_WINDOW_STEP,
            window_width: DEFAULT_WINDOW_WIDTH,
            bin_width: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Trigram,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub http: Option<HttpModelConfig>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig { kind: EmbedderKind::Trigram, dim: DEFAULT_TRIGRAM_DIM, http: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub answer: Option<HttpModelConfig>,
    pub judge: Option<HttpModelConfig>,
    pub verbalizer: Option<HttpModelConfig>,
    pub typing: Option<HttpModelConfig>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.mining.n_max == 0 {
            return bad("mining.n_max must be at least 1");
        }
        if self.mining.n_max >= chainqa_core::render::MAX_CHAIN_ENTITIES {
            return bad("mining.n_max must leave room for one placeholder letter per chain entity");
        }
        if self.mining.walks_per_seed == 0 {
            return bad("mining.walks_per_seed must be at least 1");
        }
        if self.filter.runs.is_multiple_of(2) {
            return bad("filter.runs must be odd");
        }
        if self.eval.samples == 0 {
            return bad("eval.samples must be at least 1");
        }
        if self.eval.rag_cap == 0 {
            return bad("eval.rag_cap must be at least 1");
        }
        if !(self.analysis.window_step > 0.0 && self.analysis.window_width > 0.0 && self.analysis.bin_width > 0.0) {
            return bad("analysis step, width and bin width must be positive");
        }
        if self.split.plan == PlanChoice::Custom && self.split.buckets.is_empty() {
            return bad("split.plan = \"custom\" needs split.buckets");
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.output_dir).join(name)
    }

    pub fn split_plan(&self) -> SplitPlan {
        match self.split.plan {
            PlanChoice::Standard => SplitPlan::default(),
            PlanChoice::All => SplitPlan::take_all(self.mining.n_max),
            PlanChoice::Custom => SplitPlan { buckets: self.split.buckets.clone() },
        }
    }

    pub fn persons(&self) -> PersonCategories {
        PersonCategories::new(self.render.persons.iter().cloned())
    }

    /// SHA-256 over the canonical JSON form, first 16 hex digits. Output
    /// location, cache location and thread count do not change results and
    /// are left out.
    pub fn hash(&self) -> String {
        let canonical = PipelineConfig {
            output_dir: PathBuf::new(),
            cache_dir: None,
            workers: 0,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}
