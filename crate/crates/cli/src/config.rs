use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relrank::candidates::FallbackPolicy;
use relrank::trainer::{Experiment, OptimizerConfig, StepUnit, TrainConfig};
use relrank::{EncoderConfig, MarkerStyle, PromptStyle, RelationRegistry, TemplateConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision {other:?} (f32 or f64)")),
        }
    }
}

/// Everything a pipeline step needs. Written into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory with train.json, dev.json, test.json.
    pub data: Option<PathBuf>,
    /// Relation descriptions TSV. Defaults to `<data>/descriptions.tsv` when
    /// present, else the built-in table.
    pub registry: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub marker: MarkerStyle,
    pub prompt: PromptStyle,
    pub fallback: FallbackPolicy,
    pub min_support: usize,
    pub split: String,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = Experiment::default();
        RunConfig {
            data: None,
            registry: None,
            checkpoint: None,
            out: PathBuf::from("relrank-out"),
            marker: exp.templates.marker,
            prompt: exp.templates.prompt,
            fallback: exp.fallback,
            min_support: exp.min_support,
            split: exp.eval_split,
            encoder: exp.encoder,
            train: exp.train,
            seeds: vec![0],
            precision: Precision::F64,
        }
    }
}

/// Flags that mirror `RunConfig`; unset flags leave the default alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunFlags {
    /// Dataset directory [default: <out>/data]
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Relation description TSV
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Model checkpoint [default: <out>/model.ckpt]
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// iem, tem or raw
    #[arg(long, global = true)]
    pub marker: Option<MarkerStyle>,
    /// drp, description_only or name_only
    #[arg(long, global = true)]
    pub prompt: Option<PromptStyle>,
    /// Candidates for unseen type pairs: full_set or na_only
    #[arg(long, global = true)]
    pub fallback: Option<FallbackPolicy>,
    #[arg(long, global = true)]
    pub min_support: Option<usize>,
    /// Split to evaluate
    #[arg(long, global = true)]
    pub split: Option<String>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    #[arg(long, global = true)]
    pub ff_dim: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub examples_per_step: Option<usize>,
    /// Count steps in examples or candidate_rows
    #[arg(long, global = true)]
    pub step_unit: Option<String>,
    /// adam or sgd
    #[arg(long, global = true)]
    pub optimizer: Option<String>,
    #[arg(long, global = true)]
    pub clip_norm: Option<f64>,
    #[arg(long, global = true)]
    pub na_keep_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub select_best_epoch: bool,
    #[arg(long, global = true)]
    pub no_shuffle: bool,
    /// Allow an unordered gradient reduction
    #[arg(long, global = true)]
    pub nondeterministic: bool,
    /// Comma-separated seeds; training uses the first
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// f32 or f64
    #[arg(long, global = true)]
    pub precision: Option<Precision>,
}

impl RunFlags {
    pub fn apply(&self, c: &mut RunConfig) -> Result<()> {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),+ $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$($field).+ = v.clone().into(); })+
            };
        }
        set!(
            data => data, registry => registry, checkpoint => checkpoint,
            marker => marker, prompt => prompt, fallback => fallback, min_support => min_support, split => split,
            dim => encoder.dim, layers => encoder.layers, heads => encoder.heads, max_len => encoder.max_len,
            ff_dim => encoder.ff_dim, epochs => train.epochs, lr => train.learning_rate,
            examples_per_step => train.examples_per_step, na_keep_ratio => train.na_keep_ratio,
            seeds => seeds, precision => precision,
        );
        if let Some(v) = self.clip_norm {
            c.train.clip_norm = Some(v);
        }
        if let Some(u) = &self.step_unit {
            c.train.step_unit = match u.as_str() {
                "examples" => StepUnit::Examples,
                "candidate_rows" | "rows" => StepUnit::CandidateRows,
                other => bail!("unknown step unit {other:?}"),
            };
        }
        if let Some(o) = &self.optimizer {
            c.train.optimizer = match o.as_str() {
                "adam" => OptimizerConfig::default(),
                "sgd" => OptimizerConfig::Sgd,
                other => bail!("unknown optimizer {other:?}"),
            };
        }
        c.train.select_best_epoch |= self.select_best_epoch;
        c.train.shuffle &= !self.no_shuffle;
        c.train.deterministic &= !self.nondeterministic;
        Ok(())
    }
}

/// Recursively overlays `top` onto `base`; objects merge, anything else replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults, then flags, then the config file on top.
    pub fn resolve(out: &Path, flags: &RunFlags, file: Option<&Path>) -> Result<RunConfig> {
        let mut config = RunConfig {
            out: out.to_path_buf(),
            ..RunConfig::default()
        };
        flags.apply(&mut config)?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let top: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            let mut base = serde_json::to_value(&config)?;
            merge(&mut base, top);
            config = serde_json::from_value(base)
                .with_context(|| format!("config {}", path.display()))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        self.encoder.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("model.ckpt"))
    }

    pub fn load_registry(&self) -> Result<RelationRegistry> {
        let path = match &self.registry {
            Some(p) => p.clone(),
            None => {
                let p = self.data_dir().join("descriptions.tsv");
                if !p.exists() {
                    return Ok(RelationRegistry::shipped());
                }
                p
            }
        };
        RelationRegistry::load(&path).with_context(|| format!("registry {}", path.display()))
    }

    pub fn templates(&self) -> TemplateConfig {
        TemplateConfig {
            marker: self.marker,
            prompt: self.prompt,
        }
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            templates: self.templates(),
            encoder: self.encoder,
            train: self.train.clone(),
            fallback: self.fallback,
            min_support: self.min_support,
            eval_split: self.split.clone(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }
}
