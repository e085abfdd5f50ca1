//! Run configuration as `key = value` lines with dotted section names.
//!
//! ```text
//! # baseline
//! seed = 1
//! model.architecture = lstm
//! model.n_h = 200
//! output.strategy = class
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::caching::{CacheConfig, CacheUnit, Decay};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::models::{Architecture, ModelSpec};
use crate::numerics::SeededRng;
use crate::output::{
    assign_uniform_random, default_class_count, hierarchy_uniform_random, vocab_by_frequency, vocab_by_sqrt_frequency, OutputStrategy,
};
use crate::training::{DynamicConfig, SamplingConfig, TrainingConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    Full,
    Class,
    Hierarchical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Uniform,
    Frequency,
    SqrtFrequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Static,
    Dynamic,
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheMode {
    None,
    Word,
    Class,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayMode {
    Constant,
    Linear,
    Exponential,
}

macro_rules! keyword_enum {
    ($t:ty { $($name:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($v),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl $t {
            pub fn keyword(&self) -> &'static str {
                $(if *self == $v { return $name; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(OutputKind { "full" => OutputKind::Full, "class" => OutputKind::Class, "hierarchical" => OutputKind::Hierarchical });
keyword_enum!(Assignment { "uniform" => Assignment::Uniform, "frequency" => Assignment::Frequency, "sqrt_frequency" => Assignment::SqrtFrequency });
keyword_enum!(EvalMode { "static" => EvalMode::Static, "dynamic" => EvalMode::Dynamic, "reversed" => EvalMode::Reversed });
keyword_enum!(CacheMode { "none" => CacheMode::None, "word" => CacheMode::Word, "class" => CacheMode::Class });
keyword_enum!(DecayMode { "constant" => DecayMode::Constant, "linear" => DecayMode::Linear, "exponential" => DecayMode::Exponential });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub order: usize,
    pub embedding: usize,
    pub hidden: usize,
    pub direct: bool,
    pub bias: bool,
    pub peepholes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub strategy: OutputKind,
    /// `None` selects `⌈√k⌉`.
    pub classes: Option<usize>,
    pub layers: usize,
    pub assignment: Assignment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSection {
    pub enabled: bool,
    pub block_size: usize,
    pub min_ess: f64,
    pub max_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub lr_decay: f64,
    pub min_improvement: f64,
    pub patience: usize,
    pub clip: Option<f64>,
    pub shuffle: bool,
    pub sampling: SamplingSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheSection {
    pub mode: CacheMode,
    pub lambda: f64,
    pub length: usize,
    pub decay: DecayMode,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub mode: EvalMode,
    pub carryover: bool,
    pub dynamic_learning_rate: f64,
    pub dynamic_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSection {
    /// Single file split by token counts.
    pub path: Option<PathBuf>,
    /// Explicit per-split files; take precedence over `path`.
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train_tokens: usize,
    pub valid_tokens: usize,
    pub lowercase: bool,
    pub min_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub output: OutputSection,
    pub training: TrainingSection,
    pub cache: CacheSection,
    pub eval: EvalSection,
    pub corpus: CorpusSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let s = SamplingConfig::default();
        RunConfig {
            seed: 1,
            model: ModelSection {
                architecture: Architecture::Lstm,
                order: 5,
                embedding: 100,
                hidden: 200,
                direct: false,
                bias: false,
                peepholes: true,
            },
            output: OutputSection {
                strategy: OutputKind::Class,
                classes: None,
                layers: 1,
                assignment: Assignment::SqrtFrequency,
            },
            training: TrainingSection {
                learning_rate: t.learning_rate,
                l2: t.l2,
                max_epochs: t.max_epochs,
                lr_decay: t.lr_decay,
                min_improvement: t.min_improvement,
                patience: t.patience,
                clip: t.clip,
                shuffle: t.shuffle,
                sampling: SamplingSection {
                    enabled: false,
                    block_size: s.block_size,
                    min_ess: s.min_ess,
                    max_samples: s.max_samples,
                },
            },
            cache: CacheSection {
                mode: CacheMode::None,
                lambda: 0.9,
                length: 500,
                decay: DecayMode::Constant,
                gamma: 0.99,
            },
            eval: EvalSection {
                mode: EvalMode::Static,
                carryover: false,
                dynamic_learning_rate: 0.1,
                dynamic_l2: 0.0,
            },
            corpus: CorpusSection {
                path: None,
                train: None,
                valid: None,
                test: None,
                train_tokens: 800_000,
                valid_tokens: 200_000,
                lowercase: true,
                min_count: 1,
            },
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse `{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config {
            key: key.to_string(),
            message: format!("expected true or false, got `{value}`"),
        }),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str, none: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value == none {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    /// Every recognised key, in serialisation order.
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "model.architecture",
        "model.n",
        "model.m",
        "model.n_h",
        "model.direct",
        "model.bias",
        "model.peepholes",
        "output.strategy",
        "output.classes",
        "output.layers",
        "output.assignment",
        "training.learning_rate",
        "training.l2",
        "training.max_epochs",
        "training.lr_decay",
        "training.min_improvement",
        "training.patience",
        "training.clip",
        "training.shuffle",
        "training.sampling",
        "training.sampling.block_size",
        "training.sampling.min_ess",
        "training.sampling.max_samples",
        "cache.mode",
        "cache.lambda",
        "cache.length",
        "cache.decay",
        "cache.gamma",
        "eval.mode",
        "eval.carryover",
        "eval.dynamic.learning_rate",
        "eval.dynamic.l2",
        "corpus.path",
        "corpus.train",
        "corpus.valid",
        "corpus.test",
        "corpus.train_tokens",
        "corpus.valid_tokens",
        "corpus.lowercase",
        "corpus.min_count",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "model.architecture" => self.model.architecture = parse_value(key, v)?,
            "model.n" => self.model.order = parse_value(key, v)?,
            "model.m" => self.model.embedding = parse_value(key, v)?,
            "model.n_h" => self.model.hidden = parse_value(key, v)?,
            "model.direct" => self.model.direct = parse_bool(key, v)?,
            "model.bias" => self.model.bias = parse_bool(key, v)?,
            "model.peepholes" => self.model.peepholes = parse_bool(key, v)?,
            "output.strategy" => self.output.strategy = parse_value(key, v)?,
            "output.classes" => self.output.classes = parse_optional(key, v, "auto")?,
            "output.layers" => self.output.layers = parse_value(key, v)?,
            "output.assignment" => self.output.assignment = parse_value(key, v)?,
            "training.learning_rate" => self.training.learning_rate = parse_value(key, v)?,
            "training.l2" => self.training.l2 = parse_value(key, v)?,
            "training.max_epochs" => self.training.max_epochs = parse_value(key, v)?,
            "training.lr_decay" => self.training.lr_decay = parse_value(key, v)?,
            "training.min_improvement" => self.training.min_improvement = parse_value(key, v)?,
            "training.patience" => self.training.patience = parse_value(key, v)?,
            "training.clip" => self.training.clip = parse_optional(key, v, "none")?,
            "training.shuffle" => self.training.shuffle = parse_bool(key, v)?,
            "training.sampling" => self.training.sampling.enabled = parse_bool(key, v)?,
            "training.sampling.block_size" => self.training.sampling.block_size = parse_value(key, v)?,
            "training.sampling.min_ess" => self.training.sampling.min_ess = parse_value(key, v)?,
            "training.sampling.max_samples" => self.training.sampling.max_samples = parse_value(key, v)?,
            "cache.mode" => self.cache.mode = parse_value(key, v)?,
            "cache.lambda" => self.cache.lambda = parse_value(key, v)?,
            "cache.length" => self.cache.length = parse_value(key, v)?,
            "cache.decay" => self.cache.decay = parse_value(key, v)?,
            "cache.gamma" => self.cache.gamma = parse_value(key, v)?,
            "eval.mode" => self.eval.mode = parse_value(key, v)?,
            "eval.carryover" => self.eval.carryover = parse_bool(key, v)?,
            "eval.dynamic.learning_rate" => self.eval.dynamic_learning_rate = parse_value(key, v)?,
            "eval.dynamic.l2" => self.eval.dynamic_l2 = parse_value(key, v)?,
            "corpus.path" => self.corpus.path = parse_path(v),
            "corpus.train" => self.corpus.train = parse_path(v),
            "corpus.valid" => self.corpus.valid = parse_path(v),
            "corpus.test" => self.corpus.test = parse_path(v),
            "corpus.train_tokens" => self.corpus.train_tokens = parse_value(key, v)?,
            "corpus.valid_tokens" => self.corpus.valid_tokens = parse_value(key, v)?,
            "corpus.lowercase" => self.corpus.lowercase = parse_bool(key, v)?,
            "corpus.min_count" => self.corpus.min_count = parse_value(key, v)?,
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }

    /// Textual value of one key, as [`RunConfig::set`] accepts it.
    pub fn get(&self, key: &str) -> Result<String> {
        let s = match key {
            "seed" => self.seed.to_string(),
            "model.architecture" => self.model.architecture.to_string(),
            "model.n" => self.model.order.to_string(),
            "model.m" => self.model.embedding.to_string(),
            "model.n_h" => self.model.hidden.to_string(),
            "model.direct" => self.model.direct.to_string(),
            "model.bias" => self.model.bias.to_string(),
            "model.peepholes" => self.model.peepholes.to_string(),
            "output.strategy" => self.output.strategy.keyword().into(),
            "output.classes" => self.output.classes.map_or("auto".into(), |c| c.to_string()),
            "output.layers" => self.output.layers.to_string(),
            "output.assignment" => self.output.assignment.keyword().into(),
            "training.learning_rate" => self.training.learning_rate.to_string(),
            "training.l2" => self.training.l2.to_string(),
            "training.max_epochs" => self.training.max_epochs.to_string(),
            "training.lr_decay" => self.training.lr_decay.to_string(),
            "training.min_improvement" => self.training.min_improvement.to_string(),
            "training.patience" => self.training.patience.to_string(),
            "training.clip" => self.training.clip.map_or("none".into(), |c| c.to_string()),
            "training.shuffle" => self.training.shuffle.to_string(),
            "training.sampling" => self.training.sampling.enabled.to_string(),
            "training.sampling.block_size" => self.training.sampling.block_size.to_string(),
            "training.sampling.min_ess" => self.training.sampling.min_ess.to_string(),
            "training.sampling.max_samples" => self.training.sampling.max_samples.to_string(),
            "cache.mode" => self.cache.mode.keyword().into(),
            "cache.lambda" => self.cache.lambda.to_string(),
            "cache.length" => self.cache.length.to_string(),
            "cache.decay" => self.cache.decay.keyword().into(),
            "cache.gamma" => self.cache.gamma.to_string(),
            "eval.mode" => self.eval.mode.keyword().into(),
            "eval.carryover" => self.eval.carryover.to_string(),
            "eval.dynamic.learning_rate" => self.eval.dynamic_learning_rate.to_string(),
            "eval.dynamic.l2" => self.eval.dynamic_l2.to_string(),
            "corpus.path" => show_path(&self.corpus.path),
            "corpus.train" => show_path(&self.corpus.train),
            "corpus.valid" => show_path(&self.corpus.valid),
            "corpus.test" => show_path(&self.corpus.test),
            "corpus.train_tokens" => self.corpus.train_tokens.to_string(),
            "corpus.valid_tokens" => self.corpus.valid_tokens.to_string(),
            "corpus.lowercase" => self.corpus.lowercase.to_string(),
            "corpus.min_count" => self.corpus.min_count.to_string(),
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "unknown configuration key".into(),
                })
            }
        };
        Ok(s)
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not of the form `key = value`", n + 1),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its value, one per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in Self::KEYS {
            let this = key.split('.').next().unwrap_or("");
            if this != section && !section.is_empty() {
                out.push('\n');
            }
            section = this;
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn model_spec(&self, vocab_size: usize) -> ModelSpec {
        ModelSpec {
            architecture: self.model.architecture,
            vocab_size,
            embedding: self.model.embedding,
            hidden: self.model.hidden,
            order: self.model.order,
            direct: self.model.direct,
            bias: self.model.bias,
            peepholes: self.model.peepholes,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            learning_rate: t.learning_rate,
            l2: t.l2,
            max_epochs: t.max_epochs,
            lr_decay: t.lr_decay,
            min_improvement: t.min_improvement,
            patience: t.patience,
            clip: t.clip,
            seed: self.seed,
            shuffle: t.shuffle,
            sampling: t.sampling.enabled.then_some(SamplingConfig {
                block_size: t.sampling.block_size,
                min_ess: t.sampling.min_ess,
                max_samples: t.sampling.max_samples,
            }),
        }
    }

    pub fn cache_config(&self) -> Option<CacheConfig> {
        let unit = match self.cache.mode {
            CacheMode::None => return None,
            CacheMode::Word => CacheUnit::Word,
            CacheMode::Class => CacheUnit::Class,
        };
        Some(CacheConfig {
            lambda: self.cache.lambda,
            length: self.cache.length,
            decay: match self.cache.decay {
                DecayMode::Constant => Decay::Constant,
                DecayMode::Linear => Decay::Linear,
                DecayMode::Exponential => Decay::Exponential { gamma: self.cache.gamma },
            },
            unit,
        })
    }

    pub fn dynamic_config(&self) -> DynamicConfig {
        DynamicConfig {
            learning_rate: self.eval.dynamic_learning_rate,
            l2: self.eval.dynamic_l2,
            clip: self.training.clip,
        }
    }

    /// Output layer for `vocab`; random assignments draw from `rng`.
    pub fn output_strategy(&self, vocab: &Vocabulary, rng: &mut SeededRng) -> Result<OutputStrategy> {
        let k = vocab.len();
        let r = self.output.classes.unwrap_or_else(|| default_class_count(k));
        Ok(match self.output.strategy {
            OutputKind::Full => OutputStrategy::Full { vocab_size: k },
            OutputKind::Class => OutputStrategy::Class(match self.output.assignment {
                Assignment::Uniform => assign_uniform_random(k, r, rng)?,
                Assignment::Frequency => vocab_by_frequency(vocab, r)?,
                Assignment::SqrtFrequency => vocab_by_sqrt_frequency(vocab, r)?,
            }),
            OutputKind::Hierarchical => OutputStrategy::Hierarchical(hierarchy_uniform_random(k, self.output.layers, rng)?),
        })
    }

    /// Checks that do not need the corpus.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.model.embedding == 0 {
            return bad("model.m", "must be at least 1");
        }
        if self.model.hidden == 0 {
            return bad("model.n_h", "must be at least 1");
        }
        if self.model.architecture == Architecture::Fnn && self.model.order < 2 {
            return bad("model.n", "feed-forward order must be at least 2");
        }
        if self.output.classes == Some(0) {
            return bad("output.classes", "must be at least 1");
        }
        if self.output.layers == 0 {
            return bad("output.layers", "must be at least 1");
        }
        if self.output.strategy == OutputKind::Hierarchical && self.output.assignment != Assignment::Uniform {
            return bad("output.assignment", "hierarchical output layers use uniform random assignment");
        }
        if self.training.sampling.enabled {
            if self.model.architecture != Architecture::Fnn {
                return bad("training.sampling", "importance sampling applies to the feed-forward model only");
            }
            if self.output.strategy != OutputKind::Full {
                return bad("training.sampling", "importance sampling needs output.strategy = full");
            }
        }
        if self.cache.mode == CacheMode::Class && self.output.strategy == OutputKind::Full {
            return bad("cache.mode", "a class cache needs a class or hierarchical output layer");
        }
        if self.corpus.min_count == 0 {
            return bad("corpus.min_count", "must be at least 1");
        }
        self.training_config().validate()?;
        if let Some(c) = self.cache_config() {
            c.validate().or_else(|e| bad("cache", &e.to_string()))?;
        }
        if self.eval.dynamic_learning_rate < 0.0 || self.eval.dynamic_l2 < 0.0 {
            return bad("eval.dynamic", "learning rate and decay must be non-negative");
        }
        Ok(())
    }
}
