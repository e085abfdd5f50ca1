//! Evaluation-time caches: an interpolated unigram cache over recent words
//! (or recent word classes) and hidden-state carryover between sentences.

use std::collections::VecDeque;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::HiddenState;
use crate::numerics::Scalar;

/// Weight `ρ(j)` of the cache entry `j` positions back (`j = 1` is the most recent).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Decay {
    Constant,
    Linear,
    Exponential { gamma: f64 },
}

impl Decay {
    pub fn weight(&self, j: usize, n: usize) -> f64 {
        match *self {
            Decay::Constant => 1.0,
            Decay::Linear => 1.0 - (j as f64 - 1.0) / n as f64,
            Decay::Exponential { gamma } => gamma.powi(j as i32 - 1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Decay::Constant => "constant",
            Decay::Linear => "linear",
            Decay::Exponential { .. } => "exponential",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheUnit {
    Word,
    Class,
}

impl FromStr for CacheUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(CacheUnit::Word),
            "class" => Ok(CacheUnit::Class),
            other => Err(Error::InvalidArgument(format!("unknown cache unit `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Weight of the model distribution; `1 − lambda` goes to the cache.
    pub lambda: f64,
    pub length: usize,
    pub decay: Decay,
    pub unit: CacheUnit,
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("cache lambda {} outside [0, 1]", self.lambda)));
        }
        if self.length == 0 {
            return Err(Error::InvalidArgument("cache length must be at least 1".into()));
        }
        if let Decay::Exponential { gamma } = self.decay {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::InvalidArgument(format!("decay gamma {gamma} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// The last `capacity` items, most recent first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordCache {
    capacity: usize,
    items: VecDeque<usize>,
}

impl WordCache {
    pub fn new(capacity: usize) -> Self {
        WordCache {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    /// Cache holding `history` in reading order (last element most recent).
    pub fn from_history(capacity: usize, history: &[usize]) -> Self {
        let mut c = Self::new(capacity);
        for &w in history {
            c.push(w);
        }
        c
    }

    pub fn push(&mut self, item: usize) {
        if self.items.len() == self.capacity {
            self.items.pop_back();
        }
        self.items.push_front(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// `(age, item)` pairs with age 1 for the most recent entry.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.items.iter().enumerate().map(|(i, &w)| (i + 1, w))
    }
}

/// Recency-weighted share of cache slots holding `item`, normalised over
/// all items so the cache is itself a distribution. A partially filled
/// cache uses its current size as `N`; an empty cache yields 0.
pub fn cache_probability(cache: &WordCache, item: usize, decay: Decay) -> f64 {
    let n = cache.len();
    if n == 0 {
        return 0.0;
    }
    let mut hit = 0.0;
    let mut total = 0.0;
    for (j, w) in cache.entries() {
        let rho = decay.weight(j, n);
        total += rho;
        if w == item {
            hit += rho;
        }
    }
    hit / total
}

/// Same statistic over recent class indices.
pub fn class_cache_probability(cache: &WordCache, class: usize, decay: Decay) -> f64 {
    cache_probability(cache, class, decay)
}

pub fn interpolate(p_model: f64, p_cache: f64, lambda: f64) -> f64 {
    lambda * p_model + (1.0 - lambda) * p_cache
}

/// Log-domain interpolation that returns `log_model` untouched when the
/// cache cannot contribute, so `lambda = 1` reproduces the bare model bit for bit.
pub fn interpolate_log(log_model: f64, p_cache: f64, lambda: f64, cache_empty: bool) -> f64 {
    if cache_empty || lambda == 1.0 {
        return log_model;
    }
    if p_cache == 0.0 {
        return lambda.ln() + log_model;
    }
    interpolate(log_model.exp(), p_cache, lambda).ln()
}

/// Running cache state for one evaluation stream.
#[derive(Clone, Debug)]
pub struct CacheState {
    pub config: CacheConfig,
    pub cache: WordCache,
}

impl CacheState {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(CacheState {
            config,
            cache: WordCache::new(config.length),
        })
    }

    /// Log probability of `word` after interpolation. `leaf` is the word's
    /// class and `log_in_class` its log probability within that class.
    pub fn score(&self, word: usize, log_model: f64, leaf: usize, log_in_class: f64) -> f64 {
        if self.cache.is_empty() {
            return log_model;
        }
        let p_cache = match self.config.unit {
            CacheUnit::Word => cache_probability(&self.cache, word, self.config.decay),
            CacheUnit::Class => class_cache_probability(&self.cache, leaf, self.config.decay) * log_in_class.exp(),
        };
        interpolate_log(log_model, p_cache, self.config.lambda, false)
    }

    pub fn observe(&mut self, word: usize, leaf: usize) {
        self.cache.push(match self.config.unit {
            CacheUnit::Word => word,
            CacheUnit::Class => leaf,
        });
    }
}

/// Final state of the previous sentence of the current document.
#[derive(Clone, Debug, Default)]
pub struct CarryoverState<S> {
    last: Option<HiddenState<S>>,
}

impl<S: Scalar> CarryoverState<S> {
    pub fn new() -> Self {
        CarryoverState { last: None }
    }

    /// Zero state at a document start, otherwise the stored final state.
    pub fn carryover_initial_state(&self, starts_document: bool, zero: &HiddenState<S>) -> HiddenState<S> {
        match (&self.last, starts_document) {
            (Some(s), false) => s.clone(),
            _ => zero.clone(),
        }
    }

    pub fn store(&mut self, final_state: HiddenState<S>) {
        self.last = Some(final_state);
    }

    pub fn reset(&mut self) {
        self.last = None;
    }
}
