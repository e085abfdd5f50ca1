//! Importance-sampled estimate of the output-layer gradient for a full
//! softmax under the energy convention `P(v) ∝ exp(−E(v))`, `E = −score`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Architecture, Core, GradientSet, Network};
use crate::numerics::{softmax, Scalar, SeededRng};
use crate::output::{accumulate_rows, OutputParameters, OutputStructure};

/// Block-wise sampling controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub block_size: usize,
    /// Stop drawing once the effective sample size reaches this value.
    pub min_ess: f64,
    /// Fall back to the exact gradient when more samples than this are needed.
    pub max_samples: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            block_size: 100,
            min_ess: 50.0,
            max_samples: 2000,
        }
    }
}

impl SamplingConfig {
    /// Exactly `n` samples, no adaptive stopping and no fallback.
    pub fn fixed(n: usize) -> Self {
        SamplingConfig {
            block_size: n,
            min_ess: 0.0,
            max_samples: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidArgument("sampling block size must be at least 1".into()));
        }
        if !(self.min_ess >= 0.0) {
            return Err(Error::InvalidArgument(format!("minimum effective sample size {} is negative", self.min_ess)));
        }
        Ok(())
    }
}

/// Proposal `Q` over the vocabulary, sampled by inverse CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ProposalDistribution {
    /// Add-one smoothed unigram distribution from raw counts.
    pub fn unigram(counts: &[u64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("proposal counts"));
        }
        let total: f64 = counts.iter().map(|&c| c as f64 + 1.0).sum();
        Self::from_probabilities(counts.iter().map(|&c| (c as f64 + 1.0) / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("proposal vocabulary"));
        }
        Self::from_probabilities(vec![1.0 / k as f64; k])
    }

    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("proposal probabilities"));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(format!("proposal probability of word {i} is {p}; must be positive")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("proposal probabilities sum to {sum}")));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        Ok(ProposalDistribution {
            log_probs: probs.iter().map(|p| p.ln()).collect(),
            probs,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, word: usize) -> f64 {
        self.probs[word]
    }

    pub fn log_prob(&self, word: usize) -> f64 {
        self.log_probs[word]
    }

    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let u = rng.unit() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative.partition_point(|&c| c <= u).min(self.probs.len() - 1)
    }
}

/// `softmax(−y)`: lower energy, higher probability.
pub fn energy_normalize<S: Scalar>(energies: &[S]) -> Vec<S> {
    let neg: Vec<S> = energies.iter().map(|&e| -e).collect();
    softmax(&neg)
}

/// `(Σ r)² / Σ r²`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Empty("importance weights"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::NonFinite(format!("importance weight {w}")));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::InvalidArgument("all importance weights are zero".into()));
    }
    // scaled by the largest weight, so equal weights give exactly N
    let sum: f64 = weights.iter().map(|w| w / max).sum();
    let sq: f64 = weights.iter().map(|w| (w / max) * (w / max)).sum();
    Ok(sum * sum / sq)
}

/// What one sampled gradient estimate used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleOutcome {
    pub samples: usize,
    pub ess: f64,
    /// True when the sample budget ran out and the exact gradient was used.
    pub exact: bool,
    /// Estimated negative log-likelihood of the target (exact under fallback).
    pub nll: f64,
}

struct Draws {
    words: Vec<usize>,
    log_weights: Vec<f64>,
}

impl Draws {
    /// Weights rescaled by their maximum, and that maximum.
    fn scaled(&self) -> (Vec<f64>, f64) {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (self.log_weights.iter().map(|&l| (l - max).exp()).collect(), max)
    }
}

fn check_flat(structure: &OutputStructure) -> Result<()> {
    if !structure.is_flat() {
        return Err(Error::Unsupported("importance sampling needs a full-softmax output layer".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn draw<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    q: &ProposalDistribution,
    words: impl IntoIterator<Item = usize>,
    into: &mut Draws,
) -> Result<()> {
    for w in words {
        let lw = structure.word_score(params, h, x, w).as_f64() - q.log_prob(w);
        if !lw.is_finite() {
            return Err(Error::NonFinite(format!("importance weight for word {w}")));
        }
        into.words.push(w);
        into.log_weights.push(lw);
    }
    Ok(())
}

/// Applies the estimator for a fixed set of draws: exact positive term for
/// `target`, self-normalised weighted negative term over `draws`.
#[allow(clippy::too_many_arguments)]
fn apply<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    target: usize,
    draws: &Draws,
    grads: &mut OutputParameters<S>,
    dh: &mut [S],
    dx: &mut [S],
) -> Result<SampleOutcome> {
    let (weights, max) = draws.scaled();
    let ess = effective_sample_size(&weights)?;
    let sum: f64 = weights.iter().sum();
    let mut coeff: BTreeMap<usize, f64> = BTreeMap::new();
    for (&w, &r) in draws.words.iter().zip(&weights) {
        *coeff.entry(w).or_insert(0.0) += r / sum;
    }
    *coeff.entry(target).or_insert(0.0) -= 1.0;
    for (&w, &g) in &coeff {
        accumulate_rows(params, grads, structure.word_row(w), &[S::of(g)], h, x, dh, dx);
    }
    // log Z ≈ log mean(exp(s)/Q)
    let log_z = max + (sum / draws.words.len() as f64).ln();
    let nll = log_z - structure.word_score(params, h, x, target).as_f64();
    Ok(SampleOutcome {
        samples: draws.words.len(),
        ess,
        exact: false,
        nll,
    })
}

/// Sampled NLL gradient for one prediction, accumulated into `grads`, `dh`, `dx`.
#[allow(clippy::too_many_arguments)]
pub fn sampled_output_gradient<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    target: usize,
    q: &ProposalDistribution,
    rng: &mut SeededRng,
    config: &SamplingConfig,
    grads: &mut OutputParameters<S>,
    dh: &mut [S],
    dx: &mut [S],
) -> Result<SampleOutcome> {
    check_flat(structure)?;
    config.validate()?;
    if q.len() != structure.vocab_size() {
        return Err(Error::shape("importance_sampling_gradient", format!("vocabulary {}", structure.vocab_size()), format!("proposal over {}", q.len())));
    }
    let mut draws = Draws {
        words: Vec::new(),
        log_weights: Vec::new(),
    };
    loop {
        draw(structure, params, h, x, q, (0..config.block_size).map(|_| q.sample(rng)), &mut draws)?;
        let (weights, _) = draws.scaled();
        let ess = effective_sample_size(&weights)?;
        if ess >= config.min_ess {
            break;
        }
        if draws.words.len() > config.max_samples {
            let lp = structure.log_prob_grad(params, h, x, target, grads, dh, dx)?;
            return Ok(SampleOutcome {
                samples: draws.words.len(),
                ess,
                exact: true,
                nll: -lp.as_f64(),
            });
        }
    }
    apply(structure, params, h, x, target, &draws, grads, dh, dx)
}

/// Estimator over caller-chosen draws instead of random ones.
#[allow(clippy::too_many_arguments)]
pub fn output_gradient_from_draws<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    target: usize,
    q: &ProposalDistribution,
    samples: &[usize],
    grads: &mut OutputParameters<S>,
    dh: &mut [S],
    dx: &mut [S],
) -> Result<SampleOutcome> {
    check_flat(structure)?;
    if samples.is_empty() {
        return Err(Error::Empty("importance samples"));
    }
    let mut draws = Draws {
        words: Vec::new(),
        log_weights: Vec::new(),
    };
    draw(structure, params, h, x, q, samples.iter().copied(), &mut draws)?;
    apply(structure, params, h, x, target, &draws, grads, dh, dx)
}

fn fnn_only<S: Scalar>(net: &Network<S>) -> Result<()> {
    if net.spec.architecture != Architecture::Fnn {
        return Err(Error::Unsupported(format!(
            "importance sampling applies to the feed-forward model only, not {}; its sampled gradient cannot be propagated through recurrent state",
            net.spec.architecture
        )));
    }
    check_flat(&net.structure)
}

/// How the output gradient of one context is formed.
pub enum OutputGradient<'a> {
    Exact,
    Sampled {
        q: &'a ProposalDistribution,
        rng: &'a mut SeededRng,
        config: &'a SamplingConfig,
    },
    Draws {
        q: &'a ProposalDistribution,
        samples: &'a [usize],
    },
}

/// Gradient of `−log P(target | context)` for a feed-forward network.
pub fn context_gradient<S: Scalar>(
    net: &Network<S>,
    context: &[usize],
    target: usize,
    mode: OutputGradient<'_>,
) -> Result<(GradientSet<S>, SampleOutcome)> {
    fnn_only(net)?;
    let Core::Fnn(p) = &net.core else { unreachable!() };
    let step = p.step(context)?;
    let mut grads = net.zero_gradients();
    let mut dh = vec![S::zero(); net.spec.hidden];
    let mut dx = vec![S::zero(); net.spec.input_size()];
    let outcome = match mode {
        OutputGradient::Exact => {
            let lp = net.structure.log_prob_grad(&net.output, &step.h, &step.x, target, &mut grads.output, &mut dh, &mut dx)?;
            SampleOutcome {
                samples: 0,
                ess: 0.0,
                exact: true,
                nll: -lp.as_f64(),
            }
        }
        OutputGradient::Sampled { q, rng, config } => {
            sampled_output_gradient(&net.structure, &net.output, &step.h, &step.x, target, q, rng, config, &mut grads.output, &mut dh, &mut dx)?
        }
        OutputGradient::Draws { q, samples } => {
            output_gradient_from_draws(&net.structure, &net.output, &step.h, &step.x, target, q, samples, &mut grads.output, &mut dh, &mut dx)?
        }
    };
    let Core::Fnn(g) = &mut grads.core else { unreachable!() };
    p.backward(std::slice::from_ref(&step), &[dh], &[dx], g);
    Ok((grads, outcome))
}

/// Sampled gradient estimate for one context.
pub fn importance_sampling_gradient<S: Scalar>(
    net: &Network<S>,
    context: &[usize],
    target: usize,
    q: &ProposalDistribution,
    rng: &mut SeededRng,
    config: &SamplingConfig,
) -> Result<GradientSet<S>> {
    context_gradient(net, context, target, OutputGradient::Sampled { q, rng, config }).map(|(g, _)| g)
}

/// Totals over a sentence trained with sampled output gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampledSentence {
    pub nll: f64,
    pub samples: usize,
    pub fallbacks: usize,
}

/// Sampled counterpart of [`Network::sentence_gradient`] for feed-forward networks.
pub fn sampled_sentence_gradient<S: Scalar>(
    net: &Network<S>,
    ids: &[usize],
    q: &ProposalDistribution,
    rng: &mut SeededRng,
    config: &SamplingConfig,
    grads: &mut GradientSet<S>,
) -> Result<SampledSentence> {
    fnn_only(net)?;
    if ids.len() < 2 {
        return Err(Error::InvalidArgument("an encoded sentence needs at least the two boundary marks".into()));
    }
    let init = net.initial_state();
    let tape = net.core.forward(&ids[..ids.len() - 1], &init)?;
    let mut dh = vec![vec![S::zero(); net.spec.hidden]; tape.len()];
    let mut dx = vec![vec![S::zero(); net.spec.input_size()]; tape.len()];
    let mut total = SampledSentence::default();
    for t in 0..tape.len() {
        let o = sampled_output_gradient(
            &net.structure,
            &net.output,
            tape.hidden(t),
            tape.input(t),
            ids[t + 1],
            q,
            rng,
            config,
            &mut grads.output,
            &mut dh[t],
            &mut dx[t],
        )?;
        total.nll += o.nll;
        total.samples += o.samples;
        total.fallbacks += o.exact as usize;
    }
    net.core.backward(&tape, &dh, &dx, &mut grads.core)?;
    Ok(total)
}
