//! Sentence-wise SGD with full backpropagation through time, L2 decay on
//! weight matrices, gradient clipping and a validation-driven schedule.

mod dynamic;
mod sampling;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use dynamic::{dynamic_evaluate, DynamicConfig};
pub use sampling::{
    context_gradient, effective_sample_size, energy_normalize, importance_sampling_gradient, output_gradient_from_draws,
    sampled_output_gradient, sampled_sentence_gradient, OutputGradient, ProposalDistribution, SampleOutcome, SampledSentence,
    SamplingConfig,
};

use crate::corpus::Encoded;
use crate::error::{Error, Result};
use crate::evaluation::{perplexity, EvalOptions};
use crate::models::{Network, ParameterSet, SlotKind};
use crate::numerics::{Scalar, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// L2 coefficient applied to weight matrices each update.
    pub l2: f64,
    pub max_epochs: usize,
    /// Learning-rate multiplier after an epoch without enough improvement.
    pub lr_decay: f64,
    /// Validation perplexity must drop by more than this to count as improved.
    pub min_improvement: f64,
    /// Stop after this many consecutive epochs without improvement.
    pub patience: usize,
    pub clip: Option<f64>,
    pub seed: u64,
    pub shuffle: bool,
    /// Importance-sampled output gradients (feed-forward models only).
    pub sampling: Option<SamplingConfig>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            l2: 1e-6,
            max_epochs: 50,
            lr_decay: 0.5,
            min_improvement: 1.0,
            patience: 3,
            clip: Some(5.0),
            seed: 1,
            shuffle: true,
            sampling: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: format!("training.{key}"),
                message,
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2", format!("must be non-negative, got {}", self.l2));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", format!("must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1".into());
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return bad("clip", format!("must be positive, got {c}"));
            }
        }
        if let Some(s) = &self.sampling {
            s.validate().or_else(|e| bad("sampling", e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean per-token negative log-likelihood (nats) seen during the epoch.
    pub train_nll: f64,
    pub valid_ppl: f64,
    pub words_per_s: Option<f64>,
    pub learning_rate: f64,
    pub clip_events: usize,
}

impl EpochReport {
    pub const TSV_HEADER: &'static str = "epoch\ttrain_nll\tvalid_ppl\twords_per_s\tlr";

    pub fn tsv_row(&self) -> String {
        let wps = self.words_per_s.map_or(String::new(), |w| format!("{w:.1}"));
        format!("{}\t{:.6}\t{:.4}\t{wps}\t{}", self.epoch, self.train_nll, self.valid_ppl, self.learning_rate)
    }
}

/// `θ ← θ − α·g − β·θ` for matrices, `θ ← θ − α·g` for biases.
pub fn update_parameters<S: Scalar, P: ParameterSet<S>, G: ParameterSet<S>>(params: &mut P, grads: &G, learning_rate: S, l2: S) -> Result<()> {
    let gs = grads.slots();
    let ps = params.slots_mut();
    if gs.len() != ps.len() {
        return Err(Error::shape("update_parameters", format!("{} parameter arrays", ps.len()), format!("{} gradient arrays", gs.len())));
    }
    for (p, g) in ps.iter().zip(&gs) {
        if p.name != g.name || p.data.len() != g.data.len() {
            return Err(Error::shape("update_parameters", format!("{} of {}", p.name, p.data.len()), format!("{} of {}", g.name, g.data.len())));
        }
        if let Some(i) = g.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {} at entry {i} is {}", g.name, g.data[i])));
        }
    }
    for (p, g) in ps.into_iter().zip(gs) {
        match p.kind {
            SlotKind::Matrix => {
                for (t, &d) in p.data.iter_mut().zip(g.data) {
                    *t = *t - learning_rate * d - l2 * *t;
                }
            }
            SlotKind::Bias => crate::numerics::axpy(-learning_rate, g.data, p.data),
        }
    }
    Ok(())
}

/// Rescales to global L2 norm `threshold` when larger; returns whether it did.
pub fn clip_gradients<S: Scalar, G: ParameterSet<S>>(grads: &mut G, threshold: f64) -> bool {
    let norm = grads.squared_norm().as_f64().sqrt();
    if norm > threshold {
        grads.scale_all(S::of(threshold / norm));
        true
    } else {
        false
    }
}

/// Schedule state carried across epochs.
#[derive(Clone, Debug)]
pub struct Trainer<S> {
    pub config: TrainingConfig,
    pub learning_rate: f64,
    pub epoch: usize,
    pub best_ppl: f64,
    pub best_epoch: usize,
    best: Option<Network<S>>,
    stale: usize,
    proposal: Option<ProposalDistribution>,
    rng: SeededRng,
}

impl<S: Scalar> Trainer<S> {
    /// `proposal` is required when the config enables sampling.
    pub fn new(config: TrainingConfig, proposal: Option<ProposalDistribution>) -> Result<Self> {
        config.validate()?;
        if config.sampling.is_some() && proposal.is_none() {
            return Err(Error::InvalidArgument("sampled training needs a proposal distribution".into()));
        }
        Ok(Trainer {
            learning_rate: config.learning_rate,
            rng: SeededRng::new(config.seed).fork(0x0074_7261_696e),
            config,
            epoch: 0,
            best_ppl: f64::INFINITY,
            best_epoch: 0,
            best: None,
            stale: 0,
            proposal,
        })
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.max_epochs || self.stale >= self.config.patience
    }

    /// One shuffled pass over `train`, then validation and schedule update.
    pub fn train_epoch(&mut self, net: &mut Network<S>, train: &[Encoded], valid: &[Encoded]) -> Result<EpochReport> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if valid.is_empty() {
            return Err(Error::Empty("validation set"));
        }
        if let Some(q) = &self.proposal {
            if q.len() != net.spec.vocab_size {
                return Err(Error::shape("train_epoch", format!("vocabulary {}", net.spec.vocab_size), format!("proposal over {}", q.len())));
            }
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        if self.config.shuffle {
            self.rng.shuffle(&mut order);
        }
        let lr = S::of(self.learning_rate);
        let l2 = S::of(self.config.l2);
        let init = net.initial_state();
        let mut grads = net.zero_gradients();
        let (mut nll, mut tokens, mut clips) = (0.0, 0usize, 0usize);
        let start = Instant::now();
        for &i in &order {
            let ids = &train[i].ids;
            grads.fill_zero();
            match (&self.config.sampling, &self.proposal) {
                (Some(cfg), Some(q)) => {
                    let r = sampled_sentence_gradient(net, ids, q, &mut self.rng, cfg, &mut grads)?;
                    nll += r.nll;
                }
                _ => {
                    let r = net.sentence_gradient(ids, &init, &mut grads)?;
                    nll -= r.total().as_f64();
                }
            }
            tokens += ids.len() - 1;
            if let Some(c) = self.config.clip {
                clips += clip_gradients(&mut grads, c) as usize;
            }
            update_parameters(net, &grads, lr, l2)?;
        }
        let secs = start.elapsed().as_secs_f64();
        let valid_ppl = perplexity(net, valid, &EvalOptions::default())?.ppl;
        if !valid_ppl.is_finite() {
            return Err(Error::NonFinite(format!("validation perplexity after epoch {}", self.epoch)));
        }
        let report = EpochReport {
            epoch: self.epoch,
            train_nll: nll / tokens as f64,
            valid_ppl,
            words_per_s: crate::evaluation::throughput(tokens, secs),
            learning_rate: self.learning_rate,
            clip_events: clips,
        };
        let enough = valid_ppl < self.best_ppl - self.config.min_improvement;
        if valid_ppl < self.best_ppl {
            self.best_ppl = valid_ppl;
            self.best_epoch = self.epoch;
            self.best = Some(net.clone());
        }
        if enough {
            self.stale = 0;
        } else {
            self.stale += 1;
            self.learning_rate *= self.config.lr_decay;
        }
        Ok(report)
    }

    /// Restores the parameters of the best validation epoch.
    pub fn restore_best(&mut self, net: &mut Network<S>) {
        if let Some(best) = self.best.take() {
            *net = best;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSummary {
    pub reports: Vec<EpochReport>,
    pub best_epoch: usize,
    pub best_valid_ppl: f64,
}

/// Runs epochs until the schedule stops, leaving `net` at its best
/// validation parameters. `on_epoch` sees every report as it is produced.
pub fn train<S: Scalar>(
    net: &mut Network<S>,
    train: &[Encoded],
    valid: &[Encoded],
    config: &TrainingConfig,
    proposal: Option<ProposalDistribution>,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainingSummary> {
    let mut trainer = Trainer::new(config.clone(), proposal)?;
    let mut reports = Vec::new();
    while !trainer.finished() {
        let r = trainer.train_epoch(net, train, valid)?;
        on_epoch(&r);
        reports.push(r);
    }
    trainer.restore_best(net);
    Ok(TrainingSummary {
        reports,
        best_epoch: trainer.best_epoch,
        best_valid_ppl: trainer.best_ppl,
    })
}

/// Appends rows to an epoch log, writing the header for a new file.
pub fn write_epoch_log(out: &mut impl Write, reports: &[EpochReport], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(out, "{}", EpochReport::TSV_HEADER)?;
    }
    for r in reports {
        writeln!(out, "{}", r.tsv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, ModelSpec};
    use crate::output::OutputStrategy;

    fn tiny(arch: Architecture, k: usize) -> Network<f64> {
        let spec = ModelSpec {
            architecture: arch,
            vocab_size: k,
            embedding: 4,
            hidden: 6,
            order: 3,
            direct: false,
            bias: true,
            peepholes: true,
        };
        Network::new(spec, OutputStrategy::Full { vocab_size: k }, &mut SeededRng::new(3)).unwrap()
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut net = tiny(Architecture::Rnn, 6);
        let before = net.clone();
        let g = net.zero_gradients();
        update_parameters(&mut net, &g, 0.1, 0.0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn pure_decay_hits_matrices_only() {
        let mut net = Network::<f64>::zeros(tiny(Architecture::Fnn, 6).spec, OutputStrategy::Full { vocab_size: 6 }).unwrap();
        for s in net.slots_mut() {
            s.data.iter_mut().for_each(|v| *v = 1.0);
        }
        let g = net.zero_gradients();
        update_parameters(&mut net, &g, 0.5, 0.1).unwrap();
        for s in net.slots() {
            let want = if s.kind == SlotKind::Matrix { 0.9 } else { 1.0 };
            assert!(s.data.iter().all(|&v| v == want), "{}", s.name);
        }
    }

    #[test]
    fn two_updates_match_closed_form() {
        let (theta, a, b, g1, g2) = (0.8f64, 0.3, 0.05, 0.4, -1.1);
        let mut net = Network::<f64>::zeros(tiny(Architecture::Fnn, 6).spec, OutputStrategy::Full { vocab_size: 6 }).unwrap();
        net.output.weights.set(0, 0, theta);
        let mut g = net.zero_gradients();
        g.output.weights.set(0, 0, g1);
        update_parameters(&mut net, &g, a, b).unwrap();
        g.output.weights.set(0, 0, g2);
        update_parameters(&mut net, &g, a, b).unwrap();
        let want = theta * (1.0 - b) * (1.0 - b) - a * g1 * (1.0 - b) - a * g2;
        assert!((net.output.weights.get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = tiny(Architecture::Lstm, 5);
        let mut g = net.zero_gradients();
        g.output.weights.set(1, 2, f64::NAN);
        let err = update_parameters(&mut net, &g, 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains('V'), "{err}");
    }

    #[test]
    fn clipping_rescales_to_threshold() {
        let net = tiny(Architecture::Rnn, 5);
        let mut g = net.zero_gradients();
        g.output.weights.set(0, 0, 3.0);
        g.output.weights.set(1, 0, 4.0);
        assert!(clip_gradients(&mut g, 1.0));
        assert!((g.squared_norm() - 1.0).abs() < 1e-12);
        assert!(!clip_gradients(&mut g, 2.0));
    }

    #[test]
    fn config_validation_names_keys() {
        let c = TrainingConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("training.learning_rate"));
        assert!(TrainingConfig::default().validate().is_ok());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let mut net = tiny(Architecture::Rnn, 5);
        let mut t = Trainer::new(TrainingConfig::default(), None).unwrap();
        let v = vec![Encoded { ids: vec![0, 1], starts_document: true }];
        assert!(t.train_epoch(&mut net, &[], &v).is_err());
    }

    #[test]
    fn recurrent_models_refuse_sampling() {
        let mut net = tiny(Architecture::Lstm, 5);
        let cfg = TrainingConfig {
            sampling: Some(SamplingConfig::default()),
            ..Default::default()
        };
        let q = ProposalDistribution::uniform(5).unwrap();
        let data = vec![Encoded { ids: vec![0, 2, 1], starts_document: true }];
        let err = Trainer::new(cfg, Some(q)).unwrap().train_epoch(&mut net, &data, &data).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err}");
    }

    #[test]
    fn epoch_log_format() {
        let r = EpochReport {
            epoch: 2,
            train_nll: 1.5,
            valid_ppl: 4.25,
            words_per_s: Some(1000.0),
            learning_rate: 0.05,
            clip_events: 0,
        };
        let mut buf = Vec::new();
        write_epoch_log(&mut buf, &[r], true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch\ttrain_nll\tvalid_ppl\twords_per_s\tlr\n2\t1.500000\t4.2500\t1000.0\t0.05\n");
    }
}
