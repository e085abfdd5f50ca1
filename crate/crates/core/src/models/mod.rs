//! FNN, RNN and LSTM language-model cores with analytic backward passes.
//!
//! A [`Network`] is a core (embedding plus hidden dynamics) feeding an
//! output layer. Forward passes record a [`CoreTape`] holding everything
//! the backward pass needs, so gradients are exact and full-sentence.

mod birnn;
mod fnn;
mod lstm;
mod params;
mod rnn;

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use birnn::birnn_encode;
pub use fnn::{FnnParameters, FnnStep};
pub use lstm::{Gate, LstmParameters, LstmStep};
pub use params::{ParameterSet, Slot, SlotKind, SlotMut};
pub use rnn::{RnnParameters, RnnStep};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeededRng};
use crate::output::{OutputParameters, OutputStrategy, OutputStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Fnn,
    Rnn,
    Lstm,
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fnn" => Ok(Architecture::Fnn),
            "rnn" => Ok(Architecture::Rnn),
            "lstm" => Ok(Architecture::Lstm),
            other => Err(Error::InvalidArgument(format!("unknown architecture `{other}`"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Fnn => "fnn",
            Architecture::Rnn => "rnn",
            Architecture::Lstm => "lstm",
        })
    }
}

/// Dimensions and toggles of a network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub vocab_size: usize,
    pub embedding: usize,
    pub hidden: usize,
    /// Context order `n` of the FNN; ignored by recurrent cores.
    pub order: usize,
    pub direct: bool,
    pub bias: bool,
    pub peepholes: bool,
}

impl ModelSpec {
    pub fn input_size(&self) -> usize {
        match self.architecture {
            Architecture::Fnn => self.embedding * (self.order - 1),
            _ => self.embedding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.vocab_size < 2 {
            return bad(format!("vocabulary of {} words is too small", self.vocab_size));
        }
        if self.embedding == 0 || self.hidden == 0 {
            return bad("embedding and hidden sizes must be positive".into());
        }
        if self.architecture == Architecture::Fnn && self.order < 2 {
            return bad(format!("FNN order must be at least 2, got {}", self.order));
        }
        Ok(())
    }
}

/// Recurrent state; `c` is empty for the plain RNN and both are empty for the FNN.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<S> {
    pub s: Vec<S>,
    pub c: Vec<S>,
}

impl<S: Scalar> HiddenState<S> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        match spec.architecture {
            Architecture::Fnn => HiddenState { s: vec![], c: vec![] },
            Architecture::Rnn => HiddenState {
                s: vec![S::zero(); spec.hidden],
                c: vec![],
            },
            Architecture::Lstm => HiddenState {
                s: vec![S::zero(); spec.hidden],
                c: vec![S::zero(); spec.hidden],
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.c).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Core<S> {
    Fnn(FnnParameters<S>),
    Rnn(RnnParameters<S>),
    Lstm(LstmParameters<S>),
}

/// Per-step forward records of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum CoreTape<S> {
    Fnn(Vec<FnnStep<S>>),
    Rnn(Vec<RnnStep<S>>),
    Lstm(Vec<LstmStep<S>>),
}

impl<S: Scalar> CoreTape<S> {
    pub fn len(&self) -> usize {
        match self {
            CoreTape::Fnn(v) => v.len(),
            CoreTape::Rnn(v) => v.len(),
            CoreTape::Lstm(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input vector `x_t` (embedding or concatenated context).
    pub fn input(&self, t: usize) -> &[S] {
        match self {
            CoreTape::Fnn(v) => &v[t].x,
            CoreTape::Rnn(v) => &v[t].x,
            CoreTape::Lstm(v) => &v[t].x,
        }
    }

    /// Hidden vector fed to the output layer at step `t`.
    pub fn hidden(&self, t: usize) -> &[S] {
        match self {
            CoreTape::Fnn(v) => &v[t].h,
            CoreTape::Rnn(v) => &v[t].s,
            CoreTape::Lstm(v) => &v[t].s,
        }
    }

    /// State after the last step.
    pub fn final_state(&self, init: &HiddenState<S>) -> HiddenState<S> {
        match self {
            CoreTape::Fnn(_) => init.clone(),
            CoreTape::Rnn(v) => v.last().map_or_else(|| init.clone(), |s| HiddenState { s: s.s.clone(), c: vec![] }),
            CoreTape::Lstm(v) => v.last().map_or_else(
                || init.clone(),
                |s| HiddenState {
                    s: s.s.clone(),
                    c: s.c.clone(),
                },
            ),
        }
    }
}

impl<S: Scalar> Core<S> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let (k, m, nh) = (spec.vocab_size, spec.embedding, spec.hidden);
        match spec.architecture {
            Architecture::Fnn => Core::Fnn(FnnParameters::zeros(k, m, nh, spec.order, spec.bias)),
            Architecture::Rnn => Core::Rnn(RnnParameters::zeros(k, m, nh, spec.bias)),
            Architecture::Lstm => Core::Lstm(LstmParameters::zeros(k, m, nh, spec.peepholes, spec.bias)),
        }
    }

    pub fn random(spec: &ModelSpec, rng: &mut SeededRng) -> Result<Self> {
        let (k, m, nh) = (spec.vocab_size, spec.embedding, spec.hidden);
        Ok(match spec.architecture {
            Architecture::Fnn => Core::Fnn(FnnParameters::random(k, m, nh, spec.order, spec.bias, rng)?),
            Architecture::Rnn => Core::Rnn(RnnParameters::random(k, m, nh, spec.bias, rng)?),
            Architecture::Lstm => Core::Lstm(LstmParameters::random(k, m, nh, spec.peepholes, spec.bias, rng)?),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Core::Fnn(_) => Architecture::Fnn,
            Core::Rnn(_) => Architecture::Rnn,
            Core::Lstm(_) => Architecture::Lstm,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Core::Fnn(p) => p.hidden_size(),
            Core::Rnn(p) => p.hidden_size(),
            Core::Lstm(p) => p.hidden_size(),
        }
    }

    pub fn embedding_size(&self) -> usize {
        self.embedding().cols()
    }

    pub fn embedding(&self) -> &crate::numerics::Matrix<S> {
        match self {
            Core::Fnn(p) => &p.embedding,
            Core::Rnn(p) => &p.embedding,
            Core::Lstm(p) => &p.embedding,
        }
    }

    /// Run the core over `inputs`; step `t` consumes `inputs[t]`.
    pub fn forward(&self, inputs: &[usize], init: &HiddenState<S>) -> Result<CoreTape<S>> {
        match self {
            Core::Fnn(p) => inputs
                .iter()
                .enumerate()
                .map(|(t, _)| p.step(&p.context_at(inputs, t)))
                .collect::<Result<_>>()
                .map(CoreTape::Fnn),
            Core::Rnn(p) => {
                let mut state = init.clone();
                let mut steps = Vec::with_capacity(inputs.len());
                for &w in inputs {
                    let st = p.step(w, &state)?;
                    state.s.clone_from(&st.s);
                    steps.push(st);
                }
                Ok(CoreTape::Rnn(steps))
            }
            Core::Lstm(p) => {
                let mut state = init.clone();
                let mut steps = Vec::with_capacity(inputs.len());
                for &w in inputs {
                    let st = p.step(w, &state)?;
                    state.s.clone_from(&st.s);
                    state.c.clone_from(&st.c);
                    steps.push(st);
                }
                Ok(CoreTape::Lstm(steps))
            }
        }
    }

    /// Exact gradients of the loss given per-step upstream gradients with
    /// respect to the hidden output (`dh`) and the input vector (`dx`, from
    /// direct connections). Accumulates into `grads`.
    pub fn backward(&self, tape: &CoreTape<S>, dh: &[Vec<S>], dx: &[Vec<S>], grads: &mut Core<S>) -> Result<()> {
        if dh.len() != tape.len() || dx.len() != tape.len() {
            return Err(Error::shape("sequence_backward", format!("tape of {}", tape.len()), format!("{} upstream steps", dh.len())));
        }
        match (self, tape, grads) {
            (Core::Fnn(p), CoreTape::Fnn(steps), Core::Fnn(g)) => p.backward(steps, dh, dx, g),
            (Core::Rnn(p), CoreTape::Rnn(steps), Core::Rnn(g)) => {
                p.backward(steps, dh, dx, g);
            }
            (Core::Lstm(p), CoreTape::Lstm(steps), Core::Lstm(g)) => {
                p.backward(steps, dh, dx, g);
            }
            _ => return Err(Error::InvalidArgument("tape, parameters and gradients disagree on architecture".into())),
        }
        Ok(())
    }
}

impl<S: Scalar> ParameterSet<S> for Core<S> {
    fn slots(&self) -> Vec<Slot<'_, S>> {
        match self {
            Core::Fnn(p) => p.slots(),
            Core::Rnn(p) => p.slots(),
            Core::Lstm(p) => p.slots(),
        }
    }

    fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        match self {
            Core::Fnn(p) => p.slots_mut(),
            Core::Rnn(p) => p.slots_mut(),
            Core::Lstm(p) => p.slots_mut(),
        }
    }
}

impl<S: Scalar> ParameterSet<S> for OutputParameters<S> {
    fn slots(&self) -> Vec<Slot<'_, S>> {
        let mut v = vec![params::matrix_slot("V", &self.weights)];
        if let Some(m) = &self.direct {
            v.push(params::matrix_slot("M", m));
        }
        if let Some(d) = &self.bias {
            v.push(params::bias_slot("d", d));
        }
        v
    }

    fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        let mut v = vec![params::matrix_slot_mut("V", &mut self.weights)];
        if let Some(m) = &mut self.direct {
            v.push(params::matrix_slot_mut("M", m));
        }
        if let Some(d) = &mut self.bias {
            v.push(params::bias_slot_mut("d", d));
        }
        v
    }
}

/// Gradients for every parameter of a [`Network`], shape-congruent with it.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<S> {
    pub core: Core<S>,
    pub output: OutputParameters<S>,
}

impl<S: Scalar> ParameterSet<S> for GradientSet<S> {
    fn slots(&self) -> Vec<Slot<'_, S>> {
        let mut v = self.core.slots();
        v.extend(self.output.slots());
        v
    }

    fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        let mut v = self.core.slots_mut();
        v.extend(self.output.slots_mut());
        v
    }
}

/// Result of scoring one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceScore<S> {
    /// Natural-log probability of each predicted token.
    pub log_probs: Vec<S>,
    pub final_state: HiddenState<S>,
}

impl<S: Scalar> SentenceScore<S> {
    pub fn total(&self) -> S {
        self.log_probs.iter().copied().fold(S::zero(), |a, b| a + b)
    }
}

/// Core plus output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    pub spec: ModelSpec,
    pub strategy: OutputStrategy,
    pub structure: Arc<OutputStructure>,
    pub core: Core<S>,
    pub output: OutputParameters<S>,
}

impl<S: Scalar> Network<S> {
    pub fn new(spec: ModelSpec, strategy: OutputStrategy, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        if strategy.vocab_size() != spec.vocab_size {
            return Err(Error::shape("Network::new", format!("vocabulary {}", spec.vocab_size), format!("output strategy over {}", strategy.vocab_size())));
        }
        let structure = Arc::new(strategy.structure()?);
        let core = Core::random(&spec, rng)?;
        let output = OutputParameters::random(structure.rows(), spec.hidden, spec.input_size(), spec.direct, spec.bias, rng)?;
        Ok(Network {
            spec,
            strategy,
            structure,
            core,
            output,
        })
    }

    /// Same shapes as [`Network::new`] with every parameter zero.
    pub fn zeros(spec: ModelSpec, strategy: OutputStrategy) -> Result<Self> {
        spec.validate()?;
        let structure = Arc::new(strategy.structure()?);
        let core = Core::zeros(&spec);
        let output = OutputParameters::zeros(structure.rows(), spec.hidden, spec.input_size(), spec.direct, spec.bias);
        Ok(Network {
            spec,
            strategy,
            structure,
            core,
            output,
        })
    }

    pub fn zero_gradients(&self) -> GradientSet<S> {
        GradientSet {
            core: self.core.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn initial_state(&self) -> HiddenState<S> {
        HiddenState::zeros(&self.spec)
    }

    fn check_sentence(&self, ids: &[usize]) -> Result<()> {
        if ids.len() < 2 {
            return Err(Error::InvalidArgument("an encoded sentence needs at least the two boundary marks".into()));
        }
        if let Some(&w) = ids.iter().find(|&&w| w >= self.spec.vocab_size) {
            return Err(Error::IndexOutOfRange {
                what: "vocabulary",
                index: w,
                size: self.spec.vocab_size,
            });
        }
        Ok(())
    }

    /// Score every token after the start mark of an encoded sentence.
    pub fn score_sentence(&self, ids: &[usize], init: &HiddenState<S>) -> Result<SentenceScore<S>> {
        self.check_sentence(ids)?;
        let tape = self.core.forward(&ids[..ids.len() - 1], init)?;
        let log_probs = (0..tape.len())
            .map(|t| self.structure.log_prob_factors(&self.output, tape.hidden(t), tape.input(t), ids[t + 1]).0)
            .collect();
        Ok(SentenceScore {
            log_probs,
            final_state: tape.final_state(init),
        })
    }

    /// Forward, output gradients and full BPTT for one sentence. Gradients of
    /// the sentence negative log-likelihood accumulate into `grads`.
    pub fn sentence_gradient(&self, ids: &[usize], init: &HiddenState<S>, grads: &mut GradientSet<S>) -> Result<SentenceScore<S>> {
        self.check_sentence(ids)?;
        let tape = self.core.forward(&ids[..ids.len() - 1], init)?;
        let (nh, ni) = (self.spec.hidden, self.spec.input_size());
        let mut dh = vec![vec![S::zero(); nh]; tape.len()];
        let mut dx = vec![vec![S::zero(); ni]; tape.len()];
        let mut log_probs = Vec::with_capacity(tape.len());
        for t in 0..tape.len() {
            log_probs.push(self.structure.log_prob_grad(
                &self.output,
                tape.hidden(t),
                tape.input(t),
                ids[t + 1],
                &mut grads.output,
                &mut dh[t],
                &mut dx[t],
            )?);
        }
        self.core.backward(&tape, &dh, &dx, &mut grads.core)?;
        Ok(SentenceScore {
            log_probs,
            final_state: tape.final_state(init),
        })
    }

    /// Negative log-likelihood of the sentence; the finite-difference target.
    pub fn sentence_nll(&self, ids: &[usize], init: &HiddenState<S>) -> Result<S> {
        Ok(-self.score_sentence(ids, init)?.total())
    }

    /// Full score vector of the flat softmax at step `t` of a tape.
    pub fn full_scores(&self, h: &[S], x: &[S]) -> Result<Vec<S>> {
        if !self.structure.is_flat() {
            return Err(Error::Unsupported("full score vectors need a full-softmax output layer".into()));
        }
        let mut y = self.output.bias.clone().unwrap_or_else(|| vec![S::zero(); self.structure.rows()]);
        self.output.weights.matvec_acc(h, &mut y);
        if let Some(m) = &self.output.direct {
            m.matvec_acc(x, &mut y);
        }
        Ok(y)
    }

    /// Convert to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Network<T> {
        let mut out = Network::<T>::zeros(self.spec.clone(), self.strategy.clone()).expect("same spec");
        for (dst, src) in out.slots_mut().into_iter().zip(self.slots()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d = T::of(s.as_f64());
            }
        }
        out
    }
}

impl<S: Scalar> ParameterSet<S> for Network<S> {
    fn slots(&self) -> Vec<Slot<'_, S>> {
        let mut v = self.core.slots();
        v.extend(self.output.slots());
        v
    }

    fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        let mut v = self.core.slots_mut();
        v.extend(self.output.slots_mut());
        v
    }
}

#[cfg(test)]
mod tests;
