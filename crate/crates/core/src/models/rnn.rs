use super::params::{bias_slot, bias_slot_mut, matrix_slot, matrix_slot_mut, Slot, SlotMut};
use super::HiddenState;
use crate::error::{Error, Result};
use crate::numerics::{init_matrix, tanh_grad, tanh_in_place, Matrix, Scalar, SeededRng};

/// Elman recurrence `s_t = tanh(U·x_t + W·s_{t−1} + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnParameters<S> {
    pub embedding: Matrix<S>,
    pub input: Matrix<S>,
    pub recurrent: Matrix<S>,
    pub bias: Option<Vec<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnStep<S> {
    pub word: usize,
    pub x: Vec<S>,
    pub s_prev: Vec<S>,
    pub s: Vec<S>,
}

impl<S: Scalar> RnnParameters<S> {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, bias: bool) -> Self {
        RnnParameters {
            embedding: Matrix::zeros(vocab, embed),
            input: Matrix::zeros(hidden, embed),
            recurrent: Matrix::zeros(hidden, hidden),
            bias: bias.then(|| vec![S::zero(); hidden]),
        }
    }

    pub fn random(vocab: usize, embed: usize, hidden: usize, bias: bool, rng: &mut SeededRng) -> Result<Self> {
        Ok(RnnParameters {
            embedding: init_matrix(vocab, embed, rng)?,
            input: init_matrix(hidden, embed, rng)?,
            recurrent: init_matrix(hidden, hidden, rng)?,
            bias: bias.then(|| vec![S::zero(); hidden]),
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent.rows()
    }

    pub fn step(&self, word: usize, prev: &HiddenState<S>) -> Result<RnnStep<S>> {
        let nh = self.hidden_size();
        if prev.s.len() != nh {
            return Err(Error::shape("rnn_step", format!("hidden size {nh}"), format!("state of {}", prev.s.len())));
        }
        if word >= self.embedding.rows() {
            return Err(Error::IndexOutOfRange {
                what: "vocabulary",
                index: word,
                size: self.embedding.rows(),
            });
        }
        let x = self.embedding.row(word).to_vec();
        let mut s = self.bias.clone().unwrap_or_else(|| vec![S::zero(); nh]);
        self.input.matvec_acc(&x, &mut s);
        self.recurrent.matvec_acc(&prev.s, &mut s);
        tanh_in_place(&mut s);
        Ok(RnnStep {
            word,
            x,
            s_prev: prev.s.clone(),
            s,
        })
    }

    /// Full BPTT; returns the gradient with respect to the initial state.
    pub fn backward(&self, steps: &[RnnStep<S>], dh: &[Vec<S>], dx: &[Vec<S>], grads: &mut RnnParameters<S>) -> Vec<S> {
        let nh = self.hidden_size();
        let mut ds_next = vec![S::zero(); nh];
        for t in (0..steps.len()).rev() {
            let step = &steps[t];
            let da: Vec<S> = (0..nh)
                .map(|i| (dh[t][i] + ds_next[i]) * tanh_grad(step.s[i]))
                .collect();
            grads.input.outer_acc(&da, &step.x);
            grads.recurrent.outer_acc(&da, &step.s_prev);
            if let Some(gb) = &mut grads.bias {
                crate::numerics::add_into(&da, gb);
            }
            let mut dxt = dx[t].clone();
            self.input.matvec_transpose_acc(&da, &mut dxt);
            crate::numerics::add_into(&dxt, grads.embedding.row_mut(step.word));
            ds_next.iter_mut().for_each(|v| *v = S::zero());
            self.recurrent.matvec_transpose_acc(&da, &mut ds_next);
        }
        ds_next
    }

    pub(crate) fn slots(&self) -> Vec<Slot<'_, S>> {
        let mut v = vec![
            matrix_slot("C", &self.embedding),
            matrix_slot("U", &self.input),
            matrix_slot("W", &self.recurrent),
        ];
        if let Some(b) = &self.bias {
            v.push(bias_slot("b", b));
        }
        v
    }

    pub(crate) fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        let mut v = vec![
            matrix_slot_mut("C", &mut self.embedding),
            matrix_slot_mut("U", &mut self.input),
            matrix_slot_mut("W", &mut self.recurrent),
        ];
        if let Some(b) = &mut self.bias {
            v.push(bias_slot_mut("b", b));
        }
        v
    }
}
