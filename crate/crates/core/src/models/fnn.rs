use super::params::{bias_slot, bias_slot_mut, matrix_slot, matrix_slot_mut, Slot, SlotMut};
use crate::error::{Error, Result};
use crate::numerics::{init_matrix, tanh_grad, tanh_in_place, Matrix, Scalar, SeededRng};

/// Feed-forward core: `h = tanh(U·x + b)` over the concatenated embeddings
/// of the `n − 1` previous words.
#[derive(Clone, Debug, PartialEq)]
pub struct FnnParameters<S> {
    pub order: usize,
    pub embedding: Matrix<S>,
    pub hidden: Matrix<S>,
    pub bias: Option<Vec<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FnnStep<S> {
    pub context: Vec<usize>,
    pub x: Vec<S>,
    pub h: Vec<S>,
}

impl<S: Scalar> FnnParameters<S> {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, order: usize, bias: bool) -> Self {
        let ni = embed * (order - 1);
        FnnParameters {
            order,
            embedding: Matrix::zeros(vocab, embed),
            hidden: Matrix::zeros(hidden, ni),
            bias: bias.then(|| vec![S::zero(); hidden]),
        }
    }

    pub fn random(vocab: usize, embed: usize, hidden: usize, order: usize, bias: bool, rng: &mut SeededRng) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!("FNN order must be at least 2, got {order}")));
        }
        Ok(FnnParameters {
            order,
            embedding: init_matrix(vocab, embed, rng)?,
            hidden: init_matrix(hidden, embed * (order - 1), rng)?,
            bias: bias.then(|| vec![S::zero(); hidden]),
        })
    }

    pub fn input_size(&self) -> usize {
        self.embedding.cols() * (self.order - 1)
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.rows()
    }

    /// One prediction step from an explicit context of `n − 1` word indices.
    pub fn step(&self, context: &[usize]) -> Result<FnnStep<S>> {
        if context.len() != self.order - 1 {
            return Err(Error::shape("fnn_forward", format!("context of {}", self.order - 1), context.len()));
        }
        let m = self.embedding.cols();
        let mut x = Vec::with_capacity(m * context.len());
        for &w in context {
            if w >= self.embedding.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "vocabulary",
                    index: w,
                    size: self.embedding.rows(),
                });
            }
            x.extend_from_slice(self.embedding.row(w));
        }
        let mut h = self.bias.clone().unwrap_or_else(|| vec![S::zero(); self.hidden_size()]);
        self.hidden.matvec_acc(&x, &mut h);
        tanh_in_place(&mut h);
        Ok(FnnStep {
            context: context.to_vec(),
            x,
            h,
        })
    }

    /// Context for the step consuming `inputs[t]`; positions before the
    /// first input repeat it (the start mark in encoded sentences).
    pub fn context_at(&self, inputs: &[usize], t: usize) -> Vec<usize> {
        let n1 = self.order - 1;
        (0..n1)
            .map(|j| {
                let back = n1 - 1 - j;
                inputs[t.saturating_sub(back)]
            })
            .collect()
    }

    pub fn backward(&self, steps: &[FnnStep<S>], dh: &[Vec<S>], dx: &[Vec<S>], grads: &mut FnnParameters<S>) {
        let m = self.embedding.cols();
        for (t, step) in steps.iter().enumerate() {
            let da: Vec<S> = dh[t].iter().zip(&step.h).map(|(&g, &h)| g * tanh_grad(h)).collect();
            grads.hidden.outer_acc(&da, &step.x);
            if let Some(gb) = &mut grads.bias {
                crate::numerics::add_into(&da, gb);
            }
            let mut dxt = dx[t].clone();
            self.hidden.matvec_transpose_acc(&da, &mut dxt);
            for (j, &w) in step.context.iter().enumerate() {
                crate::numerics::add_into(&dxt[j * m..(j + 1) * m], grads.embedding.row_mut(w));
            }
        }
    }

    pub(crate) fn slots(&self) -> Vec<Slot<'_, S>> {
        let mut v = vec![matrix_slot("C", &self.embedding), matrix_slot("U", &self.hidden)];
        if let Some(b) = &self.bias {
            v.push(bias_slot("b", b));
        }
        v
    }

    pub(crate) fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        let mut v = vec![
            matrix_slot_mut("C", &mut self.embedding),
            matrix_slot_mut("U", &mut self.hidden),
        ];
        if let Some(b) = &mut self.bias {
            v.push(bias_slot_mut("b", b));
        }
        v
    }
}
