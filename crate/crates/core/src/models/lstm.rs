//! LSTM with full-matrix peepholes.
//!
//! ```text
//! i_t = σ(U_i·x_t + W_i·s_{t−1} + P_i·c_{t−1} + b_i)
//! f_t = σ(U_f·x_t + W_f·s_{t−1} + P_f·c_{t−1} + b_f)
//! g_t = tanh(U_g·x_t + W_g·s_{t−1} + P_g·c_{t−1} + b_g)
//! c_t = f_t ∗ c_{t−1} + i_t ∗ g_t
//! o_t = σ(U_o·x_t + W_o·s_{t−1} + P_o·c_t + b_o)
//! s_t = o_t ∗ tanh(c_t)
//! ```
//!
//! The output-gate peephole reads the *current* cell, the others the
//! previous one. The candidate also has a peephole; all four are dropped
//! together when peepholes are disabled.

use super::params::{bias_slot, bias_slot_mut, matrix_slot, matrix_slot_mut, Slot, SlotMut};
use super::HiddenState;
use crate::error::{Error, Result};
use crate::numerics::{
    add_into, init_matrix, sigmoid_grad, sigmoid_in_place, tanh_grad, tanh_in_place, Matrix, Scalar,
    SeededRng,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Gate<S> {
    pub input: Matrix<S>,
    pub recurrent: Matrix<S>,
    pub peephole: Option<Matrix<S>>,
    pub bias: Option<Vec<S>>,
}

impl<S: Scalar> Gate<S> {
    fn zeros(embed: usize, hidden: usize, peephole: bool, bias: bool) -> Self {
        Gate {
            input: Matrix::zeros(hidden, embed),
            recurrent: Matrix::zeros(hidden, hidden),
            peephole: peephole.then(|| Matrix::zeros(hidden, hidden)),
            bias: bias.then(|| vec![S::zero(); hidden]),
        }
    }

    fn random(embed: usize, hidden: usize, peephole: bool, bias: bool, rng: &mut SeededRng) -> Result<Self> {
        Ok(Gate {
            input: init_matrix(hidden, embed, rng)?,
            recurrent: init_matrix(hidden, hidden, rng)?,
            peephole: if peephole { Some(init_matrix(hidden, hidden, rng)?) } else { None },
            bias: bias.then(|| vec![S::zero(); hidden]),
        })
    }

    fn preactivation(&self, x: &[S], s_prev: &[S], cell: &[S]) -> Vec<S> {
        let mut a = self.bias.clone().unwrap_or_else(|| vec![S::zero(); self.input.rows()]);
        self.input.matvec_acc(x, &mut a);
        self.recurrent.matvec_acc(s_prev, &mut a);
        if let Some(p) = &self.peephole {
            p.matvec_acc(cell, &mut a);
        }
        a
    }

    /// Accumulate parameter gradients for pre-activation gradient `da` and
    /// push `da` back into `dx`, `ds_prev` and `dcell`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        da: &[S],
        x: &[S],
        s_prev: &[S],
        cell: &[S],
        grads: &mut Gate<S>,
        dx: &mut [S],
        ds_prev: &mut [S],
        dcell: &mut [S],
    ) {
        grads.input.outer_acc(da, x);
        grads.recurrent.outer_acc(da, s_prev);
        self.input.matvec_transpose_acc(da, dx);
        self.recurrent.matvec_transpose_acc(da, ds_prev);
        if let (Some(p), Some(gp)) = (&self.peephole, &mut grads.peephole) {
            gp.outer_acc(da, cell);
            p.matvec_transpose_acc(da, dcell);
        }
        if let Some(gb) = &mut grads.bias {
            add_into(da, gb);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParameters<S> {
    pub embedding: Matrix<S>,
    pub input_gate: Gate<S>,
    pub forget_gate: Gate<S>,
    pub output_gate: Gate<S>,
    pub candidate: Gate<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmStep<S> {
    pub word: usize,
    pub x: Vec<S>,
    pub s_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub g: Vec<S>,
    pub o: Vec<S>,
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
    pub s: Vec<S>,
}

const GATE_NAMES: [[&str; 4]; 4] = [
    ["U_i", "W_i", "P_i", "b_i"],
    ["U_f", "W_f", "P_f", "b_f"],
    ["U_o", "W_o", "P_o", "b_o"],
    ["U_g", "W_g", "P_g", "b_g"],
];

impl<S: Scalar> LstmParameters<S> {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, peepholes: bool, bias: bool) -> Self {
        let gate = || Gate::zeros(embed, hidden, peepholes, bias);
        LstmParameters {
            embedding: Matrix::zeros(vocab, embed),
            input_gate: gate(),
            forget_gate: gate(),
            output_gate: gate(),
            candidate: gate(),
        }
    }

    pub fn random(vocab: usize, embed: usize, hidden: usize, peepholes: bool, bias: bool, rng: &mut SeededRng) -> Result<Self> {
        Ok(LstmParameters {
            embedding: init_matrix(vocab, embed, rng)?,
            input_gate: Gate::random(embed, hidden, peepholes, bias, rng)?,
            forget_gate: Gate::random(embed, hidden, peepholes, bias, rng)?,
            output_gate: Gate::random(embed, hidden, peepholes, bias, rng)?,
            candidate: Gate::random(embed, hidden, peepholes, bias, rng)?,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.candidate.recurrent.rows()
    }

    fn gates(&self) -> [&Gate<S>; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    pub fn step(&self, word: usize, prev: &HiddenState<S>) -> Result<LstmStep<S>> {
        let nh = self.hidden_size();
        if prev.s.len() != nh || prev.c.len() != nh {
            return Err(Error::shape(
                "lstm_step",
                format!("hidden size {nh}"),
                format!("state ({}, {})", prev.s.len(), prev.c.len()),
            ));
        }
        if word >= self.embedding.rows() {
            return Err(Error::IndexOutOfRange {
                what: "vocabulary",
                index: word,
                size: self.embedding.rows(),
            });
        }
        let x = self.embedding.row(word).to_vec();
        let (s_prev, c_prev) = (&prev.s, &prev.c);

        let mut i = self.input_gate.preactivation(&x, s_prev, c_prev);
        sigmoid_in_place(&mut i);
        let mut f = self.forget_gate.preactivation(&x, s_prev, c_prev);
        sigmoid_in_place(&mut f);
        let mut g = self.candidate.preactivation(&x, s_prev, c_prev);
        tanh_in_place(&mut g);
        let c: Vec<S> = (0..nh).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let mut o = self.output_gate.preactivation(&x, s_prev, &c);
        sigmoid_in_place(&mut o);
        let mut tanh_c = c.clone();
        tanh_in_place(&mut tanh_c);
        let s: Vec<S> = o.iter().zip(&tanh_c).map(|(&a, &b)| a * b).collect();
        Ok(LstmStep {
            word,
            x,
            s_prev: s_prev.clone(),
            c_prev: c_prev.clone(),
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            s,
        })
    }

    /// Full BPTT; returns gradients with respect to the initial `(s, c)`.
    pub fn backward(&self, steps: &[LstmStep<S>], dh: &[Vec<S>], dx: &[Vec<S>], grads: &mut LstmParameters<S>) -> (Vec<S>, Vec<S>) {
        let nh = self.hidden_size();
        let mut ds_next = vec![S::zero(); nh];
        let mut dc_next = vec![S::zero(); nh];
        for t in (0..steps.len()).rev() {
            let st = &steps[t];
            let ds: Vec<S> = (0..nh).map(|j| dh[t][j] + ds_next[j]).collect();
            let da_o: Vec<S> = (0..nh).map(|j| ds[j] * st.tanh_c[j] * sigmoid_grad(st.o[j])).collect();

            let mut dc: Vec<S> = (0..nh)
                .map(|j| dc_next[j] + ds[j] * st.o[j] * tanh_grad(st.tanh_c[j]))
                .collect();
            let mut dxt = dx[t].clone();
            let mut ds_prev = vec![S::zero(); nh];
            // the output gate peeks at c_t, so its contribution lands in dc
            self.output_gate
                .backward(&da_o, &st.x, &st.s_prev, &st.c, &mut grads.output_gate, &mut dxt, &mut ds_prev, &mut dc);

            let da_i: Vec<S> = (0..nh).map(|j| dc[j] * st.g[j] * sigmoid_grad(st.i[j])).collect();
            let da_f: Vec<S> = (0..nh).map(|j| dc[j] * st.c_prev[j] * sigmoid_grad(st.f[j])).collect();
            let da_g: Vec<S> = (0..nh).map(|j| dc[j] * st.i[j] * tanh_grad(st.g[j])).collect();

            let mut dc_prev: Vec<S> = (0..nh).map(|j| dc[j] * st.f[j]).collect();
            self.input_gate
                .backward(&da_i, &st.x, &st.s_prev, &st.c_prev, &mut grads.input_gate, &mut dxt, &mut ds_prev, &mut dc_prev);
            self.forget_gate
                .backward(&da_f, &st.x, &st.s_prev, &st.c_prev, &mut grads.forget_gate, &mut dxt, &mut ds_prev, &mut dc_prev);
            self.candidate
                .backward(&da_g, &st.x, &st.s_prev, &st.c_prev, &mut grads.candidate, &mut dxt, &mut ds_prev, &mut dc_prev);

            add_into(&dxt, grads.embedding.row_mut(st.word));
            ds_next = ds_prev;
            dc_next = dc_prev;
        }
        (ds_next, dc_next)
    }

    pub(crate) fn slots(&self) -> Vec<Slot<'_, S>> {
        let mut v = vec![matrix_slot("C", &self.embedding)];
        for (gate, names) in self.gates().into_iter().zip(GATE_NAMES) {
            v.push(matrix_slot(names[0], &gate.input));
            v.push(matrix_slot(names[1], &gate.recurrent));
            if let Some(p) = &gate.peephole {
                v.push(matrix_slot(names[2], p));
            }
            if let Some(b) = &gate.bias {
                v.push(bias_slot(names[3], b));
            }
        }
        v
    }

    pub(crate) fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>> {
        let mut v = vec![matrix_slot_mut("C", &mut self.embedding)];
        let gates = [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ];
        for (gate, names) in gates.into_iter().zip(GATE_NAMES) {
            v.push(matrix_slot_mut(names[0], &mut gate.input));
            v.push(matrix_slot_mut(names[1], &mut gate.recurrent));
            if let Some(p) = &mut gate.peephole {
                v.push(matrix_slot_mut(names[2], p));
            }
            if let Some(b) = &mut gate.bias {
                v.push(bias_slot_mut(names[3], b));
            }
        }
        v
    }
}
