//! Output layers: full softmax, class-factored softmax and multi-layer
//! hierarchical decomposition.
//!
//! All three are laid out as a tree of softmax nodes. A word's probability is
//! the product of the branch probabilities along its path; full softmax is a
//! single node whose children are the words, a class layer adds one level,
//! and a hierarchy with `l` class layers has depth `l + 1`. Every child of
//! every node owns one row of the score parameters, and a node's rows are
//! contiguous so scoring it is a single matrix slice.

mod assign;

pub use assign::{
    assign_by_frequency, assign_by_sqrt_frequency, assign_uniform_random, branching_for,
    default_class_count, hierarchy_uniform_random, near_equal_sizes, vocab_by_frequency,
    vocab_by_sqrt_frequency, ClassAssignment, HierarchicalCode, Partition,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init_matrix, log_sum_exp, Matrix, Scalar, SeededRng};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputStrategy {
    Full { vocab_size: usize },
    Class(ClassAssignment),
    Hierarchical(HierarchicalCode),
}

impl OutputStrategy {
    pub fn vocab_size(&self) -> usize {
        match self {
            OutputStrategy::Full { vocab_size } => *vocab_size,
            OutputStrategy::Class(c) => c.num_words(),
            OutputStrategy::Hierarchical(h) => h.num_words(),
        }
    }

    pub fn partition(&self) -> Partition {
        match self {
            OutputStrategy::Full { vocab_size } => Partition::Leaf((0..*vocab_size).collect()),
            OutputStrategy::Class(c) => Partition::Internal(
                (0..c.num_classes())
                    .map(|i| Partition::Leaf(c.members(i).to_vec()))
                    .collect(),
            ),
            OutputStrategy::Hierarchical(h) => h.partition(),
        }
    }

    pub fn structure(&self) -> Result<OutputStructure> {
        OutputStructure::from_partition(&self.partition(), self.vocab_size())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Node {
    first_row: usize,
    len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Step {
    node: u32,
    child: u32,
}

/// Softmax tree shared by prediction and gradient code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputStructure {
    nodes: Vec<Node>,
    path_start: Vec<usize>,
    steps: Vec<Step>,
    rows: usize,
}

impl OutputStructure {
    /// Lays nodes out breadth first, so the root's rows come first.
    pub fn from_partition(root: &Partition, vocab_size: usize) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut paths: Vec<Option<Vec<Step>>> = vec![None; vocab_size];
        let mut queue = std::collections::VecDeque::new();
        let mut rows = 0;
        queue.push_back((root, Vec::<Step>::new()));
        while let Some((p, prefix)) = queue.pop_front() {
            let id = nodes.len() as u32;
            let len = match p {
                Partition::Internal(c) => c.len(),
                Partition::Leaf(w) => w.len(),
            };
            if len == 0 {
                return Err(Error::InvalidArgument("output tree has an empty node".into()));
            }
            nodes.push(Node { first_row: rows, len });
            rows += len;
            match p {
                Partition::Internal(children) => {
                    for (i, c) in children.iter().enumerate() {
                        let mut path = prefix.clone();
                        path.push(Step { node: id, child: i as u32 });
                        queue.push_back((c, path));
                    }
                }
                Partition::Leaf(words) => {
                    for (i, &w) in words.iter().enumerate() {
                        let slot = paths.get_mut(w).ok_or(Error::IndexOutOfRange {
                            what: "vocabulary",
                            index: w,
                            size: vocab_size,
                        })?;
                        if slot.is_some() {
                            return Err(Error::InvalidArgument(format!("word {w} appears twice in the output tree")));
                        }
                        let mut path = prefix.clone();
                        path.push(Step { node: id, child: i as u32 });
                        *slot = Some(path);
                    }
                }
            }
        }
        let mut path_start = Vec::with_capacity(vocab_size + 1);
        let mut steps = Vec::new();
        for (w, p) in paths.into_iter().enumerate() {
            let p = p.ok_or_else(|| Error::InvalidArgument(format!("word {w} is not in the output tree")))?;
            path_start.push(steps.len());
            steps.extend(p);
        }
        path_start.push(steps.len());
        Ok(OutputStructure {
            nodes,
            path_start,
            steps,
            rows,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.path_start.len() - 1
    }

    /// Number of score rows across all nodes.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth_of(&self, word: usize) -> usize {
        self.path_start[word + 1] - self.path_start[word]
    }

    fn path(&self, word: usize) -> &[Step] {
        &self.steps[self.path_start[word]..self.path_start[word + 1]]
    }

    /// Node holding `word` as a direct child; the "class" of the word.
    pub fn leaf_node(&self, word: usize) -> usize {
        self.path(word).last().map_or(0, |s| s.node as usize)
    }

    /// Score row of `word` in its leaf node.
    pub fn word_row(&self, word: usize) -> usize {
        let s = self.path(word).last().expect("every word has a path");
        self.nodes[s.node as usize].first_row + s.child as usize
    }

    fn check_word(&self, word: usize) -> Result<()> {
        if word >= self.vocab_size() {
            return Err(Error::IndexOutOfRange {
                what: "vocabulary",
                index: word,
                size: self.vocab_size(),
            });
        }
        Ok(())
    }

    fn node_scores<S: Scalar>(&self, params: &OutputParameters<S>, node: usize, h: &[S], x: &[S], out: &mut Vec<S>) {
        let n = self.nodes[node];
        out.clear();
        match &params.bias {
            Some(b) => out.extend_from_slice(&b[n.first_row..n.first_row + n.len]),
            None => out.resize(n.len, S::zero()),
        }
        params.weights.matvec_rows_acc(n.first_row, h, out);
        if let Some(m) = &params.direct {
            m.matvec_rows_acc(n.first_row, x, out);
        }
    }

    /// Natural-log probability of `word` given hidden vector `h` and input `x`.
    pub fn log_prob<S: Scalar>(&self, params: &OutputParameters<S>, h: &[S], x: &[S], word: usize) -> Result<S> {
        self.check_word(word)?;
        Ok(self.log_prob_factors(params, h, x, word).0)
    }

    /// `(log P(word), log P(word | leaf class))`.
    pub fn log_prob_factors<S: Scalar>(&self, params: &OutputParameters<S>, h: &[S], x: &[S], word: usize) -> (S, S) {
        let mut scores = Vec::new();
        let mut total = S::zero();
        let mut last = S::zero();
        for s in self.path(word) {
            self.node_scores(params, s.node as usize, h, x, &mut scores);
            last = scores[s.child as usize] - log_sum_exp(&scores);
            total += last;
        }
        (total, last)
    }

    /// Log probability plus accumulation of the negative log-likelihood
    /// gradient into `grads`, `dh` and `dx`.
    pub fn log_prob_grad<S: Scalar>(
        &self,
        params: &OutputParameters<S>,
        h: &[S],
        x: &[S],
        word: usize,
        grads: &mut OutputParameters<S>,
        dh: &mut [S],
        dx: &mut [S],
    ) -> Result<S> {
        self.check_word(word)?;
        let mut scores = Vec::new();
        let mut total = S::zero();
        for s in self.path(word) {
            let node = self.nodes[s.node as usize];
            self.node_scores(params, s.node as usize, h, x, &mut scores);
            let lse = log_sum_exp(&scores);
            total += scores[s.child as usize] - lse;
            // d(-log softmax)/d scores = softmax - onehot
            for v in scores.iter_mut() {
                *v = (*v - lse).exp();
            }
            scores[s.child as usize] -= S::one();
            accumulate_rows(params, grads, node.first_row, &scores, h, x, dh, dx);
        }
        Ok(total)
    }

    /// Log probabilities of every word; O(rows).
    pub fn log_probs_all<S: Scalar>(&self, params: &OutputParameters<S>, h: &[S], x: &[S]) -> Vec<S> {
        let mut node_logp: Vec<Vec<S>> = Vec::with_capacity(self.nodes.len());
        let mut scores = Vec::new();
        for i in 0..self.nodes.len() {
            self.node_scores(params, i, h, x, &mut scores);
            let lse = log_sum_exp(&scores);
            node_logp.push(scores.iter().map(|&v| v - lse).collect());
        }
        (0..self.vocab_size())
            .map(|w| {
                self.path(w)
                    .iter()
                    .map(|s| node_logp[s.node as usize][s.child as usize])
                    .fold(S::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Raw score of the word rows, for energy-based sampling on a full softmax.
    pub fn word_score<S: Scalar>(&self, params: &OutputParameters<S>, h: &[S], x: &[S], word: usize) -> S {
        let row = self.word_row(word);
        let mut s = params.bias.as_ref().map_or(S::zero(), |b| b[row]);
        s += crate::numerics::dot(params.weights.row(row), h);
        if let Some(m) = &params.direct {
            s += crate::numerics::dot(m.row(row), x);
        }
        s
    }

    pub fn is_flat(&self) -> bool {
        self.nodes.len() == 1
    }
}

/// Adds the contribution of score gradients `g` for rows `first_row..` to
/// the parameter gradients and to `dh`, `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_rows<S: Scalar>(
    params: &OutputParameters<S>,
    grads: &mut OutputParameters<S>,
    first_row: usize,
    g: &[S],
    h: &[S],
    x: &[S],
    dh: &mut [S],
    dx: &mut [S],
) {
    grads.weights.outer_rows_acc(first_row, g, h);
    params.weights.matvec_rows_transpose_acc(first_row, g, dh);
    if let (Some(m), Some(gm)) = (&params.direct, &mut grads.direct) {
        gm.outer_rows_acc(first_row, g, x);
        m.matvec_rows_transpose_acc(first_row, g, dx);
    }
    if let Some(gb) = &mut grads.bias {
        for (b, &v) in gb[first_row..first_row + g.len()].iter_mut().zip(g) {
            *b += v;
        }
    }
}

/// Score parameters: `weights` (V, rows × n_h), optional direct connections
/// (M, rows × n_i) and optional bias (d).
#[derive(Clone, Debug, PartialEq)]
pub struct OutputParameters<S> {
    pub weights: Matrix<S>,
    pub direct: Option<Matrix<S>>,
    pub bias: Option<Vec<S>>,
}

impl<S: Scalar> OutputParameters<S> {
    pub fn zeros(rows: usize, hidden: usize, input: usize, direct: bool, bias: bool) -> Self {
        OutputParameters {
            weights: Matrix::zeros(rows, hidden),
            direct: direct.then(|| Matrix::zeros(rows, input)),
            bias: bias.then(|| vec![S::zero(); rows]),
        }
    }

    pub fn random(
        rows: usize,
        hidden: usize,
        input: usize,
        direct: bool,
        bias: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(OutputParameters {
            weights: init_matrix(rows, hidden, rng)?,
            direct: if direct { Some(init_matrix(rows, input, rng)?) } else { None },
            // biases start at zero
            bias: bias.then(|| vec![S::zero(); rows]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        OutputParameters {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            direct: self.direct.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())),
            bias: self.bias.as_ref().map(|b| vec![S::zero(); b.len()]),
        }
    }
}

fn expect_kind(structure: &OutputStructure, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "output structure with {} nodes is not a {what}",
            structure.num_nodes()
        )))
    }
}

/// Full softmax over all `k` scores: returns `log P(target)` and accumulates
/// the gradient `softmax(y) - onehot(target)` into the parameters and state.
#[allow(clippy::too_many_arguments)]
pub fn full_softmax_predict<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    target: usize,
    grads: &mut OutputParameters<S>,
    dh: &mut [S],
    dx: &mut [S],
) -> Result<S> {
    expect_kind(structure, structure.is_flat(), "full softmax")?;
    structure.log_prob_grad(params, h, x, target, grads, dh, dx)
}

/// Class-factored softmax: `log P(c(w)|h) + log P(w|c(w),h)`.
#[allow(clippy::too_many_arguments)]
pub fn class_predict<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    target: usize,
    grads: &mut OutputParameters<S>,
    dh: &mut [S],
    dx: &mut [S],
) -> Result<S> {
    structure.check_word(target)?;
    expect_kind(structure, structure.depth_of(target) == 2, "class softmax")?;
    structure.log_prob_grad(params, h, x, target, grads, dh, dx)
}

/// Hierarchical decomposition: sum over the path of per-node log softmax.
#[allow(clippy::too_many_arguments)]
pub fn hierarchical_predict<S: Scalar>(
    structure: &OutputStructure,
    params: &OutputParameters<S>,
    h: &[S],
    x: &[S],
    target: usize,
    grads: &mut OutputParameters<S>,
    dh: &mut [S],
    dx: &mut [S],
) -> Result<S> {
    structure.check_word(target)?;
    expect_kind(structure, structure.depth_of(target) >= 2, "hierarchy")?;
    structure.log_prob_grad(params, h, x, target, grads, dh, dx)
}
