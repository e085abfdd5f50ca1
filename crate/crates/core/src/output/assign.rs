//! Word-to-class assignment rules.

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Partition of the vocabulary into classes that are contiguous in `order`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ClassAssignmentRepr", into = "ClassAssignmentRepr")]
pub struct ClassAssignment {
    order: Vec<usize>,
    bounds: Vec<usize>,
    class_of: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ClassAssignmentRepr {
    order: Vec<usize>,
    sizes: Vec<usize>,
}

impl TryFrom<ClassAssignmentRepr> for ClassAssignment {
    type Error = Error;
    fn try_from(r: ClassAssignmentRepr) -> Result<Self> {
        ClassAssignment::from_sizes(r.order, &r.sizes)
    }
}

impl From<ClassAssignment> for ClassAssignmentRepr {
    fn from(c: ClassAssignment) -> Self {
        let sizes = (0..c.num_classes()).map(|i| c.members(i).len()).collect();
        ClassAssignmentRepr {
            order: c.order,
            sizes,
        }
    }
}

impl ClassAssignment {
    /// `order` lists every word once; consecutive runs of `sizes` form the classes.
    pub fn from_sizes(order: Vec<usize>, sizes: &[usize]) -> Result<Self> {
        check_permutation(&order)?;
        if sizes.iter().sum::<usize>() != order.len() || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "class sizes {sizes:?} do not partition {} words into non-empty classes",
                order.len()
            )));
        }
        let mut bounds = Vec::with_capacity(sizes.len() + 1);
        bounds.push(0);
        for s in sizes {
            bounds.push(bounds.last().unwrap() + s);
        }
        let mut class_of = vec![0; order.len()];
        for c in 0..sizes.len() {
            for &w in &order[bounds[c]..bounds[c + 1]] {
                class_of[w] = c;
            }
        }
        Ok(ClassAssignment {
            order,
            bounds,
            class_of,
        })
    }

    pub fn num_words(&self) -> usize {
        self.order.len()
    }

    pub fn num_classes(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn class_of(&self, word: usize) -> usize {
        self.class_of[word]
    }

    /// Words of class `c`, in assignment order.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.order[self.bounds[c]..self.bounds[c + 1]]
    }

    /// Position range `[p, q)` of class `c` within the assignment order.
    pub fn range(&self, c: usize) -> std::ops::Range<usize> {
        self.bounds[c]..self.bounds[c + 1]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for w in 0..self.num_words() {
            out.push_str(vocab.word(w));
            out.push('\t');
            out.push_str(&self.class_of[w].to_string());
            out.push('\n');
        }
        out
    }
}

/// Multi-layer random tree: `layers` levels of near-equal branching above
/// the word level. Each word's code lists its branch at every level followed
/// by its slot within the leaf class, so codes are unique.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalCode {
    layers: usize,
    branching: usize,
    order: Vec<usize>,
}

/// Nested partition used to lay out output-layer nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Partition {
    Internal(Vec<Partition>),
    Leaf(Vec<usize>),
}

impl HierarchicalCode {
    pub fn new(layers: usize, branching: usize, order: Vec<usize>) -> Result<Self> {
        if layers == 0 || branching < 2 {
            return Err(Error::InvalidArgument(format!(
                "hierarchy needs at least one layer and branching >= 2 (got {layers}, {branching})"
            )));
        }
        check_permutation(&order)?;
        Ok(HierarchicalCode {
            layers,
            branching,
            order,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn num_words(&self) -> usize {
        self.order.len()
    }

    pub fn partition(&self) -> Partition {
        split_recursive(&self.order, self.branching, self.layers)
    }

    /// Branch index at every level, then the slot inside the leaf class.
    pub fn codes(&self) -> Vec<Vec<usize>> {
        let mut codes = vec![Vec::new(); self.order.len()];
        fn walk(p: &Partition, prefix: &mut Vec<usize>, codes: &mut [Vec<usize>]) {
            match p {
                Partition::Internal(children) => {
                    for (i, c) in children.iter().enumerate() {
                        prefix.push(i);
                        walk(c, prefix, codes);
                        prefix.pop();
                    }
                }
                Partition::Leaf(words) => {
                    for (i, &w) in words.iter().enumerate() {
                        let mut code = prefix.clone();
                        code.push(i);
                        codes[w] = code;
                    }
                }
            }
        }
        walk(&self.partition(), &mut Vec::new(), &mut codes);
        codes
    }
}

fn split_recursive(words: &[usize], branching: usize, depth: usize) -> Partition {
    if depth == 0 {
        return Partition::Leaf(words.to_vec());
    }
    let groups = branching.min(words.len()).max(1);
    let mut children = Vec::with_capacity(groups);
    let mut at = 0;
    for size in near_equal_sizes(words.len(), groups) {
        children.push(split_recursive(&words[at..at + size], branching, depth - 1));
        at += size;
    }
    Partition::Internal(children)
}

fn check_permutation(order: &[usize]) -> Result<()> {
    let mut seen = vec![false; order.len()];
    for &w in order {
        if w >= order.len() || std::mem::replace(&mut seen[w], true) {
            return Err(Error::InvalidArgument(format!(
                "word order is not a permutation of 0..{}",
                order.len()
            )));
        }
    }
    Ok(())
}

/// Sizes of `groups` near-equal parts of `n` items; larger parts first.
pub fn near_equal_sizes(n: usize, groups: usize) -> Vec<usize> {
    let base = n / groups;
    let extra = n % groups;
    (0..groups).map(|i| base + usize::from(i < extra)).collect()
}

/// Smallest branching factor `b >= 2` with `b^(layers + 1) >= k`; the extra
/// factor is the word level below the last class layer.
pub fn branching_for(k: usize, layers: usize) -> usize {
    let guess = (k as f64).powf(1.0 / (layers as f64 + 1.0)).ceil() as usize;
    let covers = |b: usize| (b as f64).powi(layers as i32 + 1) >= k as f64;
    let mut b = guess.max(2);
    while b > 2 && covers(b - 1) {
        b -= 1;
    }
    while !covers(b) {
        b += 1;
    }
    b
}

/// Default class count, `ceil(sqrt(k))`.
pub fn default_class_count(k: usize) -> usize {
    (k as f64).sqrt().ceil() as usize
}

fn random_order(k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut order);
    order
}

/// Random permutation of the vocabulary cut into `r` near-equal classes.
pub fn assign_uniform_random(k: usize, r: usize, rng: &mut SeededRng) -> Result<ClassAssignment> {
    if r == 0 || r > k {
        return Err(Error::InvalidArgument(format!("cannot split {k} words into {r} classes")));
    }
    ClassAssignment::from_sizes(random_order(k, rng), &near_equal_sizes(k, r))
}

/// Random uniform hierarchy with `layers` class levels.
pub fn hierarchy_uniform_random(k: usize, layers: usize, rng: &mut SeededRng) -> Result<HierarchicalCode> {
    if k < 2 {
        return Err(Error::InvalidArgument("a hierarchy needs at least two words".into()));
    }
    HierarchicalCode::new(layers, branching_for(k, layers), random_order(k, rng))
}

/// Frequency binning over raw unigram mass.
pub fn assign_by_frequency(frequencies: &[u64], r: usize) -> Result<ClassAssignment> {
    let total: u64 = frequencies.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("all frequencies are zero".into()));
    }
    // integer arithmetic keeps the class boundaries exact
    let mut cumulative: Vec<u64> = Vec::new();
    bin_by_mass(frequencies, r, |i, order| {
        if cumulative.len() <= i {
            let prev = cumulative.last().copied().unwrap_or(0);
            cumulative.push(prev + frequencies[order[i]]);
        }
        let cum = cumulative[i];
        let scaled = (cum as u128 * r as u128).div_ceil(total as u128) as usize;
        scaled.saturating_sub(1)
    })
}

/// Frequency binning over `sqrt(f / F)` mass, which evens out class sizes.
pub fn assign_by_sqrt_frequency(frequencies: &[u64], r: usize) -> Result<ClassAssignment> {
    let total: u64 = frequencies.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("all frequencies are zero".into()));
    }
    let mass: Vec<f64> = frequencies
        .iter()
        .map(|&f| (f as f64 / total as f64).sqrt())
        .collect();
    let norm: f64 = mass.iter().sum();
    let mut cumulative = Vec::new();
    bin_by_mass(frequencies, r, |i, order| {
        if cumulative.len() <= i {
            let prev = cumulative.last().copied().unwrap_or(0.0);
            cumulative.push(prev + mass[order[i]] / norm);
        }
        let x = cumulative[i] * r as f64;
        ((x - 1e-9).ceil() as usize).saturating_sub(1)
    })
}

fn bin_by_mass(
    frequencies: &[u64],
    r: usize,
    mut class_at: impl FnMut(usize, &[usize]) -> usize,
) -> Result<ClassAssignment> {
    if r < 1 {
        return Err(Error::InvalidArgument("class count must be at least 1".into()));
    }
    let k = frequencies.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| frequencies[b].cmp(&frequencies[a]).then(a.cmp(&b)));
    let mut sizes = vec![0usize; r];
    let mut last = 0;
    for i in 0..k {
        // classes never go backwards along the order
        let c = class_at(i, &order).min(r - 1).max(last);
        sizes[c] += 1;
        last = c;
    }
    sizes.retain(|&s| s > 0);
    ClassAssignment::from_sizes(order, &sizes)
}

pub fn vocab_by_frequency(vocab: &Vocabulary, r: usize) -> Result<ClassAssignment> {
    assign_by_frequency(vocab.frequencies(), r)
}

pub fn vocab_by_sqrt_frequency(vocab: &Vocabulary, r: usize) -> Result<ClassAssignment> {
    assign_by_sqrt_frequency(vocab.frequencies(), r)
}
