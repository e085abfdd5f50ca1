use crate::numerics::{Matrix, Scalar};

/// Whether weight decay applies to a parameter array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotKind {
    Matrix,
    Bias,
}

/// Borrowed view of one named parameter (or gradient) array.
pub struct Slot<'a, S> {
    pub name: &'static str,
    pub kind: SlotKind,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [S],
}

pub struct SlotMut<'a, S> {
    pub name: &'static str,
    pub kind: SlotKind,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [S],
}

pub(crate) fn matrix_slot<'a, S: Scalar>(name: &'static str, m: &'a Matrix<S>) -> Slot<'a, S> {
    Slot {
        name,
        kind: SlotKind::Matrix,
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_slice(),
    }
}

pub(crate) fn matrix_slot_mut<'a, S: Scalar>(name: &'static str, m: &'a mut Matrix<S>) -> SlotMut<'a, S> {
    SlotMut {
        name,
        kind: SlotKind::Matrix,
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_mut_slice(),
    }
}

pub(crate) fn bias_slot<'a, S>(name: &'static str, b: &'a [S]) -> Slot<'a, S> {
    Slot {
        name,
        kind: SlotKind::Bias,
        rows: b.len(),
        cols: 1,
        data: b,
    }
}

pub(crate) fn bias_slot_mut<'a, S>(name: &'static str, b: &'a mut [S]) -> SlotMut<'a, S> {
    SlotMut {
        name,
        kind: SlotKind::Bias,
        rows: b.len(),
        cols: 1,
        data: b,
    }
}

/// Named access to every array of a parameter or gradient set.
pub trait ParameterSet<S: Scalar> {
    fn slots(&self) -> Vec<Slot<'_, S>>;
    fn slots_mut(&mut self) -> Vec<SlotMut<'_, S>>;

    fn num_parameters(&self) -> usize {
        self.slots().iter().map(|s| s.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for s in self.slots_mut() {
            s.data.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    fn squared_norm(&self) -> S {
        self.slots()
            .iter()
            .map(|s| crate::numerics::sum_squares(s.data))
            .fold(S::zero(), |a, b| a + b)
    }

    fn scale_all(&mut self, factor: S) {
        for s in self.slots_mut() {
            crate::numerics::scale(s.data, factor);
        }
    }

    fn is_finite(&self) -> bool {
        self.slots().iter().all(|s| crate::numerics::all_finite(s.data))
    }

    /// Flattened copy of every entry, in slot order.
    fn to_flat(&self) -> Vec<S> {
        self.slots().iter().flat_map(|s| s.data.iter().copied()).collect()
    }
}
