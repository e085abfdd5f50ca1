use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, Scalar};
use crate::error::{Error, Result};

pub const INIT_RANGE: f64 = 0.1;

/// Seeded ChaCha8 stream; the same seed always yields the same sequence.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this one's seed and a label.
    pub fn fork(&self, stream: u64) -> Self {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        SeededRng::new(mixed)
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        self.inner.gen_range(low..high)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    pub fn fill_uniform<S: Scalar>(&mut self, values: &mut [S], range: f64) {
        for v in values {
            *v = S::of(self.inner.gen_range(-range..=range));
        }
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// Matrix with entries drawn i.i.d. from `U[-0.1, 0.1]`.
pub fn init_matrix<S: Scalar>(rows: usize, cols: usize, rng: &mut SeededRng) -> Result<Matrix<S>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot initialise a {rows}x{cols} matrix"
        )));
    }
    let mut m = Matrix::zeros(rows, cols);
    rng.fill_uniform(m.as_mut_slice(), INIT_RANGE);
    Ok(m)
}
