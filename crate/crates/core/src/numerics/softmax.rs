use super::Scalar;

/// Numerically stable `log(sum(exp(x)))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp<S: Scalar>(x: &[S]) -> S {
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return max;
    }
    let sum: S = x.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Softmax with max subtraction.
pub fn softmax<S: Scalar>(y: &[S]) -> Vec<S> {
    let mut out = y.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place<S: Scalar>(y: &mut [S]) {
    if y.is_empty() {
        return;
    }
    let max = y.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in y.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = S::one() / sum;
    for v in y.iter_mut() {
        *v *= inv;
    }
}

pub fn log_softmax<S: Scalar>(y: &[S]) -> Vec<S> {
    let lse = log_sum_exp(y);
    y.iter().map(|&v| v - lse).collect()
}
