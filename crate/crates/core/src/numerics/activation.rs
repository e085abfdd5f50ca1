use super::Scalar;

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    // split on sign so exp never overflows
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[inline]
pub fn tanh_act<S: Scalar>(x: S) -> S {
    x.tanh()
}

/// Derivative of the sigmoid expressed through its output `y = sigmoid(x)`.
#[inline]
pub fn sigmoid_grad<S: Scalar>(y: S) -> S {
    y * (S::one() - y)
}

/// Derivative of tanh expressed through its output `y = tanh(x)`.
#[inline]
pub fn tanh_grad<S: Scalar>(y: S) -> S {
    S::one() - y * y
}

pub fn sigmoid_in_place<S: Scalar>(x: &mut [S]) {
    for v in x {
        *v = sigmoid(*v);
    }
}

pub fn tanh_in_place<S: Scalar>(x: &mut [S]) {
    for v in x {
        *v = v.tanh();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn known_values() {
        assert_eq!(sigmoid(0.0_f64), 0.5);
        assert_eq!(tanh_act(0.0_f64), 0.0);
        assert!((sigmoid(-2.0_f64) - (1.0 - sigmoid(2.0_f64))).abs() < 1e-15);
        assert_eq!(sigmoid_grad(sigmoid(0.0_f64)), 0.25);
        assert_eq!(tanh_grad(tanh_act(0.0_f64)), 1.0);
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        assert_eq!(sigmoid(1000.0_f64), 1.0);
        assert_eq!(sigmoid(-1000.0_f64), 0.0);
        assert!(sigmoid(-745.0_f64) >= 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &x in &[-3.0, -0.7, 0.0, 0.3, 1.9, 4.0] {
            let ds = central(sigmoid::<f64>, x);
            let dt = central(tanh_act::<f64>, x);
            assert!((ds - sigmoid_grad(sigmoid(x))).abs() < 1e-8, "sigmoid' at {x}");
            assert!((dt - tanh_grad(tanh_act(x))).abs() < 1e-8, "tanh' at {x}");
        }
    }
}
