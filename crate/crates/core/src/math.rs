//! Log-domain numerics shared by the engine and the oracles.
//!
//! Every power-sum `(Σ z^{1/t})^t` is evaluated as `t · LSE(ln z / t)` with the
//! running maximum subtracted; `t = 0` is the `L∞` limit and short-circuits to a
//! plain maximum.

use alloc::vec::Vec;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `ln x` with `ln 0 = -∞`. Negative inputs are a caller bug.
#[inline]
pub fn ln_nonneg(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        libm::log(x)
    }
}

/// Largest entry, `-∞` for an empty slice.
#[inline]
pub fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Numerically stable `ln Σ exp(v)`. Returns `-∞` when every entry is `-∞`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = max_of(values);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = values.iter().map(|&v| exp(v - m)).sum();
    m + ln(s)
}

/// Streaming accumulator for `ln Σ exp(v)`; avoids collecting into a buffer.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub const fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += exp(v - self.max);
        } else {
            self.sum = self.sum * exp(self.max - v) + 1.0;
            self.max = v;
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + ln(self.sum)
        }
    }
}

/// `ln ‖z‖_{1/t}` for `z = exp(values)`, i.e. `t · LSE(values / t)`;
/// `t == 0` gives `max(values)`. `t` must be non-negative.
pub fn log_power_sum(values: &[f64], t: f64) -> f64 {
    if t == 0.0 {
        return max_of(values);
    }
    let m = max_of(values);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = values.iter().map(|&v| exp((v - m) / t)).sum();
    m + t * ln(s)
}

/// Shift a log-table so that its maximum is zero. Returns the shift applied,
/// or `None` when every entry is `-∞`.
pub fn normalize_max(values: &mut [f64]) -> Option<f64> {
    let m = max_of(values);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return None;
    }
    for v in values.iter_mut() {
        *v -= m;
    }
    Some(m)
}

/// Shift a log-table so that `LSE = 0`. Returns `None` when every entry is `-∞`.
pub fn normalize_lse(values: &mut [f64]) -> Option<f64> {
    let z = log_sum_exp(values);
    if z == f64::NEG_INFINITY || !z.is_finite() {
        return None;
    }
    for v in values.iter_mut() {
        *v -= z;
    }
    Some(z)
}

/// Entropy `-Σ p ln p` of a normalized log-distribution, with `0 ln 0 = 0`.
pub fn entropy_of_log(log_p: &[f64]) -> f64 {
    log_p
        .iter()
        .filter(|&&l| l != f64::NEG_INFINITY)
        .map(|&l| -exp(l) * l)
        .sum()
}

/// `weight · v` with the convention that a zero weight annihilates `-∞`.
#[inline]
pub fn scale_log(weight: f64, v: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * v
    }
}

/// Mixed-radix odometer over `cards`, last position fastest (row-major).
pub fn advance(states: &mut [usize], cards: &[usize]) -> bool {
    for k in (0..states.len()).rev() {
        states[k] += 1;
        if states[k] < cards[k] {
            return true;
        }
        states[k] = 0;
    }
    false
}

/// Row-major strides for the given cardinalities.
pub fn strides(cards: &[usize]) -> Vec<usize> {
    let mut out = alloc::vec![1usize; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        out[k] = out[k + 1] * cards[k + 1];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[f64::NEG_INFINITY, 0.0, 0.0]);
        assert!((v - ln(2.0)).abs() < 1e-15);
    }

    #[test]
    fn streaming_lse_matches_batch() {
        let xs = [-3.0, 700.0, 699.5, f64::NEG_INFINITY, -1e3];
        let mut acc = LogSumExp::new();
        for &x in &xs {
            acc.push(x);
        }
        assert!((acc.value() - log_sum_exp(&xs)).abs() < 1e-12);
    }

    #[test]
    fn power_sum_of_sqrt_two() {
        // (1^{1/2} + 2^{1/2})^2 = (1 + √2)^2
        let v = log_power_sum(&[0.0, ln(2.0)], 2.0);
        assert!((exp(v) - (1.0 + sqrt(2.0)) * (1.0 + sqrt(2.0))).abs() < 1e-12);
        assert_eq!(log_power_sum(&[1.0, 3.0], 0.0), 3.0);
    }

    #[test]
    fn odometer_is_row_major() {
        let cards = [2, 3];
        let mut s = [0, 0];
        let mut seen = alloc::vec![s];
        while advance(&mut s, &cards) {
            seen.push(s);
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], [0, 1]);
        assert_eq!(seen[3], [1, 0]);
        assert_eq!(strides(&cards), alloc::vec![3, 1]);
    }
}
