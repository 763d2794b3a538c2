//! Uniform scalar quantization on a `[M, M+E]` grid of `2^n` points.

use serde::{Deserialize, Serialize};

/// Minimum, span and bit width of one quantized parameter.
///
/// `min` and `span` are f32 values so they can be stored losslessly in a
/// channel header.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParam {
    pub bits: u32,
    pub min: f32,
    pub span: f32,
}

impl QuantParam {
    /// Grid covering every value in `values`: the minimum is rounded down
    /// and the span rounded up in f32 so `[M, M+E]` contains them all.
    pub fn covering(values: impl IntoIterator<Item = f64>, bits: u32) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() || !hi.is_finite() {
            return Self { bits, min: 0.0, span: 0.0 };
        }
        let mut min = lo as f32;
        while min as f64 > lo {
            min = min.next_down();
        }
        let mut span = (hi - min as f64).max(0.0) as f32;
        while (min as f64) + (span as f64) < hi {
            span = span.next_up();
        }
        Self { bits, min, span }
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    fn step(&self) -> f64 {
        self.span as f64 / (self.levels() - 1) as f64
    }

    /// Value of grid point `k` (1-based): `M + (k-1) E / (2^n - 1)`.
    pub fn dequantize(&self, k: u32) -> f64 {
        debug_assert!(k >= 1 && k <= self.levels());
        if k == self.levels() {
            return self.min as f64 + self.span as f64;
        }
        self.min as f64 + (k - 1) as f64 * self.step()
    }

    /// Nearest grid index (1-based), ties toward the smaller index. The
    /// second value reports whether `v` had to be clamped into range.
    pub fn quantize(&self, v: f64) -> (u32, bool) {
        let top = self.levels() - 1;
        if self.span == 0.0 {
            return (1, v != self.min as f64);
        }
        let t = (v - self.min as f64) / self.step();
        let raw = (t - 0.5).ceil();
        let clamped = !(0.0..=top as f64).contains(&raw) || v.is_nan();
        let idx = if v.is_nan() { 0.0 } else { raw.clamp(0.0, top as f64) };
        (idx as u32 + 1, clamped)
    }

    /// Worst-case round-trip error for in-range values.
    pub fn max_error(&self) -> f64 {
        self.step() / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let q = QuantParam { bits: 6, min: -3.25, span: 17.5 };
        assert_eq!(q.dequantize(1), -3.25);
        assert_eq!(q.dequantize(64), -3.25 + 17.5);
    }

    #[test]
    fn worked_example() {
        let q = QuantParam { bits: 4, min: 0.0, span: 15.0 };
        assert_eq!(q.quantize(7.4), (8, false));
        assert_eq!(q.dequantize(8), 7.0);
        assert_eq!(q.quantize(7.5).0, 8);
        assert_eq!(q.quantize(-1.0), (1, true));
        assert_eq!(q.quantize(99.0), (16, true));
    }

    #[test]
    fn covering_contains_values() {
        let vals = [0.1, 0.7, -2.3, 1e-7];
        let q = QuantParam::covering(vals, 5);
        for v in vals {
            assert!(v >= q.min as f64 && v <= q.min as f64 + q.span as f64);
        }
        let empty = QuantParam::covering(std::iter::empty(), 5);
        assert_eq!((empty.min, empty.span), (0.0, 0.0));
        assert_eq!(empty.quantize(0.0), (1, false));
    }

    proptest! {
        #[test]
        fn round_trip_error_is_bounded(
            min in -500.0f32..500.0,
            span in 0.001f32..300.0,
            bits in 2u32..8,
            frac in 0.0f64..=1.0,
        ) {
            let q = QuantParam { bits, min, span };
            let v = min as f64 + frac * span as f64;
            let (k, clamped) = q.quantize(v);
            prop_assert!(!clamped);
            prop_assert!(k >= 1 && k <= q.levels());
            prop_assert!((q.dequantize(k) - v).abs() <= q.max_error() * (1.0 + 1e-9));
        }
    }
}
