//! Monte-Carlo checks of the kernel's normalization and covariance.
//!
//! These estimate, by sampling, quantities the kernel formulas claim in
//! closed form: the volume integral of the basic kernel profile
//! (`pi^2 abcd / 6`), the covariance of the basic kernel
//! (`diag(a^2, b^2, c^2, d^2) / 8`) and the total mass of a general kernel.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExpertParams, JointKernel, KernelKind};
use crate::error::{Error, Result};

/// Semi-axes of the basic kernel's ellipsoidal support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisLengths {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl AxisLengths {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        for v in [a, b, c, d] {
            if !(v > 1e-12 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("axis length {v} must be positive")));
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn volume_factor(&self) -> f64 {
        self.a * self.b * self.c * self.d
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl McEstimate {
    pub fn within_sigmas(&self, target: f64, sigmas: f64) -> bool {
        (self.value - target).abs() <= sigmas * self.std_error
    }
}

/// `pi^2 abcd / 6`.
pub fn appendix_a_closed_form(ax: &AxisLengths) -> f64 {
    PI * PI * ax.volume_factor() / 6.0
}

/// `diag(a^2/8, b^2/8, c^2/8, d^2/8)`.
pub fn appendix_b_closed_form(ax: &AxisLengths) -> Matrix4<f64> {
    let [a, b, c, d] = ax.as_array();
    Matrix4::from_diagonal(&Vector4::new(a * a, b * b, c * c, d * d)) / 8.0
}

fn box_sample(rng: &mut ChaCha8Rng, half: &[f64; 4]) -> [f64; 4] {
    let mut p = [0.0; 4];
    for (v, h) in p.iter_mut().zip(half) {
        *v = rng.random_range(-h..*h);
    }
    p
}

fn basic_quadratic(p: &[f64; 4], ax: &[f64; 4]) -> f64 {
    p.iter().zip(ax).map(|(v, a)| (v / a) * (v / a)).sum()
}

fn mean_estimate(sum: f64, sum_sq: f64, n: usize, scale: f64) -> McEstimate {
    let n_f = n as f64;
    let mean = sum / n_f;
    let var = (sum_sq / n_f - mean * mean).max(0.0);
    McEstimate {
        value: scale * mean,
        std_error: scale * (var / n_f).sqrt(),
    }
}

/// Estimates the integral of `1 - phi' Lambda^2 phi` over the ellipsoid by
/// uniform sampling of its bounding box.
pub fn appendix_a_oracle(ax: &AxisLengths, samples: usize, seed: u64) -> McEstimate {
    let half = ax.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let p = box_sample(&mut rng, &half);
        let q = basic_quadratic(&p, &half);
        let v = if q <= 1.0 { 1.0 - q } else { 0.0 };
        sum += v;
        sum_sq += v * v;
    }
    mean_estimate(sum, sum_sq, samples, 16.0 * ax.volume_factor())
}

/// Sample mean and covariance of the basic kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct CovEstimate {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub accepted: usize,
}

/// Rejection-samples `accepted` draws from the basic kernel with the given
/// semi-axes and returns their sample mean and covariance.
pub fn appendix_b_oracle(ax: &AxisLengths, accepted: usize, seed: u64) -> CovEstimate {
    let half = ax.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(accepted);
    while draws.len() < accepted {
        let p = box_sample(&mut rng, &half);
        let q = basic_quadratic(&p, &half);
        if q <= 1.0 && rng.random::<f64>() < 1.0 - q {
            draws.push(Vector4::from(p));
        }
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<Vector4<f64>>() / n;
    let mut cov = Matrix4::zeros();
    for d in &draws {
        let c = d - mean;
        cov += c * c.transpose();
    }
    CovEstimate {
        mean,
        cov: cov / (n - 1.0),
        accepted: draws.len(),
    }
}

/// Monte-Carlo estimate of the total mass of a general Epanechnikov expert,
/// sampling the bounding box of its support ellipsoid.
pub fn ek_mass(p: &ExpertParams, samples: usize, seed: u64) -> Result<McEstimate> {
    let kernel = JointKernel::new(p, KernelKind::Epanechnikov)?;
    let half: [f64; 4] = std::array::from_fn(|i| (8.0 * p.sigma[(i, i)]).sqrt());
    let volume: f64 = half.iter().map(|h| 2.0 * h).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let off = box_sample(&mut rng, &half);
        let v = kernel.density(&(p.mu + Vector4::from(off)));
        sum += v;
        sum_sq += v * v;
    }
    Ok(mean_estimate(sum, sum_sq, samples, volume))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_axes_integral() {
        let ax = AxisLengths::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let closed = appendix_a_closed_form(&ax);
        assert!((closed - 1.6449).abs() < 1e-4);
        let est = appendix_a_oracle(&ax, 200_000, 1);
        assert!(est.within_sigmas(closed, 3.0), "{est:?} vs {closed}");
    }

    #[test]
    fn integral_scales_linearly_in_axes() {
        let ax = AxisLengths::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let closed = appendix_a_closed_form(&ax);
        assert!((closed - PI * PI / 3.0).abs() < 1e-12);
        assert!((closed - 3.2899).abs() < 1e-4);
        assert!(appendix_a_oracle(&ax, 200_000, 2).within_sigmas(closed, 3.0));
    }

    #[test]
    fn degenerate_axes_rejected() {
        assert!(AxisLengths::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(AxisLengths::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(AxisLengths::new(1.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn basic_kernel_covariance() {
        let ax = AxisLengths::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let est = appendix_b_oracle(&ax, 100_000, 3);
        assert!((est.cov[(0, 0)] - 0.5).abs() < 0.025);
        for i in 1..4 {
            assert!((est.cov[(i, i)] - 0.125).abs() < 0.125 * 0.05);
        }
        assert!(est.mean.amax() < 0.02);
    }
}
