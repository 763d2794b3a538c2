//! Numerical helpers shared by the integration tests.
#![allow(dead_code)]

use emr4d_core::kernel::{ek4d_density, ExpertParams};
use nalgebra::{Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson quadrature.
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Support end points of `w -> density(delta, w)`, bracketed by bisection
/// from a point inside the support.
pub fn support(p: &ExpertParams, delta: &Vector3<f64>) -> Option<(f64, f64)> {
    let g = |w: f64| ek4d_density(&Vector4::new(delta[0], delta[1], delta[2], w), p).unwrap();
    let span = 6.0 * p.sigma[(3, 3)].sqrt();
    let n = 4000;
    let grid: Vec<f64> = (0..=n).map(|i| p.mu[3] - span + 2.0 * span * i as f64 / n as f64).collect();
    let inside = grid.iter().copied().find(|&w| g(w) > 0.0)?;
    let edge = |mut lo: f64, mut hi: f64| {
        // g(lo) > 0, g(hi) == 0
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let low = edge(inside, p.mu[3] - 4.0 * span);
    let high = edge(inside, p.mu[3] + 4.0 * span);
    Some((low, high))
}

pub fn random_expert(rng: &mut ChaCha8Rng) -> ExpertParams {
    let a = Matrix4::from_fn(|_, _| rng.random_range(-2.0..2.0));
    let sigma = a * a.transpose() + Matrix4::identity() * 0.5;
    let mu = Vector4::from_fn(|_, _| rng.random_range(-3.0..3.0));
    ExpertParams::new(1.0, mu, sigma).unwrap()
}

/// An interior point: position Mahalanobis distance well inside the support.
pub fn interior_point(rng: &mut ChaCha8Rng, p: &ExpertParams) -> Vector3<f64> {
    let r_inv = p.position_cov().try_inverse().unwrap();
    loop {
        let d = Vector3::from_fn(|i, _| p.mu[i] + rng.random_range(-2.5..2.5) * p.sigma[(i, i)].sqrt());
        let c = d - p.position_mean();
        if c.dot(&(r_inv * c)) < 7.0 {
            return d;
        }
    }
}

