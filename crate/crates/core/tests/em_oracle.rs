//! The Gaussian EM path against a plain textbook GMM/GMR written here from
//! scratch, started from the same initial model.

use std::f64::consts::PI;

use emr4d_core::emr::{fit, fit_from, kmeans_init, EM_EVALUATIONS};
use emr4d_core::geometry::Sample4D;
use emr4d_core::kernel::{ExpertParams, KernelKind, MixtureModel};
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Comp {
    alpha: f64,
    mu: Vector4<f64>,
    sigma: Matrix4<f64>,
}

fn gauss4(x: &Vector4<f64>, c: &Comp) -> f64 {
    let inv = c.sigma.try_inverse().unwrap();
    let d = x - c.mu;
    (-0.5 * d.dot(&(inv * d))).exp() / ((2.0 * PI).powi(2) * c.sigma.determinant().sqrt())
}

fn loading(s: &Matrix4<f64>) -> Matrix4<f64> {
    let eps = (1e-6 * s.trace() / 4.0).max(1e-6);
    s + Matrix4::identity() * eps
}

fn em_step(comps: &[Comp], xs: &[Vector4<f64>]) -> Vec<Comp> {
    let n = xs.len();
    let resp: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let raw: Vec<f64> = comps.iter().map(|c| c.alpha * gauss4(x, c)).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / t).collect()
        })
        .collect();
    (0..comps.len())
        .map(|j| {
            let nj: f64 = resp.iter().map(|r| r[j]).sum();
            let mu = xs.iter().zip(&resp).map(|(x, r)| x * r[j]).sum::<Vector4<f64>>() / nj;
            let s = xs
                .iter()
                .zip(&resp)
                .map(|(x, r)| (x - mu) * (x - mu).transpose() * r[j])
                .sum::<Matrix4<f64>>()
                / nj;
            Comp {
                alpha: nj / n as f64,
                mu,
                sigma: loading(&s),
            }
        })
        .collect()
}

fn gmr(comps: &[Comp], p: &Vector3<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in comps {
        let r: Matrix3<f64> = c.sigma.fixed_view::<3, 3>(0, 0).into_owned();
        let r_inv = r.try_inverse().unwrap();
        let mp = Vector3::new(c.mu[0], c.mu[1], c.mu[2]);
        let d = p - mp;
        let g = c.alpha * (-0.5 * d.dot(&(r_inv * d))).exp() / ((2.0 * PI).powf(1.5) * r.determinant().sqrt());
        let cross = Vector3::new(c.sigma[(0, 3)], c.sigma[(1, 3)], c.sigma[(2, 3)]);
        num += g * (c.mu[3] + cross.dot(&(r_inv * d)));
        den += g;
    }
    num / den
}

fn mse(comps: &[Comp], xs: &[Vector4<f64>]) -> f64 {
    xs.iter()
        .map(|x| {
            let e = gmr(comps, &Vector3::new(x[0], x[1], x[2])) - x[3];
            e * e
        })
        .sum::<f64>()
        / xs.len() as f64
}

/// Three well separated planar patches so no expert ever empties.
fn clustered_block() -> Vec<Sample4D> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    for z in 0..4 {
        for y in 0..12 {
            for x in 0..12 {
                let (xf, yf) = (x as f64, y as f64);
                let w = if x < 6 { 40.0 + 2.0 * xf } else if y < 6 { 150.0 - yf } else { 210.0 + 0.5 * yf };
                out.push(Sample4D {
                    x: xf,
                    y: yf,
                    z: z as f64,
                    w: w + rng.random_range(-0.5..0.5),
                });
            }
        }
    }
    out
}

#[test]
fn gaussian_trace_matches_textbook_gmm() {
    let samples = clustered_block();
    let xs: Vec<Vector4<f64>> = samples.iter().map(|s| Vector4::new(s.x, s.y, s.z, s.w)).collect();
    let init = kmeans_init(&samples, 3, KernelKind::Gaussian, 9).unwrap();
    let result = fit_from(&samples, init.clone(), 9).unwrap();
    assert_eq!(result.reseeds, 0);

    let mut comps: Vec<Comp> = init
        .experts
        .iter()
        .map(|e| Comp {
            alpha: e.alpha,
            mu: e.mu,
            sigma: e.sigma,
        })
        .collect();
    let mut trace = vec![mse(&comps, &xs)];
    for _ in 1..EM_EVALUATIONS {
        comps = em_step(&comps, &xs);
        trace.push(mse(&comps, &xs));
    }
    assert_eq!(result.mse_trace.len(), trace.len());
    for (t, (a, b)) in result.mse_trace.iter().zip(&trace).enumerate() {
        assert!((a - b).abs() <= 1e-6 * b.max(1.0), "step {t}: {a} vs {b}");
    }
    let min = trace.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((result.mse() - min).abs() <= 1e-6 * min.max(1.0));
}

#[test]
fn single_gaussian_is_closed_form_regression() {
    // One expert: GMR reduces to ordinary least squares on (x, y, z).
    let samples = clustered_block();
    let r = fit(&samples, 1, KernelKind::Gaussian, 0).unwrap();
    let n = samples.len() as f64;
    let mut ata = Matrix4::zeros();
    let mut atb = Vector4::zeros();
    for s in &samples {
        let a = Vector4::new(1.0, s.x, s.y, s.z);
        ata += a * a.transpose();
        atb += a * s.w;
    }
    let beta = ata.try_inverse().unwrap() * atb;
    let ols: f64 = samples
        .iter()
        .map(|s| {
            let e = beta[0] + beta[1] * s.x + beta[2] * s.y + beta[3] * s.z - s.w;
            e * e
        })
        .sum::<f64>()
        / n;
    // Diagonal loading nudges the slope a hair away from exact OLS.
    assert!((r.mse() - ols).abs() <= 1e-3 * ols.max(1.0), "{} vs {ols}", r.mse());
}

#[test]
fn model_wrappers_reject_bad_priors() {
    let e = ExpertParams::new(0.5, Vector4::zeros(), Matrix4::identity()).unwrap();
    assert!(MixtureModel::new(vec![e], KernelKind::Gaussian).is_err());
}
