//! Mixture regression fitting: k-means++ initialization followed by a fixed
//! budget of EM updates, tracking the regression MSE after every step and
//! returning the parameters of the best step.

use nalgebra::{Matrix4, Vector3, Vector4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Sample4D;
use crate::kernel::{regularize, ExpertParams, JointKernel, KernelKind, MixtureModel, Regressor};
use crate::rng::rng_from;

/// Parameter sets evaluated per fit: the initialization plus 13 EM updates.
pub const EM_EVALUATIONS: usize = 14;
/// Lloyd iteration cap for the k-means initialization.
pub const KMEANS_MAX_ITERS: usize = 25;
/// Responsibility mass below which an expert counts as empty.
pub const EMPTY_CLUSTER: f64 = 1e-8;
pub const ALPHA_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    /// Zero-based index into `mse_trace` of the returned parameters.
    pub iteration_chosen: usize,
    pub mse_trace: Vec<f64>,
    pub seed: u64,
    /// Number of empty-expert re-seeds performed across all iterations.
    pub reseeds: usize,
}

impl FitResult {
    pub fn mse(&self) -> f64 {
        self.mse_trace[self.iteration_chosen]
    }
}

fn to_vec4(s: &Sample4D) -> Vector4<f64> {
    Vector4::new(s.x, s.y, s.z, s.w)
}

fn dist2(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    (a - b).norm_squared()
}

/// Floors every prior at [`ALPHA_FLOOR`] and renormalizes to sum 1.
fn normalize_alphas(experts: &mut [ExpertParams]) {
    for e in experts.iter_mut() {
        e.alpha = e.alpha.max(ALPHA_FLOOR);
    }
    let total: f64 = experts.iter().map(|e| e.alpha).sum();
    for e in experts.iter_mut() {
        e.alpha /= total;
    }
}

fn sample_covariance(points: &[&Vector4<f64>], mean: &Vector4<f64>) -> Matrix4<f64> {
    if points.len() < 2 {
        return Matrix4::zeros();
    }
    let mut cov = Matrix4::zeros();
    for p in points {
        let c = *p - mean;
        cov += c * c.transpose();
    }
    cov / (points.len() - 1) as f64
}

/// k-means++ seeding and Lloyd iterations on the raw `(x, y, z, w)` samples;
/// each cluster becomes an expert with its share, mean and regularized
/// sample covariance.
pub fn kmeans_init(samples: &[Sample4D], k: usize, kind: KernelKind, seed: u64) -> Result<MixtureModel> {
    let n = samples.len();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= N, got k={k}, N={n}")));
    }
    let points: Vec<Vector4<f64>> = samples.iter().map(to_vec4).collect();
    let mut rng = rng_from(seed);

    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx];
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(dist2(p, &c));
        }
        centers.push(c);
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(&points) {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centers.iter().enumerate() {
                let d = dist2(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            if *a != best.0 {
                *a = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Vector4::zeros(); k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(&points) {
            sums[a] += p;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
    }

    let mut experts = Vec::with_capacity(k);
    for (j, center) in centers.iter().enumerate() {
        let members: Vec<&Vector4<f64>> = assign
            .iter()
            .zip(&points)
            .filter(|(a, _)| **a == j)
            .map(|(_, p)| p)
            .collect();
        let mu = if members.is_empty() {
            *center
        } else {
            members.iter().copied().sum::<Vector4<f64>>() / members.len() as f64
        };
        experts.push(ExpertParams {
            alpha: members.len() as f64 / n as f64,
            mu,
            sigma: regularize(&sample_covariance(&members, &mu)),
        });
    }
    normalize_alphas(&mut experts);
    Ok(MixtureModel { experts, kind })
}

/// Sample mean, `1/(N-1)` sample covariance and unit prior of a block.
///
/// The position part depends only on the block geometry.
pub fn single_kernel_closed_form(samples: &[Sample4D]) -> Result<ExpertParams> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("closed form needs at least two samples".into()));
    }
    let points: Vec<Vector4<f64>> = samples.iter().map(to_vec4).collect();
    let mu = points.iter().sum::<Vector4<f64>>() / points.len() as f64;
    let refs: Vec<&Vector4<f64>> = points.iter().collect();
    Ok(ExpertParams {
        alpha: 1.0,
        mu,
        sigma: sample_covariance(&refs, &mu),
    })
}

fn positions_of(samples: &[Sample4D]) -> Vec<[f64; 3]> {
    samples.iter().map(|s| s.position()).collect()
}

/// Regression MSE of `model` over the block, unclipped.
pub fn regression_mse(model: &MixtureModel, samples: &[Sample4D]) -> Result<(f64, Vec<f64>)> {
    let recon = Regressor::new(model)?.predict_all(&positions_of(samples));
    let mse = recon
        .iter()
        .zip(samples)
        .map(|(r, s)| (r - s.w) * (r - s.w))
        .sum::<f64>()
        / samples.len() as f64;
    Ok((mse, recon))
}

fn joint_kernel(e: &ExpertParams, kind: KernelKind) -> Result<JointKernel> {
    JointKernel::new(e, kind).or_else(|_| JointKernel::new(&e.clone().regularized(), kind))
}

/// Posterior responsibilities, row-major `N x K`.
fn e_step(model: &MixtureModel, points: &[Vector4<f64>]) -> Result<Vec<f64>> {
    let k = model.len();
    let kernels = model
        .experts
        .iter()
        .map(|e| joint_kernel(e, model.kind))
        .collect::<Result<Vec<_>>>()?;
    let mut q = vec![0.0; points.len() * k];
    for (row, p) in q.chunks_exact_mut(k).zip(points) {
        match model.kind {
            KernelKind::Epanechnikov => {
                let mut total = 0.0;
                for ((r, kern), e) in row.iter_mut().zip(&kernels).zip(&model.experts) {
                    *r = e.alpha * kern.density(p);
                    total += *r;
                }
                if total > 0.0 {
                    row.iter_mut().for_each(|r| *r /= total);
                } else {
                    // Outside every support: the nearest expert takes the sample.
                    let nearest = kernels
                        .iter()
                        .map(|kern| kern.mahalanobis(p))
                        .enumerate()
                        .fold((0, f64::INFINITY), |b, (j, d)| if d < b.1 { (j, d) } else { b })
                        .0;
                    row[nearest] = 1.0;
                }
            }
            KernelKind::Gaussian => {
                let mut max = f64::NEG_INFINITY;
                for ((r, kern), e) in row.iter_mut().zip(&kernels).zip(&model.experts) {
                    *r = e.alpha.ln() + kern.ln_density(p);
                    max = max.max(*r);
                }
                let mut total = 0.0;
                for r in row.iter_mut() {
                    *r = (*r - max).exp();
                    total += *r;
                }
                row.iter_mut().for_each(|r| *r /= total);
            }
        }
    }
    Ok(q)
}

fn m_step(
    model: &MixtureModel,
    points: &[Vector4<f64>],
    q: &[f64],
    prev_recon: &[f64],
    global_cov: &Matrix4<f64>,
) -> (MixtureModel, usize) {
    let n = points.len();
    let k = model.len();
    let mut experts = Vec::with_capacity(k);
    let mut empty = Vec::new();
    for j in 0..k {
        let mass: f64 = (0..n).map(|i| q[i * k + j]).sum();
        if mass < EMPTY_CLUSTER {
            empty.push(j);
            experts.push(model.experts[j].clone());
            continue;
        }
        let mu = (0..n).fold(Vector4::zeros(), |acc, i| acc + points[i] * q[i * k + j]) / mass;
        let mut cov = Matrix4::zeros();
        for i in 0..n {
            let c = points[i] - mu;
            cov += (c * c.transpose()) * q[i * k + j];
        }
        // A single expert owns every sample and reduces to the unbiased
        // sample covariance.
        let denom = if k == 1 { (n as f64 - 1.0).max(1.0) } else { mass };
        experts.push(ExpertParams {
            alpha: mass / n as f64,
            mu,
            sigma: regularize(&(cov / denom)),
        });
    }

    if !empty.is_empty() {
        // Re-seed empty experts on the worst-reconstructed samples.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let ea = (prev_recon[a] - points[a][3]).abs();
            let eb = (prev_recon[b] - points[b][3]).abs();
            eb.total_cmp(&ea).then(a.cmp(&b))
        });
        let share = empty.len() as f64 / k as f64;
        for e in experts.iter_mut() {
            e.alpha *= 1.0 - share;
        }
        for (slot, &j) in empty.iter().enumerate() {
            experts[j] = ExpertParams {
                alpha: 1.0 / k as f64,
                mu: points[order[slot % n]],
                sigma: regularize(&(global_cov / k as f64)),
            };
        }
    }
    normalize_alphas(&mut experts);
    (
        MixtureModel {
            experts,
            kind: model.kind,
        },
        empty.len(),
    )
}

/// Runs the fixed EM budget from `init` and keeps the minimum-MSE step.
pub fn fit_from(samples: &[Sample4D], init: MixtureModel, seed: u64) -> Result<FitResult> {
    if samples.len() < init.len() {
        return Err(Error::InvalidArgument("fewer samples than experts".into()));
    }
    let points: Vec<Vector4<f64>> = samples.iter().map(to_vec4).collect();
    let refs: Vec<&Vector4<f64>> = points.iter().collect();
    let mean = points.iter().sum::<Vector4<f64>>() / points.len() as f64;
    let global_cov = sample_covariance(&refs, &mean);

    let (mse0, mut recon) = regression_mse(&init, samples)?;
    let mut trace = vec![mse0];
    let mut best = (0, mse0, init.clone());
    let mut current = init;
    let mut reseeds = 0;
    for t in 1..EM_EVALUATIONS {
        let q = e_step(&current, &points)?;
        let (next, empties) = m_step(&current, &points, &q, &recon, &global_cov);
        reseeds += empties;
        let (mse, r) = regression_mse(&next, samples)?;
        trace.push(mse);
        if mse < best.1 {
            best = (t, mse, next.clone());
        }
        recon = r;
        current = next;
    }
    Ok(FitResult {
        model: best.2,
        iteration_chosen: best.0,
        mse_trace: trace,
        seed,
        reseeds,
    })
}

/// Fits a `k`-expert mixture of the given kernel kind to a block.
pub fn fit(samples: &[Sample4D], k: usize, kind: KernelKind, seed: u64) -> Result<FitResult> {
    let init = kmeans_init(samples, k, kind, seed)?;
    fit_from(samples, init, seed)
}

/// Position vector helper for callers working with raw arrays.
pub fn position(p: [f64; 3]) -> Vector3<f64> {
    Vector3::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: impl Fn(usize, usize, usize) -> f64, width: usize, height: usize, frames: usize) -> Vec<Sample4D> {
        let mut out = Vec::new();
        for z in 1..=frames {
            for y in 1..=height {
                for x in 1..=width {
                    out.push(Sample4D {
                        x: x as f64,
                        y: y as f64,
                        z: z as f64,
                        w: w(x, y, z),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn two_points_two_clusters() {
        let s = vec![
            Sample4D { x: 1.0, y: 1.0, z: 1.0, w: 0.0 },
            Sample4D { x: 5.0, y: 5.0, z: 1.0, w: 200.0 },
        ];
        let m = kmeans_init(&s, 2, KernelKind::Epanechnikov, 3).unwrap();
        let mut mus: Vec<f64> = m.experts.iter().map(|e| e.mu[3]).collect();
        mus.sort_by(f64::total_cmp);
        assert_eq!(mus, vec![0.0, 200.0]);
        assert!(m.experts.iter().all(|e| (e.alpha - 0.5).abs() < 1e-12));
    }

    #[test]
    fn identical_samples_single_cluster() {
        let s = vec![Sample4D { x: 2.0, y: 3.0, z: 1.0, w: 9.0 }; 10];
        let m = kmeans_init(&s, 1, KernelKind::Epanechnikov, 0).unwrap();
        assert_eq!(m.experts[0].mu, Vector4::new(2.0, 3.0, 1.0, 9.0));
        assert_eq!(m.experts[0].sigma, Matrix4::identity() * MIN_EPS_FOR_TEST);
    }
    const MIN_EPS_FOR_TEST: f64 = crate::kernel::MIN_REGULARIZATION;

    #[test]
    fn too_few_samples_rejected() {
        let s = vec![Sample4D { x: 1.0, y: 1.0, z: 1.0, w: 1.0 }];
        assert!(kmeans_init(&s, 2, KernelKind::Gaussian, 0).is_err());
        assert!(single_kernel_closed_form(&s).is_err());
    }

    #[test]
    fn seeded_init_replays_exactly() {
        let s = block(|x, y, z| ((x * 7 + y * 13 + z * 29) % 97) as f64, 9, 9, 2);
        let a = kmeans_init(&s, 5, KernelKind::Epanechnikov, 42).unwrap();
        let b = kmeans_init(&s, 5, KernelKind::Epanechnikov, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_block_fits_exactly() {
        let s = block(|_, _, _| 117.0, 19, 19, 4);
        let r = fit(&s, 1, KernelKind::Epanechnikov, 1).unwrap();
        assert_eq!(r.mse_trace.len(), EM_EVALUATIONS);
        assert!(r.mse_trace.iter().all(|&m| m < 1e-9));
    }

    #[test]
    fn planar_ramp_is_reproduced_by_one_expert() {
        let s = block(|x, y, _| (x + y) as f64, 19, 19, 4);
        let r = fit(&s, 1, KernelKind::Epanechnikov, 1).unwrap();
        let recon = Regressor::new(&r.model).unwrap().predict_all(&positions_of(&s));
        let max = recon.iter().zip(&s).map(|(a, b)| (a - b.w).abs()).fold(0.0, f64::max);
        assert!(max < 0.5, "max error {max}");
    }

    #[test]
    fn closed_form_geometry() {
        let s = block(|x, _, z| (x * z) as f64, 19, 19, 4);
        let e = single_kernel_closed_form(&s).unwrap();
        assert!((e.mu[0] - 10.0).abs() < 1e-12);
        assert!((e.mu[1] - 10.0).abs() < 1e-12);
        assert!((e.mu[2] - 2.5).abs() < 1e-12);
        let c = single_kernel_closed_form(&block(|_, _, _| 5.0, 19, 19, 4)).unwrap();
        assert_eq!(c.w_cross(), Vector3::zeros());
        assert_eq!(c.sigma[(3, 3)], 0.0);
        assert_eq!(c.position_cov(), e.position_cov());
    }

    #[test]
    fn chosen_mse_is_trace_minimum() {
        let s = block(|x, y, z| if (x / 5 + y / 7 + z) % 2 == 0 { 40.0 } else { 210.0 }, 19, 19, 4);
        for kind in [KernelKind::Epanechnikov, KernelKind::Gaussian] {
            let r = fit(&s, 6, kind, 9).unwrap();
            let min = r.mse_trace.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(r.mse(), min);
            assert!(r.mse() <= r.mse_trace[0]);
            assert_eq!(r.model.len(), 6);
            let total: f64 = r.model.experts.iter().map(|e| e.alpha).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
