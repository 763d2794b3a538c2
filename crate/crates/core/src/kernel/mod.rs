//! Closed-form 4-D Epanechnikov and Gaussian kernels over `(x, y, z, w)`,
//! their 3-D position marginals, the affine conditional mean of `w`, the
//! gate function and the mixture-of-experts regression built from them.
//!
//! The Epanechnikov kernel with mean `mu` and covariance `sigma` is
//!
//! ```text
//! f(phi) = 3 / (32 pi^2 sqrt|sigma|) * (1 - q/8),  q = (phi-mu)' sigma^-1 (phi-mu) <= 8
//! ```
//!
//! and its marginal over `w` is
//!
//! ```text
//! F(delta) = sqrt(2) / (4 pi^2 sqrt|R|) * (1 - q_R/8)^(3/2),  q_R <= 8
//! ```
//!
//! where `R` is the 3x3 position block of `sigma`.

pub mod oracle;

use std::f64::consts::PI;

use nalgebra::{Cholesky, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal loading applied before inverting a covariance.
pub const REGULARIZATION: f64 = 1e-6;
/// Absolute floor on the diagonal loading so zero covariances stay invertible.
pub const MIN_REGULARIZATION: f64 = 1e-6;

/// Support radius of the Epanechnikov kernel in squared Mahalanobis units.
const EK_SUPPORT: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Epanechnikov,
    Gaussian,
}

/// One expert: prior weight, 4-D mean and 4x4 covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertParams {
    pub alpha: f64,
    pub mu: Vector4<f64>,
    pub sigma: Matrix4<f64>,
}

impl ExpertParams {
    pub fn new(alpha: f64, mu: Vector4<f64>, sigma: Matrix4<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1]")));
        }
        if (sigma - sigma.transpose()).amax() > 1e-9 * sigma.amax().max(1.0) {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        Ok(Self { alpha, mu, sigma })
    }

    pub fn position_mean(&self) -> Vector3<f64> {
        self.mu.fixed_rows::<3>(0).into_owned()
    }

    /// The 3x3 position covariance `R`.
    pub fn position_cov(&self) -> Matrix3<f64> {
        self.sigma.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// `(sigma_WX, sigma_WY, sigma_WZ)`.
    pub fn w_cross(&self) -> Vector3<f64> {
        self.sigma.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn regularized(mut self) -> Self {
        self.sigma = regularize(&self.sigma);
        self
    }
}

/// Adds `eps * I` with `eps = max(1e-6 * trace / 4, 1e-6)`.
pub fn regularize(sigma: &Matrix4<f64>) -> Matrix4<f64> {
    let eps = (REGULARIZATION * sigma.trace() / 4.0).max(MIN_REGULARIZATION);
    sigma + Matrix4::identity() * eps
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel {
    pub experts: Vec<ExpertParams>,
    pub kind: KernelKind,
}

impl MixtureModel {
    pub fn new(experts: Vec<ExpertParams>, kind: KernelKind) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one expert".into()));
        }
        let total: f64 = experts.iter().map(|e| e.alpha).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("priors sum to {total}, not 1")));
        }
        Ok(Self { experts, kind })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }
}

fn det_sqrt_and_inverse3(m: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>)> {
    let chol = Cholesky::new(*m).ok_or(Error::SingularCovariance)?;
    let det_sqrt: f64 = chol.l_dirty().diagonal().iter().product();
    if !det_sqrt.is_finite() || det_sqrt <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    Ok((det_sqrt, chol.inverse()))
}

fn det_sqrt_and_inverse4(m: &Matrix4<f64>) -> Result<(f64, Matrix4<f64>)> {
    let chol = Cholesky::new(*m).ok_or(Error::SingularCovariance)?;
    let det_sqrt: f64 = chol.l_dirty().diagonal().iter().product();
    if !det_sqrt.is_finite() || det_sqrt <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    Ok((det_sqrt, chol.inverse()))
}

/// Joint 4-D density of one expert with its inverse cached.
#[derive(Clone, Debug)]
pub struct JointKernel {
    kind: KernelKind,
    mu: Vector4<f64>,
    inv: Matrix4<f64>,
    norm: f64,
}

impl JointKernel {
    pub fn new(p: &ExpertParams, kind: KernelKind) -> Result<Self> {
        let (det_sqrt, inv) = det_sqrt_and_inverse4(&p.sigma)?;
        let norm = match kind {
            KernelKind::Epanechnikov => 3.0 / (32.0 * PI * PI * det_sqrt),
            KernelKind::Gaussian => 1.0 / (4.0 * PI * PI * det_sqrt),
        };
        Ok(Self {
            kind,
            mu: p.mu,
            inv,
            norm,
        })
    }

    /// Squared Mahalanobis distance to the mean.
    #[inline]
    pub fn mahalanobis(&self, phi: &Vector4<f64>) -> f64 {
        let d = phi - self.mu;
        d.dot(&(self.inv * d))
    }

    #[inline]
    pub fn density(&self, phi: &Vector4<f64>) -> f64 {
        let q = self.mahalanobis(phi);
        match self.kind {
            KernelKind::Epanechnikov => {
                if q <= EK_SUPPORT {
                    self.norm * (1.0 - q / EK_SUPPORT)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => self.norm * (-0.5 * q).exp(),
        }
    }

    /// Natural log of the density (`-inf` outside EK support).
    #[inline]
    pub fn ln_density(&self, phi: &Vector4<f64>) -> f64 {
        let q = self.mahalanobis(phi);
        match self.kind {
            KernelKind::Epanechnikov => {
                if q < EK_SUPPORT {
                    self.norm.ln() + (1.0 - q / EK_SUPPORT).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            KernelKind::Gaussian => self.norm.ln() - 0.5 * q,
        }
    }
}

/// Position marginal and conditional mean of one expert, cached.
#[derive(Clone, Debug)]
pub struct GateExpert {
    kind: KernelKind,
    alpha: f64,
    mu_pos: Vector3<f64>,
    mu_w: f64,
    r_inv: Matrix3<f64>,
    /// `R^-1 * sigma_{pos,W}`, the slope of the conditional mean.
    slope: Vector3<f64>,
    norm: f64,
}

impl GateExpert {
    pub fn new(p: &ExpertParams, kind: KernelKind) -> Result<Self> {
        let (det_sqrt, r_inv) = det_sqrt_and_inverse3(&p.position_cov())?;
        let norm = match kind {
            KernelKind::Epanechnikov => 2f64.sqrt() / (4.0 * PI * PI * det_sqrt),
            KernelKind::Gaussian => (2.0 * PI).powf(-1.5) / det_sqrt,
        };
        Ok(Self {
            kind,
            alpha: p.alpha,
            mu_pos: p.position_mean(),
            mu_w: p.mu[3],
            r_inv,
            slope: r_inv * p.w_cross(),
            norm,
        })
    }

    #[inline]
    pub fn mahalanobis(&self, delta: &Vector3<f64>) -> f64 {
        let d = delta - self.mu_pos;
        d.dot(&(self.r_inv * d))
    }

    #[inline]
    pub fn marginal(&self, delta: &Vector3<f64>) -> f64 {
        let q = self.mahalanobis(delta);
        match self.kind {
            KernelKind::Epanechnikov => {
                if q <= EK_SUPPORT {
                    self.norm * (1.0 - q / EK_SUPPORT).powf(1.5)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => self.norm * (-0.5 * q).exp(),
        }
    }

    /// Affine conditional mean of `w` given the position.
    #[inline]
    pub fn conditional_mean(&self, delta: &Vector3<f64>) -> f64 {
        self.mu_w + self.slope.dot(&(delta - self.mu_pos))
    }
}

/// A mixture prepared for repeated gate/regression evaluation.
#[derive(Clone, Debug)]
pub struct Regressor {
    kind: KernelKind,
    experts: Vec<GateExpert>,
}

impl Regressor {
    pub fn new(model: &MixtureModel) -> Result<Self> {
        let experts = model
            .experts
            .iter()
            .map(|e| GateExpert::new(e, model.kind))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: model.kind,
            experts,
        })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    /// Writes the gate weights at `delta` into `out` (length K).
    ///
    /// Where every Epanechnikov marginal vanishes, all weight goes to the
    /// expert with the smallest position Mahalanobis distance. Gaussian
    /// weights are normalized in the log domain so they never underflow.
    pub fn gate_into(&self, delta: &Vector3<f64>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.experts.len());
        match self.kind {
            KernelKind::Epanechnikov => {
                let mut total = 0.0;
                for (o, e) in out.iter_mut().zip(&self.experts) {
                    *o = e.alpha * e.marginal(delta);
                    total += *o;
                }
                if total > 0.0 {
                    out.iter_mut().for_each(|o| *o /= total);
                } else {
                    let nearest = self.nearest(delta);
                    out.iter_mut().enumerate().for_each(|(j, o)| *o = if j == nearest { 1.0 } else { 0.0 });
                }
            }
            KernelKind::Gaussian => {
                let mut max = f64::NEG_INFINITY;
                for (o, e) in out.iter_mut().zip(&self.experts) {
                    *o = e.alpha.ln() + e.norm.ln() - 0.5 * e.mahalanobis(delta);
                    max = max.max(*o);
                }
                let mut total = 0.0;
                for o in out.iter_mut() {
                    *o = (*o - max).exp();
                    total += *o;
                }
                out.iter_mut().for_each(|o| *o /= total);
            }
        }
    }

    fn nearest(&self, delta: &Vector3<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (j, e) in self.experts.iter().enumerate() {
            let q = e.mahalanobis(delta);
            if q < best.1 {
                best = (j, q);
            }
        }
        best.0
    }

    pub fn gate(&self, delta: &Vector3<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.experts.len()];
        self.gate_into(delta, &mut out);
        out
    }

    /// Unclipped regression value at `delta`, reusing `scratch` for gates.
    pub fn predict_with(&self, delta: &Vector3<f64>, scratch: &mut [f64]) -> f64 {
        if self.experts.len() == 1 {
            return self.experts[0].conditional_mean(delta);
        }
        self.gate_into(delta, scratch);
        scratch
            .iter()
            .zip(&self.experts)
            .filter(|(g, _)| **g != 0.0)
            .map(|(g, e)| g * e.conditional_mean(delta))
            .sum()
    }

    pub fn predict(&self, delta: &Vector3<f64>) -> f64 {
        let mut scratch = vec![0.0; self.experts.len()];
        self.predict_with(delta, &mut scratch)
    }

    /// Regresses every position, unclipped.
    pub fn predict_all(&self, positions: &[[f64; 3]]) -> Vec<f64> {
        let mut scratch = vec![0.0; self.experts.len()];
        positions
            .iter()
            .map(|p| self.predict_with(&Vector3::from(*p), &mut scratch))
            .collect()
    }
}

pub fn ek4d_density(phi: &Vector4<f64>, p: &ExpertParams) -> Result<f64> {
    Ok(JointKernel::new(p, KernelKind::Epanechnikov)?.density(phi))
}

pub fn ek3d_marginal(delta: &Vector3<f64>, p: &ExpertParams) -> Result<f64> {
    Ok(GateExpert::new(p, KernelKind::Epanechnikov)?.marginal(delta))
}

pub fn ek_conditional_mean(delta: &Vector3<f64>, p: &ExpertParams) -> Result<f64> {
    Ok(GateExpert::new(p, KernelKind::Epanechnikov)?.conditional_mean(delta))
}

pub fn gaussian_density(phi: &Vector4<f64>, p: &ExpertParams) -> Result<f64> {
    Ok(JointKernel::new(p, KernelKind::Gaussian)?.density(phi))
}

pub fn gaussian_marginal(delta: &Vector3<f64>, p: &ExpertParams) -> Result<f64> {
    Ok(GateExpert::new(p, KernelKind::Gaussian)?.marginal(delta))
}

pub fn gaussian_conditional_mean(delta: &Vector3<f64>, p: &ExpertParams) -> Result<f64> {
    Ok(GateExpert::new(p, KernelKind::Gaussian)?.conditional_mean(delta))
}

/// Gate weights of `model` at `delta`, using the model's kernel kind.
pub fn gate(delta: &Vector3<f64>, model: &MixtureModel) -> Result<Vec<f64>> {
    Ok(Regressor::new(model)?.gate(delta))
}

/// Gate weights with Gaussian marginals regardless of `model.kind`.
pub fn gaussian_gate(delta: &Vector3<f64>, model: &MixtureModel) -> Result<Vec<f64>> {
    let m = MixtureModel {
        experts: model.experts.clone(),
        kind: KernelKind::Gaussian,
    };
    gate(delta, &m)
}

/// Unclipped regression value at `delta`.
pub fn regress(delta: &Vector3<f64>, model: &MixtureModel) -> Result<f64> {
    Ok(Regressor::new(model)?.predict(delta))
}

/// Regression value clipped to the 8-bit gray range.
pub fn regress_clipped(delta: &Vector3<f64>, model: &MixtureModel) -> Result<f64> {
    Ok(regress(delta, model)?.clamp(0.0, 255.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(alpha: f64) -> ExpertParams {
        ExpertParams::new(alpha, Vector4::zeros(), Matrix4::identity()).unwrap()
    }

    #[test]
    fn ek4d_at_mean_unit_covariance() {
        let v = ek4d_density(&Vector4::zeros(), &unit(1.0)).unwrap();
        assert_abs_diff_eq!(v, 3.0 / (32.0 * PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 9.4989e-3, epsilon = 1e-7);
    }

    #[test]
    fn ek4d_basic_form_peak() {
        let p = ExpertParams::new(1.0, Vector4::zeros(), Matrix4::identity() / 8.0).unwrap();
        let v = ek4d_density(&Vector4::zeros(), &p).unwrap();
        assert_abs_diff_eq!(v, 6.0 / (PI * PI), epsilon = 1e-12);
    }

    #[test]
    fn ek4d_vanishes_outside_support() {
        let v = ek4d_density(&Vector4::new(2.0, 2.0, 0.1, 0.0), &unit(1.0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ek3d_at_mean() {
        let v = ek3d_marginal(&Vector3::zeros(), &unit(1.0)).unwrap();
        assert_abs_diff_eq!(v, 2f64.sqrt() / (4.0 * PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 3.5822e-2, epsilon = 1e-6);
        assert_eq!(ek3d_marginal(&Vector3::new(3.0, 0.0, 0.0), &unit(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let p = ExpertParams {
            alpha: 1.0,
            mu: Vector4::zeros(),
            sigma: Matrix4::zeros(),
        };
        assert!(matches!(ek4d_density(&Vector4::zeros(), &p), Err(Error::SingularCovariance)));
        assert!(ek3d_marginal(&Vector3::zeros(), &p).is_err());
        assert!(ek4d_density(&Vector4::zeros(), &p.clone().regularized()).is_ok());
    }

    #[test]
    fn conditional_mean_examples() {
        let mut p = unit(1.0);
        p.mu[3] = 42.0;
        assert_eq!(ek_conditional_mean(&Vector3::new(5.0, -3.0, 1.0), &p).unwrap(), 42.0);

        let mut sigma = Matrix4::identity();
        sigma[(0, 3)] = 0.5;
        sigma[(3, 0)] = 0.5;
        let p = ExpertParams::new(1.0, Vector4::zeros(), sigma).unwrap();
        assert_abs_diff_eq!(
            ek_conditional_mean(&Vector3::new(1.0, 0.0, 0.0), &p).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(
            gaussian_conditional_mean(&Vector3::new(1.0, 0.0, 0.0), &p).unwrap(),
            ek_conditional_mean(&Vector3::new(1.0, 0.0, 0.0), &p).unwrap()
        );
    }

    #[test]
    fn gaussian_constant() {
        let v = gaussian_density(&Vector4::zeros(), &unit(1.0)).unwrap();
        assert_abs_diff_eq!(v, (2.0 * PI).powi(-2), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2.5330e-2, epsilon = 1e-6);
    }

    #[test]
    fn single_expert_gate_is_one() {
        let m = MixtureModel::new(vec![unit(1.0)], KernelKind::Epanechnikov).unwrap();
        assert_eq!(gate(&Vector3::new(0.3, 0.1, 0.0), &m).unwrap(), vec![1.0]);
    }

    #[test]
    fn mirror_experts_split_evenly() {
        let mut a = unit(0.5);
        a.mu[0] = -1.0;
        let mut b = unit(0.5);
        b.mu[0] = 1.0;
        for kind in [KernelKind::Epanechnikov, KernelKind::Gaussian] {
            let m = MixtureModel::new(vec![a.clone(), b.clone()], kind).unwrap();
            let g = gate(&Vector3::zeros(), &m).unwrap();
            assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn gate_fallback_picks_nearest_expert() {
        let mut a = unit(0.5);
        a.mu[0] = -10.0;
        let mut b = unit(0.5);
        b.mu[0] = 10.0;
        let m = MixtureModel::new(vec![a, b], KernelKind::Epanechnikov).unwrap();
        assert_eq!(gate(&Vector3::new(6.0, 0.0, 0.0), &m).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn priors_must_sum_to_one() {
        assert!(MixtureModel::new(vec![unit(0.5)], KernelKind::Gaussian).is_err());
        assert!(ExpertParams::new(0.0, Vector4::zeros(), Matrix4::identity()).is_err());
    }
}
