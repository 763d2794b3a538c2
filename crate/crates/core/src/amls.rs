//! Rate-distortion selection of the expert count per block.
//!
//! Every candidate count is fitted independently and scored with
//! `J = D + lambda_eff * R`, where `D` is the block's summed squared error
//! and `R` the pre-entropy-coding bits of its parameters. Luma uses
//! Epanechnikov experts, counts 1..=16 and `lambda_eff = lambda`; chroma
//! uses Gaussian experts, counts 1..=8 and `lambda_eff = lambda / 2`.

use rayon::prelude::*;

use crate::codec::bits::candidate_bits;
use crate::codec::channel::kernel_for;
use crate::emr::{fit, FitResult};
use crate::error::{Error, Result};
use crate::geometry::{Channel, PvsBlock};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdoConfig {
    pub lambda: f64,
    pub channel: Channel,
}

impl RdoConfig {
    pub fn effective_lambda(&self) -> f64 {
        if self.channel.is_luma() {
            self.lambda
        } else {
            0.5 * self.lambda
        }
    }

    pub fn max_models(&self) -> usize {
        if self.channel.is_luma() {
            16
        } else {
            8
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdoResult {
    pub chosen_k: usize,
    /// Candidate `k` sits at index `k - 1` of the vectors below.
    pub j_values: Vec<f64>,
    pub bits: Vec<u64>,
    pub distortion: Vec<f64>,
    pub fit: FitResult,
}

/// Seed of the fit for candidate `k` of the block at `origin`.
pub fn candidate_seed(seed: u64, block: &PvsBlock, channel: Channel, k: usize) -> u64 {
    let o = block.origin();
    derive_seed(
        seed,
        &[
            channel.index() as u64,
            o.gop as u64,
            o.block_row as u64,
            o.block_col as u64,
            k as u64,
        ],
    )
}

pub fn select_model_count(block: &PvsBlock, cfg: &RdoConfig, seed: u64) -> Result<RdoResult> {
    if cfg.lambda.is_nan() || cfg.lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda {} must be non-negative", cfg.lambda)));
    }
    let max_k = cfg.max_models().min(block.len());
    if max_k == 0 {
        return Err(Error::InvalidArgument("empty block".into()));
    }
    let kind = kernel_for(cfg.channel);
    let n = block.len() as f64;
    let lam = cfg.effective_lambda();
    let fits = (1..=max_k)
        .into_par_iter()
        .map(|k| fit(&block.samples, k, kind, candidate_seed(seed, block, cfg.channel, k)))
        .collect::<Result<Vec<_>>>()?;
    let distortion: Vec<f64> = fits.iter().map(|f| f.mse() * n).collect();
    let bits: Vec<u64> = (1..=max_k).map(|k| candidate_bits(cfg.channel, cfg.lambda, k)).collect();
    let j_values: Vec<f64> = distortion
        .iter()
        .zip(&bits)
        .map(|(d, r)| d + lam * *r as f64)
        .collect();
    let mut best = 0;
    for (i, j) in j_values.iter().enumerate() {
        if *j < j_values[best] {
            best = i;
        }
    }
    let fit = fits.into_iter().nth(best).unwrap();
    Ok(RdoResult {
        chosen_k: best + 1,
        j_values,
        bits,
        distortion,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{partition_blocks, Plane};

    fn block(f: impl Fn(usize, usize, usize) -> f64) -> PvsBlock {
        let frames: Vec<Plane> = (0..4).map(|z| Plane::from_fn(19, 19, |x, y| f(x, y, z))).collect();
        partition_blocks(&frames, 19, 4).unwrap().remove(0)
    }

    #[test]
    fn extreme_lambdas() {
        let b = block(|x, y, z| ((x * 13 + y * 7 + z * 3) % 40) as f64 * 5.0);
        let cfg0 = RdoConfig { lambda: 0.0, channel: Channel::Y };
        let r = select_model_count(&b, &cfg0, 1).unwrap();
        let argmin = r
            .distortion
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, d)| if *d < acc.1 { (i, *d) } else { acc })
            .0;
        assert_eq!(r.chosen_k, argmin + 1);
        assert_eq!(r.j_values.len(), 16);

        let big = RdoConfig { lambda: 1e9, channel: Channel::Y };
        assert_eq!(select_model_count(&b, &big, 1).unwrap().chosen_k, 1);
    }

    #[test]
    fn constant_block_picks_one_expert() {
        let b = block(|_, _, _| 99.0);
        for lambda in [1.0, 75.0, 1000.0] {
            let r = select_model_count(&b, &RdoConfig { lambda, channel: Channel::Y }, 0).unwrap();
            assert_eq!(r.chosen_k, 1);
            assert!(r.distortion[0] < 1e-6);
        }
    }

    #[test]
    fn chroma_candidates_and_lambda() {
        let cfg = RdoConfig { lambda: 300.0, channel: Channel::U };
        assert_eq!(cfg.effective_lambda(), 150.0);
        assert_eq!(cfg.max_models(), 8);
        let b = block(|x, _, _| x as f64);
        let r = select_model_count(&b, &cfg, 0).unwrap();
        assert_eq!(r.bits.len(), 8);
    }
}
