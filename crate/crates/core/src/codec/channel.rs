//! Per-channel model section: quantization header plus arithmetic-coded
//! parameter symbols.
//!
//! Layout: channel id (u8), `mu_Z` width (u8), block count (u32 LE), one
//! `(min, span)` f32 LE pair per header parameter (14 for Y, 10 for U/V),
//! then the coded symbols. Per block the stream holds `k-1` over the model
//! count alphabet followed by the single-expert parameters (`k = 1`) or all
//! per-expert parameters in table order (`k > 1`).

use nalgebra::{Cholesky, Matrix3, Matrix4, Vector3, Vector4};

use super::aac::{Decoder, Encoder};
use super::bits::{bit_table_with_mu_z, mu_z_bits, BitTable, Param};
use super::cholesky::{cholesky_r, CholeskyFactors};
use super::quant::QuantParam;
use crate::emr::ALPHA_FLOOR;
use crate::error::{Error, Result};
use crate::geometry::{BlockShape, Channel};
use crate::kernel::{ExpertParams, KernelKind, MixtureModel, MIN_REGULARIZATION, REGULARIZATION};

pub fn section_tag(channel: Channel) -> &'static str {
    match channel {
        Channel::Y => "CHNY",
        Channel::U => "CHNU",
        Channel::V => "CHNV",
    }
}

pub fn kernel_for(channel: Channel) -> KernelKind {
    if channel.is_luma() {
        KernelKind::Epanechnikov
    } else {
        KernelKind::Gaussian
    }
}

/// Quantization indices (zero-based) of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSymbols {
    pub k: usize,
    pub symbols: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSection {
    pub channel: Channel,
    pub mu_z_bits: u32,
    /// One entry per header parameter, in table order.
    pub header: Vec<QuantParam>,
    pub blocks: Vec<BlockSymbols>,
}

fn expert_values(e: &ExpertParams, table: &BitTable, single: bool) -> Result<Vec<f64>> {
    let u = cholesky_r(&e.position_cov())?.as_array();
    let params = if single { &table.single } else { &table.multi };
    Ok(params
        .iter()
        .map(|(p, _)| match p {
            Param::MuX => e.mu[0],
            Param::MuY => e.mu[1],
            Param::MuZ => e.mu[2],
            Param::MuW => e.mu[3],
            Param::U11 => u[0],
            Param::U12 => u[1],
            Param::U13 => u[2],
            Param::U22 => u[3],
            Param::U23 => u[4],
            Param::U33 => u[5],
            Param::SigmaXW => e.sigma[(0, 3)],
            Param::SigmaYW => e.sigma[(1, 3)],
            Param::SigmaZW => e.sigma[(2, 3)],
            Param::Alpha => e.alpha,
        })
        .collect())
}

/// Diagonal loading of a decoded 3x3 position covariance.
pub fn regularize_position(r: &Matrix3<f64>) -> Matrix3<f64> {
    let eps = (REGULARIZATION * r.trace() / 3.0).max(MIN_REGULARIZATION);
    r + Matrix3::identity() * eps
}

/// Assembles an expert from decoded pieces. `sigma_WW` is not coded; it is
/// set so the Schur complement `sigma_WW - c' R^-1 c` equals 1, which keeps
/// the full covariance positive definite.
fn assemble(alpha: f64, mu: Vector4<f64>, r: Matrix3<f64>, cross: Vector3<f64>) -> Result<ExpertParams> {
    let r = regularize_position(&r);
    let chol = Cholesky::new(r).ok_or(Error::SingularCovariance)?;
    let sww = cross.dot(&chol.solve(&cross)) + 1.0;
    let mut sigma = Matrix4::zeros();
    sigma.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    for i in 0..3 {
        sigma[(i, 3)] = cross[i];
        sigma[(3, i)] = cross[i];
    }
    sigma[(3, 3)] = sww;
    Ok(ExpertParams { alpha, mu, sigma })
}

/// Sample mean and `1/(N-1)` covariance of a block's positions.
pub fn geometry_moments(shape: &BlockShape) -> (Vector3<f64>, Matrix3<f64>) {
    let pos = shape.positions();
    let n = pos.len() as f64;
    let mean = pos.iter().map(|p| Vector3::from(*p)).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in &pos {
        let c = Vector3::from(*p) - mean;
        cov += c * c.transpose();
    }
    (mean, cov / (n - 1.0).max(1.0))
}

impl ChannelSection {
    pub fn table(&self) -> BitTable {
        bit_table_with_mu_z(self.channel, self.mu_z_bits)
    }

    /// Quantizes fitted block models. Returns the section and the number of
    /// values that had to be clamped into their header range.
    pub fn from_models(channel: Channel, lambda: f64, models: &[MixtureModel]) -> Result<(Self, usize)> {
        let mu_z = mu_z_bits(lambda);
        let table = bit_table_with_mu_z(channel, mu_z);
        let params = table.header_params();
        let mut per_block = Vec::with_capacity(models.len());
        let mut pools: Vec<Vec<f64>> = vec![Vec::new(); params.len()];
        for m in models {
            let k = m.len();
            if k == 0 || k > table.max_models() {
                return Err(Error::InvalidArgument(format!(
                    "{k} experts cannot be coded in channel {}",
                    channel.name()
                )));
            }
            let single = k == 1;
            let list = if single { &table.single } else { &table.multi };
            let mut vals = Vec::new();
            for e in &m.experts {
                let v = expert_values(e, &table, single)?;
                for ((p, _), x) in list.iter().zip(&v) {
                    pools[params.iter().position(|q| q == p).unwrap()].push(*x);
                }
                vals.push(v);
            }
            per_block.push((k, vals));
        }
        let header: Vec<QuantParam> = params
            .iter()
            .zip(pools)
            .map(|(p, pool)| QuantParam::covering(pool, table.multi_width(*p)))
            .collect();

        let mut clamps = 0;
        let mut blocks = Vec::with_capacity(per_block.len());
        for (k, vals) in per_block {
            let list = if k == 1 { &table.single } else { &table.multi };
            let mut symbols = Vec::new();
            for v in vals {
                for ((p, bits), x) in list.iter().zip(v) {
                    let spec = QuantParam {
                        bits: *bits,
                        ..header[params.iter().position(|q| q == p).unwrap()]
                    };
                    let (idx, clamped) = spec.quantize(x);
                    clamps += clamped as usize;
                    symbols.push(idx - 1);
                }
            }
            blocks.push(BlockSymbols { k, symbols });
        }
        Ok((
            Self {
                channel,
                mu_z_bits: mu_z,
                header,
                blocks,
            },
            clamps,
        ))
    }

    /// Bits of the quantized symbols before entropy coding.
    pub fn raw_bits(&self) -> u64 {
        let t = self.table();
        self.blocks.iter().map(|b| t.block_bits(b.k)).sum()
    }

    fn header_spec(&self, table: &BitTable, p: Param, bits: u32) -> QuantParam {
        let idx = table.header_params().iter().position(|q| *q == p).unwrap();
        QuantParam {
            bits,
            ..self.header[idx]
        }
    }

    /// Dequantized models, one per block shape. This is the only path from
    /// symbols to models, used by both encoder and decoder.
    pub fn decode_models(&self, shapes: &[BlockShape]) -> Result<Vec<MixtureModel>> {
        if shapes.len() != self.blocks.len() {
            return Err(Error::payload(
                section_tag(self.channel),
                format!("{} blocks coded, geometry needs {}", self.blocks.len(), shapes.len()),
            ));
        }
        let table = self.table();
        let kind = kernel_for(self.channel);
        shapes
            .iter()
            .zip(&self.blocks)
            .map(|(shape, b)| {
                let list = if b.k == 1 { &table.single } else { &table.multi };
                let mut experts = Vec::with_capacity(b.k);
                for chunk in b.symbols.chunks(list.len()) {
                    let get = |p: Param| -> Option<f64> {
                        list.iter()
                            .position(|(q, _)| *q == p)
                            .map(|i| self.header_spec(&table, p, list[i].1).dequantize(chunk[i] + 1))
                    };
                    let cross = Vector3::new(
                        get(Param::SigmaXW).unwrap_or(0.0),
                        get(Param::SigmaYW).unwrap_or(0.0),
                        get(Param::SigmaZW).unwrap_or(0.0),
                    );
                    let mu_w = get(Param::MuW).unwrap_or(0.0);
                    let expert = if b.k == 1 {
                        let (mean, r) = geometry_moments(shape);
                        assemble(1.0, Vector4::new(mean[0], mean[1], mean[2], mu_w), r, cross)?
                    } else {
                        let u = CholeskyFactors::from_array([
                            get(Param::U11).unwrap(),
                            get(Param::U12).unwrap(),
                            get(Param::U13).unwrap(),
                            get(Param::U22).unwrap(),
                            get(Param::U23).unwrap(),
                            get(Param::U33).unwrap(),
                        ]);
                        let alpha = get(Param::Alpha).unwrap_or(1.0 / b.k as f64);
                        let mu = Vector4::new(
                            get(Param::MuX).unwrap(),
                            get(Param::MuY).unwrap(),
                            get(Param::MuZ).unwrap(),
                            mu_w,
                        );
                        assemble(alpha, mu, u.to_matrix(), cross)?
                    };
                    experts.push(expert);
                }
                for e in experts.iter_mut() {
                    e.alpha = e.alpha.max(ALPHA_FLOOR);
                }
                let total: f64 = experts.iter().map(|e| e.alpha).sum();
                for e in experts.iter_mut() {
                    e.alpha /= total;
                }
                Ok(MixtureModel { experts, kind })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let table = self.table();
        let mut out = vec![self.channel.index() as u8, self.mu_z_bits as u8];
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for q in &self.header {
            out.extend_from_slice(&q.min.to_le_bytes());
            out.extend_from_slice(&q.span.to_le_bytes());
        }
        let mut enc = Encoder::new();
        for b in &self.blocks {
            enc.encode(b.k as u32 - 1, 1 << table.nm_bits)?;
            let list = if b.k == 1 { &table.single } else { &table.multi };
            for (i, s) in b.symbols.iter().enumerate() {
                enc.encode(*s, 1 << list[i % list.len()].1)?;
            }
        }
        out.extend(enc.finish());
        Ok(out)
    }

    pub fn from_bytes(channel: Channel, bytes: &[u8]) -> Result<Self> {
        let tag = section_tag(channel);
        let bad = |reason: String| Error::payload(tag, reason);
        if bytes.len() < 6 {
            return Err(bad("section shorter than its fixed header".into()));
        }
        if bytes[0] as usize != channel.index() {
            return Err(bad(format!("channel id {} in {tag}", bytes[0])));
        }
        let mu_z_bits = bytes[1] as u32;
        if mu_z_bits != 4 && mu_z_bits != 5 {
            return Err(bad(format!("mu_Z width {mu_z_bits}")));
        }
        let table = bit_table_with_mu_z(channel, mu_z_bits);
        let count = u32::from_le_bytes(bytes[2..6].try_into().unwrap()) as usize;
        let params = table.header_params();
        let header_end = 6 + params.len() * 8;
        if bytes.len() < header_end {
            return Err(bad("truncated quantization header".into()));
        }
        let header: Vec<QuantParam> = params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let o = 6 + i * 8;
                QuantParam {
                    bits: table.multi_width(*p),
                    min: f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()),
                    span: f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap()),
                }
            })
            .collect();
        if header.iter().any(|q| !q.min.is_finite() || !q.span.is_finite() || q.span < 0.0) {
            return Err(bad("invalid quantization mark".into()));
        }
        let payload = &bytes[header_end..];
        let map_err = |e: Error| match e {
            Error::CorruptStream { offset } => bad(format!("stream overrun at payload byte {offset}")),
            other => other,
        };
        let mut blocks = Vec::with_capacity(count.min(1 << 20));
        if count > 0 {
            let mut dec = Decoder::new(payload).map_err(map_err)?;
            for _ in 0..count {
                let k = dec.decode(1 << table.nm_bits).map_err(map_err)? as usize + 1;
                let list = if k == 1 { &table.single } else { &table.multi };
                let n = if k == 1 { list.len() } else { k * list.len() };
                let mut symbols = Vec::with_capacity(n);
                for i in 0..n {
                    symbols.push(dec.decode(1 << list[i % list.len()].1).map_err(map_err)?);
                }
                blocks.push(BlockSymbols { k, symbols });
            }
        }
        let section = Self {
            channel,
            mu_z_bits,
            header,
            blocks,
        };
        if section.to_bytes()? != bytes {
            return Err(bad("payload is not in canonical form".into()));
        }
        Ok(section)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emr::fit;
    use crate::geometry::{block_layout, partition_blocks, Plane};

    fn frames(f: impl Fn(usize, usize, usize) -> f64, size: usize, count: usize) -> Vec<Plane> {
        (0..count)
            .map(|z| Plane::from_fn(size, size, |x, y| f(x, y, z)))
            .collect()
    }

    #[test]
    fn single_kernel_luma_block_costs_27_raw_bits() {
        let fr = frames(|x, y, _| 50.0 + x as f64 + 0.5 * y as f64, 19, 4);
        let blocks = partition_blocks(&fr, 19, 4).unwrap();
        let m = fit(&blocks[0].samples, 1, KernelKind::Epanechnikov, 0).unwrap().model;
        let (sec, clamps) = ChannelSection::from_models(Channel::Y, 1000.0, &[m]).unwrap();
        assert_eq!(clamps, 0);
        assert_eq!(sec.raw_bits(), 4 + 6 + 6 + 6 + 5);
        let decoded = sec.decode_models(&[blocks[0].shape]).unwrap();
        assert_eq!(decoded[0].len(), 1);
        let (mean, _) = geometry_moments(&blocks[0].shape);
        assert_eq!(mean, Vector3::new(10.0, 10.0, 2.5));
    }

    #[test]
    fn byte_round_trip_is_canonical() {
        let fr = frames(
            |x, y, z| if (x / 6 + y / 5 + z) % 2 == 0 { 60.0 } else { 190.0 } + x as f64,
            75,
            5,
        );
        let blocks = partition_blocks(&fr, 19, 4).unwrap();
        let shapes = block_layout(5, 75, 19, 4).unwrap();
        let models: Vec<MixtureModel> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| fit(&b.samples, 1 + i % 4, KernelKind::Epanechnikov, i as u64).unwrap().model)
            .collect();
        let (sec, clamps) = ChannelSection::from_models(Channel::Y, 150.0, &models).unwrap();
        assert_eq!(clamps, 0);
        let bytes = sec.to_bytes().unwrap();
        let back = ChannelSection::from_bytes(Channel::Y, &bytes).unwrap();
        assert_eq!(back, sec);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.decode_models(&shapes).unwrap(), sec.decode_models(&shapes).unwrap());
        assert!(ChannelSection::from_bytes(Channel::U, &bytes).is_err());
    }

    #[test]
    fn chroma_multi_drops_cross_terms_and_uses_uniform_priors() {
        let fr = frames(|x, y, _| ((x * 3 + y * 7) % 50) as f64 + 100.0, 38, 4);
        let blocks = partition_blocks(&fr, 38, 4).unwrap();
        let m = fit(&blocks[0].samples, 3, KernelKind::Gaussian, 1).unwrap().model;
        let (sec, _) = ChannelSection::from_models(Channel::U, 1000.0, &[m]).unwrap();
        assert_eq!(sec.raw_bits(), 3 + 3 * 38);
        let d = sec.decode_models(&[blocks[0].shape]).unwrap();
        for e in &d[0].experts {
            assert!((e.alpha - 1.0 / 3.0).abs() < 1e-12);
            assert_eq!(e.w_cross(), Vector3::zeros());
        }
    }
}
