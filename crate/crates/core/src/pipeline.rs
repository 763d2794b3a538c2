//! Encoder and decoder pipelines.
//!
//! Encoding: shadow and parallax analysis on the full EIA, key-EIA
//! extraction, chroma subsampling, serpentine PVS, per-block model-count
//! search, quantization and the container. Decoding reverses the parameter
//! path, synthesizes the key-EIA and predicts every other EI.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amls::{select_model_count, RdoConfig};
use crate::codec::container::{Bitstream, GeometryHeader, VERSION};
use crate::codec::ChannelSection;
use crate::color::downsample_chroma;
use crate::error::{Error, Result};
use crate::geometry::{extract_key_eia, partition_blocks, Channel, CodecConfig, EiaGrid};
use crate::kernel::MixtureModel;
use crate::lfbr::{reconstruct_full_eia, synthesize_full_resolution, KeyLayout, SynthesisOptions};
use crate::preprocess::{check_interval, detect_parallax, fit_shadow_model, max_interval};

/// Version of the stats JSON layout; bumped together with the bitstream.
pub const STATS_VERSION: u32 = VERSION as u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Entropy-coded section size in bits.
    pub coded_bits: u64,
    /// Fixed-width parameter bits before entropy coding.
    pub raw_bits: u64,
    pub blocks: usize,
    /// Count of blocks per chosen expert count; entry `k - 1` counts `k`.
    pub k_histogram: Vec<usize>,
    /// Parameters clamped into their header range during quantization.
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub stats_version: u32,
    pub bitstream_version: u8,
    pub ei_rows: usize,
    pub ei_cols: usize,
    pub ei_size: usize,
    pub interval: usize,
    pub lambda: f64,
    pub total_bytes: usize,
    pub total_bits: u64,
    /// Total bits over the full-resolution pixel count.
    pub bpp: f64,
    pub section_bytes: BTreeMap<String, usize>,
    pub channels: BTreeMap<String, ChannelStats>,
    pub max_offset: u8,
    pub max_interval: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct EncodeOutput {
    pub bytes: Vec<u8>,
    pub bitstream: Bitstream,
    pub stats: EncodeStats,
    /// Key-EIA exactly as the decoder will synthesize it, chroma upsampled.
    pub key_reconstruction: EiaGrid,
}

fn layout_of(g: &GeometryHeader) -> KeyLayout {
    KeyLayout {
        key_rows: g.key_rows.len(),
        key_cols: g.key_cols.len(),
        ei_size: g.ei_size,
        chroma_size: g.chroma_size,
        gop: g.gop,
        cb_y: g.cb_y,
        cb_uv: g.cb_uv,
    }
}

fn validate(grid: &EiaGrid, cfg: &CodecConfig) -> Result<()> {
    if grid.chroma_size != grid.ei_size {
        return Err(Error::InvalidArgument("encoder input must have full-resolution chroma".into()));
    }
    if cfg.chroma_size != grid.ei_size && cfg.chroma_size != grid.ei_size.div_ceil(2) {
        return Err(Error::InvalidArgument(format!(
            "chroma size {} must be {} or {}",
            cfg.chroma_size,
            grid.ei_size,
            grid.ei_size.div_ceil(2)
        )));
    }
    if cfg.gop == 0 {
        return Err(Error::InvalidArgument("gop must be positive".into()));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {} must be finite and non-negative", cfg.lambda)));
    }
    Ok(())
}

/// Fits every block of one channel and returns the chosen models in block
/// order.
fn model_channel(frames: &[crate::geometry::Plane], ch: Channel, cb: usize, cfg: &CodecConfig) -> Result<Vec<MixtureModel>> {
    let blocks = partition_blocks(frames, cb, cfg.gop)?;
    let rdo = RdoConfig {
        lambda: cfg.lambda,
        channel: ch,
    };
    blocks
        .par_iter()
        .map(|b| select_model_count(b, &rdo, cfg.seed).map(|r| r.fit.model))
        .collect()
}

/// Encodes a full-resolution EIA.
pub fn encode(grid: &EiaGrid, cfg: &CodecConfig) -> Result<EncodeOutput> {
    validate(grid, cfg)?;
    let parallax = detect_parallax(grid)?;
    check_interval(cfg.interval, &parallax, grid.ei_size)?;
    let shadow = fit_shadow_model(grid).to_f32_precision();

    let key = extract_key_eia(grid, cfg.interval)?;
    let key_grid = if cfg.chroma_size == grid.ei_size {
        key.grid.clone()
    } else {
        downsample_chroma(&key.grid)
    };
    let geometry = GeometryHeader {
        ei_rows: grid.ei_rows,
        ei_cols: grid.ei_cols,
        ei_size: grid.ei_size,
        chroma_size: cfg.chroma_size,
        interval: cfg.interval,
        gop: cfg.gop,
        cb_y: cfg.cb_y,
        cb_uv: cfg.cb_uv,
        lambda: cfg.lambda,
        key_rows: key.rows.clone(),
        key_cols: key.cols.clone(),
    };
    let layout = layout_of(&geometry);

    let mut channels = Vec::with_capacity(3);
    let mut channel_stats = BTreeMap::new();
    for ch in Channel::ALL {
        let frames = layout.frames_of(&key_grid, ch);
        let models = model_channel(&frames, ch, layout.cb_of(ch), cfg)?;
        let (section, clamped) = ChannelSection::from_models(ch, cfg.lambda, &models)?;
        let max_k = section.table().max_models();
        let mut hist = vec![0usize; max_k];
        for b in &section.blocks {
            hist[b.k - 1] += 1;
        }
        channel_stats.insert(
            ch.name().to_string(),
            ChannelStats {
                coded_bits: 0,
                raw_bits: section.raw_bits(),
                blocks: section.blocks.len(),
                k_histogram: hist,
                clamped,
            },
        );
        channels.push(section);
    }

    let bitstream = Bitstream {
        geometry,
        shadow,
        parallax,
        channels,
    };
    let bytes = bitstream.to_bytes()?;
    let sizes = bitstream.section_sizes()?;
    for ch in Channel::ALL {
        let tag = crate::codec::channel::section_tag(ch);
        channel_stats.get_mut(ch.name()).unwrap().coded_bits = sizes.get(tag) as u64 * 8;
    }
    let pixels = (grid.ei_rows * grid.ei_size * grid.ei_cols * grid.ei_size) as f64;
    let max_offset = bitstream.parallax.max_offset();
    let mi = max_interval(grid.ei_size, max_offset);
    let stats = EncodeStats {
        stats_version: STATS_VERSION,
        bitstream_version: VERSION,
        ei_rows: grid.ei_rows,
        ei_cols: grid.ei_cols,
        ei_size: grid.ei_size,
        interval: cfg.interval,
        lambda: cfg.lambda,
        total_bytes: bytes.len(),
        total_bits: bytes.len() as u64 * 8,
        bpp: bytes.len() as f64 * 8.0 / pixels,
        section_bytes: sizes.0.iter().cloned().collect(),
        channels: channel_stats,
        max_offset,
        max_interval: (mi != usize::MAX).then_some(mi),
    };

    let models = decode_channel_models(&bitstream)?;
    let key_reconstruction = synthesize_full_resolution(&models, &layout, &SynthesisOptions::default())?;
    Ok(EncodeOutput {
        bytes,
        bitstream,
        stats,
        key_reconstruction,
    })
}

fn decode_channel_models(bs: &Bitstream) -> Result<Vec<Vec<MixtureModel>>> {
    let layout = layout_of(&bs.geometry);
    Channel::ALL
        .into_iter()
        .zip(&bs.channels)
        .map(|(ch, sec)| {
            let shapes = layout
                .shapes(ch)
                .map_err(|e| Error::payload("GEOM", e.to_string()))?;
            sec.decode_models(&shapes)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DecodeOptions {
    pub synthesis: SynthesisOptions,
}

#[derive(Clone, Debug)]
pub struct DecodeOutput {
    pub eia: EiaGrid,
    /// Synthesized key-EIA with chroma upsampled, before LFBR.
    pub key_eia: EiaGrid,
    pub bitstream: Bitstream,
}

pub fn decode(bytes: &[u8], opts: &DecodeOptions) -> Result<DecodeOutput> {
    let bitstream = Bitstream::from_bytes(bytes)?;
    let layout = layout_of(&bitstream.geometry);
    let models = decode_channel_models(&bitstream)?;
    let key_eia = synthesize_full_resolution(&models, &layout, &opts.synthesis)?;
    let g = &bitstream.geometry;
    let eia = reconstruct_full_eia(&key_eia, &g.key_rows, &g.key_cols, &bitstream.parallax, &bitstream.shadow)
        .map_err(|e| match e {
            Error::InconsistentOffsets { .. } => Error::payload("OFFS", e.to_string()),
            other => other,
        })?;
    Ok(DecodeOutput {
        eia,
        key_eia,
        bitstream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SceneSpec, TextureKind};

    fn small_config() -> CodecConfig {
        CodecConfig {
            interval: 3,
            lambda: 1000.0,
            ..CodecConfig::default()
        }
    }

    #[test]
    fn round_trip_keeps_key_eis() {
        let spec = SceneSpec::new(TextureKind::Ramp, 4, 4);
        let scene = generate(&spec).unwrap();
        let out = encode(&scene.grid, &small_config()).unwrap();
        assert!(out.stats.bpp > 0.0);
        assert_eq!(out.stats.channels["Y"].blocks, out.bitstream.channels[0].blocks.len());
        let dec = decode(&out.bytes, &DecodeOptions::default()).unwrap();
        let g = &out.bitstream.geometry;
        for (ki, &r) in g.key_rows.iter().enumerate() {
            for (kj, &c) in g.key_cols.iter().enumerate() {
                for ch in Channel::ALL {
                    assert_eq!(dec.eia.ei(ch, r, c), out.key_reconstruction.ei(ch, ki, kj));
                }
            }
        }
        let again = decode(&out.bytes, &DecodeOptions::default()).unwrap();
        assert_eq!(again.eia, dec.eia);
    }

    #[test]
    fn oversized_interval_is_rejected() {
        let spec = SceneSpec {
            parallax_x: 15,
            ..SceneSpec::new(TextureKind::Noise, 2, 7)
        };
        let scene = generate(&spec).unwrap();
        let cfg = CodecConfig {
            interval: 6,
            ..CodecConfig::default()
        };
        let err = encode(&scene.grid, &cfg).unwrap_err();
        assert!(matches!(err, Error::IntervalTooLarge { max_interval: 5, .. }), "{err}");
    }
}
