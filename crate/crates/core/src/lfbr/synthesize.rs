//! Key-EIA synthesis from decoded block models: regression, deblocking and
//! the post-filter stage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::upsample_chroma;
use crate::error::{Error, Result};
use crate::geometry::{block_layout, partition_axis, scatter_block, serpentine_scan, BlockShape, Channel, EiaGrid, Plane};
use crate::kernel::{MixtureModel, Regressor};

/// Overlap band on each side of an internal block border.
pub const DEBLOCK_WIDTH: usize = 3;
/// Post-filter strengths for Y, U and V.
pub const POSTFILTER_STRENGTH: [f64; 3] = [15.0, 20.0, 20.0];
/// Gaussian blur sigma per unit of post-filter strength.
pub const BLUR_PER_STRENGTH: f64 = 0.05;

/// Geometry of the coded key-EIA.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyLayout {
    pub key_rows: usize,
    pub key_cols: usize,
    pub ei_size: usize,
    pub chroma_size: usize,
    pub gop: usize,
    pub cb_y: usize,
    pub cb_uv: usize,
}

impl KeyLayout {
    pub fn frames(&self) -> usize {
        self.key_rows * self.key_cols
    }

    pub fn size_of(&self, ch: Channel) -> usize {
        if ch.is_luma() {
            self.ei_size
        } else {
            self.chroma_size
        }
    }

    pub fn cb_of(&self, ch: Channel) -> usize {
        if ch.is_luma() {
            self.cb_y
        } else {
            self.cb_uv
        }
    }

    pub fn shapes(&self, ch: Channel) -> Result<Vec<BlockShape>> {
        block_layout(self.frames(), self.size_of(ch), self.cb_of(ch), self.gop)
    }

    /// Key-EIs in serpentine order as PVS frames.
    pub fn frames_of(&self, grid: &EiaGrid, ch: Channel) -> Vec<Plane> {
        serpentine_scan(self.key_rows, self.key_cols)
            .into_iter()
            .map(|(r, c)| grid.ei(ch, r, c))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub deblock_width: usize,
    /// `None` disables the post-filter.
    pub postfilter: Option<[f64; 3]>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            deblock_width: DEBLOCK_WIDTH,
            postfilter: Some(POSTFILTER_STRENGTH),
        }
    }
}

/// Regresses every block into a PVS of `frames` frames, clipped to [0, 255].
pub fn regress_frames(
    models: &[MixtureModel],
    shapes: &[BlockShape],
    frames: usize,
    size: usize,
    gop: usize,
) -> Result<Vec<Plane>> {
    if models.len() < shapes.len() {
        let o = shapes[models.len()].origin;
        return Err(Error::MissingBlock {
            gop: o.gop,
            block_row: o.block_row,
            block_col: o.block_col,
        });
    }
    let values = shapes
        .par_iter()
        .zip(models.par_iter())
        .map(|(shape, model)| {
            let reg = Regressor::new(model)?;
            Ok(reg
                .predict_all(&shape.positions())
                .into_iter()
                .map(|v| v.clamp(0.0, 255.0))
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Plane::new(size, size); frames];
    for (shape, v) in shapes.iter().zip(&values) {
        scatter_block(&mut out, shape, gop, v);
    }
    Ok(out)
}

/// Weight of the other block's boundary value at distance `i` (1-based)
/// from the border: `0.5 (w - i) / (w - 1)`.
fn deblock_weight(i: usize, width: usize) -> f64 {
    if width <= 1 {
        return if i == 1 { 0.5 } else { 0.0 };
    }
    0.5 * (width - i) as f64 / (width - 1) as f64
}

fn deblock_rows(p: &Plane, borders: &[usize], width: usize) -> Plane {
    let mut out = p.clone();
    for y in 0..p.height {
        for &b in borders {
            let left = p.get(b - 1, y);
            let right = p.get(b, y);
            for i in 1..=width {
                let w = deblock_weight(i, width);
                if b >= i {
                    let x = b - i;
                    out.set(x, y, out.get(x, y) + w * (right - left));
                }
                let x = b + i - 1;
                if x < p.width {
                    out.set(x, y, out.get(x, y) + w * (left - right));
                }
            }
        }
    }
    out
}

/// Smooths each internal block border of one EI: a `width`-pixel band on
/// each side moves toward the other block's boundary value with a linear
/// ramp, so a 100|200 step becomes 100,125,150|150,175,200.
pub fn deblock(ei: &Plane, cb: usize, width: usize) -> Result<Plane> {
    if width == 0 {
        return Ok(ei.clone());
    }
    let borders = |size: usize| -> Result<Vec<usize>> {
        Ok(partition_axis(size, cb)?.iter().skip(1).map(|(start, _)| *start).collect())
    };
    let h = deblock_rows(ei, &borders(ei.width)?, width);
    let v = deblock_rows(&h.transpose(), &borders(ei.height)?, width).transpose();
    Ok(v.map(|x| x.clamp(0.0, 255.0)))
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Default post-filter: separable Gaussian blur with `sigma = 0.05 *
/// strength`, edges clamped. Strength 0 is the identity.
pub fn post_filter(ei: &Plane, strength: f64) -> Plane {
    if strength <= 0.0 {
        return ei.clone();
    }
    let taps = gaussian_taps(BLUR_PER_STRENGTH * strength);
    let r = (taps.len() / 2) as isize;
    let pass = |p: &Plane| {
        Plane::from_fn(p.width, p.height, |x, y| {
            taps.iter()
                .enumerate()
                .map(|(t, w)| w * p.get_clamped(x as isize + t as isize - r, y as isize))
                .sum()
        })
    };
    pass(&pass(ei).transpose()).transpose()
}

/// Regresses, deblocks and post-filters the key-EIA, returning it with
/// chroma at `chroma_size`.
pub fn synthesize_key_eia(
    models: &[Vec<MixtureModel>],
    layout: &KeyLayout,
    opts: &SynthesisOptions,
) -> Result<EiaGrid> {
    let mut grid = EiaGrid::blank(layout.key_rows, layout.key_cols, layout.ei_size, layout.chroma_size);
    let order = serpentine_scan(layout.key_rows, layout.key_cols);
    for ch in Channel::ALL {
        let size = layout.size_of(ch);
        let frames = regress_frames(
            &models[ch.index()],
            &layout.shapes(ch)?,
            layout.frames(),
            size,
            layout.gop,
        )?;
        let strength = opts.postfilter.map(|s| s[ch.index()]).unwrap_or(0.0);
        let processed = frames
            .par_iter()
            .map(|f| Ok(post_filter(&deblock(f, layout.cb_of(ch), opts.deblock_width)?, strength)))
            .collect::<Result<Vec<_>>>()?;
        for (f, &(r, c)) in processed.iter().zip(&order) {
            grid.set_ei(ch, r, c, f);
        }
    }
    Ok(grid)
}

/// [`synthesize_key_eia`] followed by chroma upsampling to the EI size.
pub fn synthesize_full_resolution(
    models: &[Vec<MixtureModel>],
    layout: &KeyLayout,
    opts: &SynthesisOptions,
) -> Result<EiaGrid> {
    let key = synthesize_key_eia(models, layout, opts)?;
    Ok(if key.chroma_size == key.ei_size {
        key
    } else {
        upsample_chroma(&key)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_edge_ramp() {
        let p = Plane::from_fn(38, 38, |x, _| if x < 19 { 100.0 } else { 200.0 });
        let out = deblock(&p, 19, 3).unwrap();
        let row: Vec<f64> = (16..22).map(|x| out.get(x, 0)).collect();
        assert_eq!(row, vec![100.0, 125.0, 150.0, 150.0, 175.0, 200.0]);
        assert_eq!(out.get(0, 3), 100.0);
    }

    #[test]
    fn equal_borders_unchanged() {
        let p = Plane::from_fn(75, 75, |x, y| (x + 2 * y) as f64 % 7.0 + 50.0);
        let flat = Plane::filled(75, 75, 80.0);
        assert_eq!(deblock(&flat, 19, 3).unwrap(), flat);
        let out = deblock(&p, 75, 3).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn deblock_is_nearly_idempotent() {
        let p = Plane::from_fn(75, 75, |x, y| ((x / 19) * 40 + (y / 19) * 25) as f64 + (x % 5) as f64);
        let once = deblock(&p, 19, 3).unwrap();
        let twice = deblock(&once, 19, 3).unwrap();
        let max = once.data.iter().zip(&twice.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max <= 1.0, "{max}");
    }

    #[test]
    fn post_filter_identity_and_denoising() {
        let mut s = 1u64;
        let noisy = Plane::from_fn(75, 75, |_, _| {
            s = crate::rng::mix64(s);
            if s.is_multiple_of(10) {
                255.0
            } else {
                100.0
            }
        });
        assert_eq!(post_filter(&noisy, 0.0), noisy);
        let var = |p: &Plane| {
            let m = p.data.iter().sum::<f64>() / p.data.len() as f64;
            p.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / p.data.len() as f64
        };
        let f = post_filter(&noisy, 15.0);
        assert!(var(&f) < var(&noisy));
        assert_eq!(f, post_filter(&noisy, 15.0));
    }

    #[test]
    fn missing_block_is_reported() {
        let shapes = block_layout(4, 75, 19, 4).unwrap();
        let err = regress_frames(&[], &shapes, 4, 75, 4).unwrap_err();
        assert!(matches!(err, Error::MissingBlock { gop: 0, block_row: 0, block_col: 0 }));
    }
}
