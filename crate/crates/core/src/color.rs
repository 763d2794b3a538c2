//! BT.601 full-range color conversion and 2x chroma resampling.

use crate::error::{Error, Result};
use crate::geometry::{Channel, EiaGrid, Plane};

#[inline]
fn round8(v: f64) -> f64 {
    v.round().clamp(0.0, 255.0)
}

/// Converts interleaved 8-bit RGB into rounded Y, U, V planes.
pub fn rgb_to_yuv(width: usize, height: usize, rgb: &[u8]) -> Result<[Plane; 3]> {
    if rgb.len() != width * height * 3 {
        return Err(Error::DimensionMismatch(format!(
            "RGB buffer holds {} bytes, expected {}",
            rgb.len(),
            width * height * 3
        )));
    }
    let mut y = Plane::new(width, height);
    let mut u = Plane::new(width, height);
    let mut v = Plane::new(width, height);
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        y.data[i] = round8(0.299 * r + 0.587 * g + 0.114 * b);
        u.data[i] = round8(128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b);
        v.data[i] = round8(128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b);
    }
    Ok([y, u, v])
}

/// Inverse of [`rgb_to_yuv`]; all three planes must share dimensions.
pub fn yuv_to_rgb(planes: &[Plane; 3]) -> Result<Vec<u8>> {
    let (w, h) = (planes[0].width, planes[0].height);
    if planes.iter().any(|p| p.width != w || p.height != h) {
        return Err(Error::DimensionMismatch("YUV planes differ in size".into()));
    }
    let mut out = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        let y = planes[0].data[i];
        let u = planes[1].data[i] - 128.0;
        let v = planes[2].data[i] - 128.0;
        out.push(round8(y + 1.402 * v) as u8);
        out.push(round8(y - 0.344_136 * u - 0.714_136 * v) as u8);
        out.push(round8(y + 1.772 * u) as u8);
    }
    Ok(out)
}

/// Halves a plane with 2x2 box averaging, replicating the last row/column
/// when a dimension is odd (75 -> 38).
pub fn downsample_uv(plane: &Plane) -> Plane {
    let w = plane.width.div_ceil(2);
    let h = plane.height.div_ceil(2);
    Plane::from_fn(w, h, |x, y| {
        let (x0, y0) = (2 * x as isize, 2 * y as isize);
        (plane.get_clamped(x0, y0)
            + plane.get_clamped(x0 + 1, y0)
            + plane.get_clamped(x0, y0 + 1)
            + plane.get_clamped(x0 + 1, y0 + 1))
            / 4.0
    })
}

/// Bilinear 2x upsampling back to `width x height` (38 -> 75).
pub fn upsample_uv(plane: &Plane, width: usize, height: usize) -> Plane {
    let sample = |pos: f64, len: usize| -> (usize, usize, f64) {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, p - i0 as f64)
    };
    Plane::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = sample(x as f64 / 2.0 - 0.25, plane.width);
        let (y0, y1, fy) = sample(y as f64 / 2.0 - 0.25, plane.height);
        let top = plane.get(x0, y0) * (1.0 - fx) + plane.get(x1, y0) * fx;
        let bottom = plane.get(x0, y1) * (1.0 - fx) + plane.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Downsamples the chroma planes of every EI independently.
pub fn downsample_chroma(grid: &EiaGrid) -> EiaGrid {
    let cs = grid.ei_size.div_ceil(2);
    let mut out = EiaGrid::blank(grid.ei_rows, grid.ei_cols, grid.ei_size, cs);
    *out.plane_mut(Channel::Y) = grid.plane(Channel::Y).clone();
    for ch in [Channel::U, Channel::V] {
        for r in 0..grid.ei_rows {
            for c in 0..grid.ei_cols {
                out.set_ei(ch, r, c, &downsample_uv(&grid.ei(ch, r, c)));
            }
        }
    }
    out
}

/// Upsamples the chroma planes of every EI back to the luma EI size.
pub fn upsample_chroma(grid: &EiaGrid) -> EiaGrid {
    let s = grid.ei_size;
    let mut out = EiaGrid::blank(grid.ei_rows, grid.ei_cols, s, s);
    *out.plane_mut(Channel::Y) = grid.plane(Channel::Y).clone();
    for ch in [Channel::U, Channel::V] {
        for r in 0..grid.ei_rows {
            for c in 0..grid.ei_cols {
                out.set_ei(ch, r, c, &upsample_uv(&grid.ei(ch, r, c), s, s));
            }
        }
    }
    out
}

/// Builds a full-resolution YUV EIA from interleaved RGB.
pub fn eia_from_rgb(
    width: usize,
    height: usize,
    rgb: &[u8],
    ei_rows: usize,
    ei_cols: usize,
    ei_size: usize,
) -> Result<EiaGrid> {
    let planes = rgb_to_yuv(width, height, rgb)?;
    EiaGrid::new(ei_rows, ei_cols, ei_size, ei_size, planes)
}

/// Interleaved RGB of a full-resolution EIA.
pub fn eia_to_rgb(grid: &EiaGrid) -> Result<Vec<u8>> {
    if grid.chroma_size != grid.ei_size {
        return Err(Error::InvalidArgument(
            "chroma planes must be upsampled before RGB conversion".into(),
        ));
    }
    yuv_to_rgb(&grid.planes)
}
