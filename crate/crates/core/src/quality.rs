//! Objective quality: PSNR and SSIM over the Y, U and V planes, and the
//! central rendered view of an EIA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Channel, EiaGrid, Plane};

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Side of the patch each EI contributes to the rendered view.
pub const VIEW_PATCH: usize = 8;

fn check_dims(a: &Plane, b: &Plane) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn check_grids(a: &EiaGrid, b: &EiaGrid) -> Result<()> {
    for ch in Channel::ALL {
        check_dims(a.plane(ch), b.plane(ch))?;
    }
    Ok(())
}

pub fn mse(a: &Plane, b: &Plane) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// PSNR in dB from the three channel MSEs; infinite when all are zero.
pub fn psnr_from_mse(mses: [f64; 3]) -> f64 {
    let mean = mses.iter().sum::<f64>() / 3.0;
    if mean == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mean).log10()
    }
}

pub fn channel_mse(a: &EiaGrid, b: &EiaGrid) -> Result<[f64; 3]> {
    check_grids(a, b)?;
    Ok([
        mse(a.plane(Channel::Y), b.plane(Channel::Y))?,
        mse(a.plane(Channel::U), b.plane(Channel::U))?,
        mse(a.plane(Channel::V), b.plane(Channel::V))?,
    ])
}

pub fn psnr(a: &EiaGrid, b: &EiaGrid) -> Result<f64> {
    Ok(psnr_from_mse(channel_mse(a, b)?))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let taps: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable filtering over valid positions only.
fn filter_valid(p: &Plane, taps: &[f64]) -> Plane {
    let n = taps.len();
    let w = p.width + 1 - n;
    let h = p.height + 1 - n;
    let rows = Plane::from_fn(w, p.height, |x, y| (0..n).map(|t| taps[t] * p.get(x + t, y)).sum());
    Plane::from_fn(w, h, |x, y| (0..n).map(|t| taps[t] * rows.get(x, y + t)).sum())
}

/// Mean SSIM of one plane pair. Planes smaller than the window are
/// compared with a single global window.
pub fn ssim_plane(a: &Plane, b: &Plane) -> Result<f64> {
    check_dims(a, b)?;
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let index = |ma: f64, mb: f64, va: f64, vb: f64, cov: f64| {
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    };
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        let n = a.data.len() as f64;
        let ma = a.data.iter().sum::<f64>() / n;
        let mb = b.data.iter().sum::<f64>() / n;
        let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
        for (x, y) in a.data.iter().zip(&b.data) {
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
            cov += (x - ma) * (y - mb);
        }
        return Ok(index(ma, mb, va / n, vb / n, cov / n));
    }
    let taps = gaussian_window();
    let prod = |p: &Plane, q: &Plane| Plane {
        width: p.width,
        height: p.height,
        data: p.data.iter().zip(&q.data).map(|(x, y)| x * y).collect(),
    };
    let mu_a = filter_valid(a, &taps);
    let mu_b = filter_valid(b, &taps);
    let aa = filter_valid(&prod(a, a), &taps);
    let bb = filter_valid(&prod(b, b), &taps);
    let ab = filter_valid(&prod(a, b), &taps);
    let mut total = 0.0;
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        total += index(ma, mb, aa.data[i] - ma * ma, bb.data[i] - mb * mb, ab.data[i] - ma * mb);
    }
    Ok(total / mu_a.data.len() as f64)
}

pub fn channel_ssim(a: &EiaGrid, b: &EiaGrid) -> Result<[f64; 3]> {
    check_grids(a, b)?;
    Ok([
        ssim_plane(a.plane(Channel::Y), b.plane(Channel::Y))?,
        ssim_plane(a.plane(Channel::U), b.plane(Channel::U))?,
        ssim_plane(a.plane(Channel::V), b.plane(Channel::V))?,
    ])
}

/// Mean of the three channel SSIMs.
pub fn ssim(a: &EiaGrid, b: &EiaGrid) -> Result<f64> {
    Ok(channel_ssim(a, b)?.iter().sum::<f64>() / 3.0)
}

mod inf_sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Num(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value {t:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// `"inf"` in JSON for identical images.
    #[serde(with = "inf_sentinel")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: [f64; 3],
    pub channel_ssim: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bpp: Option<f64>,
}

impl QualityReport {
    pub fn compute(reference: &EiaGrid, decoded: &EiaGrid, bits: Option<u64>) -> Result<Self> {
        let mse = channel_mse(reference, decoded)?;
        let channel_ssim = channel_ssim(reference, decoded)?;
        let pixels = (reference.ei_rows * reference.ei_size * reference.ei_cols * reference.ei_size) as f64;
        Ok(Self {
            psnr_db: psnr_from_mse(mse),
            ssim: channel_ssim.iter().sum::<f64>() / 3.0,
            mse,
            channel_ssim,
            bpp: bits.map(|b| b as f64 / pixels),
        })
    }

    /// One JSON line.
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn view_offset(ei_size: usize) -> usize {
    (ei_size - VIEW_PATCH) / 2
}

/// Stitches the central 8x8 patch of every EI of one plane.
pub fn render_central_plane(plane: &Plane, ei_rows: usize, ei_cols: usize, ei_size: usize) -> Result<Plane> {
    if ei_size < VIEW_PATCH {
        return Err(Error::InvalidArgument(format!("EI size {ei_size} is below {VIEW_PATCH}")));
    }
    let o = view_offset(ei_size);
    Ok(Plane::from_fn(ei_cols * VIEW_PATCH, ei_rows * VIEW_PATCH, |x, y| {
        let (i, j) = (y / VIEW_PATCH, x / VIEW_PATCH);
        plane.get(j * ei_size + o + x % VIEW_PATCH, i * ei_size + o + y % VIEW_PATCH)
    }))
}

/// Central view of a full-resolution EIA as Y, U, V planes.
pub fn render_central_view(eia: &EiaGrid) -> Result<[Plane; 3]> {
    if eia.chroma_size != eia.ei_size {
        return Err(Error::InvalidArgument("central view needs full-resolution chroma".into()));
    }
    let r = |ch| render_central_plane(eia.plane(ch), eia.ei_rows, eia.ei_cols, eia.ei_size);
    Ok([r(Channel::Y)?, r(Channel::U)?, r(Channel::V)?])
}
