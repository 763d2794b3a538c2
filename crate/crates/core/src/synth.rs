//! Synthetic EIAs with known parallax and corner shadows.
//!
//! Every EI samples one procedural texture: EI `(i, j)` pixel `(x, y)` shows
//! world point `(x - sx * j, y - sy * i)`, so neighbouring EIs differ by an
//! exact integer shift. Shadow corners from the line model are painted dark
//! on top.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Channel, EiaGrid, Plane};
use crate::preprocess::parallax::MAX_OFFSET;
use crate::preprocess::{ParallaxMap, QuadrantShadow, ShadowLine, ShadowModel};
use crate::rng::mix64;

pub const SHADOW_LUMA: f64 = 8.0;
const LUMA_MIN: f64 = 40.0;
const LUMA_MAX: f64 = 220.0;
/// Mean absolute horizontal and vertical gradient every texture must reach.
pub const GRADIENT_FLOOR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    Ramp,
    Checker,
    Noise,
}

impl TextureKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ramp" => Some(Self::Ramp),
            "checker" => Some(Self::Checker),
            "noise" => Some(Self::Noise),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub texture: TextureKind,
    pub ei_rows: usize,
    pub ei_cols: usize,
    pub ei_size: usize,
    /// Shift between horizontally adjacent EIs, pixels.
    pub parallax_x: usize,
    /// Shift between vertically adjacent EIs, pixels.
    pub parallax_y: usize,
    pub shadow: ShadowModel,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(texture: TextureKind, ei_rows: usize, ei_cols: usize) -> Self {
        Self {
            texture,
            ei_rows,
            ei_cols,
            ei_size: 75,
            parallax_x: 4,
            parallax_y: 4,
            shadow: default_shadow(),
            seed: 0,
        }
    }
}

/// Corner shadows with slope magnitudes of a real capture, placed so the
/// central search region stays clear.
pub fn default_shadow() -> ShadowModel {
    let q = |a1: f64, a2: f64| QuadrantShadow {
        pairs: [Some(ShadowLine { a: a1, b: -60.0 }), Some(ShadowLine { a: a2, b: 58.0 })],
    };
    ShadowModel {
        quadrants: [q(0.64, -0.50), q(0.64, -0.35), q(0.64, -0.35), q(0.73, -0.30)],
    }
    .to_f32_precision()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub grid: EiaGrid,
    pub parallax: ParallaxMap,
    pub shadow: ShadowModel,
}

/// Smooth value noise on a lattice of the given spacing.
fn value_noise(seed: u64, u: f64, v: f64, spacing: f64) -> f64 {
    let (fu, fv) = (u / spacing, v / spacing);
    let (iu, iv) = (fu.floor(), fv.floor());
    let lattice = |a: f64, b: f64| -> f64 {
        let h = mix64(seed ^ mix64((a as i64) as u64 ^ mix64((b as i64) as u64).rotate_left(17)));
        (h >> 11) as f64 / (1u64 << 53) as f64
    };
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tu, tv) = (smooth(fu - iu), smooth(fv - iv));
    let top = lattice(iu, iv) * (1.0 - tu) + lattice(iu + 1.0, iv) * tu;
    let bottom = lattice(iu, iv + 1.0) * (1.0 - tu) + lattice(iu + 1.0, iv + 1.0) * tu;
    top * (1.0 - tv) + bottom * tv
}

fn triangle(t: f64) -> f64 {
    let f = t.rem_euclid(1.0);
    1.0 - (2.0 * f - 1.0).abs()
}

/// Texture value in [0, 1] at world point `(u, v)`.
fn base_texture(kind: TextureKind, seed: u64, u: f64, v: f64) -> f64 {
    match kind {
        TextureKind::Ramp => triangle(u / 173.0 + v / 211.0 + (seed % 97) as f64 / 97.0),
        TextureKind::Checker => {
            let cell = ((u / 9.0).floor() + (v / 9.0).floor()) as i64;
            if cell.rem_euclid(2) == 0 {
                0.15
            } else {
                0.85
            }
        }
        TextureKind::Noise => 0.65 * value_noise(seed, u, v, 11.0) + 0.35 * value_noise(seed ^ 0xA5A5, u, v, 4.0),
    }
}

/// Low-amplitude detail added when a texture lacks gradient energy.
fn detail(u: f64, v: f64) -> f64 {
    0.5 + 0.25 * (0.41 * u).sin() + 0.25 * (0.29 * v + 0.7).sin()
}

fn mean_gradient(f: &dyn Fn(f64, f64) -> f64, size: usize) -> (f64, f64) {
    let (mut gx, mut gy) = (0.0, 0.0);
    for y in 0..size - 1 {
        for x in 0..size - 1 {
            let c = f(x as f64, y as f64);
            gx += (f(x as f64 + 1.0, y as f64) - c).abs();
            gy += (f(x as f64, y as f64 + 1.0) - c).abs();
        }
    }
    let n = ((size - 1) * (size - 1)) as f64;
    (gx / n, gy / n)
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    if spec.parallax_x > MAX_OFFSET || spec.parallax_y > MAX_OFFSET {
        return Err(Error::InvalidArgument(format!("parallax must stay within 0..={MAX_OFFSET}")));
    }
    if spec.ei_rows == 0 || spec.ei_cols == 0 || spec.ei_size < 8 {
        return Err(Error::InvalidArgument("empty scene geometry".into()));
    }
    let (kind, seed) = (spec.texture, spec.seed);
    let range = LUMA_MAX - LUMA_MIN;
    let plain = move |u: f64, v: f64| LUMA_MIN + range * base_texture(kind, seed, u, v);
    let (gx, gy) = mean_gradient(&plain, spec.ei_size);
    let mix = if gx.min(gy) < GRADIENT_FLOOR { 0.3 } else { 0.0 };
    let luma = move |u: f64, v: f64| {
        LUMA_MIN + range * ((1.0 - mix) * base_texture(kind, seed, u, v) + mix * detail(u, v))
    };

    let (m, n, s) = (spec.ei_rows, spec.ei_cols, spec.ei_size);
    let mut grid = EiaGrid::blank(m, n, s, s);
    for i in 0..m {
        for j in 0..n {
            let sh = spec.shadow.for_ei(i, j, m, n);
            let world = |x: usize, y: usize| {
                (
                    x as f64 - (spec.parallax_x * j) as f64,
                    y as f64 - (spec.parallax_y * i) as f64,
                )
            };
            let dark = |x: usize, y: usize| sh.pair_at(x, y, s).is_some();
            let y_ei = Plane::from_fn(s, s, |x, y| {
                if dark(x, y) {
                    return SHADOW_LUMA;
                }
                let (u, v) = world(x, y);
                luma(u, v).round()
            });
            let u_ei = Plane::from_fn(s, s, |x, y| {
                if dark(x, y) {
                    return 128.0;
                }
                let (u, v) = world(x, y);
                (128.0 + 0.3 * (luma(u + 31.0, v) - 130.0)).round()
            });
            let v_ei = Plane::from_fn(s, s, |x, y| {
                if dark(x, y) {
                    return 128.0;
                }
                let (u, v) = world(x, y);
                (128.0 - 0.3 * (luma(u, v + 17.0) - 130.0)).round()
            });
            grid.set_ei(Channel::Y, i, j, &y_ei);
            grid.set_ei(Channel::U, i, j, &u_ei);
            grid.set_ei(Channel::V, i, j, &v_ei);
        }
    }
    Ok(SyntheticScene {
        grid,
        parallax: ParallaxMap::uniform(m, n, spec.parallax_x as u8, spec.parallax_y as u8),
        shadow: spec.shadow,
    })
}
