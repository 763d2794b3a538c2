//! Full-EIA reconstruction from the key-EIA.
//!
//! Between two consecutive key-EIs `A` (left/top) and `B` (right/bottom) the
//! offsets of the gap sum to `D`. Placed on a common canvas, `A` covers
//! `[0, S)` and `B` covers `[-D, S - D)`; they overlap on `[0, rd)` with
//! `rd = S - D`, where they blend linearly (`A`'s weight `(u + 0.5) / rd`).
//! Each intermediate EI with cumulative offset `D_j` is the canvas window
//! `[-D_j, S - D_j)`. Anchors are de-shaded first, anchor shadow pixels get
//! zero weight, and afterwards each intermediate EI gets its own shadow
//! corners and outer seam back from the nearest anchor. Columns between key
//! columns are filled first, then rows between key rows.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Channel, EiaGrid, Plane};
use crate::preprocess::shadow::{centred, EiShadow};
use crate::preprocess::{ParallaxMap, ShadowModel};

/// De-shaded band next to the EI edges across the offset axis.
pub const COLUMN_BAND: usize = 6;
pub const ROW_BAND: usize = 4;
/// Distance beyond a shadow line at which fill values are sampled.
pub const SHADOW_SAMPLE_DISTANCE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Columns,
    Rows,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Columns => "columns",
            Axis::Rows => "rows",
        }
    }

    fn band(self) -> usize {
        match self {
            Axis::Columns => COLUMN_BAND,
            Axis::Rows => ROW_BAND,
        }
    }
}

/// One run of non-key EIs between two key-EIs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gap {
    pub axis: Axis,
    /// Row index for a column gap, column index for a row gap.
    pub line: usize,
    pub from: usize,
    pub to: usize,
    /// Cumulative offset of every EI from `from` to `to` inclusive.
    pub cumulative: Vec<usize>,
    pub rd: usize,
}

impl Gap {
    pub fn total(&self) -> usize {
        *self.cumulative.last().unwrap()
    }

    /// Grid position of the EI at step `t` along the gap.
    fn cell(&self, t: usize) -> (usize, usize) {
        match self.axis {
            Axis::Columns => (self.line, self.from + t),
            Axis::Rows => (self.from + t, self.line),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReconstructionPlan {
    pub ei_rows: usize,
    pub ei_cols: usize,
    pub ei_size: usize,
    pub key_rows: Vec<usize>,
    pub key_cols: Vec<usize>,
    pub column_gaps: Vec<Gap>,
    pub row_gaps: Vec<Gap>,
}

fn make_gap(axis: Axis, line: usize, from: usize, to: usize, offset: impl Fn(usize) -> u8, size: usize) -> Result<Gap> {
    let mut cumulative = vec![0];
    for t in from..to {
        cumulative.push(cumulative.last().unwrap() + offset(t) as usize);
    }
    let total = *cumulative.last().unwrap();
    if total > size {
        return Err(Error::InconsistentOffsets {
            axis: axis.name(),
            line,
            from,
            to,
            offset_sum: total,
            ei_size: size,
        });
    }
    Ok(Gap {
        axis,
        line,
        from,
        to,
        cumulative,
        rd: size - total,
    })
}

impl ReconstructionPlan {
    pub fn new(key_rows: &[usize], key_cols: &[usize], parallax: &ParallaxMap, ei_size: usize) -> Result<Self> {
        let (m, n) = (parallax.rows, parallax.cols);
        let mut column_gaps = Vec::new();
        for &r in key_rows {
            for w in key_cols.windows(2) {
                if w[1] > w[0] + 1 {
                    column_gaps.push(make_gap(Axis::Columns, r, w[0], w[1], |t| parallax.col_offset(r, t), ei_size)?);
                }
            }
        }
        let mut row_gaps = Vec::new();
        for c in 0..n {
            for w in key_rows.windows(2) {
                if w[1] > w[0] + 1 {
                    row_gaps.push(make_gap(Axis::Rows, c, w[0], w[1], |t| parallax.row_offset(t, c), ei_size)?);
                }
            }
        }
        Ok(Self {
            ei_rows: m,
            ei_cols: n,
            ei_size,
            key_rows: key_rows.to_vec(),
            key_cols: key_cols.to_vec(),
            column_gaps,
            row_gaps,
        })
    }
}

/// Replaces shadow-corner pixels with the value found a fixed distance
/// beyond the shadow line along its normal.
fn deshade_corners(ei: &Plane, sh: &EiShadow) -> Plane {
    let s = ei.width;
    let c = (s as f64 - 1.0) / 2.0;
    let mut out = ei.clone();
    for y in 0..s {
        for x in 0..s {
            let Some(pair) = sh.pair_at(x, y, s) else { continue };
            let b = sh.intercepts[pair].unwrap();
            let (xc, yc) = (centred(x, s), centred(y, s));
            let v = yc - sh.k * xc;
            let extra = SHADOW_SAMPLE_DISTANCE / std::f64::consts::SQRT_2;
            // Move along (-k, 1) for the upper corner and (k, -1) for the lower.
            let (t, dir) = if pair == 0 {
                ((b - v) / 2.0 + extra, 1.0)
            } else {
                ((v - b) / 2.0 + extra, -1.0)
            };
            let sx = (xc - dir * sh.k * t + c).round().clamp(0.0, (s - 1) as f64) as usize;
            let sy = (yc + dir * t + c).round().clamp(0.0, (s - 1) as f64) as usize;
            out.set(x, y, ei.get(sx, sy));
        }
    }
    out
}

/// Replaces `band` columns at each side with the column just inside them.
fn deshade_band(ei: &Plane, band: usize) -> Plane {
    let s = ei.width;
    if 2 * (band + 3) > s {
        return ei.clone();
    }
    let (left_src, right_src) = (band + 2, s - band - 3);
    let mut out = ei.clone();
    for y in 0..ei.height {
        let (l, r) = (ei.get(left_src, y), ei.get(right_src, y));
        for x in 0..band {
            out.set(x, y, l);
            out.set(s - 1 - x, y, r);
        }
    }
    out
}

fn transpose_mask(mask: &[bool], s: usize) -> Vec<bool> {
    let mut out = vec![false; s * s];
    for y in 0..s {
        for x in 0..s {
            out[x * s + y] = mask[y * s + x];
        }
    }
    out
}

/// Merges two oriented anchors (offset axis along x) into the EI at
/// cumulative offset `dj`.
fn merge(a: &Plane, b: &Plane, mask_a: &[bool], mask_b: &[bool], total: usize, rd: usize, dj: usize) -> Plane {
    let s = a.width as isize;
    let (total, rd, dj) = (total as isize, rd as isize, dj as isize);
    Plane::from_fn(a.width, a.height, |x, y| {
        let u = x as isize - dj;
        let in_a = (0..s).contains(&u);
        let ub = u + total;
        let in_b = (0..s).contains(&ub);
        match (in_a, in_b) {
            (true, true) => {
                let ia = y * a.width + u as usize;
                let ib = y * a.width + ub as usize;
                let mut wa = (u as f64 + 0.5) / rd as f64;
                match (mask_a[ia], mask_b[ib]) {
                    (true, false) => wa = 0.0,
                    (false, true) => wa = 1.0,
                    _ => {}
                }
                wa * a.get(u as usize, y) + (1.0 - wa) * b.get(ub as usize, y)
            }
            (true, false) => a.get(u as usize, y),
            (false, true) => b.get(ub as usize, y),
            (false, false) => unreachable!("intermediate window lies inside the canvas"),
        }
    })
}

/// Copies the EI's own shadow corners from an original anchor, moving the
/// source along the corner normal by the intercept difference when both
/// share a quadrant.
fn restore_shadow(ei: &mut Plane, own: &EiShadow, anchor: &Plane, anchor_sh: &EiShadow) {
    let s = ei.width;
    let c = (s as f64 - 1.0) / 2.0;
    for y in 0..s {
        for x in 0..s {
            let Some(pair) = own.pair_at(x, y, s) else { continue };
            let (mut sx, mut sy) = (x, y);
            if own.quadrant == anchor_sh.quadrant {
                if let (Some(ba), Some(bi)) = (anchor_sh.intercepts[pair], own.intercepts[pair]) {
                    let t = (ba - bi) / 2.0;
                    sx = (centred(x, s) - own.k * t + c).round().clamp(0.0, (s - 1) as f64) as usize;
                    sy = (centred(y, s) + t + c).round().clamp(0.0, (s - 1) as f64) as usize;
                }
            }
            ei.set(x, y, anchor.get(sx, sy));
        }
    }
}

struct GapContext<'a> {
    shadow: &'a ShadowModel,
    m: usize,
    n: usize,
}

impl GapContext<'_> {
    fn shadow_at(&self, cell: (usize, usize)) -> EiShadow {
        self.shadow.for_ei(cell.0, cell.1, self.m, self.n)
    }

    /// Intermediate EIs of one gap for one channel plane.
    fn fill(&self, gap: &Gap, a: &Plane, b: &Plane) -> Vec<((usize, usize), Plane)> {
        let s = a.width;
        let (cell_a, cell_b) = (gap.cell(0), gap.cell(gap.to - gap.from));
        let (sh_a, sh_b) = (self.shadow_at(cell_a), self.shadow_at(cell_b));
        let orient = |p: &Plane| match gap.axis {
            Axis::Columns => p.clone(),
            Axis::Rows => p.transpose(),
        };
        let orient_mask = |m: Vec<bool>| match gap.axis {
            Axis::Columns => m,
            Axis::Rows => transpose_mask(&m, s),
        };
        let a_ds = deshade_band(&orient(&deshade_corners(a, &sh_a)), gap.axis.band());
        let b_ds = deshade_band(&orient(&deshade_corners(b, &sh_b)), gap.axis.band());
        let mask_a = orient_mask(sh_a.mask(s));
        let mask_b = orient_mask(sh_b.mask(s));

        let steps = gap.to - gap.from;
        (1..steps)
            .map(|t| {
                let merged = merge(&a_ds, &b_ds, &mask_a, &mask_b, gap.total(), gap.rd, gap.cumulative[t]);
                let mut ei = match gap.axis {
                    Axis::Columns => merged,
                    Axis::Rows => merged.transpose(),
                };
                let near = if t <= steps - t { a } else { b };
                for k in 0..s {
                    match gap.axis {
                        Axis::Columns => {
                            ei.set(0, k, near.get(0, k));
                            ei.set(s - 1, k, near.get(s - 1, k));
                        }
                        Axis::Rows => {
                            ei.set(k, 0, near.get(k, 0));
                            ei.set(k, s - 1, near.get(k, s - 1));
                        }
                    }
                }
                let own = self.shadow_at(gap.cell(t));
                // Prefer the left/top anchor; the other one when only it
                // shares this EI's quadrant.
                let (src, src_sh) = if own.quadrant != sh_a.quadrant && own.quadrant == sh_b.quadrant {
                    (b, &sh_b)
                } else {
                    (a, &sh_a)
                };
                restore_shadow(&mut ei, &own, src, src_sh);
                (gap.cell(t), ei)
            })
            .collect()
    }
}

fn run_pass(grid: &mut EiaGrid, gaps: &[Gap], ctx: &GapContext) {
    for ch in Channel::ALL {
        let results: Vec<Vec<((usize, usize), Plane)>> = gaps
            .par_iter()
            .map(|gap| {
                let (ra, ca) = gap.cell(0);
                let (rb, cb) = gap.cell(gap.to - gap.from);
                ctx.fill(gap, &grid.ei(ch, ra, ca), &grid.ei(ch, rb, cb))
            })
            .collect();
        for ((r, c), ei) in results.into_iter().flatten() {
            grid.set_ei(ch, r, c, &ei);
        }
    }
}

/// Predicts every non-key EI. `key` holds the key-EIs at full chroma
/// resolution; they are placed into the output unchanged.
pub fn reconstruct_full_eia(
    key: &EiaGrid,
    key_rows: &[usize],
    key_cols: &[usize],
    parallax: &ParallaxMap,
    shadow: &ShadowModel,
) -> Result<EiaGrid> {
    if key.chroma_size != key.ei_size {
        return Err(Error::InvalidArgument("key-EIA chroma must be at full resolution".into()));
    }
    if key.ei_rows != key_rows.len() || key.ei_cols != key_cols.len() {
        return Err(Error::DimensionMismatch("key-EIA size disagrees with key indices".into()));
    }
    let (m, n, s) = (parallax.rows, parallax.cols, key.ei_size);
    let plan = ReconstructionPlan::new(key_rows, key_cols, parallax, s)?;
    let mut grid = EiaGrid::blank(m, n, s, s);
    for (ki, &r) in key_rows.iter().enumerate() {
        for (kj, &c) in key_cols.iter().enumerate() {
            for ch in Channel::ALL {
                grid.set_ei(ch, r, c, &key.ei(ch, ki, kj));
            }
        }
    }
    let ctx = GapContext { shadow, m, n };
    run_pass(&mut grid, &plan.column_gaps, &ctx);
    run_pass(&mut grid, &plan.row_gaps, &ctx);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{extract_key_eia, key_indices};

    #[test]
    fn plan_identity_and_errors() {
        let map = ParallaxMap::uniform(6, 16, 3, 2);
        let plan = ReconstructionPlan::new(&key_indices(6, 5), &key_indices(16, 5), &map, 75).unwrap();
        for g in plan.column_gaps.iter().chain(&plan.row_gaps) {
            assert_eq!(g.total() + g.rd, 75);
        }
        assert_eq!(plan.column_gaps[0].cumulative, vec![0, 3, 6, 9, 12, 15]);
        let bad = ParallaxMap::uniform(6, 16, 15, 2);
        let err = ReconstructionPlan::new(&[0, 5], &[0, 6], &bad, 75).unwrap_err();
        assert!(matches!(err, Error::InconsistentOffsets { offset_sum: 90, .. }));
    }

    #[test]
    fn interval_one_is_identity() {
        let mut g = EiaGrid::blank(3, 3, 75, 75);
        g.plane_mut(Channel::Y).data.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 251) as f64);
        let key = extract_key_eia(&g, 1).unwrap();
        let map = ParallaxMap::uniform(3, 3, 4, 4);
        let out = reconstruct_full_eia(&key.grid, &key.rows, &key.cols, &map, &ShadowModel::default()).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn merge_weights_sum_to_one() {
        let a = Plane::filled(75, 2, 10.0);
        let b = Plane::filled(75, 2, 10.0);
        let mask = vec![false; 150];
        let out = merge(&a, &b, &mask, &mask, 20, 55, 8);
        assert!(out.data.iter().all(|&v| (v - 10.0).abs() < 1e-12));
    }

    #[test]
    fn band_deshading_copies_inner_column() {
        let p = Plane::from_fn(75, 75, |x, _| x as f64);
        let d = deshade_band(&p, 6);
        assert_eq!(d.get(0, 3), 8.0);
        assert_eq!(d.get(5, 3), 8.0);
        assert_eq!(d.get(6, 3), 6.0);
        assert_eq!(d.get(74, 3), 66.0);
        assert_eq!(d.get(68, 3), 68.0);
    }
}
