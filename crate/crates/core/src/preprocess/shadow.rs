//! Corner-shadow line model.
//!
//! Each EI carries up to two dark corners bounded by lines `Y = kX + B` in
//! EI-centred coordinates (`X` right, `Y` down, origin at the EI centre).
//! The EIA is split into quadrants EIA1 (top-left), EIA2 (top-right), EIA3
//! (bottom-left) and EIA4 (bottom-right); `k = +1` in EIA1/EIA4 and `-1` in
//! EIA2/EIA3. Pair 1 bounds the upper corner (`Y - kX < B1`), pair 2 the
//! lower one (`Y - kX > B2`). Within a quadrant each intercept depends
//! linearly on `d`, the sum of the EI's distances to the nearest horizontal
//! and vertical EIA borders: `B = a d + b`.

use serde::{Deserialize, Serialize};

use crate::geometry::{Channel, EiaGrid, Plane};

/// Luma below this counts as shadow.
pub const DARK_THRESHOLD: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowLine {
    pub a: f64,
    pub b: f64,
}

impl ShadowLine {
    pub fn intercept(&self, d: f64) -> f64 {
        self.a * d + self.b
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadrantShadow {
    pub pairs: [Option<ShadowLine>; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShadowModel {
    pub quadrants: [QuadrantShadow; 4],
}

/// Quadrant index (0..4 for EIA1..EIA4) of EI `(i, j)`.
pub fn quadrant_of(i: usize, j: usize, m: usize, n: usize) -> usize {
    let bottom = i >= m / 2;
    let right = j >= n / 2;
    (bottom as usize) * 2 + right as usize
}

pub fn slope_sign(quadrant: usize) -> f64 {
    if quadrant == 0 || quadrant == 3 {
        1.0
    } else {
        -1.0
    }
}

/// Distance sum `d` with 1-based distances to the nearest borders.
pub fn distance_sum(i: usize, j: usize, m: usize, n: usize) -> f64 {
    ((i + 1).min(m - i) + (j + 1).min(n - j)) as f64
}

/// EI-centred coordinate of pixel index `p`.
#[inline]
pub fn centred(p: usize, size: usize) -> f64 {
    p as f64 - (size as f64 - 1.0) / 2.0
}

impl ShadowModel {
    pub fn is_empty(&self) -> bool {
        self.quadrants.iter().all(|q| q.pairs.iter().all(Option::is_none))
    }

    /// Same model with every coefficient rounded to f32, the precision the
    /// side information carries.
    pub fn to_f32_precision(&self) -> Self {
        let mut out = *self;
        for q in &mut out.quadrants {
            for line in q.pairs.iter_mut().flatten() {
                line.a = line.a as f32 as f64;
                line.b = line.b as f32 as f64;
            }
        }
        out
    }

    /// Shadow lines of EI `(i, j)` in an `m x n` EIA.
    pub fn for_ei(&self, i: usize, j: usize, m: usize, n: usize) -> EiShadow {
        let q = quadrant_of(i, j, m, n);
        let d = distance_sum(i, j, m, n);
        let pairs = self.quadrants[q].pairs;
        EiShadow {
            quadrant: q,
            k: slope_sign(q),
            intercepts: [pairs[0].map(|l| l.intercept(d)), pairs[1].map(|l| l.intercept(d))],
        }
    }
}

/// The resolved shadow lines of one EI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EiShadow {
    pub quadrant: usize,
    pub k: f64,
    pub intercepts: [Option<f64>; 2],
}

impl EiShadow {
    /// Which pair's corner (0 or 1) covers the pixel, if any.
    pub fn pair_at(&self, x: usize, y: usize, size: usize) -> Option<usize> {
        let v = centred(y, size) - self.k * centred(x, size);
        if matches!(self.intercepts[0], Some(b) if v < b) {
            return Some(0);
        }
        if matches!(self.intercepts[1], Some(b) if v > b) {
            return Some(1);
        }
        None
    }

    pub fn mask(&self, size: usize) -> Vec<bool> {
        let mut out = vec![false; size * size];
        for y in 0..size {
            for x in 0..size {
                out[y * size + x] = self.pair_at(x, y, size).is_some();
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.intercepts.iter().all(Option::is_none)
    }
}

/// Intercept evidence for one corner of one EI.
#[derive(Debug, Clone, Copy)]
struct Evidence {
    /// Mean of the per-row boundary estimates.
    mean: f64,
    /// Intersection of the per-row bracketing intervals; empty when rows
    /// disagree (noise, or a scene that is not a pure corner shadow).
    lo: f64,
    hi: f64,
}

/// Scans the rows in the corner's half. On a row with a partial dark run the
/// innermost dark pixel and its lit neighbour bracket the intercept.
fn ei_intercept(ei: &Plane, k: f64, pair: usize) -> Option<Evidence> {
    let s = ei.width;
    let from_right = (pair == 0) == (k > 0.0);
    let (mut sum, mut count) = (0.0, 0usize);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for y in 0..s {
        let yc = centred(y, s);
        if (pair == 0 && yc >= 0.0) || (pair == 1 && yc <= 0.0) {
            continue;
        }
        let dark = |x: usize| ei.get(x, y) < DARK_THRESHOLD;
        let run = if from_right {
            (0..s).rev().take_while(|&x| dark(x)).count()
        } else {
            (0..s).take_while(|&x| dark(x)).count()
        };
        if run == 0 || run == s {
            continue;
        }
        let (inner_dark, lit) = if from_right { (s - run, s - run - 1) } else { (run - 1, run) };
        let v = |x: usize| yc - k * centred(x, s);
        let (vd, vl) = (v(inner_dark), v(lit));
        // pair 0 is dark below the line, pair 1 above it
        let (a, b) = if pair == 0 { (vd, vl) } else { (vl, vd) };
        lo = lo.max(a);
        hi = hi.min(b);
        sum += 0.5 * (vd + vl);
        count += 1;
    }
    (count > 0).then(|| Evidence { mean: sum / count as f64, lo, hi })
}

fn least_squares(points: &[(f64, f64)]) -> ShadowLine {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = if sxx > 1e-12 { sxy / sxx } else { 0.0 };
    ShadowLine { a, b: my - a * mx }
}

/// Clips a convex polygon in the (a, b) plane to `sign * (a * d + b) <= c`.
fn clip(poly: &[(f64, f64)], d: f64, sign: f64, c: f64) -> Vec<(f64, f64)> {
    let f = |p: (f64, f64)| c - sign * (p.0 * d + p.1);
    let mut out = Vec::with_capacity(poly.len() + 1);
    for (i, &p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        let (fp, fq) = (f(p), f(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

/// Area centroid of a convex polygon; vertex mean when degenerate.
fn centroid(poly: &[(f64, f64)]) -> (f64, f64) {
    let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for (i, &p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        let cross = p.0 * q.1 - q.0 * p.1;
        area += cross;
        cx += (p.0 + q.0) * cross;
        cy += (p.1 + q.1) * cross;
    }
    if area.abs() < 1e-18 {
        let n = poly.len() as f64;
        return (poly.iter().map(|p| p.0).sum::<f64>() / n, poly.iter().map(|p| p.1).sum::<f64>() / n);
    }
    (cx / (3.0 * area), cy / (3.0 * area))
}

/// Line through per-EI intercept evidence. When every EI brackets its
/// intercept consistently, returns the centroid of the set of lines meeting
/// all brackets; otherwise least squares on the row means.
fn line_fit(evidence: &[(f64, Evidence)]) -> Option<ShadowLine> {
    if evidence.is_empty() {
        return None;
    }
    const A_BOUND: f64 = 100.0;
    const B_BOUND: f64 = 1.0e4;
    let mut poly = vec![(-A_BOUND, -B_BOUND), (A_BOUND, -B_BOUND), (A_BOUND, B_BOUND), (-A_BOUND, B_BOUND)];
    for (d, e) in evidence {
        if e.lo > e.hi {
            poly.clear();
            break;
        }
        poly = clip(&poly, *d, 1.0, e.hi);
        poly = clip(&poly, *d, -1.0, -e.lo);
        if poly.is_empty() {
            break;
        }
    }
    if !poly.is_empty() {
        let (a, b) = centroid(&poly);
        return Some(ShadowLine { a, b });
    }
    let points: Vec<_> = evidence.iter().map(|(d, e)| (*d, e.mean)).collect();
    Some(least_squares(&points))
}

/// Fits the per-quadrant line model to the luma of an EIA. Corners with no
/// detectable shadow stay `None`; a shadow-free EIA yields an empty model.
pub fn fit_shadow_model(grid: &EiaGrid) -> ShadowModel {
    let (m, n) = (grid.ei_rows, grid.ei_cols);
    let mut points: [[Vec<(f64, Evidence)>; 2]; 4] = Default::default();
    for i in 0..m {
        for j in 0..n {
            let ei = grid.ei(Channel::Y, i, j);
            let q = quadrant_of(i, j, m, n);
            let d = distance_sum(i, j, m, n);
            for (pair, pts) in points[q].iter_mut().enumerate() {
                if let Some(e) = ei_intercept(&ei, slope_sign(q), pair) {
                    pts.push((d, e));
                }
            }
        }
    }
    let mut model = ShadowModel::default();
    for (quadrant, pts) in model.quadrants.iter_mut().zip(&points) {
        for (line, evidence) in quadrant.pairs.iter_mut().zip(pts) {
            *line = line_fit(evidence);
        }
    }
    model.to_f32_precision()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_convention() {
        assert_eq!(quadrant_of(0, 0, 8, 8), 0);
        assert_eq!(quadrant_of(0, 7, 8, 8), 1);
        assert_eq!(quadrant_of(7, 0, 8, 8), 2);
        assert_eq!(quadrant_of(4, 4, 8, 8), 3);
        assert_eq!([0, 1, 2, 3].map(slope_sign), [1.0, -1.0, -1.0, 1.0]);
        assert_eq!(distance_sum(0, 0, 8, 8), 2.0);
        assert_eq!(distance_sum(3, 4, 8, 8), 8.0);
    }

    #[test]
    fn intercept_example() {
        let l = ShadowLine { a: -0.35, b: 18.0 };
        assert!((l.intercept(11.0) - 14.15).abs() < 1e-12);
    }

    #[test]
    fn shadow_free_grid_gives_empty_model() {
        let grid = EiaGrid::blank(4, 4, 75, 75);
        let mut g = grid.clone();
        g.plane_mut(Channel::Y).data.iter_mut().for_each(|v| *v = 90.0);
        assert!(fit_shadow_model(&g).is_empty());
    }

    #[test]
    fn single_ei_corner_is_traced() {
        let line = ShadowLine { a: 0.0, b: -50.3 };
        let model = ShadowModel {
            quadrants: [QuadrantShadow { pairs: [Some(line), None] }; 4],
        };
        let sh = model.for_ei(0, 0, 2, 2);
        let mut ei = Plane::filled(75, 75, 100.0);
        for y in 0..75 {
            for x in 0..75 {
                if sh.pair_at(x, y, 75).is_some() {
                    ei.set(x, y, 5.0);
                }
            }
        }
        assert!(ei.get(74, 0) < DARK_THRESHOLD);
        let e = ei_intercept(&ei, 1.0, 0).unwrap();
        assert!((e.mean + 50.3).abs() < 0.5, "{e:?}");
        assert!(e.lo < -50.3 && -50.3 <= e.hi && e.hi - e.lo <= 1.0, "{e:?}");
        assert!(ei_intercept(&ei, 1.0, 1).is_none());
    }

    #[test]
    fn bracketed_fit_beats_midpoints() {
        let truth = ShadowLine { a: 0.64, b: -60.0 };
        let evidence: Vec<_> = (2..=8)
            .map(|d| {
                let b = truth.intercept(d as f64);
                (d as f64, Evidence { mean: b.ceil() - 0.5, lo: b.ceil() - 1.0, hi: b.ceil() })
            })
            .collect();
        let fit = line_fit(&evidence).unwrap();
        assert!((fit.a - truth.a).abs() < 0.05, "{fit:?}");
        assert!((fit.b - truth.b).abs() < 0.5, "{fit:?}");
        let mut noisy = evidence.clone();
        noisy[0].1.lo = noisy[0].1.hi + 1.0;
        let ls = line_fit(&noisy).unwrap();
        assert!((ls.a - truth.a).abs() < 0.2, "{ls:?}");
    }
}
