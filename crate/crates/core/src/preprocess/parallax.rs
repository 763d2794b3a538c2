//! Integer parallax between neighbouring EIs.
//!
//! For a horizontal pair, a 37-row by 31-column window is fixed at the left
//! edge of the central 37x45 region of the left EI; the same-size window in
//! the right EI slides 0..=15 pixels to the right and the offset with the
//! smallest MSE wins (smallest offset on ties). Content in EI `j+1` therefore
//! appears shifted right by the offset relative to EI `j`. Vertical pairs
//! use the transposed search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Channel, EiaGrid, Plane};

pub const MAX_OFFSET: usize = 15;
pub const REGION_ROWS: usize = 37;
pub const REGION_COLS: usize = 45;
pub const WINDOW_COLS: usize = 31;
/// Deviation from the 3x3 median that marks an offset as an outlier.
pub const OUTLIER_THRESHOLD: i32 = 3;
const MEDIAN_MAX_PASSES: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallaxMap {
    pub rows: usize,
    pub cols: usize,
    /// `rows x (cols-1)`, offset between EI `(i, j)` and `(i, j+1)`.
    pub col_offsets: Vec<u8>,
    /// `(rows-1) x cols`, offset between EI `(i, j)` and `(i+1, j)`.
    pub row_offsets: Vec<u8>,
}

impl ParallaxMap {
    pub fn uniform(rows: usize, cols: usize, col_offset: u8, row_offset: u8) -> Self {
        Self {
            rows,
            cols,
            col_offsets: vec![col_offset; rows * cols.saturating_sub(1)],
            row_offsets: vec![row_offset; rows.saturating_sub(1) * cols],
        }
    }

    pub fn col_offset(&self, i: usize, j: usize) -> u8 {
        self.col_offsets[i * (self.cols - 1) + j]
    }

    pub fn row_offset(&self, i: usize, j: usize) -> u8 {
        self.row_offsets[i * self.cols + j]
    }

    pub fn max_offset(&self) -> u8 {
        self.col_offsets
            .iter()
            .chain(&self.row_offsets)
            .copied()
            .max()
            .unwrap_or(0)
    }
}

/// Largest interval whose gaps fit in one EI: `floor(ei_size / max_offset)`.
pub fn max_interval(ei_size: usize, max_offset: u8) -> usize {
    if max_offset == 0 {
        usize::MAX
    } else {
        ei_size / max_offset as usize
    }
}

pub fn check_interval(interval: usize, map: &ParallaxMap, ei_size: usize) -> Result<()> {
    let max_offset = map.max_offset();
    let max_int = max_interval(ei_size, max_offset);
    if interval > max_int {
        return Err(Error::IntervalTooLarge {
            interval,
            max_offset,
            max_interval: max_int,
        });
    }
    Ok(())
}

fn region_origin(size: usize) -> Result<(usize, usize)> {
    if size < REGION_ROWS || size < REGION_COLS {
        return Err(Error::InvalidArgument(format!("EI size {size} smaller than the search region")));
    }
    let row0 = (size - REGION_ROWS) / 2;
    let col0 = (size - REGION_COLS) / 2;
    if col0 + WINDOW_COLS + MAX_OFFSET > size {
        return Err(Error::InvalidArgument(format!("EI size {size} too small for the sliding window")));
    }
    Ok((row0, col0))
}

/// Horizontal offset of `b` relative to `a`.
pub fn match_offset(a: &Plane, b: &Plane) -> Result<u8> {
    let (row0, col0) = region_origin(a.width)?;
    let mut best = (0u8, f64::INFINITY);
    for s in 0..=MAX_OFFSET {
        let mut err = 0.0;
        for y in row0..row0 + REGION_ROWS {
            for x in col0..col0 + WINDOW_COLS {
                let d = a.get(x, y) - b.get(x + s, y);
                err += d * d;
            }
        }
        if err < best.1 {
            best = (s as u8, err);
        }
    }
    Ok(best.0)
}

/// Replaces cells deviating from their 3x3 median by more than the
/// threshold, sweeping in raster order until a pass changes nothing.
/// Returns the number of replacements.
pub fn median_correct(values: &mut [u8], rows: usize, cols: usize) -> usize {
    let mut changed_total = 0;
    for _ in 0..MEDIAN_MAX_PASSES {
        let mut changed = 0;
        for i in 0..rows {
            for j in 0..cols {
                let mut hood = Vec::with_capacity(9);
                for ii in i.saturating_sub(1)..(i + 2).min(rows) {
                    for jj in j.saturating_sub(1)..(j + 2).min(cols) {
                        hood.push(values[ii * cols + jj]);
                    }
                }
                hood.sort_unstable();
                let med = hood[(hood.len() - 1) / 2];
                let v = &mut values[i * cols + j];
                if (*v as i32 - med as i32).abs() > OUTLIER_THRESHOLD {
                    *v = med;
                    changed += 1;
                }
            }
        }
        changed_total += changed;
        if changed == 0 {
            break;
        }
    }
    changed_total
}

/// Offsets for every adjacent EI pair of the luma plane, outlier-corrected.
pub fn detect_parallax(grid: &EiaGrid) -> Result<ParallaxMap> {
    let (m, n) = (grid.ei_rows, grid.ei_cols);
    region_origin(grid.ei_size)?;
    let eis: Vec<Plane> = (0..m * n).map(|k| grid.ei(Channel::Y, k / n, k % n)).collect();
    let transposed: Vec<Plane> = eis.par_iter().map(Plane::transpose).collect();

    let mut col_offsets = (0..m * n.saturating_sub(1))
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / (n - 1), k % (n - 1));
            match_offset(&eis[i * n + j], &eis[i * n + j + 1])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut row_offsets = (0..m.saturating_sub(1) * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            match_offset(&transposed[i * n + j], &transposed[(i + 1) * n + j])
        })
        .collect::<Result<Vec<_>>>()?;
    median_correct(&mut col_offsets, m, n.saturating_sub(1));
    median_correct(&mut row_offsets, m.saturating_sub(1), n);
    Ok(ParallaxMap {
        rows: m,
        cols: n,
        col_offsets,
        row_offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texture(x: f64, y: f64) -> f64 {
        128.0 + 60.0 * (0.37 * x).sin() * (0.23 * y + 1.0).cos() + 30.0 * (0.11 * x * y).sin()
    }

    fn shifted(s: usize) -> (Plane, Plane) {
        let a = Plane::from_fn(75, 75, |x, y| texture(x as f64, y as f64));
        let b = Plane::from_fn(75, 75, |x, y| texture(x as f64 - s as f64, y as f64));
        (a, b)
    }

    #[test]
    fn identical_eis_have_zero_offset() {
        let (a, _) = shifted(0);
        assert_eq!(match_offset(&a, &a).unwrap(), 0);
    }

    #[test]
    fn every_shift_is_recovered() {
        for s in 0..=MAX_OFFSET {
            let (a, b) = shifted(s);
            assert_eq!(match_offset(&a, &b).unwrap() as usize, s);
        }
    }

    #[test]
    fn small_eis_rejected() {
        let p = Plane::new(40, 40);
        assert!(match_offset(&p, &p).is_err());
    }

    #[test]
    fn median_replaces_isolated_spike() {
        let mut v = vec![5u8; 25];
        v[12] = 14;
        assert_eq!(median_correct(&mut v, 5, 5), 1);
        assert!(v.iter().all(|&x| x == 5));
    }

    #[test]
    fn interval_bound() {
        let map = ParallaxMap::uniform(4, 4, 15, 3);
        assert_eq!(max_interval(75, 15), 5);
        assert!(check_interval(5, &map, 75).is_ok());
        let err = check_interval(6, &map, 75).unwrap_err();
        assert!(matches!(err, Error::IntervalTooLarge { max_interval: 5, .. }));
        assert_eq!(max_interval(75, 0), usize::MAX);
    }

    proptest! {
        #[test]
        fn median_pass_is_idempotent(v in proptest::collection::vec(0u8..=15, 30)) {
            let mut once = v.clone();
            median_correct(&mut once, 5, 6);
            let mut twice = once.clone();
            prop_assert_eq!(median_correct(&mut twice, 5, 6), 0);
            prop_assert_eq!(once, twice);
        }
    }
}
