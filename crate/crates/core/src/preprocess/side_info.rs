//! Lossless encodings of the shadow model and the parallax offsets.
//!
//! Shadow: one presence byte (bit `2q + p` for quadrant `q`, pair `p`)
//! followed by 16 little-endian f32 values `(a, b)` in quadrant, pair order;
//! absent lines are written as zeros.
//!
//! Offsets: `rows` and `cols` as u16, then the column-offset matrix and the
//! row-offset matrix, each scanned in serpentine order, first-differenced
//! (starting from 0), shifted by +15 and arithmetic coded over a 31-symbol
//! alphabet.

use crate::codec::aac::{aac_decode, aac_encode};
use crate::error::{Error, Result};
use crate::geometry::serpentine_scan;

use super::parallax::{ParallaxMap, MAX_OFFSET};
use super::shadow::{QuadrantShadow, ShadowLine, ShadowModel};

pub const SHADOW_SECTION: &str = "SHAD";
pub const OFFSET_SECTION: &str = "OFFS";
const SHADOW_BYTES: usize = 1 + 16 * 4;
const DIFF_ALPHABET: u32 = 2 * MAX_OFFSET as u32 + 1;

pub fn encode_shadow(model: &ShadowModel) -> Vec<u8> {
    let mut mask = 0u8;
    let mut body = Vec::with_capacity(64);
    for (q, quad) in model.quadrants.iter().enumerate() {
        for (p, line) in quad.pairs.iter().enumerate() {
            let (a, b) = match line {
                Some(l) => {
                    mask |= 1 << (2 * q + p);
                    (l.a as f32, l.b as f32)
                }
                None => (0.0, 0.0),
            };
            body.extend_from_slice(&a.to_le_bytes());
            body.extend_from_slice(&b.to_le_bytes());
        }
    }
    let mut out = vec![mask];
    out.extend(body);
    out
}

pub fn decode_shadow(bytes: &[u8]) -> Result<ShadowModel> {
    if bytes.len() != SHADOW_BYTES {
        return Err(Error::payload(
            SHADOW_SECTION,
            format!("expected {SHADOW_BYTES} bytes, found {}", bytes.len()),
        ));
    }
    let mask = bytes[0];
    let mut model = ShadowModel::default();
    let mut vals = bytes[1..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    for q in 0..4 {
        let mut quad = QuadrantShadow::default();
        for p in 0..2 {
            let (a, b) = (vals.next().unwrap(), vals.next().unwrap());
            if mask & (1 << (2 * q + p)) != 0 {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::payload(SHADOW_SECTION, "non-finite coefficient"));
                }
                quad.pairs[p] = Some(ShadowLine { a, b });
            } else if a != 0.0 || b != 0.0 {
                return Err(Error::payload(SHADOW_SECTION, "absent line with non-zero coefficients"));
            }
        }
        model.quadrants[q] = quad;
    }
    Ok(model)
}

fn serpentine_values(values: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    serpentine_scan(rows, cols)
        .into_iter()
        .map(|(r, c)| values[r * cols + c])
        .collect()
}

fn push_diffs(symbols: &mut Vec<(u32, u32)>, scanned: &[u8]) {
    let mut prev = 0i32;
    for &v in scanned {
        symbols.push(((v as i32 - prev + MAX_OFFSET as i32) as u32, DIFF_ALPHABET));
        prev = v as i32;
    }
}

pub fn encode_parallax(map: &ParallaxMap) -> Result<Vec<u8>> {
    if map.rows > u16::MAX as usize || map.cols > u16::MAX as usize {
        return Err(Error::InvalidArgument("EIA too large for the offset section".into()));
    }
    if map.max_offset() as usize > MAX_OFFSET {
        return Err(Error::InvalidArgument(format!("offset above {MAX_OFFSET}")));
    }
    let (m, n) = (map.rows, map.cols);
    let mut symbols = Vec::new();
    push_diffs(&mut symbols, &serpentine_values(&map.col_offsets, m, n.saturating_sub(1)));
    push_diffs(&mut symbols, &serpentine_values(&map.row_offsets, m.saturating_sub(1), n));
    let mut out = Vec::new();
    out.extend_from_slice(&(m as u16).to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    out.extend(aac_encode(&symbols)?);
    Ok(out)
}

fn undiff(symbols: &[u32], rows: usize, cols: usize) -> Result<Vec<u8>> {
    let mut out = vec![0u8; rows * cols];
    let mut prev = 0i32;
    for (&s, (r, c)) in symbols.iter().zip(serpentine_scan(rows, cols)) {
        let v = prev + s as i32 - MAX_OFFSET as i32;
        if !(0..=MAX_OFFSET as i32).contains(&v) {
            return Err(Error::payload(OFFSET_SECTION, format!("decoded offset {v} out of range")));
        }
        out[r * cols + c] = v as u8;
        prev = v;
    }
    Ok(out)
}

pub fn decode_parallax(bytes: &[u8]) -> Result<ParallaxMap> {
    if bytes.len() < 4 {
        return Err(Error::payload(OFFSET_SECTION, "missing dimensions"));
    }
    let m = u16::from_le_bytes([bytes[0], bytes[1]]) as usize;
    let n = u16::from_le_bytes([bytes[2], bytes[3]]) as usize;
    let n_col = m * n.saturating_sub(1);
    let n_row = m.saturating_sub(1) * n;
    let symbols = aac_decode(&bytes[4..], &vec![DIFF_ALPHABET; n_col + n_row]).map_err(|e| match e {
        Error::CorruptStream { offset } => Error::payload(OFFSET_SECTION, format!("stream overrun at byte {}", offset + 4)),
        other => other,
    })?;
    Ok(ParallaxMap {
        rows: m,
        cols: n,
        col_offsets: undiff(&symbols[..n_col], m, n.saturating_sub(1))?,
        row_offsets: undiff(&symbols[n_col..], m.saturating_sub(1), n)?,
    })
}
