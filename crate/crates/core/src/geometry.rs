//! Elemental image arrays, key-EIA extraction, serpentine scanning and
//! PVS block partitioning.
//!
//! All indices are zero-based. A grid of `m x n` EIs of `ei_size` pixels is
//! stored as three full planes; chroma planes may be held at a reduced
//! per-EI size (`chroma_size`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Y,
    U,
    V,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Y, Channel::U, Channel::V];

    pub fn index(self) -> usize {
        match self {
            Channel::Y => 0,
            Channel::U => 1,
            Channel::V => 2,
        }
    }

    pub fn is_luma(self) -> bool {
        self == Channel::Y
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Y => "Y",
            Channel::U => "U",
            Channel::V => "V",
        }
    }
}

/// A single-channel image of gray values.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped into the plane.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Plane {
        Plane::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y))
    }

    pub fn blit(&mut self, src: &Plane, x0: usize, y0: usize) {
        for y in 0..src.height {
            let row = (y0 + y) * self.width + x0;
            self.data[row..row + src.width]
                .copy_from_slice(&src.data[y * src.width..(y + 1) * src.width]);
        }
    }

    pub fn transpose(&self) -> Plane {
        Plane::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp_gray(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    /// Values rounded and saturated to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// An `ei_rows x ei_cols` array of square elemental images.
#[derive(Clone, Debug, PartialEq)]
pub struct EiaGrid {
    pub ei_rows: usize,
    pub ei_cols: usize,
    pub ei_size: usize,
    /// Per-EI edge length of the U and V planes.
    pub chroma_size: usize,
    pub planes: [Plane; 3],
}

impl EiaGrid {
    pub fn new(
        ei_rows: usize,
        ei_cols: usize,
        ei_size: usize,
        chroma_size: usize,
        planes: [Plane; 3],
    ) -> Result<Self> {
        if ei_rows == 0 || ei_cols == 0 || ei_size == 0 || chroma_size == 0 {
            return Err(Error::InvalidArgument("empty EIA geometry".into()));
        }
        for ch in Channel::ALL {
            let s = if ch.is_luma() { ei_size } else { chroma_size };
            let p = &planes[ch.index()];
            if p.width != ei_cols * s || p.height != ei_rows * s {
                return Err(Error::DimensionMismatch(format!(
                    "{} plane is {}x{}, expected {}x{}",
                    ch.name(),
                    p.width,
                    p.height,
                    ei_cols * s,
                    ei_rows * s
                )));
            }
        }
        Ok(Self {
            ei_rows,
            ei_cols,
            ei_size,
            chroma_size,
            planes,
        })
    }

    pub fn blank(ei_rows: usize, ei_cols: usize, ei_size: usize, chroma_size: usize) -> Self {
        let y = Plane::new(ei_cols * ei_size, ei_rows * ei_size);
        let c = Plane::filled(ei_cols * chroma_size, ei_rows * chroma_size, 128.0);
        Self {
            ei_rows,
            ei_cols,
            ei_size,
            chroma_size,
            planes: [y, c.clone(), c],
        }
    }

    pub fn size_of(&self, ch: Channel) -> usize {
        if ch.is_luma() {
            self.ei_size
        } else {
            self.chroma_size
        }
    }

    pub fn plane(&self, ch: Channel) -> &Plane {
        &self.planes[ch.index()]
    }

    pub fn plane_mut(&mut self, ch: Channel) -> &mut Plane {
        &mut self.planes[ch.index()]
    }

    pub fn ei(&self, ch: Channel, row: usize, col: usize) -> Plane {
        let s = self.size_of(ch);
        self.plane(ch).crop(col * s, row * s, s, s)
    }

    pub fn set_ei(&mut self, ch: Channel, row: usize, col: usize, ei: &Plane) {
        let s = self.size_of(ch);
        debug_assert_eq!((ei.width, ei.height), (s, s));
        self.plane_mut(ch).blit(ei, col * s, row * s);
    }

    pub fn pixel_count(&self) -> usize {
        self.ei_rows * self.ei_cols * self.ei_size * self.ei_size
    }
}

/// Key EI indices along one axis: every `interval`-th index, with the last
/// index appended when the stride misses it.
pub fn key_indices(len: usize, interval: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..len).step_by(interval.max(1)).collect();
    if *out.last().unwrap() != len - 1 {
        out.push(len - 1);
    }
    out
}

/// The sub-grid of key EIs plus the indices the decoder needs to place them.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyEia {
    pub grid: EiaGrid,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

pub fn extract_key_eia(grid: &EiaGrid, interval: usize) -> Result<KeyEia> {
    if interval == 0 {
        return Err(Error::InvalidArgument("interval must be at least 1".into()));
    }
    let rows = key_indices(grid.ei_rows, interval);
    let cols = key_indices(grid.ei_cols, interval);
    let mut key = EiaGrid::blank(rows.len(), cols.len(), grid.ei_size, grid.chroma_size);
    for (ki, &r) in rows.iter().enumerate() {
        for (kj, &c) in cols.iter().enumerate() {
            for ch in Channel::ALL {
                key.set_ei(ch, ki, kj, &grid.ei(ch, r, c));
            }
        }
    }
    Ok(KeyEia {
        grid: key,
        rows,
        cols,
    })
}

/// Row-major traversal with every second row reversed.
pub fn serpentine_scan(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        if r % 2 == 0 {
            out.extend((0..cols).map(|c| (r, c)));
        } else {
            out.extend((0..cols).rev().map(|c| (r, c)));
        }
    }
    out
}

/// One pixel of a PVS: 1-based column, row and frame index, plus gray value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample4D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Sample4D {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockOrigin {
    pub gop: usize,
    pub block_row: usize,
    pub block_col: usize,
    /// Pixel offset of the block inside each EI.
    pub row0: usize,
    pub col0: usize,
}

/// Shape of one PVS block, all the decoder needs to regress it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub origin: BlockOrigin,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl BlockShape {
    pub fn sample_count(&self) -> usize {
        self.frames * self.width * self.height
    }

    /// Sample positions in scan order (frame, row, column).
    pub fn positions(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.sample_count());
        for z in 1..=self.frames {
            for y in 1..=self.height {
                for x in 1..=self.width {
                    out.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PvsBlock {
    pub shape: BlockShape,
    pub samples: Vec<Sample4D>,
}

impl PvsBlock {
    pub fn origin(&self) -> BlockOrigin {
        self.shape.origin
    }

    pub fn gray_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.w).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
}

/// Splits one axis of `size` pixels into blocks of `cb`, the last block
/// taking the remainder (75 with 19 gives 19+19+19+18).
pub fn partition_axis(size: usize, cb: usize) -> Result<Vec<(usize, usize)>> {
    if cb == 0 || cb > size {
        return Err(Error::UnsupportedPartition { size, cb });
    }
    let count = size.div_ceil(cb);
    let last = size - (count - 1) * cb;
    if 2 * last < cb {
        return Err(Error::UnsupportedPartition { size, cb });
    }
    Ok((0..count)
        .map(|i| (i * cb, if i + 1 == count { last } else { cb }))
        .collect())
}

/// Group sizes for `frames` consecutive frames in GOPs of `gop`.
pub fn gop_sizes(frames: usize, gop: usize) -> Vec<usize> {
    let gop = gop.max(1);
    (0..frames.div_ceil(gop))
        .map(|g| gop.min(frames - g * gop))
        .collect()
}

/// Block shapes for a sequence of `frames` EIs of `ei_size` pixels in
/// GOP-major, then block-row, then block-column order.
pub fn block_layout(frames: usize, ei_size: usize, cb: usize, gop: usize) -> Result<Vec<BlockShape>> {
    let parts = partition_axis(ei_size, cb)?;
    let mut out = Vec::new();
    for (g, len) in gop_sizes(frames, gop).into_iter().enumerate() {
        for (br, &(row0, height)) in parts.iter().enumerate() {
            for (bc, &(col0, width)) in parts.iter().enumerate() {
                out.push(BlockShape {
                    origin: BlockOrigin {
                        gop: g,
                        block_row: br,
                        block_col: bc,
                        row0,
                        col0,
                    },
                    frames: len,
                    width,
                    height,
                });
            }
        }
    }
    Ok(out)
}

/// Cuts a frame sequence into PVS blocks.
pub fn partition_blocks(frames: &[Plane], cb: usize, gop: usize) -> Result<Vec<PvsBlock>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    if first.width != first.height || frames.iter().any(|f| f.width != first.width || f.height != first.height) {
        return Err(Error::DimensionMismatch("PVS frames must be equal squares".into()));
    }
    let gop = gop.max(1);
    let shapes = block_layout(frames.len(), first.width, cb, gop)?;
    Ok(shapes
        .into_iter()
        .map(|shape| {
            let o = shape.origin;
            let mut samples = Vec::with_capacity(shape.sample_count());
            for z in 0..shape.frames {
                let frame = &frames[o.gop * gop + z];
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        samples.push(Sample4D {
                            x: (x + 1) as f64,
                            y: (y + 1) as f64,
                            z: (z + 1) as f64,
                            w: frame.get(o.col0 + x, o.row0 + y),
                        });
                    }
                }
            }
            PvsBlock { shape, samples }
        })
        .collect())
}

/// Writes regressed block values back into a frame sequence.
pub fn scatter_block(frames: &mut [Plane], shape: &BlockShape, gop: usize, values: &[f64]) {
    let o = shape.origin;
    let mut it = values.iter();
    for z in 0..shape.frames {
        let frame = &mut frames[o.gop * gop + z];
        for y in 0..shape.height {
            for x in 0..shape.width {
                frame.set(o.col0 + x, o.row0 + y, *it.next().unwrap());
            }
        }
    }
}

/// Operating parameters of the codec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub interval: usize,
    pub gop: usize,
    pub cb_y: usize,
    pub cb_uv: usize,
    pub lambda: f64,
    pub chroma_size: usize,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            interval: 5,
            gop: 4,
            cb_y: 19,
            cb_uv: 38,
            lambda: 1000.0,
            chroma_size: 38,
            seed: 0,
        }
    }
}

/// Named (lambda, interval) operating points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    P75,
    P150,
    P300,
    P1000,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Profile::P1000, Profile::P300, Profile::P150, Profile::P75];

    pub fn lambda(self) -> f64 {
        match self {
            Profile::P75 => 75.0,
            Profile::P150 => 150.0,
            Profile::P300 => 300.0,
            Profile::P1000 => 1000.0,
        }
    }

    pub fn interval(self) -> usize {
        match self {
            Profile::P75 => 3,
            Profile::P150 => 4,
            Profile::P300 | Profile::P1000 => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::P75 => "p75",
            Profile::P150 => "p150",
            Profile::P300 => "p300",
            Profile::P1000 => "p1000",
        }
    }

    pub fn parse(name: &str) -> Option<Profile> {
        Profile::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self) -> CodecConfig {
        CodecConfig {
            interval: self.interval(),
            lambda: self.lambda(),
            ..CodecConfig::default()
        }
    }
}
