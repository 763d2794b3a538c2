//! 8-bit PNG and binary PPM/PGM input/output.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::color;
use crate::error::{Error, Result};
use crate::geometry::{EiaGrid, Plane};

/// An interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<Rgb8> {
    let img = image::open(path.as_ref())?.to_rgb8();
    Ok(Rgb8 {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.into_raw(),
    })
}

pub fn write_rgb(path: impl AsRef<Path>, img: &Rgb8) -> Result<()> {
    let buf = RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .ok_or_else(|| Error::DimensionMismatch("RGB buffer size".into()))?;
    buf.save(path.as_ref())?;
    Ok(())
}

pub fn write_gray(path: impl AsRef<Path>, plane: &Plane) -> Result<()> {
    let buf = GrayImage::from_raw(plane.width as u32, plane.height as u32, plane.to_u8())
        .ok_or_else(|| Error::DimensionMismatch("gray buffer size".into()))?;
    buf.save(path.as_ref())?;
    Ok(())
}

/// Reads an RGB image and splits it into an EIA with the given geometry.
pub fn read_eia(path: impl AsRef<Path>, ei_rows: usize, ei_cols: usize, ei_size: usize) -> Result<EiaGrid> {
    let img = read_rgb(path)?;
    if img.width != ei_cols * ei_size || img.height != ei_rows * ei_size {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, geometry {}x{} EIs of {} px needs {}x{}",
            img.width,
            img.height,
            ei_rows,
            ei_cols,
            ei_size,
            ei_cols * ei_size,
            ei_rows * ei_size
        )));
    }
    color::eia_from_rgb(img.width, img.height, &img.data, ei_rows, ei_cols, ei_size)
}

pub fn eia_to_image(grid: &EiaGrid) -> Result<Rgb8> {
    Ok(Rgb8 {
        width: grid.ei_cols * grid.ei_size,
        height: grid.ei_rows * grid.ei_size,
        data: color::eia_to_rgb(grid)?,
    })
}

pub fn write_eia(path: impl AsRef<Path>, grid: &EiaGrid) -> Result<()> {
    write_rgb(path, &eia_to_image(grid)?)
}
