//! Frame input and output.
//!
//! Colour inputs are reduced to luminance with the 0.299 / 0.587 / 0.114
//! weights; alpha is ignored. 8-bit samples map to `[0, 1]` by `/ 255`,
//! 16-bit samples by `/ 65535`.

use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use smokeflow_core::color::FlowColors;
use smokeflow_core::{Frame, Grid};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("cannot read image {path}: {source}")]
    Read { path: String, source: image::ImageError },
    #[error("cannot write image {path}: {source}")]
    Write { path: String, source: image::ImageError },
    #[error("image {0} is empty")]
    Empty(String),
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn luma(rgb: [f64; 3]) -> f64 {
    (LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]).clamp(0.0, 1.0)
}

/// Converts a decoded image to a frame.
pub fn frame_from_image(img: &DynamicImage) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.as_raw().iter().map(|&p| p as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.as_raw().iter().map(|&p| p as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b.pixels().map(|p| luma(p.0.map(|c| c as f64 / 255.0))).collect(),
        DynamicImage::ImageRgba8(b) => b
            .pixels()
            .map(|p| luma([p.0[0], p.0[1], p.0[2]].map(|c| c as f64 / 255.0)))
            .collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| luma(p.0.map(|c| c as f64 / 65535.0))).collect(),
        DynamicImage::ImageRgba16(b) => b
            .pixels()
            .map(|p| luma([p.0[0], p.0[1], p.0[2]].map(|c| c as f64 / 65535.0)))
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| luma(p.0.map(|c| c as f64)))
            .collect(),
    };
    Frame::from_grid_clamped(Grid::from_vec(w, h, data).expect("decoded buffer matches its dimensions"))
}

/// Reads a PNG (8 or 16 bit, gray or RGB) or a PGM (P2 or P5).
pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame, ImageError> {
    let path = path.as_ref();
    let err = |source| ImageError::Read {
        path: path.display().to_string(),
        source,
    };
    let img = ImageReader::open(path)
        .map_err(|e| err(image::ImageError::IoError(e)))?
        .with_guessed_format()
        .map_err(|e| err(image::ImageError::IoError(e)))?
        .decode()
        .map_err(err)?;
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageError::Empty(path.display().to_string()));
    }
    Ok(frame_from_image(&img))
}

fn save(path: &Path, img: DynamicImage) -> Result<(), ImageError> {
    img.save_with_format(path, ImageFormat::Png).map_err(|source| ImageError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Writes 8-bit gray samples as a PNG.
pub fn write_gray_png(path: impl AsRef<Path>, width: usize, height: usize, bytes: Vec<u8>) -> Result<(), ImageError> {
    let buf = image::GrayImage::from_raw(width as u32, height as u32, bytes).expect("buffer matches dimensions");
    save(path.as_ref(), DynamicImage::ImageLuma8(buf))
}

/// Writes a frame as an 8-bit gray PNG.
pub fn write_frame(path: impl AsRef<Path>, f: &Frame) -> Result<(), ImageError> {
    write_gray_png(path, f.width(), f.height(), f.to_u8())
}

/// Writes a colour-coded flow as an 8-bit RGB PNG.
pub fn write_colors(path: impl AsRef<Path>, c: &FlowColors) -> Result<(), ImageError> {
    let (w, h) = (c.red.width() as u32, c.red.height() as u32);
    let buf = image::RgbImage::from_raw(w, h, c.to_rgb8()).expect("buffer matches dimensions");
    save(path.as_ref(), DynamicImage::ImageRgb8(buf))
}
