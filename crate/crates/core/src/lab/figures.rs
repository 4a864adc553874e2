use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Writes an 8-bit grayscale PNG; `image` values are clamped to `[0, 1]`.
pub fn write_png(path: &Path, image: &Array2<f64>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (h, w) = image.dim();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let pixels: Vec<u8> = image
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Panels side by side with a white gap of `gap` pixels.
pub fn side_by_side(panels: &[Array2<f64>], gap: usize) -> Array2<f64> {
    let h = panels.iter().map(|p| p.nrows()).max().unwrap_or(0);
    let w = panels.iter().map(|p| p.ncols()).sum::<usize>() + gap * panels.len().saturating_sub(1);
    let mut out = Array2::from_elem((h, w), 1.0);
    let mut x = 0;
    for p in panels {
        out.slice_mut(ndarray::s![..p.nrows(), x..x + p.ncols()]).assign(p);
        x += p.ncols() + gap;
    }
    out
}
