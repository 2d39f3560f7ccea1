//! Raster file I/O and spectrum renderings.
//!
//! Images are read from 8-bit grayscale or RGB rasters as `v / 255` and
//! written as PNG with `round(v * 255)` (half rounds up), so a write/read
//! round trip moves a pixel by at most `1 / 510`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::filters::center_shift;
use crate::spectral::{Grid, Image, PolarSpectrum, RealGrid};

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| image_err(path, e))?;
    from_dynamic(&decoded).map_err(|e| match e {
        Error::UnsupportedFormat(m) => Error::UnsupportedFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Accepts 8-bit gray or RGB; anything else is unsupported.
pub fn from_dynamic(img: &DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::dim("zero-sized raster"));
    }
    let (channels, bytes): (usize, &[u8]) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.as_raw()),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{:?} pixels; expected 8-bit gray or RGB",
                other.color()
            )))
        }
    };
    let grid = Grid::from_fn(h, w, channels, |c, y, x| {
        bytes[(y * w + x) * channels + c] as f64 / 255.0
    })?;
    Image::from_grid(grid)
}

pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Interleaved 8-bit pixel bytes.
pub fn to_bytes(image: &Image) -> Vec<u8> {
    let (h, w, c) = image.shape();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize(*image.get(ch, y, x)));
            }
        }
    }
    out
}

pub fn to_dynamic(image: &Image) -> DynamicImage {
    let (h, w, c) = image.shape();
    let bytes = to_bytes(image);
    if c == 1 {
        DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer size"),
        )
    } else {
        DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer size"),
        )
    }
}

/// Write as PNG. The path's extension, if any, must be `png`.
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        None => {}
        Some(ext) if ext.eq_ignore_ascii_case("png") => {}
        Some(ext) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: only lossless .png output is written, got .{ext}",
                path.display()
            )))
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (h, w, c) = image.shape();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let color = if c == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    PngEncoder::new(BufWriter::new(file))
        .write_image(&to_bytes(image), w as u32, h as u32, color)
        .map_err(|e| image_err(path, e))
}

/// Bilinear resize through the 8-bit representation.
pub fn resize(image: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::dim("resize target must be non-empty"));
    }
    if image.height() == height && image.width() == width {
        return Ok(image.clone());
    }
    let resized = to_dynamic(image).resize_exact(
        width as u32,
        height as u32,
        image::imageops::FilterType::Triangle,
    );
    from_dynamic(&resized)
}

/// Scale each channel of `grid` linearly so its range maps onto `[0, 1]`.
pub fn normalize_for_display(grid: &RealGrid) -> Result<Image> {
    let mut out = grid.clone();
    for c in 0..grid.channels() {
        let plane = out.plane_mut(c);
        let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in plane.iter_mut() {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.5 };
        }
    }
    Image::from_grid(out)
}

/// Centered `log(1 + A)`, scaled per channel to `[0, 1]`.
pub fn render_log_amplitude(polar: &PolarSpectrum) -> Result<Image> {
    let centered = center_shift(&polar.amplitude.map(|a| a.ln_1p()));
    let mut out = centered.clone();
    for c in 0..out.channels() {
        let plane = out.plane_mut(c);
        let hi = plane.iter().copied().fold(0.0, f64::max);
        for v in plane.iter_mut() {
            *v = if hi > 0.0 { *v / hi } else { 0.0 };
        }
    }
    Image::from_grid(out)
}

/// Centered phase mapped from `(-pi, pi]` to `(0, 1]`.
pub fn render_phase(polar: &PolarSpectrum) -> Result<Image> {
    let centered = center_shift(&polar.phase);
    Image::from_grid(centered.map(|p| (p + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)))
}
