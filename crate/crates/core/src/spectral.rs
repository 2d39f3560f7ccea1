//! Exact 2D DFT, amplitude/phase decomposition and recombination.
//!
//! All grids are stored channel-planar and row-major: the value at channel
//! `c`, row `y`, column `x` lives at `c * H * W + y * W + x`. Spectra use the
//! unshifted layout with the DC term at `(0, 0)`.
//!
//! The forward transform is unnormalized,
//! `F(u, v) = sum_n sum_m x(n, m) exp(-2 pi i (u n / H + v m / W))`,
//! and the inverse carries the `1 / (H W)` factor.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Dense `H x W x C` grid, channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

pub type RealGrid = Grid<f64>;
pub type Spectrum = Grid<Complex64>;

impl<T: Clone> Grid<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::dim(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::dim(format!(
                "buffer holds {} values, {height}x{width}x{channels} needs {expected}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Build a grid from `f(channel, row, col)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U: Clone, V: Clone>(
        &self,
        other: &Grid<U>,
        mut f: impl FnMut(&T, &U) -> V,
    ) -> Result<Grid<V>> {
        self.ensure_same_shape(other)?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }
}

impl<T> Grid<T> {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn planes(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.plane_len())
    }

    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        debug_assert!(channel < self.channels && row < self.height && col < self.width);
        (channel * self.height + row) * self.width + col
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> &T {
        &self.data[self.index(channel, row, col)]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: T) {
        let i = self.index(channel, row, col);
        self.data[i] = value;
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

impl RealGrid {
    pub fn max_abs_diff(&self, other: &RealGrid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &RealGrid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

/// Real image with 1 or 3 channels and every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(RealGrid);

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_grid(Grid::new(height, width, channels, data)?)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_grid(Grid::filled(height, width, channels, value)?)
    }

    pub fn from_grid(grid: RealGrid) -> Result<Self> {
        check_channels(grid.channels)?;
        if let Some(v) = grid.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self(grid))
    }

    /// Clamp every value into `[0, 1]`. Non-finite values are rejected.
    pub fn from_grid_clamped(mut grid: RealGrid) -> Result<Self> {
        check_channels(grid.channels)?;
        for v in &mut grid.data {
            if !v.is_finite() {
                return Err(Error::domain("non-finite pixel value"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self(grid))
    }

    pub fn as_grid(&self) -> &RealGrid {
        &self.0
    }

    pub fn into_grid(self) -> RealGrid {
        self.0
    }
}

impl std::ops::Deref for Image {
    type Target = RealGrid;

    fn deref(&self) -> &RealGrid {
        &self.0
    }
}

impl AsRef<RealGrid> for Image {
    fn as_ref(&self) -> &RealGrid {
        &self.0
    }
}

impl AsRef<RealGrid> for RealGrid {
    fn as_ref(&self) -> &RealGrid {
        self
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 1 || channels == 3 {
        Ok(())
    } else {
        Err(Error::dim(format!(
            "images have 1 or 3 channels, got {channels}"
        )))
    }
}

/// Amplitude and phase of a spectrum. Phase lies in `(-pi, pi]` and is 0
/// wherever the amplitude is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSpectrum {
    pub amplitude: RealGrid,
    pub phase: RealGrid,
}

/// In-place 2D transform of one row-major plane. Unnormalized in both directions.
fn fft2_plane(
    planner: &mut FftPlanner<f64>,
    plane: &mut [Complex64],
    height: usize,
    width: usize,
    direction: FftDirection,
) {
    let row_fft = planner.plan_fft(width, direction);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in plane.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let col_fft = planner.plan_fft(height, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex64::default());
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = plane[y * width + x];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for (y, c) in column.iter().enumerate() {
            plane[y * width + x] = *c;
        }
    }
}

/// Per-channel unnormalized forward DFT.
pub fn forward_dft(image: impl AsRef<RealGrid>) -> Spectrum {
    let grid = image.as_ref();
    let mut spectrum = grid.map(|&v| Complex64::new(v, 0.0));
    let (h, w) = (grid.height, grid.width);
    let mut planner = FftPlanner::new();
    for c in 0..grid.channels {
        fft2_plane(
            &mut planner,
            spectrum.plane_mut(c),
            h,
            w,
            FftDirection::Forward,
        );
    }
    spectrum
}

/// Real part of the per-channel inverse DFT, without clamping.
pub fn inverse_dft_unclamped(spectrum: &Spectrum) -> RealGrid {
    let mut work = spectrum.clone();
    let (h, w) = (spectrum.height, spectrum.width);
    let scale = 1.0 / (h * w) as f64;
    let mut planner = FftPlanner::new();
    for c in 0..spectrum.channels {
        fft2_plane(&mut planner, work.plane_mut(c), h, w, FftDirection::Inverse);
    }
    work.map(|z| z.re * scale)
}

/// Inverse DFT clamped into a valid image.
pub fn inverse_dft(spectrum: &Spectrum) -> Result<Image> {
    Image::from_grid_clamped(inverse_dft_unclamped(spectrum))
}

/// Phase of a complex value in `(-pi, pi]`, 0 for the zero coefficient.
pub fn phase_of(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    // atan2 returns -pi for (-x, -0.0)
    if p <= -PI {
        PI
    } else {
        p
    }
}

pub fn decompose(spectrum: &Spectrum) -> PolarSpectrum {
    PolarSpectrum {
        amplitude: spectrum.map(|z| z.norm()),
        phase: spectrum.map(|&z| phase_of(z)),
    }
}

/// Elementwise `amplitude * exp(i * phase)`.
pub fn recombine(amplitude: &RealGrid, phase: &RealGrid) -> Result<Spectrum> {
    if let Some(a) = amplitude.data.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::domain(format!("amplitude entry {a} is negative")));
    }
    amplitude.zip_map(phase, |&a, &p| Complex64::from_polar(a, p))
}

/// Replace exact zeros with 1 so the phase at those cells survives recombination.
pub fn guard_zero_amplitude(amplitude: &RealGrid) -> RealGrid {
    amplitude.map(|&a| if a == 0.0 { 1.0 } else { a })
}

/// Circular distance between two angles, in `[0, pi]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}
