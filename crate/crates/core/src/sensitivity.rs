//! Fourier-basis sensitivity analysis.
//!
//! A basis image for signed frequency `(i, j)` is the real cosine obtained by
//! inverting a spectrum with unit mass at `(i, j)` and at its conjugate
//! partner `(-i, -j)`, rescaled to a fixed L2 norm. Each basis is added to a
//! set of images with a random sign per image; an external classifier labels
//! the perturbed sets, and the per-frequency error rates fill a 33x33 heatmap
//! centered on `(0, 0)`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectral::{inverse_dft_unclamped, Grid, Image, RealGrid};

/// Largest `|i|` or `|j|` in the heatmap.
pub const MAX_FREQUENCY: i32 = 16;
/// Heatmap side length.
pub const HEATMAP_SIZE: usize = 2 * MAX_FREQUENCY as usize + 1;
pub const DEFAULT_NORM: f64 = 15.0;
pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasisImage {
    pub i: i32,
    pub j: i32,
    pub norm: f64,
    pub image: RealGrid,
}

/// On-disk form of a basis image. Values are signed, so they are kept as
/// JSON numbers rather than quantized into a raster.
#[derive(Serialize, Deserialize)]
struct BasisFile {
    i: i32,
    j: i32,
    norm: f64,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FourierBasisImage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&BasisFile {
            i: self.i,
            j: self.j,
            norm: self.norm,
            height: self.image.height(),
            width: self.image.width(),
            values: self.image.data().to_vec(),
        })
        .expect("basis serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: BasisFile = serde_json::from_str(text).map_err(|e| Error::parse("basis file", e))?;
        check_frequency(f.i, f.j)?;
        let image = Grid::new(f.height, f.width, 1, f.values)?;
        if !(image.l2_norm() > 0.0) {
            return Err(Error::domain("basis file holds a zero image"));
        }
        Ok(Self {
            i: f.i,
            j: f.j,
            norm: f.norm,
            image,
        })
    }

    /// File stem `<i>_<j>` used for basis files and perturbed-set directories.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.i, self.j)
    }
}

fn check_frequency(i: i32, j: i32) -> Result<()> {
    if i.abs() > MAX_FREQUENCY || j.abs() > MAX_FREQUENCY {
        return Err(Error::domain(format!(
            "frequency ({i}, {j}) outside [-{MAX_FREQUENCY}, {MAX_FREQUENCY}]"
        )));
    }
    Ok(())
}

pub fn fourier_basis(
    height: usize,
    width: usize,
    i: i32,
    j: i32,
    norm: f64,
) -> Result<FourierBasisImage> {
    check_frequency(i, j)?;
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::domain(format!(
            "basis norm must be positive, got {norm}"
        )));
    }
    let mut spectrum = Grid::filled(height, width, 1, Complex64::new(0.0, 0.0))?;
    let u = i.rem_euclid(height as i32) as usize;
    let v = j.rem_euclid(width as i32) as usize;
    let (pu, pv) = ((height - u) % height, (width - v) % width);
    spectrum.set(0, u, v, Complex64::new(1.0, 0.0));
    let partner = *spectrum.get(0, pu, pv) + Complex64::new(1.0, 0.0);
    spectrum.set(0, pu, pv, partner);
    let raw = inverse_dft_unclamped(&spectrum);
    let scale = norm / raw.l2_norm();
    Ok(FourierBasisImage {
        i,
        j,
        norm,
        image: raw.map(|x| x * scale),
    })
}

/// Every `(i, j)` in the heatmap range, row-major from `(-16, -16)`.
pub fn all_frequencies() -> impl Iterator<Item = (i32, i32)> {
    (-MAX_FREQUENCY..=MAX_FREQUENCY)
        .flat_map(|i| (-MAX_FREQUENCY..=MAX_FREQUENCY).map(move |j| (i, j)))
}

/// `+1` or `-1` for each of `n` images.
pub fn perturbation_signs(n: usize, sign_seed: u64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if seed::rng(seed::mix(sign_seed, k as u64)).random::<bool>() {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Add `sign * basis` to every channel of each image, then clamp.
pub fn perturb_dataset(
    images: &[Image],
    basis: &FourierBasisImage,
    sign_seed: u64,
) -> Result<Vec<Image>> {
    if !(basis.image.l2_norm() > 0.0) {
        return Err(Error::domain("basis with zero norm"));
    }
    let signs = perturbation_signs(images.len(), sign_seed);
    images
        .iter()
        .zip(signs)
        .map(|(img, sign)| perturb_one(img, basis, sign))
        .collect()
}

pub fn perturb_one(image: &Image, basis: &FourierBasisImage, sign: f64) -> Result<Image> {
    if (image.height(), image.width()) != (basis.image.height(), basis.image.width()) {
        return Err(Error::dim(format!(
            "basis is {}x{}, image is {}x{}",
            basis.image.height(),
            basis.image.width(),
            image.height(),
            image.width()
        )));
    }
    let plane = basis.image.data();
    let mut out = image.as_grid().clone();
    for c in 0..out.channels() {
        for (p, b) in out.plane_mut(c).iter_mut().zip(plane) {
            *p += sign * b;
        }
    }
    Image::from_grid_clamped(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub i: i32,
    pub j: i32,
    pub n_total: u64,
    pub n_wrong: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityHeatmap {
    rates: Vec<f64>,
}

impl SensitivityHeatmap {
    pub fn size(&self) -> (usize, usize) {
        (HEATMAP_SIZE, HEATMAP_SIZE)
    }

    pub fn rate(&self, i: i32, j: i32) -> f64 {
        let row = (i + MAX_FREQUENCY) as usize;
        let col = (j + MAX_FREQUENCY) as usize;
        self.rates[row * HEATMAP_SIZE + col]
    }

    /// Row-major rates, row index `i + 16`, column index `j + 16`.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.rates.chunks_exact(HEATMAP_SIZE)
    }

    pub fn to_image(&self) -> Image {
        Image::new(HEATMAP_SIZE, HEATMAP_SIZE, 1, self.rates.clone()).expect("rates lie in [0, 1]")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|r| r.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletenessReport {
    pub missing: Vec<(i32, i32)>,
}

impl CompletenessReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

pub fn aggregate_heatmap(
    records: &[ErrorRecord],
) -> Result<(SensitivityHeatmap, CompletenessReport)> {
    let mut rates = vec![0.0; HEATMAP_SIZE * HEATMAP_SIZE];
    let mut seen = HashSet::new();
    for r in records {
        check_frequency(r.i, r.j)?;
        if r.n_total == 0 || r.n_wrong > r.n_total {
            return Err(Error::invalid(format!(
                "inconsistent counts at ({}, {}): {} wrong of {}",
                r.i, r.j, r.n_wrong, r.n_total
            )));
        }
        if !seen.insert((r.i, r.j)) {
            return Err(Error::invalid(format!(
                "duplicate record for ({}, {})",
                r.i, r.j
            )));
        }
        let idx = (r.i + MAX_FREQUENCY) as usize * HEATMAP_SIZE + (r.j + MAX_FREQUENCY) as usize;
        rates[idx] = r.n_wrong as f64 / r.n_total as f64;
    }
    let missing = all_frequencies().filter(|f| !seen.contains(f)).collect();
    Ok((SensitivityHeatmap { rates }, CompletenessReport { missing }))
}

/// Records CSV with header `i,j,n_total,n_wrong`.
pub fn read_records<R: Read>(input: R) -> Result<Vec<ErrorRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::parse("records csv", e)))
        .collect()
}

pub fn write_records<W: Write>(records: &[ErrorRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::parse("records csv", e))?;
    }
    w.flush().map_err(|e| Error::parse("records csv", e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub path: String,
    pub true_label: u32,
    pub pred_label: u32,
}

/// Prediction CSV with header `path,true_label,pred_label`.
pub fn read_predictions<R: Read>(input: R) -> Result<Vec<PredictionRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::parse("prediction csv", e)))
        .collect()
}

/// Frequency encoded in the `<i>_<j>` directory that holds a perturbed image.
pub fn frequency_from_path(path: &str) -> Result<(i32, i32)> {
    let dir = Path::new(path)
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|d| d.to_str())
        .ok_or_else(|| Error::invalid(format!("no frequency directory in '{path}'")))?;
    let (i, j) = dir
        .split_once('_')
        .ok_or_else(|| Error::invalid(format!("directory '{dir}' is not <i>_<j>")))?;
    let parse = |s: &str| {
        s.parse::<i32>()
            .map_err(|e| Error::parse(format!("frequency directory '{dir}'"), e))
    };
    Ok((parse(i)?, parse(j)?))
}

/// Count totals and errors per frequency, in first-seen order.
pub fn records_from_predictions(rows: &[PredictionRow]) -> Result<Vec<ErrorRecord>> {
    let mut order: Vec<(i32, i32)> = Vec::new();
    let mut counts: std::collections::HashMap<(i32, i32), (u64, u64)> = Default::default();
    for row in rows {
        let f = frequency_from_path(&row.path)?;
        let entry = counts.entry(f).or_insert_with(|| {
            order.push(f);
            (0, 0)
        });
        entry.0 += 1;
        entry.1 += u64::from(row.true_label != row.pred_label);
    }
    Ok(order
        .into_iter()
        .map(|(i, j)| {
            let (n_total, n_wrong) = counts[&(i, j)];
            ErrorRecord {
                i,
                j,
                n_total,
                n_wrong,
            }
        })
        .collect())
}
