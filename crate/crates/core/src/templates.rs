//! Four-template reading of a DFT coefficient.
//!
//! For frequency `(u, v)` on an `N x N` gray image let
//! `theta(n, m) = -2 pi (u n + v m) / N`. Splitting `cos theta` and
//! `sin theta` by sign gives four non-negative templates whose contrasts
//! `sum x T+ - sum x T-` are exactly the real and imaginary parts of the
//! coefficient, and whose angle is its phase.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::spectral::{Grid, Image, RealGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub size: usize,
    pub u: usize,
    pub v: usize,
    pub real_plus: RealGrid,
    pub real_minus: RealGrid,
    pub imag_plus: RealGrid,
    pub imag_minus: RealGrid,
}

impl TemplateSet {
    /// Named grids in a fixed order, for rendering.
    pub fn named(&self) -> [(&'static str, &RealGrid); 4] {
        [
            ("real_plus", &self.real_plus),
            ("real_minus", &self.real_minus),
            ("imag_plus", &self.imag_plus),
            ("imag_minus", &self.imag_minus),
        ]
    }
}

/// Angle of the `(u, v)` basis at pixel `(n, m)`. The index product is
/// reduced mod `N` first so large frequencies keep full precision.
fn template_angle(size: usize, u: usize, v: usize, n: usize, m: usize) -> f64 {
    let k = (u * n + v * m) % size;
    -2.0 * PI * k as f64 / size as f64
}

pub fn templates_at(size: usize, u: usize, v: usize) -> Result<TemplateSet> {
    if size == 0 {
        return Err(Error::dim("template size must be positive"));
    }
    if u >= size || v >= size {
        return Err(Error::domain(format!(
            "frequency ({u}, {v}) outside 0..{size}"
        )));
    }
    let build = |f: fn(f64) -> f64| {
        Grid::from_fn(size, size, 1, |_, n, m| f(template_angle(size, u, v, n, m)))
    };
    Ok(TemplateSet {
        size,
        u,
        v,
        real_plus: build(|t| t.cos().max(0.0))?,
        real_minus: build(|t| (-t.cos()).max(0.0))?,
        imag_plus: build(|t| t.sin().max(0.0))?,
        imag_minus: build(|t| (-t.sin()).max(0.0))?,
    })
}

fn check_gray_square(image: &Image) -> Result<usize> {
    if image.channels() != 1 {
        return Err(Error::dim(format!(
            "templates take single-channel images, got {} channels",
            image.channels()
        )));
    }
    if image.height() != image.width() {
        return Err(Error::dim(format!(
            "templates take square images, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    Ok(image.height())
}

fn weighted_sum(image: &Image, template: &RealGrid) -> f64 {
    image
        .data()
        .iter()
        .zip(template.data())
        .map(|(x, t)| x * t)
        .sum()
}

/// Template contrasts `(R, I)` for frequency `(u, v)`.
pub fn contrast_scores(image: &Image, u: usize, v: usize) -> Result<(f64, f64)> {
    let size = check_gray_square(image)?;
    let t = templates_at(size, u, v)?;
    Ok(contrast_scores_with(image, &t))
}

/// Contrasts against a precomputed set; the caller guarantees matching size.
pub fn contrast_scores_with(image: &Image, t: &TemplateSet) -> (f64, f64) {
    let r = weighted_sum(image, &t.real_plus) - weighted_sum(image, &t.real_minus);
    let i = weighted_sum(image, &t.imag_plus) - weighted_sum(image, &t.imag_minus);
    (r, i)
}

/// Phase at `(u, v)` from the template contrasts, quadrant-aware.
pub fn phase_via_templates(image: &Image, u: usize, v: usize) -> Result<f64> {
    let (r, i) = contrast_scores(image, u, v)?;
    Ok(crate::spectral::phase_of(
        rustfft::num_complex::Complex64::new(r, i),
    ))
}

/// Concurrent read-mostly cache of template sets keyed by `(size, u, v)`.
#[derive(Debug, Default)]
pub struct TemplateCache {
    sets: RwLock<HashMap<(usize, usize, usize), Arc<TemplateSet>>>,
}

impl TemplateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, size: usize, u: usize, v: usize) -> Result<Arc<TemplateSet>> {
        if let Some(t) = self.sets.read().expect("cache lock").get(&(size, u, v)) {
            return Ok(Arc::clone(t));
        }
        let built = Arc::new(templates_at(size, u, v)?);
        let mut sets = self.sets.write().expect("cache lock");
        Ok(Arc::clone(sets.entry((size, u, v)).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.sets.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
