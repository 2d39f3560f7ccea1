//! Augmentation operations used to build APR-S views, and random chains of them.
//!
//! Only nine operations are registered. Contrast, color, brightness,
//! sharpness and Cutout are refused because they overlap the corruptions the
//! evaluation sets are built from.
//!
//! Magnitudes come from a versioned [`OpRegistry`]; the built-in one is
//! `config/ops_v1.json`. Geometric ops resample nearest-neighbour and fill
//! exposed pixels with the registry's fill value. Photometric ops work on
//! 8-bit quantized values and divide by 255 afterwards.

use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::quantize;
use crate::seed;
use crate::spectral::Image;

const DEFAULT_REGISTRY: &str = include_str!("../config/ops_v1.json");

/// Names refused by the registry.
pub const EXCLUDED_OPS: [&str; 5] = ["CONTRAST", "COLOR", "BRIGHTNESS", "SHARPNESS", "CUTOUT"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransformOp {
    Autocontrast,
    Equalize,
    Posterize,
    Rotate,
    Solarize,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl TransformOp {
    pub const ALL: [TransformOp; 9] = [
        TransformOp::Autocontrast,
        TransformOp::Equalize,
        TransformOp::Posterize,
        TransformOp::Rotate,
        TransformOp::Solarize,
        TransformOp::ShearX,
        TransformOp::ShearY,
        TransformOp::TranslateX,
        TransformOp::TranslateY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformOp::Autocontrast => "AUTOCONTRAST",
            TransformOp::Equalize => "EQUALIZE",
            TransformOp::Posterize => "POSTERIZE",
            TransformOp::Rotate => "ROTATE",
            TransformOp::Solarize => "SOLARIZE",
            TransformOp::ShearX => "SHEAR_X",
            TransformOp::ShearY => "SHEAR_Y",
            TransformOp::TranslateX => "TRANSLATE_X",
            TransformOp::TranslateY => "TRANSLATE_Y",
        }
    }
}

impl FromStr for TransformOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        if EXCLUDED_OPS.contains(&upper.as_str()) {
            return Err(Error::invalid(format!(
                "operation {upper} overlaps evaluation corruptions and is not registered"
            )));
        }
        TransformOp::ALL
            .into_iter()
            .find(|op| op.name() == upper)
            .ok_or_else(|| Error::invalid(format!("unknown operation '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformStep {
    pub op: TransformOp,
    pub level: u8,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformChain {
    pub steps: Vec<TransformStep>,
}

impl TransformChain {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// An operation with its magnitude and sign fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedOp {
    Autocontrast,
    Equalize,
    Posterize {
        bits: u8,
    },
    Rotate {
        degrees: f64,
    },
    /// Pixels at or above the threshold (0..=256, 8-bit scale) are inverted.
    Solarize {
        threshold: u16,
    },
    ShearX {
        factor: f64,
    },
    ShearY {
        factor: f64,
    },
    TranslateX {
        pixels: i64,
    },
    TranslateY {
        pixels: i64,
    },
}

/// Magnitude ramps and the registered op list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpRegistry {
    pub version: u32,
    pub max_level: u8,
    pub fill: f64,
    pub rotate_max_degrees: f64,
    pub shear_max: f64,
    pub translate_max_fraction: f64,
    pub posterize_min_bits: u8,
    pub ops: Vec<TransformOp>,
}

impl OpRegistry {
    /// The built-in v1 registry.
    pub fn builtin() -> &'static OpRegistry {
        static REGISTRY: OnceLock<OpRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            OpRegistry::from_json(DEFAULT_REGISTRY).expect("built-in op registry is valid")
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let registry: OpRegistry =
            serde_json::from_str(text).map_err(|e| Error::parse("op registry", e))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() {
            return Err(Error::invalid("registry lists no operations"));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::domain("fill value must lie in [0, 1]"));
        }
        if self.max_level == 0 {
            return Err(Error::domain("max_level must be positive"));
        }
        if !(1..=8).contains(&self.posterize_min_bits) {
            return Err(Error::domain("posterize_min_bits must lie in 1..=8"));
        }
        Ok(())
    }

    fn check_level(&self, level: u8) -> Result<()> {
        if level > self.max_level {
            return Err(Error::domain(format!(
                "level {level} outside 0..={}",
                self.max_level
            )));
        }
        Ok(())
    }

    /// Fix magnitude and sign for `op` at `level` on a `height x width` image.
    pub fn resolve(
        &self,
        op: TransformOp,
        level: u8,
        seed: u64,
        height: usize,
        width: usize,
    ) -> Result<ResolvedOp> {
        self.check_level(level)?;
        if !self.ops.contains(&op) {
            return Err(Error::invalid(format!("{} is not registered", op.name())));
        }
        let frac = level as f64 / self.max_level as f64;
        let sign = if seed::rng(seed).random::<bool>() {
            1.0
        } else {
            -1.0
        };
        Ok(match op {
            TransformOp::Autocontrast => ResolvedOp::Autocontrast,
            TransformOp::Equalize => ResolvedOp::Equalize,
            TransformOp::Posterize => {
                let drop = (frac * (8 - self.posterize_min_bits) as f64).round() as u8;
                ResolvedOp::Posterize { bits: 8 - drop }
            }
            TransformOp::Solarize => ResolvedOp::Solarize {
                threshold: 256 - (frac * 256.0).round() as u16,
            },
            TransformOp::Rotate => ResolvedOp::Rotate {
                degrees: sign * frac * self.rotate_max_degrees,
            },
            TransformOp::ShearX => ResolvedOp::ShearX {
                factor: sign * frac * self.shear_max,
            },
            TransformOp::ShearY => ResolvedOp::ShearY {
                factor: sign * frac * self.shear_max,
            },
            TransformOp::TranslateX => ResolvedOp::TranslateX {
                pixels: (sign * (frac * self.translate_max_fraction * width as f64).round()) as i64,
            },
            TransformOp::TranslateY => ResolvedOp::TranslateY {
                pixels: (sign * (frac * self.translate_max_fraction * height as f64).round())
                    as i64,
            },
        })
    }

    pub fn apply_op(&self, image: &Image, op: TransformOp, level: u8, seed: u64) -> Result<Image> {
        let resolved = self.resolve(op, level, seed, image.height(), image.width())?;
        apply_resolved(image, resolved, self.fill)
    }

    pub fn apply_chain(&self, image: &Image, chain: &TransformChain) -> Result<Image> {
        chain.steps.iter().try_fold(image.clone(), |acc, step| {
            self.apply_op(&acc, step.op, step.level, step.seed)
        })
    }

    /// Length uniform over `min_len..=max_len`, ops uniform with replacement,
    /// levels uniform over `0..=max_level`.
    pub fn sample_chain(
        &self,
        min_len: usize,
        max_len: usize,
        seed: u64,
    ) -> Result<TransformChain> {
        if min_len > max_len {
            return Err(Error::invalid(format!(
                "empty chain length range {min_len}..={max_len}"
            )));
        }
        let mut rng = seed::rng(seed);
        let len = rng.random_range(min_len..=max_len);
        let steps = (0..len)
            .map(|_| TransformStep {
                op: self.ops[rng.random_range(0..self.ops.len())],
                level: rng.random_range(0..=self.max_level),
                seed: rng.random(),
            })
            .collect();
        Ok(TransformChain { steps })
    }
}

pub fn apply_op(image: &Image, op: TransformOp, level: u8, seed: u64) -> Result<Image> {
    OpRegistry::builtin().apply_op(image, op, level, seed)
}

pub fn apply_chain(image: &Image, chain: &TransformChain) -> Result<Image> {
    OpRegistry::builtin().apply_chain(image, chain)
}

pub fn sample_chain(min_len: usize, max_len: usize, seed: u64) -> Result<TransformChain> {
    OpRegistry::builtin().sample_chain(min_len, max_len, seed)
}

pub fn apply_resolved(image: &Image, op: ResolvedOp, fill: f64) -> Result<Image> {
    let (h, w) = (image.height() as f64, image.width() as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    match op {
        ResolvedOp::Autocontrast => Ok(map_channels_u8(image, autocontrast_lut)),
        ResolvedOp::Equalize => Ok(map_channels_u8(image, equalize_lut)),
        ResolvedOp::Posterize { bits } => {
            if !(1..=8).contains(&bits) {
                return Err(Error::domain(format!(
                    "posterize bits {bits} outside 1..=8"
                )));
            }
            let mask = !((1u16 << (8 - bits)) - 1) as u8;
            Ok(map_channels_u8(image, |_| {
                let mut lut = [0u8; 256];
                for (i, l) in lut.iter_mut().enumerate() {
                    *l = i as u8 & mask;
                }
                lut
            }))
        }
        ResolvedOp::Solarize { threshold } => Ok(map_channels_u8(image, |_| {
            let mut lut = [0u8; 256];
            for (i, l) in lut.iter_mut().enumerate() {
                *l = if i as u16 >= threshold {
                    255 - i as u8
                } else {
                    i as u8
                };
            }
            lut
        })),
        ResolvedOp::Rotate { degrees } => {
            let (s, c) = (-degrees.to_radians()).sin_cos();
            Ok(resample(image, fill, |px, py| {
                let (dx, dy) = (px - cx, py - cy);
                (c * dx - s * dy + cx, s * dx + c * dy + cy)
            }))
        }
        ResolvedOp::ShearX { factor } => Ok(resample(image, fill, |px, py| {
            (px + factor * (py - cy), py)
        })),
        ResolvedOp::ShearY { factor } => Ok(resample(image, fill, |px, py| {
            (px, py + factor * (px - cx))
        })),
        ResolvedOp::TranslateX { pixels } => {
            Ok(resample(image, fill, |px, py| (px - pixels as f64, py)))
        }
        ResolvedOp::TranslateY { pixels } => {
            Ok(resample(image, fill, |px, py| (px, py - pixels as f64)))
        }
    }
}

/// Inverse-mapped nearest-neighbour resampling. `source` maps an output pixel
/// center to a continuous source coordinate (pixel `k` spans `[k, k + 1)`).
fn resample(image: &Image, fill: f64, source: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (h, w, channels) = image.shape();
    let mut out = image.as_grid().clone();
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(x as f64 + 0.5, y as f64 + 0.5);
            let (fx, fy) = (sx.floor(), sy.floor());
            let inside = fx >= 0.0 && fy >= 0.0 && fx < w as f64 && fy < h as f64;
            for c in 0..channels {
                let v = if inside {
                    *image.get(c, fy as usize, fx as usize)
                } else {
                    fill
                };
                out.set(c, y, x, v);
            }
        }
    }
    Image::from_grid(out).expect("resampling keeps values in range")
}

fn map_channels_u8(image: &Image, lut_for: impl Fn(&[u8]) -> [u8; 256]) -> Image {
    let mut out = image.as_grid().clone();
    for c in 0..image.channels() {
        let bytes: Vec<u8> = image.plane(c).iter().map(|&v| quantize(v)).collect();
        let lut = lut_for(&bytes);
        for (dst, b) in out.plane_mut(c).iter_mut().zip(&bytes) {
            *dst = lut[*b as usize] as f64 / 255.0;
        }
    }
    Image::from_grid(out).expect("lut output in range")
}

fn histogram(bytes: &[u8]) -> [usize; 256] {
    let mut h = [0usize; 256];
    for &b in bytes {
        h[b as usize] += 1;
    }
    h
}

fn identity_lut() -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (i, l) in lut.iter_mut().enumerate() {
        *l = i as u8;
    }
    lut
}

/// Stretch the channel's observed range to `[0, 255]`.
fn autocontrast_lut(bytes: &[u8]) -> [u8; 256] {
    let lo = *bytes.iter().min().unwrap_or(&0) as usize;
    let hi = *bytes.iter().max().unwrap_or(&255) as usize;
    if hi <= lo {
        return identity_lut();
    }
    let mut lut = [0u8; 256];
    for (i, l) in lut.iter_mut().enumerate() {
        *l = (i.saturating_sub(lo) * 255 / (hi - lo)).min(255) as u8;
    }
    lut
}

/// Histogram equalization with the step rule of the common imaging libraries.
fn equalize_lut(bytes: &[u8]) -> [u8; 256] {
    let h = histogram(bytes);
    let used: Vec<usize> = h.iter().copied().filter(|&n| n > 0).collect();
    if used.len() <= 1 {
        return identity_lut();
    }
    let step = (used.iter().sum::<usize>() - used[used.len() - 1]) / 255;
    if step == 0 {
        return identity_lut();
    }
    let mut lut = [0u8; 256];
    let mut n = step / 2;
    for (i, l) in lut.iter_mut().enumerate() {
        *l = (n / step).min(255) as u8;
        n += h[i];
    }
    lut
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize, c: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, c, (0..h * w * c).map(|_| rng.random()).collect()).unwrap()
    }

    fn quantized(img: &Image) -> Image {
        Image::from_grid(img.map(|&v| quantize(v) as f64 / 255.0)).unwrap()
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = random_image(1, 9, 12, 3);
        for seed in 0..4 {
            let out = apply_op(&img, TransformOp::Rotate, 0, seed).unwrap();
            assert!(out.max_abs_diff(&img).unwrap() <= 1.0 / 510.0);
        }
    }

    #[test]
    fn posterize_level_zero_keeps_eight_bits() {
        let img = quantized(&random_image(2, 8, 8, 1));
        let r = OpRegistry::builtin();
        assert_eq!(
            r.resolve(TransformOp::Posterize, 0, 9, 8, 8).unwrap(),
            ResolvedOp::Posterize { bits: 8 }
        );
        assert_eq!(apply_op(&img, TransformOp::Posterize, 0, 9).unwrap(), img);
        assert_eq!(
            r.resolve(TransformOp::Posterize, 10, 9, 8, 8).unwrap(),
            ResolvedOp::Posterize { bits: 4 }
        );
    }

    #[test]
    fn solarize_above_max_is_identity() {
        let img = quantized(&random_image(3, 8, 8, 3));
        assert_eq!(apply_op(&img, TransformOp::Solarize, 0, 0).unwrap(), img);
        let out = apply_resolved(&img, ResolvedOp::Solarize { threshold: 0 }, 0.5).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - (1.0 - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn excluded_and_unknown_ops_rejected() {
        for name in EXCLUDED_OPS {
            assert!(matches!(
                name.parse::<TransformOp>(),
                Err(Error::Invalid(_))
            ));
        }
        assert!("BLUR".parse::<TransformOp>().is_err());
        assert_eq!(
            "shear_x".parse::<TransformOp>().unwrap(),
            TransformOp::ShearX
        );
        assert!(serde_json::from_str::<TransformOp>("\"CUTOUT\"").is_err());
    }

    #[test]
    fn level_out_of_range_rejected() {
        let img = random_image(4, 4, 4, 1);
        assert!(matches!(
            apply_op(&img, TransformOp::Rotate, 11, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn chain_composition() {
        let img = random_image(5, 10, 10, 3);
        assert_eq!(apply_chain(&img, &TransformChain::empty()).unwrap(), img);
        let chain = TransformChain {
            steps: vec![TransformStep {
                op: TransformOp::Rotate,
                level: 7,
                seed: 33,
            }],
        };
        assert_eq!(
            apply_chain(&img, &chain).unwrap(),
            apply_op(&img, TransformOp::Rotate, 7, 33).unwrap()
        );
    }

    #[test]
    fn opposite_translations_restore_interior() {
        let (h, w, k) = (12usize, 12usize, 3i64);
        let mut img = Grid::filled(h, w, 1, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for y in 0..h {
            for x in k as usize..w - k as usize {
                img.set(0, y, x, rng.random());
            }
        }
        let img = Image::from_grid(img).unwrap();
        let there = apply_resolved(&img, ResolvedOp::TranslateX { pixels: k }, 0.5).unwrap();
        let back = apply_resolved(&there, ResolvedOp::TranslateX { pixels: -k }, 0.5).unwrap();
        assert!(back.max_abs_diff(&img).unwrap() <= 1.0 / 510.0);
    }

    #[test]
    fn sampled_chain_translations_cancel_when_signs_differ() {
        let r = OpRegistry::builtin();
        let plus = (0..100u64)
            .find(|&s| matches!(r.resolve(TransformOp::TranslateX, 5, s, 12, 12).unwrap(), ResolvedOp::TranslateX { pixels } if pixels > 0))
            .unwrap();
        let minus = (0..100u64)
            .find(|&s| matches!(r.resolve(TransformOp::TranslateX, 5, s, 12, 12).unwrap(), ResolvedOp::TranslateX { pixels } if pixels < 0))
            .unwrap();
        let img = Image::filled(12, 12, 1, 0.5).unwrap();
        let chain = TransformChain {
            steps: vec![
                TransformStep {
                    op: TransformOp::TranslateX,
                    level: 5,
                    seed: plus,
                },
                TransformStep {
                    op: TransformOp::TranslateX,
                    level: 5,
                    seed: minus,
                },
            ],
        };
        assert_eq!(apply_chain(&img, &chain).unwrap(), img);
    }

    #[test]
    fn every_op_yields_valid_image_and_is_deterministic() {
        let img = random_image(7, 11, 9, 3);
        for op in TransformOp::ALL {
            for level in [0u8, 3, 10] {
                let a = apply_op(&img, op, level, 99).unwrap();
                assert_eq!(a.shape(), img.shape());
                assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
                assert_eq!(a, apply_op(&img, op, level, 99).unwrap());
            }
        }
    }

    #[test]
    fn autocontrast_stretches_range() {
        let img = Image::new(1, 3, 1, vec![0.2, 0.4, 0.6]).unwrap();
        let out = apply_op(&img, TransformOp::Autocontrast, 0, 0).unwrap();
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[2], 1.0);
        let flat = Image::filled(2, 2, 1, 0.3).unwrap();
        assert_eq!(
            apply_op(&flat, TransformOp::Autocontrast, 0, 0).unwrap(),
            quantized(&flat)
        );
    }

    #[test]
    fn equalize_spreads_two_levels() {
        let img = Image::new(1, 4, 1, vec![0.0, 0.0, 1.0 / 255.0, 1.0 / 255.0]).unwrap();
        // step = (4 - 2) / 255 = 0, so nothing changes
        assert_eq!(apply_op(&img, TransformOp::Equalize, 0, 0).unwrap(), img);

        let mut data = vec![10.0 / 255.0; 300];
        data.extend(vec![20.0 / 255.0; 300]);
        let img = Image::new(1, 600, 1, data).unwrap();
        let out = apply_op(&img, TransformOp::Equalize, 0, 0).unwrap();
        // step = 300 / 255 = 1; lut[10] = 0, lut[20] = 300
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[599], 1.0);
    }

    #[test]
    fn sample_chain_contracts() {
        assert!(sample_chain(0, 0, 5).unwrap().is_empty());
        assert_eq!(
            sample_chain(1, 3, 5).unwrap(),
            sample_chain(1, 3, 5).unwrap()
        );
        assert!(matches!(sample_chain(3, 1, 5), Err(Error::Invalid(_))));
        for s in 0..50 {
            let c = sample_chain(2, 4, s).unwrap();
            assert!((2..=4).contains(&c.len()));
            assert!(c.steps.iter().all(|st| st.level <= 10));
        }
    }

    #[test]
    fn sampled_ops_are_uniform() {
        let mut counts = [0usize; 9];
        let mut total = 0usize;
        for s in 0..10_000u64 {
            for step in sample_chain(1, 3, seed::mix(1234, s)).unwrap().steps {
                counts[TransformOp::ALL.iter().position(|o| *o == step.op).unwrap()] += 1;
                total += 1;
            }
        }
        let p = 1.0 / 9.0;
        let mean = total as f64 * p;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
            chi2 += (c as f64 - mean).powi(2) / mean;
        }
        // 8 degrees of freedom, 99.9th percentile
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }

    #[test]
    fn registry_round_trips_through_json() {
        let r = OpRegistry::builtin();
        assert_eq!(r.ops.len(), 9);
        assert_eq!(&OpRegistry::from_json(&r.to_json()).unwrap(), r);
        let bad = r.to_json().replace("\"ROTATE\"", "\"COLOR\"");
        assert!(OpRegistry::from_json(&bad).is_err());
    }
}
