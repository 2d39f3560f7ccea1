//! Radial frequency band masks and band-limited amplitude/phase composition.
//!
//! Distances are measured in centered coordinates: after a center shift the
//! DC term sits at `(H / 2, W / 2)`, so an unshifted index `u` maps to the
//! shifted row `(u + H / 2) mod H`. For a 32x32 grid the corner furthest from
//! the center is exactly `16 * sqrt(2)` bins away.

use crate::error::{Error, Result};
use crate::spectral::{
    decompose, forward_dft, guard_zero_amplitude, inverse_dft_unclamped, recombine, Grid, Image,
    PolarSpectrum, RealGrid,
};

/// Slack on the closed outer radius so `16 * sqrt(2)` and `sqrt(512)` agree.
const OUTER_EPS: f64 = 1e-9;

/// Boolean selector over an `H x W` grid, stored in unshifted layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    height: usize,
    width: usize,
    r_lo: f64,
    r_hi: f64,
    selected: Vec<bool>,
}

impl BandMask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radii(&self) -> (f64, f64) {
        (self.r_lo, self.r_hi)
    }

    /// Selection at unshifted frequency index `(u, v)`.
    pub fn is_selected(&self, u: usize, v: usize) -> bool {
        self.selected[u * self.width + v]
    }

    /// Selection at centered (shifted) position `(row, col)`.
    pub fn is_selected_centered(&self, row: usize, col: usize) -> bool {
        let u = (row + self.height - self.height / 2) % self.height;
        let v = (col + self.width - self.width / 2) % self.width;
        self.is_selected(u, v)
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    /// Row-major unshifted selection.
    pub fn selection(&self) -> &[bool] {
        &self.selected
    }
}

/// Distance of unshifted index `(u, v)` from the centered DC position.
pub fn centered_distance(height: usize, width: usize, u: usize, v: usize) -> f64 {
    let dy = ((u + height / 2) % height) as f64 - (height / 2) as f64;
    let dx = ((v + width / 2) % width) as f64 - (width / 2) as f64;
    dy.hypot(dx)
}

/// Largest centered distance on an `H x W` grid.
pub fn max_radius(height: usize, width: usize) -> f64 {
    ((height / 2) as f64).hypot((width / 2) as f64)
}

/// Cells with `r_lo <= d < r_hi`; the interval closes at `r_hi` when it
/// reaches the outermost radius so corner cells are captured.
pub fn band_mask(height: usize, width: usize, r_lo: f64, r_hi: f64) -> Result<BandMask> {
    if height == 0 || width == 0 {
        return Err(Error::dim("band mask needs a non-empty grid"));
    }
    if !(r_lo >= 0.0) || !(r_hi > r_lo) {
        return Err(Error::domain(format!(
            "band radii must satisfy 0 <= r_lo < r_hi, got [{r_lo}, {r_hi}]"
        )));
    }
    let closed = r_hi + OUTER_EPS >= max_radius(height, width);
    let mut selected = Vec::with_capacity(height * width);
    for u in 0..height {
        for v in 0..width {
            let d = centered_distance(height, width, u, v);
            let below_hi = if closed {
                d <= r_hi + OUTER_EPS
            } else {
                d < r_hi
            };
            selected.push(d >= r_lo && below_hi);
        }
    }
    Ok(BandMask {
        height,
        width,
        r_lo,
        r_hi,
        selected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Low,
    Intermediate,
    High,
    Full,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Full, Band::Low, Band::Intermediate, Band::High];

    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::Intermediate => "intermediate",
            Band::High => "high",
            Band::Full => "full",
        }
    }

    /// Radii for an `H x W` grid. With `m = min(H, W)` the bands are
    /// `[0, m/4)`, `[m/4, m/2)` and `[m/2, r_max]`; at 32x32 that is
    /// `[0, 8)`, `[8, 16)`, `[16, 16 sqrt 2]`.
    pub fn radii(self, height: usize, width: usize) -> (f64, f64) {
        let m = height.min(width) as f64;
        let r_max = max_radius(height, width);
        match self {
            Band::Low => (0.0, m / 4.0),
            Band::Intermediate => (m / 4.0, m / 2.0),
            Band::High => (m / 2.0, r_max),
            Band::Full => (0.0, r_max),
        }
    }

    pub fn mask(self, height: usize, width: usize) -> Result<BandMask> {
        let (lo, hi) = self.radii(height, width);
        band_mask(height, width, lo, hi)
    }
}

impl std::str::FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "l" => Ok(Band::Low),
            "intermediate" | "mid" | "i" => Ok(Band::Intermediate),
            "high" | "h" => Ok(Band::High),
            "full" | "f" => Ok(Band::Full),
            other => Err(Error::invalid(format!("unknown band '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumPart {
    Amplitude,
    Phase,
}

/// Keep `part` inside the mask and zero it elsewhere, on every channel.
pub fn extract_band(
    polar: &PolarSpectrum,
    mask: &BandMask,
    part: SpectrumPart,
) -> Result<RealGrid> {
    let source = match part {
        SpectrumPart::Amplitude => &polar.amplitude,
        SpectrumPart::Phase => &polar.phase,
    };
    apply_mask(source, mask)
}

/// Zero every cell outside the mask.
pub fn apply_mask(grid: &RealGrid, mask: &BandMask) -> Result<RealGrid> {
    if (grid.height(), grid.width()) != (mask.height, mask.width) {
        return Err(Error::dim(format!(
            "mask is {}x{}, grid is {}x{}",
            mask.height,
            mask.width,
            grid.height(),
            grid.width()
        )));
    }
    let plane = grid.plane_len();
    let mut out = grid.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if !mask.selected[i % plane] {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Unclamped band composition: guarded band-limited amplitude of `amp_src`
/// with band-limited phase of `phase_src`.
pub fn compose_band_pair_unclamped(
    amp_src: &Image,
    amp_band: Band,
    phase_src: &Image,
    phase_band: Band,
) -> Result<RealGrid> {
    amp_src.ensure_same_shape(phase_src)?;
    let (h, w) = (amp_src.height(), amp_src.width());
    let amp_polar = decompose(&forward_dft(amp_src));
    let phase_polar = decompose(&forward_dft(phase_src));
    let amplitude = guard_zero_amplitude(&extract_band(
        &amp_polar,
        &amp_band.mask(h, w)?,
        SpectrumPart::Amplitude,
    )?);
    let phase = extract_band(&phase_polar, &phase_band.mask(h, w)?, SpectrumPart::Phase)?;
    Ok(inverse_dft_unclamped(&recombine(&amplitude, &phase)?))
}

pub fn compose_band_pair(
    amp_src: &Image,
    amp_band: Band,
    phase_src: &Image,
    phase_band: Band,
) -> Result<Image> {
    Image::from_grid_clamped(compose_band_pair_unclamped(
        amp_src, amp_band, phase_src, phase_band,
    )?)
}

/// Reorder a grid so the DC term moves from `(0, 0)` to `(H / 2, W / 2)`.
pub fn center_shift<T: Clone>(grid: &Grid<T>) -> Grid<T> {
    let (h, w, c) = grid.shape();
    Grid::from_fn(h, w, c, |ch, row, col| {
        let u = (row + h - h / 2) % h;
        let v = (col + w - w / 2) % w;
        grid.get(ch, u, v).clone()
    })
    .expect("shape preserved")
}

/// Inverse of [`center_shift`].
pub fn uncenter_shift<T: Clone>(grid: &Grid<T>) -> Grid<T> {
    let (h, w, c) = grid.shape();
    Grid::from_fn(h, w, c, |ch, u, v| {
        grid.get(ch, (u + h / 2) % h, (v + w / 2) % w).clone()
    })
    .expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{recombine, Spectrum};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;
    use std::f64::consts::PI;

    /// Independent scan: walk centered coordinates directly.
    fn brute_force_counts(n: usize, bands: &[(f64, f64, bool)]) -> Vec<usize> {
        let c = (n / 2) as f64;
        bands
            .iter()
            .map(|&(lo, hi, closed)| {
                let mut count = 0;
                for row in 0..n {
                    for col in 0..n {
                        let d2 = (row as f64 - c).powi(2) + (col as f64 - c).powi(2);
                        let inside_hi = if closed {
                            d2 <= hi * hi + 1e-9
                        } else {
                            d2 < hi * hi
                        };
                        if d2 >= lo * lo && inside_hi {
                            count += 1;
                        }
                    }
                }
                count
            })
            .collect()
    }

    #[test]
    fn dc_sits_in_low_band() {
        let low = band_mask(32, 32, 0.0, 8.0).unwrap();
        assert!(low.is_selected(0, 0));
        assert!(low.is_selected_centered(16, 16));
    }

    #[test]
    fn corners_sit_in_high_band() {
        let high = band_mask(32, 32, 16.0, 16.0 * 2f64.sqrt()).unwrap();
        for (r, c) in [(0, 0), (0, 31), (31, 0), (31, 31)] {
            assert!(high.is_selected_centered(r, c), "corner ({r},{c})");
        }
        assert!((centered_distance(32, 32, 16, 16) - 16.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn appendix_bands_partition_32() {
        let masks: Vec<_> = [Band::Low, Band::Intermediate, Band::High]
            .iter()
            .map(|b| b.mask(32, 32).unwrap())
            .collect();
        let counts: Vec<usize> = masks.iter().map(BandMask::count).collect();
        let r = 16.0 * 2f64.sqrt();
        let expected = brute_force_counts(
            32,
            &[(0.0, 8.0, false), (8.0, 16.0, false), (16.0, r, true)],
        );
        assert_eq!(counts, expected);
        assert_eq!(counts.iter().sum::<usize>(), 1024);
        for i in 0..1024 {
            let hits = masks.iter().filter(|m| m.selection()[i]).count();
            assert_eq!(hits, 1, "cell {i}");
        }
        assert_eq!(Band::Full.mask(32, 32).unwrap().count(), 1024);
    }

    #[test]
    fn band_mask_rejects_inverted_radii() {
        assert!(matches!(band_mask(8, 8, 4.0, 4.0), Err(Error::Domain(_))));
        assert!(matches!(band_mask(8, 8, -1.0, 4.0), Err(Error::Domain(_))));
    }

    #[test]
    fn radial_counts_are_monotone() {
        let mut prev = 0;
        for step in 1..=50 {
            let r = step as f64 * 0.5;
            let n = band_mask(16, 12, 0.0, r).unwrap().count();
            assert!(n >= prev);
            prev = n;
        }
        assert_eq!(prev, 16 * 12);
    }

    #[test]
    fn shift_round_trips() {
        let g = Grid::from_fn(5, 6, 2, |c, y, x| (c * 100 + y * 10 + x) as f64).unwrap();
        assert_eq!(uncenter_shift(&center_shift(&g)), g);
        assert_eq!(*center_shift(&g).get(0, 2, 3), 0.0);
    }

    fn random_image(seed: u64, h: usize, w: usize, c: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, c, (0..h * w * c).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn full_extraction_is_identity_and_complements_sum() {
        let img = random_image(3, 8, 8, 3);
        let polar = decompose(&forward_dft(&img));
        let full = Band::Full.mask(8, 8).unwrap();
        for part in [SpectrumPart::Amplitude, SpectrumPart::Phase] {
            let source = if part == SpectrumPart::Amplitude {
                &polar.amplitude
            } else {
                &polar.phase
            };
            assert_eq!(&extract_band(&polar, &full, part).unwrap(), source);

            let lo = band_mask(8, 8, 0.0, 2.5).unwrap();
            let hi = band_mask(8, 8, 2.5, max_radius(8, 8)).unwrap();
            let a = extract_band(&polar, &lo, part).unwrap();
            let b = extract_band(&polar, &hi, part).unwrap();
            let sum = a.zip_map(&b, |x, y| x + y).unwrap();
            assert_eq!(&sum, source);
        }
    }

    #[test]
    fn low_band_of_constant_keeps_only_dc() {
        let img = Image::filled(32, 32, 1, 0.4).unwrap();
        let polar = decompose(&forward_dft(&img));
        let low = extract_band(
            &polar,
            &Band::Low.mask(32, 32).unwrap(),
            SpectrumPart::Amplitude,
        )
        .unwrap();
        assert!((low.data()[0] - 0.4 * 1024.0).abs() < 1e-9);
        assert!(low.data()[1..].iter().all(|a| a.abs() < 1e-9));
    }

    #[test]
    fn extract_rejects_mismatched_mask() {
        let polar = decompose(&forward_dft(random_image(1, 8, 8, 1)));
        let mask = band_mask(4, 4, 0.0, 1.0).unwrap();
        assert!(matches!(
            extract_band(&polar, &mask, SpectrumPart::Phase),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn full_full_self_composition_is_identity() {
        let img = random_image(5, 16, 16, 3);
        let out = compose_band_pair_unclamped(&img, Band::Full, &img, Band::Full).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-9);
    }

    #[test]
    fn guarded_amplitude_never_zero() {
        let img = random_image(9, 8, 8, 1);
        let polar = decompose(&forward_dft(&img));
        let low = extract_band(
            &polar,
            &Band::Low.mask(8, 8).unwrap(),
            SpectrumPart::Amplitude,
        )
        .unwrap();
        assert!(low.data().contains(&0.0));
        assert!(guard_zero_amplitude(&low).data().iter().all(|a| *a > 0.0));
    }

    /// Oracle pipeline built from naive DFTs and explicit per-cell masking.
    #[test]
    fn low_low_matches_primitive_pipeline() {
        let img = random_image(21, 8, 8, 1);
        let n = 8usize;
        let naive = |x: &RealGrid| -> Spectrum {
            Grid::from_fn(n, n, 1, |_, u, v| {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        let t = -2.0 * PI * ((u * a + v * b) % n) as f64 / n as f64;
                        acc += Complex64::from_polar(*x.get(0, a, b), t);
                    }
                }
                acc
            })
            .unwrap()
        };
        let f = naive(img.as_grid());
        let in_low = |u: usize, v: usize| {
            let du = if u < n / 2 {
                u as f64
            } else {
                u as f64 - n as f64
            };
            let dv = if v < n / 2 {
                v as f64
            } else {
                v as f64 - n as f64
            };
            du.hypot(dv) < 2.0
        };
        let amp = Grid::from_fn(n, n, 1, |_, u, v| {
            let a = if in_low(u, v) {
                f.get(0, u, v).norm()
            } else {
                0.0
            };
            if a == 0.0 {
                1.0
            } else {
                a
            }
        })
        .unwrap();
        let phase = Grid::from_fn(n, n, 1, |_, u, v| {
            if in_low(u, v) {
                f.get(0, u, v).arg()
            } else {
                0.0
            }
        })
        .unwrap();
        let spec = recombine(&amp, &phase).unwrap();
        let expected = Grid::from_fn(n, n, 1, |_, a, b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..n {
                for v in 0..n {
                    let t = 2.0 * PI * ((u * a + v * b) % n) as f64 / n as f64;
                    acc += spec.get(0, u, v) * Complex64::from_polar(1.0, t);
                }
            }
            acc.re / (n * n) as f64
        })
        .unwrap();

        let got = compose_band_pair_unclamped(&img, Band::Low, &img, Band::Low).unwrap();
        assert!(got.max_abs_diff(&expected).unwrap() < 1e-9);
        let clamped = compose_band_pair(&img, Band::Low, &img, Band::Low).unwrap();
        let expected_clamped = expected.map(|v| v.clamp(0.0, 1.0));
        assert!(clamped.max_abs_diff(&expected_clamped).unwrap() < 1e-9);
    }

    proptest! {
        #[test]
        fn extract_is_linear(
            a in proptest::collection::vec(0.0f64..10.0, 36),
            b in proptest::collection::vec(0.0f64..10.0, 36),
            r in 0.5f64..5.0,
        ) {
            let ga = Grid::new(6, 6, 1, a).unwrap();
            let gb = Grid::new(6, 6, 1, b).unwrap();
            let mask = band_mask(6, 6, 0.0, r).unwrap();
            let sum = ga.zip_map(&gb, |x, y| x + y).unwrap();
            let lhs = apply_mask(&sum, &mask).unwrap();
            let rhs = apply_mask(&ga, &mask).unwrap()
                .zip_map(&apply_mask(&gb, &mask).unwrap(), |x, y| x + y).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }

        #[test]
        fn contiguous_bands_partition(h in 2usize..20, w in 2usize..20, cuts in proptest::collection::vec(0.1f64..1.0, 1..4)) {
            let r_max = max_radius(h, w);
            let mut edges: Vec<f64> = cuts.iter().map(|c| c * r_max).collect();
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            edges.insert(0, 0.0);
            if *edges.last().unwrap() < r_max { edges.push(r_max); }
            let masks: Vec<_> = edges.windows(2).filter(|e| e[1] > e[0])
                .map(|e| band_mask(h, w, e[0], e[1]).unwrap()).collect();
            for i in 0..h * w {
                prop_assert_eq!(masks.iter().filter(|m| m.selection()[i]).count(), 1);
            }
        }
    }
}
