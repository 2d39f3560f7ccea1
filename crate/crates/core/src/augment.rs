//! Amplitude-phase recombination augmentation.
//!
//! - APR-P pairs each sample with a shuffled partner and keeps its own phase
//!   under the partner's amplitude.
//! - APR-S recombines two independently augmented views of one sample.
//! - APR-SP runs APR-S and then APR-P on the result.
//!
//! The label always follows the image that contributed the phase.
//!
//! Every random draw comes from a stream derived from `(config.seed, stage,
//! sample index)`, so [`apr_batch`] gives identical output whether samples are
//! processed serially or on any number of rayon workers.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectral::{
    decompose, forward_dft, inverse_dft_unclamped, recombine, Grid, Image, RealGrid,
};
use crate::transforms::{OpRegistry, TransformChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AprMode {
    P,
    S,
    SP,
}

impl AprMode {
    fn uses_single(self) -> bool {
        matches!(self, AprMode::S | AprMode::SP)
    }

    fn uses_pair(self) -> bool {
        matches!(self, AprMode::P | AprMode::SP)
    }
}

impl std::str::FromStr for AprMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(AprMode::P),
            "s" => Ok(AprMode::S),
            "sp" => Ok(AprMode::SP),
            other => Err(Error::invalid(format!("unknown APR mode '{other}'"))),
        }
    }
}

/// Random horizontal flip followed by a random crop from a zero-padded canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardAugment {
    pub flip: bool,
    pub crop_padding: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprConfig {
    pub mode: AprMode,
    /// Per-sample, per-stage chance of applying recombination.
    pub apply_probability: f64,
    pub seed: u64,
    /// Inclusive chain length range for APR-S.
    pub chain_min: usize,
    pub chain_max: usize,
    /// Runs before any recombination when set.
    pub standard: Option<StandardAugment>,
}

impl Default for AprConfig {
    fn default() -> Self {
        Self {
            mode: AprMode::P,
            apply_probability: 1.0,
            seed: 0,
            chain_min: 1,
            chain_max: 3,
            standard: None,
        }
    }
}

impl AprConfig {
    pub fn new(mode: AprMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::domain(format!(
                "apply_probability {} outside [0, 1]",
                self.apply_probability
            )));
        }
        if self.chain_min == 0 || self.chain_min > self.chain_max {
            return Err(Error::domain(format!(
                "chain length range {}..={} must be non-empty and positive",
                self.chain_min, self.chain_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: u32,
}

impl LabeledImage {
    pub fn new(image: Image, label: u32) -> Self {
        Self { image, label }
    }
}

/// `iDFT(A(x_j) * exp(i P(x_i)))` before clamping.
pub fn apr_pair_unclamped(x_i: &Image, x_j: &Image) -> Result<RealGrid> {
    x_i.ensure_same_shape(x_j)?;
    let phase = decompose(&forward_dft(x_i)).phase;
    let amplitude = decompose(&forward_dft(x_j)).amplitude;
    Ok(inverse_dft_unclamped(&recombine(&amplitude, &phase)?))
}

/// Phase of `x_i` under the amplitude of `x_j`. The result carries `x_i`'s label.
pub fn apr_pair(x_i: &Image, x_j: &Image) -> Result<Image> {
    Image::from_grid_clamped(apr_pair_unclamped(x_i, x_j)?)
}

pub fn apr_single_unclamped(
    x: &Image,
    chain_a: &TransformChain,
    chain_b: &TransformChain,
) -> Result<RealGrid> {
    let registry = OpRegistry::builtin();
    let phase_view = registry.apply_chain(x, chain_a)?;
    let amp_view = registry.apply_chain(x, chain_b)?;
    apr_pair_unclamped(&phase_view, &amp_view)
}

/// Phase from the `chain_a` view, amplitude from the `chain_b` view.
pub fn apr_single(x: &Image, chain_a: &TransformChain, chain_b: &TransformChain) -> Result<Image> {
    Image::from_grid_clamped(apr_single_unclamped(x, chain_a, chain_b)?)
}

pub fn apr_batch(batch: &[LabeledImage], config: &AprConfig) -> Result<Vec<LabeledImage>> {
    apr_batch_with_permutation(batch, config, None)
}

/// [`apr_batch`] with an optional fixed APR-P partner permutation in place of
/// the seeded shuffle.
pub fn apr_batch_with_permutation(
    batch: &[LabeledImage],
    config: &AprConfig,
    permutation: Option<&[usize]>,
) -> Result<Vec<LabeledImage>> {
    config.validate()?;
    let first = batch.first().ok_or_else(|| Error::invalid("empty batch"))?;
    if let Some(bad) = batch
        .iter()
        .find(|s| s.image.shape() != first.image.shape())
    {
        return Err(Error::dim(format!(
            "mixed image shapes in batch: {:?} vs {:?}",
            first.image.shape(),
            bad.image.shape()
        )));
    }

    let mut current: Vec<LabeledImage> = match config.standard {
        Some(std_aug) => batch
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let stream = seed::mix(seed::mix(config.seed, seed::STREAM_STANDARD), i as u64);
                Ok(LabeledImage::new(
                    standard_augment(&s.image, std_aug, stream)?,
                    s.label,
                ))
            })
            .collect::<Result<_>>()?,
        None => batch.to_vec(),
    };

    if config.mode.uses_single() {
        current = current
            .par_iter()
            .enumerate()
            .map(|(i, s)| single_stage(s, i, config))
            .collect::<Result<_>>()?;
    }

    if config.mode.uses_pair() {
        let perm = match permutation {
            Some(p) => {
                check_permutation(p, current.len())?;
                p.to_vec()
            }
            None => shuffle_permutation(current.len(), config.seed),
        };
        current = (0..current.len())
            .into_par_iter()
            .map(|i| pair_stage(&current, &perm, i, config))
            .collect::<Result<_>>()?;
    }

    Ok(current)
}

/// Seeded APR-P partner permutation for a batch of `n`.
pub fn shuffle_permutation(n: usize, config_seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed::mix(
        config_seed,
        seed::STREAM_PERMUTATION,
    )));
    perm
}

/// The two APR-S chains for sample `index`, or `None` when the sample is
/// left untouched.
pub fn single_chains(
    config: &AprConfig,
    index: usize,
) -> Result<Option<(TransformChain, TransformChain)>> {
    let mut rng = seed::rng(seed::mix(
        seed::mix(config.seed, seed::STREAM_SINGLE),
        index as u64,
    ));
    let apply = rng.random::<f64>() < config.apply_probability;
    let (seed_a, seed_b): (u64, u64) = (rng.random(), rng.random());
    if !apply {
        return Ok(None);
    }
    let registry = OpRegistry::builtin();
    Ok(Some((
        registry.sample_chain(config.chain_min, config.chain_max, seed_a)?,
        registry.sample_chain(config.chain_min, config.chain_max, seed_b)?,
    )))
}

/// Whether APR-P is applied to sample `index`.
pub fn pair_applies(config: &AprConfig, index: usize) -> bool {
    let mut rng = seed::rng(seed::mix(
        seed::mix(config.seed, seed::STREAM_PAIR),
        index as u64,
    ));
    rng.random::<f64>() < config.apply_probability
}

fn single_stage(sample: &LabeledImage, index: usize, config: &AprConfig) -> Result<LabeledImage> {
    match single_chains(config, index)? {
        Some((a, b)) => Ok(LabeledImage::new(
            apr_single(&sample.image, &a, &b)?,
            sample.label,
        )),
        None => Ok(sample.clone()),
    }
}

fn pair_stage(
    batch: &[LabeledImage],
    perm: &[usize],
    index: usize,
    config: &AprConfig,
) -> Result<LabeledImage> {
    let own = &batch[index];
    if !pair_applies(config, index) {
        return Ok(own.clone());
    }
    let partner = &batch[perm[index]];
    Ok(LabeledImage::new(
        apr_pair(&own.image, &partner.image)?,
        own.label,
    ))
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::invalid(format!(
            "permutation has {} entries for a batch of {n}",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("not a permutation of the batch indices"));
        }
    }
    Ok(())
}

/// Random horizontal flip, then a random `H x W` crop from the image padded
/// by `crop_padding` zero pixels on every side.
pub fn standard_augment(image: &Image, params: StandardAugment, stream_seed: u64) -> Result<Image> {
    let mut rng = seed::rng(stream_seed);
    let flip = params.flip && rng.random::<bool>();
    let pad = params.crop_padding;
    let dy = rng.random_range(0..=2 * pad) as isize - pad as isize;
    let dx = rng.random_range(0..=2 * pad) as isize - pad as isize;
    let (h, w, c) = image.shape();
    let grid = Grid::from_fn(h, w, c, |ch, y, x| {
        let sy = y as isize + dy;
        let sx = x as isize + dx;
        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
            return 0.0;
        }
        let sx = if flip {
            w - 1 - sx as usize
        } else {
            sx as usize
        };
        *image.get(ch, sy as usize, sx)
    })?;
    Image::from_grid(grid)
}
