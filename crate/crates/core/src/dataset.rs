//! Dataset manifests and whole-dataset pipelines.
//!
//! A manifest is JSON Lines, one `{"path", "label", "split"}` object per
//! image, with paths relative to the directory holding the manifest file.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apr_batch, AprConfig, LabeledImage};
use crate::error::{Error, Result};
use crate::io::{read_image, write_image};
use crate::seed;
use crate::sensitivity::{perturb_one, perturbation_signs, FourierBasisImage};
use crate::spectral::Image;

pub const MANIFEST_NAME: &str = "manifest.jsonl";
/// Left in the output root when a pipeline aborts part way.
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const DEFAULT_BATCH_SIZE: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u32,
    #[serde(default)]
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            root: root.into(),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate manifest path '{}'",
                    e.path
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{} line {}", path.display(), n + 1), e))?;
            entries.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(root, entries)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("entry serializes"));
            s.push('\n');
        }
        s
    }

    /// Write `manifest.jsonl` into `self.root`.
    pub fn write(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_NAME);
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Same relative path with a `.png` extension.
fn png_path(rel: &str) -> String {
    let p = Path::new(rel);
    p.with_extension("png").to_string_lossy().replace('\\', "/")
}

fn clear_marker(out_root: &Path) -> Result<()> {
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let marker = out_root.join(PARTIAL_MARKER);
    match fs::remove_file(&marker) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(marker, e)),
    }
}

/// Run `body`, leaving a marker file in `out_root` if it fails.
fn with_partial_marker<T>(out_root: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    clear_marker(out_root)?;
    body().inspect_err(|err| {
        // best effort: the original error is what the caller needs to see
        let _ = fs::write(out_root.join(PARTIAL_MARKER), format!("{err}\n"));
    })
}

/// APR over consecutive batches of `batch_size` manifest entries. Batch `b`
/// runs with seed `mix(config.seed, b)`. Images land under `out_root` at their
/// original relative paths (as PNG) next to a new manifest whose labels are
/// the phase-source labels.
pub fn augment_dataset(
    manifest: &DatasetManifest,
    config: &AprConfig,
    out_root: impl AsRef<Path>,
    batch_size: usize,
) -> Result<DatasetManifest> {
    let out_root = out_root.as_ref();
    config.validate()?;
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let outputs: Vec<String> = manifest.entries.iter().map(|e| png_path(&e.path)).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = outputs.iter().find(|p| !seen.insert(p.as_str())) {
        return Err(Error::invalid(format!("two inputs map to output '{dup}'")));
    }

    with_partial_marker(out_root, || {
        let shards: Vec<Vec<ManifestEntry>> = manifest
            .entries
            .par_chunks(batch_size)
            .zip(outputs.par_chunks(batch_size))
            .enumerate()
            .map(|(b, (entries, out_paths))| {
                let batch = entries
                    .iter()
                    .map(|e| Ok(LabeledImage::new(read_image(manifest.resolve(e))?, e.label)))
                    .collect::<Result<Vec<_>>>()?;
                let batch_config = AprConfig {
                    seed: seed::mix(config.seed, b as u64),
                    ..config.clone()
                };
                let augmented = apr_batch(&batch, &batch_config)?;
                entries
                    .iter()
                    .zip(out_paths)
                    .zip(augmented)
                    .map(|((entry, rel), sample)| {
                        write_image(&sample.image, out_root.join(rel))?;
                        Ok(ManifestEntry {
                            path: rel.clone(),
                            label: sample.label,
                            split: entry.split.clone(),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let out = DatasetManifest::new(out_root, shards.into_iter().flatten().collect())?;
        out.write()?;
        Ok(out)
    })
}

/// Deterministic subset of at most `limit` entries, kept in manifest order.
pub fn sample_entries(
    manifest: &DatasetManifest,
    limit: usize,
    sample_seed: u64,
) -> Vec<ManifestEntry> {
    if manifest.len() <= limit {
        return manifest.entries.clone();
    }
    let mut rng = seed::rng(seed::mix(sample_seed, 0x5341_4d50));
    let mut picked = rand::seq::index::sample(&mut rng, manifest.len(), limit).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|k| manifest.entries[k].clone())
        .collect()
}

fn flat_name(rel: &str) -> String {
    let stem = Path::new(rel).with_extension("");
    format!("{}.png", stem.to_string_lossy().replace(['/', '\\'], "__"))
}

/// Write `out_root/<i>_<j>/<name>.png` for every basis and sampled image,
/// plus one `manifest.jsonl` covering all of them.
///
/// Every basis shares the sign sequence drawn from `sign_seed`, so image `k`
/// gets the same sign at every frequency.
pub fn perturb_manifest(
    manifest: &DatasetManifest,
    bases: &[FourierBasisImage],
    sign_seed: u64,
    sample_limit: usize,
    out_root: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let out_root = out_root.as_ref();
    if bases.is_empty() {
        return Err(Error::invalid("no basis images given"));
    }
    let entries = sample_entries(manifest, sample_limit, sign_seed);
    let names: Vec<String> = entries.iter().map(|e| flat_name(&e.path)).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::invalid(format!(
            "two inputs map to output name '{dup}'"
        )));
    }

    with_partial_marker(out_root, || {
        let images: Vec<Image> = entries
            .par_iter()
            .map(|e| read_image(manifest.resolve(e)))
            .collect::<Result<_>>()?;
        let signs = perturbation_signs(images.len(), sign_seed);
        let shards: Vec<Vec<ManifestEntry>> = bases
            .par_iter()
            .map(|basis| {
                let dir = basis.stem();
                images
                    .iter()
                    .zip(&signs)
                    .zip(entries.iter().zip(&names))
                    .map(|((img, sign), (entry, name))| {
                        let rel = format!("{dir}/{name}");
                        write_image(&perturb_one(img, basis, *sign)?, out_root.join(&rel))?;
                        Ok(ManifestEntry {
                            path: rel,
                            label: entry.label,
                            split: entry.split.clone(),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let out = DatasetManifest::new(out_root, shards.into_iter().flatten().collect())?;
        out.write()?;
        Ok(out)
    })
}

/// Load every `*.json` basis file in `dir`, sorted by file name.
pub fn read_basis_dir(dir: impl AsRef<Path>) -> Result<Vec<FourierBasisImage>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            FourierBasisImage::from_json(&text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::AprMode;
    use crate::sensitivity::fourier_basis;
    use crate::spectral::Grid;

    fn fixture(dir: &Path, n: usize) -> DatasetManifest {
        let entries = (0..n)
            .map(|k| {
                let img = Image::from_grid(
                    Grid::from_fn(8, 8, 3, |c, y, x| {
                        ((k * 7 + c * 3 + y * 5 + x) % 13) as f64 / 12.0
                    })
                    .unwrap(),
                )
                .unwrap();
                let rel = format!("class{}/img{k}.png", k % 2);
                write_image(&img, dir.join(&rel)).unwrap();
                ManifestEntry {
                    path: rel,
                    label: (k % 2) as u32,
                    split: "train".into(),
                }
            })
            .collect();
        let m = DatasetManifest::new(dir, entries).unwrap();
        m.write().unwrap();
        m
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = fixture(dir.path(), 3);
        let back = DatasetManifest::read(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m);
        let dup = vec![
            ManifestEntry {
                path: "a.png".into(),
                label: 0,
                split: String::new(),
            },
            ManifestEntry {
                path: "a.png".into(),
                label: 1,
                split: String::new(),
            },
        ];
        assert!(DatasetManifest::new(dir.path(), dup).is_err());
        std::fs::write(
            dir.path().join("bad.jsonl"),
            "{\"path\":\"x\",\"label\":-1}\n",
        )
        .unwrap();
        assert!(matches!(
            DatasetManifest::read(dir.path().join("bad.jsonl")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn zero_probability_copies_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let m = fixture(&dir.path().join("in"), 5);
        let cfg = AprConfig {
            apply_probability: 0.0,
            ..AprConfig::new(AprMode::SP, 1)
        };
        let out = augment_dataset(&m, &cfg, dir.path().join("out"), 2).unwrap();
        assert_eq!(out.len(), 5);
        for (a, b) in m.entries.iter().zip(&out.entries) {
            assert_eq!(a.label, b.label);
            assert_eq!(
                std::fs::read(m.resolve(a)).unwrap(),
                std::fs::read(out.resolve(b)).unwrap()
            );
        }
        assert!(!dir.path().join("out").join(PARTIAL_MARKER).exists());
    }

    #[test]
    fn failure_leaves_marker() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = fixture(&dir.path().join("in"), 3);
        m.entries.push(ManifestEntry {
            path: "missing.png".into(),
            label: 0,
            split: String::new(),
        });
        let err =
            augment_dataset(&m, &AprConfig::default(), dir.path().join("out"), 2).unwrap_err();
        assert!(err.is_io());
        assert!(dir.path().join("out").join(PARTIAL_MARKER).exists());
    }

    #[test]
    fn perturbed_tree_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = fixture(&dir.path().join("in"), 4);
        let bases = vec![
            fourier_basis(8, 8, 0, 0, 1.0).unwrap(),
            fourier_basis(8, 8, 2, -1, 1.0).unwrap(),
        ];
        let out = perturb_manifest(&m, &bases, 3, 3, dir.path().join("out")).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out
            .entries
            .iter()
            .all(|e| e.path.starts_with("0_0/") || e.path.starts_with("2_-1/")));
        for e in &out.entries {
            assert!(out.resolve(e).exists());
            crate::sensitivity::frequency_from_path(&e.path).unwrap();
        }
        let again = perturb_manifest(&m, &bases, 3, 3, dir.path().join("out2")).unwrap();
        assert_eq!(again.entries, out.entries);
    }

    #[test]
    fn basis_dir_loading() {
        let dir = tempfile::tempdir().unwrap();
        for (i, j) in [(1, 2), (-3, 0)] {
            let b = fourier_basis(8, 8, i, j, 15.0).unwrap();
            std::fs::write(dir.path().join(format!("{}.json", b.stem())), b.to_json()).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let loaded = read_basis_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!((loaded[0].i, loaded[0].j), (-3, 0));
    }
}
