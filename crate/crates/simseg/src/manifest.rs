//! Dataset manifests: ordered lists of image/mask pairs with domain
//! tags and the scene parameters that produced them.
//!
//! On disk a manifest is JSON Lines — one row per sample with keys
//! `{image, mask, domain, params, seed}` — plus a `*.meta.json` sidecar
//! carrying the dataset-level seed and creation metadata. Paths are
//! relative to the manifest's directory.

use std::collections::HashSet;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::atomic_write;
use crate::scenegen::SceneParams;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("metadata: {0}")]
    Meta(serde_json::Error),
    #[error("unsupported manifest format version {0}")]
    FormatVersion(u32),
    #[error("row {row}: referenced file missing: {path}")]
    MissingFile { row: usize, path: String },
    #[error("row {row}: image is {image_w}x{image_h} but mask is {mask_w}x{mask_h}")]
    DimensionMismatch {
        row: usize,
        image_w: u32,
        image_h: u32,
        mask_w: u32,
        mask_h: u32,
    },
    #[error("row {row}: duplicate image path {path}")]
    DuplicatePath { row: usize, path: String },
    #[error("row {row}: unsafe path {path} (must be relative, no `..`)")]
    UnsafePath { row: usize, path: String },
    #[error("row {row}: cannot read {path}: {source}")]
    Unreadable {
        row: usize,
        path: String,
        source: image::ImageError,
    },
}

/// Which domain a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
    #[serde(rename = "REALISTIC")]
    Realistic,
    #[serde(rename = "ADAPTED")]
    Adapted,
}

/// One sample: paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub image: String,
    pub mask: String,
    pub domain: DomainTag,
    pub params: Option<SceneParams>,
    pub seed: u64,
}

/// Dataset-level metadata, stored in the `*.meta.json` sidecar.
/// Deliberately free of wall-clock fields: rebuilding with the same
/// seed must reproduce the files byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMeta {
    pub format_version: u32,
    pub dataset_seed: u64,
    pub image_size: u32,
    pub description: String,
}

impl ManifestMeta {
    pub const FORMAT_VERSION: u32 = 1;
}

impl Default for ManifestMeta {
    fn default() -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            dataset_seed: 0,
            image_size: 0,
            description: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub meta: ManifestMeta,
    base_dir: PathBuf,
}

fn meta_path(manifest_path: &Path) -> PathBuf {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".to_string());
    manifest_path.with_file_name(format!("{stem}.meta.json"))
}

fn relative_path_ok(p: &str) -> bool {
    let path = Path::new(p);
    !p.is_empty()
        && path.components().all(|c| matches!(c, Component::Normal(_)))
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>, meta: ManifestMeta, base_dir: PathBuf) -> Self {
        Self {
            rows,
            meta,
            base_dir,
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Absolute path of a row's image file.
    pub fn image_path(&self, row: &ManifestRow) -> PathBuf {
        self.base_dir.join(&row.image)
    }

    /// Absolute path of a row's mask file.
    pub fn mask_path(&self, row: &ManifestRow) -> PathBuf {
        self.base_dir.join(&row.mask)
    }

    /// Parse manifest rows from JSON Lines text. Blank lines are
    /// ignored; anything else must be a complete row object.
    pub fn parse_rows(text: &str) -> Result<Vec<ManifestRow>, ManifestError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestRow =
                serde_json::from_str(line).map_err(|source| ManifestError::Parse {
                    line: i + 1,
                    source,
                })?;
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let io_err = |p: &Path, source| ManifestError::Io {
            path: p.display().to_string(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let rows = Self::parse_rows(&text)?;
        let mp = meta_path(path);
        let meta = if mp.exists() {
            let meta_text = std::fs::read_to_string(&mp).map_err(|e| io_err(&mp, e))?;
            let meta: ManifestMeta =
                serde_json::from_str(&meta_text).map_err(ManifestError::Meta)?;
            if meta.format_version != ManifestMeta::FORMAT_VERSION {
                return Err(ManifestError::FormatVersion(meta.format_version));
            }
            meta
        } else {
            ManifestMeta::default()
        };
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            rows,
            meta,
            base_dir,
        })
    }

    /// Serialize to JSON Lines plus the metadata sidecar, atomically.
    /// The row file is renamed into place last, so a crashed build never
    /// leaves a readable-but-partial manifest.
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let io_err = |p: &Path, source| ManifestError::Io {
            path: p.display().to_string(),
            source,
        };
        let mut body = String::new();
        for row in &self.rows {
            body.push_str(&serde_json::to_string(row).map_err(ManifestError::Meta)?);
            body.push('\n');
        }
        let meta = serde_json::to_vec_pretty(&self.meta).map_err(ManifestError::Meta)?;
        let mp = meta_path(path);
        atomic_write(&mp, &meta).map_err(|e| io_err(&mp, e))?;
        atomic_write(path, body.as_bytes()).map_err(|e| io_err(path, e))?;
        Ok(())
    }

    /// Check the manifest's invariants: safe relative paths, no
    /// duplicate image paths, every referenced file present, and image
    /// and mask dimensions equal row-wise.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            for p in [&row.image, &row.mask] {
                if !relative_path_ok(p) {
                    return Err(ManifestError::UnsafePath {
                        row: i,
                        path: p.clone(),
                    });
                }
            }
            if !seen.insert(row.image.clone()) {
                return Err(ManifestError::DuplicatePath {
                    row: i,
                    path: row.image.clone(),
                });
            }
            let image_path = self.image_path(row);
            let mask_path = self.mask_path(row);
            for p in [&image_path, &mask_path] {
                if !p.exists() {
                    return Err(ManifestError::MissingFile {
                        row: i,
                        path: p.display().to_string(),
                    });
                }
            }
            let dims = |p: &Path| {
                image::image_dimensions(p).map_err(|source| ManifestError::Unreadable {
                    row: i,
                    path: p.display().to_string(),
                    source,
                })
            };
            let (iw, ih) = dims(&image_path)?;
            let (mw, mh) = dims(&mask_path)?;
            if (iw, ih) != (mw, mh) {
                return Err(ManifestError::DimensionMismatch {
                    row: i,
                    image_w: iw,
                    image_h: ih,
                    mask_w: mw,
                    mask_h: mh,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{save_image, save_mask, BinaryMask, RasterImage};

    fn sample_row(i: usize) -> ManifestRow {
        ManifestRow {
            image: format!("images/{i:05}.png"),
            mask: format!("masks/{i:05}.png"),
            domain: DomainTag::Synthetic,
            params: None,
            seed: i as u64,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let rows = vec![sample_row(0), sample_row(1)];
        let manifest = DatasetManifest::new(rows.clone(), ManifestMeta::default(), ".".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        manifest.save(&path).unwrap();
        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(loaded.rows, rows);
        assert_eq!(loaded.meta, ManifestMeta::default());
    }

    #[test]
    fn parse_rejects_bad_line_with_number() {
        let text = "{\"image\":\"a.png\",\"mask\":\"b.png\",\"domain\":\"SYNTHETIC\",\"params\":null,\"seed\":1}\nnot json\n";
        let err = DatasetManifest::parse_rows(text).unwrap_err();
        assert!(matches!(err, ManifestError::Parse { line: 2, .. }));
    }

    #[test]
    fn parse_rejects_unknown_keys() {
        let text = "{\"image\":\"a.png\",\"mask\":\"b.png\",\"domain\":\"SYNTHETIC\",\"params\":null,\"seed\":1,\"extra\":2}\n";
        assert!(DatasetManifest::parse_rows(text).is_err());
    }

    #[test]
    fn validate_full_pass_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        let img = RasterImage::filled(8, 8, [1, 2, 3]);
        let mask = BinaryMask::filled(8, 8, true);
        save_image(&img, &dir.path().join("images/00000.png")).unwrap();
        save_mask(&mask, &dir.path().join("masks/00000.png")).unwrap();

        let good = DatasetManifest::new(
            vec![sample_row(0)],
            ManifestMeta::default(),
            dir.path().to_path_buf(),
        );
        good.validate().unwrap();

        let missing = DatasetManifest::new(
            vec![sample_row(0), sample_row(1)],
            ManifestMeta::default(),
            dir.path().to_path_buf(),
        );
        assert!(matches!(
            missing.validate(),
            Err(ManifestError::MissingFile { row: 1, .. })
        ));

        let dup = DatasetManifest::new(
            vec![sample_row(0), sample_row(0)],
            ManifestMeta::default(),
            dir.path().to_path_buf(),
        );
        assert!(matches!(
            dup.validate(),
            Err(ManifestError::DuplicatePath { row: 1, .. })
        ));

        let mut evil = sample_row(0);
        evil.mask = "../../etc/passwd".into();
        let unsafe_manifest = DatasetManifest::new(
            vec![evil],
            ManifestMeta::default(),
            dir.path().to_path_buf(),
        );
        assert!(matches!(
            unsafe_manifest.validate(),
            Err(ManifestError::UnsafePath { .. })
        ));
    }

    #[test]
    fn validate_catches_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        save_image(
            &RasterImage::filled(8, 8, [0; 3]),
            &dir.path().join("images/00000.png"),
        )
        .unwrap();
        save_mask(
            &BinaryMask::filled(4, 8, false),
            &dir.path().join("masks/00000.png"),
        )
        .unwrap();
        let m = DatasetManifest::new(
            vec![sample_row(0)],
            ManifestMeta::default(),
            dir.path().to_path_buf(),
        );
        assert!(matches!(
            m.validate(),
            Err(ManifestError::DimensionMismatch { row: 0, .. })
        ));
    }
}
