//! IDX (MNIST-family) ingestion.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Images with pixels in `[0, 1]`, one per row, and their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor2,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    pub sources: Vec<SourceFile>,
}

impl Dataset {
    pub fn new(images: Tensor2, labels: Vec<u8>, rows: usize, cols: usize) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.nrows(),
                labels: labels.len(),
            });
        }
        if images.ncols() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels per image for {rows}x{cols}",
                images.ncols()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::LabelOutOfRange {
                label: l as usize,
                classes: CLASSES,
            });
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::ShapeMismatch("pixel outside [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            rows,
            cols,
            sources: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rows: self.rows,
            cols: self.cols,
            sources: self.sources.clone(),
        }
    }

    /// Positions of samples whose label is in `classes`.
    pub fn positions_of(&self, classes: &[u8]) -> Vec<usize> {
        (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect()
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends before byte {}", at + 4),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an image file: magic, count, rows, cols, then `u8` pixels.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(Tensor2, usize, usize)> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let body = &bytes[16..];
    let needed = count * rows * cols;
    if body.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} pixel bytes, header promises {needed}", body.len()),
        });
    }
    let images = Array2::from_shape_vec(
        (count, rows * cols),
        body[..needed].iter().map(|&b| b as f64 / 255.0).collect(),
    )
    .expect("pixel count checked");
    Ok((images, rows, cols))
}

/// Parses a label file: magic, count, then `u8` labels.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} label bytes, header promises {count}", body.len()),
        });
    }
    Ok(body[..count].to_vec())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;
    let (images, rows, cols) = parse_idx_images(&image_bytes, images_path)?;
    let labels = parse_idx_labels(&label_bytes, labels_path)?;
    let mut data = Dataset::new(images, labels, rows, cols)?;
    data.sources = vec![
        SourceFile {
            path: images_path.to_path_buf(),
            sha256: sha256_hex(&image_bytes),
        },
        SourceFile {
            path: labels_path.to_path_buf(),
            sha256: sha256_hex(&label_bytes),
        },
    ];
    Ok(data)
}

/// Fails unless every source file whose name appears in `expected`
/// (`file name → sha256`) hashes to the listed value.
pub fn verify_checksums(data: &Dataset, expected: &[(String, String)]) -> Result<()> {
    for src in &data.sources {
        let name = src.path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some((_, want)) = expected.iter().find(|(n, _)| n == name) {
            if !want.eq_ignore_ascii_case(&src.sha256) {
                return Err(Error::Checksum {
                    path: src.path.clone(),
                    expected: want.clone(),
                    found: src.sha256.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Train and test splits from the standard file names inside `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_idx(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))?;
    let test = load_idx(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS))?;
    Ok((train, test))
}

pub fn encode_idx_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn parses_small_files() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..12).map(|v| (v * 20) as u8).collect();
        let img = write(dir.path(), "img", &encode_idx_images(&pixels, 3, 2, 2));
        let lab = write(dir.path(), "lab", &encode_idx_labels(&[7, 0, 9]));
        let data = load_idx(&img, &lab).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!((data.rows, data.cols), (2, 2));
        assert_eq!(data.labels, vec![7, 0, 9]);
        assert_eq!(data.images[[1, 0]], 80.0 / 255.0);
        assert_eq!(data.sources.len(), 2);
        assert_eq!(data.sources[1].sha256, sha256_hex(&encode_idx_labels(&[7, 0, 9])));
    }

    #[test]
    fn wrong_magic_names_the_value() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = encode_idx_images(&[0; 4], 1, 2, 2);
        bytes[3] = 0x01;
        let img = write(dir.path(), "img", &bytes);
        let lab = write(dir.path(), "lab", &encode_idx_labels(&[1]));
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::BadMagic { found: 0x801, .. }));
        assert!(err.to_string().contains("0x00000801"));
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &encode_idx_images(&[0; 8], 2, 2, 2));
        let lab = write(dir.path(), "lab", &encode_idx_labels(&[1, 2, 3]));
        assert!(matches!(
            load_idx(&img, &lab),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
        let short = write(dir.path(), "short", &encode_idx_images(&[0; 7], 2, 2, 2));
        assert!(matches!(load_idx(&short, &lab), Err(Error::Truncated { .. })));
        let stub = write(dir.path(), "stub", &[0, 0, 8]);
        assert!(matches!(load_idx(&stub, &lab), Err(Error::Truncated { .. })));
        let lab_short = write(dir.path(), "lab_short", &encode_idx_labels(&[1, 2])[..9]);
        assert!(matches!(load_idx(&img, &lab_short), Err(Error::Truncated { .. })));
    }

    #[test]
    fn checksum_verification() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &encode_idx_images(&[0; 4], 1, 2, 2));
        let lab = write(dir.path(), "lab", &encode_idx_labels(&[1]));
        let data = load_idx(&img, &lab).unwrap();
        let good = vec![("lab".to_string(), sha256_hex(&encode_idx_labels(&[1])))];
        verify_checksums(&data, &good).unwrap();
        let bad = vec![("img".to_string(), "00".repeat(32))];
        assert!(matches!(verify_checksums(&data, &bad), Err(Error::Checksum { .. })));
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::new(Array2::zeros((2, 4)), vec![1], 2, 2).is_err());
        assert!(Dataset::new(Array2::zeros((1, 4)), vec![10], 2, 2).is_err());
        assert!(Dataset::new(Array2::from_elem((1, 4), 1.5), vec![1], 2, 2).is_err());
    }
}
