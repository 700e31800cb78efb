//! MNIST in IDX format: big-endian headers, `u8` payloads.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{RngStream, Scalar, Tensor};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Standard uncompressed file names `(images, labels)`.
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labelled 28x28 grayscale images, stored as raw bytes and scaled to
/// `[0, 1]` on access.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    split: Split,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn header(bytes: &[u8], path: &Path, magic: u32, rank: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected: 4,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    let head = 4 + 4 * rank;
    if bytes.len() < head {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected: head,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..rank).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = head + dims.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(dims)
}

/// Parses an IDX image file already in memory; `path` is only used in errors.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, Vec<u8>)> {
    let dims = header(bytes, path, IMAGES_MAGIC, 3)?;
    if dims[1] != IMAGE_SIDE || dims[2] != IMAGE_SIDE {
        return Err(Error::IdxDims {
            path: path.to_path_buf(),
            reason: format!("images are {}x{}, expected 28x28", dims[1], dims[2]),
        });
    }
    Ok((dims[0], bytes[16..].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    header(bytes, path, LABELS_MAGIC, 1)?;
    let labels = bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::IdxDims {
            path: path.to_path_buf(),
            reason: format!("label {bad} outside 0..{CLASSES}"),
        });
    }
    Ok(labels)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let (count, pixels) = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    if labels.len() != count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(Dataset { split, pixels, labels })
}

/// Loads one split from a directory holding the standard file names.
pub fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (images, labels) = split.file_names();
    load_mnist_idx(&dir.join(images), &dir.join(labels), split)
}

/// `explicit`, else `$ORD_DATA_DIR`, else `data/mnist` under the current
/// directory.
pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os("ORD_DATA_DIR") {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("data/mnist"),
    }
}

const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

impl Dataset {
    /// Builds a dataset from raw bytes (one 784-byte image per label).
    pub fn from_raw(split: Split, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(Error::IdxCountMismatch {
                images: pixels.len() / PIXELS,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::Label {
                label: bad as usize,
                classes: CLASSES,
            });
        }
        Ok(Dataset { split, pixels, labels })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Pixel `(row, col)` of image `i` in `[0, 1]`.
    pub fn pixel(&self, i: usize, row: usize, col: usize) -> f64 {
        self.pixels[i * PIXELS + row * IMAGE_SIDE + col] as f64 / 255.0
    }

    /// The first `n` samples.
    pub fn subset(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::Config(format!(
                "subset of {n} requested from {} {} samples",
                self.len(),
                self.split
            )));
        }
        Ok(Dataset {
            split: self.split,
            pixels: self.pixels[..n * PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
        })
    }

    /// `[B, 28, 28, 1]` batch of the given samples and their labels. With a
    /// nonzero `shift`, every image is translated by a random offset in
    /// `-shift..=shift` along each axis (zero fill), drawn from `rng`.
    pub fn batch<T: Scalar>(
        &self,
        indices: &[usize],
        shift: usize,
        rng: Option<&mut RngStream>,
    ) -> Result<(Tensor<T>, Vec<usize>)> {
        let mut data = vec![T::zero(); indices.len() * PIXELS];
        let mut rng = rng;
        let span = 2 * shift as u64 + 1;
        for (b, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::Range(format!("sample {i} of {}", self.len())));
            }
            let (dy, dx) = match (shift, rng.as_deref_mut()) {
                (0, _) | (_, None) => (0, 0),
                (_, Some(r)) => (
                    r.next_below(span) as isize - shift as isize,
                    r.next_below(span) as isize - shift as isize,
                ),
            };
            let out = &mut data[b * PIXELS..(b + 1) * PIXELS];
            let src = &self.pixels[i * PIXELS..(i + 1) * PIXELS];
            for row in 0..IMAGE_SIDE {
                let sr = row as isize - dy;
                if !(0..IMAGE_SIDE as isize).contains(&sr) {
                    continue;
                }
                for col in 0..IMAGE_SIDE {
                    let sc = col as isize - dx;
                    if (0..IMAGE_SIDE as isize).contains(&sc) {
                        let p = src[sr as usize * IMAGE_SIDE + sc as usize];
                        out[row * IMAGE_SIDE + col] = T::from_f64_lossy(p as f64 / 255.0);
                    }
                }
            }
        }
        let labels = indices.iter().map(|&i| self.label(i)).collect();
        Ok((Tensor::from_vec(&[indices.len(), IMAGE_SIDE, IMAGE_SIDE, 1], data)?, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, side: u32, payload: usize) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IMAGES_MAGIC.to_be_bytes());
        v.extend(n.to_be_bytes());
        v.extend(side.to_be_bytes());
        v.extend(side.to_be_bytes());
        v.extend((0..payload).map(|i| (i % 256) as u8));
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(LABELS_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend(labels);
        v
    }

    #[test]
    fn parses_valid_files() {
        let p = Path::new("x");
        let (n, px) = parse_idx_images(&idx_images(2, 28, 2 * 784), p).unwrap();
        assert_eq!((n, px.len()), (2, 1568));
        assert_eq!(&idx_images(2, 28, 0)[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx_labels(&idx_labels(&[3, 9]), p).unwrap(), [3, 9]);
    }

    #[test]
    fn distinct_errors() {
        let p = Path::new("x");
        assert!(matches!(parse_idx_images(&idx_labels(&[1]), p), Err(Error::IdxMagic { .. })));
        assert!(matches!(parse_idx_labels(&idx_images(1, 28, 784), p), Err(Error::IdxMagic { .. })));
        assert!(matches!(parse_idx_images(&idx_images(2, 28, 784), p), Err(Error::IdxTruncated { .. })));
        assert!(matches!(parse_idx_images(&[0, 0, 8], p), Err(Error::IdxTruncated { .. })));
        assert!(matches!(parse_idx_images(&idx_images(1, 27, 729), p), Err(Error::IdxDims { .. })));
        assert!(matches!(parse_idx_labels(&idx_labels(&[10]), p), Err(Error::IdxDims { .. })));
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&img, idx_images(2, 28, 2 * 784)).unwrap();
        fs::write(&lab, idx_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(
            load_mnist_idx(&img, &lab, Split::Train),
            Err(Error::IdxCountMismatch { images: 2, labels: 3 })
        ));
        assert!(matches!(
            load_mnist_idx(&dir.path().join("missing"), &lab, Split::Train),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn pixel_scaling_and_batches() {
        let mut px = vec![0u8; 2 * 784];
        px[0] = 255;
        px[784 + 29] = 51;
        let d = Dataset::from_raw(Split::Test, px, vec![4, 7]).unwrap();
        assert_eq!(d.pixel(0, 0, 0), 1.0);
        let (x, y) = d.batch::<f64>(&[1, 0], 0, None).unwrap();
        assert_eq!(x.dims(), &[2, 28, 28, 1]);
        assert_eq!(y, [7, 4]);
        assert_eq!(x.data()[29], 0.2);
        assert_eq!(x.data()[784], 1.0);
        assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(d.batch::<f32>(&[2], 0, None).is_err());
    }

    #[test]
    fn shift_moves_content() {
        let mut px = vec![0u8; 784];
        px[14 * 28 + 14] = 255;
        let d = Dataset::from_raw(Split::Train, px, vec![0]).unwrap();
        let mut rng = RngStream::new(5);
        for _ in 0..20 {
            let (x, _) = d.batch::<f32>(&[0], 2, Some(&mut rng)).unwrap();
            let at = x.data().iter().position(|&v| v == 1.0).unwrap();
            let (r, c) = (at / 28, at % 28);
            assert!(r.abs_diff(14) <= 2 && c.abs_diff(14) <= 2);
        }
    }

    #[test]
    fn subsets() {
        let d = Dataset::from_raw(Split::Train, vec![0; 3 * 784], vec![1, 2, 3]).unwrap();
        assert_eq!(d.subset(2).unwrap().len(), 2);
        assert!(d.subset(0).is_err());
        assert!(d.subset(4).is_err());
    }
}
