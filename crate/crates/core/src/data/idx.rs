use std::io::{self, ErrorKind};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(path))
}

fn truncated(path: &Path) -> Error {
    Error::io(
        path,
        io::Error::new(ErrorKind::UnexpectedEof, "file is truncated"),
    )
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_magic(found: u32, expected: u32, path: &Path) -> Result<()> {
    if found != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("magic number {found:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

/// Reads an IDX image/label file pair (the MNIST distribution format).
/// Pixels are scaled to [0, 1]; each image becomes a `[1, rows, cols]`
/// tensor. The class count is one more than the largest label.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let img = read_file(images_path)?;
    check_magic(read_u32(&img, 0, images_path)?, IMAGES_MAGIC, images_path)?;
    let n = read_u32(&img, 4, images_path)? as usize;
    let rows = read_u32(&img, 8, images_path)? as usize;
    let cols = read_u32(&img, 12, images_path)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            reason: format!("image size {rows}x{cols}"),
        });
    }
    let pixels = &img[16..];
    if pixels.len() < n * rows * cols {
        return Err(truncated(images_path));
    }

    let lab = read_file(labels_path)?;
    check_magic(read_u32(&lab, 0, labels_path)?, LABELS_MAGIC, labels_path)?;
    let n_labels = read_u32(&lab, 4, labels_path)? as usize;
    let labels = &lab[8..];
    if labels.len() < n_labels {
        return Err(truncated(labels_path));
    }
    if n_labels != n {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            reason: format!("{n_labels} labels for {n} images"),
        });
    }

    let inputs = pixels
        .chunks_exact(rows * cols)
        .take(n)
        .map(|c| {
            Tensor::new(
                vec![1, rows, cols],
                c.iter().map(|&p| p as f64 / 255.0).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = labels[..n].iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, inputs, labels, num_classes)
}
