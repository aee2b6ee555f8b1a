//! MNIST IDX files: big-endian magic, dimension sizes, then raw bytes.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Mat;

use super::dataset::{Dataset, Split};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset, "truncated IDX header"))
}

/// Images as rows of `rows·cols` pixels scaled by `1/255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Mat> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let d = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * d {
        return Err(Error::format(
            16 + body.len().min(n * d),
            format!("{n} images of {rows}x{cols} need {} bytes, found {}", n * d, body.len()),
        ));
    }
    let data = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    Mat::from_vec(n, d, data)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::format(
            8 + body.len().min(n),
            format!("{n} labels declared, {} bytes present", body.len()),
        ));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

fn load_pair(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let x = parse_idx_images(&fs::read(images)?)?;
    let y = parse_idx_labels(&fs::read(labels)?)?;
    if x.rows() != y.len() {
        return Err(Error::format(
            4,
            format!("{} has {} images but {} has {} labels", images.display(), x.rows(), labels.display(), y.len()),
        ));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(x, y, split, classes)
}

pub fn load_mnist(train_images: &Path, train_labels: &Path, test_images: &Path, test_labels: &Path) -> Result<(Dataset, Dataset)> {
    Ok((
        load_pair(train_images, train_labels, Split::Train)?,
        load_pair(test_images, test_labels, Split::Test)?,
    ))
}

pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    load_mnist(
        &dir.join(TRAIN_IMAGES),
        &dir.join(TRAIN_LABELS),
        &dir.join(TEST_IMAGES),
        &dir.join(TEST_LABELS),
    )
}

/// `$GENCLASS_DATA` if set, else the first `data/mnist` found in the
/// current directory or its ancestors.
pub fn locate_mnist() -> Result<PathBuf> {
    if let Ok(dir) = env::var("GENCLASS_DATA") {
        return Ok(PathBuf::from(dir));
    }
    let mut here = env::current_dir()?;
    loop {
        let candidate = here.join("data").join("mnist");
        if candidate.join(TRAIN_IMAGES).is_file() {
            return Ok(candidate);
        }
        if !here.pop() {
            break;
        }
    }
    Err(Error::Usage(
        "MNIST not found: set GENCLASS_DATA or run scripts/fetch_mnist.sh".into(),
    ))
}
