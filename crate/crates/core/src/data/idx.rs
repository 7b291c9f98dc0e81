//! IDX containers as distributed with MNIST: big-endian u32 magic, one u32 per
//! dimension, then raw unsigned bytes.

use std::path::{Path, PathBuf};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::format(format!("{}.{field}", self.file), "file truncated in header")
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn payload(&self, expected: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < expected {
            return Err(Error::format(
                format!("{}.payload", self.file),
                format!("expected {expected} bytes, found {}", rest.len()),
            ));
        }
        Ok(&rest[..expected])
    }
}

fn magic(r: &mut Reader, expected: u32) -> Result<()> {
    let found = r.u32("magic")?;
    if found != expected {
        return Err(Error::format(
            format!("{}.magic", r.file),
            format!("expected 0x{expected:08x}, found 0x{found:08x}"),
        ));
    }
    Ok(())
}

/// Returns (rows, cols, pixels scaled to [0, 1]) per image.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let mut r = Reader { bytes, pos: 0, file: "images" };
    magic(&mut r, IMAGE_MAGIC)?;
    let count = r.u32("count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let size = rows * cols;
    let payload = r.payload(count * size)?;
    let images = if size == 0 {
        vec![Vec::new(); count]
    } else {
        payload
            .chunks_exact(size)
            .map(|c| c.iter().map(|&b| f64::from(b) / 255.0).collect())
            .collect()
    };
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { bytes, pos: 0, file: "labels" };
    magic(&mut r, LABEL_MAGIC)?;
    let count = r.u32("count")? as usize;
    Ok(r.payload(count)?.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Images as [rows, cols] tensors; 10 classes.
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let (rows, cols, pixels) = parse_idx_images(&read(images)?)?;
    let lab = parse_idx_labels(&read(labels)?)?;
    if pixels.len() != lab.len() {
        return Err(Error::format(
            "labels.count",
            format!("{} labels for {} images", lab.len(), pixels.len()),
        ));
    }
    if let Some(bad) = lab.iter().find(|&&l| l > 9) {
        return Err(Error::format("labels.payload", format!("label {bad} outside 0-9")));
    }
    let samples = pixels
        .into_iter()
        .map(|p| Tensor::new(vec![rows, cols], p))
        .collect::<Result<Vec<_>>>()?;
    let names = (0..10).map(|d| d.to_string()).collect();
    Ok(LabeledDataset::new(samples, lab.into_iter().map(usize::from).collect(), 10)?
        .with_class_names(names)
        .with_provenance(format!("mnist:{}", images.display())))
}

/// Standard file names inside an MNIST directory.
#[derive(Debug, Clone)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        MnistFiles {
            train_images: d.join("train-images-idx3-ubyte"),
            train_labels: d.join("train-labels-idx1-ubyte"),
            test_images: d.join("t10k-images-idx3-ubyte"),
            test_labels: d.join("t10k-labels-idx1-ubyte"),
        }
    }
}

/// Loads the predefined (train, test) partition.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let f = MnistFiles::in_dir(dir);
    Ok((
        load_mnist_idx(&f.train_images, &f.train_labels)?,
        load_mnist_idx(&f.test_images, &f.test_labels)?,
    ))
}
