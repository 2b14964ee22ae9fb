//! IDX containers as used by the MNIST distribution: a big-endian magic
//! (`0x00000803` images, `0x00000801` labels), big-endian u32 extents, then
//! unsigned bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(path, "truncated IDX header"))
}

/// Raw image bytes plus `(count, rows, cols)`.
pub fn read_idx_images_raw(path: impl AsRef<Path>) -> Result<(Vec<u8>, [usize; 3])> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(path, format!("bad IDX image magic {magic:#010x}")));
    }
    let dims = [
        be_u32(&bytes, 4, path)? as usize,
        be_u32(&bytes, 8, path)? as usize,
        be_u32(&bytes, 12, path)? as usize,
    ];
    let len = dims.iter().product::<usize>();
    let payload = &bytes[16..];
    if payload.len() != len {
        return Err(Error::format(path, format!("expected {len} pixel bytes, found {}", payload.len())));
    }
    Ok((payload.to_vec(), dims))
}

/// Images as `[N, 1, rows, cols]`, scaled by 1/255.
pub fn load_idx_images<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let (raw, [n, rows, cols]) = read_idx_images_raw(path.as_ref())?;
    let scale = T::one() / T::from_f64_lossy(255.0);
    let data = raw.iter().map(|&b| T::from_u8(b).unwrap() * scale).collect();
    Tensor::new([n, 1, rows, cols], data).map_err(|e| Error::format(path.as_ref(), e.to_string()))
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(path, format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::format(path, format!("expected {n} label bytes, found {}", payload.len())));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub fn write_idx_images(path: impl AsRef<Path>, pixels: &[u8], n: usize, rows: usize, cols: usize) -> Result<()> {
    let path = path.as_ref();
    if pixels.len() != n * rows * cols {
        return Err(Error::shape(format!("{} pixels for {n}x{rows}x{cols}", pixels.len())));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Which half of the MNIST distribution to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistPart {
    Train,
    Test,
}

impl MnistPart {
    fn prefix(self) -> &'static str {
        match self {
            MnistPart::Train => "train",
            MnistPart::Test => "t10k",
        }
    }
}

/// Image and label paths inside `dir`. Both the `train-images-idx3-ubyte`
/// and `train-images.idx3-ubyte` spellings are accepted.
pub fn mnist_paths(dir: &Path, part: MnistPart) -> (PathBuf, PathBuf) {
    let p = part.prefix();
    let pick = |a: String, b: String| {
        let pa = dir.join(&a);
        if pa.exists() || !dir.join(&b).exists() {
            pa
        } else {
            dir.join(b)
        }
    };
    (
        pick(format!("{p}-images-idx3-ubyte"), format!("{p}-images.idx3-ubyte")),
        pick(format!("{p}-labels-idx1-ubyte"), format!("{p}-labels.idx1-ubyte")),
    )
}

pub fn load_mnist<T: Scalar>(dir: impl AsRef<Path>, part: MnistPart) -> Result<Dataset<T>> {
    let (images, labels) = mnist_paths(dir.as_ref(), part);
    let x = load_idx_images::<T>(&images)?;
    let y = load_idx_labels(&labels)?;
    if x.dim(0) != y.len() {
        return Err(Error::format(
            &labels,
            format!("{} labels for {} images in {}", y.len(), x.dim(0), images.display()),
        ));
    }
    Dataset::new(x, y, 10, format!("mnist-{}", part.prefix()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        let pixels = [0u8, 255, 0, 255, 17, 34, 51, 200];
        write_idx_images(&path, &pixels, 2, 2, 2).unwrap();
        let t = load_idx_images::<f32>(&path).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        assert_eq!(&t.data()[..4], &[0.0, 1.0, 0.0, 1.0]);
        let back: Vec<u8> = t.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
        assert_eq!(back, pixels);
    }

    #[test]
    fn wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        let mut bytes = 0x0000_0999u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_idx_images::<f32>(&path), Err(Error::Format { .. })));
        assert!(matches!(load_idx_labels(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        write_idx_images(&path, &[1, 2, 3, 4], 1, 2, 2).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(load_idx_images::<f32>(&path).is_err());
    }

    #[test]
    fn image_label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_idx_images(dir.path().join("train-images-idx3-ubyte"), &[0; 8], 2, 2, 2).unwrap();
        write_idx_labels(dir.path().join("train-labels-idx1-ubyte"), &[1, 2, 3]).unwrap();
        assert!(matches!(load_mnist::<f32>(dir.path(), MnistPart::Train), Err(Error::Format { .. })));
        write_idx_labels(dir.path().join("train-labels-idx1-ubyte"), &[1, 2]).unwrap();
        let d = load_mnist::<f32>(dir.path(), MnistPart::Train).unwrap();
        assert_eq!(d.labels(), &[1, 2]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_mnist::<f32>(dir.path(), MnistPart::Test), Err(Error::Io { .. })));
    }
}
