//! IDX reader for the MNIST family (optionally gzip compressed).

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Real;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses header and payload; returns the dimension sizes and the payload.
fn parse<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8])> {
    let fmt = |msg: String| Error::Format {
        path: path.into(),
        msg,
    };
    let be = |i: usize| -> Option<u32> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    };
    let found = be(0).ok_or_else(|| fmt("file shorter than the 4-byte magic".into()))?;
    if found != magic {
        return Err(fmt(format!("bad magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|d| be(4 + 4 * d).map(|v| v as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| fmt("truncated header".into()))?;
    let payload = &bytes[4 + 4 * ndims..];
    let want: usize = dims.iter().product();
    if payload.len() < want {
        return Err(fmt(format!(
            "truncated payload: header declares {} items ({want} bytes), file holds {} bytes",
            dims[0],
            payload.len()
        )));
    }
    Ok((dims, &payload[..want]))
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]` and each
/// `H x W` image is flattened row-major.
pub fn load_idx<T: Real>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read_bytes(ip)?;
    let label_bytes = read_bytes(lp)?;
    let (idims, pixels) = parse(ip, &image_bytes, IMAGES_MAGIC)?;
    let (ldims, raw_labels) = parse(lp, &label_bytes, LABELS_MAGIC)?;
    let (n, d) = (idims[0], idims[1] * idims[2]);
    if ldims[0] != n {
        return Err(Error::Format {
            path: lp.into(),
            msg: format!("count mismatch: {} labels for {n} images", ldims[0]),
        });
    }
    let scale = T::one() / T::lit(255.0);
    let values = pixels.iter().map(|&b| T::from_u8(b).unwrap() * scale).collect();
    let features = Matrix::from_vec(n, d, values)?;
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let name = ip
        .parent()
        .and_then(Path::file_name)
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(features, labels, num_classes, name)
}

/// Serialises raw IDX files; used by tests and fixture generation.
pub fn encode_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
