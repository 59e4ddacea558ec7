//! IDX image/label file ingestion and export.
//!
//! Big-endian, magic `0x00000803` for ubyte image cubes and `0x00000801`
//! for ubyte label vectors. Exported pixels must already be whole numbers
//! in [0, 255].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::zoo::dataset::Dataset;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
/// IDX cube of big-endian f32 (type code 0x0D); used for adversarial images
/// whose pixels need not be whole numbers.
pub const IDX_F32_IMAGE_MAGIC: u32 = 0x0000_0D03;

fn read_u32_be(bytes: &[u8], off: usize, context: &str) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            context: context.to_string(),
        })
}

/// Reads an image file plus a label file into a dataset. Pixel bytes become
/// `f32` values in [0, 255]; images get shape `[1, rows, cols]`.
pub fn ingest_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;

    let magic = read_u32_be(&img_bytes, 0, "idx image header")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::BadMagic {
            context: "idx image file".to_string(),
            expected: format!("{IDX_IMAGE_MAGIC:#010x}"),
            actual: format!("{magic:#010x}"),
        });
    }
    let count = read_u32_be(&img_bytes, 4, "idx image header")? as usize;
    let rows = read_u32_be(&img_bytes, 8, "idx image header")? as usize;
    let cols = read_u32_be(&img_bytes, 12, "idx image header")? as usize;
    let payload = &img_bytes[16..];
    if payload.len() != count * rows * cols {
        return Err(Error::Truncated {
            context: format!(
                "idx image payload: expected {} bytes, found {}",
                count * rows * cols,
                payload.len()
            ),
        });
    }

    let magic = read_u32_be(&lbl_bytes, 0, "idx label header")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::BadMagic {
            context: "idx label file".to_string(),
            expected: format!("{IDX_LABEL_MAGIC:#010x}"),
            actual: format!("{magic:#010x}"),
        });
    }
    let lbl_count = read_u32_be(&lbl_bytes, 4, "idx label header")? as usize;
    if lbl_bytes.len() != 8 + lbl_count {
        return Err(Error::Truncated {
            context: format!(
                "idx label payload: expected {} bytes, found {}",
                lbl_count,
                lbl_bytes.len().saturating_sub(8)
            ),
        });
    }
    if lbl_count != count {
        return Err(Error::CountMismatch {
            context: "idx image vs label count".to_string(),
            left: count,
            right: lbl_count,
        });
    }

    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * rows * cols;
        let data: Vec<f32> = payload[start..start + rows * cols]
            .iter()
            .map(|&b| f32::from(b))
            .collect();
        images.push(Tensor::from_vec(vec![1, rows, cols], data)?);
    }
    let labels: Vec<usize> = lbl_bytes[8..].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |&m| m + 1).max(2);
    Ok(Dataset {
        images,
        labels,
        class_count,
        image_shape: [1, rows, cols],
    })
}

/// Writes single-channel images as an IDX ubyte cube.
pub fn write_idx_images(path: &Path, images: &[Tensor]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to export".to_string()));
    }
    let shape = images[0].shape().to_vec();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::ShapeMismatch {
            context: "write_idx_images".to_string(),
            detail: format!("expected [1, rows, cols], got {shape:?}"),
        });
    }
    let mut bytes = Vec::with_capacity(16 + images.len() * shape[1] * shape[2]);
    bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(shape[1] as u32).to_be_bytes());
    bytes.extend_from_slice(&(shape[2] as u32).to_be_bytes());
    for img in images {
        if img.shape() != shape {
            return Err(Error::ShapeMismatch {
                context: "write_idx_images".to_string(),
                detail: format!("mixed shapes {:?} vs {shape:?}", img.shape()),
            });
        }
        for &v in img.data() {
            if !(0.0..=255.0).contains(&v) || v != v.round() {
                return Err(Error::InvalidArgument(format!(
                    "pixel {v} is not a whole number in [0, 255]; idx export is byte-valued"
                )));
            }
            bytes.push(v as u8);
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > 255 {
            return Err(Error::InvalidArgument(format!(
                "label {l} does not fit in a byte"
            )));
        }
        bytes.push(l as u8);
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes single-channel float images as an IDX f32 cube.
pub fn write_idx_f32_images(path: &Path, images: &[Tensor]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to export".to_string()));
    }
    let shape = images[0].shape().to_vec();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::ShapeMismatch {
            context: "write_idx_f32_images".to_string(),
            detail: format!("expected [1, rows, cols], got {shape:?}"),
        });
    }
    let mut bytes = Vec::with_capacity(16 + images.len() * shape[1] * shape[2] * 4);
    bytes.extend_from_slice(&IDX_F32_IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(shape[1] as u32).to_be_bytes());
    bytes.extend_from_slice(&(shape[2] as u32).to_be_bytes());
    for img in images {
        if img.shape() != shape {
            return Err(Error::ShapeMismatch {
                context: "write_idx_f32_images".to_string(),
                detail: format!("mixed shapes {:?} vs {shape:?}", img.shape()),
            });
        }
        for &v in img.data() {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads an IDX f32 cube back into tensors.
pub fn read_idx_f32_images(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, "idx f32 header")?;
    if magic != IDX_F32_IMAGE_MAGIC {
        return Err(Error::BadMagic {
            context: "idx f32 image file".to_string(),
            expected: format!("{IDX_F32_IMAGE_MAGIC:#010x}"),
            actual: format!("{magic:#010x}"),
        });
    }
    let count = read_u32_be(&bytes, 4, "idx f32 header")? as usize;
    let rows = read_u32_be(&bytes, 8, "idx f32 header")? as usize;
    let cols = read_u32_be(&bytes, 12, "idx f32 header")? as usize;
    let payload = &bytes[16..];
    if payload.len() != count * rows * cols * 4 {
        return Err(Error::Truncated {
            context: format!(
                "idx f32 payload: expected {} bytes, found {}",
                count * rows * cols * 4,
                payload.len()
            ),
        });
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * rows * cols * 4;
        let data: Vec<f32> = payload[start..start + rows * cols * 4]
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        images.push(Tensor::from_vec(vec![1, rows, cols], data)?);
    }
    Ok(images)
}
