//! NNWT weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "NNWT" (4 bytes)
//! format version      u32 = 1
//! arch id             u16 length + UTF-8 bytes
//! layer count         u32
//! per layer:
//!   kind tag          u8   (0 dense, 1 conv2d, 2 relu, 3 maxpool2d,
//!                           4 avgpool2d, 5 flatten)
//!   hyperparameters   u32s as applicable:
//!                       conv2d   -> stride, pad
//!                       pooling  -> kernel, stride
//!   per parameter tensor (dense/conv2d: weight then bias):
//!     ndim            u8
//!     extents         u32 each
//!     data            raw f32, row-major
//! ```
//!
//! The input shape is not stored; the loader recovers it by propagating
//! candidate square inputs through the layer stack until the flatten/dense
//! boundary pins the spatial size (grayscale is tried before RGB for models
//! that start with flatten).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layer::LayerOp;
use crate::model::ClassifierModel;
use crate::tensor::Tensor;

pub const NNWT_MAGIC: &[u8; 4] = b"NNWT";
pub const NNWT_VERSION: u32 = 1;

const KIND_DENSE: u8 = 0;
const KIND_CONV2D: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_MAXPOOL2D: u8 = 3;
const KIND_AVGPOOL2D: u8 = 4;
const KIND_FLATTEN: u8 = 5;

pub fn save_weights(model: &ClassifierModel, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(NNWT_MAGIC);
    bytes.extend_from_slice(&NNWT_VERSION.to_le_bytes());
    let id = model.arch_id().as_bytes();
    if id.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument("arch id too long".to_string()));
    }
    bytes.extend_from_slice(&(id.len() as u16).to_le_bytes());
    bytes.extend_from_slice(id);
    bytes.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        match layer {
            LayerOp::Dense { weight, bias } => {
                bytes.push(KIND_DENSE);
                write_tensor(&mut bytes, weight);
                write_tensor(&mut bytes, bias);
            }
            LayerOp::Conv2d {
                weight,
                bias,
                stride,
                pad,
            } => {
                bytes.push(KIND_CONV2D);
                bytes.extend_from_slice(&(*stride as u32).to_le_bytes());
                bytes.extend_from_slice(&(*pad as u32).to_le_bytes());
                write_tensor(&mut bytes, weight);
                write_tensor(&mut bytes, bias);
            }
            LayerOp::Relu => bytes.push(KIND_RELU),
            LayerOp::MaxPool2d { kernel, stride } => {
                bytes.push(KIND_MAXPOOL2D);
                bytes.extend_from_slice(&(*kernel as u32).to_le_bytes());
                bytes.extend_from_slice(&(*stride as u32).to_le_bytes());
            }
            LayerOp::AvgPool2d { kernel, stride } => {
                bytes.push(KIND_AVGPOOL2D);
                bytes.extend_from_slice(&(*kernel as u32).to_le_bytes());
                bytes.extend_from_slice(&(*stride as u32).to_le_bytes());
            }
            LayerOp::Flatten => bytes.push(KIND_FLATTEN),
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn write_tensor(bytes: &mut Vec<u8>, t: &Tensor) {
    bytes.push(t.shape().len() as u8);
    for &e in t.shape() {
        bytes.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Truncated {
                context: format!("weight file while reading {what}"),
            })?;
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tensor(&mut self, what: &str) -> Result<Tensor> {
        let ndim = self.u8(what)? as usize;
        if ndim == 0 || ndim > 4 {
            return Err(Error::Format(format!(
                "{what}: tensor rank {ndim} out of range 1..=4"
            )));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32(what)? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n * 4, what)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(shape, data)
    }
}

pub fn load_weights(path: &Path) -> Result<ClassifierModel> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(4, "magic")?;
    if magic != NNWT_MAGIC {
        return Err(Error::BadMagic {
            context: "weight file".to_string(),
            expected: String::from_utf8_lossy(NNWT_MAGIC).to_string(),
            actual: format!("{magic:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != NNWT_VERSION {
        return Err(Error::VersionMismatch {
            context: "weight file".to_string(),
            expected: NNWT_VERSION,
            actual: version,
        });
    }
    let id_len = r.u16("arch id length")? as usize;
    let arch_id = String::from_utf8(r.take(id_len, "arch id")?.to_vec())
        .map_err(|_| Error::Format("arch id is not valid UTF-8".to_string()))?;
    let layer_count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let what = format!("layer {i}");
        let kind = r.u8(&what)?;
        let layer = match kind {
            KIND_DENSE => {
                let weight = r.tensor(&format!("{what} dense weight"))?;
                let bias = r.tensor(&format!("{what} dense bias"))?;
                if weight.shape().len() != 2 || bias.shape().len() != 1 {
                    return Err(Error::Format(format!(
                        "{what}: dense descriptor expects 2-D weight and 1-D bias"
                    )));
                }
                LayerOp::Dense { weight, bias }
            }
            KIND_CONV2D => {
                let stride = r.u32(&format!("{what} stride"))? as usize;
                let pad = r.u32(&format!("{what} pad"))? as usize;
                let weight = r.tensor(&format!("{what} conv weight"))?;
                let bias = r.tensor(&format!("{what} conv bias"))?;
                if weight.shape().len() != 4 || bias.shape().len() != 1 {
                    return Err(Error::Format(format!(
                        "{what}: conv descriptor expects 4-D weight and 1-D bias"
                    )));
                }
                LayerOp::Conv2d {
                    weight,
                    bias,
                    stride,
                    pad,
                }
            }
            KIND_RELU => LayerOp::Relu,
            KIND_MAXPOOL2D => LayerOp::MaxPool2d {
                kernel: r.u32(&format!("{what} kernel"))? as usize,
                stride: r.u32(&format!("{what} stride"))? as usize,
            },
            KIND_AVGPOOL2D => LayerOp::AvgPool2d {
                kernel: r.u32(&format!("{what} kernel"))? as usize,
                stride: r.u32(&format!("{what} stride"))? as usize,
            },
            KIND_FLATTEN => LayerOp::Flatten,
            other => {
                return Err(Error::Format(format!(
                    "{what}: unknown layer kind tag {other}"
                )))
            }
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "weight file has {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let input_shape = infer_input_shape(&arch_id, &layers)?;
    ClassifierModel::new(arch_id, layers, input_shape)
}

/// Recovers the input shape a layer stack was built for by probing square
/// spatial sizes; the flatten/dense boundary makes the answer unique for
/// every stack the zoo produces.
fn infer_input_shape(arch_id: &str, layers: &[LayerOp]) -> Result<[usize; 3]> {
    let channel_candidates: Vec<usize> = match layers.first() {
        Some(LayerOp::Conv2d { weight, .. }) => vec![weight.shape()[1]],
        _ => vec![1, 3],
    };
    for &c in &channel_candidates {
        for s in 4..=256usize {
            let candidate = [c, s, s];
            let mut shape = candidate.to_vec();
            let mut ok = true;
            for layer in layers {
                match layer.output_shape(&shape) {
                    Ok(next) => shape = next,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(candidate);
            }
        }
    }
    Err(Error::Format(format!(
        "cannot infer an input shape consistent with the {arch_id} layer stack"
    )))
}
