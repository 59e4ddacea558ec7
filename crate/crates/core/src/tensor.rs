//! Dense n-dimensional `f32` arrays, row-major (last axis fastest).
//!
//! The `Tensor` is the universal value of the crate: images, logits, feature
//! vectors, gradients, and layer parameters all use it. Elements are required
//! to be finite; constructors reject NaN/Inf and contract boundaries re-check
//! with [`Tensor::check_finite`].

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data, validating that the
    /// extents are positive, the element count matches, and all values are
    /// finite.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec".to_string(),
                detail: format!("shape {shape:?} holds {expected} elements, data has {}", data.len()),
            });
        }
        let t = Tensor { shape, data };
        t.check_finite("Tensor::from_vec")?;
        Ok(t)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::reshaped".to_string(),
                detail: format!("cannot view {:?} as {shape:?}", self.shape),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "Tensor::zip_map".to_string(),
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    /// In-place `self += factor * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &Tensor, factor: f32) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "Tensor::add_scaled".to_string(),
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "Tensor::dot".to_string(),
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn l1_norm(&self) -> f32 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f32 {
        self.data.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Index of the largest element; ties break toward the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_v = self.data[0];
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        best
    }
}

/// Convolves each channel of a `C x H x W` image with a 2-D kernel of odd
/// extents, zero-padded so the output shape equals the input shape.
///
/// This is a true convolution (the kernel is not reflected): a unit impulse
/// reproduces the kernel values centered at the impulse.
pub fn depthwise_convolve(image: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    if image.shape().len() != 3 {
        return Err(Error::ShapeMismatch {
            context: "depthwise_convolve".to_string(),
            detail: format!("image must be C x H x W, got {:?}", image.shape()),
        });
    }
    if kernel.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "depthwise_convolve".to_string(),
            detail: format!("kernel must be 2-D, got {:?}", kernel.shape()),
        });
    }
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "convolution kernel extents must be odd, got {kh}x{kw}"
        )));
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let img = image.data();
    let ker = kernel.data();
    let mut out = vec![0.0f32; c * h * w];
    for ch in 0..c {
        let plane = &img[ch * h * w..(ch + 1) * h * w];
        let out_plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for oy in 0..h as isize {
            for ox in 0..w as isize {
                let mut acc = 0.0f32;
                for ky in 0..kh as isize {
                    let iy = oy - (ky - ph);
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let krow = &ker[ky as usize * kw..(ky as usize + 1) * kw];
                    for kx in 0..kw as isize {
                        let ix = ox - (kx - pw);
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        acc += krow[kx as usize] * row[ix as usize];
                    }
                }
                out_plane[(oy * w as isize + ox) as usize] = acc;
            }
        }
    }
    Tensor::from_vec(vec![c, h, w], out)
}
