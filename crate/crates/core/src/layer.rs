//! Layer operations for small feed-forward classifiers.
//!
//! Only the kinds needed by the model zoo exist: dense, conv2d (zero
//! padding), relu, max/avg pooling, flatten. Convolution layers use the
//! cross-correlation convention common to neural network code; pooling
//! windows must tile the input exactly under the declared stride.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    /// `y = W x + b` with `W` of shape `[out, in]` and `b` of shape `[out]`.
    Dense { weight: Tensor, bias: Tensor },
    /// 2-D convolution, weight `[out_c, in_c, kh, kw]`, bias `[out_c]`,
    /// zero padding of `pad` pixels on every border.
    Conv2d {
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool2d { kernel: usize, stride: usize },
    AvgPool2d { kernel: usize, stride: usize },
    Flatten,
}

/// Parameter gradients for one layer; only dense and conv2d carry any.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerOp {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerOp::Dense { .. } => "dense",
            LayerOp::Conv2d { .. } => "conv2d",
            LayerOp::Relu => "relu",
            LayerOp::MaxPool2d { .. } => "maxpool2d",
            LayerOp::AvgPool2d { .. } => "avgpool2d",
            LayerOp::Flatten => "flatten",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerOp::Dense { .. } | LayerOp::Conv2d { .. })
    }

    /// Computes the output shape for a given input shape, validating
    /// parameter consistency. Errors mention the layer kind.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerOp::Dense { weight, bias } => {
                if weight.shape().len() != 2 {
                    return Err(self.shape_err(format!(
                        "dense weight must be 2-D, got {:?}",
                        weight.shape()
                    )));
                }
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                if bias.shape() != [out] {
                    return Err(self.shape_err(format!(
                        "dense bias {:?} does not match weight rows {out}",
                        bias.shape()
                    )));
                }
                if input != [inp] {
                    return Err(self.shape_err(format!(
                        "dense expects input [{inp}], got {input:?}"
                    )));
                }
                Ok(vec![out])
            }
            LayerOp::Conv2d {
                weight,
                bias,
                stride,
                pad,
            } => {
                if weight.shape().len() != 4 {
                    return Err(self.shape_err(format!(
                        "conv2d weight must be 4-D, got {:?}",
                        weight.shape()
                    )));
                }
                if *stride == 0 {
                    return Err(self.shape_err("conv2d stride must be positive".to_string()));
                }
                let (oc, ic, kh, kw) = (
                    weight.shape()[0],
                    weight.shape()[1],
                    weight.shape()[2],
                    weight.shape()[3],
                );
                if bias.shape() != [oc] {
                    return Err(self.shape_err(format!(
                        "conv2d bias {:?} does not match out channels {oc}",
                        bias.shape()
                    )));
                }
                if input.len() != 3 || input[0] != ic {
                    return Err(self.shape_err(format!(
                        "conv2d expects input [{ic}, H, W], got {input:?}"
                    )));
                }
                let (h, w) = (input[1], input[2]);
                let eh = h + 2 * pad;
                let ew = w + 2 * pad;
                if eh < kh || ew < kw {
                    return Err(self.shape_err(format!(
                        "kernel {kh}x{kw} larger than padded input {eh}x{ew}"
                    )));
                }
                Ok(vec![oc, (eh - kh) / stride + 1, (ew - kw) / stride + 1])
            }
            LayerOp::Relu => Ok(input.to_vec()),
            LayerOp::MaxPool2d { kernel, stride } | LayerOp::AvgPool2d { kernel, stride } => {
                if input.len() != 3 {
                    return Err(self.shape_err(format!(
                        "pooling expects input [C, H, W], got {input:?}"
                    )));
                }
                if *kernel == 0 || *stride == 0 {
                    return Err(self.shape_err("pooling kernel/stride must be positive".into()));
                }
                let (h, w) = (input[1], input[2]);
                if h < *kernel || w < *kernel || (h - kernel) % stride != 0 || (w - kernel) % stride != 0
                {
                    return Err(self.shape_err(format!(
                        "pool windows (kernel {kernel}, stride {stride}) do not tile {h}x{w}"
                    )));
                }
                Ok(vec![input[0], (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerOp::Flatten => {
                let n: usize = input.iter().product();
                Ok(vec![n])
            }
        }
    }

    fn shape_err(&self, detail: String) -> Error {
        Error::ShapeMismatch {
            context: format!("{} layer", self.kind_name()),
            detail,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        match self {
            LayerOp::Dense { weight, bias } => {
                let inp = input.data();
                let w = weight.data();
                let n_in = inp.len();
                let mut out = bias.data().to_vec();
                for (o, acc) in out.iter_mut().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let mut s = 0.0f32;
                    for i in 0..n_in {
                        s += row[i] * inp[i];
                    }
                    *acc += s;
                }
                Tensor::from_vec(out_shape, out)
            }
            LayerOp::Conv2d {
                weight,
                bias,
                stride,
                pad,
            } => {
                let (oc, ic, kh, kw) = (
                    weight.shape()[0],
                    weight.shape()[1],
                    weight.shape()[2],
                    weight.shape()[3],
                );
                let (h, w) = (input.shape()[1], input.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let inp = input.data();
                let wt = weight.data();
                let mut out = vec![0.0f32; oc * oh * ow];
                for o in 0..oc {
                    let b = bias.data()[o];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b;
                            for i in 0..ic {
                                let plane = &inp[i * h * w..(i + 1) * h * w];
                                let wbase = ((o * ic + i) * kh) * kw;
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - *pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                                    let krow = &wt[wbase + ky * kw..wbase + (ky + 1) * kw];
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - *pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        acc += krow[kx] * row[ix as usize];
                                    }
                                }
                            }
                            out[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                Tensor::from_vec(out_shape, out)
            }
            LayerOp::Relu => Ok(input.map(|v| v.max(0.0))),
            LayerOp::MaxPool2d { kernel, stride } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let inp = input.data();
                let mut out = vec![0.0f32; c * oh * ow];
                for ch in 0..c {
                    let plane = &inp[ch * h * w..(ch + 1) * h * w];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = f32::NEG_INFINITY;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let v = plane[(oy * stride + ky) * w + ox * stride + kx];
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                            out[(ch * oh + oy) * ow + ox] = best;
                        }
                    }
                }
                Tensor::from_vec(out_shape, out)
            }
            LayerOp::AvgPool2d { kernel, stride } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let inp = input.data();
                let norm = 1.0 / (kernel * kernel) as f32;
                let mut out = vec![0.0f32; c * oh * ow];
                for ch in 0..c {
                    let plane = &inp[ch * h * w..(ch + 1) * h * w];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = 0.0f32;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    acc += plane[(oy * stride + ky) * w + ox * stride + kx];
                                }
                            }
                            out[(ch * oh + oy) * ow + ox] = acc * norm;
                        }
                    }
                }
                Tensor::from_vec(out_shape, out)
            }
            LayerOp::Flatten => input.reshaped(out_shape),
        }
    }

    /// Gradient with respect to the layer input, given the cached forward
    /// input and the gradient with respect to the output.
    pub fn backward_input(&self, input: &Tensor, dout: &Tensor) -> Result<Tensor> {
        match self {
            LayerOp::Dense { weight, .. } => {
                let n_in = input.len();
                let n_out = dout.len();
                let w = weight.data();
                let g = dout.data();
                let mut din = vec![0.0f32; n_in];
                for o in 0..n_out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        din[i] += go * row[i];
                    }
                }
                Tensor::from_vec(input.shape().to_vec(), din)
            }
            LayerOp::Conv2d {
                weight,
                stride,
                pad,
                ..
            } => {
                let (oc, ic, kh, kw) = (
                    weight.shape()[0],
                    weight.shape()[1],
                    weight.shape()[2],
                    weight.shape()[3],
                );
                let (h, w) = (input.shape()[1], input.shape()[2]);
                let (oh, ow) = (dout.shape()[1], dout.shape()[2]);
                let wt = weight.data();
                let g = dout.data();
                let mut din = vec![0.0f32; ic * h * w];
                for o in 0..oc {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[(o * oh + oy) * ow + ox];
                            if go == 0.0 {
                                continue;
                            }
                            for i in 0..ic {
                                let wbase = ((o * ic + i) * kh) * kw;
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - *pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - *pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        din[(i * h + iy as usize) * w + ix as usize] +=
                                            go * wt[wbase + ky * kw + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                Tensor::from_vec(input.shape().to_vec(), din)
            }
            LayerOp::Relu => input.zip_map(dout, |x, g| if x > 0.0 { g } else { 0.0 }),
            LayerOp::MaxPool2d { kernel, stride } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (dout.shape()[1], dout.shape()[2]);
                let inp = input.data();
                let g = dout.data();
                let mut din = vec![0.0f32; c * h * w];
                for ch in 0..c {
                    let plane = &inp[ch * h * w..(ch + 1) * h * w];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            // Recompute the argmax; ties route to the first
                            // maximum in scan order, matching forward.
                            let mut best = f32::NEG_INFINITY;
                            let mut by = 0;
                            let mut bx = 0;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let y = oy * stride + ky;
                                    let x = ox * stride + kx;
                                    let v = plane[y * w + x];
                                    if v > best {
                                        best = v;
                                        by = y;
                                        bx = x;
                                    }
                                }
                            }
                            din[(ch * h + by) * w + bx] += g[(ch * oh + oy) * ow + ox];
                        }
                    }
                }
                Tensor::from_vec(input.shape().to_vec(), din)
            }
            LayerOp::AvgPool2d { kernel, stride } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (dout.shape()[1], dout.shape()[2]);
                let g = dout.data();
                let norm = 1.0 / (kernel * kernel) as f32;
                let mut din = vec![0.0f32; c * h * w];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[(ch * oh + oy) * ow + ox] * norm;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    din[(ch * h + oy * stride + ky) * w + ox * stride + kx] += go;
                                }
                            }
                        }
                    }
                }
                Tensor::from_vec(input.shape().to_vec(), din)
            }
            LayerOp::Flatten => dout.reshaped(input.shape().to_vec()),
        }
    }

    /// Gradients with respect to the layer parameters, or `None` for
    /// parameter-free layers.
    pub fn backward_params(&self, input: &Tensor, dout: &Tensor) -> Result<Option<LayerGrads>> {
        match self {
            LayerOp::Dense { weight, .. } => {
                let n_in = input.len();
                let n_out = dout.len();
                let x = input.data();
                let g = dout.data();
                let mut dw = vec![0.0f32; n_out * n_in];
                for o in 0..n_out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    let row = &mut dw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        row[i] = go * x[i];
                    }
                }
                Ok(Some(LayerGrads {
                    weight: Tensor::from_vec(weight.shape().to_vec(), dw)?,
                    bias: dout.clone(),
                }))
            }
            LayerOp::Conv2d {
                weight,
                stride,
                pad,
                ..
            } => {
                let (oc, ic, kh, kw) = (
                    weight.shape()[0],
                    weight.shape()[1],
                    weight.shape()[2],
                    weight.shape()[3],
                );
                let (h, w) = (input.shape()[1], input.shape()[2]);
                let (oh, ow) = (dout.shape()[1], dout.shape()[2]);
                let inp = input.data();
                let g = dout.data();
                let mut dw = vec![0.0f32; oc * ic * kh * kw];
                let mut db = vec![0.0f32; oc];
                for o in 0..oc {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[(o * oh + oy) * ow + ox];
                            if go == 0.0 {
                                continue;
                            }
                            db[o] += go;
                            for i in 0..ic {
                                let plane = &inp[i * h * w..(i + 1) * h * w];
                                let wbase = ((o * ic + i) * kh) * kw;
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - *pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - *pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        dw[wbase + ky * kw + kx] +=
                                            go * plane[iy as usize * w + ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(Some(LayerGrads {
                    weight: Tensor::from_vec(weight.shape().to_vec(), dw)?,
                    bias: Tensor::from_vec(vec![oc], db)?,
                }))
            }
            _ => Ok(None),
        }
    }
}
