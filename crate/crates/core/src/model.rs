//! Immutable feed-forward classifier: an ordered layer stack whose final
//! layer is dense, exposing the raw logits, the penultimate feature vector,
//! and the final-layer weight matrix the angle loss needs.

use crate::error::{Error, Result};
use crate::layer::LayerOp;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    arch_id: String,
    layers: Vec<LayerOp>,
    input_shape: [usize; 3],
    class_count: usize,
    feature_dim: usize,
}

impl ClassifierModel {
    /// Assembles a model, validating that the layer shapes chain together
    /// from `input_shape`, that the last layer is dense, and that it has at
    /// least two classes.
    pub fn new(
        arch_id: impl Into<String>,
        layers: Vec<LayerOp>,
        input_shape: [usize; 3],
    ) -> Result<Self> {
        let arch_id = arch_id.into();
        if layers.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "model {arch_id} has no layers"
            )));
        }
        let mut shape: Vec<usize> = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| match e {
                Error::ShapeMismatch { context, detail } => Error::ShapeMismatch {
                    context: format!("{arch_id} layer {i} ({context})"),
                    detail,
                },
                other => other,
            })?;
        }
        let last = layers.last().unwrap();
        let (class_count, feature_dim) = match last {
            LayerOp::Dense { weight, .. } => (weight.shape()[0], weight.shape()[1]),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "model {arch_id} must end with a dense layer, found {}",
                    other.kind_name()
                )))
            }
        };
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "model {arch_id} needs at least 2 classes, has {class_count}"
            )));
        }
        for layer in &layers {
            match layer {
                LayerOp::Dense { weight, bias } | LayerOp::Conv2d { weight, bias, .. } => {
                    weight.check_finite("model weights")?;
                    bias.check_finite("model weights")?;
                }
                _ => {}
            }
        }
        Ok(ClassifierModel {
            arch_id,
            layers,
            input_shape,
            class_count,
            feature_dim,
        })
    }

    pub fn arch_id(&self) -> &str {
        &self.arch_id
    }

    pub fn layers(&self) -> &[LayerOp] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Final-layer weight matrix, shape `[class_count, feature_dim]`.
    pub fn final_weights(&self) -> &Tensor {
        match self.layers.last().unwrap() {
            LayerOp::Dense { weight, .. } => weight,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn final_bias(&self) -> &Tensor {
        match self.layers.last().unwrap() {
            LayerOp::Dense { bias, .. } => bias,
            _ => unreachable!("validated at construction"),
        }
    }

    /// The weight row of one class as a `[feature_dim]` tensor.
    pub fn class_weight_row(&self, class: usize) -> Result<Tensor> {
        if class >= self.class_count {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} classes",
                self.class_count
            )));
        }
        let w = self.final_weights();
        let d = self.feature_dim;
        Tensor::from_vec(vec![d], w.data()[class * d..(class + 1) * d].to_vec())
    }

    /// Runs the layer stack on `x`, returning the logits, the penultimate
    /// feature vector, and a tape of cached activations for the backward
    /// passes. `x` must match the model input shape and be finite.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor, Tape<'_>)> {
        if x.shape() != self.input_shape {
            return Err(Error::ShapeMismatch {
                context: format!("{} forward", self.arch_id),
                detail: format!(
                    "input {:?} does not match model input {:?}",
                    x.shape(),
                    self.input_shape
                ),
            });
        }
        x.check_finite("forward input")?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(cur);
            let src = inputs.last().unwrap();
            cur = layer.forward(src).map_err(|e| match e {
                Error::ShapeMismatch { context, detail } => Error::ShapeMismatch {
                    context: format!("{} layer {i} ({context})", self.arch_id),
                    detail,
                },
                other => other,
            })?;
        }
        cur.check_finite("forward logits")?;
        let feature = inputs.last().unwrap().clone();
        let logits = cur.clone();
        Ok((logits, feature, Tape::new(self, inputs, cur)))
    }

    /// Convenience forward that discards the tape.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let (logits, _, _) = self.forward(x)?;
        Ok(logits)
    }

    /// Top-1 prediction with ties broken toward the lowest class index.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.logits(x)?.argmax())
    }

    /// Returns a copy with parameters replaced by `params`, which must carry
    /// one entry per layer (None for parameter-free layers).
    pub fn with_params(&self, params: Vec<Option<(Tensor, Tensor)>>) -> Result<ClassifierModel> {
        if params.len() != self.layers.len() {
            return Err(Error::CountMismatch {
                context: "with_params".to_string(),
                left: params.len(),
                right: self.layers.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (layer, p) in self.layers.iter().zip(params) {
            let new_layer = match (layer, p) {
                (LayerOp::Dense { .. }, Some((weight, bias))) => LayerOp::Dense { weight, bias },
                (
                    LayerOp::Conv2d { stride, pad, .. },
                    Some((weight, bias)),
                ) => LayerOp::Conv2d {
                    weight,
                    bias,
                    stride: *stride,
                    pad: *pad,
                },
                (other, None) => other.clone(),
                (other, Some(_)) => {
                    return Err(Error::InvalidArgument(format!(
                        "{} layer takes no parameters",
                        other.kind_name()
                    )))
                }
            };
            layers.push(new_layer);
        }
        ClassifierModel::new(self.arch_id.clone(), layers, self.input_shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dense(n: usize) -> LayerOp {
        let mut w = vec![0.0f32; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        LayerOp::Dense {
            weight: Tensor::from_vec(vec![n, n], w).unwrap(),
            bias: Tensor::zeros(vec![n]),
        }
    }

    #[test]
    fn identity_model_passes_input_through() {
        let model = ClassifierModel::new(
            "toy",
            vec![LayerOp::Flatten, identity_dense(3)],
            [1, 1, 3],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let (logits, feature, _) = model.forward(&x).unwrap();
        assert_eq!(logits.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(feature.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn model_must_end_with_dense() {
        let err = ClassifierModel::new("toy", vec![LayerOp::Flatten], [1, 2, 2]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let model =
            ClassifierModel::new("toy", vec![LayerOp::Flatten, identity_dense(4)], [1, 2, 2])
                .unwrap();
        let x = Tensor::zeros(vec![1, 3, 3]);
        assert!(matches!(
            model.forward(&x),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn class_weight_row_extracts_final_layer_row() {
        let w = Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let model = ClassifierModel::new(
            "toy",
            vec![
                LayerOp::Flatten,
                LayerOp::Dense {
                    weight: w,
                    bias: Tensor::zeros(vec![2]),
                },
            ],
            [1, 1, 3],
        )
        .unwrap();
        assert_eq!(model.class_weight_row(1).unwrap().data(), &[4.0, 5.0, 6.0]);
        assert!(model.class_weight_row(2).is_err());
    }
}
