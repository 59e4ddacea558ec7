//! Reverse-mode differentiation over a recorded forward pass.
//!
//! A `Tape` borrows the model it was produced by, so gradients can only ever
//! be requested against the matching parameter set. Activations are cached
//! eagerly; nothing is recomputed except pooling argmaxes, which are derived
//! from the cached inputs.

use crate::error::{Error, Result};
use crate::layer::LayerGrads;
use crate::model::ClassifierModel;
use crate::tensor::Tensor;

pub struct Tape<'m> {
    model: &'m ClassifierModel,
    /// Input to each layer, aligned with `model.layers()`.
    inputs: Vec<Tensor>,
    /// Final output (the logits).
    output: Tensor,
}

impl<'m> Tape<'m> {
    pub(crate) fn new(model: &'m ClassifierModel, inputs: Vec<Tensor>, output: Tensor) -> Self {
        Tape {
            model,
            inputs,
            output,
        }
    }

    pub fn model(&self) -> &ClassifierModel {
        self.model
    }

    pub fn logits(&self) -> &Tensor {
        &self.output
    }

    /// The cached penultimate activation (input of the final dense layer).
    pub fn feature(&self) -> &Tensor {
        self.inputs.last().unwrap()
    }

    /// Re-runs the recorded layers on the recorded input; the result must be
    /// bit-identical to the recorded output.
    pub fn replay(&self) -> Result<Tensor> {
        let mut cur = self.inputs[0].clone();
        for layer in self.model.layers() {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Gradient of the loss with respect to the model input, given the
    /// gradient with respect to the logits.
    pub fn backward_to_input(&self, dlogits: &Tensor) -> Result<Tensor> {
        self.backward_to_input_with(Some(dlogits), None)
    }

    /// Backward pass that can also inject a gradient directly at the
    /// penultimate feature (used by feature-space losses and combinations).
    /// At least one of the two gradients must be present.
    pub fn backward_to_input_with(
        &self,
        dlogits: Option<&Tensor>,
        dfeature: Option<&Tensor>,
    ) -> Result<Tensor> {
        let layers = self.model.layers();
        let n = layers.len();
        let mut grad = match dlogits {
            Some(g) => {
                if g.shape() != self.output.shape() {
                    return Err(Error::ShapeMismatch {
                        context: "backward_to_input".to_string(),
                        detail: format!(
                            "logit gradient {:?} vs logits {:?}",
                            g.shape(),
                            self.output.shape()
                        ),
                    });
                }
                g.clone()
            }
            None => {
                if dfeature.is_none() {
                    return Err(Error::InvalidArgument(
                        "backward pass needs a logit or feature gradient".to_string(),
                    ));
                }
                Tensor::zeros(self.output.shape().to_vec())
            }
        };
        for i in (0..n).rev() {
            grad = layers[i].backward_input(&self.inputs[i], &grad)?;
            // After stepping over the final dense layer, `grad` sits at the
            // penultimate feature; add any injected feature gradient there.
            if i == n - 1 {
                if let Some(df) = dfeature {
                    if df.shape() != grad.shape() {
                        return Err(Error::ShapeMismatch {
                            context: "backward_to_input".to_string(),
                            detail: format!(
                                "feature gradient {:?} vs feature {:?}",
                                df.shape(),
                                grad.shape()
                            ),
                        });
                    }
                    grad.add_scaled(df, 1.0)?;
                }
            }
        }
        Ok(grad)
    }

    /// Per-layer parameter gradients, aligned with `model.layers()`.
    pub fn backward_to_weights(&self, dlogits: &Tensor) -> Result<Vec<Option<LayerGrads>>> {
        if dlogits.shape() != self.output.shape() {
            return Err(Error::ShapeMismatch {
                context: "backward_to_weights".to_string(),
                detail: format!(
                    "logit gradient {:?} vs logits {:?}",
                    dlogits.shape(),
                    self.output.shape()
                ),
            });
        }
        let layers = self.model.layers();
        let mut grads = vec![None; layers.len()];
        let mut grad = dlogits.clone();
        for i in (0..layers.len()).rev() {
            grads[i] = layers[i].backward_params(&self.inputs[i], &grad)?;
            if i > 0 {
                grad = layers[i].backward_input(&self.inputs[i], &grad)?;
            }
        }
        Ok(grads)
    }
}
