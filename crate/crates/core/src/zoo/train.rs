//! SGD-with-momentum training of zoo classifiers on cross-entropy.
//!
//! Training is strictly sequential and fully determined by the config seed:
//! the same config on the same dataset reproduces the final weights bit for
//! bit. Inputs are consumed in raw pixel units; the architectures are
//! initialized so activations stay homogeneous in scale, which is why the
//! default learning rate looks small.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::ce_loss;
use crate::model::ClassifierModel;
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::zoo::dataset::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 4e-4,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch size must be positive".to_string(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Trains a copy of `model` on `data` and returns it. Errors with
/// [`Error::Diverged`] if the loss stops being finite.
pub fn train_classifier(
    model: &ClassifierModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<ClassifierModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".to_string()));
    }
    let mut current = model.clone();
    let n_layers = model.layers().len();

    // Momentum buffers per parameterized layer.
    let mut velocity: Vec<Option<(Tensor, Tensor)>> = model
        .layers()
        .iter()
        .map(|l| match l {
            crate::layer::LayerOp::Dense { weight, bias }
            | crate::layer::LayerOp::Conv2d { weight, bias, .. } => Some((
                Tensor::zeros(weight.shape().to_vec()),
                Tensor::zeros(bias.shape().to_vec()),
            )),
            _ => None,
        })
        .collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x545241494e, 0));

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_acc: Vec<Option<(Tensor, Tensor)>> = velocity
                .iter()
                .map(|v| {
                    v.as_ref().map(|(w, b)| {
                        (Tensor::zeros(w.shape().to_vec()), Tensor::zeros(b.shape().to_vec()))
                    })
                })
                .collect();
            for &idx in batch {
                let (logits, _, tape) = current.forward(&data.images[idx])?;
                let res = ce_loss(&logits, data.labels[idx])?;
                if !res.value.is_finite() {
                    return Err(Error::Diverged(
                        "loss became non-finite; try a smaller learning rate".to_string(),
                    ));
                }
                let grads = tape.backward_to_weights(&res.dlogits.unwrap())?;
                for (acc, g) in grad_acc.iter_mut().zip(grads) {
                    if let (Some((aw, ab)), Some(lg)) = (acc.as_mut(), g) {
                        aw.add_scaled(&lg.weight, 1.0)?;
                        ab.add_scaled(&lg.bias, 1.0)?;
                    }
                }
            }
            let inv_batch = 1.0 / batch.len() as f32;
            let mut new_params: Vec<Option<(Tensor, Tensor)>> = Vec::with_capacity(n_layers);
            for (layer, (vel, acc)) in current
                .layers()
                .iter()
                .zip(velocity.iter_mut().zip(grad_acc))
            {
                match (layer, vel, acc) {
                    (
                        crate::layer::LayerOp::Dense { weight, bias }
                        | crate::layer::LayerOp::Conv2d { weight, bias, .. },
                        Some((vw, vb)),
                        Some((gw, gb)),
                    ) => {
                        let mut w = weight.clone();
                        let mut b = bias.clone();
                        update(&mut w, vw, &gw, inv_batch, cfg)?;
                        update(&mut b, vb, &gb, inv_batch, cfg)?;
                        w.check_finite("trained weights").map_err(|_| {
                            Error::Diverged(
                                "weights became non-finite; try a smaller learning rate"
                                    .to_string(),
                            )
                        })?;
                        new_params.push(Some((w, b)));
                    }
                    _ => new_params.push(None),
                }
            }
            current = current.with_params(new_params)?;
        }
    }
    Ok(current)
}

/// `v <- momentum * v + mean_grad; p <- p - lr * v`
fn update(
    param: &mut Tensor,
    vel: &mut Tensor,
    grad_sum: &Tensor,
    inv_batch: f32,
    cfg: &TrainConfig,
) -> Result<()> {
    for (v, g) in vel.data_mut().iter_mut().zip(grad_sum.data()) {
        *v = cfg.momentum * *v + g * inv_batch;
    }
    param.add_scaled(vel, -cfg.learning_rate)?;
    Ok(())
}

/// Fraction of examples whose top-1 prediction matches the label.
pub fn accuracy(model: &ClassifierModel, data: &Dataset) -> Result<f32> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".to_string()));
    }
    let mut correct = 0usize;
    for (img, &label) in data.images.iter().zip(&data.labels) {
        if model.predict(img)? == label {
            correct += 1;
        }
    }
    Ok(correct as f32 / data.len() as f32)
}
