//! Central-difference gradient estimation, used as an independent oracle
//! against the reverse-mode passes. The loss closure returns f64 and the
//! difference quotient uses the actually-applied f32 step, keeping the
//! oracle sharper than the f32 forward pass it probes.

use crate::error::{Error, Result};
use crate::model::ClassifierModel;
use crate::tensor::Tensor;

/// Central-difference estimate of `d loss / d x` through a full model.
///
/// `loss_fn` receives the logits and the penultimate feature at a perturbed
/// input and returns the scalar loss. `h` is the one-sided step; the
/// denominator uses the realized f32 perturbation, not the nominal one.
pub fn finite_difference_gradient<F>(
    model: &ClassifierModel,
    x: &Tensor,
    mut loss_fn: F,
    h: f32,
) -> Result<Tensor>
where
    F: FnMut(&Tensor, &Tensor) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut grad = vec![0.0f32; x.len()];
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        let up_x = orig + h;
        let down_x = orig - h;
        probe.data_mut()[i] = up_x;
        let (logits_p, feat_p, _) = model.forward(&probe)?;
        let up = loss_fn(&logits_p, &feat_p);
        probe.data_mut()[i] = down_x;
        let (logits_m, feat_m, _) = model.forward(&probe)?;
        let down = loss_fn(&logits_m, &feat_m);
        probe.data_mut()[i] = orig;
        let span = f64::from(up_x) - f64::from(down_x);
        grad[i] = ((up - down) / span) as f32;
    }
    Tensor::from_vec(x.shape().to_vec(), grad)
}

/// Relative L2 distance between two gradients: `|a - b| / max(|b|, floor)`.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f32 {
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        diff += (f64::from(x) - f64::from(y)).powi(2);
        norm += f64::from(y).powi(2);
    }
    (diff.sqrt() / norm.sqrt().max(1e-12)) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::LayerOp;

    fn scalar_square_model() -> ClassifierModel {
        // Two identical logits both equal to x so a quadratic loss over one
        // logit behaves like f(x) = x^2.
        let w = Tensor::from_vec(vec![2, 1], vec![1.0, 1.0]).unwrap();
        ClassifierModel::new(
            "square",
            vec![
                LayerOp::Flatten,
                LayerOp::Dense {
                    weight: w,
                    bias: Tensor::zeros(vec![2]),
                },
            ],
            [1, 1, 1],
        )
        .unwrap()
    }

    #[test]
    fn quadratic_gradient_matches_analytic() {
        let model = scalar_square_model();
        let x = Tensor::from_vec(vec![1, 1, 1], vec![3.0]).unwrap();
        let g = finite_difference_gradient(
            &model,
            &x,
            |logits, _| f64::from(logits.data()[0]).powi(2),
            1e-3,
        )
        .unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-5, "{}", g.data()[0]);
    }

    #[test]
    fn zero_function_has_zero_gradient() {
        let model = scalar_square_model();
        let x = Tensor::from_vec(vec![1, 1, 1], vec![1.5]).unwrap();
        let g = finite_difference_gradient(&model, &x, |_, _| 0.0, 1e-3).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    #[test]
    fn rejects_non_positive_step() {
        let model = scalar_square_model();
        let x = Tensor::from_vec(vec![1, 1, 1], vec![1.0]).unwrap();
        assert!(finite_difference_gradient(&model, &x, |_, _| 0.0, 0.0).is_err());
    }
}
