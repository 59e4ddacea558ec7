//! Targeted attack objectives over raw logits.
//!
//! All losses are written so that *lower is better* for the targeted attack:
//! cross-entropy toward the target class, the negative target logit, the
//! temperature- and margin-calibrated variants of cross-entropy, and the
//! negative cosine between the penultimate feature and the target class
//! weight row. Each returns the scalar value together with its gradient with
//! respect to the logits, the feature, or both.
//!
//! Cross-entropy uses max-subtracted log-sum-exp throughout: logit margins
//! routinely exceed 20 during an attack, where the naive softmax overflows
//! in 32-bit.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to the Top-1/Top-2 gap when it is degenerate (exact tie),
/// keeping the margin calibration finite at initialization.
pub const MARGIN_SCALE_FLOOR: f32 = 1e-6;

/// Declarative attack objective.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// `-log p_target`.
    Ce,
    /// `-z_target`.
    Logit,
    /// Cross-entropy over `z / T` for a constant temperature `T > 0`.
    CeTemperature(f32),
    /// Cross-entropy over `z / s` where `s` is the current Top-1/Top-2 logit
    /// gap, recomputed per call and treated as a constant.
    CeMargin,
    /// Negative cosine between the penultimate feature and the target class
    /// weight row (bias omitted).
    Angle,
    /// Weighted sum of non-combo members.
    Combo(Vec<(LossSpec, f32)>),
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::CeTemperature(t) => {
                if !(*t > 0.0) || !t.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "temperature must be positive and finite, got {t}"
                    )));
                }
                Ok(())
            }
            LossSpec::Combo(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidArgument("empty loss combination".into()));
                }
                for (spec, weight) in parts {
                    if matches!(spec, LossSpec::Combo(_)) {
                        return Err(Error::InvalidArgument(
                            "loss combinations cannot nest".into(),
                        ));
                    }
                    if !weight.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "combination weight must be finite, got {weight}"
                        )));
                    }
                    spec.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// True if evaluating this loss touches the penultimate feature.
    pub fn needs_feature(&self) -> bool {
        match self {
            LossSpec::Angle => true,
            LossSpec::Combo(parts) => parts.iter().any(|(s, _)| s.needs_feature()),
            _ => false,
        }
    }

    /// True if this loss depends on the margin-calibration scale.
    pub fn uses_margin_scale(&self) -> bool {
        match self {
            LossSpec::CeMargin => true,
            LossSpec::Combo(parts) => parts.iter().any(|(s, _)| s.uses_margin_scale()),
            _ => false,
        }
    }
}

/// Scalar loss plus whichever gradients the loss defines.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f32,
    /// Gradient with respect to the logits, length `N`.
    pub dlogits: Option<Tensor>,
    /// Gradient with respect to the penultimate feature, length `D`.
    pub dfeature: Option<Tensor>,
}

impl LossResult {
    fn check(self, context: &str) -> Result<Self> {
        if !self.value.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{context} value"),
            });
        }
        if self.dlogits.is_none() && self.dfeature.is_none() {
            return Err(Error::InvalidArgument(format!(
                "{context} produced no gradient"
            )));
        }
        if let Some(g) = &self.dlogits {
            g.check_finite(&format!("{context} logit gradient"))?;
        }
        if let Some(g) = &self.dfeature {
            g.check_finite(&format!("{context} feature gradient"))?;
        }
        Ok(self)
    }
}

fn check_target(logits: &Tensor, target: usize) -> Result<()> {
    if logits.shape().len() != 1 {
        return Err(Error::ShapeMismatch {
            context: "loss".to_string(),
            detail: format!("logits must be 1-D, got {:?}", logits.shape()),
        });
    }
    if target >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(())
}

/// Numerically stabilized softmax.
pub fn softmax(logits: &Tensor) -> Tensor {
    let m = logits.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.data().iter().map(|&z| (z - m).exp()).collect();
    let sum: f32 = exps.iter().sum();
    Tensor::from_vec(logits.shape().to_vec(), exps.iter().map(|&e| e / sum).collect())
        .expect("softmax of finite logits is finite")
}

/// Cross-entropy toward `target`: `-z_t + log sum exp(z_j)` with
/// max-subtraction; gradient `p - onehot(target)`.
pub fn ce_loss(logits: &Tensor, target: usize) -> Result<LossResult> {
    check_target(logits, target)?;
    let z = logits.data();
    let m = z.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let sum: f32 = z.iter().map(|&v| (v - m).exp()).sum();
    let value = m + sum.ln() - z[target];
    let mut grad: Vec<f32> = z.iter().map(|&v| (v - m).exp() / sum).collect();
    grad[target] -= 1.0;
    LossResult {
        value,
        dlogits: Some(Tensor::from_vec(vec![z.len()], grad)?),
        dfeature: None,
    }
    .check("ce_loss")
}

/// Negative target logit; gradient `-onehot(target)`.
pub fn logit_loss(logits: &Tensor, target: usize) -> Result<LossResult> {
    check_target(logits, target)?;
    let n = logits.len();
    let mut grad = vec![0.0f32; n];
    grad[target] = -1.0;
    LossResult {
        value: -logits.data()[target],
        dlogits: Some(Tensor::from_vec(vec![n], grad)?),
        dfeature: None,
    }
    .check("logit_loss")
}

/// Cross-entropy over temperature-scaled logits `z / T`. The value is
/// exactly `ce_loss(z / T, target)`; the gradient with respect to the
/// unscaled logits picks up the extra `1 / T`.
pub fn temperature_ce(logits: &Tensor, target: usize, temperature: f32) -> Result<LossResult> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    check_target(logits, target)?;
    let scaled = logits.scale(1.0 / temperature);
    let inner = ce_loss(&scaled, target)?;
    LossResult {
        value: inner.value,
        dlogits: Some(inner.dlogits.unwrap().scale(1.0 / temperature)),
        dfeature: None,
    }
    .check("temperature_ce")
}

/// The Top-1 minus Top-2 logit gap, floored at [`MARGIN_SCALE_FLOOR`].
/// This is the adaptive temperature of the margin calibration; it is
/// recomputed per call and never differentiated through.
pub fn margin_scale(logits: &Tensor) -> f32 {
    let mut top1 = f32::NEG_INFINITY;
    let mut top2 = f32::NEG_INFINITY;
    for &v in logits.data() {
        if v > top1 {
            top2 = top1;
            top1 = v;
        } else if v > top2 {
            top2 = v;
        }
    }
    (top1 - top2).max(MARGIN_SCALE_FLOOR)
}

/// Margin-calibrated cross-entropy: temperature CE with the current
/// Top-1/Top-2 gap as the (constant) temperature.
pub fn margin_calibrated_ce(logits: &Tensor, target: usize) -> Result<LossResult> {
    margin_calibrated_ce_with_scale(logits, target, margin_scale(logits))
}

/// Margin-calibrated cross-entropy with an externally supplied scale. The
/// attack loop uses this to compute the scale from the clean (untransformed)
/// logits while evaluating the loss on augmented ones.
///
/// Stabilization subtracts the max logit *before* dividing, so when the
/// scale is the top gap itself the scaled Top-1/Top-2 separation is exactly
/// one. Dividing first would let rounding of `z / s` break the calibrated
/// probability bound for very small gaps.
pub fn margin_calibrated_ce_with_scale(
    logits: &Tensor,
    target: usize,
    scale: f32,
) -> Result<LossResult> {
    check_target(logits, target)?;
    let s = scale.max(MARGIN_SCALE_FLOOR);
    if !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "margin scale must be finite, got {scale}"
        )));
    }
    let z = logits.data();
    let m = z.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let scaled: Vec<f32> = z.iter().map(|&v| (v - m) / s).collect();
    let sum: f32 = scaled.iter().map(|&v| v.exp()).sum();
    let value = sum.ln() - scaled[target];
    let inv_s = 1.0 / s;
    let mut grad: Vec<f32> = scaled.iter().map(|&v| (v.exp() / sum) * inv_s).collect();
    grad[target] -= inv_s;
    LossResult {
        value,
        dlogits: Some(Tensor::from_vec(vec![z.len()], grad)?),
        dfeature: None,
    }
    .check("margin_calibrated_ce")
}

/// Negative cosine between the feature and the target class weight row.
/// Both vectors must have positive norm; the bias plays no part.
pub fn angle_loss(feature: &Tensor, target_weight: &Tensor) -> Result<LossResult> {
    if feature.shape() != target_weight.shape() {
        return Err(Error::ShapeMismatch {
            context: "angle_loss".to_string(),
            detail: format!("{:?} vs {:?}", feature.shape(), target_weight.shape()),
        });
    }
    let nf = feature.l2_norm();
    let nw = target_weight.l2_norm();
    if nf == 0.0 || nw == 0.0 {
        return Err(Error::InvalidArgument(
            "angle loss needs non-zero feature and weight norms".to_string(),
        ));
    }
    let cos = feature.dot(target_weight)? / (nf * nw);
    let inv = 1.0 / (nf * nw);
    let inv_ff = cos / (nf * nf);
    let grad: Vec<f32> = feature
        .data()
        .iter()
        .zip(target_weight.data().iter())
        .map(|(&f, &w)| -(w * inv - inv_ff * f))
        .collect();
    LossResult {
        value: -cos,
        dlogits: None,
        dfeature: Some(Tensor::from_vec(feature.shape().to_vec(), grad)?),
    }
    .check("angle_loss")
}

/// Weighted sum of loss results. Values add; gradients add slot-wise with
/// absent slots treated as zero.
pub fn combine(parts: &[(LossResult, f32)]) -> Result<LossResult> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("empty loss combination".into()));
    }
    let mut value = 0.0f32;
    let mut dlogits: Option<Tensor> = None;
    let mut dfeature: Option<Tensor> = None;
    for (part, weight) in parts {
        value += weight * part.value;
        if let Some(g) = &part.dlogits {
            match &mut dlogits {
                Some(acc) => acc.add_scaled(g, *weight)?,
                None => dlogits = Some(g.scale(*weight)),
            }
        }
        if let Some(g) = &part.dfeature {
            match &mut dfeature {
                Some(acc) => acc.add_scaled(g, *weight)?,
                None => dfeature = Some(g.scale(*weight)),
            }
        }
    }
    LossResult {
        value,
        dlogits,
        dfeature,
    }
    .check("combine")
}

/// Inputs a [`LossSpec`] is evaluated against. `feature` and `target_weight`
/// are only required by specs with a feature-space term; `margin_scale`
/// overrides the scale the margin calibration would otherwise derive from
/// `logits`.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub logits: &'a Tensor,
    pub feature: Option<&'a Tensor>,
    pub target_weight: Option<&'a Tensor>,
    pub margin_scale: Option<f32>,
}

/// Evaluates any `LossSpec` in one context.
pub fn evaluate_loss(spec: &LossSpec, ctx: &LossContext<'_>, target: usize) -> Result<LossResult> {
    spec.validate()?;
    match spec {
        LossSpec::Ce => ce_loss(ctx.logits, target),
        LossSpec::Logit => logit_loss(ctx.logits, target),
        LossSpec::CeTemperature(t) => temperature_ce(ctx.logits, target, *t),
        LossSpec::CeMargin => {
            let scale = ctx.margin_scale.unwrap_or_else(|| margin_scale(ctx.logits));
            margin_calibrated_ce_with_scale(ctx.logits, target, scale)
        }
        LossSpec::Angle => {
            let feature = ctx.feature.ok_or_else(|| {
                Error::InvalidArgument("angle loss needs the penultimate feature".into())
            })?;
            let tw = ctx.target_weight.ok_or_else(|| {
                Error::InvalidArgument("angle loss needs the target weight row".into())
            })?;
            angle_loss(feature, tw)
        }
        LossSpec::Combo(parts) => {
            let mut results = Vec::with_capacity(parts.len());
            for (member, weight) in parts {
                results.push((evaluate_loss(member, ctx, target)?, *weight));
            }
            combine(&results)
        }
    }
}

/// Closed-form gradient of cross-entropy with respect to the penultimate
/// feature: `sum_i -p_i (W_t - W_i)`. Exists solely as an oracle against the
/// reverse-mode path through the final dense layer. `p` must be a
/// probability vector.
pub fn ce_feature_gradient_closed_form(
    p: &Tensor,
    weights: &Tensor,
    target: usize,
) -> Result<Tensor> {
    if weights.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "ce_feature_gradient_closed_form".to_string(),
            detail: format!("weights must be N x D, got {:?}", weights.shape()),
        });
    }
    let n = weights.shape()[0];
    let d = weights.shape()[1];
    if p.shape() != [n] {
        return Err(Error::ShapeMismatch {
            context: "ce_feature_gradient_closed_form".to_string(),
            detail: format!("p {:?} vs {n} classes", p.shape()),
        });
    }
    if target >= n {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {n} classes"
        )));
    }
    let sum: f32 = p.data().iter().sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::InvalidArgument(format!(
            "p must sum to 1 within 1e-5, sums to {sum}"
        )));
    }
    let w = weights.data();
    let wt = &w[target * d..(target + 1) * d];
    let mut grad = vec![0.0f32; d];
    for i in 0..n {
        let pi = p.data()[i];
        let wi = &w[i * d..(i + 1) * d];
        for j in 0..d {
            grad[j] += -pi * (wt[j] - wi[j]);
        }
    }
    Tensor::from_vec(vec![d], grad)
}

/// Two-class probabilities at a given logit margin: the logistic pair
/// `(1 / (1 + e^-m), 1 / (1 + e^m))`. Each side is computed directly so the
/// tiny one keeps full precision instead of cancelling against 1.
pub fn two_class_prob(margin: f32) -> (f32, f32) {
    let p_t = 1.0 / (1.0 + (-margin).exp());
    let p_nt = 1.0 / (1.0 + margin.exp());
    (p_t, p_nt)
}

/// The exact uniform-probability limit of the temperature-CE feature
/// gradient: `-(W_t - mean_i W_i) / T`. Equivalence tests compare the real
/// gradient at large `T` against this direction.
pub fn large_t_limit_direction(weights: &Tensor, target: usize, temperature: f32) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if weights.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "large_t_limit_direction".to_string(),
            detail: format!("weights must be N x D, got {:?}", weights.shape()),
        });
    }
    let n = weights.shape()[0];
    let d = weights.shape()[1];
    if target >= n {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {n} classes"
        )));
    }
    let w = weights.data();
    let mut mean = vec![0.0f32; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += w[i * d + j];
        }
    }
    let inv_n = 1.0 / n as f32;
    let wt = &w[target * d..(target + 1) * d];
    let dir: Vec<f32> = (0..d)
        .map(|j| -(wt[j] - mean[j] * inv_n) / temperature)
        .collect();
    Tensor::from_vec(vec![d], dir)
}
