//! The iterative targeted attack pipeline: sign-gradient steps inside an
//! L-infinity ball, with optional momentum accumulation, gradient smoothing
//! by Gaussian convolution, random resize-and-pad input diversity, and
//! multi-model ensembling. The objective is any [`LossSpec`]; all losses are
//! minimized, so the update is a descent step.
//!
//! Diagnostics never see augmentation noise: trajectory rows and the margin
//! calibration scale are always computed from the untransformed adversarial
//! image, and success checks run on the clean image as well.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diag::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::loss::{evaluate_loss, margin_scale, LossContext, LossSpec};
use crate::model::ClassifierModel;
use crate::tape::Tape;
use crate::tensor::{depthwise_convolve, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MiConfig {
    pub enabled: bool,
    /// Momentum decay; the accumulated direction is
    /// `decay * momentum + grad / |grad|_1`.
    pub decay: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiConfig {
    pub enabled: bool,
    pub kernel_side: usize,
    pub sigma: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiConfig {
    pub enabled: bool,
    /// Probability of applying the resize-and-pad transform per iteration.
    pub prob: f32,
    /// Smallest resize target as a fraction of the input side.
    pub min_scale: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// L-infinity budget in pixel units.
    pub epsilon: f32,
    /// Step size in pixel units.
    pub alpha: f32,
    pub max_iters: usize,
    /// Iterations (1-based) at which to snapshot the adversarial image.
    pub checkpoints: Vec<usize>,
    pub mi: MiConfig,
    pub ti: TiConfig,
    pub di: DiConfig,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 16.0,
            alpha: 2.0,
            max_iters: 300,
            checkpoints: vec![20, 100, 300],
            mi: MiConfig {
                enabled: true,
                decay: 1.0,
            },
            ti: TiConfig {
                enabled: true,
                kernel_side: 5,
                sigma: 1.5,
            },
            di: DiConfig {
                enabled: true,
                prob: 0.7,
                min_scale: 0.875,
            },
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.epsilon > 0.0 && self.alpha > self.epsilon {
            return Err(Error::InvalidArgument(format!(
                "alpha {} exceeds epsilon {}",
                self.alpha, self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if let Some(&c) = self
            .checkpoints
            .iter()
            .find(|&&c| c == 0 || c > self.max_iters)
        {
            return Err(Error::InvalidArgument(format!(
                "checkpoint {c} outside 1..={}",
                self.max_iters
            )));
        }
        if self.ti.enabled {
            if self.ti.kernel_side % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "TI kernel side must be odd, got {}",
                    self.ti.kernel_side
                )));
            }
            if !(self.ti.sigma > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "TI sigma must be positive, got {}",
                    self.ti.sigma
                )));
            }
        }
        if self.di.enabled {
            if !(0.0..=1.0).contains(&self.di.prob) {
                return Err(Error::InvalidArgument(format!(
                    "DI probability must be in [0, 1], got {}",
                    self.di.prob
                )));
            }
            if !(self.di.min_scale > 0.0 && self.di.min_scale <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "DI min scale must be in (0, 1], got {}",
                    self.di.min_scale
                )));
            }
        }
        if self.mi.enabled && !(self.mi.decay >= 0.0 && self.mi.decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "MI decay must be finite and non-negative, got {}",
                self.mi.decay
            )));
        }
        Ok(())
    }
}

/// Mutable per-run state. The perturbation invariants (L-infinity ball and
/// pixel range) hold after every step.
#[derive(Debug, Clone)]
pub struct AttackState {
    pub x_orig: Tensor,
    pub x_adv: Tensor,
    pub momentum: Tensor,
    pub iteration: usize,
}

impl AttackState {
    pub fn new(x: &Tensor) -> Self {
        AttackState {
            x_orig: x.clone(),
            x_adv: x.clone(),
            momentum: Tensor::zeros(x.shape().to_vec()),
            iteration: 0,
        }
    }

    fn check_invariants(&self, epsilon: f32) -> Result<()> {
        for (&a, &o) in self.x_adv.data().iter().zip(self.x_orig.data()) {
            if (a - o).abs() > epsilon + 1e-4 {
                return Err(Error::InvalidArgument(format!(
                    "perturbation {} exceeds epsilon {epsilon}",
                    (a - o).abs()
                )));
            }
            if !(0.0..=255.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "pixel {a} escaped the [0, 255] range"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub x_adv: Tensor,
    /// `(iteration, snapshot)` pairs in checkpoint order.
    pub snapshots: Vec<(usize, Tensor)>,
    /// Per-iteration top-logit statistics on the clean adversarial image,
    /// present when recording was requested.
    pub trajectory: Option<TrajectoryRecord>,
    /// Whether the fused surrogate predicts the target on the final image.
    pub white_box_success: bool,
}

pub fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One sign-gradient descent step: `x <- clip_box(clip_ball(x - alpha * sign(g)))`.
pub fn ifgsm_step(state: &mut AttackState, grad: &Tensor, alpha: f32, epsilon: f32) -> Result<()> {
    if grad.shape() != state.x_adv.shape() {
        return Err(Error::ShapeMismatch {
            context: "ifgsm_step".to_string(),
            detail: format!("grad {:?} vs image {:?}", grad.shape(), state.x_adv.shape()),
        });
    }
    for ((a, &g), &o) in state
        .x_adv
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.x_orig.data())
    {
        let stepped = *a - alpha * sign(g);
        *a = stepped.clamp(o - epsilon, o + epsilon).clamp(0.0, 255.0);
    }
    state.iteration += 1;
    Ok(())
}

/// Momentum accumulation: `decay * momentum + grad / |grad|_1`, with the
/// normalized term defined as zero when the gradient is identically zero.
pub fn mi_accumulate(momentum: &Tensor, grad: &Tensor, decay: f32) -> Result<Tensor> {
    if momentum.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            context: "mi_accumulate".to_string(),
            detail: format!("{:?} vs {:?}", momentum.shape(), grad.shape()),
        });
    }
    let l1 = grad.l1_norm();
    let mut out = momentum.scale(decay);
    if l1 > 0.0 {
        out.add_scaled(grad, 1.0 / l1)?;
    }
    Ok(out)
}

/// Normalized Gaussian stencil `exp(-(i^2 + j^2) / (2 sigma^2))` on a
/// `side x side` grid, scaled to sum to one.
pub fn gaussian_kernel(side: usize, sigma: f32) -> Result<Tensor> {
    if side % 2 == 0 || side == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel side must be odd, got {side}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let half = (side / 2) as i64;
    let denom = 2.0 * f64::from(sigma) * f64::from(sigma);
    let mut data = Vec::with_capacity(side * side);
    let mut sum = 0.0f64;
    for i in -half..=half {
        for j in -half..=half {
            let v = (-((i * i + j * j) as f64) / denom).exp();
            sum += v;
            data.push(v);
        }
    }
    let data: Vec<f32> = data.into_iter().map(|v| (v / sum) as f32).collect();
    Tensor::from_vec(vec![side, side], data)
}

/// Translation-invariant smoothing: depthwise convolution of the gradient
/// with a normalized Gaussian kernel.
pub fn ti_smooth(grad: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    depthwise_convolve(grad, kernel)
}

/// Diverse-input transform: with probability `prob`, nearest-neighbor resize
/// to a random smaller square and zero-pad back to the original size at a
/// random offset; otherwise the identity. Output shape always equals input
/// shape. Exactly one uniform draw is consumed for the probability gate.
pub fn di_transform(x: &Tensor, di: &DiConfig, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if x.shape().len() != 3 || x.shape()[1] != x.shape()[2] {
        return Err(Error::ShapeMismatch {
            context: "di_transform".to_string(),
            detail: format!("expected a square C x S x S image, got {:?}", x.shape()),
        });
    }
    let gate: f32 = rng.gen();
    if gate >= di.prob {
        return Ok(x.clone());
    }
    let (c, s) = (x.shape()[0], x.shape()[1]);
    let r_min = ((di.min_scale * s as f32).ceil() as usize).clamp(1, s);
    let r = rng.gen_range(r_min..=s);
    let dy = rng.gen_range(0..=(s - r));
    let dx = rng.gen_range(0..=(s - r));
    let src = x.data();
    let mut out = vec![0.0f32; c * s * s];
    for ch in 0..c {
        let plane = &src[ch * s * s..(ch + 1) * s * s];
        for y in 0..r {
            let sy = y * s / r;
            for xx in 0..r {
                let sx = xx * s / r;
                out[(ch * s + y + dy) * s + xx + dx] = plane[sy * s + sx];
            }
        }
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// One forward pass over an ensemble: fused logits are the weighted sum of
/// the member logits; per-member features and tapes are retained so
/// feature-space loss terms can be averaged with the same weights.
pub struct EnsembleForward<'a> {
    pub fused_logits: Tensor,
    pub members: Vec<EnsembleMember<'a>>,
}

pub struct EnsembleMember<'a> {
    pub weight: f32,
    pub feature: Tensor,
    pub tape: Tape<'a>,
}

pub fn ensemble_forward<'a>(
    models: &[&'a ClassifierModel],
    x: &Tensor,
    weights: &[f32],
) -> Result<EnsembleForward<'a>> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("empty model ensemble".to_string()));
    }
    if weights.len() != models.len() {
        return Err(Error::CountMismatch {
            context: "ensemble weights".to_string(),
            left: weights.len(),
            right: models.len(),
        });
    }
    let wsum: f32 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-4 {
        return Err(Error::InvalidArgument(format!(
            "ensemble weights must sum to 1, sum to {wsum}"
        )));
    }
    let n = models[0].class_count();
    for m in models {
        if m.class_count() != n {
            return Err(Error::CountMismatch {
                context: format!("class count of {}", m.arch_id()),
                left: m.class_count(),
                right: n,
            });
        }
    }
    let mut fused = Tensor::zeros(vec![n]);
    let mut members = Vec::with_capacity(models.len());
    for (&model, &w) in models.iter().zip(weights) {
        let (logits, feature, tape) = model.forward(x)?;
        fused.add_scaled(&logits, w)?;
        members.push(EnsembleMember {
            weight: w,
            feature,
            tape,
        });
    }
    Ok(EnsembleForward {
        fused_logits: fused,
        members,
    })
}

pub fn uniform_weights(k: usize) -> Vec<f32> {
    vec![1.0 / k as f32; k]
}

/// Loss evaluation over an ensemble forward. Logit-space terms apply to the
/// fused logits; feature-space terms are evaluated per member against that
/// member's target weight row and combined with the ensemble weights.
fn evaluate_ensemble_loss(
    spec: &LossSpec,
    ens: &EnsembleForward<'_>,
    target: usize,
    clean_margin_scale: Option<f32>,
) -> Result<(f32, Option<Tensor>, Vec<Option<Tensor>>)> {
    match spec {
        LossSpec::Angle => {
            let mut value = 0.0f32;
            let mut dfeatures = Vec::with_capacity(ens.members.len());
            for member in &ens.members {
                let tw = member.tape.model().class_weight_row(target)?;
                let res = evaluate_loss(
                    &LossSpec::Angle,
                    &LossContext {
                        logits: &ens.fused_logits,
                        feature: Some(&member.feature),
                        target_weight: Some(&tw),
                        margin_scale: None,
                    },
                    target,
                )?;
                value += member.weight * res.value;
                dfeatures.push(Some(res.dfeature.unwrap().scale(member.weight)));
            }
            Ok((value, None, dfeatures))
        }
        LossSpec::Combo(parts) => {
            let mut value = 0.0f32;
            let mut dlogits: Option<Tensor> = None;
            let mut dfeatures: Vec<Option<Tensor>> = vec![None; ens.members.len()];
            for (member_spec, weight) in parts {
                let (v, dl, dfs) =
                    evaluate_ensemble_loss(member_spec, ens, target, clean_margin_scale)?;
                value += weight * v;
                if let Some(g) = dl {
                    match &mut dlogits {
                        Some(acc) => acc.add_scaled(&g, *weight)?,
                        None => dlogits = Some(g.scale(*weight)),
                    }
                }
                for (slot, df) in dfeatures.iter_mut().zip(dfs) {
                    if let Some(g) = df {
                        match slot {
                            Some(acc) => acc.add_scaled(&g, *weight)?,
                            None => *slot = Some(g.scale(*weight)),
                        }
                    }
                }
            }
            Ok((value, dlogits, dfeatures))
        }
        logit_space => {
            let res = evaluate_loss(
                logit_space,
                &LossContext {
                    logits: &ens.fused_logits,
                    feature: None,
                    target_weight: None,
                    margin_scale: clean_margin_scale,
                },
                target,
            )?;
            Ok((res.value, res.dlogits, vec![None; ens.members.len()]))
        }
    }
}

/// Runs the full targeted attack on an equal-weight ensemble of surrogates.
///
/// Per iteration: diverse-input transform, ensemble forward, loss, backward
/// to the input, TI smoothing, MI accumulation, sign step with projection.
/// When recording is requested (or the margin calibration needs its scale),
/// an extra forward on the untransformed image supplies clean logits.
pub fn run_targeted_attack(
    models: &[&ClassifierModel],
    x: &Tensor,
    target: usize,
    loss: &LossSpec,
    cfg: &AttackConfig,
    record_trajectory: bool,
) -> Result<AttackResult> {
    cfg.validate()?;
    loss.validate()?;
    if models.is_empty() {
        return Err(Error::InvalidArgument("no surrogate models".to_string()));
    }
    let n = models[0].class_count();
    if target >= n {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {n} classes"
        )));
    }
    for &v in x.data() {
        if !(0.0..=255.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "input pixel {v} outside [0, 255]"
            )));
        }
    }
    let weights = uniform_weights(models.len());
    let ti_kernel = if cfg.ti.enabled {
        Some(gaussian_kernel(cfg.ti.kernel_side, cfg.ti.sigma)?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AttackState::new(x);
    let mut trajectory = record_trajectory.then(TrajectoryRecord::new);
    let mut snapshots = Vec::with_capacity(cfg.checkpoints.len());
    let di_active = cfg.di.enabled && cfg.di.prob > 0.0;
    let needs_clean = record_trajectory || loss.uses_margin_scale();

    for iter in 1..=cfg.max_iters {
        // Clean logits for diagnostics and the margin scale. When DI is off
        // the update forward is already clean, so it is reused below.
        let mut clean_scale: Option<f32> = None;
        let mut clean_logits: Option<Tensor> = None;
        if di_active && needs_clean {
            let ens = ensemble_forward(models, &state.x_adv, &weights)?;
            clean_scale = Some(margin_scale(&ens.fused_logits));
            clean_logits = Some(ens.fused_logits);
        }

        let x_in = if di_active {
            di_transform(&state.x_adv, &cfg.di, &mut rng)?
        } else {
            state.x_adv.clone()
        };
        let ens = ensemble_forward(models, &x_in, &weights)?;
        if !di_active {
            clean_scale = Some(margin_scale(&ens.fused_logits));
        }
        if let Some(rec) = trajectory.as_mut() {
            let logits = clean_logits.as_ref().unwrap_or(&ens.fused_logits);
            rec.record_iteration(iter, logits, target)?;
        }

        let (value, dlogits, dfeatures) = evaluate_ensemble_loss(loss, &ens, target, clean_scale)?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: format!("loss value at iteration {iter}"),
            });
        }
        let mut grad = Tensor::zeros(x.shape().to_vec());
        for (member, dfeature) in ens.members.iter().zip(&dfeatures) {
            let member_dlogits = dlogits.as_ref().map(|g| g.scale(member.weight));
            let g = member
                .tape
                .backward_to_input_with(member_dlogits.as_ref(), dfeature.as_ref())?;
            grad.add_scaled(&g, 1.0)?;
        }
        grad.check_finite(&format!("input gradient at iteration {iter}"))?;

        if let Some(kernel) = &ti_kernel {
            grad = ti_smooth(&grad, kernel)?;
        }
        let direction = if cfg.mi.enabled {
            state.momentum = mi_accumulate(&state.momentum, &grad, cfg.mi.decay)?;
            state.momentum.clone()
        } else {
            grad
        };
        ifgsm_step(&mut state, &direction, cfg.alpha, cfg.epsilon)?;
        state.check_invariants(cfg.epsilon)?;

        if cfg.checkpoints.contains(&iter) {
            snapshots.push((iter, state.x_adv.clone()));
        }
    }

    let final_logits = ensemble_forward(models, &state.x_adv, &weights)?.fused_logits;
    let white_box_success = final_logits.argmax() == target;
    Ok(AttackResult {
        x_adv: state.x_adv,
        snapshots,
        trajectory,
        white_box_success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::LayerOp;

    fn img(data: Vec<f32>, s: usize) -> Tensor {
        Tensor::from_vec(vec![1, s, s], data).unwrap()
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(3.0), 1.0);
        assert_eq!(sign(-0.5), -1.0);
    }

    #[test]
    fn step_decreases_on_positive_gradient() {
        let x = img(vec![100.0; 4], 2);
        let mut state = AttackState::new(&x);
        let g = img(vec![1.0; 4], 2);
        ifgsm_step(&mut state, &g, 2.0, 16.0).unwrap();
        assert!(state.x_adv.data().iter().all(|&v| v == 98.0));
    }

    #[test]
    fn step_projects_to_epsilon_ball() {
        let x = img(vec![100.0; 4], 2);
        let mut state = AttackState::new(&x);
        let g = img(vec![1.0; 4], 2);
        // 9 steps of 2 pixels asks for 18; the ball caps it at 16.
        for _ in 0..9 {
            ifgsm_step(&mut state, &g, 2.0, 16.0).unwrap();
        }
        assert!(state.x_adv.data().iter().all(|&v| v == 84.0));
        state.check_invariants(16.0).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_image_unchanged() {
        let x = img(vec![5.0, 250.0, 0.0, 128.0], 2);
        let mut state = AttackState::new(&x);
        let g = Tensor::zeros(vec![1, 2, 2]);
        ifgsm_step(&mut state, &g, 2.0, 16.0).unwrap();
        assert_eq!(state.x_adv, x);
    }

    #[test]
    fn zero_epsilon_pins_to_original() {
        let x = img(vec![10.0; 4], 2);
        let mut state = AttackState::new(&x);
        let g = img(vec![-1.0; 4], 2);
        ifgsm_step(&mut state, &g, 2.0, 0.0).unwrap();
        assert_eq!(state.x_adv, x);
    }

    #[test]
    fn mi_zero_decay_returns_normalized_gradient() {
        let m = Tensor::from_vec(vec![2], vec![5.0, 5.0]).unwrap();
        let g = Tensor::from_vec(vec![2], vec![3.0, -1.0]).unwrap();
        let out = mi_accumulate(&m, &g, 0.0).unwrap();
        assert_eq!(out.data(), &[0.75, -0.25]);
    }

    #[test]
    fn mi_zero_gradient_decays_momentum() {
        let m = Tensor::from_vec(vec![2], vec![4.0, -2.0]).unwrap();
        let g = Tensor::zeros(vec![2]);
        let out = mi_accumulate(&m, &g, 0.5).unwrap();
        assert_eq!(out.data(), &[2.0, -1.0]);
    }

    #[test]
    fn mi_two_steps_double_from_zero() {
        let g = Tensor::from_vec(vec![2], vec![2.0, 2.0]).unwrap();
        let m0 = Tensor::zeros(vec![2]);
        let m1 = mi_accumulate(&m0, &g, 1.0).unwrap();
        let m2 = mi_accumulate(&m1, &g, 1.0).unwrap();
        for (a, b) in m2.data().iter().zip(m1.data()) {
            assert!((a - 2.0 * b).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_kernel_normalizes_and_centers() {
        let k = gaussian_kernel(5, 1.5).unwrap();
        let sum: f32 = k.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        // Frozen from the oracle: evaluate exp(-(i^2+j^2)/(2*1.5^2)) on the
        // 5x5 integer grid and normalize; the center entry is 1/11.7217175.
        assert!((k.data()[12] - 0.085_311_76).abs() < 1e-6, "{}", k.data()[12]);
        // Center is the max.
        assert!(k.data().iter().all(|&v| v <= k.data()[12]));
    }

    #[test]
    fn gaussian_kernel_rejects_even_side() {
        assert!(gaussian_kernel(4, 1.5).is_err());
    }

    #[test]
    fn ti_kernel_side_one_is_identity() {
        let k = gaussian_kernel(1, 1.5).unwrap();
        assert_eq!(k.data(), &[1.0]);
        let g = img(vec![1.0, -2.0, 3.0, 0.5], 2);
        assert_eq!(ti_smooth(&g, &k).unwrap(), g);
    }

    #[test]
    fn di_probability_zero_is_identity() {
        let di = DiConfig {
            enabled: true,
            prob: 0.0,
            min_scale: 0.875,
        };
        let x = img((0..64).map(|v| v as f32).collect(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            assert_eq!(di_transform(&x, &di, &mut rng).unwrap(), x);
        }
    }

    #[test]
    fn di_preserves_shape_over_many_draws() {
        let di = DiConfig {
            enabled: true,
            prob: 1.0,
            min_scale: 0.6,
        };
        let x = img((0..1024).map(|v| (v % 251) as f32).collect(), 32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let out = di_transform(&x, &di, &mut rng).unwrap();
            assert_eq!(out.shape(), x.shape());
        }
    }

    #[test]
    fn di_fixed_seed_replays_identically() {
        let di = DiConfig {
            enabled: true,
            prob: 0.7,
            min_scale: 0.875,
        };
        let x = img((0..256).map(|v| v as f32).collect(), 16);
        let run = |seed: u64| -> Vec<Tensor> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| di_transform(&x, &di, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    fn toy_model(seed: u64) -> ClassifierModel {
        crate::zoo::build_architecture("cnn-c", [1, 8, 8], 3, seed).unwrap()
    }

    #[test]
    fn single_model_ensemble_matches_forward() {
        // cnn-c needs 32x32-ish pooling; use a small dense model instead.
        let w = Tensor::from_vec(vec![2, 4], vec![0.1, -0.2, 0.3, 0.4, -0.1, 0.2, 0.0, 0.5])
            .unwrap();
        let model = ClassifierModel::new(
            "toy",
            vec![
                LayerOp::Flatten,
                LayerOp::Dense {
                    weight: w,
                    bias: Tensor::zeros(vec![2]),
                },
            ],
            [1, 2, 2],
        )
        .unwrap();
        let x = img(vec![1.0, 2.0, 3.0, 4.0], 2);
        let ens = ensemble_forward(&[&model], &x, &[1.0]).unwrap();
        assert_eq!(ens.fused_logits.data(), model.logits(&x).unwrap().data());
        let _ = toy_model; // keep the helper for other tests
    }

    #[test]
    fn two_member_fusion_averages_logits() {
        let mk = |b0: f32, b1: f32| {
            ClassifierModel::new(
                "toy",
                vec![
                    LayerOp::Flatten,
                    LayerOp::Dense {
                        weight: Tensor::zeros(vec![2, 1]),
                        bias: Tensor::from_vec(vec![2], vec![b0, b1]).unwrap(),
                    },
                ],
                [1, 1, 1],
            )
            .unwrap()
        };
        let a = mk(1.0, 0.0);
        let b = mk(0.0, 1.0);
        let x = Tensor::from_vec(vec![1, 1, 1], vec![0.0]).unwrap();
        let ens = ensemble_forward(&[&a, &b], &x, &[0.5, 0.5]).unwrap();
        assert_eq!(ens.fused_logits.data(), &[0.5, 0.5]);
    }

    #[test]
    fn ensemble_rejects_class_count_mismatch() {
        let mk = |n: usize| {
            ClassifierModel::new(
                "toy",
                vec![
                    LayerOp::Flatten,
                    LayerOp::Dense {
                        weight: Tensor::zeros(vec![n, 1]),
                        bias: Tensor::zeros(vec![n]),
                    },
                ],
                [1, 1, 1],
            )
            .unwrap()
        };
        let a = mk(2);
        let b = mk(3);
        let x = Tensor::from_vec(vec![1, 1, 1], vec![0.0]).unwrap();
        assert!(matches!(
            ensemble_forward(&[&a, &b], &x, &[0.5, 0.5]),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut cfg = AttackConfig::default();
        cfg.alpha = 20.0;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::default();
        cfg.checkpoints = vec![301];
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::default();
        cfg.ti.kernel_side = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::default();
        cfg.di.prob = 1.5;
        assert!(cfg.validate().is_err());
        assert!(AttackConfig::default().validate().is_ok());
    }
}
