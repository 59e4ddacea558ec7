//! Crafting and evaluating transferable *targeted* adversarial examples
//! against small image classifiers.
//!
//! The crate bundles a minimal f32 tensor core with reverse-mode
//! differentiation, a desk-scale zoo of trainable CNN/MLP classifiers, the
//! family of logit-calibrated attack objectives (temperature, margin, angle)
//! alongside plain cross-entropy and the negative-target-logit loss, the
//! iterative sign-gradient attack pipeline with momentum / translation-
//! invariant smoothing / diverse-input augmentation and ensembling, and the
//! logit-margin diagnostics that explain why calibration helps.

#![forbid(unsafe_code)]

pub mod attack;
pub mod diag;
pub mod error;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod model;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod zoo;

pub use attack::{
    di_transform, ensemble_forward, gaussian_kernel, ifgsm_step, mi_accumulate,
    run_targeted_attack, ti_smooth, AttackConfig, AttackResult, AttackState, DiConfig,
    EnsembleForward, MiConfig, TiConfig,
};
pub use diag::{
    aggregate, saturation_curve, saturation_summary, AggregateTrajectory, SaturationSummary,
    TrajectoryRecord, TrajectoryRow,
};
pub use error::{Error, Result};
pub use gradcheck::finite_difference_gradient;
pub use layer::{LayerGrads, LayerOp};
pub use loss::{
    angle_loss, ce_feature_gradient_closed_form, ce_loss, combine, evaluate_loss,
    large_t_limit_direction, logit_loss, margin_calibrated_ce, margin_scale, temperature_ce,
    two_class_prob, LossContext, LossResult, LossSpec,
};
pub use model::ClassifierModel;
pub use tape::Tape;
pub use tensor::{depthwise_convolve, Tensor};
