//! Experiment plan files: versioned TOML describing the dataset, the zoo,
//! the attack configuration, and the experiment grid.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use logitcal::attack::{AttackConfig, DiConfig, MiConfig, TiConfig};
use logitcal::loss::LossSpec;
use logitcal::zoo::{DataSource, DatasetSpec, TrainConfig};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub zoo: ZooSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_noise")]
    pub noise: u8,
    #[serde(default = "default_contrast")]
    pub contrast: u8,
    #[serde(default)]
    pub seed: u64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

fn default_source() -> String {
    "synthetic-shapes".to_string()
}
fn default_class_count() -> usize {
    10
}
fn default_image_size() -> usize {
    32
}
fn default_train_per_class() -> usize {
    1000
}
fn default_test_per_class() -> usize {
    50
}
fn default_noise() -> u8 {
    10
}
fn default_contrast() -> u8 {
    72
}

impl Default for DatasetSection {
    fn default() -> Self {
        toml::from_str("").expect("empty dataset section deserializes")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooSection {
    #[serde(default = "default_architectures")]
    pub architectures: Vec<String>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f32,
    #[serde(default = "default_momentum")]
    pub momentum: f32,
    #[serde(default)]
    pub seed: u64,
}

fn default_architectures() -> Vec<String> {
    logitcal::zoo::ZOO_ARCH_IDS
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_batch_size() -> usize {
    TrainConfig::default().batch_size
}
fn default_learning_rate() -> f32 {
    TrainConfig::default().learning_rate
}
fn default_momentum() -> f32 {
    TrainConfig::default().momentum
}

impl Default for ZooSection {
    fn default() -> Self {
        toml::from_str("").expect("empty zoo section deserializes")
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub epsilon: Option<f32>,
    pub alpha: Option<f32>,
    pub max_iters: Option<usize>,
    pub checkpoints: Option<Vec<usize>>,
    pub mi: Option<MiSection>,
    pub ti: Option<TiSection>,
    pub di: Option<DiSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiSection {
    pub enabled: Option<bool>,
    pub decay: Option<f32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiSection {
    pub enabled: Option<bool>,
    pub kernel_side: Option<usize>,
    pub sigma: Option<f32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiSection {
    pub enabled: Option<bool>,
    pub prob: Option<f32>,
    pub min_scale: Option<f32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_surrogates")]
    pub surrogates: Vec<String>,
    #[serde(default = "default_victims")]
    pub victims: Vec<String>,
    #[serde(default = "default_losses")]
    pub losses: Vec<LossEntry>,
    #[serde(default = "default_images")]
    pub images: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_target_mode")]
    pub target_mode: String,
    pub target_rank: Option<usize>,
    #[serde(default = "default_sweep_temperatures")]
    pub sweep_temperatures: Vec<f32>,
    #[serde(default = "default_target_ranks")]
    pub target_ranks: Vec<usize>,
}

fn default_surrogates() -> Vec<String> {
    vec!["cnn-a".to_string()]
}
fn default_victims() -> Vec<String> {
    vec!["cnn-b".to_string(), "cnn-c".to_string(), "mlp-d".to_string()]
}
fn default_losses() -> Vec<LossEntry> {
    vec![
        LossEntry {
            label: "ce".to_string(),
            kind: "ce".to_string(),
            temperature: None,
            weight: None,
            parts: None,
        },
        LossEntry {
            label: "t5".to_string(),
            kind: "ce-temperature".to_string(),
            temperature: Some(5.0),
            weight: None,
            parts: None,
        },
        LossEntry {
            label: "margin".to_string(),
            kind: "ce-margin".to_string(),
            temperature: None,
            weight: None,
            parts: None,
        },
        LossEntry {
            label: "angle".to_string(),
            kind: "angle".to_string(),
            temperature: None,
            weight: None,
            parts: None,
        },
        LossEntry {
            label: "logit".to_string(),
            kind: "logit".to_string(),
            temperature: None,
            weight: None,
            parts: None,
        },
    ]
}
fn default_images() -> usize {
    100
}
fn default_repetitions() -> usize {
    5
}
fn default_target_mode() -> String {
    "random".to_string()
}
fn default_sweep_temperatures() -> Vec<f32> {
    vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
}
fn default_target_ranks() -> Vec<usize> {
    vec![2, 4, 6, 8, 10]
}

impl Default for ExperimentSection {
    fn default() -> Self {
        toml::from_str("").expect("empty experiment section deserializes")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossEntry {
    pub label: String,
    pub kind: String,
    pub temperature: Option<f32>,
    /// Weight when this entry appears inside a combo's `parts`.
    pub weight: Option<f32>,
    pub parts: Option<Vec<LossEntry>>,
}

impl LossEntry {
    pub fn to_spec(&self) -> anyhow::Result<LossSpec> {
        let spec = match self.kind.as_str() {
            "ce" => LossSpec::Ce,
            "logit" => LossSpec::Logit,
            "ce-temperature" => {
                let t = self.temperature.ok_or_else(|| {
                    anyhow::anyhow!("loss '{}': ce-temperature needs `temperature`", self.label)
                })?;
                LossSpec::CeTemperature(t)
            }
            "ce-margin" => LossSpec::CeMargin,
            "angle" => LossSpec::Angle,
            "combo" => {
                let parts = self.parts.as_ref().ok_or_else(|| {
                    anyhow::anyhow!("loss '{}': combo needs `parts`", self.label)
                })?;
                let mut members = Vec::with_capacity(parts.len());
                for p in parts {
                    members.push((p.to_spec()?, p.weight.unwrap_or(1.0)));
                }
                LossSpec::Combo(members)
            }
            other => anyhow::bail!("loss '{}': unknown kind '{other}'", self.label),
        };
        spec.validate()
            .map_err(|e| anyhow::anyhow!("loss '{}': {e}", self.label))?;
        Ok(spec)
    }
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> anyhow::Result<(ExperimentPlan, Vec<u8>)> {
        let bytes = fs::read(path)
            .map_err(|e| anyhow::anyhow!("cannot read plan file {}: {e}", path.display()))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| anyhow::anyhow!("plan file {} is not UTF-8", path.display()))?;
        let plan: ExperimentPlan = toml::from_str(text)
            .map_err(|e| anyhow::anyhow!("malformed plan file {}: {e}", path.display()))?;
        if plan.schema != PLAN_SCHEMA_VERSION {
            anyhow::bail!(
                "plan schema {} is not supported (expected {PLAN_SCHEMA_VERSION})",
                plan.schema
            );
        }
        plan.validate()?;
        Ok((plan, bytes))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.experiment.repetitions == 0 {
            anyhow::bail!("experiment.repetitions must be at least 1");
        }
        match self.experiment.target_mode.as_str() {
            "random" => {}
            "rank" => {
                let k = self
                    .experiment
                    .target_rank
                    .ok_or_else(|| anyhow::anyhow!("target_mode = \"rank\" needs target_rank"))?;
                if k < 2 || k > self.dataset.class_count {
                    anyhow::bail!(
                        "target_rank {k} outside 2..={}",
                        self.dataset.class_count
                    );
                }
            }
            other => anyhow::bail!("unknown target_mode '{other}'"),
        }
        for entry in &self.experiment.losses {
            entry.to_spec()?;
        }
        let mut labels: Vec<&str> = self
            .experiment
            .losses
            .iter()
            .map(|l| l.label.as_str())
            .collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.experiment.losses.len() {
            anyhow::bail!("loss labels must be unique");
        }
        self.dataset_spec()?;
        self.attack_config()?;
        Ok(())
    }

    pub fn dataset_spec(&self) -> anyhow::Result<DatasetSpec> {
        let source = match self.dataset.source.as_str() {
            "synthetic-shapes" => DataSource::SyntheticShapes,
            "idx-files" => {
                let images = self
                    .dataset
                    .train_images
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("idx-files source needs train_images"))?;
                let labels = self
                    .dataset
                    .train_labels
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("idx-files source needs train_labels"))?;
                DataSource::IdxFiles { images, labels }
            }
            other => anyhow::bail!("unknown dataset source '{other}'"),
        };
        Ok(DatasetSpec {
            source,
            class_count: self.dataset.class_count,
            image_shape: [1, self.dataset.image_size, self.dataset.image_size],
            train_per_class: self.dataset.train_per_class,
            test_per_class: self.dataset.test_per_class,
            seed: self.dataset.seed,
            noise: self.dataset.noise,
            contrast: self.dataset.contrast,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.zoo.epochs,
            batch_size: self.zoo.batch_size,
            learning_rate: self.zoo.learning_rate,
            momentum: self.zoo.momentum,
            seed: self.zoo.seed,
        }
    }

    /// The attack configuration with plan overrides applied on the defaults.
    /// The per-run seed is assigned by the runner.
    pub fn attack_config(&self) -> anyhow::Result<AttackConfig> {
        let mut cfg = AttackConfig::default();
        let a = &self.attack;
        if let Some(v) = a.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = a.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = a.max_iters {
            cfg.max_iters = v;
            // Checkpoints follow the horizon unless set explicitly.
            if a.checkpoints.is_none() {
                cfg.checkpoints = AttackConfig::default()
                    .checkpoints
                    .into_iter()
                    .filter(|&c| c <= v)
                    .collect();
                if cfg.checkpoints.last() != Some(&v) {
                    cfg.checkpoints.push(v);
                }
            }
        }
        if let Some(v) = &a.checkpoints {
            cfg.checkpoints = v.clone();
        }
        if let Some(mi) = &a.mi {
            cfg.mi = MiConfig {
                enabled: mi.enabled.unwrap_or(cfg.mi.enabled),
                decay: mi.decay.unwrap_or(cfg.mi.decay),
            };
        }
        if let Some(ti) = &a.ti {
            cfg.ti = TiConfig {
                enabled: ti.enabled.unwrap_or(cfg.ti.enabled),
                kernel_side: ti.kernel_side.unwrap_or(cfg.ti.kernel_side),
                sigma: ti.sigma.unwrap_or(cfg.ti.sigma),
            };
        }
        if let Some(di) = &a.di {
            cfg.di = DiConfig {
                enabled: di.enabled.unwrap_or(cfg.di.enabled),
                prob: di.prob.unwrap_or(cfg.di.prob),
                min_scale: di.min_scale.unwrap_or(cfg.di.min_scale),
            };
        }
        cfg.validate()
            .map_err(|e| anyhow::anyhow!("attack section: {e}"))?;
        Ok(cfg)
    }
}
