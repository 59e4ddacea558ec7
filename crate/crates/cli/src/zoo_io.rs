//! Dataset and zoo assembly for the CLI commands: regenerate or ingest the
//! dataset a plan describes, and train or load the zoo it names.

use std::path::Path;

use logitcal::model::ClassifierModel;
use logitcal::rng::derive_seed;
use logitcal::zoo::{
    build_architecture, generate_synthetic_dataset, ingest_idx, load_weights, save_weights,
    train_classifier, DataSource, DataSplit, TrainConfig,
};

use crate::plan::ExperimentPlan;
use crate::runner::Zoo;

pub fn load_dataset(plan: &ExperimentPlan) -> anyhow::Result<DataSplit> {
    let spec = plan.dataset_spec()?;
    match &spec.source {
        DataSource::SyntheticShapes => Ok(generate_synthetic_dataset(&spec)?),
        DataSource::IdxFiles { images, labels } => {
            let train = ingest_idx(images, labels)?;
            let (ti, tl) = (
                plan.dataset
                    .test_images
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("idx-files source needs test_images"))?,
                plan.dataset
                    .test_labels
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("idx-files source needs test_labels"))?,
            );
            let test = ingest_idx(ti, tl)?;
            Ok(DataSplit { train, test })
        }
    }
}

/// Per-architecture training seed: the zoo seed mixed with the position of
/// the architecture in the plan list.
pub fn arch_train_config(plan: &ExperimentPlan, arch_index: usize) -> TrainConfig {
    let mut cfg = plan.train_config();
    cfg.seed = derive_seed(plan.zoo.seed, arch_index as u64, 0x5A4F4F);
    cfg
}

/// Trains every architecture in the plan on the plan dataset.
pub fn train_zoo(plan: &ExperimentPlan, split: &DataSplit) -> anyhow::Result<Zoo> {
    let mut models = Vec::new();
    for (i, arch) in plan.zoo.architectures.iter().enumerate() {
        let spec = plan.dataset_spec()?;
        let untrained = build_architecture(
            arch,
            spec.image_shape,
            spec.class_count,
            derive_seed(plan.zoo.seed, i as u64, 0x494E4954),
        )?;
        let trained = train_classifier(&untrained, &split.train, &arch_train_config(plan, i))?;
        models.push((arch.clone(), trained));
    }
    Ok(Zoo { models })
}

pub fn save_zoo(zoo: &Zoo, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (label, model) in &zoo.models {
        save_weights(model, &dir.join(format!("{label}.nnwt")))?;
    }
    Ok(())
}

pub fn load_zoo(plan: &ExperimentPlan, dir: &Path) -> anyhow::Result<Zoo> {
    let mut models = Vec::new();
    for arch in &plan.zoo.architectures {
        let path = dir.join(format!("{arch}.nnwt"));
        if !path.exists() {
            anyhow::bail!(
                "weight file {} not found; run `logitcal train-zoo` first",
                path.display()
            );
        }
        let model: ClassifierModel = load_weights(&path)?;
        models.push((arch.clone(), model));
    }
    Ok(Zoo { models })
}

/// Loads the zoo from `zoo_dir` when given, otherwise trains it in memory.
pub fn obtain_zoo(
    plan: &ExperimentPlan,
    split: &DataSplit,
    zoo_dir: Option<&Path>,
) -> anyhow::Result<Zoo> {
    match zoo_dir {
        Some(dir) => load_zoo(plan, dir),
        None => train_zoo(plan, split),
    }
}
