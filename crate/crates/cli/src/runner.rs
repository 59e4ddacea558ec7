//! Experiment protocols: target selection, victim evaluation, and the
//! attack grids behind the transfer, temperature-sweep, ensemble-holdout,
//! and varied-target-rank experiments.
//!
//! Cells of a grid (image x repetition x loss) are mutually independent;
//! every cell derives its RNG from (seed, repetition, image index) so
//! results do not depend on evaluation order. Loss columns share the cell
//! seed, which makes columns comparable run-to-run (a temperature-1 column
//! reproduces the cross-entropy column exactly).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use logitcal::attack::{ensemble_forward, run_targeted_attack, uniform_weights, AttackConfig};
use logitcal::loss::LossSpec;
use logitcal::model::ClassifierModel;
use logitcal::rng::derive_seed;
use logitcal::tensor::Tensor;

use crate::report::{Cell, RepResult, TransferReport, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetMode {
    /// Uniform over classes other than the clean argmax.
    Random,
    /// The class whose clean logit has the given rank (rank 1 = argmax).
    Rank(usize),
}

/// Picks the attack target from the clean surrogate logits.
pub fn select_target(
    clean_logits: &Tensor,
    mode: TargetMode,
    rng: &mut ChaCha8Rng,
) -> anyhow::Result<usize> {
    let n = clean_logits.len();
    match mode {
        TargetMode::Random => {
            let top = clean_logits.argmax();
            let pick = rng.gen_range(0..n - 1);
            Ok(if pick >= top { pick + 1 } else { pick })
        }
        TargetMode::Rank(k) => {
            if k < 2 || k > n {
                anyhow::bail!("target rank {k} outside 2..={n}");
            }
            let mut order: Vec<usize> = (0..n).collect();
            // Descending by logit, ties toward the lower class index.
            order.sort_by(|&a, &b| {
                clean_logits.data()[b]
                    .partial_cmp(&clean_logits.data()[a])
                    .expect("finite logits")
                    .then(a.cmp(&b))
            });
            Ok(order[k - 1])
        }
    }
}

/// Targeted success: the victim's top-1 prediction equals the target, with
/// logit ties broken toward the lowest class index.
pub fn evaluate_success(
    victim: &ClassifierModel,
    x_adv: &Tensor,
    target: usize,
) -> anyhow::Result<bool> {
    Ok(victim.logits(x_adv)?.argmax() == target)
}

/// One experiment grid: a fixed surrogate set attacked with several losses,
/// evaluated against several victims at every checkpoint.
pub struct GridSpec<'a> {
    pub surrogate_label: String,
    pub surrogates: Vec<&'a ClassifierModel>,
    pub victims: Vec<(String, &'a ClassifierModel)>,
    pub losses: Vec<(String, LossSpec)>,
    pub target_mode: TargetMode,
    /// Annotates every produced cell (used by the varied-target report).
    pub target_rank_label: Option<usize>,
}

pub struct GridParams<'a> {
    pub images: &'a [Tensor],
    pub image_count: usize,
    pub repetitions: usize,
    pub attack: AttackConfig,
    pub seed: u64,
}

/// Runs one grid and returns its cells in deterministic order
/// (loss x victim x checkpoint).
pub fn run_grid(grid: &GridSpec<'_>, params: &GridParams<'_>) -> anyhow::Result<Vec<Cell>> {
    let image_count = params.image_count.min(params.images.len());
    let reps = params.repetitions;
    let checkpoints = params.attack.checkpoints.clone();
    let weights = uniform_weights(grid.surrogates.len());

    // counts[loss][victim][checkpoint][rep]
    let mut counts =
        vec![
            vec![vec![vec![0usize; reps]; checkpoints.len()]; grid.victims.len()];
            grid.losses.len()
        ];

    for rep in 0..reps {
        // Repetition seeds are base seed + repetition index (logged in the
        // report); every cell derives an independent stream from its own
        // image index.
        let rep_seed = params.seed.wrapping_add(rep as u64);
        for img_idx in 0..image_count {
            let image = &params.images[img_idx];
            let cell_seed = derive_seed(rep_seed, img_idx as u64, 1);
            let clean = ensemble_forward(&grid.surrogates, image, &weights)
                .map_err(|e| anyhow::anyhow!("clean forward: {e}"))?
                .fused_logits;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell_seed, 0x5447, 0));
            let target = select_target(&clean, grid.target_mode, &mut rng)?;

            for (loss_idx, (_, spec)) in grid.losses.iter().enumerate() {
                let cfg = AttackConfig {
                    seed: cell_seed,
                    ..params.attack.clone()
                };
                let result =
                    run_targeted_attack(&grid.surrogates, image, target, spec, &cfg, false)
                        .map_err(|e| anyhow::anyhow!("attack: {e}"))?;
                for (iter, snapshot) in &result.snapshots {
                    let cp_idx = checkpoints
                        .iter()
                        .position(|c| c == iter)
                        .expect("snapshot iterations come from the checkpoint list");
                    for (v_idx, (_, victim)) in grid.victims.iter().enumerate() {
                        if evaluate_success(victim, snapshot, target)? {
                            counts[loss_idx][v_idx][cp_idx][rep] += 1;
                        }
                    }
                }
            }
        }
    }

    let mut cells = Vec::new();
    for (loss_idx, (loss_label, _)) in grid.losses.iter().enumerate() {
        for (v_idx, (victim_label, _)) in grid.victims.iter().enumerate() {
            for (cp_idx, &checkpoint) in checkpoints.iter().enumerate() {
                let per_rep: Vec<RepResult> = (0..reps)
                    .map(|rep| {
                        let successes = counts[loss_idx][v_idx][cp_idx][rep];
                        RepResult {
                            successes,
                            total: image_count,
                            rate: if image_count == 0 {
                                0.0
                            } else {
                                successes as f64 / image_count as f64
                            },
                        }
                    })
                    .collect();
                let successes = per_rep.iter().map(|r| r.successes).sum();
                let mean_rate = per_rep.iter().map(|r| r.rate).sum::<f64>() / reps as f64;
                cells.push(Cell {
                    surrogate: grid.surrogate_label.clone(),
                    victim: victim_label.clone(),
                    loss: loss_label.clone(),
                    checkpoint,
                    white_box: grid
                        .surrogates
                        .iter()
                        .any(|s| s.arch_id() == victim_label.as_str()),
                    target_rank: grid.target_rank_label,
                    successes,
                    total: image_count * reps,
                    per_rep,
                    mean_rate,
                });
            }
        }
    }
    Ok(cells)
}

pub struct ReportMeta {
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub repetitions: usize,
    pub images_per_cell: usize,
    pub ensemble_weights: Option<Vec<f64>>,
}

pub fn assemble_report(meta: ReportMeta, cells: Vec<Cell>) -> TransferReport {
    TransferReport {
        schema: REPORT_SCHEMA_VERSION,
        kind: meta.kind,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: meta.seed,
        config_hash: meta.config_hash,
        repetitions: meta.repetitions,
        images_per_cell: meta.images_per_cell,
        repetition_seeds: (0..meta.repetitions as u64).map(|r| meta.seed + r).collect(),
        ensemble_weights: meta.ensemble_weights,
        cells,
    }
}

/// A trained zoo keyed by architecture id.
pub struct Zoo {
    pub models: Vec<(String, ClassifierModel)>,
}

impl Zoo {
    pub fn get(&self, id: &str) -> anyhow::Result<&ClassifierModel> {
        self.models
            .iter()
            .find(|(label, _)| label == id)
            .map(|(_, m)| m)
            .ok_or_else(|| anyhow::anyhow!("architecture '{id}' is not in the zoo"))
    }
}

/// Single-model transfer: each surrogate attacks with every loss; every
/// plan victim is evaluated at every checkpoint.
pub fn run_single_model_transfer(
    zoo: &Zoo,
    surrogates: &[String],
    victims: &[String],
    losses: &[(String, LossSpec)],
    params: &GridParams<'_>,
    target_mode: TargetMode,
) -> anyhow::Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for surrogate in surrogates {
        let model = zoo.get(surrogate)?;
        let grid = GridSpec {
            surrogate_label: surrogate.clone(),
            surrogates: vec![model],
            victims: victims
                .iter()
                .map(|v| Ok((v.clone(), zoo.get(v)?)))
                .collect::<anyhow::Result<Vec<_>>>()?,
            losses: losses.to_vec(),
            target_mode,
            target_rank_label: None,
        };
        cells.extend(run_grid(&grid, params)?);
    }
    Ok(cells)
}

/// Temperature sweep: one cross-entropy column per temperature plus the
/// negative-target-logit reference column.
pub fn sweep_losses(temperatures: &[f32]) -> Vec<(String, LossSpec)> {
    let mut losses: Vec<(String, LossSpec)> = temperatures
        .iter()
        .map(|&t| (format!("t={t}"), LossSpec::CeTemperature(t)))
        .collect();
    losses.push(("logit".to_string(), LossSpec::Logit));
    losses
}

/// Ensemble hold-out: every zoo model is attacked by the equal-weight
/// ensemble of all the others.
pub fn run_ensemble_holdout(
    zoo: &Zoo,
    losses: &[(String, LossSpec)],
    params: &GridParams<'_>,
    target_mode: TargetMode,
) -> anyhow::Result<Vec<Cell>> {
    if zoo.models.len() < 2 {
        anyhow::bail!("ensemble hold-out needs at least 2 zoo models");
    }
    let mut cells = Vec::new();
    for hold_out in 0..zoo.models.len() {
        let (holdout_label, holdout_model) = &zoo.models[hold_out];
        let sources: Vec<&ClassifierModel> = zoo
            .models
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != hold_out)
            .map(|(_, (_, m))| m)
            .collect();
        let label = format!(
            "ensemble(-{})",
            holdout_label
        );
        let grid = GridSpec {
            surrogate_label: label,
            surrogates: sources,
            victims: vec![(holdout_label.clone(), holdout_model)],
            losses: losses.to_vec(),
            target_mode,
            target_rank_label: None,
        };
        cells.extend(run_grid(&grid, params)?);
    }
    Ok(cells)
}

/// Varied-target sweep: one grid per requested clean-logit rank.
pub fn run_varied_target(
    zoo: &Zoo,
    surrogate: &str,
    victims: &[String],
    losses: &[(String, LossSpec)],
    ranks: &[usize],
    params: &GridParams<'_>,
) -> anyhow::Result<Vec<Cell>> {
    let model = zoo.get(surrogate)?;
    let mut cells = Vec::new();
    for &rank in ranks {
        let grid = GridSpec {
            surrogate_label: surrogate.to_string(),
            surrogates: vec![model],
            victims: victims
                .iter()
                .map(|v| Ok((v.clone(), zoo.get(v)?)))
                .collect::<anyhow::Result<Vec<_>>>()?,
            losses: losses.to_vec(),
            target_mode: TargetMode::Rank(rank),
            target_rank_label: Some(rank),
        };
        cells.extend(run_grid(&grid, params)?);
    }
    Ok(cells)
}
