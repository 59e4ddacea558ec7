//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, malformed or
//! missing plan), 1 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use logitcal::attack::run_targeted_attack;
use logitcal::diag::{aggregate, saturation_curve, write_curve_csv, write_trajectory_csv};
use logitcal::zoo::{accuracy, write_idx_f32_images, write_idx_images, write_idx_labels};

use logitcal_cli::plan::ExperimentPlan;
use logitcal_cli::report::fnv1a64;
use logitcal_cli::runner::{
    assemble_report, run_ensemble_holdout, run_single_model_transfer, run_varied_target,
    sweep_losses, GridParams, ReportMeta, TargetMode,
};
use logitcal_cli::zoo_io::{load_dataset, obtain_zoo, save_zoo, train_zoo};

#[derive(Parser)]
#[command(name = "logitcal", version, about = "Targeted transfer attacks with logit calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PlanArgs {
    /// Experiment plan (TOML).
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ZooArgs {
    /// Directory of trained NNWT weight files; trains in memory when absent.
    #[arg(long)]
    zoo_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the plan's synthetic dataset and export it as IDX files.
    GenData {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Train the zoo and save NNWT weight files.
    TrainZoo {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Attack a batch of test images; emit adversarial images, a manifest,
    /// and the aggregated trajectory CSV.
    Attack {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        zoo: ZooArgs,
        /// Attack only this test-set image index.
        #[arg(long)]
        image_index: Option<usize>,
        /// Loss label from the plan (default: the first one).
        #[arg(long)]
        loss: Option<String>,
        /// Fixed target class (default: seeded random != clean argmax).
        #[arg(long)]
        target: Option<usize>,
    },
    /// Single-model transfer matrix over losses, victims, and checkpoints.
    Transfer {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        zoo: ZooArgs,
    },
    /// Temperature sweep with a negative-target-logit reference column.
    SweepT {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        zoo: ZooArgs,
    },
    /// Hold-out ensemble transfer: each model is attacked by the ensemble of
    /// the others.
    Ensemble {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        zoo: ZooArgs,
    },
    /// Success rates when the target is the rank-k class of the clean logits.
    VaryTarget {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        zoo: ZooArgs,
    },
    /// Two-class saturation curve (margin, p_t, p_nt) as CSV.
    #[command(allow_negative_numbers = true)]
    DiagCurve {
        #[arg(long, default_value_t = -10.0)]
        min: f32,
        #[arg(long, default_value_t = 30.0)]
        max: f32,
        #[arg(long, default_value_t = 0.5)]
        step: f32,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(e) => format!("configuration error: {e:#}"),
            CliError::Runtime(e) => format!("error: {e:#}"),
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.code())
        }
    }
}

struct LoadedPlan {
    plan: ExperimentPlan,
    seed: u64,
    config_hash: String,
    out_dir: PathBuf,
}

fn load_plan(args: &PlanArgs) -> Result<LoadedPlan, CliError> {
    let (plan, bytes) = ExperimentPlan::load(&args.plan).map_err(config_err)?;
    let seed = args.seed.unwrap_or(plan.seed);
    let mut hashed = bytes;
    hashed.extend_from_slice(&seed.to_le_bytes());
    Ok(LoadedPlan {
        plan,
        seed,
        config_hash: format!("fnv1a:{:016x}", fnv1a64(&hashed)),
        out_dir: args.out_dir.clone(),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { plan } => cmd_gen_data(load_plan(&plan)?),
        Command::TrainZoo { plan } => cmd_train_zoo(load_plan(&plan)?),
        Command::Attack {
            plan,
            zoo,
            image_index,
            loss,
            target,
        } => cmd_attack(load_plan(&plan)?, zoo, image_index, loss, target),
        Command::Transfer { plan, zoo } => cmd_transfer(load_plan(&plan)?, zoo),
        Command::SweepT { plan, zoo } => cmd_sweep_t(load_plan(&plan)?, zoo),
        Command::Ensemble { plan, zoo } => cmd_ensemble(load_plan(&plan)?, zoo),
        Command::VaryTarget { plan, zoo } => cmd_vary_target(load_plan(&plan)?, zoo),
        Command::DiagCurve {
            min,
            max,
            step,
            out_dir,
        } => cmd_diag_curve(min, max, step, &out_dir),
    }
}

fn cmd_gen_data(loaded: LoadedPlan) -> Result<(), CliError> {
    let split = load_dataset(&loaded.plan).map_err(runtime_err)?;
    std::fs::create_dir_all(&loaded.out_dir).map_err(runtime_err)?;
    write_idx_images(&loaded.out_dir.join("train-images.idx"), &split.train.images)
        .map_err(runtime_err)?;
    write_idx_labels(&loaded.out_dir.join("train-labels.idx"), &split.train.labels)
        .map_err(runtime_err)?;
    write_idx_images(&loaded.out_dir.join("test-images.idx"), &split.test.images)
        .map_err(runtime_err)?;
    write_idx_labels(&loaded.out_dir.join("test-labels.idx"), &split.test.labels)
        .map_err(runtime_err)?;
    println!(
        "wrote {} train and {} test images to {}",
        split.train.len(),
        split.test.len(),
        loaded.out_dir.display()
    );
    Ok(())
}

fn cmd_train_zoo(loaded: LoadedPlan) -> Result<(), CliError> {
    let split = load_dataset(&loaded.plan).map_err(runtime_err)?;
    let zoo = train_zoo(&loaded.plan, &split).map_err(runtime_err)?;
    save_zoo(&zoo, &loaded.out_dir).map_err(runtime_err)?;
    for (label, model) in &zoo.models {
        let train_acc = accuracy(model, &split.train).map_err(runtime_err)?;
        let test_acc = accuracy(model, &split.test).map_err(runtime_err)?;
        println!("{label}: train accuracy {train_acc:.3}, test accuracy {test_acc:.3}");
    }
    println!("saved weights to {}", loaded.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct AttackManifestEntry {
    image_index: usize,
    clean_class: usize,
    target: usize,
    white_box_success: bool,
}

#[derive(Serialize)]
struct AttackManifest {
    loss: String,
    seed: u64,
    config_hash: String,
    images_file: String,
    entries: Vec<AttackManifestEntry>,
}

fn cmd_attack(
    loaded: LoadedPlan,
    zoo_args: ZooArgs,
    image_index: Option<usize>,
    loss: Option<String>,
    target_override: Option<usize>,
) -> Result<(), CliError> {
    let plan = &loaded.plan;
    let split = load_dataset(plan).map_err(runtime_err)?;
    let zoo = obtain_zoo(plan, &split, zoo_args.zoo_dir.as_deref()).map_err(runtime_err)?;

    let entry = match &loss {
        Some(label) => plan
            .experiment
            .losses
            .iter()
            .find(|l| &l.label == label)
            .ok_or_else(|| config_err(anyhow::anyhow!("loss '{label}' is not in the plan")))?,
        None => plan
            .experiment
            .losses
            .first()
            .ok_or_else(|| config_err(anyhow::anyhow!("plan has no losses")))?,
    };
    let spec = entry.to_spec().map_err(config_err)?;

    let surrogate_id = plan
        .experiment
        .surrogates
        .first()
        .ok_or_else(|| config_err(anyhow::anyhow!("plan has no surrogates")))?;
    let surrogate = zoo.get(surrogate_id).map_err(config_err)?;

    let indices: Vec<usize> = match image_index {
        Some(i) => {
            if i >= split.test.len() {
                return Err(config_err(anyhow::anyhow!(
                    "image index {i} outside the {}-image test set",
                    split.test.len()
                )));
            }
            vec![i]
        }
        None => (0..plan.experiment.images.min(split.test.len())).collect(),
    };

    let base_cfg = plan.attack_config().map_err(config_err)?;
    let mut records = Vec::new();
    let mut adv_images = Vec::new();
    let mut entries = Vec::new();
    for &i in &indices {
        let image = &split.test.images[i];
        let clean = surrogate.logits(image).map_err(runtime_err)?;
        let cell_seed = logitcal::rng::derive_seed(loaded.seed, i as u64, 1);
        let target = match target_override {
            Some(t) => t,
            None => {
                use rand_chacha::rand_core::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                    logitcal::rng::derive_seed(cell_seed, 0x5447, 0),
                );
                logitcal_cli::runner::select_target(&clean, TargetMode::Random, &mut rng)
                    .map_err(runtime_err)?
            }
        };
        let cfg = logitcal::attack::AttackConfig {
            seed: cell_seed,
            ..base_cfg.clone()
        };
        let result = run_targeted_attack(&[surrogate], image, target, &spec, &cfg, true)
            .map_err(runtime_err)?;
        entries.push(AttackManifestEntry {
            image_index: i,
            clean_class: clean.argmax(),
            target,
            white_box_success: result.white_box_success,
        });
        adv_images.push(result.x_adv);
        records.push(result.trajectory.expect("recording was requested"));
    }

    std::fs::create_dir_all(&loaded.out_dir).map_err(runtime_err)?;
    let images_file = "adversarial-images.f32idx";
    write_idx_f32_images(&loaded.out_dir.join(images_file), &adv_images).map_err(runtime_err)?;
    let agg = aggregate(&records).map_err(runtime_err)?;
    write_trajectory_csv(&agg, &loaded.out_dir.join("trajectory.csv")).map_err(runtime_err)?;
    let manifest = AttackManifest {
        loss: entry.label.clone(),
        seed: loaded.seed,
        config_hash: loaded.config_hash.clone(),
        images_file: images_file.to_string(),
        entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(runtime_err)?;
    json.push('\n');
    std::fs::write(loaded.out_dir.join("manifest.json"), json).map_err(runtime_err)?;
    println!(
        "attacked {} image(s) with '{}'; wrote {}",
        adv_images.len(),
        manifest.loss,
        loaded.out_dir.display()
    );
    Ok(())
}

fn experiment_params<'a>(
    loaded: &LoadedPlan,
    images: &'a [logitcal::tensor::Tensor],
) -> Result<GridParams<'a>, CliError> {
    Ok(GridParams {
        images,
        image_count: loaded.plan.experiment.images,
        repetitions: loaded.plan.experiment.repetitions,
        attack: loaded.plan.attack_config().map_err(config_err)?,
        seed: loaded.seed,
    })
}

fn target_mode(plan: &ExperimentPlan) -> TargetMode {
    match plan.experiment.target_mode.as_str() {
        "rank" => TargetMode::Rank(plan.experiment.target_rank.expect("validated")),
        _ => TargetMode::Random,
    }
}

fn plan_losses(plan: &ExperimentPlan) -> Result<Vec<(String, logitcal::loss::LossSpec)>, CliError> {
    plan.experiment
        .losses
        .iter()
        .map(|l| Ok((l.label.clone(), l.to_spec().map_err(config_err)?)))
        .collect()
}

fn cmd_transfer(loaded: LoadedPlan, zoo_args: ZooArgs) -> Result<(), CliError> {
    let split = load_dataset(&loaded.plan).map_err(runtime_err)?;
    let zoo = obtain_zoo(&loaded.plan, &split, zoo_args.zoo_dir.as_deref()).map_err(runtime_err)?;
    let params = experiment_params(&loaded, &split.test.images)?;
    let losses = plan_losses(&loaded.plan)?;
    let cells = run_single_model_transfer(
        &zoo,
        &loaded.plan.experiment.surrogates,
        &loaded.plan.experiment.victims,
        &losses,
        &params,
        target_mode(&loaded.plan),
    )
    .map_err(runtime_err)?;
    write_report(&loaded, "transfer", None, cells)
}

fn cmd_sweep_t(loaded: LoadedPlan, zoo_args: ZooArgs) -> Result<(), CliError> {
    let split = load_dataset(&loaded.plan).map_err(runtime_err)?;
    let zoo = obtain_zoo(&loaded.plan, &split, zoo_args.zoo_dir.as_deref()).map_err(runtime_err)?;
    let params = experiment_params(&loaded, &split.test.images)?;
    let losses = sweep_losses(&loaded.plan.experiment.sweep_temperatures);
    let cells = run_single_model_transfer(
        &zoo,
        &loaded.plan.experiment.surrogates,
        &loaded.plan.experiment.victims,
        &losses,
        &params,
        target_mode(&loaded.plan),
    )
    .map_err(runtime_err)?;
    write_report(&loaded, "sweep-t", None, cells)
}

fn cmd_ensemble(loaded: LoadedPlan, zoo_args: ZooArgs) -> Result<(), CliError> {
    let split = load_dataset(&loaded.plan).map_err(runtime_err)?;
    let zoo = obtain_zoo(&loaded.plan, &split, zoo_args.zoo_dir.as_deref()).map_err(runtime_err)?;
    let params = experiment_params(&loaded, &split.test.images)?;
    let losses = plan_losses(&loaded.plan)?;
    let sources = zoo.models.len() - 1;
    let weights = vec![1.0 / sources as f64; sources];
    let cells = run_ensemble_holdout(&zoo, &losses, &params, target_mode(&loaded.plan))
        .map_err(runtime_err)?;
    write_report(&loaded, "ensemble", Some(weights), cells)
}

fn cmd_vary_target(loaded: LoadedPlan, zoo_args: ZooArgs) -> Result<(), CliError> {
    let split = load_dataset(&loaded.plan).map_err(runtime_err)?;
    let zoo = obtain_zoo(&loaded.plan, &split, zoo_args.zoo_dir.as_deref()).map_err(runtime_err)?;
    let params = experiment_params(&loaded, &split.test.images)?;
    let losses = plan_losses(&loaded.plan)?;
    let surrogate = loaded
        .plan
        .experiment
        .surrogates
        .first()
        .ok_or_else(|| config_err(anyhow::anyhow!("plan has no surrogates")))?;
    let cells = run_varied_target(
        &zoo,
        surrogate,
        &loaded.plan.experiment.victims,
        &losses,
        &loaded.plan.experiment.target_ranks,
        &params,
    )
    .map_err(runtime_err)?;
    write_report(&loaded, "vary-target", None, cells)
}

fn write_report(
    loaded: &LoadedPlan,
    kind: &str,
    ensemble_weights: Option<Vec<f64>>,
    cells: Vec<logitcal_cli::report::Cell>,
) -> Result<(), CliError> {
    let report = assemble_report(
        ReportMeta {
            kind: kind.to_string(),
            seed: loaded.seed,
            config_hash: loaded.config_hash.clone(),
            repetitions: loaded.plan.experiment.repetitions,
            images_per_cell: loaded.plan.experiment.images,
            ensemble_weights,
        },
        cells,
    );
    report.check_consistency().map_err(runtime_err)?;
    report.write(&loaded.out_dir, "report").map_err(runtime_err)?;
    println!(
        "wrote {} cells to {}/report.json",
        report.cells.len(),
        loaded.out_dir.display()
    );
    Ok(())
}

fn cmd_diag_curve(min: f32, max: f32, step: f32, out_dir: &Path) -> Result<(), CliError> {
    if !(step > 0.0) || max < min {
        return Err(config_err(anyhow::anyhow!(
            "need step > 0 and max >= min, got min {min}, max {max}, step {step}"
        )));
    }
    let rows = ((f64::from(max) - f64::from(min)) / f64::from(step)).round() as usize + 1;
    let margins: Vec<f32> = (0..rows).map(|i| min + i as f32 * step).collect();
    let curve = saturation_curve(&margins);
    std::fs::create_dir_all(out_dir).map_err(runtime_err)?;
    let path = out_dir.join("saturation-curve.csv");
    write_curve_csv(&curve, &path).map_err(runtime_err)?;
    println!("wrote {} rows to {}", curve.len(), path.display());
    Ok(())
}
