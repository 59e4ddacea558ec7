//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). The experiment-scale criteria train
//! the default zoo once and reuse it across tests; expect the full target
//! to take tens of minutes on one core.

use std::fmt::Display;
use std::path::PathBuf;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use logitcal::attack::{run_targeted_attack, sign, AttackConfig, DiConfig, MiConfig, TiConfig};
use logitcal::diag::{aggregate, least_squares_slope, saturation_summary};
use logitcal::gradcheck::relative_error;
use logitcal::layer::LayerOp;
use logitcal::loss::*;
use logitcal::model::ClassifierModel;
use logitcal::tensor::Tensor;
use logitcal::zoo::DataSplit;

use logitcal_cli::plan::ExperimentPlan;
use logitcal_cli::runner::{
    run_single_model_transfer, run_varied_target, GridParams, TargetMode, Zoo,
};
use logitcal_cli::zoo_io::{load_dataset, train_zoo};

fn check(criterion: u32, name: &str, pass: bool, detail: impl Display) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion} ({name}): {verdict} [{detail}]");
    assert!(pass, "acceptance criterion {criterion} ({name}) failed: {detail}");
}

// Shared desk zoo, trained once with the default plan through the same code
// path the CLI uses.

struct Fixture {
    split: DataSplit,
    zoo: Zoo,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let plan: ExperimentPlan = toml::from_str("schema = 1").unwrap();
        let split = load_dataset(&plan).unwrap();
        let zoo = train_zoo(&plan, &split).unwrap();
        Fixture { split, zoo }
    })
}

// ---------------------------------------------------------------- criterion 1

fn fd64(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f32> {
    let mut g = vec![0.0f32; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = ((up - down) / (2.0 * h)) as f32;
    }
    g
}

fn ce64(z: &[f64], t: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln() - z[t]
}

#[test]
fn criterion_1_gradient_oracle_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut worst = 0.0f32;
    for trial in 0..120 {
        let n = rng.gen_range(3..=12);
        let t = rng.gen_range(0..n);
        let u: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let logits = Tensor::from_vec(vec![n], u.clone()).unwrap();
        let z64: Vec<f64> = u.iter().map(|&v| f64::from(v)).collect();

        let kind = trial % 5;
        let (analytic, oracle): (Tensor, Vec<f32>) = match kind {
            0 => (
                ce_loss(&logits, t).unwrap().dlogits.unwrap(),
                fd64(|z| ce64(z, t), &z64, 1e-4),
            ),
            1 => (
                logit_loss(&logits, t).unwrap().dlogits.unwrap(),
                fd64(|z| -z[t], &z64, 1e-4),
            ),
            2 => {
                let temp = [0.5f32, 2.0, 5.0, 10.0, 100.0][trial % 5.min(4)];
                let scaled = logits.scale(temp);
                let s64: Vec<f64> = scaled.data().iter().map(|&v| f64::from(v)).collect();
                let t64 = f64::from(temp);
                (
                    temperature_ce(&scaled, t, temp).unwrap().dlogits.unwrap(),
                    fd64(
                        |z| {
                            let v: Vec<f64> = z.iter().map(|&x| x / t64).collect();
                            ce64(&v, t)
                        },
                        &s64,
                        1e-4,
                    ),
                )
            }
            3 => {
                let s = f64::from(margin_scale(&logits));
                (
                    margin_calibrated_ce(&logits, t).unwrap().dlogits.unwrap(),
                    fd64(
                        |z| {
                            let v: Vec<f64> = z.iter().map(|&x| x / s).collect();
                            ce64(&v, t)
                        },
                        &z64,
                        1e-4,
                    ),
                )
            }
            _ => {
                let w: Vec<f32> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let wt = Tensor::from_vec(vec![n], w.clone()).unwrap();
                if logits.l2_norm() < 0.5 || wt.l2_norm() < 0.5 {
                    continue;
                }
                let w64: Vec<f64> = w.iter().map(|&v| f64::from(v)).collect();
                (
                    angle_loss(&logits, &wt).unwrap().dfeature.unwrap(),
                    fd64(
                        |f| {
                            let dot: f64 = f.iter().zip(&w64).map(|(a, b)| a * b).sum();
                            let nf: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                            let nw: f64 = w64.iter().map(|v| v * v).sum::<f64>().sqrt();
                            -dot / (nf * nw)
                        },
                        &z64,
                        1e-4,
                    ),
                )
            }
        };
        let oracle = Tensor::from_vec(vec![analytic.len()], oracle).unwrap();
        worst = worst.max(relative_error(&analytic, &oracle));
    }

    // Closed-form feature gradient of cross-entropy through the final layer.
    let mut worst_closed = 0.0f32;
    for _ in 0..100 {
        let n = rng.gen_range(3..=10);
        let d = rng.gen_range(2..=16);
        let w = Tensor::from_vec(
            vec![n, d],
            (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let feature: Vec<f32> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = rng.gen_range(0..n);
        let model = ClassifierModel::new(
            "head",
            vec![
                LayerOp::Flatten,
                LayerOp::Dense {
                    weight: w.clone(),
                    bias: Tensor::zeros(vec![n]),
                },
            ],
            [1, 1, d],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![1, 1, d], feature).unwrap();
        let (logits, _, tape) = model.forward(&x).unwrap();
        let res = ce_loss(&logits, t).unwrap();
        let autodiff = tape.backward_to_input(&res.dlogits.unwrap()).unwrap();
        let closed = ce_feature_gradient_closed_form(&softmax(&logits), &w, t).unwrap();
        for (a, b) in autodiff.data().iter().zip(closed.data()) {
            worst_closed = worst_closed.max((a - b).abs());
        }
    }

    check(
        1,
        "gradient oracles",
        worst < 1e-3 && worst_closed < 1e-5,
        format!("worst FD rel err {worst:.2e}, worst closed-form abs err {worst_closed:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_saturation_math() {
    let (p_t0, p_nt0) = two_class_prob(0.0);
    let (_, p_nt20) = two_class_prob(20.0);
    check(
        2,
        "saturation math",
        p_t0 == 0.5 && p_nt0 == 0.5 && (1.9e-9..=2.2e-9).contains(&p_nt20),
        format!("two_class_prob(0) = ({p_t0}, {p_nt0}), p_nt(20) = {p_nt20:.3e}"),
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_margin_calibration_bounds() {
    let n = 10usize;
    let p_t_limit = 0.73106f32;
    let p_nt_limit = (1.0 - 0.73106f32) / (n as f32 - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC3);
    let mut violations_t = 0usize;
    let mut violations_nt = 0usize;
    for _ in 0..100_000 {
        let z: Vec<f32> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let logits = Tensor::from_vec(vec![n], z).unwrap();
        let target = logits.argmax();
        let res = margin_calibrated_ce(&logits, target).unwrap();
        let p_t = (-res.value).exp();
        if p_t >= p_t_limit {
            violations_t += 1;
        }
        // Top non-target probability from the calibrated distribution.
        let scale = margin_scale(&logits);
        let calibrated = softmax(&logits.scale(1.0 / scale));
        let p_top_nt = calibrated
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, &p)| p)
            .fold(f32::NEG_INFINITY, f32::max);
        if p_top_nt <= p_nt_limit {
            violations_nt += 1;
        }
    }
    check(
        3,
        "margin calibration bounds",
        violations_t == 0 && violations_nt == 0,
        format!("{violations_t} p_t violations, {violations_nt} top-non-target violations over 1e5 draws"),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_large_temperature_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let n = 1000usize;
    let d = 64usize;
    let mut w = vec![0.0f32; n * d];
    for v in w.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    for j in 0..d {
        let mean: f32 = (0..n).map(|i| w[i * d + j]).sum::<f32>() / n as f32;
        for i in 0..n {
            w[i * d + j] -= mean;
        }
    }
    let z: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let logits = Tensor::from_vec(vec![n], z).unwrap();
    let t = rng.gen_range(0..n);
    let dlogits = temperature_ce(&logits, t, 100.0)
        .unwrap()
        .dlogits
        .unwrap();
    let mut dfeat = vec![0.0f32; d];
    for i in 0..n {
        let g = dlogits.data()[i];
        for j in 0..d {
            dfeat[j] += g * w[i * d + j];
        }
    }
    let dfeat = Tensor::from_vec(vec![d], dfeat).unwrap();
    let neg_wt =
        Tensor::from_vec(vec![d], w[t * d..(t + 1) * d].iter().map(|&v| -v).collect()).unwrap();
    let cos = dfeat.dot(&neg_wt).unwrap() / (dfeat.l2_norm() * neg_wt.l2_norm());

    // Input-space sign agreement through a toy net with a 1000-class
    // recentered head.
    let side = 16usize;
    let conv_w = Tensor::from_vec(
        vec![4, 1, 3, 3],
        (0..36).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    )
    .unwrap();
    let feat_dim = 4 * (side / 2) * (side / 2);
    let mut head = vec![0.0f32; n * feat_dim];
    for v in head.iter_mut() {
        *v = rng.gen_range(-0.3..0.3);
    }
    for j in 0..feat_dim {
        let mean: f32 = (0..n).map(|i| head[i * feat_dim + j]).sum::<f32>() / n as f32;
        for i in 0..n {
            head[i * feat_dim + j] -= mean;
        }
    }
    let model = ClassifierModel::new(
        "wide-head",
        vec![
            LayerOp::Conv2d {
                weight: conv_w,
                bias: Tensor::zeros(vec![4]),
                stride: 1,
                pad: 1,
            },
            LayerOp::Relu,
            LayerOp::MaxPool2d { kernel: 2, stride: 2 },
            LayerOp::Flatten,
            LayerOp::Dense {
                weight: Tensor::from_vec(vec![n, feat_dim], head).unwrap(),
                bias: Tensor::zeros(vec![n]),
            },
        ],
        [1, side, side],
    )
    .unwrap();
    let x = Tensor::from_vec(
        vec![1, side, side],
        (0..side * side).map(|_| rng.gen_range(0.0..2.0)).collect(),
    )
    .unwrap();
    let (logits_net, _, tape) = model.forward(&x).unwrap();
    let target = rng.gen_range(0..n);
    let g_temp = tape
        .backward_to_input(
            &temperature_ce(&logits_net, target, 100.0)
                .unwrap()
                .dlogits
                .unwrap(),
        )
        .unwrap();
    let g_logit = tape
        .backward_to_input(&logit_loss(&logits_net, target).unwrap().dlogits.unwrap())
        .unwrap();
    let agree = g_temp
        .data()
        .iter()
        .zip(g_logit.data())
        .filter(|(a, b)| sign(**a) == sign(**b))
        .count();
    let frac = agree as f32 / g_temp.len() as f32;

    check(
        4,
        "large-T equivalence",
        cos > 0.999 && frac >= 0.95,
        format!("feature cosine {cos:.6}, input sign agreement {frac:.3}"),
    );
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_trajectory_shape() {
    let fx = fixture();
    let surrogate = fx.zoo.get("cnn-a").unwrap();
    let cfg = AttackConfig::default();
    let run_margins = |spec: &LossSpec| {
        let mut records = Vec::new();
        for i in 0..50usize {
            let image = &fx.split.test.images[i];
            let clean = surrogate.logits(image).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4200 + i as u64);
            let target = logitcal_cli::runner::select_target(
                &clean,
                TargetMode::Random,
                &mut rng,
            )
            .unwrap();
            let cfg = AttackConfig {
                seed: 4300 + i as u64,
                ..cfg.clone()
            };
            let result =
                run_targeted_attack(&[surrogate], image, target, spec, &cfg, true).unwrap();
            records.push(result.trajectory.unwrap());
        }
        aggregate(&records).unwrap()
    };

    let ce_agg = run_margins(&LossSpec::Ce);
    let t5_agg = run_margins(&LossSpec::CeTemperature(5.0));

    let ce_summary = saturation_summary(&ce_agg).unwrap();
    let initial_slope = least_squares_slope(&ce_agg.iters[..20], &ce_agg.margin[..20]);
    let plateau_ratio = ce_summary.plateau_slope / initial_slope;
    let margin_ratio = t5_agg.margin.last().unwrap() / ce_summary.final_margin;

    check(
        5,
        "trajectory shape",
        initial_slope > 0.0 && plateau_ratio < 0.10 && margin_ratio >= 1.5,
        format!(
            "CE initial slope {initial_slope:.4}, plateau/initial {plateau_ratio:.4}, T5/CE final margin {margin_ratio:.2}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

fn transfer_params<'a>(fx: &'a Fixture, seed: u64) -> GridParams<'a> {
    GridParams {
        images: &fx.split.test.images,
        image_count: 100,
        repetitions: 5,
        attack: AttackConfig::default(),
        seed,
    }
}

fn black_box_victims() -> Vec<String> {
    vec!["cnn-b".to_string(), "cnn-c".to_string(), "mlp-d".to_string()]
}

#[test]
fn criterion_6_transfer_ordering() {
    let fx = fixture();
    let losses = vec![
        ("ce".to_string(), LossSpec::Ce),
        ("t1".to_string(), LossSpec::CeTemperature(1.0)),
        ("t5".to_string(), LossSpec::CeTemperature(5.0)),
        ("t100".to_string(), LossSpec::CeTemperature(100.0)),
        ("margin".to_string(), LossSpec::CeMargin),
        ("logit".to_string(), LossSpec::Logit),
    ];
    let params = transfer_params(fx, 0x600D);
    let cells = run_single_model_transfer(
        &fx.zoo,
        &["cnn-a".to_string()],
        &black_box_victims(),
        &losses,
        &params,
        TargetMode::Random,
    )
    .unwrap();

    let mean = |loss: &str| -> f64 {
        let rates: Vec<f64> = cells
            .iter()
            .filter(|c| c.loss == loss && c.checkpoint == 300 && !c.white_box)
            .map(|c| c.mean_rate)
            .collect();
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    let identical_t1 = cells
        .iter()
        .filter(|c| c.loss == "ce")
        .zip(cells.iter().filter(|c| c.loss == "t1"))
        .all(|(a, b)| a.successes == b.successes && a.per_rep == b.per_rep);

    let (m_ce, m_t5, m_margin, m_t100, m_logit) =
        (mean("ce"), mean("t5"), mean("margin"), mean("t100"), mean("logit"));
    check(
        6,
        "transfer ordering",
        m_t5 >= m_ce && m_margin >= m_ce && identical_t1 && (m_t100 - m_logit).abs() <= 0.05,
        format!(
            "ce {m_ce:.3}, t5 {m_t5:.3}, margin {m_margin:.3}, t100 {m_t100:.3}, logit {m_logit:.3}, t1==ce {identical_t1}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_varied_target_monotonicity() {
    let fx = fixture();
    let losses = vec![
        ("ce".to_string(), LossSpec::Ce),
        ("t5".to_string(), LossSpec::CeTemperature(5.0)),
        ("margin".to_string(), LossSpec::CeMargin),
    ];
    let params = transfer_params(fx, 0x7A26);
    let cells = run_varied_target(
        &fx.zoo,
        "cnn-a",
        &black_box_victims(),
        &losses,
        &[2, 10],
        &params,
    )
    .unwrap();

    let mean = |loss: &str, rank: usize| -> f64 {
        let rates: Vec<f64> = cells
            .iter()
            .filter(|c| {
                c.loss == loss
                    && c.checkpoint == 300
                    && !c.white_box
                    && c.target_rank == Some(rank)
            })
            .map(|c| c.mean_rate)
            .collect();
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    let ce_decline = mean("ce", 2) - mean("ce", 10);
    let t5_decline = mean("t5", 2) - mean("t5", 10);
    let margin_decline = mean("margin", 2) - mean("margin", 10);

    check(
        7,
        "varied-target monotonicity",
        ce_decline >= 0.0 && t5_decline < ce_decline && margin_decline < ce_decline,
        format!(
            "declines rank2->rank10: ce {ce_decline:.3} (r2 {:.3}), t5 {t5_decline:.3}, margin {margin_decline:.3}",
            mean("ce", 2)
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_pipeline_exactness() {
    let model = logitcal::zoo::build_architecture("cnn-c", [1, 8, 8], 4, 0xACC8).unwrap();
    let x = Tensor::from_vec(
        vec![1, 8, 8],
        (0..64).map(|i| ((i * 53 + 7) % 256) as f32).collect(),
    )
    .unwrap();
    let target = 1usize;
    let cfg = AttackConfig {
        epsilon: 16.0,
        alpha: 2.0,
        max_iters: 50,
        checkpoints: (1..=50).collect(),
        mi: MiConfig {
            enabled: false,
            decay: 1.0,
        },
        ti: TiConfig {
            enabled: false,
            kernel_side: 5,
            sigma: 1.5,
        },
        di: DiConfig {
            enabled: false,
            prob: 0.7,
            min_scale: 0.875,
        },
        seed: 0,
    };
    let result = run_targeted_attack(&[&model], &x, target, &LossSpec::Ce, &cfg, false).unwrap();

    // Standalone sign-gradient reference loop.
    let mut reference = x.clone();
    let mut identical = true;
    let mut invariants = true;
    for iter in 1..=50usize {
        let (logits, _, tape) = model.forward(&reference).unwrap();
        let grad_logits = ce_loss(&logits, target).unwrap().dlogits.unwrap();
        let grad = tape.backward_to_input(&grad_logits).unwrap();
        for ((v, &g), &orig) in reference
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(x.data())
        {
            let stepped = *v - cfg.alpha * sign(g);
            *v = stepped
                .clamp(orig - cfg.epsilon, orig + cfg.epsilon)
                .clamp(0.0, 255.0);
        }
        let snapshot = &result.snapshots[iter - 1].1;
        if snapshot.data() != reference.data() {
            identical = false;
        }
        for (&a, &o) in snapshot.data().iter().zip(x.data()) {
            if (a - o).abs() > cfg.epsilon || !(0.0..=255.0).contains(&a) {
                invariants = false;
            }
        }
    }
    check(
        8,
        "pipeline exactness",
        identical && invariants && result.x_adv.data() == reference.data(),
        format!("bit-identical {identical}, invariants {invariants}"),
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_cli_determinism() {
    let dir = std::env::temp_dir().join(format!("logitcal-acc9-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let plan_path = dir.join("plan.toml");
    std::fs::write(
        &plan_path,
        r#"
schema = 1
seed = 11

[dataset]
train_per_class = 6
test_per_class = 3

[zoo]
architectures = ["cnn-c", "mlp-d"]
epochs = 1

[attack]
max_iters = 10
checkpoints = [5, 10]

[experiment]
surrogates = ["cnn-c"]
victims = ["mlp-d"]
images = 3
repetitions = 2
sweep_temperatures = [1.0, 5.0]
target_ranks = [2, 10]
losses = [
  { label = "ce", kind = "ce" },
  { label = "margin", kind = "ce-margin" },
]
"#,
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_logitcal");
    let zoo_dir = dir.join("zoo");
    let status = std::process::Command::new(bin)
        .args(["train-zoo", "--plan"])
        .arg(&plan_path)
        .args(["--out-dir"])
        .arg(&zoo_dir)
        .status()
        .unwrap();
    assert!(status.success());

    let mut all_identical = true;
    let mut detail = String::new();
    for cmd in ["transfer", "sweep-t", "ensemble", "vary-target"] {
        let mut outputs: Vec<Vec<u8>> = Vec::new();
        for run in 0..2 {
            let out_dir = dir.join(format!("{cmd}-{run}"));
            let status = std::process::Command::new(bin)
                .arg(cmd)
                .args(["--plan"])
                .arg(&plan_path)
                .args(["--seed", "77", "--zoo-dir"])
                .arg(&zoo_dir)
                .args(["--out-dir"])
                .arg(&out_dir)
                .status()
                .unwrap();
            assert!(status.success(), "{cmd} run {run} failed");
            let mut bytes = std::fs::read(out_dir.join("report.json")).unwrap();
            bytes.extend(std::fs::read(out_dir.join("report.csv")).unwrap());
            outputs.push(bytes);
        }
        let same = outputs[0] == outputs[1];
        all_identical &= same;
        detail.push_str(&format!("{cmd}:{} ", if same { "ok" } else { "DIFFERS" }));
    }
    std::fs::remove_dir_all(&dir).ok();
    check(9, "CLI determinism", all_identical, detail.trim().to_string());

    let _ = PathBuf::new();
}
