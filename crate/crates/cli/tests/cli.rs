//! End-to-end binary checks: exit codes, file outputs, determinism of the
//! cheap commands. The expensive experiment determinism check lives in the
//! acceptance suite.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logitcal"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("logitcal-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_plan(dir: &PathBuf, body: &str) -> PathBuf {
    let p = dir.join("plan.toml");
    fs::write(&p, body).unwrap();
    p
}

const TINY_PLAN: &str = r#"
schema = 1
seed = 7

[dataset]
train_per_class = 6
test_per_class = 3

[zoo]
architectures = ["cnn-c", "mlp-d"]
epochs = 1

[attack]
max_iters = 8
checkpoints = [8]

[experiment]
surrogates = ["cnn-c"]
victims = ["mlp-d"]
images = 2
repetitions = 1
losses = [
  { label = "ce", kind = "ce" },
  { label = "t5", kind = "ce-temperature", temperature = 5.0 },
]
"#;

#[test]
fn diag_curve_emits_81_rows() {
    let dir = scratch("curve");
    let out = bin()
        .args([
            "diag-curve",
            "--min",
            "-10",
            "--max",
            "30",
            "--step",
            "0.5",
            "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(dir.join("saturation-curve.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "margin,p_t,p_nt");
    assert_eq!(lines.len(), 1 + 81);
    // margin 0 row is exactly one half.
    let zero_row: Vec<&str> = lines[21].split(',').collect();
    assert_eq!(zero_row[0], "0");
    assert_eq!(zero_row[1], "0.5");
    fs::remove_dir_all(dir).ok();
}

#[test]
fn missing_plan_file_exits_2() {
    let out = bin()
        .args(["transfer", "--plan", "/nonexistent/plan.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_plan_exits_2() {
    let dir = scratch("badplan");
    let plan = write_plan(&dir, "schema = 1\nbogus_key = true\n");
    let out = bin().args(["transfer", "--plan"]).arg(&plan).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configuration error"), "{stderr}");
    fs::remove_dir_all(dir).ok();
}

#[test]
fn unsupported_schema_exits_2() {
    let dir = scratch("schema");
    let plan = write_plan(&dir, "schema = 99\n");
    let out = bin().args(["transfer", "--plan"]).arg(&plan).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin().args(["transfer", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_exports_idx_files_that_ingest_back() {
    let dir = scratch("gendata");
    let plan = write_plan(&dir, TINY_PLAN);
    let out = bin()
        .args(["gen-data", "--plan"])
        .arg(&plan)
        .args(["--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = logitcal::zoo::ingest_idx(
        &dir.join("train-images.idx"),
        &dir.join("train-labels.idx"),
    )
    .unwrap();
    assert_eq!(ds.len(), 60);
    assert_eq!(ds.image_shape, [1, 32, 32]);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn train_zoo_then_attack_writes_artifacts() {
    let dir = scratch("attack");
    let plan = write_plan(&dir, TINY_PLAN);
    let zoo_dir = dir.join("zoo");
    let out = bin()
        .args(["train-zoo", "--plan"])
        .arg(&plan)
        .args(["--out-dir"])
        .arg(&zoo_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(zoo_dir.join("cnn-c.nnwt").exists());
    assert!(zoo_dir.join("mlp-d.nnwt").exists());

    let attack_dir = dir.join("adv");
    let out = bin()
        .args(["attack", "--plan"])
        .arg(&plan)
        .args(["--zoo-dir"])
        .arg(&zoo_dir)
        .args(["--out-dir"])
        .arg(&attack_dir)
        .args(["--image-index", "1", "--loss", "t5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let imgs =
        logitcal::zoo::read_idx_f32_images(&attack_dir.join("adversarial-images.f32idx")).unwrap();
    assert_eq!(imgs.len(), 1);
    let manifest = fs::read_to_string(attack_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"loss\": \"t5\""));
    let csv = fs::read_to_string(attack_dir.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "iter,target_logit,nt1_logit,nt2_logit,margin");
    assert_eq!(csv.lines().count(), 1 + 8);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn tiny_transfer_report_is_consistent_and_seed_deterministic() {
    let dir = scratch("transfer");
    let plan = write_plan(&dir, TINY_PLAN);
    let out1 = dir.join("r1");
    let out2 = dir.join("r2");
    for out_dir in [&out1, &out2] {
        let out = bin()
            .args(["transfer", "--plan"])
            .arg(&plan)
            .args(["--seed", "42", "--out-dir"])
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(out1.join("report.json")).unwrap();
    let b = fs::read(out2.join("report.json")).unwrap();
    assert_eq!(a, b, "same seed must produce byte-identical reports");
    let a_csv = fs::read(out1.join("report.csv")).unwrap();
    let b_csv = fs::read(out2.join("report.csv")).unwrap();
    assert_eq!(a_csv, b_csv);

    // A different seed must change the report (targets differ).
    let out3 = dir.join("r3");
    let out = bin()
        .args(["transfer", "--plan"])
        .arg(&plan)
        .args(["--seed", "43", "--out-dir"])
        .arg(&out3)
        .output()
        .unwrap();
    assert!(out.status.success());
    let c = fs::read(out3.join("report.json")).unwrap();
    assert_ne!(a, c);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn empty_image_budget_yields_empty_counts() {
    let dir = scratch("zero");
    let plan = write_plan(
        &dir,
        &TINY_PLAN.replace("images = 2", "images = 0"),
    );
    let zoo_dir = dir.join("zoo");
    let out = bin()
        .args(["train-zoo", "--plan"])
        .arg(&plan)
        .args(["--out-dir"])
        .arg(&zoo_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["transfer", "--plan"])
        .arg(&plan)
        .args(["--zoo-dir"])
        .arg(&zoo_dir)
        .args(["--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert!(!cells.is_empty());
    assert!(cells.iter().all(|c| c["total"] == 0));
    fs::remove_dir_all(dir).ok();
}
