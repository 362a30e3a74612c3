//! End-to-end checks of the `cpdp` binary: output contracts, the
//! `error: <category>: <detail>` failure format, exit codes, and the
//! output-directory precedence chain (flag beats environment beats config).

use std::path::{Path, PathBuf};
use std::process::Command;

use cpdp::classifier::NbModel;
use cpdp::cli::{GanSection, RunConfig, OUTPUT_DIR_ENV};
use cpdp::dataset::{save_csv, synthesize, Label, MetricInstance, ProjectDataset};
use cpdp::eval::{ClassifierSettings, EvaluationReport, NormalizationMode};
use cpdp::gan::GanModel;
use cpdp::nn::Activation;

fn cpdp_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cpdp"));
    cmd.env_remove(OUTPUT_DIR_ENV);
    cmd
}

fn labeled_fixture(dir: &Path, name: &str, shift: f64, n: usize) -> PathBuf {
    let instances = (0..n)
        .map(|k| MetricInstance {
            id: format!("{name}-{k}"),
            features: vec![shift + k as f64, shift + ((k * 3) % 7) as f64],
            label: Some(if k % 3 == 0 { Label::Faulty } else { Label::Clean }),
        })
        .collect();
    let ds = ProjectDataset::new(name, vec!["loc".into(), "cc".into()], instances).unwrap();
    let path = dir.join(format!("{name}.csv"));
    save_csv(&ds, &path, Some("label")).unwrap();
    path
}

/// Small config pointing at freshly synthesized CSVs; two epochs keep the
/// binary runs fast.
fn small_config(dir: &Path, config_output_dir: &Path) -> PathBuf {
    let source = synthesize("s", 40, 2, &[0.0, 0.0], &[3.0, 3.0], 1.0, 1.0, 0.5, 31).unwrap();
    let target = synthesize("t", 30, 2, &[4.0, 4.0], &[7.0, 7.0], 1.0, 1.0, 0.5, 32).unwrap();
    let source_path = dir.join("source.csv");
    let target_path = dir.join("target.csv");
    save_csv(&source, &source_path, Some("label")).unwrap();
    save_csv(&target, &target_path, Some("label")).unwrap();
    let config = RunConfig {
        source: source_path,
        target: target_path,
        source_label_column: "label".into(),
        target_label_column: "label".into(),
        normalization: NormalizationMode::ZscoreSourceStats,
        hidden_dims: vec![4, 4],
        generator_output: Activation::Identity,
        gan: GanSection {
            epochs: 2,
            ..GanSection::default()
        },
        classifier: ClassifierSettings::default(),
        output_dir: config_output_dir.to_path_buf(),
        seed: 9,
    };
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn stderr_line(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_string()
}

#[test]
fn stats_honors_custom_label_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bugcol.csv");
    std::fs::write(&path, "loc,bug,cc\n10,1,2\n20,0,3\n30,0,4\n").unwrap();
    let out = cpdp_cmd()
        .args(["stats", path.to_str().unwrap(), "--label-column", "bug"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["n"], 3);
    assert_eq!(line["faulty"], 1);
    assert_eq!(line["buggy_rate"], 33.33);
}

#[test]
fn missing_label_column_is_a_single_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nolabel.csv");
    std::fs::write(&path, "loc,cc\n1,2\n3,4\n").unwrap();
    let out = cpdp_cmd()
        .args(["stats", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err = stderr_line(&out);
    assert!(
        err.starts_with("error: missing-label-column:"),
        "got {err:?}"
    );
    assert!(err.contains("\"label\""), "column name absent: {err:?}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn headers_only_file_reports_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hollow.csv");
    std::fs::write(&path, "loc,cc,label\n").unwrap();
    let out = cpdp_cmd()
        .args(["stats", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: empty-dataset:"), "got {err:?}");
    assert!(err.contains("empty dataset"), "got {err:?}");
}

#[test]
fn missing_config_file_reports_io_error() {
    let out = cpdp_cmd()
        .args(["train", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: io:"), "got {err:?}");
    assert!(err.contains("/nonexistent/run.json"), "got {err:?}");
}

#[test]
fn malformed_config_reports_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = cpdp_cmd()
        .args(["train", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: config:"), "got {err:?}");
}

#[test]
fn mismatched_feature_widths_name_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = small_config(dir.path(), &dir.path().join("out"));
    // Overwrite the target with a three-feature dataset.
    let config: RunConfig =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    let wide = synthesize(
        "t",
        30,
        3,
        &[4.0, 4.0, 4.0],
        &[7.0, 7.0, 7.0],
        1.0,
        1.0,
        0.5,
        32,
    )
    .unwrap();
    save_csv(&wide, &config.target, Some("label")).unwrap();

    let out = cpdp_cmd()
        .args(["train", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_line(&out);
    assert!(
        err.starts_with("error: feature-width-mismatch:"),
        "got {err:?}"
    );
    assert!(err.contains("source has 2"), "got {err:?}");
    assert!(err.contains("target has 3"), "got {err:?}");
}

#[test]
fn norm_select_emits_the_decision_as_json() {
    let dir = tempfile::tempdir().unwrap();
    // A pure shift preserves every pairwise distance, so all levels are
    // Same and rule 1 fires.
    let source = labeled_fixture(dir.path(), "src", 0.0, 24);
    let target = labeled_fixture(dir.path(), "tgt", 100.0, 24);
    let out = cpdp_cmd()
        .args([
            "norm-select",
            source.to_str().unwrap(),
            target.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "norm-select failed: {out:?}");
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["rule_id"], 1);
    assert_eq!(line["choice"], "no-norm");
    assert_eq!(line["levels"]["mean"], "same");
    assert_eq!(line["levels"]["n_instances"], "same");
    assert!(line["source_stats"]["mean"].is_f64());
    assert_eq!(line["source_stats"]["n_instances"], 24);
    assert_eq!(
        line["source_stats"]["median"].as_f64().unwrap(),
        line["target_stats"]["median"].as_f64().unwrap()
    );
}

#[test]
fn train_writes_parsable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let config_path = small_config(dir.path(), &out_dir);
    let out = cpdp_cmd()
        .args(["train", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "train failed: {out:?}");

    let report =
        EvaluationReport::from_json(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report.epochs, 2);
    assert_eq!(report.seed, 9);
    assert_eq!(report.confusion.total(), 30);

    let gan: GanModel<f64> =
        GanModel::from_json(&std::fs::read_to_string(out_dir.join("gan_model.json")).unwrap())
            .unwrap();
    assert_eq!(gan.generator().layers().last().unwrap().out_dim(), 2);
    let nb: NbModel<f64> =
        NbModel::from_json(&std::fs::read_to_string(out_dir.join("nb_model.json")).unwrap())
            .unwrap();
    assert_eq!(nb.feature_count(), 2);

    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "epoch,d_loss,g_loss,d_accuracy,mmd");
    assert_eq!(lines.count(), 2, "one trace row per epoch");

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout.matches("wrote ").count(),
        4,
        "one wrote line per artifact: {stdout}"
    );
    assert!(stdout.contains("f1 "), "missing summary line: {stdout}");
}

#[test]
fn output_dir_flag_beats_env_beats_config() {
    let dir = tempfile::tempdir().unwrap();
    let config_dir = dir.path().join("from-config");
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let config_path = small_config(dir.path(), &config_dir);

    // No flag, no env: the config's directory is used.
    let out = cpdp_cmd()
        .args(["train", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(config_dir.join("report.json").exists());

    // Environment overrides the config.
    let out = cpdp_cmd()
        .env(OUTPUT_DIR_ENV, &env_dir)
        .args(["train", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("report.json").exists());

    // The flag beats both.
    let out = cpdp_cmd()
        .env(OUTPUT_DIR_ENV, dir.path().join("ignored"))
        .args(["train", config_path.to_str().unwrap()])
        .arg("--output-dir")
        .arg(&flag_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("report.json").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn sweep_writes_csv_and_per_epoch_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep-out");
    let config_path = small_config(dir.path(), &out_dir);
    let out = cpdp_cmd()
        .args(["sweep", config_path.to_str().unwrap()])
        .args(["--epochs", "1,3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "sweep failed: {out:?}");

    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("source,target,epochs,"));
    assert_eq!(csv.lines().count(), 3);

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("epochs 1 f1 "), "got {stdout}");
    assert!(stdout.contains("epochs 3 f1 "), "got {stdout}");
}

#[test]
fn help_lists_the_subcommands() {
    let out = cpdp_cmd().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["stats", "norm-select", "train", "sweep"] {
        assert!(text.contains(sub), "missing {sub} in help: {text}");
    }
}
