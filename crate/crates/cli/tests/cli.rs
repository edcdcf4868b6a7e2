use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "task = \"synthetic\"\n[train]\nmax_epochs = 4\n[synthetic]\nn = 700\n";

fn ccm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccm-aae"))
        .current_dir(dir)
        .env_remove("CCM_AAE_DATA")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Trains a small synthetic model in a fresh directory.
fn trained(kappa: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = ccm(
        dir.path(),
        &[
            "--config", "c.toml", "--kappa", kappa, "--out", "o", "train",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join("o").join(file)).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn train_writes_artifacts_and_is_reproducible_from_echo() {
    let dir = trained("+1");
    let history = read(dir.path(), "history.csv");
    assert!(history.starts_with("epoch,reconstruction_loss,critic_loss,encoder_adversarial_loss,mean_membership,validation_loss\n"));
    assert_eq!(history.lines().count(), 5);
    assert!(dir.path().join("o/checkpoint.json").exists());

    std::fs::copy(
        dir.path().join("o/config.toml"),
        dir.path().join("echo.toml"),
    )
    .unwrap();
    let o = ccm(
        dir.path(),
        &["--config", "echo.toml", "--out", "again", "train"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = std::fs::read_to_string(dir.path().join("again/history.csv")).unwrap();
    assert_eq!(again, history);
}

#[test]
fn eval_reports_one_row_per_l_deterministically() {
    let dir = trained("+1");
    std::fs::write(
        dir.path().join("e.toml"),
        format!("{SMALL}[eval]\nlabelled = [5, 10, 20]\nrepetitions = 3\n"),
    )
    .unwrap();
    let o = ccm(dir.path(), &["--config", "e.toml", "--out", "o", "eval"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read(dir.path(), "report.csv");
    assert_eq!(report.lines().count(), 4);
    assert!(report.starts_with("labelled_per_class,k,repetitions,mean_accuracy,std_accuracy\n"));
    let o = ccm(dir.path(), &["--config", "e.toml", "--out", "o", "eval"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(dir.path(), "report.csv"), report);
}

#[test]
fn sample_exports_probabilities_and_header_only_for_zero() {
    let dir = trained("-1");
    let args = [
        "--config", "c.toml", "--kappa", "-1", "--out", "o", "sample",
    ];
    let o = ccm(dir.path(), &[&args[..], &["--n", "0"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(dir.path(), "samples.csv");
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("sample,pixel_0,"));

    let o = ccm(dir.path(), &[&args[..], &["--n", "7"]].concat());
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&read(dir.path(), "samples.csv"));
    assert_eq!(rows.len(), 7);
    assert!(rows
        .iter()
        .all(|r| r[1..].iter().all(|p| *p > 0.0 && *p < 1.0)));
}

#[test]
fn traverse_modes() {
    let dir = trained("+1");
    let base = ["--config", "c.toml", "--out", "o", "traverse"];
    let o = ccm(dir.path(), &[&base[..], &["--steps", "64"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(dir.path(), "traversal.csv").lines().count(), 65);

    let o = ccm(
        dir.path(),
        &[
            &base[..],
            &[
                "--mode", "geodesic", "--from", "3", "--to", "3", "--steps", "6",
            ],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&read(dir.path(), "traversal.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        for (a, b) in r[1..].iter().zip(&rows[0][1..]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    let o = ccm(
        dir.path(),
        &[&base[..], &["--mode", "geodesic", "--to", "100000"]].concat(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn equator_on_hyperboloid_is_usage_error() {
    let dir = trained("-1");
    let o = ccm(
        dir.path(),
        &[
            "--config", "c.toml", "--kappa", "-1", "--out", "o", "traverse",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("equator"));
}

#[test]
fn project_charts_respect_their_domains() {
    let dir = trained("+1");
    let o = ccm(dir.path(), &["--config", "c.toml", "--out", "o", "project"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(dir.path(), "chart.csv");
    assert!(text.starts_with("u,v,label\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 100);
    assert!(rows
        .iter()
        .all(|r| r[1].abs() <= std::f64::consts::FRAC_PI_2));
    let o = ccm(
        dir.path(),
        &[
            "--config", "c.toml", "--out", "o", "project", "--chart", "poincare",
        ],
    );
    assert_eq!(code(&o), 2);

    let dir = trained("-1");
    let o = ccm(
        dir.path(),
        &[
            "--config", "c.toml", "--kappa", "-1", "--out", "o", "project",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&read(dir.path(), "chart.csv"));
    assert!(rows.iter().all(|r| r[0] * r[0] + r[1] * r[1] < 1.0));
}

#[test]
fn missing_data_file_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccm(
        dir.path(),
        &[
            "--task",
            "mnist",
            "--data-dir",
            "no-such-dir",
            "--out",
            "o",
            "train",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("no-such-dir/train-images-idx3-ubyte"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn data_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ccm-aae"))
        .current_dir(dir.path())
        .env("CCM_AAE_DATA", "env-root")
        .args(["--task", "mnist", "--out", "o", "train"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("env-root"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[train]\nlatent_dims = 3\n").unwrap();
    let o = ccm(dir.path(), &["--config", "bad.toml", "train"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("latent_dims"), "{}", stderr(&o));

    let o = ccm(
        dir.path(),
        &["--kappa", "0.5", "--task", "synthetic", "train"],
    );
    assert_eq!(code(&o), 2);

    let o = ccm(dir.path(), &["--config", "missing.toml", "train"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.toml"));

    let o = ccm(dir.path(), &["--task", "synthetic", "--out", "o", "eval"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checkpoint.json"));
}

#[test]
fn dimension_mismatch_is_reported() {
    let dir = trained("+1");
    let o = ccm(
        dir.path(),
        &[
            "--config",
            "c.toml",
            "--latent-dim",
            "3",
            "--out",
            "o",
            "eval",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("d = 2"), "{}", stderr(&o));
}
