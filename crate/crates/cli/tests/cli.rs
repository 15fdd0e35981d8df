//! End-to-end tests of the `tmix` binary: exit codes, output formats, and
//! determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tmix_core::eval::align_matrices;
use tmix_core::model::{sample_blockmodel_membership, sample_core, sample_membership, MixedModel};
use tmix_core::nalgebra::DMatrix;
use tmix_core::tensor::write_tensor_text;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmix"))
}

fn tmp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("tmix-test-{}-{name}", std::process::id()));
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Builds a small zero-noise mixed model and writes its tensor to a file.
fn write_model_tensor(name: &str, p: usize, discrete: bool) -> (PathBuf, MixedModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(9001);
    let core = sample_core([2, 2, 2], 8.0, &mut rng).unwrap();
    let sample = |rng: &mut ChaCha8Rng| {
        if discrete {
            sample_blockmodel_membership(p, 2, rng).unwrap()
        } else {
            sample_membership(p, 2, rng).unwrap()
        }
    };
    let pis = [sample(&mut rng), sample(&mut rng), sample(&mut rng)];
    let model = MixedModel::new(core, pis).unwrap();
    let path = tmp_path(name);
    std::fs::write(&path, write_tensor_text(&model.signal)).unwrap();
    (path, model)
}

/// Extracts the CSV matrix printed under `# mode <k> membership`.
fn parse_membership(out: &str, mode: usize, p: usize) -> DMatrix<f64> {
    let marker = format!("# mode {mode} membership");
    let mut lines = out.lines().skip_while(|l| !l.starts_with(&marker));
    lines.next().expect("membership header present");
    let rows: Vec<Vec<f64>> = lines
        .take(p)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), p);
    DMatrix::from_fn(p, rows[0].len(), |i, j| rows[i][j])
}

#[test]
fn missing_files_exit_2() {
    let out = run(&["estimate", "--tensor", "/nonexistent/t.txt", "--ranks", "2,2,2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["rank-select", "--tensor", "/nonexistent/t.txt", "--max-rank", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "--config", "/nonexistent/c.txt", "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    // Unknown flag.
    let out = run(&["estimate", "--tensor", "x", "--ranks", "2,2,2", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    // Conflicting iteration flags.
    let out = run(&[
        "estimate", "--tensor", "x", "--ranks", "2,2,2", "--iters", "4", "--auto-iters",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Malformed ranks.
    let out = run(&["estimate", "--tensor", "x", "--ranks", "2,2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_tensor_exits_2_with_line_number() {
    let path = tmp_path("bad-tensor.txt");
    std::fs::write(&path, "2 2 2\n1 2 3 nope 5 6 7 8\n").unwrap();
    let out = run(&["estimate", "--tensor", path.to_str().unwrap(), "--ranks", "2,2,2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "stderr: {err}");
    std::fs::remove_file(&path).ok();
}

#[test]
fn estimate_round_trips_zero_noise_model() {
    let p = 20;
    let (path, model) = write_model_tensor("roundtrip.txt", p, false);
    let out = run(&["estimate", "--tensor", path.to_str().unwrap(), "--ranks", "2,2,2"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for k in 0..3 {
        let est = parse_membership(&text, k + 1, p);
        let res = align_matrices(&est, model.memberships[k].matrix()).unwrap();
        assert!(res.l2inf_error <= 1e-7, "mode {k}: error {}", res.l2inf_error);
    }
    assert!(text.contains("# summary"));
    assert!(text.contains("# subspace change trace"));
    for k in 1..=3 {
        assert!(text.contains(&format!("# mode {k} corners")));
    }
    std::fs::remove_file(&path).ok();
}

#[test]
fn estimate_kmedians_emits_labels() {
    let p = 24;
    let (path, model) = write_model_tensor("kmedians.txt", p, true);
    let out = run(&[
        "--seed", "5", "estimate", "--tensor", path.to_str().unwrap(),
        "--ranks", "2,2,2", "--kmedians",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let truth = model.memberships[0].labels().unwrap();
    let labels_line = text
        .lines()
        .skip_while(|l| !l.starts_with("# mode 1 labels"))
        .nth(1)
        .expect("labels emitted");
    let labels: Vec<usize> = labels_line.split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(labels.len(), p);
    // Zero noise: the clustering matches the planted labels up to renaming.
    let agree = |pm: [usize; 2]| labels.iter().zip(&truth).filter(|&(&l, &t)| pm[l] == t).count();
    assert_eq!(agree([0, 1]).max(agree([1, 0])), p);
    std::fs::remove_file(&path).ok();
}

#[test]
fn estimate_auto_iters_runs() {
    let (path, _) = write_model_tensor("autoiters.txt", 16, false);
    let out = run(&[
        "estimate", "--tensor", path.to_str().unwrap(), "--ranks", "2,2,2", "--auto-iters",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("iterations,"));
    std::fs::remove_file(&path).ok();
}

#[test]
fn rank_select_exact_low_rank_tensor() {
    // A balanced superdiagonal core keeps each mode's two signal singular
    // values comparable, so the spectral gap to zero dominates the elbow.
    let mut rng = ChaCha8Rng::seed_from_u64(9002);
    let mut core = tmix_core::Tensor3::zeros([2, 2, 2]);
    core.set(0, 0, 0, 10.0);
    core.set(1, 1, 1, 9.0);
    let pis = [
        sample_membership(18, 2, &mut rng).unwrap(),
        sample_membership(18, 2, &mut rng).unwrap(),
        sample_membership(18, 2, &mut rng).unwrap(),
    ];
    let model = MixedModel::new(core, pis).unwrap();
    let path = tmp_path("rank.txt");
    std::fs::write(&path, write_tensor_text(&model.signal)).unwrap();
    let out = run(&["rank-select", "--tensor", path.to_str().unwrap(), "--max-rank", "5"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim(), "2,2,2");
    std::fs::remove_file(&path).ok();
}

#[test]
fn simulate_deterministic_with_pinned_header() {
    let cfg_path = tmp_path("sim-config.txt");
    std::fs::write(
        &cfg_path,
        "p = 14\nranks = 2,2,2\ndelta = 8\nsigma_max = 0.5\nalpha = 1\ntrials = 2\nseed = 11\n",
    )
    .unwrap();
    let out1 = tmp_path("sim-a.csv");
    let out2 = tmp_path("sim-b.csv");
    for out in [&out1, &out2] {
        let res = run(&[
            "simulate", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "same config and seed must give identical bytes");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(tmix_core::experiment::CSV_HEADER));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 3);

    // The global seed flag overrides the config seed.
    let out3 = tmp_path("sim-c.csv");
    let res = run(&[
        "--seed", "99", "simulate", "--config", cfg_path.to_str().unwrap(),
        "--out", out3.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    let c = std::fs::read(&out3).unwrap();
    assert_ne!(b, c);
    for p in [&cfg_path, &out1, &out2, &out3] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn simulate_rejects_bad_config() {
    let cfg_path = tmp_path("bad-config.txt");
    std::fs::write(&cfg_path, "nonsense = 1\n").unwrap();
    let res = run(&[
        "simulate", "--config", cfg_path.to_str().unwrap(), "--out", "/tmp/never.csv",
    ]);
    assert_eq!(res.status.code(), Some(2));
    std::fs::remove_file(&cfg_path).ok();
}
