use std::path::Path;
use std::process::Command;

use hjb_cli::main_with_args;
use hjb_cli::output::{parse_comment_line, read_estimate};
use hjb_core::spectral::{build_model, propagate, SpectralVector};

const SMALL: &str = r#"
[model]
n_modes = 3
[grid]
n_steps = 6
[mc]
paths = 3000
semigroup_samples = 1000
[verify]
probes = 2
fd_paths = 1000
identification_tol = 1.0
[regularize]
ladder = [2, 8]
mollifier_samples = 8
[suite]
n_controls = 4
paths = 500
[regularity]
n_values = [4, 8]
"#;

const LINEAR: &str = r#"
[model]
n_modes = 3
[grid]
n_steps = 4
[mc]
paths = 20000
[cost]
terminal = { kind = "custom", spec = { kind = "linear", weights = [0.4, 1.0, -0.5] } }
running_scale = 0.0
[control]
driver = { kind = "zero" }
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["hjb"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn exit_codes_from_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_hjb");
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nmodes = 3\n").unwrap();
    let status = Command::new(bin)
        .args(["--config", bad.to_str().unwrap(), "solve"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(bin)
        .args(["--config", "/nonexistent/x.toml", "solve"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(bin).args(["frobnicate"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let status = Command::new(bin)
        .args(["--config", &cfg, "--out", out.to_str().unwrap(), "regularity"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn invalid_values_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\na = 0.9\n");
    assert_eq!(run(&["--config", &cfg, "solve"]), 2);
    let cfg = write_config(tmp.path(), SMALL);
    assert_eq!(run(&["--config", &cfg, "--paths", "1", "solve"]), 2);
}

#[test]
fn failed_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // an identification tolerance of zero cannot be met
    let text = SMALL.replace("identification_tol = 1.0", "identification_tol = 0.0");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("o");
    assert_eq!(run(&["--config", &cfg, "--out", out.to_str().unwrap(), "verify"]), 1);
    assert!(read(&out, "verify.json").contains("\"passed\": false"));
}

#[test]
fn every_output_carries_metadata_and_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let d = dir.to_str().unwrap();
        assert_eq!(run(&["--config", &cfg, "--out", d, "--seed", "9", "regularity"]), 0);
        assert_eq!(run(&["--config", &cfg, "--out", d, "--seed", "9", "solve"]), 0);
        let est = dir.join("estimate.json");
        assert_eq!(
            run(&[
                "--config",
                &cfg,
                "--out",
                d,
                "--seed",
                "9",
                "verify",
                "--estimate",
                est.to_str().unwrap()
            ]),
            0
        );
        assert_eq!(
            run(&[
                "--config",
                &cfg,
                "--out",
                d,
                "--seed",
                "9",
                "control",
                "--estimate",
                est.to_str().unwrap()
            ]),
            0
        );
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.len() >= 12, "{names:?}");
    let mut hash = None;
    for name in &names {
        let text = read(&a, name);
        // the resolved config records where it was written
        let strip = |t: &str| {
            t.lines()
                .filter(|l| !l.starts_with("dir = "))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&text), strip(&read(&b, name)), "{name} differs between runs");
        let meta = if name.ends_with(".csv") || name.ends_with(".toml") {
            let line = text.lines().find(|l| l.starts_with("# config_hash")).unwrap();
            parse_comment_line(line).unwrap()
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            serde_json::from_value(v["meta"].clone()).unwrap()
        };
        assert_eq!(meta.seed, 9, "{name}");
        assert_eq!(meta.version, env!("CARGO_PKG_VERSION"));
        assert_eq!(*hash.get_or_insert(meta.config_hash.clone()), meta.config_hash);
    }
}

#[test]
fn persisted_estimate_reloads_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    assert_eq!(run(&["--config", &cfg, "--out", out.to_str().unwrap(), "solve"]), 0);
    let file = read_estimate(&out.join("estimate.json")).unwrap();
    let again = serde_json::to_string(&file).unwrap();
    let back: hjb_cli::output::EstimateFile = serde_json::from_str(&again).unwrap();
    let x = SpectralVector::new(vec![0.1, -0.3, 0.2]);
    for k in 0..file.estimate.n_steps() {
        assert_eq!(
            file.estimate.value_at(k, &x).to_bits(),
            back.estimate.value_at(k, &x).to_bits()
        );
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "solve.json")).unwrap();
    assert_eq!(
        summary["value"].as_f64().unwrap().to_bits(),
        file.estimate
            .value_at(0, &SpectralVector::new(vec![0.0, 0.5, 0.0]))
            .to_bits()
    );
}

#[test]
fn zero_driver_linear_terminal_matches_the_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), LINEAR);
    let out = tmp.path().join("o");
    assert_eq!(run(&["--config", &cfg, "--out", out.to_str().unwrap(), "solve"]), 0);
    let s: serde_json::Value = serde_json::from_str(&read(&out, "solve.json")).unwrap();
    let model = build_model(3, 0.3, 0.7).unwrap();
    let m = propagate(&model, 1.0, &SpectralVector::new(vec![0.0, 0.5, 0.0])).unwrap();
    let exact: f64 = [0.4, 1.0, -0.5].iter().zip(&m.coeffs).map(|(a, b)| a * b).sum();
    let (v, se) = (s["value"].as_f64().unwrap(), s["std_error"].as_f64().unwrap());
    assert!((v - exact).abs() <= 3.0 * se + 1e-12, "{v} ± {se} vs {exact}");
}

#[test]
fn doubling_paths_halves_the_error_by_sqrt_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let mut se = Vec::new();
    for (p, name) in [("8000", "a"), ("16000", "b")] {
        let out = tmp.path().join(name);
        assert_eq!(
            run(&["--config", &cfg, "--out", out.to_str().unwrap(), "--paths", p, "solve"]),
            0
        );
        let s: serde_json::Value = serde_json::from_str(&read(&out, "solve.json")).unwrap();
        se.push(s["std_error"].as_f64().unwrap());
    }
    let ratio = se[0] / se[1];
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn estimate_from_another_problem_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    assert_eq!(run(&["--config", &cfg, "--out", out.to_str().unwrap(), "solve"]), 0);
    let other = write_config(tmp.path(), &SMALL.replace("n_steps = 6", "n_steps = 5"));
    let est = out.join("estimate.json");
    assert_eq!(
        run(&["--config", &other, "verify", "--estimate", est.to_str().unwrap()]),
        2
    );
}
