use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tfconc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tfconc"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = tfconc(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn spectrum_writes_eigenpairs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["spectrum", "--window", "gaussian:pi", "--region", "disc 0 0 1.5", "--grid", "auto", "--rank", "3", "--out", out]);
    for f in ["spectrum.csv", "eigfun_1.csv", "eigfun_2.csv", "eigfun_3.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = read_json(&dir.path().join("summary.json"));
    let l1 = summary["lambda_1"].as_f64().unwrap();
    assert!(l1 > 0.9 && l1 < 1.0 + 1e-8, "{l1}");
    assert_eq!(summary["meta"]["tool"], "tfconc");
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("# tfconc "));
    assert!(csv.lines().next().unwrap().contains("config="));
}

#[test]
fn spectrum_reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        run_ok(&["spectrum", "--region", "rect 0 1 0 2", "--rank", "2", "--out", d.path().to_str().unwrap()]);
    }
    for f in ["spectrum.csv", "eigfun_1.csv", "eigfun_2.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn optional_spectrum_outputs() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "spectrum",
        "--region",
        "disc 0 0 1",
        "--rank",
        "1",
        "--dump-operator",
        "--spectrogram",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let summary = read_json(&dir.path().join("summary.json"));
    let n = summary["samples"].as_u64().unwrap() as usize;
    let bin = fs::read(dir.path().join("operator.bin")).unwrap();
    assert!(bin.len() >= 16 * n * n);
    assert!(dir.path().join("spectrogram_1.csv").exists());
}

#[test]
fn zero_radius_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = tfconc(&["spectrum", "--region", "disc 0 0 0", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("radius"), "{}", stderr(&out));
}

#[test]
fn asymptotics_fits_plunge_growth() {
    let dir = TempDir::new().unwrap();
    run_ok(&["asymptotics", "--scales", "1,2,3,4", "--out", dir.path().to_str().unwrap()]);
    let fits = read_json(&dir.path().join("fits.json"));
    let slope = fits["plunge"]["slope"].as_f64().unwrap();
    assert!((0.8..=1.2).contains(&slope), "{slope}");
    let scaling = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert_eq!(scaling.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn asymptotics_rejects_bad_thresholds_and_single_scale() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(tfconc(&["asymptotics", "--scales", "2", "--out", out], &[]).status.code(), Some(2));
    assert_eq!(
        tfconc(&["asymptotics", "--lambda", "0.9", "--mu", "0.5", "--out", out], &[]).status.code(),
        Some(2)
    );
}

#[test]
fn decay_triangle_records_support_check() {
    let dir = TempDir::new().unwrap();
    run_ok(&["decay", "--window", "triangle", "--region", "disc 0 0 1", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("decay_report.json"));
    assert_eq!(report["kernel_vanishing"]["status"], "checked");
    assert_eq!(report["kernel_vanishing"]["ok"], true);
    for row in report["support_outside_3"].as_array().unwrap() {
        assert_eq!(row["mass_fraction_outside"].as_f64().unwrap(), 0.0);
    }
    assert!(dir.path().join("decay.csv").exists() && dir.path().join("decay_frequency.csv").exists());
    assert!(!dir.path().join("hermite.csv").exists());
}

#[test]
fn decay_gaussian_records_hermite_overlaps() {
    let dir = TempDir::new().unwrap();
    run_ok(&["decay", "--window", "gaussian:pi", "--region", "disc 0 0 1.5", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("decay_report.json"));
    let overlaps = report["hermite"]["overlaps"].as_array().unwrap();
    assert_eq!(overlaps.len(), 6);
    assert!(overlaps.iter().all(|c| c["overlap"].as_f64().unwrap() >= 0.99));
    assert!(report["rows"].as_array().unwrap().iter().all(|r| r["time"]["ok"] == true));
    assert!(dir.path().join("hermite.csv").exists());
}

#[test]
fn decay_without_compact_support_skips_vanishing_check() {
    let dir = TempDir::new().unwrap();
    let window = dir.path().join("sech.csv");
    let n = 257;
    let dt = 1.0 / 16.0;
    let mut text = String::from("t,re,im\n");
    for k in 0..n {
        let t = (k as f64 - (n - 1) as f64 / 2.0) * dt;
        text.push_str(&format!("{t},{},0\n", 1.0 / (12.0 * t).cosh()));
    }
    fs::write(&window, text).unwrap();
    let arg = format!("custom:{}", window.display());
    let out = run_ok(&["decay", "--window", &arg, "--region", "disc 0 0 0.5", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("decay_report.json"));
    assert_eq!(report["kernel_vanishing"]["status"], "skipped");
    assert!(stderr(&out).contains("skipped"));
}

#[test]
fn filter_reproduces_an_eigenfunction() {
    let dir = TempDir::new().unwrap();
    let spec_dir = dir.path().join("spec");
    let region = "disc 0 0 1.5";
    run_ok(&["spectrum", "--region", region, "--rank", "1", "--out", spec_dir.to_str().unwrap()]);
    let psi = spec_dir.join("eigfun_1.csv");
    let filt_dir = dir.path().join("filt");
    run_ok(&["filter", "--region", region, "--input", psi.to_str().unwrap(), "--rank", "1", "--out", filt_dir.to_str().unwrap()]);
    let parse = |p: &Path| -> Vec<(f64, f64)> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (v[1], v[2])
            })
            .collect()
    };
    let (a, b) = (parse(&psi), parse(&filt_dir.join("filtered.csv")));
    assert_eq!(a.len(), b.len());
    let worst = a.iter().zip(&b).map(|(x, y)| (x.0 - y.0).hypot(x.1 - y.1)).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn filter_concentrates_seeded_noise() {
    let dir = TempDir::new().unwrap();
    run_ok(&["filter", "--input", "noise", "--seed", "42", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("filter_report.json"));
    let before = report["fraction_before"].as_f64().unwrap();
    let after = report["fraction_after"].as_f64().unwrap();
    assert!(after > before, "{before} -> {after}");
}

#[test]
fn filter_input_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(tfconc(&["filter", "--input", "noise", "--rank", "0", "--out", out], &[]).status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,re,im\n0,1,0\n0.5,oops,0\n1,0,0\n").unwrap();
    let res = tfconc(&["filter", "--input", bad.to_str().unwrap(), "--out", out], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("line 3"), "{}", stderr(&res));
    assert_eq!(tfconc(&["filter", "--out", out], &[]).status.code(), Some(2));
}

#[test]
fn autocorr_approaches_one() {
    let dir = TempDir::new().unwrap();
    run_ok(&["autocorr", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("autocorr_report.json"));
    let values: Vec<f64> = report["values"].as_array().unwrap().iter().map(|v| v["value"].as_f64().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert!(values.windows(2).all(|w| w[1] > w[0]));
    assert!((values[3] - 1.0).abs() < 0.05);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# spectrum settings\nregion = disc 0 0 1\nrank = 2\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["spectrum", "--config", cfg.to_str().unwrap(), "--region", "disc 0 0 1.5", "--out", b.to_str().unwrap()]);
    assert_eq!(read_json(&a.join("summary.json"))["region"], "disc 0 0 1");
    assert_eq!(read_json(&b.join("summary.json"))["region"], "disc 0 0 1.5");
    assert!(a.join("eigfun_2.csv").exists() && !a.join("eigfun_3.csv").exists());
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(tfconc(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = tfconc(&["autocorr", "--scales", "2,4", "--out", out], &[("TFC_THREADS", "2")]);
    assert!(ok.status.success());
    let bad = tfconc(&["autocorr", "--out", out], &[("TFC_THREADS", "zero")]);
    assert_eq!(bad.status.code(), Some(2));
}
