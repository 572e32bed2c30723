use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cqed::cli::{linspace, statics_report};
use cqed::config::DeviceConfig;
use cqed::report;
use cqed_core::spectrum::sweep_static;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cqed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqed"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn cqed")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

#[test]
fn sweep_stdout_matches_library() {
    let dev = DeviceConfig::load(&configs().join("device_a.toml")).unwrap();
    let out = cqed(&[
        "sweep",
        "-c",
        &cfg("device_a.toml"),
        "--detunings",
        "60,-45",
        "--mean-freq-start",
        "4.5",
        "--mean-freq-stop",
        "5.2",
        "--mean-freq-points",
        "15",
        "--reference-single-coupler",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = sweep_static(
        &dev.model,
        &linspace(4.5, 5.2, 15),
        &[60.0, -45.0],
        dev.reference,
    )
    .unwrap();
    let mut expected = Vec::new();
    report::write_sweep(&mut expected, &rows, true).unwrap();
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(expected).unwrap()
    );
}

#[test]
fn statics_json_matches_library() {
    let dev = DeviceConfig::load(&configs().join("device_b.toml")).unwrap();
    let out = cqed(&["statics", "-c", &cfg("device_b.toml")]);
    assert!(out.status.success());
    let got: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let want = serde_json::to_value(statics_report(&dev).unwrap()).unwrap();
    assert_eq!(got, want);
}

#[test]
fn uncoupled_device_has_no_interaction() {
    let out = cqed(&["statics", "-c", &cfg("uncoupled.toml")]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["zz_hz"].as_f64(), Some(0.0));
    assert_eq!(v["mu"].as_f64(), Some(0.0));
    assert_eq!(v["j_eff_mhz"].as_f64(), Some(0.0));
}

#[test]
fn seeded_rb_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |sub: &str, threads: &str| {
        let out = dir.path().join(sub);
        let o = cqed(&[
            "rb",
            "--variant",
            "interleaved",
            "--seed",
            "5",
            "--depolarizing-per-cnot",
            "3e-3",
            "--lengths",
            "1,10,40",
            "--samples",
            "5",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = args("a", "1");
    let b = args("b", "3");
    for f in ["rb.csv", "rb_fit.json", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(5));
    assert_eq!(manifest["command"].as_str(), Some("rb"));
    let csv = std::fs::read_to_string(a.join("rb.csv")).unwrap();
    assert!(csv.starts_with("variant,length,mean,stderr,samples,seed\n"));
    assert!(csv.contains("standard,") && csv.contains("interleaved"));
}

#[test]
fn usage_errors_exit_with_two() {
    let a = cfg("device_a.toml");
    for args in [
        vec!["sweep", "-c", a.as_str(), "--detunings", ""],
        vec!["rb", "--variant", "bogus"],
        vec!["statics"],
        vec!["frobnicate"],
    ] {
        let o = cqed(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn bad_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "j0_ghz = 0.002\n\n[[qubits]]\nfrequency_ghz = 5.1\nanharmonicity_ghz = -0.3\n\n[[qubits]]\nfrequency_ghz = -5.0\nanharmonicity_ghz = -0.3\n",
    )
    .unwrap();
    let o = cqed(&["statics", "-c", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 7"), "{err}");
}

#[test]
fn missing_config_file_fails() {
    let o = cqed(&["statics", "-c", "/nonexistent/device.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_j0_picks_root_near_nominal() {
    let o = cqed(&["fit-j0", "-c", &cfg("device_a.toml"), "--zz-khz", "26"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let j0 = v["j0_mhz"].as_f64().unwrap();
    assert!((5.7..=6.7).contains(&j0), "{v}");
    assert!(v["candidates_mhz"].as_array().unwrap().len() >= 2);
}

#[test]
fn stark_output_has_expected_shape() {
    let o = cqed(&["stark", "-c", &cfg("device_a.toml"), "--omegas", "1,2,4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "omega_mhz,zi_mhz");
    assert_eq!(lines.len(), 4);
    let zi: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(
        zi.windows(2).all(|w| w[1].abs() > 3.0 * w[0].abs()),
        "{zi:?}"
    );
}
