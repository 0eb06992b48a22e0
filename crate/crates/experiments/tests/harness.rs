use std::fs;
use std::path::Path;
use std::process::Command;

use experiments::config::ExperimentConfig;
use experiments::fit::fit_rate;
use experiments::output::{read_snapshot, write_snapshot, SnapshotFile};
use experiments::runner::{check_sweep_axes, execute, strictly_decreasing, Mode};
use experiments::ExpError;
use qvlasov::grid::make_grid;
use qvlasov::hartree::{gaussian_density, init_mollified};

const SMOKE: &str = r#"{
    "scenario": "smoke",
    "hbar": [0.4],
    "grid": { "length": 51.2, "n_x": [256] },
    "time": { "t_final": 0.1, "dt_factor": 0.1, "snapshots": 2 },
    "vlasov": { "length": 25.6, "n_x": 64, "n_xi": 64, "xi_max": 4.0, "dt": 0.01 },
    "seed": 7
}"#;

fn with(base: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(base).unwrap();
    edit(&mut v);
    v.to_string()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qvlasov"));
    c.env("RUST_LOG", "error");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn fit_rate_examples() {
    let quad: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05].iter().map(|&h| (h, 3.0 * h * h)).collect();
    let f = fit_rate(&quad).unwrap();
    assert!((f.slope - 2.0).abs() <= 1e-12);
    assert!(f.stderr <= 1e-12);
    assert!((f.intercept - 3f64.ln()).abs() <= 1e-12);
    assert_eq!(f.points, 4);

    let lin = fit_rate(&[(0.4, 0.1), (0.2, 0.05), (0.1, 0.025)]).unwrap();
    assert!((lin.slope - 1.0).abs() <= 1e-12);

    let noisy = fit_rate(&[(0.4, 0.1), (0.2, 0.06), (0.1, 0.025)]).unwrap();
    assert!(noisy.stderr > 0.0 && (noisy.slope - 1.0).abs() < 0.3);

    assert!(matches!(fit_rate(&[(0.4, 0.1), (0.2, 0.05)]), Err(ExpError::Config(_))));
    assert!(matches!(fit_rate(&[(0.4, 0.1), (0.2, 0.0), (0.1, 0.01)]), Err(ExpError::Numerics(_))));
    assert!(fit_rate(&[(0.4, 0.1), (0.4, 0.2), (0.4, 0.3)]).is_err());
}

#[test]
fn monotonicity_helper() {
    assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
    assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
    assert!(!strictly_decreasing(&[1.0, 2.0, 0.5]));
}

#[test]
fn config_validation_rejects_bad_input() {
    let bad = [
        with(SMOKE, |v| v["hbar"] = serde_json::json!([-0.1])),
        with(SMOKE, |v| v["grid"]["n_x"] = serde_json::json!([100])),
        with(SMOKE, |v| v["time"]["dt_factor"] = serde_json::json!(0.0)),
        with(SMOKE, |v| v["diagnostics"] = serde_json::json!({
            "moments_k": 9, "residual_k": [], "remainder_k": [], "remainder_prefactor": "taylor_2alpha",
            "family": "standard", "write_wigner": false, "positivity_probes": 0 })),
        with(SMOKE, |v| v["nbody"] = serde_json::json!({
            "particles": [4], "length": 16.0, "n_x": 64, "t_final": 0.1, "dt": 0.01 })),
        with(SMOKE, |v| v["unknown"] = serde_json::json!(1)),
    ];
    for text in &bad {
        let r = ExperimentConfig::from_json(text).and_then(|c| c.validate());
        assert!(matches!(r, Err(ExpError::Config(_))), "{text}");
    }
    ExperimentConfig::from_json(SMOKE).unwrap().validate().unwrap();
}

#[test]
fn inadmissible_hbar_is_snapped_with_a_warning() {
    let text = with(SMOKE, |v| v["hbar"] = serde_json::json!([0.43]));
    let rc = ExperimentConfig::from_json(&text).unwrap().resolve(Path::new("."), None).unwrap();
    assert_eq!(rc.points.len(), 1);
    assert_eq!(rc.points[0].hbar_requested, 0.43);
    assert!((rc.points[0].hbar - 0.4).abs() < 1e-12);
    assert_eq!(rc.warnings.len(), 1);
    assert_eq!(rc.snaps[0].used, rc.points[0].hbar);
}

#[test]
fn coupled_and_fixed_screening_labels() {
    let rc = ExperimentConfig::from_json(SMOKE).unwrap().resolve(Path::new("."), None).unwrap();
    assert_eq!(rc.limit_label, "Vlasov-Poisson");
    assert_eq!(rc.points[0].epsilon, 0.4);
    let text = with(SMOKE, |v| {
        v["kernel"] = serde_json::json!({ "epsilon": { "rule": "fixed", "values": [0.5, 1.0] }, "sign": "defocusing" })
    });
    let rc = ExperimentConfig::from_json(&text).unwrap().resolve(Path::new("."), None).unwrap();
    assert_eq!(rc.limit_label, "Vlasov with screened kernel");
    assert_eq!(rc.points.iter().map(|p| p.epsilon).collect::<Vec<_>>(), vec![0.5, 1.0]);
}

#[test]
fn sweep_needs_three_values_per_axis() {
    let rc = ExperimentConfig::from_json(SMOKE).unwrap().resolve(Path::new("."), None).unwrap();
    assert!(matches!(check_sweep_axes(&rc), Err(ExpError::Config(_))));
    let two_n = with(SMOKE, |v| {
        v["hbar"] = serde_json::json!([0.4, 0.8, 1.2]);
        v["grid"]["n_x"] = serde_json::json!([256, 512]);
    });
    let rc = ExperimentConfig::from_json(&two_n).unwrap().resolve(Path::new("."), None).unwrap();
    assert!(check_sweep_axes(&rc).is_err());

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = bin().arg("sweep").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(12.8, 64).unwrap();
    let mut psi = init_mollified(&g, &gaussian_density(&g, 0.2, 1.0), 0.2).unwrap();
    psi.t = 0.25;
    let path = dir.path().join("psi.bin");
    write_snapshot(&path, &psi).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 32 + 64 * 16);
    let back = read_snapshot(&path).unwrap();
    let expected = SnapshotFile {
        n: 64,
        length: 12.8,
        hbar: 0.2,
        t: 0.25,
        psi: psi.psi.iter().map(|z| (z.re, z.im)).collect(),
    };
    assert_eq!(back, expected);
    let mut bytes = fs::read(&path).unwrap();
    bytes.push(0);
    fs::write(&path, bytes).unwrap();
    assert!(read_snapshot(&path).is_err());
}

#[test]
fn smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("run");
    let run = bin().arg("run").arg(&cfg).arg("--output").arg(&out).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stdout).contains("p000 h=0.4"));
    for f in ["manifest.json", "schema.json", "points.csv", "residuals.csv", "nbody.csv", "p000/ledger.csv", "p000/moments.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(out.join("reference_vp/ledger.csv").exists());

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap().to_string();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["limit_label"], "Vlasov-Poisson");

    let mut ledger = csv::Reader::from_path(out.join("p000/ledger.csv")).unwrap();
    assert_eq!(&ledger.headers().unwrap()[0], "config_hash");
    let rows: Vec<csv::StringRecord> = ledger.records().map(|r| r.unwrap()).collect();
    assert!(rows.len() >= 2);
    assert!(rows.iter().all(|r| r[0] == hash));

    let snaps: Vec<_> = fs::read_dir(out.join("p000/snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), rows.len());
    let first = read_snapshot(&out.join("p000/snapshots/psi_000000.bin")).unwrap();
    assert_eq!((first.n, first.hbar, first.t), (256, 0.4, 0.0));

    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("schema.json")).unwrap()).unwrap();
    for t in schema["tables"].as_array().unwrap() {
        assert_eq!(t["columns"][0], "config_hash");
    }

    let report = bin().arg("report").arg(&out).output().unwrap();
    assert_eq!(report.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&report.stdout).contains("| p000 |"));
    assert!(out.join("report.md").exists());
}

#[test]
fn runs_are_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = with(SMOKE, |v| {
        v["time"]["t_final"] = serde_json::json!(0.4);
        v["diagnostics"] = serde_json::json!({
            "moments_k": 3, "residual_k": [0, 1, 3], "remainder_k": [3], "remainder_prefactor": "taylor_2alpha",
            "family": "standard", "write_wigner": true, "positivity_probes": 2 });
    });
    let rc = ExperimentConfig::from_json(&text).unwrap();
    let a = execute(&rc.clone().resolve(dir.path(), Some(&dir.path().join("a"))).unwrap(), Mode::Run, 1).unwrap();
    let b = execute(&rc.resolve(dir.path(), Some(&dir.path().join("b"))).unwrap(), Mode::Run, 2).unwrap();
    assert_eq!(a.exit_code(), 0);
    assert!(a.results[0].metric("moment_residual", 3).is_some());
    assert!(a.results[0].metric("husimi_probe_min", 1).unwrap() >= -1e-10);
    for f in ["points.csv", "residuals.csv", "p000/ledger.csv", "p000/moments.csv", "p000/wigner.bin", "reference_vp/ledger.csv"] {
        let x = fs::read(a.output_dir.join(f)).unwrap();
        let y = fs::read(b.output_dir.join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn fixed_screening_sweep_writes_fits() {
    let dir = tempfile::tempdir().unwrap();
    let text = with(SMOKE, |v| {
        v["hbar"] = serde_json::json!([0.8, 0.4, 0.2]);
        v["kernel"] = serde_json::json!({ "epsilon": { "rule": "fixed", "values": [0.5] }, "sign": "defocusing" });
        v["time"]["t_final"] = serde_json::json!(0.4);
        v["grid"]["length"] = serde_json::json!(25.6);
    });
    let rc = ExperimentConfig::from_json(&text).unwrap().resolve(dir.path(), None).unwrap();
    let s = execute(&rc, Mode::Sweep, 2).unwrap();
    assert_eq!(s.exit_code(), 0);
    assert_eq!(s.manifest.limit_label, "Vlasov with screened kernel");
    assert!(s.output_dir.join("reference_eps_0.5/moments.csv").exists());
    let weak = s.fits.iter().find(|f| f.quantity == "weak_error").unwrap();
    assert_eq!(weak.fit.unwrap().points, 3);
    let mut fits = csv::Reader::from_path(s.output_dir.join("fits.csv")).unwrap();
    let header: Vec<String> = fits.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..4], ["config_hash", "quantity", "axis", "group"]);
}

#[test]
fn report_rejects_foreign_schema() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), r#"{"schema_version": 99}"#).unwrap();
    let out = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let missing = bin().arg("report").arg(dir.path().join("nothing")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn dry_run_lists_points_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = bin().arg("run").arg(&cfg).arg("--dry-run").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let points: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(points[0]["id"], "p000");
    assert!(!dir.path().join("out").exists());
}
