use std::process::Command;

fn leohfl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leohfl"))
}

#[test]
fn run_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = leohfl()
        .args(["run", "--seed", "3", "--agg", "fedsel", "--beta", "0.4", "--kappa", "0.6"])
        .args(["--assoc", "nearest", "--rounds", "2", "--subrounds", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["metrics.csv", "summary.csv", "psnr.svg", "ssim.svg"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("round,subregion_round,time_s"));
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn scenario_file_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let status = leohfl().args(["scenario", "--out"]).arg(&path).status().unwrap();
    assert!(status.success());
    let out = leohfl()
        .args(["run", "--rounds", "1", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_and_single_gateway_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = leohfl()
        .args(["compare", "--schemes", "fedavg,fedlol", "--rounds", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("metrics_fedavg.csv").exists());
    assert!(dir.path().join("metrics_fedlol.csv").exists());
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("snr_db,fedavg_psnr_db,fedavg_ssim,fedlol_psnr_db,fedlol_ssim"));

    let dir = tempfile::tempdir().unwrap();
    let out = leohfl()
        .args(["run", "--single-gateway", "--agg", "fedavg", "--rounds", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("metrics_gw2.csv").exists());
}

#[test]
fn contacts_prints_both_rules() {
    let out = leohfl()
        .args(["contacts", "--seeds", "1", "--instants", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(",proposed,") && text.contains(",nearest,"));
}

#[test]
fn bad_arguments_are_rejected() {
    let out = leohfl().args(["run", "--agg", "fedmedian"]).output().unwrap();
    assert!(!out.status.success());
    let out = leohfl().args(["run", "--subrounds", "0", "--rounds", "1"]).output().unwrap();
    assert!(!out.status.success());
}
