use std::process::Command;

fn vqos() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vqos"))
}

fn stdout_of(args: &[&str]) -> String {
    let out = vqos().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn circuit_count_table() {
    assert_eq!(
        stdout_of(&["circuit-count", "--params", "20", "--terms", "20"]),
        "params,terms,circuits_n,circuits_w\n20,20,210,400\n"
    );
    assert!(stdout_of(&["circuit-count", "--sites", "5"]).ends_with("20,20,210,400\n"));
    assert!(!vqos()
        .args(["circuit-count", "--params", "3"])
        .output()
        .unwrap()
        .status
        .success());
}

#[test]
fn evolve_writes_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let traj = dir.path().join("theta.csv");
    let status = vqos()
        .args([
            "evolve",
            "--sites",
            "3",
            "--layers",
            "2",
            "--t-final",
            "1",
            "--out",
        ])
        .arg(&out)
        .arg("--trajectory")
        .arg(&traj)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "t,sites,layers,infidelity_vqos,infidelity_trotter"
    );
    assert_eq!(lines.len(), 22);
    assert!(std::fs::read_to_string(&traj)
        .unwrap()
        .starts_with("t,theta_1,"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "sites = 3\nlayers = [1, 2]\nt_targets = [0.5]\n").unwrap();
    let text = stdout_of(&[
        "layer-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--t-targets",
        "0.25,0.5",
    ]);
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn required_layers_for_custom_hamiltonian() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.txt");
    std::fs::write(&h, "0.7 XX\n").unwrap();
    let text = stdout_of(&[
        "required-layers",
        "--hamiltonian",
        h.to_str().unwrap(),
        "--t-targets",
        "1,2",
    ]);
    assert_eq!(
        text,
        "t,layers_vqos,layers_trotter\n1.0000000000000000e0,1,1\n2.0000000000000000e0,1,1\n"
    );
}

#[test]
fn estimate_g_reports_exact_value() {
    let text = stdout_of(&[
        "estimate-g",
        "--pj",
        "XII",
        "--pk",
        "XII",
        "--j",
        "0",
        "--l",
        "0",
        "--method",
        "direct",
    ]);
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[0], 1.0);
    assert_eq!(row[2], 1.0);
}

#[test]
fn invalid_input_fails() {
    let out = vqos().args(["evolve", "--sites", "2"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sites"));
    assert!(!vqos()
        .args(["evolve", "--backend", "gpu"])
        .output()
        .unwrap()
        .status
        .success());
}

#[test]
fn aborted_integration_flushes_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.txt");
    std::fs::write(&h, "1e308 XX\n").unwrap();
    let out_csv = dir.path().join("partial.csv");
    let out = vqos()
        .args(["evolve", "--hamiltonian", h.to_str().unwrap(), "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aborted"));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert!(text.lines().count() >= 2);
}
