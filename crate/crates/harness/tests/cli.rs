use std::path::Path;
use std::process::{Command, Output};

fn wwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wwlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_bath_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "atom.kind = \"constant\"\natom.levels = [1.0, 2.0]\natom.coupling = [1.0, 1.0]\n",
    );
    let out = wwlab(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bath.kind"), "{}", stderr(&out));
}

#[test]
fn unreadable_config_is_a_config_error() {
    let out = wwlab(&["validate", "--config", "/nonexistent/wwlab.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_point_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.1]\n");
    let out = wwlab(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("need ≥ 3 points for slope fit"));
}

#[test]
fn smallness_violation_needs_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.1]\nsweep.override_smallness = false\n",
    );
    let out_dir = dir.path().join("out");
    let out = wwlab(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("smallness"));
    let out = wwlab(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--override-smallness"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn simulate_writes_four_trajectories_and_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.05]\noutput.dir = \"run\"\n");
    let out = wwlab(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // output.dir resolves against the config file's directory.
    let run = dir.path().join("run");
    for f in ["exact.csv", "volterra.csv", "effective.csv", "leading.csv", "comparison.csv", "metadata.toml"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let exact = std::fs::read_to_string(run.join("exact.csv")).unwrap();
    assert_eq!(exact.lines().count(), 202);
    let meta = std::fs::read_to_string(run.join("metadata.toml")).unwrap();
    assert!(meta.contains("strong_ratio = 10.0"));
}

fn comparison_columns(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn zero_coupling_leaves_only_the_adiabatic_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.1]\nsweep.lambda_rule = \"explicit\"\nsweep.lambdas = [0.0]\n",
    );
    let sup = |eps: f64| {
        let out_dir = dir.path().join(format!("e{eps}"));
        let out = wwlab(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let rows = comparison_columns(&out_dir.join("comparison.csv"));
        let col = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
        (col(1), col(2), col(3))
    };
    let (lead, volt, eff) = sup(0.1);
    // The reduced solvers reproduce free evolution; only leading order differs.
    assert!(volt < 1e-7 && eff < 1e-7, "{volt:.3e} {eff:.3e}");
    assert!(lead > 1e-3 && lead < 0.1 * 5.0, "{lead:.3e}");
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.2, 0.1, 0.05]\nsweep.lambda_c = 0.02\n",
    );
    let run = |threads: &str| {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = wwlab(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", threads]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        ["sweep.csv", "slopes.csv", "metadata.toml"].map(|f| std::fs::read(out_dir.join(f)).unwrap())
    };
    let serial = run("1");
    let parallel = run("3");
    assert_eq!(serial, parallel);
    let text = String::from_utf8(serial[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",ok")));
}

#[test]
fn validate_reports_discretization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "scenario = \"ww-ref-2level\"\n");
    let out = wwlab(&["validate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    // λ² = ε violates smallness for ε ≥ 1/32; the preset carries the override.
    assert!(text.lines().nth(1).unwrap().contains(",false,true,"));
}

#[test]
fn ohmic_and_tabulated_baths_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::from("omega,rho\n");
    for k in 0..=2500 {
        let w = k as f64 * 0.01;
        table.push_str(&format!("{w},{}\n", w * w * (-w).exp()));
    }
    std::fs::write(dir.path().join("rho.csv"), table).unwrap();
    let base = "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.2, 0.1, 0.05]\nsweep.lambda_c = 0.02\n";
    let tab = write_config(
        dir.path(),
        "tab.toml",
        &format!("{base}bath.kind = \"tabulated\"\nbath.file = \"rho.csv\"\nbath.decay_c = 5.7\nbath.decay_m = 3.0\n"),
    );
    let out = wwlab(&["validate", "--config", &tab, "--out", dir.path().join("tab").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ohm = write_config(
        dir.path(),
        "ohm.toml",
        &format!("{base}bath.kind = \"ohmic\"\nbath.scale = 1.0\nbath.s = 3.0\nbath.omega_c = 1.0\n"),
    );
    let out = wwlab(&["validate", "--config", &ohm, "--out", dir.path().join("ohm").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bad = write_config(dir.path(), "bad.toml", &format!("{base}bath.kind = \"ohmic\"\nbath.scale = 1.0\nbath.omega_c = 1.0\n"));
    let out = wwlab(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bath.s"));
}

#[test]
fn emission_and_regimes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "scenario = \"ww-ref-2level\"\nsweep.epsilons = [0.1]\nsweep.lambda_rule = \"explicit\"\nsweep.lambdas = [0.1]\n",
    );
    let out_dir = dir.path().join("out");
    let out = wwlab(&["emission", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary = std::fs::read_to_string(out_dir.join("emission.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "index,eps,lambda,ratio,average,limit_a,limit_b,limit,rel_err");
    let spectrum = std::fs::read_to_string(out_dir.join("spectrum_0.csv")).unwrap();
    assert!(spectrum.lines().last().unwrap().contains(",avg,"));

    let out = wwlab(&["regimes", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("regimes.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",davies,"));
}
