use std::path::Path;
use std::process::{Command, Output};

use riskcomp::io::{sidecar_path, Cell, ExperimentConfig, OutputFormat, ResultTable};

fn riskcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskcomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn frontier_file_has_one_row_per_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("frontier.csv");
    let o = riskcomp(&[
        "normal-frontier",
        "--n",
        "100",
        "--mu",
        "0.1",
        "--sigma2",
        "0.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = ResultTable::read(&out, OutputFormat::Csv).unwrap();
    assert_eq!(t.rows.len(), 199);
    assert_eq!(t.rows[0][0], Cell::Int(2));
    assert_eq!(t.rows[198][0], Cell::Int(200));
    assert_eq!(t.metadata.experiment, "normal-frontier");
    assert_eq!(t.metadata.parameters["n"], serde_json::json!(100));
    let header = std::fs::read_to_string(&out).unwrap();
    assert!(header.starts_with("budget,n1,n2,n12,risk,risk_mu,risk_sigma2\n"));
}

#[test]
fn config_file_with_flag_overrides_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "hl.toml",
        "experiment = \"hl\"\nmaster_seed = 3\nreplicates = 100\n[parameters]\nn = 50\nalphas = [0.2]\nbudgets = [10, 20]\n",
    );
    let mut bytes = Vec::new();
    for (i, extra) in [&[][..], &["--serial"][..], &[][..]].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.csv"));
        let mut args = vec!["hl", "--config", &cfg, "--seed", "11", "--variants", "sequential,mean"];
        args.extend_from_slice(extra);
        let out_s = out.to_str().unwrap().to_string();
        args.extend_from_slice(&["--out", &out_s]);
        let o = riskcomp(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut b = std::fs::read(&out).unwrap();
        b.extend(std::fs::read(sidecar_path(&out)).unwrap());
        bytes.push(b);
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
    let t = ResultTable::read(&dir.path().join("r0.csv"), OutputFormat::Csv).unwrap();
    assert_eq!(t.metadata.master_seed, 11);
    assert_eq!(t.rows.len(), 4);
}

#[test]
fn json_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = riskcomp(&[
        "matinv",
        "--replicates",
        "5",
        "--rhos",
        "0.3",
        "--power-constant",
        "30",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = ResultTable::read(&out, OutputFormat::Json).unwrap();
    let again = ResultTable::from_json_str(&t.to_json_string()).unwrap();
    assert_eq!(t, again);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), t.to_json_string());
    assert!(!sidecar_path(&out).exists());
}

#[test]
fn validate_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        "experiment = \"normal-frontier\"\n[parameters]\nmode = \"streaming\"\ns = 1\nsigma2 = 0\n",
    );
    let o = riskcomp(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("s must be in [2, n-1]"), "{err}");
    assert!(err.contains("sigma2"), "{err}");
    assert_eq!(err.lines().count(), 2, "{err}");

    let rho = write(
        dir.path(),
        "rho.toml",
        "experiment = \"matinv\"\n[parameters]\nrhos = [1.0]\n",
    );
    let o = riskcomp(&["validate", &rho]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho must be in [0,1)"));

    let unknown = write(
        dir.path(),
        "u.toml",
        "experiment = \"hl\"\n[parameters]\nbudgetz = [2]\n",
    );
    let o = riskcomp(&["validate", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budgetz"));

    let good = write(
        dir.path(),
        "good.toml",
        "experiment = \"expfam-frontier\"\n[parameters]\nfamily = \"bernoulli\"\n",
    );
    let o = riskcomp(&["validate", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");
    assert!(ExperimentConfig::load(&good).unwrap().validate().is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(riskcomp(&["hl", "--alphas", "1.5"]).status.code(), Some(2));
    assert_eq!(riskcomp(&["nonsense"]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        riskcomp(&["validate", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let other = write(dir.path(), "hl.toml", "experiment = \"hl\"\n");
    assert_eq!(riskcomp(&["matinv", "--config", &other]).status.code(), Some(2));

    // a regular file where a directory is needed
    let blocker = write(dir.path(), "blocker", "");
    let out = format!("{blocker}/out.csv");
    let o = riskcomp(&["normal-frontier", "--n", "5", "--out", &out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
