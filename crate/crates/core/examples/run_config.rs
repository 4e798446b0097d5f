//! Run an experiment from TOML text and write CSV plus its metadata.

use riskcomp::io::{run, sidecar_path, ExperimentConfig, OutputFormat, ResultTable};

const CONFIG: &str = r#"
experiment = "hl"
master_seed = 17
replicates = 200

[parameters]
n = 64
alphas = [0.1]
budgets = [16, 32]
variants = ["sequential", "mean"]
"#;

fn main() -> riskcomp::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    for e in cfg.validate() {
        eprintln!("invalid: {e}");
    }
    let table = run(&cfg)?;
    print!("{}", table.to_csv_string()?);

    let dir = std::env::temp_dir().join("riskcomp-run-config");
    let path = dir.join("hl.csv");
    table.write(&path, OutputFormat::Csv)?;
    let back = ResultTable::read(&path, OutputFormat::Csv)?;
    println!(
        "wrote {} and {}; exact round trip: {}",
        path.display(),
        sidecar_path(&path).display(),
        back == table
    );
    Ok(())
}
