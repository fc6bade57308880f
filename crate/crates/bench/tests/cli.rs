use std::fs;
use std::path::Path;
use std::process::Command;

use tweedie_gp::svgp::TrainConfig;
use tweedie_gp_bench::dataset::{build_records, read_long_csv, AdiFilter, DatasetConfig};
use tweedie_gp_bench::models::{ForecastSettings, ModelKind};
use tweedie_gp_bench::report::{build_report, write_forecasts, write_report};
use tweedie_gp_bench::runner::{run_experiment, RunConfig};

fn toy_csv(n_series: usize, len: usize) -> String {
    let mut s = String::from("item_id,t,value\n");
    for i in 0..n_series {
        for t in 1..=len {
            let v = if (t * (i + 3)) % 5 < 2 { (t + i) % 4 + 1 } else { 0 };
            s += &format!("item{i},{t},{v}\n");
        }
    }
    s
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tgp-bench"))
}

fn run_cfg(parallelism: usize) -> RunConfig {
    RunConfig {
        dataset: "toy".into(),
        models: ModelKind::ALL.to_vec(),
        settings: ForecastSettings { train: TrainConfig { max_iters: 20, ..Default::default() }, n_samples: 500 },
        master_seed: 3,
        parallelism,
        failure_threshold: 0.05,
    }
}

#[test]
fn results_do_not_depend_on_parallelism_or_order() {
    let raw = read_long_csv(toy_csv(6, 20).as_bytes(), "toy").unwrap();
    let cfg = DatasetConfig::custom("toy", 16, 4).unwrap();
    let records = build_records(raw, &cfg, AdiFilter::AnyZero).unwrap();
    let a = run_experiment(&records, &run_cfg(1)).unwrap();
    let mut reversed = records.clone();
    reversed.reverse();
    let b = run_experiment(&reversed, &run_cfg(3)).unwrap();
    for m in ModelKind::ALL {
        for (id, ra) in &a.runs[&m] {
            assert_eq!(ra.outcome, b.runs[&m][id].outcome, "{m} on {id}");
        }
    }
    let (ra, rb) = (build_report(&a, 0.05).unwrap(), build_report(&b, 0.05).unwrap());
    assert_eq!(ra.scores, rb.scores);
}

#[test]
fn forecast_files_have_h_rows_and_monotone_quantiles() {
    let raw = read_long_csv(toy_csv(4, 20).as_bytes(), "toy").unwrap();
    let cfg = DatasetConfig::custom("toy", 16, 4).unwrap();
    let records = build_records(raw, &cfg, AdiFilter::AnyZero).unwrap();
    let exp = run_experiment(&records, &run_cfg(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_forecasts(&exp, dir.path()).unwrap();
    write_report(&build_report(&exp, 0.05).unwrap(), dir.path()).unwrap();
    for m in ModelKind::ALL {
        let text = fs::read_to_string(dir.path().join(format!("{}.csv", m.name()))).unwrap();
        let rows: Vec<Vec<f64>> =
            text.lines().skip(1).map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), records.len() * 4, "{m}");
        for r in rows {
            let q = &r[..r.len() - 1];
            assert!(q.windows(2).all(|w| w[0] <= w[1]), "{m}: {q:?}");
        }
    }
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert!(scores.starts_with("dataset,model,metric,value,excluded_count\n"));
    assert_eq!(scores.lines().count(), 1 + 7 * ModelKind::ALL.len());
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.csv", &toy_csv(3, 51));
    let bad = write(dir.path(), "bad.csv", "item_id,t,value\na,1,-2\n");
    let out = dir.path().join("out");

    let status =
        bin().args(["run", "--dataset", "nowhere", "--data"]).arg(&good).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let status =
        bin().args(["run", "--dataset", "carparts", "--data"]).arg(&bad).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = bin()
        .args(["run", "--dataset", "carparts", "--models", "EmpQuant,ADIDA_C,WSS", "--samples", "200", "--data"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("forecasts/WSS.csv").is_file());

    let out2 = dir.path().join("eval");
    let status = bin()
        .args(["evaluate", "--dataset", "carparts", "--forecasts"])
        .arg(out.join("forecasts"))
        .arg("--data")
        .arg(&good)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let a = fs::read_to_string(out.join("scores.csv")).unwrap();
    let b = fs::read_to_string(out2.join("scores.csv")).unwrap();
    assert_eq!(a, b);

    let o = bin().args(["density", "--mu", "1", "--phi", "1", "--rho", "1.5", "--y", "0"]).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("log_density -2"));
    let status = bin().args(["density", "--mu", "1", "--phi", "1", "--rho", "2.5", "--y", "1"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}
