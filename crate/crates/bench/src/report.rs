//! Score tables, coverage, timing and significance reports, and the CSV
//! files they are written to.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use tweedie_gp::metrics::{
    aggregate, level_label, paired_fdr_test, score_series, Metric, QuantileForecast, SeriesScores, Verdict, RPS_LEVELS,
};

use crate::dataset::SeriesRecord;
use crate::error::{BenchError, Result};
use crate::models::{ModelKind, SeriesForecast};
use crate::runner::{Experiment, ModelRun};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub dataset: String,
    pub model: ModelKind,
    pub metric: Metric,
    pub value: Option<f64>,
    /// Series without a defined score: undefined scale or failed fit.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub model: ModelKind,
    pub level: f64,
    pub coverage: f64,
    /// Share of zeros among the test values the coverage was measured on.
    pub zero_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub model: ModelKind,
    pub mean_s: f64,
    pub std_s: f64,
    pub n: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceRow {
    pub metric: Metric,
    pub a: ModelKind,
    pub b: ModelKind,
    pub n: usize,
    pub mean_diff: f64,
    pub p_value: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub dataset: String,
    pub scores: Vec<ScoreRow>,
    pub coverage: Vec<CoverageRow>,
    pub timing: Vec<TimingRow>,
    pub significance: Vec<SignificanceRow>,
    pub per_series: BTreeMap<ModelKind, BTreeMap<String, SeriesScores>>,
}

impl Report {
    pub fn score(&self, model: ModelKind, metric: Metric) -> Option<f64> {
        self.scores.iter().find(|r| r.model == model && r.metric == metric).and_then(|r| r.value)
    }

    /// Levels where coverage falls below the share of zeros in the test set.
    pub fn coverage_violations(&self) -> Vec<&CoverageRow> {
        self.coverage.iter().filter(|r| r.coverage + 1e-12 < r.zero_fraction).collect()
    }

    /// Metrics × models table, one row per metric.
    pub fn pretty_table(&self) -> String {
        let models: Vec<ModelKind> = {
            let mut v: Vec<ModelKind> = self.scores.iter().map(|r| r.model).collect();
            v.dedup();
            v
        };
        let mut out = format!("{:<10}", self.dataset);
        for m in &models {
            out += &format!("{:>19}", m.name());
        }
        out.push('\n');
        for metric in Metric::all() {
            out += &format!("{:<10}", metric.name());
            for &m in &models {
                out += &match self.score(m, metric) {
                    Some(v) => format!("{v:>19.2}"),
                    None => format!("{:>19}", "-"),
                };
            }
            out.push('\n');
        }
        out
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Score every forecast of an experiment. `alpha` is the false discovery
/// rate of the pairwise tests.
pub fn build_report(exp: &Experiment, alpha: f64) -> Result<Report> {
    let mut per_series: BTreeMap<ModelKind, BTreeMap<String, SeriesScores>> = BTreeMap::new();
    let mut scores = Vec::new();
    let mut coverage = Vec::new();
    let mut timing = Vec::new();
    for &model in &exp.models {
        let runs = exp.runs.get(&model).cloned().unwrap_or_default();
        let mut model_scores = BTreeMap::new();
        let mut failures = 0;
        let mut hits = vec![0usize; RPS_LEVELS.len()];
        let (mut n_test, mut n_zero) = (0usize, 0usize);
        let mut secs = Vec::new();
        for rec in &exp.records {
            let Some(run) = runs.get(&rec.item_id) else {
                failures += 1;
                continue;
            };
            if run.seconds.is_finite() {
                secs.push(run.seconds);
            }
            match &run.outcome {
                Ok(f) => {
                    let s = score_series(&f.quantiles, &f.mean, rec.test(), rec.train())?;
                    for (k, &level) in RPS_LEVELS.iter().enumerate() {
                        let idx = f.quantiles.level_index(level).expect("forecasts carry every level");
                        hits[k] += s.coverage_hits[idx];
                    }
                    n_test += s.n_test;
                    n_zero += s.test_zeros;
                    model_scores.insert(rec.item_id.clone(), s);
                }
                Err(_) => failures += 1,
            }
        }
        for metric in Metric::all() {
            let (value, undefined) = aggregate(model_scores.values().map(|s| s.get(metric)));
            scores.push(ScoreRow {
                dataset: exp.dataset.clone(),
                model,
                metric,
                value,
                excluded: undefined + failures,
            });
        }
        if n_test > 0 {
            for (k, &level) in RPS_LEVELS.iter().enumerate() {
                coverage.push(CoverageRow {
                    model,
                    level,
                    coverage: hits[k] as f64 / n_test as f64,
                    zero_fraction: n_zero as f64 / n_test as f64,
                });
            }
        }
        let (mean_s, std_s) = mean_std(&secs);
        timing.push(TimingRow { model, mean_s, std_s, n: secs.len(), failures });
        per_series.insert(model, model_scores);
    }

    // every model pair on every metric, corrected as one family
    let mut keys = Vec::new();
    let mut vectors: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for metric in Metric::all() {
        for (i, &a) in exp.models.iter().enumerate() {
            for &b in &exp.models[i + 1..] {
                let (sa, sb) = (&per_series[&a], &per_series[&b]);
                let (va, vb): (Vec<f64>, Vec<f64>) =
                    sa.iter().filter_map(|(id, s)| Some((s.get(metric)?, sb.get(id)?.get(metric)?))).unzip();
                keys.push((metric, a, b));
                vectors.push((va, vb));
            }
        }
    }
    let pairs: Vec<(&[f64], &[f64])> = vectors.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let tests = paired_fdr_test(&pairs, alpha);
    let significance = keys
        .into_iter()
        .zip(tests)
        .filter_map(|((metric, a, b), c)| {
            let t = c.test?;
            Some(SignificanceRow {
                metric,
                a,
                b,
                n: t.n,
                mean_diff: t.mean_diff,
                p_value: t.p_value,
                verdict: c.verdict?,
            })
        })
        .collect();

    Ok(Report { dataset: exp.dataset.clone(), scores, coverage, timing, significance, per_series })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn quantile_header() -> Vec<String> {
    let mut h = vec!["item_id".to_string(), "step".to_string()];
    h.extend(RPS_LEVELS.iter().map(|&q| format!("q{}", level_label(q))));
    h.push("mean".into());
    h
}

/// One CSV per model, `h` rows per series.
pub fn write_forecasts(exp: &Experiment, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (model, runs) in &exp.runs {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", model.name())))?;
        w.write_record(quantile_header())?;
        for (id, run) in runs {
            let Ok(f) = &run.outcome else { continue };
            for (h, row) in f.quantiles.values.iter().enumerate() {
                let mut rec = vec![id.clone(), (h + 1).to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                rec.push(f.mean[h].to_string());
                w.write_record(rec)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

/// Read forecast files written by [`write_forecasts`]; the model is taken
/// from the file name.
pub fn read_forecasts(dir: &Path) -> Result<BTreeMap<ModelKind, BTreeMap<String, SeriesForecast>>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let model: ModelKind = stem.parse().map_err(BenchError::Config)?;
        let mut rdr = csv::Reader::from_path(&path)?;
        if rdr.headers()?.iter().collect::<Vec<_>>() != quantile_header() {
            return Err(BenchError::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "unexpected forecast header".into(),
            });
        }
        let mut rows: BTreeMap<String, Vec<(usize, Vec<f64>, f64)>> = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let err = |msg: String| BenchError::Parse { path: path.display().to_string(), line, msg };
            let step: usize = row[1].parse().map_err(|_| err(format!("bad step '{}'", &row[1])))?;
            let nums: Vec<f64> = row
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'"))))
                .collect::<Result<_>>()?;
            let (q, mean) = nums.split_at(RPS_LEVELS.len());
            rows.entry(row[0].to_string()).or_default().push((step, q.to_vec(), mean[0]));
        }
        let mut per_item = BTreeMap::new();
        for (id, mut steps) in rows {
            steps.sort_by_key(|s| s.0);
            if steps.iter().enumerate().any(|(k, s)| s.0 != k + 1) {
                return Err(BenchError::Data(format!("{}: steps of '{id}' are not 1..h", path.display())));
            }
            let quantiles = QuantileForecast::new(RPS_LEVELS.to_vec(), steps.iter().map(|s| s.1.clone()).collect())?;
            per_item.insert(id, SeriesForecast { quantiles, mean: steps.iter().map(|s| s.2).collect() });
        }
        out.insert(model, per_item);
    }
    if out.is_empty() {
        return Err(BenchError::Data(format!("no forecast files in {}", dir.display())));
    }
    Ok(out)
}

/// Experiment made of previously written forecasts, for re-scoring.
pub fn experiment_from_forecasts(
    dataset: &str,
    records: Vec<SeriesRecord>,
    forecasts: BTreeMap<ModelKind, BTreeMap<String, SeriesForecast>>,
) -> Result<Experiment> {
    let mut runs = BTreeMap::new();
    for (model, items) in forecasts {
        let mut r = BTreeMap::new();
        for (id, f) in items {
            r.insert(id, ModelRun { outcome: Ok(f), seconds: f64::NAN });
        }
        runs.insert(model, r);
    }
    for rec in &records {
        for (model, r) in &runs {
            if let Some(run) = r.get(&rec.item_id) {
                let f = run.outcome.as_ref().expect("read forecasts are all present");
                if f.quantiles.horizon() != rec.horizon {
                    return Err(BenchError::Data(format!(
                        "{model} forecast for '{}' has {} steps, test part has {}",
                        rec.item_id,
                        f.quantiles.horizon(),
                        rec.horizon
                    )));
                }
            }
        }
    }
    let mut records = records;
    records.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let models = runs.keys().copied().collect();
    Ok(Experiment { dataset: dataset.to_string(), models, records, runs })
}

pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("scores.csv"))?;
    w.write_record(["dataset", "model", "metric", "value", "excluded_count"])?;
    for r in &report.scores {
        w.write_record([
            r.dataset.clone(),
            r.model.name().into(),
            r.metric.name(),
            fmt_opt(r.value),
            r.excluded.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("series_scores.csv"))?;
    w.write_record(["item_id", "model", "metric", "value"])?;
    for (model, items) in &report.per_series {
        for (id, s) in items {
            for (metric, v) in &s.values {
                w.write_record([id.clone(), model.name().into(), metric.name(), fmt_opt(*v)])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("coverage.csv"))?;
    w.write_record(["dataset", "model", "level", "coverage", "test_zero_fraction"])?;
    for r in &report.coverage {
        w.write_record([
            report.dataset.clone(),
            r.model.name().into(),
            level_label(r.level),
            r.coverage.to_string(),
            r.zero_fraction.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["dataset", "model", "mean_seconds", "std_seconds", "n", "failures"])?;
    for r in &report.timing {
        w.write_record([
            report.dataset.clone(),
            r.model.name().into(),
            r.mean_s.to_string(),
            r.std_s.to_string(),
            r.n.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("significance.csv"))?;
    w.write_record(["dataset", "metric", "model_a", "model_b", "n", "mean_diff", "p_value", "verdict"])?;
    for r in &report.significance {
        let verdict = match r.verdict {
            Verdict::ABetter => "a_better",
            Verdict::BBetter => "b_better",
            Verdict::Indistinguishable => "indistinguishable",
        };
        w.write_record([
            report.dataset.clone(),
            r.metric.name(),
            r.a.name().into(),
            r.b.name().into(),
            r.n.to_string(),
            r.mean_diff.to_string(),
            r.p_value.to_string(),
            verdict.into(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
