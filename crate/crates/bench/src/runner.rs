//! Parallel per-series experiment runner.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::SeriesRecord;
use crate::error::{BenchError, Result};
use crate::models::{forecast_series, ForecastSettings, ModelKind, SeriesForecast};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub models: Vec<ModelKind>,
    pub settings: ForecastSettings,
    pub master_seed: u64,
    pub parallelism: usize,
    /// Largest tolerated fraction of failed model fits.
    pub failure_threshold: f64,
}

/// Seed of one series: the first 8 bytes of SHA-256 over the master seed and
/// the item id, so it does not depend on which other series are present.
pub fn series_seed(master: u64, item_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(item_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub outcome: std::result::Result<SeriesForecast, String>,
    /// Wall-clock seconds for fit and forecast; NaN when not measured.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub dataset: String,
    /// In canonical order, without duplicates.
    pub models: Vec<ModelKind>,
    /// Sorted by item id.
    pub records: Vec<SeriesRecord>,
    pub runs: BTreeMap<ModelKind, BTreeMap<String, ModelRun>>,
}

impl Experiment {
    pub fn failures(&self) -> (usize, usize) {
        let mut failed = 0;
        let mut total = 0;
        for runs in self.runs.values() {
            for r in runs.values() {
                total += 1;
                failed += r.outcome.is_err() as usize;
            }
        }
        (failed, total)
    }

    pub fn check_failures(&self, threshold: f64) -> Result<()> {
        let (failed, total) = self.failures();
        if total > 0 && failed as f64 > threshold * total as f64 {
            return Err(BenchError::TooManyFailures { failed, total, threshold });
        }
        Ok(())
    }
}

fn run_series(rec: &SeriesRecord, models: &[ModelKind], cfg: &RunConfig) -> Vec<(ModelKind, ModelRun)> {
    let seed = series_seed(cfg.master_seed, &rec.item_id);
    models
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let outcome = forecast_series(m, rec, &cfg.settings, seed).map_err(|e| e.to_string());
            let seconds = start.elapsed().as_secs_f64();
            if let Err(e) = &outcome {
                log::warn!("{} on {}: {e}", m, rec.item_id);
            }
            (m, ModelRun { outcome, seconds })
        })
        .collect()
}

/// Forecast every series with every model on a pool of `parallelism`
/// threads. Results are keyed by item id, so they do not depend on the
/// scheduling.
pub fn run_experiment(records: &[SeriesRecord], cfg: &RunConfig) -> Result<Experiment> {
    if cfg.models.is_empty() {
        return Err(BenchError::Config("no models selected".into()));
    }
    if cfg.parallelism == 0 {
        return Err(BenchError::Config("parallelism must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| BenchError::Config(format!("cannot build thread pool: {e}")))?;
    let mut models = cfg.models.clone();
    models.sort();
    models.dedup();
    let per_series: Vec<(String, Vec<(ModelKind, ModelRun)>)> =
        pool.install(|| records.par_iter().map(|r| (r.item_id.clone(), run_series(r, &models, cfg))).collect());

    let mut runs: BTreeMap<ModelKind, BTreeMap<String, ModelRun>> = BTreeMap::new();
    for (id, rs) in per_series {
        for (m, run) in rs {
            runs.entry(m).or_default().insert(id.clone(), run);
        }
    }
    let mut records = records.to_vec();
    records.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(Experiment { dataset: cfg.dataset.clone(), models, records, runs })
}
