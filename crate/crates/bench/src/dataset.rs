//! Long-format CSV ingestion, intermittency filters, splits and scaling.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use tweedie_gp::svgp::ForecastSamples;

use crate::error::{BenchError, Result};

/// Series length and horizon of a named dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub name: String,
    /// Training length; fewer values are used when a series is shorter.
    pub t_train: usize,
    pub horizon: usize,
    /// Keep only the first `n` item ids in lexicographic order.
    pub subset: Option<usize>,
}

impl DatasetConfig {
    pub fn named(name: &str) -> Result<Self> {
        let (t_train, horizon, subset) = match name.to_ascii_lowercase().as_str() {
            "m5" => (1941, 28, None),
            "m5-desk" => (1941, 28, Some(500)),
            "onlineretail" => (346, 28, None),
            "auto" => (18, 6, None),
            "carparts" => (45, 6, None),
            "raf" => (72, 12, None),
            _ => return Err(BenchError::Config(format!("unknown dataset '{name}'"))),
        };
        Ok(Self { name: name.to_ascii_lowercase(), t_train, horizon, subset })
    }

    pub fn custom(name: &str, t_train: usize, horizon: usize) -> Result<Self> {
        if t_train < 2 || horizon == 0 {
            return Err(BenchError::Config(format!("need T >= 2 and h >= 1, got T={t_train} h={horizon}")));
        }
        Ok(Self { name: name.to_string(), t_train, horizon, subset: None })
    }
}

/// Which series count as intermittent, judged on the training part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdiFilter {
    /// At least one zero (ADI > 1).
    AnyZero,
    /// `T / #positive > threshold`.
    Above(f64),
}

impl AdiFilter {
    pub fn keeps(&self, train: &[f64]) -> bool {
        let n_pos = train.iter().filter(|&&v| v > 0.0).count();
        match *self {
            AdiFilter::AnyZero => n_pos < train.len(),
            AdiFilter::Above(thr) => n_pos == 0 || train.len() as f64 / n_pos as f64 > thr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub item_id: String,
    /// Training values followed by the `horizon` test values.
    pub values: Vec<f64>,
    pub t_train: usize,
    pub horizon: usize,
}

impl SeriesRecord {
    pub fn train(&self) -> &[f64] {
        &self.values[..self.t_train]
    }

    pub fn test(&self) -> &[f64] {
        &self.values[self.t_train..]
    }
}

/// Read `item_id,t,value` rows into per-item series ordered by `t`.
pub fn read_long_csv<R: Read>(reader: R, source: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["item_id", "t", "value"] {
        return Err(BenchError::Parse {
            path: source.into(),
            line: 1,
            msg: format!("expected header item_id,t,value, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut raw: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |msg: String| BenchError::Parse { path: source.into(), line, msg };
        if row.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", row.len())));
        }
        let t: u64 = row[1].parse().map_err(|_| err(format!("bad time index '{}'", &row[1])))?;
        let v: f64 = row[2].parse().map_err(|_| err(format!("bad value '{}'", &row[2])))?;
        if t == 0 {
            return Err(err("time indices start at 1".into()));
        }
        if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
            return Err(err(format!("value {v} is not a nonnegative integer")));
        }
        raw.entry(row[0].to_string()).or_default().push((t, v));
    }
    let mut out = BTreeMap::new();
    for (id, mut pts) in raw {
        pts.sort_by_key(|p| p.0);
        for (k, p) in pts.iter().enumerate() {
            if p.0 != k as u64 + 1 {
                return Err(BenchError::Data(format!(
                    "{source}: item '{id}' has time {} where {} was expected",
                    p.0,
                    k + 1
                )));
            }
        }
        out.insert(id, pts.into_iter().map(|p| p.1).collect());
    }
    Ok(out)
}

/// Split and filter raw series. The last `horizon` values are the test part
/// and up to `t_train` values before them the training part.
pub fn build_records(
    raw: BTreeMap<String, Vec<f64>>,
    cfg: &DatasetConfig,
    filter: AdiFilter,
) -> Result<Vec<SeriesRecord>> {
    let mut out = Vec::new();
    let mut too_short = 0;
    for (item_id, values) in raw {
        if cfg.subset.is_some_and(|n| out.len() >= n) {
            break;
        }
        if values.len() < cfg.horizon + 2 {
            too_short += 1;
            continue;
        }
        let t_train = cfg.t_train.min(values.len() - cfg.horizon);
        let values = values[values.len() - t_train - cfg.horizon..].to_vec();
        let rec = SeriesRecord { item_id, values, t_train, horizon: cfg.horizon };
        if filter.keeps(rec.train()) {
            out.push(rec);
        }
    }
    if too_short > 0 {
        log::warn!("{}: skipped {too_short} series shorter than h + 2", cfg.name);
    }
    if out.is_empty() {
        return Err(BenchError::EmptyDataset(cfg.name.clone()));
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, cfg: &DatasetConfig, filter: AdiFilter) -> Result<Vec<SeriesRecord>> {
    let file =
        std::fs::File::open(path).map_err(|e| BenchError::Data(format!("cannot open {}: {e}", path.display())))?;
    let raw = read_long_csv(file, &path.display().to_string())?;
    build_records(raw, cfg, filter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleInfo {
    pub factor: f64,
}

/// Divide by the median of the positive training values (1 if there are
/// none).
pub fn scale_series(train: &[f64]) -> (Vec<f64>, ScaleInfo) {
    let mut pos: Vec<f64> = train.iter().copied().filter(|&v| v > 0.0).collect();
    let factor = if pos.is_empty() {
        1.0
    } else {
        pos.sort_by(|a, b| a.total_cmp(b));
        let n = pos.len();
        if n % 2 == 1 {
            pos[n / 2]
        } else {
            0.5 * (pos[n / 2 - 1] + pos[n / 2])
        }
    };
    (train.iter().map(|v| v / factor).collect(), ScaleInfo { factor })
}

pub fn unscale_samples(samples: ForecastSamples, info: ScaleInfo) -> ForecastSamples {
    samples.rescaled(info.factor)
}
