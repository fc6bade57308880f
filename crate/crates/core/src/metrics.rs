//! Scaled quantile losses, RMSSE, coverage and paired significance tests.
//!
//! Scores are scaled by the in-sample loss of the training empirical
//! quantiles. When that denominator is zero the score is undefined; it is
//! returned as `None` and left out of aggregates, which count it separately.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Quantile levels scored individually.
pub const SCORED_LEVELS: [f64; 5] = [0.5, 0.8, 0.9, 0.95, 0.99];

/// Levels averaged by the upper-tail ranked probability score.
pub const RPS_LEVELS: [f64; 11] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99];

/// Type-1 (inverse CDF) empirical quantile of sorted data: the smallest value
/// whose empirical CDF reaches `q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let n = sorted.len();
    let k = (q * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Type-1 empirical quantiles of unsorted data at each level.
pub fn empirical_quantiles(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let s = sorted(values);
    levels.iter().map(|&q| quantile_sorted(&s, q)).collect()
}

/// Quantile forecasts over a horizon: `values[step][level]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    pub levels: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("quantile levels must be strictly increasing".into()));
        }
        for (h, row) in values.iter().enumerate() {
            if row.len() != levels.len() {
                return Err(Error::Dimension(format!("step {h} has {} values for {} levels", row.len(), levels.len())));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidParameter(format!("quantiles decrease across levels at step {h}")));
            }
        }
        Ok(Self { levels, values })
    }

    /// Same quantiles at every step.
    pub fn constant(levels: &[f64], quantiles: &[f64], horizon: usize) -> Result<Self> {
        Self::new(levels.to_vec(), vec![quantiles.to_vec(); horizon])
    }

    /// Per-step type-1 quantiles of a sample matrix given column by column.
    pub fn from_step_samples(levels: &[f64], steps: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let values = steps.into_iter().map(|s| empirical_quantiles(&s, levels)).collect();
        Self::new(levels.to_vec(), values)
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn level_index(&self, q: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - q).abs() < 1e-12)
    }

    /// Forecasts of one level over the horizon.
    pub fn at_level(&self, q: f64) -> Option<Vec<f64>> {
        let k = self.level_index(q)?;
        Some(self.values.iter().map(|row| row[k]).collect())
    }
}

/// `2 q (y - ŷ)` if `y >= ŷ`, else `2 (1 - q)(ŷ - y)`.
pub fn quantile_loss(q: f64, y_hat: f64, y: f64) -> f64 {
    if y >= y_hat {
        2.0 * q * (y - y_hat)
    } else {
        2.0 * (1.0 - q) * (y_hat - y)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// In-sample quantile loss of the training empirical quantile at `q`.
fn train_scale(q: f64, train: &[f64]) -> f64 {
    let emp = quantile_sorted(&sorted(train), q);
    mean(train.iter().map(|&y| quantile_loss(q, emp, y)))
}

/// Horizon-mean quantile loss divided by the in-sample loss of the training
/// empirical quantile. `None` when the denominator is zero.
pub fn scaled_quantile_loss(q: f64, forecasts: &[f64], test: &[f64], train: &[f64]) -> Option<f64> {
    assert_eq!(forecasts.len(), test.len());
    if train.is_empty() || test.is_empty() {
        return None;
    }
    let den = train_scale(q, train);
    if !(den > 0.0) {
        return None;
    }
    Some(mean(forecasts.iter().zip(test).map(|(&f, &y)| quantile_loss(q, f, y))) / den)
}

/// Mean quantile loss over the levels of `qf` at one step.
pub fn rps_half_plus(levels: &[f64], quantiles: &[f64], y: f64) -> f64 {
    mean(levels.iter().zip(quantiles).map(|(&q, &f)| quantile_loss(q, f, y)))
}

/// Scaled upper-tail ranked probability score over the levels of `qf`.
pub fn srps_half_plus(qf: &QuantileForecast, test: &[f64], train: &[f64]) -> Option<f64> {
    assert_eq!(qf.horizon(), test.len());
    if train.is_empty() || test.is_empty() {
        return None;
    }
    let emp = empirical_quantiles(train, &qf.levels);
    let den = mean(train.iter().map(|&y| rps_half_plus(&qf.levels, &emp, y)));
    if !(den > 0.0) {
        return None;
    }
    let num = mean(qf.values.iter().zip(test).map(|(row, &y)| rps_half_plus(&qf.levels, row, y)));
    Some(num / den)
}

/// Root mean squared error scaled by the in-sample one-step naive error.
pub fn rmsse(point: &[f64], test: &[f64], train: &[f64]) -> Option<f64> {
    assert_eq!(point.len(), test.len());
    if train.len() < 2 || test.is_empty() {
        return None;
    }
    let den = mean(train.windows(2).map(|w| (w[1] - w[0]).powi(2)));
    if !(den > 0.0) {
        return None;
    }
    let num = mean(point.iter().zip(test).map(|(&f, &y)| (f - y).powi(2)));
    Some((num / den).sqrt())
}

/// Number of covered observations per level (`y <= ŷ^q`, ties covered) and
/// the number of observations.
pub fn coverage_counts(qf: &QuantileForecast, test: &[f64]) -> (Vec<usize>, usize) {
    assert_eq!(qf.horizon(), test.len());
    let mut hits = vec![0; qf.levels.len()];
    for (row, &y) in qf.values.iter().zip(test) {
        for (k, &f) in row.iter().enumerate() {
            if y <= f {
                hits[k] += 1;
            }
        }
    }
    (hits, test.len())
}

/// Proportion of observations at or below each forecast quantile.
pub fn coverage(qf: &QuantileForecast, test: &[f64]) -> Vec<f64> {
    let (hits, n) = coverage_counts(qf, test);
    hits.into_iter().map(|h| h as f64 / n as f64).collect()
}

/// Benjamini–Hochberg rejections at false discovery rate `alpha`.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut cutoff = None;
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= alpha * (rank + 1) as f64 / m as f64 {
            cutoff = Some(rank);
        }
    }
    let mut reject = vec![false; m];
    if let Some(k) = cutoff {
        for &i in &order[..=k] {
            reject[i] = true;
        }
    }
    reject
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedT {
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub t_stat: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n: usize,
}

/// Paired two-sided t-test on `a - b`. `None` with fewer than 3 pairs.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedT> {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 3 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(d.iter().copied());
    let var = d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (t_stat, p_value) = if var == 0.0 {
        if md == 0.0 {
            (0.0, 1.0)
        } else {
            (md.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = md / (var / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("degrees of freedom are positive");
        (t, 2.0 * dist.cdf(-t.abs()))
    };
    Some(PairedT { mean_diff: md, t_stat, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ABetter,
    BBetter,
    Indistinguishable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub test: Option<PairedT>,
    pub verdict: Option<Verdict>,
}

/// Paired t-tests of loss vectors `(a, b)` for each hypothesis in the family,
/// with Benjamini–Hochberg correction across the family. Lower loss is better.
pub fn paired_fdr_test(pairs: &[(&[f64], &[f64])], alpha: f64) -> Vec<Comparison> {
    let tests: Vec<Option<PairedT>> = pairs.iter().map(|(a, b)| paired_t_test(a, b)).collect();
    let testable: Vec<usize> = (0..tests.len()).filter(|&i| tests[i].is_some()).collect();
    let pv: Vec<f64> = testable.iter().map(|&i| tests[i].unwrap().p_value).collect();
    let rejected = benjamini_hochberg(&pv, alpha);
    let mut out: Vec<Comparison> = tests.iter().map(|t| Comparison { test: *t, verdict: None }).collect();
    for (k, &i) in testable.iter().enumerate() {
        let t = tests[i].unwrap();
        out[i].verdict = Some(if !rejected[k] {
            Verdict::Indistinguishable
        } else if t.mean_diff < 0.0 {
            Verdict::ABetter
        } else {
            Verdict::BBetter
        });
    }
    out
}

/// Metric identifiers in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    SQ(u16),
    SRps,
    Rmsse,
}

impl Metric {
    pub fn all() -> Vec<Metric> {
        let mut v: Vec<Metric> = SCORED_LEVELS.iter().map(|&q| Metric::sq(q)).collect();
        v.push(Metric::SRps);
        v.push(Metric::Rmsse);
        v
    }

    pub fn sq(q: f64) -> Metric {
        Metric::SQ((q * 100.0).round() as u16)
    }

    pub fn name(&self) -> String {
        match self {
            Metric::SQ(p) => format!("sQ{}", level_label(*p as f64 / 100.0)),
            Metric::SRps => "sRPS0.5+".to_string(),
            Metric::Rmsse => "RMSSE".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "sRPS0.5+" => Some(Metric::SRps),
            "RMSSE" => Some(Metric::Rmsse),
            _ => s.strip_prefix("sQ").and_then(|q| q.parse::<f64>().ok()).map(Metric::sq),
        }
    }
}

/// `0.5` → `"0.5"`, `0.95` → `"0.95"`.
pub fn level_label(q: f64) -> String {
    let s = format!("{q:.2}");
    s.trim_end_matches('0').to_string()
}

/// Scores of one forecast of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesScores {
    pub values: Vec<(Metric, Option<f64>)>,
    /// Covered counts per level of the forecast and number of test points.
    pub coverage_hits: Vec<usize>,
    pub n_test: usize,
    pub test_zeros: usize,
}

impl SeriesScores {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == m).and_then(|(_, v)| *v)
    }
}

/// All metrics of one forecast. `qf` must contain every level of
/// [`RPS_LEVELS`]; `point` is the point forecast used for RMSSE.
pub fn score_series(qf: &QuantileForecast, point: &[f64], test: &[f64], train: &[f64]) -> Result<SeriesScores> {
    if qf.horizon() != test.len() || point.len() != test.len() {
        return Err(Error::Dimension(format!(
            "forecast horizon {} / point {} vs test length {}",
            qf.horizon(),
            point.len(),
            test.len()
        )));
    }
    let mut values = Vec::new();
    for &q in &SCORED_LEVELS {
        let f = qf.at_level(q).ok_or_else(|| Error::Dimension(format!("forecast lacks level {q}")))?;
        values.push((Metric::sq(q), scaled_quantile_loss(q, &f, test, train)));
    }
    let rps_qf = restrict(qf, &RPS_LEVELS)?;
    values.push((Metric::SRps, srps_half_plus(&rps_qf, test, train)));
    values.push((Metric::Rmsse, rmsse(point, test, train)));
    let (coverage_hits, n_test) = coverage_counts(qf, test);
    Ok(SeriesScores { values, coverage_hits, n_test, test_zeros: test.iter().filter(|&&y| y == 0.0).count() })
}

fn restrict(qf: &QuantileForecast, levels: &[f64]) -> Result<QuantileForecast> {
    let idx: Vec<usize> = levels
        .iter()
        .map(|&q| qf.level_index(q).ok_or_else(|| Error::Dimension(format!("forecast lacks level {q}"))))
        .collect::<Result<_>>()?;
    Ok(QuantileForecast {
        levels: levels.to_vec(),
        values: qf.values.iter().map(|row| idx.iter().map(|&k| row[k]).collect()).collect(),
    })
}

/// Mean of the defined values and the number of undefined ones.
pub fn aggregate(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    let mut excluded = 0;
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => excluded += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), excluded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn median_loss_is_absolute_error() {
        for &(f, y) in &[(1.0, 3.0), (4.0, 0.0), (2.5, 2.5)] {
            assert_eq!(quantile_loss(0.5, f, y), (f - y).abs());
        }
        assert_eq!(quantile_loss(0.9, 0.0, 10.0), 18.0);
        assert_eq!(quantile_loss(0.3, 7.0, 7.0), 0.0);
    }

    #[test]
    fn type1_quantiles() {
        let train = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        assert_eq!(empirical_quantiles(&train, &[0.95]), vec![10.0]);
        assert_eq!(empirical_quantiles(&train, &[0.9]), vec![0.0]);
        assert_eq!(empirical_quantiles(&[3.0, 1.0, 2.0], &[1.0]), vec![3.0]);
    }

    #[test]
    fn rmsse_hand_example() {
        assert_relative_eq!(rmsse(&[0.0], &[2.0], &[0.0, 2.0, 0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(rmsse(&[1.0], &[1.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmsse(&[1.0], &[1.0], &[3.0, 3.0, 3.0]), None);
    }

    #[test]
    fn zero_training_denominator_is_undefined() {
        let train = [0.0; 8];
        assert_eq!(scaled_quantile_loss(0.5, &[0.0], &[1.0], &train), None);
        let (m, excluded) = aggregate([Some(1.0), None, Some(3.0)]);
        assert_eq!(m, Some(2.0));
        assert_eq!(excluded, 1);
    }

    #[test]
    fn perfect_forecast_scores_zero() {
        let train = [0.0, 1.0, 0.0, 3.0, 2.0];
        let test = [1.0, 0.0, 2.0];
        assert_eq!(scaled_quantile_loss(0.9, &test, &test, &train), Some(0.0));
        let qf = QuantileForecast::new(RPS_LEVELS.to_vec(), test.iter().map(|&y| vec![y; 11]).collect()).unwrap();
        assert_eq!(srps_half_plus(&qf, &test, &train), Some(0.0));
    }

    #[test]
    fn srps_is_mean_of_level_losses_over_denominator() {
        let train = [0.0, 1.0, 0.0, 3.0, 2.0, 0.0];
        let test = [1.0, 0.0];
        let rows = vec![vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 4.0]; 2];
        let qf = QuantileForecast::new(RPS_LEVELS.to_vec(), rows.clone()).unwrap();
        let emp = empirical_quantiles(&train, &RPS_LEVELS);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &q) in RPS_LEVELS.iter().enumerate() {
            num += (quantile_loss(q, rows[0][k], 1.0) + quantile_loss(q, rows[1][k], 0.0)) / 2.0;
            den += train.iter().map(|&y| quantile_loss(q, emp[k], y)).sum::<f64>() / train.len() as f64;
        }
        assert_relative_eq!(srps_half_plus(&qf, &test, &train).unwrap(), num / den, max_relative = 1e-12);
    }

    #[test]
    fn coverage_counts_ties() {
        let qf = QuantileForecast::constant(&[0.5, 0.9], &[0.0, 1.0], 3).unwrap();
        assert_eq!(coverage(&qf, &[0.0, 0.0, 0.0]), vec![1.0, 1.0]);
        assert_eq!(coverage(&qf, &[0.0, 1.0, 2.0]), vec![1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn decreasing_quantiles_rejected() {
        assert!(QuantileForecast::new(vec![0.5, 0.9], vec![vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn bh_hand_example() {
        assert_eq!(benjamini_hochberg(&[0.01, 0.02, 0.03, 0.5], 0.05), vec![true, true, true, false]);
        assert_eq!(benjamini_hochberg(&[0.5, 0.04, 0.01, 0.02], 0.05), vec![false, false, true, true]);
        assert_eq!(benjamini_hochberg(&[0.2, 0.3], 0.05), vec![false, false]);
    }

    #[test]
    fn paired_test_verdicts() {
        let b: Vec<f64> = (0..100).map(|i| 2.0 + (i as f64 * 0.7).sin()).collect();
        let a: Vec<f64> = b.iter().map(|x| x - 1.0).collect();
        let r = paired_fdr_test(&[(&a, &b), (&b, &b)], 0.05);
        assert_eq!(r[0].verdict, Some(Verdict::ABetter));
        assert!(r[0].test.unwrap().p_value < 1e-12);
        assert_eq!(r[1].verdict, Some(Verdict::Indistinguishable));
        let short = paired_fdr_test(&[(&a[..2], &b[..2])], 0.05);
        assert_eq!(short[0].verdict, None);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::all() {
            assert_eq!(Metric::parse(&m.name()), Some(m));
        }
        assert_eq!(Metric::sq(0.95).name(), "sQ0.95");
        assert_eq!(level_label(0.5), "0.5");
    }
}
