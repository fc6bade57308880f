//! Reference forecasters: empirical quantiles, WSS bootstrap and ADIDA with
//! conformal intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::{empirical_quantiles, quantile_sorted, sorted, QuantileForecast};
use crate::svgp::ForecastSamples;

fn check_train(train: &[f64]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidParameter("training series is empty".into()));
    }
    if let Some(v) = train.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("training value {v} is not a finite nonnegative number")));
    }
    Ok(())
}

/// Training empirical quantiles repeated over the horizon.
pub fn empirical_quantile_forecast(train: &[f64], levels: &[f64], h: usize) -> Result<QuantileForecast> {
    check_train(train)?;
    QuantileForecast::constant(levels, &empirical_quantiles(train, levels), h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occurrence {
    Zero,
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WssModel {
    /// P(positive at t+1 | zero at t).
    pub p01: f64,
    /// P(zero at t+1 | positive at t).
    pub p10: f64,
    pub demand_pool: Vec<f64>,
    pub last_state: Occurrence,
}

impl WssModel {
    /// Probability that the next step is zero.
    pub fn next_zero_prob(&self) -> f64 {
        match self.last_state {
            Occurrence::Zero => 1.0 - self.p01,
            Occurrence::Positive => self.p10,
        }
    }
}

/// Transition probabilities from add-one smoothed counts.
pub fn wss_fit(train: &[f64]) -> Result<WssModel> {
    check_train(train)?;
    let mut n = [[0usize; 2]; 2];
    for w in train.windows(2) {
        n[(w[0] > 0.0) as usize][(w[1] > 0.0) as usize] += 1;
    }
    let p01 = (n[0][1] + 1) as f64 / (n[0][0] + n[0][1] + 2) as f64;
    let p10 = (n[1][0] + 1) as f64 / (n[1][0] + n[1][1] + 2) as f64;
    let last = *train.last().expect("nonempty");
    Ok(WssModel {
        p01,
        p10,
        demand_pool: train.iter().copied().filter(|&v| v > 0.0).collect(),
        last_state: if last > 0.0 { Occurrence::Positive } else { Occurrence::Zero },
    })
}

/// `1 + floor(x + z sqrt(x))`, or `x` itself when that is not positive.
pub fn jitter(x: f64, z: f64) -> f64 {
    let j = 1.0 + (x + z * x.sqrt()).floor();
    if j <= 0.0 {
        x
    } else {
        j
    }
}

/// Simulate the occurrence chain `h` steps ahead and bootstrap jittered
/// demand sizes on positive steps.
pub fn wss_forecast(model: &WssModel, h: usize, n_samples: usize, rng_seed: u64) -> Result<ForecastSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut draws = Vec::with_capacity(n_samples * h);
    if model.demand_pool.is_empty() {
        draws.resize(n_samples * h, 0.0);
        return ForecastSamples::from_draws(draws, n_samples, h, 1.0, false);
    }
    let pool = &model.demand_pool;
    for _ in 0..n_samples {
        let mut state = model.last_state;
        for _ in 0..h {
            let u: f64 = rng.random();
            state = match state {
                Occurrence::Zero if u < model.p01 => Occurrence::Positive,
                Occurrence::Zero => Occurrence::Zero,
                Occurrence::Positive if u < model.p10 => Occurrence::Zero,
                Occurrence::Positive => Occurrence::Positive,
            };
            let y = match state {
                Occurrence::Zero => 0.0,
                Occurrence::Positive => {
                    let x = pool[rng.random_range(0..pool.len())];
                    jitter(x, StandardNormal.sample(&mut rng))
                }
            };
            draws.push(y);
        }
    }
    ForecastSamples::from_draws(draws, n_samples, h, 1.0, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdidaModel {
    pub bucket: usize,
    /// Per-period point forecast: last bucket total divided by the bucket size.
    pub point: f64,
    pub residual_pool: Vec<f64>,
}

/// Aggregation size: the mean inter-demand interval rounded up, capped at
/// half the series length and at least 1.
pub fn adida_bucket(train: &[f64]) -> usize {
    let n_pos = train.iter().filter(|&&v| v > 0.0).count();
    if n_pos == 0 {
        return 1;
    }
    let adi = train.len() as f64 / n_pos as f64;
    let cap = (train.len() / 2).max(1);
    (adi.ceil() as usize).clamp(1, cap)
}

pub fn adida_fit(train: &[f64]) -> Result<AdidaModel> {
    check_train(train)?;
    let k = adida_bucket(train);
    let n_buckets = train.len() / k;
    // trailing buckets; a remainder at the start is dropped
    let start = train.len() - n_buckets * k;
    let totals: Vec<f64> = train[start..].chunks(k).map(|c| c.iter().sum()).collect();
    let mut residual_pool = Vec::new();
    for b in 1..totals.len() {
        let prev = totals[b - 1] / k as f64;
        for &y in &train[start + b * k..start + (b + 1) * k] {
            residual_pool.push(y - prev);
        }
    }
    if residual_pool.is_empty() {
        residual_pool.push(0.0);
    }
    let point = totals.last().map_or(0.0, |t| t / k as f64);
    Ok(AdidaModel { bucket: k, point, residual_pool })
}

/// Naive aggregate forecast disaggregated uniformly, with quantiles from the
/// in-sample residuals, floored at zero.
pub fn adida_forecast(train: &[f64], h: usize, levels: &[f64]) -> Result<QuantileForecast> {
    let model = adida_fit(train)?;
    let res = sorted(&model.residual_pool);
    let q: Vec<f64> = levels.iter().map(|&l| (model.point + quantile_sorted(&res, l)).max(0.0)).collect();
    QuantileForecast::constant(levels, &q, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RPS_LEVELS;

    #[test]
    fn empquant_examples() {
        let train = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        let qf = empirical_quantile_forecast(&train, &[0.5, 0.95, 1.0], 3).unwrap();
        assert_eq!(qf.values[2], vec![0.0, 10.0, 10.0]);
        let zeros = empirical_quantile_forecast(&[0.0; 5], &RPS_LEVELS, 2).unwrap();
        assert!(zeros.values.iter().flatten().all(|&v| v == 0.0));
        assert!(empirical_quantile_forecast(&[], &[0.5], 1).is_err());
    }

    #[test]
    fn wss_no_zeros_stays_positive() {
        let m = wss_fit(&[3.0; 30]).unwrap();
        assert!(m.p10 < 0.05);
        let s = wss_forecast(&m, 1, 2000, 1).unwrap();
        let zeros = s.draws().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros < 150);
    }

    #[test]
    fn wss_all_zero_train() {
        let m = wss_fit(&[0.0; 12]).unwrap();
        let s = wss_forecast(&m, 4, 100, 3).unwrap();
        assert!(s.draws().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wss_step_one_zero_fraction() {
        let train = [0.0, 2.0, 0.0, 0.0, 5.0, 1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0];
        let m = wss_fit(&train).unwrap();
        let n = 50_000;
        let s = wss_forecast(&m, 3, n, 9).unwrap();
        let p = m.next_zero_prob();
        let frac = s.step(0).iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((frac - p).abs() < 3.0 * sd, "{frac} vs {p}");
    }

    #[test]
    fn jitter_fallback() {
        assert_eq!(jitter(4.0, 0.0), 5.0);
        assert_eq!(jitter(1.0, -3.0), 1.0);
        assert_eq!(jitter(2.0, 0.5), 3.0);
    }

    #[test]
    fn adida_constant_series() {
        let qf = adida_forecast(&[4.0; 20], 3, &RPS_LEVELS).unwrap();
        assert_eq!(adida_bucket(&[4.0; 20]), 1);
        assert!(qf.values.iter().flatten().all(|&v| v == 4.0));
    }

    #[test]
    fn adida_all_zero() {
        let qf = adida_forecast(&[0.0; 9], 2, &RPS_LEVELS).unwrap();
        assert!(qf.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn adida_bucketing() {
        let train = [0.0, 0.0, 3.0, 0.0, 0.0, 6.0, 0.0, 0.0, 0.0];
        let m = adida_fit(&train).unwrap();
        // 9 / 2 rounds up to 5, capped at 4; the first value is dropped
        assert_eq!(m.bucket, 4);
        assert_eq!(m.point, 1.5);
        assert_eq!(m.residual_pool, vec![5.25, -0.75, -0.75, -0.75]);
        assert_eq!(adida_bucket(&[0.0, 0.0, 0.0, 1.0]), 2);
    }
}
