//! Model set of the benchmark and per-series forecasting.

use std::fmt;
use std::str::FromStr;

use tweedie_gp::baselines::{adida_fit, adida_forecast, empirical_quantile_forecast, wss_fit, wss_forecast};
use tweedie_gp::likelihoods::LikelihoodKind;
use tweedie_gp::metrics::{QuantileForecast, RPS_LEVELS};
use tweedie_gp::svgp::{fit, forecast, ForecastOptions, ForecastSamples, TrainConfig};

use crate::dataset::{scale_series, unscale_samples, SeriesRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    EmpQuant,
    Wss,
    Adida,
    NegBinGp,
    TweedieGp,
    /// TweedieGP trained on unscaled counts.
    TweedieGpNoScale,
    /// GP with the `A(y) = φ = 1` likelihood.
    TweedieGpApprox,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::EmpQuant,
        ModelKind::Wss,
        ModelKind::Adida,
        ModelKind::NegBinGp,
        ModelKind::TweedieGp,
        ModelKind::TweedieGpNoScale,
        ModelKind::TweedieGpApprox,
    ];

    /// Models of the main comparison.
    pub fn default_set() -> Vec<ModelKind> {
        ModelKind::ALL[..5].to_vec()
    }

    pub fn ablation_set() -> Vec<ModelKind> {
        ModelKind::ALL[5..].to_vec()
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::EmpQuant => "EmpQuant",
            ModelKind::Wss => "WSS",
            ModelKind::Adida => "ADIDA_C",
            ModelKind::NegBinGp => "NegBinGP",
            ModelKind::TweedieGp => "TweedieGP",
            ModelKind::TweedieGpNoScale => "TweedieGP-noscale",
            ModelKind::TweedieGpApprox => "TweedieGP-approx",
        }
    }

    pub fn is_gp(&self) -> bool {
        matches!(
            self,
            ModelKind::NegBinGp | ModelKind::TweedieGp | ModelKind::TweedieGpNoScale | ModelKind::TweedieGpApprox
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace(['_', '-'], "");
        ModelKind::ALL
            .iter()
            .find(|m| {
                m.name().to_ascii_lowercase().replace(['_', '-'], "") == key
                    || (key == "adida" && **m == ModelKind::Adida)
            })
            .copied()
            .ok_or_else(|| format!("unknown model '{s}'"))
    }
}

/// Quantiles over the horizon plus the point forecast used for RMSSE.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast {
    pub quantiles: QuantileForecast,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastSettings {
    pub train: TrainConfig,
    pub n_samples: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self { train: TrainConfig::default(), n_samples: 50_000 }
    }
}

fn from_samples(s: &ForecastSamples) -> tweedie_gp::Result<SeriesForecast> {
    let quantiles = QuantileForecast::from_step_samples(&RPS_LEVELS, (0..s.horizon()).map(|h| s.step(h)))?;
    Ok(SeriesForecast { quantiles, mean: s.mean() })
}

/// Fit `kind` on the training part of `rec` and forecast its horizon.
pub fn forecast_series(
    kind: ModelKind,
    rec: &SeriesRecord,
    settings: &ForecastSettings,
    seed: u64,
) -> tweedie_gp::Result<SeriesForecast> {
    let train = rec.train();
    let h = rec.horizon;
    match kind {
        ModelKind::EmpQuant => {
            let quantiles = empirical_quantile_forecast(train, &RPS_LEVELS, h)?;
            let mean = train.iter().sum::<f64>() / train.len() as f64;
            Ok(SeriesForecast { quantiles, mean: vec![mean; h] })
        }
        ModelKind::Wss => {
            let s = wss_forecast(&wss_fit(train)?, h, settings.n_samples, seed)?;
            from_samples(&s)
        }
        ModelKind::Adida => {
            let quantiles = adida_forecast(train, h, &RPS_LEVELS)?;
            let point = adida_fit(train)?.point;
            Ok(SeriesForecast { quantiles, mean: vec![point; h] })
        }
        _ => {
            let (lik, scaled) = match kind {
                ModelKind::NegBinGp => (LikelihoodKind::NegBin, false),
                ModelKind::TweedieGp => (LikelihoodKind::Tweedie, true),
                ModelKind::TweedieGpNoScale => (LikelihoodKind::Tweedie, false),
                _ => (LikelihoodKind::TweedieApprox, true),
            };
            let (y, info) = if scaled {
                let (y, info) = scale_series(train);
                (y, Some(info))
            } else {
                (train.to_vec(), None)
            };
            let t: Vec<f64> = (1..=y.len()).map(|i| i as f64).collect();
            let t_star: Vec<f64> = (y.len() + 1..=y.len() + h).map(|i| i as f64).collect();
            let cfg = TrainConfig { rng_seed: seed, ..settings.train };
            let (model, _) = fit(&y, &t, lik, &cfg)?;
            let opts = ForecastOptions { n_samples: settings.n_samples, rng_seed: seed ^ 0x5EED, ..Default::default() };
            let mut s = forecast(&model, &t_star, &opts)?;
            if let Some(info) = info {
                s = unscale_samples(s, info);
            }
            if lik != LikelihoodKind::NegBin {
                s = s.rounded();
            }
            from_samples(&s)
        }
    }
}
