use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use tweedie_gp::likelihoods::LikelihoodKind;
use tweedie_gp::metrics::{QuantileForecast, RPS_LEVELS};
use tweedie_gp::svgp::{fit, forecast, ForecastOptions, TrainConfig};

fn intermittent(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pois = Poisson::new(3.0).unwrap();
    (0..n).map(|_| if rng.random_bool(0.35) { pois.sample(&mut rng) + 1.0 } else { 0.0 }).collect()
}

#[test]
fn fits_improve_the_elbo_and_forecast() {
    let y = intermittent(1, 45);
    let t: Vec<f64> = (1..=45).map(|i| i as f64).collect();
    let t_star: Vec<f64> = (46..=51).map(|i| i as f64).collect();
    for kind in [LikelihoodKind::NegBin, LikelihoodKind::Tweedie, LikelihoodKind::TweedieApprox] {
        let start = Instant::now();
        let (model, report) = fit(&y, &t, kind, &TrainConfig::default()).unwrap();
        let elapsed = start.elapsed();
        let first = report.elbo_trace[0];
        let best = report.elbo_trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(best > first, "{kind:?}: ELBO did not improve ({first} -> {best})");
        assert!(report.iterations <= 100);
        assert!(report.iterations > TrainConfig::default().patience, "{kind:?} stopped at the first check");

        let opts =
            ForecastOptions { n_samples: 5000, round_counts: kind != LikelihoodKind::NegBin, ..Default::default() };
        let s = forecast(&model, &t_star, &opts).unwrap();
        assert_eq!(s.horizon(), 6);
        assert!(s.draws().iter().all(|&v| v >= 0.0 && v.is_finite()));
        let qf = QuantileForecast::from_step_samples(&RPS_LEVELS, (0..6).map(|h| s.step(h))).unwrap();
        assert!(qf.values.iter().all(|row| row.windows(2).all(|w| w[0] <= w[1])));
        eprintln!("{kind:?}: {} iterations, {:?}, final ELBO {:.3}", report.iterations, elapsed, report.final_elbo);
    }
}

#[test]
fn fitting_is_deterministic() {
    let y = intermittent(2, 30);
    let t: Vec<f64> = (1..=30).map(|i| i as f64).collect();
    let cfg = TrainConfig { rng_seed: 9, ..Default::default() };
    let a = fit(&y, &t, LikelihoodKind::Tweedie, &cfg).unwrap();
    let b = fit(&y, &t, LikelihoodKind::Tweedie, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn rejects_bad_inputs() {
    let t = [1.0, 2.0, 3.0];
    assert!(fit(&[1.0], &[1.0], LikelihoodKind::Tweedie, &TrainConfig::default()).is_err());
    assert!(fit(&[1.5, 0.0, 2.0], &t, LikelihoodKind::NegBin, &TrainConfig::default()).is_err());
    assert!(fit(&[1.0, -1.0, 2.0], &t, LikelihoodKind::Tweedie, &TrainConfig::default()).is_err());
}

#[test]
fn all_zero_series_forecasts_mostly_zero() {
    let y = vec![0.0; 40];
    let t: Vec<f64> = (1..=40).map(|i| i as f64).collect();
    let (model, _) = fit(&y, &t, LikelihoodKind::Tweedie, &TrainConfig::default()).unwrap();
    let s =
        forecast(&model, &[41.0, 42.0], &ForecastOptions { n_samples: 2000, round_counts: true, ..Default::default() })
            .unwrap();
    let zeros = s.draws().iter().filter(|&&v| v == 0.0).count();
    assert!(zeros as f64 > 0.8 * s.draws().len() as f64);
}
