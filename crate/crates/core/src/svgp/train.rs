use super::{elbo_and_grad, mix_seed, SeriesData, SvgpModel};
use crate::error::{Error, Result};
use crate::likelihoods::LikelihoodKind;
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub mc_samples: usize,
    /// Iterations without sufficient relative ELBO improvement before stopping.
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub max_restarts: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            learning_rate: 0.1,
            mc_samples: 16,
            patience: 10,
            min_rel_improvement: 1e-4,
            max_restarts: 3,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    /// ELBO estimate at each iteration of the successful attempt, before the
    /// parameter update of that iteration.
    pub elbo_trace: Vec<f64>,
    pub kl_trace: Vec<f64>,
    pub final_elbo: f64,
    pub restarts: usize,
    pub early_stopped: bool,
}

/// Fit a latent GP with the given likelihood to `y` observed at `t`.
///
/// A non-finite objective or a failed factorization abandons the attempt and
/// restarts from the initial state with seed `rng_seed + attempt`.
pub fn fit(y: &[f64], t: &[f64], kind: LikelihoodKind, cfg: &TrainConfig) -> Result<(SvgpModel, FitReport)> {
    if y.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 observations, got {}", y.len())));
    }
    if y.len() != t.len() {
        return Err(Error::Dimension(format!("{} observations at {} times", y.len(), t.len())));
    }
    let probe = crate::likelihoods::LikelihoodSpec::new(kind);
    for &v in y {
        probe.validate(v)?;
    }
    let data = SeriesData { t: t.to_vec(), y: y.to_vec() };
    let mut last_err = String::new();
    for attempt in 0..=cfg.max_restarts {
        let seed = cfg.rng_seed.wrapping_add(attempt as u64);
        match fit_once(&data, kind, cfg, seed) {
            Ok((model, mut report)) => {
                report.restarts = attempt;
                return Ok((model, report));
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::TrainingFailed { restarts: cfg.max_restarts, reason: last_err })
}

fn fit_once(data: &SeriesData, kind: LikelihoodKind, cfg: &TrainConfig, seed: u64) -> Result<(SvgpModel, FitReport)> {
    let mut model = SvgpModel::initial(&data.t, kind, seed)?;
    let mut x = model.to_unconstrained();
    let mut adam = Adam::new(x.len(), cfg.learning_rate);
    let scale = 1.0 / data.len() as f64;

    let mut elbo_trace = Vec::with_capacity(cfg.max_iters);
    let mut kl_trace = Vec::with_capacity(cfg.max_iters);
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut early_stopped = false;

    for it in 0..cfg.max_iters {
        let (value, grad) = elbo_and_grad(&model, data, cfg.mc_samples, mix_seed(seed, it as u64))?;
        let elbo = value.elbo();
        elbo_trace.push(elbo);
        kl_trace.push(value.kl);

        if best == f64::NEG_INFINITY || elbo > best + cfg.min_rel_improvement * best.abs() {
            best = elbo;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                early_stopped = true;
                break;
            }
        }

        let loss_grad: Vec<f64> = grad.to_vec().into_iter().map(|g| -g * scale).collect();
        if loss_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericRange(format!("non-finite gradient at iteration {it}")));
        }
        adam.step(&mut x, &loss_grad);
        model.set_unconstrained(&x)?;
    }

    let final_elbo = *elbo_trace.last().unwrap_or(&f64::NAN);
    let report =
        FitReport { iterations: elbo_trace.len(), elbo_trace, kl_trace, final_elbo, restarts: 0, early_stopped };
    Ok((model, report))
}
