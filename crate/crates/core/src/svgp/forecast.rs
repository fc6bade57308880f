use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SvgpModel, VariationalState};
use crate::error::{Error, Result};
use crate::gp_core::{
    cholesky_psd, rbf_kernel, relative_jitter, symmetrize, KernelParams, LatentGaussian, MeanParams, BASE_JITTER,
};

/// Gaussian marginal of the latent function at `t_star` under `q`. With
/// `K_mm = L_K L_Kᵀ` and `A_* = L_K⁻¹ K_m*`:
///
/// ```text
/// mean = c + A_*ᵀ vm
/// cov  = K_** - A_*ᵀ A_* + A_*ᵀ S A_*
/// ```
///
/// Every horizon step is available jointly; no autoregressive sampling.
pub fn predictive_latent(
    vs: &VariationalState,
    kp: &KernelParams,
    mp: &MeanParams,
    t_star: &[f64],
) -> Result<LatentGaussian> {
    let m = vs.n_inducing();
    if vs.vm.len() != m || vs.vs_factor.nrows() != m || vs.vs_factor.ncols() != m {
        return Err(Error::Dimension("variational state has inconsistent sizes".into()));
    }
    let kmm = rbf_kernel(&vs.z, &vs.z, kp);
    let fac = cholesky_psd(&kmm, BASE_JITTER * kp.outputscale)?;
    let kms = rbf_kernel(&vs.z, t_star, kp);
    let kss = rbf_kernel(t_star, t_star, kp);
    let a = fac.solve_lower(&kms);
    let mean = a.transpose() * &vs.vm + DVector::from_element(t_star.len(), mp.c);
    let lt_a = vs.vs_factor.transpose() * &a;
    let mut cov = kss - a.transpose() * &a + lt_a.transpose() * &lt_a;
    symmetrize(&mut cov);
    LatentGaussian::new(mean, cov)
}

/// Monte-Carlo draws from a forecast distribution, `n_draws × horizon`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSamples {
    draws: Vec<f64>,
    n_draws: usize,
    horizon: usize,
    pub scale_factor: f64,
    pub rounded: bool,
}

impl ForecastSamples {
    pub fn from_draws(
        draws: Vec<f64>,
        n_draws: usize,
        horizon: usize,
        scale_factor: f64,
        rounded: bool,
    ) -> Result<Self> {
        if draws.len() != n_draws * horizon {
            return Err(Error::Dimension(format!("{} draws for {n_draws} x {horizon} samples", draws.len())));
        }
        Ok(Self { draws, n_draws, horizon, scale_factor, rounded })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.draws[i * self.horizon..(i + 1) * self.horizon]
    }

    /// All draws for one horizon step.
    pub fn step(&self, h: usize) -> Vec<f64> {
        (0..self.n_draws).map(|i| self.draws[i * self.horizon + h]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.horizon).map(|h| self.step(h).iter().sum::<f64>() / self.n_draws as f64).collect()
    }

    /// Multiply every draw by `factor` and record it.
    pub fn rescaled(mut self, factor: f64) -> Self {
        for v in &mut self.draws {
            *v *= factor;
        }
        self.scale_factor *= factor;
        self
    }

    pub fn rounded(mut self) -> Self {
        for v in &mut self.draws {
            *v = v.round();
        }
        self.rounded = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastOptions {
    pub n_samples: usize,
    /// Multiplies the draws before rounding.
    pub scale_factor: f64,
    pub round_counts: bool,
    pub rng_seed: u64,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self { n_samples: 50_000, scale_factor: 1.0, round_counts: false, rng_seed: 0 }
    }
}

/// Sample the forecast distribution at `t_star`: one latent vector per draw
/// from [`predictive_latent`], then one observation per step through the
/// likelihood.
pub fn forecast(model: &SvgpModel, t_star: &[f64], opts: &ForecastOptions) -> Result<ForecastSamples> {
    let h = t_star.len();
    let latent = predictive_latent(&model.state, &model.kernel, &model.mean, t_star)?;
    let chol = cholesky_psd(&latent.cov, relative_jitter(&latent.cov))?;
    let l: DMatrix<f64> = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let mut draws = Vec::with_capacity(opts.n_samples * h);
    let mut eps = vec![0.0; h];
    for _ in 0..opts.n_samples {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        for i in 0..h {
            let mut f = latent.mean[i];
            for j in 0..=i {
                f += l[(i, j)] * eps[j];
            }
            let mut y = model.lik.draw_obs(f, &mut rng) * opts.scale_factor;
            if opts.round_counts {
                y = y.round();
            }
            draws.push(y);
        }
    }
    ForecastSamples::from_draws(draws, opts.n_samples, h, opts.scale_factor, opts.round_counts)
}
