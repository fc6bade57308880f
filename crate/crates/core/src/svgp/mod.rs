//! Sparse variational GP with inducing points.
//!
//! The inducing values are whitened, `u = c + L_K v` with `K_mm = L_K L_Kᵀ`,
//! and the variational posterior is `q(v) = N(vm, S)` with `S = L Lᵀ`
//! against the prior `p(v) = N(0, I)`.
//! Training maximizes the ELBO `E_q(f)[log p(y | f)] - KL[q(u) ‖ p(u)]`
//! with Adam over every unconstrained parameter: the prior mean `c`, the kernel
//! lengthscale and outputscale, the likelihood hyper-parameters, the inducing
//! inputs `Z`, and the variational parameters `vm` and `L`.

mod elbo;
mod forecast;
mod train;

pub use elbo::{elbo, elbo_and_grad, ElboGrad, ElboValue};
pub use forecast::{forecast, predictive_latent, ForecastOptions, ForecastSamples};
pub use train::{fit, FitReport, TrainConfig};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp_core::{cholesky_psd, rbf_kernel, KernelParams, LatentGaussian, MeanParams, BASE_JITTER};
use crate::likelihoods::{softplus, softplus_inv, LikelihoodKind, LikelihoodSpec};

/// Largest number of inducing points.
pub const MAX_INDUCING: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    /// Inducing inputs.
    pub z: Vec<f64>,
    /// Variational mean of the whitened inducing values.
    pub vm: DVector<f64>,
    /// Lower-triangular factor of the whitened variational covariance,
    /// positive diagonal.
    pub vs_factor: DMatrix<f64>,
}

impl VariationalState {
    /// `vm = 0`, `S = I`.
    pub fn new(z: Vec<f64>) -> Self {
        let m = z.len();
        Self { z, vm: DVector::zeros(m), vs_factor: DMatrix::identity(m, m) }
    }

    pub fn n_inducing(&self) -> usize {
        self.z.len()
    }

    /// `q(u)` in the original coordinates: `N(c + L_K vm, L_K S L_Kᵀ)`.
    pub fn inducing_distribution(&self, kp: &KernelParams, mp: &MeanParams) -> Result<LatentGaussian> {
        let lk = inducing_factor(&self.z, kp)?;
        let m = self.n_inducing();
        let mean = &lk * &self.vm + DVector::from_element(m, mp.c);
        let f = &lk * &self.vs_factor;
        LatentGaussian::new(mean, &f * f.transpose())
    }

    /// Whitened state whose `q(u)` is `q`.
    pub fn from_inducing_distribution(
        z: Vec<f64>,
        q: &LatentGaussian,
        kp: &KernelParams,
        mp: &MeanParams,
    ) -> Result<Self> {
        let m = z.len();
        if q.dim() != m {
            return Err(Error::Dimension(format!("{m} inducing inputs for a {}-dimensional q(u)", q.dim())));
        }
        let lk = inducing_factor(&z, kp)?;
        let sq = cholesky_psd(&q.cov, 0.0)?;
        let singular = || Error::NumericRange("kernel factor is singular".into());
        let d = &q.mean - DVector::from_element(m, mp.c);
        let vm = lk.solve_lower_triangular(&d).ok_or_else(singular)?;
        let vs_factor = lk.solve_lower_triangular(&sq.l()).ok_or_else(singular)?;
        Ok(Self { z, vm, vs_factor })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.vs_factor * self.vs_factor.transpose()
    }
}

/// Everything a fitted latent-GP forecaster needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgpModel {
    pub state: VariationalState,
    pub kernel: KernelParams,
    pub mean: MeanParams,
    pub lik: LikelihoodSpec,
}

/// Observed training series, `y[i]` at time `t[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl SeriesData {
    /// Values at the raw time indices 1..=T.
    pub fn from_values(y: &[f64]) -> Self {
        Self { t: (1..=y.len()).map(|i| i as f64).collect(), y: y.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

impl SvgpModel {
    /// Initial model: `c = 0`, `ℓ = max(2, T/10)`, `σ² = 1`, `vm = 0`,
    /// `S = I` and the likelihood defaults.
    pub fn initial(t: &[f64], kind: LikelihoodKind, rng_seed: u64) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::Dimension("no training inputs".into()));
        }
        let z = init_inducing(t, MAX_INDUCING, rng_seed);
        let lengthscale = (t.len() as f64 / 10.0).max(2.0);
        Ok(Self {
            state: VariationalState::new(z),
            kernel: KernelParams::new(lengthscale, 1.0)?,
            mean: MeanParams { c: 0.0 },
            lik: LikelihoodSpec::new(kind),
        })
    }

    pub fn n_params(&self) -> usize {
        let m = self.state.n_inducing();
        3 + self.lik.raw().len() + 2 * m + m * (m + 1) / 2
    }

    /// Flatten the unconstrained parameters:
    /// `[c, raw ℓ, raw σ², likelihood raw.., Z.., vm.., L lower triangle row by row]`
    /// with the diagonal of `L` stored through `softplus`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.push(self.mean.c);
        out.push(softplus_inv(self.kernel.lengthscale));
        out.push(softplus_inv(self.kernel.outputscale));
        out.extend_from_slice(self.lik.raw());
        out.extend_from_slice(&self.state.z);
        out.extend(self.state.vm.iter());
        let l = &self.state.vs_factor;
        for i in 0..l.nrows() {
            for j in 0..=i {
                out.push(if i == j { softplus_inv(l[(i, i)]) } else { l[(i, j)] });
            }
        }
        out
    }

    /// Inverse of [`Self::to_unconstrained`] for a model of the same shape.
    pub fn set_unconstrained(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_params() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.n_params(), x.len())));
        }
        let m = self.state.n_inducing();
        let nl = self.lik.raw().len();
        self.mean.c = x[0];
        self.kernel = KernelParams::new(softplus(x[1]), softplus(x[2]))?;
        self.lik.raw_mut().copy_from_slice(&x[3..3 + nl]);
        let mut k = 3 + nl;
        self.state.z.copy_from_slice(&x[k..k + m]);
        k += m;
        self.state.vm.as_mut_slice().copy_from_slice(&x[k..k + m]);
        k += m;
        let l = &mut self.state.vs_factor;
        for i in 0..m {
            for j in 0..=i {
                l[(i, j)] = if i == j { softplus(x[k]) } else { x[k] };
                k += 1;
            }
        }
        Ok(())
    }
}

/// Cholesky factor of `K_mm` with the jitter used throughout training.
pub(crate) fn inducing_factor(z: &[f64], kp: &KernelParams) -> Result<DMatrix<f64>> {
    Ok(cholesky_psd(&rbf_kernel(z, z, kp), BASE_JITTER * kp.outputscale)?.l())
}

/// Initial inducing inputs.
///
/// Up to `m_cap` training inputs are all used. Longer series get `m_cap`
/// distinct inputs drawn without replacement with probability proportional to
/// `log(1 + i/T)` for the `i`-th input, so recent times are favoured; the
/// result is sorted ascending.
pub fn init_inducing(t: &[f64], m_cap: usize, rng_seed: u64) -> Vec<f64> {
    let n = t.len();
    if n <= m_cap {
        return t.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let weight = |i: usize| ((i + 1) as f64 / n as f64).ln_1p();
    let mut idx: Vec<usize> = rand::seq::index::sample_weighted(&mut rng, n, weight, m_cap)
        .expect("weights are positive and finite")
        .into_iter()
        .collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| t[i]).collect()
}

/// Inducing-point sampling weight of the `i`-th (1-based) of `n` inputs.
pub fn inducing_weight(i: usize, n: usize) -> f64 {
    (i as f64 / n as f64).ln_1p()
}

/// Deterministic 64-bit mixing of a seed with a counter.
pub(crate) fn mix_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
