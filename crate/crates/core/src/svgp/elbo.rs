//! ELBO estimate and its gradient.
//!
//! With `K_mm = L_K L_Kᵀ` and `A = L_K⁻¹ K_mn`, the marginals of `q(f)` at the
//! training inputs are
//!
//! ```text
//! mean_i = c + a_iᵀ vm
//! var_i  = k(t_i, t_i) - a_iᵀ a_i + a_iᵀ S a_i
//! ```
//!
//! The expected log-likelihood is estimated with `mc_samples` reparametrized
//! draws `mean_i + sqrt(var_i) ε` per point, and the KL term is exact. The
//! gradient is propagated by hand through the marginals, the Cholesky-based
//! solves, the Cholesky factor and the kernel matrices. The estimate is a deterministic function
//! of the parameters for a fixed seed, so it can be checked against finite
//! differences.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SeriesData, SvgpModel};
use crate::error::{Error, Result};
use crate::gp_core::{cholesky_psd, rbf_kernel, BASE_JITTER};
use crate::likelihoods::softplus_slope_at;

const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboValue {
    pub expected_loglik: f64,
    pub kl: f64,
}

impl ElboValue {
    pub fn elbo(&self) -> f64 {
        self.expected_loglik - self.kl
    }
}

/// Gradient of the ELBO with respect to every unconstrained parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGrad {
    pub c: f64,
    pub raw_lengthscale: f64,
    pub raw_outputscale: f64,
    pub lik_raw: Vec<f64>,
    pub z: DVector<f64>,
    pub vm: DVector<f64>,
    /// Lower triangle; the diagonal is w.r.t. the raw (pre-softplus) entries.
    pub vs_factor: DMatrix<f64>,
}

impl ElboGrad {
    /// Same layout as [`SvgpModel::to_unconstrained`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![self.c, self.raw_lengthscale, self.raw_outputscale];
        out.extend_from_slice(&self.lik_raw);
        out.extend(self.z.iter());
        out.extend(self.vm.iter());
        for i in 0..self.vs_factor.nrows() {
            for j in 0..=i {
                out.push(self.vs_factor[(i, j)]);
            }
        }
        out
    }
}

pub fn elbo(model: &SvgpModel, data: &SeriesData, mc_samples: usize, rng_seed: u64) -> Result<ElboValue> {
    compute(model, data, mc_samples, rng_seed, false).map(|(v, _)| v)
}

pub fn elbo_and_grad(
    model: &SvgpModel,
    data: &SeriesData,
    mc_samples: usize,
    rng_seed: u64,
) -> Result<(ElboValue, ElboGrad)> {
    compute(model, data, mc_samples, rng_seed, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

fn compute(
    model: &SvgpModel,
    data: &SeriesData,
    mc_samples: usize,
    rng_seed: u64,
    want_grad: bool,
) -> Result<(ElboValue, Option<ElboGrad>)> {
    if data.is_empty() || data.t.len() != data.y.len() {
        return Err(Error::Dimension(format!(
            "training data has {} inputs and {} outputs",
            data.t.len(),
            data.y.len()
        )));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidParameter("mc_samples must be positive".into()));
    }
    let z = &model.state.z;
    let m = z.len();
    let n = data.len();
    let kp = &model.kernel;
    let (ell, sf2) = (kp.lengthscale, kp.outputscale);
    let c = model.mean.c;
    let ls = &model.state.vs_factor;

    let kmm_raw = rbf_kernel(z, z, kp);
    let fac = cholesky_psd(&kmm_raw, BASE_JITTER * sf2)?;
    let jitter = fac.jitter;
    let lk = fac.l();
    let kmn = rbf_kernel(z, &data.t, kp);
    let a = fac.solve_lower(&kmn);
    let vm = &model.state.vm;
    let f_mean: Vec<f64> = (0..n).map(|i| c + a.column(i).dot(vm)).collect();
    let lt_a = ls.transpose() * &a;
    let f_sd: Vec<f64> = (0..n)
        .map(|i| {
            let v = sf2 - a.column(i).norm_squared() + lt_a.column(i).norm_squared();
            v.max(MIN_VARIANCE).sqrt()
        })
        .collect();

    // expected log-likelihood
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_lik = model.lik.raw().len();
    let mut e_sum = 0.0;
    let mut g_mean = vec![0.0; n];
    let mut g_sd = vec![0.0; n];
    let mut g_lik = [0.0; 2];
    for _ in 0..mc_samples {
        for i in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let f = f_mean[i] + f_sd[i] * eps;
            let (ll, g) = model.lik.loglik_and_grad(data.y[i], f)?;
            e_sum += ll;
            if want_grad {
                g_mean[i] += g.d_f;
                g_sd[i] += g.d_f * eps;
                g_lik[0] += g.d_raw[0];
                g_lik[1] += g.d_raw[1];
            }
        }
    }
    let inv_s = 1.0 / mc_samples as f64;
    let expected_loglik = e_sum * inv_s;

    // KL[N(vm, S) ‖ N(0, I)]
    let trace_s = ls.norm_squared();
    let log_det_s = 2.0 * (0..m).map(|i| ls[(i, i)].ln()).sum::<f64>();
    let kl = 0.5 * (trace_s + vm.norm_squared() - m as f64 - log_det_s);

    let value = ElboValue { expected_loglik, kl };
    if !value.elbo().is_finite() {
        return Err(Error::NumericRange(format!("non-finite ELBO (expected log-lik {expected_loglik}, KL {kl})")));
    }
    if !want_grad {
        return Ok((value, None));
    }

    let g_mean = DVector::from_iterator(n, g_mean.into_iter().map(|g| g * inv_s));
    let g_var = DVector::from_iterator(n, (0..n).map(|i| g_sd[i] * inv_s / (2.0 * f_sd[i])));
    let g_lik: Vec<f64> = g_lik[..n_lik].iter().map(|g| g * inv_s).collect();

    let mut a_scaled = a.clone();
    for (i, mut col) in a_scaled.column_iter_mut().enumerate() {
        col *= g_var[i];
    }
    let grad_vm = &a * &g_mean - vm;
    let grad_c = g_mean.sum();

    // ∂/∂L of Σ g_var_i a_iᵀ S a_i - KL with S = L Lᵀ
    let ls_inv_t = ls
        .clone()
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::NumericRange("variational factor is singular".into()))?
        .transpose();
    let grad_ls_full = 2.0 * (&a_scaled * a.transpose()) * ls - ls + ls_inv_t;
    let mut grad_ls = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            grad_ls[(i, j)] = grad_ls_full[(i, j)];
        }
        grad_ls[(i, i)] *= softplus_slope_at(ls[(i, i)]);
    }

    // back through A = L_K⁻¹ K_mn
    let s = model.state.covariance();
    let grad_a = vm * g_mean.transpose() + 2.0 * (&s * &a_scaled - &a_scaled);
    let lk_t = lk.transpose();
    let grad_kmn =
        lk_t.solve_upper_triangular(&grad_a).ok_or_else(|| Error::NumericRange("kernel factor is singular".into()))?;
    let grad_lk = -(&grad_kmn * a.transpose());
    // back through K_mm = L_K L_Kᵀ
    let mut phi = &lk_t * grad_lk;
    for i in 0..m {
        for j in i + 1..m {
            phi[(i, j)] = 0.0;
        }
        phi[(i, i)] *= 0.5;
    }
    let inner =
        lk_t.solve_upper_triangular(&phi).ok_or_else(|| Error::NumericRange("kernel factor is singular".into()))?;
    let grad_kmm = lk_t
        .solve_upper_triangular(&inner.transpose())
        .ok_or_else(|| Error::NumericRange("kernel factor is singular".into()))?
        .transpose();

    let ell2 = ell * ell;
    let ell3 = ell2 * ell;
    let mut grad_sf2 = g_var.sum();
    let mut grad_ell = 0.0;
    let mut grad_z = DVector::zeros(m);
    for r in 0..m {
        for q in 0..m {
            let g = grad_kmm[(r, q)];
            let k = kmm_raw[(r, q)];
            let diff = z[r] - z[q];
            grad_sf2 += g * k / sf2;
            grad_ell += g * k * diff * diff / ell3;
            // K_rq depends on both z_r and z_q
            grad_z[r] += (g + grad_kmm[(q, r)]) * (-k * diff / ell2);
        }
        grad_sf2 += grad_kmm[(r, r)] * jitter / sf2;
        for i in 0..n {
            let g = grad_kmn[(r, i)];
            let k = kmn[(r, i)];
            let diff = z[r] - data.t[i];
            grad_sf2 += g * k / sf2;
            grad_ell += g * k * diff * diff / ell3;
            grad_z[r] += g * (-k * diff / ell2);
        }
    }
    let grad = ElboGrad {
        c: grad_c,
        raw_lengthscale: grad_ell * softplus_slope_at(ell),
        raw_outputscale: grad_sf2 * softplus_slope_at(sf2),
        lik_raw: g_lik,
        z: grad_z,
        vm: grad_vm,
        vs_factor: grad_ls,
    };
    Ok((value, Some(grad)))
}
