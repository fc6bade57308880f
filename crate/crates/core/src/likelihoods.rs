//! Observation models linked to the latent GP through softplus.
//!
//! The latent value `f` is mapped to a positive parameter `softplus(f)`:
//! the negative-binomial success count `r`, or the Tweedie mean `mu`.
//! Likelihood hyper-parameters are stored unconstrained and mapped to their
//! domains with fixed bijections:
//!
//! * `p_succ = sigmoid(u)`
//! * `phi = softplus(u) + 1e-6`
//! * `rho = 1 + 1e-4 + (1 - 2e-4) sigmoid(u)`, i.e. inside `[1 + 1e-4, 2 - 1e-4]`
//!
//! Negative-binomial convention: `P(y) = Γ(y + r)/(Γ(r) y!) p^r (1 - p)^y`,
//! so the mean is `r (1 - p)/p` and the variance `r (1 - p)/p²`. Both grow
//! linearly in `r`, and `p` sets the overdispersion.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::tweedie::{self, TweedieParams};

const PHI_FLOOR: f64 = 1e-6;
const RHO_MARGIN: f64 = 1e-4;

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of softplus at the point where it takes the value `y`,
/// i.e. `sigmoid(softplus⁻¹(y)) = 1 - e^(-y)`.
pub fn softplus_slope_at(y: f64) -> f64 {
    -(-y).exp_m1()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinParams {
    pub r: f64,
    pub p_succ: f64,
}

impl NegBinParams {
    pub fn new(r: f64, p_succ: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
        }
        if !(p_succ > 0.0 && p_succ < 1.0) {
            return Err(Error::InvalidParameter(format!("p_succ must lie in (0, 1), got {p_succ}")));
        }
        Ok(Self { r, p_succ })
    }

    pub fn mean(&self) -> f64 {
        self.r * (1.0 - self.p_succ) / self.p_succ
    }

    pub fn variance(&self) -> f64 {
        self.r * (1.0 - self.p_succ) / (self.p_succ * self.p_succ)
    }

    pub fn log_pmf(&self, y: f64) -> f64 {
        let (r, p) = (self.r, self.p_succ);
        ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) + r * p.ln() + y * (1.0 - p).ln()
    }

    /// `(∂/∂r, ∂/∂p)` of [`Self::log_pmf`].
    pub fn log_pmf_grad(&self, y: f64) -> (f64, f64) {
        let (r, p) = (self.r, self.p_succ);
        (digamma(y + r) - digamma(r) + p.ln(), r / p - y / (1.0 - p))
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let scale = (1.0 - self.p_succ) / self.p_succ;
        let rate = match Gamma::new(self.r, scale) {
            Ok(g) => g.sample(rng),
            Err(_) => return 0.0,
        };
        if !(rate > 0.0 && rate.is_finite()) {
            return 0.0;
        }
        match Poisson::new(rate) {
            Ok(d) => d.sample(rng),
            Err(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LikelihoodKind {
    NegBin,
    Tweedie,
    /// Tweedie with `A(y) = 1` and `phi = 1`, the density implied by the
    /// Tweedie loss.
    TweedieApprox,
}

impl LikelihoodKind {
    pub fn n_hyper(&self) -> usize {
        match self {
            LikelihoodKind::NegBin => 1,
            LikelihoodKind::Tweedie => 2,
            LikelihoodKind::TweedieApprox => 1,
        }
    }
}

/// A likelihood family together with its unconstrained hyper-parameters.
///
/// Layout of `raw`: `[u_p]` for NegBin, `[u_phi, u_rho]` for Tweedie and
/// `[u_rho]` for TweedieApprox.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSpec {
    kind: LikelihoodKind,
    raw: Vec<f64>,
}

/// Derivatives of a per-point log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGrad {
    pub d_f: f64,
    /// Derivative w.r.t. each unconstrained hyper-parameter; unused slots are 0.
    pub d_raw: [f64; 2],
}

impl LikelihoodSpec {
    /// Defaults: `p_succ = 0.5`, `phi = 1`, `rho = 1.5`.
    pub fn new(kind: LikelihoodKind) -> Self {
        let raw = match kind {
            LikelihoodKind::NegBin => vec![0.0],
            LikelihoodKind::Tweedie => vec![softplus_inv(1.0 - PHI_FLOOR), 0.0],
            LikelihoodKind::TweedieApprox => vec![0.0],
        };
        Self { kind, raw }
    }

    pub fn from_raw(kind: LikelihoodKind, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != kind.n_hyper() {
            return Err(Error::Dimension(format!(
                "{kind:?} takes {} hyper-parameters, got {}",
                kind.n_hyper(),
                raw.len()
            )));
        }
        Ok(Self { kind, raw })
    }

    pub fn negbin(p_succ: f64) -> Result<Self> {
        NegBinParams::new(1.0, p_succ)?;
        Ok(Self { kind: LikelihoodKind::NegBin, raw: vec![logit(p_succ)] })
    }

    pub fn tweedie(phi: f64, rho: f64) -> Result<Self> {
        if !(phi > PHI_FLOOR) {
            return Err(Error::InvalidParameter(format!("phi must exceed {PHI_FLOOR}, got {phi}")));
        }
        Ok(Self { kind: LikelihoodKind::Tweedie, raw: vec![softplus_inv(phi - PHI_FLOOR), rho_to_raw(rho)?] })
    }

    pub fn tweedie_approx(rho: f64) -> Result<Self> {
        Ok(Self { kind: LikelihoodKind::TweedieApprox, raw: vec![rho_to_raw(rho)?] })
    }

    pub fn kind(&self) -> LikelihoodKind {
        self.kind
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn p_succ(&self) -> Option<f64> {
        match self.kind {
            LikelihoodKind::NegBin => Some(sigmoid(self.raw[0])),
            _ => None,
        }
    }

    pub fn phi(&self) -> Option<f64> {
        match self.kind {
            LikelihoodKind::Tweedie => Some(softplus(self.raw[0]) + PHI_FLOOR),
            LikelihoodKind::TweedieApprox => Some(1.0),
            LikelihoodKind::NegBin => None,
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self.kind {
            LikelihoodKind::Tweedie => Some(raw_to_rho(self.raw[1])),
            LikelihoodKind::TweedieApprox => Some(raw_to_rho(self.raw[0])),
            LikelihoodKind::NegBin => None,
        }
    }

    /// Check that `y` is in the support of this likelihood.
    pub fn validate(&self, y: f64) -> Result<()> {
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::Domain(format!("observations must be finite and nonnegative, got {y}")));
        }
        if self.kind == LikelihoodKind::NegBin && y.fract() != 0.0 {
            return Err(Error::Domain(format!("negative binomial needs integer counts, got {y}")));
        }
        Ok(())
    }

    pub fn loglik_point(&self, y: f64, f: f64) -> Result<f64> {
        self.validate(y)?;
        self.eval(y, f, false).map(|(v, _)| v)
    }

    pub fn loglik_grad_f(&self, y: f64, f: f64) -> Result<f64> {
        self.validate(y)?;
        self.eval(y, f, true).map(|(_, g)| g.d_f)
    }

    /// Value and full gradient of one log-likelihood term. `y` is assumed
    /// validated.
    pub fn loglik_and_grad(&self, y: f64, f: f64) -> Result<(f64, PointGrad)> {
        self.eval(y, f, true)
    }

    /// Series log-likelihood, the sum of the per-point terms.
    pub fn loglik_series(&self, y: &[f64], f: &[f64]) -> Result<f64> {
        if y.len() != f.len() {
            return Err(Error::Dimension(format!("{} observations but {} latent values", y.len(), f.len())));
        }
        y.iter().zip(f).map(|(&yi, &fi)| self.loglik_point(yi, fi)).sum()
    }

    fn eval(&self, y: f64, f: f64, want_grad: bool) -> Result<(f64, PointGrad)> {
        let link = softplus(f);
        let dlink = sigmoid(f);
        if !(link > 0.0) {
            return Err(Error::NumericRange(format!("softplus({f}) underflowed to zero")));
        }
        match self.kind {
            LikelihoodKind::NegBin => {
                let p = sigmoid(self.raw[0]);
                let nb = NegBinParams { r: link, p_succ: p };
                let v = nb.log_pmf(y);
                if !want_grad {
                    return Ok((v, PointGrad { d_f: 0.0, d_raw: [0.0; 2] }));
                }
                let (dr, dp) = nb.log_pmf_grad(y);
                Ok((v, PointGrad { d_f: dr * dlink, d_raw: [dp * p * (1.0 - p), 0.0] }))
            }
            LikelihoodKind::Tweedie => {
                let phi = softplus(self.raw[0]) + PHI_FLOOR;
                let rho = raw_to_rho(self.raw[1]);
                let tp = TweedieParams::new(link, phi, rho)?;
                if !want_grad {
                    return Ok((tweedie::log_density(y, &tp)?, PointGrad { d_f: 0.0, d_raw: [0.0; 2] }));
                }
                let (v, g) = tweedie::log_density_and_grad(y, &tp)?;
                Ok((
                    v,
                    PointGrad {
                        d_f: g.d_mu * dlink,
                        d_raw: [g.d_phi * sigmoid(self.raw[0]), g.d_rho * raw_to_rho_deriv(self.raw[1])],
                    },
                ))
            }
            LikelihoodKind::TweedieApprox => {
                let rho = raw_to_rho(self.raw[0]);
                let v = tweedie::approx_log_density(y, link, rho);
                let (d_mu, d_rho) = tweedie::approx_log_density_grad(y, link, rho);
                Ok((v, PointGrad { d_f: d_mu * dlink, d_raw: [d_rho * raw_to_rho_deriv(self.raw[0]), 0.0] }))
            }
        }
    }

    /// One observation drawn at latent value `f`.
    ///
    /// TweedieApprox has no proper density of its own; it draws from the
    /// Tweedie it approximates, with `phi = 1`.
    pub fn draw_obs<R: Rng + ?Sized>(&self, f: f64, rng: &mut R) -> f64 {
        let link = softplus(f);
        if !(link > 0.0) {
            return 0.0;
        }
        match self.kind {
            LikelihoodKind::NegBin => NegBinParams { r: link, p_succ: sigmoid(self.raw[0]) }.draw(rng),
            LikelihoodKind::Tweedie | LikelihoodKind::TweedieApprox => {
                let phi = self.phi().unwrap_or(1.0);
                let rho = self.rho().unwrap_or(1.5);
                match TweedieParams::new(link, phi, rho) {
                    Ok(tp) => tweedie::draw_compound(&tweedie::to_compound(&tp), rng),
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn sample_obs(&self, f: f64, n: usize, rng_seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
        (0..n).map(|_| self.draw_obs(f, &mut rng)).collect()
    }

    /// Mean of the observation distribution at latent value `f`.
    pub fn obs_mean(&self, f: f64) -> f64 {
        let link = softplus(f);
        match self.kind {
            LikelihoodKind::NegBin => link * (1.0 - sigmoid(self.raw[0])) / sigmoid(self.raw[0]),
            _ => link,
        }
    }
}

fn raw_to_rho(u: f64) -> f64 {
    1.0 + RHO_MARGIN + (1.0 - 2.0 * RHO_MARGIN) * sigmoid(u)
}

fn raw_to_rho_deriv(u: f64) -> f64 {
    let s = sigmoid(u);
    (1.0 - 2.0 * RHO_MARGIN) * s * (1.0 - s)
}

fn rho_to_raw(rho: f64) -> Result<f64> {
    let lo = 1.0 + RHO_MARGIN;
    let hi = 2.0 - RHO_MARGIN;
    if !(rho > lo && rho < hi) {
        return Err(Error::InvalidParameter(format!("rho must lie in ({lo}, {hi}), got {rho}")));
    }
    Ok(logit((rho - lo) / (hi - lo)))
}
