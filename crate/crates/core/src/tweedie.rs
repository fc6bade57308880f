//! Tweedie distribution with power in (1, 2).
//!
//! In this range the Tweedie is a compound Poisson–Gamma: a Poisson number of
//! i.i.d. Gamma jumps, giving a point mass at zero and a continuous right tail.
//! Two parametrizations are supported, the mean/dispersion/power form
//! [`TweedieParams`] used for likelihood evaluation and the Poisson/Gamma form
//! [`CompoundParams`] used for sampling.
//!
//! The density for `y > 0` needs the series `A(y) = (1/y) Σ_j V(j)`. The series
//! is truncated around its largest term: `j_max` is located in closed form and
//! the window `[j_lo, j_hi]` is grown outward until the terms have dropped
//! by a factor of `e^37` relative to `V(j_max)` (see [`truncate_series`]).
//! Every `log V(j)` in the scan and in the sum is evaluated with an exact
//! log-gamma, and the sum is accumulated as a log-sum-exp anchored at
//! `log V(j_max)`.
//!
//! Gradients of the log-density with respect to `mu` and `phi` are exact. The
//! derivative with respect to `rho` is also exact: it differentiates every
//! retained `log V(j)` through `alpha = (2 - rho)/(rho - 1)`, which requires the
//! digamma function, under the same truncation window as the value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Terms outside the truncation window are at least this many nats below the
/// largest term.
pub const LOG_THRESHOLD: f64 = 37.0;

/// Refuse to scan series whose dominant index exceeds this bound.
const MAX_TERMS_INDEX: f64 = 1.0e7;

/// Mean / dispersion / power parametrization. `Var[Y] = phi * mu^rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweedieParams {
    mu: f64,
    phi: f64,
    rho: f64,
}

impl TweedieParams {
    pub fn new(mu: f64, phi: f64, rho: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        if !(phi.is_finite() && phi > 0.0) {
            return Err(Error::InvalidParameter(format!("phi must be positive, got {phi}")));
        }
        if !(rho > 1.0 && rho < 2.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (1, 2), got {rho}")));
        }
        Ok(Self { mu, phi, rho })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Gamma shape `(2 - rho)/(rho - 1)`, which only depends on the power.
    pub fn alpha(&self) -> f64 {
        (2.0 - self.rho) / (self.rho - 1.0)
    }

    pub fn variance(&self) -> f64 {
        self.phi * self.mu.powf(self.rho)
    }
}

/// Poisson rate / Gamma shape / Gamma rate parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundParams {
    lambda: f64,
    alpha: f64,
    beta: f64,
}

impl CompoundParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { lambda, alpha, beta })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub fn to_compound(p: &TweedieParams) -> CompoundParams {
    let (mu, phi, rho) = (p.mu, p.phi, p.rho);
    CompoundParams {
        lambda: mu.powf(2.0 - rho) / (phi * (2.0 - rho)),
        alpha: (2.0 - rho) / (rho - 1.0),
        beta: 1.0 / (phi * (rho - 1.0) * mu.powf(rho - 1.0)),
    }
}

/// Inverse of [`to_compound`]: `rho = (alpha + 2)/(alpha + 1)`,
/// `mu = lambda * alpha / beta`, and `phi` from the Poisson rate.
pub fn from_compound(c: &CompoundParams) -> TweedieParams {
    let rho = (c.alpha + 2.0) / (c.alpha + 1.0);
    let mu = c.lambda * c.alpha / c.beta;
    let phi = mu.powf(2.0 - rho) / (c.lambda * (2.0 - rho));
    TweedieParams { mu, phi, rho }
}

/// `P(Y = 0) = exp(-lambda)`.
pub fn prob_zero(p: &TweedieParams) -> f64 {
    log_prob_zero(p).exp()
}

fn log_prob_zero(p: &TweedieParams) -> f64 {
    -p.mu.powf(2.0 - p.rho) / (p.phi * (2.0 - p.rho))
}

/// Index window retained when summing the series `Σ_j V(j)` at one `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationWorkspace {
    /// `log z`, with `V(j) = z^j / (j! Γ(jα))`.
    pub log_z: f64,
    pub alpha: f64,
    /// `C_W = log z + (1 + α) - α log α`, the slope constant of the
    /// Stirling form of `log V(j)`.
    pub c_w: f64,
    pub j_max: u64,
    pub j_lo: u64,
    pub j_hi: u64,
    pub log_threshold: f64,
}

impl TruncationWorkspace {
    /// Exact `log V(j)`.
    pub fn log_v(&self, j: u64) -> f64 {
        log_v(j, self.log_z, self.alpha)
    }

    pub fn n_terms(&self) -> u64 {
        self.j_hi - self.j_lo + 1
    }

    /// Stirling approximation of `∂ log V / ∂j`: `log z - log j - α log(α j)`.
    pub fn log_v_slope(&self, j: f64) -> f64 {
        self.log_z - j.ln() - self.alpha * (self.alpha * j).ln()
    }

    /// Log of the geometric-sum bound on the mass dropped by the truncation,
    /// relative to `V(j_max)`.
    ///
    /// Above the window the terms shrink at least by `r_U = exp(slope(j_hi+1))`
    /// per step. Below it, walking down from `j_lo - 1`, they shrink at least
    /// by `r_L = exp(-slope(j_lo - 1))`, and there are only `j_lo - 1` of them.
    pub fn log_tail_bound(&self) -> f64 {
        let log_vmax = self.log_v(self.j_max);
        let upper = {
            let r = self.log_v_slope((self.j_hi + 1) as f64).exp();
            if r >= 1.0 {
                f64::INFINITY
            } else {
                self.log_v(self.j_hi + 1) - (1.0 - r).ln() - log_vmax
            }
        };
        let lower = if self.j_lo > 1 {
            let n = (self.j_lo - 1) as f64;
            let r = (-self.log_v_slope(n)).exp();
            let factor = if r >= 1.0 { n } else { (1.0 - r.powf(n)) / (1.0 - r) };
            self.log_v(self.j_lo - 1) + factor.ln() - log_vmax
        } else {
            f64::NEG_INFINITY
        };
        log_add(upper, lower)
    }
}

fn log_v(j: u64, log_z: f64, alpha: f64) -> f64 {
    let jf = j as f64;
    jf * log_z - ln_gamma(jf + 1.0) - ln_gamma(jf * alpha)
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Locate the dominant term of the series and the window of terms within
/// `e^37` of it.
///
/// `j_max = round(y^(2-ρ) / (φ (2-ρ)))`, clamped to at least 1. The scan walks
/// upward until `log V(j_max) - log V(j) >= 37` and includes that last index as
/// `j_hi`; it walks downward the same way, stopping at 1 at the latest.
pub fn truncate_series(y: f64, p: &TweedieParams) -> Result<TruncationWorkspace> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::Domain(format!("series truncation needs y > 0, got {y}")));
    }
    let (phi, rho) = (p.phi, p.rho);
    let alpha = p.alpha();
    let log_z = alpha * y.ln() - alpha * (rho - 1.0).ln() - (1.0 + alpha) * phi.ln() - (2.0 - rho).ln();
    if !log_z.is_finite() {
        return Err(Error::NumericRange(format!("log z is not finite for y={y}, phi={phi}, rho={rho}")));
    }
    let j_star = y.powf(2.0 - rho) / (phi * (2.0 - rho));
    if !j_star.is_finite() || j_star > MAX_TERMS_INDEX {
        return Err(Error::NumericRange(format!(
            "dominant series index {j_star:e} out of range for y={y}, phi={phi}, rho={rho}"
        )));
    }
    let j_max = (j_star.round() as u64).max(1);
    let log_vmax = log_v(j_max, log_z, alpha);

    let mut j_hi = j_max;
    while log_vmax - log_v(j_hi, log_z, alpha) < LOG_THRESHOLD {
        j_hi += 1;
    }
    let mut j_lo = j_max;
    while j_lo > 1 && log_vmax - log_v(j_lo, log_z, alpha) < LOG_THRESHOLD {
        j_lo -= 1;
    }

    Ok(TruncationWorkspace {
        log_z,
        alpha,
        c_w: log_z + (1.0 + alpha) - alpha * alpha.ln(),
        j_max,
        j_lo,
        j_hi,
        log_threshold: LOG_THRESHOLD,
    })
}

/// Exponent of the exponential-family factor,
/// `(1/φ)(y μ^(1-ρ)/(1-ρ) - μ^(2-ρ)/(2-ρ))`.
fn exp_family_term(y: f64, p: &TweedieParams) -> f64 {
    let (mu, phi, rho) = (p.mu, p.phi, p.rho);
    (y * mu.powf(1.0 - rho) / (1.0 - rho) - mu.powf(2.0 - rho) / (2.0 - rho)) / phi
}

/// `log A(y)` and the softmax weights of the retained terms.
fn log_series(y: f64, ws: &TruncationWorkspace) -> (f64, Vec<f64>) {
    let log_vmax = ws.log_v(ws.j_max);
    let mut weights: Vec<f64> = (ws.j_lo..=ws.j_hi).map(|j| (ws.log_v(j) - log_vmax).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (log_vmax + total.ln() - y.ln(), weights)
}

pub fn log_density(y: f64, p: &TweedieParams) -> Result<f64> {
    if y < 0.0 || y.is_nan() {
        return Err(Error::Domain(format!("Tweedie support is y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(log_prob_zero(p));
    }
    let ws = truncate_series(y, p)?;
    let (log_a, _) = log_series(y, &ws);
    Ok(log_a + exp_family_term(y, p))
}

/// Partial derivatives of [`log_density`] with respect to `(mu, phi, rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweedieGrad {
    pub d_mu: f64,
    pub d_phi: f64,
    pub d_rho: f64,
}

/// Value and gradient of the log-density in one pass.
pub fn log_density_and_grad(y: f64, p: &TweedieParams) -> Result<(f64, TweedieGrad)> {
    if y < 0.0 || y.is_nan() {
        return Err(Error::Domain(format!("Tweedie support is y >= 0, got {y}")));
    }
    let (mu, phi, rho) = (p.mu, p.phi, p.rho);
    let mu_1 = mu.powf(1.0 - rho);
    let mu_2 = mu.powf(2.0 - rho);
    let ln_mu = mu.ln();
    // d/dρ of μ^(2-ρ)/(2-ρ) and of μ^(1-ρ)/(1-ρ)
    let d_pen_rho = mu_2 * (1.0 - (2.0 - rho) * ln_mu) / (2.0 - rho).powi(2);
    let d_lin_rho = mu_1 * (1.0 - (1.0 - rho) * ln_mu) / (1.0 - rho).powi(2);

    if y == 0.0 {
        let value = -mu_2 / (phi * (2.0 - rho));
        let grad = TweedieGrad { d_mu: -mu_1 / phi, d_phi: mu_2 / (phi * phi * (2.0 - rho)), d_rho: -d_pen_rho / phi };
        return Ok((value, grad));
    }

    let ws = truncate_series(y, p)?;
    let (log_a, weights) = log_series(y, &ws);
    let inner = y * mu_1 / (1.0 - rho) - mu_2 / (2.0 - rho);
    let value = log_a + inner / phi;

    let alpha = ws.alpha;
    let d_alpha = -1.0 / (rho - 1.0).powi(2);
    let d_logz_rho = d_alpha * (y.ln() - (rho - 1.0).ln() - phi.ln()) - alpha / (rho - 1.0) + 1.0 / (2.0 - rho);
    let mut mean_j = 0.0;
    let mut mean_dlogv_rho = 0.0;
    for (w, j) in weights.iter().zip(ws.j_lo..=ws.j_hi) {
        let jf = j as f64;
        mean_j += w * jf;
        mean_dlogv_rho += w * jf * (d_logz_rho - digamma(jf * alpha) * d_alpha);
    }

    let grad = TweedieGrad {
        d_mu: (y * mu.powf(-rho) - mu_1) / phi,
        d_phi: -(1.0 + alpha) * mean_j / phi - inner / (phi * phi),
        d_rho: mean_dlogv_rho + (y * d_lin_rho - d_pen_rho) / phi,
    };
    Ok((value, grad))
}

pub fn log_density_grad(y: f64, p: &TweedieParams) -> Result<TweedieGrad> {
    log_density_and_grad(y, p).map(|(_, g)| g)
}

/// Draw one value from the compound Poisson–Gamma representation.
///
/// A sum of `N` i.i.d. `Gamma(α, β)` jumps is drawn directly as
/// `Gamma(N α, β)`; `N = 0` yields exactly zero.
pub(crate) fn draw_compound<R: rand::Rng + ?Sized>(c: &CompoundParams, rng: &mut R) -> f64 {
    if c.lambda <= 0.0 || !c.lambda.is_finite() {
        return 0.0;
    }
    let n = match Poisson::new(c.lambda) {
        Ok(d) => d.sample(rng),
        Err(_) => return 0.0,
    };
    if n < 0.5 {
        return 0.0;
    }
    match Gamma::new(n * c.alpha, 1.0 / c.beta) {
        Ok(g) => g.sample(rng),
        Err(_) => 0.0,
    }
}

pub fn sample_tweedie(p: &TweedieParams, n: usize, rng_seed: u64) -> Vec<f64> {
    let c = to_compound(p);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n).map(|_| draw_compound(&c, &mut rng)).collect()
}

/// Log of the unnormalized density implied by the Tweedie loss, i.e. the
/// Tweedie density with `A(y) = 1` and `φ = 1`:
/// `y μ^(1-ρ)/(1-ρ) - μ^(2-ρ)/(2-ρ)`.
pub fn approx_log_density(y: f64, mu: f64, rho: f64) -> f64 {
    y * mu.powf(1.0 - rho) / (1.0 - rho) - mu.powf(2.0 - rho) / (2.0 - rho)
}

/// `(∂/∂μ, ∂/∂ρ)` of [`approx_log_density`].
pub fn approx_log_density_grad(y: f64, mu: f64, rho: f64) -> (f64, f64) {
    let ln_mu = mu.ln();
    let mu_1 = mu.powf(1.0 - rho);
    let mu_2 = mu.powf(2.0 - rho);
    let d_mu = y * mu.powf(-rho) - mu_1;
    let d_rho = y * mu_1 * (1.0 - (1.0 - rho) * ln_mu) / (1.0 - rho).powi(2)
        - mu_2 * (1.0 - (2.0 - rho) * ln_mu) / (2.0 - rho).powi(2);
    (d_mu, d_rho)
}

/// Tweedie loss, the negation of [`approx_log_density`].
pub fn tweedie_loss(y: f64, mu: f64, rho: f64) -> f64 {
    -approx_log_density(y, mu, rho)
}

/// Rate of the negative-exponential density obtained by normalizing
/// `exp(approx_log_density)` over `y > 0`: `μ^(1-ρ)/(ρ-1)`.
pub fn approx_normalized_rate(mu: f64, rho: f64) -> f64 {
    mu.powf(1.0 - rho) / (rho - 1.0)
}

/// Log of the normalizing constant `c(μ, ρ)` such that
/// `c · exp(approx_log_density)` integrates to one.
pub fn approx_log_normalizer(mu: f64, rho: f64) -> f64 {
    approx_normalized_rate(mu, rho).ln() + mu.powf(2.0 - rho) / (2.0 - rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tw(mu: f64, phi: f64, rho: f64) -> TweedieParams {
        TweedieParams::new(mu, phi, rho).unwrap()
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(TweedieParams::new(0.0, 1.0, 1.5).is_err());
        assert!(TweedieParams::new(1.0, -1.0, 1.5).is_err());
        assert!(TweedieParams::new(1.0, 1.0, 1.0).is_err());
        assert!(TweedieParams::new(1.0, 1.0, 2.0).is_err());
        assert!(TweedieParams::new(f64::NAN, 1.0, 1.5).is_err());
    }

    #[test]
    fn compound_at_unit_mean() {
        let c = to_compound(&tw(1.0, 1.0, 1.5));
        assert_relative_eq!(c.lambda(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(c.alpha(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(c.beta(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn compound_at_mean_two() {
        let c = to_compound(&tw(2.0, 1.0, 1.5));
        assert_relative_eq!(c.lambda(), 2.0 * 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.alpha(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(c.beta(), 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn zero_mass() {
        assert_relative_eq!(prob_zero(&tw(1.0, 1.0, 1.5)), (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(log_density(0.0, &tw(1.0, 1.0, 1.5)).unwrap(), -2.0, max_relative = 1e-14);
        for mu in [0.3, 1.0, 4.0] {
            let p0 = prob_zero(&tw(mu, 1.0, 1.0 + 1e-6));
            assert!((p0 - (-mu).exp()).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_mass_decreases_in_mean() {
        let mut prev = 1.0;
        for k in 1..50 {
            let p0 = prob_zero(&tw(0.1 * k as f64, 1.3, 1.4));
            assert!(p0 < prev);
            prev = p0;
        }
    }

    #[test]
    fn truncation_window_invariants() {
        for &(y, phi, rho) in &[(1.0, 1.0, 1.5), (0.1, 0.5, 1.01), (10.0, 5.0, 1.5), (50.0, 0.3, 1.9), (1e-3, 2.0, 1.1)]
        {
            let ws = truncate_series(y, &tw(1.0, phi, rho)).unwrap();
            assert!(ws.j_lo <= ws.j_max && ws.j_max <= ws.j_hi);
            let lmax = ws.log_v(ws.j_max);
            assert!(lmax - ws.log_v(ws.j_hi + 1) >= LOG_THRESHOLD);
            if ws.j_lo > 1 {
                assert!(lmax - ws.log_v(ws.j_lo - 1) >= LOG_THRESHOLD);
            }
            assert!(ws.log_tail_bound() < -30.0, "tail bound {}", ws.log_tail_bound());
        }
    }

    #[test]
    fn truncation_rejects_nonpositive_y() {
        assert!(matches!(truncate_series(0.0, &tw(1.0, 1.0, 1.5)), Err(Error::Domain(_))));
    }

    #[test]
    fn truncation_reports_range_errors() {
        let err = truncate_series(1e300, &tw(1.0, 1e-300, 1.5)).unwrap_err();
        assert!(matches!(err, Error::NumericRange(_)));
    }

    #[test]
    fn mean_gradient_at_zero() {
        let p = tw(1.7, 0.8, 1.3);
        let g = log_density_grad(0.0, &p).unwrap();
        assert_relative_eq!(g.d_mu, -1.7f64.powf(-0.3) / 0.8, max_relative = 1e-14);
    }

    #[test]
    fn approximate_density_is_negated_loss() {
        for &(y, mu, rho) in &[(0.0, 1.0, 1.5), (3.0, 0.4, 1.2), (0.7, 5.0, 1.9)] {
            assert_eq!(approx_log_density(y, mu, rho), -tweedie_loss(y, mu, rho));
        }
        for y in [0.0, 1.0, 17.0] {
            assert_relative_eq!(-approx_log_density(y, 1.0, 1.3) - y / 0.3, 1.0 / 0.7, max_relative = 1e-12);
        }
    }

    #[test]
    fn normalized_approximation_is_negative_exponential() {
        let (mu, rho) = (1.8, 1.35);
        let rate = approx_normalized_rate(mu, rho);
        let log_c = approx_log_normalizer(mu, rho);
        for y in [0.1, 1.0, 4.0] {
            let normalized = log_c + approx_log_density(y, mu, rho);
            assert_relative_eq!(normalized, rate.ln() - rate * y, max_relative = 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_nonnegative() {
        let p = tw(1.3, 0.9, 1.4);
        let a = sample_tweedie(&p, 1000, 7);
        let b = sample_tweedie(&p, 1000, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x >= 0.0));
        assert!(a.contains(&0.0));
    }
}
