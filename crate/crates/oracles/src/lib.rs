//! Brute-force reference computations for the test suites. Nothing here is
//! fast; everything here is straightforward to check by eye.

#![allow(clippy::excessive_precision)]

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth >= 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// Integral over `(0, b]` of an integrand with an integrable singularity of
/// order up to `y^(s-1)` at zero, via `y = b u^k` with `k s >= 2`.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: F, b: f64, s: f64, tol: f64) -> f64 {
    let k = (2.0 / s).ceil().max(1.0);
    integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let y = b * u.powf(k);
            f(y) * b * k * u.powf(k - 1.0)
        },
        0.0,
        1.0,
        tol,
    )
}

/// Tweedie density for `y > 0` by summing every series term up to
/// `j = n_terms` with a running log-sum-exp. Independent of any truncation
/// rule.
pub fn tweedie_density_bruteforce(y: f64, mu: f64, phi: f64, rho: f64, n_terms: usize) -> f64 {
    assert!(y > 0.0);
    let alpha = (2.0 - rho) / (rho - 1.0);
    let log_z = alpha * y.ln() - alpha * (rho - 1.0).ln() - (1.0 + alpha) * phi.ln() - (2.0 - rho).ln();
    let terms: Vec<f64> = (1..=n_terms)
        .map(|j| {
            let j = j as f64;
            j * log_z - ln_gamma(j + 1.0) - ln_gamma(j * alpha)
        })
        .collect();
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_w = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
    let log_a = log_w - y.ln();
    let theta_part = y * mu.powf(1.0 - rho) / (1.0 - rho) - mu.powf(2.0 - rho) / (2.0 - rho);
    (log_a + theta_part / phi).exp()
}

pub fn tweedie_prob_zero(mu: f64, phi: f64, rho: f64) -> f64 {
    (-mu.powf(2.0 - rho) / (phi * (2.0 - rho))).exp()
}

/// Central difference of `f` at `x` with step `h`.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Five-point central difference, error O(h^4).
pub fn central_diff5<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Central-difference gradient of a function of a vector.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let dn = f(&xp);
            xp[i] = orig;
            (up - dn) / (2.0 * h)
        })
        .collect()
}

pub fn rbf(a: f64, b: f64, lengthscale: f64, outputscale: f64) -> f64 {
    outputscale * (-(a - b).powi(2) / (2.0 * lengthscale * lengthscale)).exp()
}

fn gram(a: &[f64], b: &[f64], ell: f64, sf2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| rbf(a[i], b[j], ell, sf2))
}

/// Exact GP regression with constant prior mean `c` and Gaussian noise
/// variance `noise`: posterior mean and covariance of `f(x_star)`. The prior
/// covariance of `f` at any set of points carries `nugget` on its diagonal.
#[allow(clippy::too_many_arguments)]
pub fn exact_gp_posterior(
    x: &[f64],
    y: &[f64],
    c: f64,
    ell: f64,
    sf2: f64,
    nugget: f64,
    noise: f64,
    x_star: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let ns = x_star.len();
    let k = gram(x, x, ell, sf2) + DMatrix::identity(n, n) * (nugget + noise);
    let mut ks = gram(x, x_star, ell, sf2);
    for i in 0..n {
        for j in 0..ns {
            if x[i] == x_star[j] {
                ks[(i, j)] += nugget;
            }
        }
    }
    let kss = gram(x_star, x_star, ell, sf2) + DMatrix::identity(ns, ns) * nugget;
    let inv = k.try_inverse().expect("noisy gram matrix is invertible");
    let r = DVector::from_iterator(n, y.iter().map(|v| v - c));
    let mean = ks.transpose() * &inv * r + DVector::from_element(x_star.len(), c);
    let cov = kss - ks.transpose() * &inv * &ks;
    (mean, cov)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// `cdf`, evaluated at the points of `grid` (both sides of each jump).
pub fn ks_on_grid(samples: &mut [f64], grid: &[f64], cdf: &[f64]) -> f64 {
    assert_eq!(grid.len(), cdf.len());
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (&g, &f) in grid.iter().zip(cdf) {
        let le = samples.partition_point(|&s| s <= g) as f64 / n;
        let lt = samples.partition_point(|&s| s < g) as f64 / n;
        worst = worst.max((le - f).abs()).max((lt - f).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_polynomials_and_singular() {
        assert!((integrate(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        assert!((integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12) - 2.0).abs() < 1e-12);
        // ∫_0^1 x^(-0.9) dx = 10
        let v = integrate_from_zero(|x| x.powf(-0.9), 1.0, 0.1, 1e-10);
        assert!((v - 10.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn bruteforce_poisson_like_normalization() {
        let (mu, phi, rho) = (1.0, 1.0, 1.5);
        let p = tweedie_prob_zero(mu, phi, rho);
        let mass = integrate_from_zero(|y| tweedie_density_bruteforce(y, mu, phi, rho, 200), 60.0, 1.0, 1e-11);
        assert!((p + mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exact_gp_interpolates_without_noise() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, -1.0, 0.5];
        let (m, v) = exact_gp_posterior(&x, &y, 0.0, 1.0, 1.0, 0.0, 1e-10, &x);
        for i in 0..3 {
            assert!((m[i] - y[i]).abs() < 1e-6);
            assert!(v[(i, i)].abs() < 1e-6);
        }
    }

    #[test]
    fn fd_exact_on_quadratic() {
        let g = fd_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-3);
        assert!((g[0] - 4.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
        assert!((central_diff5(f64::exp, 0.0, 1e-2) - 1.0).abs() < 1e-9);
    }
}
