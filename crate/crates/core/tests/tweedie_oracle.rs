use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tweedie_gp::tweedie::{
    log_density, log_density_and_grad, prob_zero, sample_tweedie, truncate_series, TweedieParams,
};
use tweedie_gp_oracles::{central_diff5, integrate, integrate_from_zero, ks_on_grid, tweedie_density_bruteforce};

fn tw(mu: f64, phi: f64, rho: f64) -> TweedieParams {
    TweedieParams::new(mu, phi, rho).unwrap()
}

fn density(y: f64, p: &TweedieParams) -> f64 {
    log_density(y, p).unwrap().exp()
}

#[test]
fn total_mass_is_one_on_grid() {
    for &mu in &[0.5, 1.0, 2.0] {
        for &phi in &[0.5, 1.0, 2.0] {
            for &rho in &[1.1, 1.5, 1.9] {
                let p = tw(mu, phi, rho);
                let upper = mu + 40.0 * (phi * mu.powf(rho)).sqrt();
                let mass = integrate_from_zero(|y| density(y, &p), upper, p.alpha(), 1e-10);
                let total = prob_zero(&p) + mass;
                assert!((total - 1.0).abs() < 1e-6, "mu={mu} phi={phi} rho={rho}: {total}");
            }
        }
    }
}

#[test]
fn truncation_term_counts() {
    // (y, phi, rho, expected number of retained terms)
    let cells = [(1.0, 1.0, 1.5, 16), (0.1, 0.5, 1.01, 2), (10.0, 5.0, 1.5, 14)];
    for (y, phi, rho, want) in cells {
        let ws = truncate_series(y, &tw(1.0, phi, rho)).unwrap();
        let got = ws.n_terms() as i64;
        assert!((got - want).abs() <= 2, "y={y} phi={phi} rho={rho}: {got} vs {want}");
    }
}

#[test]
fn matches_untruncated_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let y = 10f64.powf(rng.random_range(-2.0..1.3));
        let mu = 10f64.powf(rng.random_range(-1.0..1.0));
        let phi = rng.random_range(0.2..5.0);
        let rho = rng.random_range(1.05..1.95);
        let p = tw(mu, phi, rho);
        let want = tweedie_density_bruteforce(y, mu, phi, rho, 4000).ln();
        let got = log_density(y, &p).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "y={y} {p:?}: {got} vs {want}");
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn partials_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 60 {
        let y = if checked % 6 == 0 { 0.0 } else { 10f64.powf(rng.random_range(-1.5..1.2)) };
        let mu = 10f64.powf(rng.random_range(-0.7..0.8));
        let phi = rng.random_range(0.3..3.0);
        let rho = rng.random_range(1.1..1.9);
        let (_, g) = log_density_and_grad(y, &tw(mu, phi, rho)).unwrap();
        let h = 1e-4;
        let d_mu = central_diff5(|m| log_density(y, &tw(m, phi, rho)).unwrap(), mu, h * mu);
        let d_phi = central_diff5(|f| log_density(y, &tw(mu, f, rho)).unwrap(), phi, h * phi);
        let d_rho = central_diff5(|r| log_density(y, &tw(mu, phi, r)).unwrap(), rho, h);
        for (name, a, b) in [("mu", g.d_mu, d_mu), ("phi", g.d_phi, d_phi), ("rho", g.d_rho, d_rho)] {
            assert!(rel_err(a, b) < 1e-4, "d_{name} at y={y} mu={mu} phi={phi} rho={rho}: {a} vs {b}");
        }
        checked += 1;
    }
}

#[test]
fn draws_follow_density() {
    let n = 1_000_000;
    for (k, &(mu, phi, rho)) in [(1.0, 1.0, 1.5), (2.0, 0.5, 1.2), (0.5, 2.0, 1.8)].iter().enumerate() {
        let p = tw(mu, phi, rho);
        let draws = sample_tweedie(&p, n, 100 + k as u64);
        let p0 = prob_zero(&p);
        let zeros = draws.iter().filter(|&&v| v == 0.0).count() as f64;
        let sd = (n as f64 * p0 * (1.0 - p0)).sqrt();
        assert!((zeros - n as f64 * p0).abs() < 3.0 * sd, "zero count {zeros} vs {}", n as f64 * p0);

        let mut positive: Vec<f64> = draws.into_iter().filter(|&v| v > 0.0).collect();
        let upper = mu + 40.0 * (phi * mu.powf(rho)).sqrt();
        let grid: Vec<f64> = (1..=400).map(|i| upper * (i as f64 / 400.0).powi(2)).collect();
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = integrate_from_zero(|y| density(y, &p), grid[0], p.alpha(), 1e-12);
        cdf.push(acc);
        for w in grid.windows(2) {
            acc += integrate(|y| density(y, &p), w[0], w[1], 1e-12);
            cdf.push(acc);
        }
        let cdf: Vec<f64> = cdf.into_iter().map(|c| c / (1.0 - p0)).collect();
        let d = ks_on_grid(&mut positive, &grid, &cdf);
        assert!(d < 0.01, "KS distance {d} for {p:?}");
    }
}
