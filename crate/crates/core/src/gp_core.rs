//! Finite-dimensional Gaussian machinery for the latent process.
//!
//! Time inputs are raw indices (1, 2, ..., T); nothing is normalized before
//! the kernel. Linear systems are solved against Cholesky factors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative base jitter added to kernel matrices before factorization.
pub const BASE_JITTER: f64 = 1e-6;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-2;

/// RBF kernel `σ² exp(-|t - t'|² / (2ℓ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub outputscale: f64,
}

impl KernelParams {
    pub fn new(lengthscale: f64, outputscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidParameter(format!("lengthscale must be positive, got {lengthscale}")));
        }
        if !(outputscale > 0.0 && outputscale.is_finite()) {
            return Err(Error::InvalidParameter(format!("outputscale must be positive, got {outputscale}")));
        }
        Ok(Self { lengthscale, outputscale })
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.outputscale * (-0.5 * d * d / (self.lengthscale * self.lengthscale)).exp()
    }
}

/// Constant prior mean `m(t) = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanParams {
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl LatentGaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal over the given coordinates.
    pub fn marginal(&self, idx: &[usize]) -> LatentGaussian {
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.cov[(idx[r], idx[c])]);
        LatentGaussian { mean, cov }
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

pub fn rbf_kernel(t1: &[f64], t2: &[f64], kp: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(t1.len(), t2.len(), |i, j| kp.eval(t1[i], t2[j]))
}

/// Cholesky factor of a symmetric matrix with a jitter fallback.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    chol: Cholesky<f64, Dyn>,
    /// Jitter that was actually added to the diagonal.
    pub jitter: f64,
}

impl PsdFactor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn l_ref(&self) -> &DMatrix<f64> {
        self.chol.l_dirty()
    }

    /// Solve `(A + jitter I) x = b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solve `L x = b` for the lower factor.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.l_dirty().solve_lower_triangular(b).expect("cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `(A + jitter I)^{-1}`, only for gradient expressions that need it.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Factor `A + jitter I`, multiplying the jitter by 10 on failure up to
/// [`MAX_JITTER`]. A zero starting jitter first attempts the plain matrix and
/// then escalates from `1e-10`.
pub fn cholesky_psd(a: &DMatrix<f64>, jitter: f64) -> Result<PsdFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    if !(jitter >= 0.0) {
        return Err(Error::InvalidParameter(format!("jitter must be nonnegative, got {jitter}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { jitter });
    }
    let mut jit = jitter;
    loop {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jit;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(PsdFactor { chol, jitter: jit });
        }
        jit = if jit == 0.0 { 1e-10 } else { jit * 10.0 };
        if jit > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::NotPositiveDefinite { jitter: jit / 10.0 });
        }
    }
}

/// Jitter scaled to the mean diagonal of `a`.
pub fn relative_jitter(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows().max(1) as f64;
    BASE_JITTER * (a.trace() / n).abs().max(f64::MIN_POSITIVE)
}

/// Condition the joint Gaussian over `(a, b)`, where `b` is the trailing
/// `observed_b.len()` coordinates, on `b = observed_b`.
pub fn condition(joint: &LatentGaussian, observed_b: &DVector<f64>) -> Result<LatentGaussian> {
    let n = joint.dim();
    let nb = observed_b.len();
    if nb > n {
        return Err(Error::Dimension(format!("conditioning on {nb} of {n} coordinates")));
    }
    let na = n - nb;
    let mu_a = joint.mean.rows(0, na).into_owned();
    let mu_b = joint.mean.rows(na, nb).into_owned();
    let s_aa = joint.cov.view((0, 0), (na, na)).into_owned();
    let s_ab = joint.cov.view((0, na), (na, nb)).into_owned();
    let s_bb = joint.cov.view((na, na), (nb, nb)).into_owned();
    if nb == 0 {
        return LatentGaussian::new(mu_a, s_aa);
    }
    let fac = cholesky_psd(&s_bb, 0.0)?;
    let gain_t = fac.solve(&s_ab.transpose()); // Σbb⁻¹ Σba
    let mean = mu_a + gain_t.transpose() * (observed_b - mu_b);
    let mut cov = s_aa - &s_ab * gain_t;
    symmetrize(&mut cov);
    LatentGaussian::new(mean, cov)
}

/// `KL(q ‖ p)` between two Gaussians of the same dimension.
pub fn kl_gaussians(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Dimension(format!("KL between dimensions {} and {}", q.dim(), p.dim())));
    }
    let n = q.dim() as f64;
    let fp = cholesky_psd(&p.cov, 0.0)?;
    let fq = cholesky_psd(&q.cov, 0.0)?;
    let trace = fp.solve(&q.cov).trace();
    let d = &p.mean - &q.mean;
    let maha = d.dot(&fp.solve_vec(&d));
    let kl = 0.5 * (trace + maha - n + fp.log_det() - fq.log_det());
    Ok(kl.max(0.0))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_diagonal_is_outputscale() {
        let kp = KernelParams::new(3.0, 2.5).unwrap();
        let t = [1.0, 2.0, 7.5];
        let k = rbf_kernel(&t, &t, &kp);
        for i in 0..3 {
            assert_eq!(k[(i, i)], 2.5);
        }
        assert_eq!(k, k.transpose());
        assert!(kp.eval(0.0, 1e3) < 1e-300);
    }

    #[test]
    fn identity_factors_to_identity() {
        let f = cholesky_psd(&DMatrix::identity(4, 4), 0.0).unwrap();
        assert_eq!(f.l(), DMatrix::identity(4, 4));
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn rank_deficient_needs_jitter() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let f = cholesky_psd(&a, 1e-8).unwrap();
        assert!(f.jitter >= 1e-8);
        let l = f.l();
        let mut want = a.clone();
        for i in 0..3 {
            want[(i, i)] += f.jitter;
        }
        assert!((&l * l.transpose() - want).amax() < 1e-10);
    }

    #[test]
    fn indefinite_matrix_fails_after_escalation() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_psd(&a, 1e-6), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn kl_of_unit_shift() {
        let q = LatentGaussian::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1)).unwrap();
        let p = LatentGaussian::new(DVector::from_element(1, 1.0), DMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(kl_gaussians(&q, &p).unwrap(), 0.5, max_relative = 1e-14);
        assert_eq!(kl_gaussians(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn bivariate_conditioning() {
        // ρ = 0.6, σa = 2, σb = 1: mean_a|b = μa + ρ σa/σb (b - μb)
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.2, 1.2, 1.0]);
        let joint = LatentGaussian::new(DVector::from_vec(vec![1.0, -1.0]), cov).unwrap();
        let c = condition(&joint, &DVector::from_element(1, 0.5)).unwrap();
        assert_relative_eq!(c.mean[0], 1.0 + 0.6 * 2.0 * 1.5, max_relative = 1e-14);
        assert_relative_eq!(c.cov[(0, 0)], 4.0 * (1.0 - 0.36), max_relative = 1e-14);
    }

    #[test]
    fn independent_blocks_leave_marginal() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 5.0]);
        let joint = LatentGaussian::new(DVector::from_vec(vec![0.1, 0.2, 0.3]), cov).unwrap();
        let c = condition(&joint, &DVector::from_element(1, 9.0)).unwrap();
        let m = joint.marginal(&[0, 1]);
        assert_eq!(c.mean, m.mean);
        assert_eq!(c.cov, m.cov);
    }

    #[test]
    fn conditioning_on_own_mean_keeps_mean() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.5, 0.3, 1.0, 0.2, 0.5, 0.2, 1.5]);
        let joint = LatentGaussian::new(DVector::from_vec(vec![0.1, 0.2, 0.3]), cov).unwrap();
        let c = condition(&joint, &DVector::from_element(1, 0.3)).unwrap();
        assert_relative_eq!(c.mean[0], 0.1, max_relative = 1e-14);
        assert_relative_eq!(c.mean[1], 0.2, max_relative = 1e-14);
    }
}
