//! Adam optimizer over a flat parameter vector.

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self::with_betas(n_params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// One descent step on `params` given the gradient of the loss.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.1);
        let mut x = vec![1.0, -1.0];
        adam.step(&mut x, &[3.0, -0.5]);
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = Adam::new(2, 0.1);
        let mut x = vec![3.0, -2.0];
        for _ in 0..500 {
            let g = [2.0 * (x[0] - 1.0), 4.0 * (x[1] + 0.5)];
            adam.step(&mut x, &g);
        }
        assert!((x[0] - 1.0).abs() < 1e-3);
        assert!((x[1] + 0.5).abs() < 1e-3);
    }
}
