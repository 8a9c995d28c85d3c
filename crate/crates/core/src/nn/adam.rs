//! Adam optimizer over the flat parameter groups of a [`ParamNet`].

use super::ParamNet;

/// First and second moment estimates, one vector per parameter group,
/// shaped once from the network the state was created for.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Standard coefficients: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new<N: ParamNet>(net: &N, lr: f64) -> Self {
        assert!(lr > 0.0, "adam: learning rate must be positive");
        let shapes: Vec<usize> = net.params().iter().map(|s| s.len()).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Applies one bias-corrected Adam update. `grads` must be ordered and
    /// shaped exactly like `net.params()`.
    pub fn step<N: ParamNet>(&mut self, net: &mut N, grads: &[&[f64]]) {
        let mut params = net.params_mut();
        assert_eq!(params.len(), grads.len(), "adam: gradient group mismatch");
        assert_eq!(params.len(), self.m.len(), "adam: state built for another net");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len(), "adam: gradient length mismatch");
            for n in 0..p.len() {
                m[n] = self.beta1 * m[n] + (1.0 - self.beta1) * g[n];
                v[n] = self.beta2 * v[n] + (1.0 - self.beta2) * g[n] * g[n];
                let m_hat = m[n] / bc1;
                let v_hat = v[n] / bc2;
                p[n] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
