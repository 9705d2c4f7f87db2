//! Adam optimizer over flat parameter blocks.

use super::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(block_sizes: &[usize], lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: block_sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
            v: block_sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameter blocks (same order as construction).
    pub fn step(&mut self, params: &mut [&mut Vec<T>], grads: &[Vec<T>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - self.beta1.powf(t);
        let bias2 = 1.0 - self.beta2.powf(t);
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let lr_t = T::from_f64(self.lr * bias2.sqrt() / bias1);
        let eps = T::from_f64(self.eps * bias2.sqrt());
        for ((block, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(block.len(), grad.len());
            for i in 0..block.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_m_b1 * g;
                v[i] = b2 * v[i] + one_m_b2 * g * g;
                // lr_t/eps prescaling is algebraically the standard
                // m_hat / (sqrt(v_hat) + eps) update
                block[i] = block[i] - lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}
