use super::{NnError, ParamBlock};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(block_sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = block_sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { step: 0, m, v }
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, blocks: &mut [&mut ParamBlock], grads: &[Vec<f64>], cfg: &AdamConfig) -> Result<(), NnError> {
        if blocks.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::DimensionMismatch("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((block, g), m), v) in blocks.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..g.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                block.values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
