//! Adam optimizer with bias correction, one moment pair per parameter.

use super::{Mlp, MlpGrads};

/// Adam moments for one [`Mlp`]. Moment tensors mirror the parameter shapes;
/// the step counter strictly increases on every update.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state with the ubiquitous defaults beta1=0.9, beta2=0.999, eps=1e-8.
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        let shapes: Vec<Vec<f64>> = mlp
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: shapes.clone(), v: shapes }
    }

    /// One bias-corrected Adam update. Deterministic; panics on shape mismatch.
    pub fn update(&mut self, params: &mut Mlp, grads: &MlpGrads) {
        assert_eq!(params.layers.len(), grads.layers.len(), "adam: depth mismatch");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut slot = 0;
        for (layer, g) in params.layers.iter_mut().zip(grads.layers.iter()) {
            assert_eq!(layer.weights.len(), g.weights.len(), "adam: weight shape mismatch");
            assert_eq!(layer.bias.len(), g.bias.len(), "adam: bias shape mismatch");
            self.apply(slot, &mut layer.weights, &g.weights, bc1, bc2);
            self.apply(slot + 1, &mut layer.bias, &g.bias, bc1, bc2);
            slot += 2;
        }
    }

    fn apply(&mut self, slot: usize, params: &mut [f64], grads: &[f64], bc1: f64, bc2: f64) {
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    pub(crate) fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub(crate) fn restore(lr: f64, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step, m, v }
    }
}

/// Adam for a single scalar parameter (the SAC temperature).
#[derive(Debug, Clone, Copy)]
pub struct ScalarAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        ScalarAdam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn update(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.step as i32));
        let v_hat = self.v / (1.0 - self.beta2.powi(self.step as i32));
        *param -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}
