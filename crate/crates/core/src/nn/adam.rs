use serde::{Deserialize, Serialize};

/// Adam with bias correction. Moment buffers are addressed by slot so a
/// single optimizer can drive many parameter tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Starts a new optimization step; call once before the per-slot updates.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) {
        assert!(self.t > 0, "begin_step must precede update");
        assert_eq!(param.len(), grad.len());
        if self.m.len() <= slot {
            self.m.resize(slot + 1, Vec::new());
            self.v.resize(slot + 1, Vec::new());
        }
        if self.m[slot].is_empty() {
            self.m[slot] = vec![0.0; param.len()];
            self.v[slot] = vec![0.0; param.len()];
        }
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            param[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
