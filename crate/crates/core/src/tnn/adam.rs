use nalgebra::DMatrix;

/// Adam moments for a list of parameter matrices.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<DMatrix<f64>>,
    second: Vec<DMatrix<f64>>,
}

impl AdamState {
    pub fn new<'a>(
        params: impl IntoIterator<Item = &'a DMatrix<f64>>,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Self {
        let first: Vec<_> = params
            .into_iter()
            .map(|p| DMatrix::zeros(p.nrows(), p.ncols()))
            .collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `params` and `grads` must come in the
    /// order used at construction.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut DMatrix<f64>>,
        grads: impl IntoIterator<Item = &'a DMatrix<f64>>,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            debug_assert_eq!(p.shape(), g.shape());
            for idx in 0..p.len() {
                let gi = g[idx];
                m[idx] = b1 * m[idx] + (1.0 - b1) * gi;
                v[idx] = b2 * v[idx] + (1.0 - b2) * gi * gi;
                let mhat = m[idx] / c1;
                let vhat = v[idx] / c2;
                p[idx] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
