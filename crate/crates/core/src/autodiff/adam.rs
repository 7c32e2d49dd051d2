use super::matrix::Matrix;
use super::params::ParamStore;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter that received a gradient
    /// since the last step, then clears all gradients. Parameters outside
    /// the differentiated graph keep their value and moments.
    pub fn step(&mut self, store: &mut ParamStore) {
        while self.first.len() < store.len() {
            let (r, c) = store.get(super::ParamId(self.first.len())).value.shape();
            self.first.push(Matrix::zeros(r, c));
            self.second.push(Matrix::zeros(r, c));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = self.lr * self.weight_decay;

        for id in store.ids().collect::<Vec<_>>() {
            let p = store.get_mut(id);
            if !p.trainable || !p.touched {
                continue;
            }
            let m = self.first[id.index()].data_mut();
            let v = self.second[id.index()].data_mut();
            let theta = p.value.data_mut();
            let g = p.grad.data();
            for i in 0..theta.len() {
                theta[i] -= decay * theta[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        store.zero_grads();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(1, 1, 0.5), true);
        store.get_mut(id).grad = Matrix::filled(1, 1, 1.0);
        store.get_mut(id).touched = true;
        let mut adam = AdamState::new(0.01, 0.0);
        adam.step(&mut store);
        let delta = store.value(id).scalar() - 0.5;
        assert!((delta + 0.01).abs() < 1e-9, "delta {delta}");
        assert_eq!(store.get(id).grad.scalar(), 0.0);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::from_rows(&[vec![1.5, -2.0]]).unwrap(), true);
        let mut adam = AdamState::new(0.01, 0.0);
        for _ in 0..5 {
            store.get_mut(id).touched = true;
            adam.step(&mut store);
        }
        assert_eq!(store.value(id).data(), &[1.5, -2.0]);
    }

    #[test]
    fn unreached_parameters_are_not_decayed() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(1, 2, 4.0), true);
        AdamState::new(0.1, 0.5).step(&mut store);
        assert_eq!(store.value(id).data(), &[4.0, 4.0]);
    }

    #[test]
    fn twin_parameters_stay_identical() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::filled(2, 2, 0.3), true);
        let b = store.add("b", Matrix::filled(2, 2, 0.3), true);
        let mut adam = AdamState::new(0.05, 5e-4);
        for k in 0..50 {
            let g = Matrix::filled(2, 2, (k as f64 * 0.37).sin());
            store.get_mut(a).grad = g.clone();
            store.get_mut(b).grad = g;
            store.get_mut(a).touched = true;
            store.get_mut(b).touched = true;
            adam.step(&mut store);
        }
        assert_eq!(store.value(a), store.value(b));
    }

    #[test]
    fn frozen_parameters_are_skipped() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::identity(3), false);
        store.get_mut(id).grad = Matrix::filled(3, 3, 1.0);
        store.get_mut(id).touched = true;
        AdamState::new(0.1, 0.1).step(&mut store);
        assert_eq!(store.value(id), &Matrix::identity(3));
    }
}
