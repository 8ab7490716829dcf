use crate::params::{ParamGrads, ParamStore};
use crate::scalar::Scalar;

/// Adam with decoupled weight decay.
#[derive(Clone, Copy, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            ..Self::default()
        }
    }

    /// One update of every parameter. Parameters without a gradient are
    /// treated as having a zero gradient (they still decay).
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>, grads: &ParamGrads<T>) {
        store.step += 1;
        let t = store.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let decay = T::of(1.0 - self.lr * self.weight_decay);
        let lr = T::of(self.lr);
        let (bc1, bc2) = (T::of(bc1), T::of(bc2));
        let eps = T::of(self.eps);
        for id in store.ids().collect::<Vec<_>>() {
            let g = grads.get(id).cloned();
            let i = id.index();
            let n = store.get(id).data().len();
            for j in 0..n {
                let gj = g.as_ref().map_or(T::zero(), |g| g.data()[j]);
                let m = &mut store.first_moments[i].data_mut()[j];
                *m = b1 * *m + one_b1 * gj;
                let m_hat = *m / bc1;
                let v = &mut store.second_moments[i].data_mut()[j];
                *v = b2 * *v + one_b2 * gj * gj;
                let v_hat = *v / bc2;
                let p = &mut store.get_mut(id).data_mut()[j];
                *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
