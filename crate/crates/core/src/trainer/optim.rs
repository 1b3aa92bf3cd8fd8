use rgbt_tensor::{Gradients, ParamStore, Scalar, Tensor};

/// Polynomial decay `base·(1 − step/total)^power`; zero once `step ≥ total`.
pub fn poly_lr(base: f64, power: f64, step: usize, total: usize) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    base * (1.0 - step as f64 / total as f64).powf(power)
}

/// Stochastic gradient descent with momentum and coupled weight decay:
///
/// ```text
/// v ← momentum·v + g + weight_decay·p
/// p ← p − lr·v
/// ```
///
/// Parameters without a gradient in a step (frozen or unused) are left
/// untouched, including their velocity.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) {
        let (m, wd, lr) = (T::of(self.momentum), T::of(self.weight_decay), T::of(lr));
        let ids: Vec<_> = store.weight_ids().filter(|&id| store.is_trainable(id)).collect();
        for id in ids {
            let Some(g) = grads.param(id) else { continue };
            if self.velocity.len() <= id.index() {
                self.velocity.resize(id.index() + 1, None);
            }
            let p = store.get_mut(id);
            let v = self.velocity[id.index()].get_or_insert_with(|| Tensor::zeros(p.shape()));
            for ((vi, &gi), pi) in v.data_mut().iter_mut().zip(g.data()).zip(p.data_mut().iter_mut()) {
                *vi = m * *vi + gi + wd * *pi;
                *pi = *pi - lr * *vi;
            }
        }
    }
}
