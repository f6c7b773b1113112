use super::{ParamStore, Real};
use crate::error::{Error, Result};

/// SGD-with-momentum state. One velocity buffer per store entry; buffers
/// of non-trainable entries stay empty.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(store: &ParamStore<T>, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        let velocity = store
            .entries()
            .iter()
            .map(|e| {
                if e.tensor.requires_grad() {
                    vec![T::zero(); e.tensor.numel()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Ok(OptimizerState {
            learning_rate,
            momentum,
            velocity,
        })
    }

    pub fn velocity(&self, index: usize) -> &[T] {
        &self.velocity[index]
    }
}

/// `v ← momentum·v − lr·g; w ← w + v`, then clears every gradient.
/// Every trainable tensor must carry a gradient.
pub fn sgd_step<T: Real>(store: &mut ParamStore<T>, state: &mut OptimizerState<T>) -> Result<()> {
    if state.velocity.len() != store.len() {
        return Err(Error::Contract("optimizer state was built for a different store".into()));
    }
    if let Some(e) = store
        .entries()
        .iter()
        .find(|e| e.tensor.requires_grad() && e.tensor.grad().is_none())
    {
        return Err(Error::Contract(format!("parameter '{}' has no gradient", e.name)));
    }
    let lr = T::of(state.learning_rate);
    let mu = T::of(state.momentum);
    for (e, v) in store.entries_mut().iter_mut().zip(&mut state.velocity) {
        if !e.tensor.requires_grad() {
            continue;
        }
        let g = e.tensor.take_grad().expect("checked above");
        for ((w, vel), gi) in e.tensor.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
            *vel = mu * *vel - lr * gi;
            *w += *vel;
        }
    }
    Ok(())
}

/// Step decay: `lr = base · gamma^(epoch / step_epochs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub base: f64,
    pub gamma: f64,
    pub step_epochs: usize,
}

impl StepDecay {
    pub fn rate(&self, epoch: usize) -> f64 {
        let k = epoch.checked_div(self.step_epochs).unwrap_or(0);
        self.base * self.gamma.powi(k as i32)
    }
}
