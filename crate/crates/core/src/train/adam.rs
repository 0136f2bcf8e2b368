use super::config::TrainConfig;
use crate::autodiff::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// First and second moment estimates with the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
///
/// Nothing is modified if any gradient is missing or non-finite.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    for (name, _) in params.iter() {
        let g = grads.get(name)?;
        if let Some(pos) = g.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(format!(
                "{name}[{pos}] = {}",
                g.data()[pos]
            )));
        }
    }
    state.step += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name)?.data();
        let m = state.m.get_mut(name)?.data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        let v = state.v.get_mut(name)?.data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
        let (m, v) = (state.m.get(name)?.data(), state.v.get(name)?.data());
        for ((w, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            *w -= config.lr * (mi / c1) / ((vi / c2).sqrt() + config.eps);
        }
    }
    Ok(())
}
