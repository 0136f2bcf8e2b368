use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ConvLayer;
use crate::autodiff::{Array, Graph, ParamSet, Var};
use crate::error::Result;

/// Seeded Glorot-uniform initializer that registers parameters as it goes.
pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Array {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-limit..=limit)).collect();
        Array::new(shape, data).expect("glorot shape")
    }

    pub fn dense(&mut self, params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize) -> Result<()> {
        params.insert(format!("{name}.w"), self.glorot(&[fan_in, fan_out], fan_in, fan_out))?;
        params.insert(format!("{name}.b"), Array::zeros(&[fan_out]))
    }

    pub fn conv(&mut self, params: &mut ParamSet, name: &str, l: &ConvLayer) -> Result<()> {
        let area = l.kh * l.kw;
        params.insert(
            format!("{name}.w"),
            self.glorot(&[l.cout, l.cin, l.kh, l.kw], l.cin * area, l.cout * area),
        )?;
        params.insert(format!("{name}.b"), Array::zeros(&[l.cout]))
    }
}

/// `x w + b`, optionally followed by tanh.
pub(crate) fn dense(g: &mut Graph, params: &ParamSet, name: &str, x: Var, tanh: bool) -> Result<Var> {
    let w = g.param(params, &format!("{name}.w"))?;
    let b = g.param(params, &format!("{name}.b"))?;
    let h = g.matmul(x, w)?;
    let h = g.add_bias(h, b, 1)?;
    if tanh {
        g.tanh(h)
    } else {
        Ok(h)
    }
}

pub(crate) fn conv_tanh(g: &mut Graph, params: &ParamSet, name: &str, x: Var) -> Result<Var> {
    let w = g.param(params, &format!("{name}.w"))?;
    let b = g.param(params, &format!("{name}.b"))?;
    let h = g.conv2d(x, w)?;
    let h = g.add_bias(h, b, 1)?;
    g.tanh(h)
}
