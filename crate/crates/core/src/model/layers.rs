//! Layer builders: register parameters once, bind them onto a tape per
//! forward pass. Weight-normalized layers store `v`/`g` and recompute the
//! effective weight in-graph, so gradients reach both factors.

use ndarray::Axis;

use super::params::{ParamInit, ParamStore};
use crate::autograd::{Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Conv1dSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight_norm: bool,
}

impl Conv1dSpec {
    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        let std = 1.0 / ((self.in_ch * self.kernel) as f64).sqrt();
        let w = init.randn::<T>(&[self.out_ch, self.in_ch, self.kernel], std);
        register_weight(store, &self.name, w, self.weight_norm);
        store.insert(&format!("{}/b", self.name), init.zeros::<T>(&[self.out_ch]));
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> BoundConv1d {
        BoundConv1d {
            w: bind_weight(tape, store, &self.name, self.weight_norm),
            b: tape.param(&format!("{}/b", self.name), store.get(&format!("{}/b", self.name)).clone()),
            stride: self.stride,
            pad: self.pad,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundConv1d {
    pub w: Var,
    pub b: Var,
    pub stride: usize,
    pub pad: usize,
}

impl BoundConv1d {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Var {
        tape.conv1d(x, self.w, self.b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct ConvT1dSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight_norm: bool,
}

impl ConvT1dSpec {
    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        let std = 1.0 / ((self.in_ch * self.kernel) as f64).sqrt();
        let w = init.randn::<T>(&[self.in_ch, self.out_ch, self.kernel], std);
        register_weight(store, &self.name, w, self.weight_norm);
        store.insert(&format!("{}/b", self.name), init.zeros::<T>(&[self.out_ch]));
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> BoundConvT1d {
        BoundConvT1d {
            w: bind_weight(tape, store, &self.name, self.weight_norm),
            b: tape.param(&format!("{}/b", self.name), store.get(&format!("{}/b", self.name)).clone()),
            stride: self.stride,
            pad: self.pad,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundConvT1d {
    pub w: Var,
    pub b: Var,
    pub stride: usize,
    pub pad: usize,
}

impl BoundConvT1d {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Var {
        tape.conv_transpose1d(x, self.w, self.b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2dSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2dSpec {
    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        let fan_in = self.in_ch * self.kernel.0 * self.kernel.1;
        let std = 1.0 / (fan_in as f64).sqrt();
        let w =
            init.randn::<T>(&[self.out_ch, self.in_ch, self.kernel.0, self.kernel.1], std);
        store.insert(&format!("{}/w", self.name), w);
        store.insert(&format!("{}/b", self.name), init.zeros::<T>(&[self.out_ch]));
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> BoundConv2d {
        BoundConv2d {
            w: tape.param(&format!("{}/w", self.name), store.get(&format!("{}/w", self.name)).clone()),
            b: tape.param(&format!("{}/b", self.name), store.get(&format!("{}/b", self.name)).clone()),
            stride: self.stride,
            pad: self.pad,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundConv2d {
    pub w: Var,
    pub b: Var,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl BoundConv2d {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Var {
        tape.conv2d(x, self.w, self.b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingSpec {
    pub name: String,
    pub dim: usize,
    pub vocab: usize,
}

impl EmbeddingSpec {
    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        store.insert(&self.name, init.randn::<T>(&[self.dim, self.vocab], 0.1));
    }

    /// Embed a sequence of ids as columns.
    pub fn lookup<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        ids: &[usize],
    ) -> Var {
        let table = tape.param(&self.name, store.get(&self.name).clone());
        tape.gather_cols(table, ids)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormSpec {
    pub name: String,
    pub dim: usize,
}

impl LayerNormSpec {
    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        let mut gain = init.zeros::<T>(&[self.dim, 1]);
        gain.index_axis_mut(Axis(1), 0).fill(T::one());
        store.insert(&format!("{}/gain", self.name), gain);
        store.insert(&format!("{}/bias", self.name), init.zeros::<T>(&[self.dim, 1]));
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let gain =
            tape.param(&format!("{}/gain", self.name), store.get(&format!("{}/gain", self.name)).clone());
        let bias =
            tape.param(&format!("{}/bias", self.name), store.get(&format!("{}/bias", self.name)).clone());
        tape.layer_norm(x, gain, bias, T::from_config(1e-5))
    }
}

fn register_weight<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    w: ndarray::ArrayD<T>,
    weight_norm: bool,
) {
    if weight_norm {
        // g starts at ||v|| per output lane, so the initial effective weight
        // equals v.
        let out_ch = w.shape()[0];
        let mut g = ndarray::Array1::<T>::zeros(out_ch);
        for (i, lane) in w.outer_iter().enumerate() {
            g[i] = lane.iter().map(|&x| x * x).sum::<T>().sqrt();
        }
        store.insert(&format!("{name}/v"), w);
        store.insert(&format!("{name}/g"), g.into_dyn());
    } else {
        store.insert(&format!("{name}/w"), w);
    }
}

fn bind_weight<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    name: &str,
    weight_norm: bool,
) -> Var {
    if weight_norm {
        let v = tape.param(&format!("{name}/v"), store.get(&format!("{name}/v")).clone());
        let g = tape.param(&format!("{name}/g"), store.get(&format!("{name}/g")).clone());
        tape.weight_norm(v, g)
    } else {
        tape.param(&format!("{name}/w"), store.get(&format!("{name}/w")).clone())
    }
}
