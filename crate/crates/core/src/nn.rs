//! Parameter containers shared by the attention blocks, target attention
//! and the CTR head.
//!
//! Every container is generic over its leaf type so the same structure can
//! hold concrete [`Tensor2`] weights, graph handles ([`Var`]), gradients or
//! optimizer moments. Leaves are visited in declaration order, which is
//! also the on-disk checkpoint order.

use crate::diff::{Graph, Tensor2, Var};
use crate::error::Result;

#[doc(hidden)]
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

macro_rules! param_tree {
    ($name:ident { leaves: [$($leaf:ident),*], nested: [$($sub:ident),*] }) => {
        impl<T> $name<T> {
            pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> $name<U> {
                $name { $($leaf: f(&self.$leaf),)* $($sub: self.$sub.map(f),)* }
            }

            pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
                $(f($crate::nn::join(prefix, stringify!($leaf)), &self.$leaf);)*
                $(self.$sub.visit(&$crate::nn::join(prefix, stringify!($sub)), f);)*
            }

            pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
                $(f($crate::nn::join(prefix, stringify!($leaf)), &mut self.$leaf);)*
                $(self.$sub.visit_mut(&$crate::nn::join(prefix, stringify!($sub)), f);)*
            }
        }
    };
}

pub(crate) use param_tree;

/// `x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub w: T,
    pub b: T,
}
param_tree!(Linear { leaves: [w, b], nested: [] });

impl Linear<Tensor2> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Tensor2::zeros(input, output), b: Tensor2::zeros(1, output) }
    }
}

impl Linear<Var> {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.linear(x, self.w, self.b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<T> {
    pub gain: T,
    pub bias: T,
}
param_tree!(LayerNormParams { leaves: [gain, bias], nested: [] });

impl LayerNormParams<Tensor2> {
    pub fn identity(dim: usize) -> Self {
        Self { gain: Tensor2::filled(1, dim, 1.0), bias: Tensor2::zeros(1, dim) }
    }
}

impl LayerNormParams<Var> {
    pub fn apply(&self, g: &mut Graph, x: Var, eps: f64) -> Result<Var> {
        g.layer_norm(x, self.gain, self.bias, eps)
    }
}

/// Two-layer perceptron with a ReLU in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}
param_tree!(Mlp { leaves: [], nested: [hidden, out] });

impl Mlp<Var> {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.hidden.apply(g, x)?;
        let h = g.relu(h);
        self.out.apply(g, h)
    }
}

/// Single- or multi-head self-attention projections.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub out: Linear<T>,
}
param_tree!(AttentionParams { leaves: [wq, wk, wv], nested: [out] });

/// One pre-norm transformer block: attention then MLP, each with residual.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub ln_attn: LayerNormParams<T>,
    pub attn: AttentionParams<T>,
    pub ln_mlp: LayerNormParams<T>,
    pub mlp: Mlp<T>,
}
param_tree!(BlockParams { leaves: [], nested: [ln_attn, attn, ln_mlp, mlp] });

impl BlockParams<Tensor2> {
    /// Block whose residual branches are identically zero.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            ln_attn: LayerNormParams::identity(dim),
            attn: AttentionParams {
                wq: Tensor2::zeros(dim, dim),
                wk: Tensor2::zeros(dim, dim),
                wv: Tensor2::zeros(dim, dim),
                out: Linear::zeros(dim, dim),
            },
            ln_mlp: LayerNormParams::identity(dim),
            mlp: Mlp { hidden: Linear::zeros(dim, hidden), out: Linear::zeros(hidden, dim) },
        }
    }

    /// Weights from `draw(rows, cols)`, biases zero, layer norms identity,
    /// and the two residual output projections zero.
    pub fn init(dim: usize, hidden: usize, draw: &mut dyn FnMut(usize, usize) -> Tensor2) -> Self {
        Self {
            ln_attn: LayerNormParams::identity(dim),
            attn: AttentionParams {
                wq: draw(dim, dim),
                wk: draw(dim, dim),
                wv: draw(dim, dim),
                out: Linear::zeros(dim, dim),
            },
            ln_mlp: LayerNormParams::identity(dim),
            mlp: Mlp {
                hidden: Linear { w: draw(dim, hidden), b: Tensor2::zeros(1, hidden) },
                out: Linear::zeros(hidden, dim),
            },
        }
    }
}
