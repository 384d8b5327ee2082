use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::diff::{Graph, Tensor2, Var};
use crate::error::{Error, Result};
use crate::interest::TargetAttentionParams;
use crate::lsh::ProjectionMatrix;
use crate::model::config::ModelConfig;
use crate::nn::{BlockParams, Linear, Mlp};

/// All learnable tensors of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    /// Behavior embedding `d_b -> d`.
    pub input: Linear<T>,
    /// `T` blocks; consecutive pairs form one chunk / shifted-chunk pair.
    pub blocks: Vec<BlockParams<T>>,
    pub target_attention: TargetAttentionParams<T>,
    /// `[x^i ‖ x^t ‖ x^u] -> hidden -> 1` logit.
    pub head: Mlp<T>,
}

impl<T> Weights<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Weights<U> {
        Weights {
            input: self.input.map(f),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
            target_attention: self.target_attention.map(f),
            head: self.head.map(f),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a T)) {
        self.input.visit("input", f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("blocks.{i}"), f);
        }
        self.target_attention.visit("target_attention", f);
        self.head.visit("head", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut T)) {
        self.input.visit_mut("input", f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("blocks.{i}"), f);
        }
        self.target_attention.visit_mut("target_attention", f);
        self.head.visit_mut("head", f);
    }

    /// Leaves in declaration order.
    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(t));
        out
    }

    /// Same tree with the leaves replaced, in visit order, by `leaves`.
    pub fn zip_leaves<U: Clone>(&self, leaves: &[U]) -> Result<Weights<U>> {
        let expected = self.leaves().len();
        if leaves.len() != expected {
            return Err(Error::Contract(format!("expected {expected} leaves, got {}", leaves.len())));
        }
        let mut i = 0;
        Ok(self.map(&mut |_| {
            i += 1;
            leaves[i - 1].clone()
        }))
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |n, _| out.push(n));
        out
    }
}

impl Weights<Tensor2> {
    /// Rebuilds a tree from leaves listed in declaration order.
    pub fn with_leaves(&self, leaves: Vec<Tensor2>) -> Result<Self> {
        let expected = self.leaves().len();
        if leaves.len() != expected {
            return Err(Error::Contract(format!("expected {expected} tensors, got {}", leaves.len())));
        }
        let mut out = self.clone();
        let mut it = leaves.into_iter();
        let mut bad = None;
        out.visit_mut(&mut |name, slot| {
            let next = it.next().expect("length checked");
            if next.shape() != slot.shape() && bad.is_none() {
                bad = Some(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    next.shape(),
                    slot.shape()
                )));
            }
            *slot = next;
        });
        match bad {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(&mut |t| Tensor2::zeros(t.rows(), t.cols()))
    }

    pub fn parameter_count(&self) -> usize {
        self.leaves().iter().map(|t| t.len()).sum()
    }

    /// Places every leaf into `g`.
    pub fn bind(&self, g: &mut Graph) -> Weights<Var> {
        self.map(&mut |t| g.leaf(t.clone()))
    }
}

fn fan_in(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// A complete model: architecture, fixed hash projection and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub projection: ProjectionMatrix,
    pub weights: Weights<Tensor2>,
}

impl ModelParams {
    /// Fresh model. Block weights are drawn from `N(0, init_std^2)`; the
    /// input projection, target attention and head use `N(0, 1/fan_in)`.
    /// Biases are zero, layer norms identity, and the output projection of
    /// every residual branch is zero so each block starts as the identity.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let projection = ProjectionMatrix::sample(config.behavior_dim, config.hash_bits, config.hash_seed)?;
        if !(config.init_std.is_finite() && config.init_std > 0.0) {
            return Err(Error::Config(format!("init_std must be positive, got {}", config.init_std)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sample = |r: usize, c: usize, std: f64| {
            let data = (0..r * c).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); std * z }).collect::<Vec<f64>>();
            Tensor2::new(r, c, data).expect("length matches shape")
        };
        let d = config.dim;
        let input = Linear { w: sample(config.behavior_dim, d, fan_in(config.behavior_dim)), b: Tensor2::zeros(1, d) };
        let blocks = (0..config.blocks)
            .map(|_| BlockParams::init(d, config.mlp_hidden, &mut |r, c| sample(r, c, config.init_std)))
            .collect();
        let target_attention =
            TargetAttentionParams::init(config.target_dim, d, config.target_hidden, &mut |r, c| sample(r, c, fan_in(r)));
        let head_in = d + config.target_dim + config.user_dim;
        let head = Mlp {
            hidden: Linear { w: sample(head_in, config.head_hidden, fan_in(head_in)), b: Tensor2::zeros(1, config.head_hidden) },
            out: Linear { w: sample(config.head_hidden, 1, fan_in(config.head_hidden)), b: Tensor2::zeros(1, 1) },
        };
        Ok(Self { config, projection, weights: Weights { input, blocks, target_attention, head } })
    }

    /// Same architecture and projection with every weight redrawn from
    /// `N(0, std^2)` under `seed`, biases and norms included. Used for
    /// gradient checks away from the structured initialization.
    pub fn randomized(&self, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("std is finite");
        let weights = self.weights.map(&mut |t| {
            Tensor2::from_fn(t.rows(), t.cols(), |_, _| normal.sample(&mut rng))
        });
        Self { weights, ..self.clone() }
    }
}
