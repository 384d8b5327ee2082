use crate::diff::Tensor2;
use crate::model::config::OptimizerKind;
use crate::model::params::Weights;

/// First-order optimizer over a flat list of gradients given in
/// [`Weights::visit`] order.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr)),
        }
    }

    pub fn step(&mut self, weights: &mut Weights<Tensor2>, grads: &[Tensor2]) {
        match self {
            Optimizer::Sgd { lr } => {
                let lr = *lr;
                let mut k = 0;
                weights.visit_mut(&mut |_, p| {
                    for (w, g) in p.data_mut().iter_mut().zip(grads[k].data()) {
                        *w -= lr * g;
                    }
                    k += 1;
                });
            }
            Optimizer::Adam(a) => {
                if a.m.is_empty() {
                    a.m = grads.iter().map(|g| Tensor2::zeros(g.rows(), g.cols())).collect();
                    a.v = a.m.clone();
                }
                a.step += 1;
                let c1 = 1.0 - a.beta1.powi(a.step);
                let c2 = 1.0 - a.beta2.powi(a.step);
                let (b1, b2, lr, eps) = (a.beta1, a.beta2, a.lr, a.eps);
                let mut k = 0;
                let (ms, vs) = (&mut a.m, &mut a.v);
                weights.visit_mut(&mut |_, p| {
                    let g = grads[k].data();
                    let m = ms[k].data_mut();
                    let v = vs[k].data_mut();
                    for (i, w) in p.data_mut().iter_mut().enumerate() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let mhat = m[i] / c1;
                        let vhat = v[i] / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                    k += 1;
                });
            }
        }
    }
}
