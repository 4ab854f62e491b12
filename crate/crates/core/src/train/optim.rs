use crate::autodiff::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer {other:?} (adam | sgd)")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

/// Adam (β = 0.9, 0.999, ε = 1e-8) or plain gradient descent, constant rate.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: ParamSet,
    v: ParamSet,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, like: &ParamSet) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        match self.kind {
            OptimizerKind::Sgd => params.axpy(-self.lr, grads),
            OptimizerKind::Adam => {
                self.step += 1;
                let bc1 = 1.0 - BETA1.powi(self.step);
                let bc2 = 1.0 - BETA2.powi(self.step);
                let lr = self.lr;
                for (((_, p), (_, g)), ((_, m), (_, v))) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for (((p, &g), m), v) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn first_adam_step_moves_by_the_learning_rate() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::row(vec![1.0, -1.0]));
        let mut g = ParamSet::new();
        g.insert("x", Tensor::row(vec![0.3, -5.0]));
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, &p);
        opt.step(&mut p, &g);
        let x = p.get("x").unwrap().data();
        assert!((x[0] - 0.99).abs() < 1e-9 && (x[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn sgd_is_a_plain_step() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(1.0));
        let mut g = ParamSet::new();
        g.insert("x", Tensor::scalar(2.0));
        Optimizer::new(OptimizerKind::Sgd, 0.1, &p).step(&mut p, &g);
        assert!((p.get("x").unwrap().data()[0] - 0.8).abs() < 1e-15);
    }
}
