use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{FlatGradient, ParameterSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adamw,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::Adamw),
            _ => Err(Error::InvalidArgument(format!(
                "unknown optimizer '{s}' (expected sgd, adam or adamw)"
            ))),
        }
    }
}

pub const DEFAULT_BETAS: (f64, f64) = (0.9, 0.999);
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;

/// First-order optimizer with its moment state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    betas: (f64, f64),
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            betas: DEFAULT_BETAS,
            eps: DEFAULT_EPS,
            weight_decay,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update with learning rate `lr`. Adam ignores `weight_decay`; AdamW
    /// shrinks parameters by `lr · weight_decay` before the moment update.
    pub fn step(&mut self, params: &mut ParameterSet, grad: &FlatGradient, lr: f64) -> Result<()> {
        let count = params.total_count();
        if grad.len() != count {
            return Err(Error::InvalidArgument(format!(
                "gradient has {} entries, parameters {count}",
                grad.len()
            )));
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.values_mut().zip(grad.iter()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam | OptimizerKind::Adamw => {
                if self.m.is_empty() {
                    self.m = vec![0.0; count];
                    self.v = vec![0.0; count];
                }
                let (b1, b2) = self.betas;
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                let decay = match self.kind {
                    OptimizerKind::Adamw => 1.0 - lr * self.weight_decay,
                    _ => 1.0,
                };
                for (((p, &g), m), v) in params
                    .values_mut()
                    .zip(grad.iter())
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p *= decay;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}
