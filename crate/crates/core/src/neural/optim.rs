use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::{Gradients, ModelGraph};

const EPS: f64 = 1e-8;
const RMS_DECAY: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[serde(rename = "rmsprop")]
    RmsProp,
    #[serde(rename = "adagrad")]
    AdaGrad,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::RmsProp,
        OptimizerKind::AdaGrad,
        OptimizerKind::Adam,
    ];
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::AdaGrad => "adagrad",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adagrad" => Ok(OptimizerKind::AdaGrad),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::config(format!("unknown optimizer {s:?}"))),
        }
    }
}

/// Per-parameter optimizer slots.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    fn new(kind: OptimizerKind, model: &ModelGraph) -> Self {
        let zeros = || {
            model
                .params()
                .iter()
                .map(|p| vec![0.0; p.data.len()])
                .collect()
        };
        let first = if kind == OptimizerKind::Adam {
            zeros()
        } else {
            Vec::new()
        };
        let second = if kind == OptimizerKind::Sgd {
            Vec::new()
        } else {
            zeros()
        };
        OptimizerState {
            kind,
            step: 0,
            first,
            second,
        }
    }
}

/// Applies one update; state is created (or reset on a kind change) on demand.
pub fn optimizer_step(
    model: &mut ModelGraph,
    grads: &Gradients,
    kind: OptimizerKind,
    lr: f64,
) -> Result<()> {
    if grads.tensors.len() != model.params().len()
        || grads
            .tensors
            .iter()
            .zip(model.params())
            .any(|(g, p)| g.len() != p.data.len())
    {
        return Err(Error::config(
            "gradient shapes do not match the model parameters",
        ));
    }
    let mut state = match model.optimizer.take() {
        Some(s) if s.kind == kind => s,
        _ => OptimizerState::new(kind, model),
    };
    state.step += 1;
    let t = state.step as i32;
    let (bc1, bc2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
    for (i, (p, g)) in model
        .params_mut()
        .iter_mut()
        .zip(&grads.tensors)
        .enumerate()
    {
        let theta = &mut p.data;
        match kind {
            OptimizerKind::Sgd => {
                for (th, gv) in theta.iter_mut().zip(g) {
                    *th -= lr * gv;
                }
            }
            OptimizerKind::AdaGrad => {
                for ((th, gv), acc) in theta.iter_mut().zip(g).zip(state.second[i].iter_mut()) {
                    *acc += gv * gv;
                    *th -= lr * gv / (acc.sqrt() + EPS);
                }
            }
            OptimizerKind::RmsProp => {
                for ((th, gv), acc) in theta.iter_mut().zip(g).zip(state.second[i].iter_mut()) {
                    *acc = RMS_DECAY * *acc + (1.0 - RMS_DECAY) * gv * gv;
                    *th -= lr * gv / (acc.sqrt() + EPS);
                }
            }
            OptimizerKind::Adam => {
                let (m, v) = (&mut state.first[i], &mut state.second[i]);
                for (((th, gv), mv), vv) in
                    theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
                {
                    *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                    *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                    *th -= lr * (*mv / bc1) / ((*vv / bc2).sqrt() + EPS);
                }
            }
        }
    }
    model.optimizer = Some(state);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::{InputSpec, LayerSpec};

    fn scalar_model(theta: f64) -> ModelGraph {
        let mut m = ModelGraph::new(
            InputSpec::Dense { width: 1 },
            vec![LayerSpec::SoftmaxOutput { classes: 1 }],
        )
        .unwrap();
        m.params_mut()[0].data[0] = theta;
        m
    }

    fn grads(g: f64) -> Gradients {
        Gradients {
            tensors: vec![vec![g], vec![0.0]],
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut m = scalar_model(1.0);
        optimizer_step(&mut m, &grads(2.0), OptimizerKind::Sgd, 0.1).unwrap();
        assert!((m.params()[0].data[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for g in [1e-3, 1.0, 250.0, -7.0] {
            let mut m = scalar_model(0.0);
            optimizer_step(&mut m, &grads(g), OptimizerKind::Adam, 0.01).unwrap();
            let step = m.params()[0].data[0].abs();
            assert!(
                (step - 0.01).abs() <= 0.01 * 1e-8 / g.abs() + 1e-15,
                "g={g} step={step}"
            );
        }
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        for kind in OptimizerKind::ALL {
            let mut m = scalar_model(0.75);
            for _ in 0..3 {
                optimizer_step(&mut m, &grads(0.0), kind, 0.5).unwrap();
            }
            assert_eq!(m.params()[0].data[0], 0.75, "{kind}");
        }
    }

    #[test]
    fn adagrad_and_rmsprop_first_steps() {
        let mut m = scalar_model(0.0);
        optimizer_step(&mut m, &grads(2.0), OptimizerKind::AdaGrad, 0.1).unwrap();
        assert!((m.params()[0].data[0] + 0.1 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
        let mut m = scalar_model(0.0);
        optimizer_step(&mut m, &grads(2.0), OptimizerKind::RmsProp, 0.1).unwrap();
        let expected = -0.1 * 2.0 / ((0.1f64 * 4.0).sqrt() + 1e-8);
        assert!((m.params()[0].data[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut m = scalar_model(0.0);
        let bad = Gradients {
            tensors: vec![vec![1.0]],
        };
        assert!(optimizer_step(&mut m, &bad, OptimizerKind::Sgd, 0.1).is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            "RMSProp".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::RmsProp
        );
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }
}
