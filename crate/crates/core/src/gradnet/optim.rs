use std::fmt;
use std::str::FromStr;

use ndarray::Zip;

use super::network::{NetworkParams, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct AdamMoments {
    first: ParamGrads,
    second: ParamGrads,
    steps: i32,
}

/// Optimizer plus its per-parameter state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    moments: Option<AdamMoments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &NetworkParams) -> Self {
        let moments = (kind == OptimizerKind::Adam).then(|| AdamMoments {
            first: ParamGrads::zeros_like(params),
            second: ParamGrads::zeros_like(params),
            steps: 0,
        });
        Optimizer { kind, moments }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Moves `params` along `+grads` (ascend) or `-grads` (descend).
    ///
    /// Non-finite gradients are rejected before anything is touched, so a
    /// failed step leaves both parameters and optimizer state unchanged.
    pub fn step(
        &mut self,
        params: &mut NetworkParams,
        grads: &ParamGrads,
        lr: f64,
        direction: Direction,
    ) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr}")));
        }
        if grads.layers.len() != params.layers().len()
            || grads
                .layers
                .iter()
                .zip(params.layers())
                .any(|(g, l)| g.weight.dim() != l.weight.dim() || g.bias.dim() != l.bias.dim())
        {
            return Err(Error::Layout(
                "gradient shape does not match parameters".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let signed_lr = direction.sign() * lr;
        match &mut self.moments {
            None => {
                for (layer, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
                    layer.weight.scaled_add(signed_lr, &g.weight);
                    layer.bias.scaled_add(signed_lr, &g.bias);
                }
            }
            Some(m) => {
                m.steps += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(m.steps);
                let c2 = 1.0 - ADAM_BETA2.powi(m.steps);
                let update = |p: &mut f64, g: &f64, m1: &mut f64, m2: &mut f64| {
                    *m1 = ADAM_BETA1 * *m1 + (1.0 - ADAM_BETA1) * g;
                    *m2 = ADAM_BETA2 * *m2 + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m1 / c1;
                    let v_hat = *m2 / c2;
                    *p += signed_lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                };
                let layers = params.layers_mut().iter_mut();
                for (((layer, g), m1), m2) in layers
                    .zip(&grads.layers)
                    .zip(&mut m.first.layers)
                    .zip(&mut m.second.layers)
                {
                    Zip::from(&mut layer.weight)
                        .and(&g.weight)
                        .and(&mut m1.weight)
                        .and(&mut m2.weight)
                        .for_each(update);
                    Zip::from(&mut layer.bias)
                        .and(&g.bias)
                        .and(&mut m1.bias)
                        .and(&mut m2.bias)
                        .for_each(update);
                }
            }
        }
        Ok(())
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn polyak_update(target: &mut NetworkParams, online: &NetworkParams, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    if !target.same_shape(online) {
        return Err(Error::Layout(
            "target and online networks differ in shape".into(),
        ));
    }
    if tau == 1.0 {
        *target = online.clone();
        return Ok(());
    }
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers()) {
        Zip::from(&mut t.weight)
            .and(&o.weight)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}
