use super::model::ModelParams;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> i32 {
        self.t
    }
}

/// One bias-corrected Adam update over every parameter block.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) -> Result<()> {
    for (name, g) in grads.blocks() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("gradient of {name}")));
        }
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t);
    let c2 = 1.0 - BETA2.powi(state.t);
    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(state.m.blocks_mut())
        .zip(state.v.blocks_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in blocks {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}

/// Scalar Adam trace used by tests as an independent reference.
#[cfg(test)]
pub(crate) fn scalar_adam(theta: f64, grads: &[f64], lr: f64) -> f64 {
    let (mut m, mut v, mut th) = (0.0, 0.0, theta);
    for (t, g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        m = BETA1 * m + (1.0 - BETA1) * g;
        v = BETA2 * v + (1.0 - BETA2) * g * g;
        th -= lr * (m / (1.0 - BETA1.powi(t))) / ((v / (1.0 - BETA2.powi(t))).sqrt() + EPS);
    }
    th
}
