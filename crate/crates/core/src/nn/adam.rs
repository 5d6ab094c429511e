use crate::error::{Error, Result};

use super::mlp::MlpParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: MlpParams,
    v: MlpParams,
    step: i32,
}

impl AdamState {
    pub fn new(like: &MlpParams) -> Self {
        let zeros = MlpParams::zeros(&like.widths()).expect("widths of a valid network");
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected ADAM update with coupled L2 weight decay (`g ← g + wd·θ`),
/// applied to weights and biases alike.
pub fn adam_step(
    params: &mut MlpParams,
    state: &mut AdamState,
    grads: &MlpParams,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.widths() != params.widths() {
        return Err(Error::Invalid(
            "gradient shape does not match the network".into(),
        ));
    }
    for (k, g) in grads.layers().iter().enumerate() {
        if let Some(pos) = g.w.iter().chain(g.b.iter()).position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in layer {k} (flat position {pos}); step aborted"
            )));
        }
    }

    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step);
    let bc2 = 1.0 - BETA2.powi(state.step);

    let layers = params.layers_mut();
    let m_layers = state.m.layers_mut();
    let v_layers = state.v.layers_mut();
    for k in 0..layers.len() {
        let g = &grads.layers()[k];
        update(
            layers[k].w.as_mut_slice(),
            m_layers[k].w.as_mut_slice(),
            v_layers[k].w.as_mut_slice(),
            g.w.as_slice(),
            lr,
            weight_decay,
            bc1,
            bc2,
        );
        update(
            layers[k].b.as_mut_slice(),
            m_layers[k].b.as_mut_slice(),
            v_layers[k].b.as_mut_slice(),
            g.b.as_slice(),
            lr,
            weight_decay,
            bc1,
            bc2,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update(
    theta: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    lr: f64,
    wd: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        let gi = g[i] + wd * theta[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}
