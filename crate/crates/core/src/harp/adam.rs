use super::network::{Gradients, MlpParams};
use super::train::TrainConfig;
use crate::error::{HarpError, Result};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(p: &MlpParams) -> Self {
        Self {
            m: Gradients::zeros_like(p),
            v: Gradients::zeros_like(p),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `p` in place.
pub fn adam_step(
    state: &mut AdamState,
    p: &mut MlpParams,
    grads: &Gradients,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.layers.len() != p.layers.len() || state.m.layers.len() != p.layers.len() {
        return Err(HarpError::invalid("gradient and parameter layouts differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    for (((layer, g), m), v) in p
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m.layers)
        .zip(&mut state.v.layers)
    {
        if layer.weights.dim() != g.weights.dim() || layer.bias.len() != g.bias.len() {
            return Err(HarpError::invalid("gradient and parameter shapes differ"));
        }
        let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        ndarray::Zip::from(&mut layer.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(|w, &g, m, v| update(w, g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|w, &g, m, v| update(w, g, m, v));
    }
    Ok(())
}
