use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, Layer, PredictorParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: u64,
}

impl OptimizerState {
    pub fn new(params: &PredictorParams) -> Self {
        let zeros: Vec<Layer> = params.layers().iter().map(Layer::zeros_like).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Nadam update:
///
/// ```text
/// m ← β1·m + (1−β1)·g          v ← β2·v + (1−β2)·g²
/// m̂ = m/(1−β1^t)               v̂ = v/(1−β2^t)
/// θ ← θ − lr·(β1·m̂ + (1−β1)·g/(1−β1^t)) / (√v̂ + ε)
/// ```
///
/// A non-finite gradient leaves parameters and state untouched.
pub fn nadam_step(
    params: &mut PredictorParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &NadamConfig,
) -> Result<()> {
    let shapes_match = grads.layers.len() == params.layers().len()
        && state.m.len() == params.layers().len()
        && params
            .layers()
            .iter()
            .zip(&grads.layers)
            .zip(&state.m)
            .all(|((p, g), m)| {
                p.weights.dim() == g.weights.dim()
                    && p.bias.dim() == g.bias.dim()
                    && p.weights.dim() == m.weights.dim()
            });
    if !shapes_match {
        return Err(Error::Shape("gradient or optimizer state does not match the parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Diverged("non-finite gradient".into()));
    }

    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for (((layer, g), m), v) in params
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((theta, g), m), v) in layer
            .slices_mut()
            .into_iter()
            .zip(g.slices())
            .zip(m.slices_mut())
            .zip(v.slices_mut())
        {
            for i in 0..theta.len() {
                let gi = g[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let step = cfg.beta1 * m_hat + (1.0 - cfg.beta1) * gi / bc1;
                theta[i] -= cfg.lr * step / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation};
    use ndarray::array;

    fn scalar(theta: f64) -> PredictorParams {
        PredictorParams::new(
            vec![Layer {
                weights: array![[theta]],
                bias: array![0.0],
            }],
            Activation::Softsign,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = init_params(&[3, 2, 1], Activation::Softsign, 4).unwrap();
        let before = p.clone();
        let mut state = OptimizerState::new(&p);
        let g = Gradients::zeros_like(&p);
        for _ in 0..5 {
            nadam_step(&mut p, &g, &mut state, &NadamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1, v = 0.001, m̂ = v̂ = 1, step = 0.9 + 0.1/0.1 = 1.9
        let mut p = scalar(0.0);
        let mut state = OptimizerState::new(&p);
        let g = Gradients {
            layers: vec![Layer {
                weights: array![[1.0]],
                bias: array![0.0],
            }],
        };
        let cfg = NadamConfig {
            lr: 0.1,
            ..NadamConfig::default()
        };
        nadam_step(&mut p, &g, &mut state, &cfg).unwrap();
        let expect = -0.1 * 1.9 / (1.0 + 1e-8);
        assert!((p.layers()[0].weights[[0, 0]] - expect).abs() < 1e-12);
        assert!((state.m[0].weights[[0, 0]] - 0.1).abs() < 1e-15);
        assert!((state.v[0].weights[[0, 0]] - 0.001).abs() < 1e-15);
        assert_eq!(p.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn non_finite_gradient_diverges_without_mutation() {
        let mut p = scalar(0.5);
        let mut state = OptimizerState::new(&p);
        let g = Gradients {
            layers: vec![Layer {
                weights: array![[f64::NAN]],
                bias: array![0.0],
            }],
        };
        let err = nadam_step(&mut p, &g, &mut state, &NadamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("diverged"));
        assert_eq!(p, scalar(0.5));
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn trajectories_are_bit_identical() {
        let run = || {
            let mut p = init_params(&[2, 3, 1], Activation::Tanh, 8).unwrap();
            let mut state = OptimizerState::new(&p);
            for k in 0..20 {
                let mut g = Gradients::zeros_like(&p);
                for (i, v) in g.layers[0].weights.iter_mut().enumerate() {
                    *v = ((k * 7 + i) as f64).sin();
                }
                nadam_step(&mut p, &g, &mut state, &NadamConfig::default()).unwrap();
            }
            p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
