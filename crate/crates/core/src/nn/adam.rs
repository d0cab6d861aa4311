use crate::error::{Error, Result};

use super::{Gradients, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive moment estimation.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        if !grads.matches(params) || !self.first.matches(params) {
            return Err(Error::ShapeMismatch("gradient shape does not match parameters".into()));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (k, layer) in params.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.first.layers[k];
            let (vw, vb) = &mut self.second.layers[k];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{array, Array1, Array2};

    fn scalar_model(w: f64) -> ModelParams {
        ModelParams::from_layers(vec![Dense {
            weights: array![[w]],
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn grads(gw: f64, gb: f64) -> Gradients {
        Gradients {
            layers: vec![(array![[gw]], array![gb])],
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = scalar_model(0.7);
        let before = p.clone();
        let mut adam = Adam::new(&p, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut p, &grads(0.0, 0.0)).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_matches_hand_derivation() {
        let mut p = scalar_model(0.0);
        let mut adam = Adam::new(&p, AdamConfig::with_lr(0.001));
        adam.step(&mut p, &grads(0.5, -3.0)).unwrap();
        let expected = -0.001 * 0.5 / (0.5 + 1e-8);
        assert!((p.param(0) - expected).abs() < 1e-18);
        assert!((p.param(1) - 0.001 * 3.0 / (3.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn first_step_opposes_gradient_sign() {
        for g in [1e-6, -2.0, 0.3, -1e3] {
            let mut p = scalar_model(0.0);
            let mut adam = Adam::new(&p, AdamConfig::default());
            adam.step(&mut p, &grads(g, 0.0)).unwrap();
            assert!(p.param(0) * g < 0.0);
        }
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = scalar_model(0.0);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let bad = Gradients {
            layers: vec![(Array2::zeros((2, 1)), Array1::zeros(1))],
        };
        assert!(adam.step(&mut p, &bad).is_err());
    }
}
