use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dense, Gradients, Mlp};
use crate::scalar::Real;

/// `params <- params - eta * grads`.
pub fn sgd_step<T: Real>(params: &mut [T], grads: &[T], eta: T) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("sgd_step", params.len(), grads.len()));
    }
    if eta < T::zero() {
        return Err(Error::Config(format!("learning rate must be >= 0, got {eta}")));
    }
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= eta * g;
    }
    Ok(())
}

/// Plain gradient step on a single layer.
pub fn sgd_step_dense<T: Real>(layer: &mut Dense<T>, grad: &Dense<T>, eta: T) -> Result<()> {
    if !layer.same_shape(grad) {
        return Err(Error::dim("sgd_step", format!("{:?}", layer.weight.shape()), format!("{:?}", grad.weight.shape())));
    }
    sgd_step(layer.weight.as_mut_slice(), grad.weight.as_slice(), eta)?;
    sgd_step(&mut layer.bias, &grad.bias, eta)
}

/// Gradient step on the layers covered by `grads`.
pub fn sgd_step_model<T: Real>(model: &mut Mlp<T>, grads: &Gradients<T>, eta: T) -> Result<()> {
    let layers = model.layers_mut();
    if grads.first_layer + grads.layers.len() != layers.len() {
        return Err(Error::dim("sgd_step", layers.len() - grads.first_layer, grads.layers.len()));
    }
    for (layer, g) in layers[grads.first_layer..].iter_mut().zip(&grads.layers) {
        sgd_step_dense(layer, g, eta)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for every layer of one network.
#[derive(Debug, Clone)]
pub struct Adam<T = f64> {
    pub config: AdamConfig,
    first: Vec<Dense<T>>,
    second: Vec<Dense<T>>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(model: &Mlp<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Dense<T>> = model.layers().iter().map(Dense::zeros_like).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Dense<T>], &[Dense<T>]) {
        (&self.first, &self.second)
    }

    /// Zeroes moments and the step counter. Parameters live in the model
    /// and are not touched.
    pub fn reset(&mut self) {
        for d in self.first.iter_mut().chain(self.second.iter_mut()) {
            d.iter_mut().for_each(|x| *x = T::zero());
        }
        self.step = 0;
    }

    /// One bias-corrected Adam update from all-layer gradients.
    pub fn step(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.first_layer != 0 || grads.layers.len() != self.first.len() {
            return Err(Error::dim("adam_step", "all-layer gradients", format!("{} layers from {}", grads.layers.len(), grads.first_layer)));
        }
        for ((layer, g), m) in model.layers().iter().zip(&grads.layers).zip(&self.first) {
            if !layer.same_shape(g) || !layer.same_shape(m) {
                return Err(Error::dim("adam_step", format!("{:?}", layer.weight.shape()), format!("{:?}", g.weight.shape())));
            }
        }
        self.step += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = one - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = one - T::lit(c.beta2.powi(self.step as i32));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);
        for (((layer, g), m), v) in model
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((p, &g), m), v) in layer.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ForwardMode, GradScope, Matrix};

    fn scalar_model(w: f64) -> Mlp<f64> {
        Mlp::from_layers(
            vec![Dense {
                weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
                bias: vec![0.0],
            }],
            0.0,
        )
        .unwrap()
    }

    fn grads_of(g: f64) -> Gradients<f64> {
        Gradients {
            first_layer: 0,
            layers: vec![Dense {
                weight: Matrix::from_vec(1, 1, vec![g]).unwrap(),
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut p = [1.0f64];
        sgd_step(&mut p, &[2.0], 0.1).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        let mut q = [1.0f64, -3.0];
        sgd_step(&mut q, &[5.0, 7.0], 0.0).unwrap();
        assert_eq!(q, [1.0, -3.0]);
        assert!(sgd_step(&mut q, &[1.0], 0.1).is_err());
        assert!(sgd_step(&mut q, &[1.0, 1.0], -0.1).is_err());
    }

    #[test]
    fn repeated_steps_with_fixed_gradient_are_linear() {
        let g = [0.3f64, -1.2, 2.5];
        let mut a = [1.0f64, 2.0, 3.0];
        for _ in 0..3 {
            sgd_step(&mut a, &g, 0.05).unwrap();
        }
        let mut b = [1.0f64, 2.0, 3.0];
        let g3: Vec<f64> = g.iter().map(|x| 3.0 * x).collect();
        sgd_step(&mut b, &g3, 0.05).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut m = scalar_model(0.7);
        let mut opt = Adam::new(&m, AdamConfig::default());
        opt.step(&mut m, &grads_of(0.0)).unwrap();
        assert_eq!(m.layers()[0].weight[(0, 0)], 0.7);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut m = scalar_model(1.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(&m, cfg);
        opt.step(&mut m, &grads_of(1.0)).unwrap();
        let want = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((m.layers()[0].weight[(0, 0)] - want).abs() < 1e-15);
    }

    #[test]
    fn reset_replays_identical_trajectory() {
        let base = Mlp::<f64>::new(&[3, 4, 2], 0.0, 2).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, -0.4, 0.9, 1.0, 0.2, -0.3]).unwrap();
        let run = |model: &mut Mlp<f64>, opt: &mut Adam<f64>| {
            for _ in 0..5 {
                let (_, cache) = model.forward(&x, ForwardMode::Eval).unwrap();
                let g = model.backward(&cache, &[0, 1], GradScope::AllLayers).unwrap();
                opt.step(model, &g).unwrap();
            }
        };
        let mut m1 = base.clone();
        let mut opt = Adam::new(&m1, AdamConfig::default());
        run(&mut m1, &mut opt);
        let trained = m1.clone();
        opt.reset();
        assert_eq!(opt.steps_taken(), 0);
        assert!(opt.moments().0.iter().all(|d| d.iter().all(|&x| x == 0.0)));
        assert!(m1.bitwise_eq(&trained));

        let mut m2 = base.clone();
        run(&mut m2, &mut opt);
        assert!(m2.bitwise_eq(&trained));
    }

    #[test]
    fn adam_rejects_partial_gradients() {
        let mut m = Mlp::<f64>::new(&[3, 4, 2], 0.0, 2).unwrap();
        let x = Matrix::from_vec(1, 3, vec![0.1, -0.4, 0.9]).unwrap();
        let (_, cache) = m.forward(&x, ForwardMode::Eval).unwrap();
        let g = m.backward(&cache, &[0], GradScope::LastLayerOnly).unwrap();
        let mut opt = Adam::new(&m, AdamConfig::default());
        assert!(opt.step(&mut m, &g).is_err());
        sgd_step_model(&mut m, &g, 0.1).unwrap();
    }
}
