use ndarray::{Array1, Array2};

use super::{Gradients, Mlp, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule<T> {
    /// `θ ← θ − lr·g`
    Plain,
    /// Adaptive moments with bias correction.
    Adam { beta1: T, beta2: T, eps: T },
}

impl<T: Scalar> UpdateRule<T> {
    pub fn adam() -> Self {
        UpdateRule::Adam {
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// The gradient held a NaN or infinity; parameters were left untouched.
    SkippedNonFinite,
}

#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub learning_rate: T,
    pub rule: UpdateRule<T>,
    first: Vec<(Array2<T>, Array1<T>)>,
    second: Vec<(Array2<T>, Array1<T>)>,
    step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &Mlp<T>, learning_rate: T, rule: UpdateRule<T>) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
                .collect::<Vec<_>>()
        };
        OptimizerState {
            learning_rate,
            rule,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn adam(net: &Mlp<T>, learning_rate: T) -> Self {
        Self::new(net, learning_rate, UpdateRule::adam())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// Applies one update. Non-finite gradients are skipped rather than applied.
pub fn optimize_step<T: Scalar>(
    net: &mut Mlp<T>,
    grads: &Gradients<T>,
    opt: &mut OptimizerState<T>,
) -> Result<StepOutcome> {
    if grads.layers.len() != net.layers().len() || opt.first.len() != net.layers().len() {
        return Err(Error::ShapeMismatch { layer: 0 });
    }
    for (i, (layer, g)) in net.layers().iter().zip(&grads.layers).enumerate() {
        if layer.weights.shape() != g.weights.shape()
            || layer.bias.len() != g.bias.len()
            || opt.first[i].0.shape() != g.weights.shape()
        {
            return Err(Error::ShapeMismatch { layer: i });
        }
    }
    if !grads.is_finite() {
        return Ok(StepOutcome::SkippedNonFinite);
    }

    opt.step += 1;
    let lr = opt.learning_rate;
    match opt.rule {
        UpdateRule::Plain => {
            for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                layer.weights.zip_mut_with(&g.weights, |w, &d| *w -= lr * d);
                layer.bias.zip_mut_with(&g.bias, |b, &d| *b -= lr * d);
            }
        }
        UpdateRule::Adam { beta1, beta2, eps } => {
            let t = opt.step as i32;
            let c1 = T::one() - beta1.powi(t);
            let c2 = T::one() - beta2.powi(t);
            let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
                *m = beta1 * *m + (T::one() - beta1) * g;
                *v = beta2 * *v + (T::one() - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            let layers = net.layers_mut();
            for (i, g) in grads.layers.iter().enumerate() {
                let (mw, mb) = &mut opt.first[i];
                let (vw, vb) = &mut opt.second[i];
                let layer = &mut layers[i];
                ndarray::Zip::from(&mut layer.weights)
                    .and(mw)
                    .and(vw)
                    .and(&g.weights)
                    .for_each(|p, m, v, &d| update(p, m, v, d));
                ndarray::Zip::from(&mut layer.bias)
                    .and(mb)
                    .and(vb)
                    .and(&g.bias)
                    .for_each(|p, m, v, &d| update(p, m, v, d));
            }
        }
    }
    Ok(StepOutcome::Applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Dense};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(value: f64) -> Mlp<f64> {
        Mlp::new(vec![Dense {
            weights: array![[value]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn plain_rule_update_identity() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(&net, 0.1, UpdateRule::Plain);
        let grads = Gradients {
            layers: vec![crate::numerics::LayerGrad {
                weights: array![[0.5]],
                bias: array![0.0],
            }],
        };
        assert_eq!(optimize_step(&mut net, &grads, &mut opt).unwrap(), StepOutcome::Applied);
        assert!((net.layers()[0].weights[[0, 0]] - 0.95).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Mlp::<f64>::seeded(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let before = net.params_flat();
        let mut opt = OptimizerState::adam(&net, 1e-3);
        let zeros = Gradients::zeros_like(&net);
        optimize_step(&mut net, &zeros, &mut opt).unwrap();
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::adam(&net, 1e-3);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].weights[[0, 0]] = f64::NAN;
        assert_eq!(
            optimize_step(&mut net, &grads, &mut opt).unwrap(),
            StepOutcome::SkippedNonFinite
        );
        assert_eq!(net.params_flat(), vec![1.0, 0.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut net = scalar_net(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let other = Mlp::<f64>::seeded(&[2, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let mut opt = OptimizerState::adam(&net, 1e-3);
        assert!(optimize_step(&mut net, &Gradients::zeros_like(&other), &mut opt).is_err());
    }

    #[test]
    fn adam_descends_quadratic_bowl() {
        // loss = ½‖θ − target‖² over every parameter.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Mlp::<f64>::seeded(&[4, 3], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let target: Vec<f64> = (0..net.param_count()).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let loss = |p: &[f64]| -> f64 { p.iter().zip(&target).map(|(a, b)| 0.5 * (a - b).powi(2)).sum() };
        let initial = loss(&net.params_flat());
        let mut opt = OptimizerState::adam(&net, 0.05);
        for _ in 0..200 {
            let p = net.params_flat();
            let mut g = Gradients::zeros_like(&net);
            let mut it = p.iter().zip(&target).map(|(a, b)| a - b);
            for lg in &mut g.layers {
                lg.weights.iter_mut().for_each(|v| *v = it.next().unwrap());
                lg.bias.iter_mut().for_each(|v| *v = it.next().unwrap());
            }
            optimize_step(&mut net, &g, &mut opt).unwrap();
        }
        let last = loss(&net.params_flat());
        assert!(last <= 0.01 * initial, "{initial} -> {last}");
    }
}
