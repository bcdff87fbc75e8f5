//! Central finite-difference verification of analytic gradients.
//!
//! Only forward evaluations are used here, so these checks stay independent
//! of the backpropagation code they verify.

use ndarray::{Array2, ArrayView2};

use super::{Gradients, Mlp, Scalar};
use crate::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so entries where both gradients
/// are essentially zero are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let mut worst = (0.0, 0);
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = relative_error(a, n);
        if e > worst.0 || e.is_nan() {
            worst = (e, i);
        }
    }
    GradCheck {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: analytic.len(),
    }
}

/// Parameters a check perturbs: those whose flat index is `offset` modulo `every`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamStride {
    pub offset: usize,
    pub every: usize,
}

impl ParamStride {
    pub const ALL: ParamStride = ParamStride { offset: 0, every: 1 };

    /// Probe `p` of a series takes residue class `p mod every`, so `every`
    /// consecutive probes cover each parameter once.
    pub fn for_probe(probe: u64, every: usize) -> Self {
        let every = every.max(1);
        ParamStride {
            offset: (probe % every as u64) as usize,
            every,
        }
    }

    pub fn indices(self, len: usize) -> impl Iterator<Item = usize> {
        (self.offset..len).step_by(self.every.max(1))
    }
}

/// Central differences of `loss` with respect to every parameter of `net`.
pub fn numeric_param_gradient<T: Scalar>(net: &Mlp<T>, loss: impl Fn(&Mlp<T>) -> f64, step: f64) -> Vec<f64> {
    numeric_param_gradient_strided(net, loss, step, ParamStride::ALL)
        .into_iter()
        .map(|(_, g)| g)
        .collect()
}

/// Central differences for the parameters selected by `stride`, with their
/// flat indices.
pub fn numeric_param_gradient_strided<T: Scalar>(
    net: &Mlp<T>,
    loss: impl Fn(&Mlp<T>) -> f64,
    step: f64,
    stride: ParamStride,
) -> Vec<(usize, f64)> {
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut out = Vec::new();
    for i in stride.indices(base.len()) {
        let b = base[i];
        probe.set_param(i, b + T::of(step)).expect("index in range");
        let plus = loss(&probe);
        probe.set_param(i, b - T::of(step)).expect("index in range");
        let minus = loss(&probe);
        probe.set_param(i, b).expect("index in range");
        out.push((i, (plus - minus) / (2.0 * step)));
    }
    out
}

/// Central differences of `loss` with respect to each entry of `input`.
pub fn numeric_input_gradient<T: Scalar>(
    input: ArrayView2<T>,
    loss: impl Fn(ArrayView2<T>) -> f64,
    step: f64,
) -> Array2<f64> {
    let mut x = input.to_owned();
    let mut out = Array2::zeros(input.raw_dim());
    for idx in ndarray::indices(input.raw_dim()) {
        let base = x[idx];
        x[idx] = base + T::of(step);
        let plus = loss(x.view());
        x[idx] = base - T::of(step);
        let minus = loss(x.view());
        x[idx] = base;
        out[idx] = (plus - minus) / (2.0 * step);
    }
    out
}

/// Checks `net.backward` for the linear probe loss `Σ probe ⊙ net(input)`,
/// covering both parameter and input gradients.
pub fn check_network<T: Scalar>(
    net: &Mlp<T>,
    input: ArrayView2<T>,
    probe: ArrayView2<T>,
    step: f64,
) -> Result<GradCheck> {
    let (_, tape) = net.forward_tape(input)?;
    let back = net.backward(&tape, probe)?;
    let probe_loss = |n: &Mlp<T>, x: ArrayView2<T>| -> f64 {
        let out = n.forward_batch(x).expect("checked shape");
        out.iter().zip(probe.iter()).map(|(o, p)| (*o * *p).as_f64()).sum()
    };
    let numeric_params = numeric_param_gradient(net, |n| probe_loss(n, input), step);
    let analytic_params: Vec<f64> = back.params.flat().iter().map(|v| v.as_f64()).collect();
    let params = compare(&analytic_params, &numeric_params);

    let numeric_input = numeric_input_gradient(input, |x| probe_loss(net, x), step);
    let analytic_input: Vec<f64> = back.input.iter().map(|v| v.as_f64()).collect();
    let inputs = compare(&analytic_input, numeric_input.as_slice().expect("standard layout"));

    Ok(if inputs.max_relative_error > params.max_relative_error {
        GradCheck {
            worst_index: params.checked + inputs.worst_index,
            checked: params.checked + inputs.checked,
            ..inputs
        }
    } else {
        GradCheck {
            checked: params.checked + inputs.checked,
            ..params
        }
    })
}

/// Compares precomputed analytic gradients against central differences of `loss`.
pub fn check_gradients<T: Scalar>(
    net: &Mlp<T>,
    analytic: &Gradients<T>,
    loss: impl Fn(&Mlp<T>) -> f64,
    step: f64,
) -> GradCheck {
    check_gradients_strided(net, analytic, loss, step, ParamStride::ALL)
}

/// [`check_gradients`] restricted to the parameters selected by `stride`.
/// `worst_index` is a flat parameter index.
pub fn check_gradients_strided<T: Scalar>(
    net: &Mlp<T>,
    analytic: &Gradients<T>,
    loss: impl Fn(&Mlp<T>) -> f64,
    step: f64,
    stride: ParamStride,
) -> GradCheck {
    let numeric = numeric_param_gradient_strided(net, loss, step, stride);
    let flat = analytic.flat();
    let analytic: Vec<f64> = numeric.iter().map(|&(i, _)| flat[i].as_f64()).collect();
    let values: Vec<f64> = numeric.iter().map(|&(_, g)| g).collect();
    let check = compare(&analytic, &values);
    GradCheck {
        worst_index: numeric.get(check.worst_index).map_or(0, |&(i, _)| i),
        ..check
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_networks_pass_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::<f64>::seeded(&[5, 7, 6, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
            let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
            let p = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
            let check = check_network(&net, x.view(), p.view(), DEFAULT_STEP).unwrap();
            assert!(check.max_relative_error < 1e-4, "seed {seed}: {check:?}");
        }
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f64>::seeded(&[2, 3, 1], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = ndarray::array![[0.3, -0.2]];
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let mut g = net.backward(&tape, ndarray::array![[1.0]].view()).unwrap().params;
        g.scale(1.1);
        let check = check_gradients(&net, &g, |n| n.forward(&[0.3, -0.2]).unwrap()[0], DEFAULT_STEP);
        assert!(check.max_relative_error > 0.05);
    }

    #[test]
    fn strided_probes_cover_every_parameter_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::<f64>::seeded(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let loss = |n: &Mlp<f64>| n.forward(&[0.1, -0.4, 0.7]).unwrap().iter().sum::<f64>();
        let full = numeric_param_gradient(&net, loss, DEFAULT_STEP);
        let mut seen = vec![None; full.len()];
        for probe in 0..3 {
            for (i, g) in numeric_param_gradient_strided(&net, loss, DEFAULT_STEP, ParamStride::for_probe(probe, 3)) {
                assert!(seen[i].is_none());
                seen[i] = Some(g);
            }
        }
        let strided: Vec<f64> = seen.into_iter().map(Option::unwrap).collect();
        assert_eq!(strided, full);
    }

    #[test]
    fn set_param_follows_flat_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::<f64>::seeded(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let mut flat = net.params_flat();
        for i in [0, 5, 12, 15, 20, flat.len() - 1] {
            net.set_param(i, 100.0 + i as f64).unwrap();
            flat[i] = 100.0 + i as f64;
        }
        assert_eq!(net.params_flat(), flat);
        assert!(net.set_param(flat.len(), 0.0).is_err());
    }
}
