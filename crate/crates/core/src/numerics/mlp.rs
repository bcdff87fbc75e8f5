use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Scalar;
use crate::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

// Every parameter mutation draws a process-unique stamp, so a tape can only
// ever match parameters identical to the ones it was recorded against.
fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_at_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Fully connected layer; `weights` is `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// Feed-forward network of dense layers.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    version: u64,
}

impl<T: Scalar> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward_tape`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    version: u64,
    // activations[0] is the input, activations[l + 1] the output of layer l.
    activations: Vec<Array2<T>>,
}

impl<T> Tape<T> {
    pub fn version(&self) -> u64 {
        self.version
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Parameter gradients, shaped like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub params: Gradients<T>,
    /// Gradient with respect to the network input, one row per sample.
    pub input: Array2<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs() == 0 || layer.outputs() == 0 {
                return Err(Error::InvalidNetwork(format!("layer {i} has a zero dimension")));
            }
            if layer.bias.len() != layer.outputs() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i} bias length {} != {} outputs",
                    layer.bias.len(),
                    layer.outputs()
                )));
            }
            if i > 0 && layers[i - 1].outputs() != layer.inputs() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i} expects {} inputs but previous layer emits {}",
                    layer.inputs(),
                    layers[i - 1].outputs()
                )));
            }
        }
        let net = Mlp {
            layers,
            version: fresh_version(),
        };
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(net)
    }

    /// Seeded network with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// and zero biases. `hidden` applies to every layer but the last.
    pub fn seeded<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidNetwork("need at least input and output sizes".into()));
        }
        let n_layers = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidNetwork("layer sizes must be positive".into()));
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || T::of(rng.random_range(-bound..bound)));
            layers.push(Dense {
                weights,
                bias: Array1::zeros(fan_out),
                activation: if i + 1 == n_layers { output } else { hidden },
            });
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|_| Error::DimensionMismatch {
            expected: self.input_dim(),
            actual: input.len(),
        })?;
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = Self::layer_forward(layer, h.view());
        }
        Ok(h)
    }

    /// Forward pass that records the activations needed by [`Mlp::backward`].
    pub fn forward_tape(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Tape<T>)> {
        self.check_input(x.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for layer in &self.layers {
            let next = Self::layer_forward(layer, activations[activations.len() - 1].view());
            activations.push(next);
        }
        let out = activations[activations.len() - 1].clone();
        Ok((
            out,
            Tape {
                version: self.version,
                activations,
            },
        ))
    }

    /// Backpropagates `grad_output` (dLoss/dOutput, one row per sample).
    /// Parameter gradients are summed over the rows.
    pub fn backward(&self, tape: &Tape<T>, grad_output: ArrayView2<T>) -> Result<Backward<T>> {
        if tape.version != self.version {
            return Err(Error::StaleTape {
                tape: tape.version,
                current: self.version,
            });
        }
        let rows = tape.activations[0].nrows();
        if grad_output.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: grad_output.nrows(),
            });
        }
        if grad_output.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: grad_output.ncols(),
            });
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let output = &tape.activations[l + 1];
            let input = &tape.activations[l];
            let act = layer.activation;
            let mut delta = upstream;
            delta.zip_mut_with(output, |d, &y| *d *= act.derivative_at_output(y));
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            upstream = delta.dot(&layer.weights.t());
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok(Backward {
            params: Gradients { layers: grads },
            input: upstream,
        })
    }

    /// Parameters flattened layer by layer: weights (row-major) then bias.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.version = fresh_version();
        Ok(())
    }

    /// Overwrites one parameter, indexed in [`Mlp::params_flat`] order.
    pub fn set_param(&mut self, index: usize, value: T) -> Result<()> {
        let mut offset = index;
        for layer in &mut self.layers {
            let w = layer.weights.len();
            if offset < w {
                let cols = layer.weights.ncols();
                layer.weights[[offset / cols, offset % cols]] = value;
            } else if offset < w + layer.bias.len() {
                layer.bias[offset - w] = value;
            } else {
                offset -= w + layer.bias.len();
                continue;
            }
            self.version = fresh_version();
            return Ok(());
        }
        Err(Error::InvalidArgument(format!(
            "parameter {index} out of {}",
            self.param_count()
        )))
    }

    /// Target-network update `self ← rho·self + (1 − rho)·source`.
    pub fn polyak_from(&mut self, source: &Mlp<T>, rho: T) -> Result<()> {
        if self.layer_sizes() != source.layer_sizes() {
            return Err(Error::InvalidNetwork("polyak source has a different layout".into()));
        }
        let keep = T::one() - rho;
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            dst.weights.zip_mut_with(&src.weights, |d, &s| *d = rho * *d + keep * s);
            dst.bias.zip_mut_with(&src.bias, |d, &s| *d = rho * *d + keep * s);
        }
        self.version = fresh_version();
        Ok(())
    }

    /// Hex SHA-256 of the parameters, as little-endian `f64`.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for size in self.layer_sizes() {
            hasher.update((size as u64).to_le_bytes());
        }
        for p in self.params_flat() {
            hasher.update(p.as_f64().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.version = fresh_version();
        &mut self.layers
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    fn layer_forward(layer: &Dense<T>, x: ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&layer.weights);
        z += &layer.bias;
        let act = layer.activation;
        z.mapv_inplace(|v| act.apply(v));
        z
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch { layer: 0 });
        }
        for (i, (a, b)) in self.layers.iter_mut().zip(&other.layers).enumerate() {
            if a.weights.shape() != b.weights.shape() || a.bias.len() != b.bias.len() {
                return Err(Error::ShapeMismatch { layer: i });
            }
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.layers {
            g.weights.mapv_inplace(|v| v * factor);
            g.bias.mapv_inplace(|v| v * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.weights.iter().copied());
            out.extend(g.bias.iter().copied());
        }
        out
    }

    pub fn l2_norm(&self) -> T {
        self.flat().iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tanh_net(seed: u64) -> Mlp<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::seeded(&[4, 5, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = tanh_net(1);
        let n = net.param_count();
        net.set_params_flat(&vec![0.0; n]).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0, 5.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::new(vec![Dense {
            weights: Array2::<f64>::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn matches_straight_line_reimplementation() {
        let net = tanh_net(42);
        let input = [0.1, -0.7, 0.35, 1.2];
        // Oracle: explicit loops, no ndarray products.
        let mut h: Vec<f64> = input.to_vec();
        for layer in net.layers() {
            let mut next = vec![0.0; layer.outputs()];
            for (j, out) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[j];
                for (i, &x) in h.iter().enumerate() {
                    acc += x * layer.weights[[i, j]];
                }
                *out = layer.activation.apply(acc);
            }
            h = next;
        }
        let got = net.forward(&input).unwrap();
        for (a, b) in got.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_input_length() {
        let net = tanh_net(0);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 4, actual: 2 })
        ));
    }

    #[test]
    fn rejects_incompatible_layers() {
        let layers = vec![
            Dense {
                weights: Array2::<f64>::zeros((2, 3)),
                bias: Array1::zeros(3),
                activation: Activation::Tanh,
            },
            Dense {
                weights: Array2::zeros((4, 1)),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
        ];
        assert!(Mlp::new(layers).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let net = tanh_net(3);
        let x = array![[0.5, 0.1, -0.2, 0.9], [1.0, 0.0, 0.3, -0.4]];
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let back = net.backward(&tape, Array2::zeros((2, 3)).view()).unwrap();
        assert!(back.params.flat().iter().all(|&g| g == 0.0));
        assert!(back.input.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let net = tanh_net(4);
        let x = array![[0.5, 0.1, -0.2, 0.9]];
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let g1 = array![[1.0, 0.0, -2.0]];
        let g2 = array![[0.5, 3.0, 1.0]];
        let mut a = net.backward(&tape, g1.view()).unwrap().params;
        a.add_assign(&net.backward(&tape, g2.view()).unwrap().params).unwrap();
        let b = net.backward(&tape, (&g1 + &g2).view()).unwrap().params;
        for (u, v) in a.flat().iter().zip(b.flat()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = tanh_net(5);
        let x = array![[0.5, 0.1, -0.2, 0.9]];
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let p = net.params_flat();
        net.set_params_flat(&p).unwrap();
        assert!(matches!(
            net.backward(&tape, array![[1.0, 1.0, 1.0]].view()),
            Err(Error::StaleTape { .. })
        ));
    }

    #[test]
    fn polyak_update_identity() {
        let mut target = tanh_net(6);
        let source = tanh_net(7);
        let before = target.params_flat();
        target.polyak_from(&source, 0.995).unwrap();
        for ((t, b), s) in target.params_flat().iter().zip(&before).zip(source.params_flat()) {
            assert!((t - (0.995 * b + 0.005 * s)).abs() < 1e-15);
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let net64 = tanh_net(8);
        let layers32 = net64
            .layers()
            .iter()
            .map(|l| Dense {
                weights: l.weights.mapv(|v| v as f32),
                bias: l.bias.mapv(|v| v as f32),
                activation: l.activation,
            })
            .collect();
        let net32 = Mlp::new(layers32).unwrap();
        let a = net64.forward(&[0.2, 0.4, -0.6, 0.8]).unwrap();
        let b = net32.forward(&[0.2, 0.4, -0.6, 0.8]).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y as f64).abs() < 1e-5);
        }
    }
}
