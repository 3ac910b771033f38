//! Bias-free dense feed-forward network with exact reverse-mode gradients.
//!
//! The network never carries bias vectors: with a hypersphere objective a
//! biased network can map every input to the center and reach zero loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Slope of the leaky rectifier on negative inputs.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    #[default]
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Activation::Relu => s.max(0.0),
            Activation::LeakyRelu => {
                if s > 0.0 {
                    s
                } else {
                    LEAKY_SLOPE * s
                }
            }
            Activation::Identity => s,
        }
    }

    /// Derivative at `s`; the kink at 0 takes the left-hand value.
    #[inline]
    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Activation::Relu => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if s > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::LeakyRelu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::LeakyRelu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky-relu" | "leaky" => Ok(Activation::LeakyRelu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!(
                "unknown activation {other:?} (expected relu, leaky-relu or identity)"
            )),
        }
    }
}

/// Weights of the mapping `φ(·; W)`: one matrix per layer, row = output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Matrix>,
    activation: Activation,
}

/// `∂L/∂W` for every layer, shape-congruent with the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += factor * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }
}

/// Per-layer pre-activations and outputs of one forward pass.
struct Trace {
    /// `inputs[l]` is the input to layer `l`; the last entry is the network output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization, deterministic per seed.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least two dims in layer_dims".into(),
            ));
        }
        if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer_dims[{pos}] is zero; every dimension must be positive"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Matrix::from_vec(fan_out, fan_in, data).expect("sized buffer")
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// Wraps explicit weight matrices, checking conformance and finiteness.
    pub fn from_layers(layers: Vec<Matrix>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::DimensionMismatch {
                    context: if i == 0 {
                        "layer 1 input"
                    } else {
                        "layer input"
                    },
                    expected: pair[0].rows(),
                    actual: pair[1].cols(),
                });
            }
        }
        if layers.iter().any(|w| w.rows() == 0 || w.cols() == 0) {
            return Err(Error::InvalidConfig(
                "layers must have non-zero shape".into(),
            ));
        }
        if !layers.iter().all(Matrix::is_finite) {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `[d, h1, …, p]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].cols())
            .chain(self.layers.iter().map(Matrix::rows))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|w| w.rows() * w.cols()).sum()
    }

    /// `Σ_ℓ ‖W^ℓ‖²_F`.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().map(Matrix::frobenius_sq).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn act_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for (l, w) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; w.rows()];
            w.mul_vec(&cur, &mut next);
            let act = self.act_for(l);
            next.iter_mut().for_each(|v| *v = act.apply(*v));
            cur = next;
        }
        Ok(cur)
    }

    /// Row-wise forward pass; output row `i` is the embedding of input row `i`.
    pub fn forward_batch(&self, xs: &Matrix) -> Result<Matrix> {
        if xs.cols() != self.input_dim() && !xs.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: xs.cols(),
            });
        }
        let p = self.output_dim();
        let mut out = Matrix::zeros(xs.rows(), p);
        for (i, x) in xs.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.forward(x)?);
        }
        Ok(out)
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        for (l, w) in self.layers.iter().enumerate() {
            let mut s = vec![0.0; w.rows()];
            w.mul_vec(&inputs[l], &mut s);
            let act = self.act_for(l);
            inputs.push(s.iter().map(|&v| act.apply(v)).collect());
            pre.push(s);
        }
        Trace { inputs, pre }
    }

    /// Exact `∂L/∂W` given `∂L/∂z` at the network output.
    pub fn backprop(&self, x: &[f64], dl_dz: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backprop_accumulate(x, dl_dz, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale * ∂L/∂W` into `grads`. Returns the forward output.
    pub fn backprop_accumulate(
        &self,
        x: &[f64],
        dl_dz: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if dl_dz.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: self.output_dim(),
                actual: dl_dz.len(),
            });
        }
        let trace = self.trace(x);
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = dl_dz
            .iter()
            .zip(&trace.pre[last])
            .map(|(g, &s)| g * self.act_for(last).derivative(s))
            .collect();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let g = &mut grads.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let coeff = scale * d;
                for (gv, &a) in g.row_mut(r).iter_mut().zip(input) {
                    *gv += coeff * a;
                }
            }
            if l > 0 {
                let w = &self.layers[l];
                let mut up = vec![0.0; w.cols()];
                w.mul_vec_transposed(&delta, &mut up);
                let act = self.act_for(l - 1);
                for (u, &s) in up.iter_mut().zip(&trace.pre[l - 1]) {
                    *u *= act.derivative(s);
                }
                delta = up;
            }
        }
        Ok(trace.inputs.into_iter().next_back().expect("output layer"))
    }

    /// `W ← W − lr·G`, in place.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient layer count",
                expected: self.layers.len(),
                actual: grads.layers.len(),
            });
        }
        for (w, g) in self.layers.iter().zip(&grads.layers) {
            if w.rows() != g.rows() || w.cols() != g.cols() {
                return Err(Error::DimensionMismatch {
                    context: "gradient shape",
                    expected: w.rows() * w.cols(),
                    actual: g.rows() * g.cols(),
                });
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient entries".into()));
        }
        for (w, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *wv -= lr * gv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity2(act: Activation) -> MlpParams {
        let eye = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        MlpParams::from_layers(vec![eye.clone(), eye], act).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpParams::init(&[4, 2], Activation::LeakyRelu, 7).unwrap();
        let b = MlpParams::init(&[4, 2], Activation::LeakyRelu, 7).unwrap();
        assert_eq!(a, b);
        let c = MlpParams::init(&[4, 2], Activation::LeakyRelu, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_bad_dims() {
        let err = MlpParams::init(&[4], Activation::Relu, 0).unwrap_err();
        assert!(err.to_string().contains("need at least two dims"), "{err}");
        assert!(MlpParams::init(&[], Activation::Relu, 0).is_err());
        assert!(MlpParams::init(&[4, 0, 2], Activation::Relu, 0).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let p = MlpParams::init(&[4, 8, 2], Activation::LeakyRelu, 1).unwrap();
        for w in p.layers() {
            let bound = 1.0 / (w.cols() as f64).sqrt();
            assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
        }
        assert_eq!(p.layer_dims(), vec![4, 8, 2]);
        assert_eq!(p.param_count(), 4 * 8 + 8 * 2);
    }

    #[test]
    fn rectifier_zeroes_negatives() {
        let p = identity2(Activation::Relu);
        assert_eq!(p.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = MlpParams::from_layers(
            vec![Matrix::zeros(3, 2), Matrix::zeros(2, 3)],
            Activation::LeakyRelu,
        )
        .unwrap();
        assert_eq!(p.forward(&[0.3, -4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let p = identity2(Activation::Relu);
        assert!(matches!(
            p.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(p.backprop(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn nonconformant_layers_rejected() {
        let err = MlpParams::from_layers(
            vec![Matrix::zeros(3, 2), Matrix::zeros(2, 4)],
            Activation::Relu,
        );
        assert!(err.is_err());
    }

    #[test]
    fn linear_layer_gradient_is_input() {
        let w = Matrix::from_rows(&[[0.3, -0.2, 0.5]]).unwrap();
        let p = MlpParams::from_layers(vec![w], Activation::Relu).unwrap();
        let x = [1.5, -2.0, 0.25];
        let g = p.backprop(&x, &[1.0]).unwrap();
        assert_eq!(g.layers[0].as_slice(), &x);
    }

    #[test]
    fn dead_hidden_layer_blocks_upstream_gradient() {
        // first layer maps positive inputs to strictly negative pre-activations
        let w1 = Matrix::from_rows(&[[-1.0, -1.0], [-2.0, -0.5]]).unwrap();
        let w2 = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let p = MlpParams::from_layers(vec![w1, w2], Activation::Relu).unwrap();
        let g = p.backprop(&[1.0, 2.0], &[1.0]).unwrap();
        assert!(g.layers[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(g.layers[1].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_step_formula() {
        let w = Matrix::from_rows(&[[1.0]]).unwrap();
        let mut p = MlpParams::from_layers(vec![w], Activation::Identity).unwrap();
        let g = Gradients {
            layers: vec![Matrix::from_rows(&[[0.5]]).unwrap()],
        };
        p.sgd_step(&g, 0.1).unwrap();
        assert!((p.layers()[0].get(0, 0) - 0.95).abs() < 1e-15);
        p.sgd_step(&g, 0.1).unwrap();
        assert!((p.layers()[0].get(0, 0) - (1.0 - 2.0 * 0.1 * 0.5)).abs() < 1e-15);

        let before = p.clone();
        p.sgd_step(&Gradients::zeros_like(&before), 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_step_rejects_bad_inputs() {
        let mut p = MlpParams::init(&[2, 2], Activation::Relu, 0).unwrap();
        let mut g = Gradients::zeros_like(&p);
        assert!(p.sgd_step(&g, 0.0).is_err());
        g.layers[0].set(0, 0, f64::NAN);
        assert!(matches!(p.sgd_step(&g, 0.1), Err(Error::NonFinite(_))));
        let wrong = Gradients {
            layers: vec![Matrix::zeros(3, 2)],
        };
        assert!(p.sgd_step(&wrong, 0.1).is_err());
    }

    #[test]
    fn no_bias_shift_changes_output() {
        let p = MlpParams::init(&[3, 5, 2], Activation::LeakyRelu, 11).unwrap();
        let x = [0.2, 0.4, 0.6];
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        assert_ne!(p.forward(&x).unwrap(), p.forward(&shifted).unwrap());
        // zero input maps to zero output without biases
        assert_eq!(p.forward(&[0.0; 3]).unwrap(), vec![0.0, 0.0]);
    }
}
