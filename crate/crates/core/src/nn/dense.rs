//! Fully connected layer with cached pre-activations for the backward pass.

use super::{backprop_acc, matmul_acc, outer_acc, Activation, ParamNet, Tensor2};
use crate::rng::RngStream;

/// Affine layer `y = act(x W^T + b)` with weights stored `out x in`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub act: Activation,
}

/// Forward-pass state needed by [`Dense::backward`].
#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor2,
    preact: Tensor2,
}

/// Gradient accumulator mirroring [`Dense`].
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Initializes weights and biases uniformly on `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn new(rng: &mut RngStream, input_dim: usize, output_dim: usize, act: Activation) -> Self {
        assert!(input_dim > 0 && output_dim > 0, "dense dims must be positive");
        let bound = 1.0 / (input_dim as f64).sqrt();
        Dense {
            weights: Tensor2::uniform(rng, output_dim, input_dim, bound),
            bias: (0..output_dim).map(|_| rng.range(-bound, bound)).collect(),
            act,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn grad_zeros(&self) -> DenseGrad {
        DenseGrad {
            weights: Tensor2::zeros(self.weights.rows, self.weights.cols),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, input: &Tensor2) -> (Tensor2, DenseCache) {
        assert_eq!(input.cols, self.input_dim(), "dense forward: input dim mismatch");
        let mut preact = Tensor2::zeros(input.rows, self.output_dim());
        for b in 0..input.rows {
            preact.row_mut(b).copy_from_slice(&self.bias);
        }
        matmul_acc(&mut preact, input, &self.weights);
        let mut out = preact.clone();
        for v in out.data.iter_mut() {
            *v = self.act.apply(*v);
        }
        (
            out,
            DenseCache {
                input: input.clone(),
                preact,
            },
        )
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input. `d_out` is the loss gradient at the
    /// layer output.
    pub fn backward(&self, cache: &DenseCache, d_out: &Tensor2, grad: &mut DenseGrad) -> Tensor2 {
        assert_eq!(d_out.rows, cache.input.rows, "dense backward: batch mismatch");
        assert_eq!(d_out.cols, self.output_dim(), "dense backward: output dim mismatch");
        let mut dz = d_out.clone();
        for (dzv, zv) in dz.data.iter_mut().zip(cache.preact.data.iter()) {
            *dzv *= self.act.derivative(*zv);
        }
        outer_acc(&mut grad.weights, &dz, &cache.input);
        for b in 0..dz.rows {
            for (gb, dzv) in grad.bias.iter_mut().zip(dz.row(b).iter()) {
                *gb += dzv;
            }
        }
        let mut d_input = Tensor2::zeros(cache.input.rows, self.input_dim());
        backprop_acc(&mut d_input, &dz, &self.weights);
        d_input
    }
}

impl ParamNet for Dense {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.weights.data, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights.data, &mut self.bias]
    }
}

impl DenseGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![&self.weights.data, &self.bias]
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.data.iter_mut() {
            *v *= s;
        }
        for v in self.bias.iter_mut() {
            *v *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_forward_known_values() {
        let mut rng = RngStream::from_seed(3);
        let mut layer = Dense::new(&mut rng, 2, 2, Activation::Relu);
        layer.weights = Tensor2::from_rows(vec![vec![1.0, -1.0], vec![0.5, 0.5]]);
        layer.bias = vec![0.0, -2.0];
        let x = Tensor2::from_rows(vec![vec![3.0, 1.0]]);
        let (y, cache) = layer.forward(&x);
        assert_eq!(y.row(0), &[2.0, 0.0], "relu output mismatch");
        assert_eq!(cache.preact.row(0), &[2.0, 0.0]);
    }

    #[test]
    fn test_backward_matches_manual_chain_rule() {
        let mut rng = RngStream::from_seed(4);
        let mut layer = Dense::new(&mut rng, 2, 1, Activation::Identity);
        layer.weights = Tensor2::from_rows(vec![vec![2.0, -1.0]]);
        layer.bias = vec![0.5];
        let x = Tensor2::from_rows(vec![vec![1.0, 4.0]]);
        let (_, cache) = layer.forward(&x);
        let mut grad = layer.grad_zeros();
        let d_out = Tensor2::from_rows(vec![vec![3.0]]);
        let d_in = layer.backward(&cache, &d_out, &mut grad);
        assert_eq!(grad.weights.row(0), &[3.0, 12.0], "dw = d_out * x");
        assert_eq!(grad.bias, vec![3.0]);
        assert_eq!(d_in.row(0), &[6.0, -3.0], "dx = d_out * w");
    }

    #[test]
    fn test_relu_blocks_gradient_below_zero() {
        let mut rng = RngStream::from_seed(5);
        let mut layer = Dense::new(&mut rng, 1, 1, Activation::Relu);
        layer.weights = Tensor2::from_rows(vec![vec![1.0]]);
        layer.bias = vec![-5.0];
        let x = Tensor2::from_rows(vec![vec![1.0]]);
        let (y, cache) = layer.forward(&x);
        assert_eq!(y.row(0), &[0.0]);
        let mut grad = layer.grad_zeros();
        let d_in = layer.backward(&cache, &Tensor2::from_rows(vec![vec![1.0]]), &mut grad);
        assert_eq!(grad.weights.row(0), &[0.0], "dead relu leaks weight grad");
        assert_eq!(d_in.row(0), &[0.0], "dead relu leaks input grad");
    }

    #[test]
    fn test_init_respects_fan_in_bound() {
        let mut rng = RngStream::from_seed(6);
        let layer = Dense::new(&mut rng, 16, 32, Activation::Tanh);
        let bound = 1.0 / 4.0;
        for &w in layer.weights.data.iter().chain(layer.bias.iter()) {
            assert!(w.abs() <= bound, "init value {w} outside +-{bound}");
        }
        let spread = layer.weights.data.iter().cloned().fold(0.0_f64, f64::max);
        assert!(spread > bound * 0.5, "init suspiciously concentrated near zero");
    }

    #[test]
    fn test_batch_rows_independent() {
        let mut rng = RngStream::from_seed(7);
        let layer = Dense::new(&mut rng, 3, 2, Activation::Tanh);
        let x = Tensor2::from_rows(vec![vec![0.1, -0.2, 0.3], vec![1.0, 0.5, -0.5]]);
        let (y, _) = layer.forward(&x);
        let (y0, _) = layer.forward(&Tensor2::from_rows(vec![vec![0.1, -0.2, 0.3]]));
        assert_eq!(y.row(0), y0.row(0), "batched row differs from solo forward");
    }
}
