//! Single-layer LSTM over a fixed-length step sequence, with full
//! backpropagation through time.
//!
//! The layer consumes `J` input frames and exposes only the final hidden
//! state; callers stack dense layers on top of that. Gradients flow into
//! the gate weights and biases. Gradients with respect to the input frames
//! are not materialized because the LSTM always sits first in our networks.

use super::{backprop_acc, matmul_acc, outer_acc, ParamNet, Tensor2};
use crate::rng::RngStream;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// LSTM parameters. Each gate weight is `hidden x (input + hidden)` and
/// multiplies the concatenation `[x_t | h_{t-1}]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_forget: Tensor2,
    pub w_input: Tensor2,
    pub w_output: Tensor2,
    pub w_cell: Tensor2,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_output: Vec<f64>,
    pub b_cell: Vec<f64>,
    input_dim: usize,
    hidden_dim: usize,
}

#[derive(Debug, Clone)]
struct StepCache {
    /// Concatenated `[x_t | h_{t-1}]`, batch x (input + hidden).
    z: Tensor2,
    forget: Tensor2,
    input: Tensor2,
    output: Tensor2,
    cell_cand: Tensor2,
    cell: Tensor2,
    cell_tanh: Tensor2,
}

/// Forward-pass state needed by [`Lstm::backward`].
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
    batch: usize,
}

/// Gradient accumulator mirroring [`Lstm`].
#[derive(Debug, Clone)]
pub struct LstmGrad {
    pub w_forget: Tensor2,
    pub w_input: Tensor2,
    pub w_output: Tensor2,
    pub w_cell: Tensor2,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_output: Vec<f64>,
    pub b_cell: Vec<f64>,
}

impl Lstm {
    /// Initializes gate weights uniformly on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// with `fan_in = input + hidden`. The forget-gate bias starts at 1 so
    /// early training preserves cell state; other biases follow the weights.
    pub fn new(rng: &mut RngStream, input_dim: usize, hidden_dim: usize) -> Self {
        assert!(input_dim > 0 && hidden_dim > 0, "lstm dims must be positive");
        let fan_in = input_dim + hidden_dim;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = |rng: &mut RngStream| Tensor2::uniform(rng, hidden_dim, fan_in, bound);
        let bias = |rng: &mut RngStream| -> Vec<f64> {
            (0..hidden_dim).map(|_| rng.range(-bound, bound)).collect()
        };
        Lstm {
            w_forget: weight(rng),
            w_input: weight(rng),
            w_output: weight(rng),
            w_cell: weight(rng),
            b_forget: vec![1.0; hidden_dim],
            b_input: bias(rng),
            b_output: bias(rng),
            b_cell: bias(rng),
            input_dim,
            hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn grad_zeros(&self) -> LstmGrad {
        let w = || Tensor2::zeros(self.hidden_dim, self.input_dim + self.hidden_dim);
        LstmGrad {
            w_forget: w(),
            w_input: w(),
            w_output: w(),
            w_cell: w(),
            b_forget: vec![0.0; self.hidden_dim],
            b_input: vec![0.0; self.hidden_dim],
            b_output: vec![0.0; self.hidden_dim],
            b_cell: vec![0.0; self.hidden_dim],
        }
    }

    fn gate(&self, z: &Tensor2, w: &Tensor2, b: &[f64], squash: impl Fn(f64) -> f64) -> Tensor2 {
        let mut pre = Tensor2::zeros(z.rows, self.hidden_dim);
        for r in 0..pre.rows {
            pre.row_mut(r).copy_from_slice(b);
        }
        matmul_acc(&mut pre, z, w);
        for v in pre.data.iter_mut() {
            *v = squash(*v);
        }
        pre
    }

    /// Runs the cell over `steps` (oldest first), starting from zero hidden
    /// and cell state. Returns the final hidden state, batch x hidden.
    pub fn forward(&self, steps: &[Tensor2]) -> (Tensor2, LstmCache) {
        assert!(!steps.is_empty(), "lstm forward: empty sequence");
        let batch = steps[0].rows;
        let mut h = Tensor2::zeros(batch, self.hidden_dim);
        let mut c = Tensor2::zeros(batch, self.hidden_dim);
        let mut caches = Vec::with_capacity(steps.len());
        for x in steps {
            assert_eq!(x.rows, batch, "lstm forward: ragged batch");
            assert_eq!(x.cols, self.input_dim, "lstm forward: input dim mismatch");
            let mut z = Tensor2::zeros(batch, self.input_dim + self.hidden_dim);
            for b in 0..batch {
                let zb = z.row_mut(b);
                zb[..self.input_dim].copy_from_slice(x.row(b));
                zb[self.input_dim..].copy_from_slice(h.row(b));
            }
            let forget = self.gate(&z, &self.w_forget, &self.b_forget, sigmoid);
            let input = self.gate(&z, &self.w_input, &self.b_input, sigmoid);
            let output = self.gate(&z, &self.w_output, &self.b_output, sigmoid);
            let cell_cand = self.gate(&z, &self.w_cell, &self.b_cell, f64::tanh);
            let mut cell = Tensor2::zeros(batch, self.hidden_dim);
            for n in 0..cell.data.len() {
                cell.data[n] =
                    forget.data[n] * c.data[n] + input.data[n] * cell_cand.data[n];
            }
            let mut cell_tanh = cell.clone();
            for v in cell_tanh.data.iter_mut() {
                *v = v.tanh();
            }
            let mut h_next = Tensor2::zeros(batch, self.hidden_dim);
            for n in 0..h_next.data.len() {
                h_next.data[n] = output.data[n] * cell_tanh.data[n];
            }
            caches.push(StepCache {
                z,
                forget,
                input,
                output,
                cell_cand,
                cell: cell.clone(),
                cell_tanh,
            });
            h = h_next;
            c = cell;
        }
        (h, LstmCache { steps: caches, batch })
    }

    /// Backpropagates `d_h_last` (loss gradient at the final hidden state)
    /// through every step, accumulating parameter gradients into `grad`.
    pub fn backward(&self, cache: &LstmCache, d_h_last: &Tensor2, grad: &mut LstmGrad) {
        assert_eq!(d_h_last.rows, cache.batch, "lstm backward: batch mismatch");
        assert_eq!(d_h_last.cols, self.hidden_dim, "lstm backward: hidden dim mismatch");
        let batch = cache.batch;
        let mut dh = d_h_last.clone();
        let mut dc = Tensor2::zeros(batch, self.hidden_dim);
        for (t, step) in cache.steps.iter().enumerate().rev() {
            let prev_cell = if t > 0 {
                Some(&cache.steps[t - 1].cell)
            } else {
                None
            };
            let n_total = batch * self.hidden_dim;
            let mut da_forget = Tensor2::zeros(batch, self.hidden_dim);
            let mut da_input = Tensor2::zeros(batch, self.hidden_dim);
            let mut da_output = Tensor2::zeros(batch, self.hidden_dim);
            let mut da_cell = Tensor2::zeros(batch, self.hidden_dim);
            for n in 0..n_total {
                let o = step.output.data[n];
                let tau = step.cell_tanh.data[n];
                let f = step.forget.data[n];
                let i = step.input.data[n];
                let cand = step.cell_cand.data[n];
                let c_prev = prev_cell.map_or(0.0, |p| p.data[n]);
                let dcell = dc.data[n] + dh.data[n] * o * (1.0 - tau * tau);
                da_output.data[n] = dh.data[n] * tau * o * (1.0 - o);
                da_forget.data[n] = dcell * c_prev * f * (1.0 - f);
                da_input.data[n] = dcell * cand * i * (1.0 - i);
                da_cell.data[n] = dcell * i * (1.0 - cand * cand);
                dc.data[n] = dcell * f;
            }
            outer_acc(&mut grad.w_forget, &da_forget, &step.z);
            outer_acc(&mut grad.w_input, &da_input, &step.z);
            outer_acc(&mut grad.w_output, &da_output, &step.z);
            outer_acc(&mut grad.w_cell, &da_cell, &step.z);
            for b in 0..batch {
                for h_idx in 0..self.hidden_dim {
                    grad.b_forget[h_idx] += da_forget.row(b)[h_idx];
                    grad.b_input[h_idx] += da_input.row(b)[h_idx];
                    grad.b_output[h_idx] += da_output.row(b)[h_idx];
                    grad.b_cell[h_idx] += da_cell.row(b)[h_idx];
                }
            }
            if t > 0 {
                let mut dz = Tensor2::zeros(batch, self.input_dim + self.hidden_dim);
                backprop_acc(&mut dz, &da_forget, &self.w_forget);
                backprop_acc(&mut dz, &da_input, &self.w_input);
                backprop_acc(&mut dz, &da_output, &self.w_output);
                backprop_acc(&mut dz, &da_cell, &self.w_cell);
                dh = Tensor2::zeros(batch, self.hidden_dim);
                for b in 0..batch {
                    dh.row_mut(b)
                        .copy_from_slice(&dz.row(b)[self.input_dim..]);
                }
            }
        }
    }
}

impl ParamNet for Lstm {
    fn params(&self) -> Vec<&[f64]> {
        vec![
            &self.w_forget.data,
            &self.w_input.data,
            &self.w_output.data,
            &self.w_cell.data,
            &self.b_forget,
            &self.b_input,
            &self.b_output,
            &self.b_cell,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_forget.data,
            &mut self.w_input.data,
            &mut self.w_output.data,
            &mut self.w_cell.data,
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_output,
            &mut self.b_cell,
        ]
    }
}

impl LstmGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![
            &self.w_forget.data,
            &self.w_input.data,
            &self.w_output.data,
            &self.w_cell.data,
            &self.b_forget,
            &self.b_input,
            &self.b_output,
            &self.b_cell,
        ]
    }

    pub fn scale(&mut self, s: f64) {
        for w in [
            &mut self.w_forget,
            &mut self.w_input,
            &mut self.w_output,
            &mut self.w_cell,
        ] {
            for v in w.data.iter_mut() {
                *v *= s;
            }
        }
        for b in [
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_output,
            &mut self.b_cell,
        ] {
            for v in b.iter_mut() {
                *v *= s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::finite_diff_max_rel_err;
    use super::*;

    #[test]
    fn test_forget_bias_starts_at_one() {
        let mut rng = RngStream::from_seed(8);
        let cell = Lstm::new(&mut rng, 4, 6);
        assert!(cell.b_forget.iter().all(|&b| b == 1.0));
        assert!(cell.b_input.iter().any(|&b| b != 1.0), "input bias not randomized");
    }

    #[test]
    fn test_single_step_matches_manual_formulas() {
        let mut rng = RngStream::from_seed(9);
        let mut cell = Lstm::new(&mut rng, 1, 1);
        cell.w_forget = Tensor2::from_rows(vec![vec![0.5, 0.0]]);
        cell.w_input = Tensor2::from_rows(vec![vec![-0.3, 0.0]]);
        cell.w_output = Tensor2::from_rows(vec![vec![0.2, 0.0]]);
        cell.w_cell = Tensor2::from_rows(vec![vec![1.0, 0.0]]);
        cell.b_forget = vec![1.0];
        cell.b_input = vec![0.1];
        cell.b_output = vec![-0.2];
        cell.b_cell = vec![0.0];
        let x = 0.7;
        let (h, _) = cell.forward(&[Tensor2::from_rows(vec![vec![x]])]);
        let i = sigmoid(-0.3 * x + 0.1);
        let o = sigmoid(0.2 * x - 0.2);
        let cand = (1.0 * x).tanh();
        let expected = o * (i * cand).tanh();
        assert!(
            (h.row(0)[0] - expected).abs() < 1e-15,
            "lstm step {} vs manual {expected}",
            h.row(0)[0]
        );
    }

    #[test]
    fn test_two_steps_carry_state() {
        let mut rng = RngStream::from_seed(10);
        let cell = Lstm::new(&mut rng, 2, 3);
        let a = Tensor2::from_rows(vec![vec![0.5, -0.5]]);
        let b = Tensor2::from_rows(vec![vec![-0.1, 0.9]]);
        let (h_two, _) = cell.forward(&[a.clone(), b.clone()]);
        let (h_only_b, _) = cell.forward(&[b]);
        let differs = h_two
            .row(0)
            .iter()
            .zip(h_only_b.row(0).iter())
            .any(|(x, y)| (x - y).abs() > 1e-12);
        assert!(differs, "first step left no trace in the second step's output");
    }

    #[test]
    fn test_bptt_gradients_match_finite_differences() {
        let mut rng = RngStream::from_seed(11);
        let mut cell = Lstm::new(&mut rng, 3, 4);
        let steps: Vec<Tensor2> = (0..3)
            .map(|_| {
                Tensor2::from_rows(vec![
                    (0..3).map(|_| rng.range(-1.0, 1.0)).collect(),
                    (0..3).map(|_| rng.range(-1.0, 1.0)).collect(),
                ])
            })
            .collect();
        let mask: Vec<f64> = (0..2 * 4).map(|_| rng.range(-1.0, 1.0)).collect();
        let loss = |net: &Lstm| -> f64 {
            let (h, _) = net.forward(&steps);
            h.data.iter().zip(mask.iter()).map(|(v, m)| v * m).sum()
        };
        let (h, cache) = cell.forward(&steps);
        let mut grad = cell.grad_zeros();
        let d_h = Tensor2 {
            rows: h.rows,
            cols: h.cols,
            data: mask.clone(),
        };
        cell.backward(&cache, &d_h, &mut grad);
        let analytic = super::super::flatten_grads(&grad.slices());
        let n = cell.n_params();
        let indices: Vec<usize> = (0..n).step_by(7).collect();
        let err = finite_diff_max_rel_err(&mut cell, &analytic, &indices, 1e-5, loss);
        assert!(err < 1e-6, "bptt rel err {err} exceeds 1e-6");
    }

    #[test]
    #[should_panic(expected = "empty sequence")]
    fn test_empty_sequence_panics() {
        let mut rng = RngStream::from_seed(12);
        let cell = Lstm::new(&mut rng, 2, 2);
        cell.forward(&[]);
    }
}
