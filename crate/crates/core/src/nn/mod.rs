//! Minimal dense/LSTM network toolkit with hand-written reverse-mode
//! gradients, Adam, finite-difference gradient checking, and JSON
//! checkpoints.
//!
//! Everything is 64-bit and allocation is explicit; there is no autograd
//! tape. Each layer's `forward` returns the activation plus a cache, and
//! `backward` consumes the cache and an upstream gradient, accumulating
//! parameter gradients into a mirror struct. Batches are row-major
//! [`Tensor2`] values, one row per sample.
//!
//! Shape mismatches are programmer errors and panic; they are not part of
//! any recoverable control flow.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod lstm;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointEntry};
pub use dense::{Dense, DenseCache, DenseGrad};
pub use gradcheck::finite_diff_max_rel_err;
pub use lstm::{Lstm, LstmCache, LstmGrad};

use crate::rng::RngStream;

/// Dense row-major matrix of `rows x cols` f64 values; one row per sample
/// when used as a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Tensor2 {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// Uniform init on `[-bound, bound]`.
    pub fn uniform(rng: &mut RngStream, rows: usize, cols: usize, bound: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.range(-bound, bound)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }
}

/// `out[b] += x[b] * w^T`, i.e. `out[b][o] += dot(x.row(b), w.row(o))`.
pub(crate) fn matmul_acc(out: &mut Tensor2, x: &Tensor2, w: &Tensor2) {
    assert_eq!(x.rows, out.rows, "matmul_acc: batch mismatch");
    assert_eq!(x.cols, w.cols, "matmul_acc: inner dim mismatch");
    assert_eq!(w.rows, out.cols, "matmul_acc: output dim mismatch");
    for b in 0..x.rows {
        let xb = x.row(b);
        let ob = out.row_mut(b);
        for (o, out_v) in ob.iter_mut().enumerate() {
            let wr = w.row(o);
            let mut acc = 0.0;
            for (xi, wi) in xb.iter().zip(wr.iter()) {
                acc += xi * wi;
            }
            *out_v += acc;
        }
    }
}

/// `dw[o] += sum_b dz[b][o] * x[b]` (outer-product accumulation).
pub(crate) fn outer_acc(dw: &mut Tensor2, dz: &Tensor2, x: &Tensor2) {
    assert_eq!(dz.rows, x.rows, "outer_acc: batch mismatch");
    assert_eq!(dw.rows, dz.cols, "outer_acc: output dim mismatch");
    assert_eq!(dw.cols, x.cols, "outer_acc: input dim mismatch");
    for b in 0..dz.rows {
        let xb = x.row(b);
        let dzb = dz.row(b);
        for (o, &g) in dzb.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (dwi, xi) in dw.row_mut(o).iter_mut().zip(xb.iter()) {
                *dwi += g * xi;
            }
        }
    }
}

/// `dx[b] += sum_o dz[b][o] * w[o]` (push a gradient through the weights).
pub(crate) fn backprop_acc(dx: &mut Tensor2, dz: &Tensor2, w: &Tensor2) {
    assert_eq!(dz.rows, dx.rows, "backprop_acc: batch mismatch");
    assert_eq!(w.rows, dz.cols, "backprop_acc: output dim mismatch");
    assert_eq!(w.cols, dx.cols, "backprop_acc: input dim mismatch");
    for b in 0..dz.rows {
        let dzb = dz.row(b);
        let dxb = dx.row_mut(b);
        for (o, &g) in dzb.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (dxi, wi) in dxb.iter_mut().zip(w.row(o).iter()) {
                *dxi += g * wi;
            }
        }
    }
}

/// Activation applied elementwise by a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Flat parameter access shared by layers and whole networks; the basis for
/// Adam, soft target updates, checkpoints, and finite-difference checks.
pub trait ParamNet {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_params(&self) -> usize {
        self.params().iter().map(|s| s.len()).sum()
    }

    fn get_param(&self, mut idx: usize) -> f64 {
        for s in self.params() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    fn set_param(&mut self, mut idx: usize, v: f64) {
        for s in self.params_mut() {
            if idx < s.len() {
                s[idx] = v;
                return;
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }
}

/// Flatten a gradient mirror into one vector ordered like `ParamNet::params`.
pub fn flatten_grads(slices: &[&[f64]]) -> Vec<f64> {
    slices.iter().flat_map(|s| s.iter().copied()).collect()
}

/// `target = tau * online + (1 - tau) * target`, elementwise over all
/// parameters. Panics if the two networks disagree in shape.
pub fn soft_update<N: ParamNet>(target: &mut N, online: &N, tau: f64) {
    assert!((0.0..=1.0).contains(&tau), "soft_update: tau outside [0, 1]");
    let online_params = online.params();
    let mut target_params = target.params_mut();
    assert_eq!(
        online_params.len(),
        target_params.len(),
        "soft_update: parameter group mismatch"
    );
    for (t, o) in target_params.iter_mut().zip(online_params.iter()) {
        assert_eq!(t.len(), o.len(), "soft_update: parameter length mismatch");
        for (tv, ov) in t.iter_mut().zip(o.iter()) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
}
