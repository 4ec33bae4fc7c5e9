use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static STAMP: AtomicU64 = AtomicU64::new(1);

/// Fresh version stamp. Parameter holders take a new one on every mutation so
/// tapes recorded against older values are rejected.
pub fn next_stamp() -> u64 {
    STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "input of length {} for {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }
}

/// `y = W x + b`; the activation is applied by the caller.
#[derive(Clone, Debug)]
pub struct LinearLayer {
    weights: Matrix,
    bias: Vec<f64>,
    stamp: u64,
}

impl PartialEq for LinearLayer {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.bias == other.bias
    }
}

/// Cached input of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTape {
    input: Vec<f64>,
    stamp: u64,
}

impl LinearTape {
    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::ShapeMismatch(format!(
                "bias of length {} for {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(LinearLayer {
            weights,
            bias,
            stamp: next_stamp(),
        })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LinearLayer {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            stamp: next_stamp(),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and bias.
    pub fn init_uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let mut layer = LinearLayer::zeros(out_dim, in_dim);
        for w in layer.weights.as_mut_slice() {
            *w = rng.random_range(-bound..=bound);
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, LinearTape)> {
        let y = self.apply(x)?;
        Ok((
            y,
            LinearTape {
                input: x.to_vec(),
                stamp: self.stamp,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weights.matvec(x)?;
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(y)
    }

    pub fn check_tape(&self, tape: &LinearTape) -> Result<()> {
        if tape.stamp != self.stamp || tape.input.len() != self.in_dim() {
            return Err(Error::StaleTape);
        }
        Ok(())
    }

    pub fn backward(&self, tape: &LinearTape, upstream: &[f64]) -> Result<LinearGrads> {
        self.check_tape(tape)?;
        let mut grads = LinearGrads {
            weights: Matrix::zeros(self.out_dim(), self.in_dim()),
            bias: vec![0.0; self.out_dim()],
            input: vec![0.0; self.in_dim()],
        };
        self.accumulate_backward(
            &tape.input,
            upstream,
            grads.weights.as_mut_slice(),
            &mut grads.bias,
            Some(&mut grads.input),
        )?;
        Ok(grads)
    }

    /// Adds parameter gradients for one (input, upstream) pair into flat
    /// buffers laid out like `write_flat` (weights then bias). The input
    /// gradient, when requested, is accumulated too.
    pub fn accumulate_backward(
        &self,
        input: &[f64],
        upstream: &[f64],
        d_weights: &mut [f64],
        d_bias: &mut [f64],
        d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        let (rows, cols) = (self.out_dim(), self.in_dim());
        if upstream.len() != rows || input.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "backward through {rows}x{cols} layer with upstream {} and input {}",
                upstream.len(),
                input.len()
            )));
        }
        for (r, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            d_bias[r] += g;
            let row = &mut d_weights[r * cols..(r + 1) * cols];
            for (dw, x) in row.iter_mut().zip(input) {
                *dw += g * x;
            }
        }
        if let Some(d_input) = d_input {
            for (r, &g) in upstream.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (dx, w) in d_input.iter_mut().zip(self.weights.row(r)) {
                    *dx += g * w;
                }
            }
        }
        Ok(())
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }

    /// Overwrites weights then bias from `src`; returns the count consumed.
    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        let n = self.param_count();
        if src.len() < n {
            return Err(Error::ShapeMismatch(format!(
                "need {n} values, got {}",
                src.len()
            )));
        }
        let nw = self.weights.as_slice().len();
        self.weights.as_mut_slice().copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..n]);
        self.stamp = next_stamp();
        Ok(n)
    }
}

impl LinearGrads {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpTape {
    tapes: Vec<LinearTape>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LinearGrads>,
    pub input: Vec<f64>,
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            g.write_flat(&mut out);
        }
        out
    }
}

impl Mlp {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("mlp layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// `dims = [input, hidden..., output]`.
    pub fn init_uniform<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter("mlp needs at least two dims".into()));
        }
        Mlp::new(
            dims.windows(2)
                .map(|d| LinearLayer::init_uniform(d[1], d[0], rng))
                .collect(),
        )
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LinearLayer::param_count).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
        let mut tapes = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (z, tape) = layer.forward(&h)?;
            tapes.push(tape);
            if i < last {
                h = super::relu(&z);
                pre.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, MlpTape { tapes, pre }))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h)?;
            h = if i < last { super::relu(&z) } else { z };
        }
        Ok(h)
    }

    pub fn backward(&self, tape: &MlpTape, upstream: &[f64]) -> Result<MlpGrads> {
        if tape.tapes.len() != self.layers.len() {
            return Err(Error::StaleTape);
        }
        for (layer, t) in self.layers.iter().zip(&tape.tapes) {
            layer.check_tape(t)?;
        }
        let mut grads: Vec<LinearGrads> = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let lg = self.layers[i].backward(&tape.tapes[i], &g)?;
            g = lg.input.clone();
            if i > 0 {
                for (gv, z) in g.iter_mut().zip(&tape.pre[i - 1]) {
                    if *z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            grads.push(lg);
        }
        grads.reverse();
        Ok(MlpGrads {
            layers: grads,
            input: g,
        })
    }

    /// Adds the parameter gradient into `grad` (laid out like `flat`) and
    /// returns the input gradient.
    pub fn accumulate_backward(&self, tape: &MlpTape, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if tape.tapes.len() != self.layers.len() {
            return Err(Error::StaleTape);
        }
        if grad.len() != self.param_count() {
            return Err(Error::ShapeMismatch("mlp gradient buffer length".into()));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for (layer, t) in self.layers.iter().zip(&tape.tapes) {
            layer.check_tape(t)?;
            offsets.push(off);
            off += layer.param_count();
        }
        let mut g = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let w_len = layer.out_dim() * layer.in_dim();
            let (dw, rest) = grad[offsets[i]..offsets[i] + layer.param_count()].split_at_mut(w_len);
            let mut d_in = vec![0.0; layer.in_dim()];
            layer.accumulate_backward(&tape.tapes[i].input, &g, dw, rest, Some(&mut d_in))?;
            if i > 0 {
                for (gv, z) in d_in.iter_mut().zip(&tape.pre[i - 1]) {
                    if *z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = d_in;
        }
        Ok(g)
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.write_flat(&mut out);
        }
        out
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat vector of {} for {} parameters",
                src.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            offset += l.read_flat(&src[offset..])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    #[test]
    fn linear_forward_examples() {
        let id = LinearLayer::new(Matrix::from_rows(&[vec![1., 0.], vec![0., 1.]]).unwrap(), vec![0., 0.]).unwrap();
        assert_eq!(id.forward(&[3., 4.]).unwrap().0, vec![3., 4.]);
        let diag = LinearLayer::new(Matrix::from_rows(&[vec![2., 0.], vec![0., 3.]]).unwrap(), vec![1., -1.]).unwrap();
        assert_eq!(diag.forward(&[1., 1.]).unwrap().0, vec![3., 2.]);
        let zero = LinearLayer::new(Matrix::from_rows(&[vec![0., 0.]]).unwrap(), vec![5.]).unwrap();
        assert_eq!(zero.forward(&[9., 9.]).unwrap().0, vec![5.]);
    }

    #[test]
    fn linear_forward_rejects_bad_shape() {
        let l = LinearLayer::zeros(2, 3);
        assert!(matches!(l.forward(&[1.0]), Err(Error::ShapeMismatch(_))));
        assert!(LinearLayer::new(Matrix::zeros(2, 2), vec![0.0]).is_err());
    }

    #[test]
    fn single_layer_backward_base_case() {
        let l = LinearLayer::new(Matrix::from_rows(&[vec![0.5, -2.0, 1.0]]).unwrap(), vec![0.1]).unwrap();
        let x = [1.5, -0.5, 2.0];
        let (_, tape) = l.forward(&x).unwrap();
        let g = l.backward(&tape, &[1.0]).unwrap();
        assert_eq!(g.weights.as_slice(), &x);
        assert_eq!(g.bias, vec![1.0]);
        assert_eq!(g.input, vec![0.5, -2.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = stream(3, 0, 0);
        let net = Mlp::init_uniform(&[4, 6, 3], &mut rng).unwrap();
        let (_, tape) = net.forward(&[0.3, -0.2, 0.9, 0.1]).unwrap();
        let g = net.backward(&tape, &[0.0; 3]).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = stream(4, 0, 0);
        let mut net = Mlp::init_uniform(&[2, 3, 1], &mut rng).unwrap();
        let (_, tape) = net.forward(&[0.5, 0.5]).unwrap();
        let flat = net.flat();
        net.set_flat(&flat).unwrap();
        assert!(matches!(net.backward(&tape, &[1.0]), Err(Error::StaleTape)));

        let layer = LinearLayer::zeros(1, 2);
        let other = LinearLayer::zeros(1, 2);
        let (_, t) = layer.forward(&[1.0, 1.0]).unwrap();
        assert!(matches!(other.backward(&t, &[1.0]), Err(Error::StaleTape)));
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = stream(5, 0, 0);
        let net = Mlp::init_uniform(&[3, 4, 2], &mut rng).unwrap();
        let flat = net.flat();
        assert_eq!(flat.len(), net.param_count());
        let mut other = Mlp::init_uniform(&[3, 4, 2], &mut rng).unwrap();
        other.set_flat(&flat).unwrap();
        assert_eq!(other, net);
    }
}
