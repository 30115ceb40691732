use nalgebra::DMatrix;
use rand::Rng;

use crate::rng::BoxMuller;

/// `x ↦ vᵀ ReLU(W x + b) + c` with `W` stored row-major (`hidden x input`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    input_dim: usize,
    hidden: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    pub c: f64,
}

impl Mlp2 {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w: vec![0.0; hidden * input_dim],
            b: vec![0.0; hidden],
            v: vec![0.0; hidden],
            c: 0.0,
        }
    }

    /// Every parameter drawn from `N(0, std²)`.
    pub fn gaussian(input_dim: usize, hidden: usize, std: f64, g: &mut BoxMuller) -> Self {
        let mut m = Self::zeros(input_dim, hidden);
        m.params_mut(|p| *p = std * g.next_normal());
        m
    }

    /// Each layer's weights and bias uniform in `±1/√fan_in`.
    pub fn uniform_fan_in<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden);
        let a1 = 1.0 / (input_dim as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        m.w.iter_mut().chain(m.b.iter_mut()).for_each(|p| *p = rng.gen_range(-a1..a1));
        m.v.iter_mut().for_each(|p| *p = rng.gen_range(-a2..a2));
        m.c = rng.gen_range(-a2..a2);
        m
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + 2 * self.hidden + 1
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut out = self.c;
        for j in 0..self.hidden {
            let row = &self.w[j * self.input_dim..(j + 1) * self.input_dim];
            let pre = self.b[j] + dot(row, x);
            if pre > 0.0 {
                out += self.v[j] * pre;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(&self.b)
            .chain(&self.v)
            .chain(std::iter::once(&self.c))
            .all(|p| p.is_finite())
    }

    /// Visits weights `w`, `v` (not biases).
    pub fn weights(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(&self.v)
    }

    fn params_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.w.iter_mut().for_each(&mut f);
        self.b.iter_mut().for_each(&mut f);
        self.v.iter_mut().for_each(&mut f);
        f(&mut self.c);
    }

    /// Forward pass over a batch (`out.len()` points, row-major with stride
    /// `stride`, starting at column `offset`), adding outputs into `out` and
    /// keeping what [`Mlp2::backward`] needs in `cache`.
    pub(crate) fn forward_batch(
        &self,
        x: &[f64],
        stride: usize,
        offset: usize,
        out: &mut [f64],
        cache: &mut BatchCache,
    ) {
        let rows = out.len();
        let d = self.input_dim;
        cache.x = DMatrix::from_fn(rows, d, |i, k| x[i * stride + offset + k]);
        let w = DMatrix::from_row_slice(self.hidden, d, &self.w);
        cache.pre = &cache.x * w.transpose();
        for j in 0..self.hidden {
            let (bj, vj) = (self.b[j], self.v[j]);
            for (i, p) in cache.pre.column_mut(j).iter_mut().enumerate() {
                *p += bj;
                if *p > 0.0 {
                    out[i] += vj * *p;
                }
            }
        }
        out.iter_mut().for_each(|o| *o += self.c);
    }

    /// Gradient of `Σ_i r_i f(x_i)` given the cache from `forward_batch`.
    pub(crate) fn backward(&self, r: &[f64], cache: &BatchCache, grad: &mut Mlp2) {
        let mut delta = DMatrix::zeros(r.len(), self.hidden);
        grad.c = r.iter().sum();
        for j in 0..self.hidden {
            let (mut gv, mut gb) = (0.0, 0.0);
            let vj = self.v[j];
            let pre = cache.pre.column(j);
            let mut dcol = delta.column_mut(j);
            for (i, &ri) in r.iter().enumerate() {
                let p = pre[i];
                if p > 0.0 {
                    gv += ri * p;
                    let dh = ri * vj;
                    gb += dh;
                    dcol[i] = dh;
                }
            }
            grad.v[j] = gv;
            grad.b[j] = gb;
        }
        // Row-major `hidden x input` is the column-major layout of its transpose.
        let gw_t = cache.x.transpose() * &delta;
        grad.w.copy_from_slice(gw_t.as_slice());
    }

    /// Zipped in-place update over matching parameters of `self`, `a`, `b`.
    pub(crate) fn zip3(&mut self, a: &mut Mlp2, b: &Mlp2, mut f: impl FnMut(&mut f64, &mut f64, f64, bool)) {
        for ((p, q), &r) in self.w.iter_mut().zip(a.w.iter_mut()).zip(&b.w) {
            f(p, q, r, true);
        }
        for ((p, q), &r) in self.b.iter_mut().zip(a.b.iter_mut()).zip(&b.b) {
            f(p, q, r, false);
        }
        for ((p, q), &r) in self.v.iter_mut().zip(a.v.iter_mut()).zip(&b.v) {
            f(p, q, r, true);
        }
        f(&mut self.c, &mut a.c, b.c, false);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inputs and pre-activations of the last batch.
#[derive(Debug, Clone)]
pub(crate) struct BatchCache {
    x: DMatrix<f64>,
    pre: DMatrix<f64>,
}

impl Default for BatchCache {
    fn default() -> Self {
        Self {
            x: DMatrix::zeros(0, 0),
            pre: DMatrix::zeros(0, 0),
        }
    }
}

/// The unstructured network computing `f₁(x₁) + f₂(x₂)` exactly: a
/// block-diagonal first layer over the concatenated input.
pub fn embed_structured(f1: &Mlp2, f2: &Mlp2) -> Mlp2 {
    let (d1, d2) = (f1.input_dim, f2.input_dim);
    let d = d1 + d2;
    let h = f1.hidden + f2.hidden;
    let mut m = Mlp2::zeros(d, h);
    for j in 0..f1.hidden {
        m.w[j * d..j * d + d1].copy_from_slice(&f1.w[j * d1..(j + 1) * d1]);
        m.b[j] = f1.b[j];
        m.v[j] = f1.v[j];
    }
    for j in 0..f2.hidden {
        let row = f1.hidden + j;
        m.w[row * d + d1..(row + 1) * d].copy_from_slice(&f2.w[j * d2..(j + 1) * d2]);
        m.b[row] = f2.b[j];
        m.v[row] = f2.v[j];
    }
    m.c = f1.c + f2.c;
    m
}
