//! Fully connected tanh network propagating truncated Taylor jets.
//!
//! A [`Jet`] carries, per neuron, the value and three derivative channels:
//! first and second order along one input direction (`d1`, `d2`) and first
//! order along another (`db`). Parameter gradients of any function of the
//! output channels come from a reverse pass over the recorded [`Tape`].

use alloc::vec::Vec;

use rand::Rng;

use crate::math;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub db: Vec<f64>,
}

impl Jet {
    pub fn with_capacity(n: usize, derivs: bool) -> Self {
        let m = if derivs { n } else { 0 };
        Jet {
            v: Vec::with_capacity(n),
            d1: Vec::with_capacity(m),
            d2: Vec::with_capacity(m),
            db: Vec::with_capacity(m),
        }
    }

    pub fn has_derivs(&self) -> bool {
        !self.d1.is_empty()
    }

    fn zeros(n: usize, derivs: bool) -> Self {
        let m = if derivs { n } else { 0 };
        Jet {
            v: alloc::vec![0.0; n],
            d1: alloc::vec![0.0; m],
            d2: alloc::vec![0.0; m],
            db: alloc::vec![0.0; m],
        }
    }
}

/// Output channels `[value, d1, d2, db]` of a scalar network.
pub type Out4 = [f64; 4];

/// Per-layer record of the forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// Input jet of every layer.
    inputs: Vec<Jet>,
    /// For hidden layers: `v = tanh(z)`, derivative channels hold `z`'s.
    acts: Vec<Jet>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

impl Mlp {
    /// `depth` hidden tanh layers of `width` neurons and a linear scalar
    /// output; `depth = 0` is a single affine map.
    pub fn new(input: usize, width: usize, depth: usize) -> Self {
        let mut sizes = alloc::vec![input];
        sizes.extend(core::iter::repeat_n(width, depth));
        sizes.push(1);
        Mlp { sizes }
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block; biases follow the weights.
    fn offset(&self, l: usize) -> usize {
        self.sizes[..=l]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Xavier-uniform weights, zero biases. With `zero_output`, the last
    /// layer starts at zero so the network is initially identically zero.
    pub fn xavier_init<R: Rng + ?Sized>(&self, rng: &mut R, zero_output: bool) -> Vec<f64> {
        let mut p = alloc::vec![0.0; self.n_params()];
        for l in 0..self.layers() {
            if zero_output && l + 1 == self.layers() {
                continue;
            }
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = math::sqrt(6.0 / (n_in + n_out) as f64);
            let off = self.offset(l);
            for w in &mut p[off..off + n_in * n_out] {
                *w = rng.random_range(-a..a);
            }
        }
        p
    }

    pub fn forward(&self, params: &[f64], input: Jet, mut tape: Option<&mut Tape>) -> Out4 {
        debug_assert_eq!(input.v.len(), self.sizes[0]);
        debug_assert_eq!(params.len(), self.n_params());
        let derivs = input.has_derivs();
        if let Some(t) = tape.as_deref_mut() {
            t.inputs.clear();
            t.acts.clear();
        }
        let mut a = input;
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z = Jet::zeros(n_out, derivs);
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                z.v[j] = b[j] + dot(row, &a.v);
                if derivs {
                    z.d1[j] = dot(row, &a.d1);
                    z.d2[j] = dot(row, &a.d2);
                    z.db[j] = dot(row, &a.db);
                }
            }
            if l == last {
                if let Some(t) = tape.as_deref_mut() {
                    t.inputs.push(a);
                }
                return if derivs {
                    [z.v[0], z.d1[0], z.d2[0], z.db[0]]
                } else {
                    [z.v[0], 0.0, 0.0, 0.0]
                };
            }
            let mut h = Jet::zeros(n_out, derivs);
            let mut act = Jet::zeros(n_out, derivs);
            for j in 0..n_out {
                let hv = math::tanh(z.v[j]);
                h.v[j] = hv;
                act.v[j] = hv;
                if derivs {
                    let s1 = 1.0 - hv * hv;
                    let s2 = -2.0 * hv * s1;
                    let (z1, z2, zb) = (z.d1[j], z.d2[j], z.db[j]);
                    h.d1[j] = s1 * z1;
                    h.d2[j] = s2 * z1 * z1 + s1 * z2;
                    h.db[j] = s1 * zb;
                    act.d1[j] = z1;
                    act.d2[j] = z2;
                    act.db[j] = zb;
                }
            }
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(a);
                t.acts.push(act);
            }
            a = h;
        }
        unreachable!("network has at least one layer")
    }

    /// Accumulates `∂(out_bar · out)/∂params` into `grad`.
    pub fn backward(&self, params: &[f64], tape: &Tape, out_bar: Out4, grad: &mut [f64]) {
        let derivs = tape.inputs[0].has_derivs();
        let mut bar = Jet::zeros(1, derivs);
        bar.v[0] = out_bar[0];
        if derivs {
            bar.d1[0] = out_bar[1];
            bar.d2[0] = out_bar[2];
            bar.db[0] = out_bar[3];
        }
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < self.layers() {
                // bar holds ∂/∂h; turn it into ∂/∂z through tanh.
                let act = &tape.acts[l];
                for j in 0..n_out {
                    let h = act.v[j];
                    let s1 = 1.0 - h * h;
                    if derivs {
                        let s2 = -2.0 * h * s1;
                        let s3 = -2.0 * s1 * s1 + 4.0 * h * h * s1;
                        let (z1, z2, zb) = (act.d1[j], act.d2[j], act.db[j]);
                        let (hv, h1, h2, hb) = (bar.v[j], bar.d1[j], bar.d2[j], bar.db[j]);
                        bar.v[j] = hv * s1 + h1 * s2 * z1 + h2 * (s3 * z1 * z1 + s2 * z2) + hb * s2 * zb;
                        bar.d1[j] = h1 * s1 + 2.0 * h2 * s2 * z1;
                        bar.d2[j] = h2 * s1;
                        bar.db[j] = hb * s1;
                    } else {
                        bar.v[j] *= s1;
                    }
                }
            }
            let a = &tape.inputs[l];
            let off = self.offset(l);
            let w = &params[off..off + n_in * n_out];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let row = &mut gw[j * n_in..(j + 1) * n_in];
                    axpy(bar.v[j], &a.v, row);
                    if derivs {
                        axpy(bar.d1[j], &a.d1, row);
                        axpy(bar.d2[j], &a.d2, row);
                        axpy(bar.db[j], &a.db, row);
                    }
                    gb[j] += bar.v[j];
                }
            }
            if l == 0 {
                break;
            }
            let mut next = Jet::zeros(n_in, derivs);
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                axpy(bar.v[j], row, &mut next.v);
                if derivs {
                    axpy(bar.d1[j], row, &mut next.d1);
                    axpy(bar.d2[j], row, &mut next.d2);
                    axpy(bar.db[j], row, &mut next.db);
                }
            }
            bar = next;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
