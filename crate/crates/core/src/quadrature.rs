//! Gauss–Legendre rules, barycentric Lagrange interpolation on their nodes and
//! the spectral integration matrix.

use alloc::vec::Vec;

use crate::math;

/// `n`-point Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Legendre `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let pi = core::f64::consts::PI;
        for i in 0..n.div_ceil(2) {
            let mut x = math::cos(pi * (i as f64 + 0.75) / (n as f64 + 0.5));
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // cos guess is descending; store ascending and mirror.
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights affinely mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        (
            self.nodes.iter().map(|&x| mid + half * x).collect(),
            self.weights.iter().map(|&w| half * w).collect(),
        )
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Barycentric weights `λ_j = (−1)^j √((1 − x_j²) w_j)`.
    pub fn barycentric_weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(j, (&x, &w))| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * math::sqrt((1.0 - x * x) * w)
            })
            .collect()
    }

    /// `Q[k][l] = ∫_{-1}^{ξ_k} ℓ_l(s) ds`, so `Q · f` gives the running
    /// integral of the interpolant at every node.
    pub fn integration_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let bw = self.barycentric_weights();
        let mut basis = alloc::vec![0.0; n];
        let mut q = alloc::vec![alloc::vec![0.0; n]; n];
        for k in 0..n {
            let (xs, ws) = self.mapped(-1.0, self.nodes[k]);
            for (&x, &w) in xs.iter().zip(&ws) {
                lagrange_basis(&self.nodes, &bw, x, &mut basis);
                for l in 0..n {
                    q[k][l] += w * basis[l];
                }
            }
        }
        q
    }
}

/// All Lagrange basis values at `x` (second barycentric form).
pub fn lagrange_basis(nodes: &[f64], bw: &[f64], x: f64, out: &mut [f64]) {
    if let Some(j) = nodes.iter().position(|&n| n == x) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[j] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for j in 0..nodes.len() {
        out[j] = bw[j] / (x - nodes[j]);
        denom += out[j];
    }
    out.iter_mut().for_each(|o| *o /= denom);
}

/// Barycentric interpolation of `values` given at `nodes`.
pub fn barycentric_eval(nodes: &[f64], bw: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..nodes.len() {
        let d = x - nodes[j];
        if d == 0.0 {
            return values[j];
        }
        let t = bw[j] / d;
        num += t * values[j];
        den += t;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_three_point_rule() {
        let g = GaussLegendre::new(3);
        let r = math::sqrt(0.6);
        assert!((g.nodes()[0] + r).abs() < 1e-15);
        assert_eq!(g.nodes()[1], 0.0);
        assert!((g.weights()[0] - 5.0 / 9.0).abs() < 1e-15);
        assert!((g.weights()[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_polynomials_to_degree_2n_minus_1() {
        for n in [1usize, 2, 5, 16, 64] {
            let g = GaussLegendre::new(n);
            let sum: f64 = g.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-13);
            let d = 2 * n - 1;
            let approx = g.integrate(0.0, 1.0, |x| math::powi(x, d as i32));
            assert!((approx - 1.0 / (d as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn barycentric_interpolates_polynomials_exactly() {
        let g = GaussLegendre::new(8);
        let bw = g.barycentric_weights();
        let f = |x: f64| 1.0 - 2.0 * x + 3.0 * math::powi(x, 7);
        let v: Vec<f64> = g.nodes().iter().map(|&x| f(x)).collect();
        for i in 0..21 {
            let x = -1.0 + i as f64 * 0.1;
            assert!((barycentric_eval(g.nodes(), &bw, &v, x) - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn integration_matrix_gives_antiderivative() {
        let g = GaussLegendre::new(16);
        let q = g.integration_matrix();
        let v: Vec<f64> = g.nodes().iter().map(|&x| math::cos(x)).collect();
        for k in 0..16 {
            let run: f64 = (0..16).map(|l| q[k][l] * v[l]).sum();
            let exact = math::sin(g.nodes()[k]) - math::sin(-1.0);
            assert!((run - exact).abs() < 1e-12);
        }
    }
}
