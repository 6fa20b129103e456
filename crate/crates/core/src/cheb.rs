//! Chebyshev-Lobatto sampling of smooth matrix functions on an interval.

use std::f64::consts::PI;

use crate::linalg::{r, CMat};

/// `n + 1` Lobatto nodes on `[a, b]`, ascending.
#[derive(Clone, Debug)]
pub(crate) struct Cheb {
    a: f64,
    b: f64,
    n: usize,
    nodes: Vec<f64>,
}

impl Cheb {
    pub fn new(a: f64, b: f64, n: usize) -> Self {
        let nodes = (0..=n).map(|j| a + 0.5 * (b - a) * (1.0 - (PI * j as f64 / n as f64).cos())).collect();
        Self { a, b, n, nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `T_k` at node `j`; node `j` sits at `x = −cos(jπ/n)`.
    fn t(&self, k: usize, j: usize) -> f64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * (PI * (k * j) as f64 / self.n as f64).cos()
    }

    fn coefficients(&self, f: &[CMat]) -> Vec<CMat> {
        let n = self.n;
        let (rows, cols) = f[0].shape();
        (0..=n)
            .map(|k| {
                let mut c = CMat::zeros(rows, cols);
                for (j, fj) in f.iter().enumerate() {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    c += fj * r(w * self.t(k, j));
                }
                let w = if k == 0 || k == n { 1.0 / n as f64 } else { 2.0 / n as f64 };
                c * r(w)
            })
            .collect()
    }

    fn synthesize(&self, c: &[CMat]) -> Vec<CMat> {
        (0..=self.n)
            .map(|j| {
                let mut v = CMat::zeros(c[0].nrows(), c[0].ncols());
                for (k, ck) in c.iter().enumerate() {
                    v += ck * r(self.t(k, j));
                }
                v
            })
            .collect()
    }

    /// Derivative of the interpolant, at the nodes.
    pub fn diff(&self, f: &[CMat]) -> Vec<CMat> {
        let n = self.n;
        let c = self.coefficients(f);
        let zero = CMat::zeros(c[0].nrows(), c[0].ncols());
        let mut d = vec![zero; n + 2];
        for k in (0..n).rev() {
            d[k] = &d[k + 2] + &c[k + 1] * r(2.0 * (k + 1) as f64);
        }
        d[0] *= r(0.5);
        d.truncate(n + 1);
        let scale = 2.0 / (self.b - self.a);
        self.synthesize(&d).into_iter().map(|m| m * r(scale)).collect()
    }

    /// `∫_a^τ` of the interpolant, at the nodes (degree `n + 1` term dropped).
    pub fn cumint(&self, f: &[CMat]) -> Vec<CMat> {
        let n = self.n;
        let c = self.coefficients(f);
        let zero = CMat::zeros(c[0].nrows(), c[0].ncols());
        let at = |k: usize| if k <= n { c[k].clone() } else { zero.clone() };
        let mut b = vec![zero.clone(); n + 1];
        b[1] = at(0) - at(2) * r(0.5);
        for k in 2..=n {
            b[k] = (at(k - 1) - at(k + 1)) * r(0.5 / k as f64);
        }
        // The value at τ = a (x = −1) must vanish.
        let mut b0 = zero;
        for (k, bk) in b.iter().enumerate().skip(1) {
            b0 -= bk * r(if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        b[0] = b0;
        let scale = 0.5 * (self.b - self.a);
        self.synthesize(&b).into_iter().map(|m| m * r(scale)).collect()
    }

    /// Barycentric interpolation of node values at `t`.
    pub fn interp(&self, f: &[CMat], t: f64) -> CMat {
        let mut num = CMat::zeros(f[0].nrows(), f[0].ncols());
        let mut den = 0.0;
        for (j, (&x, fj)) in self.nodes.iter().zip(f).enumerate() {
            let diff = t - x;
            if diff == 0.0 {
                return fj.clone();
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == self.n {
                w *= 0.5;
            }
            num += fj * r(w / diff);
            den += w / diff;
        }
        num * r(1.0 / den)
    }
}
