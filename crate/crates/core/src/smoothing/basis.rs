//! Clamped B-spline basis on [0,1] with derivative evaluation and exact
//! derivative-penalty matrices.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// B-spline basis of a given order over equally spaced breakpoints on [0,1],
/// with order-fold repeated boundary knots.
#[derive(Debug, Clone)]
pub struct BsplineBasis {
    order: usize,
    /// full knot vector, boundary knots repeated `order` times
    knots: Vec<f64>,
    n_basis: usize,
}

impl BsplineBasis {
    /// `num_breaks` breakpoints (including 0 and 1), equally spaced.
    pub fn uniform(order: usize, num_breaks: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidSplineConfig(format!(
                "basis order must be >= 2, got {order}"
            )));
        }
        if num_breaks < 2 {
            return Err(Error::InvalidSplineConfig(format!(
                "need at least 2 breakpoints, got {num_breaks}"
            )));
        }
        let mut knots = vec![0.0; order - 1];
        for i in 0..num_breaks {
            knots.push(i as f64 / (num_breaks - 1) as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(order - 1));
        let n_basis = num_breaks - 2 + order;
        Ok(BsplineBasis {
            order,
            knots,
            n_basis,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// index of the knot span containing t (clamped to the last span at 1)
    fn span(&self, t: f64) -> usize {
        let k = self.order;
        let last = self.n_basis - 1;
        if t >= self.knots[last + 1] {
            return last;
        }
        let mut lo = k - 1;
        let mut hi = last;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Nonzero basis values at t (de Boor recurrence): (first index, values).
    fn eval_span(&self, t: f64) -> (usize, Vec<f64>) {
        let k = self.order;
        let s = self.span(t);
        let mut vals = vec![0.0; k];
        vals[0] = 1.0;
        for r in 1..k {
            let mut saved = 0.0;
            for j in 0..r {
                let left = self.knots[s + 1 + j] - t;
                let right = t - self.knots[s + 1 + j - r];
                let denom = self.knots[s + 1 + j] - self.knots[s + 1 + j - r];
                let term = if denom > 0.0 { vals[j] / denom } else { 0.0 };
                vals[j] = saved + left * term;
                saved = right * term;
            }
            vals[r] = saved;
        }
        (s + 1 - k, vals)
    }

    /// All basis values at t as a dense vector.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.n_basis);
        let (start, vals) = self.eval_span(t);
        for (j, v) in vals.into_iter().enumerate() {
            row[start + j] = v;
        }
        row
    }

    /// All values of the d-th derivative of each basis function at t.
    ///
    /// Uses the knot-trimmed lower-order basis: differentiation maps an
    /// order-k basis on a clamped knot vector to differences of the order
    /// k−1 basis on the once-trimmed vector.
    pub fn eval_derivative(&self, t: f64, d: usize) -> DVector<f64> {
        if d == 0 {
            return self.eval(t);
        }
        if d >= self.order {
            return DVector::zeros(self.n_basis);
        }
        let lower = BsplineBasis {
            order: self.order - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
            n_basis: self.n_basis - 1,
        };
        let low = lower.eval_derivative(t, d - 1);
        let km1 = (self.order - 1) as f64;
        let mut out = DVector::zeros(self.n_basis);
        for i in 0..self.n_basis {
            let mut v = 0.0;
            if i >= 1 {
                // + B_{i,k-1}/(τ_{i+k-1} − τ_i); the i = 0 term always has a
                // zero denominator on clamped vectors
                let denom = self.knots[i + self.order - 1] - self.knots[i];
                if denom > 0.0 {
                    v += low[i - 1] / denom;
                }
            }
            if i < lower.n_basis {
                // − B_{i+1,k-1}/(τ_{i+k} − τ_{i+1})
                let denom = self.knots[i + self.order] - self.knots[i + 1];
                if denom > 0.0 {
                    v -= low[i] / denom;
                }
            }
            out[i] = km1 * v;
        }
        out
    }

    /// Design matrix of basis values at the given times.
    pub fn design(&self, times: &[f64]) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(times.len(), self.n_basis);
        for (r, &t) in times.iter().enumerate() {
            let (start, vals) = self.eval_span(t);
            for (j, v) in vals.into_iter().enumerate() {
                b[(r, start + j)] = v;
            }
        }
        b
    }

    /// Exact penalty matrix ∫ B⁽ᵈ⁾(t) B⁽ᵈ⁾(t)ᵀ dt via Gauss–Legendre on each
    /// breakpoint span (the integrand is piecewise polynomial).
    pub fn penalty(&self, d: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n_basis, self.n_basis);
        if d >= self.order {
            return p;
        }
        let deg = 2 * (self.order - 1 - d);
        let n_gl = deg / 2 + 1;
        let (nodes, weights) = gauss_legendre(n_gl);
        let mut breaks: Vec<f64> = self.knots.clone();
        breaks.dedup();
        for span in breaks.windows(2) {
            let (a, b) = (span[0], span[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let row = self.eval_derivative(t, d);
                let scale = w * half;
                for i in 0..self.n_basis {
                    if row[i] == 0.0 {
                        continue;
                    }
                    for j in 0..self.n_basis {
                        if row[j] != 0.0 {
                            p[(i, j)] += scale * row[i] * row[j];
                        }
                    }
                }
            }
        }
        (&p + p.transpose()) * 0.5
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] via Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial Pₙ(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
