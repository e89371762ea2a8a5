//! Discretized function-space numerics.
//!
//! Curves live on a shared [`TimeGrid`] over [0,1]; integrals are trapezoid
//! quadrature sums against the grid weights. Covariance kernels are dense
//! symmetric matrices on the same grid, and [`eigendecompose`] solves the
//! quadrature-weighted eigenproblem so that eigenfunctions are orthonormal in
//! L², not merely as coordinate vectors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Discretization of [0,1]: strictly increasing points with positive
/// trapezoid quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    /// Build a grid from ordered points in [0,1]; weights are trapezoidal.
    pub fn from_points(points: Vec<f64>) -> Result<Arc<Self>> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "points must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let (first, last) = (points[0], *points.last().unwrap());
        if first < 0.0 || last > 1.0 || !first.is_finite() || !last.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "points must lie in [0,1], got range [{first}, {last}]"
            )));
        }
        let n = points.len();
        let mut weights = vec![0.0; n];
        for i in 0..n - 1 {
            let h = points[i + 1] - points[i];
            weights[i] += 0.5 * h;
            weights[i + 1] += 0.5 * h;
        }
        Ok(Arc::new(TimeGrid { points, weights }))
    }

    /// Uniform grid of `n` points spanning [0,1].
    pub fn uniform(n: usize) -> Arc<Self> {
        let points = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::from_points(points).expect("uniform grid is valid")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature integral of samples aligned with this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

pub(crate) fn same_grid(a: &Arc<TimeGrid>, b: &Arc<TimeGrid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

fn check_same_grid(a: &Arc<TimeGrid>, b: &Arc<TimeGrid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            left: a.len(),
            right: b.len(),
        })
    }
}

/// A function sampled on a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct Curve {
    grid: Arc<TimeGrid>,
    values: DVector<f64>,
}

impl Curve {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidCurve(format!(
                "{} values on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite value {bad}")));
        }
        Ok(Curve {
            grid,
            values: DVector::from_vec(values),
        })
    }

    /// Sample a scalar function on the grid.
    pub fn from_fn(grid: Arc<TimeGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = DVector::from_iterator(grid.len(), grid.points().iter().map(|&t| f(t)));
        Curve { grid, values }
    }

    pub fn constant(grid: Arc<TimeGrid>, c: f64) -> Self {
        let values = DVector::from_element(grid.len(), c);
        Curve { grid, values }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Quadrature approximation of ∫ f(t) g(t) dt.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    check_same_grid(&f.grid, &g.grid)?;
    Ok(f.grid
        .weights()
        .iter()
        .zip(f.values.iter().zip(g.values.iter()))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// L² norm of a curve (square root of its self inner product).
pub fn l2_norm(f: &Curve) -> f64 {
    inner_product(f, f).expect("curve shares grid with itself").sqrt()
}

/// A sample of curves on one grid, stored row-per-subject.
#[derive(Debug, Clone)]
pub struct CurveSet {
    grid: Arc<TimeGrid>,
    values: DMatrix<f64>,
}

impl CurveSet {
    pub fn new(grid: Arc<TimeGrid>, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::InvalidCurve(format!(
                "{} columns on a {}-point grid",
                values.ncols(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite curve value".into()));
        }
        Ok(CurveSet { grid, values })
    }

    pub fn from_curves(curves: &[Curve]) -> Result<Self> {
        let grid = curves
            .first()
            .ok_or_else(|| Error::InvalidCurve("empty curve set".into()))?
            .grid
            .clone();
        for c in curves {
            check_same_grid(&grid, &c.grid)?;
        }
        let values = DMatrix::from_fn(curves.len(), grid.len(), |n, t| curves[n].values[t]);
        Ok(CurveSet { grid, values })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn curve(&self, n: usize) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.values.row(n).transpose(),
        }
    }

    /// Pointwise mean across subjects.
    pub fn mean_curve(&self) -> Curve {
        let n = self.len() as f64;
        let values = self.values.row_sum().transpose() / n;
        Curve {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Subtract the pointwise mean from every row.
    pub fn centered(&self) -> CurveSet {
        let mean = self.mean_curve();
        let mut values = self.values.clone();
        for mut row in values.row_iter_mut() {
            row -= mean.values.transpose();
        }
        CurveSet {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Sum of squared L² norms of the rows.
    pub fn sum_squared_norms(&self) -> f64 {
        let w = self.grid.weights();
        let mut total = 0.0;
        for row in self.values.row_iter() {
            total += row
                .iter()
                .zip(w)
                .map(|(v, wt)| wt * v * v)
                .sum::<f64>();
        }
        total
    }
}

/// Symmetric covariance kernel sampled on a grid: values[(i,j)] ≈ C(tᵢ, tⱼ).
#[derive(Debug, Clone)]
pub struct Kernel {
    grid: Arc<TimeGrid>,
    values: DMatrix<f64>,
}

/// Relative symmetry tolerance for kernel construction.
const KERNEL_SYMMETRY_TOL: f64 = 1e-12;

impl Kernel {
    pub fn new(grid: Arc<TimeGrid>, values: DMatrix<f64>) -> Result<Self> {
        let t = grid.len();
        if values.nrows() != t || values.ncols() != t {
            return Err(Error::InvalidKernel(format!(
                "{}x{} matrix on a {t}-point grid",
                values.nrows(),
                values.ncols()
            )));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..t {
            for j in (i + 1)..t {
                if (values[(i, j)] - values[(j, i)]).abs() > KERNEL_SYMMETRY_TOL * scale {
                    return Err(Error::InvalidKernel(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(Kernel { grid, values })
    }

    /// Sample a covariance function C(t,s) on the grid.
    pub fn from_fn(grid: Arc<TimeGrid>, c: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let pts = grid.points().to_vec();
        let values = DMatrix::from_fn(pts.len(), pts.len(), |i, j| c(pts[i], pts[j]));
        Self::new(grid, values)
    }

    /// Empirical second-moment kernel Σₙ cₙ(t)cₙ(s) / divisor of a curve set.
    pub fn from_outer(curves: &CurveSet, divisor: f64) -> Self {
        let values = curves.values.transpose() * &curves.values / divisor;
        // symmetric by construction; fix rounding asymmetry exactly
        let sym = (&values + values.transpose()) * 0.5;
        Kernel {
            grid: curves.grid.clone(),
            values: sym,
        }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Quadrature integral of the diagonal, ∫ C(t,t) dt.
    pub fn trace_integral(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.values[(i, i)])
            .sum()
    }

    /// Hilbert–Schmidt norm: sqrt(∫∫ C(t,s)² dt ds) under the grid quadrature.
    pub fn hs_norm(&self) -> f64 {
        let w = self.grid.weights();
        let mut total = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                let v = self.values[(i, j)];
                total += w[i] * w[j] * v * v;
            }
        }
        total.sqrt()
    }

    /// Hilbert–Schmidt distance to another kernel on the same grid.
    pub fn hs_distance(&self, other: &Kernel) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        let w = self.grid.weights();
        let mut total = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                let d = self.values[(i, j)] - other.values[(i, j)];
                total += w[i] * w[j] * d * d;
            }
        }
        Ok(total.sqrt())
    }
}

/// Eigenvalues (descending, nonnegative) and L²-orthonormal eigenfunctions of
/// a kernel's integral operator.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Curve>,
}

impl EigenSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Count of eigenvalues strictly above `tol` times the largest.
    pub fn positive_count(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > 0.0).count()
    }
}

/// Solve the quadrature-weighted eigenproblem of a kernel.
///
/// Works on W^{1/2} K W^{1/2} (W the diagonal weight matrix) so that the
/// discrete eigenpairs approximate the L² operator's; eigenvectors are mapped
/// back through W^{-1/2}, making eigenfunctions L²-orthonormal. Negative
/// eigenvalues (eigensolver noise on PSD kernels) are clamped to zero.
pub fn eigendecompose(kernel: &Kernel, max_components: usize) -> Result<EigenSpectrum> {
    let t = kernel.grid.len();
    let m = max_components.min(t);
    if m == 0 {
        return Err(Error::InvalidKernel("max_components must be >= 1".into()));
    }
    let w_sqrt: Vec<f64> = kernel.grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut b = kernel.values.clone();
    for i in 0..t {
        for j in 0..t {
            b[(i, j)] *= w_sqrt[i] * w_sqrt[j];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(b);

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });

    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = Vec::with_capacity(m);
    for &idx in order.iter().take(m) {
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        let u = eig.eigenvectors.column(idx);
        let mut v = DVector::from_iterator(t, u.iter().zip(&w_sqrt).map(|(ui, ws)| ui / ws));
        // deterministic sign: largest-magnitude coordinate is positive
        let lead = (0..t).fold(0, |best, i| {
            if v[i].abs() > v[best].abs() {
                i
            } else {
                best
            }
        });
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        eigenfunctions.push(Curve {
            grid: kernel.grid.clone(),
            values: v,
        });
    }
    Ok(EigenSpectrum {
        eigenvalues,
        eigenfunctions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_weights_sum_to_span() {
        for n in [2, 5, 101] {
            let g = TimeGrid::uniform(n);
            let total: f64 = g.weights().iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn nonuniform_grid_weights_sum_to_span() {
        let g = TimeGrid::from_points(vec![0.1, 0.2, 0.5, 0.9]).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert_relative_eq!(total, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_unsorted_and_out_of_range() {
        assert!(TimeGrid::from_points(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_points(vec![0.5, 0.2]).is_err());
        assert!(TimeGrid::from_points(vec![-0.1, 0.5]).is_err());
        assert!(TimeGrid::from_points(vec![0.1]).is_err());
    }

    #[test]
    fn inner_product_identity_case() {
        let g = TimeGrid::uniform(11);
        let one = Curve::constant(g.clone(), 1.0);
        assert_relative_eq!(inner_product(&one, &one).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_product_sin_cos_orthogonal() {
        let g = TimeGrid::uniform(1001);
        let f = Curve::from_fn(g.clone(), |t| (2.0 * std::f64::consts::PI * t).sin());
        let h = Curve::from_fn(g.clone(), |t| (2.0 * std::f64::consts::PI * t).cos());
        assert!(inner_product(&f, &h).unwrap().abs() < 1e-10);
    }

    #[test]
    fn inner_product_t_squared_third() {
        let g = TimeGrid::uniform(2001);
        let f = Curve::from_fn(g.clone(), |t| t);
        assert_relative_eq!(
            inner_product(&f, &f).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn inner_product_rejects_mismatched_grids() {
        let f = Curve::constant(TimeGrid::uniform(10), 1.0);
        let g = Curve::constant(TimeGrid::uniform(11), 1.0);
        assert!(matches!(
            inner_product(&f, &g),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn l2_norm_zero_and_constant() {
        let g = TimeGrid::uniform(21);
        assert_eq!(l2_norm(&Curve::constant(g.clone(), 0.0)), 0.0);
        assert_relative_eq!(l2_norm(&Curve::constant(g, 2.0)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn eigendecompose_rank_one() {
        let g = TimeGrid::uniform(40);
        let f = Curve::from_fn(g.clone(), |t| 1.0 + t * t);
        let norm2 = inner_product(&f, &f).unwrap();
        let outer = DMatrix::from_fn(40, 40, |i, j| f.values()[i] * f.values()[j]);
        let k = Kernel::new(g, outer).unwrap();
        let spec = eigendecompose(&k, 40).unwrap();
        assert_relative_eq!(spec.eigenvalues[0], norm2, epsilon = 1e-10);
        for &l in &spec.eigenvalues[1..] {
            assert!(l.abs() < 1e-10 * norm2);
        }
        assert_relative_eq!(l2_norm(&spec.eigenfunctions[0]), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn eigendecompose_brownian_spectrum() {
        // Brownian kernel min(t,s): eigenvalues ((i-1/2)π)⁻².
        let g = TimeGrid::uniform(500);
        let k = Kernel::from_fn(g, |t, s| t.min(s)).unwrap();
        let spec = eigendecompose(&k, 5).unwrap();
        for (i, &l) in spec.eigenvalues.iter().enumerate() {
            let exact = ((i as f64 + 0.5) * std::f64::consts::PI).powi(-2);
            assert!(
                (l - exact).abs() / exact < 0.01,
                "eigenvalue {i}: {l} vs {exact}"
            );
        }
        assert_relative_eq!(spec.eigenvalues[0], 0.405285, epsilon = 4e-3);
    }

    #[test]
    fn eigendecompose_identity_kernel_flat_spectrum() {
        // K = W^{-1} gives B = I: every eigenvalue 1, by brute-force comparison.
        let g = TimeGrid::uniform(7);
        let vals = DMatrix::from_fn(7, 7, |i, j| {
            if i == j {
                1.0 / g.weights()[i]
            } else {
                0.0
            }
        });
        let k = Kernel::new(g, vals).unwrap();
        let spec = eigendecompose(&k, 7).unwrap();
        for &l in &spec.eigenvalues {
            assert_relative_eq!(l, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn eigendecompose_rejects_asymmetric() {
        let g = TimeGrid::uniform(4);
        let mut vals = DMatrix::zeros(4, 4);
        vals[(0, 1)] = 1.0;
        assert!(Kernel::new(g, vals).is_err());
    }

    #[test]
    fn parseval_and_trace_identities() {
        // strictly positive kernel: Matérn-like exponential
        let g = TimeGrid::uniform(60);
        let k = Kernel::from_fn(g.clone(), |t, s| (-3.0 * (t - s).abs()).exp()).unwrap();
        let spec = eigendecompose(&k, 60).unwrap();

        let f = Curve::from_fn(g, |t| (1.5 + t).sin() + t * t);
        let norm2 = inner_product(&f, &f).unwrap();
        let sum_proj: f64 = spec
            .eigenfunctions
            .iter()
            .map(|v| inner_product(&f, v).unwrap().powi(2))
            .sum();
        assert_relative_eq!(sum_proj, norm2, max_relative = 1e-8);

        let trace: f64 = spec.eigenvalues.iter().sum();
        assert_relative_eq!(trace, k.trace_integral(), max_relative = 1e-8);
    }

    proptest! {
        #[test]
        fn inner_product_symmetric_bilinear(
            a in proptest::collection::vec(-5.0f64..5.0, 12),
            b in proptest::collection::vec(-5.0f64..5.0, 12),
            c in proptest::collection::vec(-5.0f64..5.0, 12),
            alpha in -3.0f64..3.0,
        ) {
            let g = TimeGrid::uniform(12);
            let fa = Curve::new(g.clone(), a).unwrap();
            let fb = Curve::new(g.clone(), b).unwrap();
            let fc = Curve::new(g.clone(), c).unwrap();
            let ab = inner_product(&fa, &fb).unwrap();
            let ba = inner_product(&fb, &fa).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);

            // ⟨αa + c, b⟩ = α⟨a,b⟩ + ⟨c,b⟩
            let combo_vals: Vec<f64> = fa.values().iter().zip(fc.values().iter())
                .map(|(x, z)| alpha * x + z).collect();
            let combo = Curve::new(g, combo_vals).unwrap();
            let lhs = inner_product(&combo, &fb).unwrap();
            let rhs = alpha * ab + inner_product(&fc, &fb).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
