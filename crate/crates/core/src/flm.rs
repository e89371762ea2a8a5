//! Functional linear model fitting: pointwise least squares for curve
//! responses, residual covariance estimation, and its spectrum.
//!
//! One symmetric factorization of XᵀX is shared across all grid points, so
//! the coefficient curves solve the normal equations at every t with a single
//! matrix solve against the T-column response block.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::fnspace::{eigendecompose, Curve, CurveSet, EigenSpectrum, Kernel, TimeGrid};
use crate::{Error, Result};

/// Reciprocal condition number below which a design is rejected.
const RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Intercept,
    Adjust,
    Test,
}

/// Covariate matrix with per-column roles.
///
/// Standard designs carry one intercept column of ones; intercept-free
/// designs (already-centered data) are accepted too.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    roles: Vec<ColumnRole>,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(matrix: DMatrix<f64>, roles: Vec<ColumnRole>, names: Vec<String>) -> Result<Self> {
        let p = matrix.ncols();
        if roles.len() != p || names.len() != p {
            return Err(Error::InvalidDesign(format!(
                "{} columns but {} roles / {} names",
                p,
                roles.len(),
                names.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("non-finite design entry".into()));
        }
        let intercepts: Vec<usize> = roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == ColumnRole::Intercept)
            .map(|(i, _)| i)
            .collect();
        if intercepts.len() > 1 {
            return Err(Error::InvalidDesign(
                "more than one intercept column".into(),
            ));
        }
        if let Some(&i) = intercepts.first() {
            if matrix.column(i).iter().any(|&v| v != 1.0) {
                return Err(Error::InvalidDesign(
                    "intercept column must be all ones".into(),
                ));
            }
        }
        if matrix.nrows() <= p {
            return Err(Error::InsufficientSamples(format!(
                "{} rows for {} columns",
                matrix.nrows(),
                p
            )));
        }
        Ok(DesignMatrix {
            matrix,
            roles,
            names,
        })
    }

    /// Intercept + named covariate columns, each tagged adjust or test.
    pub fn with_intercept(
        columns: Vec<(String, Vec<f64>, ColumnRole)>,
        n: usize,
    ) -> Result<Self> {
        let p = columns.len() + 1;
        let mut matrix = DMatrix::zeros(n, p);
        matrix.column_mut(0).fill(1.0);
        let mut roles = vec![ColumnRole::Intercept];
        let mut names = vec!["intercept".to_string()];
        for (j, (name, values, role)) in columns.into_iter().enumerate() {
            if values.len() != n {
                return Err(Error::InvalidDesign(format!(
                    "column {name} has {} rows, expected {n}",
                    values.len()
                )));
            }
            if role == ColumnRole::Intercept {
                return Err(Error::InvalidDesign(
                    "extra intercept column not allowed".into(),
                ));
            }
            matrix
                .column_mut(j + 1)
                .copy_from(&DVector::from_vec(values));
            roles.push(role);
            names.push(name);
        }
        Self::new(matrix, roles, names)
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn test_columns(&self) -> Vec<usize> {
        self.indices_of(ColumnRole::Test)
    }

    pub fn indices_of(&self, role: ColumnRole) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// The nested design holding only intercept and adjust columns.
    pub fn null_design(&self) -> Result<DesignMatrix> {
        let keep: Vec<usize> = self
            .roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r != ColumnRole::Test)
            .map(|(i, _)| i)
            .collect();
        self.subset(&keep)
    }

    pub fn subset(&self, columns: &[usize]) -> Result<DesignMatrix> {
        let mut matrix = DMatrix::zeros(self.nrows(), columns.len());
        let mut roles = Vec::with_capacity(columns.len());
        let mut names = Vec::with_capacity(columns.len());
        for (k, &j) in columns.iter().enumerate() {
            matrix.column_mut(k).copy_from(&self.matrix.column(j));
            roles.push(self.roles[j]);
            names.push(self.names[j].clone());
        }
        DesignMatrix {
            matrix,
            roles,
            names,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        Self::new(self.matrix, self.roles, self.names)
    }

    /// Columns that are (numerically) linear combinations of the others.
    fn dependent_columns(&self) -> Vec<String> {
        let x = &self.matrix;
        let p = x.ncols();
        let mut out = Vec::new();
        for j in 0..p {
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let mut sub = DMatrix::zeros(x.nrows(), others.len());
            for (k, &c) in others.iter().enumerate() {
                sub.column_mut(k).copy_from(&x.column(c));
            }
            let col = x.column(j).clone_owned();
            let norm = col.norm();
            if norm == 0.0 {
                out.push(self.names[j].clone());
                continue;
            }
            let gram = sub.transpose() * &sub;
            let rhs = sub.transpose() * &col;
            if let Some(sol) = gram.lu().solve(&rhs) {
                let resid = (&col - sub * sol).norm();
                if resid < 1e-8 * norm {
                    out.push(self.names[j].clone());
                }
            }
        }
        out
    }
}

/// Fitted functional linear model.
#[derive(Debug, Clone)]
pub struct FunctionalFit {
    grid: Arc<TimeGrid>,
    names: Vec<String>,
    roles: Vec<ColumnRole>,
    coefficients: DMatrix<f64>, // p x T
    fitted: CurveSet,
    residuals: CurveSet,
    residual_cov: Kernel,
    spectrum: EigenSpectrum,
    dof_divisor: f64,
    xtx_inv: DMatrix<f64>,
}

impl FunctionalFit {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn coefficient(&self, j: usize) -> Curve {
        Curve::new(
            self.grid.clone(),
            self.coefficients.row(j).iter().copied().collect(),
        )
        .expect("coefficient row aligns with grid")
    }

    pub fn coefficient_by_name(&self, name: &str) -> Option<Curve> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficient(j))
    }

    /// Pointwise standard error of coefficient j: sqrt((XᵀX)⁻¹ⱼⱼ Ĉ(t,t)).
    pub fn coefficient_se(&self, j: usize) -> Curve {
        let v = self.xtx_inv[(j, j)];
        let values: Vec<f64> = (0..self.grid.len())
            .map(|t| (v * self.residual_cov.values()[(t, t)]).max(0.0).sqrt())
            .collect();
        Curve::new(self.grid.clone(), values).expect("aligned")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn fitted(&self) -> &CurveSet {
        &self.fitted
    }

    pub fn residuals(&self) -> &CurveSet {
        &self.residuals
    }

    pub fn residual_cov(&self) -> &Kernel {
        &self.residual_cov
    }

    pub fn spectrum(&self) -> &EigenSpectrum {
        &self.spectrum
    }

    pub fn dof_divisor(&self) -> f64 {
        self.dof_divisor
    }

    pub fn xtx_inv(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }

    /// Sum over subjects of the squared L² norms of the residual curves.
    pub fn residual_sum_squared_norms(&self) -> f64 {
        self.residuals.sum_squared_norms()
    }
}

/// Pointwise least squares fit of a curve sample on a design.
pub fn fit(y: &CurveSet, x: &DesignMatrix) -> Result<FunctionalFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::InvalidDesign(format!(
            "{} curves but {} design rows",
            y.len(),
            n
        )));
    }
    if n <= p {
        return Err(Error::InsufficientSamples(format!(
            "{n} samples for {p} design columns"
        )));
    }
    let xtx = x.matrix().transpose() * x.matrix();
    let eig = nalgebra::SymmetricEigen::new(xtx.clone());
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min_ev = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    if max_ev == 0.0 || min_ev / max_ev < RCOND_MIN {
        return Err(Error::RankDeficient {
            columns: x.dependent_columns(),
        });
    }
    let chol = Cholesky::new(xtx).ok_or_else(|| Error::RankDeficient {
        columns: x.dependent_columns(),
    })?;
    let xty = x.matrix().transpose() * y.values();
    let coefficients = chol.solve(&xty); // p x T
    let fitted_vals = x.matrix() * &coefficients;
    let residual_vals = y.values() - &fitted_vals;
    let fitted = CurveSet::new(y.grid().clone(), fitted_vals)?;
    let residuals = CurveSet::new(y.grid().clone(), residual_vals)?;
    let dof_divisor = (n - p) as f64;
    let residual_cov = Kernel::from_outer(&residuals, dof_divisor);
    let spectrum = eigendecompose(&residual_cov, y.grid().len())?;
    let xtx_inv = chol.inverse();
    Ok(FunctionalFit {
        grid: y.grid().clone(),
        names: x.names().to_vec(),
        roles: x.roles().to_vec(),
        coefficients,
        fitted,
        residuals,
        residual_cov,
        spectrum,
        dof_divisor,
        xtx_inv,
    })
}

/// Schur complement of the leading `leading`-sized block of a symmetric PSD
/// matrix: Σ₂₂ − Σ₂₁ Σ₁₁⁻¹ Σ₁₂.
pub fn schur_complement(sigma: &DMatrix<f64>, leading: usize) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p || leading == 0 || leading >= p {
        return Err(Error::InvalidDesign(format!(
            "cannot partition {p}x{} matrix at {leading}",
            sigma.ncols()
        )));
    }
    let k = p - leading;
    let s11 = sigma.view((0, 0), (leading, leading)).clone_owned();
    let s12 = sigma.view((0, leading), (leading, k)).clone_owned();
    let s21 = sigma.view((leading, 0), (k, leading)).clone_owned();
    let s22 = sigma.view((leading, leading), (k, k)).clone_owned();
    let chol = Cholesky::new(s11).ok_or(Error::SingularBlock)?;
    let solved = chol.solve(&s12);
    let result = s22 - s21 * solved;
    Ok((&result + result.transpose()) * 0.5)
}
