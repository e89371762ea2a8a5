//! Association tests for functional responses.
//!
//! `lambda_test` measures the reduction in the summed squared L² norms of the
//! residual curves when the test covariates enter the model; its null
//! distribution is a weighted sum of chi-squares with weights estimated from
//! the full-model residual covariance spectrum. `pc_test` is the classical
//! alternative: project curves on leading principal components and run an
//! exact multivariate regression test on the scores. `weighted_test` exposes
//! the family that contains both as different weightings of per-component R²,
//! and `mv_test` is the non-functional baseline on the raw observed points.

use nalgebra::{Cholesky, DMatrix};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::flm::{self, ColumnRole, DesignMatrix, FunctionalFit};
use crate::fnspace::{eigendecompose, inner_product, Curve, CurveSet, EigenSpectrum, Kernel};
use crate::qform::{imhof_survival_with_bound, truncate_spectrum, TruncationPolicy, WeightedChiSq};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssociationMethod {
    /// reduction in summed squared norms (the L2 test)
    L2,
    /// adaptive principal-component MANOVA (max p over several counts)
    Pc,
    /// principal-component MANOVA with a fixed count
    PcFixed,
    /// explicit weighting of per-component R²
    Weighted,
    /// MANOVA on the raw observed points
    Mv,
}

impl AssociationMethod {
    pub fn label(&self) -> &'static str {
        match self {
            AssociationMethod::L2 => "L2",
            AssociationMethod::Pc => "PC",
            AssociationMethod::PcFixed => "PC5",
            AssociationMethod::Weighted => "W",
            AssociationMethod::Mv => "MV",
        }
    }
}

/// Per-component diagnostics: projections of the test coefficient curve on
/// the response principal components, and the implied R² per component.
#[derive(Debug, Clone)]
pub struct PcDiagnostics {
    pub scores: Vec<f64>,
    pub r_squared: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AssociationResult {
    pub statistic: f64,
    pub method: AssociationMethod,
    pub df_per_term: usize,
    pub truncation_i: usize,
    pub p_value: f64,
    pub weights_used: Vec<f64>,
    pub diagnostics: Option<PcDiagnostics>,
}

/// Options for [`lambda_test_with`].
#[derive(Debug, Clone, Default)]
pub struct LambdaOptions {
    pub truncation: TruncationPolicy,
    /// Attach [`PcDiagnostics`] (single-test-column designs only).
    pub diagnostics: bool,
    /// Reuse a precomputed null-weight spectrum instead of the per-fit one.
    pub shared_weights: Option<Vec<f64>>,
}

/// Fit the nested and full models and return the statistic plus both fits.
///
/// The statistic is computed as the summed squared norm of the difference of
/// fitted curves, which is algebraically the residual-sum reduction but never
/// suffers cancellation, so it is exactly nonnegative.
pub(crate) fn lambda_statistic(
    y: &CurveSet,
    x: &DesignMatrix,
) -> Result<(f64, FunctionalFit, Option<FunctionalFit>)> {
    if x.test_columns().is_empty() {
        return Err(Error::InvalidDesign("no test columns in design".into()));
    }
    let full = flm::fit(y, x)?;
    let null_cols: Vec<usize> = x
        .roles()
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != ColumnRole::Test)
        .map(|(i, _)| i)
        .collect();
    let (null_fit, lambda) = if null_cols.is_empty() {
        // null model is the zero function
        (None, full.fitted().sum_squared_norms())
    } else {
        let x0 = x.subset(&null_cols)?;
        let f0 = flm::fit(y, &x0)?;
        let diff = CurveSet::new(
            y.grid().clone(),
            full.fitted().values() - f0.fitted().values(),
        )?;
        (Some(f0), diff.sum_squared_norms())
    };
    Ok((lambda, full, null_fit))
}

fn survival_or_degenerate(weights: &[f64], df: usize, statistic: f64) -> Result<f64> {
    if statistic <= 0.0 {
        return Ok(1.0);
    }
    if weights.is_empty() {
        // zero null spectrum but a positive statistic: unbounded evidence
        return Ok(0.0);
    }
    let dist = WeightedChiSq::new(weights.to_vec(), df)?;
    Ok(imhof_survival_with_bound(&dist, statistic)?.probability)
}

/// The L2 association test with default options.
pub fn lambda_test(y: &CurveSet, x: &DesignMatrix) -> Result<AssociationResult> {
    lambda_test_with(
        y,
        x,
        &LambdaOptions {
            diagnostics: x.test_columns().len() == 1,
            ..LambdaOptions::default()
        },
    )
}

/// The L2 association test: nested fits, reduction statistic, weighted
/// chi-square p-value with weights from the full-model residual spectrum.
pub fn lambda_test_with(
    y: &CurveSet,
    x: &DesignMatrix,
    opts: &LambdaOptions,
) -> Result<AssociationResult> {
    let k = x.test_columns().len();
    let (lambda, full, _null) = lambda_statistic(y, x)?;
    let weights = match &opts.shared_weights {
        Some(w) => truncate_spectrum(w, &opts.truncation),
        None => truncate_spectrum(&full.spectrum().eigenvalues, &opts.truncation),
    };
    let p_value = survival_or_degenerate(&weights, k, lambda)?;
    let diagnostics = if opts.diagnostics && k == 1 {
        Some(pc_diagnostics(y, &full)?)
    } else {
        None
    };
    Ok(AssociationResult {
        statistic: lambda,
        method: AssociationMethod::L2,
        df_per_term: k,
        truncation_i: weights.len(),
        p_value,
        weights_used: weights,
        diagnostics,
    })
}

/// Spectrum of the centered-response second-moment kernel (divisor N), the
/// basis in which per-component R² has its closed form.
pub fn response_spectrum(y: &CurveSet) -> Result<EigenSpectrum> {
    let centered = y.centered();
    let kernel = Kernel::from_outer(&centered, y.len() as f64);
    eigendecompose(&kernel, y.grid().len())
}

fn pc_diagnostics(y: &CurveSet, full: &FunctionalFit) -> Result<PcDiagnostics> {
    let spec = response_spectrum(y)?;
    let test_idx = full
        .roles()
        .iter()
        .position(|r| *r == ColumnRole::Test)
        .ok_or_else(|| Error::InvalidDesign("no test column".into()))?;
    let beta = full.coefficient(test_idx);
    diagnostics_from_spectrum(&beta, &spec)
}

fn diagnostics_from_spectrum(beta: &Curve, spec: &EigenSpectrum) -> Result<PcDiagnostics> {
    let mut scores = Vec::with_capacity(spec.len());
    let mut r_squared = Vec::with_capacity(spec.len());
    for (v, &l) in spec.eigenfunctions.iter().zip(&spec.eigenvalues) {
        let s = inner_product(beta, v)?;
        scores.push(s);
        r_squared.push(if l > 0.0 { s * s / l } else { 0.0 });
    }
    Ok(PcDiagnostics {
        scores,
        r_squared,
        eigenvalues: spec.eigenvalues.clone(),
    })
}

struct Manova {
    wilks: f64,
    p_value: f64,
    /// hypothesis SSCP diagonal (per-response reduction in RSS)
    h_diag: Vec<f64>,
}

fn least_squares_sscp(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Ok(s.transpose() * s);
    }
    let xtx = x.transpose() * x;
    let chol = Cholesky::new(xtx).ok_or_else(|| Error::RankDeficient {
        columns: vec!["(manova design)".into()],
    })?;
    let b = chol.solve(&(x.transpose() * s));
    let resid = s - x * b;
    Ok(resid.transpose() * resid)
}

fn manova_wilks(responses: &DMatrix<f64>, x: &DesignMatrix) -> Result<Manova> {
    let n = responses.nrows();
    let m = responses.ncols();
    let q = x.test_columns().len();
    if q == 0 {
        return Err(Error::InvalidDesign("no test columns in design".into()));
    }
    let p_cols = x.ncols();
    let v = n as isize - p_cols as isize;
    if v < m as isize {
        return Err(Error::InsufficientSamples(format!(
            "{m}-variate MANOVA needs error df >= {m}, have {v}"
        )));
    }
    let null_cols: Vec<usize> = x
        .roles()
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != ColumnRole::Test)
        .map(|(i, _)| i)
        .collect();
    let x1 = if null_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        x.subset(&null_cols)?.matrix().clone()
    };
    let e = least_squares_sscp(x.matrix(), responses)?;
    let e_null = least_squares_sscp(&x1, responses)?;
    let h = &e_null - &e;
    let h_diag: Vec<f64> = (0..m).map(|i| h[(i, i)].max(0.0)).collect();

    let chol_e = Cholesky::new(e.clone());
    let chol_en = Cholesky::new(e_null.clone());
    let (wilks, p_value) = match (chol_e, chol_en) {
        (Some(ce), Some(cen)) => {
            let logdet_e: f64 = ce.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            let logdet_en: f64 = cen.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            let wilks = (logdet_e - logdet_en).exp().clamp(0.0, 1.0);
            let p = rao_f_survival(wilks, m, q, v as f64)?;
            (wilks, p)
        }
        _ => {
            // degenerate error SSCP: a perfect fit makes any reduction
            // infinitely significant; no reduction means nothing to test
            if h_diag.iter().sum::<f64>() > 0.0 {
                (0.0, 0.0)
            } else {
                (1.0, 1.0)
            }
        }
    };
    Ok(Manova {
        wilks,
        p_value,
        h_diag,
    })
}

/// Rao's F approximation to the Wilks' lambda null distribution (exact for
/// min(p, q) <= 2).
fn rao_f_survival(wilks: f64, p_dim: usize, q: usize, v: f64) -> Result<f64> {
    let p = p_dim as f64;
    let qf = q as f64;
    let num = p * p * qf * qf - 4.0;
    let den = p * p + qf * qf - 5.0;
    let t = if num > 0.0 && den > 0.0 {
        (num / den).sqrt()
    } else {
        1.0
    };
    let w = v + qf - 0.5 * (p + qf + 1.0);
    let df1 = p * qf;
    let df2 = w * t - 0.5 * (p * qf - 2.0);
    if df2 <= 0.0 {
        return Err(Error::InsufficientSamples(format!(
            "Rao F approximation has nonpositive denominator df ({df2})"
        )));
    }
    if wilks <= 0.0 {
        return Ok(0.0);
    }
    if wilks >= 1.0 {
        return Ok(1.0);
    }
    let l_t = wilks.powf(1.0 / t);
    let f_stat = (1.0 - l_t) / l_t * df2 / df1;
    let dist = FisherSnedecor::new(df1, df2)
        .map_err(|e| Error::DomainError(format!("F distribution: {e}")))?;
    Ok(dist.sf(f_stat).clamp(0.0, 1.0))
}

/// Principal-component test: project curves on the top `i` components of the
/// response covariance and run a MANOVA of the test columns on the scores.
pub fn pc_test(y: &CurveSet, x: &DesignMatrix, i: usize) -> Result<AssociationResult> {
    let spec = response_spectrum(y)?;
    pc_test_with_spectrum(y, x, i, &spec)
}

fn pc_test_with_spectrum(
    y: &CurveSet,
    x: &DesignMatrix,
    i: usize,
    spec: &EigenSpectrum,
) -> Result<AssociationResult> {
    let avail = spec.positive_count();
    if i == 0 || i > avail {
        return Err(Error::TooManyComponents {
            requested: i,
            available: avail,
        });
    }
    let n = y.len();
    let mut scores = DMatrix::zeros(n, i);
    for (j, v) in spec.eigenfunctions.iter().take(i).enumerate() {
        for subj in 0..n {
            scores[(subj, j)] = inner_product(&y.curve(subj), v)?;
        }
    }
    let manova = manova_wilks(&scores, x)?;
    // statistic: per-component RSS reduction standardized by the component
    // variance, summed — the score-space form of N Σ R²ᵢ
    let statistic: f64 = manova
        .h_diag
        .iter()
        .zip(&spec.eigenvalues)
        .map(|(&h, &l)| if l > 0.0 { h / l } else { 0.0 })
        .sum();
    let _ = manova.wilks;
    Ok(AssociationResult {
        statistic,
        method: AssociationMethod::PcFixed,
        df_per_term: x.test_columns().len(),
        truncation_i: i,
        p_value: manova.p_value,
        weights_used: vec![1.0; i],
        diagnostics: None,
    })
}

/// Adaptive PC test: the p-value is the maximum over several component
/// counts (conservative by construction).
pub fn pc_adaptive_test(
    y: &CurveSet,
    x: &DesignMatrix,
    counts: &[usize],
) -> Result<AssociationResult> {
    if counts.is_empty() {
        return Err(Error::DomainError("empty component-count set".into()));
    }
    let spec = response_spectrum(y)?;
    let mut worst: Option<AssociationResult> = None;
    for &i in counts {
        let r = pc_test_with_spectrum(y, x, i, &spec)?;
        let replace = worst.as_ref().map_or(true, |w| r.p_value > w.p_value);
        if replace {
            worst = Some(r);
        }
    }
    let mut result = worst.expect("nonempty counts");
    result.method = AssociationMethod::Pc;
    Ok(result)
}

/// Weighting rule for [`weighted_test`].
#[derive(Debug, Clone)]
pub enum WeightRule {
    /// w(i) = λ̂ᵢ — reproduces the L2 statistic
    Eigenvalue,
    /// w(i) = 1{i ≤ I} — reproduces the PC statistic (K = 1)
    FirstI(usize),
    /// arbitrary nonnegative weights, one per component (short vectors are
    /// zero-padded)
    Explicit(Vec<f64>),
}

/// The general weighted family: statistic N Σᵢ w(i) R̂ᵢ², p-value from the
/// induced weighted chi-square null law. Single-test-column designs only.
pub fn weighted_test(
    y: &CurveSet,
    x: &DesignMatrix,
    rule: &WeightRule,
) -> Result<AssociationResult> {
    if x.test_columns().len() != 1 {
        return Err(Error::InvalidDesign(
            "weighted test requires exactly one test column".into(),
        ));
    }
    let spec = response_spectrum(y)?;
    let full = flm::fit(y, x)?;
    let test_idx = full
        .roles()
        .iter()
        .position(|r| *r == ColumnRole::Test)
        .expect("one test column");
    let beta = full.coefficient(test_idx);
    let diag = diagnostics_from_spectrum(&beta, &spec)?;

    let t = spec.len();
    let weights: Vec<f64> = match rule {
        WeightRule::Eigenvalue => spec.eigenvalues.clone(),
        WeightRule::FirstI(i) => {
            if *i == 0 || *i > spec.positive_count() {
                return Err(Error::TooManyComponents {
                    requested: *i,
                    available: spec.positive_count(),
                });
            }
            (0..t).map(|j| if j < *i { 1.0 } else { 0.0 }).collect()
        }
        WeightRule::Explicit(w) => {
            if let Some(&bad) = w.iter().find(|v| **v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidWeights(bad));
            }
            let mut padded = w.clone();
            padded.resize(t, 0.0);
            padded
        }
    };

    let n = y.len() as f64;
    let statistic: f64 = weights
        .iter()
        .zip(&diag.r_squared)
        .map(|(&w, &r2)| w * r2)
        .sum::<f64>()
        * n;
    let positive: Vec<f64> = weights.iter().copied().filter(|&w| w > 0.0).collect();
    let p_value = survival_or_degenerate(&positive, 1, statistic)?;
    Ok(AssociationResult {
        statistic,
        method: AssociationMethod::Weighted,
        df_per_term: 1,
        truncation_i: positive.len().max(1),
        p_value,
        weights_used: positive,
        diagnostics: Some(diag),
    })
}

/// Classical MANOVA on the raw observed points (the non-functional baseline).
pub fn mv_test(points: &DMatrix<f64>, x: &DesignMatrix) -> Result<AssociationResult> {
    if points.nrows() != x.nrows() {
        return Err(Error::InvalidDesign(format!(
            "{} response rows but {} design rows",
            points.nrows(),
            x.nrows()
        )));
    }
    let manova = manova_wilks(points, x)?;
    Ok(AssociationResult {
        statistic: manova.wilks,
        method: AssociationMethod::Mv,
        df_per_term: x.test_columns().len(),
        truncation_i: points.ncols(),
        p_value: manova.p_value,
        weights_used: Vec::new(),
        diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspace::{l2_norm, TimeGrid};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standardized(xs: &[f64]) -> Vec<f64> {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let centered: Vec<f64> = xs.iter().map(|v| v - mean).collect();
        let rms = (centered.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        centered.iter().map(|v| v / rms).collect()
    }

    fn random_dataset(seed: u64, n: usize, t: usize, beta_scale: f64) -> (CurveSet, DesignMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = TimeGrid::uniform(t);
        let x: Vec<f64> = standardized(
            &(0..n)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>(),
        );
        let pts = grid.points().to_vec();
        let mut vals = DMatrix::zeros(n, t);
        for i in 0..n {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            for j in 0..t {
                let smooth = a * (3.0 * pts[j]).sin() + b * pts[j];
                vals[(i, j)] = smooth + beta_scale * x[i] * pts[j] + 0.2 * rng.gen_range(-1.0..1.0);
            }
        }
        let y = CurveSet::new(grid, vals).unwrap();
        let design =
            DesignMatrix::with_intercept(vec![("x".into(), x, ColumnRole::Test)], n).unwrap();
        (y, design)
    }

    #[test]
    fn zero_response_gives_unit_p() {
        let grid = TimeGrid::uniform(10);
        let y = CurveSet::new(grid, DMatrix::zeros(8, 10)).unwrap();
        let x = DesignMatrix::with_intercept(
            vec![(
                "x".into(),
                vec![1.0, -1.0, 0.5, -0.5, 0.25, -0.25, 2.0, -2.0],
                ColumnRole::Test,
            )],
            8,
        )
        .unwrap();
        let r = lambda_test(&y, &x).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn lambda_equals_n_beta_norm_for_standardized_design() {
        for seed in 0..5 {
            let (y, x) = random_dataset(seed, 40, 16, 0.7);
            let r = lambda_test(&y, &x).unwrap();
            let full = flm::fit(&y, &x).unwrap();
            let beta = full.coefficient(1);
            let expected = y.len() as f64 * l2_norm(&beta).powi(2);
            assert_relative_eq!(r.statistic, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn weighted_eigenvalue_rule_matches_lambda() {
        for seed in 10..15 {
            let (y, x) = random_dataset(seed, 35, 12, 0.5);
            let lam = lambda_test(&y, &x).unwrap();
            let w = weighted_test(&y, &x, &WeightRule::Eigenvalue).unwrap();
            assert_relative_eq!(w.statistic, lam.statistic, max_relative = 1e-8);
        }
    }

    #[test]
    fn weighted_indicator_rule_matches_pc_statistic() {
        for seed in 20..25 {
            let (y, x) = random_dataset(seed, 35, 12, 0.5);
            let i = 4;
            let pc = pc_test(&y, &x, i).unwrap();
            let w = weighted_test(&y, &x, &WeightRule::FirstI(i)).unwrap();
            assert_relative_eq!(w.statistic, pc.statistic, max_relative = 1e-8);
        }
    }

    #[test]
    fn weighted_zero_rule_gives_unit_p() {
        let (y, x) = random_dataset(3, 30, 10, 0.5);
        let w = weighted_test(&y, &x, &WeightRule::Explicit(vec![0.0; 10])).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 1.0);
    }

    #[test]
    fn weighted_rejects_negative_weights() {
        let (y, x) = random_dataset(4, 30, 10, 0.5);
        assert!(matches!(
            weighted_test(&y, &x, &WeightRule::Explicit(vec![1.0, -0.5])),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn r_squared_identity_variance_explained_form() {
        // the Σₙ-based variance-explained R²ᵢ equals ⟨β̂, v̂ᵢ⟩²/λ̂ᵢ on
        // standardized single-covariate designs
        let (y, x) = random_dataset(31, 45, 14, 0.6);
        let w = weighted_test(&y, &x, &WeightRule::Eigenvalue).unwrap();
        let diag = w.diagnostics.unwrap();
        let spec = response_spectrum(&y).unwrap();
        let full = flm::fit(&y, &x).unwrap();
        let n = y.len();
        for (i, v) in spec.eigenfunctions.iter().enumerate().take(8) {
            if spec.eigenvalues[i] <= 1e-12 {
                continue;
            }
            let y_scores: Vec<f64> = (0..n)
                .map(|s| inner_product(&y.curve(s), v).unwrap())
                .collect();
            let resid_scores: Vec<f64> = (0..n)
                .map(|s| inner_product(&full.residuals().curve(s), v).unwrap())
                .collect();
            // fitted scores with the intercept removed by centering
            let fit_scores: Vec<f64> = y_scores
                .iter()
                .zip(&resid_scores)
                .map(|(a, b)| a - b)
                .collect();
            let mean_fit = fit_scores.iter().sum::<f64>() / n as f64;
            let mean_y = y_scores.iter().sum::<f64>() / n as f64;
            let num: f64 = fit_scores.iter().map(|f| (f - mean_fit).powi(2)).sum();
            let den: f64 = y_scores.iter().map(|s| (s - mean_y).powi(2)).sum();
            let r2_direct = num / den;
            assert_relative_eq!(r2_direct, diag.r_squared[i], max_relative = 1e-8);
        }
    }

    #[test]
    fn mv_single_column_matches_univariate_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let x_vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y_vals: Vec<f64> = x_vals
            .iter()
            .map(|&x| 0.4 * x + rng.gen_range(-1.0..1.0))
            .collect();
        let x =
            DesignMatrix::with_intercept(vec![("x".into(), x_vals.clone(), ColumnRole::Test)], n)
                .unwrap();
        let points = DMatrix::from_column_slice(n, 1, &y_vals);
        let r = mv_test(&points, &x).unwrap();

        // direct univariate F oracle
        let mean_y = y_vals.iter().sum::<f64>() / n as f64;
        let mean_x = x_vals.iter().sum::<f64>() / n as f64;
        let sxy: f64 = x_vals
            .iter()
            .zip(&y_vals)
            .map(|(a, b)| (a - mean_x) * (b - mean_y))
            .sum();
        let sxx: f64 = x_vals.iter().map(|a| (a - mean_x).powi(2)).sum();
        let syy: f64 = y_vals.iter().map(|b| (b - mean_y).powi(2)).sum();
        let ssr = sxy * sxy / sxx;
        let sse = syy - ssr;
        let f_stat = ssr / (sse / (n as f64 - 2.0));
        let dist = FisherSnedecor::new(1.0, n as f64 - 2.0).unwrap();
        let p_direct = dist.sf(f_stat);
        assert_relative_eq!(r.p_value, p_direct, epsilon = 1e-10);
    }

    #[test]
    fn mv_rejects_too_many_points() {
        let n = 10;
        let x = DesignMatrix::with_intercept(
            vec![(
                "x".into(),
                (0..n).map(|i| i as f64).collect(),
                ColumnRole::Test,
            )],
            n,
        )
        .unwrap();
        let points = DMatrix::zeros(n, 9);
        assert!(matches!(
            mv_test(&points, &x),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn perfect_alignment_drives_p_to_zero() {
        // noise-free signal exactly on one component: residuals vanish
        let grid = TimeGrid::uniform(12);
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x_vals: Vec<f64> = standardized(
            &(0..n)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>(),
        );
        let shape = Curve::from_fn(grid.clone(), |t| (2.0 * t + 0.3).sin());
        let mut vals = DMatrix::zeros(n, 12);
        for i in 0..n {
            for j in 0..12 {
                vals[(i, j)] = x_vals[i] * shape.values()[j];
            }
        }
        let y = CurveSet::new(grid, vals).unwrap();
        let x =
            DesignMatrix::with_intercept(vec![("x".into(), x_vals, ColumnRole::Test)], n).unwrap();
        let pc = pc_test(&y, &x, 1).unwrap();
        assert_eq!(pc.p_value, 0.0);
        let lam = lambda_test(&y, &x).unwrap();
        assert!(lam.p_value < 1e-12);
        assert!(lam.statistic > 0.0);
    }

    #[test]
    fn pc_too_many_components_rejected() {
        let (y, x) = random_dataset(9, 20, 8, 0.3);
        assert!(matches!(
            pc_test(&y, &x, 50),
            Err(Error::TooManyComponents { .. })
        ));
    }

    #[test]
    fn lambda_invariant_under_test_column_recombination() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 40;
        let t = 10;
        let grid = TimeGrid::uniform(t);
        let mut vals = DMatrix::zeros(n, t);
        vals.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let y = CurveSet::new(grid, vals).unwrap();
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adj: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x1 = DesignMatrix::with_intercept(
            vec![
                ("adj".into(), adj.clone(), ColumnRole::Adjust),
                ("a".into(), a.clone(), ColumnRole::Test),
                ("b".into(), b.clone(), ColumnRole::Test),
            ],
            n,
        )
        .unwrap();
        // invertible recombination: (a + 2b, a − b)
        let c1: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + 2.0 * y).collect();
        let c2: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let x2 = DesignMatrix::with_intercept(
            vec![
                ("adj".into(), adj, ColumnRole::Adjust),
                ("c1".into(), c1, ColumnRole::Test),
                ("c2".into(), c2, ColumnRole::Test),
            ],
            n,
        )
        .unwrap();
        let r1 = lambda_test(&y, &x1).unwrap();
        let r2 = lambda_test(&y, &x2).unwrap();
        assert_relative_eq!(r1.statistic, r2.statistic, max_relative = 1e-8);
        assert_relative_eq!(r1.p_value, r2.p_value, max_relative = 1e-6);
    }

    #[test]
    fn projection_rank_oracle_small_instances() {
        // with no true effect, Λ equals the brute-force hat-matrix quadratic
        // form ∫ ε(t)ᵀ (P_X − P_X1) ε(t) dt
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let n = 15;
            let t = 30;
            let grid = TimeGrid::uniform(t);
            let mut eps = DMatrix::zeros(n, t);
            eps.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let y = CurveSet::new(grid.clone(), eps.clone()).unwrap();
            let adj: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tst: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = DesignMatrix::with_intercept(
                vec![
                    ("adj".into(), adj, ColumnRole::Adjust),
                    ("t".into(), tst, ColumnRole::Test),
                ],
                n,
            )
            .unwrap();
            let r = lambda_test(&y, &x).unwrap();

            let xm = x.matrix();
            let x1 = x.null_design().unwrap().matrix().clone();
            let hat = |m: &DMatrix<f64>| -> DMatrix<f64> {
                m * (m.transpose() * m).try_inverse().unwrap() * m.transpose()
            };
            let proj = hat(xm) - hat(&x1);
            let w = grid.weights();
            let mut oracle = 0.0;
            for j in 0..t {
                let col = eps.column(j);
                oracle += w[j] * (col.transpose() * &proj * col)[(0, 0)];
            }
            assert_relative_eq!(r.statistic, oracle, max_relative = 1e-8);
        }
    }

    #[test]
    fn constant_test_column_is_rank_deficient() {
        let (y, _) = random_dataset(2, 20, 8, 0.0);
        let x = DesignMatrix::with_intercept(
            vec![("const".into(), vec![3.0; 20], ColumnRole::Test)],
            20,
        )
        .unwrap();
        assert!(matches!(
            lambda_test(&y, &x),
            Err(Error::RankDeficient { .. })
        ));
    }
}
