//! Per-subject trajectory construction from sparse longitudinal records.
//!
//! Each subject gets a penalized B-spline fit; the smoothing parameter is
//! chosen once for the whole sample by leave-one-subject-out cross-validation
//! (the mean of the other subjects' smoothed curves is scored against the
//! held-out subject's raw points). From the smoothed curves we form mean,
//! covariance and nugget estimates, then re-predict every subject's curve by
//! kriging its raw observations against those estimates.

mod basis;

pub use basis::BsplineBasis;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::fnspace::{Curve, CurveSet, Kernel, TimeGrid};
use crate::{Error, Result};

/// One raw observation: subject, time in [0,1], measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalRecord {
    pub subject_id: String,
    pub time: f64,
    pub value: f64,
}

impl LongitudinalRecord {
    pub fn new(subject_id: impl Into<String>, time: f64, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&time) {
            return Err(Error::DomainError(format!(
                "observation time {time} outside [0,1]"
            )));
        }
        if !value.is_finite() {
            return Err(Error::DomainError(format!("non-finite value {value}")));
        }
        Ok(LongitudinalRecord {
            subject_id: subject_id.into(),
            time,
            value,
        })
    }
}

/// Penalized B-spline smoothing configuration.
#[derive(Debug, Clone)]
pub struct SplineConfig {
    /// spline order (4 = cubic)
    pub basis_order: usize,
    /// breakpoints over [0,1] including both ends; None picks
    /// min(20, max observations per subject + 2)
    pub num_knots: Option<usize>,
    /// derivative order in the roughness penalty
    pub penalty_order: usize,
    /// candidate smoothing parameters, ascending
    pub lambda_grid: Vec<f64>,
    /// kriging refinement passes after the spline stage
    pub kriging_passes: usize,
}

impl Default for SplineConfig {
    fn default() -> Self {
        SplineConfig {
            basis_order: 4,
            num_knots: None,
            penalty_order: 2,
            lambda_grid: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            kriging_passes: 1,
        }
    }
}

impl SplineConfig {
    fn validate(&self) -> Result<()> {
        if self.basis_order < 2 {
            return Err(Error::InvalidSplineConfig("basis_order must be >= 2".into()));
        }
        if self.penalty_order == 0 || self.penalty_order >= self.basis_order {
            return Err(Error::InvalidSplineConfig(format!(
                "penalty_order {} incompatible with basis_order {}",
                self.penalty_order, self.basis_order
            )));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidSplineConfig("empty lambda grid".into()));
        }
        for w in self.lambda_grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSplineConfig(
                    "lambda grid must be strictly increasing".into(),
                ));
            }
        }
        if self.lambda_grid[0] <= 0.0 {
            return Err(Error::InvalidSplineConfig(
                "lambda grid must be strictly positive".into(),
            ));
        }
        if let Some(nk) = self.num_knots {
            if nk < self.basis_order {
                return Err(Error::InvalidSplineConfig(format!(
                    "num_knots {nk} below basis_order {}",
                    self.basis_order
                )));
            }
        }
        Ok(())
    }
}

/// A fitted per-subject spline: shared basis plus this subject's coefficients.
#[derive(Debug, Clone)]
pub struct SubjectFit {
    basis: Arc<BsplineBasis>,
    pub coefficients: DVector<f64>,
}

impl SubjectFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.basis.eval(t).dot(&self.coefficients)
    }
}

/// Evaluate a fitted spline on a grid.
pub fn resample(fit: &SubjectFit, grid: &Arc<TimeGrid>) -> Curve {
    Curve::from_fn(grid.clone(), |t| fit.evaluate(t))
}

/// Penalized least-squares fit of one subject's observations.
pub fn fit_subject(
    basis: &Arc<BsplineBasis>,
    penalty: &DMatrix<f64>,
    lambda: f64,
    times: &[f64],
    values: &[f64],
) -> Result<SubjectFit> {
    if times.len() < basis.order() {
        return Err(Error::SubjectTooSparse {
            subject_id: String::new(),
            found: times.len(),
            required: basis.order(),
        });
    }
    let b = basis.design(times);
    let y = DVector::from_column_slice(values);
    let system = b.transpose() * &b + penalty * lambda;
    let chol = Cholesky::new(system).ok_or(Error::IllConditionedBasis { lambda })?;
    let coefficients = chol.solve(&(b.transpose() * y));
    Ok(SubjectFit {
        basis: basis.clone(),
        coefficients,
    })
}

/// A subject excluded from smoothing for having too few observations.
#[derive(Debug, Clone)]
pub struct DroppedSubject {
    pub subject_id: String,
    pub observations: usize,
}

/// The smoothed sample: final curves on the output grid plus the mean,
/// covariance and nugget estimates that produced them.
#[derive(Debug, Clone)]
pub struct SmoothedSample {
    pub subject_ids: Vec<String>,
    pub curves: CurveSet,
    pub chosen_lambda: f64,
    pub mean_curve: Curve,
    pub covariance: Kernel,
    pub nugget: f64,
    pub dropped: Vec<DroppedSubject>,
}

impl SmoothedSample {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.curves.grid()
    }
}

struct SubjectData {
    id: String,
    times: Vec<f64>,
    values: Vec<f64>,
    /// index into the unique-time-pattern table
    pattern: usize,
}

struct TimePattern {
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
}

fn group_subjects(
    records: &[LongitudinalRecord],
    min_obs: usize,
) -> (Vec<SubjectData>, Vec<DroppedSubject>) {
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut obs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for r in records {
        let i = *index.entry(r.subject_id.clone()).or_insert_with(|| {
            order.push(r.subject_id.clone());
            obs.push((Vec::new(), Vec::new()));
            order.len() - 1
        });
        obs[i].0.push(r.time);
        obs[i].1.push(r.value);
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (id, (times, values)) in order.into_iter().zip(obs) {
        if times.len() < min_obs {
            dropped.push(DroppedSubject {
                subject_id: id,
                observations: times.len(),
            });
        } else {
            kept.push(SubjectData {
                id,
                times,
                values,
                pattern: usize::MAX,
            });
        }
    }
    (kept, dropped)
}

fn build_patterns(subjects: &mut [SubjectData], basis: &BsplineBasis) -> Vec<TimePattern> {
    let mut key_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut patterns: Vec<TimePattern> = Vec::new();
    for s in subjects.iter_mut() {
        let key: Vec<u64> = s.times.iter().map(|t| t.to_bits()).collect();
        let idx = *key_index.entry(key).or_insert_with(|| {
            let design = basis.design(&s.times);
            let gram = design.transpose() * &design;
            patterns.push(TimePattern { design, gram });
            patterns.len() - 1
        });
        s.pattern = idx;
    }
    patterns
}

/// Smooth all subjects onto a common grid.
pub fn smooth_subjects(
    records: &[LongitudinalRecord],
    cfg: &SplineConfig,
    out_grid: Arc<TimeGrid>,
) -> Result<SmoothedSample> {
    cfg.validate()?;
    let (mut subjects, dropped) = group_subjects(records, cfg.basis_order);
    if subjects.is_empty() {
        return Err(Error::InsufficientSamples(
            "no subject has enough observations to smooth".into(),
        ));
    }
    let max_obs = subjects.iter().map(|s| s.times.len()).max().unwrap();
    let num_breaks = cfg.num_knots.unwrap_or((max_obs + 2).min(20)).max(cfg.basis_order);
    let basis = Arc::new(BsplineBasis::uniform(cfg.basis_order, num_breaks)?);
    let penalty = basis.penalty(cfg.penalty_order);
    let patterns = build_patterns(&mut subjects, &basis);
    let n = subjects.len();

    // per-lambda coefficient solves; factorization shared by time pattern
    let solve_all = |lambda: f64| -> Result<Vec<DVector<f64>>> {
        let factors: Vec<Cholesky<f64, nalgebra::Dyn>> = patterns
            .iter()
            .map(|p| {
                Cholesky::new(&p.gram + &penalty * lambda)
                    .ok_or(Error::IllConditionedBasis { lambda })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(subjects
            .par_iter()
            .map(|s| {
                let p = &patterns[s.pattern];
                let rhs = p.design.transpose() * DVector::from_column_slice(&s.values);
                factors[s.pattern].solve(&rhs)
            })
            .collect())
    };

    let chosen = if n == 1 || cfg.lambda_grid.len() == 1 {
        cfg.lambda_grid[0]
    } else {
        let mut best = (cfg.lambda_grid[0], f64::INFINITY);
        for &lambda in &cfg.lambda_grid {
            let coefs = solve_all(lambda)?;
            let sum: DVector<f64> = coefs
                .iter()
                .fold(DVector::zeros(basis.n_basis()), |acc, c| acc + c);
            // fold scores reduced in fixed subject order
            let mut score = 0.0;
            for (s, c) in subjects.iter().zip(&coefs) {
                let mean_others = (&sum - c) / (n as f64 - 1.0);
                let pred = &patterns[s.pattern].design * mean_others;
                for (p, y) in pred.iter().zip(&s.values) {
                    score += (p - y) * (p - y);
                }
            }
            if score < best.1 {
                best = (lambda, score);
            }
        }
        best.0
    };

    let coefs = solve_all(chosen)?;
    let grid_design = basis.design(out_grid.points());
    let t_len = out_grid.len();
    let mut curve_vals = DMatrix::zeros(n, t_len);
    for (i, c) in coefs.iter().enumerate() {
        let row = &grid_design * c;
        for j in 0..t_len {
            curve_vals[(i, j)] = row[j];
        }
    }
    let mut curves = CurveSet::new(out_grid.clone(), curve_vals)?;

    // nugget from the spline stage: raw observations against own smooth
    let mut nugget = 0.0;
    for (s, c) in subjects.iter().zip(&coefs) {
        let fitted = &patterns[s.pattern].design * c;
        let mse: f64 = fitted
            .iter()
            .zip(&s.values)
            .map(|(f, y)| (f - y) * (f - y))
            .sum::<f64>()
            / s.values.len() as f64;
        nugget += mse;
    }
    nugget /= n as f64;

    let mut mean_curve = curves.mean_curve();
    let mut covariance = sample_covariance(&curves, &mean_curve);

    for _ in 0..cfg.kriging_passes {
        let kriged: Vec<Result<Vec<f64>>> = subjects
            .par_iter()
            .map(|s| {
                krige_subject(&mean_curve, &covariance, nugget, &s.times, &s.values)
                    .map(|c| c.values().iter().copied().collect())
            })
            .collect();
        let mut vals = DMatrix::zeros(n, t_len);
        for (i, row) in kriged.into_iter().enumerate() {
            let row = row?;
            for j in 0..t_len {
                vals[(i, j)] = row[j];
            }
        }
        curves = CurveSet::new(out_grid.clone(), vals)?;
        mean_curve = curves.mean_curve();
        covariance = sample_covariance(&curves, &mean_curve);
        // nugget stays at the spline-stage estimate: kriged curves pass near
        // the raw points by construction, so a re-estimate collapses to zero
    }

    Ok(SmoothedSample {
        subject_ids: subjects.into_iter().map(|s| s.id).collect(),
        curves,
        chosen_lambda: chosen,
        mean_curve,
        covariance,
        nugget,
        dropped,
    })
}

fn sample_covariance(curves: &CurveSet, mean: &Curve) -> Kernel {
    let n = curves.len();
    if n < 2 {
        return Kernel::new(
            curves.grid().clone(),
            DMatrix::zeros(curves.grid().len(), curves.grid().len()),
        )
        .expect("zero kernel is valid");
    }
    let mut centered = curves.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.values().transpose();
    }
    let c = CurveSet::new(curves.grid().clone(), centered).expect("aligned");
    Kernel::from_outer(&c, (n - 1) as f64)
}

/// Linear interpolation of a curve at an arbitrary time (clamped to the grid
/// span).
pub fn curve_value_at(curve: &Curve, t: f64) -> f64 {
    let pts = curve.grid().points();
    let vals = curve.values();
    if t <= pts[0] {
        return vals[0];
    }
    if t >= pts[pts.len() - 1] {
        return vals[pts.len() - 1];
    }
    let hi = pts.partition_point(|&p| p <= t);
    let lo = hi - 1;
    let w = (t - pts[lo]) / (pts[hi] - pts[lo]);
    vals[lo] * (1.0 - w) + vals[hi] * w
}

fn bracket(pts: &[f64], t: f64) -> (usize, usize, f64) {
    if t <= pts[0] {
        return (0, 0, 0.0);
    }
    if t >= pts[pts.len() - 1] {
        let last = pts.len() - 1;
        return (last, last, 0.0);
    }
    let hi = pts.partition_point(|&p| p <= t);
    let lo = hi - 1;
    let w = (t - pts[lo]) / (pts[hi] - pts[lo]);
    (lo, hi, w)
}

/// Bilinear interpolation of a kernel surface at (s, t).
pub fn kernel_value_at(kernel: &Kernel, s: f64, t: f64) -> f64 {
    let pts = kernel.grid().points();
    let (i0, i1, wi) = bracket(pts, s);
    let (j0, j1, wj) = bracket(pts, t);
    let v = kernel.values();
    let a = v[(i0, j0)] * (1.0 - wj) + v[(i0, j1)] * wj;
    let b = v[(i1, j0)] * (1.0 - wj) + v[(i1, j1)] * wj;
    a * (1.0 - wi) + b * wi
}

/// Kriging prediction of one subject's curve on the estimate grid:
/// conditional expectation given the raw observations under the estimated
/// mean, covariance and nugget.
pub fn krige_subject(
    mean: &Curve,
    covariance: &Kernel,
    nugget: f64,
    times: &[f64],
    values: &[f64],
) -> Result<Curve> {
    let m = times.len();
    if m == 0 || m != values.len() {
        return Err(Error::DomainError(
            "kriging needs matching nonempty times/values".into(),
        ));
    }
    let mut c_obs = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            c_obs[(i, j)] = kernel_value_at(covariance, times[i], times[j]);
        }
        c_obs[(i, i)] += nugget;
    }
    let rhs = DVector::from_iterator(
        m,
        times
            .iter()
            .zip(values)
            .map(|(&t, &y)| y - curve_value_at(mean, t)),
    );
    let scale = c_obs.diagonal().amax().max(1e-12);
    let mut alpha = None;
    for jitter in [0.0, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale] {
        let mut sys = c_obs.clone();
        for i in 0..m {
            sys[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(sys) {
            alpha = Some(chol.solve(&rhs));
            break;
        }
    }
    let alpha = alpha.ok_or(Error::NumericallySingularCovariance)?;

    let grid = mean.grid().clone();
    let pts = grid.points();
    let values_out: Vec<f64> = (0..grid.len())
        .map(|g| {
            let mut v = mean.values()[g];
            for (j, &tj) in times.iter().enumerate() {
                v += kernel_value_at(covariance, pts[g], tj) * alpha[j];
            }
            v
        })
        .collect();
    Curve::new(grid, values_out)
}
