//! Simulation engine: Matérn Gaussian error curves, binomial SNP covariates,
//! normalized signal shapes, and the calibration / power study driver.
//!
//! All generators are deterministic under a fixed seed; replicate streams use
//! counter-based ChaCha substreams keyed by (replicate, role) so parallel and
//! serial runs produce identical numbers.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::assoc::{
    self, lambda_test_with, AssociationMethod, LambdaOptions, WeightRule,
};
use crate::flm::{schur_complement, ColumnRole, DesignMatrix};
use crate::fnspace::{Curve, CurveSet, Kernel, TimeGrid};
use crate::smoothing::{smooth_subjects, LongitudinalRecord, SplineConfig};
use crate::{Error, Result};

/// Stationary Matérn covariance parameters (mean, variance, nugget, scale, ν).
#[derive(Debug, Clone, Copy)]
pub struct MaternSpec {
    pub mean: f64,
    pub variance: f64,
    pub nugget: f64,
    pub scale: f64,
    pub nu: f64,
}

impl Default for MaternSpec {
    fn default() -> Self {
        MaternSpec {
            mean: 0.0,
            variance: 1.0,
            nugget: 0.0,
            scale: 0.25,
            nu: 2.5,
        }
    }
}

/// Matérn covariance at distance d. Only ν = 5/2 is implemented:
/// C(d) = σ² (1 + √5 d/ℓ + 5d²/(3ℓ²)) exp(−√5 d/ℓ), plus the nugget at d = 0.
pub fn matern_cov(d: f64, spec: &MaternSpec) -> Result<f64> {
    if spec.nu != 2.5 {
        return Err(Error::UnsupportedSmoothness(spec.nu));
    }
    if d < 0.0 {
        return Err(Error::DomainError(format!("negative distance {d}")));
    }
    let r = 5.0_f64.sqrt() * d / spec.scale;
    let c = spec.variance * (1.0 + r + 5.0 * d * d / (3.0 * spec.scale * spec.scale)) * (-r).exp();
    Ok(c + if d == 0.0 { spec.nugget } else { 0.0 })
}

/// Matérn kernel sampled on arbitrary time points (original units).
pub fn matern_kernel_at(times: &[f64], spec: &MaternSpec) -> Result<DMatrix<f64>> {
    let t = times.len();
    let mut k = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..t {
            k[(i, j)] = matern_cov((times[i] - times[j]).abs(), spec)?;
        }
    }
    Ok(k)
}

fn cholesky_with_jitter(mut k: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    for attempt in 0..=3 {
        if attempt > 0 {
            for i in 0..k.nrows() {
                k[(i, i)] += 1e-10;
            }
        }
        if let Some(c) = Cholesky::new(k.clone()) {
            return Ok(c);
        }
    }
    Err(Error::NumericallySingularCovariance)
}

/// Draw N independent Gaussian curves on the grid with Matérn covariance in
/// the grid's own coordinates.
pub fn draw_error_curves(
    grid: &Arc<TimeGrid>,
    spec: &MaternSpec,
    n: usize,
    seed: u64,
) -> Result<CurveSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_error_curves_rng(grid, spec, n, &mut rng)
}

/// As [`draw_error_curves`] with a caller-owned stream.
pub fn draw_error_curves_rng(
    grid: &Arc<TimeGrid>,
    spec: &MaternSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<CurveSet> {
    let values = draw_error_matrix(grid.points(), spec, n, rng)?;
    CurveSet::new(grid.clone(), values)
}

/// Error draws at arbitrary time points (row per curve).
pub fn draw_error_matrix(
    times: &[f64],
    spec: &MaternSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let t = times.len();
    let chol = cholesky_with_jitter(matern_kernel_at(times, spec)?)?;
    let l = chol.l();
    let mut values = DMatrix::zeros(n, t);
    for i in 0..n {
        let z: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..t {
            let mut v = spec.mean;
            for (k, zk) in z.iter().enumerate().take(j + 1) {
                v += l[(j, k)] * zk;
            }
            values[(i, j)] = v;
        }
    }
    Ok(values)
}

/// Signal shapes used under the alternative; each has L² norm 0.18 on [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Linear,
    NormCdf,
    Sinusoid,
    Null,
}

impl SignalKind {
    pub fn label(&self) -> &'static str {
        match self {
            SignalKind::Linear => "linear",
            SignalKind::NormCdf => "normcdf",
            SignalKind::Sinusoid => "sinusoid",
            SignalKind::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SignalKind::Linear),
            "normcdf" => Ok(SignalKind::NormCdf),
            "sinusoid" => Ok(SignalKind::Sinusoid),
            "null" => Ok(SignalKind::Null),
            other => Err(Error::DomainError(format!("unknown signal kind {other}"))),
        }
    }
}

/// Evaluate a signal shape at one time point.
pub fn signal_value(kind: SignalKind, t: f64) -> f64 {
    match kind {
        SignalKind::Linear => 0.18 * 2.0 * (t - 0.5) / 0.5773,
        SignalKind::NormCdf => {
            let phi = Normal::standard().cdf(7.5 * (t - 0.5));
            0.18 * phi / 0.6517
        }
        SignalKind::Sinusoid => 0.18 * 2.0_f64.sqrt() * (2.0 * std::f64::consts::PI * t).cos(),
        SignalKind::Null => 0.0,
    }
}

/// Signal curve on a grid.
pub fn signal_curve(kind: SignalKind, grid: &Arc<TimeGrid>) -> Curve {
    Curve::from_fn(grid.clone(), |t| signal_value(kind, t))
}

/// N iid Binomial(2, maf) dosages centered by their mean 2·maf.
pub fn draw_snp(n: usize, maf: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_snp_rng(n, maf, &mut rng)
}

/// As [`draw_snp`] with a caller-owned stream.
pub fn draw_snp_rng(n: usize, maf: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(0.0 < maf && maf <= 0.5) {
        return Err(Error::DomainError(format!("maf {maf} outside (0, 0.5]")));
    }
    let bin = Binomial::new(2, maf).map_err(|e| Error::DomainError(e.to_string()))?;
    Ok((0..n)
        .map(|_| bin.sample(rng) as f64 - 2.0 * maf)
        .collect())
}

/// Substream RNG for (replicate, role) so workers never share a stream.
pub fn stream_rng(seed: u64, replicate: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate * 8 + role);
    rng
}

const ROLE_ERRORS: u64 = 0;
const ROLE_SNP: u64 = 1;

/// One simulation scenario of the power study.
#[derive(Debug, Clone)]
pub struct PowerScenario {
    pub signal: SignalKind,
    pub n: usize,
    /// points sampled per curve, on the even grid over [1/M, 1]
    pub m: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub maf: f64,
    pub matern: MaternSpec,
    /// output grid size for the reconstructed curves
    pub grid_size: usize,
    pub spline: SplineConfig,
}

impl Default for PowerScenario {
    fn default() -> Self {
        PowerScenario {
            signal: SignalKind::Null,
            n: 200,
            m: 10,
            reps: 1000,
            alpha: 0.05,
            seed: 1,
            maf: 0.5,
            matern: MaternSpec::default(),
            grid_size: 50,
            spline: SplineConfig::default(),
        }
    }
}

impl PowerScenario {
    /// Even sampling grid on [1/M, 1].
    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.m).map(|j| j as f64 / self.m as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::DomainError("need at least 2 points per curve".into()));
        }
        if self.reps == 0 || self.n < 8 {
            return Err(Error::DomainError(
                "power scenario needs reps >= 1 and n >= 8".into(),
            ));
        }
        Ok(())
    }
}

/// Rejection rate for one method in one scenario.
#[derive(Debug, Clone)]
pub struct PowerRow {
    pub method: AssociationMethod,
    pub m: usize,
    pub signal: SignalKind,
    pub power: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Everything the four methods need from one simulated replicate.
struct ReplicateOutcome {
    reject: [bool; 4],
}

fn run_replicate(scenario: &PowerScenario, rep: u64) -> Result<ReplicateOutcome> {
    let times = scenario.sample_times();
    let m = scenario.m;
    let n = scenario.n;

    let mut err_rng = stream_rng(scenario.seed, rep, ROLE_ERRORS);
    let mut snp_rng = stream_rng(scenario.seed, rep, ROLE_SNP);
    let eps = draw_error_matrix(&times, &scenario.matern, n, &mut err_rng)?;
    let snp = draw_snp_rng(n, scenario.maf, &mut snp_rng)?;

    let mut points = eps;
    for i in 0..n {
        for (j, &t) in times.iter().enumerate() {
            points[(i, j)] += signal_value(scenario.signal, t) * snp[i];
        }
    }

    let design =
        DesignMatrix::with_intercept(vec![("snp".into(), snp, ColumnRole::Test)], n)?;

    // MANOVA on the raw observed points
    let mv = assoc::mv_test(&points, &design)?;

    // reconstruct curves: rescale the observation window onto [0,1]
    let t0 = times[0];
    let t1 = times[m - 1];
    let mut records = Vec::with_capacity(n * m);
    for i in 0..n {
        for (j, &t) in times.iter().enumerate() {
            let scaled = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            records.push(LongitudinalRecord::new(format!("s{i}"), scaled, points[(i, j)])?);
        }
    }
    let out_grid = TimeGrid::uniform(scenario.grid_size);
    let smoothed = smooth_subjects(&records, &scenario.spline, out_grid)?;

    let l2 = lambda_test_with(&smoothed.curves, &design, &LambdaOptions::default())?;
    let pc = assoc::pc_adaptive_test(&smoothed.curves, &design, &[3, 4, 5])?;
    let pc5 = assoc::pc_test(&smoothed.curves, &design, 5)?;

    let a = scenario.alpha;
    Ok(ReplicateOutcome {
        reject: [
            l2.p_value < a,
            pc.p_value < a,
            pc5.p_value < a,
            mv.p_value < a,
        ],
    })
}

/// Run the four-method power study; rows ordered L2, PC, PC5, MV.
pub fn run_power_study(scenario: &PowerScenario) -> Result<Vec<PowerRow>> {
    scenario.validate()?;
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|rep| run_replicate(scenario, rep))
        .collect();
    let mut counts = [0usize; 4];
    for o in outcomes {
        let o = o?;
        for (c, r) in counts.iter_mut().zip(o.reject) {
            *c += r as usize;
        }
    }
    let reps = scenario.reps;
    let methods = [
        AssociationMethod::L2,
        AssociationMethod::Pc,
        AssociationMethod::PcFixed,
        AssociationMethod::Mv,
    ];
    Ok(methods
        .iter()
        .zip(counts)
        .map(|(&method, c)| {
            let power = c as f64 / reps as f64;
            PowerRow {
                method,
                m: scenario.m,
                signal: scenario.signal,
                power,
                se: (power * (1.0 - power) / reps as f64).sqrt(),
                reps,
                seed: scenario.seed,
            }
        })
        .collect())
}

/// Average per-component R² over seeded replicates, on dense directly
/// observed curves (large N; no reconstruction step).
pub fn r2_profile(
    signal: SignalKind,
    n: usize,
    components: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let grid = TimeGrid::uniform(50);
    let spec = MaternSpec::default();
    let profiles: Vec<Result<Vec<f64>>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut err_rng = stream_rng(seed, rep, ROLE_ERRORS);
            let mut snp_rng = stream_rng(seed, rep, ROLE_SNP);
            let mut values = draw_error_matrix(grid.points(), &spec, n, &mut err_rng)?;
            let snp = draw_snp_rng(n, 0.5, &mut snp_rng)?;
            for i in 0..n {
                for (j, &t) in grid.points().to_vec().iter().enumerate() {
                    values[(i, j)] += signal_value(signal, t) * snp[i];
                }
            }
            let y = CurveSet::new(grid.clone(), values)?;
            let x = DesignMatrix::with_intercept(
                vec![("snp".into(), snp, ColumnRole::Test)],
                n,
            )?;
            let res = assoc::weighted_test(&y, &x, &WeightRule::Eigenvalue)?;
            let diag = res.diagnostics.expect("weighted test carries diagnostics");
            Ok(diag.r_squared.into_iter().take(components).collect())
        })
        .collect();
    let mut mean = vec![0.0; components];
    for p in profiles {
        let p = p?;
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= reps as f64;
    }
    Ok(mean)
}

/// Design used by the drift diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftDesign {
    /// intercept + one centered binomial SNP (test)
    SingleSnp,
    /// intercept + adjust G, test X₂ = G + H with G, H independent centered
    /// binomial draws; the drift picks up the Schur complement 0.5·Var(G)
    CorrelatedTwoBlock,
}

#[derive(Debug, Clone)]
pub struct DriftCheckConfig {
    pub design: DriftDesign,
    pub signal: SignalKind,
    pub n_values: Vec<usize>,
    pub reps: usize,
    pub grid_size: usize,
    pub maf: f64,
    pub matern: MaternSpec,
    pub seed: u64,
}

impl Default for DriftCheckConfig {
    fn default() -> Self {
        DriftCheckConfig {
            design: DriftDesign::SingleSnp,
            signal: SignalKind::NormCdf,
            n_values: vec![500, 5000],
            reps: 200,
            grid_size: 50,
            maf: 0.5,
            matern: MaternSpec::default(),
            seed: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriftRow {
    pub n: usize,
    pub mean_lambda_over_n: f64,
}

/// Drift diagnostic output: Monte Carlo Λ/N against the closed-form drift
/// and a brute-force residualization cross-check.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
    pub theoretical_drift: f64,
    pub residualized_drift: f64,
}

/// Estimate Λ/N at several sample sizes and compare with the closed-form
/// drift (test-covariate second moment after adjustment, times ‖β‖²).
pub fn alternative_drift_check(cfg: &DriftCheckConfig) -> Result<DriftReport> {
    let grid = TimeGrid::uniform(cfg.grid_size);
    let beta = signal_curve(cfg.signal, &grid);
    let beta_norm2 = crate::fnspace::inner_product(&beta, &beta)?;
    let var_g = 2.0 * cfg.maf * (1.0 - cfg.maf);

    // closed-form drift via the Schur complement of the population design
    // second-moment matrix
    let theoretical_drift = match cfg.design {
        DriftDesign::SingleSnp => {
            let sigma =
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, var_g]);
            let s = schur_complement(&sigma, 1)?;
            s[(0, 0)] * beta_norm2
        }
        DriftDesign::CorrelatedTwoBlock => {
            let sigma = DMatrix::from_row_slice(
                3,
                3,
                &[
                    1.0, 0.0, 0.0, //
                    0.0, var_g, var_g, //
                    0.0, var_g, 2.0 * var_g,
                ],
            );
            let s = schur_complement(&sigma, 2)?;
            s[(0, 0)] * beta_norm2
        }
    };

    // brute-force residualization oracle: regress the test covariate on the
    // nuisance columns in a large sample and use the residual second moment
    let residualized_drift = {
        let big = 200_000;
        let mut rng = stream_rng(cfg.seed, u64::MAX / 2, ROLE_SNP);
        let g = draw_snp_rng(big, cfg.maf, &mut rng)?;
        let x2: Vec<f64> = match cfg.design {
            DriftDesign::SingleSnp => g.clone(),
            DriftDesign::CorrelatedTwoBlock => {
                let h = draw_snp_rng(big, cfg.maf, &mut rng)?;
                g.iter().zip(&h).map(|(a, b)| a + b).collect()
            }
        };
        // residualize on intercept (+ G in the two-block design)
        let mean2 = x2.iter().sum::<f64>() / big as f64;
        let resid: Vec<f64> = match cfg.design {
            DriftDesign::SingleSnp => x2.iter().map(|v| v - mean2).collect(),
            DriftDesign::CorrelatedTwoBlock => {
                let mean_g = g.iter().sum::<f64>() / big as f64;
                let gc: Vec<f64> = g.iter().map(|v| v - mean_g).collect();
                let x2c: Vec<f64> = x2.iter().map(|v| v - mean2).collect();
                let slope = gc.iter().zip(&x2c).map(|(a, b)| a * b).sum::<f64>()
                    / gc.iter().map(|a| a * a).sum::<f64>();
                x2c.iter().zip(&gc).map(|(x, g)| x - slope * g).collect()
            }
        };
        let second = resid.iter().map(|v| v * v).sum::<f64>() / big as f64;
        second * beta_norm2
    };

    let mut rows = Vec::new();
    for &n in &cfg.n_values {
        let sums: Vec<Result<f64>> = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let mut err_rng = stream_rng(cfg.seed, rep, ROLE_ERRORS);
                let mut snp_rng = stream_rng(cfg.seed, rep, ROLE_SNP);
                let mut values =
                    draw_error_matrix(grid.points(), &cfg.matern, n, &mut err_rng)?;
                let g = draw_snp_rng(n, cfg.maf, &mut snp_rng)?;
                let (columns, test): (Vec<(String, Vec<f64>, ColumnRole)>, Vec<f64>) =
                    match cfg.design {
                        DriftDesign::SingleSnp => (Vec::new(), g.clone()),
                        DriftDesign::CorrelatedTwoBlock => {
                            let h = draw_snp_rng(n, cfg.maf, &mut snp_rng)?;
                            let x2: Vec<f64> =
                                g.iter().zip(&h).map(|(a, b)| a + b).collect();
                            (
                                vec![("g".into(), g.clone(), ColumnRole::Adjust)],
                                x2,
                            )
                        }
                    };
                for i in 0..n {
                    for (j, v) in beta.values().iter().enumerate() {
                        values[(i, j)] += v * test[i];
                    }
                }
                let y = CurveSet::new(grid.clone(), values)?;
                let mut cols = columns;
                cols.push(("x2".into(), test, ColumnRole::Test));
                let x = DesignMatrix::with_intercept(cols, n)?;
                let (lambda, _, _) = assoc::lambda_statistic(&y, &x)?;
                Ok(lambda / n as f64)
            })
            .collect();
        let mut total = 0.0;
        for s in sums {
            total += s?;
        }
        rows.push(DriftRow {
            n,
            mean_lambda_over_n: total / cfg.reps as f64,
        });
    }
    Ok(DriftReport {
        rows,
        theoretical_drift,
        residualized_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspace::l2_norm;
    use approx::assert_relative_eq;

    #[test]
    fn matern_closed_form_values() {
        let spec = MaternSpec::default();
        assert_relative_eq!(matern_cov(0.0, &spec).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(matern_cov(0.25, &spec).unwrap(), 0.5239, epsilon = 1e-4);
        assert_relative_eq!(matern_cov(1.0, &spec).unwrap(), 0.00478, epsilon = 1e-5);
    }

    #[test]
    fn matern_nugget_only_at_zero() {
        let spec = MaternSpec {
            nugget: 0.3,
            ..MaternSpec::default()
        };
        assert_relative_eq!(matern_cov(0.0, &spec).unwrap(), 1.3, epsilon = 1e-12);
        assert!(matern_cov(1e-9, &spec).unwrap() < 1.1);
    }

    #[test]
    fn matern_rejects_other_smoothness() {
        let spec = MaternSpec {
            nu: 1.5,
            ..MaternSpec::default()
        };
        assert!(matches!(
            matern_cov(0.5, &spec),
            Err(Error::UnsupportedSmoothness(_))
        ));
    }

    #[test]
    fn signal_values_and_norms() {
        assert_relative_eq!(signal_value(SignalKind::Linear, 0.5), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            signal_value(SignalKind::Sinusoid, 0.0),
            0.254558,
            epsilon = 1e-6
        );
        let grid = TimeGrid::uniform(1000);
        for kind in [SignalKind::Linear, SignalKind::NormCdf, SignalKind::Sinusoid] {
            let c = signal_curve(kind, &grid);
            assert!(
                (l2_norm(&c) - 0.18).abs() < 1e-3,
                "{kind:?}: {}",
                l2_norm(&c)
            );
        }
        assert_eq!(l2_norm(&signal_curve(SignalKind::Null, &grid)), 0.0);
    }

    #[test]
    fn snp_draws_centered_binomial() {
        let xs = draw_snp(1_000_000, 0.5, 31).unwrap();
        for &x in xs.iter().take(100) {
            assert!(x == -1.0 || x == 0.0 || x == 1.0);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let bound = 3.0 * (0.5 / xs.len() as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} vs {bound}");
        let msq = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((msq - 0.5).abs() < 0.005, "mean square {msq}");
    }

    #[test]
    fn snp_rejects_bad_maf() {
        assert!(draw_snp(10, 0.0, 1).is_err());
        assert!(draw_snp(10, 0.7, 1).is_err());
    }

    #[test]
    fn error_curves_deterministic_and_degenerate_variance() {
        let grid = TimeGrid::uniform(12);
        let spec = MaternSpec::default();
        let a = draw_error_curves(&grid, &spec, 4, 7).unwrap();
        let b = draw_error_curves(&grid, &spec, 4, 7).unwrap();
        assert_eq!(a.values(), b.values());

        let tiny = MaternSpec {
            mean: 1.7,
            variance: 1e-20,
            ..MaternSpec::default()
        };
        let c = draw_error_curves(&grid, &tiny, 1, 3).unwrap();
        for v in c.values().iter() {
            assert_relative_eq!(*v, 1.7, epsilon = 1e-8);
        }
    }

    #[test]
    fn error_curves_match_covariance_in_large_samples() {
        let grid = TimeGrid::from_points((1..=10).map(|j| j as f64 / 10.0).collect()).unwrap();
        let spec = MaternSpec::default();
        let curves = draw_error_curves(&grid, &spec, 50_000, 99).unwrap();
        let n = curves.len() as f64;
        let vals = curves.values();
        let pts = grid.points();
        for i in 0..10 {
            for j in 0..10 {
                let emp: f64 = vals
                    .column(i)
                    .iter()
                    .zip(vals.column(j).iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / n;
                let theory = matern_cov((pts[i] - pts[j]).abs(), &spec).unwrap();
                assert!(
                    (emp - theory).abs() < 0.02,
                    "({i},{j}): {emp} vs {theory}"
                );
            }
        }
    }

    #[test]
    fn error_curves_marginally_normal_and_stationary() {
        let grid = TimeGrid::uniform(8);
        let curves = draw_error_curves(&grid, &MaternSpec::default(), 20_000, 5).unwrap();
        let vals = curves.values();
        for j in 0..8 {
            let col: Vec<f64> = vals.column(j).iter().copied().collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let skew =
                col.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
            let kurt = col.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var);
            assert!(mean.abs() < 0.05 && skew.abs() < 0.1 && (kurt - 3.0).abs() < 0.3);
        }
        // stationarity: same-lag covariances agree within sampling error
        let lag_cov = |a: usize, b: usize| -> f64 {
            vals.column(a)
                .iter()
                .zip(vals.column(b).iter())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / vals.nrows() as f64
        };
        let c1 = lag_cov(0, 2);
        let c2 = lag_cov(3, 5);
        let c3 = lag_cov(5, 7);
        assert!((c1 - c2).abs() < 0.05 && (c2 - c3).abs() < 0.05, "{c1} {c2} {c3}");
    }

    #[test]
    fn power_study_smoke_deterministic() {
        let scenario = PowerScenario {
            signal: SignalKind::NormCdf,
            n: 40,
            m: 8,
            reps: 8,
            seed: 99,
            grid_size: 20,
            ..PowerScenario::default()
        };
        let rows = run_power_study(&scenario).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.power));
        }
        let again = run_power_study(&scenario).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.power, b.power);
        }
    }

    #[test]
    fn drift_single_snp_matches_closed_form() {
        let cfg = DriftCheckConfig {
            n_values: vec![2000],
            reps: 40,
            seed: 5,
            ..DriftCheckConfig::default()
        };
        let report = alternative_drift_check(&cfg).unwrap();
        // E[X²] = 0.5 and ‖β‖ = 0.18 give drift ≈ 0.0162
        assert_relative_eq!(report.theoretical_drift, 0.0162, epsilon = 2e-4);
        assert_relative_eq!(
            report.residualized_drift,
            report.theoretical_drift,
            max_relative = 0.02
        );
        let row = &report.rows[0];
        assert!(
            (row.mean_lambda_over_n - report.theoretical_drift).abs()
                < 0.15 * report.theoretical_drift + 0.3 / 2000.0,
            "Λ/N {} vs drift {}",
            row.mean_lambda_over_n,
            report.theoretical_drift
        );
    }

    #[test]
    fn drift_null_signal_is_zero() {
        let grid = TimeGrid::uniform(30);
        let beta = signal_curve(SignalKind::Null, &grid);
        assert_eq!(l2_norm(&beta), 0.0);
    }
}
