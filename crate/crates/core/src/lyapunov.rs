//! Stability estimators and margins: the per-step expected log norm
//! E log||A + B||, the product (top) Lyapunov exponent of the random matrix
//! product, scalar log-moments by quadrature, and the leading-order
//! analytic stabilization margin.
//!
//! All Monte Carlo loops draw trial i from the stream (seed, i) and reduce
//! in trial-index order, so estimates are identical no matter how many
//! worker threads rayon uses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, SquareMatrix};
use crate::noise::{sample_b, NoiseModel, ScalarDistribution};
use crate::quad;
use crate::rng::RngStream;

/// Gaussian integrands are truncated at this many standard deviations; the
/// tail mass it discards contributes less than 1e-13 to the log moments in
/// the parameter ranges this crate works in.
const GAUSSIAN_CUTOFF: f64 = 8.0;
/// Absolute tolerance for the log-moment quadrature.
const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_PANELS: usize = 4000;

/// Which quantity a `LyapunovEstimate` measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// Mean of log||A + B|| over independent draws.
    PerStepNorm,
    /// Time average of log growth along the random matrix product.
    ProductNorm,
}

/// Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub kind: EstimateKind,
    /// nats per step.
    pub mean: f64,
    pub std_error: f64,
    /// Draws used for per_step_norm; replicates for product_norm.
    pub samples: u64,
    pub seed: u64,
}

/// Three-valued outcome of the stability criterion at the 3 standard error
/// decision band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionVerdict {
    Satisfied,
    Violated,
    Inconclusive,
}

/// Verdict of the leading-order analytic margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginVerdict {
    Stabilizing,
    NotStabilizing,
    Inconclusive,
}

/// Leading-order stabilization margin report.
///
/// `taylor_margin` = eps + kappa - |sigma|^2 / 2 upper-bounds E log||A + B||
/// to leading order; `halfsq_ratio` = |sigma|^2 / (2 eps) must exceed 1
/// strictly for the margin mechanism to apply. Higher-order terms are not
/// modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub epsilon: f64,
    pub sigma_norm_sq: f64,
    pub kappa: f64,
    pub taylor_margin: f64,
    pub halfsq_ratio: f64,
    pub verdict: MarginVerdict,
}

/// Neumaier-compensated sum; keeps reductions reproducible and accurate
/// regardless of magnitude ordering.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and standard error of the mean (sample std / sqrt(n)).
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt().max(0.0))
}

/// Monte Carlo estimate of E log||A + B||.
///
/// Draw i comes from stream (seed, i). Draws that make A + B exactly zero
/// (log undefined) are skipped and counted; more than 0.1% skips is an
/// error because it signals a degenerate model.
pub fn per_step_log_norm_estimate(
    a: &SquareMatrix,
    model: &NoiseModel,
    samples: u64,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if samples < 100 {
        return Err(Error::InvalidInput(format!(
            "per-step estimate needs at least 100 samples, got {samples}"
        )));
    }
    model.validate()?;
    if a.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: a.dim(),
        });
    }

    let draws: Vec<Option<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut stream = RngStream::derive(seed, i);
            let b = sample_b(model, a, &mut stream)?;
            let m = a.add(&b);
            let norm = operator_norm(&m)?;
            Ok(if norm == 0.0 { None } else { Some(norm.ln()) })
        })
        .collect::<Result<_>>()?;

    let kept: Vec<f64> = draws.iter().copied().flatten().collect();
    let skipped = draws.len() - kept.len();
    if skipped * 1000 > samples as usize {
        return Err(Error::DegenerateDraws {
            skipped,
            total: samples as usize,
        });
    }

    let (mean, std_error) = mean_and_se(&kept);
    Ok(LyapunovEstimate {
        kind: EstimateKind::PerStepNorm,
        mean,
        std_error,
        samples: kept.len() as u64,
        seed,
    })
}

/// Product-exponent estimator with a caller-supplied per-step sampler.
///
/// Each replicate r owns stream (seed, r), starts from a random unit vector
/// drawn from that stream, and renormalizes the state every step while
/// accumulating log growth. The estimate is the mean over replicates of
/// (accumulated log growth) / horizon with the across-replicate standard
/// error.
pub fn product_lyapunov_with<F>(
    a: &SquareMatrix,
    sampler: F,
    horizon: u64,
    replicates: u64,
    seed: u64,
) -> Result<LyapunovEstimate>
where
    F: Fn(&mut RngStream) -> Result<SquareMatrix> + Sync,
{
    if horizon < 1000 {
        return Err(Error::InvalidInput(format!(
            "product estimate needs horizon >= 1000, got {horizon}"
        )));
    }
    if replicates < 10 {
        return Err(Error::InvalidInput(format!(
            "product estimate needs at least 10 replicates, got {replicates}"
        )));
    }

    let per_replicate: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut stream = RngStream::derive(seed, r);
            let mut v = stream.unit_vector(a.dim());
            let mut log_growth = 0.0f64;
            let mut comp = 0.0f64;
            for _ in 0..horizon {
                let b = sampler(&mut stream)?;
                let m = a.add(&b);
                let w = m.apply(&v);
                let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::InvalidInput(
                        "state collapsed to exactly zero during product iteration".into(),
                    ));
                }
                // Neumaier step keeps the long accumulation exact enough
                let term = norm.ln();
                let t = log_growth + term;
                if log_growth.abs() >= term.abs() {
                    comp += (log_growth - t) + term;
                } else {
                    comp += (term - t) + log_growth;
                }
                log_growth = t;
                v = w.into_iter().map(|x| x / norm).collect();
            }
            Ok((log_growth + comp) / horizon as f64)
        })
        .collect::<Result<_>>()?;

    let (mean, std_error) = mean_and_se(&per_replicate);
    Ok(LyapunovEstimate {
        kind: EstimateKind::ProductNorm,
        mean,
        std_error,
        samples: replicates,
        seed,
    })
}

/// Top Lyapunov exponent of the product (A + B_n) ... (A + B_1).
pub fn product_lyapunov_estimate(
    a: &SquareMatrix,
    model: &NoiseModel,
    horizon: u64,
    replicates: u64,
    seed: u64,
) -> Result<LyapunovEstimate> {
    model.validate()?;
    if a.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: a.dim(),
        });
    }
    product_lyapunov_with(a, |s| sample_b(model, a, s), horizon, replicates, seed)
}

/// Result of a scalar log-moment quadrature. `split_at_singularity` is set
/// when 1 + eps + sigma x crosses zero inside the integration domain; the
/// integral is still absolutely convergent and the domain is split there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarLogMoment {
    pub value: f64,
    pub split_at_singularity: bool,
}

/// E log|1 + eps + sigma xi| for a unit-variance zero-mean xi.
///
/// Exact two-point average for Rademacher; adaptive quadrature (absolute
/// tolerance 1e-10) for the gaussian and uniform families. The gaussian
/// integrand is truncated at +-8 standard deviations.
pub fn scalar_log_moment(
    one_plus_eps: f64,
    sigma: f64,
    dist: &ScalarDistribution,
) -> Result<ScalarLogMoment> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if !one_plus_eps.is_finite() {
        return Err(Error::InvalidInput("1 + eps must be finite".into()));
    }
    dist.validate()?;
    if (dist.variance() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "distribution must have unit variance before scaling, got {}",
            dist.variance()
        )));
    }

    if sigma == 0.0 {
        if one_plus_eps == 0.0 {
            return Err(Error::InvalidInput(
                "log moment undefined: 1 + eps = 0 with zero noise".into(),
            ));
        }
        return Ok(ScalarLogMoment {
            value: one_plus_eps.abs().ln(),
            split_at_singularity: false,
        });
    }

    match *dist {
        ScalarDistribution::Rademacher { .. } => {
            let up = one_plus_eps + sigma;
            let down = one_plus_eps - sigma;
            if up == 0.0 || down == 0.0 {
                return Err(Error::InvalidInput(
                    "log moment diverges: an atom of the two-point distribution hits zero".into(),
                ));
            }
            Ok(ScalarLogMoment {
                value: 0.5 * (up.abs().ln() + down.abs().ln()),
                split_at_singularity: false,
            })
        }
        ScalarDistribution::Gaussian { .. } => {
            let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let f = move |x: f64| log_abs_guarded(one_plus_eps + sigma * x) * phi(x);
            weighted_log_integral(&f, -GAUSSIAN_CUTOFF, GAUSSIAN_CUTOFF, one_plus_eps, sigma)
        }
        ScalarDistribution::UniformSymmetric { half_width } => {
            let density = 1.0 / (2.0 * half_width);
            let f = move |x: f64| log_abs_guarded(one_plus_eps + sigma * x) * density;
            weighted_log_integral(&f, -half_width, half_width, one_plus_eps, sigma)
        }
    }
}

/// ln|u| with the exact zero guarded; the guard only matters if a quadrature
/// node lands on the singular point to the last bit.
fn log_abs_guarded(u: f64) -> f64 {
    u.abs().max(f64::MIN_POSITIVE).ln()
}

fn weighted_log_integral<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    one_plus_eps: f64,
    sigma: f64,
) -> Result<ScalarLogMoment> {
    let singular_x = -one_plus_eps / sigma;
    if singular_x > lo && singular_x < hi {
        let left = quad::integrate(f, lo, singular_x, QUAD_TOL / 2.0, QUAD_MAX_PANELS)?;
        let right = quad::integrate(f, singular_x, hi, QUAD_TOL / 2.0, QUAD_MAX_PANELS)?;
        Ok(ScalarLogMoment {
            value: left + right,
            split_at_singularity: true,
        })
    } else {
        Ok(ScalarLogMoment {
            value: quad::integrate(f, lo, hi, QUAD_TOL, QUAD_MAX_PANELS)?,
            split_at_singularity: false,
        })
    }
}

/// Leading-order scalar margin eps - sigma^2 / 2.
pub fn taylor_margin(epsilon: f64, sigma_sq: f64) -> f64 {
    epsilon - sigma_sq / 2.0
}

/// Leading-order margin for a d-dimensional model: computes
/// |sigma(eps)|^2 over the diagonal gains, the ratio |sigma|^2 / (2 eps),
/// and the margin eps + kappa - |sigma|^2 / 2.
pub fn analytic_margin(model: &NoiseModel, epsilon: f64, kappa: f64) -> Result<MarginReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "analytic margin requires epsilon > 0, got {epsilon}"
        )));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "kappa must be >= 0, got {kappa}"
        )));
    }
    model.validate()?;
    let sigma = model.sigma_at(epsilon)?;
    let sigma_norm_sq: f64 = (0..model.dim)
        .map(|i| sigma.get(i, i) * sigma.get(i, i))
        .sum();
    let halfsq_ratio = sigma_norm_sq / (2.0 * epsilon);
    let margin = epsilon + kappa - sigma_norm_sq / 2.0;
    // the ratio must exceed 1 strictly; with that in hand, a nonnegative
    // margin means kappa ate the gain and leading order cannot decide
    let verdict = if halfsq_ratio > 1.0 && margin < 0.0 {
        MarginVerdict::Stabilizing
    } else if halfsq_ratio <= 1.0 {
        MarginVerdict::NotStabilizing
    } else {
        MarginVerdict::Inconclusive
    };
    Ok(MarginReport {
        epsilon,
        sigma_norm_sq,
        kappa,
        taylor_margin: margin,
        halfsq_ratio,
        verdict,
    })
}

/// Decide E log||A + B|| < 0 at the 3 standard error level.
pub fn check_stability_criterion(
    a: &SquareMatrix,
    model: &NoiseModel,
    samples: u64,
    seed: u64,
) -> Result<(CriterionVerdict, LyapunovEstimate)> {
    let est = per_step_log_norm_estimate(a, model, samples, seed)?;
    let verdict = if est.mean + 3.0 * est.std_error < 0.0 {
        CriterionVerdict::Satisfied
    } else if est.mean - 3.0 * est.std_error > 0.0 {
        CriterionVerdict::Violated
    } else {
        CriterionVerdict::Inconclusive
    };
    Ok((verdict, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{BaseFamily, GainLaw};

    fn scalar_noise_model(sigma: f64, one_plus_eps: f64) -> NoiseModel {
        // B = A (a xi) with a = sigma / (1 + eps) makes A + B = 1 + eps + sigma xi
        NoiseModel::diagonal_scalar(
            1,
            GainLaw::Const {
                value: sigma / one_plus_eps,
            },
            BaseFamily::Gaussian,
            0.005,
        )
        .unwrap()
    }

    #[test]
    fn per_step_degenerate_no_noise() {
        let a = SquareMatrix::diagonal(&[0.5]);
        let model =
            NoiseModel::diagonal_scalar(1, GainLaw::ZERO, BaseFamily::Gaussian, 0.01).unwrap();
        let est = per_step_log_norm_estimate(&a, &model, 200, 1).unwrap();
        assert!((est.mean - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.samples, 200);
    }

    #[test]
    fn per_step_deterministic_in_seed() {
        let a = SquareMatrix::diagonal(&[1.01, 0.5]);
        let model = NoiseModel::planar_example(0.01, 5.0).unwrap();
        let e1 = per_step_log_norm_estimate(&a, &model, 2000, 7).unwrap();
        let e2 = per_step_log_norm_estimate(&a, &model, 2000, 7).unwrap();
        assert_eq!(e1.mean.to_bits(), e2.mean.to_bits());
        assert_eq!(e1.std_error.to_bits(), e2.std_error.to_bits());
    }

    #[test]
    fn per_step_matches_quadrature_on_scalar_system() {
        let sigma = 0.02f64.sqrt();
        let a = SquareMatrix::diagonal(&[1.005]);
        let model = scalar_noise_model(sigma, 1.005);
        let est = per_step_log_norm_estimate(&a, &model, 200_000, 11).unwrap();
        let quad = scalar_log_moment(
            1.005,
            sigma,
            &ScalarDistribution::Gaussian {
                mean: 0.0,
                std: 1.0,
            },
        )
        .unwrap();
        assert!(
            (est.mean - quad.value).abs() < 3.0 * est.std_error,
            "mc {} vs quad {} (se {})",
            est.mean,
            quad.value,
            est.std_error
        );
    }

    #[test]
    fn product_no_noise_diagonal() {
        let a = SquareMatrix::diagonal(&[1.01, 0.5]);
        let model = NoiseModel::planar_example(0.01, 0.0).unwrap();
        let est = product_lyapunov_estimate(&a, &model, 100_000, 10, 3).unwrap();
        // the random start direction leaves a transient log|v . e1| / horizon
        assert!(
            (est.mean - 1.01f64.ln()).abs() < 1e-3,
            "got {}, want about {}",
            est.mean,
            1.01f64.ln()
        );
    }

    #[test]
    fn product_no_noise_diagonal_transient_accounted() {
        // with the start vector known, the finite-horizon value is
        // log(1.01) + log|v0 . e1| / horizon up to a geometrically small tail
        let a = SquareMatrix::diagonal(&[1.01, 0.5]);
        let model = NoiseModel::planar_example(0.01, 0.0).unwrap();
        let horizon = 100_000u64;
        let est = product_lyapunov_estimate(&a, &model, horizon, 10, 3).unwrap();
        let mut predicted = Vec::new();
        for r in 0..10u64 {
            let mut s = RngStream::derive(3, r);
            let v = s.unit_vector(2);
            predicted.push(1.01f64.ln() + v[0].abs().ln() / horizon as f64);
        }
        let want = predicted.iter().sum::<f64>() / predicted.len() as f64;
        assert!(
            (est.mean - want).abs() < 1e-9,
            "got {}, predicted {}",
            est.mean,
            want
        );
    }

    #[test]
    fn product_no_noise_jordan_block() {
        let a = SquareMatrix::from_rows(&[vec![1.01, 0.1], vec![0.0, 1.01]]).unwrap();
        let model = NoiseModel::planar_example(0.01, 0.0).unwrap();
        let est = product_lyapunov_estimate(&a, &model, 100_000, 10, 5).unwrap();
        assert!(
            (est.mean - 1.01f64.ln()).abs() < 1e-3,
            "got {}, want about {}",
            est.mean,
            1.01f64.ln()
        );
    }

    #[test]
    fn scalar_log_moment_trivial_and_rademacher() {
        let g = ScalarDistribution::Gaussian {
            mean: 0.0,
            std: 1.0,
        };
        assert_eq!(scalar_log_moment(1.0, 0.0, &g).unwrap().value, 0.0);

        let r = ScalarDistribution::Rademacher { scale: 1.0 };
        let m = scalar_log_moment(1.02, 0.1, &r).unwrap();
        let want = 0.5 * ((1.12f64).ln() + (0.92f64).ln());
        assert_eq!(m.value, want);
        assert!(!m.split_at_singularity);
    }

    #[test]
    fn scalar_log_moment_taylor_agreement() {
        // eps = 0.005, sigma^2 = 0.02: quadrature within 2 sigma^3 of eps - sigma^2/2
        let sigma = 0.02f64.sqrt();
        let g = ScalarDistribution::Gaussian {
            mean: 0.0,
            std: 1.0,
        };
        let m = scalar_log_moment(1.005, sigma, &g).unwrap();
        assert!(m.value < 0.0);
        let taylor = taylor_margin(0.005, 0.02);
        assert!(
            (m.value - taylor).abs() < 2.0 * sigma.powi(3),
            "quad {} vs taylor {}",
            m.value,
            taylor
        );
    }

    #[test]
    fn scalar_log_moment_flags_interior_singularity() {
        // sigma large enough that 1 + eps + sigma x crosses zero inside 8 sd
        let g = ScalarDistribution::Gaussian {
            mean: 0.0,
            std: 1.0,
        };
        let m = scalar_log_moment(1.005, 0.3, &g).unwrap();
        assert!(m.split_at_singularity);
        assert!(m.value.is_finite());
    }

    #[test]
    fn scalar_log_moment_rejects_non_unit_variance() {
        let bad = ScalarDistribution::Gaussian {
            mean: 0.0,
            std: 2.0,
        };
        assert!(scalar_log_moment(1.0, 0.1, &bad).is_err());
    }

    #[test]
    fn taylor_margin_paper_values() {
        // 0.02 / 2 and the subtraction are exact in binary64
        assert_eq!(taylor_margin(0.005, 0.02), -0.005);
        // 0.15 is not a binary64 value, so equality holds only up to the
        // representation error of the inputs
        assert!((taylor_margin(0.05, 0.15) - (-0.025)).abs() <= f64::EPSILON);
        assert_eq!(taylor_margin(0.01, 0.02), 0.0);
    }

    #[test]
    fn analytic_margin_diagonal_scalar() {
        // a^2 = 3 eps in dimension 2: |sigma|^2 = 6 eps, ratio 3, margin -2 eps
        let eps = 0.01;
        let model = NoiseModel::diagonal_scalar(
            2,
            GainLaw::SqrtEps { rho: 3.0 },
            BaseFamily::Gaussian,
            eps,
        )
        .unwrap();
        let report = analytic_margin(&model, eps, 0.0).unwrap();
        assert!((report.halfsq_ratio - 3.0).abs() < 1e-12);
        assert!((report.taylor_margin - (-2.0 * eps)).abs() < 1e-14);
        assert_eq!(report.verdict, MarginVerdict::Stabilizing);
    }

    #[test]
    fn analytic_margin_zero_sigma_not_stabilizing() {
        let model =
            NoiseModel::diagonal_scalar(2, GainLaw::ZERO, BaseFamily::Gaussian, 0.01).unwrap();
        let report = analytic_margin(&model, 0.01, 0.0).unwrap();
        assert_eq!(report.halfsq_ratio, 0.0);
        assert_eq!(report.verdict, MarginVerdict::NotStabilizing);
    }

    #[test]
    fn analytic_margin_boundary_ratio_not_stabilizing() {
        // a^2 = 2 eps exactly: ratio = 1, strict inequality fails
        let eps = 0.01;
        let model = NoiseModel::diagonal_scalar(
            1,
            GainLaw::SqrtEps { rho: 2.0 },
            BaseFamily::Gaussian,
            eps,
        )
        .unwrap();
        let report = analytic_margin(&model, eps, 0.0).unwrap();
        assert!((report.halfsq_ratio - 1.0).abs() < 1e-12);
        assert_eq!(report.verdict, MarginVerdict::NotStabilizing);
    }

    #[test]
    fn analytic_margin_rejects_nonpositive_epsilon() {
        let model =
            NoiseModel::diagonal_scalar(1, GainLaw::ZERO, BaseFamily::Gaussian, 0.01).unwrap();
        assert!(analytic_margin(&model, 0.0, 0.0).is_err());
        assert!(analytic_margin(&model, -0.01, 0.0).is_err());
    }

    #[test]
    fn criterion_trivial_cases() {
        let model = NoiseModel::planar_example(0.01, 0.0).unwrap();

        let stable = SquareMatrix::diagonal(&[0.5, 0.5]);
        let (v, est) = check_stability_criterion(&stable, &model, 200, 1).unwrap();
        assert_eq!(v, CriterionVerdict::Satisfied);
        assert!((est.mean - 0.5f64.ln()).abs() < 1e-15);

        let unstable = SquareMatrix::diagonal(&[1.01, 0.5]);
        let (v, est) = check_stability_criterion(&unstable, &model, 200, 1).unwrap();
        assert_eq!(v, CriterionVerdict::Violated);
        assert!((est.mean - 1.01f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn estimate_json_shape() {
        let est = LyapunovEstimate {
            kind: EstimateKind::PerStepNorm,
            mean: -0.01,
            std_error: 0.001,
            samples: 1000,
            seed: 7,
        };
        let json = serde_json::to_value(&est).unwrap();
        assert_eq!(json["kind"], "per_step_norm");
        assert_eq!(json["samples"], 1000);
    }
}
