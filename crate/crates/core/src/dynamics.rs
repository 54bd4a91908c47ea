//! Trajectory simulation of x_{n+1} = (A + B_n) x_n + q(x_n), escape
//! probability estimation over a grid of initial radii, decay-envelope
//! fitting, and the discrete Gronwall bound.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, SquareMatrix};
use crate::noise::{sample_b, NoiseModel};
use crate::rng::RngStream;

/// Nonlinear part of the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// Pure linear map x' = (A + B) x.
    None,
    /// Scalar logistic update x' = lambda x (1 - x) + b x. Only valid in
    /// dimension 1, and A must equal (lambda).
    Logistic { lambda: f64 },
    /// x' = (A + B) x + q(x) with q_k(x) = x^T Q_k x.
    QuadraticCustom { forms: Vec<SquareMatrix> },
}

/// The full difference equation: linear part, noise model, nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSystem {
    pub a: SquareMatrix,
    pub noise: NoiseModel,
    pub nonlinearity: Nonlinearity,
}

impl MapSystem {
    pub fn linear(a: SquareMatrix, noise: NoiseModel) -> Result<Self> {
        let sys = Self {
            a,
            noise,
            nonlinearity: Nonlinearity::None,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Logistic map with multiplicative noise; the linear part is implied
    /// by lambda.
    pub fn logistic(lambda: f64, noise: NoiseModel) -> Result<Self> {
        let sys = Self {
            a: SquareMatrix::diagonal(&[lambda]),
            noise,
            nonlinearity: Nonlinearity::Logistic { lambda },
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.a.dim() != self.noise.dim {
            return Err(Error::DimensionMismatch {
                expected: self.a.dim(),
                got: self.noise.dim,
            });
        }
        match &self.nonlinearity {
            Nonlinearity::None => {}
            Nonlinearity::Logistic { lambda } => {
                if self.a.dim() != 1 {
                    return Err(Error::InvalidInput(
                        "logistic nonlinearity requires dimension 1".into(),
                    ));
                }
                if self.a.get(0, 0) != *lambda {
                    return Err(Error::InvalidInput(format!(
                        "logistic map implies A = ({lambda}), got ({})",
                        self.a.get(0, 0)
                    )));
                }
            }
            Nonlinearity::QuadraticCustom { forms } => {
                if forms.len() != self.a.dim() {
                    return Err(Error::InvalidInput(format!(
                        "need {} quadratic forms, got {}",
                        self.a.dim(),
                        forms.len()
                    )));
                }
                if forms.iter().any(|q| q.dim() != self.a.dim()) {
                    return Err(Error::InvalidInput(
                        "quadratic form dimensions must match the system".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Constant C1 with |q(x)| <= C1 |x|^2 near the origin.
    pub fn quadratic_growth_constant(&self) -> Result<f64> {
        match &self.nonlinearity {
            Nonlinearity::None => Ok(0.0),
            Nonlinearity::Logistic { lambda } => Ok(lambda.abs()),
            Nonlinearity::QuadraticCustom { forms } => {
                let mut sum = 0.0;
                for q in forms {
                    let n = operator_norm(q)?;
                    sum += n * n;
                }
                Ok(sum.sqrt())
            }
        }
    }
}

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    Escaped { radius: f64 },
    Converged { threshold: f64 },
}

/// Recorded trajectory. Norms are always kept; states only when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Option<Vec<Vec<f64>>>,
    pub norms: Vec<f64>,
    pub seed: u64,
    pub stopped: StopReason,
    /// Set when the state norm left the binary64 range before crossing the
    /// escape radius.
    pub overflowed: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn final_norm(&self) -> f64 {
        *self.norms.last().expect("trajectory always records x0")
    }

    /// CSV export: `n,norm` in norms-only mode, `n,x1,...,xd,norm` when
    /// states were retained.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.states {
            Some(states) => {
                let d = states.first().map_or(0, Vec::len);
                write!(w, "n")?;
                for k in 1..=d {
                    write!(w, ",x{k}")?;
                }
                writeln!(w, ",norm")?;
                for (n, (x, norm)) in states.iter().zip(&self.norms).enumerate() {
                    write!(w, "{n}")?;
                    for v in x {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w, ",{norm}")?;
                }
            }
            None => {
                writeln!(w, "n,norm")?;
                for (n, norm) in self.norms.iter().enumerate() {
                    writeln!(w, "{n},{norm}")?;
                }
            }
        }
        Ok(())
    }
}

/// Simulation controls. `converge_threshold` = 0 disables the convergence
/// stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub horizon: usize,
    pub escape_radius: f64,
    pub converge_threshold: f64,
    pub retain_states: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            escape_radius: 0.1,
            converge_threshold: 1e-12,
            retain_states: false,
        }
    }
}

fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterate the map from x0, drawing a fresh B_n each step from the
/// seed-derived stream. Stops early on escape (|x| > escape_radius) or
/// convergence (|x| < converge_threshold, when enabled).
pub fn simulate(sys: &MapSystem, x0: &[f64], opts: &SimOptions, seed: u64) -> Result<Trajectory> {
    simulate_stream(sys, x0, opts, RngStream::root(seed))
}

/// Like `simulate`, but on an explicit stream, so a trial loop can hand
/// trial i the stream (seed, i).
pub fn simulate_stream(
    sys: &MapSystem,
    x0: &[f64],
    opts: &SimOptions,
    mut stream: RngStream,
) -> Result<Trajectory> {
    sys.validate()?;
    let d = sys.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("x0 entries must be finite".into()));
    }
    if opts.horizon < 1 {
        return Err(Error::InvalidInput("horizon must be >= 1".into()));
    }
    let x0_norm = euclidean_norm(x0);
    if !(opts.escape_radius > x0_norm) {
        return Err(Error::InvalidInput(format!(
            "escape radius {} must exceed |x0| = {x0_norm}",
            opts.escape_radius
        )));
    }
    if opts.converge_threshold != 0.0 && !(opts.converge_threshold < x0_norm) {
        return Err(Error::InvalidInput(format!(
            "converge threshold {} must be 0 (disabled) or below |x0| = {x0_norm}",
            opts.converge_threshold
        )));
    }

    let seed = stream.seed();
    let mut x = x0.to_vec();
    let mut norms = Vec::with_capacity(opts.horizon + 1);
    norms.push(x0_norm);
    let mut states = opts.retain_states.then(|| {
        let mut s = Vec::with_capacity(opts.horizon + 1);
        s.push(x.clone());
        s
    });

    let mut stopped = StopReason::Horizon;
    let mut overflowed = false;

    for _ in 0..opts.horizon {
        let b = sample_b(&sys.noise, &sys.a, &mut stream)?;
        x = match &sys.nonlinearity {
            Nonlinearity::None => sys.a.add(&b).apply(&x),
            Nonlinearity::Logistic { lambda } => {
                let xi = x[0];
                vec![lambda * xi * (1.0 - xi) + b.get(0, 0) * xi]
            }
            Nonlinearity::QuadraticCustom { forms } => {
                let mut next = sys.a.add(&b).apply(&x);
                for (k, q) in forms.iter().enumerate() {
                    let qx = q.apply(&x);
                    next[k] += x.iter().zip(&qx).map(|(a, b)| a * b).sum::<f64>();
                }
                next
            }
        };
        let norm = euclidean_norm(&x);
        norms.push(norm);
        if let Some(s) = states.as_mut() {
            s.push(x.clone());
        }
        if !norm.is_finite() {
            stopped = StopReason::Escaped {
                radius: opts.escape_radius,
            };
            overflowed = true;
            break;
        }
        if norm > opts.escape_radius {
            stopped = StopReason::Escaped {
                radius: opts.escape_radius,
            };
            break;
        }
        if opts.converge_threshold > 0.0 && norm < opts.converge_threshold {
            stopped = StopReason::Converged {
                threshold: opts.converge_threshold,
            };
            break;
        }
    }

    Ok(Trajectory {
        states,
        norms,
        seed,
        stopped,
        overflowed,
    })
}

/// Run the system twice under the same seed: as given, and with the noise
/// gain forced to zero. Returns (noisy, deterministic).
pub fn deterministic_comparison(
    sys: &MapSystem,
    x0: &[f64],
    opts: &SimOptions,
    seed: u64,
) -> Result<(Trajectory, Trajectory)> {
    let noisy = simulate(sys, x0, opts, seed)?;
    let silent = MapSystem {
        a: sys.a.clone(),
        noise: sys.noise.with_zero_gain(),
        nonlinearity: sys.nonlinearity.clone(),
    };
    let deterministic = simulate(&silent, x0, opts, seed)?;
    Ok((noisy, deterministic))
}

/// Verdict of an escape-probability study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityEvidence {
    StableInProbabilityEvidence,
    UnstableEvidence,
    Inconclusive,
}

/// Escape probabilities over a grid of initial radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub radii: Vec<f64>,
    pub escape_probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Mean least-squares slope of log|x_n| over surviving trajectories at
    /// the smallest radius; None when every trial escaped.
    pub decay_rate_fit: Option<f64>,
    pub verdict: StabilityEvidence,
    pub seed: u64,
    pub horizon: usize,
    pub eps_ball: f64,
}

/// Estimate P(sup_{n <= horizon} |x_n| > eps_ball) for initial conditions
/// x0 = r e_1 over the decreasing radius grid.
///
/// Evidence for stability in probability: escape estimates monotone
/// nonincreasing along the grid (within 2 binomial standard errors) and the
/// smallest-radius estimate below 0.05.
pub fn escape_probability(
    sys: &MapSystem,
    radius_grid: &[f64],
    trials: usize,
    horizon: usize,
    eps_ball: f64,
    seed: u64,
) -> Result<StabilityReport> {
    let mut direction = vec![0.0; sys.dim()];
    direction[0] = 1.0;
    escape_probability_with_direction(
        sys,
        radius_grid,
        trials,
        horizon,
        eps_ball,
        seed,
        &direction,
    )
}

/// `escape_probability` with a configurable initial direction.
pub fn escape_probability_with_direction(
    sys: &MapSystem,
    radius_grid: &[f64],
    trials: usize,
    horizon: usize,
    eps_ball: f64,
    seed: u64,
    direction: &[f64],
) -> Result<StabilityReport> {
    sys.validate()?;
    if trials < 100 {
        return Err(Error::InvalidInput(format!(
            "escape probability needs at least 100 trials, got {trials}"
        )));
    }
    if radius_grid.is_empty() {
        return Err(Error::InvalidInput("radius grid must not be empty".into()));
    }
    if radius_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "radius grid must be strictly decreasing".into(),
        ));
    }
    if radius_grid.iter().any(|&r| !(r > 0.0 && r < eps_ball)) {
        return Err(Error::InvalidInput(
            "radii must be positive and below eps_ball".into(),
        ));
    }
    if direction.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: direction.len(),
        });
    }
    let dir_norm = euclidean_norm(direction);
    if !(dir_norm > 0.0 && dir_norm.is_finite()) {
        return Err(Error::InvalidInput(
            "direction must be a nonzero vector".into(),
        ));
    }
    let unit: Vec<f64> = direction.iter().map(|v| v / dir_norm).collect();

    let opts = SimOptions {
        horizon,
        escape_radius: eps_ball,
        converge_threshold: 0.0,
        retain_states: false,
    };
    let burn = horizon / 10;

    let mut escape_probs = Vec::with_capacity(radius_grid.len());
    let mut std_errors = Vec::with_capacity(radius_grid.len());
    let mut smallest_radius_slopes: Vec<f64> = Vec::new();

    for (k, &radius) in radius_grid.iter().enumerate() {
        let x0: Vec<f64> = unit.iter().map(|v| v * radius).collect();
        let outcomes: Vec<(bool, Option<f64>)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let stream = RngStream::derive(seed, (k * trials + t) as u64);
                let traj = simulate_stream(sys, &x0, &opts, stream)?;
                let escaped = matches!(traj.stopped, StopReason::Escaped { .. });
                let slope = if escaped {
                    None
                } else {
                    ols_log_slope(&traj.norms, burn).map(|(s, _)| s)
                };
                Ok((escaped, slope))
            })
            .collect::<Result<_>>()?;

        let escaped = outcomes.iter().filter(|(e, _)| *e).count();
        let p = escaped as f64 / trials as f64;
        escape_probs.push(p);
        std_errors.push((p * (1.0 - p) / trials as f64).sqrt());
        if k == radius_grid.len() - 1 {
            smallest_radius_slopes = outcomes.into_iter().filter_map(|(_, s)| s).collect();
        }
    }

    let decay_rate_fit = if smallest_radius_slopes.is_empty() {
        None
    } else {
        Some(
            crate::lyapunov::compensated_sum(smallest_radius_slopes.iter().copied())
                / smallest_radius_slopes.len() as f64,
        )
    };

    let monotone = escape_probs
        .windows(2)
        .zip(std_errors.windows(2))
        .all(|(p, s)| p[1] <= p[0] + 2.0 * (s[0] * s[0] + s[1] * s[1]).sqrt());
    let last_p = *escape_probs.last().expect("grid is nonempty");
    let last_se = *std_errors.last().expect("grid is nonempty");
    let verdict = if monotone && last_p < 0.05 {
        StabilityEvidence::StableInProbabilityEvidence
    } else if last_p - 2.0 * last_se > 0.5 {
        StabilityEvidence::UnstableEvidence
    } else {
        StabilityEvidence::Inconclusive
    };

    Ok(StabilityReport {
        radii: radius_grid.to_vec(),
        escape_probs,
        std_errors,
        decay_rate_fit,
        verdict,
        seed,
        horizon,
        eps_ball,
    })
}

/// Ordinary least squares of log norms[n] against n for n >= burn.
/// Returns (slope, slope standard error); None if any norm in range is
/// nonpositive or fewer than two points remain.
///
/// The residuals of a noisy trajectory are integrated noise, not iid, so
/// the slope error uses the random-walk-with-drift formula
/// var(slope) = 1.2 var(increments) / m instead of the iid OLS one.
pub(crate) fn ols_log_slope(norms: &[f64], burn: usize) -> Option<(f64, f64)> {
    if norms.len() < burn + 2 {
        return None;
    }
    let ys: Vec<f64> = norms[burn..]
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NAN })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return None;
    }
    let m = ys.len();
    let x_mean = burn as f64 + (m as f64 - 1.0) / 2.0;
    let y_mean = crate::lyapunov::compensated_sum(ys.iter().copied()) / m as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = (burn + i) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;

    let increments: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let se = if increments.len() < 2 {
        0.0
    } else {
        let inc_mean =
            crate::lyapunov::compensated_sum(increments.iter().copied()) / increments.len() as f64;
        let var = increments
            .iter()
            .map(|d| (d - inc_mean) * (d - inc_mean))
            .sum::<f64>()
            / (increments.len() - 1) as f64;
        (1.2 * var / m as f64).sqrt()
    };
    Some((slope, se))
}

/// Fitted decay envelope |x_n| <= eta_hat * mu_hat^n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub mu_hat: f64,
    pub eta_hat: f64,
    pub log_mu: f64,
    pub log_eta: f64,
    /// Standard error of log mu under the integrated-noise model.
    pub log_mu_se: f64,
}

impl DecayFit {
    /// Envelope value eta_hat * mu_hat^n, evaluated in log space so long
    /// horizons cannot underflow.
    pub fn envelope_at(&self, n: usize) -> f64 {
        (self.log_eta + n as f64 * self.log_mu).exp()
    }
}

/// Least-squares fit of log|x_n| = log eta + n log mu over n >= burn_in,
/// with eta then raised the minimal amount needed for the envelope to
/// dominate every recorded norm (including the pre-burn-in ones).
pub fn fit_decay_envelope(traj: &Trajectory, burn_in: usize) -> Result<DecayFit> {
    if traj.norms.len() < burn_in + 100 {
        return Err(Error::InvalidInput(format!(
            "need at least burn_in + 100 = {} recorded norms, trajectory has {}",
            burn_in + 100,
            traj.norms.len()
        )));
    }
    if traj.norms[burn_in..].iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput(
            "norms after burn-in must be positive for a log-space fit".into(),
        ));
    }
    let (slope, se) = ols_log_slope(&traj.norms, burn_in).expect("preconditions checked above");

    // Raise log eta so the envelope clears every point; the 1e-12 pad
    // absorbs rounding in the exp/ln round trips.
    let log_mu = slope;
    let mut log_eta = f64::NEG_INFINITY;
    for (n, &norm) in traj.norms.iter().enumerate() {
        if norm > 0.0 {
            log_eta = log_eta.max(norm.ln() - n as f64 * log_mu);
        }
    }
    log_eta += 1e-12;

    Ok(DecayFit {
        mu_hat: log_mu.exp(),
        eta_hat: log_eta.exp(),
        log_mu,
        log_eta,
        log_mu_se: se,
    })
}

/// Discrete Gronwall bounds: given z_k <= b + sum_{j<=k} mu_j z_{j-1}, the
/// sequence b * exp(sum_{j<=k} mu_j) dominates z_k. Entries of `mu_seq`
/// must be nonnegative and finite.
pub fn gronwall_bound(b: f64, mu_seq: &[f64]) -> Vec<f64> {
    assert!(b >= 0.0 && b.is_finite(), "gronwall B must be >= 0");
    assert!(
        mu_seq.iter().all(|&m| m >= 0.0 && m.is_finite()),
        "gronwall mu entries must be >= 0"
    );
    let mut out = Vec::with_capacity(mu_seq.len());
    let mut acc = 0.0f64;
    for &mu in mu_seq {
        acc += mu;
        out.push(b * acc.exp());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{BaseFamily, GainLaw};

    fn quiet_noise(dim: usize) -> NoiseModel {
        NoiseModel::diagonal_scalar(dim, GainLaw::ZERO, BaseFamily::Gaussian, 0.005).unwrap()
    }

    fn growth_options(horizon: usize) -> SimOptions {
        SimOptions {
            horizon,
            escape_radius: 1e12,
            converge_threshold: 0.0,
            retain_states: false,
        }
    }

    #[test]
    fn deterministic_geometric_growth() {
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[1.005]), quiet_noise(1)).unwrap();
        let traj = simulate(&sys, &[1e-3], &growth_options(100), 0).unwrap();
        assert_eq!(traj.len(), 101);
        assert!(matches!(traj.stopped, StopReason::Horizon));
        let expected = 1e-3 * 1.005f64.powi(100);
        assert!((traj.final_norm() - expected).abs() < 1e-15 * expected);
        assert!(traj.norms.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn logistic_settles_at_interior_fixed_point() {
        let sys = MapSystem::logistic(1.05, quiet_noise(1)).unwrap();
        let traj = simulate(&sys, &[0.3], &growth_options(2000), 0).unwrap();
        let fixed_point = 0.05 / 1.05;
        assert!(
            (traj.final_norm() - fixed_point).abs() < 1e-12,
            "final {} vs fixed point {fixed_point}",
            traj.final_norm()
        );
    }

    #[test]
    fn logistic_requires_matching_linear_part() {
        let sys = MapSystem {
            a: SquareMatrix::diagonal(&[1.2]),
            noise: quiet_noise(1),
            nonlinearity: Nonlinearity::Logistic { lambda: 1.05 },
        };
        assert!(sys.validate().is_err());
    }

    #[test]
    fn quadratic_custom_steps_match_hand_computation() {
        // q(x) = (x^T Q1 x, x^T Q2 x) with simple forms
        let q1 = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let q2 = SquareMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let a = SquareMatrix::diagonal(&[0.9, 0.8]);
        let sys = MapSystem {
            a: a.clone(),
            noise: NoiseModel::planar_example(0.01, 0.0).unwrap(),
            nonlinearity: Nonlinearity::QuadraticCustom {
                forms: vec![q1, q2],
            },
        };
        sys.validate().unwrap();
        let x0 = [0.2, -0.1];
        let opts = SimOptions {
            horizon: 1,
            escape_radius: 10.0,
            converge_threshold: 0.0,
            retain_states: true,
        };
        let traj = simulate(&sys, &x0, &opts, 0).unwrap();
        let states = traj.states.unwrap();
        // x1 = A x0 + q(x0): q1 term = x^2 = 0.04, q2 term = x*y = -0.02
        let want = [0.9 * 0.2 + 0.04, 0.8 * (-0.1) + (-0.02)];
        assert!((states[1][0] - want[0]).abs() < 1e-15);
        assert!((states[1][1] - want[1]).abs() < 1e-15);

        // |q(x)| <= C1 |x|^2 with C1 = sqrt(||Q1||^2 + ||Q2||^2)
        let c1 = sys.quadratic_growth_constant().unwrap();
        assert!((c1 - (1.0f64 + 0.25).sqrt()).abs() < 1e-12);
        let q_norm = (0.04f64 * 0.04 + 0.02 * 0.02).sqrt();
        let x_norm_sq = 0.2f64 * 0.2 + 0.1 * 0.1;
        assert!(q_norm <= c1 * x_norm_sq + 1e-15);
    }

    #[test]
    fn early_stop_reasons_are_sound() {
        // expansion crosses the escape radius
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[1.1]), quiet_noise(1)).unwrap();
        let opts = SimOptions {
            horizon: 1000,
            escape_radius: 0.01,
            converge_threshold: 0.0,
            retain_states: false,
        };
        let traj = simulate(&sys, &[1e-3], &opts, 0).unwrap();
        assert!(matches!(traj.stopped, StopReason::Escaped { .. }));
        assert!(traj.final_norm() > 0.01);

        // contraction crosses the convergence threshold
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[0.5]), quiet_noise(1)).unwrap();
        let opts = SimOptions {
            horizon: 1000,
            escape_radius: 1.0,
            converge_threshold: 1e-6,
            retain_states: false,
        };
        let traj = simulate(&sys, &[1e-3], &opts, 0).unwrap();
        assert!(matches!(traj.stopped, StopReason::Converged { .. }));
        assert!(traj.final_norm() < 1e-6);
    }

    #[test]
    fn norms_match_states_when_retained() {
        let a = SquareMatrix::from_rows(&[vec![0.9, 0.2], vec![-0.1, 0.8]]).unwrap();
        let model = NoiseModel::planar_example(0.01, 2.0).unwrap();
        let sys = MapSystem::linear(a, model).unwrap();
        let opts = SimOptions {
            horizon: 200,
            escape_radius: 1e9,
            converge_threshold: 0.0,
            retain_states: true,
        };
        let traj = simulate(&sys, &[1e-3, 2e-3], &opts, 9).unwrap();
        let states = traj.states.as_ref().unwrap();
        assert_eq!(states.len(), traj.norms.len());
        for (x, &n) in states.iter().zip(&traj.norms) {
            let direct = euclidean_norm(x);
            assert!((direct - n).abs() <= 1e-15 * direct.max(1.0));
        }
    }

    #[test]
    fn seed_determinism_bit_for_bit() {
        let model = NoiseModel::planar_example(0.01, 5.0).unwrap();
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[1.01, 0.5]), model).unwrap();
        let opts = SimOptions {
            horizon: 500,
            escape_radius: 1e9,
            converge_threshold: 0.0,
            retain_states: true,
        };
        let t1 = simulate(&sys, &[1e-3, 0.0], &opts, 1234).unwrap();
        let t2 = simulate(&sys, &[1e-3, 0.0], &opts, 1234).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn power_of_two_scaling_is_exact() {
        let model = NoiseModel::planar_example(0.01, 5.0).unwrap();
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[1.01, 0.5]), model).unwrap();
        let c = 4.0;
        let opts_small = SimOptions {
            horizon: 300,
            escape_radius: 1e9,
            converge_threshold: 0.0,
            retain_states: true,
        };
        let opts_big = SimOptions {
            escape_radius: 1e9 * c,
            ..opts_small
        };
        let base = simulate(&sys, &[1e-3, 2e-3], &opts_small, 7).unwrap();
        let scaled = simulate(&sys, &[1e-3 * c, 2e-3 * c], &opts_big, 7).unwrap();
        let b = base.states.unwrap();
        let s = scaled.states.unwrap();
        assert_eq!(b.len(), s.len());
        for (xb, xs) in b.iter().zip(&s) {
            for (vb, vs) in xb.iter().zip(xs) {
                assert_eq!((vb * c).to_bits(), vs.to_bits());
            }
        }
    }

    #[test]
    fn comparison_pair_identical_when_noise_already_zero() {
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[0.9]), quiet_noise(1)).unwrap();
        let (noisy, det) = deterministic_comparison(&sys, &[1e-3], &growth_options(50), 3).unwrap();
        assert_eq!(noisy, det);
    }

    #[test]
    fn escape_probability_trivial_cases() {
        // contractive deterministic system never escapes
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[0.5, 0.5]), {
            NoiseModel::planar_example(0.01, 0.0).unwrap()
        })
        .unwrap();
        let report = escape_probability(&sys, &[1e-2, 1e-3, 1e-4], 100, 200, 0.1, 1).unwrap();
        assert!(report.escape_probs.iter().all(|&p| p == 0.0));
        assert_eq!(
            report.verdict,
            StabilityEvidence::StableInProbabilityEvidence
        );

        // deterministic expansion escapes every ball
        let sys = MapSystem::linear(SquareMatrix::diagonal(&[1.005]), quiet_noise(1)).unwrap();
        let report = escape_probability(&sys, &[1e-3, 1e-4], 100, 10_000, 0.1, 1).unwrap();
        assert!(report.escape_probs.iter().all(|&p| p == 1.0));
        assert_eq!(report.verdict, StabilityEvidence::UnstableEvidence);
    }

    #[test]
    fn fit_envelope_pure_geometric() {
        let norms: Vec<f64> = (0..300).map(|n| 0.9f64.powi(n)).collect();
        let traj = Trajectory {
            states: None,
            norms,
            seed: 0,
            stopped: StopReason::Horizon,
            overflowed: false,
        };
        let fit = fit_decay_envelope(&traj, 50).unwrap();
        assert!((fit.mu_hat - 0.9).abs() < 1e-12);
        assert!((fit.eta_hat - 1.0).abs() < 1e-9);
        assert!(fit.log_mu_se.abs() < 1e-12);
        for (n, &norm) in traj.norms.iter().enumerate() {
            assert!(norm <= fit.envelope_at(n));
        }
    }

    #[test]
    fn fit_envelope_constant_trajectory() {
        let traj = Trajectory {
            states: None,
            norms: vec![0.25; 200],
            seed: 0,
            stopped: StopReason::Horizon,
            overflowed: false,
        };
        let fit = fit_decay_envelope(&traj, 20).unwrap();
        assert!((fit.mu_hat - 1.0).abs() < 1e-12);
        assert!((fit.eta_hat - 0.25).abs() < 1e-9);
    }

    #[test]
    fn fit_envelope_rejects_short_or_zero() {
        let traj = Trajectory {
            states: None,
            norms: vec![1.0; 50],
            seed: 0,
            stopped: StopReason::Horizon,
            overflowed: false,
        };
        assert!(fit_decay_envelope(&traj, 0).is_err());

        let traj = Trajectory {
            states: None,
            norms: {
                let mut v = vec![1.0; 200];
                v[150] = 0.0;
                v
            },
            seed: 0,
            stopped: StopReason::Horizon,
            overflowed: false,
        };
        assert!(fit_decay_envelope(&traj, 10).is_err());
    }

    #[test]
    fn gronwall_trivial_values() {
        assert_eq!(gronwall_bound(1.0, &[0.0, 0.0, 0.0]), vec![1.0, 1.0, 1.0]);
        let out = gronwall_bound(2.0, &[2f64.ln()]);
        assert_eq!(out.len(), 1);
        assert!((out[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn gronwall_dominates_maximal_sequences() {
        // z maximal under the recurrence: z_k = B + sum mu_j z_{j-1}
        let mut stream = RngStream::root(2024);
        for _ in 0..200 {
            let len = 1 + (stream.standard_normal().abs() * 10.0) as usize;
            let b = stream.standard_normal().abs() + 0.1;
            let mus: Vec<f64> = (0..len)
                .map(|_| {
                    if stream.standard_normal() > 0.5 {
                        0.0
                    } else {
                        0.01 + stream.standard_normal().abs()
                    }
                })
                .collect();
            let bounds = gronwall_bound(b, &mus);
            let mut z_prev = b;
            let mut weighted = 0.0;
            for (k, &mu) in mus.iter().enumerate() {
                weighted += mu * z_prev;
                let z_k = b + weighted;
                assert!(z_k <= bounds[k], "z_{k} = {z_k} > bound {}", bounds[k]);
                z_prev = z_k;
            }
        }
    }

    #[test]
    fn csv_schema() {
        let traj = Trajectory {
            states: Some(vec![vec![1.0, 2.0], vec![0.5, 1.0]]),
            norms: vec![5f64.sqrt(), 1.25f64.sqrt()],
            seed: 0,
            stopped: StopReason::Horizon,
            overflowed: false,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,x1,x2,norm"));
        assert!(lines.next().unwrap().starts_with("0,1,2,"));

        let norms_only = Trajectory {
            states: None,
            norms: vec![1.0, 0.5],
            seed: 0,
            stopped: StopReason::Horizon,
            overflowed: false,
        };
        let mut buf = Vec::new();
        norms_only.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "n,norm\n0,1\n1,0.5\n");
    }
}
