//! Random perturbation models: the symmetric multiplicative family B = A G,
//! the shared-scalar diagonal G = g I, and the planar two-by-two model with
//! weak off-diagonal coupling.
//!
//! Gains are stored as laws in the instability parameter epsilon so moment
//! conditions can be checked along a sequence of epsilons; sampling always
//! evaluates the laws at the model's own epsilon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::rng::RngStream;

/// Zero-mean scalar distribution with closed-form moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalarDistribution {
    Gaussian { mean: f64, std: f64 },
    UniformSymmetric { half_width: f64 },
    Rademacher { scale: f64 },
}

impl ScalarDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarDistribution::Gaussian { mean, std } => {
                if mean != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "gaussian mean must be zero, got {mean}"
                    )));
                }
                if !(std >= 0.0 && std.is_finite()) {
                    return Err(Error::InvalidInput(format!("bad gaussian std {std}")));
                }
            }
            ScalarDistribution::UniformSymmetric { half_width } => {
                if !(half_width >= 0.0 && half_width.is_finite()) {
                    return Err(Error::InvalidInput(format!("bad half width {half_width}")));
                }
            }
            ScalarDistribution::Rademacher { scale } => {
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidInput(format!("bad rademacher scale {scale}")));
                }
            }
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ScalarDistribution::Gaussian { std, .. } => std * std,
            ScalarDistribution::UniformSymmetric { half_width } => half_width * half_width / 3.0,
            ScalarDistribution::Rademacher { scale } => scale * scale,
        }
    }

    /// Hard support bound M with P(|xi| > M) = 0, when one exists.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            ScalarDistribution::Gaussian { .. } => None,
            ScalarDistribution::UniformSymmetric { half_width } => Some(half_width),
            ScalarDistribution::Rademacher { scale } => Some(scale),
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            ScalarDistribution::Gaussian { std, .. } => std * stream.standard_normal(),
            ScalarDistribution::UniformSymmetric { half_width } => {
                stream.uniform_symmetric(half_width)
            }
            ScalarDistribution::Rademacher { scale } => stream.rademacher(scale),
        }
    }
}

/// Closed-form E|xi|^3.
pub fn third_abs_moment(dist: &ScalarDistribution) -> f64 {
    match *dist {
        ScalarDistribution::Gaussian { std, .. } => {
            std.powi(3) * 2.0 * (2.0 / std::f64::consts::PI).sqrt()
        }
        ScalarDistribution::UniformSymmetric { half_width } => half_width.powi(3) / 4.0,
        ScalarDistribution::Rademacher { scale } => scale.powi(3),
    }
}

/// Distribution family for the unit-variance driving variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseFamily {
    Gaussian,
    UniformSymmetric,
    Rademacher,
}

impl BaseFamily {
    /// The unit-variance member of the family.
    pub fn standard(self) -> ScalarDistribution {
        match self {
            BaseFamily::Gaussian => ScalarDistribution::Gaussian {
                mean: 0.0,
                std: 1.0,
            },
            BaseFamily::UniformSymmetric => ScalarDistribution::UniformSymmetric {
                half_width: 3f64.sqrt(),
            },
            BaseFamily::Rademacher => ScalarDistribution::Rademacher { scale: 1.0 },
        }
    }

    pub fn sample_unit(self, stream: &mut RngStream) -> f64 {
        self.standard().sample(stream)
    }
}

/// Gain as a function of the instability parameter epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum GainLaw {
    /// Fixed value, independent of epsilon.
    Const { value: f64 },
    /// sqrt(rho * epsilon).
    SqrtEps { rho: f64 },
    /// coeff * epsilon^exponent.
    PowerEps { coeff: f64, exponent: f64 },
}

impl GainLaw {
    pub fn eval(&self, epsilon: f64) -> f64 {
        match *self {
            GainLaw::Const { value } => value,
            GainLaw::SqrtEps { rho } => (rho * epsilon).sqrt(),
            GainLaw::PowerEps { coeff, exponent } => coeff * epsilon.powf(exponent),
        }
    }

    pub const ZERO: GainLaw = GainLaw::Const { value: 0.0 };

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GainLaw::Const { value } => value >= 0.0 && value.is_finite(),
            GainLaw::SqrtEps { rho } => rho >= 0.0 && rho.is_finite(),
            GainLaw::PowerEps { coeff, exponent } => {
                coeff >= 0.0 && coeff.is_finite() && exponent.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid gain law {self:?}")))
        }
    }
}

/// Structure of the random matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum NoiseStructure {
    /// Symmetric G with per-entry gain laws sigma_ij(eps); B = A G.
    SymmetricG { sigma: Vec<Vec<GainLaw>> },
    /// G = g I with a single shared draw g = a(eps) * xi; B = A G.
    DiagonalScalar { gain: GainLaw },
    /// Direct 2x2 noise sigma * [[xi11, eps xi12], [eps xi12, xi22]] with
    /// sigma^2 = rho * eps, applied as-is (A plays no role in the draw).
    PlanarExample { rho: f64 },
}

impl NoiseStructure {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseStructure::SymmetricG { .. } => "symmetric_g",
            NoiseStructure::DiagonalScalar { .. } => "diagonal_scalar",
            NoiseStructure::PlanarExample { .. } => "planar_example",
        }
    }
}

/// Specification of the random matrix B(eps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub dim: usize,
    #[serde(flatten)]
    pub structure: NoiseStructure,
    pub base: BaseFamily,
    pub epsilon: f64,
}

impl NoiseModel {
    pub fn diagonal_scalar(
        dim: usize,
        gain: GainLaw,
        base: BaseFamily,
        epsilon: f64,
    ) -> Result<Self> {
        let model = Self {
            dim,
            structure: NoiseStructure::DiagonalScalar { gain },
            base,
            epsilon,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn symmetric_g(
        dim: usize,
        sigma: Vec<Vec<GainLaw>>,
        base: BaseFamily,
        epsilon: f64,
    ) -> Result<Self> {
        let model = Self {
            dim,
            structure: NoiseStructure::SymmetricG { sigma },
            base,
            epsilon,
        };
        model.validate()?;
        Ok(model)
    }

    /// Uniform-gain symmetric model: every diagonal entry follows `diag`,
    /// every off-diagonal entry follows `offdiag`.
    pub fn symmetric_uniform(
        dim: usize,
        diag: GainLaw,
        offdiag: GainLaw,
        base: BaseFamily,
        epsilon: f64,
    ) -> Result<Self> {
        let sigma = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { diag } else { offdiag })
                    .collect()
            })
            .collect();
        Self::symmetric_g(dim, sigma, base, epsilon)
    }

    pub fn planar_example(epsilon: f64, rho: f64) -> Result<Self> {
        let model = Self {
            dim: 2,
            structure: NoiseStructure::PlanarExample { rho },
            base: BaseFamily::Gaussian,
            epsilon,
        };
        model.validate()?;
        Ok(model)
    }

    /// Gains may evaluate to zero (that is how the rho = 0 deterministic
    /// comparison runs are expressed), but never negative.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("noise dimension must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        match &self.structure {
            NoiseStructure::SymmetricG { sigma } => {
                if sigma.len() != self.dim || sigma.iter().any(|r| r.len() != self.dim) {
                    return Err(Error::InvalidInput(
                        "sigma law matrix shape must match dim".into(),
                    ));
                }
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        sigma[i][j].validate()?;
                        if sigma[i][j] != sigma[j][i] {
                            return Err(Error::InvalidInput(format!(
                                "sigma laws must be symmetric, entries ({i},{j}) and ({j},{i}) differ"
                            )));
                        }
                    }
                }
            }
            NoiseStructure::DiagonalScalar { gain } => gain.validate()?,
            NoiseStructure::PlanarExample { rho } => {
                if self.dim != 2 {
                    return Err(Error::InvalidInput(
                        "planar_example requires dim = 2".into(),
                    ));
                }
                if self.base != BaseFamily::Gaussian {
                    return Err(Error::InvalidInput(
                        "planar_example uses standard normal draws; base must be gaussian".into(),
                    ));
                }
                if !(*rho >= 0.0 && rho.is_finite()) {
                    return Err(Error::InvalidInput(format!("bad rho {rho}")));
                }
            }
        }
        Ok(())
    }

    /// Entry standard deviations sigma_ij evaluated at the given epsilon.
    pub fn sigma_at(&self, epsilon: f64) -> Result<SquareMatrix> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let d = self.dim;
        let mut out = SquareMatrix::zeros(d);
        match &self.structure {
            NoiseStructure::SymmetricG { sigma } => {
                for i in 0..d {
                    for j in 0..d {
                        out.set(i, j, sigma[i][j].eval(epsilon));
                    }
                }
            }
            NoiseStructure::DiagonalScalar { gain } => {
                let a = gain.eval(epsilon);
                for i in 0..d {
                    out.set(i, i, a);
                }
            }
            NoiseStructure::PlanarExample { rho } => {
                let s = (rho * epsilon).sqrt();
                out.set(0, 0, s);
                out.set(1, 1, s);
                out.set(0, 1, s * epsilon);
                out.set(1, 0, s * epsilon);
            }
        }
        Ok(out)
    }

    /// The same model with every gain forced to zero; used for the
    /// deterministic (rho = 0) companion runs.
    pub fn with_zero_gain(&self) -> Self {
        let structure = match &self.structure {
            NoiseStructure::SymmetricG { sigma } => NoiseStructure::SymmetricG {
                sigma: sigma
                    .iter()
                    .map(|row| row.iter().map(|_| GainLaw::ZERO).collect())
                    .collect(),
            },
            NoiseStructure::DiagonalScalar { .. } => NoiseStructure::DiagonalScalar {
                gain: GainLaw::ZERO,
            },
            NoiseStructure::PlanarExample { .. } => NoiseStructure::PlanarExample { rho: 0.0 },
        };
        Self {
            structure,
            ..self.clone()
        }
    }
}

/// One draw of the symmetric factor G.
///
/// Draw order is fixed (row-major upper triangle, diagonal included) so a
/// given stream always produces the same matrix. The strict upper triangle
/// is mirrored, which makes G = G^T exact.
pub fn sample_g(model: &NoiseModel, stream: &mut RngStream) -> Result<SquareMatrix> {
    let d = model.dim;
    match &model.structure {
        NoiseStructure::SymmetricG { .. } => {
            let sigma = model.sigma_at(model.epsilon)?;
            let mut g = SquareMatrix::zeros(d);
            for i in 0..d {
                for j in i..d {
                    let v = sigma.get(i, j) * model.base.sample_unit(stream);
                    g.set(i, j, v);
                    g.set(j, i, v);
                }
            }
            Ok(g)
        }
        NoiseStructure::DiagonalScalar { gain } => {
            let g = gain.eval(model.epsilon) * model.base.sample_unit(stream);
            Ok(SquareMatrix::diagonal(&vec![g; d]))
        }
        NoiseStructure::PlanarExample { .. } => Err(Error::StructureMismatch {
            expected: "symmetric_g or diagonal_scalar",
            got: "planar_example",
        }),
    }
}

/// One draw of the perturbation matrix B.
///
/// For the A G structures this is A * sample_g; the planar model draws its
/// three standard normals (xi11, xi12, xi22 in that order) and ignores A.
pub fn sample_b(
    model: &NoiseModel,
    a: &SquareMatrix,
    stream: &mut RngStream,
) -> Result<SquareMatrix> {
    if a.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: a.dim(),
        });
    }
    match &model.structure {
        NoiseStructure::SymmetricG { .. } | NoiseStructure::DiagonalScalar { .. } => {
            Ok(a.matmul(&sample_g(model, stream)?))
        }
        NoiseStructure::PlanarExample { rho } => {
            let sigma = (rho * model.epsilon).sqrt();
            let xi11 = stream.standard_normal();
            let xi12 = stream.standard_normal();
            let xi22 = stream.standard_normal();
            let eps = model.epsilon;
            SquareMatrix::new(
                2,
                vec![
                    sigma * xi11,
                    sigma * eps * xi12,
                    sigma * eps * xi12,
                    sigma * xi22,
                ],
            )
        }
    }
}

/// Moment summary of a model at one epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub epsilon: f64,
    /// Diagonal standard deviations sigma_ii(eps).
    pub sigma_vec: Vec<f64>,
    /// |sigma(eps)|^2 = sum of squared diagonal gains.
    pub sigma_norm_sq: f64,
    /// max over entries of (E|g_ij|^3)^(1/3) / sigma_ij (entries with zero
    /// gain contribute nothing).
    pub third_moment_ratios: f64,
    /// max over i != j of sigma_ij / sigma_ii^2.
    pub offdiag_ratios: f64,
}

/// The three moment conditions a stabilizing family must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentCondition {
    /// |sigma(eps)| -> 0.
    VanishingSigma,
    /// sigma_ij / sigma_ii^2 -> 0 for i != j.
    OffdiagDominated,
    /// (E|g_ij|^3)^(1/3) <= K sigma_ij with K fixed.
    ThirdMomentBound,
}

/// Outcome of `validate_moments`: per-epsilon reports plus the list of
/// violated conditions (empty means the model passes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentValidation {
    pub reports: Vec<MomentReport>,
    pub violations: Vec<MomentCondition>,
}

impl MomentValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Third-moment constant: (E|g|^3)^(1/3) <= K sigma holds for all three
/// supported families with the standard-normal value K = 2 sqrt(2/pi).
pub fn third_moment_k() -> f64 {
    2.0 * (2.0 / std::f64::consts::PI).sqrt()
}

/// Limit conditions are checked as finite trends: a series counts as
/// vanishing when its last value is below 90% of its first (10% minimum
/// decay over the sequence), or when it is identically zero.
fn vanishing_trend(series: &[f64]) -> bool {
    if series.iter().all(|&v| v == 0.0) {
        return true;
    }
    let first = series[0];
    let last = series[series.len() - 1];
    last < first && last <= 0.9 * first
}

/// Evaluate the moment conditions along a decreasing sequence of epsilons.
pub fn validate_moments(model: &NoiseModel, eps_sequence: &[f64]) -> Result<MomentValidation> {
    model.validate()?;
    if eps_sequence.len() < 3 {
        return Err(Error::InvalidInput(
            "eps_sequence needs at least 3 points".into(),
        ));
    }
    if eps_sequence.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput(
            "eps_sequence entries must be positive".into(),
        ));
    }
    if eps_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "eps_sequence must be strictly decreasing".into(),
        ));
    }

    let unit_third_ratio = {
        let std = model.base.standard();
        third_abs_moment(&std).cbrt() / std.variance().sqrt()
    };

    let mut reports = Vec::with_capacity(eps_sequence.len());
    for &eps in eps_sequence {
        let sigma = model.sigma_at(eps)?;
        let d = model.dim;
        let sigma_vec: Vec<f64> = (0..d).map(|i| sigma.get(i, i)).collect();
        let sigma_norm_sq: f64 = sigma_vec.iter().map(|s| s * s).sum();

        // g_ij = sigma_ij * xi, so the ratio reduces to (E|xi|^3)^(1/3)
        // wherever the gain is nonzero.
        let mut third = 0.0f64;
        let mut offdiag = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let s = sigma.get(i, j);
                if s > 0.0 {
                    third = third.max(unit_third_ratio);
                }
                if i != j {
                    let sii = sigma.get(i, i);
                    if s > 0.0 && sii > 0.0 {
                        offdiag = offdiag.max(s / (sii * sii));
                    } else if s > 0.0 {
                        offdiag = f64::INFINITY; // off-diagonal noise with degenerate diagonal
                    }
                }
            }
        }
        reports.push(MomentReport {
            epsilon: eps,
            sigma_vec,
            sigma_norm_sq,
            third_moment_ratios: third,
            offdiag_ratios: offdiag,
        });
    }

    let mut violations = Vec::new();
    let sigma_norms: Vec<f64> = reports.iter().map(|r| r.sigma_norm_sq.sqrt()).collect();
    if !vanishing_trend(&sigma_norms) {
        violations.push(MomentCondition::VanishingSigma);
    }
    let offdiags: Vec<f64> = reports.iter().map(|r| r.offdiag_ratios).collect();
    if !vanishing_trend(&offdiags) {
        violations.push(MomentCondition::OffdiagDominated);
    }
    let k = third_moment_k();
    if reports.iter().any(|r| r.third_moment_ratios > k) {
        violations.push(MomentCondition::ThirdMomentBound);
    }

    Ok(MomentValidation {
        reports,
        violations,
    })
}
