//! Dense small-matrix arithmetic: operator norms, spectral radii, Gershgorin
//! row bounds, and the diagonal balancing transform that shrinks the
//! strictly-upper part of a block-diagonal-plus-upper matrix.
//!
//! Matrices here are tiny (a handful of rows), so everything is plain
//! row-major `Vec<f64>` with no blocking or sparsity.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Iteration cap for the operator-norm power iteration.
const POWER_ITER_CAP: usize = 10_000;
/// Relative tolerance for the operator-norm power iteration.
const POWER_ITER_TOL: f64 = 1e-12;
/// Squaring cap for the spectral-radius Gelfand limit.
const GELFAND_CAP: u32 = 64;
/// Relative tolerance between successive Gelfand estimates.
const GELFAND_TOL: f64 = 1e-10;
/// Largest balancing scale tried by `balance` (doubling sequence 2..2^60).
const BALANCE_MAX_EXP: u32 = 60;

/// Dense real square matrix, row-major storage. Entries are validated
/// finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|e| !e.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "matrix entries must be finite, found {bad}"
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput(
                "rows must all have length equal to the row count".into(),
            ));
        }
        Self::new(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * diag.len() + i] = d;
        }
        m
    }

    /// The 2x2 rotation-scaling block [[a, -b], [b, a]].
    pub fn rotation_scaling(a: f64, b: f64) -> Self {
        Self {
            dim: 2,
            entries: vec![a, -b, b, a],
        }
    }

    /// Internal constructor for arithmetic results; skips validation.
    fn from_vec(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.entries[row * self.dim + col] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.entries[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0.0)
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[j * d + i] = self.entries[i * d + j];
            }
        }
        Self::from_vec(d, out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_vec(self.dim, self.entries.iter().map(|e| e * factor).collect())
    }

    /// Elementwise sum. Panics on dimension mismatch; callers that accept
    /// external input check dimensions first.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix dimension mismatch in add");
        Self::from_vec(
            self.dim,
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix dimension mismatch in sub");
        Self::from_vec(
            self.dim,
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix dimension mismatch in matmul");
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let aik = self.entries[i * d + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += aik * other.entries[k * d + j];
                }
            }
        }
        Self::from_vec(d, out)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length mismatch in apply");
        let d = self.dim;
        (0..d)
            .map(|i| {
                let row = &self.entries[i * d..(i + 1) * d];
                row.iter().zip(v).map(|(a, x)| a * x).sum()
            })
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

// JSON shape: {"dim": d, "rows": [[...], [...]]}
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for SquareMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            dim: self.dim,
            rows: self.rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SquareMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        if repr.rows.len() != repr.dim {
            return Err(D::Error::custom(format!(
                "declared dim {} does not match {} rows",
                repr.dim,
                repr.rows.len()
            )));
        }
        SquareMatrix::from_rows(&repr.rows).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Largest singular value.
///
/// Dimensions 1 and 2 use closed forms; larger matrices run power iteration
/// on m^T m with relative tolerance 1e-12 and a 10_000-iteration cap.
pub fn operator_norm(m: &SquareMatrix) -> Result<f64> {
    match m.dim {
        1 => Ok(m.entries[0].abs()),
        2 => {
            // Singular values of a 2x2 from trace/determinant of m^T m.
            let frob_sq: f64 = m.entries.iter().map(|e| e * e).sum();
            let det = m.entries[0] * m.entries[3] - m.entries[1] * m.entries[2];
            let disc = (frob_sq * frob_sq - 4.0 * det * det).max(0.0);
            Ok(((frob_sq + disc.sqrt()) / 2.0).sqrt())
        }
        _ => {
            let ata = m.transpose().matmul(m);
            power_iteration_norm(&ata)
        }
    }
}

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix,
/// returned as its square root. The start vector is a fixed pseudo-random
/// direction so results are deterministic.
fn power_iteration_norm(ata: &SquareMatrix) -> Result<f64> {
    let d = ata.dim;
    let mut v: Vec<f64> = (0..d)
        .map(|i| {
            // splitmix64 scramble of the index, mapped to (0, 1]
            let mut z = (i as u64).wrapping_add(0x9e3779b97f4a7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) as f64 / u64::MAX as f64) + 0.5
        })
        .collect();
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut prev = f64::NAN;
    for iter in 0..POWER_ITER_CAP {
        let w = ata.apply(&v);
        // Rayleigh quotient as a ratio so v need not be exactly unit
        let vw: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        let est = (vw / vv).max(0.0).sqrt();
        let wnorm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / wnorm).collect();
        if iter >= 1 && (est - prev).abs() <= POWER_ITER_TOL * est.max(f64::MIN_POSITIVE) {
            return Ok(est);
        }
        prev = est;
    }
    Err(Error::NonConvergence {
        context: "operator-norm power iteration",
        last_estimate: prev,
    })
}

/// Spectral radius via the Gelfand limit rho(A) = lim ||A^(2^k)||^(1/2^k).
///
/// The iterate is renormalized (Frobenius) after every squaring so entries
/// never overflow even when rho > 1; the normalization factors are carried
/// in log space. Stops when successive estimates agree to 1e-10 relative,
/// errors after 64 squarings without convergence.
pub fn spectral_radius(m: &SquareMatrix) -> Result<f64> {
    let fnorm = m.frobenius_norm();
    if fnorm == 0.0 {
        return Ok(0.0);
    }
    let mut cur = m.scale(1.0 / fnorm);
    let mut log_norm = fnorm.ln(); // log ||A^(2^k)||_F at k = 0
    let mut estimate = fnorm;
    for k in 1..=GELFAND_CAP {
        let sq = cur.matmul(&cur);
        let f = sq.frobenius_norm();
        if f == 0.0 {
            // nilpotent: some power vanished exactly
            return Ok(0.0);
        }
        cur = sq.scale(1.0 / f);
        log_norm = 2.0 * log_norm + f.ln();
        let next = (log_norm / 2f64.powi(k as i32)).exp();
        if (next - estimate).abs() <= GELFAND_TOL * next.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NonConvergence {
        context: "spectral-radius Gelfand squaring",
        last_estimate: estimate,
    })
}

/// Row-sum eigenvalue bound: max_i ( |m_ii| + sum_{j != i} |m_ij| ).
///
/// For symmetric input this dominates the operator norm, which is the
/// inequality the stabilization margin rests on.
pub fn gershgorin_upper_bound(m: &SquareMatrix) -> f64 {
    let d = m.dim;
    (0..d)
        .map(|i| (0..d).map(|j| m.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A matrix split as block-diagonal part plus strictly-upper coupling,
/// with blocks either 1x1 or the 2x2 rotation-scaling form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JordanLikeDecomposition {
    pub block_diag: SquareMatrix,
    pub upper: SquareMatrix,
    pub block_sizes: Vec<usize>,
}

impl JordanLikeDecomposition {
    pub fn reconstruct(&self) -> SquareMatrix {
        self.block_diag.add(&self.upper)
    }

    /// Block index of each row, derived from `block_sizes`.
    fn row_blocks(&self) -> Vec<usize> {
        row_blocks(&self.block_sizes)
    }
}

fn row_blocks(block_sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (b, &size) in block_sizes.iter().enumerate() {
        out.extend(std::iter::repeat_n(b, size));
    }
    out
}

/// Validate that `m` is already in block-diagonal-plus-upper form and split
/// it. This does not compute a canonical form from scratch: the subdiagonal
/// must be zero outside 2x2 rotation-scaling blocks, which are recognized by
/// the exact pattern [[a, -b], [b, a]].
pub fn decompose_jordan_like(m: &SquareMatrix) -> Result<JordanLikeDecomposition> {
    let d = m.dim();
    let mut block_sizes = Vec::new();
    let mut i = 0;
    while i < d {
        if i + 1 < d && m.get(i + 1, i) != 0.0 {
            let a = m.get(i, i);
            if m.get(i + 1, i + 1) != a {
                return Err(Error::NotBlockForm {
                    row: i + 1,
                    col: i + 1,
                    value: m.get(i + 1, i + 1),
                });
            }
            if m.get(i, i + 1) != -m.get(i + 1, i) {
                return Err(Error::NotBlockForm {
                    row: i,
                    col: i + 1,
                    value: m.get(i, i + 1),
                });
            }
            block_sizes.push(2);
            i += 2;
        } else {
            block_sizes.push(1);
            i += 1;
        }
    }

    let blocks = row_blocks(&block_sizes);
    // Everything below the diagonal outside the recognized blocks must vanish.
    for r in 0..d {
        for c in 0..r {
            let in_block = blocks[r] == blocks[c];
            if !in_block && m.get(r, c) != 0.0 {
                return Err(Error::NotBlockForm {
                    row: r,
                    col: c,
                    value: m.get(r, c),
                });
            }
        }
    }

    let mut block_diag = SquareMatrix::zeros(d);
    let mut upper = SquareMatrix::zeros(d);
    for r in 0..d {
        for c in 0..d {
            let v = m.get(r, c);
            if blocks[r] == blocks[c] {
                block_diag.set(r, c, v);
            } else if c > r {
                upper.set(r, c, v);
            }
            // below-diagonal cross-block entries were verified zero
        }
    }
    Ok(JordanLikeDecomposition {
        block_diag,
        upper,
        block_sizes,
    })
}

/// Shrink the strictly-upper part below `kappa` by the similarity
/// D_t = diag(t I_1, t^2 I_2, ..., t^k I_k), searching t over the doubling
/// sequence 2, 4, 8, ... The block-diagonal part commutes with D_t, so the
/// returned matrix is block_diag + D_t U D_t^{-1}.
///
/// Returns the smallest successful t together with the balanced matrix.
pub fn balance(dec: &JordanLikeDecomposition, kappa: f64) -> Result<(u64, SquareMatrix)> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!(
            "balance kappa must be positive, got {kappa}"
        )));
    }
    let blocks = dec.row_blocks();
    for exp in 1..=BALANCE_MAX_EXP {
        let t = 1u64 << exp;
        let scaled = scale_upper(&dec.upper, &blocks, t as f64);
        if operator_norm(&scaled)? < kappa {
            return Ok((t, dec.block_diag.add(&scaled)));
        }
    }
    Err(Error::BalanceUnreachable { kappa })
}

/// Entry (r, c) of D_t U D_t^{-1} is u_rc * t^(block(r) - block(c)); upper
/// entries always cross blocks forward so the exponent is negative.
fn scale_upper(upper: &SquareMatrix, blocks: &[usize], t: f64) -> SquareMatrix {
    let d = upper.dim();
    let mut out = SquareMatrix::zeros(d);
    for r in 0..d {
        for c in (r + 1)..d {
            let v = upper.get(r, c);
            if v != 0.0 {
                let delta = blocks[c] as i32 - blocks[r] as i32;
                out.set(r, c, v * t.powi(-delta));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat2(rows: [[f64; 2]; 2]) -> SquareMatrix {
        SquareMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap()
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(SquareMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(SquareMatrix::new(2, vec![1.0, f64::INFINITY, 0.0, 1.0]).is_err());
        assert!(SquareMatrix::new(0, vec![]).is_err());
        assert!(SquareMatrix::new(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn operator_norm_identity_is_one() {
        for d in 1..=8 {
            assert_eq!(operator_norm(&SquareMatrix::identity(d)).unwrap(), 1.0);
        }
    }

    #[test]
    fn operator_norm_diagonal() {
        let m = SquareMatrix::diagonal(&[1.01, 0.5]);
        assert!((operator_norm(&m).unwrap() - 1.01).abs() < 1e-15);
    }

    #[test]
    fn operator_norm_jordan_block_closed_form() {
        // sigma_1^2 is the larger root of x^2 - T x + D = 0 with
        // T = ||A||_F^2 and D = det(A)^2, checkable by hand.
        let m = mat2([[1.01, 0.1], [0.0, 1.01]]);
        let t = 1.01f64 * 1.01 + 0.1 * 0.1 + 1.01 * 1.01;
        let det = 1.01f64 * 1.01;
        let expected = ((t + (t * t - 4.0 * det * det).sqrt()) / 2.0).sqrt();
        let got = operator_norm(&m).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
        assert!((got - 1.0611).abs() < 1e-3);
    }

    #[test]
    fn operator_norm_power_iteration_matches_closed_form_on_embedded_2x2() {
        // embed a 2x2 in a 3x3 so the d > 2 path runs
        let m3 = SquareMatrix::from_rows(&[
            vec![1.01, 0.1, 0.0],
            vec![0.0, 1.01, 0.0],
            vec![0.0, 0.0, 0.3],
        ])
        .unwrap();
        let m2 = mat2([[1.01, 0.1], [0.0, 1.01]]);
        let want = operator_norm(&m2).unwrap();
        let got = operator_norm(&m3).unwrap();
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn operator_norm_zero_matrix() {
        assert_eq!(operator_norm(&SquareMatrix::zeros(3)).unwrap(), 0.0);
        assert_eq!(operator_norm(&SquareMatrix::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_examples() {
        let m = SquareMatrix::diagonal(&[1.01, 0.5]);
        assert!((spectral_radius(&m).unwrap() - 1.01).abs() < 1e-10);

        let jordan = mat2([[1.01, 0.1], [0.0, 1.01]]);
        assert!((spectral_radius(&jordan).unwrap() - 1.01).abs() < 1e-8);

        let rot = SquareMatrix::rotation_scaling(0.0, 1.0); // rotation by 90 degrees
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_zero_and_nilpotent() {
        assert_eq!(spectral_radius(&SquareMatrix::zeros(3)).unwrap(), 0.0);
        let nilpotent = mat2([[0.0, 5.0], [0.0, 0.0]]);
        assert_eq!(spectral_radius(&nilpotent).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_bounded_by_operator_norm() {
        let m = mat2([[0.9, 0.4], [-0.3, 1.1]]);
        let rho = spectral_radius(&m).unwrap();
        let norm = operator_norm(&m).unwrap();
        assert!(rho <= norm + 1e-9);
    }

    #[test]
    fn gershgorin_examples() {
        assert_eq!(gershgorin_upper_bound(&SquareMatrix::identity(3)), 1.0);
        let g = mat2([[0.1, 0.02], [0.02, -0.05]]);
        let i_plus_g = SquareMatrix::identity(2).add(&g);
        assert!((gershgorin_upper_bound(&i_plus_g) - 1.12).abs() < 1e-15);
    }

    #[test]
    fn decompose_diagonal() {
        let m = SquareMatrix::diagonal(&[1.01, 0.5]);
        let dec = decompose_jordan_like(&m).unwrap();
        assert_eq!(dec.block_sizes, vec![1, 1]);
        assert!(dec.upper.is_zero());
        assert_eq!(dec.reconstruct(), m);
    }

    #[test]
    fn decompose_jordan_coupling() {
        let m = mat2([[1.01, 0.1], [0.0, 1.01]]);
        let dec = decompose_jordan_like(&m).unwrap();
        assert_eq!(dec.block_sizes, vec![1, 1]);
        assert_eq!(dec.upper, mat2([[0.0, 0.1], [0.0, 0.0]]));
        assert_eq!(dec.reconstruct(), m);
    }

    #[test]
    fn decompose_rotation_block() {
        let m = SquareMatrix::rotation_scaling(0.7, 0.2);
        let dec = decompose_jordan_like(&m).unwrap();
        assert_eq!(dec.block_sizes, vec![2]);
        assert!(dec.upper.is_zero());
        assert_eq!(dec.reconstruct(), m);
    }

    #[test]
    fn decompose_rejects_bad_form() {
        // subdiagonal entry with mismatched diagonal pair
        let m = mat2([[1.0, 0.3], [0.2, 0.9]]);
        match decompose_jordan_like(&m) {
            Err(Error::NotBlockForm { row, col, .. }) => {
                assert_eq!((row, col), (1, 1));
            }
            other => panic!("expected NotBlockForm, got {other:?}"),
        }
    }

    #[test]
    fn balance_trivial_when_upper_zero() {
        let dec = decompose_jordan_like(&SquareMatrix::diagonal(&[1.01, 0.5])).unwrap();
        let (t, balanced) = balance(&dec, 0.5).unwrap();
        assert_eq!(t, 2);
        assert_eq!(balanced, SquareMatrix::diagonal(&[1.01, 0.5]));
    }

    #[test]
    fn balance_doubles_until_small() {
        let m = mat2([[1.01, 0.1], [0.0, 1.01]]);
        let dec = decompose_jordan_like(&m).unwrap();

        let (t, balanced) = balance(&dec, 0.01).unwrap();
        assert_eq!(t, 16);
        assert!((balanced.get(0, 1) - 0.1 / 16.0).abs() < 1e-18);

        let (t2, balanced2) = balance(&dec, 0.2).unwrap();
        assert_eq!(t2, 2);
        assert!((balanced2.get(0, 1) - 0.05).abs() < 1e-18);
    }

    #[test]
    fn balance_preserves_spectral_radius() {
        let m = mat2([[1.01, 0.1], [0.0, 1.01]]);
        let dec = decompose_jordan_like(&m).unwrap();
        let (_, balanced) = balance(&dec, 1e-3).unwrap();
        let before = spectral_radius(&m).unwrap();
        let after = spectral_radius(&balanced).unwrap();
        assert!((before - after).abs() < 1e-8);
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = mat2([[1.01, 0.1], [0.0, 1.01]]);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"dim\":2"));
        assert!(json.contains("\"rows\""));
        let back: SquareMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
