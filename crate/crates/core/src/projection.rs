//! Gaussian random projection keys, condition-number-controlled matrices,
//! and the `GRPM` matrix blob format.
//!
//! A participant's key is a `k x d` matrix with i.i.d. standard-normal
//! entries. When `scaled` is set the projection is `(1/sqrt(k)) R x`, which
//! makes dot products and squared distances unbiased; otherwise it is the
//! raw `R x`. The two differ by a constant factor only.

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, Matrix, PINV_RCOND};
use crate::rng::Rng64;

/// A participant's private projection matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionKey {
    matrix: Matrix,
    seed: u64,
    scaled: bool,
}

impl ProjectionKey {
    /// Wraps an existing `k x d` matrix (`k <= d`). Keys built this way carry
    /// seed 0 unless set with [`ProjectionKey::with_seed`].
    pub fn from_matrix(matrix: Matrix, scaled: bool) -> Result<Self> {
        let (k, d) = (matrix.rows(), matrix.cols());
        if k == 0 || k > d {
            return Err(Error::InvalidDimension(format!(
                "projection must satisfy 1 <= k <= d, got k={k}, d={d}"
            )));
        }
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimension(
                "projection matrix has non-finite entries".to_string(),
            ));
        }
        Ok(Self {
            matrix,
            seed: 0,
            scaled,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scaling(mut self, scaled: bool) -> Self {
        self.scaled = scaled;
        self
    }

    pub fn k(&self) -> usize {
        self.matrix.rows()
    }

    pub fn d(&self) -> usize {
        self.matrix.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scaled(&self) -> bool {
        self.scaled
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Factor applied on top of `R`: `1/sqrt(k)` when scaled, else 1.
    pub fn scale_factor(&self) -> f64 {
        if self.scaled {
            1.0 / (self.k() as f64).sqrt()
        } else {
            1.0
        }
    }

    /// The matrix actually applied to data, `scale_factor() * R`.
    pub fn effective_matrix(&self) -> Matrix {
        let mut m = self.matrix.clone();
        if self.scaled {
            m.scale(self.scale_factor());
        }
        m
    }
}

/// Draws a `k x d` standard-normal key from `Rng64::new(seed)`, row-major.
pub fn generate_projection(k: usize, d: usize, seed: u64) -> Result<ProjectionKey> {
    if k == 0 || d == 0 || k > d {
        return Err(Error::InvalidDimension(format!(
            "projection must satisfy 1 <= k <= d, got k={k}, d={d}"
        )));
    }
    let mut rng = Rng64::new(seed);
    let data: Vec<f64> = (0..k * d).map(|_| rng.normal()).collect();
    let matrix = Matrix::from_row_major(k, d, data)?;
    Ok(ProjectionKey {
        matrix,
        seed,
        scaled: true,
    })
}

pub fn project(key: &ProjectionKey, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != key.d() {
        return Err(Error::InvalidDimension(format!(
            "vector of length {} for a key with d={}",
            x.len(),
            key.d()
        )));
    }
    let mut out = vec![0.0; key.k()];
    key.matrix.matvec_into(x, &mut out);
    if key.scaled {
        let s = key.scale_factor();
        out.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Projects every sample; labels and order are preserved.
pub fn project_dataset(key: &ProjectionKey, ds: &Dataset) -> Result<Dataset> {
    if ds.dim() != key.d() {
        return Err(Error::InvalidDimension(format!(
            "dataset dimension {} for a key with d={}",
            ds.dim(),
            key.d()
        )));
    }
    let (n, k, d) = (ds.len(), key.k(), key.d());
    let mut out = vec![0.0; n * k];
    if n > 0 {
        // out (n x k) = X (n x d) * R^T (d x k), scaled by alpha.
        unsafe {
            matrixmultiply::dgemm(
                n,
                d,
                k,
                key.scale_factor(),
                ds.values().as_ptr(),
                d as isize,
                1,
                key.matrix.as_slice().as_ptr(),
                1,
                d as isize,
                0.0,
                out.as_mut_ptr(),
                k as isize,
                1,
            );
        }
    }
    Dataset::new(
        k,
        out,
        ds.labels().to_vec(),
        ds.class_count(),
        format!("{}|grp(k={k},seed={})", ds.provenance(), key.seed),
    )
}

/// `d / k`.
pub fn compression_ratio(key: &ProjectionKey) -> f64 {
    key.d() as f64 / key.k() as f64
}

/// Projected dimension for a compression ratio: `round(d / rho)`.
pub fn k_for_ratio(d: usize, rho: f64) -> Result<usize> {
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::InvalidDimension(format!(
            "compression ratio must be >= 1, got {rho}"
        )));
    }
    let k = (d as f64 / rho).round() as usize;
    if k == 0 || k > d {
        return Err(Error::InvalidDimension(format!(
            "ratio {rho} gives k={k} for d={d}"
        )));
    }
    Ok(k)
}

/// Sample mean and variance of a scalar estimator over independent keys.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorMoments {
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
}

impl EstimatorMoments {
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.trials as f64).sqrt()
    }
}

/// Monte Carlo over `trials` scaled keys (key `t` seeded from stream `t` of
/// `seed`) of the two estimators `y1 . y2` and `||y1 - y2||^2`. Returns
/// their moments in that order.
pub fn inner_product_monte_carlo(
    x1: &[f64],
    x2: &[f64],
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<(EstimatorMoments, EstimatorMoments)> {
    if x1.len() != x2.len() {
        return Err(Error::InvalidDimension(format!(
            "vectors of length {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    if trials < 2 {
        return Err(Error::Config("at least two trials are needed".into()));
    }
    let d = x1.len();
    let mut acc = [(0.0, 0.0); 2];
    for t in 0..trials {
        let key = generate_projection(k, d, Rng64::derive(seed, t as u64).next_seed())?;
        let y1 = project(&key, x1)?;
        let y2 = project(&key, x2)?;
        let dot: f64 = y1.iter().zip(&y2).map(|(a, b)| a * b).sum();
        let dist: f64 = y1.iter().zip(&y2).map(|(a, b)| (a - b) * (a - b)).sum();
        // Welford update of (mean, m2).
        let n = (t + 1) as f64;
        for (slot, v) in acc.iter_mut().zip([dot, dist]) {
            let delta = v - slot.0;
            slot.0 += delta / n;
            slot.1 += delta * (v - slot.0);
        }
    }
    let moments = |(mean, m2): (f64, f64)| EstimatorMoments {
        trials,
        mean,
        variance: m2 / (trials - 1) as f64,
    };
    Ok((moments(acc[0]), moments(acc[1])))
}

/// Frobenius-norm condition number of a matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionReport {
    pub frobenius_norm: f64,
    pub pseudoinverse_frobenius_norm: f64,
    pub condition_number: f64,
}

/// `||M||_F * ||M+||_F` from the singular values of `M`. Singular values at
/// or below `1e-12 * sigma_max` do not contribute to the pseudoinverse.
pub fn condition_number(m: &Matrix) -> Result<ConditionReport> {
    let s = m.singular_values();
    let sigma_max = s.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return Err(Error::DegenerateMatrix("all-zero matrix".to_string()));
    }
    let cutoff = PINV_RCOND * sigma_max;
    let fro = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pinv_fro = s
        .iter()
        .filter(|&&v| v > cutoff)
        .map(|v| 1.0 / (v * v))
        .sum::<f64>()
        .sqrt();
    Ok(ConditionReport {
        frobenius_norm: fro,
        pseudoinverse_frobenius_norm: pinv_fro,
        condition_number: fro * pinv_fro,
    })
}

/// Frobenius condition number of `diag(1, r, r^2, ..., r^(d-1))`, computed in
/// log space.
fn geometric_condition_ln(d: usize, ln_r: f64) -> f64 {
    let lse = |sign: f64| {
        let terms: Vec<f64> = (0..d).map(|i| sign * 2.0 * ln_r * i as f64).collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    };
    0.5 * lse(1.0) + 0.5 * lse(-1.0)
}

/// Random `d x d` matrix `U diag(s) V^T` whose Frobenius condition number is
/// `target_condition`.
///
/// `U` and `V` are Haar-random orthogonal; `s_i = r^(i-1)` with `r` found by
/// bisection, then rescaled so that `||M||_F^2 = d` (the norm of an
/// orthogonal matrix). `target_condition = d` yields an orthogonal matrix.
pub fn generate_conditioned_matrix(d: usize, target_condition: f64, seed: u64) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidDimension("d must be positive".to_string()));
    }
    let min = d as f64;
    if !target_condition.is_finite() || target_condition < min * (1.0 - 1e-12) {
        return Err(Error::UnachievableCondition {
            target: target_condition,
            d,
        });
    }
    let ln_target = target_condition.max(min).ln();
    let ln_r = if d == 1 || ln_target <= min.ln() {
        0.0
    } else {
        // f(r) >= r^-(d-1), so r = target^(-1/(d-1)) overshoots.
        let mut lo = -ln_target / (d - 1) as f64;
        let mut hi = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if geometric_condition_ln(d, mid) > ln_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut s: Vec<f64> = (0..d).map(|i| (ln_r * i as f64).exp()).collect();
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rescale = (d as f64).sqrt() / norm;
    s.iter_mut().for_each(|v| *v *= rescale);

    let mut rng = Rng64::new(seed);
    let u = random_orthogonal(d, &mut rng);
    let v = random_orthogonal(d, &mut rng);
    Ok(u.matmul(&Matrix::from_diagonal(&s)).matmul(&v.transpose()))
}

pub const MATRIX_MAGIC: &[u8; 4] = b"GRPM";
pub const MATRIX_FORMAT_VERSION: u16 = 1;
const MATRIX_HEADER_LEN: usize = 16;

/// Serializes a key's matrix: 16-byte header (`"GRPM"`, version u16, k u16,
/// d u32, reserved u32; little-endian) then `k*d` f64 LE values row-major.
pub fn export_matrix(key: &ProjectionKey) -> Result<Vec<u8>> {
    let k = u16::try_from(key.k())
        .map_err(|_| Error::Format(format!("k={} does not fit in u16", key.k())))?;
    let d = u32::try_from(key.d())
        .map_err(|_| Error::Format(format!("d={} does not fit in u32", key.d())))?;
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + key.k() * key.d() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in key.matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a `GRPM` blob. The blob stores only the matrix, so the scaling
/// mode is supplied by the caller and the seed is 0.
pub fn import_matrix(bytes: &[u8], scaled: bool) -> Result<ProjectionKey> {
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(Error::TruncatedFile(format!(
            "matrix blob of {} bytes is shorter than its header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(Error::BadMagic {
            found: u32::from_be_bytes(bytes[0..4].try_into().unwrap()),
            expected: u32::from_be_bytes(*MATRIX_MAGIC),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MATRIX_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported matrix version {version}"
        )));
    }
    let k = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[MATRIX_HEADER_LEN..];
    if body.len() != k * d * 8 {
        return Err(Error::TruncatedFile(format!(
            "expected {} matrix bytes, found {}",
            k * d * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProjectionKey::from_matrix(Matrix::from_row_major(k, d, data)?, scaled)
}
