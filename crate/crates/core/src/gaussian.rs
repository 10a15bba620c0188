//! Dense Gaussian numerics: Cholesky factorization with a jitter ladder,
//! multivariate normal sampling, Schur-complement conditioning and the two
//! scalar Kalman steps used by the AR(1) Thompson sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Jitter multiplier applied on each failed factorization attempt.
const JITTER_GROWTH: f64 = 10.0;
/// Number of escalations after the first attempt.
const JITTER_RETRIES: usize = 3;

/// Starting jitter for prior covariance matrices that may be numerically
/// singular (squared-exponential kernels at long timescales).
pub const PRIOR_JITTER: f64 = 1e-10;

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let x = &a[c * 8..c * 8 + 8];
        let y = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Symmetric matrix in full row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries, checking symmetry to 1e-12 relative.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        ensure(n >= 1, || "matrix dimension must be at least 1".into())?;
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                ensure((a - b).abs() <= 1e-12 * scale, || {
                    format!("matrix not symmetric at ({i},{j}): {a} vs {b}")
                })?;
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(n, data)
    }

    /// Evaluates `f` on the lower triangle and mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Lower-triangular Cholesky factor stored packed by rows.
///
/// Rows are appended one at a time, so the factor of a growing covariance
/// matrix (a bandit history) is extended in O(n²) per new observation.
#[derive(Debug, Clone, Default)]
pub struct CholeskyFactor {
    n: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a factor from explicit lower-triangular rows (row `i` must hold
    /// at least `i + 1` entries; anything above the diagonal is ignored).
    pub fn from_lower_rows(rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            data.extend_from_slice(&r[..=i]);
        }
        Self {
            n: rows.len(),
            data,
            jitter: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was added to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    fn offset(i: usize) -> usize {
        i * (i + 1) / 2
    }

    /// Entries `L[i][0..=i]`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let o = Self::offset(i);
        &self.data[o..o + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Solves `L x = b` in place over the first `b.len()` rows.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert!(b.len() <= self.n);
        for i in 0..b.len() {
            let row = self.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `L x = b` for several right-hand sides in one pass over `L`.
    pub fn solve_many_in_place(&self, rhs: &mut [Vec<f64>]) {
        let m = rhs.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..m {
            let row = self.row(i);
            for b in rhs.iter_mut() {
                if i < b.len() {
                    let s = dot(&row[..i], &b[..i]);
                    b[i] = (b[i] - s) / row[i];
                }
            }
        }
    }

    /// Solves `Lᵀ x = b` in place over the first `b.len()` rows.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        debug_assert!(b.len() <= self.n);
        for i in (0..b.len()).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let xi = b[i];
            for (bj, lij) in b[..i].iter_mut().zip(&row[..i]) {
                *bj -= lij * xi;
            }
        }
    }

    /// `L z` restricted to the leading `z.len()` rows and columns.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        (0..z.len()).map(|i| dot(self.row(i), &z[..=i])).collect()
    }

    /// Extends the factor by one row given the new column `cross` of the
    /// covariance (entries against existing rows) and its diagonal entry.
    ///
    /// Returns the solved off-diagonal row, which callers often reuse.
    pub fn append_row(&mut self, mut cross: Vec<f64>, diag: f64) -> Result<Vec<f64>> {
        if cross.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: cross.len(),
            });
        }
        self.solve_in_place(&mut cross);
        let pivot = diag + self.jitter - dot(&cross, &cross);
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite {
                dim: self.n + 1,
                jitter: self.jitter,
            });
        }
        self.data.extend_from_slice(&cross);
        self.data.push(pivot.sqrt());
        self.n += 1;
        Ok(cross)
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| {
            let k = j.min(i);
            dot(&self.row(i)[..=k], &self.row(j)[..=k])
        })
    }
}

fn factor_once(m: &SymMatrix, jitter: f64) -> Result<CholeskyFactor> {
    let n = m.dim();
    let mut f = CholeskyFactor {
        n: 0,
        data: Vec::with_capacity(n * (n + 1) / 2),
        jitter,
    };
    for i in 0..n {
        let row = m.row(i);
        f.append_row(row[..i].to_vec(), row[i])?;
    }
    Ok(f)
}

/// Factorizes `m + jitter·I`, escalating the jitter tenfold up to three
/// times on failure. A zero jitter is never escalated.
pub fn cholesky(m: &SymMatrix, jitter: f64) -> Result<CholeskyFactor> {
    ensure(jitter >= 0.0 && jitter.is_finite(), || {
        format!("jitter must be finite and non-negative, got {jitter}")
    })?;
    let mut j = jitter;
    let mut last = None;
    for _ in 0..=JITTER_RETRIES {
        match factor_once(m, j) {
            Ok(f) => return Ok(f),
            Err(e) => last = Some(e),
        }
        if j == 0.0 {
            break;
        }
        j *= JITTER_GROWTH;
    }
    Err(match last {
        Some(Error::NotPositiveDefinite { .. }) | None => Error::NotPositiveDefinite {
            dim: m.dim(),
            jitter: j,
        },
        Some(e) => e,
    })
}

/// Draws `mean + L z` with `z` i.i.d. standard normal.
pub fn mvn_sample<R: Rng + ?Sized>(
    mean: &[f64],
    chol: &CholeskyFactor,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mean.len() != chol.dim() {
        return Err(Error::DimensionMismatch {
            expected: chol.dim(),
            found: mean.len(),
        });
    }
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(chol
        .mul_vec(&z)
        .into_iter()
        .zip(mean)
        .map(|(v, m)| v + m)
        .collect())
}

/// Gaussian over the unobserved coordinates after conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    /// Indices (into the joint vector) of the coordinates described here.
    pub index: Vec<usize>,
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

/// Conditions a joint Gaussian on observing `observed_vals` at `observed_idx`.
///
/// Uses the Cholesky factor of the observed block and triangular solves;
/// no matrix is ever inverted.
pub fn condition(
    joint_mean: &[f64],
    joint_cov: &SymMatrix,
    observed_idx: &[usize],
    observed_vals: &[f64],
) -> Result<ConditionalGaussian> {
    let n = joint_cov.dim();
    if joint_mean.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: joint_mean.len(),
        });
    }
    if observed_vals.len() != observed_idx.len() {
        return Err(Error::DimensionMismatch {
            expected: observed_idx.len(),
            found: observed_vals.len(),
        });
    }
    let mut seen = vec![false; n];
    for &i in observed_idx {
        ensure(i < n, || format!("observed index {i} out of range for dimension {n}"))?;
        ensure(!seen[i], || format!("observed index {i} repeated"))?;
        seen[i] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    if observed_idx.is_empty() {
        return Ok(ConditionalGaussian {
            mean: joint_mean.to_vec(),
            cov: joint_cov.clone(),
            index: free,
        });
    }

    let m = observed_idx.len();
    let obs_cov = SymMatrix::from_fn(m, |i, j| joint_cov.get(observed_idx[i], observed_idx[j]));
    let chol = cholesky(&obs_cov, 0.0)?;

    let mut resid: Vec<f64> = observed_idx
        .iter()
        .zip(observed_vals)
        .map(|(&i, v)| v - joint_mean[i])
        .collect();
    chol.solve_in_place(&mut resid);

    let mut cross: Vec<Vec<f64>> = free
        .iter()
        .map(|&u| observed_idx.iter().map(|&o| joint_cov.get(o, u)).collect())
        .collect();
    chol.solve_many_in_place(&mut cross);

    let mean = free
        .iter()
        .zip(&cross)
        .map(|(&u, v)| joint_mean[u] + dot(v, &resid))
        .collect();
    let cov = SymMatrix::from_fn(free.len(), |a, b| {
        joint_cov.get(free[a], free[b]) - dot(&cross[a], &cross[b])
    });
    Ok(ConditionalGaussian {
        index: free,
        mean,
        cov,
    })
}

/// Scalar Gaussian belief about one arm's latent mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        ensure(mean.is_finite(), || format!("belief mean must be finite, got {mean}"))?;
        ensure(variance >= 0.0 && variance.is_finite(), || {
            format!("belief variance must be finite and non-negative, got {variance}")
        })?;
        Ok(Self { mean, variance })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean + self.variance.sqrt() * z
    }
}

/// Propagates a belief one step through `θ' = α θ + ξ`, `ξ ~ N(0, σ_ξ²)`.
pub fn kalman_diffuse(b: GaussianBelief, alpha: f64, sigma_xi_sq: f64) -> GaussianBelief {
    GaussianBelief {
        mean: alpha * b.mean,
        variance: alpha * alpha * b.variance + sigma_xi_sq,
    }
}

/// Precision-weighted update after observing `reward = θ + W`, `W ~ N(0, σ_W²)`.
///
/// A zero-variance belief is treated as infinitely precise and returned unchanged.
pub fn kalman_update(b: GaussianBelief, reward: f64, sigma_w_sq: f64) -> Result<GaussianBelief> {
    ensure(sigma_w_sq > 0.0, || {
        format!("observation noise variance must be positive, got {sigma_w_sq}")
    })?;
    if b.variance == 0.0 {
        return Ok(b);
    }
    let prior_prec = 1.0 / b.variance;
    let obs_prec = 1.0 / sigma_w_sq;
    let prec = prior_prec + obs_prec;
    Ok(GaussianBelief {
        mean: (prior_prec * b.mean + obs_prec * reward) / prec,
        variance: 1.0 / prec,
    })
}
