//! Bayesian ridge regression posteriors and multivariate Gaussian sampling.
//!
//! The posterior of a linear value model with prior N(0, I/λ) and noise σ is
//!
//! ```text
//! Σ = ((1/σ²) XᵀX + λI)⁻¹        mean = (1/σ²) Σ Xᵀy
//! ```
//!
//! One-hot design rows make XᵀX diagonal; the accumulator tracks that case and
//! keeps both the solve and the posterior draw O(p) instead of O(p³), which is
//! what makes the tabular Monte Carlo suites affordable.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// A regression problem: feature rows plus their targets.
#[derive(Clone, Debug, Default)]
pub struct RegressionData {
    rows: Vec<FeatureVector>,
    targets: Vec<f64>,
}

impl RegressionData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: FeatureVector, target: f64) {
        self.rows.push(row);
        self.targets.push(target);
    }

    pub fn from_dense(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        Ok(RegressionData {
            rows: rows.into_iter().map(FeatureVector::Dense).collect(),
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureVector, f64)> {
        self.rows.iter().zip(self.targets.iter().copied())
    }
}

/// Covariance storage. Diagonal is the common case under one-hot features.
#[derive(Clone, Debug)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Dense { dim: usize, data: Vec<f64> },
}

/// Mean and covariance of a Gaussian posterior over regression weights.
#[derive(Clone, Debug)]
pub struct Posterior {
    mean: Vec<f64>,
    cov: Covariance,
}

impl Posterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance_entry(&self, i: usize, j: usize) -> f64 {
        match &self.cov {
            Covariance::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Covariance::Dense { dim, data } => data[i * dim + j],
        }
    }

    /// Materializes the covariance as a dense row-major matrix.
    pub fn covariance(&self) -> Vec<f64> {
        let p = self.dim();
        match &self.cov {
            Covariance::Diagonal(d) => {
                let mut m = vec![0.0; p * p];
                for (i, &v) in d.iter().enumerate() {
                    m[i * p + i] = v;
                }
                m
            }
            Covariance::Dense { data, .. } => data.clone(),
        }
    }
}

/// Incremental accumulator for the ridge posterior. Rows may arrive one at a
/// time; the result is identical to assembling the full design matrix first.
#[derive(Clone, Debug)]
pub struct RidgeAccumulator {
    dim: usize,
    lambda: f64,
    inv_sigma2: f64,
    /// Diagonal of (1/σ²) XᵀX contributed by one-hot rows.
    diag: Vec<f64>,
    /// Full (1/σ²) XᵀX, allocated only once a dense row shows up.
    dense: Option<Vec<f64>>,
    /// (1/σ²) Xᵀy.
    xty: Vec<f64>,
    rows: usize,
}

impl RidgeAccumulator {
    pub fn new(dim: usize, lambda: f64, sigma: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("lambda must be a positive real"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma must be a positive real"));
        }
        Ok(RidgeAccumulator {
            dim,
            lambda,
            inv_sigma2: 1.0 / (sigma * sigma),
            diag: vec![0.0; dim],
            dense: None,
            xty: vec![0.0; dim],
            rows: 0,
        })
    }

    pub fn add(&mut self, row: &FeatureVector, target: f64) -> Result<()> {
        if row.dim() != self.dim {
            return Err(Error::invalid(format!(
                "row dimension {} does not match problem dimension {}",
                row.dim(),
                self.dim
            )));
        }
        if !target.is_finite() {
            return Err(Error::invalid("non-finite regression target"));
        }
        match row {
            FeatureVector::OneHot { index, .. } => {
                if let Some(dense) = self.dense.as_mut() {
                    dense[index * self.dim + index] += self.inv_sigma2;
                } else {
                    self.diag[*index] += self.inv_sigma2;
                }
                self.xty[*index] += target * self.inv_sigma2;
            }
            FeatureVector::Block { offset, values, .. } => {
                if values.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("non-finite feature entry"));
                }
                let dim = self.dim;
                let dense = self.dense.get_or_insert_with(|| {
                    let mut m = vec![0.0; dim * dim];
                    for (i, &d) in self.diag.iter().enumerate() {
                        m[i * dim + i] = d;
                    }
                    m
                });
                for (bi, &vi) in values.iter().enumerate() {
                    let scaled = vi * self.inv_sigma2;
                    if scaled == 0.0 {
                        continue;
                    }
                    let i = offset + bi;
                    let row_base = i * dim + offset;
                    for (bj, &vj) in values.iter().enumerate().skip(bi) {
                        dense[row_base + bj] += scaled * vj;
                    }
                    self.xty[i] += vi * target * self.inv_sigma2;
                }
            }
            FeatureVector::Dense(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("non-finite feature entry"));
                }
                let dense = self.dense.get_or_insert_with(|| {
                    let mut m = vec![0.0; self.dim * self.dim];
                    for (i, &d) in self.diag.iter().enumerate() {
                        m[i * self.dim + i] = d;
                    }
                    m
                });
                // Upper triangle only; mirrored at solve time.
                for i in 0..self.dim {
                    let vi = v[i] * self.inv_sigma2;
                    if vi == 0.0 {
                        continue;
                    }
                    let row_base = i * self.dim;
                    for j in i..self.dim {
                        dense[row_base + j] += vi * v[j];
                    }
                }
                for (slot, &x) in self.xty.iter_mut().zip(v.iter()) {
                    *slot += x * target * self.inv_sigma2;
                }
            }
        }
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Solves for the posterior given everything accumulated so far.
    pub fn posterior(&self) -> Result<Posterior> {
        let p = self.dim;
        match &self.dense {
            None => {
                let mut var = Vec::with_capacity(p);
                let mut mean = Vec::with_capacity(p);
                for i in 0..p {
                    let a = self.diag[i] + self.lambda;
                    let v = 1.0 / a;
                    var.push(v);
                    mean.push(self.xty[i] * v);
                }
                Ok(Posterior {
                    mean,
                    cov: Covariance::Diagonal(var),
                })
            }
            Some(upper) => {
                // Assemble the symmetric precision A = (1/σ²)XᵀX + λI.
                let mut a = vec![0.0; p * p];
                for i in 0..p {
                    for j in i..p {
                        let v = upper[i * p + j];
                        a[i * p + j] = v;
                        a[j * p + i] = v;
                    }
                    a[i * p + i] += self.lambda;
                }
                let l = cholesky(&a, p).map_err(|(idx, pivot)| {
                    Error::Numeric(format!(
                        "precision matrix not positive definite at pivot {idx} (value {pivot:.3e})"
                    ))
                })?;
                let mean = chol_solve(&l, p, &self.xty);
                let cov = chol_inverse(&l, p);
                Ok(Posterior {
                    mean,
                    cov: Covariance::Dense { dim: p, data: cov },
                })
            }
        }
    }
}

/// Ridge posterior of `data` under prior N(0, I/λ) and noise σ.
///
/// Empty data yields mean 0 and covariance I/λ. `dim` is required so the
/// empty-data prior has a known dimension.
pub fn posterior(data: &RegressionData, dim: usize, lambda: f64, sigma: f64) -> Result<Posterior> {
    let mut acc = RidgeAccumulator::new(dim, lambda, sigma)?;
    for (row, y) in data.iter() {
        acc.add(row, y)?;
    }
    acc.posterior()
}

/// One draw from N(mean, covariance) via a Cholesky factor of the covariance.
///
/// Falls back once to a 1e-10 jitter on the diagonal before reporting a
/// numeric failure with condition diagnostics.
pub fn sample_weights<R: Rng + ?Sized>(post: &Posterior, rng: &mut R) -> Result<Vec<f64>> {
    let p = post.dim();
    match &post.cov {
        Covariance::Diagonal(var) => {
            let mut out = Vec::with_capacity(p);
            for i in 0..p {
                if var[i] < 0.0 {
                    return Err(Error::Numeric(format!(
                        "negative variance {} at coordinate {i}",
                        var[i]
                    )));
                }
                let z: f64 = StandardNormal.sample(rng);
                out.push(post.mean[i] + var[i].sqrt() * z);
            }
            Ok(out)
        }
        Covariance::Dense { data, .. } => {
            let l = match cholesky(data, p) {
                Ok(l) => l,
                Err(_) => {
                    let mut jittered = data.clone();
                    for i in 0..p {
                        jittered[i * p + i] += 1e-10;
                    }
                    cholesky(&jittered, p).map_err(|(idx, pivot)| {
                        let (dmin, dmax) = diag_range(data, p);
                        Error::Numeric(format!(
                            "covariance not positive definite even with jitter: pivot {idx} = {pivot:.3e}, \
                             diagonal range [{dmin:.3e}, {dmax:.3e}]"
                        ))
                    })?
                }
            };
            let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            let mut out = post.mean.to_vec();
            for i in 0..p {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += l[i * p + j] * z[j];
                }
                out[i] += acc;
            }
            Ok(out)
        }
    }
}

fn diag_range(m: &[f64], p: usize) -> (f64, f64) {
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    for i in 0..p {
        dmin = dmin.min(m[i * p + i]);
        dmax = dmax.max(m[i * p + i]);
    }
    (dmin, dmax)
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or the index and
/// value of the failing pivot.
fn cholesky(a: &[f64], p: usize) -> std::result::Result<Vec<f64>, (usize, f64)> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err((i, sum));
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Ok(l)
}

/// Solves A x = b given the Cholesky factor L of A.
fn chol_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * y[k];
        }
        y[i] = sum / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in i + 1..p {
            sum -= l[k * p + i] * x[k];
        }
        x[i] = sum / l[i * p + i];
    }
    x
}

/// A⁻¹ from the Cholesky factor L of A, symmetrized.
fn chol_inverse(l: &[f64], p: usize) -> Vec<f64> {
    // Invert L in place (lower triangular).
    let mut linv = vec![0.0; p * p];
    for i in 0..p {
        linv[i * p + i] = 1.0 / l[i * p + i];
        for j in 0..i {
            let mut sum = 0.0;
            for k in j..i {
                sum -= l[i * p + k] * linv[k * p + j];
            }
            linv[i * p + j] = sum / l[i * p + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹.
    let mut inv = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in i..p {
                sum += linv[k * p + i] * linv[k * p + j];
            }
            inv[i * p + j] = sum;
            inv[j * p + i] = sum;
        }
    }
    inv
}
