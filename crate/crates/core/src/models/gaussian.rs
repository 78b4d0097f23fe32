//! Multivariate normal model with an inverse-Wishart prior on each block covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::ModelError;
use crate::partition::{BlockKey, Partition};

/// `ln Z(d, n)`, the log normalizing constant of a `d`-dimensional Wishart with `n` degrees of freedom.
pub fn log_z(d: usize, n: f64) -> Result<f64, ModelError> {
    let df = d as f64;
    if !(n + 1.0 - df > 0.0) {
        return Err(ModelError::NonPositiveGammaArgument { d, n });
    }
    let mut acc = n * df / 2.0 * std::f64::consts::LN_2 + df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for k in 1..=d {
        acc += ln_gamma((n + 1.0 - k as f64) / 2.0);
    }
    Ok(acc)
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
pub(crate) fn log_det_spd(m: DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        return (v > 0.0 && v.is_finite()).then(|| v.ln());
    }
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    Some(2.0 * acc)
}

fn sub_matrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Sum-of-squares matrix `S` with its effective degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSuffStats {
    s: DMatrix<f64>,
    n_eff: f64,
    is_correlation: bool,
}

impl GaussianSuffStats {
    /// Builds from a sum-of-squares matrix directly.
    pub fn new(s: DMatrix<f64>, n_eff: f64) -> Result<Self, ModelError> {
        Self::validated(s, n_eff, false)
    }

    fn validated(s: DMatrix<f64>, n_eff: f64, is_correlation: bool) -> Result<Self, ModelError> {
        let d = s.nrows();
        if d == 0 || s.ncols() != d {
            return Err(ModelError::InvalidInput(format!("matrix must be square and non-empty, got {}x{}", d, s.ncols())));
        }
        if !(n_eff >= 1.0) {
            return Err(ModelError::InvalidInput(format!("effective degrees of freedom must be >= 1, got {n_eff}")));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidInput("matrix contains non-finite entries".into()));
        }
        let scale = s.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..d {
            if s[(i, i)] < 0.0 {
                return Err(ModelError::NonPositiveVariance(i));
            }
            for j in 0..i {
                if (s[(i, j)] - s[(j, i)]).abs() > 1e-9 * scale {
                    return Err(ModelError::InvalidInput(format!("matrix not symmetric at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        let eig = SymmetricEigen::new(s.clone()).eigenvalues;
        if eig.iter().any(|&e| e < -1e-9 * scale) {
            return Err(ModelError::InvalidInput("matrix is not positive semidefinite".into()));
        }
        if is_correlation {
            for i in 0..d {
                if (s[(i, i)] / n_eff - 1.0).abs() > 1e-9 {
                    return Err(ModelError::InvalidInput(format!("correlation diagonal entry {} is not 1", i + 1)));
                }
            }
        }
        Ok(GaussianSuffStats { s, n_eff, is_correlation })
    }

    /// From a raw data matrix (rows = observations). With `known_mean` the
    /// deviations are taken around it and `N_eff = N`; otherwise around the
    /// sample mean with `N_eff = N - 1`.
    pub fn from_data(data: &DMatrix<f64>, known_mean: Option<&[f64]>) -> Result<Self, ModelError> {
        let (n, d) = data.shape();
        if n == 0 || d == 0 {
            return Err(ModelError::InvalidInput("empty data matrix".into()));
        }
        let (mean, n_eff): (Vec<f64>, f64) = match known_mean {
            Some(m) => {
                if m.len() != d {
                    return Err(ModelError::DimensionMismatch { expected: d, got: m.len() });
                }
                (m.to_vec(), n as f64)
            }
            None => {
                if n < 2 {
                    return Err(ModelError::InsufficientSamples { n_eff: 0.0, dim: d });
                }
                ((0..d).map(|j| data.column(j).mean()).collect(), (n - 1) as f64)
            }
        };
        let mut centered = data.clone();
        for j in 0..d {
            for i in 0..n {
                centered[(i, j)] -= mean[j];
            }
        }
        let s = centered.transpose() * &centered;
        let s = (&s + s.transpose()) * 0.5;
        Self::validated(s, n_eff, false)
    }

    /// From a covariance matrix estimated as `S / N_eff`.
    pub fn from_covariance(cov: DMatrix<f64>, n: usize, known_mean: bool) -> Result<Self, ModelError> {
        let n_eff = effective_dof(n, known_mean)?;
        Self::validated(cov * n_eff, n_eff, false)
    }

    /// From a correlation matrix; `S := N_eff * R`.
    pub fn from_correlation(corr: DMatrix<f64>, n: usize, known_mean: bool) -> Result<Self, ModelError> {
        let n_eff = effective_dof(n, known_mean)?;
        Self::validated(corr * n_eff, n_eff, true)
    }

    /// Rescales to the correlation form, `S' = N_eff * R`.
    pub fn to_correlation(&self) -> Result<Self, ModelError> {
        if self.is_correlation {
            return Ok(self.clone());
        }
        let d = self.dim();
        let sd: Vec<f64> = (0..d).map(|i| self.s[(i, i)].sqrt()).collect();
        if let Some(i) = sd.iter().position(|&v| !(v > 0.0)) {
            return Err(ModelError::NonPositiveVariance(i));
        }
        let r = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { self.s[(i, j)] / (sd[i] * sd[j]) });
        Self::validated(r * self.n_eff, self.n_eff, true)
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn n_eff(&self) -> f64 {
        self.n_eff
    }

    pub fn is_correlation(&self) -> bool {
        self.is_correlation
    }

    pub fn sum_of_squares(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Applies a variable permutation: new variable `i` is old variable `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        GaussianSuffStats { s: sub_matrix(&self.s, perm), n_eff: self.n_eff, is_correlation: self.is_correlation }
    }
}

fn effective_dof(n: usize, known_mean: bool) -> Result<f64, ModelError> {
    let n_eff = if known_mean { n as f64 } else { n as f64 - 1.0 };
    if n_eff < 1.0 {
        return Err(ModelError::InvalidInput(format!("sample size {n} too small")));
    }
    Ok(n_eff)
}

/// Inverse-Wishart hyperparameters: degrees of freedom and a diagonal scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHyper {
    pub nu: f64,
    pub lambda_diag: Vec<f64>,
}

impl GaussianHyper {
    pub fn new(nu: f64, lambda_diag: Vec<f64>) -> Result<Self, ModelError> {
        let d = lambda_diag.len() as f64;
        if lambda_diag.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ModelError::InvalidInput("prior scale entries must be positive".into()));
        }
        if !(nu >= d) {
            return Err(ModelError::InvalidInput(format!("prior degrees of freedom {nu} below dimension {d}")));
        }
        Ok(GaussianHyper { nu, lambda_diag })
    }

    /// `nu = D + 1`, identity scale: uniform marginals on correlations.
    pub fn bayes_corr(dim: usize) -> Self {
        GaussianHyper { nu: dim as f64 + 1.0, lambda_diag: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lambda_diag.len()
    }
}

/// Log marginal likelihood contribution of one block.
pub fn gaussian_block_logml(stats: &GaussianSuffStats, hyper: &GaussianHyper, block: &BlockKey) -> Result<f64, ModelError> {
    let d = stats.dim();
    if hyper.dim() != d {
        return Err(ModelError::DimensionMismatch { expected: d, got: hyper.dim() });
    }
    if stats.n_eff < d as f64 {
        return Err(ModelError::InsufficientSamples { n_eff: stats.n_eff, dim: d });
    }
    let idx = block.elements();
    if let Some(&e) = idx.iter().find(|&&e| e >= d) {
        return Err(ModelError::DimensionMismatch { expected: d, got: e + 1 });
    }
    let dk = idx.len();
    let nu_k = hyper.nu - d as f64 + dk as f64;
    let n = stats.n_eff;
    let ln_det_lambda: f64 = idx.iter().map(|&i| hyper.lambda_diag[i].ln()).sum();
    let mut post = sub_matrix(&stats.s, idx);
    for (a, &i) in idx.iter().enumerate() {
        post[(a, a)] += hyper.lambda_diag[i];
    }
    let ln_det_post = log_det_spd(post).ok_or_else(|| ModelError::NotPositiveDefinite(block.to_string()))?;
    Ok(log_z(dk, n + nu_k)? - log_z(dk, nu_k)? + nu_k / 2.0 * ln_det_lambda - (n + nu_k) / 2.0 * ln_det_post)
}

/// BIC contribution of one block: `-(N/2) ln|S_k/N| - D_k(D_k+1)/4 ln N`.
pub fn gaussian_bic_block(stats: &GaussianSuffStats, block: &BlockKey) -> Result<f64, ModelError> {
    let d = stats.dim();
    let idx = block.elements();
    if let Some(&e) = idx.iter().find(|&&e| e >= d) {
        return Err(ModelError::DimensionMismatch { expected: d, got: e + 1 });
    }
    let n = stats.n_eff;
    let dk = idx.len() as f64;
    let cov = sub_matrix(&stats.s, idx) / n;
    let ln_det = log_det_spd(cov).ok_or_else(|| ModelError::SingularCovariance(block.to_string()))?;
    Ok(-n / 2.0 * ln_det - dk * (dk + 1.0) / 4.0 * n.ln())
}

pub fn gaussian_bic_score(stats: &GaussianSuffStats, p: &Partition) -> Result<f64, ModelError> {
    if p.dim() != stats.dim() {
        return Err(ModelError::DimensionMismatch { expected: stats.dim(), got: p.dim() });
    }
    p.blocks().iter().map(|b| gaussian_bic_block(stats, b)).sum()
}

/// Objective maximized per coordinate by [`optimize_lambda`] (constant terms dropped).
fn lambda_objective(lambda: f64, s_dd: f64, n: f64, nu_d: f64) -> f64 {
    nu_d / 2.0 * lambda.ln() - (n + nu_d) / 2.0 * (lambda + s_dd).ln()
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // Search in log space: the bracket spans many decades.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let g = |t: f64| f(t.exp());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    for _ in 0..200 {
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    lo = a.exp();
    hi = b.exp();
    (lo * hi).sqrt()
}

/// BayesOptim hyperparameters: `nu = D` and the diagonal scale maximizing the
/// marginal likelihood of the all-singletons partition.
pub fn optimize_lambda(stats: &GaussianSuffStats) -> Result<GaussianHyper, ModelError> {
    let d = stats.dim();
    let n = stats.n_eff;
    if n < d as f64 {
        return Err(ModelError::InsufficientSamples { n_eff: n, dim: d });
    }
    let nu_d = 1.0;
    let mut lambda = Vec::with_capacity(d);
    for i in 0..d {
        let s_dd = stats.s[(i, i)];
        if !(s_dd > 0.0) {
            return Err(ModelError::NonPositiveVariance(i));
        }
        let stationary = nu_d * s_dd / n;
        let f = |l: f64| lambda_objective(l, s_dd, n, nu_d);
        let f0 = f(stationary);
        let is_max = [1.0 - 1e-6, 1.0 + 1e-6].iter().all(|h| f(stationary * h) <= f0);
        let value = if is_max {
            stationary
        } else {
            golden_section_max(f, 1e-8 * s_dd / n, 1e8 * s_dd / n)
        };
        lambda.push(value);
    }
    Ok(GaussianHyper { nu: d as f64, lambda_diag: lambda })
}
