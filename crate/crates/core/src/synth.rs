//! Synthetic data with a known independence structure.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelError, MultinomialSuffStats};
use crate::partition::{ln_stirling2_row, BlockKey, Partition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("block count K = {k} out of range for D = {dim}")]
    BlockCount { dim: usize, k: usize },
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Family {
    Gaussian,
    /// Multivariate Student-t with `zeta` degrees of freedom.
    Student { zeta: f64 },
    /// Categorical variables with the given arities.
    Multinomial { arities: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    /// Uniform among partitions with this many blocks.
    Blocks(usize),
    Fixed(Partition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub truth: Truth,
    pub n: usize,
    pub family: Family,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthData {
    /// `n x D` observations.
    Matrix(DMatrix<f64>),
    Table(MultinomialSuffStats),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub truth: Partition,
    pub data: SynthData,
    /// Block correlation matrices (continuous families only), in block order.
    pub block_sigmas: Vec<(BlockKey, DMatrix<f64>)>,
}

/// Uniform over the partitions of `0..dim` with exactly `k` blocks.
///
/// Works backwards through the recurrence `{n,k} = k{n-1,k} + {n-1,k-1}`:
/// element `n` opens a new block with probability `{n-1,k-1}/{n,k}` and
/// otherwise joins one of the `k` blocks of the rest uniformly.
pub fn random_partition_with_k<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Result<Partition, SynthError> {
    if dim == 0 || k == 0 || k > dim {
        return Err(SynthError::BlockCount { dim, k });
    }
    let rows: Vec<Vec<f64>> = (0..=dim).map(ln_stirling2_row).collect();
    // None: new block; Some(j): join the j-th existing block
    let mut choices = vec![None; dim];
    let mut kk = k;
    for n in (1..=dim).rev() {
        if kk == n {
            break; // the first n elements are all singletons
        }
        let p_new = if kk == 1 { 0.0 } else { (rows[n - 1][kk - 1] - rows[n][kk]).exp() };
        if rng.random::<f64>() < p_new {
            kk -= 1;
        } else {
            choices[n - 1] = Some(rng.random_range(0..kk));
        }
    }
    let mut labels = Vec::with_capacity(dim);
    let mut blocks = 0;
    for c in choices {
        match c {
            None => {
                labels.push(blocks);
                blocks += 1;
            }
            Some(j) => labels.push(j),
        }
    }
    debug_assert_eq!(blocks, k);
    Ok(Partition::from_dense_labels(&labels))
}

/// `W ~ Wishart(size + 1, I)` by the Bartlett construction, rescaled to unit diagonal.
pub fn random_block_correlation<R: Rng + ?Sized>(size: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(size >= 1);
    let dof = (size + 1) as f64;
    loop {
        let mut a = DMatrix::zeros(size, size);
        for i in 0..size {
            let chi = ChiSquared::new(dof - i as f64).expect("positive degrees of freedom");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let w = &a * a.transpose();
        let scale: Vec<f64> = (0..size).map(|i| 1.0 / w[(i, i)].sqrt()).collect();
        let r = DMatrix::from_fn(size, size, |i, j| {
            let (lo, hi) = (i.min(j), i.max(j));
            if i == j { 1.0 } else { w[(lo, hi)] * scale[lo] * scale[hi] }
        });
        if scale.iter().all(|s| s.is_finite()) && r.clone().cholesky().is_some() {
            return r;
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.dim == 0 {
            return Err(SynthError::Invalid("dimension must be positive".into()));
        }
        if self.n == 0 {
            return Err(SynthError::Invalid("need at least one sample".into()));
        }
        match &self.truth {
            Truth::Blocks(k) if *k == 0 || *k > self.dim => return Err(SynthError::BlockCount { dim: self.dim, k: *k }),
            Truth::Fixed(p) if p.dim() != self.dim => {
                return Err(SynthError::Invalid(format!("truth has dimension {}, expected {}", p.dim(), self.dim)))
            }
            _ => {}
        }
        match &self.family {
            Family::Student { zeta } if !(*zeta > 0.0) => Err(SynthError::Invalid(format!("Student degrees of freedom {zeta} must be positive"))),
            Family::Multinomial { arities } if arities.len() != self.dim || arities.iter().any(|&a| a < 2) => {
                Err(SynthError::Invalid(format!("need {} arities, each at least 2", self.dim)))
            }
            _ => Ok(()),
        }
    }
}

/// Generates one data set; deterministic given the spec (including its seed).
pub fn generate(spec: &SynthSpec) -> Result<Synthetic, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = match &spec.truth {
        Truth::Blocks(k) => random_partition_with_k(spec.dim, *k, &mut rng)?,
        Truth::Fixed(p) => p.clone(),
    };
    let blocks = truth.blocks();
    match &spec.family {
        Family::Gaussian | Family::Student { .. } => {
            let zeta = match spec.family {
                Family::Student { zeta } => Some(zeta),
                _ => None,
            };
            let sigmas: Vec<DMatrix<f64>> = blocks.iter().map(|b| random_block_correlation(b.len(), &mut rng)).collect();
            let mut x = DMatrix::zeros(spec.n, spec.dim);
            for (b, sigma) in blocks.iter().zip(&sigmas) {
                let l = sigma.clone().cholesky().expect("correlation draws are positive definite").l();
                let mixing = zeta.map(|z| ChiSquared::new(z).expect("positive degrees of freedom"));
                for row in 0..spec.n {
                    let z = nalgebra::DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                    let mut v = &l * z;
                    if let (Some(chi), Some(zeta)) = (&mixing, zeta) {
                        v /= (chi.sample(&mut rng) / zeta).sqrt();
                    }
                    for (i, &e) in b.elements().iter().enumerate() {
                        x[(row, e)] = v[i];
                    }
                }
            }
            Ok(Synthetic { truth, data: SynthData::Matrix(x), block_sigmas: blocks.into_iter().zip(sigmas).collect() })
        }
        Family::Multinomial { arities } => {
            let mut obs = vec![vec![0usize; spec.dim]; spec.n];
            for b in &blocks {
                let b_arities: Vec<usize> = b.elements().iter().map(|&e| arities[e]).collect();
                let cells: usize = b_arities.iter().product();
                // flat Dirichlet via normalized unit exponentials
                let g: Vec<f64> = (0..cells).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = g.iter().sum();
                let mut cdf = Vec::with_capacity(cells);
                let mut acc = 0.0;
                for v in g {
                    acc += v / total;
                    cdf.push(acc);
                }
                for o in obs.iter_mut() {
                    let u: f64 = rng.random();
                    let mut cell = cdf.partition_point(|&c| c <= u).min(cells - 1);
                    for (i, &e) in b.elements().iter().enumerate().rev() {
                        o[e] = cell % b_arities[i];
                        cell /= b_arities[i];
                    }
                }
            }
            let table = MultinomialSuffStats::from_cells(arities.clone(), obs.into_iter().map(|o| (o, 1)))?;
            Ok(Synthetic { truth, data: SynthData::Table(table), block_sigmas: Vec::new() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::enumerate;
    use std::collections::HashMap;

    #[test]
    fn block_count_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(random_partition_with_k(5, 1, &mut rng).unwrap(), Partition::single_block(5));
            assert_eq!(random_partition_with_k(5, 5, &mut rng).unwrap(), Partition::singletons(5));
            assert_eq!(random_partition_with_k(7, 3, &mut rng).unwrap().n_blocks(), 3);
        }
        assert!(random_partition_with_k(3, 4, &mut rng).is_err());
        assert!(random_partition_with_k(3, 0, &mut rng).is_err());
    }

    #[test]
    fn uniform_within_block_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        for (dim, k, cells) in [(4, 2, 7), (5, 3, 25)] {
            let mut counts: HashMap<Partition, usize> = HashMap::new();
            for _ in 0..n {
                *counts.entry(random_partition_with_k(dim, k, &mut rng).unwrap()).or_default() += 1;
            }
            let expected = enumerate(dim).unwrap().filter(|p| p.n_blocks() == k).count();
            assert_eq!(counts.len(), expected);
            assert_eq!(expected, cells);
            let e = n as f64 / cells as f64;
            let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
            // 0.999 quantiles: chi2(6) = 22.46, chi2(24) = 51.18
            let crit = if cells == 7 { 22.46 } else { 51.18 };
            assert!(chi2 < crit, "D={dim} K={k}: chi2 = {chi2}");
        }
    }

    #[test]
    fn correlation_draws_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(random_block_correlation(1, &mut rng), DMatrix::from_element(1, 1, 1.0));
        for size in 2..8 {
            let r = random_block_correlation(size, &mut rng);
            assert_eq!(r, r.transpose());
            assert!((0..size).all(|i| r[(i, i)] == 1.0));
            assert!(r.symmetric_eigenvalues().iter().all(|&l| l > 0.0));
        }
    }

    /// Kolmogorov-Smirnov statistic against uniform(-1, 1).
    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + 1.0) / 2.0;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn pairwise_correlations_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let crit = (-(1e-3f64 / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt();
        let xs: Vec<f64> = (0..n).map(|_| random_block_correlation(2, &mut rng)[(0, 1)]).collect();
        assert!(ks_uniform(xs) < crit);
        // inside larger blocks the marginal has density ~ (1 - r^2)^((size - 2) / 2), not uniform
        let xs: Vec<f64> = (0..20_000).map(|_| random_block_correlation(4, &mut rng)[(1, 3)]).collect();
        assert!(ks_uniform(xs) > (-(1e-3f64 / 2.0).ln() / 2.0).sqrt() / (20_000f64).sqrt());
    }

    fn correlations(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let means = x.row_mean();
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
        let cov = centered.transpose() * &centered / n;
        DMatrix::from_fn(x.ncols(), x.ncols(), |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
    }

    #[test]
    fn independent_blocks_decorrelate() {
        let spec = SynthSpec { dim: 6, truth: Truth::Blocks(6), n: 100_000, family: Family::Gaussian, seed: 5 };
        let s = generate(&spec).unwrap();
        let SynthData::Matrix(x) = &s.data else { panic!() };
        let r = correlations(x);
        for i in 0..6 {
            for j in 0..i {
                assert!(r[(i, j)].abs() < 4.0 / (1e5f64).sqrt());
            }
        }
        let spec = SynthSpec { truth: Truth::Blocks(2), seed: 6, ..spec };
        let s = generate(&spec).unwrap();
        let SynthData::Matrix(x) = &s.data else { panic!() };
        let r = correlations(x);
        for i in 0..6 {
            for j in 0..i {
                if s.truth.label(i) != s.truth.label(j) {
                    assert!(r[(i, j)].abs() < 0.02);
                }
            }
        }
        // within-block sample correlations track the drawn matrices
        for (b, sigma) in &s.block_sigmas {
            let e = b.elements();
            for a in 0..e.len() {
                for c in 0..a {
                    assert!((r[(e[a], e[c])] - sigma[(a, c)]).abs() < 0.02);
                }
            }
        }
    }

    fn kurtosis(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        m4 / (m2 * m2)
    }

    #[test]
    fn cauchy_blocks_are_heavy_tailed() {
        let mut ratios = Vec::new();
        for seed in 0..11 {
            let truth = Truth::Fixed(Partition::parse("12|3").unwrap());
            let g = generate(&SynthSpec { dim: 3, truth: truth.clone(), n: 2000, family: Family::Gaussian, seed }).unwrap();
            let t = generate(&SynthSpec { dim: 3, truth, n: 2000, family: Family::Student { zeta: 1.0 }, seed }).unwrap();
            let (SynthData::Matrix(g), SynthData::Matrix(t)) = (&g.data, &t.data) else { panic!() };
            ratios.push(kurtosis(t.column(0).as_slice()) / kurtosis(g.column(0).as_slice()));
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ratios[5] > 10.0, "median kurtosis ratio {}", ratios[5]);
    }

    #[test]
    fn deterministic_and_truthful() {
        let spec = SynthSpec { dim: 5, truth: Truth::Blocks(3), n: 50, family: Family::Student { zeta: 3.0 }, seed: 9 };
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.truth.n_blocks(), 3);
        assert_eq!(a.block_sigmas.iter().map(|(b, _)| b.clone()).collect::<Vec<_>>(), a.truth.blocks());
        let fixed = Partition::parse("13|25|4").unwrap();
        let b = generate(&SynthSpec { truth: Truth::Fixed(fixed.clone()), ..spec }).unwrap();
        assert_eq!(b.truth, fixed);
    }

    #[test]
    fn multinomial_tables() {
        let spec = SynthSpec {
            dim: 3,
            truth: Truth::Fixed(Partition::parse("12|3").unwrap()),
            n: 20_000,
            family: Family::Multinomial { arities: vec![2, 3, 2] },
            seed: 10,
        };
        let s = generate(&spec).unwrap();
        let SynthData::Table(t) = &s.data else { panic!() };
        assert_eq!(t.total(), 20_000);
        assert_eq!(t.arities(), &[2, 3, 2]);
        // the independent variable's joint with the block factorizes approximately
        let joint = t.marginal_counts(&BlockKey::new(vec![0, 2]).unwrap()).unwrap();
        let a = t.marginal_counts(&BlockKey::new(vec![0]).unwrap()).unwrap();
        let c = t.marginal_counts(&BlockKey::new(vec![2]).unwrap()).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let expected = a[i] as f64 * c[k] as f64 / 20_000.0;
                assert!((joint[i * 2 + k] as f64 - expected).abs() < 4.0 * expected.sqrt() + 5.0);
            }
        }
        let bad = SynthSpec { family: Family::Multinomial { arities: vec![2, 1, 2] }, ..spec };
        assert!(generate(&bad).is_err());
    }
}
