//! Cross-classified multinomial model with a Dirichlet prior per block table.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::ModelError;
use crate::partition::{BlockKey, Partition};

/// Dense contingency table, row-major (last variable varies fastest).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultinomialSuffStats {
    arities: Vec<usize>,
    counts: Vec<u64>,
    total: u64,
}

impl MultinomialSuffStats {
    pub fn new(arities: Vec<usize>, counts: Vec<u64>) -> Result<Self, ModelError> {
        if arities.is_empty() {
            return Err(ModelError::InvalidInput("at least one variable is required".into()));
        }
        if let Some(i) = arities.iter().position(|&a| a < 2) {
            return Err(ModelError::InvalidInput(format!("variable {} has arity {} (< 2)", i + 1, arities[i])));
        }
        let cells = arities
            .iter()
            .try_fold(1usize, |acc, &a| acc.checked_mul(a))
            .ok_or_else(|| ModelError::InvalidInput("contingency table too large".into()))?;
        if counts.len() != cells {
            return Err(ModelError::InvalidInput(format!("expected {cells} cells, got {}", counts.len())));
        }
        let total = counts.iter().sum();
        Ok(MultinomialSuffStats { arities, counts, total })
    }

    /// Accumulates `(coordinates, count)` pairs; unlisted cells are zero.
    pub fn from_cells<I>(arities: Vec<usize>, cells: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (Vec<usize>, u64)>,
    {
        let n_cells = arities.iter().try_fold(1usize, |acc, &a| acc.checked_mul(a));
        let n_cells = n_cells.ok_or_else(|| ModelError::InvalidInput("contingency table too large".into()))?;
        let mut counts = vec![0u64; n_cells];
        for (coords, c) in cells {
            if coords.len() != arities.len() {
                return Err(ModelError::DimensionMismatch { expected: arities.len(), got: coords.len() });
            }
            let mut idx = 0usize;
            for (d, (&x, &a)) in coords.iter().zip(&arities).enumerate() {
                if x >= a {
                    return Err(ModelError::InvalidInput(format!("value {x} out of range for variable {} (arity {a})", d + 1)));
                }
                idx = idx * a + x;
            }
            counts[idx] += c;
        }
        Self::new(arities, counts)
    }

    pub fn dim(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of cells of the block's marginal table.
    pub fn block_cells(&self, block: &BlockKey) -> usize {
        block.elements().iter().map(|&d| self.arities[d]).product()
    }

    /// Marginal table over `block`, row-major in the block's ascending variable order.
    pub fn marginal_counts(&self, block: &BlockKey) -> Result<Vec<u64>, ModelError> {
        let d = self.dim();
        if let Some(&e) = block.elements().iter().find(|&&e| e >= d) {
            return Err(ModelError::DimensionMismatch { expected: d, got: e + 1 });
        }
        if block.len() == d {
            return Ok(self.counts.clone());
        }
        // stride of each block variable in the marginal table; zero elsewhere
        let mut out_stride = vec![0usize; d];
        let mut s = 1;
        for &v in block.elements().iter().rev() {
            out_stride[v] = s;
            s *= self.arities[v];
        }
        let mut out = vec![0u64; s];
        let mut coords = vec![0usize; d];
        let mut target = 0usize;
        for &c in &self.counts {
            out[target] += c;
            // odometer increment, maintaining the marginal index
            for i in (0..d).rev() {
                coords[i] += 1;
                target += out_stride[i];
                if coords[i] < self.arities[i] {
                    break;
                }
                target -= out_stride[i] * coords[i];
                coords[i] = 0;
            }
        }
        Ok(out)
    }
}

/// Symmetric Dirichlet prior: every cell of every block table gets `concentration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletHyper {
    pub concentration: f64,
}

impl Default for DirichletHyper {
    fn default() -> Self {
        DirichletHyper { concentration: 1.0 }
    }
}

impl DirichletHyper {
    pub fn symmetric(concentration: f64) -> Result<Self, ModelError> {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(ModelError::InvalidInput(format!("Dirichlet concentration must be positive, got {concentration}")));
        }
        Ok(DirichletHyper { concentration })
    }
}

/// Dirichlet-multinomial log marginal likelihood of one block.
pub fn multinomial_block_logml(
    stats: &MultinomialSuffStats,
    hyper: &DirichletHyper,
    block: &BlockKey,
) -> Result<f64, ModelError> {
    let a = hyper.concentration;
    if !(a > 0.0) {
        return Err(ModelError::InvalidInput("Dirichlet concentration must be positive".into()));
    }
    let table = stats.marginal_counts(block)?;
    let cells = table.len() as f64;
    let ln_gamma_a = ln_gamma(a);
    // zero cells contribute lnΓ(a) - lnΓ(a) = 0
    let data_term: f64 = table.iter().filter(|&&c| c > 0).map(|&c| ln_gamma(c as f64 + a) - ln_gamma_a).sum();
    Ok(ln_gamma(cells * a) - ln_gamma(stats.total as f64 + cells * a) + data_term)
}

/// Entropy (natural log) of the empirical distribution of a count table; `0 ln 0 = 0`.
pub fn empirical_entropy(table: &[u64]) -> f64 {
    let n: u64 = table.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -table.iter().filter(|&&c| c > 0).map(|&c| {
        let f = c as f64 / n;
        f * f.ln()
    }).sum::<f64>()
}

/// BIC contribution of one block: `-N H(f_k) - (I_k - 1)/2 ln N`.
pub fn multinomial_bic_block(stats: &MultinomialSuffStats, block: &BlockKey) -> Result<f64, ModelError> {
    if stats.total == 0 {
        return Err(ModelError::InvalidInput("BIC requires at least one observation".into()));
    }
    let table = stats.marginal_counts(block)?;
    let n = stats.total as f64;
    Ok(-n * empirical_entropy(&table) - (table.len() as f64 - 1.0) / 2.0 * n.ln())
}

pub fn multinomial_bic_score(stats: &MultinomialSuffStats, p: &Partition) -> Result<f64, ModelError> {
    if p.dim() != stats.dim() {
        return Err(ModelError::DimensionMismatch { expected: stats.dim(), got: p.dim() });
    }
    p.blocks().iter().map(|b| multinomial_bic_block(stats, b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn key(v: &[usize]) -> BlockKey {
        BlockKey::new(v.to_vec()).unwrap()
    }

    fn ln_fact(n: u64) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    #[test]
    fn marginal_counts_examples() {
        let stats = MultinomialSuffStats::new(vec![2, 2], vec![1, 2, 3, 4]).unwrap();
        assert_eq!(stats.marginal_counts(&key(&[0])).unwrap(), vec![3, 7]);
        assert_eq!(stats.marginal_counts(&key(&[1])).unwrap(), vec![4, 6]);
        assert_eq!(stats.marginal_counts(&key(&[0, 1])).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn marginal_counts_brute_force() {
        let arities = vec![2, 3, 2, 4];
        let cells: usize = arities.iter().product();
        let counts: Vec<u64> = (0..cells as u64).map(|i| (i * 7 + 3) % 11).collect();
        let stats = MultinomialSuffStats::new(arities.clone(), counts.clone()).unwrap();
        for mask in 1u32..16 {
            let block: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            let got = stats.marginal_counts(&key(&block)).unwrap();
            let mut expected = vec![0u64; block.iter().map(|&d| arities[d]).product()];
            for (idx, &c) in counts.iter().enumerate() {
                // decode row-major index
                let mut rem = idx;
                let mut coords = vec![0; 4];
                for d in (0..4).rev() {
                    coords[d] = rem % arities[d];
                    rem /= arities[d];
                }
                let mut t = 0;
                for &d in &block {
                    t = t * arities[d] + coords[d];
                }
                expected[t] += c;
            }
            assert_eq!(got, expected, "block {block:?}");
            assert_eq!(got.iter().sum::<u64>(), stats.total());
        }
    }

    #[test]
    fn empty_data_scores_zero() {
        let stats = MultinomialSuffStats::new(vec![2, 3], vec![0; 6]).unwrap();
        let hyper = DirichletHyper::default();
        for b in [key(&[0]), key(&[1]), key(&[0, 1])] {
            assert_relative_eq!(multinomial_block_logml(&stats, &hyper, &b).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn beta_binomial_closed_form() {
        for &(n0, n1) in &[(0u64, 0u64), (3, 5), (10, 0), (17, 23)] {
            let stats = MultinomialSuffStats::new(vec![2], vec![n0, n1]).unwrap();
            let got = multinomial_block_logml(&stats, &DirichletHyper::default(), &key(&[0])).unwrap();
            let expected = ln_fact(n0) + ln_fact(n1) - ln_fact(n0 + n1 + 1);
            assert_relative_eq!(got, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_table_bic() {
        let stats = MultinomialSuffStats::new(vec![2, 3], vec![0, 0, 0, 0, 40, 0]).unwrap();
        let p = Partition::parse("1|2").unwrap();
        let expected = -(1.0 / 2.0 + 2.0 / 2.0) * 40f64.ln();
        assert_relative_eq!(multinomial_bic_score(&stats, &p).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn uniform_two_by_two_bic() {
        let stats = MultinomialSuffStats::new(vec![2, 2], vec![25; 4]).unwrap();
        let split = multinomial_bic_score(&stats, &Partition::parse("1|2").unwrap()).unwrap();
        let joint = multinomial_bic_score(&stats, &Partition::parse("12").unwrap()).unwrap();
        assert_relative_eq!(split - joint, 0.5 * 100f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn nested_bic_is_mutual_information_minus_penalty() {
        let counts = vec![13u64, 2, 7, 30, 9, 1, 4, 22];
        let stats = MultinomialSuffStats::new(vec![2, 2, 2], counts.clone()).unwrap();
        let n = stats.total() as f64;
        let joint = multinomial_bic_score(&stats, &Partition::parse("123").unwrap()).unwrap();
        let split = multinomial_bic_score(&stats, &Partition::parse("12|3").unwrap()).unwrap();
        // empirical mutual information between (X1,X2) and X3, computed directly
        let p = |i: usize| counts[i] as f64 / n;
        let mut mi = 0.0;
        for ab in 0..4 {
            for c in 0..2 {
                let pj = p(ab * 2 + c);
                let pab = p(ab * 2) + p(ab * 2 + 1);
                let pc: f64 = (0..4).map(|x| p(x * 2 + c)).sum();
                if pj > 0.0 {
                    mi += pj * (pj / (pab * pc)).ln();
                }
            }
        }
        let penalty = ((8.0 - 1.0) - (4.0 - 1.0) - (2.0 - 1.0)) / 2.0 * n.ln();
        assert_relative_eq!(joint - split, n * mi - penalty, epsilon = 1e-9);
    }

    #[test]
    fn product_table_prefers_independence() {
        // exact product of (0.3, 0.7) x (0.6, 0.4) at N = 10000
        let stats = MultinomialSuffStats::new(vec![2, 2], vec![1800, 1200, 4200, 2800]).unwrap();
        let h = DirichletHyper::default();
        let split = multinomial_block_logml(&stats, &h, &key(&[0])).unwrap() + multinomial_block_logml(&stats, &h, &key(&[1])).unwrap();
        let joint = multinomial_block_logml(&stats, &h, &key(&[0, 1])).unwrap();
        assert!(split > joint);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(MultinomialSuffStats::new(vec![1, 2], vec![0, 0]).is_err());
        assert!(MultinomialSuffStats::new(vec![2, 2], vec![0, 0, 0]).is_err());
        assert!(MultinomialSuffStats::from_cells(vec![2, 2], vec![(vec![0, 2], 1)]).is_err());
        assert!(DirichletHyper::symmetric(0.0).is_err());
    }
}
