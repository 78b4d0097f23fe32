//! Between-chain heterogeneity and run-to-run L1 distances.

use std::collections::HashMap;

use serde::Serialize;

use crate::exact::{ExactError, PosteriorTable};
use crate::partition::Partition;
use crate::sampler::ChainSet;

/// Per-chain and pooled frequencies over the union of visited partitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyProfile {
    pub support: Vec<Partition>,
    /// `per_chain[c][q]`; each row sums to 1.
    pub per_chain: Vec<Vec<f64>>,
    /// Average of the rows weighted by retained sample counts.
    pub pooled: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FrequencyProfile {
    /// Builds a profile from per-chain visit counts. Chains with no samples are skipped.
    pub fn from_counts(chains: &[Vec<(Partition, u64)>]) -> Self {
        let mut index: HashMap<Partition, usize> = HashMap::new();
        let mut support = Vec::new();
        for chain in chains {
            for (p, _) in chain {
                if !index.contains_key(p) {
                    index.insert(p.clone(), support.len());
                    support.push(p.clone());
                }
            }
        }
        let mut per_chain = Vec::new();
        let mut sizes = Vec::new();
        for chain in chains {
            let n: u64 = chain.iter().map(|(_, c)| c).sum();
            if n == 0 {
                continue;
            }
            let mut row = vec![0.0; support.len()];
            for (p, c) in chain {
                row[index[p]] += *c as f64 / n as f64;
            }
            per_chain.push(row);
            sizes.push(n as f64);
        }
        let total: f64 = sizes.iter().sum();
        let weights: Vec<f64> = sizes.iter().map(|s| s / total).collect();
        let mut pooled = vec![0.0; support.len()];
        for (row, w) in per_chain.iter().zip(&weights) {
            for (acc, f) in pooled.iter_mut().zip(row) {
                *acc += w * f;
            }
        }
        FrequencyProfile { support, per_chain, pooled, weights }
    }

    /// Post-burn-in profile of a run; `prefix` restricts to the first states of each chain.
    pub fn from_chains(chains: &ChainSet, prefix: Option<usize>) -> Self {
        Self::from_counts(&chains.chain_counts(prefix))
    }

    pub fn n_chains(&self) -> usize {
        self.per_chain.len()
    }
}

/// `(1/C) sum_c sum_q |f_cq - f_.q|`.
pub fn heterogeneity(profile: &FrequencyProfile) -> f64 {
    let c = profile.n_chains();
    if c == 0 {
        return 0.0;
    }
    let total: f64 = profile
        .per_chain
        .iter()
        .map(|row| row.iter().zip(&profile.pooled).map(|(f, g)| (f - g).abs()).sum::<f64>())
        .sum();
    total / c as f64
}

/// L1 distance over the union of supports, in `[0, 2]`.
pub fn run_distance(a: &PosteriorTable, b: &PosteriorTable) -> Result<f64, ExactError> {
    if a.dim() != b.dim() {
        return Err(ExactError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let mut d: f64 = a.iter().map(|(p, w)| (w - b.prob(p)).abs()).sum();
    d += b.iter().filter(|(p, _)| a.prob(p) == 0.0).map(|(_, w)| w).sum::<f64>();
    Ok(d.min(2.0))
}

/// Pairwise distance matrix.
pub fn distance_matrix(tables: &[PosteriorTable]) -> Result<Vec<Vec<f64>>, ExactError> {
    let n = tables.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = run_distance(&tables[i], &tables[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// Chain lengths `1, 2, 5, 10, 20, 50, ...` up to and including `j`.
pub fn checkpoint_schedule(j: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let c = m * decade;
            if c >= j {
                break 'outer;
            }
            if c >= 2 {
                out.push(c);
            }
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    out.push(j);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub length: usize,
    pub heterogeneity: f64,
}

/// Heterogeneity of the second half of the first `j` states, for each checkpoint `j`.
pub fn heterogeneity_curve(chains: &ChainSet, checkpoints: &[usize]) -> Vec<Checkpoint> {
    checkpoints
        .iter()
        .map(|&j| Checkpoint { length: j, heterogeneity: heterogeneity(&FrequencyProfile::from_chains(chains, Some(j))) })
        .collect()
}
