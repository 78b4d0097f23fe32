//! Posterior tables over partitions and the summaries computed from them.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{BlockScorer, ModelError};
use crate::numeric::log_sum_exp;
use crate::partition::{bell, enumerate, BlockKey, Partition, PartitionError, MAX_ENUMERATE_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("dimension {0} too large for exact enumeration (max {MAX_ENUMERATE_DIM}); use MCMC sampling instead")]
    TooLarge(usize),
    #[error("scoring partition {partition} failed: {source}")]
    Scorer { partition: String, source: ModelError },
    #[error("entropy needs the full support; sampled tables only cover visited partitions")]
    SampledEntropy,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("posterior table is empty or has no positive mass")]
    Empty,
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("malformed posterior table: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    Exact,
    Sampled,
}

/// Probabilities over a set of distinct partitions of `0..dim`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorTable {
    dim: usize,
    mode: PosteriorMode,
    partitions: Vec<Partition>,
    probs: Vec<f64>,
    #[serde(skip)]
    index: HashMap<Partition, usize>,
}

impl PosteriorTable {
    /// Normalizes non-negative weights. Duplicated partitions are merged.
    pub fn from_weights(
        dim: usize,
        mode: PosteriorMode,
        entries: impl IntoIterator<Item = (Partition, f64)>,
    ) -> Result<Self, ExactError> {
        let mut partitions = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut index = HashMap::new();
        for (p, w) in entries {
            if p.dim() != dim {
                return Err(ExactError::DimensionMismatch { expected: dim, got: p.dim() });
            }
            if !(w >= 0.0) {
                return Err(ExactError::Parse(format!("negative or NaN weight {w}")));
            }
            match index.get(&p) {
                Some(&i) => weights[i] += w,
                None => {
                    index.insert(p.clone(), partitions.len());
                    partitions.push(p);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if partitions.is_empty() || !(total > 0.0) || !total.is_finite() {
            return Err(ExactError::Empty);
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(PosteriorTable { dim, mode, partitions, probs, index })
    }

    /// Normalizes log weights with a max-shifted log-sum-exp.
    pub fn from_log_weights(dim: usize, mode: PosteriorMode, partitions: Vec<Partition>, log_weights: &[f64]) -> Result<Self, ExactError> {
        assert_eq!(partitions.len(), log_weights.len());
        let lse = log_sum_exp(log_weights);
        if !lse.is_finite() {
            return Err(ExactError::Empty);
        }
        let weights: Vec<f64> = log_weights.iter().map(|s| (s - lse).exp()).collect();
        Self::from_weights(dim, mode, partitions.into_iter().zip(weights))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> PosteriorMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Partition, f64)> {
        self.partitions.iter().zip(self.probs.iter().copied())
    }

    /// Probability of `p`; zero when outside the support.
    pub fn prob(&self, p: &Partition) -> f64 {
        self.index.get(p).map_or(0.0, |&i| self.probs[i])
    }

    fn rebuild_index(&mut self) {
        self.index = self.partitions.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    }

    /// Entries by decreasing probability; ties broken by canonical RGS order.
    pub fn sorted(&self) -> Vec<(&Partition, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.rgs().cmp(b.0.rgs())));
        v
    }

    pub fn top(&self, k: usize) -> Vec<(&Partition, f64)> {
        let mut v = self.sorted();
        v.truncate(k);
        v
    }

    /// Maximum a posteriori partition (lexicographically smallest RGS among ties).
    pub fn map(&self) -> &Partition {
        self.sorted()[0].0
    }

    /// `-sum p ln p / ln Bell(D)`; exact tables only.
    pub fn entropy_normalized(&self) -> Result<f64, ExactError> {
        if self.mode == PosteriorMode::Sampled {
            return Err(ExactError::SampledEntropy);
        }
        if self.dim == 1 {
            return Ok(0.0);
        }
        let h: f64 = -self.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
        let n = bell(self.dim)? as f64;
        Ok((h / n.ln()).clamp(0.0, 1.0))
    }

    /// Probability that `block` is exactly one of the blocks.
    pub fn relevance(&self, block: &BlockKey) -> f64 {
        self.event_probability(|p| p.has_block(block))
    }

    /// Relevance of every block that occurs in the support.
    pub fn all_relevances(&self) -> Vec<(BlockKey, f64)> {
        let mut acc: HashMap<BlockKey, f64> = HashMap::new();
        for (p, w) in self.iter() {
            for b in p.blocks() {
                *acc.entry(b).or_insert(0.0) += w;
            }
        }
        let mut v: Vec<_> = acc.into_iter().collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn event_probability(&self, predicate: impl Fn(&Partition) -> bool) -> f64 {
        self.iter().filter(|(p, _)| predicate(p)).map(|(_, w)| w).sum()
    }

    pub fn event(&self, event: &Event) -> f64 {
        self.event_probability(|p| event.holds(p))
    }

    /// 1-based rank of `p` in [`sorted`](Self::sorted) order; `None` outside the support.
    pub fn rank(&self, p: &Partition) -> Option<usize> {
        self.sorted().iter().position(|(q, _)| *q == p).map(|i| i + 1)
    }

    pub fn summarize_truth(&self, truth: &Partition) -> Result<TruthSummary, ExactError> {
        if truth.dim() != self.dim {
            return Err(ExactError::DimensionMismatch { expected: self.dim, got: truth.dim() });
        }
        let p_true = self.prob(truth);
        let sorted = self.sorted();
        let max = sorted[0].1;
        let rank = match sorted.iter().position(|(q, _)| *q == truth) {
            Some(i) => i + 1,
            // unvisited truth ranks after everything in the support
            None => sorted.len() + 1,
        };
        let entropy = self.entropy_normalized().ok();
        Ok(TruthSummary { p_true, rank, ratio_to_map: p_true / max, entropy })
    }

    /// Relabels variables: variable `i` of the result is variable `perm[i]` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut t = self.clone();
        t.partitions = self.partitions.iter().map(|p| p.permute(perm)).collect();
        t.rebuild_index();
        t
    }

    /// CSV with header `partition,probability`, sorted by decreasing probability.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("partition,probability\n");
        for (p, w) in self.sorted() {
            out.push_str(&format!("{},{}\n", p, format_probability(w)));
        }
        out
    }

    pub fn from_csv(text: &str, mode: PosteriorMode) -> Result<Self, ExactError> {
        let mut entries = Vec::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("partition")) {
                continue;
            }
            let (p, w) = line
                .rsplit_once(',')
                .ok_or_else(|| ExactError::Parse(format!("line {}: expected partition,probability", lineno + 1)))?;
            let p = Partition::parse(p.trim().trim_matches('"'))?;
            let w: f64 = w.trim().parse().map_err(|_| ExactError::Parse(format!("line {}: bad probability", lineno + 1)))?;
            match dim {
                None => dim = Some(p.dim()),
                Some(d) if d != p.dim() => return Err(ExactError::DimensionMismatch { expected: d, got: p.dim() }),
                _ => {}
            }
            entries.push((p, w));
        }
        let dim = dim.ok_or(ExactError::Empty)?;
        Self::from_weights(dim, mode, entries)
    }
}

/// Built-in events over partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// All listed variables in one block.
    SameBlock(Vec<usize>),
    /// The set is exactly one of the blocks.
    HasBlock(BlockKey),
    /// Exactly `K` blocks.
    BlockCount(usize),
    /// The listed variables share a block iff they share one in the given partition.
    AgreesWith { partition: Partition, subset: Vec<usize> },
    Not(Box<Event>),
}

impl Event {
    pub fn holds(&self, p: &Partition) -> bool {
        match self {
            Event::SameBlock(subset) => p.same_block(subset),
            Event::HasBlock(b) => p.has_block(b),
            Event::BlockCount(k) => p.n_blocks() == *k,
            Event::AgreesWith { partition, subset } => subset
                .iter()
                .all(|&a| subset.iter().all(|&b| (p.label(a) == p.label(b)) == (partition.label(a) == partition.label(b)))),
            Event::Not(e) => !e.holds(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub p_true: f64,
    pub rank: usize,
    pub ratio_to_map: f64,
    /// Normalized entropy; absent for sampled tables.
    pub entropy: Option<f64>,
}

/// Scores all `Bell(D)` partitions and normalizes.
pub fn exact_posterior<S: BlockScorer + ?Sized>(scorer: &S, dim: usize) -> Result<PosteriorTable, ExactError> {
    if dim > MAX_ENUMERATE_DIM {
        return Err(ExactError::TooLarge(dim));
    }
    if scorer.dim() != dim {
        return Err(ExactError::DimensionMismatch { expected: scorer.dim(), got: dim });
    }
    let partitions: Vec<Partition> = enumerate(dim)?.collect();
    // Score every distinct block once, then sum per partition.
    let mut blocks: Vec<BlockKey> = partitions.iter().flat_map(|p| p.blocks()).collect();
    blocks.sort_unstable();
    blocks.dedup();
    let block_scores: Vec<Result<f64, ModelError>> = blocks.par_iter().map(|b| scorer.block_score(b)).collect();
    let table: HashMap<&BlockKey, &Result<f64, ModelError>> = blocks.iter().zip(block_scores.iter()).collect();
    let scores: Vec<f64> = partitions
        .par_iter()
        .map(|p| {
            let mut acc = scorer.log_prior(p);
            for b in p.blocks() {
                match table[&b] {
                    Ok(v) => acc += v,
                    Err(e) => return Err(ExactError::Scorer { partition: p.to_string(), source: e.clone() }),
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, _>>()?;
    PosteriorTable::from_log_weights(dim, PosteriorMode::Exact, partitions, &scores)
}

/// Six significant digits; scientific notation below `1e-3`.
pub fn format_probability(p: f64) -> String {
    if p == 0.0 {
        return "0".to_string();
    }
    if p.abs() < 1e-3 {
        return format!("{p:.5e}");
    }
    let magnitude = p.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{p:.decimals$}")
}
