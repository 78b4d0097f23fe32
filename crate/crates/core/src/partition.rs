//! Set partitions of variable indices `0..D`.
//!
//! A [`Partition`] is stored as a restricted growth string (RGS): element 0
//! carries label 0, and every later label is at most one more than the
//! largest label seen so far. Two partitions are equal iff their RGS are.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest dimension for which exact (u128) Bell and Stirling numbers are provided.
pub const MAX_EXACT_DIM: usize = 30;

/// Largest dimension accepted by [`enumerate`].
pub const MAX_ENUMERATE_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("empty label sequence")]
    Empty,
    #[error("dimension {0} outside exact range 0..={MAX_EXACT_DIM}")]
    OutOfRange(usize),
    #[error("stirling number requires a <= {MAX_EXACT_DIM}, got ({0}, {1})")]
    StirlingRange(usize, usize),
    #[error("dimension {0} too large for exhaustive enumeration (max {MAX_ENUMERATE_DIM})")]
    TooLargeToEnumerate(usize),
    #[error("element {element} out of range for dimension {dim}")]
    ElementOutOfRange { element: usize, dim: usize },
    #[error("invalid partition string {0:?}: {1}")]
    Parse(String, String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A block of a partition: a non-empty, ascending set of variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockKey(Vec<usize>);

impl BlockKey {
    /// Builds a key from arbitrary indices; sorts and deduplicates.
    /// Returns `None` for an empty set.
    pub fn new(mut elements: Vec<usize>) -> Option<Self> {
        elements.sort_unstable();
        elements.dedup();
        if elements.is_empty() {
            None
        } else {
            Some(BlockKey(elements))
        }
    }

    pub(crate) fn from_sorted(elements: Vec<usize>) -> Self {
        debug_assert!(!elements.is_empty());
        debug_assert!(elements.windows(2).all(|w| w[0] < w[1]));
        BlockKey(elements)
    }

    pub fn elements(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> usize {
        self.0[0]
    }

    pub fn contains(&self, element: usize) -> bool {
        self.0.binary_search(&element).is_ok()
    }

    /// True when every element of `other` is in `self`.
    pub fn is_superset_of(&self, other: &BlockKey) -> bool {
        other.0.iter().all(|e| self.contains(*e))
    }

    /// Parses a single block in the 1-based text format (`"356"` or `"3,5,6"`).
    pub fn parse(s: &str) -> Result<Self, PartitionError> {
        let elements = parse_block_token(s, s, false)?;
        BlockKey::new(elements).ok_or_else(|| PartitionError::Parse(s.into(), "empty block".into()))
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wide = self.0.iter().any(|&e| e >= 9);
        write_block(f, &self.0, wide)
    }
}

fn write_block(f: &mut fmt::Formatter<'_>, elements: &[usize], wide: bool) -> fmt::Result {
    for (i, e) in elements.iter().enumerate() {
        if wide && i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{}", e + 1)?;
    }
    Ok(())
}

fn parse_block_token(token: &str, whole: &str, numbers: bool) -> Result<Vec<usize>, PartitionError> {
    let err = |msg: &str| PartitionError::Parse(whole.to_string(), msg.to_string());
    let token = token.trim();
    if token.is_empty() {
        return Err(err("empty block"));
    }
    let raw: Vec<usize> = if numbers || token.contains(',') {
        token
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| err("non-numeric element")))
            .collect::<Result<_, _>>()?
    } else {
        token
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(|| err("non-digit element")))
            .collect::<Result<_, _>>()?
    };
    raw.into_iter()
        .map(|e| if e == 0 { Err(err("elements are 1-based")) } else { Ok(e - 1) })
        .collect()
}

/// A set partition of `0..D` in restricted-growth form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    rgs: Vec<usize>,
    n_blocks: usize,
}

impl Partition {
    /// Relabels arbitrary block labels by order of first occurrence.
    pub fn canonicalize<T: Copy + Eq>(labels: &[T]) -> Result<Self, PartitionError> {
        if labels.is_empty() {
            return Err(PartitionError::Empty);
        }
        let mut seen: Vec<T> = Vec::new();
        let rgs = labels
            .iter()
            .map(|l| match seen.iter().position(|s| s == l) {
                Some(i) => i,
                None => {
                    seen.push(*l);
                    seen.len() - 1
                }
            })
            .collect();
        Ok(Partition { rgs, n_blocks: seen.len() })
    }

    /// Canonicalizes dense labels in `0..dim` in O(D).
    pub(crate) fn from_dense_labels(labels: &[usize]) -> Self {
        let size = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut map = vec![usize::MAX; size];
        let mut next = 0;
        let rgs = labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Partition { rgs, n_blocks: next }
    }

    /// Wraps a sequence that is already a valid RGS.
    pub fn from_rgs(rgs: Vec<usize>) -> Result<Self, PartitionError> {
        if rgs.is_empty() {
            return Err(PartitionError::Empty);
        }
        let mut max = None::<usize>;
        for &l in &rgs {
            let limit = max.map_or(0, |m| m + 1);
            if l > limit {
                return Err(PartitionError::Parse(format!("{rgs:?}"), "not a restricted growth string".into()));
            }
            max = Some(max.map_or(l, |m| m.max(l)));
        }
        let n_blocks = max.unwrap() + 1;
        Ok(Partition { rgs, n_blocks })
    }

    pub fn from_blocks(dim: usize, blocks: &[BlockKey]) -> Result<Self, PartitionError> {
        let mut labels = vec![usize::MAX; dim];
        for (k, b) in blocks.iter().enumerate() {
            for &e in b.elements() {
                if e >= dim {
                    return Err(PartitionError::ElementOutOfRange { element: e, dim });
                }
                if labels[e] != usize::MAX {
                    return Err(PartitionError::Parse(format!("{blocks:?}"), format!("element {} repeated", e + 1)));
                }
                labels[e] = k;
            }
        }
        if let Some(e) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(PartitionError::Parse(format!("{blocks:?}"), format!("element {} missing", e + 1)));
        }
        Partition::canonicalize(&labels)
    }

    pub fn single_block(dim: usize) -> Self {
        assert!(dim > 0);
        Partition { rgs: vec![0; dim], n_blocks: 1 }
    }

    pub fn singletons(dim: usize) -> Self {
        assert!(dim > 0);
        Partition { rgs: (0..dim).collect(), n_blocks: dim }
    }

    pub fn dim(&self) -> usize {
        self.rgs.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn rgs(&self) -> &[usize] {
        &self.rgs
    }

    pub fn label(&self, element: usize) -> usize {
        self.rgs[element]
    }

    /// Blocks in label order (equivalently, sorted by smallest element).
    pub fn blocks(&self) -> Vec<BlockKey> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.n_blocks];
        for (e, &l) in self.rgs.iter().enumerate() {
            out[l].push(e);
        }
        out.into_iter().map(BlockKey::from_sorted).collect()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_blocks];
        for &l in &self.rgs {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn has_block(&self, block: &BlockKey) -> bool {
        let Some(&first) = block.elements().first() else { return false };
        if first >= self.dim() || block.elements().last().is_some_and(|&e| e >= self.dim()) {
            return false;
        }
        let l = self.rgs[first];
        block.elements().iter().all(|&e| self.rgs[e] == l)
            && self.rgs.iter().filter(|&&x| x == l).count() == block.len()
    }

    /// True when all elements of `subset` lie in one block.
    pub fn same_block(&self, subset: &[usize]) -> bool {
        match subset.first() {
            None => true,
            Some(&first) => subset.iter().all(|&e| self.rgs[e] == self.rgs[first]),
        }
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.dim() == coarser.dim() && self.blocks().iter().all(|b| coarser.same_block(b.elements()))
    }

    /// Relabels elements: element `e` of the result sits where `perm[e]` sat in `self`.
    pub fn permute(&self, perm: &[usize]) -> Partition {
        assert_eq!(perm.len(), self.dim());
        let labels: Vec<usize> = perm.iter().map(|&src| self.rgs[src]).collect();
        Partition::from_dense_labels(&labels)
    }

    /// Parses `"12|356|4"` (1-based). Elements must be exactly `1..=D`.
    ///
    /// Blocks are read as digit strings; for D >= 10 elements are numbers
    /// separated by commas within a block (`"1,10|2|3,4"`). A bare token
    /// such as `10` is read as a number when the digit reading is invalid.
    pub fn parse(s: &str) -> Result<Self, PartitionError> {
        Partition::parse_mode(s, false).or_else(|first| Partition::parse_mode(s, true).map_err(|_| first))
    }

    fn parse_mode(s: &str, numbers: bool) -> Result<Self, PartitionError> {
        let err = |msg: String| PartitionError::Parse(s.to_string(), msg);
        let mut blocks = Vec::new();
        for token in s.trim().split('|') {
            blocks.push(parse_block_token(token, s, numbers)?);
        }
        let dim: usize = blocks.iter().map(Vec::len).sum();
        let mut labels = vec![usize::MAX; dim];
        for (k, block) in blocks.iter().enumerate() {
            for &e in block {
                if e >= dim {
                    return Err(err(format!("element {} exceeds dimension {dim}", e + 1)));
                }
                if labels[e] != usize::MAX {
                    return Err(err(format!("element {} appears twice", e + 1)));
                }
                labels[e] = k;
            }
        }
        Ok(Partition::from_dense_labels(&labels))
    }

    /// Parses and checks the dimension.
    pub fn parse_with_dim(s: &str, dim: usize) -> Result<Self, PartitionError> {
        let p = Partition::parse(s)?;
        if p.dim() != dim {
            return Err(PartitionError::DimensionMismatch { expected: dim, got: p.dim() });
        }
        Ok(p)
    }

    /// The RGS as a compact string, one label per position (`"0010"`); comma-separated for D > 10 labels.
    pub fn rgs_string(&self) -> String {
        if self.n_blocks <= 10 {
            self.rgs.iter().map(|l| char::from(b'0' + *l as u8)).collect()
        } else {
            self.rgs.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wide = self.dim() >= 10;
        for (k, b) in self.blocks().iter().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            write_block(f, b.elements(), wide)?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Partition::parse(s)
    }
}

/// Number of partitions of a `dim`-set (Bell number), exact for `dim <= 30`.
pub fn bell(dim: usize) -> Result<u128, PartitionError> {
    if dim > MAX_EXACT_DIM {
        return Err(PartitionError::OutOfRange(dim));
    }
    // Bell triangle.
    let mut row = vec![1u128];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for v in &row {
            let prev = *next.last().unwrap();
            next.push(prev + v);
        }
        row = next;
    }
    Ok(row[0])
}

/// Stirling number of the second kind `{a, b}`, exact for `a <= 30`; zero when `b > a`.
pub fn stirling2(a: usize, b: usize) -> Result<u128, PartitionError> {
    if a > MAX_EXACT_DIM {
        return Err(PartitionError::StirlingRange(a, b));
    }
    if b > a {
        return Ok(0);
    }
    let mut row = vec![0u128; b + 1];
    row[0] = 1;
    for n in 1..=a {
        for k in (1..=b.min(n)).rev() {
            row[k] = k as u128 * row[k] + row[k - 1];
        }
        row[0] = 0;
    }
    Ok(row[b])
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Row `dim` of the Stirling triangle in log scale: entry `k` is `ln {dim, k}`.
pub fn ln_stirling2_row(dim: usize) -> Vec<f64> {
    let mut row = vec![f64::NEG_INFINITY; dim + 1];
    row[0] = 0.0;
    for n in 1..=dim {
        for k in (1..=n).rev() {
            row[k] = log_add((k as f64).ln() + row[k], row[k - 1]);
        }
        row[0] = f64::NEG_INFINITY;
    }
    row
}

/// `ln` of the Bell number, valid for any dimension.
pub fn ln_bell(dim: usize) -> f64 {
    if dim <= MAX_EXACT_DIM {
        return (bell(dim).unwrap() as f64).ln();
    }
    ln_stirling2_row(dim).into_iter().fold(f64::NEG_INFINITY, log_add)
}

/// Iterator over all partitions of `0..dim` in lexicographic RGS order.
pub struct PartitionIter {
    current: Option<Vec<usize>>,
    // prefix maxima: max_prefix[i] = max(rgs[0..i])
    max_prefix: Vec<usize>,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let rgs = self.current.as_mut()?;
        let out = Partition::from_dense_labels(rgs);
        let n = rgs.len();
        // Rightmost position that can still be incremented.
        let mut i = n;
        loop {
            if i <= 1 {
                self.current = None;
                break;
            }
            i -= 1;
            if rgs[i] <= self.max_prefix[i] {
                rgs[i] += 1;
                for j in i + 1..n {
                    self.max_prefix[j] = self.max_prefix[j - 1].max(rgs[j - 1]);
                    rgs[j] = 0;
                }
                break;
            }
        }
        Some(out)
    }
}

/// All partitions of `0..dim`, lexicographic on RGS, for `1 <= dim <= 12`.
pub fn enumerate(dim: usize) -> Result<PartitionIter, PartitionError> {
    if dim > MAX_ENUMERATE_DIM {
        return Err(PartitionError::TooLargeToEnumerate(dim));
    }
    if dim == 0 {
        return Err(PartitionError::Empty);
    }
    Ok(PartitionIter { current: Some(vec![0; dim]), max_prefix: vec![0; dim] })
}

/// Exact uniform sampler over partitions of `0..dim` (two-stage urn scheme).
///
/// An urn count `k` is drawn with probability `k^D / (k! e B_D)`; each element
/// then picks an urn uniformly and empty urns are dropped.
#[derive(Debug, Clone)]
pub struct UniformPartitionSampler {
    dim: usize,
    // cumulative urn-count probabilities for k = 1, 2, ...
    cumulative: Vec<f64>,
}

impl UniformPartitionSampler {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let d = dim as f64;
        let ln_norm = 1.0 + ln_bell(dim);
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        let mut ln_fact = 0.0;
        let mut k = 1usize;
        loop {
            ln_fact += (k as f64).ln();
            let p = (d * (k as f64).ln() - ln_fact - ln_norm).exp();
            acc += p;
            cumulative.push(acc);
            // Tail is negligible once past the mode and terms vanish.
            if k > dim && p < 1e-18 {
                break;
            }
            k += 1;
        }
        UniformPartitionSampler { dim, cumulative }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Partition {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let urns = self.cumulative.partition_point(|&c| c <= u) + 1;
        let urns = urns.min(self.cumulative.len());
        let labels: Vec<usize> = (0..self.dim).map(|_| rng.random_range(0..urns)).collect();
        Partition::from_dense_labels(&labels)
    }
}

/// Draws one partition of `0..dim` uniformly at random.
pub fn sample_uniform<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Partition {
    UniformPartitionSampler::new(dim).sample(rng)
}

/// Reassign `element` to every existing block or to a new singleton.
/// The result includes `p` itself and contains no duplicates.
pub fn gibbs_neighbors(p: &Partition, element: usize) -> Vec<Partition> {
    assert!(element < p.dim(), "element out of range");
    let sizes = p.block_sizes();
    let own = p.label(element);
    let mut labels = p.rgs().to_vec();
    let mut out = Vec::with_capacity(p.n_blocks() + 1);
    for target in 0..p.n_blocks() {
        labels[element] = target;
        out.push(Partition::from_dense_labels(&labels));
    }
    if sizes[own] > 1 {
        labels[element] = p.n_blocks();
        out.push(Partition::from_dense_labels(&labels));
    }
    out
}

/// Every partition obtained by merging one pair of blocks: K(K-1)/2 items.
pub fn merge_neighbors(p: &Partition) -> Vec<Partition> {
    let k = p.n_blocks();
    let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let labels: Vec<usize> = p.rgs().iter().map(|&l| if l == b { a } else { l }).collect();
            out.push(Partition::from_dense_labels(&labels));
        }
    }
    out
}

/// Calls `f(first, second)` for each two-block division of `block`.
///
/// The smallest element always stays in `first`; the remaining `s-1`
/// elements are distributed by a nonzero bit mask, so each of the
/// `2^(s-1) - 1` divisions is produced exactly once.
pub fn for_each_division(block: &[usize], mut f: impl FnMut(&[usize], &[usize])) {
    let s = block.len();
    if s < 2 {
        return;
    }
    assert!(s <= 64, "block too large to divide");
    let rest = &block[1..];
    let n_masks: u64 = if s - 1 == 64 { u64::MAX } else { (1u64 << (s - 1)) - 1 };
    let mut first = Vec::with_capacity(s);
    let mut second = Vec::with_capacity(s);
    for mask in 1..=n_masks {
        first.clear();
        second.clear();
        first.push(block[0]);
        for (i, &e) in rest.iter().enumerate() {
            if mask >> i & 1 == 1 {
                second.push(e);
            } else {
                first.push(e);
            }
        }
        f(&first, &second);
    }
}

/// Number of two-block divisions of a block of `size` elements.
pub fn division_count(size: usize) -> u128 {
    if size < 2 {
        0
    } else {
        (1u128 << (size - 1)) - 1
    }
}

/// Size of the merge plus split neighborhood (current state excluded).
pub fn shc_neighborhood_size(p: &Partition) -> u128 {
    let k = p.n_blocks() as u128;
    k * k.saturating_sub(1) / 2 + p.block_sizes().into_iter().map(division_count).sum::<u128>()
}

/// Every partition obtained by dividing one block into two.
pub fn split_neighbors(p: &Partition) -> Vec<Partition> {
    let mut out = Vec::new();
    let new_label = p.n_blocks();
    for block in p.blocks() {
        for_each_division(block.elements(), |_, second| {
            let mut labels = p.rgs().to_vec();
            for &e in second {
                labels[e] = new_label;
            }
            out.push(Partition::from_dense_labels(&labels));
        });
    }
    out
}

/// Prior probability of each block count K = 1..=D under the uniform prior on partitions.
pub fn block_count_prior(dim: usize) -> Vec<f64> {
    assert!(dim >= 1);
    let row = ln_stirling2_row(dim);
    let ln_b = ln_bell(dim);
    (1..=dim).map(|k| (row[k] - ln_b).exp()).collect()
}
