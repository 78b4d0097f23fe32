//! Single-sequence moves. Candidate scores are computed as differences over
//! the few blocks a move touches, so a step costs O(K) block lookups.

use rand::seq::SliceRandom;
use rand::Rng;

use super::cache::ChainCache;
use super::{ChainCounters, SamplerError, ShcMode};
use crate::models::BlockScorer;
use crate::numeric::sample_log_categorical;
use crate::partition::{division_count, shc_neighborhood_size, BlockKey, Partition};

/// Current state of one tempering sequence with its cached block scores.
#[derive(Debug, Clone)]
pub(crate) struct Sequence {
    pub part: Partition,
    blocks: Vec<BlockKey>,
    block_scores: Vec<f64>,
    prior: f64,
    pub total: f64,
}

pub(crate) struct Ctx<'a, S: ?Sized> {
    pub scorer: &'a S,
    pub cache: ChainCache<'a>,
    pub counters: ChainCounters,
    pub max_candidates: u128,
    has_prior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ShcMove {
    Stay,
    Merge(usize, usize),
    /// Block label and division mask over the block's non-minimal elements.
    Split(usize, u64),
}

impl<'a, S: BlockScorer + ?Sized> Ctx<'a, S> {
    pub fn new(scorer: &'a S, cache: ChainCache<'a>, max_candidates: u128) -> Self {
        Ctx { scorer, cache, counters: ChainCounters::default(), max_candidates, has_prior: scorer.has_log_prior() }
    }

    /// `Ok(None)` for numerical failures and non-finite scores.
    fn score(&mut self, elements: Vec<usize>) -> Result<Option<f64>, SamplerError> {
        let key = BlockKey::from_sorted(elements);
        match self.cache.get(&key, self.scorer) {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            Ok(_) => Ok(None),
            Err(e) if e.is_numerical() => Ok(None),
            Err(e) => Err(SamplerError::Scorer { context: format!("block {key}"), source: e }),
        }
    }

    /// Scores a full state; `Ok(None)` if any block fails.
    pub fn sequence(&mut self, part: Partition) -> Result<Option<Sequence>, SamplerError> {
        let blocks = part.blocks();
        let mut block_scores = Vec::with_capacity(blocks.len());
        for b in &blocks {
            match self.score(b.elements().to_vec())? {
                Some(v) => block_scores.push(v),
                None => return Ok(None),
            }
        }
        let prior = self.scorer.log_prior(&part);
        if !prior.is_finite() {
            return Ok(None);
        }
        let total = prior + block_scores.iter().sum::<f64>();
        Ok(Some(Sequence { part, blocks, block_scores, prior, total }))
    }

    fn rescore(&mut self, part: Partition) -> Result<Sequence, SamplerError> {
        // Moves only ever land on states whose blocks scored finitely.
        let ctx = part.to_string();
        self.sequence(part)?
            .ok_or_else(|| SamplerError::Internal(format!("accepted state {ctx} no longer scores finitely")))
    }

    fn prior_delta(&self, seq: &Sequence, labels: &[usize]) -> f64 {
        if self.has_prior {
            self.scorer.log_prior(&Partition::from_dense_labels(labels)) - seq.prior
        } else {
            0.0
        }
    }

    /// Full-conditional update of every element, ascending or in random order.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &mut self,
        seq: &mut Sequence,
        temperature: f64,
        random_scan: bool,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        let mut order: Vec<usize> = (0..seq.part.dim()).collect();
        if random_scan {
            order.shuffle(rng);
        }
        for d in order {
            self.gibbs_element(seq, d, temperature, rng)?;
        }
        self.counters.gibbs_sweeps += 1;
        Ok(())
    }

    fn gibbs_element<R: Rng + ?Sized>(&mut self, seq: &mut Sequence, d: usize, temperature: f64, rng: &mut R) -> Result<(), SamplerError> {
        let k = seq.blocks.len();
        let a = seq.part.label(d);
        let rest: Vec<usize> = seq.blocks[a].elements().iter().copied().filter(|&e| e != d).collect();
        let rest_empty = rest.is_empty();
        let s_rest = if rest_empty { Some(0.0) } else { self.score(rest)? };
        let base = seq.total - seq.block_scores[a];

        // targets: 0..k join block b (b == a is "stay"), k = new singleton
        let mut targets = Vec::with_capacity(k + 1);
        let mut log_w = Vec::with_capacity(k + 1);
        let mut labels = seq.part.rgs().to_vec();
        for b in 0..k {
            let total = if b == a {
                Some(seq.total)
            } else {
                match s_rest {
                    None => None,
                    Some(sr) => {
                        let joined = insert_sorted(seq.blocks[b].elements(), d);
                        self.score(joined)?.map(|sj| {
                            labels[d] = b;
                            let t = base - seq.block_scores[b] + sr + sj + self.prior_delta(seq, &labels);
                            labels[d] = a;
                            t
                        })
                    }
                }
            };
            match total {
                Some(t) => {
                    targets.push(b);
                    log_w.push(t / temperature);
                }
                None => self.counters.removals += 1,
            }
        }
        if !rest_empty {
            let total = match s_rest {
                None => None,
                Some(sr) => self.score(vec![d])?.map(|sd| {
                    labels[d] = k;
                    let t = base + sr + sd + self.prior_delta(seq, &labels);
                    labels[d] = a;
                    t
                }),
            };
            match total {
                Some(t) => {
                    targets.push(k);
                    log_w.push(t / temperature);
                }
                None => self.counters.removals += 1,
            }
        }
        let pick = targets[sample_log_categorical(&log_w, rng).expect("current state is always a finite candidate")];
        if pick != a {
            labels[d] = pick;
            *seq = self.rescore(Partition::from_dense_labels(&labels))?;
        }
        Ok(())
    }

    #[cfg(test)]
    pub fn gibbs_element_for_test<R: Rng + ?Sized>(&mut self, seq: &mut Sequence, d: usize, temperature: f64, rng: &mut R) {
        self.gibbs_element(seq, d, temperature, rng).unwrap();
    }

    /// Tempered log score of a merge or split, or `None` if a block fails.
    fn shc_total(&mut self, seq: &Sequence, mv: ShcMove) -> Result<Option<f64>, SamplerError> {
        let t = match mv {
            ShcMove::Stay => return Ok(Some(seq.total)),
            ShcMove::Merge(a, b) => {
                let merged = merge_sorted(seq.blocks[a].elements(), seq.blocks[b].elements());
                self.score(merged)?.map(|s| seq.total - seq.block_scores[a] - seq.block_scores[b] + s)
            }
            ShcMove::Split(a, mask) => {
                let (first, second) = divide(seq.blocks[a].elements(), mask);
                match self.score(first)? {
                    None => None,
                    Some(s1) => self.score(second)?.map(|s2| seq.total - seq.block_scores[a] + s1 + s2),
                }
            }
        };
        Ok(t.map(|t| if self.has_prior { t + self.prior_delta(seq, &apply(seq, mv)) } else { t }))
    }

    pub fn shc_step<R: Rng + ?Sized>(
        &mut self,
        seq: &mut Sequence,
        temperature: f64,
        mode: ShcMode,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        self.counters.shc_steps += 1;
        let n = shc_neighborhood_size(&seq.part);
        if n == 0 {
            return Ok(());
        }
        match mode {
            ShcMode::Exhaustive => {
                if n + 1 > self.max_candidates {
                    return Err(SamplerError::ResourceLimit { candidates: n + 1, limit: self.max_candidates });
                }
                let moves = shc_moves(&seq.blocks);
                let mut kept = Vec::with_capacity(moves.len());
                let mut log_w = Vec::with_capacity(moves.len());
                for mv in moves {
                    match self.shc_total(seq, mv)? {
                        Some(t) => {
                            kept.push(mv);
                            log_w.push(t / temperature);
                        }
                        None => self.counters.removals += 1,
                    }
                }
                let mv = kept[sample_log_categorical(&log_w, rng).expect("current state is always a finite candidate")];
                if mv != ShcMove::Stay {
                    self.counters.shc_moves += 1;
                    *seq = self.rescore(Partition::from_dense_labels(&apply(seq, mv)))?;
                }
            }
            ShcMode::Metropolized => {
                let idx = rng.random_range(0..n);
                let u: f64 = rng.random();
                let mv = decode_move(&seq.blocks, idx);
                self.counters.shc_proposals += 1;
                let Some(t) = self.shc_total(seq, mv)? else {
                    self.counters.removals += 1;
                    return Ok(());
                };
                let q = Partition::from_dense_labels(&apply(seq, mv));
                let n_q = shc_neighborhood_size(&q);
                let log_accept = (t - seq.total) / temperature + (n as f64).ln() - (n_q as f64).ln();
                if log_accept >= 0.0 || u.ln() < log_accept {
                    self.counters.shc_moves += 1;
                    *seq = self.rescore(q)?;
                }
            }
        }
        Ok(())
    }
}

fn insert_sorted(block: &[usize], d: usize) -> Vec<usize> {
    let pos = block.partition_point(|&e| e < d);
    let mut v = Vec::with_capacity(block.len() + 1);
    v.extend_from_slice(&block[..pos]);
    v.push(d);
    v.extend_from_slice(&block[pos..]);
    v
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v.sort_unstable();
    v
}

/// The minimum stays in the first part; set mask bits move the matching
/// non-minimal elements to the second part.
pub(crate) fn divide(block: &[usize], mask: u64) -> (Vec<usize>, Vec<usize>) {
    let mut first = vec![block[0]];
    let mut second = Vec::new();
    for (i, &e) in block[1..].iter().enumerate() {
        if mask >> i & 1 == 1 {
            second.push(e);
        } else {
            first.push(e);
        }
    }
    (first, second)
}

/// Labels after applying `mv` (not canonical).
fn apply(seq: &Sequence, mv: ShcMove) -> Vec<usize> {
    let mut labels = seq.part.rgs().to_vec();
    match mv {
        ShcMove::Stay => {}
        ShcMove::Merge(a, b) => {
            for l in labels.iter_mut().filter(|l| **l == b) {
                *l = a;
            }
        }
        ShcMove::Split(a, mask) => {
            let k = seq.blocks.len();
            for e in divide(seq.blocks[a].elements(), mask).1 {
                labels[e] = k;
            }
        }
    }
    labels
}

/// Stay, then all merges `(a, b)` with `a < b`, then all splits block by block.
pub(crate) fn shc_moves(blocks: &[BlockKey]) -> Vec<ShcMove> {
    let k = blocks.len();
    let mut moves = vec![ShcMove::Stay];
    for a in 0..k {
        for b in a + 1..k {
            moves.push(ShcMove::Merge(a, b));
        }
    }
    for (a, block) in blocks.iter().enumerate() {
        for mask in 1..=division_count(block.len()) as u64 {
            moves.push(ShcMove::Split(a, mask));
        }
    }
    moves
}

/// The `idx`-th non-stay move in [`shc_moves`] order, without enumerating.
pub(crate) fn decode_move(blocks: &[BlockKey], mut idx: u128) -> ShcMove {
    let k = blocks.len();
    for a in 0..k {
        let row = (k - a - 1) as u128;
        if idx < row {
            return ShcMove::Merge(a, a + 1 + idx as usize);
        }
        idx -= row;
    }
    for (a, block) in blocks.iter().enumerate() {
        let c = division_count(block.len());
        if idx < c {
            return ShcMove::Split(a, idx as u64 + 1);
        }
        idx -= c;
    }
    unreachable!("move index beyond neighborhood size")
}

/// The partitions reachable by one 2-way move, current state first.
pub fn twoway_shc_candidates(p: &Partition) -> Vec<Partition> {
    let blocks = p.blocks();
    let seq = Sequence { part: p.clone(), block_scores: vec![0.0; blocks.len()], blocks, prior: 0.0, total: 0.0 };
    shc_moves(&seq.blocks).into_iter().map(|mv| Partition::from_dense_labels(&apply(&seq, mv))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{merge_neighbors, split_neighbors};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn candidate_set_matches_neighborhoods() {
        let p = Partition::parse("12|356|4").unwrap();
        let c = twoway_shc_candidates(&p);
        assert_eq!(c.len(), 8);
        assert_eq!(c[0], p);
        let mut expected: Vec<Partition> = merge_neighbors(&p).into_iter().chain(split_neighbors(&p)).collect();
        expected.sort();
        let mut got = c[1..].to_vec();
        got.sort();
        assert_eq!(got, expected);

        let singletons = Partition::singletons(4);
        let c = twoway_shc_candidates(&singletons);
        assert_eq!(c.len(), 1 + 6);
        assert!(c[1..].iter().all(|q| q.n_blocks() == 3));
    }

    #[test]
    fn candidate_counts_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..200 {
            let p = crate::partition::sample_uniform(7, &mut rng);
            let k = p.n_blocks() as u128;
            let expected = 1 + k * (k - 1) / 2 + p.block_sizes().iter().map(|&s| (1u128 << (s - 1)) - 1).sum::<u128>();
            let c = twoway_shc_candidates(&p);
            assert_eq!(c.len() as u128, expected);
            let mut dedup = c.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), c.len());
        }
    }

    #[test]
    fn decode_agrees_with_enumeration() {
        let p = Partition::parse("124|35|6|7").unwrap();
        let blocks = p.blocks();
        let moves = shc_moves(&blocks);
        for (i, mv) in moves[1..].iter().enumerate() {
            assert_eq!(decode_move(&blocks, i as u128), *mv);
        }
    }
}
