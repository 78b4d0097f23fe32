//! MCMC over partitions: importance-resampled starts, Gibbs sweeps,
//! 2-way merge/split moves and parallel tempering.

mod cache;
mod moves;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{BlockScoreCache, CacheStats, SharedBlockCache};
pub use moves::twoway_shc_candidates;

use crate::exact::{ExactError, PosteriorMode, PosteriorTable};
use crate::models::{BlockScorer, ModelError};
use crate::numeric::sample_log_categorical;
use crate::partition::{Partition, UniformPartitionSampler};
use cache::ChainCache;
use moves::{Ctx, Sequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("2-way neighborhood has {candidates} candidates, above the limit of {limit}; use metropolized mode or raise the limit")]
    ResourceLimit { candidates: u128, limit: u128 },
    #[error("scoring {context} failed: {source}")]
    Scorer { context: String, source: ModelError },
    #[error("none of the initial draws has a finite score")]
    NoValidStart,
    #[error("chain {chain}, step {step}: {source}")]
    Chain { chain: usize, step: usize, source: Box<SamplerError> },
    #[error("no retained samples")]
    EmptyTrace,
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// How 2-way moves pick the next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShcMode {
    /// Tempered softmax over the current state and all merge/split neighbors.
    #[default]
    Exhaustive,
    /// Uniform neighbor proposal with a Hastings correction for neighborhood size.
    Metropolized,
}

impl FromStr for ShcMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exhaustive" => Ok(ShcMode::Exhaustive),
            "metropolized" => Ok(ShcMode::Metropolized),
            _ => Err(format!("unknown 2wSHC mode {s:?} (expected exhaustive or metropolized)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    #[default]
    ChainLocal,
    Shared,
    Disabled,
}

impl FromStr for CacheMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chain-local" | "local" => Ok(CacheMode::ChainLocal),
            "shared" => Ok(CacheMode::Shared),
            "disabled" | "off" | "none" => Ok(CacheMode::Disabled),
            _ => Err(format!("unknown cache mode {s:?} (expected chain-local, shared or disabled)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CacheConfig {
    pub mode: CacheMode,
    /// Maximum number of cached blocks; `None` for unbounded.
    pub capacity: Option<usize>,
    /// Recompute every n-th hit and compare; 0 disables.
    pub audit_every: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig { mode: CacheMode::ChainLocal, capacity: None, audit_every: 0 }
    }
}

/// Named sampling families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "gibbs")]
    Gibbs,
    #[serde(rename = "2wshc")]
    Shc,
    #[serde(rename = "gibbs+2wshc")]
    GibbsShc,
    #[serde(rename = "gibbs+pt")]
    GibbsPt,
    #[serde(rename = "2wshc+pt")]
    ShcPt,
    #[serde(rename = "gibbs+2wshc+pt")]
    GibbsShcPt,
}

impl Preset {
    pub const ALL: [Preset; 6] = [Preset::Gibbs, Preset::Shc, Preset::GibbsShc, Preset::GibbsPt, Preset::ShcPt, Preset::GibbsShcPt];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Gibbs => "gibbs",
            Preset::Shc => "2wshc",
            Preset::GibbsShc => "gibbs+2wshc",
            Preset::GibbsPt => "gibbs+pt",
            Preset::ShcPt => "2wshc+pt",
            Preset::GibbsShcPt => "gibbs+2wshc+pt",
        }
    }

    /// `(L, alpha1, alpha2)`.
    pub fn parameters(self) -> (usize, f64, f64) {
        match self {
            Preset::Gibbs => (1, 0.0, 1.0),
            Preset::Shc => (1, 0.0, 0.0),
            Preset::GibbsShc => (1, 0.0, 0.5),
            Preset::GibbsPt => (7, 0.5, 0.5),
            Preset::ShcPt => (7, 0.5, 0.0),
            Preset::GibbsShcPt => (7, 0.5, 0.4),
        }
    }

    pub fn uses_shc(self) -> bool {
        let (_, a1, a2) = self.parameters();
        a1 + a2 < 1.0
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('_', "+");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| format!("unknown preset {s:?} (expected one of gibbs, 2wshc, gibbs+2wshc, gibbs+pt, 2wshc+pt, gibbs+2wshc+pt)"))
    }
}

/// Geometric ladder `T_l = r^(l-1)` ending at `t_max`.
pub fn geometric_ladder(levels: usize, t_max: f64) -> Vec<f64> {
    if levels <= 1 {
        return vec![1.0];
    }
    let r = t_max.powf(1.0 / (levels - 1) as f64);
    (0..levels).map(|l| r.powi(l as i32)).collect()
}

pub const DEFAULT_T_MAX: f64 = 32.0;
pub const DEFAULT_MAX_CANDIDATES: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Uniform draws for importance resampling.
    pub m: usize,
    /// Independent chains.
    pub c: usize,
    /// Recorded states per chain (the start plus `j - 1` steps).
    pub j: usize,
    pub temperatures: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub shc_mode: ShcMode,
    pub random_scan: bool,
    pub cache: CacheConfig,
    /// Upper bound on the 2-way candidate set in exhaustive mode.
    pub max_candidates: u128,
}

impl SamplerConfig {
    pub fn preset(preset: Preset) -> Self {
        let (l, alpha1, alpha2) = preset.parameters();
        SamplerConfig {
            m: 1000,
            c: 4,
            j: 10_000,
            temperatures: geometric_ladder(l, DEFAULT_T_MAX),
            alpha1,
            alpha2,
            burn_in_fraction: 0.5,
            seed: 0,
            shc_mode: ShcMode::Exhaustive,
            random_scan: false,
            cache: CacheConfig::default(),
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }

    pub fn levels(&self) -> usize {
        self.temperatures.len()
    }

    pub fn burn_in(&self) -> usize {
        (self.j as f64 * self.burn_in_fraction).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidConfig(m));
        if self.c == 0 {
            return bad("need at least one chain".into());
        }
        if self.m < self.c {
            return bad(format!("M = {} initial draws cannot seed C = {} chains", self.m, self.c));
        }
        if self.j < 2 {
            return bad(format!("J = {} is too short; need J >= 2", self.j));
        }
        let t = &self.temperatures;
        if t.is_empty() || t[0] != 1.0 {
            return bad("the first temperature must be 1".into());
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|x| !x.is_finite()) {
            return bad("temperatures must be finite and strictly increasing".into());
        }
        if !(0.0..1.0).contains(&self.alpha1) {
            return bad(format!("alpha1 = {} must lie in [0, 1)", self.alpha1));
        }
        if !(self.alpha2 >= 0.0 && self.alpha1 + self.alpha2 <= 1.0 + 1e-12) {
            return bad(format!("alpha2 = {} must lie in [0, 1 - alpha1]", self.alpha2));
        }
        if self.alpha1 > 0.0 && t.len() < 2 {
            return bad("swap steps (alpha1 > 0) need at least two temperatures".into());
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad(format!("burn-in fraction {} must lie in [0, 1)", self.burn_in_fraction));
        }
        if self.max_candidates == 0 {
            return bad("candidate limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCounters {
    pub gibbs_steps: u64,
    pub gibbs_sweeps: u64,
    pub shc_steps: u64,
    pub shc_proposals: u64,
    /// 2-way steps that changed the state.
    pub shc_moves: u64,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
    /// Candidates dropped because a block failed to score.
    pub removals: u64,
}

impl ChainCounters {
    pub fn merge(&mut self, o: &ChainCounters) {
        self.gibbs_steps += o.gibbs_steps;
        self.gibbs_sweeps += o.gibbs_sweeps;
        self.shc_steps += o.shc_steps;
        self.shc_proposals += o.shc_proposals;
        self.shc_moves += o.shc_moves;
        self.swap_attempts += o.swap_attempts;
        self.swap_accepts += o.swap_accepts;
        self.removals += o.removals;
    }

    pub fn swap_rate(&self) -> Option<f64> {
        (self.swap_attempts > 0).then(|| self.swap_accepts as f64 / self.swap_attempts as f64)
    }

    pub fn shc_move_rate(&self) -> Option<f64> {
        (self.shc_steps > 0).then(|| self.shc_moves as f64 / self.shc_steps as f64)
    }
}

/// The T = 1 trace of one chain, stored as indices into its visited states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainTrace {
    pub states: Vec<Partition>,
    pub trace: Vec<u32>,
    pub counters: ChainCounters,
    pub cache: CacheStats,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

impl ChainTrace {
    pub fn state(&self, step: usize) -> &Partition {
        &self.states[self.trace[step] as usize]
    }

    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    /// Visit counts over `trace[range]`, in order of first appearance.
    pub fn counts(&self, range: std::ops::Range<usize>) -> Vec<(Partition, u64)> {
        let mut counts = vec![0u64; self.states.len()];
        let mut order = Vec::new();
        for &id in &self.trace[range] {
            if counts[id as usize] == 0 {
                order.push(id);
            }
            counts[id as usize] += 1;
        }
        order.into_iter().map(|id| (self.states[id as usize].clone(), counts[id as usize])).collect()
    }

    /// One RGS string per step.
    pub fn to_rgs_lines(&self) -> String {
        let rgs: Vec<String> = self.states.iter().map(|p| p.rgs_string()).collect();
        let mut out = String::with_capacity(self.trace.len() * (rgs.first().map_or(1, |s| s.len()) + 1));
        for &id in &self.trace {
            out.push_str(&rgs[id as usize]);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSet {
    pub dim: usize,
    pub config: SamplerConfig,
    pub chains: Vec<ChainTrace>,
}

impl ChainSet {
    /// First retained index of a trace of length `len`.
    pub fn burn_in_for(&self, len: usize) -> usize {
        (len as f64 * self.config.burn_in_fraction).floor() as usize
    }

    /// Retained visit counts per chain, using the second part of the first `prefix` states.
    pub fn chain_counts(&self, prefix: Option<usize>) -> Vec<Vec<(Partition, u64)>> {
        self.chains
            .iter()
            .map(|ch| {
                let end = prefix.map_or(ch.len(), |p| p.min(ch.len()));
                ch.counts(self.burn_in_for(end)..end)
            })
            .collect()
    }

    /// Pooled post-burn-in frequencies as a sampled posterior table.
    pub fn estimate(&self) -> Result<PosteriorTable, SamplerError> {
        self.estimate_prefix(None)
    }

    pub fn estimate_prefix(&self, prefix: Option<usize>) -> Result<PosteriorTable, SamplerError> {
        let entries: Vec<(Partition, f64)> =
            self.chain_counts(prefix).into_iter().flatten().map(|(p, c)| (p, c as f64)).collect();
        if entries.is_empty() {
            return Err(SamplerError::EmptyTrace);
        }
        Ok(PosteriorTable::from_weights(self.dim, PosteriorMode::Sampled, entries)?)
    }

    pub fn counters(&self) -> ChainCounters {
        let mut total = ChainCounters::default();
        for ch in &self.chains {
            total.merge(&ch.counters);
        }
        total
    }

    pub fn cache_stats(&self) -> CacheStats {
        let mut total = CacheStats::default();
        for ch in &self.chains {
            total.merge(&ch.cache);
        }
        total
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn score_state<S: BlockScorer + ?Sized>(scorer: &S, cache: &mut BlockScoreCache, p: &Partition) -> Result<f64, SamplerError> {
    let mut total = scorer.log_prior(p);
    for b in p.blocks() {
        match cache.get(&b, scorer) {
            Ok(v) => total += v,
            Err(e) if e.is_numerical() => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(SamplerError::Scorer { context: format!("initial state {p}"), source: e }),
        }
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

/// Draws `m` uniform partitions, merges duplicates, and resamples `c` distinct
/// states without replacement with probability proportional to `exp(score)`.
///
/// Duplicates are refilled with fresh uniform draws. When fewer than `c`
/// distinct finitely-scored states exist, the remaining starts are drawn
/// with replacement.
pub fn init_chains<S: BlockScorer + ?Sized, R: Rng + ?Sized>(
    m: usize,
    c: usize,
    scorer: &S,
    rng: &mut R,
) -> Result<Vec<Partition>, SamplerError> {
    if c == 0 || m < c {
        return Err(SamplerError::InvalidConfig(format!("M = {m} initial draws cannot seed C = {c} chains")));
    }
    let dim = scorer.dim();
    let uniform = UniformPartitionSampler::new(dim);
    let mut cache = BlockScoreCache::unbounded();
    let mut pool: Vec<Partition> = Vec::with_capacity(m);
    let mut seen: HashMap<Partition, ()> = HashMap::with_capacity(m);
    let mut draws = 0usize;
    let max_draws = m.saturating_mul(20);
    while pool.len() < m && draws < max_draws {
        let p = uniform.sample(rng);
        draws += 1;
        if seen.insert(p.clone(), ()).is_none() {
            pool.push(p);
        }
        // small spaces cannot supply m distinct states; stop once duplicates dominate
        if draws >= m && pool.len() >= c && draws > 4 * pool.len() {
            break;
        }
    }
    let mut log_w = Vec::with_capacity(pool.len());
    for p in &pool {
        log_w.push(score_state(scorer, &mut cache, p)?);
    }
    let finite = log_w.iter().filter(|w| w.is_finite()).count();
    if finite == 0 {
        return Err(SamplerError::NoValidStart);
    }
    let mut starts = Vec::with_capacity(c);
    let mut remaining = log_w.clone();
    for _ in 0..c.min(finite) {
        let i = sample_log_categorical(&remaining, rng).ok_or(SamplerError::NoValidStart)?;
        starts.push(pool[i].clone());
        remaining[i] = f64::NEG_INFINITY;
    }
    while starts.len() < c {
        let i = sample_log_categorical(&log_w, rng).ok_or(SamplerError::NoValidStart)?;
        starts.push(pool[i].clone());
    }
    Ok(starts)
}

/// Metropolis swap between a random adjacent pair of temperatures.
fn pt_swap_inner<R: Rng + ?Sized>(seqs: &mut [Sequence], temperatures: &[f64], counters: &mut ChainCounters, rng: &mut R) {
    let l = seqs.len();
    if l < 2 {
        return;
    }
    let l0 = rng.random_range(0..l - 1);
    let u: f64 = rng.random();
    counters.swap_attempts += 1;
    let log_accept = (seqs[l0 + 1].total - seqs[l0].total) * (1.0 / temperatures[l0] - 1.0 / temperatures[l0 + 1]);
    if log_accept >= 0.0 || u.ln() < log_accept {
        seqs.swap(l0, l0 + 1);
        counters.swap_accepts += 1;
    }
}

/// Acceptance probability of exchanging states scored `lower` (at `t_lower`)
/// and `upper` (at `t_upper`).
pub fn swap_acceptance(lower: f64, upper: f64, t_lower: f64, t_upper: f64) -> f64 {
    ((upper - lower) * (1.0 / t_lower - 1.0 / t_upper)).exp().min(1.0)
}

fn start_sequence<S: BlockScorer + ?Sized>(ctx: &mut Ctx<'_, S>, p: &Partition) -> Result<Sequence, SamplerError> {
    ctx.sequence(p.clone())?.ok_or_else(|| SamplerError::Internal(format!("state {p} does not score finitely")))
}

/// One Gibbs sweep at `temperature` (ascending element order).
pub fn gibbs_sweep<S: BlockScorer + ?Sized, R: Rng + ?Sized>(
    state: &Partition,
    scorer: &S,
    temperature: f64,
    rng: &mut R,
) -> Result<Partition, SamplerError> {
    let mut ctx = Ctx::new(scorer, ChainCache::Disabled(CacheStats::default()), DEFAULT_MAX_CANDIDATES);
    let mut seq = start_sequence(&mut ctx, state)?;
    ctx.gibbs_sweep(&mut seq, temperature, false, rng)?;
    Ok(seq.part)
}

/// One 2-way merge/split step at `temperature`.
pub fn twoway_shc_step<S: BlockScorer + ?Sized, R: Rng + ?Sized>(
    state: &Partition,
    scorer: &S,
    temperature: f64,
    mode: ShcMode,
    rng: &mut R,
) -> Result<Partition, SamplerError> {
    let mut ctx = Ctx::new(scorer, ChainCache::Disabled(CacheStats::default()), DEFAULT_MAX_CANDIDATES);
    let mut seq = start_sequence(&mut ctx, state)?;
    ctx.shc_step(&mut seq, temperature, mode, rng)?;
    Ok(seq.part)
}

/// One swap attempt over a ladder of states; returns the new states.
pub fn pt_swap<S: BlockScorer + ?Sized, R: Rng + ?Sized>(
    states: &[Partition],
    scorer: &S,
    temperatures: &[f64],
    rng: &mut R,
) -> Result<Vec<Partition>, SamplerError> {
    if states.len() != temperatures.len() {
        return Err(SamplerError::InvalidConfig("one state per temperature required".into()));
    }
    let mut ctx = Ctx::new(scorer, ChainCache::Disabled(CacheStats::default()), DEFAULT_MAX_CANDIDATES);
    let mut seqs = states.iter().map(|p| start_sequence(&mut ctx, p)).collect::<Result<Vec<_>, _>>()?;
    let mut counters = ChainCounters::default();
    pt_swap_inner(&mut seqs, temperatures, &mut counters, rng);
    Ok(seqs.into_iter().map(|s| s.part).collect())
}

fn run_chain<S: BlockScorer + ?Sized>(
    cfg: &SamplerConfig,
    scorer: &S,
    start: &Partition,
    chain: usize,
    shared: Option<&SharedBlockCache>,
) -> Result<ChainTrace, SamplerError> {
    let began = Instant::now();
    let mut rng = chain_rng(cfg.seed, chain);
    let cache = match (cfg.cache.mode, shared) {
        (CacheMode::Disabled, _) => ChainCache::Disabled(CacheStats::default()),
        (CacheMode::Shared, Some(s)) => ChainCache::Shared(s, CacheStats::default()),
        _ => ChainCache::Local(BlockScoreCache::new(cfg.cache.capacity, cfg.cache.audit_every)),
    };
    let mut ctx = Ctx::new(scorer, cache, cfg.max_candidates);
    let wrap = |step: usize| move |e: SamplerError| SamplerError::Chain { chain, step, source: Box::new(e) };
    let first = start_sequence(&mut ctx, start).map_err(wrap(0))?;
    let mut seqs = vec![first; cfg.levels()];

    let mut states = vec![start.clone()];
    let mut ids: HashMap<Partition, u32> = HashMap::from([(start.clone(), 0)]);
    let mut trace = Vec::with_capacity(cfg.j);
    trace.push(0u32);

    for step in 1..cfg.j {
        let u: f64 = rng.random();
        if u < cfg.alpha1 {
            pt_swap_inner(&mut seqs, &cfg.temperatures, &mut ctx.counters, &mut rng);
        } else if u < cfg.alpha1 + cfg.alpha2 {
            ctx.counters.gibbs_steps += 1;
            for (seq, &t) in seqs.iter_mut().zip(&cfg.temperatures) {
                ctx.gibbs_sweep(seq, t, cfg.random_scan, &mut rng).map_err(wrap(step))?;
            }
        } else {
            for (seq, &t) in seqs.iter_mut().zip(&cfg.temperatures) {
                ctx.shc_step(seq, t, cfg.shc_mode, &mut rng).map_err(wrap(step))?;
            }
        }
        let current = &seqs[0].part;
        let id = match ids.get(current) {
            Some(&id) => id,
            None => {
                let id = states.len() as u32;
                ids.insert(current.clone(), id);
                states.push(current.clone());
                id
            }
        };
        trace.push(id);
    }
    Ok(ChainTrace {
        states,
        trace,
        counters: ctx.counters,
        cache: ctx.cache.stats(),
        elapsed_secs: began.elapsed().as_secs_f64(),
    })
}

/// Runs all chains in parallel. Results depend only on the configuration
/// (including the seed), not on thread scheduling.
pub fn run<S: BlockScorer + ?Sized>(cfg: &SamplerConfig, scorer: &S) -> Result<ChainSet, SamplerError> {
    cfg.validate()?;
    let starts = init_chains(cfg.m, cfg.c, scorer, &mut init_rng(cfg.seed))?;
    run_from(cfg, scorer, &starts)
}

/// Runs chains from given starting states (one per chain).
pub fn run_from<S: BlockScorer + ?Sized>(cfg: &SamplerConfig, scorer: &S, starts: &[Partition]) -> Result<ChainSet, SamplerError> {
    cfg.validate()?;
    if starts.len() != cfg.c {
        return Err(SamplerError::InvalidConfig(format!("{} starting states for {} chains", starts.len(), cfg.c)));
    }
    let shared = (cfg.cache.mode == CacheMode::Shared).then(|| SharedBlockCache::new(cfg.cache.capacity));
    let chains = starts
        .par_iter()
        .enumerate()
        .map(|(c, start)| run_chain(cfg, scorer, start, c, shared.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChainSet { dim: scorer.dim(), config: cfg.clone(), chains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_posterior;
    use crate::models::{GaussianSuffStats, ModelScorer};
    use crate::partition::BlockKey;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn small_config(preset: Preset, j: usize) -> SamplerConfig {
        SamplerConfig { m: 50, c: 2, j, seed: 11, ..SamplerConfig::preset(preset) }
    }

    fn toy_scorer(n: usize, seed: u64) -> ModelScorer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, 5, |_, _| rng.random::<f64>() - 0.5);
        let mix = DMatrix::from_row_slice(
            5,
            5,
            &[1.0, 0.7, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        );
        ModelScorer::bayes_optim(GaussianSuffStats::from_data(&(z * mix), None).unwrap()).unwrap()
    }

    #[test]
    fn presets_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            let cfg = SamplerConfig::preset(p);
            cfg.validate().unwrap();
            assert_eq!(cfg.levels(), p.parameters().0);
        }
        assert_eq!("Gibbs_2wSHC_PT".parse::<Preset>().unwrap(), Preset::GibbsShcPt);
        assert!("metropolis".parse::<Preset>().is_err());
        let (l, a1, a2) = Preset::GibbsShcPt.parameters();
        assert_eq!((l, a1, a2), (7, 0.5, 0.4));
    }

    #[test]
    fn ladder_defaults() {
        let t = geometric_ladder(7, 32.0);
        assert_eq!(t[0], 1.0);
        assert_relative_eq!(t[6], 32.0, epsilon = 1e-12);
        assert_relative_eq!(t[1], 2f64.powf(5.0 / 6.0), epsilon = 1e-12);
        assert_eq!(geometric_ladder(1, 32.0), vec![1.0]);
    }

    #[test]
    fn config_validation() {
        let ok = SamplerConfig::preset(Preset::Gibbs);
        let cases = [
            SamplerConfig { m: 1, c: 2, ..ok.clone() },
            SamplerConfig { j: 1, ..ok.clone() },
            SamplerConfig { temperatures: vec![2.0], ..ok.clone() },
            SamplerConfig { temperatures: vec![1.0, 1.0], ..ok.clone() },
            SamplerConfig { alpha1: 0.3, ..ok.clone() },
            SamplerConfig { alpha1: 0.6, alpha2: 0.6, temperatures: vec![1.0, 2.0], ..ok.clone() },
            SamplerConfig { burn_in_fraction: 1.0, ..ok.clone() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(SamplerError::InvalidConfig(_))), "{c:?}");
        }
    }

    #[test]
    fn swap_rule() {
        assert_eq!(swap_acceptance(-3.0, -3.0, 1.0, 2.0), 1.0);
        assert_eq!(swap_acceptance(-5.0, -3.0, 1.0, 2.0), 1.0);
        assert_relative_eq!(swap_acceptance(-3.0, -5.0, 1.0, 2.0), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn same_seed_same_traces_and_cache_is_transparent() {
        let scorer = toy_scorer(40, 1);
        let mut cfg = small_config(Preset::GibbsShcPt, 400);
        cfg.temperatures = vec![1.0, 2.0, 4.0];
        let a = run(&cfg, &scorer).unwrap();
        let b = run(&cfg, &scorer).unwrap();
        assert_eq!(a.chains.iter().map(|c| &c.trace).collect::<Vec<_>>(), b.chains.iter().map(|c| &c.trace).collect::<Vec<_>>());
        for mode in [CacheMode::Disabled, CacheMode::Shared] {
            let other = run(&SamplerConfig { cache: CacheConfig { mode, ..cfg.cache }, ..cfg.clone() }, &scorer).unwrap();
            for (x, y) in a.chains.iter().zip(&other.chains) {
                assert_eq!(x.trace, y.trace);
                assert_eq!(x.states, y.states);
            }
        }
        let bounded = run(&SamplerConfig { cache: CacheConfig { mode: CacheMode::ChainLocal, capacity: Some(3), audit_every: 7 }, ..cfg.clone() }, &scorer).unwrap();
        for (x, y) in a.chains.iter().zip(&bounded.chains) {
            assert_eq!(x.trace, y.trace);
        }
        let stats = bounded.cache_stats();
        assert!(stats.evictions > 0);
        assert!(stats.audits > 0);
        assert_eq!(stats.audit_mismatches, 0);
        assert!(a.cache_stats().hit_rate() > 0.5);
        let different = run(&SamplerConfig { seed: 12, ..cfg }, &scorer).unwrap();
        assert_ne!(different.chains[0].trace, a.chains[0].trace);
    }

    #[test]
    fn retained_length_and_estimates() {
        let scorer = toy_scorer(40, 2);
        let cfg = small_config(Preset::Gibbs, 101);
        let set = run(&cfg, &scorer).unwrap();
        for ch in &set.chains {
            assert_eq!(ch.len(), 101);
            let retained: u64 = ch.counts(set.burn_in_for(101)..101).iter().map(|(_, c)| c).sum();
            assert_eq!(retained, 101 - 50);
            assert_eq!(ch.to_rgs_lines().lines().count(), 101);
        }
        let t = set.estimate().unwrap();
        assert_eq!(t.mode(), PosteriorMode::Sampled);
        assert_relative_eq!(t.iter().map(|(_, w)| w).sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_trivial_cases() {
        let p = Partition::parse("12|3").unwrap();
        let q = Partition::parse("1|23").unwrap();
        let chain = |s: &Partition| ChainTrace {
            states: vec![s.clone()],
            trace: vec![0; 10],
            counters: ChainCounters::default(),
            cache: CacheStats::default(),
            elapsed_secs: 0.0,
        };
        let cfg = SamplerConfig { j: 10, ..SamplerConfig::preset(Preset::Gibbs) };
        let one = ChainSet { dim: 3, config: cfg.clone(), chains: vec![chain(&p)] };
        assert_eq!(one.estimate().unwrap().prob(&p), 1.0);
        let two = ChainSet { dim: 3, config: cfg, chains: vec![chain(&p), chain(&q)] };
        let t = two.estimate().unwrap();
        assert_eq!((t.prob(&p), t.prob(&q)), (0.5, 0.5));
    }

    #[test]
    fn init_passes_through_and_is_distinct() {
        let constant = ModelScorer::constant(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let starts = init_chains(8, 8, &constant, &mut rng).unwrap();
        assert_eq!(starts.len(), 8);
        let mut d = starts.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 8);
        // only two partitions of [2]; the rest is drawn with replacement
        let tiny = ModelScorer::constant(2).unwrap();
        let starts = init_chains(5, 5, &tiny, &mut rng).unwrap();
        assert_eq!(starts.len(), 5);
        assert!(init_chains(2, 3, &tiny, &mut rng).is_err());
    }

    #[test]
    fn init_favors_probable_states() {
        let scorer = toy_scorer(60, 4);
        let exact = exact_posterior(&scorer, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let key = BlockKey::new(vec![0, 1]).unwrap();
        let (mut hits, mut total) = (0, 0);
        for _ in 0..40 {
            for p in init_chains(2000, 4, &scorer, &mut rng).unwrap() {
                hits += p.same_block(key.elements()) as usize;
                total += 1;
            }
        }
        let uniform_rate = 15.0 / 52.0; // partitions of [5] with 1 ~ 2
        let posterior = exact.event(&crate::exact::Event::SameBlock(vec![0, 1]));
        assert!(posterior > 0.8);
        assert!(hits as f64 / total as f64 > uniform_rate + 0.2, "{hits}/{total}");
    }

    #[test]
    fn shc_resource_guard() {
        let scorer = ModelScorer::constant(30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = Partition::single_block(30);
        let err = twoway_shc_step(&p, &scorer, 1.0, ShcMode::Exhaustive, &mut rng).unwrap_err();
        assert!(matches!(err, SamplerError::ResourceLimit { .. }));
        // the metropolized proposal never enumerates
        let q = twoway_shc_step(&p, &scorer, 1.0, ShcMode::Metropolized, &mut rng).unwrap();
        assert_eq!(q.n_blocks(), 2);
    }

    #[test]
    fn chain_absorbs_at_dominant_state() {
        let d = 4;
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else if i / 2 == j / 2 { 0.9 } else { 0.0 });
        let stats = GaussianSuffStats::new(sigma * 1e5, 1e5).unwrap();
        let scorer = ModelScorer::bayes_corr(stats).unwrap();
        let truth = Partition::parse("12|34").unwrap();
        for preset in [Preset::Gibbs, Preset::Shc] {
            // from all-singletons; the single block is a trap for Gibbs at this N
            let cfg = SamplerConfig { c: 2, m: 20, j: 200, seed: 9, ..SamplerConfig::preset(preset) };
            let starts = vec![Partition::singletons(d), Partition::parse("13|2|4").unwrap()];
            let set = run_from(&cfg, &scorer, &starts).unwrap();
            assert_eq!(set.estimate().unwrap().prob(&truth), 1.0, "{preset}");
        }
    }

    #[test]
    fn infinite_temperature_gibbs_is_uniform_over_neighbors() {
        // with T huge, element 1 of 12|3|4|5 picks each of its 5 options equally often
        let scorer = toy_scorer(50, 7);
        let p = Partition::parse("12|3|4|5").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ctx = Ctx::new(&scorer, ChainCache::Disabled(CacheStats::default()), DEFAULT_MAX_CANDIDATES);
        let mut counts = HashMap::new();
        let n = 30_000;
        for _ in 0..n {
            let mut seq = start_sequence(&mut ctx, &p).unwrap();
            ctx.gibbs_element_for_test(&mut seq, 0, 1e12, &mut rng);
            *counts.entry(seq.part.rgs().to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 5);
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - 0.2).abs() < 0.015);
        }
    }
}
