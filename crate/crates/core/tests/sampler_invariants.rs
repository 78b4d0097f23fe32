use std::collections::HashMap;

use mutind::exact::{exact_posterior, PosteriorTable};
use mutind::models::{BlockScorer, ModelError, ModelScorer};
use mutind::partition::{enumerate, BlockKey, Partition};
use mutind::sampler::{self, gibbs_sweep, pt_swap, twoway_shc_step, Preset, SamplerConfig, ShcMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Arbitrary but fixed block scores, rich enough to give an irregular posterior.
struct HashScorer {
    dim: usize,
}

impl BlockScorer for HashScorer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn block_score(&self, block: &BlockKey) -> Result<f64, ModelError> {
        let mut h: u64 = 0x243F_6A88_85A3_08D3;
        for &e in block.elements() {
            h = (h ^ e as u64).wrapping_mul(0x100_0000_01B3);
        }
        Ok(((h >> 11) as f64 / (1u64 << 53) as f64) * 1.5 - 0.5)
    }
}

fn draw(table: &[(Partition, f64)], rng: &mut impl Rng) -> Partition {
    let mut u: f64 = rng.random();
    for (p, w) in table {
        u -= w;
        if u <= 0.0 {
            return p.clone();
        }
    }
    table.last().unwrap().0.clone()
}

fn l1(freq: &HashMap<Partition, f64>, exact: &PosteriorTable) -> f64 {
    let mut d: f64 = exact.iter().map(|(p, w)| (freq.get(p).copied().unwrap_or(0.0) - w).abs()).sum();
    d += freq.iter().filter(|(p, _)| exact.prob(p) == 0.0).map(|(_, f)| f).sum::<f64>();
    d
}

/// Pushes exact draws through one transition and checks the output law is unchanged.
fn check_invariance(step: impl Fn(&Partition, &mut ChaCha8Rng) -> Partition, dim: usize, tol: f64) {
    let scorer = HashScorer { dim };
    let exact = exact_posterior(&scorer, dim).unwrap();
    let table: Vec<(Partition, f64)> = exact.iter().map(|(p, w)| (p.clone(), w)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let mut freq = HashMap::new();
    for _ in 0..n {
        let x = draw(&table, &mut rng);
        *freq.entry(step(&x, &mut rng)).or_insert(0.0) += 1.0 / n as f64;
    }
    let d = l1(&freq, &exact);
    assert!(d < tol, "L1 after one transition = {d}");
}

#[test]
fn gibbs_two_state_chain() {
    // P(12) = e^a / (1 + e^a) with a = ln 3, i.e. 3/4
    struct Two;
    impl BlockScorer for Two {
        fn dim(&self) -> usize {
            2
        }
        fn block_score(&self, b: &BlockKey) -> Result<f64, ModelError> {
            Ok(if b.len() == 2 { 3f64.ln() } else { 0.0 })
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = Partition::singletons(2);
    let n = 200_000;
    let mut joined = 0usize;
    for _ in 0..n {
        x = gibbs_sweep(&x, &Two, 1.0, &mut rng).unwrap();
        joined += (x.n_blocks() == 1) as usize;
    }
    let f = joined as f64 / n as f64;
    assert!((f - 0.75).abs() < 0.01, "frequency of 12: {f}");
}

#[test]
fn swap_preserves_tempered_product() {
    // two states with score gap g, temperatures 1 and 4
    struct Two;
    impl BlockScorer for Two {
        fn dim(&self) -> usize {
            2
        }
        fn block_score(&self, b: &BlockKey) -> Result<f64, ModelError> {
            Ok(if b.len() == 2 { 2.0 } else { 0.0 })
        }
    }
    let temps = [1.0, 4.0];
    let p_join = |t: f64| 1.0 / (1.0 + (-2.0 / t).exp());
    let (a, b) = (Partition::single_block(2), Partition::singletons(2));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 400_000;
    let mut cold_joined = 0usize;
    for _ in 0..n {
        let s0 = if rng.random::<f64>() < p_join(temps[0]) { a.clone() } else { b.clone() };
        let s1 = if rng.random::<f64>() < p_join(temps[1]) { a.clone() } else { b.clone() };
        let out = pt_swap(&[s0, s1], &Two, &temps, &mut rng).unwrap();
        cold_joined += (out[0].n_blocks() == 1) as usize;
    }
    let p = p_join(1.0);
    let f = cold_joined as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((f - p).abs() < 3.0 * se, "cold marginal {f} vs {p} (se {se})");
}

#[test]
fn gibbs_sweep_leaves_posterior_invariant() {
    let scorer = HashScorer { dim: 4 };
    check_invariance(|x, rng| gibbs_sweep(x, &scorer, 1.0, rng).unwrap(), 4, 0.02);
}

#[test]
fn metropolized_shc_leaves_posterior_invariant() {
    let scorer = HashScorer { dim: 4 };
    check_invariance(|x, rng| twoway_shc_step(x, &scorer, 1.0, ShcMode::Metropolized, rng).unwrap(), 4, 0.02);
}

#[test]
fn metropolized_shc_is_uniform_under_flat_scores() {
    let scorer = ModelScorer::constant(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut x = Partition::singletons(5);
    let n = 400_000;
    let mut freq: HashMap<Partition, f64> = HashMap::new();
    for _ in 0..n {
        x = twoway_shc_step(&x, &scorer, 1.0, ShcMode::Metropolized, &mut rng).unwrap();
        *freq.entry(x.clone()).or_insert(0.0) += 1.0 / n as f64;
    }
    assert_eq!(freq.len(), 52);
    let uniform = 1.0 / 52.0;
    for (p, f) in &freq {
        assert!((f - uniform).abs() < 0.25 * uniform, "{p}: {f}");
    }
    assert!(enumerate(5).unwrap().all(|p| freq.contains_key(&p)));
}

#[test]
fn presets_reach_the_exact_posterior() {
    let scorer = HashScorer { dim: 4 };
    let exact = exact_posterior(&scorer, 4).unwrap();
    for preset in Preset::ALL {
        let mut cfg = SamplerConfig::preset(preset);
        cfg.shc_mode = ShcMode::Metropolized;
        cfg.m = 50;
        cfg.c = 4;
        cfg.j = 60_000;
        cfg.seed = 3;
        let set = sampler::run(&cfg, &scorer).unwrap();
        let est = set.estimate().unwrap();
        let d = mutind::diagnostics::run_distance(&est, &exact).unwrap();
        assert!(d < 0.06, "{}: L1 = {d}", preset.name());
    }
}
