use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::input::{read_contingency, read_matrix, read_square};
use crate::output::{RunManifest, Sink, Timings};
use crate::{
    parse_cli, Cli, Command, DatasetArgs, DistanceArgs, ExactArgs, Format, InputArgs, InputKind, ModelKind, QueryArgs, ReplayArgs,
    SampleArgs, SimulateArgs,
};
use mutind::datasets;
use mutind::diagnostics::{checkpoint_schedule, distance_matrix, heterogeneity_curve, Checkpoint};
use mutind::exact::{exact_posterior, format_probability, Event, PosteriorMode, PosteriorTable};
use mutind::models::{DirichletHyper, GaussianSuffStats, ModelScorer, MultinomialSuffStats};
use mutind::partition::{BlockKey, MAX_ENUMERATE_DIM};
use mutind::sampler::{self, geometric_ladder, CacheConfig, ChainCounters, Preset, SamplerConfig};
use mutind::synth::{self, Family, SynthData, SynthSpec, Truth};

pub fn run(cli: Cli, raw_args: &[String]) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::input("--workers must be positive"));
        }
        // a replayed command may try to configure the pool a second time
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match cli.command {
        Command::Exact(a) => exact(a, raw_args),
        Command::Sample(a) => sample(a, raw_args),
        Command::Simulate(a) => simulate(a, raw_args),
        Command::Dataset(a) => dataset(a, raw_args),
        Command::Distance(a) => distance(a, raw_args),
        Command::Replay(a) => replay(a),
    }
}

struct Problem {
    scorer: ModelScorer,
    dim: usize,
    model: ModelKind,
    variables: Vec<String>,
    info: serde_json::Value,
}

fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("X{i}")).collect()
}

fn gaussian_scorer(model: ModelKind, stats: GaussianSuffStats) -> Result<ModelScorer, CliError> {
    Ok(match model {
        ModelKind::BayesOptim => ModelScorer::bayes_optim(stats)?,
        ModelKind::BayesCorr => ModelScorer::bayes_corr(stats)?,
        ModelKind::Bic => ModelScorer::gaussian_bic(stats)?,
        ModelKind::Constant => ModelScorer::constant(stats.dim())?,
        ModelKind::Multinomial | ModelKind::MultinomialBic => {
            return Err(CliError::input("multinomial models need a contingency table (--input-kind table)"))
        }
    })
}

fn table_scorer(model: ModelKind, stats: MultinomialSuffStats, dirichlet: f64) -> Result<ModelScorer, CliError> {
    Ok(match model {
        ModelKind::Multinomial => ModelScorer::multinomial(stats, DirichletHyper::symmetric(dirichlet)?)?,
        ModelKind::MultinomialBic => ModelScorer::multinomial_bic(stats)?,
        ModelKind::Constant => ModelScorer::constant(stats.dim())?,
        _ => return Err(CliError::input("Gaussian models need continuous input; use --model multinomial or multinomial-bic")),
    })
}

fn load_problem(a: &InputArgs) -> Result<Problem, CliError> {
    if let Some(name) = &a.dataset {
        let ds = datasets::by_name(name).ok_or_else(|| CliError::input(format!("unknown dataset {name:?} (available: hiv)")))?;
        // the reference HIV posteriors are reproduced with N_eff = N
        let known = !a.sample_mean;
        let stats = GaussianSuffStats::from_covariance(ds.covariance_matrix(), ds.n, known)?;
        let model = a.model.unwrap_or(ModelKind::BayesOptim);
        let info = json!({ "source": format!("dataset:{}", ds.name), "n": ds.n, "n_eff": stats.n_eff(), "model": model });
        return Ok(Problem {
            scorer: gaussian_scorer(model, stats)?,
            dim: ds.dim(),
            model,
            variables: ds.variables.iter().map(|s| s.to_string()).collect(),
            info,
        });
    }
    let Some(path) = &a.input else {
        if a.model == Some(ModelKind::Constant) {
            let dim = a.dim.ok_or_else(|| CliError::input("the constant model without input needs --dim"))?;
            return Ok(Problem {
                scorer: ModelScorer::constant(dim)?,
                dim,
                model: ModelKind::Constant,
                variables: default_names(dim),
                info: json!({ "source": "none", "model": "constant" }),
            });
        }
        return Err(CliError::input("no input: give --input <file> or --dataset <name>"));
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let source = path.display().to_string();
    match a.input_kind {
        InputKind::Table => {
            let stats = read_contingency(&text)?;
            let model = a.model.unwrap_or(ModelKind::Multinomial);
            let dim = stats.dim();
            let info = json!({ "source": source, "kind": "table", "n": stats.total(), "model": model, "dirichlet": a.dirichlet });
            Ok(Problem { scorer: table_scorer(model, stats, a.dirichlet)?, dim, model, variables: default_names(dim), info })
        }
        kind => {
            let (names, stats) = match kind {
                InputKind::Data => {
                    let m = read_matrix(&text)?;
                    let zeros = vec![0.0; m.matrix.ncols()];
                    let stats = GaussianSuffStats::from_data(&m.matrix, a.known_mean.then_some(zeros.as_slice()))?;
                    (m.names, stats)
                }
                _ => {
                    let m = read_square(&text)?;
                    let n = a.n.ok_or_else(|| CliError::input("covariance and correlation input need --n <sample size>"))?;
                    let stats = if kind == InputKind::Cov {
                        GaussianSuffStats::from_covariance(m.matrix, n, a.known_mean)?
                    } else {
                        GaussianSuffStats::from_correlation(m.matrix, n, a.known_mean)?
                    };
                    (m.names, stats)
                }
            };
            let model = a.model.unwrap_or(ModelKind::BayesOptim);
            let dim = stats.dim();
            let info = json!({ "source": source, "kind": kind, "n_eff": stats.n_eff(), "model": model });
            Ok(Problem { scorer: gaussian_scorer(model, stats)?, dim, model, variables: names.unwrap_or_else(|| default_names(dim)), info })
        }
    }
}

#[derive(Serialize)]
struct TopEntry {
    rank: usize,
    partition: String,
    probability: f64,
}

#[derive(Serialize)]
struct BlockQuery {
    block: String,
    probability: f64,
}

#[derive(Serialize)]
struct SameBlockQuery {
    subset: String,
    probability: f64,
    /// Computed directly rather than as `1 - probability`, so tiny values survive.
    complement: f64,
}

#[derive(Serialize)]
struct SamplerReport {
    preset: String,
    temperatures: Vec<f64>,
    alpha1: f64,
    alpha2: f64,
    chains: usize,
    steps: usize,
    retained_per_chain: Vec<usize>,
    counters: ChainCounters,
    swap_acceptance: Option<f64>,
    shc_move_rate: Option<f64>,
    final_heterogeneity: f64,
    heterogeneity: Vec<Checkpoint>,
}

#[derive(Serialize)]
struct Report<'a> {
    mode: PosteriorMode,
    dim: usize,
    model: ModelKind,
    variables: &'a [String],
    support_size: usize,
    entropy: Option<f64>,
    map: String,
    map_probability: f64,
    top: Vec<TopEntry>,
    relevance: Vec<BlockQuery>,
    same_block: Vec<SameBlockQuery>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampler: Option<SamplerReport>,
}

const DEFAULT_TOP: usize = 10;

fn parse_block(s: &str, dim: usize) -> Result<BlockKey, CliError> {
    let b = BlockKey::parse(s)?;
    if b.elements().last().is_some_and(|&e| e >= dim) {
        return Err(CliError::input(format!("block {s} mentions a variable beyond D = {dim}")));
    }
    Ok(b)
}

fn build_report<'a>(table: &PosteriorTable, problem: &'a Problem, q: &QueryArgs, sampler: Option<SamplerReport>) -> Result<Report<'a>, CliError> {
    let top = table
        .top(q.top.unwrap_or(DEFAULT_TOP))
        .into_iter()
        .enumerate()
        .map(|(i, (p, w))| TopEntry { rank: i + 1, partition: p.to_string(), probability: w })
        .collect();
    let relevance = q
        .relevance
        .iter()
        .map(|s| parse_block(s, problem.dim).map(|b| BlockQuery { block: b.to_string(), probability: table.relevance(&b) }))
        .collect::<Result<_, _>>()?;
    let same_block = q
        .same_block
        .iter()
        .map(|s| {
            parse_block(s, problem.dim).map(|b| {
                let ev = Event::SameBlock(b.elements().to_vec());
                SameBlockQuery {
                    subset: b.to_string(),
                    probability: table.event(&ev),
                    complement: table.event(&Event::Not(Box::new(ev))),
                }
            })
        })
        .collect::<Result<_, _>>()?;
    let (map, map_probability) = table.top(1).first().map(|(p, w)| (p.to_string(), *w)).expect("tables are non-empty");
    Ok(Report {
        mode: table.mode(),
        dim: problem.dim,
        model: problem.model,
        variables: &problem.variables,
        support_size: table.len(),
        entropy: table.entropy_normalized().ok(),
        map,
        map_probability,
        top,
        relevance,
        same_block,
        sampler,
    })
}

fn table_csv(table: &PosteriorTable, top: Option<usize>) -> String {
    let full = table.to_csv();
    match top {
        None => full,
        Some(k) => full.lines().take(k + 1).map(|l| format!("{l}\n")).collect(),
    }
}

fn summarize_to_stderr(report: &Report) {
    if let Some(h) = report.entropy {
        eprintln!("normalized entropy: {}", format_probability(h));
    }
    eprintln!("MAP: {} ({})", report.map, format_probability(report.map_probability));
    for r in &report.relevance {
        eprintln!("relevance {}: {}", r.block, format_probability(r.probability));
    }
    for s in &report.same_block {
        eprintln!("same block {}: {} (complement {})", s.subset, format_probability(s.probability), format_probability(s.complement));
    }
}

fn emit_posterior(sink: &mut Sink, table: &PosteriorTable, report: &Report, q: &QueryArgs) -> Result<(), CliError> {
    sink.emit("posterior.csv", &table_csv(table, q.top), q.format == Format::Csv)?;
    sink.emit("report.json", &(serde_json::to_string_pretty(report)? + "\n"), q.format == Format::Json)?;
    if !sink.to_files() && q.format == Format::Csv {
        summarize_to_stderr(report);
    }
    Ok(())
}

fn exact(a: ExactArgs, raw_args: &[String]) -> Result<(), CliError> {
    let began = Instant::now();
    let problem = load_problem(&a.input)?;
    if problem.dim > MAX_ENUMERATE_DIM {
        return Err(CliError::input(format!(
            "D = {} is too large for exact enumeration (max {MAX_ENUMERATE_DIM}); use `mutind sample` instead",
            problem.dim
        )));
    }
    let table = exact_posterior(&problem.scorer, problem.dim)?;
    let report = build_report(&table, &problem, &a.query, None)?;
    let mut sink = Sink::new(a.query.out_dir.clone())?;
    emit_posterior(&mut sink, &table, &report, &a.query)?;
    let mut manifest = RunManifest::new("exact", raw_args);
    manifest.config = json!({ "problem": problem.info, "input": a.input, "query": a.query });
    manifest.timings.total_secs = began.elapsed().as_secs_f64();
    sink.finish(manifest)
}

fn sampler_config(a: &SampleArgs) -> Result<(Preset, SamplerConfig), CliError> {
    let preset: Preset = a.preset.parse().map_err(CliError::Input)?;
    let mut cfg = SamplerConfig::preset(preset);
    cfg.m = a.init_draws;
    cfg.c = a.chains;
    cfg.j = a.steps;
    cfg.seed = a.seed;
    cfg.burn_in_fraction = a.burn_in;
    cfg.temperatures = match (&a.ladder, a.levels) {
        (Some(ladder), _) => ladder
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::input(format!("bad temperature {t:?} in --ladder"))))
            .collect::<Result<_, _>>()?,
        (None, Some(levels)) => geometric_ladder(levels, a.t_max),
        (None, None) => geometric_ladder(cfg.levels(), a.t_max),
    };
    if let Some(x) = a.alpha1 {
        cfg.alpha1 = x;
    }
    if let Some(x) = a.alpha2 {
        cfg.alpha2 = x;
    }
    cfg.shc_mode = a.shc_mode.parse().map_err(CliError::Input)?;
    cfg.random_scan = a.random_scan;
    cfg.cache = CacheConfig { mode: a.cache.parse().map_err(CliError::Input)?, capacity: a.cache_capacity, audit_every: a.cache_audit };
    if let Some(m) = a.max_candidates {
        cfg.max_candidates = m;
    }
    cfg.validate()?;
    Ok((preset, cfg))
}

fn sample(a: SampleArgs, raw_args: &[String]) -> Result<(), CliError> {
    let began = Instant::now();
    let (preset, cfg) = sampler_config(&a)?;
    if a.trace && a.query.out_dir.is_none() {
        return Err(CliError::input("--trace needs --out-dir"));
    }
    let problem = load_problem(&a.input)?;
    let run_began = Instant::now();
    let set = sampler::run(&cfg, &problem.scorer)?;
    let run_secs = run_began.elapsed().as_secs_f64();
    let table = set.estimate()?;
    let curve = heterogeneity_curve(&set, &checkpoint_schedule(cfg.j));
    let counters = set.counters();
    let sampler_report = SamplerReport {
        preset: preset.name().into(),
        temperatures: cfg.temperatures.clone(),
        alpha1: cfg.alpha1,
        alpha2: cfg.alpha2,
        chains: cfg.c,
        steps: cfg.j,
        retained_per_chain: set.chains.iter().map(|c| c.len() - set.burn_in_for(c.len())).collect(),
        counters,
        swap_acceptance: counters.swap_rate(),
        shc_move_rate: counters.shc_move_rate(),
        final_heterogeneity: curve.last().map_or(0.0, |c| c.heterogeneity),
        heterogeneity: curve.clone(),
    };
    let report = build_report(&table, &problem, &a.query, Some(sampler_report))?;
    let mut sink = Sink::new(a.query.out_dir.clone())?;
    emit_posterior(&mut sink, &table, &report, &a.query)?;
    if sink.to_files() {
        let mut h = String::from("length,heterogeneity\n");
        for c in &curve {
            h.push_str(&format!("{},{}\n", c.length, num(c.heterogeneity)));
        }
        sink.emit("heterogeneity.csv", &h, false)?;
    }
    if a.trace {
        for (i, ch) in set.chains.iter().enumerate() {
            sink.emit(&format!("traces/chain_{}.txt", i + 1), &ch.to_rgs_lines(), false)?;
        }
    }
    let mut manifest = RunManifest::new("sample", raw_args);
    manifest.seed = Some(cfg.seed);
    manifest.config = json!({ "problem": problem.info, "preset": preset.name(), "sampler": cfg, "input": a.input, "query": a.query });
    manifest.timings = Timings {
        total_secs: began.elapsed().as_secs_f64(),
        per_step_secs: Some(run_secs / (cfg.c * (cfg.j - 1)).max(1) as f64),
        per_chain_secs: set.chains.iter().map(|c| c.elapsed_secs).collect(),
    };
    manifest.cache = Some(set.cache_stats());
    sink.finish(manifest)
}

/// Shortest round-trip text, switching to scientific notation for tiny magnitudes.
fn num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn parse_ks(s: &str, dim: usize) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::input(format!("bad --k {s:?}: use a range like 1-6 or a list like 1,3,6"));
    let ks: Vec<usize> = if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        s.split(',').map(|k| k.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > dim) {
        return Err(CliError::input(format!("block counts must lie in 1..={dim}")));
    }
    Ok(ks)
}

fn parse_family(s: &str, dim: usize) -> Result<Family, CliError> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    match (name, arg) {
        ("gaussian", None) => Ok(Family::Gaussian),
        ("student", Some(z)) => {
            let zeta: f64 = z.parse().map_err(|_| CliError::input(format!("bad Student degrees of freedom {z:?}")))?;
            Ok(Family::Student { zeta })
        }
        ("multinomial", Some(a)) => {
            let ar: Vec<usize> = a.split(',').map(|x| x.trim().parse().map_err(|_| CliError::input(format!("bad arity {x:?}")))).collect::<Result<_, _>>()?;
            let arities = if ar.len() == 1 { vec![ar[0]; dim] } else { ar };
            Ok(Family::Multinomial { arities })
        }
        _ => Err(CliError::input(format!("unknown family {s:?} (gaussian, student:<zeta>, multinomial:<arities>)"))),
    }
}

/// SplitMix64 finalizer, used to derive independent replicate seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Serialize, Clone)]
struct SimRow {
    k: usize,
    replicate: usize,
    seed: u64,
    truth: String,
    map: String,
    p_true: f64,
    rank: usize,
    ratio_to_map: f64,
    entropy: f64,
}

#[derive(Serialize)]
struct SimSummary {
    k: usize,
    metric: &'static str,
    q1: f64,
    median: f64,
    q3: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn simulate(a: SimulateArgs, raw_args: &[String]) -> Result<(), CliError> {
    let began = Instant::now();
    if a.dim == 0 || a.dim > MAX_ENUMERATE_DIM {
        return Err(CliError::input(format!("simulation needs 1 <= D <= {MAX_ENUMERATE_DIM} for exact posteriors")));
    }
    if a.replicates == 0 {
        return Err(CliError::input("--replicates must be positive"));
    }
    let ks = parse_ks(&a.k, a.dim)?;
    let family = parse_family(&a.family, a.dim)?;
    let model = a.model.unwrap_or(if matches!(family, Family::Multinomial { .. }) { ModelKind::Multinomial } else { ModelKind::BayesOptim });
    match (&family, model) {
        (Family::Multinomial { .. }, ModelKind::Multinomial | ModelKind::MultinomialBic | ModelKind::Constant) => {}
        (Family::Multinomial { .. }, _) => return Err(CliError::input("multinomial data needs --model multinomial or multinomial-bic")),
        (_, ModelKind::Multinomial | ModelKind::MultinomialBic) => {
            return Err(CliError::input("multinomial models need --family multinomial:<arities>"))
        }
        _ => {}
    }
    let jobs: Vec<(usize, usize)> = ks.iter().flat_map(|&k| (0..a.replicates).map(move |r| (k, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(k, r)| -> Result<SimRow, CliError> {
            let seed = mix(a.seed ^ mix(((k as u64) << 32) | r as u64));
            let spec = SynthSpec { dim: a.dim, truth: Truth::Blocks(k), n: a.n, family: family.clone(), seed };
            let data = synth::generate(&spec)?;
            let scorer = match data.data {
                // synthetic Gaussian data have a known zero mean
                SynthData::Matrix(x) => gaussian_scorer(model, GaussianSuffStats::from_data(&x, Some(&vec![0.0; a.dim]))?)?,
                SynthData::Table(t) => table_scorer(model, t, a.dirichlet)?,
            };
            let table = exact_posterior(&scorer, a.dim)?;
            let s = table.summarize_truth(&data.truth)?;
            Ok(SimRow {
                k,
                replicate: r,
                seed,
                truth: data.truth.to_string(),
                map: table.map().to_string(),
                p_true: s.p_true,
                rank: s.rank,
                ratio_to_map: s.ratio_to_map,
                entropy: s.entropy.unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut summary = Vec::new();
    for &k in &ks {
        let group: Vec<&SimRow> = rows.iter().filter(|r| r.k == k).collect();
        let metrics: [(&'static str, fn(&SimRow) -> f64); 4] = [
            ("p_true", |r| r.p_true),
            ("rank", |r| r.rank as f64),
            ("ratio_to_map", |r| r.ratio_to_map),
            ("entropy", |r| r.entropy),
        ];
        for (metric, f) in metrics {
            let mut v: Vec<f64> = group.iter().map(|r| f(r)).collect();
            v.sort_by(|x, y| x.total_cmp(y));
            summary.push(SimSummary { k, metric, q1: quantile(&v, 0.25), median: quantile(&v, 0.5), q3: quantile(&v, 0.75) });
        }
    }

    let mut rows_csv = String::from("k,replicate,seed,truth,map,p_true,rank,ratio_to_map,entropy\n");
    for r in &rows {
        rows_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.k,
            r.replicate,
            r.seed,
            r.truth,
            r.map,
            num(r.p_true),
            r.rank,
            num(r.ratio_to_map),
            num(r.entropy)
        ));
    }
    let mut summary_csv = String::from("k,metric,q1,median,q3\n");
    for s in &summary {
        summary_csv.push_str(&format!("{},{},{},{},{}\n", s.k, s.metric, num(s.q1), num(s.median), num(s.q3)));
    }
    let mut sink = Sink::new(a.out_dir.clone())?;
    sink.emit("replicates.csv", &rows_csv, a.format == Format::Csv)?;
    sink.emit("summary.csv", &summary_csv, false)?;
    let report = json!({ "rows": rows, "summary": summary });
    sink.emit("report.json", &(serde_json::to_string_pretty(&report)? + "\n"), a.format == Format::Json)?;
    if !sink.to_files() && a.format == Format::Csv {
        eprint!("{summary_csv}");
    }
    let mut manifest = RunManifest::new("simulate", raw_args);
    manifest.seed = Some(a.seed);
    manifest.config = json!({
        "dim": a.dim, "k": ks, "replicates": a.replicates, "n": a.n, "family": family, "model": model,
        "dirichlet": a.dirichlet, "mean": "known (zero)",
    });
    manifest.timings.total_secs = began.elapsed().as_secs_f64();
    sink.finish(manifest)
}

fn dataset(a: DatasetArgs, raw_args: &[String]) -> Result<(), CliError> {
    let began = Instant::now();
    let ds = datasets::by_name(&a.name).ok_or_else(|| CliError::input(format!("unknown dataset {:?} (available: hiv)", a.name)))?;
    let mut sink = Sink::new(a.out_dir.clone())?;
    match a.format {
        Format::Json => sink.emit("dataset.json", &(serde_json::to_string_pretty(&ds)? + "\n"), true)?,
        Format::Csv => {
            let r: DMatrix<f64> = ds.correlation_matrix();
            let mut out = String::from("variable,variance");
            for v in &ds.variables {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
            for (i, v) in ds.variables.iter().enumerate() {
                out.push_str(&format!("{v},{}", ds.variances[i]));
                for j in 0..ds.dim() {
                    out.push_str(&format!(",{}", r[(i, j)]));
                }
                out.push('\n');
            }
            sink.emit("dataset.csv", &out, true)?;
        }
    }
    let mut manifest = RunManifest::new("dataset", raw_args);
    manifest.config = json!({ "name": ds.name, "n": ds.n, "known_mean": ds.known_mean, "format": a.format });
    manifest.timings.total_secs = began.elapsed().as_secs_f64();
    sink.finish(manifest)
}

fn distance(a: DistanceArgs, raw_args: &[String]) -> Result<(), CliError> {
    let began = Instant::now();
    let mut tables = Vec::new();
    let mut names = Vec::new();
    for f in &a.files {
        let text = fs::read_to_string(f).map_err(|e| CliError::input(format!("{}: {e}", f.display())))?;
        tables.push(PosteriorTable::from_csv(&text, PosteriorMode::Sampled)?);
        names.push(f.display().to_string());
    }
    let m = distance_matrix(&tables)?;
    let mut out = String::from("run");
    for n in &names {
        out.push_str(&format!(",{n}"));
    }
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        out.push_str(&names[i]);
        for d in row {
            out.push_str(&format!(",{}", num(*d)));
        }
        out.push('\n');
    }
    let mut sink = Sink::new(a.out_dir.clone())?;
    sink.emit("distance.csv", &out, true)?;
    let mut manifest = RunManifest::new("distance", raw_args);
    manifest.config = json!({ "files": names });
    manifest.timings.total_secs = began.elapsed().as_secs_f64();
    sink.finish(manifest)
}

/// Drops `--out-dir` (and its value) from recorded arguments.
fn strip_out_dir(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out-dir" {
            skip = true;
            continue;
        }
        if a.starts_with("--out-dir=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifest = RunManifest::load(&a.manifest)?;
    let out_dir = a.out_dir.as_deref().map(absolute).transpose()?;
    let mut args = vec!["mutind".to_string()];
    args.extend(strip_out_dir(&manifest.args));
    if let Some(d) = out_dir {
        args.push("--out-dir".into());
        args.push(d.display().to_string());
    }
    if !manifest.cwd.is_empty() {
        std::env::set_current_dir(&manifest.cwd).map_err(|e| CliError::input(format!("cannot enter recorded directory {}: {e}", manifest.cwd)))?;
    }
    let cli = parse_cli(&args)?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::input("manifest records a replay; replay the original manifest instead"));
    }
    run(cli, &args[1..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dir_is_stripped() {
        let a: Vec<String> = ["exact", "--out-dir", "x", "--dataset", "hiv", "--out-dir=y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(strip_out_dir(&a), vec!["exact", "--dataset", "hiv"]);
    }

    #[test]
    fn k_and_family_parsing() {
        assert_eq!(parse_ks("1-3", 6).unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_ks("1,6", 6).unwrap(), vec![1, 6]);
        assert!(parse_ks("0-2", 6).is_err());
        assert!(parse_ks("7", 6).is_err());
        assert_eq!(parse_family("student:3", 6).unwrap(), Family::Student { zeta: 3.0 });
        assert_eq!(parse_family("multinomial:2", 3).unwrap(), Family::Multinomial { arities: vec![2, 2, 2] });
        assert!(parse_family("poisson", 3).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }
}
