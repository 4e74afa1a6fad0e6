//! Seeded Monte Carlo experiments over the sampler, hypergraph, and pipeline
//! modules, with JSON/CSV report emission. Every experiment is deterministic
//! given its base seed; per-trial seeds come from a fixed mixing function so
//! trials could be dispatched in any order.

use crate::gf2::{BitVec, GF2Matrix};
use crate::hypergraph::{core_prediction, Hypergraph};
use crate::matroid::BinaryMatroid;
use crate::pipeline::{prepare_basis, run_pipeline, PipelineConfig, PipelineTrace};
use crate::poisson::ln_choose;
use crate::sampler::{sample_k_subset, sample_matrix, splitmix64, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment kind `{0}`")]
    UnknownKind(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("profile file: {0}")]
    ProfileParse(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CoreSize,
    ColumnIndependence,
    SubsetSums,
    InverseRowWeights,
    CandidateProbability,
    MinorEndToEnd,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "core_size" => Ok(Self::CoreSize),
            "column_independence" => Ok(Self::ColumnIndependence),
            "subset_sums" => Ok(Self::SubsetSums),
            "inverse_row_weights" => Ok(Self::InverseRowWeights),
            "candidate_probability" => Ok(Self::CandidateProbability),
            "minor_end_to_end" => Ok(Self::MinorEndToEnd),
            other => Err(HarnessError::UnknownKind(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::CoreSize => "core_size",
            Self::ColumnIndependence => "column_independence",
            Self::SubsetSums => "subset_sums",
            Self::InverseRowWeights => "inverse_row_weights",
            Self::CandidateProbability => "candidate_probability",
            Self::MinorEndToEnd => "minor_end_to_end",
        }
    }
}

fn default_support() -> usize {
    2
}
fn default_zeta() -> f64 {
    0.5
}
fn default_omega() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// core threshold for core_size
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default = "default_support")]
    pub support_multiplier: usize,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_omega")]
    pub omega: usize,
    /// "fano" or "single" for minor_end_to_end
    #[serde(default)]
    pub target: Option<String>,
    /// "zero" or "e1" for subset_sums
    #[serde(default)]
    pub alpha: Option<String>,
    /// candidate_probability: planted-atom density
    #[serde(default)]
    pub eps1: Option<f64>,
    /// candidate_probability: columns per trial
    #[serde(default)]
    pub columns: Option<usize>,
    /// subset_sums: samples per subset size in sampled mode
    #[serde(default)]
    pub samples_per_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub params: ExperimentParams,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricAggregate {
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Prediction {
    pub name: String,
    pub value: f64,
    pub source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: String,
    pub trials: usize,
    pub seed: u64,
    pub params: ExperimentParams,
    pub records: Vec<TrialRecord>,
    pub aggregates: BTreeMap<String, MetricAggregate>,
    pub success_rate: f64,
    pub failure_breakdown: BTreeMap<String, usize>,
    pub predictions: Vec<Prediction>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Deterministic per-trial seed from the base seed.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ splitmix64(trial.wrapping_add(1)))
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959964;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    if spec.trials == 0 {
        return Err(HarnessError::BadParams("trials must be >= 1".into()));
    }
    let mut records = Vec::with_capacity(spec.trials);
    let mut predictions = Vec::new();
    let mut verdicts = Vec::new();
    match spec.kind {
        ExperimentKind::CoreSize => {
            run_core_size(spec, &mut records, &mut predictions, &mut verdicts)?
        }
        ExperimentKind::ColumnIndependence => {
            run_column_independence(spec, &mut records, &mut verdicts)?
        }
        ExperimentKind::SubsetSums => run_subset_sums(spec, &mut records, &mut verdicts)?,
        ExperimentKind::InverseRowWeights => {
            run_inverse_row_weights(spec, &mut records, &mut verdicts)?
        }
        ExperimentKind::CandidateProbability => {
            run_candidate_probability(spec, &mut records, &mut predictions, &mut verdicts)?
        }
        ExperimentKind::MinorEndToEnd => {
            run_minor_end_to_end(spec, &mut records, &mut verdicts)?
        }
    }
    Ok(assemble(spec, records, predictions, verdicts))
}

fn assemble(
    spec: &ExperimentSpec,
    records: Vec<TrialRecord>,
    predictions: Vec<Prediction>,
    verdicts: Vec<Verdict>,
) -> ExperimentReport {
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &records {
        for (k, v) in &r.values {
            by_metric.entry(k.clone()).or_default().push(*v);
        }
    }
    let aggregates = by_metric
        .into_iter()
        .map(|(k, vs)| {
            let n = vs.len() as f64;
            let mean = vs.iter().sum::<f64>() / n;
            let var = vs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let min = vs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (
                k,
                MetricAggregate {
                    mean,
                    stddev: var.sqrt(),
                    min,
                    max,
                },
            )
        })
        .collect();
    let successes = records.iter().filter(|r| r.failure.is_none()).count();
    let mut failure_breakdown: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        if let Some(f) = &r.failure {
            let stage = f.split(':').next().unwrap_or("unknown").to_string();
            *failure_breakdown.entry(stage).or_insert(0) += 1;
        }
    }
    ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: spec.kind.name().to_string(),
        trials: spec.trials,
        seed: spec.seed,
        params: spec.params.clone(),
        records,
        aggregates,
        success_rate: successes as f64 / spec.trials as f64,
        failure_breakdown,
        predictions,
        verdicts,
    }
}

fn run_core_size(
    spec: &ExperimentSpec,
    records: &mut Vec<TrialRecord>,
    predictions: &mut Vec<Prediction>,
    verdicts: &mut Vec<Verdict>,
) -> Result<(), HarnessError> {
    let p = &spec.params;
    let d = p
        .d
        .ok_or_else(|| HarnessError::BadParams("core_size needs d".into()))?;
    let c = p.k as f64 * p.m as f64 / p.n as f64;
    let pred = core_prediction(c, p.k, d);
    let pred_vertices = pred.vertex_fraction * p.n as f64;
    let pred_edges = pred.edge_fraction * p.m as f64;
    predictions.push(Prediction {
        name: "core_vertices".into(),
        value: pred_vertices,
        source: "fixed_point".into(),
    });
    predictions.push(Prediction {
        name: "core_edges".into(),
        value: pred_edges,
        source: "fixed_point".into(),
    });
    let mut worst_rel: f64 = 0.0;
    let mut all_ok = true;
    for t in 0..spec.trials {
        let seed = trial_seed(spec.seed, t as u64);
        let a = sample_matrix(&ModelParams {
            n: p.n,
            m: p.m,
            k: p.k,
            seed,
        });
        let h = Hypergraph::from_columns(&a, 0..p.m)
            .map_err(|e| HarnessError::BadParams(e.to_string()))?;
        let core = h.d_core(d);
        let (cv, ce) = (core.vertices.len() as f64, core.edge_indices.len() as f64);
        // both-zero counts as exact agreement; otherwise relative to prediction
        let rel = |emp: f64, pred: f64| -> f64 {
            if pred == 0.0 {
                if emp == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (emp - pred).abs() / pred
            }
        };
        let rv = rel(cv, pred_vertices);
        let re = rel(ce, pred_edges);
        worst_rel = worst_rel.max(rv).max(re);
        if rv > 0.02 || re > 0.02 {
            all_ok = false;
        }
        let mut values = BTreeMap::new();
        values.insert("core_vertices".into(), cv);
        values.insert("core_edges".into(), ce);
        values.insert("rel_err_vertices".into(), rv);
        values.insert("rel_err_edges".into(), re);
        records.push(TrialRecord {
            trial: t,
            seed,
            values,
            failure: None,
        });
    }
    verdicts.push(Verdict {
        name: "core_size_within_2pct".into(),
        pass: all_ok,
        detail: format!("worst relative error {worst_rel:.5}"),
    });
    Ok(())
}

fn run_column_independence(
    spec: &ExperimentSpec,
    records: &mut Vec<TrialRecord>,
    verdicts: &mut Vec<Verdict>,
) -> Result<(), HarnessError> {
    let p = &spec.params;
    let mut full = 0usize;
    for t in 0..spec.trials {
        let seed = trial_seed(spec.seed, t as u64);
        let a = sample_matrix(&ModelParams {
            n: p.n,
            m: p.m,
            k: p.k,
            seed,
        });
        let rank = a.rank();
        let is_full = rank == p.m;
        if is_full {
            full += 1;
        }
        let mut values = BTreeMap::new();
        values.insert("rank".into(), rank as f64);
        values.insert("full_rank".into(), if is_full { 1.0 } else { 0.0 });
        records.push(TrialRecord {
            trial: t,
            seed,
            values,
            failure: None,
        });
    }
    let rate = full as f64 / spec.trials as f64;
    let (lo, hi) = wilson_interval(full, spec.trials);
    verdicts.push(Verdict {
        name: "full_rank_rate_ge_0.9".into(),
        pass: rate >= 0.9,
        detail: format!("rate {rate:.3}, wilson95 [{lo:.3}, {hi:.3}]"),
    });
    Ok(())
}

fn parse_alpha(alpha: Option<&str>, m: usize) -> Result<BitVec, HarnessError> {
    match alpha.unwrap_or("zero") {
        "zero" => Ok(BitVec::zeros(m)),
        "e1" => Ok(BitVec::from_ones(m, &[0])),
        other => Err(HarnessError::BadParams(format!("alpha `{other}`"))),
    }
}

/// Counts nonempty proper row subsets whose sum equals alpha, by size.
/// Exhaustive; callers must keep n small.
pub fn subset_sum_counts_exhaustive(a: &GF2Matrix, alpha: &BitVec) -> BTreeMap<usize, usize> {
    let n = a.nrows();
    assert!(n <= 20, "exhaustive subset sums need n <= 20");
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sums: Vec<BitVec> = Vec::with_capacity(1 << n);
    sums.push(BitVec::zeros(a.ncols()));
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        let mut s = sums[mask & (mask - 1)].clone();
        s.xor_assign(a.row(low));
        if mask != (1 << n) - 1 && s == *alpha {
            *counts.entry(mask.count_ones() as usize).or_insert(0) += 1;
        }
        sums.push(s);
    }
    counts
}

/// Unbiased per-size estimates of the same counts from random s-subsets.
pub fn subset_sum_counts_sampled(
    a: &GF2Matrix,
    alpha: &BitVec,
    sizes: std::ops::RangeInclusive<usize>,
    samples_per_size: usize,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<usize, f64> {
    let n = a.nrows();
    let mut out = BTreeMap::new();
    for s in sizes {
        if s == 0 || s >= n {
            continue;
        }
        let mut hits = 0usize;
        for _ in 0..samples_per_size {
            let rows = sample_k_subset(rng, n, s);
            let mut sum = BitVec::zeros(a.ncols());
            for &r in &rows {
                sum.xor_assign(a.row(r));
            }
            if sum == *alpha {
                hits += 1;
            }
        }
        let total = ln_choose(n as u64, s as u64).exp();
        out.insert(s, total * hits as f64 / samples_per_size as f64);
    }
    out
}

fn run_subset_sums(
    spec: &ExperimentSpec,
    records: &mut Vec<TrialRecord>,
    verdicts: &mut Vec<Verdict>,
) -> Result<(), HarnessError> {
    let p = &spec.params;
    let alpha = parse_alpha(p.alpha.as_deref(), p.m)?;
    let exhaustive = p.n <= 20;
    let s0 = ((p.n as f64 * (-(p.k as f64)).exp()).ceil() as usize)
        .max(1)
        .min(p.n - 1);
    for t in 0..spec.trials {
        let seed = trial_seed(spec.seed, t as u64);
        let a = sample_matrix(&ModelParams {
            n: p.n,
            m: p.m,
            k: p.k,
            seed,
        });
        let mut values = BTreeMap::new();
        values.insert("s0".into(), s0 as f64);
        if exhaustive {
            let counts = subset_sum_counts_exhaustive(&a, &alpha);
            let total: usize = counts.values().sum();
            values.insert("count_total".into(), total as f64);
            for (s, c) in counts {
                values.insert(format!("count_size_{s}"), c as f64);
            }
            values.insert("exhaustive".into(), 1.0);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = subset_sum_counts_sampled(
                &a,
                &alpha,
                1..=s0,
                p.samples_per_size.unwrap_or(2000),
                &mut rng,
            );
            let total: f64 = est.values().sum();
            values.insert("count_total".into(), total);
            for (s, c) in est {
                values.insert(format!("count_size_{s}"), c);
            }
            values.insert("exhaustive".into(), 0.0);
        }
        records.push(TrialRecord {
            trial: t,
            seed,
            values,
            failure: None,
        });
    }
    verdicts.push(Verdict {
        name: "counts_computed".into(),
        pass: true,
        detail: format!(
            "{} mode, sizes up to {}",
            if exhaustive { "exhaustive" } else { "sampled" },
            if exhaustive { p.n - 1 } else { s0 }
        ),
    });
    Ok(())
}

fn run_inverse_row_weights(
    spec: &ExperimentSpec,
    records: &mut Vec<TrialRecord>,
    verdicts: &mut Vec<Verdict>,
) -> Result<(), HarnessError> {
    let p = &spec.params;
    let cfg = PipelineConfig::new(p.k, p.support_multiplier, p.zeta, p.omega);
    let mut total_violations = 0usize;
    let mut failures = 0usize;
    for t in 0..spec.trials {
        let seed = trial_seed(spec.seed, t as u64);
        let a = sample_matrix(&ModelParams {
            n: p.n,
            m: p.m,
            k: p.k,
            seed,
        });
        let mut trace = PipelineTrace::default();
        match prepare_basis(&a, &cfg, &mut trace) {
            Ok(arts) => {
                let lo = arts.eps0 * arts.n2 as f64;
                let hi = arts.n2 as f64 - lo;
                let mut violations = 0usize;
                let mut min_w = usize::MAX;
                let mut max_w = 0usize;
                for r in 0..arts.n2 {
                    let w = arts.b_inv.row(r).count_ones();
                    min_w = min_w.min(w);
                    max_w = max_w.max(w);
                    if (w as f64) < lo || (w as f64) > hi {
                        violations += 1;
                    }
                }
                total_violations += violations;
                let mut values = BTreeMap::new();
                values.insert("n2".into(), arts.n2 as f64);
                values.insert("eps0".into(), arts.eps0);
                values.insert("violations".into(), violations as f64);
                values.insert("min_weight".into(), min_w as f64);
                values.insert("max_weight".into(), max_w as f64);
                records.push(TrialRecord {
                    trial: t,
                    seed,
                    values,
                    failure: None,
                });
            }
            Err(e) => {
                failures += 1;
                records.push(TrialRecord {
                    trial: t,
                    seed,
                    values: BTreeMap::new(),
                    failure: Some(format!("{}: {}", e.stage, e.error)),
                });
            }
        }
    }
    verdicts.push(Verdict {
        name: "no_row_weight_violations".into(),
        pass: total_violations == 0 && failures == 0,
        detail: format!("{total_violations} violations, {failures} failed trials"),
    });
    Ok(())
}

/// Exact probability that a uniform k-subset of [n] meets each of `planted`
/// disjoint blocks of size `a` an odd number of times.
pub fn planted_match_probability(n: usize, k: usize, a: usize, planted: usize) -> f64 {
    assert!(planted * a <= n);
    let rest = (n - planted * a) as u64;
    let ln_total = ln_choose(n as u64, k as u64);
    let mut p = 0.0f64;
    // odd counts per block, remainder outside all blocks
    let mut odds = vec![1usize; planted];
    loop {
        let used: usize = odds.iter().sum();
        if used <= k {
            let mut ln_term = -ln_total;
            for &o in &odds {
                ln_term += ln_choose(a as u64, o as u64);
            }
            ln_term += ln_choose(rest, (k - used) as u64);
            if ln_term.is_finite() {
                p += ln_term.exp();
            }
        }
        // next odd-count vector (each entry steps by 2 up to a)
        let mut i = 0;
        loop {
            if i == planted {
                return p;
            }
            odds[i] += 2;
            if odds[i] <= a && odds[i] <= k {
                break;
            }
            odds[i] = 1;
            i += 1;
        }
    }
}

fn run_candidate_probability(
    spec: &ExperimentSpec,
    records: &mut Vec<TrialRecord>,
    predictions: &mut Vec<Prediction>,
    verdicts: &mut Vec<Verdict>,
) -> Result<(), HarnessError> {
    let p = &spec.params;
    let eps1 = p
        .eps1
        .ok_or_else(|| HarnessError::BadParams("candidate_probability needs eps1".into()))?;
    let planted = 3usize;
    let a = (eps1 * p.n as f64).ceil() as usize;
    if planted * a > p.n {
        return Err(HarnessError::BadParams("planted atoms exceed n".into()));
    }
    let columns = p.columns.unwrap_or(1_000_000);
    let p_exact = planted_match_probability(p.n, p.k, a, planted);
    let floor = eps1.powi(p.k as i32);
    predictions.push(Prediction {
        name: "match_probability".into(),
        value: p_exact,
        source: "hypergeometric".into(),
    });
    predictions.push(Prediction {
        name: "match_probability_floor".into(),
        value: floor,
        source: "density_power".into(),
    });
    let sigma = (p_exact * (1.0 - p_exact) / columns as f64).sqrt();
    let mut all_in_3sigma = true;
    let mut all_above_floor = true;
    for t in 0..spec.trials {
        let seed = trial_seed(spec.seed, t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // block id per element: 0..planted for atoms, none otherwise
        let mut hits = 0usize;
        for _ in 0..columns {
            let subset = sample_k_subset(&mut rng, p.n, p.k);
            let mut parity = [0u8; 16];
            for &e in &subset {
                if e < planted * a {
                    parity[e / a] ^= 1;
                }
            }
            if (0..planted).all(|b| parity[b] == 1) {
                hits += 1;
            }
        }
        let freq = hits as f64 / columns as f64;
        if (freq - p_exact).abs() > 3.0 * sigma {
            all_in_3sigma = false;
        }
        if freq < floor {
            all_above_floor = false;
        }
        let mut values = BTreeMap::new();
        values.insert("matches".into(), hits as f64);
        values.insert("frequency".into(), freq);
        records.push(TrialRecord {
            trial: t,
            seed,
            values,
            failure: None,
        });
    }
    verdicts.push(Verdict {
        name: "within_3_sigma_of_exact".into(),
        pass: all_in_3sigma,
        detail: format!("exact {p_exact:.6e}, sigma {sigma:.2e}"),
    });
    verdicts.push(Verdict {
        name: "frequency_at_least_floor".into(),
        pass: all_above_floor,
        detail: format!("floor {floor:.3e}"),
    });
    Ok(())
}

/// The target representations the end-to-end profiles know by name.
pub fn named_target(name: &str) -> Result<GF2Matrix, HarnessError> {
    match name {
        "fano" => Ok(BinaryMatroid::fano().rep().clone()),
        "single" => {
            let mut t = GF2Matrix::zeros(1, 1);
            t.set(0, 0, true);
            Ok(t)
        }
        other => Err(HarnessError::BadParams(format!("unknown target `{other}`"))),
    }
}

fn run_minor_end_to_end(
    spec: &ExperimentSpec,
    records: &mut Vec<TrialRecord>,
    verdicts: &mut Vec<Verdict>,
) -> Result<(), HarnessError> {
    let p = &spec.params;
    let target = named_target(p.target.as_deref().unwrap_or("fano"))?;
    let cfg = PipelineConfig::new(p.k, p.support_multiplier, p.zeta, p.omega);
    let target_matroid = BinaryMatroid::from_rep(target.clone());
    let mut successes = 0usize;
    let mut verified = 0usize;
    for t in 0..spec.trials {
        let seed = trial_seed(spec.seed, t as u64);
        let a = sample_matrix(&ModelParams {
            n: p.n,
            m: p.m,
            k: p.k,
            seed,
        });
        if p.k % 2 == 0 {
            // column parity forces the all-rows sum to vanish
            let mut sum = BitVec::zeros(p.m);
            for r in 0..p.n {
                sum.xor_assign(a.row(r));
            }
            assert!(sum.is_zero(), "even-k all-rows sum must be zero");
        }
        let (trace, result) = run_pipeline(&a, &target, &cfg);
        match result {
            Ok(cert) => {
                successes += 1;
                // independent re-check, not trusting the pipeline's own pass
                let whole = BinaryMatroid::from_rep(a.clone());
                let ok = whole
                    .verify_certificate(&cert, &target_matroid)
                    .unwrap_or(false);
                if ok {
                    verified += 1;
                }
                let mut values = BTreeMap::new();
                values.insert("success".into(), 1.0);
                values.insert("verified".into(), if ok { 1.0 } else { 0.0 });
                values.insert("n2".into(), trace.n2 as f64);
                values.insert("scanned".into(), trace.scanned as f64);
                records.push(TrialRecord {
                    trial: t,
                    seed,
                    values,
                    failure: None,
                });
            }
            Err(e) => {
                let mut values = BTreeMap::new();
                values.insert("success".into(), 0.0);
                records.push(TrialRecord {
                    trial: t,
                    seed,
                    values,
                    failure: Some(format!("{}: {}", e.stage, e.error)),
                });
            }
        }
    }
    verdicts.push(Verdict {
        name: "all_certificates_verify".into(),
        pass: verified == successes,
        detail: format!("{verified}/{successes} certificates verified"),
    });
    verdicts.push(Verdict {
        name: "at_least_one_success".into(),
        pass: successes >= 1,
        detail: format!("{successes}/{} trials succeeded", spec.trials),
    });
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(HarnessError::BadParams(format!("format `{other}`"))),
        }
    }
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => emit_csv(report),
    }
}

fn emit_csv(report: &ExperimentReport) -> String {
    let mut keys: Vec<&String> = report.aggregates.keys().collect();
    keys.sort();
    let mut out = String::new();
    out.push_str("trial,seed,failure");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{}",
            r.trial,
            r.seed,
            r.failure.as_deref().unwrap_or("").replace(',', ";")
        ));
        for k in &keys {
            out.push(',');
            if let Some(v) = r.values.get(*k) {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out.push_str("# aggregate,metric,mean,stddev,min,max\n");
    for (k, a) in &report.aggregates {
        out.push_str(&format!(
            "# aggregate,{},{},{},{},{}\n",
            k, a.mean, a.stddev, a.min, a.max
        ));
    }
    out.push_str(&format!("# success_rate,{}\n", report.success_rate));
    for p in &report.predictions {
        out.push_str(&format!("# prediction,{},{},{}\n", p.name, p.value, p.source));
    }
    for v in &report.verdicts {
        out.push_str(&format!(
            "# verdict,{},{},{}\n",
            v.name,
            v.pass,
            v.detail.replace(',', ";")
        ));
    }
    out
}

#[derive(Debug, Clone, Deserialize)]
pub struct Profile {
    pub kind: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub params: ExperimentParams,
}

fn default_trials() -> usize {
    1
}

const PROFILES_TOML: &str = include_str!("profiles.toml");

pub fn load_profile(name: &str) -> Result<Profile, HarnessError> {
    let all: BTreeMap<String, Profile> = toml::from_str(PROFILES_TOML)
        .map_err(|e| HarnessError::ProfileParse(e.to_string()))?;
    all.get(name)
        .cloned()
        .ok_or_else(|| HarnessError::UnknownProfile(name.to_string()))
}

pub fn profile_names() -> Vec<String> {
    let all: BTreeMap<String, Profile> =
        toml::from_str(PROFILES_TOML).expect("embedded profiles parse");
    all.keys().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec {
            kind,
            trials: 2,
            seed: 42,
            params: ExperimentParams {
                n: 200,
                m: 200,
                k: 3,
                d: Some(2),
                support_multiplier: 2,
                zeta: 0.5,
                omega: 500,
                target: Some("single".into()),
                alpha: Some("zero".into()),
                eps1: Some(0.1),
                columns: Some(10_000),
                samples_per_size: Some(200),
            },
        }
    }

    #[test]
    fn determinism_identical_reports() {
        let spec = small_spec(ExperimentKind::ColumnIndependence);
        let r1 = run_experiment(&spec).unwrap();
        let r2 = run_experiment(&spec).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn json_round_trip_byte_identical() {
        let spec = small_spec(ExperimentKind::ColumnIndependence);
        let report = run_experiment(&spec).unwrap();
        let s1 = emit_report(&report, ReportFormat::Json);
        let back: ExperimentReport = serde_json::from_str(&s1).unwrap();
        let s2 = emit_report(&back, ReportFormat::Json);
        assert_eq!(s1, s2);
    }

    #[test]
    fn csv_has_one_row_per_trial() {
        let spec = small_spec(ExperimentKind::ColumnIndependence);
        let report = run_experiment(&spec).unwrap();
        let csv = emit_report(&report, ReportFormat::Csv);
        let data_rows = csv
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("trial"))
            .count();
        assert_eq!(data_rows, spec.trials);
        assert!(csv.lines().any(|l| l.starts_with("# verdict")));
    }

    #[test]
    fn zero_trials_rejected() {
        let mut spec = small_spec(ExperimentKind::ColumnIndependence);
        spec.trials = 0;
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn subset_sums_exhaustive_small() {
        let mut spec = small_spec(ExperimentKind::SubsetSums);
        spec.params.n = 10;
        spec.params.m = 14;
        spec.trials = 1;
        let report = run_experiment(&spec).unwrap();
        assert!(report.records[0].values["exhaustive"] == 1.0);
        assert!(report.all_pass());
    }

    #[test]
    fn subset_sums_sampled_matches_exhaustive_in_expectation() {
        // n = 12, compare the sampled estimator with the exact per-size counts
        let a = sample_matrix(&ModelParams { n: 12, m: 6, k: 2, seed: 3 });
        let alpha = BitVec::zeros(6);
        let exact = subset_sum_counts_exhaustive(&a, &alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // heavy sampling so the estimate concentrates
        let est = subset_sum_counts_sampled(&a, &alpha, 1..=4, 60_000, &mut rng);
        for (s, e) in &est {
            let truth = *exact.get(s).unwrap_or(&0) as f64;
            let tol = 3.0 * (truth.max(1.0)).sqrt() + 1.0;
            assert!(
                (e - truth).abs() <= tol,
                "size {s}: estimate {e} vs exact {truth}"
            );
        }
    }

    #[test]
    fn planted_probability_against_direct_enumeration() {
        // tiny instance where the probability can be summed over all subsets
        let (n, k, a) = (9usize, 5usize, 2usize);
        let mut count = 0usize;
        let mut total = 0usize;
        // iterate all k-subsets of [n]
        fn rec(start: usize, left: usize, n: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
            if left == 0 {
                f(chosen);
                return;
            }
            for v in start..=n - left {
                chosen.push(v);
                rec(v + 1, left - 1, n, chosen, f);
                chosen.pop();
            }
        }
        rec(0, k, n, &mut Vec::new(), &mut |subset: &[usize]| {
            total += 1;
            let mut parity = [0u8; 3];
            for &e in subset {
                if e < 3 * a {
                    parity[e / a] ^= 1;
                }
            }
            if parity.iter().all(|&p| p == 1) {
                count += 1;
            }
        });
        let exact = planted_match_probability(n, k, a, 3);
        let direct = count as f64 / total as f64;
        assert!((exact - direct).abs() < 1e-12, "{exact} vs {direct}");
    }

    #[test]
    fn trial_seed_mixing_changes_with_trial() {
        let s: Vec<u64> = (0..10).map(|t| trial_seed(7, t)).collect();
        let mut uniq = s.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 10);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(18, 20);
        assert!(lo < 0.9 && 0.9 < hi);
        assert!(lo > 0.6);
    }

    #[test]
    fn profiles_parse_and_resolve() {
        let names = profile_names();
        assert!(names.iter().any(|n| n == "fano-small"));
        assert!(names.iter().any(|n| n == "core-k30"));
        for n in names {
            let prof = load_profile(&n).unwrap();
            ExperimentKind::parse(&prof.kind).unwrap();
        }
    }

    #[test]
    fn minor_end_to_end_single_target() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::MinorEndToEnd,
            trials: 2,
            seed: 5,
            params: ExperimentParams {
                n: 400,
                m: 9000,
                k: 5,
                d: None,
                support_multiplier: 2,
                zeta: 0.5,
                omega: 400,
                target: Some("single".into()),
                alpha: None,
                eps1: None,
                columns: None,
                samples_per_size: None,
            },
        };
        let report = run_experiment(&spec).unwrap();
        assert!(report.all_pass(), "{:?}", report.verdicts);
        assert!(report.success_rate > 0.0);
    }

    #[test]
    fn inverse_row_weights_small() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::InverseRowWeights,
            trials: 2,
            seed: 11,
            params: ExperimentParams {
                n: 400,
                m: 9000,
                k: 5,
                d: None,
                support_multiplier: 2,
                zeta: 0.5,
                omega: 400,
                target: None,
                alpha: None,
                eps1: None,
                columns: None,
                samples_per_size: None,
            },
        };
        let report = run_experiment(&spec).unwrap();
        assert!(report.all_pass(), "{:?}", report.verdicts);
    }
}
