//! The constructive minor-finding procedure: peel a dense core to get B₁,
//! extend it to a nonsingular basis B, invert, pick a row set R whose
//! complements share many common zeros, partition column indices into atoms,
//! solve for target sign patterns, then scan fresh columns until every target
//! column has been matched. The output is a delete/contract certificate that
//! the matroid module can check independently.

use crate::gf2::{BitVec, GF2Matrix};
use crate::hypergraph::{core_prediction, CorePrediction, Hypergraph};
use crate::matroid::{BinaryMatroid, MinorCertificate};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Most atoms a partition may have: 2^K columns in the sign matrix.
pub const MAX_SELECTED_ROWS: usize = 16;

#[derive(Debug, Clone, Error, Serialize, Deserialize)]
pub enum StageError {
    #[error("core is empty (predicted x = {})", prediction.x)]
    EmptyCore { prediction: CorePrediction },
    #[error("needed {needed} support columns, matrix exhausted after {found}")]
    InsufficientColumns { needed: usize, found: usize },
    #[error("basis rank {rank}, need {need}")]
    RankDeficient { rank: usize, need: usize },
    #[error("row-selection intersection {achieved} below bound {required}")]
    BoundUnmet { achieved: usize, required: f64 },
    #[error("sign matrix rank {rank} < {k}")]
    RankDeficientD { rank: usize, k: usize },
    #[error("no solution of weight <= {nu} for target column {target_col}")]
    NoAdmissibleSolution { target_col: usize, nu: usize },
    #[error("scan budget spent: matched {matched} of {needed}")]
    BudgetExhausted {
        matched: usize,
        needed: usize,
        matches: Vec<Option<usize>>,
    },
    #[error("no single-row deletion restores full row rank")]
    NoRemovableRow,
    #[error("bad input: {0}")]
    InvalidInput(String),
    #[error("emitted certificate failed verification")]
    VerificationFailed,
}

/// A failed trial: which stage gave up and why. Failures are data; the
/// harness aggregates them instead of aborting.
#[derive(Debug, Clone, Error, Serialize, Deserialize)]
#[error("stage {stage}: {error}")]
pub struct StageFailure {
    pub stage: String,
    pub error: StageError,
}

fn fail(stage: &str, error: StageError) -> StageFailure {
    StageFailure {
        stage: stage.to_string(),
        error,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Ones per column of the input matrix.
    pub k: usize,
    /// Collect `support_multiplier * n` support columns for the basis extension.
    pub support_multiplier: usize,
    /// Core-density parameter for the second peeling, in (0, 1).
    pub zeta: f64,
    /// Fraction of n used for the initial block X.
    pub m1_fraction: f64,
    /// B₁ keeps the ceil(fraction * k)-core.
    pub core_threshold_fraction: f64,
    /// Row-weight floor for admitting rows of B⁻¹; None picks
    /// max(e^{-k}/2, 1/n₂) at run time.
    pub eps0: Option<f64>,
    /// Candidate-scan budget.
    pub omega: usize,
    /// Run the even-k row-deletion adjustment.
    pub even_k_mode: bool,
}

impl PipelineConfig {
    pub fn new(k: usize, support_multiplier: usize, zeta: f64, omega: usize) -> Self {
        assert!(zeta > 0.0 && zeta < 1.0, "zeta must lie in (0,1)");
        assert!(omega >= 1);
        PipelineConfig {
            k,
            support_multiplier,
            zeta,
            m1_fraction: 0.25,
            core_threshold_fraction: 0.1,
            eps0: None,
            omega,
            even_k_mode: k % 2 == 0,
        }
    }

    fn core_threshold(&self) -> usize {
        ((self.core_threshold_fraction * self.k as f64).ceil() as usize).max(1)
    }

    fn second_threshold(&self) -> usize {
        ((self.zeta * self.support_multiplier as f64 * self.k as f64).ceil() as usize).max(1)
    }
}

/// Atom σ ∈ {0,1}^K holds the column indices j with j ∈ S_i exactly for the
/// bits i set in σ. Atoms partition the index set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomPartition {
    pub sigma_of_index: Vec<u32>,
    pub atom_sizes: Vec<usize>,
    pub large_threshold: f64,
}

impl AtomPartition {
    pub fn is_large(&self, sigma: usize) -> bool {
        self.atom_sizes[sigma] as f64 >= self.large_threshold
    }
}

/// K × 2^K 0/1 matrix: row i marks the large atoms contained in S_i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignMatrix {
    pub k: usize,
    pub rows: Vec<Vec<u8>>,
}

impl SignMatrix {
    pub fn entry(&self, i: usize, sigma: usize) -> bool {
        self.rows[i][sigma] == 1
    }

    pub fn to_matrix(&self) -> GF2Matrix {
        let mut m = GF2Matrix::zeros(self.k, 1 << self.k);
        for (i, row) in self.rows.iter().enumerate() {
            for (sigma, &e) in row.iter().enumerate() {
                if e == 1 {
                    m.set(i, sigma, true);
                }
            }
        }
        m
    }
}

/// Everything a trial learned, plus the heavy intermediates (not serialized).
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct PipelineTrace {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub n2: usize,
    pub m2: usize,
    pub n3: usize,
    pub m3: usize,
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub l_cols: Vec<usize>,
    pub viewed: usize,
    pub eps0: f64,
    pub eps1: f64,
    pub row_weight_violations: usize,
    pub removed_row: Option<usize>,
    pub r_rows: Vec<usize>,
    pub atoms: Option<AtomPartition>,
    pub d: Option<SignMatrix>,
    pub solutions: Vec<Vec<usize>>,
    pub matches: Vec<usize>,
    pub scanned: usize,
    pub stage_timings: Vec<(String, f64)>,
    #[serde(skip)]
    pub b1: Option<GF2Matrix>,
    #[serde(skip)]
    pub b: Option<GF2Matrix>,
    #[serde(skip)]
    pub b_inv: Option<GF2Matrix>,
    #[serde(skip)]
    pub row_supports: Vec<BitVec>,
}

/// Peels the first ⌊n·m1_fraction⌋ columns to their core. Returns the core
/// submatrix, its row indices, and the surviving column indices.
pub fn build_b1(
    a: &GF2Matrix,
    cfg: &PipelineConfig,
) -> Result<(GF2Matrix, Vec<usize>, Vec<usize>), StageError> {
    let n = a.nrows();
    let m1 = ((n as f64) * cfg.m1_fraction).floor() as usize;
    if m1 == 0 || m1 > a.ncols() {
        return Err(StageError::InvalidInput(format!(
            "m1 = {m1} out of range for {} columns",
            a.ncols()
        )));
    }
    let h = Hypergraph::from_columns(a, 0..m1)
        .map_err(|e| StageError::InvalidInput(e.to_string()))?;
    if h.k != cfg.k {
        return Err(StageError::InvalidInput(format!(
            "columns have {} ones, config says {}",
            h.k, cfg.k
        )));
    }
    let d = cfg.core_threshold();
    let core = h.d_core(d);
    if core.vertices.is_empty() {
        let c = cfg.k as f64 * m1 as f64 / n as f64;
        return Err(StageError::EmptyCore {
            prediction: core_prediction(c, cfg.k, d),
        });
    }
    let b1 = a.submatrix(&core.vertices, &core.edge_indices);
    Ok((b1, core.vertices, core.edge_indices))
}

/// Scans columns left to right from `start`, keeping the first `count` whose
/// support lies inside the mask. Returns the kept indices and the high-water
/// mark (first unviewed column).
pub fn collect_support_columns(
    a: &GF2Matrix,
    mask: &BitVec,
    start: usize,
    count: usize,
) -> Result<(Vec<usize>, usize), StageError> {
    assert!(count >= 1);
    let mut kept = Vec::with_capacity(count.min(a.ncols()));
    for j in start..a.ncols() {
        if a.column_support(j).iter().all(|&r| mask.get(r)) {
            kept.push(j);
            if kept.len() == count {
                return Ok((kept, j + 1));
            }
        }
    }
    Err(StageError::InsufficientColumns {
        needed: count,
        found: kept.len(),
    })
}

/// Extends the B₁ columns with greedily chosen support columns to a square
/// nonsingular matrix; B₁'s columns come first. Columns are given in the
/// working row space along with their global indices.
pub fn build_basis(
    b1_cols: &[(usize, BitVec)],
    l1_cols: &[(usize, BitVec)],
    n2: usize,
) -> Result<(GF2Matrix, GF2Matrix, Vec<usize>), StageError> {
    let mut basis: Vec<BitVec> = Vec::new(); // elimination state, not the columns
    let mut chosen: Vec<(usize, BitVec)> = Vec::new();
    let push = |col: &(usize, BitVec), basis: &mut Vec<BitVec>, chosen: &mut Vec<(usize, BitVec)>| {
        let mut v = col.1.clone();
        for b in basis.iter() {
            let pivot = b.iter_ones().next().expect("nonzero");
            if v.get(pivot) {
                v.xor_assign(b);
            }
        }
        if v.is_zero() {
            false
        } else {
            basis.push(v);
            chosen.push(col.clone());
            true
        }
    };
    for col in b1_cols {
        if !push(col, &mut basis, &mut chosen) {
            // the initial block is expected to be linearly independent
            return Err(StageError::RankDeficient {
                rank: basis.len(),
                need: n2,
            });
        }
    }
    for col in l1_cols {
        if basis.len() == n2 {
            break;
        }
        push(col, &mut basis, &mut chosen);
    }
    if basis.len() < n2 {
        return Err(StageError::RankDeficient {
            rank: basis.len(),
            need: n2,
        });
    }
    let b = GF2Matrix::from_columns(n2, &chosen.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
    let b_inv = b.invert().map_err(|_| StageError::RankDeficient {
        rank: n2 - 1,
        need: n2,
    })?;
    Ok((b, b_inv, chosen.into_iter().map(|c| c.0).collect()))
}

#[derive(Debug, Clone)]
pub struct SelectedRows {
    pub rows: Vec<usize>,
    pub intersection: BitVec,
    pub bound: f64,
}

/// Picks r rows whose complements share a large intersection, following the
/// pairing argument: sets at stage j are intersections of 2^j complements;
/// two stage-j sets merge when they overlap in at least δ_{j+1}·n elements,
/// with δ_0 = δ and δ_{j+1} = δ_j²/4.
pub fn select_rows(
    complements: &[(usize, BitVec)],
    delta: f64,
    n: usize,
    r: usize,
) -> Result<SelectedRows, StageError> {
    assert!(r >= 1);
    let eligible: Vec<&(usize, BitVec)> = complements
        .iter()
        .filter(|(_, x)| x.count_ones() as f64 >= delta * n as f64)
        .collect();
    if r == 1 {
        let best = eligible
            .iter()
            .max_by_key(|(_, x)| x.count_ones())
            .ok_or(StageError::BoundUnmet {
                achieved: 0,
                required: delta * n as f64 / 2.0,
            })?;
        return Ok(SelectedRows {
            rows: vec![best.0],
            intersection: best.1.clone(),
            bound: delta * n as f64 / 2.0,
        });
    }
    let s = (r as f64).log2().ceil() as usize;
    let mut deltas = vec![delta];
    for _ in 0..s {
        let last = *deltas.last().unwrap();
        deltas.push(last * last / 4.0);
    }
    let mut next = 0usize;
    let final_set = build_level(s, &deltas, n, &eligible, &mut next).ok_or_else(|| {
        StageError::BoundUnmet {
            achieved: 0,
            required: deltas[s] * n as f64 / (2.0 * r as f64),
        }
    })?;
    let mut rows: Vec<usize> = final_set.1[..r].to_vec();
    rows.sort_unstable();
    let mut inter = complements
        .iter()
        .find(|(id, _)| *id == rows[0])
        .unwrap()
        .1
        .clone();
    for &rid in &rows[1..] {
        let x = &complements.iter().find(|(id, _)| *id == rid).unwrap().1;
        inter = inter.and(x);
    }
    let bound = deltas[s] * n as f64 / (2.0 * r as f64);
    if (inter.count_ones() as f64) < bound {
        return Err(StageError::BoundUnmet {
            achieved: inter.count_ones(),
            required: bound,
        });
    }
    Ok(SelectedRows {
        rows,
        intersection: inter,
        bound,
    })
}

/// Builds one stage-`level` set: an intersection of 2^level complements with
/// size ≥ δ_level·n, consuming fresh complements from the shared cursor so no
/// complement is reused.
fn build_level(
    level: usize,
    deltas: &[f64],
    n: usize,
    pool: &[&(usize, BitVec)],
    next: &mut usize,
) -> Option<(BitVec, Vec<usize>)> {
    if level == 0 {
        let item = pool.get(*next)?;
        *next += 1;
        return Some((item.1.clone(), vec![item.0]));
    }
    let mut batch: Vec<(BitVec, Vec<usize>)> = Vec::new();
    loop {
        let y = build_level(level - 1, deltas, n, pool, next)?;
        for (i, b) in batch.iter().enumerate() {
            if y.0.intersection_size(&b.0) as f64 >= deltas[level] * n as f64 {
                let merged = y.0.and(&b.0);
                let mut ids = b.1.clone();
                ids.extend_from_slice(&y.1);
                let _ = i;
                return Some((merged, ids));
            }
        }
        batch.push(y);
    }
}

/// Assigns each column index its atom σ (bit i set iff the index lies in
/// supports[i]) and fills the sign matrix over the large atoms.
pub fn build_partition(
    supports: &[BitVec],
    eps1: f64,
    n: usize,
) -> Result<(AtomPartition, SignMatrix), StageError> {
    let k = supports.len();
    assert!(k >= 1 && k <= MAX_SELECTED_ROWS, "need 1..={MAX_SELECTED_ROWS} rows");
    let mut sigma_of_index = vec![0u32; n];
    let mut atom_sizes = vec![0usize; 1 << k];
    for j in 0..n {
        let mut sigma = 0u32;
        for (i, s) in supports.iter().enumerate() {
            if s.get(j) {
                sigma |= 1 << i;
            }
        }
        sigma_of_index[j] = sigma;
        atom_sizes[sigma as usize] += 1;
    }
    let large_threshold = eps1 * n as f64;
    let atoms = AtomPartition {
        sigma_of_index,
        atom_sizes,
        large_threshold,
    };
    let mut rows = vec![vec![0u8; 1 << k]; k];
    for sigma in 0..(1usize << k) {
        if !atoms.is_large(sigma) {
            continue;
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if sigma & (1 << i) != 0 {
                row[sigma] = 1;
            }
        }
    }
    let d = SignMatrix { k, rows };
    let rank = d.to_matrix().rank();
    if rank < k {
        return Err(StageError::RankDeficientD { rank, k });
    }
    Ok((atoms, d))
}

/// Finds v with D·v = m_j, supported only on large atoms, of weight ≤ nu;
/// minimum weight, ties broken lexicographically on the support.
pub fn solve_target(
    d: &SignMatrix,
    atoms: &AtomPartition,
    m_j: &BitVec,
    nu: usize,
    target_col: usize,
) -> Result<BitVec, StageError> {
    let k = d.k;
    assert_eq!(m_j.len(), k);
    let target: u32 = (0..k).filter(|&i| m_j.get(i)).map(|i| 1u32 << i).sum();
    let cols: Vec<(usize, u32)> = (0..(1usize << k))
        .filter(|&s| atoms.is_large(s))
        .map(|s| {
            let syn: u32 = (0..k).filter(|&i| d.entry(i, s)).map(|i| 1u32 << i).sum();
            (s, syn)
        })
        .collect();
    // layered search by weight; per syndrome keep the lex-least support seen
    // at its first (minimal) weight
    let mut seen: std::collections::HashMap<u32, Vec<usize>> = std::collections::HashMap::new();
    seen.insert(0, Vec::new());
    let mut frontier: Vec<(u32, Vec<usize>)> = vec![(0, Vec::new())];
    if target == 0 {
        return Ok(BitVec::zeros(1 << k));
    }
    for _ in 1..=nu {
        let mut layer: std::collections::HashMap<u32, Vec<usize>> =
            std::collections::HashMap::new();
        for (syn, support) in &frontier {
            let min_next = support.last().map_or(0, |&l| l + 1);
            for &(sigma, csyn) in cols.iter().filter(|&&(s, _)| s >= min_next) {
                let nsyn = syn ^ csyn;
                if seen.contains_key(&nsyn) {
                    continue;
                }
                let mut ns = support.clone();
                ns.push(sigma);
                match layer.get(&nsyn) {
                    Some(prev) if *prev <= ns => {}
                    _ => {
                        layer.insert(nsyn, ns);
                    }
                }
            }
        }
        if let Some(support) = layer.get(&target) {
            let mut v = BitVec::zeros(1 << k);
            for &s in support {
                v.set(s, true);
            }
            return Ok(v);
        }
        frontier = layer.into_iter().collect();
        frontier.sort();
        for (syn, support) in &frontier {
            seen.insert(*syn, support.clone());
        }
        if frontier.is_empty() {
            break;
        }
    }
    Err(StageError::NoAdmissibleSolution { target_col, nu })
}

/// Inputs for the candidate scan, all borrowed from the assembled trace.
pub struct ScanContext<'a> {
    pub a: &'a GF2Matrix,
    /// global row index → position in the working row space, if present
    pub row_pos: &'a [Option<usize>],
    /// rows R of B⁻¹, in R order
    pub r_rows: Vec<BitVec>,
    pub atoms: &'a AtomPartition,
    pub d: &'a SignMatrix,
    /// even-k: accepted columns must be orthogonal to this working-space vector
    pub parity_check: Option<BitVec>,
    pub start: usize,
    pub omega: usize,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    /// global column index matched to each target column
    pub matches: Vec<usize>,
    pub scanned: usize,
    pub viewed: usize,
}

/// Scans unviewed columns whose support lies in the working rows, charging
/// each against the ω budget, and assigns each to the first unmatched target
/// column whose pattern equals φ_R(B⁻¹c).
pub fn scan_candidates(
    ctx: &ScanContext,
    targets: &[u32],
) -> Result<ScanOutcome, StageError> {
    let kk = ctx.d.k;
    let mut matches: Vec<Option<usize>> = vec![None; targets.len()];
    let mut unmatched = targets.len();
    let mut scanned = 0usize;
    for j in ctx.start..ctx.a.ncols() {
        let support = ctx.a.column_support(j);
        let Some(local): Option<Vec<usize>> =
            support.iter().map(|&r| ctx.row_pos[r]).collect()
        else {
            continue; // touches rows outside B
        };
        if scanned == ctx.omega {
            break;
        }
        scanned += 1;
        if let Some(z) = &ctx.parity_check {
            let parity = local.iter().filter(|&&p| z.get(p)).count() % 2;
            if parity == 1 {
                continue;
            }
        }
        let mut phi = 0u32;
        for (i, row) in ctx.r_rows.iter().enumerate() {
            let bit = local.iter().filter(|&&p| row.get(p)).count() % 2;
            phi |= (bit as u32) << i;
        }
        #[cfg(debug_assertions)]
        {
            // candidates admit the sign-matrix route; both must agree
            let candidate = local.iter().all(|&p| {
                ctx.atoms
                    .is_large(ctx.atoms.sigma_of_index[p] as usize)
            });
            if candidate {
                let mut c_r = vec![0u8; 1 << kk];
                for &p in &local {
                    c_r[ctx.atoms.sigma_of_index[p] as usize] ^= 1;
                }
                for i in 0..kk {
                    let via_d: u8 = (0..(1usize << kk))
                        .filter(|&s| ctx.d.entry(i, s))
                        .map(|s| c_r[s])
                        .fold(0, |a, b| a ^ b);
                    debug_assert_eq!(via_d, ((phi >> i) & 1) as u8);
                }
            }
        }
        if let Some(t) = (0..targets.len()).find(|&t| matches[t].is_none() && targets[t] == phi) {
            matches[t] = Some(j);
            unmatched -= 1;
            if unmatched == 0 {
                return Ok(ScanOutcome {
                    matches: matches.into_iter().map(Option::unwrap).collect(),
                    scanned,
                    viewed: j + 1,
                });
            }
        }
    }
    Err(StageError::BudgetExhausted {
        matched: targets.len() - unmatched,
        needed: targets.len(),
        matches,
    })
}

/// k even only: the rows of the second-core matrix sum to zero, so its rank
/// tops out one short. Returns the row (local index) whose removal leaves an
/// independent set, taken from the one-dimensional left null space.
pub fn even_k_adjust(k: usize, l1: &GF2Matrix) -> Result<Option<usize>, StageError> {
    if k % 2 == 1 {
        return Ok(None);
    }
    let n3 = l1.nrows();
    let ech = l1.echelon();
    if ech.rank == n3 {
        return Ok(None);
    }
    if ech.rank + 1 < n3 {
        return Err(StageError::NoRemovableRow);
    }
    // transform rows past the rank span the left null space; with rank n3-1
    // there is a single relation, and removing any row in it keeps the rest
    // independent
    let w = ech.transform.row(ech.rank);
    let i = w.iter_ones().next().ok_or(StageError::NoRemovableRow)?;
    Ok(Some(i))
}

/// Runs the full procedure and checks the certificate against the target
/// before returning it.
pub fn run_pipeline(
    a: &GF2Matrix,
    target: &GF2Matrix,
    cfg: &PipelineConfig,
) -> (PipelineTrace, Result<MinorCertificate, StageFailure>) {
    let mut trace = PipelineTrace {
        n: a.nrows(),
        m: a.ncols(),
        k: cfg.k,
        ..Default::default()
    };
    let result = run_stages(a, target, cfg, &mut trace);
    (trace, result)
}

/// Products of the first half of the procedure, up to the inverted basis.
pub struct BasisArtifacts {
    pub i1: Vec<usize>,
    /// global row index → position in the working row space
    pub row_pos: Vec<Option<usize>>,
    pub b: GF2Matrix,
    pub b_inv: GF2Matrix,
    pub basis_global: Vec<usize>,
    pub viewed: usize,
    pub removed_row: Option<usize>,
    pub eps0: f64,
    pub n2: usize,
}

fn lap(name: &str, trace: &mut PipelineTrace, timer: &mut Instant) {
    trace
        .stage_timings
        .push((name.to_string(), timer.elapsed().as_secs_f64()));
    *timer = Instant::now();
}

/// Runs the stages through basis inversion: core peelings, support-column
/// collection, the even-k row deletion, and the greedy basis extension.
pub fn prepare_basis(
    a: &GF2Matrix,
    cfg: &PipelineConfig,
    trace: &mut PipelineTrace,
) -> Result<BasisArtifacts, StageFailure> {
    let n = a.nrows();
    let mut timer = Instant::now();

    // B₁ from the core of the initial block
    let (_, mut i1, b1_global) = build_b1(a, cfg).map_err(|e| fail("build_b1", e))?;
    trace.m2 = b1_global.len();
    lap("build_b1", trace, &mut timer);

    // support columns for the extension
    let mut i1_mask = BitVec::zeros(n);
    for &r in &i1 {
        i1_mask.set(r, true);
    }
    let m1 = ((n as f64) * cfg.m1_fraction).floor() as usize;
    let want = cfg.support_multiplier * n;
    let (l_cols, viewed) = collect_support_columns(a, &i1_mask, m1, want)
        .map_err(|e| fail("collect_support_columns", e))?;
    trace.l_cols = l_cols.clone();
    lap("collect_support_columns", trace, &mut timer);

    // second peeling: keep the densely covered rows
    let pos_in_i1: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (p, &r) in i1.iter().enumerate() {
            v[r] = Some(p);
        }
        v
    };
    let edges: Vec<Vec<usize>> = l_cols
        .iter()
        .map(|&j| {
            a.column_support(j)
                .iter()
                .map(|&r| pos_in_i1[r].expect("support inside I1"))
                .collect()
        })
        .collect();
    let h2 = Hypergraph::from_edges(i1.len(), cfg.k, edges)
        .map_err(|e| fail("second_core", StageError::InvalidInput(e.to_string())))?;
    let d2 = cfg.second_threshold();
    let core2 = h2.d_core(d2);
    if core2.vertices.is_empty() {
        let c = cfg.k as f64 * l_cols.len() as f64 / i1.len() as f64;
        return Err(fail(
            "second_core",
            StageError::EmptyCore {
                prediction: core_prediction(c, cfg.k, d2),
            },
        ));
    }
    let i2_in_i1 = core2.vertices.clone();
    let l1_global: Vec<usize> = core2.edge_indices.iter().map(|&e| l_cols[e]).collect();
    trace.n3 = i2_in_i1.len();
    trace.m3 = l1_global.len();
    lap("second_core", trace, &mut timer);

    // even k: the second-core rows sum to zero, drop one
    let mut removed_global: Option<usize> = None;
    if cfg.even_k_mode {
        let i2_global: Vec<usize> = i2_in_i1.iter().map(|&p| i1[p]).collect();
        let l1_on_i2 = a.submatrix(&i2_global, &l1_global);
        match even_k_adjust(cfg.k, &l1_on_i2).map_err(|e| fail("even_k_adjust", e))? {
            Some(local) => {
                removed_global = Some(i2_global[local]);
            }
            None => {}
        }
        lap("even_k_adjust", trace, &mut timer);
    }
    if let Some(rg) = removed_global {
        i1.retain(|&r| r != rg);
        i1_mask.set(rg, false);
    }
    trace.removed_row = removed_global;
    trace.i1 = i1.clone();
    trace.n2 = i1.len();
    trace.i2 = i2_in_i1.iter().map(|&p| p).collect();
    let n2 = i1.len();
    let row_pos: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (p, &r) in i1.iter().enumerate() {
            v[r] = Some(p);
        }
        v
    };
    let to_local = |j: usize| -> BitVec {
        let mut col = BitVec::zeros(n2);
        for &r in &a.column_support(j) {
            if let Some(p) = row_pos[r] {
                col.set(p, true);
            }
        }
        col
    };

    // basis: B₁'s columns first, then support columns until nonsingular
    let b1_cols: Vec<(usize, BitVec)> =
        b1_global.iter().map(|&j| (j, to_local(j))).collect();
    let l1_cols: Vec<(usize, BitVec)> =
        l1_global.iter().map(|&j| (j, to_local(j))).collect();
    let (b, b_inv, basis_global) =
        build_basis(&b1_cols, &l1_cols, n2).map_err(|e| fail("build_basis", e))?;
    lap("build_basis", trace, &mut timer);

    let eps0 = cfg
        .eps0
        .unwrap_or_else(|| (0.5 * (-(cfg.k as f64)).exp()).max(1.0 / n2 as f64));
    trace.eps0 = eps0;
    Ok(BasisArtifacts {
        i1,
        row_pos,
        b,
        b_inv,
        basis_global,
        viewed,
        removed_row: removed_global,
        eps0,
        n2,
    })
}

fn run_stages(
    a: &GF2Matrix,
    target: &GF2Matrix,
    cfg: &PipelineConfig,
    trace: &mut PipelineTrace,
) -> Result<MinorCertificate, StageFailure> {
    let nu = target.nrows();
    let mu = target.ncols();
    if target.rank() != nu {
        return Err(fail(
            "target",
            StageError::InvalidInput(format!("target rank {} < {nu} rows", target.rank())),
        ));
    }
    if cfg.k < nu {
        return Err(fail(
            "target",
            StageError::InvalidInput(format!("k = {} < target rows {nu}", cfg.k)),
        ));
    }
    let arts = prepare_basis(a, cfg, trace)?;
    let BasisArtifacts {
        row_pos,
        b,
        b_inv,
        basis_global,
        mut viewed,
        removed_row: removed_global,
        eps0,
        n2,
        ..
    } = arts;
    let mut timer = Instant::now();

    // row-weight gate, then the intersection argument picks R
    let lo = eps0 * n2 as f64;
    let hi = n2 as f64 - lo;
    let mut complements: Vec<(usize, BitVec)> = Vec::new();
    let mut violations = 0usize;
    for p in 0..n2 {
        let w = b_inv.row(p).count_ones() as f64;
        if w >= lo && w <= hi {
            complements.push((p, b_inv.row(p).complement()));
        } else {
            violations += 1;
        }
    }
    trace.row_weight_violations = violations;
    let selected =
        select_rows(&complements, eps0, n2, nu).map_err(|e| fail("select_rows", e))?;
    trace.r_rows = selected.rows.clone();
    lap("select_rows", trace, &mut timer);

    // atoms and the sign matrix over the selected rows
    let eps1 = eps0 * (2.0f64).powi(-2 * nu as i32);
    trace.eps1 = eps1;
    let supports: Vec<BitVec> = selected
        .rows
        .iter()
        .map(|&p| b_inv.row(p).clone())
        .collect();
    let (atoms, d) =
        build_partition(&supports, eps1, n2).map_err(|e| fail("build_partition", e))?;
    lap("build_partition", trace, &mut timer);

    // one admissible solution per target column, as a checked feasibility pass
    let mut solutions = Vec::with_capacity(mu);
    for j in 0..mu {
        let m_j = {
            let mut v = BitVec::zeros(nu);
            for i in 0..nu {
                if target.get(i, j) {
                    v.set(i, true);
                }
            }
            v
        };
        let v = solve_target(&d, &atoms, &m_j, nu, j).map_err(|e| fail("solve_target", e))?;
        solutions.push(v.iter_ones().collect::<Vec<_>>());
    }
    trace.solutions = solutions;
    lap("solve_target", trace, &mut timer);

    // even k: accepted columns must not disturb the removed row's relation
    let parity_check = removed_global.map(|rg| {
        let mut z = BitVec::zeros(n2);
        for (p, &gj) in basis_global.iter().enumerate() {
            if selected.rows.contains(&p) {
                continue;
            }
            if a.get(rg, gj) {
                z.xor_assign(b_inv.row(p));
            }
        }
        let _ = &z;
        z
    });

    // scan fresh columns for the target patterns
    if let Some(rg) = removed_global {
        // unviewed columns with a one in the removed row can never qualify;
        // they are filtered by the support test since the row left the mask
        let _ = rg;
    }
    let targets: Vec<u32> = (0..mu)
        .map(|j| {
            (0..nu)
                .filter(|&i| target.get(i, j))
                .map(|i| 1u32 << i)
                .sum()
        })
        .collect();
    let ctx = ScanContext {
        a,
        row_pos: &row_pos,
        r_rows: selected
            .rows
            .iter()
            .map(|&p| b_inv.row(p).clone())
            .collect(),
        atoms: &atoms,
        d: &d,
        parity_check,
        start: viewed,
        omega: cfg.omega,
    };
    let outcome = scan_candidates(&ctx, &targets).map_err(|e| fail("scan_candidates", e))?;
    viewed = outcome.viewed;
    trace.matches = outcome.matches.clone();
    trace.scanned = outcome.scanned;
    trace.viewed = viewed;
    trace.atoms = Some(atoms);
    trace.d = Some(d);
    lap("scan_candidates", trace, &mut timer);

    // assemble: contract the basis columns whose identity row is outside R,
    // keep the matches in target order, delete the rest
    let r_set: std::collections::HashSet<usize> = selected.rows.iter().copied().collect();
    let contract_set: Vec<u32> = basis_global
        .iter()
        .enumerate()
        .filter(|(p, _)| !r_set.contains(p))
        .map(|(_, &g)| g as u32)
        .collect();
    let kept: Vec<u32> = outcome.matches.iter().map(|&j| j as u32).collect();
    let used: std::collections::HashSet<u32> = contract_set
        .iter()
        .chain(kept.iter())
        .copied()
        .collect();
    let delete_set: Vec<u32> = (0..a.ncols() as u32).filter(|l| !used.contains(l)).collect();
    let cert = MinorCertificate {
        contract_set,
        delete_set,
        kept,
    };
    trace.b1 = None;
    trace.b = Some(b);
    trace.b_inv = Some(b_inv);

    let whole = BinaryMatroid::from_rep(a.clone());
    let target_m = BinaryMatroid::from_rep(target.clone());
    match whole.verify_certificate(&cert, &target_m) {
        Ok(true) => {
            lap("verify", trace, &mut timer);
            Ok(cert)
        }
        _ => Err(fail("verify", StageError::VerificationFailed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::ln_choose;
    use crate::sampler::{sample_matrix, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn build_b1_keeps_everything_when_degrees_suffice() {
        // 8 rows, m1 = 2 (n * 0.25), k = 4, every row covered
        let supports = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![0, 1, 2, 3]];
        let a = GF2Matrix::from_column_supports(8, &supports);
        let mut cfg = PipelineConfig::new(4, 1, 0.5, 1);
        cfg.core_threshold_fraction = 0.25; // threshold 1
        let (b1, i1, cols) = build_b1(&a, &cfg).unwrap();
        assert_eq!(i1, (0..8).collect::<Vec<_>>());
        assert_eq!(cols, vec![0, 1]);
        assert_eq!(b1.ncols(), 2);
    }

    #[test]
    fn collect_accepts_everything_under_full_mask() {
        let p = ModelParams { n: 30, m: 50, k: 3, seed: 5 };
        let a = sample_matrix(&p);
        let mask = BitVec::from_ones(30, &(0..30).collect::<Vec<_>>());
        let (cols, viewed) = collect_support_columns(&a, &mask, 10, 20).unwrap();
        assert_eq!(cols, (10..30).collect::<Vec<_>>());
        assert_eq!(viewed, 30);
    }

    #[test]
    fn collect_rate_matches_binomial_oracle_k1() {
        // k=1: a column is accepted iff its single one avoids the masked-out row
        let n = 50;
        let p = ModelParams { n, m: 40_000, k: 1, seed: 9 };
        let a = sample_matrix(&p);
        let mask = BitVec::from_ones(n, &(0..n - 1).collect::<Vec<_>>());
        let err = collect_support_columns(&a, &mask, 0, usize::MAX - 1);
        let found = match err {
            Err(StageError::InsufficientColumns { found, .. }) => found,
            other => panic!("expected exhaustion, got {other:?}"),
        };
        let rate = found as f64 / 40_000.0;
        let p_acc = (n - 1) as f64 / n as f64;
        let sigma = (p_acc * (1.0 - p_acc) / 40_000.0).sqrt();
        assert!((rate - p_acc).abs() < 3.0 * sigma, "rate {rate} vs {p_acc}");
    }

    #[test]
    fn collect_rate_matches_hypergeometric_probability() {
        let n = 60;
        let k = 4;
        let kept = 45usize;
        let m = 100_000;
        let p = ModelParams { n, m, k, seed: 31 };
        let a = sample_matrix(&p);
        let mask = BitVec::from_ones(n, &(0..kept).collect::<Vec<_>>());
        let found = match collect_support_columns(&a, &mask, 0, usize::MAX - 1) {
            Err(StageError::InsufficientColumns { found, .. }) => found,
            other => panic!("expected exhaustion, got {other:?}"),
        };
        let p_acc =
            (ln_choose(kept as u64, k as u64) - ln_choose(n as u64, k as u64)).exp();
        let rate = found as f64 / m as f64;
        let sigma = (p_acc * (1.0 - p_acc) / m as f64).sqrt();
        assert!((rate - p_acc).abs() < 3.0 * sigma, "rate {rate} vs {p_acc}");
    }

    #[test]
    fn basis_from_square_b1_is_b1() {
        let id = GF2Matrix::identity(4);
        let b1: Vec<(usize, BitVec)> = (0..4).map(|j| (j, id.column(j))).collect();
        let (b, b_inv, order) = build_basis(&b1, &[], 4).unwrap();
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert_eq!(b.multiply(&b_inv).unwrap(), GF2Matrix::identity(4));
    }

    #[test]
    fn basis_from_support_columns_alone() {
        let id = GF2Matrix::identity(3);
        let l1: Vec<(usize, BitVec)> = (0..3).map(|j| (10 + j, id.column(j))).collect();
        let (b, _, order) = build_basis(&[], &l1, 3).unwrap();
        assert_eq!(b, GF2Matrix::identity(3));
        assert_eq!(order, vec![10, 11, 12]);
    }

    #[test]
    fn basis_random_instance_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20;
        let l1: Vec<(usize, BitVec)> = (0..60)
            .map(|j| {
                let mut v = BitVec::zeros(n);
                for i in 0..n {
                    if rng.random::<bool>() {
                        v.set(i, true);
                    }
                }
                (j, v)
            })
            .collect();
        let (b, b_inv, _) = build_basis(&[], &l1, n).unwrap();
        assert_eq!(b.multiply(&b_inv).unwrap(), GF2Matrix::identity(n));
    }

    #[test]
    fn basis_rank_deficient_reported() {
        let col = BitVec::from_ones(3, &[0]);
        let l1 = vec![(0, col.clone()), (1, col.clone())];
        match build_basis(&[], &l1, 3) {
            Err(StageError::RankDeficient { rank: 1, need: 3 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn select_rows_full_complements() {
        let n = 40;
        let full = BitVec::from_ones(n, &(0..n).collect::<Vec<_>>());
        let comps: Vec<(usize, BitVec)> = (0..8).map(|i| (i, full.clone())).collect();
        let sel = select_rows(&comps, 0.5, n, 4).unwrap();
        assert_eq!(sel.rows.len(), 4);
        assert_eq!(sel.intersection.count_ones(), n);
    }

    #[test]
    fn select_rows_single_takes_largest() {
        let n = 30;
        let small = BitVec::from_ones(n, &(0..10).collect::<Vec<_>>());
        let big = BitVec::from_ones(n, &(0..25).collect::<Vec<_>>());
        let sel = select_rows(&[(0, small), (1, big)], 0.3, n, 1).unwrap();
        assert_eq!(sel.rows, vec![1]);
    }

    #[test]
    fn select_rows_guarantee_on_random_instances() {
        // the returned bound must hold, and an exhaustive search confirms the
        // instance admits it
        let n = 60;
        let r = 4;
        let delta = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let comps: Vec<(usize, BitVec)> = (0..12)
                .map(|i| {
                    let mut v = BitVec::zeros(n);
                    // density 0.4..0.9 keeps |X_i| >= delta n with room
                    let dens = 0.4 + 0.5 * rng.random::<f64>();
                    for j in 0..n {
                        if rng.random::<f64>() < dens {
                            v.set(j, true);
                        }
                    }
                    while (v.count_ones() as f64) < delta * n as f64 {
                        v.set(rng.random_range(0..n), true);
                    }
                    (i, v)
                })
                .collect();
            let sel = select_rows(&comps, delta, n, r).unwrap();
            assert!(sel.intersection.count_ones() as f64 >= sel.bound);
            // recompute the intersection from scratch
            let mut check = comps
                .iter()
                .find(|(id, _)| *id == sel.rows[0])
                .unwrap()
                .1
                .clone();
            for &rid in &sel.rows[1..] {
                check = check.and(&comps.iter().find(|(id, _)| *id == rid).unwrap().1);
            }
            assert_eq!(check.count_ones(), sel.intersection.count_ones());
            // exhaustive oracle: the best r-subset is at least as good
            let mut best = 0usize;
            for a in 0..comps.len() {
                for b in a + 1..comps.len() {
                    for c in b + 1..comps.len() {
                        for d in c + 1..comps.len() {
                            let inter = comps[a]
                                .1
                                .and(&comps[b].1)
                                .and(&comps[c].1)
                                .and(&comps[d].1);
                            best = best.max(inter.count_ones());
                        }
                    }
                }
            }
            assert!(best >= sel.intersection.count_ones());
            assert!(best as f64 >= sel.bound);
        }
    }

    #[test]
    fn partition_single_support() {
        let n = 20;
        let s1 = BitVec::from_ones(n, &(0..12).collect::<Vec<_>>());
        let (atoms, d) = build_partition(&[s1], 0.1, n).unwrap();
        assert_eq!(atoms.atom_sizes[1], 12);
        assert_eq!(atoms.atom_sizes[0], 8);
        assert!(d.entry(0, 1));
        assert!(!d.entry(0, 0));
    }

    #[test]
    fn partition_disjoint_pair_by_hand() {
        // 10 indices: S1 = {0..3}, S2 = {4..6}; atoms: 11 -> none,
        // 01 -> {0..3}, 10 -> {4..6}, 00 -> {7,8,9}
        let n = 10;
        let s1 = BitVec::from_ones(n, &[0, 1, 2, 3]);
        let s2 = BitVec::from_ones(n, &[4, 5, 6]);
        let (atoms, d) = build_partition(&[s1, s2], 0.2, n).unwrap();
        assert_eq!(atoms.atom_sizes, vec![3, 4, 3, 0]);
        assert_eq!(atoms.atom_sizes.iter().sum::<usize>(), n);
        assert!(d.entry(0, 0b01) && d.entry(1, 0b10));
        assert!(!d.entry(0, 0b11) && !d.entry(1, 0b11)); // small atom
        assert_eq!(d.to_matrix().rank(), 2);
    }

    #[test]
    fn partition_rank_failure_detected() {
        // identical supports make the two rows of D equal
        let n = 10;
        let s = BitVec::from_ones(n, &[0, 1, 2, 3, 4]);
        match build_partition(&[s.clone(), s], 0.1, n) {
            Err(StageError::RankDeficientD { rank: 1, k: 2 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solve_zero_target_is_zero() {
        let n = 16;
        let s1 = BitVec::from_ones(n, &(0..8).collect::<Vec<_>>());
        let s2 = BitVec::from_ones(n, &(4..12).collect::<Vec<_>>());
        let (atoms, d) = build_partition(&[s1, s2], 0.05, n).unwrap();
        let v = solve_target(&d, &atoms, &BitVec::zeros(2), 2, 0).unwrap();
        assert!(v.is_zero());
    }

    #[test]
    fn solve_matches_coset_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut checked = 0;
        while checked < 10 {
            // random supports over 40 indices, 3 rows
            let n = 40;
            let supports: Vec<BitVec> = (0..3)
                .map(|_| {
                    let mut v = BitVec::zeros(n);
                    for j in 0..n {
                        if rng.random::<bool>() {
                            v.set(j, true);
                        }
                    }
                    v
                })
                .collect();
            let Ok((atoms, d)) = build_partition(&supports, 0.05, n) else {
                continue;
            };
            checked += 1;
            for t in 0..8u32 {
                let mut m_j = BitVec::zeros(3);
                for i in 0..3 {
                    if t & (1 << i) != 0 {
                        m_j.set(i, true);
                    }
                }
                let got = solve_target(&d, &atoms, &m_j, 3, 0);
                // oracle: enumerate every subset of large atoms up to weight 3
                let large: Vec<usize> = (0..8).filter(|&s| atoms.is_large(s)).collect();
                let mut best: Option<Vec<usize>> = None;
                for mask in 0..(1usize << large.len()) {
                    let subset: Vec<usize> = large
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, &s)| s)
                        .collect();
                    if subset.len() > 3 {
                        continue;
                    }
                    let syn: u32 = subset
                        .iter()
                        .map(|&s| {
                            (0..3)
                                .filter(|&i| d.entry(i, s))
                                .map(|i| 1u32 << i)
                                .sum::<u32>()
                        })
                        .fold(0, |a, b| a ^ b);
                    if syn == t {
                        let better = match &best {
                            None => true,
                            Some(b) => {
                                subset.len() < b.len()
                                    || (subset.len() == b.len() && subset < *b)
                            }
                        };
                        if better {
                            best = Some(subset);
                        }
                    }
                }
                match (got, best) {
                    (Ok(v), Some(b)) => {
                        assert_eq!(v.iter_ones().collect::<Vec<_>>(), b, "target {t}");
                    }
                    (Err(StageError::NoAdmissibleSolution { .. }), None) => {}
                    (g, b) => panic!("solver {g:?} oracle {b:?}"),
                }
            }
        }
    }

    #[test]
    fn even_k_adjust_noop_for_odd_k() {
        let m = GF2Matrix::identity(4);
        assert_eq!(even_k_adjust(3, &m).unwrap(), None);
    }

    #[test]
    fn even_k_adjust_finds_redundant_row() {
        // rows sum to zero: row2 = row0 + row1
        let mut m = GF2Matrix::zeros(3, 4);
        for j in 0..4 {
            m.set(0, j, j % 2 == 0);
            m.set(1, j, j < 2);
            m.set(2, j, (j % 2 == 0) ^ (j < 2));
        }
        let i = even_k_adjust(2, &m).unwrap().expect("row to drop");
        let rest: Vec<usize> = (0..3).filter(|&r| r != i).collect();
        let reduced = m.submatrix(&rest, &(0..4).collect::<Vec<_>>());
        assert_eq!(reduced.rank(), 2);
    }

    #[test]
    fn sum_of_core_rows_follows_column_parity() {
        // every column has exactly k ones inside the core rows, so the sum of
        // the core rows is the all-(k mod 2) vector
        for (k, seed) in [(3usize, 40u64), (4, 41)] {
            let p = ModelParams { n: 200, m: 200, k, seed };
            let a = sample_matrix(&p);
            let mut cfg = PipelineConfig::new(k, 1, 0.5, 1);
            cfg.core_threshold_fraction = 0.3;
            cfg.m1_fraction = 0.75; // dense enough that the 2-core survives at k=4
            let (b1, _, _) = build_b1(&a, &cfg).unwrap();
            let mut sum = BitVec::zeros(b1.ncols());
            for i in 0..b1.nrows() {
                sum.xor_assign(b1.row(i));
            }
            if k % 2 == 0 {
                assert!(sum.is_zero());
            } else {
                assert_eq!(sum.count_ones(), b1.ncols());
            }
        }
    }

    #[test]
    fn pipeline_single_column_target() {
        let p = ModelParams { n: 400, m: 9000, k: 5, seed: 77 };
        let a = sample_matrix(&p);
        let mut target = GF2Matrix::zeros(1, 1);
        target.set(0, 0, true);
        let cfg = PipelineConfig::new(5, 2, 0.5, 400);
        let (trace, result) = run_pipeline(&a, &target, &cfg);
        let cert = result.unwrap_or_else(|e| panic!("{e} (trace n2={})", trace.n2));
        assert_eq!(cert.kept.len(), 1);
        // re-verify from scratch
        let whole = BinaryMatroid::from_rep(a.clone());
        let tm = BinaryMatroid::from_rep(target);
        assert!(whole.verify_certificate(&cert, &tm).unwrap());
    }

    #[test]
    fn pipeline_even_k_single_column_target() {
        let p = ModelParams { n: 400, m: 12_000, k: 4, seed: 101 };
        let a = sample_matrix(&p);
        let mut target = GF2Matrix::zeros(1, 1);
        target.set(0, 0, true);
        let cfg = PipelineConfig::new(4, 2, 0.5, 1000);
        assert!(cfg.even_k_mode);
        let (trace, result) = run_pipeline(&a, &target, &cfg);
        let cert = result.unwrap_or_else(|e| panic!("{e} (trace n2={})", trace.n2));
        assert!(trace.removed_row.is_some());
        let whole = BinaryMatroid::from_rep(a.clone());
        let tm = BinaryMatroid::from_rep(target);
        assert!(whole.verify_certificate(&cert, &tm).unwrap());
    }

    #[test]
    fn pipeline_rejects_rank_deficient_target() {
        let a = sample_matrix(&ModelParams { n: 100, m: 500, k: 3, seed: 1 });
        let target = GF2Matrix::zeros(2, 3);
        let cfg = PipelineConfig::new(3, 1, 0.5, 10);
        let (_, result) = run_pipeline(&a, &target, &cfg);
        match result {
            Err(StageFailure { stage, .. }) => assert_eq!(stage, "target"),
            other => panic!("{other:?}"),
        }
    }
}
