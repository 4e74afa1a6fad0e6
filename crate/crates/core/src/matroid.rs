//! Binary matroids as column matroids of GF(2) representations: deletion,
//! contraction, labeled equality, brute-force minor search and certificate
//! verification. The exhaustive operations are meant for small ground sets
//! and serve as the desk-scale oracle for the pipeline.

use crate::gf2::{BitVec, GF2Matrix};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

/// Largest ground set for exhaustive rank-function equality.
pub const EQUAL_BOUND: usize = 20;
/// Largest ground set searched by `has_minor_bruteforce`.
pub const MINOR_SEARCH_BOUND: usize = 14;
/// Largest target for isomorphism by bijection enumeration.
pub const ISO_BOUND: usize = 8;

#[derive(Debug, Error)]
pub enum MatroidError {
    #[error("unknown element label {0}")]
    UnknownLabel(u32),
    #[error("contraction set is dependent")]
    DependentContractionSet,
    #[error("ground set of size {size} exceeds exhaustive bound {bound}")]
    TooLarge { size: usize, bound: usize },
}

/// Column matroid of a GF(2) representation. Element i is column i of `rep`,
/// identified by `labels[i]`; a set is independent iff its columns are
/// linearly independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatroid {
    rep: GF2Matrix,
    labels: Vec<u32>,
    cols: Vec<BitVec>,
    index: std::collections::HashMap<u32, usize>,
}

/// Witness that a target matroid is a minor: delete `delete_set`, contract
/// `contract_set`, keep `kept` in order; `kept[i]` maps to column i of the
/// target representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinorCertificate {
    pub contract_set: Vec<u32>,
    pub delete_set: Vec<u32>,
    pub kept: Vec<u32>,
}

impl MinorCertificate {
    /// kept[i] represents column i of the target.
    pub fn column_map(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.kept.iter().enumerate().map(|(i, &l)| (l, i))
    }
}

impl BinaryMatroid {
    pub fn new(rep: GF2Matrix, labels: Vec<u32>) -> Self {
        assert_eq!(labels.len(), rep.ncols(), "one label per column");
        let cols = (0..rep.ncols()).map(|j| rep.column(j)).collect();
        let index: std::collections::HashMap<u32, usize> =
            labels.iter().enumerate().map(|(p, &l)| (l, p)).collect();
        assert_eq!(index.len(), labels.len(), "labels must be distinct");
        BinaryMatroid { rep, labels, cols, index }
    }

    /// Labels columns 0..ncols in order.
    pub fn from_rep(rep: GF2Matrix) -> Self {
        let labels = (0..rep.ncols() as u32).collect();
        Self::new(rep, labels)
    }

    /// The Fano plane: all nonzero vectors of GF(2)^3 as columns.
    pub fn fano() -> Self {
        let supports: Vec<Vec<usize>> = (1u8..8)
            .map(|c| (0..3).filter(|&i| (c >> i) & 1 == 1).collect())
            .collect();
        Self::from_rep(GF2Matrix::from_column_supports(3, &supports))
    }

    pub fn rep(&self) -> &GF2Matrix {
        &self.rep
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn rank(&self) -> usize {
        self.rank_of_positions(&(0..self.size()).collect::<Vec<_>>())
    }

    fn position_of(&self, label: u32) -> Result<usize, MatroidError> {
        self.index
            .get(&label)
            .copied()
            .ok_or(MatroidError::UnknownLabel(label))
    }

    fn positions_of(&self, labels: &[u32]) -> Result<Vec<usize>, MatroidError> {
        labels.iter().map(|&l| self.position_of(l)).collect()
    }

    /// Rank of a set of columns given by position.
    pub fn rank_of_positions(&self, positions: &[usize]) -> usize {
        let mut basis: Vec<BitVec> = Vec::new();
        for &p in positions {
            if let Some(v) = reduce(&basis, self.cols[p].clone()) {
                basis.push(v);
            }
        }
        basis.len()
    }

    pub fn is_independent_labels(&self, labels: &[u32]) -> Result<bool, MatroidError> {
        let pos = self.positions_of(labels)?;
        Ok(self.rank_of_positions(&pos) == pos.len())
    }

    /// Removes the elements `s`; independence of the rest is unchanged.
    pub fn delete(&self, s: &[u32]) -> Result<BinaryMatroid, MatroidError> {
        let remove: std::collections::HashSet<usize> =
            self.positions_of(s)?.into_iter().collect();
        let keep: Vec<usize> = (0..self.size()).filter(|p| !remove.contains(p)).collect();
        let rep = self.rep.select_columns(&keep);
        let labels = keep.iter().map(|&p| self.labels[p]).collect();
        Ok(BinaryMatroid::new(rep, labels))
    }

    /// Contracts the independent set `s`: row-reduce so the columns of `s`
    /// become distinct identity columns, then drop those rows and columns.
    /// A set T is independent in the result iff T ∪ s is independent here.
    pub fn contract(&self, s: &[u32]) -> Result<BinaryMatroid, MatroidError> {
        let contract_pos = self.positions_of(s)?;
        let mut rows: Vec<BitVec> = self.rep.rows().to_vec();
        let nrows = rows.len();
        let mut is_pivot = vec![false; nrows];
        for &cp in &contract_pos {
            let Some(r) = (0..nrows).find(|&r| !is_pivot[r] && rows[r].get(cp)) else {
                return Err(MatroidError::DependentContractionSet);
            };
            // clear column cp everywhere else
            let pivot_row = rows[r].clone();
            for rr in 0..nrows {
                if rr != r && rows[rr].get(cp) {
                    rows[rr].xor_assign(&pivot_row);
                }
            }
            is_pivot[r] = true;
        }
        let work = GF2Matrix::from_rows(self.rep.ncols(), rows);
        let keep_rows: Vec<usize> = (0..nrows).filter(|&r| !is_pivot[r]).collect();
        let contract_set: std::collections::HashSet<usize> =
            contract_pos.iter().copied().collect();
        let keep_cols: Vec<usize> = (0..self.size()).filter(|p| !contract_set.contains(p)).collect();
        let rep = work.submatrix(&keep_rows, &keep_cols);
        let labels = keep_cols.iter().map(|&p| self.labels[p]).collect();
        Ok(BinaryMatroid::new(rep, labels))
    }

    /// Rank of every subset of the ground set, indexed by bitmask.
    /// Exhaustive; callers must respect `EQUAL_BOUND`.
    pub fn rank_table(&self) -> Vec<u8> {
        let n = self.size();
        assert!(n <= EQUAL_BOUND, "rank_table on {n} elements");
        let mut table = vec![0u8; 1 << n];
        let mut basis: Vec<BitVec> = Vec::new();
        self.rank_table_rec(0, 0, &mut basis, &mut table);
        table
    }

    fn rank_table_rec(&self, idx: usize, mask: usize, basis: &mut Vec<BitVec>, table: &mut [u8]) {
        if idx == self.size() {
            table[mask] = basis.len() as u8;
            return;
        }
        self.rank_table_rec(idx + 1, mask, basis, table);
        if let Some(v) = reduce(basis, self.cols[idx].clone()) {
            basis.push(v);
            self.rank_table_rec(idx + 1, mask | (1 << idx), basis, table);
            basis.pop();
        } else {
            // dependent column: including it changes nothing
            self.rank_table_rec(idx + 1, mask | (1 << idx), basis, table);
        }
    }

    /// Labeled equality: same ground-set size and identical rank on every
    /// subset under the positional correspondence of labels.
    pub fn equal(&self, other: &BinaryMatroid) -> Result<bool, MatroidError> {
        if self.size() != other.size() {
            return Ok(false);
        }
        if self.size() > EQUAL_BOUND {
            return Err(MatroidError::TooLarge {
                size: self.size(),
                bound: EQUAL_BOUND,
            });
        }
        Ok(self.rank_table() == other.rank_table())
    }

    /// Searches for a bijection of ground sets carrying the rank function of
    /// `self` onto `other`'s. Returns `perm` with rank_self(S) ==
    /// rank_other(perm(S)); brute bijection enumeration with a histogram
    /// prefilter.
    pub fn isomorphism(&self, other: &BinaryMatroid) -> Result<Option<Vec<usize>>, MatroidError> {
        let n = self.size();
        if n != other.size() {
            return Ok(None);
        }
        if n > ISO_BOUND {
            return Err(MatroidError::TooLarge { size: n, bound: ISO_BOUND });
        }
        let ta = self.rank_table();
        let tb = other.rank_table();
        if rank_histogram(&ta, n) != rank_histogram(&tb, n) {
            return Ok(None);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        if permute_search(&ta, &tb, n, &mut perm, 0) {
            Ok(Some(perm))
        } else {
            Ok(None)
        }
    }

    /// Exhaustive minor search: independent contract sets by increasing size
    /// then lexicographically, kept-column selections lexicographically;
    /// first selection isomorphic to `target` wins. The certificate's `kept`
    /// order realizes the isomorphism positionally, so it verifies under
    /// labeled equality.
    pub fn has_minor_bruteforce(
        &self,
        target: &BinaryMatroid,
    ) -> Result<Option<MinorCertificate>, MatroidError> {
        if self.size() > MINOR_SEARCH_BOUND {
            return Err(MatroidError::TooLarge {
                size: self.size(),
                bound: MINOR_SEARCH_BOUND,
            });
        }
        if target.size() > ISO_BOUND {
            return Err(MatroidError::TooLarge {
                size: target.size(),
                bound: ISO_BOUND,
            });
        }
        let rank_m = self.rank();
        let rank_t = target.rank();
        let mu = target.size();
        if mu > self.size() || rank_t > rank_m {
            return Ok(None);
        }
        let target_table = target.rank_table();
        let target_hist = rank_histogram(&target_table, mu);
        let max_contract = rank_m - rank_t;
        for csize in 0..=max_contract {
            let mut contract_sel = Combinations::new(self.size(), csize);
            while let Some(cset) = contract_sel.next() {
                let clabels: Vec<u32> = cset.iter().map(|&p| self.labels[p]).collect();
                if self.rank_of_positions(cset) != csize {
                    continue;
                }
                let contracted = self.contract(&clabels)?;
                if contracted.rank() != rank_t {
                    continue;
                }
                if contracted.size() < mu {
                    continue;
                }
                let mut kept_sel = Combinations::new(contracted.size(), mu);
                while let Some(ksel) = kept_sel.next() {
                    if contracted.rank_of_positions(ksel) != rank_t {
                        continue;
                    }
                    let klabels: Vec<u32> = ksel.iter().map(|&p| contracted.labels[p]).collect();
                    let minor = restrict(&contracted, &klabels);
                    let table = minor.rank_table();
                    if rank_histogram(&table, mu) != target_hist {
                        continue;
                    }
                    let mut perm: Vec<usize> = (0..mu).collect();
                    if !permute_search(&table, &target_table, mu, &mut perm, 0) {
                        continue;
                    }
                    // minor element i plays target column perm[i];
                    // kept[j] must be the minor element mapped to j
                    let mut kept = vec![0u32; mu];
                    for (i, &p) in perm.iter().enumerate() {
                        kept[p] = klabels[i];
                    }
                    let keep_set: std::collections::HashSet<u32> =
                        kept.iter().copied().chain(clabels.iter().copied()).collect();
                    let delete_set: Vec<u32> = self
                        .labels
                        .iter()
                        .copied()
                        .filter(|l| !keep_set.contains(l))
                        .collect();
                    return Ok(Some(MinorCertificate {
                        contract_set: clabels,
                        delete_set,
                        kept,
                    }));
                }
            }
        }
        Ok(None)
    }

    /// Recomputes contract(delete(self, delete_set), contract_set) restricted
    /// to `kept` in order, and compares to `target` under labeled equality.
    pub fn verify_certificate(
        &self,
        cert: &MinorCertificate,
        target: &BinaryMatroid,
    ) -> Result<bool, MatroidError> {
        // validate all labels up front
        for &l in cert
            .delete_set
            .iter()
            .chain(&cert.contract_set)
            .chain(&cert.kept)
        {
            self.position_of(l)?;
        }
        let deleted = self.delete(&cert.delete_set)?;
        let contracted = deleted.contract(&cert.contract_set)?;
        for &l in &cert.kept {
            contracted.position_of(l)?;
        }
        let minor = restrict(&contracted, &cert.kept);
        minor.equal(target)
    }
}

/// Restriction to the given labels, in the given order.
fn restrict(m: &BinaryMatroid, labels: &[u32]) -> BinaryMatroid {
    let positions: Vec<usize> = labels
        .iter()
        .map(|&l| m.labels.iter().position(|&x| x == l).expect("label present"))
        .collect();
    let rep = m.rep.select_columns(&positions);
    BinaryMatroid::new(rep, labels.to_vec())
}

/// Reduces `v` against the basis (each basis vector tagged by its pivot, the
/// lowest set bit). Returns None if v falls in the span.
fn reduce(basis: &[BitVec], mut v: BitVec) -> Option<BitVec> {
    for b in basis {
        let pivot = b.iter_ones().next().expect("basis vectors are nonzero");
        if v.get(pivot) {
            v.xor_assign(b);
        }
    }
    if v.is_zero() {
        None
    } else {
        Some(v)
    }
}

/// Histogram of subset ranks by cardinality: a cheap isomorphism invariant.
fn rank_histogram(table: &[u8], n: usize) -> Vec<Vec<usize>> {
    let mut hist = vec![vec![0usize; n + 2]; n + 1];
    for (mask, &r) in table.iter().enumerate() {
        hist[mask.count_ones() as usize][r as usize] += 1;
    }
    hist
}

/// Backtracking over bijections: extends perm[..depth] while every subset of
/// the assigned prefix has matching rank.
fn permute_search(ta: &[u8], tb: &[u8], n: usize, perm: &mut Vec<usize>, depth: usize) -> bool {
    if depth == n {
        return true;
    }
    for i in depth..n {
        perm.swap(depth, i);
        if prefix_consistent(ta, tb, perm, depth) && permute_search(ta, tb, n, perm, depth + 1) {
            return true;
        }
        perm.swap(depth, i);
    }
    false
}

/// Checks all subsets containing element `depth` within the assigned prefix.
fn prefix_consistent(ta: &[u8], tb: &[u8], perm: &[usize], depth: usize) -> bool {
    let new_bit = 1usize << depth;
    for sub in 0..(1usize << depth) {
        let mask_a = sub | new_bit;
        let mut mask_b = 0usize;
        for (i, &p) in perm.iter().enumerate().take(depth + 1) {
            if mask_a & (1 << i) != 0 {
                mask_b |= 1 << p;
            }
        }
        if ta[mask_a] != tb[mask_b] {
            return false;
        }
    }
    true
}

/// Lexicographic combinations of `k` indices out of `n`.
struct Combinations {
    n: usize,
    k: usize,
    state: Vec<usize>,
    started: bool,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            k,
            state: (0..k).collect(),
            started: false,
            done: k > n,
        }
    }

    fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.state);
        }
        // advance
        let k = self.k;
        if k == 0 {
            self.done = true;
            return None;
        }
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.state[i] + 1 <= self.n - (k - i) {
                self.state[i] += 1;
                for j in i + 1..k {
                    self.state[j] = self.state[j - 1] + 1;
                }
                return Some(&self.state);
            }
        }
    }
}

/// Writes the matroid as the shared matrix format plus a final label line.
pub fn write_matroid<W: Write>(w: &mut W, m: &BinaryMatroid) -> Result<(), crate::gf2::FormatError> {
    crate::gf2::write_matrix(w, m.rep())?;
    let labels: Vec<String> = m.labels().iter().map(|l| l.to_string()).collect();
    writeln!(w, "{}", labels.join(" "))?;
    Ok(())
}

/// Reads the shared matrix format; an optional trailing line gives labels.
pub fn read_matroid<R: BufRead>(r: &mut R) -> Result<BinaryMatroid, crate::gf2::FormatError> {
    let mut text = String::new();
    let mut rdr = r;
    std::io::Read::read_to_string(&mut rdr, &mut text)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let ncols: usize = header
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let matrix_text: Vec<&str> = std::iter::once(header)
        .chain(lines.clone().take(ncols))
        .collect();
    let rep = crate::gf2::read_matrix(&mut std::io::BufReader::new(
        matrix_text.join("\n").into_bytes().as_slice(),
    ))?;
    let label_line = lines.nth(ncols);
    let labels: Vec<u32> = match label_line {
        Some(line) if !line.trim().is_empty() => line
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|e| crate::gf2::FormatError::Parse {
                    line: ncols + 2,
                    msg: format!("bad label `{t}`: {e}"),
                })
            })
            .collect::<Result<_, _>>()?,
        _ => (0..rep.ncols() as u32).collect(),
    };
    if labels.len() != rep.ncols() {
        return Err(crate::gf2::FormatError::Parse {
            line: ncols + 2,
            msg: format!("{} labels for {} columns", labels.len(), rep.ncols()),
        });
    }
    Ok(BinaryMatroid::new(rep, labels))
}
