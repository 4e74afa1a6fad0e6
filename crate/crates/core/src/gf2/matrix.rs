use super::{BitVec, Gf2Error};
use std::fmt;

/// Row-major bit-packed matrix over GF(2).
///
/// Every row is a [`BitVec`] of length `ncols`. Equality is entrywise.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GF2Matrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<BitVec>,
}

/// Row echelon form together with the record of row operations,
/// so that `transform * input == reduced`.
#[derive(Clone, Debug)]
pub struct EchelonResult {
    pub rank: usize,
    pub pivot_cols: Vec<usize>,
    pub reduced: GF2Matrix,
    pub transform: GF2Matrix,
}

/// Solution set of a linear system `a * x = b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolutionSet {
    Empty,
    Solutions {
        particular: BitVec,
        null_basis: Vec<BitVec>,
    },
}

impl GF2Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        GF2Matrix {
            nrows,
            ncols,
            rows: (0..nrows).map(|_| BitVec::zeros(ncols)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = GF2Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(ncols: usize, rows: Vec<BitVec>) -> Self {
        assert!(rows.iter().all(|r| r.len() == ncols), "row length mismatch");
        GF2Matrix {
            nrows: rows.len(),
            ncols,
            rows,
        }
    }

    /// Builds a matrix from per-column supports (row indices of the ones).
    pub fn from_column_supports(nrows: usize, supports: &[Vec<usize>]) -> Self {
        let mut m = GF2Matrix::zeros(nrows, supports.len());
        for (j, sup) in supports.iter().enumerate() {
            for &i in sup {
                m.set(i, j, true);
            }
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors of length `nrows`.
    pub fn from_columns(nrows: usize, cols: &[BitVec]) -> Self {
        let mut m = GF2Matrix::zeros(nrows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), nrows, "column length mismatch");
            for i in c.iter_ones() {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].get(j)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.rows[i].set(j, value);
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> BitVec {
        let mut c = BitVec::zeros(self.nrows);
        for i in 0..self.nrows {
            if self.get(i, j) {
                c.set(i, true);
            }
        }
        c
    }

    pub fn column_support(&self, j: usize) -> Vec<usize> {
        (0..self.nrows).filter(|&i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> GF2Matrix {
        let mut t = GF2Matrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in self.rows[i].iter_ones() {
                t.set(j, i, true);
            }
        }
        t
    }

    /// Submatrix of the given rows and columns, in the given order.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> GF2Matrix {
        let mut m = GF2Matrix::zeros(row_idx.len(), col_idx.len());
        for (i, &r) in row_idx.iter().enumerate() {
            for (j, &c) in col_idx.iter().enumerate() {
                if self.get(r, c) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    /// Columns `col_idx` (all rows), in the given order.
    pub fn select_columns(&self, col_idx: &[usize]) -> GF2Matrix {
        let all: Vec<usize> = (0..self.nrows).collect();
        self.submatrix(&all, col_idx)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        self.rows.swap(a, b);
    }

    /// rows[target] ^= rows[source]
    fn xor_rows(&mut self, target: usize, source: usize) {
        assert_ne!(target, source);
        let (lo, hi) = if target < source {
            (target, source)
        } else {
            (source, target)
        };
        let (left, right) = self.rows.split_at_mut(hi);
        if target < source {
            left[lo].xor_assign(&right[0]);
        } else {
            right[0].xor_assign(&left[lo]);
        }
    }

    /// Row rank over GF(2). Forward elimination with first-nonzero pivots,
    /// lowest row index breaking ties.
    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for col in 0..self.ncols {
            let pivot = (rank..rows.len()).find(|&r| rows[r].get(col));
            let Some(pivot) = pivot else { continue };
            rows.swap(rank, pivot);
            let (head, tail) = rows.split_at_mut(rank + 1);
            let prow = &head[rank];
            for r in tail.iter_mut() {
                if r.get(col) {
                    r.xor_assign(prow);
                }
            }
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        rank
    }

    /// Reduced row echelon form with the transform recorded.
    pub fn echelon(&self) -> EchelonResult {
        let mut reduced = self.clone();
        let mut transform = GF2Matrix::identity(self.nrows);
        let mut pivot_cols = Vec::new();
        let mut prow = 0usize;
        for col in 0..self.ncols {
            if prow == self.nrows {
                break;
            }
            let Some(p) = (prow..self.nrows).find(|&r| reduced.get(r, col)) else {
                continue;
            };
            reduced.swap_rows(prow, p);
            transform.swap_rows(prow, p);
            for r in 0..self.nrows {
                if r != prow && reduced.get(r, col) {
                    reduced.xor_rows(r, prow);
                    transform.xor_rows(r, prow);
                }
            }
            pivot_cols.push(col);
            prow += 1;
        }
        EchelonResult {
            rank: pivot_cols.len(),
            pivot_cols,
            reduced,
            transform,
        }
    }

    /// Matrix product over GF(2).
    pub fn multiply(&self, other: &GF2Matrix) -> Result<GF2Matrix, Gf2Error> {
        if self.ncols != other.nrows {
            return Err(Gf2Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let mut acc = BitVec::zeros(other.ncols);
            for t in self.rows[i].iter_ones() {
                acc.xor_assign(&other.rows[t]);
            }
            rows.push(acc);
        }
        Ok(GF2Matrix::from_rows(other.ncols, rows))
    }

    /// Matrix-vector product over GF(2).
    pub fn apply(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.ncols, "vector length mismatch");
        let mut out = BitVec::zeros(self.nrows);
        for i in 0..self.nrows {
            if self.rows[i].dot(v) {
                out.set(i, true);
            }
        }
        out
    }

    /// Inverse of a nonsingular square matrix.
    pub fn invert(&self) -> Result<GF2Matrix, Gf2Error> {
        if self.nrows != self.ncols {
            return Err(Gf2Error::DimensionMismatch(format!(
                "invert of {}x{}",
                self.nrows, self.ncols
            )));
        }
        let ech = self.echelon();
        if ech.rank < self.nrows {
            return Err(Gf2Error::SingularMatrix {
                rank: ech.rank,
                n: self.nrows,
            });
        }
        Ok(ech.transform)
    }

    /// Solves `self * x = b`. Returns one particular solution and a basis of
    /// the null space, or `Empty` when the system is inconsistent.
    pub fn solve(&self, b: &BitVec) -> SolutionSet {
        assert_eq!(b.len(), self.nrows, "rhs length mismatch");
        let ech = self.echelon();
        let tb = ech.transform.apply(b);
        for i in ech.rank..self.nrows {
            if tb.get(i) {
                return SolutionSet::Empty;
            }
        }
        let mut particular = BitVec::zeros(self.ncols);
        for (i, &pc) in ech.pivot_cols.iter().enumerate() {
            if tb.get(i) {
                particular.set(pc, true);
            }
        }
        let pivot_set: std::collections::HashSet<usize> = ech.pivot_cols.iter().copied().collect();
        let mut null_basis = Vec::new();
        for free in (0..self.ncols).filter(|c| !pivot_set.contains(c)) {
            let mut v = BitVec::zeros(self.ncols);
            v.set(free, true);
            for (i, &pc) in ech.pivot_cols.iter().enumerate() {
                if ech.reduced.get(i, free) {
                    v.set(pc, true);
                }
            }
            null_basis.push(v);
        }
        SolutionSet::Solutions {
            particular,
            null_basis,
        }
    }
}

impl fmt::Debug for GF2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GF2Matrix {}x{}", self.nrows, self.ncols)?;
        for r in &self.rows {
            let bits: String = (0..self.ncols).map(|j| if r.get(j) { '1' } else { '0' }).collect();
            writeln!(f, "  {bits}")?;
        }
        Ok(())
    }
}
