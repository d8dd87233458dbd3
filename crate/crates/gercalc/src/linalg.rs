//! Sparse exact linear algebra over the rationals.
//!
//! Elimination is deterministic: pivot columns are scanned left to right and
//! the pivot row is the first remaining row with a nonzero entry in that
//! column.  No magnitude-based pivoting, so identical inputs always produce
//! identical echelon forms, solutions, witnesses and nullspace bases.

use crate::scalar::{is_zero, one, zero, Scalar};
use std::collections::BTreeMap;

pub type SparseVec = BTreeMap<usize, Scalar>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactMatrix {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), Scalar>,
}

impl ExactMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        ExactMatrix {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, r: usize, c: usize, v: Scalar) {
        assert!(r < self.rows && c < self.cols, "index out of range");
        if is_zero(&v) {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), v);
        }
    }

    pub fn add_to(&mut self, r: usize, c: usize, v: &Scalar) {
        let cur = self.get(r, c) + v;
        self.set(r, c, cur);
    }

    pub fn get(&self, r: usize, c: usize) -> Scalar {
        self.entries.get(&(r, c)).cloned().unwrap_or_else(zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Scalar)> {
        self.entries.iter()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn from_rows(rows: &[Vec<Scalar>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = ExactMatrix::new(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, v.clone());
            }
        }
        m
    }

    pub fn transpose(&self) -> ExactMatrix {
        let mut t = ExactMatrix::new(self.cols, self.rows);
        for (&(r, c), v) in &self.entries {
            t.set(c, r, v.clone());
        }
        t
    }

    pub fn mul_vec(&self, x: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![zero(); self.rows];
        for (&(r, c), v) in &self.entries {
            if !is_zero(&x[c]) {
                out[r] += v * &x[c];
            }
        }
        out
    }

    /// yᵀ · A for a row vector y.
    pub fn vec_mul(&self, y: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![zero(); self.cols];
        for (&(r, c), v) in &self.entries {
            if !is_zero(&y[r]) {
                out[c] += v * &y[r];
            }
        }
        out
    }

    fn sparse_rows(&self) -> Vec<SparseVec> {
        let mut rows: Vec<SparseVec> = vec![BTreeMap::new(); self.rows];
        for (&(r, c), v) in &self.entries {
            rows[r].insert(c, v.clone());
        }
        rows
    }
}

/// Row-echelon data with the row transform tracked: `transform · A = echelon`.
struct Echelon {
    rows: Vec<SparseVec>,
    transform: Vec<SparseVec>,
    /// (row, col) of each pivot, in elimination order.
    pivots: Vec<(usize, usize)>,
}

fn eliminate(a: &ExactMatrix) -> Echelon {
    let mut rows = a.sparse_rows();
    let mut transform: Vec<SparseVec> = (0..a.rows)
        .map(|i| {
            let mut t = BTreeMap::new();
            t.insert(i, one());
            t
        })
        .collect();
    let mut pivots = Vec::new();
    let mut next_row = 0usize;
    for col in 0..a.cols {
        let Some(p) = (next_row..a.rows).find(|&r| rows[r].contains_key(&col)) else {
            continue;
        };
        rows.swap(next_row, p);
        transform.swap(next_row, p);
        let inv = {
            let pv = &rows[next_row][&col];
            one() / pv
        };
        scale_row(&mut rows[next_row], &inv);
        scale_row(&mut transform[next_row], &inv);
        for r in 0..a.rows {
            if r != next_row && rows[r].contains_key(&col) {
                let factor = rows[r][&col].clone();
                let (pivot_row, pivot_t) = (rows[next_row].clone(), transform[next_row].clone());
                axpy(&mut rows[r], &factor, &pivot_row);
                axpy(&mut transform[r], &factor, &pivot_t);
            }
        }
        pivots.push((next_row, col));
        next_row += 1;
        if next_row == a.rows {
            break;
        }
    }
    Echelon {
        rows,
        transform,
        pivots,
    }
}

fn scale_row(row: &mut SparseVec, s: &Scalar) {
    for v in row.values_mut() {
        *v *= s;
    }
}

/// row -= factor * other
fn axpy(row: &mut SparseVec, factor: &Scalar, other: &SparseVec) {
    for (c, v) in other {
        let cur = row.remove(c).unwrap_or_else(zero) - factor * v;
        if !is_zero(&cur) {
            row.insert(*c, cur);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    /// A solution of A·x = b (free variables set to zero).
    Solution(Vec<Scalar>),
    /// Certificate of inconsistency: y with yᵀ·A = 0 and yᵀ·b ≠ 0.
    Inconsistent { witness: Vec<Scalar> },
}

pub fn solve_exact(a: &ExactMatrix, b: &[Scalar]) -> SolveOutcome {
    assert_eq!(b.len(), a.rows(), "rhs length mismatch");
    let ech = eliminate(a);
    // Transformed right-hand side.
    let tb: Vec<Scalar> = ech
        .transform
        .iter()
        .map(|t| {
            let mut s = zero();
            for (c, v) in t {
                s += v * &b[*c];
            }
            s
        })
        .collect();
    let rank = ech.pivots.len();
    for r in rank..a.rows() {
        if !is_zero(&tb[r]) {
            let mut witness = vec![zero(); a.rows()];
            for (c, v) in &ech.transform[r] {
                witness[*c] = v.clone();
            }
            return SolveOutcome::Inconsistent { witness };
        }
    }
    // Elimination is full Gauss–Jordan, so a pivot row meets no other pivot
    // column; with free variables at zero each pivot variable is just tb[r].
    let mut x = vec![zero(); a.cols()];
    for &(r, c) in &ech.pivots {
        x[c] = tb[r].clone();
    }
    debug_assert_eq!(a.mul_vec(&x), b.to_vec());
    SolveOutcome::Solution(x)
}

/// Basis of the right nullspace, one vector per free column in ascending
/// column order, each normalized so its first nonzero coordinate is 1.
pub fn nullspace(a: &ExactMatrix) -> Vec<Vec<Scalar>> {
    let ech = eliminate(a);
    let pivot_cols: BTreeMap<usize, usize> = ech.pivots.iter().map(|&(r, c)| (c, r)).collect();
    let mut basis = Vec::new();
    for free in 0..a.cols() {
        if pivot_cols.contains_key(&free) {
            continue;
        }
        let mut v = vec![zero(); a.cols()];
        v[free] = one();
        for (&c, &r) in &pivot_cols {
            // Reduced echelon: pivot row r reads x[c] + Σ_{free f} u_f x[f] = 0.
            if let Some(coef) = ech.rows[r].get(&free) {
                v[c] = -coef.clone();
            }
        }
        normalize_first_nonzero(&mut v);
        basis.push(v);
    }
    basis
}

pub fn rank(a: &ExactMatrix) -> usize {
    eliminate(a).pivots.len()
}

/// Indices of the pivot columns of the echelon form, in ascending order.
/// These columns form a maximal linearly independent subset, chosen
/// deterministically by the left-to-right scan.
pub fn pivot_columns(a: &ExactMatrix) -> Vec<usize> {
    let mut cols: Vec<usize> = eliminate(a).pivots.iter().map(|&(_, c)| c).collect();
    cols.sort_unstable();
    cols
}

fn normalize_first_nonzero(v: &mut [Scalar]) {
    if let Some(lead) = v.iter().find(|s| !is_zero(s)).cloned() {
        for s in v.iter_mut() {
            *s /= &lead;
        }
    }
}
