use super::{OperatorError, SymOperator};
use crate::smallmat::Mat;
use rayon::prelude::*;

/// Rows per parallel chunk in [`SparseSym::apply_to`].
const PAR_CHUNK: usize = 8192;

/// Symmetric sparse matrix in compressed sparse row layout with both
/// triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// Both triangles must be present. Values must agree with their mirror to
    /// `1e-12` relative to the largest stored magnitude.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, OperatorError> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(i, j, _)) = entries.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(OperatorError::DimensionMismatch(format!(
                "entry ({i}, {j}) outside a {n} x {n} matrix"
            )));
        }
        entries.sort_by_key(|e| (e.0, e.1));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let a = SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
        };
        a.check_symmetric(1e-12)?;
        Ok(a)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SparseSym {
            n: diag.len(),
            row_ptr: (0..=diag.len()).collect(),
            col_idx: (0..diag.len()).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_dense(a: &Mat) -> Result<Self, OperatorError> {
        if a.nrows() != a.ncols() {
            return Err(OperatorError::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let triplets = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, a[(i, j)]));
        Self::from_triplets(n, triplets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Mat {
        let mut a = Mat::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            a[(i, j)] = v;
        }
        a
    }

    /// `A + c I`.
    pub fn shifted(&self, c: f64) -> Self {
        let triplets = self
            .triplets()
            .chain((0..self.n).map(|i| (i, i, c)))
            .collect::<Vec<_>>();
        Self::from_triplets(self.n, triplets).expect("shifting preserves symmetry")
    }

    pub fn check_symmetric(&self, rel_tol: f64) -> Result<(), OperatorError> {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (i, j, v) in self.triplets() {
            if j <= i {
                continue;
            }
            let mirror_present = {
                let range = self.row_ptr[j]..self.row_ptr[j + 1];
                self.col_idx[range].binary_search(&i).is_ok()
            };
            if (!mirror_present && v != 0.0) || (v - self.get(j, i)).abs() > rel_tol * scale {
                return Err(OperatorError::NonSymmetric { row: i, col: j });
            }
        }
        // entries present only below the diagonal
        for (i, j, v) in self.triplets() {
            if j < i && v != 0.0 {
                let range = self.row_ptr[j]..self.row_ptr[j + 1];
                if self.col_idx[range].binary_search(&i).is_err() {
                    return Err(OperatorError::NonSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }
}

impl SymOperator for SparseSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_to(&self, x: &Mat, y: &mut Mat) {
        let n = self.n;
        for c in 0..x.ncols() {
            let xc = &x.as_slice()[c * n..(c + 1) * n];
            let yc = &mut y.as_mut_slice()[c * n..(c + 1) * n];
            if n >= 4 * PAR_CHUNK {
                yc.par_chunks_mut(PAR_CHUNK)
                    .enumerate()
                    .for_each(|(chunk, out)| {
                        let base = chunk * PAR_CHUNK;
                        for (k, slot) in out.iter_mut().enumerate() {
                            *slot = self.row_dot(base + k, xc);
                        }
                    });
            } else {
                for (i, slot) in yc.iter_mut().enumerate() {
                    *slot = self.row_dot(i, xc);
                }
            }
        }
    }
}
