//! Column-major sparse integer matrices with deterministic entry order.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMat {
    pub nrows: usize,
    pub ncols: usize,
    /// Column j holds (row, value) pairs sorted by row, no zeros.
    cols: Vec<Vec<(usize, i64)>>,
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMat { nrows, ncols, cols: vec![Vec::new(); ncols] }
    }

    pub fn identity(n: usize) -> Self {
        SparseMat { nrows: n, ncols: n, cols: (0..n).map(|i| vec![(i, 1)]).collect() }
    }

    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, i64)>,
    {
        let mut cols: Vec<Vec<(usize, i64)>> = vec![Vec::new(); ncols];
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of range {nrows}x{ncols}");
            cols[c].push((r, v));
        }
        for col in cols.iter_mut() {
            normalize(col);
        }
        SparseMat { nrows, ncols, cols }
    }

    /// Builds a matrix from already computed columns (any order, duplicates summed).
    pub fn from_columns(nrows: usize, mut cols: Vec<Vec<(usize, i64)>>) -> Self {
        for col in cols.iter_mut() {
            normalize(col);
        }
        SparseMat { nrows, ncols: cols.len(), cols }
    }

    pub fn col(&self, j: usize) -> &[(usize, i64)] {
        &self.cols[j]
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        match self.cols[j].binary_search_by_key(&i, |e| e.0) {
            Ok(k) => self.cols[j][k].1,
            Err(_) => 0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.cols.iter().all(|c| c.is_empty())
    }

    /// Triplets sorted by column, then row.
    pub fn triplets(&self) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                out.push((i, j, v));
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMat {
        let mut cols: Vec<Vec<(usize, i64)>> = vec![Vec::new(); self.nrows];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                cols[i].push((j, v));
            }
        }
        SparseMat { nrows: self.ncols, ncols: self.nrows, cols }
    }

    /// Matrix product `self * rhs`.
    pub fn mul(&self, rhs: &SparseMat) -> SparseMat {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch in product");
        let mut acc = vec![0i64; self.nrows];
        let mut touched: Vec<usize> = Vec::new();
        let mut cols = Vec::with_capacity(rhs.ncols);
        for rcol in &rhs.cols {
            for &(k, b) in rcol {
                for &(i, a) in &self.cols[k] {
                    if acc[i] == 0 {
                        touched.push(i);
                    }
                    acc[i] += a * b;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            let mut col = Vec::with_capacity(touched.len());
            for &i in &touched {
                if acc[i] != 0 {
                    col.push((i, acc[i]));
                }
                acc[i] = 0;
            }
            touched.clear();
            cols.push(col);
        }
        SparseMat { nrows: self.nrows, ncols: rhs.ncols, cols }
    }

    pub fn add(&self, rhs: &SparseMat) -> SparseMat {
        self.combine(rhs, 1)
    }

    pub fn sub(&self, rhs: &SparseMat) -> SparseMat {
        self.combine(rhs, -1)
    }

    fn combine(&self, rhs: &SparseMat, s: i64) -> SparseMat {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let cols = self
            .cols
            .iter()
            .zip(&rhs.cols)
            .map(|(a, b)| {
                let mut col: Vec<(usize, i64)> = a.clone();
                col.extend(b.iter().map(|&(i, v)| (i, s * v)));
                normalize(&mut col);
                col
            })
            .collect();
        SparseMat { nrows: self.nrows, ncols: self.ncols, cols }
    }

    pub fn scale(&self, s: i64) -> SparseMat {
        let cols = self
            .cols
            .iter()
            .map(|c| c.iter().map(|&(i, v)| (i, v * s)).filter(|e| e.1 != 0).collect())
            .collect();
        SparseMat { nrows: self.nrows, ncols: self.ncols, cols }
    }

    /// Restriction to the given rows and columns, reindexed by position in the lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseMat {
        let mut pos = std::collections::HashMap::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            pos.insert(r, k);
        }
        let out = cols
            .iter()
            .map(|&c| {
                self.cols[c]
                    .iter()
                    .filter_map(|&(i, v)| pos.get(&i).map(|&k| (k, v)))
                    .collect::<Vec<_>>()
            })
            .collect();
        SparseMat::from_columns(rows.len(), out).with_rows(rows.len())
    }

    fn with_rows(mut self, n: usize) -> Self {
        self.nrows = n;
        self
    }

    /// Dense row-major copy; only for small matrices.
    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        let mut out = vec![vec![0i64; self.ncols]; self.nrows];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                out[i][j] = v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> i64 {
        self.cols.iter().flat_map(|c| c.iter().map(|e| e.1.abs())).max().unwrap_or(0)
    }
}

fn normalize(col: &mut Vec<(usize, i64)>) {
    col.sort_unstable_by_key(|e| e.0);
    let mut out: Vec<(usize, i64)> = Vec::with_capacity(col.len());
    for &(i, v) in col.iter() {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out.retain(|e| e.1 != 0);
    *col = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_dense() {
        let a = SparseMat::from_triplets(2, 3, vec![(0, 0, 1), (1, 2, -2), (0, 2, 3)]);
        let b = SparseMat::from_triplets(3, 2, vec![(0, 1, 4), (2, 0, 1), (2, 1, 1)]);
        let c = a.mul(&b);
        assert_eq!(c.to_dense(), vec![vec![3, 7], vec![-2, -2]]);
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let a = SparseMat::from_triplets(2, 2, vec![(0, 0, 1), (0, 0, -1), (1, 1, 2), (1, 1, 3)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(1, 1), 5);
    }

    #[test]
    fn submatrix_reindexes() {
        let a = SparseMat::from_triplets(3, 3, vec![(0, 0, 1), (2, 1, 5), (1, 2, 7)]);
        let s = a.submatrix(&[2, 1], &[1, 2]);
        assert_eq!(s.to_dense(), vec![vec![5, 0], vec![0, 7]]);
    }
}
