//! Compressed sparse row storage for square matrices.
//!
//! Only what the graph code needs: construction from triplets, row access,
//! matrix-vector products and diagonal edits. Column indices inside a row are
//! kept sorted so that iteration order, and therefore every floating-point
//! reduction built on it, is deterministic.

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets.
    /// Duplicate coordinates are summed in the order given.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of bounds for n = {n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    /// Builds from per-row `(col, value)` lists that are already sorted by column.
    pub(crate) fn from_sorted_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `xᵀ A` for a row vector `x`.
    pub fn left_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += xi * v;
            }
        }
        y
    }

    /// Returns `self + diag(d)`; diagonal entries are created when missing.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n);
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(self.indptr[i + 1] - self.indptr[i] + 1);
                let mut placed = false;
                for (j, v) in self.row(i) {
                    if !placed && j >= i {
                        if j == i {
                            row.push((j, v + d[i]));
                            placed = true;
                            continue;
                        }
                        row.push((i, d[i]));
                        placed = true;
                    }
                    row.push((j, v));
                }
                if !placed {
                    row.push((i, d[i]));
                }
                row
            })
            .collect();
        Self::from_sorted_rows(rows)
    }

    /// Restriction to the rows and columns listed in `idx` (in that order).
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let rows = idx
            .iter()
            .map(|&i| {
                let mut row: Vec<(usize, f64)> = self
                    .row(i)
                    .filter(|(j, _)| pos[*j] != usize::MAX)
                    .map(|(j, v)| (pos[j], v))
                    .collect();
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        Self::from_sorted_rows(rows)
    }

    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        let rows = (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| (j, left[i] * v * right[j])).collect())
            .collect();
        Self::from_sorted_rows(rows)
    }

    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let rows = (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| (j, f(i, j, v))).collect())
            .collect();
        Self::from_sorted_rows(rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }

    pub fn from_dense(m: &[Vec<f64>]) -> Self {
        let rows = m
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(rows)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                let d = match (a.peek(), b.peek()) {
                    (None, None) => break,
                    (Some(&(ja, va)), Some(&(jb, vb))) => {
                        if ja == jb {
                            a.next();
                            b.next();
                            va - vb
                        } else if ja < jb {
                            a.next();
                            va
                        } else {
                            b.next();
                            -vb
                        }
                    }
                    (Some(&(_, va)), None) => {
                        a.next();
                        va
                    }
                    (None, Some(&(_, vb))) => {
                        b.next();
                        -vb
                    }
                };
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 2, 1.0), (0, 1, 2.0), (0, 2, 0.5), (2, 0, 4.0)]);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(1, 2.0), (2, 1.5)]);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn add_diagonal_inserts_in_order() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 3.0), (2, 1, 3.0)]);
        let d = m.add_diagonal(&[1.0, 2.0, 3.0]);
        assert_eq!(d.row(1).collect::<Vec<_>>(), vec![(0, 1.0), (1, 2.0), (2, 3.0)]);
        assert_eq!(d.row(2).collect::<Vec<_>>(), vec![(1, 3.0), (2, 3.0)]);
        let again = d.add_diagonal(&[1.0, 1.0, 1.0]);
        assert_eq!(again.diagonal(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn submatrix_and_products() {
        let dense = vec![
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ];
        let m = CsrMatrix::from_dense(&dense);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(m.left_mul_vec(&[1.0, 0.0, 0.0]), vec![2.0, -1.0, 0.0]);
        let s = m.submatrix(&[2, 0]);
        assert_eq!(s.to_dense(), vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert!(m.is_symmetric());
        assert_eq!(m.frobenius_distance(&m), 0.0);
        assert!((m.frobenius_distance(&CsrMatrix::zeros(3)) - 16f64.sqrt()).abs() < 1e-15);
    }
}
