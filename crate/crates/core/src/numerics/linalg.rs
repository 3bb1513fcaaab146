//! Dense column-major matrices and a Householder QR with limited column
//! pivoting: columns are processed in order and a column found to be
//! (numerically) dependent on its predecessors is reported rather than
//! silently absorbed.

use super::NumericsError;

/// Relative tolerance for declaring a column linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
    names: Option<Vec<String>>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
            names: None,
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m.data[j * nrows + i] = f(i, j);
            }
        }
        m
    }

    /// Panics if rows have unequal lengths.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self::from_fn(rows.len(), ncols, |i, j| rows[i][j])
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let nrows = cols.first().map_or(0, Vec::len);
        assert!(cols.iter().all(|c| c.len() == nrows), "ragged columns");
        Matrix {
            nrows,
            ncols: cols.len(),
            data: cols.concat(),
            names: None,
        }
    }

    pub fn with_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        assert_eq!(names.len(), self.ncols, "one name per column");
        self.names = Some(names);
        self
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nrows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn column_name(&self, j: usize) -> String {
        self.names
            .as_ref()
            .map_or_else(|| format!("x{j}"), |n| n[j].clone())
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Copy without column `j`.
    pub fn drop_column(&self, j: usize) -> Matrix {
        let cols: Vec<Vec<f64>> = (0..self.ncols)
            .filter(|&k| k != j)
            .map(|k| self.column(k).to_vec())
            .collect();
        let mut m = Matrix::from_columns(&cols);
        m.nrows = self.nrows;
        if let Some(names) = &self.names {
            m.names = Some(
                names
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, n)| n.clone())
                    .collect(),
            );
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (j, &b) in v.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += x * b;
            }
        }
        out
    }

    /// Rows scaled by `w[i]`.
    pub fn scale_rows(&self, w: &[f64]) -> Matrix {
        let mut m = self.clone();
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                m.data[j * self.nrows + i] *= w[i];
            }
        }
        m
    }
}

/// Thin QR factorization of a full-column-rank matrix.
#[derive(Debug, Clone)]
pub struct Qr {
    n: usize,
    p: usize,
    /// Householder vectors below the diagonal, R on and above (column-major).
    qr: Vec<f64>,
    rdiag: Vec<f64>,
}

impl Qr {
    pub fn new(a: &Matrix) -> Result<Qr, NumericsError> {
        let (n, p) = (a.nrows, a.ncols);
        if n < p {
            return Err(NumericsError::Dimension(format!(
                "{n} rows cannot determine {p} coefficients"
            )));
        }
        let mut qr = a.data.clone();
        let mut rdiag = vec![0.0; p];
        let mut largest = 0.0f64;
        for k in 0..p {
            let col_norm = a.column(k).iter().map(|x| x * x).sum::<f64>().sqrt();
            let kcol = &mut qr[k * n..(k + 1) * n];
            let nrm = kcol[k..].iter().fold(0.0f64, |acc, x| acc.hypot(*x));
            largest = largest.max(col_norm).max(nrm);
            if !(nrm > RANK_TOL * largest) || !nrm.is_finite() {
                return Err(NumericsError::RankDeficient {
                    column: k,
                    name: a.column_name(k),
                });
            }
            let nrm = if kcol[k] < 0.0 { -nrm } else { nrm };
            for x in &mut kcol[k..] {
                *x /= nrm;
            }
            kcol[k] += 1.0;
            for j in k + 1..p {
                let (left, right) = qr.split_at_mut(j * n);
                let kcol = &left[k * n..(k + 1) * n];
                let jcol = &mut right[..n];
                let s: f64 = (k..n).map(|i| kcol[i] * jcol[i]).sum::<f64>() / kcol[k];
                for i in k..n {
                    jcol[i] -= s * kcol[i];
                }
            }
            rdiag[k] = -nrm;
        }
        Ok(Qr { n, p, qr, rdiag })
    }

    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.n;
        for k in 0..self.p {
            let kcol = &self.qr[k * n..(k + 1) * n];
            let s: f64 = (k..n).map(|i| kcol[i] * y[i]).sum::<f64>() / kcol[k];
            for i in k..n {
                y[i] -= s * kcol[i];
            }
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.rdiag[i]
        } else {
            self.qr[j * self.n + i]
        }
    }

    /// Least-squares solution of `A x ≈ y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut x = vec![0.0; self.p];
        for k in (0..self.p).rev() {
            let mut s = qty[k];
            for j in k + 1..self.p {
                s -= self.r(k, j) * x[j];
            }
            x[k] = s / self.rdiag[k];
        }
        x
    }

    /// `(AᵀA)⁻¹ = R⁻¹ R⁻ᵀ`, row-major `p × p`.
    pub fn inverse_gram(&self) -> Vec<Vec<f64>> {
        let p = self.p;
        // invert the upper-triangular R column by column
        let mut rinv = vec![vec![0.0; p]; p];
        for col in 0..p {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in i + 1..=col {
                    s -= self.r(i, k) * rinv[k][col];
                }
                rinv[i][col] = s / self.rdiag[i];
            }
        }
        let mut out = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                out[i][j] = (i.max(j)..p).map(|k| rinv[i][k] * rinv[j][k]).sum();
            }
        }
        out
    }
}
