use crate::scalar::Real;

/// Compressed sparse row matrix with sorted column indices and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
    symmetric: bool,
}

impl<T: Real> CsrMatrix<T> {
    /// Assembles an `n × n` matrix; duplicate entries are summed, zeros dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, T)>, symmetric: bool) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut i = 0;
        while i < triplets.len() {
            let (r, c, mut v) = triplets[i];
            i += 1;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                v += triplets[i].2;
                i += 1;
            }
            if v != T::zero() {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        for &r in &rows {
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
            symmetric,
        }
    }

    /// Builds from raw CSR arrays, dropping zeros (rows must already be sorted).
    pub fn from_csr(n: usize, row_ptr: &[usize], cols: &[u32], vals: &[T], symmetric: bool) -> Self {
        let mut out_ptr = Vec::with_capacity(n + 1);
        out_ptr.push(0);
        let mut out_cols = Vec::with_capacity(cols.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        for r in 0..n {
            for idx in row_ptr[r]..row_ptr[r + 1] {
                if vals[idx] != T::zero() {
                    out_cols.push(cols[idx]);
                    out_vals.push(vals[idx]);
                }
            }
            out_ptr.push(out_cols.len());
        }
        CsrMatrix {
            n,
            row_ptr: out_ptr,
            cols: out_cols,
            vals: out_vals,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            vals: vec![T::one(); n],
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (self.cols[i] as usize, self.vals[i]))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let s = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match s.binary_search(&(c as u32)) {
            Ok(i) => self.vals[self.row_ptr[r] + i],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x` with a fixed sequential reduction order.
    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for r in 0..self.n {
            let mut s = T::zero();
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[i] * x[self.cols[i] as usize];
            }
            y[r] = s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n * self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                d[r * self.n + c] = v;
            }
        }
        d
    }

    /// Checks the structural invariants: sorted unique columns, no zeros, in range.
    pub fn is_well_formed(&self) -> bool {
        self.row_ptr.len() == self.n + 1
            && (0..self.n).all(|r| {
                let s = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
                s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&c| (c as usize) < self.n)
            })
            && self.vals.iter().all(|&v| v != T::zero())
    }
}
