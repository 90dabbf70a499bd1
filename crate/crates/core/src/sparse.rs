//! Real sparse and dense matrix storage.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{MorError, Result};

/// Matrices with fewer rows and columns than this are kept dense.
pub const DENSE_CUTOFF: usize = 64;

/// Coordinate storage sorted by (row, col) with duplicates coalesced.
/// `row_ptr` indexes the start of each row, so row slices are cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], cols: Vec::new(), vals: Vec::new() }
    }

    /// Builds from unsorted triplets. Duplicates are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, _) in &trips {
            if i >= nrows || j >= ncols {
                return Err(MorError::OutOfRange(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
            }
        }
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut cols = Vec::with_capacity(trips.len());
        let mut vals = Vec::with_capacity(trips.len());
        let mut rows = Vec::with_capacity(trips.len());
        let mut k = 0;
        while k < trips.len() {
            let (i, j, mut v) = trips[k];
            k += 1;
            while k < trips.len() && trips[k].0 == i && trips[k].1 == j {
                v += trips[k].2;
                k += 1;
            }
            if v != 0.0 {
                rows.push(i);
                cols.push(j);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix { nrows, ncols, row_ptr, cols, vals })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut trips = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    trips.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), trips).expect("indices in range")
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let trips = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), trips).expect("indices in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Entries in (row, col) order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            (a..b).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.iter().collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            out[(i, j)] = v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let trips = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, trips).expect("indices in range")
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= c);
        if c == 0.0 {
            return Self::zeros(self.nrows, self.ncols);
        }
        out
    }

    pub fn mul_vec<T: ComplexField<RealField = f64>>(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.ncols, "sparse mul_vec length");
        DVector::from_fn(self.nrows, |i, _| {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                acc += x[j].clone().scale(v);
            }
            acc
        })
    }

    /// `Aᵀ x`.
    pub fn tr_mul_vec<T: ComplexField<RealField = f64>>(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.nrows, "sparse tr_mul_vec length");
        let mut out = DVector::from_element(self.ncols, T::zero());
        for (i, j, v) in self.iter() {
            out[j] += x[i].clone().scale(v);
        }
        out
    }

    pub fn mul_mat<T: ComplexField<RealField = f64>>(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.ncols, "sparse mul_mat shape");
        let mut out = DMatrix::from_element(self.nrows, x.ncols(), T::zero());
        for c in 0..x.ncols() {
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                let mut acc = T::zero();
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += x[(j, c)].clone().scale(v);
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    /// Largest column sum of absolute values.
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for (_, j, v) in self.iter() {
            sums[j] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// (lower, upper) bandwidth of the sparsity pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for (i, j, _) in self.iter() {
            if i > j {
                lo = lo.max(i - j);
            } else {
                up = up.max(j - i);
            }
        }
        (lo, up)
    }
}

/// A constant real matrix, dense below [`DENSE_CUTOFF`] and sparse above.
#[derive(Clone, Debug, PartialEq)]
pub enum RealMatrix {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

impl RealMatrix {
    /// Chooses storage by size: dense when both dimensions are below the cutoff.
    pub fn from_triplets(nrows: usize, ncols: usize, trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        let sp = SparseMatrix::from_triplets(nrows, ncols, trips)?;
        Ok(Self::from_sparse(sp))
    }

    pub fn from_sparse(sp: SparseMatrix) -> Self {
        if sp.nrows() < DENSE_CUTOFF && sp.ncols() < DENSE_CUTOFF {
            RealMatrix::Dense(sp.to_dense())
        } else {
            RealMatrix::Sparse(sp)
        }
    }

    /// Dense input stays dense unless it is large and mostly zero.
    pub fn from_dense(a: DMatrix<f64>) -> Self {
        if a.nrows() >= DENSE_CUTOFF || a.ncols() >= DENSE_CUTOFF {
            let nnz = a.iter().filter(|v| **v != 0.0).count();
            if nnz * 4 < a.len() {
                return RealMatrix::Sparse(SparseMatrix::from_dense(&a));
            }
        }
        RealMatrix::Dense(a)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sparse(SparseMatrix::identity(n))
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_sparse(SparseMatrix::zeros(nrows, ncols))
    }

    pub fn nrows(&self) -> usize {
        match self {
            RealMatrix::Dense(a) => a.nrows(),
            RealMatrix::Sparse(a) => a.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            RealMatrix::Dense(a) => a.ncols(),
            RealMatrix::Sparse(a) => a.ncols(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            RealMatrix::Dense(a) => a.clone(),
            RealMatrix::Sparse(a) => a.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        match self {
            RealMatrix::Dense(a) => SparseMatrix::from_dense(a),
            RealMatrix::Sparse(a) => a.clone(),
        }
    }

    /// Nonzero entries in (row, col) order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match self {
            RealMatrix::Dense(a) => {
                let mut out = Vec::new();
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        if a[(i, j)] != 0.0 {
                            out.push((i, j, a[(i, j)]));
                        }
                    }
                }
                out
            }
            RealMatrix::Sparse(a) => a.triplets(),
        }
    }

    pub fn transpose(&self) -> Self {
        match self {
            RealMatrix::Dense(a) => RealMatrix::Dense(a.transpose()),
            RealMatrix::Sparse(a) => RealMatrix::Sparse(a.transpose()),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        match self {
            RealMatrix::Dense(a) => RealMatrix::Dense(a * c),
            RealMatrix::Sparse(a) => RealMatrix::Sparse(a.scale(c)),
        }
    }

    pub fn mul_vec<T: ComplexField<RealField = f64>>(&self, x: &DVector<T>) -> DVector<T> {
        match self {
            RealMatrix::Dense(a) => {
                assert_eq!(x.len(), a.ncols(), "dense mul_vec length");
                DVector::from_fn(a.nrows(), |i, _| {
                    let mut acc = T::zero();
                    for j in 0..a.ncols() {
                        acc += x[j].clone().scale(a[(i, j)]);
                    }
                    acc
                })
            }
            RealMatrix::Sparse(a) => a.mul_vec(x),
        }
    }

    pub fn tr_mul_vec<T: ComplexField<RealField = f64>>(&self, x: &DVector<T>) -> DVector<T> {
        match self {
            RealMatrix::Dense(a) => {
                assert_eq!(x.len(), a.nrows(), "dense tr_mul_vec length");
                DVector::from_fn(a.ncols(), |j, _| {
                    let mut acc = T::zero();
                    for i in 0..a.nrows() {
                        acc += x[i].clone().scale(a[(i, j)]);
                    }
                    acc
                })
            }
            RealMatrix::Sparse(a) => a.tr_mul_vec(x),
        }
    }

    pub fn mul_mat<T: ComplexField<RealField = f64>>(&self, x: &DMatrix<T>) -> DMatrix<T> {
        match self {
            RealMatrix::Dense(a) => {
                assert_eq!(x.nrows(), a.ncols(), "dense mul_mat shape");
                let mut out = DMatrix::from_element(a.nrows(), x.ncols(), T::zero());
                for c in 0..x.ncols() {
                    for j in 0..a.ncols() {
                        let xj = x[(j, c)].clone();
                        for i in 0..a.nrows() {
                            let v = a[(i, j)];
                            if v != 0.0 {
                                out[(i, c)] += xj.clone().scale(v);
                            }
                        }
                    }
                }
                out
            }
            RealMatrix::Sparse(a) => a.mul_mat(x),
        }
    }

    /// `Wᵀ A V` for real dense bases.
    pub fn project(&self, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let av = match self {
            RealMatrix::Dense(a) => a * v,
            RealMatrix::Sparse(a) => a.mul_mat(v),
        };
        w.transpose() * av
    }

    pub fn norm1(&self) -> f64 {
        match self {
            RealMatrix::Dense(a) => a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
            RealMatrix::Sparse(a) => a.norm1(),
        }
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        match self {
            RealMatrix::Dense(a) => {
                let mut lo = 0;
                let mut up = 0;
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        if a[(i, j)] != 0.0 {
                            if i > j {
                                lo = lo.max(i - j);
                            } else {
                                up = up.max(j - i);
                            }
                        }
                    }
                }
                (lo, up)
            }
            RealMatrix::Sparse(a) => a.bandwidth(),
        }
    }

    pub fn is_identity(&self) -> bool {
        let (r, c) = self.shape();
        if r != c {
            return false;
        }
        let trips = self.triplets();
        trips.len() == r && trips.iter().all(|&(i, j, v)| i == j && v == 1.0)
    }

    /// Linear combination `Σ c_k A_k` of equally shaped matrices.
    pub fn combine(parts: &[(f64, &RealMatrix)]) -> Result<RealMatrix> {
        let (nr, nc) = match parts.first() {
            Some((_, a)) => a.shape(),
            None => return Err(MorError::Empty("linear combination of no matrices".into())),
        };
        if parts.iter().any(|(_, a)| a.shape() != (nr, nc)) {
            return Err(MorError::Dimension("combined matrices differ in shape".into()));
        }
        if parts.iter().all(|(_, a)| matches!(a, RealMatrix::Dense(_))) {
            let mut out = DMatrix::zeros(nr, nc);
            for (c, a) in parts {
                if let RealMatrix::Dense(d) = a {
                    out += d * *c;
                }
            }
            return Ok(RealMatrix::Dense(out));
        }
        let mut trips = Vec::new();
        for (c, a) in parts {
            trips.extend(a.triplets().into_iter().map(|(i, j, v)| (i, j, c * v)));
        }
        RealMatrix::from_triplets(nr, nc, trips)
    }
}
