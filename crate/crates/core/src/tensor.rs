//! Matricized tensors: index bookkeeping, symmetrization, mode-m unfolding,
//! multilinear application and Kronecker-free projection.
//!
//! A [`KronMatrix`] is a sparse matrix whose columns are indexed by a tuple
//! of factor digits in Kronecker order: `A (v_0 ⊗ v_1 ⊗ … ⊗ v_{F-1})` has
//! `v_{F-1}` as the fastest-varying digit.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{MorError, Result};
use crate::sparse::SparseMatrix;

/// Upper bound on the number of columns a reduced tensor may have.
pub const REDUCED_COLUMN_LIMIT: u128 = 100_000_000;

/// 1-based multi-index `(i_1, …, i_ξ)` with `i_1` the fastest digit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub digits: Vec<usize>,
    pub base: usize,
}

impl MultiIndex {
    pub fn new(digits: Vec<usize>, base: usize) -> Result<Self> {
        if digits.iter().any(|&d| d == 0 || d > base) {
            return Err(MorError::OutOfRange(format!("digits {digits:?} not in [1, {base}]")));
        }
        Ok(MultiIndex { digits, base })
    }

    /// ω = i_1 + Σ_{l≥2} (i_l − 1) n^{l−1}.
    pub fn col_index(&self) -> usize {
        let mut omega = 0;
        for &d in self.digits.iter().rev() {
            omega = omega * self.base + (d - 1);
        }
        omega + 1
    }

    pub fn decode(omega: usize, n: usize, xi: usize) -> Result<Self> {
        let total = (n as u128).checked_pow(xi as u32).unwrap_or(u128::MAX);
        if omega == 0 || omega as u128 > total {
            return Err(MorError::OutOfRange(format!("column {omega} not in [1, {n}^{xi}]")));
        }
        let mut rest = omega - 1;
        let mut digits = Vec::with_capacity(xi);
        for _ in 0..xi {
            digits.push(rest % n + 1);
            rest /= n;
        }
        Ok(MultiIndex { digits, base: n })
    }
}

/// Sparse matricization with column digits in Kronecker order.
#[derive(Clone, Debug, PartialEq)]
pub struct KronMatrix {
    dims: Vec<usize>,
    mat: SparseMatrix,
}

fn product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| MorError::Dimension(format!("column count of factors {dims:?} overflows")))
}

impl KronMatrix {
    pub fn new(dims: Vec<usize>, mat: SparseMatrix) -> Result<Self> {
        if product(&dims)? != mat.ncols() {
            return Err(MorError::Dimension(format!(
                "matrix has {} columns but factors {:?} need {}",
                mat.ncols(),
                dims,
                product(&dims)?
            )));
        }
        Ok(KronMatrix { dims, mat })
    }

    pub fn from_triplets(rows: usize, dims: Vec<usize>, trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        let ncols = product(&dims)?;
        Self::new(dims, SparseMatrix::from_triplets(rows, ncols, trips)?)
    }

    pub fn zeros(rows: usize, dims: Vec<usize>) -> Result<Self> {
        let ncols = product(&dims)?;
        Self::new(dims, SparseMatrix::zeros(rows, ncols))
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.mat
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.mat.to_dense()
    }

    pub fn scale(&self, c: f64) -> Self {
        KronMatrix { dims: self.dims.clone(), mat: self.mat.scale(c) }
    }

    /// Column index to factor digits (0-based, Kronecker order).
    pub fn digits(&self, mut col: usize, out: &mut [usize]) {
        for k in (0..self.dims.len()).rev() {
            out[k] = col % self.dims[k];
            col /= self.dims[k];
        }
    }

    pub fn column_of(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&d, &n)| acc * n + d)
    }

    /// `A (v_0 ⊗ … ⊗ v_{F-1})` by one pass over the nonzeros.
    pub fn apply<T: ComplexField<RealField = f64>>(&self, factors: &[&DVector<T>]) -> Result<DVector<T>> {
        if factors.len() != self.dims.len() {
            return Err(MorError::Dimension(format!("{} factors given, {} expected", factors.len(), self.dims.len())));
        }
        for (k, f) in factors.iter().enumerate() {
            if f.len() != self.dims[k] {
                return Err(MorError::Dimension(format!("factor {k} has length {}, expected {}", f.len(), self.dims[k])));
            }
        }
        let mut out = DVector::from_element(self.rows(), T::zero());
        let mut digits = vec![0; self.dims.len()];
        for i in 0..self.rows() {
            let (cols, vals) = self.mat.row(i);
            let mut acc = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                self.digits(c, &mut digits);
                let mut term = T::from_real(v);
                for (f, &d) in factors.iter().zip(&digits) {
                    term *= f[d].clone();
                }
                acc += term;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Mode-`m` matricization (1-based mode, mode 1 = rows). Mode `k ≥ 2`
    /// is Kronecker factor `F − (k − 1)`; remaining modes keep their order
    /// with the old row mode appended as the fastest factor.
    pub fn mode(&self, m: usize) -> Result<KronMatrix> {
        let f = self.dims.len();
        if m == 0 || m > f + 1 {
            return Err(MorError::OutOfRange(format!("mode {m} of a {}-way tensor", f + 1)));
        }
        if m == 1 {
            return Ok(self.clone());
        }
        let c = f - (m - 1);
        let mut dims: Vec<usize> = self.dims.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, &d)| d).collect();
        dims.push(self.rows());
        let rows = self.dims[c];
        let ncols = product(&dims)?;
        let mut digits = vec![0; f];
        let mut trips = Vec::with_capacity(self.nnz());
        for (i, col, v) in self.mat.iter() {
            self.digits(col, &mut digits);
            let mut new_col = 0;
            for (k, (&d, &n)) in digits.iter().zip(&self.dims).enumerate() {
                if k != c {
                    new_col = new_col * n + d;
                }
            }
            new_col = new_col * self.rows() + i;
            trips.push((digits[c], new_col, v));
        }
        KronMatrix::new(dims, SparseMatrix::from_triplets(rows, ncols, trips)?)
    }

    /// Averages over all permutations of the factor digits in `range`: each
    /// orbit of columns is summed, divided by its size α (the multinomial
    /// count of distinct permutations) and written back to every member.
    pub fn symmetrize(&self, range: std::ops::Range<usize>) -> Result<KronMatrix> {
        if range.end > self.dims.len() || range.clone().any(|k| self.dims[k] != self.dims[range.start]) {
            return Err(MorError::Dimension("symmetrized factors must share one dimension".into()));
        }
        let mut digits = vec![0; self.dims.len()];
        let mut orbits: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for (i, col, v) in self.mat.iter() {
            self.digits(col, &mut digits);
            digits[range.clone()].sort_unstable();
            *orbits.entry((i, self.column_of(&digits))).or_insert(0.0) += v;
        }
        let mut trips = Vec::new();
        for ((i, canon), sum) in orbits {
            self.digits(canon, &mut digits);
            let mut sub: Vec<usize> = digits[range.clone()].to_vec();
            let w = sum / multiplicity(&sub) as f64;
            loop {
                digits[range.clone()].copy_from_slice(&sub);
                trips.push((i, self.column_of(&digits), w));
                if !next_permutation(&mut sub) {
                    break;
                }
            }
        }
        KronMatrix::new(self.dims.clone(), SparseMatrix::from_triplets(self.rows(), self.mat.ncols(), trips)?)
    }

    /// True when every stored entry equals the entries at all permutations
    /// of its digits in `range`, within `tol` relative to the largest entry.
    pub fn is_symmetric(&self, range: std::ops::Range<usize>, tol: f64) -> bool {
        let scale = self.mat.iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
        let mut digits = vec![0; self.dims.len()];
        for (i, col, v) in self.mat.iter() {
            self.digits(col, &mut digits);
            let mut sub: Vec<usize> = digits[range.clone()].to_vec();
            sub.sort_unstable();
            loop {
                digits[range.clone()].copy_from_slice(&sub);
                if (self.mat.get(i, self.column_of(&digits)) - v).abs() > tol * scale {
                    return false;
                }
                if !next_permutation(&mut sub) {
                    break;
                }
            }
        }
        true
    }

    /// `Wᵀ A (M_0 ⊗ … ⊗ M_{F-1})` where `None` leaves a factor untouched.
    /// Contracts the fastest factor first so intermediates stay dense only
    /// in the already-reduced trailing modes.
    pub fn reduce(&self, w: &DMatrix<f64>, maps: &[Option<&DMatrix<f64>>]) -> Result<KronMatrix> {
        let f = self.dims.len();
        if maps.len() != f {
            return Err(MorError::Dimension(format!("{} factor maps for {} factors", maps.len(), f)));
        }
        if w.nrows() != self.rows() {
            return Err(MorError::Dimension(format!("left basis has {} rows, tensor {}", w.nrows(), self.rows())));
        }
        let mut new_dims = Vec::with_capacity(f);
        for (k, m) in maps.iter().enumerate() {
            match m {
                Some(m) => {
                    if m.nrows() != self.dims[k] {
                        return Err(MorError::Dimension(format!(
                            "factor map {k} has {} rows, expected {}",
                            m.nrows(),
                            self.dims[k]
                        )));
                    }
                    new_dims.push(m.ncols());
                }
                None => new_dims.push(self.dims[k]),
            }
        }
        let total: u128 = new_dims.iter().map(|&d| d as u128).product();
        if total > REDUCED_COLUMN_LIMIT {
            return Err(MorError::TooLarge(total));
        }

        // Blocks (row, prefix column, dense trailing values), kept sorted.
        let mut blocks: Vec<(usize, usize, Vec<f64>)> = self.mat.iter().map(|(i, c, v)| (i, c, vec![v])).collect();
        let mut len = 1usize;
        for k in (0..f).rev() {
            let nk = self.dims[k];
            let rk = new_dims[k];
            let mut next: Vec<(usize, usize, Vec<f64>)> = Vec::new();
            let mut idx = 0;
            while idx < blocks.len() {
                let (row, prefix) = (blocks[idx].0, blocks[idx].1 / nk);
                let mut acc = vec![0.0; rk * len];
                while idx < blocks.len() && blocks[idx].0 == row && blocks[idx].1 / nk == prefix {
                    let d = blocks[idx].1 % nk;
                    let vals = &blocks[idx].2;
                    match maps[k] {
                        Some(m) => {
                            for a in 0..rk {
                                let coef = m[(d, a)];
                                if coef != 0.0 {
                                    let dst = &mut acc[a * len..(a + 1) * len];
                                    for (x, y) in dst.iter_mut().zip(vals) {
                                        *x += coef * y;
                                    }
                                }
                            }
                        }
                        None => {
                            let dst = &mut acc[d * len..(d + 1) * len];
                            for (x, y) in dst.iter_mut().zip(vals) {
                                *x += y;
                            }
                        }
                    }
                    idx += 1;
                }
                next.push((row, prefix, acc));
            }
            blocks = next;
            len *= rk;
        }

        let r = w.ncols();
        let mut out = DMatrix::<f64>::zeros(r, len);
        for (row, _, vals) in &blocks {
            for a in 0..r {
                let wa = w[(*row, a)];
                if wa != 0.0 {
                    for (c, v) in vals.iter().enumerate() {
                        out[(a, c)] += wa * v;
                    }
                }
            }
        }
        KronMatrix::new(new_dims, SparseMatrix::from_dense(&out))
    }

    /// Sum of the columns, row by row.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.mat.row(i).1.iter().sum()).collect()
    }
}

/// Number of distinct permutations of a sorted digit list.
pub fn multiplicity(sorted: &[usize]) -> u64 {
    let mut result = factorial(sorted.len() as u64);
    let mut k = 0;
    while k < sorted.len() {
        let mut run = 1;
        while k + run < sorted.len() && sorted[k + run] == sorted[k] {
            run += 1;
        }
        result /= factorial(run as u64);
        k += run;
    }
    result
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// Lexicographic successor; false when `v` is already the last permutation.
pub fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
