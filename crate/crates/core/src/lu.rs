//! LU factorizations with partial pivoting (dense and banded) supporting
//! solves with `A` and `Aᵀ`, plus a 1-norm estimate of `‖A⁻¹‖`.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{MorError, Result};
use crate::sparse::{RealMatrix, DENSE_CUTOFF};

/// Dense LU, `P A = L U`, row-major storage.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    a: Vec<T>,
    perm: Vec<usize>,
}

impl<T: ComplexField<RealField = f64>> DenseLu<T> {
    pub fn factor(m: &DMatrix<T>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(MorError::Dimension("LU of a non-square matrix".into()));
        }
        let mut a = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = m[(i, j)].clone();
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].clone().modulus();
            for i in k + 1..n {
                let v = a[i * n + k].clone().modulus();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return Err(MorError::SingularPencil { s: Default::default(), p: vec![], cond: f64::INFINITY });
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = a[k * n + k].clone();
            for i in k + 1..n {
                let l = a[i * n + k].clone() / pivot.clone();
                a[i * n + k] = l.clone();
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = a[k * n + j].clone();
                    a[i * n + j] -= l.clone() * u;
                }
            }
        }
        Ok(DenseLu { n, a, perm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            let mut acc = x[i].clone();
            for j in 0..i {
                acc -= self.a[i * n + j].clone() * x[j].clone();
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i].clone();
            for j in i + 1..n {
                acc -= self.a[i * n + j].clone() * x[j].clone();
            }
            x[i] = acc / self.a[i * n + i].clone();
        }
        DVector::from_vec(x)
    }

    /// Solves `Aᵀ x = b` (plain transpose).
    pub fn solve_tr_vec(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let mut z: Vec<T> = b.iter().cloned().collect();
        for i in 0..n {
            let mut acc = z[i].clone();
            for j in 0..i {
                acc -= self.a[j * n + i].clone() * z[j].clone();
            }
            z[i] = acc / self.a[i * n + i].clone();
        }
        for i in (0..n).rev() {
            let mut acc = z[i].clone();
            for j in i + 1..n {
                acc -= self.a[j * n + i].clone() * z[j].clone();
            }
            z[i] = acc;
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k].clone();
        }
        DVector::from_vec(x)
    }
}

/// Banded LU in the style of `gbtrf`: row interchanges are interleaved with
/// the elimination and the multipliers are stored unpermuted.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<T>,
    piv: Vec<usize>,
}

impl<T: ComplexField<RealField = f64>> BandedLu<T> {
    /// Factors the matrix given by its entries in the band `[-kl, ku]`.
    pub fn factor(n: usize, kl: usize, ku: usize, entries: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu { n, kl, ku, width, a: vec![T::zero(); n * width], piv: vec![0; n] };
        for (i, j, v) in entries {
            if i >= n || j >= n || i > j + kl || j > i + ku {
                return Err(MorError::OutOfRange(format!("entry ({i}, {j}) outside band")));
            }
            let idx = lu.idx(i, j);
            lu.a[idx] += v;
        }
        let span = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.idx(k, k)].clone().modulus();
            for i in k + 1..=last {
                let v = lu.a[lu.idx(i, k)].clone().modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(MorError::SingularPencil { s: Default::default(), p: vec![], cond: f64::INFINITY });
            }
            lu.piv[k] = p;
            let jmax = (k + span).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (x, y) = (lu.idx(k, j), lu.idx(p, j));
                    lu.a.swap(x, y);
                }
            }
            let pivot = lu.a[lu.idx(k, k)].clone();
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.a[ik].clone() / pivot.clone();
                lu.a[ik] = l.clone();
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=jmax {
                    let u = lu.a[lu.idx(k, j)].clone();
                    let ij = lu.idx(i, j);
                    lu.a[ij] -= l.clone() * u;
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let span = self.kl + self.ku;
        let mut x: Vec<T> = b.iter().cloned().collect();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k].clone();
            for i in k + 1..=(k + self.kl).min(n - 1) {
                x[i] -= self.a[self.idx(i, k)].clone() * xk.clone();
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i].clone();
            for j in i + 1..=(i + span).min(n - 1) {
                acc -= self.a[self.idx(i, j)].clone() * x[j].clone();
            }
            x[i] = acc / self.a[self.idx(i, i)].clone();
        }
        DVector::from_vec(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_tr_vec(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let span = self.kl + self.ku;
        let mut z: Vec<T> = b.iter().cloned().collect();
        for i in 0..n {
            let mut acc = z[i].clone();
            for j in i.saturating_sub(span)..i {
                acc -= self.a[self.idx(j, i)].clone() * z[j].clone();
            }
            z[i] = acc / self.a[self.idx(i, i)].clone();
        }
        for k in (0..n).rev() {
            let mut acc = z[k].clone();
            for i in k + 1..=(k + self.kl).min(n - 1) {
                acc -= self.a[self.idx(i, k)].clone() * z[i].clone();
            }
            z[k] = acc;
            let p = self.piv[k];
            if p != k {
                z.swap(k, p);
            }
        }
        DVector::from_vec(z)
    }
}

/// Either factorization behind one interface.
#[derive(Clone, Debug)]
pub enum Lu<T> {
    Dense(DenseLu<T>),
    Banded(BandedLu<T>),
}

impl<T: ComplexField<RealField = f64>> Lu<T> {
    pub fn n(&self) -> usize {
        match self {
            Lu::Dense(f) => f.n(),
            Lu::Banded(f) => f.n(),
        }
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        match self {
            Lu::Dense(f) => f.solve_vec(b),
            Lu::Banded(f) => f.solve_vec(b),
        }
    }

    pub fn solve_tr_vec(&self, b: &DVector<T>) -> DVector<T> {
        match self {
            Lu::Dense(f) => f.solve_tr_vec(b),
            Lu::Banded(f) => f.solve_tr_vec(b),
        }
    }

    pub fn solve(&self, b: &DMatrix<T>, transpose: bool) -> DMatrix<T> {
        let mut out = DMatrix::from_element(b.nrows(), b.ncols(), T::zero());
        for c in 0..b.ncols() {
            let col = b.column(c).into_owned();
            let x = if transpose { self.solve_tr_vec(&col) } else { self.solve_vec(&col) };
            out.set_column(c, &x);
        }
        out
    }

    /// Estimate of `‖A⁻¹‖₁` (Hager's method with Higham's refinements).
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let norm1 = |v: &DVector<T>| v.iter().map(|x| x.clone().modulus()).sum::<f64>();
        let mut x = DVector::from_element(n, T::from_real(1.0 / n as f64));
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve_vec(&x);
            est = norm1(&y);
            let xi = y.map(|v| {
                let m = v.clone().modulus();
                if m == 0.0 {
                    T::one()
                } else {
                    v.unscale(m)
                }
            });
            // z = A^{-H} ξ = conj(A^{-T} conj(ξ)).
            let z = self.solve_tr_vec(&xi.map(|v| v.conjugate())).map(|v| v.conjugate());
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(k, v)| (k, v.clone().modulus()))
                .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let ztx: f64 = z.iter().zip(x.iter()).map(|(a, b)| (a.clone().conjugate() * b.clone()).real()).sum();
            if iter > 0 && (zmax <= ztx || j == last_j) {
                break;
            }
            last_j = j;
            x = DVector::from_element(n, T::zero());
            x[j] = T::one();
        }
        let alt = DVector::from_fn(n, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
            T::from_real(sign * (1.0 + i as f64 / denom))
        });
        let alt_est = 2.0 * norm1(&self.solve_vec(&alt)) / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// Real factorization of a constant matrix, banded when the band is narrow.
pub fn factor_real(a: &RealMatrix) -> Result<Lu<f64>> {
    let n = a.nrows();
    let (kl, ku) = a.bandwidth();
    if n >= DENSE_CUTOFF && (2 * kl + ku + 1) * 8 <= n {
        BandedLu::factor(n, kl, ku, a.triplets()).map(Lu::Banded)
    } else {
        DenseLu::factor(&a.to_dense()).map(Lu::Dense)
    }
}
