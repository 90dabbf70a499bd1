//! Random structured systems and tensor contractions shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strmor::sparse::RealMatrix;
use strmor::tensor::KronMatrix;
use strmor::{BilinTerm, ParamMatrix, PolyTerm, ScalarExpr, StructuredOperator, System, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    FirstOrder,
    SecondOrder,
    Delay,
}

pub const KINDS: [Kind; 3] = [Kind::FirstOrder, Kind::SecondOrder, Kind::Delay];

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn dense(a: DMatrix<f64>) -> RealMatrix {
    RealMatrix::Dense(a)
}

fn expr(s: &str) -> ScalarExpr {
    s.parse().unwrap()
}

pub fn sparse_tensor(rng: &mut ChaCha8Rng, rows: usize, dims: Vec<usize>, nnz: usize, scale: f64) -> KronMatrix {
    let cols: usize = dims.iter().product();
    let trips = (0..nnz).map(|_| (rng.random_range(0..rows), rng.random_range(0..cols), scale * rng.random_range(-1.0..1.0))).collect();
    KronMatrix::from_triplets(rows, dims, trips).unwrap()
}

/// Random system of the given kind with polynomial orders `xis` and
/// bilinear orders `etas`, all tensors symmetrized.
pub fn random_system(kind: Kind, n: usize, m: usize, p_out: usize, xis: &[usize], etas: &[usize], seed: u64) -> System {
    let mut rng = rng(seed);
    let sq = (n as f64).sqrt();
    let eye = DMatrix::<f64>::identity(n, n);
    let stiff = &eye * 2.0 + uniform(&mut rng, n, n) * (0.3 / sq);
    let terms = match kind {
        Kind::FirstOrder => vec![(ScalarExpr::s(), dense(&eye + uniform(&mut rng, n, n) * (0.1 / sq))), (ScalarExpr::one(), dense(stiff))],
        Kind::SecondOrder => vec![
            (expr("s^2"), dense(&eye + uniform(&mut rng, n, n) * (0.1 / sq))),
            (ScalarExpr::s(), dense(&eye * 0.2 + uniform(&mut rng, n, n) * (0.05 / sq))),
            (ScalarExpr::one(), dense(stiff)),
        ],
        Kind::Delay => vec![
            (ScalarExpr::s(), dense(eye.clone())),
            (ScalarExpr::one(), dense(stiff)),
            (expr("exp(-s)"), dense(uniform(&mut rng, n, n) * (-0.5 / sq))),
        ],
    };
    let op = StructuredOperator::new(terms).unwrap();
    let b = ParamMatrix::constant(dense(uniform(&mut rng, n, m)));
    let c = ParamMatrix::constant(dense(uniform(&mut rng, p_out, n)));
    let poly = xis
        .iter()
        .map(|&xi| {
            let t = sparse_tensor(&mut rng, n, vec![n; xi], 3 * n, 0.5);
            PolyTerm::new(xi, t).unwrap().symmetrize().unwrap()
        })
        .collect();
    let bilin = etas
        .iter()
        .map(|&eta| {
            let mut dims = vec![m];
            dims.extend(std::iter::repeat_n(n, eta));
            let t = sparse_tensor(&mut rng, n, dims, 3 * n * m, 0.5);
            BilinTerm::new(eta, m, t).unwrap().symmetrize().unwrap()
        })
        .collect();
    System::new(op, b, c, poly, bilin).unwrap()
}

/// Contracts a transfer-function value `F` (`p × lead·m^deg`, lead index
/// slowest, slot 1 fastest) with optional weights. `weights[0]` acts on the
/// lead index and `weights[k]` on slot `k`; `None` keeps the index. Kept
/// indices are ordered lead, slot deg, …, slot 1 from slowest to fastest.
pub fn contract(f: &DMatrix<C64>, lead: usize, m: usize, deg: usize, weights: &[Option<&DVector<C64>>]) -> DMatrix<C64> {
    assert_eq!(weights.len(), deg + 1);
    assert_eq!(f.ncols(), lead * m.pow(deg as u32));
    // positions from slowest to fastest: lead, slot deg, …, slot 1
    let dims: Vec<usize> = std::iter::once(lead).chain(std::iter::repeat_n(m, deg)).collect();
    let w: Vec<Option<&DVector<C64>>> = std::iter::once(weights[0]).chain((1..=deg).rev().map(|k| weights[k])).collect();
    let kept: usize = dims.iter().zip(&w).filter(|(_, w)| w.is_none()).map(|(d, _)| *d).product();
    let mut out = DMatrix::zeros(f.nrows(), kept);
    let mut digits = vec![0; dims.len()];
    for col in 0..f.ncols() {
        let mut rest = col;
        for k in (0..dims.len()).rev() {
            digits[k] = rest % dims[k];
            rest /= dims[k];
        }
        let mut scale = C64::new(1.0, 0.0);
        let mut idx = 0;
        for k in 0..dims.len() {
            match w[k] {
                Some(v) => scale *= v[digits[k]],
                None => idx = idx * dims[k] + digits[k],
            }
        }
        let src = f.column(col) * scale;
        let mut dst = out.column_mut(idx);
        dst += src;
    }
    out
}

pub fn rel_err(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

pub fn real_vec(v: &[f64]) -> DVector<C64> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
}
