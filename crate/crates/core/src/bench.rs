//! Benchmark systems: Chafee-Infante, a damped mass-spring chain, a heated
//! rod with delayed feedback, and a planted low-order system.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MorError, Result};
use crate::expr::ScalarExpr;
use crate::model::{BilinTerm, ParamMatrix, PolyTerm, StructuredOperator, System};
use crate::sparse::{RealMatrix, SparseMatrix};
use crate::tensor::KronMatrix;

fn expr(text: &str) -> ScalarExpr {
    text.parse().expect("built-in coefficient parses")
}

fn tridiag(n: usize, lower: f64, diag: f64, upper: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, lower));
        }
        t.push((i, i, diag));
        if i + 1 < n {
            t.push((i, i + 1, upper));
        }
    }
    t
}

/// Chafee-Infante `v_t = v_xx + v (p − v²)` on `k` interior nodes of
/// (0, 1), `h = 1/(k+1)`. The input is the Dirichlet value at `x = 0`, the
/// right end uses the mirror `v_{k+1} = v_k`, and the output is `v_k`.
///
/// `K(s,p) = sI − A₁ − p I`, `H₃` has `−1` at `(i, ω(i,i,i))`.
pub fn gen_chafee(k: usize) -> Result<System> {
    if k < 3 {
        return Err(MorError::Dimension(format!("chafee grid needs k ≥ 3, got {k}")));
    }
    let h2 = ((k + 1) * (k + 1)) as f64;
    let mut lap = tridiag(k, h2, -2.0 * h2, h2);
    for t in lap.iter_mut() {
        if t.0 == k - 1 && t.1 == k - 1 {
            t.2 = -h2;
        }
    }
    let neg_lap = SparseMatrix::from_triplets(k, k, lap)?.scale(-1.0);
    let operator = StructuredOperator::new(vec![
        (ScalarExpr::s(), RealMatrix::identity(k)),
        (ScalarExpr::one(), RealMatrix::from_sparse(neg_lap)),
        (expr("-p0"), RealMatrix::identity(k)),
    ])?;
    let b = RealMatrix::from_triplets(k, 1, vec![(0, 0, h2)])?;
    let c = RealMatrix::from_triplets(1, k, vec![(0, k - 1, 1.0)])?;
    let cube = (0..k).map(|i| (i, i * (1 + k + k * k), -1.0)).collect();
    let h3 = PolyTerm::new(3, KronMatrix::from_triplets(k, vec![k; 3], cube)?)?;
    let mut sys = System::new(operator, ParamMatrix::constant(b), ParamMatrix::constant(c), vec![h3], vec![])?;
    sys.q = 1;
    Ok(sys)
}

/// Parameters of the mass-spring-damper surrogate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsdConfig {
    pub stiffness: f64,
    pub damping: f64,
    /// `N_j = eps · 0.1 · K` restricted to half `j` of the chain.
    pub bilinear_eps: f64,
}

impl Default for MsdConfig {
    fn default() -> Self {
        MsdConfig { stiffness: 2.0, damping: 0.1, bilinear_eps: 1e-3 }
    }
}

/// Chain of unit masses, each tied to its neighbours and to the ground.
fn chain(n: usize, c: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        let links = 1 + usize::from(i > 0) + usize::from(i + 1 < n);
        t.push((i, i, c * links as f64));
        if i > 0 {
            t.push((i, i - 1, -c));
        }
        if i + 1 < n {
            t.push((i, i + 1, -c));
        }
    }
    t
}

/// `s²M + sD + K` with `M = I`, forcing at both ends, collocated outputs
/// and a stiffness modulation per input.
pub fn gen_msd(n_dof: usize) -> Result<System> {
    gen_msd_with(n_dof, MsdConfig::default())
}

pub fn gen_msd_with(n_dof: usize, cfg: MsdConfig) -> Result<System> {
    let n = n_dof;
    if n < 4 {
        return Err(MorError::Dimension(format!("mass-spring chain needs at least 4 masses, got {n}")));
    }
    let k_trips = chain(n, cfg.stiffness);
    let stiff = RealMatrix::from_triplets(n, n, k_trips.clone())?;
    let damp = RealMatrix::from_triplets(n, n, chain(n, cfg.damping))?;
    let operator = StructuredOperator::new(vec![
        (expr("s^2"), RealMatrix::identity(n)),
        (ScalarExpr::s(), damp),
        (ScalarExpr::one(), stiff),
    ])?;
    let b = RealMatrix::from_triplets(n, 2, vec![(0, 0, 1.0), (n - 1, 1, 1.0)])?;
    let c = b.transpose();
    let half = n / 2;
    let scale = cfg.bilinear_eps * 0.1;
    let mut n_trips = Vec::new();
    for (i, j, v) in k_trips {
        let block = usize::from(i >= half);
        if usize::from(j >= half) == block {
            n_trips.push((i, block * n + j, scale * v));
        }
    }
    let n1 = BilinTerm::new(1, 2, KronMatrix::from_triplets(n, vec![2, n], n_trips)?)?;
    System::new(operator, ParamMatrix::constant(b), ParamMatrix::constant(c), vec![], vec![n1])
}

/// Heated rod on `(0, π)` with delayed feedback,
/// `K(s,p) = sI − (A₀ − p A_d) − p e^{−s} A_d`, `A_d = diag(sin x_i)`,
/// distributed input, mean-temperature output and `N = 0.2 A_d`.
pub fn gen_delay_rod(n: usize) -> Result<System> {
    if n < 3 {
        return Err(MorError::Dimension(format!("delay rod needs n ≥ 3, got {n}")));
    }
    let h = std::f64::consts::PI / (n + 1) as f64;
    let ih2 = 1.0 / (h * h);
    let neg_lap = RealMatrix::from_triplets(n, n, tridiag(n, -ih2, 2.0 * ih2, -ih2))?;
    let sines: Vec<f64> = (1..=n).map(|i| (i as f64 * h).sin()).collect();
    let ad = RealMatrix::from_sparse(SparseMatrix::from_diagonal(&sines));
    let operator = StructuredOperator::new(vec![
        (ScalarExpr::s(), RealMatrix::identity(n)),
        (ScalarExpr::one(), neg_lap),
        (expr("p0"), ad.clone()),
        (expr("-p0 * exp(-s)"), ad),
    ])?;
    let b = RealMatrix::from_triplets(n, 1, (0..n).map(|i| (i, 0, 1.0)).collect())?;
    let c = RealMatrix::from_triplets(1, n, (0..n).map(|i| (0, i, 1.0 / n as f64)).collect())?;
    let nt = (0..n).map(|i| (i, i, 0.2 * sines[i])).collect();
    let n1 = BilinTerm::new(1, 1, KronMatrix::from_triplets(n, vec![1, n], nt)?)?;
    System::new(operator, ParamMatrix::constant(b), ParamMatrix::constant(c), vec![], vec![n1])
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix shifted so every eigenvalue has real part ≤ −0.5.
fn stable(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    let g = uniform(rng, r, r) / (r as f64).sqrt();
    let shift = g.norm() + 0.5;
    g - DMatrix::identity(r, r) * shift
}

fn first_order(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, poly: Vec<PolyTerm>, bilin: Vec<BilinTerm>) -> Result<System> {
    let n = a.nrows();
    let operator = StructuredOperator::new(vec![
        (ScalarExpr::s(), RealMatrix::identity(n)),
        (ScalarExpr::one(), RealMatrix::from_dense(-a)),
    ])?;
    System::new(
        operator,
        ParamMatrix::constant(RealMatrix::from_dense(b.clone())),
        ParamMatrix::constant(RealMatrix::from_dense(c.clone())),
        poly,
        bilin,
    )
}

/// Random tensor rows `rows` over the first `r` coordinates of each factor;
/// the leading factor of a bilinear tensor (`lead > 0`) is kept whole.
fn block_tensor(
    rng: &mut ChaCha8Rng,
    n: usize,
    rows: std::ops::Range<usize>,
    r: usize,
    order: usize,
    lead: usize,
) -> Result<KronMatrix> {
    let mut dims = Vec::new();
    if lead > 0 {
        dims.push(lead);
    }
    dims.extend(std::iter::repeat_n(n, order));
    let mut trips = Vec::new();
    let ranges: Vec<usize> = dims.iter().enumerate().map(|(i, &d)| if lead > 0 && i == 0 { d } else { r }).collect();
    let total: usize = ranges.iter().product();
    let scale = 0.3 / (total as f64).sqrt();
    let mut digits = vec![0usize; dims.len()];
    for row in rows {
        for flat in 0..total {
            let mut rem = flat;
            for (d, range) in digits.iter_mut().zip(&ranges).rev() {
                *d = rem % range;
                rem /= range;
            }
            let col = digits.iter().zip(&dims).fold(0, |acc, (d, dim)| acc * dim + d);
            trips.push((row, col, scale * rng.random_range(-1.0..1.0)));
        }
    }
    KronMatrix::from_triplets(n, dims, trips)
}

/// A random stable first-order system of order `r0` with `H₂` and `N₁`,
/// extended to order `n` by states that are reachable but unobservable or
/// observable but unreachable, then rotated by a random orthogonal matrix.
/// Returns `(full, hidden)`; both have identical transfer functions.
pub fn gen_planted(r0: usize, n: usize, seed: u64) -> Result<(System, System)> {
    if r0 == 0 || r0 > n {
        return Err(MorError::Dimension(format!("planted order {r0} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = (n - r0) / 2;
    let (x, e1, e2) = (0..r0, r0..r0 + n1, r0 + n1..n);

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (r0, r0)).copy_from(&stable(&mut rng, r0));
    if n > r0 {
        let a13 = uniform(&mut rng, r0, e2.len()) * 0.5;
        a.view_mut((0, e2.start), (r0, e2.len())).copy_from(&a13);
        let a2 = uniform(&mut rng, n1, n) * 0.5;
        a.view_mut((e1.start, 0), (n1, n)).copy_from(&a2);
        let a22 = stable(&mut rng, n1);
        a.view_mut((e1.start, e1.start), (n1, n1)).copy_from(&a22);
        let a33 = stable(&mut rng, e2.len());
        a.view_mut((e2.start, e2.start), (e2.len(), e2.len())).copy_from(&a33);
    }
    let mut b = DMatrix::zeros(n, 1);
    b.view_mut((0, 0), (r0 + n1, 1)).copy_from(&uniform(&mut rng, r0 + n1, 1));
    let mut c = DMatrix::zeros(1, n);
    c.view_mut((0, 0), (1, r0)).copy_from(&uniform(&mut rng, 1, r0));
    c.view_mut((0, e2.start), (1, e2.len())).copy_from(&uniform(&mut rng, 1, e2.len()));

    // x̂ rows see only x̂; e1 rows are free; e2 rows vanish.
    let h_x = block_tensor(&mut rng, n, x.clone(), r0, 2, 0)?;
    let h_e = block_tensor(&mut rng, n, e1.clone(), r0 + n1, 2, 0)?;
    let h = KronMatrix::from_triplets(n, vec![n, n], h_x.matrix().iter().chain(h_e.matrix().iter()).collect())?;
    let h = PolyTerm::new(2, h)?.symmetrize()?;
    let n_x = block_tensor(&mut rng, n, x.clone(), r0, 1, 1)?;
    let n_e = block_tensor(&mut rng, n, e1.clone(), r0 + n1, 1, 1)?;
    let nt = KronMatrix::from_triplets(n, vec![1, n], n_x.matrix().iter().chain(n_e.matrix().iter()).collect())?;
    let nt = BilinTerm::new(1, 1, nt)?;

    let restrict = DMatrix::<f64>::identity(n, r0);
    let hidden = first_order(
        &a.view((0, 0), (r0, r0)).into_owned(),
        &b.rows(0, r0).into_owned(),
        &c.columns(0, r0).into_owned(),
        vec![h.reduce(&restrict, &restrict)?],
        vec![nt.reduce(&restrict, &restrict)?],
    )?;
    if r0 == n {
        return Ok((first_order(&a, &b, &c, vec![h], vec![nt])?, hidden));
    }
    let q = uniform(&mut rng, n, n).qr().q();
    let qt = q.transpose();
    let full = first_order(&(&q * &a * &qt), &(&q * &b), &(&c * &qt), vec![h.reduce(&qt, &qt)?.symmetrize()?], vec![nt.reduce(&qt, &qt)?])?;
    Ok((full, hidden))
}

/// `n` logarithmically spaced values in `[a, b]`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.log10(), b.log10());
    (0..n).map(|i| 10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64)).collect()
}

/// `n` evenly spaced values in `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Column vector of ones, handy for tangential directions.
pub fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}
