//! Shifted solves with `K(s,p)` and the multivariate transfer functions
//!
//! ```text
//! F_L(s1)          = C K⁻¹(s1) B
//! F_H(s1..s_{ξ+1}) = C K⁻¹(s_{ξ+1}) H_ξ (K⁻¹(s_ξ)B ⊗ … ⊗ K⁻¹(s1)B)
//! F_N(s1..s_{η+1}) = C K⁻¹(s_{η+1}) N_η (I_m ⊗ K⁻¹(s_η)B ⊗ … ⊗ K⁻¹(s1)B)
//! ```
//!
//! together with their analytic derivatives in each `s_j` and each `p_j`.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{MorError, Result};
use crate::expr::Var;
use crate::lu::{BandedLu, DenseLu, Lu};
use crate::model::{Family, StructuredOperator, System, C64};
use crate::sparse::DENSE_CUTOFF;

/// Normwise backward error `‖r‖₁ / (‖K‖₁ ‖x‖₁ + ‖b‖₁)` every accepted
/// solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-10;

fn norm1(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// Condition estimates above this declare the pencil singular.
pub fn singular_threshold() -> f64 {
    1.0 / (100.0 * f64::EPSILON)
}

/// A factored `K(s,p)`; serves both `K` and `Kᵀ` solves.
#[derive(Debug)]
pub struct Factorization {
    lu: Lu<C64>,
    coeffs: Vec<C64>,
    cond: f64,
}

impl Factorization {
    pub fn cond(&self) -> f64 {
        self.cond
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }
}

fn use_banded(op: &StructuredOperator) -> Option<(usize, usize)> {
    let n = op.n();
    let (kl, ku) = op.bandwidth();
    if n >= DENSE_CUTOFF && (2 * kl + ku + 1) * 8 <= n {
        Some((kl, ku))
    } else {
        None
    }
}

/// Factors `K(s,p)` and rejects it when the condition estimate
/// `‖K⁻¹‖₁ · Σ|κ_i| ‖A^(i)‖₁` exceeds `1/(100 eps)`.
pub fn factor_pencil(op: &StructuredOperator, s: C64, p: &[f64]) -> Result<Factorization> {
    let coeffs = op.coeffs(s, p)?;
    let singular = |cond: f64| MorError::SingularPencil { s, p: p.to_vec(), cond };
    let lu = match use_banded(op) {
        Some((kl, ku)) => {
            let entries = op
                .terms()
                .iter()
                .zip(&coeffs)
                .filter(|(_, c)| **c != C64::new(0.0, 0.0))
                .flat_map(|((_, a), &c)| a.triplets().into_iter().map(move |(i, j, v)| (i, j, c * v)));
            BandedLu::factor(op.n(), kl, ku, entries).map(Lu::Banded)
        }
        None => DenseLu::factor(&op.assemble(&coeffs)).map(Lu::Dense),
    }
    .map_err(|e| match e {
        MorError::SingularPencil { .. } => singular(f64::INFINITY),
        other => other,
    })?;
    let cond = lu.inverse_norm1_estimate() * op.norm1_bound(&coeffs);
    if !cond.is_finite() || cond > singular_threshold() {
        return Err(singular(cond));
    }
    Ok(Factorization { lu, coeffs, cond })
}

type CacheKey = (u64, u64, Vec<u64>);

fn cache_key(s: C64, p: &[f64]) -> CacheKey {
    (s.re.to_bits(), s.im.to_bits(), p.iter().map(|v| v.to_bits()).collect())
}

#[derive(Default)]
struct CacheInner {
    map: HashMap<CacheKey, Arc<Factorization>>,
    order: VecDeque<CacheKey>,
}

/// Bounded map from `(s, p)` to factorizations with FIFO eviction. Safe to
/// share between threads; a miss factors outside the lock.
pub struct SolveCache {
    inner: Mutex<CacheInner>,
    capacity: usize,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl SolveCache {
    pub fn new(capacity: usize) -> Self {
        SolveCache { inner: Mutex::new(CacheInner::default()), capacity: capacity.max(1), hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_factor(&self, op: &StructuredOperator, s: C64, p: &[f64]) -> Result<Arc<Factorization>> {
        let key = cache_key(s, p);
        if let Some(f) = self.inner.lock().unwrap().map.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(f.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let f = Arc::new(factor_pencil(op, s, p)?);
        let mut inner = self.inner.lock().unwrap();
        if !inner.map.contains_key(&key) {
            while inner.map.len() >= self.capacity {
                match inner.order.pop_front() {
                    Some(old) => {
                        inner.map.remove(&old);
                    }
                    None => break,
                }
            }
            inner.order.push_back(key.clone());
            inner.map.insert(key, f.clone());
        }
        Ok(f)
    }
}

/// Transfer-function evaluator over one system, optionally cached.
#[derive(Clone, Copy)]
pub struct Transfer<'a> {
    pub sys: &'a System,
    pub cache: Option<&'a SolveCache>,
}

/// Derivative direction of a family evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Value,
    /// 1-based frequency argument.
    S(usize),
    P(usize),
}

impl Dir {
    fn var(self) -> Option<Var> {
        match self {
            Dir::Value => None,
            Dir::S(_) => Some(Var::S),
            Dir::P(j) => Some(Var::P(j)),
        }
    }

    /// Whether the slot evaluated at argument `slot` depends on the direction.
    fn touches(self, slot: usize) -> bool {
        match self {
            Dir::Value => false,
            Dir::S(j) => j == slot,
            Dir::P(_) => true,
        }
    }
}

impl<'a> Transfer<'a> {
    pub fn new(sys: &'a System) -> Self {
        Transfer { sys, cache: None }
    }

    pub fn with_cache(sys: &'a System, cache: &'a SolveCache) -> Self {
        Transfer { sys, cache: Some(cache) }
    }

    pub fn factor(&self, s: C64, p: &[f64]) -> Result<Arc<Factorization>> {
        match self.cache {
            Some(c) => c.get_or_factor(&self.sys.operator, s, p),
            None => factor_pencil(&self.sys.operator, s, p).map(Arc::new),
        }
    }

    /// `K(s,p) X = RHS` (or `K(s,p)ᵀ X = RHS`), residual-checked with one
    /// step of iterative refinement when needed.
    pub fn solve(&self, s: C64, p: &[f64], rhs: &DMatrix<C64>, adjoint: bool) -> Result<DMatrix<C64>> {
        let op = &self.sys.operator;
        if rhs.nrows() != op.n() {
            return Err(MorError::Dimension(format!("right-hand side has {} rows, n = {}", rhs.nrows(), op.n())));
        }
        let f = self.factor(s, p)?;
        let knorm = op.norm1_bound(&f.coeffs);
        let mut out = DMatrix::from_element(rhs.nrows(), rhs.ncols(), C64::new(0.0, 0.0));
        for c in 0..rhs.ncols() {
            let b = rhs.column(c).into_owned();
            let bnorm = norm1(&b);
            if bnorm == 0.0 {
                continue;
            }
            let apply = |x: &DVector<C64>| if adjoint { op.apply_tr(&f.coeffs, x) } else { op.apply(&f.coeffs, x) };
            let solve = |r: &DVector<C64>| if adjoint { f.lu.solve_tr_vec(r) } else { f.lu.solve_vec(r) };
            let backward = |x: &DVector<C64>, r: &DVector<C64>| norm1(r) / (knorm * norm1(x) + bnorm);
            let mut x = solve(&b);
            let mut r = apply(&x) - &b;
            if backward(&x, &r) > RESIDUAL_TOL {
                x -= solve(&r);
                r = apply(&x) - &b;
            }
            let res = backward(&x, &r);
            if !(res <= RESIDUAL_TOL) {
                return Err(MorError::Residual { s, p: p.to_vec(), residual: res });
            }
            out.set_column(c, &x);
        }
        Ok(out)
    }

    pub fn solve_vec(&self, s: C64, p: &[f64], rhs: &DVector<C64>, adjoint: bool) -> Result<DVector<C64>> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        Ok(self.solve(s, p, &m, adjoint)?.column(0).into_owned())
    }

    fn check(&self, family: Family, s_list: &[C64], p: &[f64]) -> Result<()> {
        self.sys.check_params(p)?;
        if s_list.len() != family.arity() {
            return Err(MorError::Dimension(format!(
                "{family} takes {} frequency arguments, got {}",
                family.arity(),
                s_list.len()
            )));
        }
        Ok(())
    }

    /// `X = K⁻¹(s)𝔅(s)` and, for a direction touching it, its derivative.
    fn input_slot(&self, s: C64, p: &[f64], dir: Dir, touched: bool) -> Result<(DMatrix<C64>, Option<DMatrix<C64>>)> {
        let b = self.sys.input.eval(p, Some(s))?;
        let x = self.solve(s, p, &b, false)?;
        if !touched {
            return Ok((x, None));
        }
        let var = dir.var().expect("derivative direction");
        let db = self.sys.input.deriv(var, p, s)?;
        let dk = self.sys.operator.dcoeffs(var, s, p)?;
        let mut rhs = db;
        for c in 0..x.ncols() {
            let kx = self.sys.operator.apply(&dk, &x.column(c).into_owned());
            let mut col = rhs.column_mut(c);
            col -= kx;
        }
        let dx = self.solve(s, p, &rhs, false)?;
        Ok((x, Some(dx)))
    }

    /// `Lᵀ = K⁻ᵀ(s)𝔠(s)ᵀ` (n × p_out) and its derivative.
    fn output_slot(&self, s: C64, p: &[f64], dir: Dir, touched: bool) -> Result<(DMatrix<C64>, Option<DMatrix<C64>>)> {
        let c = self.sys.output.eval(p, Some(s))?;
        let lt = self.solve(s, p, &c.transpose(), true)?;
        if !touched {
            return Ok((lt, None));
        }
        let var = dir.var().expect("derivative direction");
        let dc = self.sys.output.deriv(var, p, s)?;
        let dk = self.sys.operator.dcoeffs(var, s, p)?;
        let mut rhs = dc.transpose();
        for col in 0..lt.ncols() {
            let kl = self.sys.operator.apply_tr(&dk, &lt.column(col).into_owned());
            let mut dst = rhs.column_mut(col);
            dst -= kl;
        }
        let dlt = self.solve(s, p, &rhs, true)?;
        Ok((lt, Some(dlt)))
    }

    fn family_eval(&self, family: Family, s_list: &[C64], p: &[f64], dir: Dir) -> Result<DMatrix<C64>> {
        self.check(family, s_list, p)?;
        let m = self.sys.m();
        let p_out = self.sys.p_out();
        if family == Family::L {
            let s = s_list[0];
            let touched = dir != Dir::Value;
            let (x, dx) = self.input_slot(s, p, dir, touched)?;
            let cm = self.sys.output.eval(p, Some(s))?;
            return Ok(match dx {
                None => &cm * &x,
                Some(dx) => {
                    let dc = self.sys.output.deriv(dir.var().unwrap(), p, s)?;
                    dc * &x + cm * dx
                }
            });
        }

        let (deg, tensor, lead) = match family {
            Family::H(xi) => (xi, self.sys.poly_term(xi).map(|h| h.tensor()), 1usize),
            Family::N(eta) => (eta, self.sys.bilin_term(eta).map(|b| b.tensor()), m),
            Family::L => unreachable!(),
        };
        let ncols = lead * m.pow(deg as u32);
        let Some(tensor) = tensor else {
            return Ok(DMatrix::from_element(p_out, ncols, C64::new(0.0, 0.0)));
        };

        // Slot k (1-based) uses s_k; Kronecker factor order is X_deg, …, X_1.
        let mut xs = Vec::with_capacity(deg);
        let mut dxs = Vec::with_capacity(deg);
        for k in 1..=deg {
            let (x, dx) = self.input_slot(s_list[k - 1], p, dir, dir.touches(k))?;
            xs.push(x);
            dxs.push(dx);
        }
        let (lt, dlt) = self.output_slot(s_list[deg], p, dir, dir.touches(deg + 1))?;
        let l = lt.transpose();
        let dl = dlt.map(|d| d.transpose());
        let dp = match dir {
            Dir::P(j) => Some(j),
            _ => None,
        };

        let units: Vec<DVector<C64>> = (0..lead)
            .map(|k| DVector::from_fn(lead, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
            .collect();
        let mut out = DMatrix::from_element(p_out, ncols, C64::new(0.0, 0.0));
        let mut digits = vec![0usize; deg];
        for col in 0..ncols {
            // Column digits: lead index (slowest), then j_deg, …, j_1.
            let mut rest = col;
            for k in 0..deg {
                digits[k] = rest % m;
                rest /= m;
            }
            let lead_idx = rest;
            let cols: Vec<DVector<C64>> = (0..deg).map(|k| xs[k].column(digits[k]).into_owned()).collect();
            let build = |replace: Option<(usize, DVector<C64>)>| -> Vec<DVector<C64>> {
                let mut f = Vec::with_capacity(deg + 1);
                if family != Family::H(deg) {
                    f.push(units[lead_idx].clone());
                }
                for k in (0..deg).rev() {
                    match &replace {
                        Some((r, v)) if *r == k => f.push(v.clone()),
                        _ => f.push(cols[k].clone()),
                    }
                }
                f
            };
            let base = build(None);
            let base_refs: Vec<&DVector<C64>> = base.iter().collect();
            let t = tensor.apply(p, &base_refs)?;
            let mut val = match (&dl, dir) {
                (_, Dir::Value) => &l * &t,
                (Some(dl), _) => dl * &t,
                (None, _) => DVector::from_element(p_out, C64::new(0.0, 0.0)),
            };
            if let Some(j) = dp {
                val += &l * tensor.apply_dp(p, j, &base_refs)?;
            }
            for k in 0..deg {
                if let Some(dx) = &dxs[k] {
                    let f = build(Some((k, dx.column(digits[k]).into_owned())));
                    let refs: Vec<&DVector<C64>> = f.iter().collect();
                    val += &l * tensor.apply(p, &refs)?;
                }
            }
            out.set_column(col, &val);
        }
        Ok(out)
    }

    /// Value of a family at the given frequency arguments.
    pub fn eval(&self, family: Family, s_list: &[C64], p: &[f64]) -> Result<DMatrix<C64>> {
        self.family_eval(family, s_list, p, Dir::Value)
    }

    /// `∂F/∂s_j` (1-based `j`).
    pub fn dtf(&self, family: Family, j: usize, s_list: &[C64], p: &[f64]) -> Result<DMatrix<C64>> {
        if j == 0 || j > family.arity() {
            return Err(MorError::OutOfRange(format!("argument {j} of {family}")));
        }
        self.family_eval(family, s_list, p, Dir::S(j))
    }

    /// `[∂F/∂p_0, …, ∂F/∂p_{q-1}]`.
    pub fn grad_p(&self, family: Family, s_list: &[C64], p: &[f64]) -> Result<Vec<DMatrix<C64>>> {
        (0..self.sys.q).map(|j| self.family_eval(family, s_list, p, Dir::P(j))).collect()
    }
}

pub fn shifted_solve(sys: &System, s: C64, p: &[f64], rhs: &DMatrix<C64>, adjoint: bool) -> Result<DMatrix<C64>> {
    Transfer::new(sys).solve(s, p, rhs, adjoint)
}

pub fn tf_linear(sys: &System, s: C64, p: &[f64]) -> Result<DMatrix<C64>> {
    Transfer::new(sys).eval(Family::L, &[s], p)
}

pub fn tf_poly(sys: &System, xi: usize, s_list: &[C64], p: &[f64]) -> Result<DMatrix<C64>> {
    Transfer::new(sys).eval(Family::H(xi), s_list, p)
}

pub fn tf_bilin(sys: &System, eta: usize, s_list: &[C64], p: &[f64]) -> Result<DMatrix<C64>> {
    Transfer::new(sys).eval(Family::N(eta), s_list, p)
}

pub fn dtf(sys: &System, family: Family, j: usize, s_list: &[C64], p: &[f64]) -> Result<DMatrix<C64>> {
    Transfer::new(sys).dtf(family, j, s_list, p)
}

pub fn grad_p_tf(sys: &System, family: Family, s_list: &[C64], p: &[f64]) -> Result<Vec<DMatrix<C64>>> {
    Transfer::new(sys).grad_p(family, s_list, p)
}
