//! Data model for polynomial structured (parametric) systems
//!
//! ```text
//! K(s,p) x = Σ_ξ H_ξ(p) x^{⊗ξ} + Σ_η N_η(p) (u ⊗ x^{⊗η}) + B(p) u,   y = C(p) x
//! ```
//!
//! with `K(s,p) = Σ κ_i(s,p) A^(i)` in the frequency domain.

use std::fmt;
use std::str::FromStr;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::expr::{ScalarExpr, Var};
use crate::sparse::RealMatrix;
use crate::tensor::KronMatrix;

pub type C64 = Complex64;

/// Transfer-function family: linear, bilinear of order η, polynomial of order ξ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    L,
    N(usize),
    H(usize),
}

impl Family {
    /// Number of frequency arguments.
    pub fn arity(&self) -> usize {
        match self {
            Family::L => 1,
            Family::N(eta) => eta + 1,
            Family::H(xi) => xi + 1,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::L => write!(f, "L"),
            Family::N(e) => write!(f, "N{e}"),
            Family::H(x) => write!(f, "H{x}"),
        }
    }
}

impl FromStr for Family {
    type Err = MorError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || MorError::InvalidPlan(format!("unknown family `{s}`"));
        match s.chars().next() {
            Some('L') if s.len() == 1 => Ok(Family::L),
            Some('N') => s[1..].parse().map(Family::N).map_err(|_| bad()),
            Some('H') => s[1..].parse().map(Family::H).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Evaluates a coefficient that must be real (no `s`, no complex constants).
pub fn real_coeff(e: &ScalarExpr, p: &[f64]) -> Result<f64> {
    let v = e.eval(C64::new(0.0, 0.0), p)?;
    if v.im != 0.0 {
        return Err(MorError::Unsupported(format!("coefficient `{e}` is not real")));
    }
    Ok(v.re)
}

fn max_arity<'a>(exprs: impl Iterator<Item = &'a ScalarExpr>) -> usize {
    exprs.map(|e| e.arity()).max().unwrap_or(0)
}

/// Affine operator `K(s,p) = Σ κ_i(s,p) A^(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredOperator {
    n: usize,
    terms: Vec<(ScalarExpr, RealMatrix)>,
}

impl StructuredOperator {
    pub fn new(terms: Vec<(ScalarExpr, RealMatrix)>) -> Result<Self> {
        let n = match terms.first() {
            Some((_, a)) => a.nrows(),
            None => return Err(MorError::Empty("operator needs at least one term".into())),
        };
        for (k, (_, a)) in terms.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(MorError::Dimension(format!("operator term {k} is {:?}, expected {n}x{n}", a.shape())));
            }
        }
        Ok(StructuredOperator { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(ScalarExpr, RealMatrix)] {
        &self.terms
    }

    pub fn arity(&self) -> usize {
        max_arity(self.terms.iter().map(|t| &t.0))
    }

    pub fn coeffs(&self, s: C64, p: &[f64]) -> Result<Vec<C64>> {
        self.terms.iter().map(|(k, _)| k.eval(s, p)).collect()
    }

    /// Coefficients of `∂K/∂var`.
    pub fn dcoeffs(&self, var: Var, s: C64, p: &[f64]) -> Result<Vec<C64>> {
        self.terms
            .iter()
            .map(|(k, _)| if k.depends_on(var) { k.diff(var).eval(s, p) } else { Ok(C64::new(0.0, 0.0)) })
            .collect()
    }

    /// Dense `Σ c_i A^(i)`.
    pub fn assemble(&self, coeffs: &[C64]) -> DMatrix<C64> {
        let mut out = DMatrix::from_element(self.n, self.n, C64::new(0.0, 0.0));
        for ((_, a), &c) in self.terms.iter().zip(coeffs) {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (i, j, v) in a.triplets() {
                out[(i, j)] += c * v;
            }
        }
        out
    }

    pub fn eval(&self, s: C64, p: &[f64]) -> Result<DMatrix<C64>> {
        self.check_arity(p)?;
        Ok(self.assemble(&self.coeffs(s, p)?))
    }

    /// `(Σ c_i A^(i)) x` without assembling.
    pub fn apply(&self, coeffs: &[C64], x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::from_element(self.n, C64::new(0.0, 0.0));
        for ((_, a), &c) in self.terms.iter().zip(coeffs) {
            if c != C64::new(0.0, 0.0) {
                out += a.mul_vec(x) * c;
            }
        }
        out
    }

    /// `(Σ c_i A^(i))ᵀ x` without assembling.
    pub fn apply_tr(&self, coeffs: &[C64], x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::from_element(self.n, C64::new(0.0, 0.0));
        for ((_, a), &c) in self.terms.iter().zip(coeffs) {
            if c != C64::new(0.0, 0.0) {
                out += a.tr_mul_vec(x) * c;
            }
        }
        out
    }

    /// Σ |c_i| ‖A^(i)‖₁, the scale used for condition estimates.
    pub fn norm1_bound(&self, coeffs: &[C64]) -> f64 {
        self.terms.iter().zip(coeffs).map(|((_, a), c)| c.norm() * a.norm1()).sum()
    }

    /// Bandwidth of the union pattern of all terms.
    pub fn bandwidth(&self) -> (usize, usize) {
        self.terms.iter().map(|(_, a)| a.bandwidth()).fold((0, 0), |acc, b| (acc.0.max(b.0), acc.1.max(b.1)))
    }

    fn check_arity(&self, p: &[f64]) -> Result<()> {
        let need = self.arity();
        if p.len() < need {
            return Err(MorError::ParamArity { expected: need, got: p.len() });
        }
        Ok(())
    }
}

/// Affine matrix family `Σ coeff_k(p[, s]) M_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamMatrix {
    nrows: usize,
    ncols: usize,
    terms: Vec<(ScalarExpr, RealMatrix)>,
    s_dependent: bool,
}

impl ParamMatrix {
    pub fn new(terms: Vec<(ScalarExpr, RealMatrix)>) -> Result<Self> {
        let (nrows, ncols) = match terms.first() {
            Some((_, a)) => a.shape(),
            None => return Err(MorError::Empty("affine matrix needs at least one term".into())),
        };
        if terms.iter().any(|(_, a)| a.shape() != (nrows, ncols)) {
            return Err(MorError::Dimension("affine matrix terms differ in shape".into()));
        }
        let s_dependent = terms.iter().any(|(e, _)| e.depends_on_s());
        Ok(ParamMatrix { nrows, ncols, terms, s_dependent })
    }

    pub fn constant(m: RealMatrix) -> Self {
        ParamMatrix::new(vec![(ScalarExpr::one(), m)]).expect("single term")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn terms(&self) -> &[(ScalarExpr, RealMatrix)] {
        &self.terms
    }

    pub fn s_dependent(&self) -> bool {
        self.s_dependent
    }

    pub fn arity(&self) -> usize {
        max_arity(self.terms.iter().map(|t| &t.0))
    }

    fn combine(&self, coeffs: &[C64]) -> DMatrix<C64> {
        let mut out = DMatrix::from_element(self.nrows, self.ncols, C64::new(0.0, 0.0));
        for ((_, a), &c) in self.terms.iter().zip(coeffs) {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (i, j, v) in a.triplets() {
                out[(i, j)] += c * v;
            }
        }
        out
    }

    /// Value at `p`; `s` is required exactly when the family depends on it.
    pub fn eval(&self, p: &[f64], s: Option<C64>) -> Result<DMatrix<C64>> {
        let s = match (self.s_dependent, s) {
            (true, None) => return Err(MorError::MissingFrequency),
            (_, Some(s)) => s,
            (false, None) => C64::new(0.0, 0.0),
        };
        let coeffs: Vec<C64> = self.terms.iter().map(|(e, _)| e.eval(s, p)).collect::<Result<_>>()?;
        Ok(self.combine(&coeffs))
    }

    /// Real value for maps without frequency dependence.
    pub fn eval_real(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if self.s_dependent {
            return Err(MorError::Unsupported("frequency-dependent map has no real value".into()));
        }
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (e, a) in &self.terms {
            let c = real_coeff(e, p)?;
            if c != 0.0 {
                out += a.to_dense() * c;
            }
        }
        Ok(out)
    }

    /// `∂M/∂var` at `(s, p)`.
    pub fn deriv(&self, var: Var, p: &[f64], s: C64) -> Result<DMatrix<C64>> {
        let coeffs: Vec<C64> = self
            .terms
            .iter()
            .map(|(e, _)| if e.depends_on(var) { e.diff(var).eval(s, p) } else { Ok(C64::new(0.0, 0.0)) })
            .collect::<Result<_>>()?;
        Ok(self.combine(&coeffs))
    }

    /// Applies `f` to every constant matrix, keeping the coefficients.
    pub fn map_matrices(&self, f: impl Fn(&RealMatrix) -> RealMatrix) -> Result<ParamMatrix> {
        ParamMatrix::new(self.terms.iter().map(|(e, a)| (e.clone(), f(a))).collect())
    }
}

/// Affine sum of matricized tensors sharing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineTensor {
    parts: Vec<(ScalarExpr, KronMatrix)>,
}

impl AffineTensor {
    pub fn new(parts: Vec<(ScalarExpr, KronMatrix)>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| MorError::Empty("tensor term without parts".into()))?;
        let (rows, dims) = (first.1.rows(), first.1.dims().to_vec());
        for (e, k) in &parts {
            if k.rows() != rows || k.dims() != dims.as_slice() {
                return Err(MorError::Dimension("tensor parts differ in shape".into()));
            }
            if e.depends_on_s() {
                return Err(MorError::Unsupported(format!("tensor coefficient `{e}` depends on s")));
            }
        }
        Ok(AffineTensor { parts })
    }

    pub fn parts(&self) -> &[(ScalarExpr, KronMatrix)] {
        &self.parts
    }

    pub fn rows(&self) -> usize {
        self.parts[0].1.rows()
    }

    pub fn dims(&self) -> &[usize] {
        self.parts[0].1.dims()
    }

    pub fn arity(&self) -> usize {
        max_arity(self.parts.iter().map(|t| &t.0))
    }

    fn map_parts(&self, f: impl Fn(&KronMatrix) -> Result<KronMatrix>) -> Result<AffineTensor> {
        let parts = self.parts.iter().map(|(e, k)| Ok((e.clone(), f(k)?))).collect::<Result<Vec<_>>>()?;
        AffineTensor::new(parts)
    }

    fn apply_with<T: ComplexField<RealField = f64>>(
        &self,
        coeff: impl Fn(&ScalarExpr) -> Result<f64>,
        factors: &[&DVector<T>],
    ) -> Result<DVector<T>> {
        let mut out = DVector::from_element(self.rows(), T::zero());
        for (e, k) in &self.parts {
            let c = coeff(e)?;
            if c != 0.0 {
                out += k.apply(factors)?.scale(c);
            }
        }
        Ok(out)
    }

    pub fn apply<T: ComplexField<RealField = f64>>(&self, p: &[f64], factors: &[&DVector<T>]) -> Result<DVector<T>> {
        self.apply_with(|e| real_coeff(e, p), factors)
    }

    /// Application of `∂/∂p_j` of the tensor.
    pub fn apply_dp<T: ComplexField<RealField = f64>>(
        &self,
        p: &[f64],
        j: usize,
        factors: &[&DVector<T>],
    ) -> Result<DVector<T>> {
        self.apply_with(
            |e| if e.depends_on(Var::P(j)) { real_coeff(&e.diff(Var::P(j)), p) } else { Ok(0.0) },
            factors,
        )
    }

    /// Folds the affine sum at a fixed parameter.
    pub fn at(&self, p: &[f64]) -> Result<KronMatrix> {
        let rows = self.rows();
        let mut trips = Vec::new();
        for (e, k) in &self.parts {
            let c = real_coeff(e, p)?;
            trips.extend(k.matrix().iter().map(|(i, j, v)| (i, j, c * v)));
        }
        KronMatrix::from_triplets(rows, self.dims().to_vec(), trips)
    }
}

/// Polynomial term `H_ξ(p) x^{⊗ξ}` stored as a mode-1 matricization `n × n^ξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTerm {
    order: usize,
    tensor: AffineTensor,
    symmetric: bool,
}

impl PolyTerm {
    /// Single constant part; the symmetric flag is set when the entries pass
    /// the permutation test.
    pub fn new(order: usize, mat: KronMatrix) -> Result<Self> {
        Self::from_parts(order, vec![(ScalarExpr::one(), mat)])
    }

    pub fn from_parts(order: usize, parts: Vec<(ScalarExpr, KronMatrix)>) -> Result<Self> {
        let tensor = AffineTensor::new(parts)?;
        if order < 2 {
            return Err(MorError::Dimension(format!("polynomial order {order} < 2")));
        }
        let n = tensor.rows();
        if tensor.dims() != vec![n; order].as_slice() {
            return Err(MorError::Dimension(format!("H_{order} factors {:?} do not match n = {n}", tensor.dims())));
        }
        let symmetric = tensor.parts().iter().all(|(_, k)| k.is_symmetric(0..order, 1e-14));
        Ok(PolyTerm { order, tensor, symmetric })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.tensor.rows()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn tensor(&self) -> &AffineTensor {
        &self.tensor
    }

    pub fn parts(&self) -> &[(ScalarExpr, KronMatrix)] {
        self.tensor.parts()
    }

    /// Lemma-style symmetrization of every affine part.
    pub fn symmetrize(&self) -> Result<PolyTerm> {
        let tensor = self.tensor.map_parts(|k| k.symmetrize(0..self.order))?;
        Ok(PolyTerm { order: self.order, tensor, symmetric: true })
    }

    /// Mode-2 matricization; all modes m ≥ 2 coincide for symmetric terms.
    pub fn mode2(&self) -> Result<AffineTensor> {
        if !self.symmetric {
            return Err(MorError::NotSymmetric(format!("H_{}", self.order)));
        }
        self.tensor.map_parts(|k| k.mode(2))
    }

    /// `Wᵀ H V^{⊗ξ}` per part.
    pub fn reduce(&self, w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<PolyTerm> {
        let maps: Vec<Option<&DMatrix<f64>>> = vec![Some(v); self.order];
        let tensor = self.tensor.map_parts(|k| k.reduce(w, &maps))?;
        let symmetric = self.symmetric && w.nrows() > 0;
        Ok(PolyTerm { order: self.order, tensor, symmetric })
    }
}

/// Bilinear term `N_η(p) (u ⊗ x^{⊗η})` stored as `n × (m·n^η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinTerm {
    order: usize,
    m: usize,
    tensor: AffineTensor,
    symmetric: bool,
}

impl BilinTerm {
    pub fn new(order: usize, m: usize, mat: KronMatrix) -> Result<Self> {
        Self::from_parts(order, m, vec![(ScalarExpr::one(), mat)])
    }

    pub fn from_parts(order: usize, m: usize, parts: Vec<(ScalarExpr, KronMatrix)>) -> Result<Self> {
        let tensor = AffineTensor::new(parts)?;
        if order < 1 {
            return Err(MorError::Dimension("bilinear order must be at least 1".into()));
        }
        let n = tensor.rows();
        let mut want = vec![m];
        want.extend(std::iter::repeat_n(n, order));
        if tensor.dims() != want.as_slice() {
            return Err(MorError::Dimension(format!(
                "N_{order} factors {:?} do not follow the u ⊗ x^⊗{order} layout {:?}",
                tensor.dims(),
                want
            )));
        }
        let symmetric = tensor.parts().iter().all(|(_, k)| k.is_symmetric(1..order + 1, 1e-14));
        Ok(BilinTerm { order, m, tensor, symmetric })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.tensor.rows()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn tensor(&self) -> &AffineTensor {
        &self.tensor
    }

    pub fn parts(&self) -> &[(ScalarExpr, KronMatrix)] {
        self.tensor.parts()
    }

    /// Symmetrizes the state modes within each input block.
    pub fn symmetrize(&self) -> Result<BilinTerm> {
        let tensor = self.tensor.map_parts(|k| k.symmetrize(1..self.order + 1))?;
        Ok(BilinTerm { order: self.order, m: self.m, tensor, symmetric: true })
    }

    /// Mode-2 matricization with factors `[m, n, …, n, n_out]`: the input
    /// block first and the output direction last.
    pub fn mode2(&self) -> Result<AffineTensor> {
        if !self.symmetric {
            return Err(MorError::NotSymmetric(format!("N_{}", self.order)));
        }
        self.tensor.map_parts(|k| k.mode(2))
    }

    /// `Wᵀ N (I_m ⊗ V^{⊗η})` per part.
    pub fn reduce(&self, w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<BilinTerm> {
        let mut maps: Vec<Option<&DMatrix<f64>>> = vec![None];
        maps.extend(std::iter::repeat_n(Some(v), self.order));
        let tensor = self.tensor.map_parts(|k| k.reduce(w, &maps))?;
        Ok(BilinTerm { order: self.order, m: self.m, tensor, symmetric: self.symmetric })
    }
}

/// Polynomial structured system.
#[derive(Clone, Debug, PartialEq)]
pub struct System {
    pub operator: StructuredOperator,
    pub input: ParamMatrix,
    pub output: ParamMatrix,
    pub poly: Vec<PolyTerm>,
    pub bilin: Vec<BilinTerm>,
    pub degree: usize,
    pub q: usize,
}

impl System {
    /// Validates dimensions; `degree` and `q` are inferred when smaller
    /// than what the terms require.
    pub fn new(
        operator: StructuredOperator,
        input: ParamMatrix,
        output: ParamMatrix,
        poly: Vec<PolyTerm>,
        bilin: Vec<BilinTerm>,
    ) -> Result<Self> {
        let n = operator.n();
        if input.nrows() != n {
            return Err(MorError::Dimension(format!("B has {} rows, n = {n}", input.nrows())));
        }
        if output.ncols() != n {
            return Err(MorError::Dimension(format!("C has {} columns, n = {n}", output.ncols())));
        }
        let m = input.ncols();
        for h in &poly {
            if h.n() != n {
                return Err(MorError::Dimension(format!("H_{} has {} rows, n = {n}", h.order(), h.n())));
            }
        }
        for b in &bilin {
            if b.n() != n || b.m() != m {
                return Err(MorError::Dimension(format!("N_{} is sized for n = {}, m = {}", b.order(), b.n(), b.m())));
            }
        }
        let mut orders: Vec<usize> = poly.iter().map(|h| h.order()).collect();
        orders.sort_unstable();
        if orders.windows(2).any(|w| w[0] == w[1]) {
            return Err(MorError::Dimension("duplicate polynomial order".into()));
        }
        let mut orders: Vec<usize> = bilin.iter().map(|b| b.order()).collect();
        orders.sort_unstable();
        if orders.windows(2).any(|w| w[0] == w[1]) {
            return Err(MorError::Dimension("duplicate bilinear order".into()));
        }
        let degree = poly
            .iter()
            .map(|h| h.order())
            .chain(bilin.iter().map(|b| b.order() + 1))
            .max()
            .unwrap_or(1)
            .max(1);
        let q = operator
            .arity()
            .max(input.arity())
            .max(output.arity())
            .max(poly.iter().map(|h| h.tensor().arity()).max().unwrap_or(0))
            .max(bilin.iter().map(|b| b.tensor().arity()).max().unwrap_or(0));
        let mut poly = poly;
        poly.sort_by_key(|h| h.order());
        let mut bilin = bilin;
        bilin.sort_by_key(|b| b.order());
        Ok(System { operator, input, output, poly, bilin, degree, q })
    }

    pub fn n(&self) -> usize {
        self.operator.n()
    }

    pub fn m(&self) -> usize {
        self.input.ncols()
    }

    pub fn p_out(&self) -> usize {
        self.output.nrows()
    }

    pub fn poly_term(&self, xi: usize) -> Option<&PolyTerm> {
        self.poly.iter().find(|h| h.order() == xi)
    }

    pub fn bilin_term(&self, eta: usize) -> Option<&BilinTerm> {
        self.bilin.iter().find(|b| b.order() == eta)
    }

    /// Families present in the model, in canonical order (L, N by η, H by ξ).
    pub fn families(&self) -> Vec<Family> {
        let mut out = vec![Family::L];
        out.extend(self.bilin.iter().map(|b| Family::N(b.order())));
        out.extend(self.poly.iter().map(|h| Family::H(h.order())));
        out
    }

    pub fn check_params(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.q {
            return Err(MorError::ParamArity { expected: self.q, got: p.len() });
        }
        Ok(())
    }

    /// Symmetrizes every tensor term that is not flagged symmetric.
    pub fn symmetrized(&self) -> Result<System> {
        let mut out = self.clone();
        for h in out.poly.iter_mut() {
            if !h.symmetric() {
                *h = h.symmetrize()?;
            }
        }
        for b in out.bilin.iter_mut() {
            if !b.symmetric() {
                *b = b.symmetrize()?;
            }
        }
        Ok(out)
    }
}

/// Provenance of a reduced model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub plan_hash: String,
    pub order: usize,
    pub sigma_horizontal: Vec<f64>,
    pub sigma_vertical: Vec<f64>,
    pub rank_horizontal: usize,
    pub rank_vertical: usize,
}

/// Reduced model with lifting bases. The reduced `System` keeps every
/// coefficient expression of the full model.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSystem {
    pub system: System,
    pub v_e: DMatrix<f64>,
    pub w_e: DMatrix<f64>,
    pub provenance: Provenance,
}

impl ReducedSystem {
    pub fn order(&self) -> usize {
        self.system.n()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn dense(r: usize, cols: usize, v: &[f64]) -> RealMatrix {
        RealMatrix::Dense(DMatrix::from_row_slice(r, cols, v))
    }

    #[test]
    fn operator_examples() {
        let k = StructuredOperator::new(vec![
            (ScalarExpr::s(), RealMatrix::identity(2)),
            (ScalarExpr::constant(-1.0), dense(2, 2, &[0.0, 1.0, 0.0, 0.0])),
        ])
        .unwrap();
        let v = k.eval(c(1.0, 0.0), &[]).unwrap();
        assert_eq!(v, DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]));

        let one = RealMatrix::identity(1);
        let so = StructuredOperator::new(vec![
            (ScalarExpr::s().pow(2.0), one.clone()),
            (ScalarExpr::s(), one.clone()),
            (ScalarExpr::one(), one.clone()),
        ])
        .unwrap();
        assert_eq!(so.eval(c(0.0, 1.0), &[]).unwrap()[(0, 0)], c(0.0, 1.0));

        let delay = StructuredOperator::new(vec![
            (ScalarExpr::s(), one.clone()),
            (ScalarExpr::constant(-1.0), RealMatrix::zeros(1, 1)),
            (ScalarExpr::param(0), one.clone()),
            ("-p0 * exp(-1 * s)".parse().unwrap(), one.clone()),
        ])
        .unwrap();
        assert_eq!(delay.eval(c(0.0, 0.0), &[1.0]).unwrap()[(0, 0)], c(0.0, 0.0));
        assert!(matches!(delay.eval(c(0.0, 0.0), &[]), Err(MorError::ParamArity { .. })));
    }

    #[test]
    fn operator_is_linear_in_each_term() {
        let a = dense(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let base = StructuredOperator::new(vec![(ScalarExpr::s(), RealMatrix::identity(2)), ("p0 * s^2".parse().unwrap(), a.clone())]).unwrap();
        let doubled = StructuredOperator::new(vec![(ScalarExpr::s(), RealMatrix::identity(2)), ("p0 * s^2".parse().unwrap(), a.scale(2.0))]).unwrap();
        let s = c(0.3, 1.7);
        let p = [0.9];
        let first = StructuredOperator::new(vec![(ScalarExpr::s(), RealMatrix::identity(2))]).unwrap().eval(s, &p).unwrap();
        let lhs = doubled.eval(s, &p).unwrap() - &first;
        let rhs = (base.eval(s, &p).unwrap() - &first) * c(2.0, 0.0);
        assert!((lhs - &rhs).norm() <= 1e-14 * rhs.norm());
    }

    #[test]
    fn param_matrix_examples() {
        let b = ParamMatrix::constant(dense(2, 1, &[1.0, 2.0]));
        assert_eq!(b.eval_real(&[5.0]).unwrap(), DMatrix::from_row_slice(2, 1, &[1.0, 2.0]));

        let bs = ParamMatrix::new(vec![(ScalarExpr::one(), dense(1, 1, &[1.0])), ("exp(-1 * s)".parse().unwrap(), dense(1, 1, &[1.0]))]).unwrap();
        assert!(bs.s_dependent());
        assert_eq!(bs.eval(&[], Some(c(0.0, 0.0))).unwrap()[(0, 0)], c(2.0, 0.0));
        assert!(matches!(bs.eval(&[], None), Err(MorError::MissingFrequency)));

        let cp = ParamMatrix::new(vec![(ScalarExpr::param(0), dense(1, 2, &[1.0, 0.0]))]).unwrap();
        assert_eq!(cp.eval_real(&[2.0]).unwrap(), DMatrix::from_row_slice(1, 2, &[2.0, 0.0]));
    }

    #[test]
    fn bilinear_layout_is_checked() {
        let ok = KronMatrix::new(vec![2, 3], SparseMatrix::zeros(3, 6)).unwrap();
        assert!(BilinTerm::new(1, 2, ok.clone()).is_ok());
        assert!(BilinTerm::new(1, 3, KronMatrix::new(vec![3, 2], SparseMatrix::zeros(3, 6)).unwrap()).is_err());
        assert!(PolyTerm::new(2, KronMatrix::new(vec![3, 3], SparseMatrix::zeros(3, 9)).unwrap()).unwrap().symmetric());
    }

    #[test]
    fn family_text() {
        for f in [Family::L, Family::N(2), Family::H(3)] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("X1".parse::<Family>().is_err());
    }
}
