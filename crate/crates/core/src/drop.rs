//! Dominant subspace extraction from oversampled bases and projection.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{build_vw, BasisBundle, InterpPlan};
use crate::error::{MorError, Result};
use crate::model::{Provenance, ReducedSystem, StructuredOperator, System};
use crate::sparse::RealMatrix;
use crate::svd::thin_svd;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// `Wᵀ A⁽ⁱ⁾ V` for every operator term with the SVDs of their side-by-side
/// and stacked concatenations.
#[derive(Clone, Debug)]
pub struct PencilBlocks {
    pub blocks: Vec<DMatrix<f64>>,
    pub horizontal: DMatrix<f64>,
    pub vertical: DMatrix<f64>,
    /// Left singular vectors of the horizontal concatenation.
    pub w1: DMatrix<f64>,
    pub sigma_horizontal: Vec<f64>,
    /// Right singular vectors of the vertical concatenation.
    pub v1: DMatrix<f64>,
    pub sigma_vertical: Vec<f64>,
}

pub fn pencil_blocks_of(op: &StructuredOperator, v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<PencilBlocks> {
    let n = op.n();
    if v.nrows() != n || w.nrows() != n {
        return Err(MorError::Dimension(format!("bases have {} and {} rows, n = {n}", v.nrows(), w.nrows())));
    }
    if v.ncols() == 0 || w.ncols() == 0 {
        return Err(MorError::Empty("projection bases are empty".into()));
    }
    let blocks: Vec<DMatrix<f64>> = op.terms().par_iter().map(|(_, a)| a.project(w, v)).collect();
    let (kw, kv) = (w.ncols(), v.ncols());
    let l = blocks.len();
    let mut horizontal = DMatrix::zeros(kw, l * kv);
    let mut vertical = DMatrix::zeros(l * kw, kv);
    for (i, b) in blocks.iter().enumerate() {
        horizontal.view_mut((0, i * kv), (kw, kv)).copy_from(b);
        vertical.view_mut((i * kw, 0), (kw, kv)).copy_from(b);
    }
    let hs = thin_svd(&horizontal)?;
    let vs = thin_svd(&vertical)?;
    Ok(PencilBlocks {
        blocks,
        horizontal,
        vertical,
        w1: hs.u,
        sigma_horizontal: hs.sigma,
        v1: vs.v,
        sigma_vertical: vs.sigma,
    })
}

/// Blocks of the Krylov-weighted bases.
pub fn pencil_blocks(bundle: &BasisBundle, sys: &System) -> Result<PencilBlocks> {
    pencil_blocks_of(&sys.operator, &bundle.v_weighted, &bundle.w_weighted)
}

/// Number of leading values with `σ_i ≥ tol_rel · σ_0`.
pub fn numerical_rank(sigma: &[f64], tol_rel: f64) -> Result<usize> {
    let first = *sigma.first().ok_or_else(|| MorError::Empty("no singular values".into()))?;
    if first == 0.0 {
        return Ok(0);
    }
    Ok(sigma.iter().take_while(|&&s| s >= tol_rel * first).count())
}

/// Rank estimates from both spectra and the value used for truncation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankEstimate {
    pub horizontal: usize,
    pub vertical: usize,
    pub chosen: usize,
}

pub fn estimate_rank(blocks: &PencilBlocks, tol_rel: f64) -> Result<RankEstimate> {
    let horizontal = numerical_rank(&blocks.sigma_horizontal, tol_rel)?;
    let vertical = numerical_rank(&blocks.sigma_vertical, tol_rel)?;
    if horizontal != vertical {
        log::warn!("rank estimates disagree: horizontal {horizontal}, vertical {vertical}; sampling may be insufficient");
    }
    let limit = blocks.w1.ncols().min(blocks.v1.ncols());
    let chosen = horizontal.max(vertical).min(limit);
    Ok(RankEstimate { horizontal, vertical, chosen })
}

/// `V_e = V V₁(:, :r)` and `W_e = W W₁(:, :r)` on the weighted bases.
pub fn truncate(bundle: &BasisBundle, blocks: &PencilBlocks, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    truncate_bases(&bundle.v_weighted, &bundle.w_weighted, blocks, r, bundle.galerkin)
}

pub fn truncate_bases(
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    blocks: &PencilBlocks,
    r: usize,
    galerkin: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if r == 0 {
        return Err(MorError::InvalidOrder("reduced order must be positive".into()));
    }
    let avail = blocks.w1.ncols().min(blocks.v1.ncols());
    if r > avail {
        return Err(MorError::InvalidOrder(format!("order {r} exceeds the {avail} available singular vectors")));
    }
    // orthonormalizing changes the reduced model only by a similarity
    let v_e = (v * blocks.v1.columns(0, r)).qr().q();
    let w_e = if galerkin { v_e.clone() } else { (w * blocks.w1.columns(0, r)).qr().q() };
    Ok((v_e, w_e))
}

/// Petrov-Galerkin projection keeping every coefficient expression.
pub fn project(sys: &System, v_e: &DMatrix<f64>, w_e: &DMatrix<f64>) -> Result<System> {
    let n = sys.n();
    if v_e.nrows() != n || w_e.nrows() != n {
        return Err(MorError::Dimension(format!("bases have {} and {} rows, n = {n}", v_e.nrows(), w_e.nrows())));
    }
    if v_e.ncols() != w_e.ncols() {
        return Err(MorError::Dimension(format!("V_e has {} columns, W_e has {}", v_e.ncols(), w_e.ncols())));
    }
    let operator = StructuredOperator::new(
        sys.operator.terms().iter().map(|(e, a)| (e.clone(), RealMatrix::Dense(a.project(w_e, v_e)))).collect(),
    )?;
    let input = sys.input.map_matrices(|b| RealMatrix::Dense(b.transpose().mul_mat(w_e).transpose()))?;
    let output = sys.output.map_matrices(|c| RealMatrix::Dense(c.mul_mat(v_e)))?;
    let poly = sys.poly.iter().map(|h| h.reduce(w_e, v_e)).collect::<Result<_>>()?;
    let bilin = sys.bilin.iter().map(|b| b.reduce(w_e, v_e)).collect::<Result<_>>()?;
    let mut out = System::new(operator, input, output, poly, bilin)?;
    out.q = sys.q;
    out.degree = sys.degree;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrderSpec {
    Rank(usize),
    Tol(f64),
}

impl Default for OrderSpec {
    fn default() -> Self {
        OrderSpec::Tol(DEFAULT_RANK_TOL)
    }
}

/// Both singular value spectra of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularValueReport {
    pub sigma_horizontal: Vec<f64>,
    pub sigma_vertical: Vec<f64>,
    pub rank: RankEstimate,
}

impl SingularValueReport {
    /// CSV with `index, sigma_horizontal, sigma_vertical, sigma/sigma1`,
    /// the last column taken from the horizontal spectrum.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["index", "sigma_horizontal", "sigma_vertical", "sigma/sigma1"])?;
        let len = self.sigma_horizontal.len().max(self.sigma_vertical.len());
        let s1 = self.sigma_horizontal.first().copied().unwrap_or(0.0);
        let cell = |v: Option<&f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for i in 0..len {
            let rel = self.sigma_horizontal.get(i).filter(|_| s1 > 0.0).map(|x| x / s1);
            wtr.write_record([(i + 1).to_string(), cell(self.sigma_horizontal.get(i)), cell(self.sigma_vertical.get(i)), cell(rel.as_ref())])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Bases, block SVDs, truncation and projection in one pass.
pub fn run_drop(sys: &System, plan: &InterpPlan, order: OrderSpec) -> Result<(ReducedSystem, SingularValueReport)> {
    let sym;
    let sys = if sys.poly.iter().all(|h| h.symmetric()) && sys.bilin.iter().all(|b| b.symmetric()) {
        sys
    } else {
        log::info!("symmetrizing tensor terms before building bases");
        sym = sys.symmetrized()?;
        &sym
    };
    let bundle = build_vw(sys, plan)?;
    reduce_with_bundle(sys, plan, &bundle, order)
}

pub fn reduce_with_bundle(
    sys: &System,
    plan: &InterpPlan,
    bundle: &BasisBundle,
    order: OrderSpec,
) -> Result<(ReducedSystem, SingularValueReport)> {
    let blocks = pencil_blocks(bundle, sys)?;
    let tol = match order {
        OrderSpec::Tol(t) => t,
        OrderSpec::Rank(_) => DEFAULT_RANK_TOL,
    };
    let rank = estimate_rank(&blocks, tol)?;
    let r = match order {
        OrderSpec::Rank(r) => r,
        OrderSpec::Tol(_) => rank.chosen,
    };
    if r > rank.chosen {
        log::warn!("order {r} exceeds the numerical rank {} at tolerance {tol:e}; trailing directions are noise", rank.chosen);
    }
    let (v_e, w_e) = truncate(bundle, &blocks, r)?;
    let system = project(sys, &v_e, &w_e)?;
    let report = SingularValueReport {
        sigma_horizontal: blocks.sigma_horizontal.clone(),
        sigma_vertical: blocks.sigma_vertical.clone(),
        rank,
    };
    let provenance = Provenance {
        plan_hash: plan.hash(),
        order: r,
        sigma_horizontal: blocks.sigma_horizontal,
        sigma_vertical: blocks.sigma_vertical,
        rank_horizontal: rank.horizontal,
        rank_vertical: rank.vertical,
    };
    Ok((ReducedSystem { system, v_e, w_e, provenance }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr;
    use crate::model::ParamMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&[1.0, 1e-16], 1e-12).unwrap(), 1);
        assert_eq!(numerical_rank(&[1.0, 0.5, 1e-13, 1e-14], 1e-12).unwrap(), 2);
        assert!(numerical_rank(&[], 1e-12).is_err());
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn identity_bases_give_plain_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let op = StructuredOperator::new(vec![(ScalarExpr::one(), RealMatrix::Dense(a.clone()))]).unwrap();
        let eye = DMatrix::identity(5, 5);
        let pb = pencil_blocks_of(&op, &eye, &eye).unwrap();
        assert_eq!(pb.blocks, vec![a.clone()]);
        let want = a.singular_values();
        for (x, y) in pb.sigma_horizontal.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_subspace_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_orthogonal(10, &mut rng);
        let mut d = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
        d.view_mut((2, 0), (8, 2)).fill(0.0);
        let a = &q * d * q.transpose();
        let op = StructuredOperator::new(vec![(ScalarExpr::one(), RealMatrix::Dense(a))]).unwrap();
        let basis = q.columns(0, 2).into_owned();
        let wide = q.clone();
        let pb = pencil_blocks_of(&op, &basis, &wide).unwrap();
        let s1 = pb.sigma_vertical[0];
        assert_eq!(pb.sigma_vertical.iter().filter(|&&s| s > 1e-12 * s1).count(), 2);
        assert_eq!(pb.horizontal.shape(), (10, 2));
    }

    #[test]
    fn three_term_shapes_and_order_guards() {
        let eye = RealMatrix::identity(6);
        let op = StructuredOperator::new(vec![
            ("s^2".parse().unwrap(), eye.clone()),
            (ScalarExpr::s(), eye.scale(0.1)),
            (ScalarExpr::one(), eye.scale(2.0)),
        ])
        .unwrap();
        let v = DMatrix::identity(6, 4);
        let pb = pencil_blocks_of(&op, &v, &v).unwrap();
        assert_eq!(pb.horizontal.shape(), (4, 12));
        assert_eq!(pb.vertical.shape(), (12, 4));
        assert!(matches!(truncate_bases(&v, &v, &pb, 0, false), Err(MorError::InvalidOrder(_))));
        assert!(matches!(truncate_bases(&v, &v, &pb, 5, false), Err(MorError::InvalidOrder(_))));
        let (ve, _) = truncate_bases(&v, &v, &pb, 4, false).unwrap();
        let proj = &ve * ve.transpose();
        assert!((proj - &v * v.transpose()).norm() < 1e-12);
    }

    #[test]
    fn identity_projection_is_identity() {
        let a = RealMatrix::Dense(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]));
        let sys = System::new(
            StructuredOperator::new(vec![(ScalarExpr::s(), RealMatrix::identity(2)), (ScalarExpr::one(), a)]).unwrap(),
            ParamMatrix::constant(RealMatrix::Dense(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]))),
            ParamMatrix::constant(RealMatrix::Dense(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))),
            vec![],
            vec![],
        )
        .unwrap();
        let eye = DMatrix::identity(2, 2);
        let red = project(&sys, &eye, &eye).unwrap();
        for ((e1, a1), (e2, a2)) in red.operator.terms().iter().zip(sys.operator.terms()) {
            assert_eq!(e1, e2);
            assert_eq!(a1.to_dense(), a2.to_dense());
        }
        assert_eq!(red.input.eval_real(&[]).unwrap(), sys.input.eval_real(&[]).unwrap());
        assert_eq!(red.output.eval_real(&[]).unwrap(), sys.output.eval_real(&[]).unwrap());
    }
}
