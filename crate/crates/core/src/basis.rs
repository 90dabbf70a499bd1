//! Interpolation plans and the projection spaces built from them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MorError, Result};
use crate::model::{AffineTensor, Family, System, C64};
use crate::svd::thin_svd;
use crate::transfer::{SolveCache, Transfer};

/// One interpolation point with its tangential directions.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEntry {
    pub sigma: C64,
    pub mu: C64,
    pub p: Vec<f64>,
    pub b: Option<Vec<C64>>,
    pub c: Option<Vec<C64>>,
}

impl PlanEntry {
    /// Hermite entry (σ = μ) without tangential directions.
    pub fn at(sigma: C64, p: Vec<f64>) -> Self {
        PlanEntry { sigma, mu: sigma, p, b: None, c: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpPlan {
    pub entries: Vec<PlanEntry>,
    /// `None` selects every family present in the system.
    pub families: Option<Vec<Family>>,
    pub galerkin: bool,
    pub hermite: bool,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    sigma: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<[f64; 2]>,
    #[serde(default)]
    p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    entries: Vec<EntryJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    families: Option<Vec<Family>>,
    #[serde(default)]
    galerkin: bool,
    #[serde(default)]
    hermite: bool,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(v: [f64; 2]) -> C64 {
    C64::new(v[0], v[1])
}

impl InterpPlan {
    pub fn new(entries: Vec<PlanEntry>) -> Self {
        let hermite = entries.iter().all(|e| e.sigma == e.mu);
        InterpPlan { entries, families: None, galerkin: false, hermite }
    }

    fn to_json_struct(&self) -> PlanJson {
        PlanJson {
            entries: self
                .entries
                .iter()
                .map(|e| EntryJson {
                    sigma: pair(e.sigma),
                    mu: if e.mu == e.sigma { None } else { Some(pair(e.mu)) },
                    p: e.p.clone(),
                    b: e.b.as_ref().map(|v| v.iter().copied().map(pair).collect()),
                    c: e.c.as_ref().map(|v| v.iter().copied().map(pair).collect()),
                })
                .collect(),
            families: self.families.clone(),
            galerkin: self.galerkin,
            hermite: self.hermite,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_struct())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PlanJson = serde_json::from_str(text)?;
        let entries = raw
            .entries
            .into_iter()
            .map(|e| PlanEntry {
                sigma: unpair(e.sigma),
                mu: e.mu.map(unpair).unwrap_or(unpair(e.sigma)),
                p: e.p,
                b: e.b.map(|v| v.into_iter().map(unpair).collect()),
                c: e.c.map(|v| v.into_iter().map(unpair).collect()),
            })
            .collect();
        Ok(InterpPlan { entries, families: raw.families, galerkin: raw.galerkin, hermite: raw.hermite })
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.to_json_struct()).expect("plan serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Selected families, in canonical order.
    pub fn selected_families(&self, sys: &System) -> Result<Vec<Family>> {
        let present = sys.families();
        match &self.families {
            None => Ok(present),
            Some(sel) => {
                for f in sel {
                    if !present.contains(f) {
                        return Err(MorError::InvalidPlan(format!("family {f} is not present in the system")));
                    }
                }
                Ok(present.into_iter().filter(|f| sel.contains(f)).collect())
            }
        }
    }

    pub fn validate(&self, sys: &System) -> Result<()> {
        if self.entries.is_empty() {
            return Err(MorError::InvalidPlan("plan has no entries".into()));
        }
        self.selected_families(sys)?;
        for (i, e) in self.entries.iter().enumerate() {
            if e.p.len() != sys.q {
                return Err(MorError::InvalidPlan(format!("entry {i}: p has {} components, system needs {}", e.p.len(), sys.q)));
            }
            if self.hermite && e.sigma != e.mu {
                return Err(MorError::InvalidPlan(format!("entry {i}: hermite plan requires sigma = mu")));
            }
            for (name, dir, len) in [("b", &e.b, sys.m()), ("c", &e.c, sys.p_out())] {
                match dir {
                    Some(v) => {
                        if v.len() != len {
                            return Err(MorError::InvalidPlan(format!("entry {i}: {name} has length {}, expected {len}", v.len())));
                        }
                        if v.iter().all(|z| z.norm() == 0.0) {
                            return Err(MorError::InvalidPlan(format!("entry {i}: {name} is zero")));
                        }
                    }
                    None if len != 1 => {
                        return Err(MorError::InvalidPlan(format!("entry {i}: MIMO systems need a direction {name}")));
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    V,
    W,
}

/// Where a raw basis column came from. `block` is the input index for
/// bilinear families and 0 otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnTag {
    pub family: Family,
    pub entry: usize,
    pub side: Side,
    pub block: usize,
}

/// Raw complex columns with provenance, the real orthonormal bases, and
/// the Krylov-weighted bases used for dominant subspace extraction.
#[derive(Clone, Debug)]
pub struct BasisBundle {
    pub v_raw: DMatrix<C64>,
    pub v_tags: Vec<ColumnTag>,
    pub w_raw: DMatrix<C64>,
    pub w_tags: Vec<ColumnTag>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// `Q U Σ` where `Qᵀ [Re V_raw, Im V_raw] = U Σ Zᵀ`: spans the same
    /// space as the raw real columns and has the same Gram matrix, so
    /// `Wᵀ A V` blocks built from it carry the singular values of the
    /// unnormalized Krylov columns.
    pub v_weighted: DMatrix<f64>,
    pub w_weighted: DMatrix<f64>,
    pub tol: f64,
    pub galerkin: bool,
}

/// Mode-2 matricizations shared by all plan entries.
pub struct BasisContext<'a> {
    sys: &'a System,
    transfer: Transfer<'a>,
    poly2: Vec<(usize, AffineTensor)>,
    bilin2: Vec<(usize, AffineTensor)>,
}

impl<'a> BasisContext<'a> {
    pub fn new(sys: &'a System, cache: Option<&'a SolveCache>) -> Result<Self> {
        let poly2 = sys.poly.iter().map(|h| Ok((h.order(), h.mode2()?))).collect::<Result<_>>()?;
        let bilin2 = sys.bilin.iter().map(|b| Ok((b.order(), b.mode2()?))).collect::<Result<_>>()?;
        Ok(BasisContext { sys, transfer: Transfer { sys, cache }, poly2, bilin2 })
    }

    fn unit(len: usize, k: usize) -> DVector<C64> {
        DVector::from_fn(len, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Columns of one plan entry, V side then W side, each ordered by family.
    pub fn primitive_columns(
        &self,
        index: usize,
        entry: &PlanEntry,
        families: &[Family],
    ) -> Result<(Vec<(ColumnTag, DVector<C64>)>, Vec<(ColumnTag, DVector<C64>)>)> {
        let sys = self.sys;
        let (m, p_out) = (sys.m(), sys.p_out());
        let p = &entry.p;
        let one = C64::new(1.0, 0.0);
        let b = DVector::from_vec(entry.b.clone().unwrap_or_else(|| vec![one; m]));
        let c = DVector::from_vec(entry.c.clone().unwrap_or_else(|| vec![one; p_out]));

        let bmat = sys.input.eval(p, Some(entry.sigma))?;
        let x = self.transfer.solve_vec(entry.sigma, p, &(bmat * &b), false)?;
        let cmat = sys.output.eval(p, Some(entry.mu))?;
        let y = self.transfer.solve_vec(entry.mu, p, &(cmat.transpose() * &c), true)?;

        // Right-hand sides first, then one block solve per side.
        let mut v_tags = Vec::new();
        let mut v_rhs: Vec<DVector<C64>> = Vec::new();
        let mut w_tags = Vec::new();
        let mut w_rhs: Vec<DVector<C64>> = Vec::new();
        let tag = |family, side, block| ColumnTag { family, entry: index, side, block };
        let mut v_cols = Vec::new();
        let mut w_cols = Vec::new();
        for &f in families {
            match f {
                Family::L => {
                    v_cols.push((tag(f, Side::V, 0), x.clone()));
                    w_cols.push((tag(f, Side::W, 0), y.clone()));
                }
                Family::N(eta) => {
                    let n1 = sys.bilin_term(eta).expect("family present").tensor();
                    let n2 = &self.bilin2.iter().find(|(o, _)| *o == eta).expect("mode-2 present").1;
                    for k in 0..m {
                        let e = Self::unit(m, k);
                        let mut fv: Vec<&DVector<C64>> = vec![&e];
                        fv.extend(std::iter::repeat_n(&x, eta));
                        v_tags.push(tag(f, Side::V, k));
                        v_rhs.push(n1.apply(p, &fv)?);
                        let mut fw: Vec<&DVector<C64>> = vec![&e];
                        fw.extend(std::iter::repeat_n(&x, eta - 1));
                        fw.push(&y);
                        w_tags.push(tag(f, Side::W, k));
                        w_rhs.push(n2.apply(p, &fw)?);
                    }
                }
                Family::H(xi) => {
                    let h1 = sys.poly_term(xi).expect("family present").tensor();
                    let h2 = &self.poly2.iter().find(|(o, _)| *o == xi).expect("mode-2 present").1;
                    let fv: Vec<&DVector<C64>> = std::iter::repeat_n(&x, xi).collect();
                    v_tags.push(tag(f, Side::V, 0));
                    v_rhs.push(h1.apply(p, &fv)?);
                    let mut fw: Vec<&DVector<C64>> = std::iter::repeat_n(&x, xi - 1).collect();
                    fw.push(&y);
                    w_tags.push(tag(f, Side::W, 0));
                    w_rhs.push(h2.apply(p, &fw)?);
                }
            }
        }
        let n = sys.n();
        if !v_rhs.is_empty() {
            let rhs = DMatrix::from_columns(&v_rhs);
            let sol = self.transfer.solve(entry.sigma, p, &rhs, false)?;
            let solw = self.transfer.solve(entry.sigma, p, &DMatrix::from_columns(&w_rhs), true)?;
            let _ = n;
            // Interleave back into canonical family order.
            let mut vi = 0;
            let mut out_v = Vec::new();
            let mut out_w = Vec::new();
            let mut wi = 0;
            let mut lv = v_cols.into_iter();
            let mut lw = w_cols.into_iter();
            for &f in families {
                if f == Family::L {
                    out_v.push(lv.next().unwrap());
                    out_w.push(lw.next().unwrap());
                    continue;
                }
                while vi < v_tags.len() && v_tags[vi].family == f {
                    out_v.push((v_tags[vi], sol.column(vi).into_owned()));
                    vi += 1;
                }
                while wi < w_tags.len() && w_tags[wi].family == f {
                    out_w.push((w_tags[wi], solw.column(wi).into_owned()));
                    wi += 1;
                }
            }
            return Ok((out_v, out_w));
        }
        Ok((v_cols, w_cols))
    }
}

/// `[Re Z, Im Z]`, dropping imaginary columns that vanish relative to ‖Z‖.
pub fn realify(z: &DMatrix<C64>) -> DMatrix<f64> {
    let total = z.norm();
    let re = z.map(|v| v.re);
    let mut cols: Vec<DVector<f64>> = re.column_iter().map(|c| c.into_owned()).collect();
    for c in z.column_iter() {
        let im = c.map(|v| v.im);
        if im.norm() > 1e-14 * total {
            cols.push(im);
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(z.nrows(), 0);
    }
    DMatrix::from_columns(&cols)
}

const ORTH_CHUNK: usize = 32;

/// Rank-revealing orthonormalization. Columns are scaled to unit length,
/// then processed in chunks: two Gram-Schmidt passes against the basis so
/// far followed by an SVD of the remainder, keeping directions whose
/// singular value exceeds `tol` (or `1e3·eps` when `tol = 0`).
pub fn orth_dedup(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let thr = if tol > 0.0 { tol } else { 1e3 * f64::EPSILON };
    let cols: Vec<DVector<f64>> = m
        .column_iter()
        .filter_map(|c| {
            let nrm = c.norm();
            if nrm > 0.0 && nrm.is_finite() {
                Some(c / nrm)
            } else {
                None
            }
        })
        .collect();
    if cols.is_empty() {
        log::warn!("orthonormalization of a zero matrix gives an empty basis");
        return Ok(DMatrix::zeros(n, 0));
    }
    let mut q: Vec<DVector<f64>> = Vec::new();
    for chunk in cols.chunks(ORTH_CHUNK) {
        if q.len() >= n {
            break;
        }
        let mut block = DMatrix::from_columns(chunk);
        if !q.is_empty() {
            let qm = DMatrix::from_columns(&q);
            for _ in 0..2 {
                let coef = qm.transpose() * &block;
                block -= &qm * coef;
            }
        }
        let svd = thin_svd(&block)?;
        let u = svd.u;
        let qm = if q.is_empty() { None } else { Some(DMatrix::from_columns(&q)) };
        for (k, &s) in svd.sigma.iter().enumerate() {
            if s <= thr || q.len() >= n {
                continue;
            }
            let mut v = u.column(k).into_owned();
            if let Some(qm) = &qm {
                v -= qm * (qm.transpose() * &v);
            }
            for prev in q.iter().skip(qm.as_ref().map_or(0, |x| x.ncols())) {
                let d = prev.dot(&v);
                v -= prev * d;
            }
            let nrm = v.norm();
            if nrm > 0.5 {
                q.push(v / nrm);
            }
        }
    }
    if q.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&q))
}

/// Compresses `raw` onto the orthonormal basis `q` keeping its column
/// weighting: returns `Q U Σ` from the SVD `Qᵀ raw = U Σ Zᵀ`.
pub fn weighted_basis(raw: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.ncols() == 0 || raw.ncols() == 0 {
        return Ok(DMatrix::zeros(q.nrows(), 0));
    }
    let r = q.transpose() * raw;
    // Rᵀ = Q₂ R₂ shrinks a wide R to square before the SVD.
    let core = if r.ncols() > r.nrows() { r.transpose().qr().r().transpose() } else { r };
    let svd = thin_svd(&core)?;
    let s_max = svd.sigma.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..svd.sigma.len()).filter(|&k| svd.sigma[k] > f64::EPSILON * s_max).collect();
    let mut scaled = DMatrix::zeros(svd.u.nrows(), keep.len());
    for (j, &k) in keep.iter().enumerate() {
        scaled.set_column(j, &(svd.u.column(k) * svd.sigma[k]));
    }
    Ok(q * scaled)
}

/// Builds V and W for every plan entry and enabled family.
pub fn build_vw(sys: &System, plan: &InterpPlan) -> Result<BasisBundle> {
    build_vw_with_tol(sys, plan, 0.0)
}

pub fn build_vw_with_tol(sys: &System, plan: &InterpPlan, tol: f64) -> Result<BasisBundle> {
    plan.validate(sys)?;
    let families = plan.selected_families(sys)?;
    let cache = SolveCache::new(4 * rayon::current_num_threads().max(1));
    let ctx = BasisContext::new(sys, Some(&cache))?;
    let per_entry: Vec<_> = plan
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| ctx.primitive_columns(i, e, &families))
        .collect::<Result<Vec<_>>>()?;
    let mut v_tags = Vec::new();
    let mut v_cols = Vec::new();
    let mut w_tags = Vec::new();
    let mut w_cols = Vec::new();
    for (vs, ws) in per_entry {
        for (t, c) in vs {
            v_tags.push(t);
            v_cols.push(c);
        }
        for (t, c) in ws {
            w_tags.push(t);
            w_cols.push(c);
        }
    }
    let v_raw = DMatrix::from_columns(&v_cols);
    let w_raw = DMatrix::from_columns(&w_cols);
    let (v, w, v_weighted, w_weighted) = if plan.galerkin {
        let pooled = realify(&DMatrix::from_columns(&[v_cols.as_slice(), w_cols.as_slice()].concat()));
        let v = orth_dedup(&pooled, tol)?;
        let vw = weighted_basis(&pooled, &v)?;
        (v.clone(), v, vw.clone(), vw)
    } else {
        let (vr, wr) = (realify(&v_raw), realify(&w_raw));
        let (v, w) = (orth_dedup(&vr, tol)?, orth_dedup(&wr, tol)?);
        let (vw, ww) = (weighted_basis(&vr, &v)?, weighted_basis(&wr, &w)?);
        (v, w, vw, ww)
    };
    log::info!("basis: {} V and {} W raw columns -> {} / {} orthonormal", v_cols.len(), w_cols.len(), v.ncols(), w.ncols());
    Ok(BasisBundle { v_raw, v_tags, w_raw, w_tags, v, w, v_weighted, w_weighted, tol, galerkin: plan.galerkin })
}
