//! On-disk bundles: a `system.json` manifest next to Matrix Market files.
//!
//! ```text
//! {
//!   "n": 500, "m": 1, "p_out": 1, "q": 1, "d": 3,
//!   "operator": [{"kappa": "s", "matrix": "K0.mtx"}, ...],
//!   "input":    [{"kappa": "1", "matrix": "B0.mtx"}],
//!   "output":   [{"kappa": "1", "matrix": "C0.mtx"}],
//!   "poly":  [{"order": 3, "terms": [{"kappa": "1", "matrix": "H3_0.mtx"}]}],
//!   "bilin": [{"order": 1, "m": 1, "terms": [...]}]
//! }
//! ```
//!
//! Tensor files hold the mode-1 matricization. A reduced bundle adds
//! `"v_e"`, `"w_e"` and `"provenance"`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::expr::ScalarExpr;
use crate::model::{BilinTerm, ParamMatrix, PolyTerm, Provenance, ReducedSystem, StructuredOperator, System};
use crate::mtx;
use crate::sparse::RealMatrix;
use crate::tensor::KronMatrix;

pub const MANIFEST: &str = "system.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermRef {
    pub kappa: ScalarExpr,
    pub matrix: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyRef {
    pub order: usize,
    pub terms: Vec<TermRef>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilinRef {
    pub order: usize,
    pub m: usize,
    pub terms: Vec<TermRef>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub m: usize,
    pub p_out: usize,
    pub q: usize,
    pub d: usize,
    pub operator: Vec<TermRef>,
    pub input: Vec<TermRef>,
    pub output: Vec<TermRef>,
    #[serde(default)]
    pub poly: Vec<PolyRef>,
    #[serde(default)]
    pub bilin: Vec<BilinRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_e: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_e: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn write_terms(dir: &Path, prefix: &str, terms: &[(ScalarExpr, RealMatrix)]) -> Result<Vec<TermRef>> {
    terms
        .iter()
        .enumerate()
        .map(|(i, (e, a))| {
            let name = format!("{prefix}{i}.mtx");
            mtx::write(&dir.join(&name), a)?;
            Ok(TermRef { kappa: e.clone(), matrix: name })
        })
        .collect()
}

fn write_tensor_terms(dir: &Path, prefix: &str, parts: &[(ScalarExpr, KronMatrix)]) -> Result<Vec<TermRef>> {
    parts
        .iter()
        .enumerate()
        .map(|(i, (e, k))| {
            let name = format!("{prefix}_{i}.mtx");
            mtx::write_sparse(&dir.join(&name), k.matrix())?;
            Ok(TermRef { kappa: e.clone(), matrix: name })
        })
        .collect()
}

fn manifest_of(sys: &System, dir: &Path) -> Result<Manifest> {
    Ok(Manifest {
        n: sys.n(),
        m: sys.m(),
        p_out: sys.p_out(),
        q: sys.q,
        d: sys.degree,
        operator: write_terms(dir, "K", sys.operator.terms())?,
        input: write_terms(dir, "B", sys.input.terms())?,
        output: write_terms(dir, "C", sys.output.terms())?,
        poly: sys
            .poly
            .iter()
            .map(|h| Ok(PolyRef { order: h.order(), terms: write_tensor_terms(dir, &format!("H{}", h.order()), h.parts())? }))
            .collect::<Result<_>>()?,
        bilin: sys
            .bilin
            .iter()
            .map(|b| {
                Ok(BilinRef { order: b.order(), m: b.m(), terms: write_tensor_terms(dir, &format!("N{}", b.order()), b.parts())? })
            })
            .collect::<Result<_>>()?,
        v_e: None,
        w_e: None,
        provenance: None,
    })
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn write_system(sys: &System, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = manifest_of(sys, dir)?;
    write_manifest(dir, &manifest)
}

pub fn write_reduced(rom: &ReducedSystem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = manifest_of(&rom.system, dir)?;
    mtx::write_dense(&dir.join("V_e.mtx"), &rom.v_e)?;
    mtx::write_dense(&dir.join("W_e.mtx"), &rom.w_e)?;
    manifest.v_e = Some("V_e.mtx".into());
    manifest.w_e = Some("W_e.mtx".into());
    manifest.provenance = Some(rom.provenance.clone());
    write_manifest(dir, &manifest)
}

fn read_terms(dir: &Path, refs: &[TermRef]) -> Result<Vec<(ScalarExpr, RealMatrix)>> {
    refs.iter().map(|t| Ok((t.kappa.clone(), mtx::read(&dir.join(&t.matrix))?))).collect()
}

fn read_tensor_terms(dir: &Path, refs: &[TermRef], rows: usize, dims: Vec<usize>) -> Result<Vec<(ScalarExpr, KronMatrix)>> {
    refs.iter()
        .map(|t| {
            let sp = mtx::read_sparse(&dir.join(&t.matrix))?;
            if sp.nrows() != rows {
                return Err(MorError::Bundle(format!("{} has {} rows, expected {rows}", t.matrix, sp.nrows())));
            }
            Ok((t.kappa.clone(), KronMatrix::new(dims.clone(), sp)?))
        })
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| MorError::Bundle(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn system_from(dir: &Path, mf: &Manifest) -> Result<System> {
    let operator = StructuredOperator::new(read_terms(dir, &mf.operator)?)?;
    let input = ParamMatrix::new(read_terms(dir, &mf.input)?)?;
    let output = ParamMatrix::new(read_terms(dir, &mf.output)?)?;
    let n = mf.n;
    let poly = mf
        .poly
        .iter()
        .map(|h| PolyTerm::from_parts(h.order, read_tensor_terms(dir, &h.terms, n, vec![n; h.order])?))
        .collect::<Result<_>>()?;
    let bilin = mf
        .bilin
        .iter()
        .map(|b| {
            let mut dims = vec![b.m];
            dims.extend(std::iter::repeat_n(n, b.order));
            BilinTerm::from_parts(b.order, b.m, read_tensor_terms(dir, &b.terms, n, dims)?)
        })
        .collect::<Result<_>>()?;
    let mut sys = System::new(operator, input, output, poly, bilin)?;
    if (sys.n(), sys.m(), sys.p_out()) != (mf.n, mf.m, mf.p_out) {
        return Err(MorError::Bundle(format!(
            "manifest declares n, m, p_out = {}, {}, {} but files give {}, {}, {}",
            mf.n,
            mf.m,
            mf.p_out,
            sys.n(),
            sys.m(),
            sys.p_out()
        )));
    }
    if mf.q < sys.q {
        return Err(MorError::Bundle(format!("manifest declares q = {} but coefficients use {}", mf.q, sys.q)));
    }
    sys.q = mf.q;
    sys.degree = sys.degree.max(mf.d);
    Ok(sys)
}

pub fn read_system(dir: &Path) -> Result<System> {
    system_from(dir, &read_manifest(dir)?)
}

pub fn read_reduced(dir: &Path) -> Result<ReducedSystem> {
    let mf = read_manifest(dir)?;
    let system = system_from(dir, &mf)?;
    let (Some(v), Some(w), Some(provenance)) = (&mf.v_e, &mf.w_e, &mf.provenance) else {
        return Err(MorError::Bundle(format!("{} is not a reduced bundle", dir.display())));
    };
    Ok(ReducedSystem {
        system,
        v_e: mtx::read(&dir.join(v))?.to_dense(),
        w_e: mtx::read(&dir.join(w))?.to_dense(),
        provenance: provenance.clone(),
    })
}

/// Either kind of bundle as a plain system.
pub fn read_any(dir: &Path) -> Result<System> {
    read_system(dir)
}
