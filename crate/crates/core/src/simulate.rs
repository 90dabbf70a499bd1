//! Explicit Euler integration of first-order, second-order and delay
//! systems, and output error measures.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{MorError, Result};
use crate::expr::ScalarExpr;
use crate::lu::{factor_real, Lu};
use crate::model::System;
use crate::signal::Signal;
use crate::sparse::RealMatrix;
use crate::tensor::KronMatrix;

/// Uniform grid `t_k = t0 + k·dt`, `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(MorError::Grid(format!("step {dt} must be positive")));
        }
        if !(t_end > t0) {
            return Err(MorError::Grid(format!("end time {t_end} must exceed start {t0}")));
        }
        Ok(TimeGrid { t0, t_end, dt })
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round() as usize
    }

    pub fn samples(&self) -> usize {
        self.steps() + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `p_out × samples`, column `k` is `y(t_k)`.
    pub outputs: DMatrix<f64>,
    pub states: Option<Vec<(f64, DVector<f64>)>>,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.outputs.nrows()).map(|i| format!("y{i}")));
        wtr.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:?}")];
            row.extend(self.outputs.column(k).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Trapezoidal `√∫‖y‖² dt`.
    pub fn l2_norm(&self) -> f64 {
        let norms: Vec<f64> = self.outputs.column_iter().map(|c| c.norm()).collect();
        trapezoid_sq(&self.times, &norms).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.outputs.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn trapezoid_sq(times: &[f64], vals: &[f64]) -> f64 {
    times.windows(2).zip(vals.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] * v[0] + v[1] * v[1])).sum()
}

/// Time-domain form of the operator at a fixed parameter.
#[derive(Clone, Debug)]
pub enum Structure {
    /// `E ẋ = A x + …`
    FirstOrder { e: RealMatrix, a: RealMatrix },
    /// `M ẍ + D ẋ + K x = …`
    SecondOrder { m: RealMatrix, d: RealMatrix, k: RealMatrix },
    /// `E ẋ = A₀ x + Σ A_τ x(t−τ) + …`
    FirstOrderDelay { e: RealMatrix, a0: RealMatrix, delays: Vec<(f64, RealMatrix)> },
    Unsupported(String),
}

/// `c · s^k · e^{−τ s}`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Mono {
    k: u32,
    tau: f64,
    c: f64,
}

fn mul_monos(a: &[Mono], b: &[Mono]) -> Vec<Mono> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(Mono { k: x.k + y.k, tau: x.tau + y.tau, c: x.c * y.c });
        }
    }
    out
}

fn is_constant(m: &[Mono]) -> bool {
    m.iter().all(|t| t.k == 0 && t.tau == 0.0)
}

/// Expands `e` at fixed `p` into monomials, or `None` when it is not a
/// polynomial in `s` and `e^{−τ s}` with real coefficients.
fn expand(e: &ScalarExpr, p: &[f64]) -> Option<Vec<Mono>> {
    let constant = |c: f64| Some(vec![Mono { k: 0, tau: 0.0, c }]);
    match e {
        ScalarExpr::Real(v) => constant(*v),
        ScalarExpr::Complex(z) if z.im == 0.0 => constant(z.re),
        ScalarExpr::Complex(_) => None,
        ScalarExpr::S => Some(vec![Mono { k: 1, tau: 0.0, c: 1.0 }]),
        ScalarExpr::Param(j) => constant(*p.get(*j)?),
        ScalarExpr::Neg(b) => Some(expand(b, p)?.into_iter().map(|m| Mono { c: -m.c, ..m }).collect()),
        ScalarExpr::Sum(parts) => {
            let mut out = Vec::new();
            for part in parts {
                out.extend(expand(part, p)?);
            }
            Some(out)
        }
        ScalarExpr::Prod(parts) => {
            let mut out = vec![Mono { k: 0, tau: 0.0, c: 1.0 }];
            for part in parts {
                out = mul_monos(&out, &expand(part, p)?);
            }
            Some(out)
        }
        ScalarExpr::Pow(b, x) => {
            let base = expand(b, p)?;
            if is_constant(&base) {
                let v: f64 = base.iter().map(|m| m.c).sum::<f64>().powf(*x);
                return if v.is_finite() { constant(v) } else { None };
            }
            if *x >= 0.0 && x.fract() == 0.0 && *x <= 32.0 {
                let mut out = vec![Mono { k: 0, tau: 0.0, c: 1.0 }];
                for _ in 0..*x as u32 {
                    out = mul_monos(&out, &base);
                }
                return Some(out);
            }
            None
        }
        ScalarExpr::Exp(c, arg) => {
            let inner = expand(arg, p)?;
            if inner.iter().any(|m| m.tau != 0.0 || m.k > 1) {
                return None;
            }
            let a0: f64 = inner.iter().filter(|m| m.k == 0).map(|m| m.c).sum();
            let a1: f64 = inner.iter().filter(|m| m.k == 1).map(|m| m.c).sum();
            let scale = (c * a0).exp();
            let tau = -c * a1;
            if tau < 0.0 || !scale.is_finite() {
                return None;
            }
            Some(vec![Mono { k: 0, tau, c: scale }])
        }
    }
}

fn same_tau(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Matches the operator at `p` against the supported time-domain forms.
pub fn classify(sys: &System, p: &[f64]) -> Result<Structure> {
    sys.check_params(p)?;
    // (k, τ) -> [(coefficient, term index)]
    let mut groups: Vec<((u32, f64), Vec<(f64, usize)>)> = Vec::new();
    for (i, (e, _)) in sys.operator.terms().iter().enumerate() {
        let Some(monos) = expand(e, p) else {
            return Ok(Structure::Unsupported(format!("coefficient `{e}` is not polynomial in s and e^(-tau s)")));
        };
        for m in monos {
            if m.c == 0.0 {
                continue;
            }
            match groups.iter_mut().find(|((k, t), _)| *k == m.k && same_tau(*t, m.tau)) {
                Some((_, list)) => list.push((m.c, i)),
                None => groups.push(((m.k, m.tau), vec![(m.c, i)])),
            }
        }
    }
    let n = sys.n();
    let terms = sys.operator.terms();
    let build = |list: &Vec<(f64, usize)>, sign: f64| -> Result<RealMatrix> {
        let parts: Vec<(f64, &RealMatrix)> = list.iter().map(|&(c, i)| (sign * c, &terms[i].1)).collect();
        RealMatrix::combine(&parts)
    };
    let find = |k: u32, tau: f64| groups.iter().find(|((kk, t), _)| *kk == k && same_tau(*t, tau)).map(|(_, l)| l);
    let max_k = groups.iter().map(|((k, _), _)| *k).max().unwrap_or(0);
    let delayed: Vec<_> = groups.iter().filter(|((_, t), _)| *t != 0.0).collect();
    if delayed.iter().any(|((k, _), _)| *k != 0) {
        return Ok(Structure::Unsupported("delayed derivative terms".into()));
    }
    let zeros = || RealMatrix::zeros(n, n);
    let or_zero = |k: u32, sign: f64| -> Result<RealMatrix> {
        match find(k, 0.0) {
            Some(l) => build(l, sign),
            None => Ok(zeros()),
        }
    };
    match (max_k, delayed.is_empty()) {
        (1, true) => Ok(Structure::FirstOrder { e: or_zero(1, 1.0)?, a: or_zero(0, -1.0)? }),
        (2, true) => Ok(Structure::SecondOrder { m: or_zero(2, 1.0)?, d: or_zero(1, 1.0)?, k: or_zero(0, 1.0)? }),
        (1, false) => {
            let mut delays = Vec::new();
            for ((_, tau), list) in delayed {
                delays.push((*tau, build(list, -1.0)?));
            }
            delays.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(Structure::FirstOrderDelay { e: or_zero(1, 1.0)?, a0: or_zero(0, -1.0)?, delays })
        }
        (k, _) => Ok(Structure::Unsupported(format!("highest power of s is {k}"))),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimOptions {
    /// Keep every `n`-th state; 0 keeps none.
    pub state_stride: usize,
}

/// Constant pieces of the right-hand side at a fixed parameter.
struct Forcing {
    b: DMatrix<f64>,
    poly: Vec<(usize, KronMatrix)>,
    bilin: Vec<(usize, KronMatrix)>,
}

impl Forcing {
    fn new(sys: &System, p: &[f64]) -> Result<Self> {
        Ok(Forcing {
            b: sys.input.eval_real(p)?,
            poly: sys.poly.iter().map(|h| Ok((h.order(), h.tensor().at(p)?))).collect::<Result<_>>()?,
            bilin: sys.bilin.iter().map(|b| Ok((b.order(), b.tensor().at(p)?))).collect::<Result<_>>()?,
        })
    }

    /// `B u + Σ H x^{⊗ξ} + Σ N (u ⊗ x^{⊗η})`.
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut f = &self.b * u;
        for (xi, h) in &self.poly {
            let factors: Vec<&DVector<f64>> = vec![x; *xi];
            f += h.apply(&factors)?;
        }
        for (eta, nt) in &self.bilin {
            let mut factors: Vec<&DVector<f64>> = vec![u];
            factors.extend(std::iter::repeat_n(x, *eta));
            f += nt.apply(&factors)?;
        }
        Ok(f)
    }
}

/// Solves with `E` unless it is the identity.
enum MassSolve {
    Identity,
    Lu(Lu<f64>),
}

impl MassSolve {
    fn new(e: &RealMatrix, what: &str) -> Result<Self> {
        if e.is_identity() {
            return Ok(MassSolve::Identity);
        }
        factor_real(e).map(MassSolve::Lu).map_err(|err| match err {
            MorError::SingularPencil { .. } => MorError::Unsupported(format!("{what} is singular")),
            other => other,
        })
    }

    fn apply(&self, v: DVector<f64>) -> DVector<f64> {
        match self {
            MassSolve::Identity => v,
            MassSolve::Lu(lu) => lu.solve_vec(&v),
        }
    }
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MorError::Diverged { t })
    }
}

/// History length in steps for each delay; `τ` must be a multiple of `dt`.
fn delay_lags(delays: &[(f64, RealMatrix)], dt: f64) -> Result<Vec<usize>> {
    delays
        .iter()
        .map(|(tau, _)| {
            let lag = (tau / dt).round();
            if lag < 1.0 || (lag * dt - tau).abs() > 1e-12 * tau.max(1.0) {
                Err(MorError::Grid(format!("delay {tau} is not a positive multiple of dt = {dt}")))
            } else {
                Ok(lag as usize)
            }
        })
        .collect()
}

/// Bytes of history the delay integrator needs for this system.
pub fn history_bytes(sys: &System, p: &[f64], dt: f64) -> Result<usize> {
    match classify(sys, p)? {
        Structure::FirstOrderDelay { delays, .. } => {
            let lags = delay_lags(&delays, dt)?;
            Ok(lags.into_iter().max().unwrap_or(0) * sys.n() * std::mem::size_of::<f64>())
        }
        _ => Ok(0),
    }
}

/// Explicit Euler from zero initial state (and zero history).
pub fn simulate(
    sys: &System,
    p: &[f64],
    u: &dyn Fn(f64) -> DVector<f64>,
    grid: &TimeGrid,
    opts: SimOptions,
) -> Result<Trajectory> {
    let structure = classify(sys, p)?;
    let forcing = Forcing::new(sys, p)?;
    let c = sys.output.eval_real(p)?;
    let m_in = sys.m();
    let n = sys.n();
    let steps = grid.steps();
    let dt = grid.dt;
    let mut outputs = DMatrix::zeros(sys.p_out(), steps + 1);
    let mut states = (opts.state_stride > 0).then(Vec::new);
    let input = |t: f64| -> Result<DVector<f64>> {
        let v = u(t);
        if v.len() != m_in {
            return Err(MorError::Dimension(format!("input has {} channels, system has {m_in}", v.len())));
        }
        Ok(v)
    };
    let mut record = |k: usize, x: &DVector<f64>, outputs: &mut DMatrix<f64>| {
        outputs.set_column(k, &(&c * x));
        if let Some(st) = states.as_mut() {
            if k % opts.state_stride == 0 {
                st.push((grid.time(k), x.clone()));
            }
        }
    };

    let mut x = DVector::zeros(n);
    match structure {
        Structure::Unsupported(why) => return Err(MorError::Unsupported(why)),
        Structure::FirstOrder { e, a } => {
            let mass = MassSolve::new(&e, "E")?;
            for k in 0..steps {
                let t = grid.time(k);
                record(k, &x, &mut outputs);
                let f = a.mul_vec(&x) + forcing.eval(&x, &input(t)?)?;
                x += mass.apply(f) * dt;
                check_finite(&x, grid.time(k + 1))?;
            }
        }
        Structure::SecondOrder { m, d, k: stiff } => {
            let mass = MassSolve::new(&m, "M")?;
            let mut v = DVector::zeros(n);
            for k in 0..steps {
                let t = grid.time(k);
                record(k, &x, &mut outputs);
                let f = forcing.eval(&x, &input(t)?)? - d.mul_vec(&v) - stiff.mul_vec(&x);
                let acc = mass.apply(f);
                x.axpy(dt, &v, 1.0);
                v.axpy(dt, &acc, 1.0);
                check_finite(&x, grid.time(k + 1))?;
                check_finite(&v, grid.time(k + 1))?;
            }
        }
        Structure::FirstOrderDelay { e, a0, delays } => {
            let mass = MassSolve::new(&e, "E")?;
            let lags = delay_lags(&delays, dt)?;
            let depth = lags.iter().copied().max().unwrap_or(1);
            let mut history = vec![0.0; depth * n];
            for k in 0..steps {
                let t = grid.time(k);
                record(k, &x, &mut outputs);
                let mut f = a0.mul_vec(&x) + forcing.eval(&x, &input(t)?)?;
                for ((_, a_tau), &lag) in delays.iter().zip(&lags) {
                    if k >= lag {
                        let slot = (k - lag) % depth;
                        let past = DVector::from_column_slice(&history[slot * n..(slot + 1) * n]);
                        f += a_tau.mul_vec(&past);
                    }
                }
                let slot = k % depth;
                history[slot * n..(slot + 1) * n].copy_from_slice(x.as_slice());
                x += mass.apply(f) * dt;
                check_finite(&x, grid.time(k + 1))?;
            }
        }
    }
    record(steps, &x, &mut outputs);
    let times = (0..=steps).map(|k| grid.time(k)).collect();
    Ok(Trajectory { times, outputs, states })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// Trapezoidal `√∫‖Δy‖² dt`.
    pub l2: f64,
    pub linf: f64,
    pub pointwise: Vec<f64>,
}

pub fn error_metrics(fom: &Trajectory, rom: &Trajectory) -> Result<ErrorMetrics> {
    if fom.times.len() != rom.times.len() || fom.outputs.shape() != rom.outputs.shape() {
        return Err(MorError::Grid("trajectories are sampled on different grids".into()));
    }
    if fom.times.iter().zip(&rom.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(MorError::Grid("trajectory time stamps differ".into()));
    }
    let pointwise: Vec<f64> = (&fom.outputs - &rom.outputs).column_iter().map(|c| c.norm()).collect();
    let l2 = trapezoid_sq(&fom.times, &pointwise).sqrt();
    let linf = pointwise.iter().copied().fold(0.0, f64::max);
    Ok(ErrorMetrics { l2, linf, pointwise })
}

#[derive(Debug)]
pub struct SweepResult {
    pub params: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `E(t, p)` per parameter; failed parameters hold the error message.
    pub table: Vec<std::result::Result<Vec<f64>, String>>,
    pub e_max: f64,
    /// `max_t max_p ‖y(t; p)‖` over the successful parameters.
    pub y_max: f64,
}

impl SweepResult {
    /// CSV with `p1..pq, t, E`; failed parameters are skipped.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let q = self.params.first().map_or(0, |p| p.len());
        let mut header: Vec<String> = (1..=q).map(|j| format!("p{j}")).collect();
        header.push("t".into());
        header.push("E".into());
        wtr.write_record(&header)?;
        for (p, row) in self.params.iter().zip(&self.table) {
            let Ok(row) = row else { continue };
            for (t, e) in self.times.iter().zip(row) {
                let mut rec: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
                rec.push(format!("{t:?}"));
                rec.push(format!("{e:e}"));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

const PARALLEL_HISTORY_LIMIT: usize = 256 << 20;

/// `E(t,p) = ‖y(t;p) − ŷ(t;p)‖ / max_{t,p} ‖y(t;p)‖` over a parameter set.
pub fn sweep_error(fom: &System, rom: &System, params: &[Vec<f64>], u: &Signal, grid: &TimeGrid) -> Result<SweepResult> {
    Ok(sweep_errors(fom, &[rom], params, u, grid)?.remove(0))
}

/// [`sweep_error`] for several reduced models sharing one full-order run
/// per parameter.
pub fn sweep_errors(fom: &System, roms: &[&System], params: &[Vec<f64>], u: &Signal, grid: &TimeGrid) -> Result<Vec<SweepResult>> {
    if params.is_empty() {
        return Err(MorError::Empty("parameter set is empty".into()));
    }
    type Run = Result<(DMatrix<f64>, Vec<Result<Vec<f64>>>)>;
    let run = |p: &Vec<f64>| -> Run {
        let f = u.evaluator()?;
        let y = simulate(fom, p, &f, grid, SimOptions::default())?;
        let diffs = roms
            .iter()
            .map(|rom| {
                let yr = simulate(rom, p, &f, grid, SimOptions::default())?;
                Ok((&y.outputs - &yr.outputs).column_iter().map(|c| c.norm()).collect())
            })
            .collect();
        Ok((y.outputs, diffs))
    };
    let big = history_bytes(fom, &params[0], grid.dt)? > PARALLEL_HISTORY_LIMIT;
    let runs: Vec<Run> = if big { params.iter().map(run).collect() } else { params.par_iter().map(run).collect() };
    let y_max = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .flat_map(|(y, _)| y.column_iter().map(|c| c.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    if runs.iter().all(|r| r.is_err()) {
        return Err(runs.into_iter().next().and_then(|r| r.err()).expect("nonempty"));
    }
    let scale = if y_max > 0.0 { 1.0 / y_max } else { 1.0 };
    let times: Vec<f64> = (0..=grid.steps()).map(|k| grid.time(k)).collect();
    let mut per_rom: Vec<Vec<std::result::Result<Vec<f64>, String>>> = roms.iter().map(|_| Vec::with_capacity(params.len())).collect();
    for r in runs {
        match r {
            Ok((_, diffs)) => {
                for (slot, d) in per_rom.iter_mut().zip(diffs) {
                    slot.push(d.map(|d| d.into_iter().map(|e| e * scale).collect()).map_err(|e| e.to_string()));
                }
            }
            Err(e) => {
                for slot in per_rom.iter_mut() {
                    slot.push(Err(e.to_string()));
                }
            }
        }
    }
    Ok(per_rom
        .into_iter()
        .map(|table| {
            let e_max = table.iter().filter_map(|r| r.as_ref().ok()).flat_map(|r| r.iter().copied()).fold(0.0, f64::max);
            SweepResult { params: params.to_vec(), times: times.clone(), table, e_max, y_max }
        })
        .collect())
}
