//! Command implementations behind the `strmor` binary: argument parsing
//! helpers, plan generation and experiment manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_vw, InterpPlan, PlanEntry};
use crate::bench;
use crate::bundle;
use crate::drop::{self, OrderSpec};
use crate::error::{MorError, Result};
use crate::model::{Family, Provenance, ReducedSystem, System, C64};
use crate::signal::Signal;
use crate::simulate::{error_metrics, simulate, SimOptions, SweepResult, TimeGrid, Trajectory};
use crate::transfer::Transfer;

fn usage(msg: impl Into<String>) -> MorError {
    MorError::InvalidPlan(msg.into())
}

/// `3`, `-1.5`, `2i`, `-i`, `0+2i`, `1e-3-4.5i`.
pub fn parse_complex(text: &str) -> Result<C64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || MorError::Parse { pos: 0, msg: format!("`{text}` is not a complex number") };
    let num = |s: &str| -> Result<f64> {
        match s {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => s.parse().map_err(|_| bad()),
        }
    };
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return Ok(C64::new(t.parse().map_err(|_| bad())?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => Ok(C64::new(body[..k].parse().map_err(|_| bad())?, num(&body[k..])?)),
        None => Ok(C64::new(0.0, num(body)?)),
    }
}

/// `log:a:b:N` or `lin:a:b:N`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| MorError::Parse { pos: 0, msg: format!("grid `{text}`: {m}") };
    let parts: Vec<&str> = text.split(':').collect();
    let [kind, a, b, n] = parts[..] else { return Err(bad("expected kind:a:b:N")) };
    let a: f64 = a.parse().map_err(|_| bad("bad start"))?;
    let b: f64 = b.parse().map_err(|_| bad("bad end"))?;
    let n: usize = n.parse().map_err(|_| bad("bad count"))?;
    if n == 0 {
        return Err(bad("count must be positive"));
    }
    match kind {
        "log" if a > 0.0 && b > 0.0 => Ok(bench::logspace(a, b, n)),
        "log" => Err(bad("log grids need positive bounds")),
        "lin" => Ok(bench::linspace(a, b, n)),
        _ => Err(bad("kind must be log or lin")),
    }
}

/// Comma-separated parameter vector; empty text gives `[]`.
pub fn parse_params(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| MorError::Parse { pos: 0, msg: format!("bad parameter `{s}`") }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BenchName {
    Chafee,
    Msd,
    DelayRod,
    Planted,
}

/// Benchmark system; `planted` also returns the hidden model.
pub fn bench_system(name: BenchName, size: usize, seed: u64, rank: usize) -> Result<(System, Option<System>)> {
    Ok(match name {
        BenchName::Chafee => (bench::gen_chafee(size)?, None),
        BenchName::Msd => (bench::gen_msd(size)?, None),
        BenchName::DelayRod => (bench::gen_delay_rod(size)?, None),
        BenchName::Planted => {
            let (full, hidden) = bench::gen_planted(rank, size, seed)?;
            (full, Some(hidden))
        }
    })
}

pub fn bench_gen(name: BenchName, size: usize, seed: u64, rank: usize, out: &Path) -> Result<()> {
    let (sys, hidden) = bench_system(name, size, seed, rank)?;
    bundle::write_system(&sys, out)?;
    if let Some(h) = hidden {
        bundle::write_system(&h, &out.join("hidden"))?;
    }
    Ok(())
}

fn default_true() -> bool {
    true
}

/// Recipe for an interpolation plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    /// Frequency grid, `log:a:b:N` or `lin:a:b:N`.
    pub freq: String,
    /// Place points at `iω` (default) or on the real axis.
    #[serde(default = "default_true")]
    pub imag: bool,
    /// Parameter grid crossed with the frequencies (one parameter).
    #[serde(default)]
    pub p: Option<String>,
    /// One uniform random parameter per frequency point.
    #[serde(default)]
    pub p_random: Option<[f64; 2]>,
    /// Fixed parameter vector for every point.
    #[serde(default)]
    pub p_fixed: Option<Vec<f64>>,
    #[serde(default)]
    pub families: Option<Vec<Family>>,
    #[serde(default)]
    pub galerkin: bool,
    #[serde(default)]
    pub seed: u64,
}

impl PlanSpec {
    /// Random unit tangential directions are drawn when `m` or `p_out`
    /// exceeds one.
    pub fn build(&self, m: usize, p_out: usize) -> Result<InterpPlan> {
        let freqs = parse_grid(&self.freq)?;
        let set = [self.p.is_some(), self.p_random.is_some(), self.p_fixed.is_some()].iter().filter(|&&b| b).count();
        if set > 1 {
            return Err(usage("give at most one of p, p_random, p_fixed"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let point = |w: f64| if self.imag { C64::new(0.0, w) } else { C64::new(w, 0.0) };
        let mut pairs: Vec<(C64, Vec<f64>)> = Vec::new();
        if let Some(grid) = &self.p {
            let ps = parse_grid(grid)?;
            for &w in &freqs {
                for &p in &ps {
                    pairs.push((point(w), vec![p]));
                }
            }
        } else if let Some([lo, hi]) = self.p_random {
            if !(lo <= hi) {
                return Err(usage(format!("p_random bounds [{lo}, {hi}] are reversed")));
            }
            for &w in &freqs {
                pairs.push((point(w), vec![if lo == hi { lo } else { rng.random_range(lo..hi) }]));
            }
        } else {
            let p = self.p_fixed.clone().unwrap_or_default();
            pairs.extend(freqs.iter().map(|&w| (point(w), p.clone())));
        }
        let tangential = m > 1 || p_out > 1;
        let mut dir = |k: usize| -> Vec<C64> {
            let v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let v = v.normalize();
            v.iter().map(|&x| C64::new(x, 0.0)).collect()
        };
        let entries = pairs
            .into_iter()
            .map(|(s, p)| {
                let (b, c) = if tangential { (Some(dir(m)), Some(dir(p_out))) } else { (None, None) };
                PlanEntry { sigma: s, mu: s, p, b, c }
            })
            .collect();
        let mut plan = InterpPlan::new(entries);
        plan.families = self.families.clone();
        plan.galerkin = self.galerkin;
        Ok(plan)
    }
}

pub fn order_spec(order: Option<usize>, tol: Option<f64>) -> Result<OrderSpec> {
    match (order, tol) {
        (Some(_), Some(_)) => Err(usage("give either --order or --tol, not both")),
        (Some(r), None) => Ok(OrderSpec::Rank(r)),
        (None, Some(t)) if t > 0.0 && t < 1.0 => Ok(OrderSpec::Tol(t)),
        (None, Some(t)) => Err(usage(format!("tolerance {t} must lie in (0, 1)"))),
        (None, None) => Ok(OrderSpec::default()),
    }
}

fn write_provenance(p: &Provenance, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(p)?)?;
    Ok(())
}

/// Runs the reduction and writes the ROM bundle, `singular_values.csv` and
/// `provenance.json` into `out`.
pub fn rom_build(sys_dir: &Path, plan: &InterpPlan, order: OrderSpec, out: &Path) -> Result<ReducedSystem> {
    let sys = bundle::read_system(sys_dir)?;
    let (rom, report) = drop::run_drop(&sys, plan, order)?;
    bundle::write_reduced(&rom, out)?;
    report.write_csv(fs::File::create(out.join("singular_values.csv"))?)?;
    write_provenance(&rom.provenance, &out.join("provenance.json"))?;
    Ok(rom)
}

/// Frequency arguments of one evaluation row.
pub fn tf_points(family: Family, s: &[C64], grid: Option<&str>) -> Result<Vec<Vec<C64>>> {
    let arity = family.arity();
    match grid {
        Some(g) => {
            if !s.is_empty() {
                return Err(usage("give either --s or --grid"));
            }
            Ok(parse_grid(g)?.into_iter().map(|w| vec![C64::new(0.0, w); arity]).collect())
        }
        None if s.len() == arity => Ok(vec![s.to_vec()]),
        None if s.len() == 1 => Ok(vec![vec![s[0]; arity]]),
        None => Err(usage(format!("{family} takes {arity} frequency arguments, {} given", s.len()))),
    }
}

/// Long-format CSV: one row per entry of `F`, with the paired ROM value
/// and relative error when `compare` is given. Singular points produce a
/// row carrying the error message. Returns the number of failed points.
pub fn tf_eval<W: Write>(
    sys: &System,
    compare: Option<&System>,
    family: Family,
    points: &[Vec<C64>],
    p: &[f64],
    out: W,
) -> Result<usize> {
    let mut wtr = csv::Writer::from_writer(out);
    let arity = family.arity();
    let mut header: Vec<String> = vec!["point".into()];
    for k in 1..=arity {
        header.push(format!("s{k}_re"));
        header.push(format!("s{k}_im"));
    }
    header.extend(["row", "col", "re", "im"].map(String::from));
    if compare.is_some() {
        header.extend(["rom_re", "rom_im", "rel_err"].map(String::from));
    }
    header.push("error".into());
    wtr.write_record(&header)?;
    let tf = Transfer::new(sys);
    let tr = compare.map(Transfer::new);
    let mut failures = 0;
    for (k, s) in points.iter().enumerate() {
        let mut lead: Vec<String> = vec![k.to_string()];
        for z in s {
            lead.push(format!("{:e}", z.re));
            lead.push(format!("{:e}", z.im));
        }
        let blank = header.len() - lead.len() - 1;
        let vals = tf.eval(family, s, p).and_then(|f| match &tr {
            Some(t) => Ok((f, Some(t.eval(family, s, p)?))),
            None => Ok((f, None)),
        });
        match vals {
            Ok((f, r)) => {
                let scale = f.norm();
                for (j, i) in (0..f.ncols()).flat_map(|j| (0..f.nrows()).map(move |i| (j, i))) {
                    let mut row = lead.clone();
                    row.extend([i.to_string(), j.to_string(), format!("{:e}", f[(i, j)].re), format!("{:e}", f[(i, j)].im)]);
                    if let Some(r) = &r {
                        let rel = (f[(i, j)] - r[(i, j)]).norm() / if scale > 0.0 { scale } else { 1.0 };
                        row.extend([format!("{:e}", r[(i, j)].re), format!("{:e}", r[(i, j)].im), format!("{rel:e}")]);
                    }
                    row.push(String::new());
                    wtr.write_record(&row)?;
                }
            }
            Err(e) if e.is_numerical() => {
                failures += 1;
                log::warn!("point {k}: {e}");
                let mut row = lead;
                row.extend(std::iter::repeat_n(String::new(), blank));
                row.push(e.to_string());
                wtr.write_record(&row)?;
            }
            Err(e) => return Err(e),
        }
    }
    wtr.flush()?;
    Ok(failures)
}

/// Error metrics of one FOM/ROM pair at one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub p: Vec<f64>,
    pub l2: f64,
    pub linf: f64,
    pub y_l2: f64,
    pub y_linf: f64,
}

/// Simulates both models at every parameter. Returns the metric rows and
/// the `E(t, p)` sweep table normalized by `max_{t,p} ‖y‖`.
pub fn compare(fom: &System, rom: &System, u: &Signal, grid: &TimeGrid, params: &[Vec<f64>]) -> Result<(Vec<CompareRow>, SweepResult)> {
    let f = u.evaluator()?;
    let mut rows = Vec::new();
    let mut pointwise = Vec::new();
    let mut y_max: f64 = 0.0;
    for p in params {
        let y = simulate(fom, p, &f, grid, SimOptions::default())?;
        let yr = simulate(rom, p, &f, grid, SimOptions::default())?;
        let m = error_metrics(&y, &yr)?;
        y_max = y_max.max(y.linf_norm());
        rows.push(CompareRow { p: p.clone(), l2: m.l2, linf: m.linf, y_l2: y.l2_norm(), y_linf: y.linf_norm() });
        pointwise.push(m.pointwise);
    }
    let scale = if y_max > 0.0 { 1.0 / y_max } else { 1.0 };
    let table: Vec<std::result::Result<Vec<f64>, String>> = pointwise.into_iter().map(|d| Ok(d.into_iter().map(|e| e * scale).collect())).collect();
    let e_max = table.iter().flatten().flat_map(|r| r.iter().copied()).fold(0.0, f64::max);
    let times = (0..=grid.steps()).map(|k| grid.time(k)).collect();
    Ok((rows, SweepResult { params: params.to_vec(), times, table, e_max, y_max }))
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let q = rows.first().map_or(0, |r| r.p.len());
    let mut header: Vec<String> = (1..=q).map(|j| format!("p{j}")).collect();
    header.extend(["l2", "linf", "rel_l2", "rel_linf"].map(String::from));
    wtr.write_record(&header)?;
    let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    for r in rows {
        let mut rec: Vec<String> = r.p.iter().map(|v| format!("{v:?}")).collect();
        rec.extend([r.l2, r.linf, rel(r.l2, r.y_l2), rel(r.linf, r.y_linf)].map(|v| format!("{v:e}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trajectory(tr: &Trajectory, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => tr.write_csv(fs::File::create(path)?),
        None => tr.write_csv(std::io::stdout().lock()),
    }
}

/// Where an experiment takes its full model from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Bench {
        bench: BenchName,
        size: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_rank")]
        rank: usize,
    },
    Dir {
        dir: PathBuf,
    },
}

fn default_rank() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub inputs: Vec<Signal>,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub params: Vec<Vec<f64>>,
}

/// A checked-in experiment: system, plan, orders and optional
/// time-domain comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub system: SystemSource,
    pub plan: PlanSpec,
    #[serde(default)]
    pub orders: Vec<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub simulate: Option<SimulationSpec>,
    pub out: PathBuf,
}

impl Experiment {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs an experiment. `out` (relative paths resolve against `base`)
/// receives `singular_values.csv`, one ROM bundle per order under `r{r}/`
/// and `metrics.csv` when a simulation is requested. Returns the number
/// of failed simulations.
pub fn run_experiment(exp: &Experiment, base: &Path) -> Result<usize> {
    let out = if exp.out.is_absolute() { exp.out.clone() } else { base.join(&exp.out) };
    fs::create_dir_all(&out)?;
    let sys = match &exp.system {
        SystemSource::Bench { bench, size, seed, rank } => bench_system(*bench, *size, *seed, *rank)?.0,
        SystemSource::Dir { dir } => bundle::read_system(&if dir.is_absolute() { dir.clone() } else { base.join(dir) })?,
    };
    let sys = if sys.poly.iter().all(|h| h.symmetric()) && sys.bilin.iter().all(|b| b.symmetric()) { sys } else { sys.symmetrized()? };
    let plan = exp.plan.build(sys.m(), sys.p_out())?;
    fs::write(out.join("plan.json"), plan.to_json()?)?;
    log::info!("{}: n = {}, {} plan entries", exp.name, sys.n(), plan.entries.len());
    let bundle_ = build_vw(&sys, &plan)?;
    let tol = exp.tol.unwrap_or(drop::DEFAULT_RANK_TOL);
    let specs: Vec<OrderSpec> = if exp.orders.is_empty() { vec![OrderSpec::Tol(tol)] } else { exp.orders.iter().map(|&r| OrderSpec::Rank(r)).collect() };
    let mut roms = Vec::new();
    for (k, spec) in specs.into_iter().enumerate() {
        let (rom, report) = drop::reduce_with_bundle(&sys, &plan, &bundle_, spec)?;
        if k == 0 {
            report.write_csv(fs::File::create(out.join("singular_values.csv"))?)?;
        }
        let dir = out.join(format!("r{}", rom.order()));
        bundle::write_reduced(&rom, &dir)?;
        write_provenance(&rom.provenance, &dir.join("provenance.json"))?;
        roms.push(rom);
    }
    let Some(sim) = &exp.simulate else { return Ok(0) };
    let grid = TimeGrid::new(0.0, sim.t_end, sim.dt)?;
    let params = if sim.params.is_empty() { vec![vec![]] } else { sim.params.clone() };
    let mut wtr = csv::Writer::from_path(out.join("metrics.csv"))?;
    let q = params[0].len();
    let mut header: Vec<String> = vec!["order".into(), "input".into()];
    header.extend((1..=q).map(|j| format!("p{j}")));
    header.extend(["l2", "linf", "rel_l2", "rel_linf", "error"].map(String::from));
    wtr.write_record(&header)?;
    let mut failures = 0;
    for (k, u) in sim.inputs.iter().enumerate() {
        let f = u.evaluator()?;
        for p in &params {
            let y = simulate(&sys, p, &f, &grid, SimOptions::default());
            for rom in &roms {
                let mut rec = vec![rom.order().to_string(), (k + 1).to_string()];
                rec.extend(p.iter().map(|v| format!("{v:?}")));
                let res = y.as_ref().map_err(|e| MorError::Unsupported(format!("full model: {e}"))).and_then(|y| {
                    let yr = simulate(&rom.system, p, &f, &grid, SimOptions::default())?;
                    Ok((error_metrics(y, &yr)?, y.l2_norm(), y.linf_norm()))
                });
                match res {
                    Ok((m, yl2, yli)) => {
                        rec.extend([m.l2, m.linf, m.l2 / yl2, m.linf / yli].map(|v| format!("{v:e}")));
                        rec.push(String::new());
                    }
                    Err(e) => {
                        failures += 1;
                        log::warn!("order {}, input {}, p = {p:?}: {e}", rom.order(), k + 1);
                        rec.extend(std::iter::repeat_n(String::new(), 4));
                        rec.push(e.to_string());
                    }
                }
                wtr.write_record(&rec)?;
            }
        }
    }
    wtr.flush()?;
    Ok(failures)
}
