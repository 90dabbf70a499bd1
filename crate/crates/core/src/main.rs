use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use strmor::basis::InterpPlan;
use strmor::cli::{self, BenchName, PlanSpec};
use strmor::signal::Signal;
use strmor::simulate::{simulate, SimOptions, TimeGrid};
use strmor::{bundle, Family, Result};

#[derive(Parser)]
#[command(name = "strmor", version, about = "Interpolatory model reduction for structured polynomial systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Benchmark generators.
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
    /// Interpolation plans.
    Plan {
        #[command(subcommand)]
        cmd: PlanCmd,
    },
    /// Reduced models.
    Rom {
        #[command(subcommand)]
        cmd: RomCmd,
    },
    /// Transfer functions.
    Tf {
        #[command(subcommand)]
        cmd: TfCmd,
    },
    /// Simulate a model and write the output trajectory.
    Sim {
        model: PathBuf,
        #[arg(long)]
        input: Signal,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value = "0")]
        t0: f64,
        #[arg(long, default_value = "")]
        p: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-domain error of a reduced model against the full model.
    Compare {
        fom: PathBuf,
        rom: PathBuf,
        #[arg(long)]
        input: Signal,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: f64,
        /// Parameter vector; repeat for a sweep.
        #[arg(long)]
        p: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the normalized pointwise error table here.
        #[arg(long)]
        sweep_out: Option<PathBuf>,
    },
    /// Run an experiment manifest.
    Experiment { manifest: PathBuf },
}

#[derive(Subcommand)]
enum BenchCmd {
    Gen {
        #[arg(long, value_enum)]
        name: BenchName,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hidden order of the planted model.
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PlanCmd {
    Gen {
        /// `log:a:b:N` or `lin:a:b:N`.
        #[arg(long)]
        freq: String,
        /// Put points on the real axis instead of at iω.
        #[arg(long)]
        real: bool,
        #[arg(long, conflicts_with_all = ["p_random", "p_fixed"])]
        p: Option<String>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], conflicts_with = "p_fixed")]
        p_random: Option<Vec<f64>>,
        #[arg(long)]
        p_fixed: Option<String>,
        #[arg(long, value_delimiter = ',')]
        families: Option<Vec<Family>>,
        #[arg(long)]
        galerkin: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take input and output counts from this system.
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        inputs: usize,
        #[arg(long, default_value_t = 1)]
        outputs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RomCmd {
    Build {
        system: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Force a one-sided projection regardless of the plan.
        #[arg(long)]
        galerkin: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TfCmd {
    Eval {
        model: PathBuf,
        #[arg(long)]
        family: Family,
        /// Complex frequency such as `0+2i`; repeat once per argument.
        #[arg(long, allow_hyphen_values = true)]
        s: Vec<String>,
        /// Evaluate on the diagonal `s_k = iω` of this grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value = "")]
        p: String,
        /// Reduced model to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn writer(out: Option<&Path>) -> Result<Box<dyn std::io::Write>> {
    Ok(match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Ok(false) flags a run that completed with numerical failures.
fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Bench { cmd: BenchCmd::Gen { name, size, seed, rank, out } } => {
            cli::bench_gen(name, size, seed, rank, &out)?;
        }
        Cmd::Plan { cmd: PlanCmd::Gen { freq, real, p, p_random, p_fixed, families, galerkin, seed, system, inputs, outputs, out } } => {
            let spec = PlanSpec {
                freq,
                imag: !real,
                p,
                p_random: p_random.map(|v| [v[0], v[1]]),
                p_fixed: p_fixed.as_deref().map(cli::parse_params).transpose()?,
                families,
                galerkin,
                seed,
            };
            let (m, q) = match system {
                Some(dir) => {
                    let sys = bundle::read_any(&dir)?;
                    (sys.m(), sys.p_out())
                }
                None => (inputs, outputs),
            };
            let json = spec.build(m, q)?.to_json()?;
            let mut w = writer(out.as_deref())?;
            writeln!(w, "{json}")?;
        }
        Cmd::Rom { cmd: RomCmd::Build { system, plan, order, tol, galerkin, out } } => {
            let mut plan = InterpPlan::from_json(&std::fs::read_to_string(&plan)?)?;
            plan.galerkin |= galerkin;
            let rom = cli::rom_build(&system, &plan, cli::order_spec(order, tol)?, &out)?;
            log::info!("reduced order {}", rom.order());
        }
        Cmd::Tf { cmd: TfCmd::Eval { model, family, s, grid, p, compare, out } } => {
            let sys = bundle::read_any(&model)?;
            let rom = compare.as_deref().map(bundle::read_any).transpose()?;
            let s = s.iter().map(|t| cli::parse_complex(t)).collect::<Result<Vec<_>>>()?;
            let points = cli::tf_points(family, &s, grid.as_deref())?;
            let failed = cli::tf_eval(&sys, rom.as_ref(), family, &points, &cli::parse_params(&p)?, writer(out.as_deref())?)?;
            return Ok(failed == 0);
        }
        Cmd::Sim { model, input, t_end, dt, t0, p, out } => {
            let sys = bundle::read_any(&model)?;
            let grid = TimeGrid::new(t0, t_end, dt)?;
            let f = input.evaluator()?;
            let tr = simulate(&sys, &cli::parse_params(&p)?, &f, &grid, SimOptions::default())?;
            cli::write_trajectory(&tr, out.as_deref())?;
        }
        Cmd::Compare { fom, rom, input, t_end, dt, p, out, sweep_out } => {
            let fom = bundle::read_any(&fom)?;
            let rom = bundle::read_any(&rom)?;
            let grid = TimeGrid::new(0.0, t_end, dt)?;
            let params = if p.is_empty() { vec![vec![]] } else { p.iter().map(|t| cli::parse_params(t)).collect::<Result<Vec<_>>>()? };
            let (rows, sweep) = cli::compare(&fom, &rom, &input, &grid, &params)?;
            cli::write_compare_csv(&rows, writer(out.as_deref())?)?;
            if let Some(path) = sweep_out {
                sweep.write_csv(std::fs::File::create(path)?)?;
            }
            log::info!("max normalized pointwise error {:e}", sweep.e_max);
        }
        Cmd::Experiment { manifest } => {
            let exp = cli::Experiment::from_file(&manifest)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            return Ok(cli::run_experiment(&exp, base)? == 0);
        }
    }
    Ok(true)
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(text) = std::env::var("STRMOR_THREADS") else { return Ok(()) };
    let n: usize = text.parse().map_err(|_| format!("STRMOR_THREADS=`{text}` is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 1 } else { 2 })
        }
    }
}
