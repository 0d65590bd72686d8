use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hdg_core::mms::{
    emit_energy_csv, emit_raw_csv, emit_report, make_case, run_convergence, DtRule, ReportFormat, RunConfig, Scheme,
};
use hdg_core::space::{TauRule, TraceMode};
use hdg_core::timestep::TimeOptions;

#[derive(Parser, Debug)]
#[command(name = "hdg-burgers", version, about = "HDG convergence studies for the viscous Burgers' equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a convergence study on a manufactured solution.
    Run(RunArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchemeArg {
    Be,
    Dirk23,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LMode {
    Equal,
    Minus,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TauArg {
    /// 1 / shortest edge (the grid step on uniform meshes).
    MinEdge,
    /// 1 / element diameter.
    Diameter,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OutFormat {
    Csv,
    Md,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Manufactured example (1, 2 or 3).
    #[arg(long)]
    example: usize,
    #[arg(long)]
    nu: f64,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Scalar polynomial degree.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=4))]
    k: u64,
    /// Trace degree: `equal` (l = k) or `minus` (l = k - 1).
    #[arg(long = "l-mode", value_enum)]
    l_mode: LMode,
    /// Comma-separated mesh divisions per direction.
    #[arg(long, value_delimiter = ',', required = true)]
    meshes: Vec<usize>,
    /// paper-k1 | paper-k2 | fixed:<dt> | ladder:<dt,dt,...>
    #[arg(long = "dt-rule", value_parser = parse_dt_rule)]
    dt_rule: DtRule,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=3))]
    dim: u64,
    #[arg(long, value_enum, default_value = "csv")]
    out: OutFormat,
    /// Output path; the table goes to stdout when omitted.
    #[arg(long = "out-file")]
    out_file: Option<PathBuf>,
    #[arg(long = "oseen-tol", default_value_t = 1e-10)]
    oseen_tol: f64,
    #[arg(long = "oseen-max", default_value_t = 50)]
    oseen_max: usize,
    /// Length scale in the stabilization tau = 1 / h_K.
    #[arg(long, value_enum, default_value = "min-edge")]
    tau: TauArg,
    /// Write per-step ||u_h^n|| to a sidecar CSV.
    #[arg(long = "monitor-energy")]
    monitor_energy: bool,
}

fn parse_dt_rule(s: &str) -> Result<DtRule, String> {
    let positive = |v: &str| -> Result<f64, String> {
        let x: f64 = v.trim().parse().map_err(|_| format!("invalid time step `{v}`"))?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(format!("time step must be positive, got `{v}`"))
        }
    };
    match s {
        "paper-k1" => Ok(DtRule::StepsMeshSquared),
        "paper-k2" => Ok(DtRule::StepsMeshCubed),
        _ => {
            if let Some(v) = s.strip_prefix("fixed:") {
                Ok(DtRule::Fixed(positive(v)?))
            } else if let Some(v) = s.strip_prefix("ladder:") {
                let dts = v.split(',').map(positive).collect::<Result<Vec<_>, _>>()?;
                if dts.is_empty() {
                    return Err("ladder needs at least one step".into());
                }
                Ok(DtRule::Ladder(dts))
            } else {
                Err(format!("unknown dt rule `{s}`"))
            }
        }
    }
}

fn sidecar(base: &Option<PathBuf>, suffix: &str, fallback: &str) -> PathBuf {
    match base {
        Some(p) => {
            let mut s = p.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        }
        None => PathBuf::from(fallback),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HDG_THREADS") {
        let n: usize = v.parse().with_context(|| format!("HDG_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("HDG_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let case = make_case::<f64>(args.example, args.nu)?;
    if case.dim() as u64 != args.dim {
        bail!("example {} is {}-dimensional, but --dim {} was given", args.example, case.dim(), args.dim);
    }
    let cfg = RunConfig {
        scheme: match args.scheme {
            SchemeArg::Be => Scheme::BackwardEuler,
            SchemeArg::Dirk23 => Scheme::Dirk23,
        },
        k: args.k as usize,
        mode: match args.l_mode {
            LMode::Equal => TraceMode::Equal,
            LMode::Minus => TraceMode::Minus,
        },
        meshes: args.meshes.clone(),
        dt_rule: args.dt_rule.clone(),
        tau_rule: match args.tau {
            TauArg::MinEdge => TauRule::MinEdge,
            TauArg::Diameter => TauRule::Diameter,
        },
        options: TimeOptions {
            oseen_tol: args.oseen_tol,
            oseen_max: args.oseen_max.max(1),
            monitor: args.monitor_energy,
            ..TimeOptions::default()
        },
    };
    let report = run_convergence(&case, &cfg)?;
    for row in &report.rows {
        for w in &row.warnings {
            eprintln!("warning: mesh {}: {w}", row.mesh);
        }
    }
    let format = match args.out {
        OutFormat::Csv => ReportFormat::Csv,
        OutFormat::Md => ReportFormat::Markdown,
    };
    let table = emit_report(&report, format);
    match &args.out_file {
        Some(path) => {
            std::fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
            let raw = sidecar(&args.out_file, ".raw.csv", "");
            std::fs::write(&raw, emit_raw_csv(&report)).with_context(|| format!("writing {}", raw.display()))?;
        }
        None => print!("{table}"),
    }
    if args.monitor_energy {
        let path = sidecar(&args.out_file, ".energy.csv", "energy.csv");
        std::fs::write(&path, emit_energy_csv(&report)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Run(args) => run(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
