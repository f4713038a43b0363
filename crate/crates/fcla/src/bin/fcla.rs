//! Batch CLI for the cylindrical-array secure-beamforming experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fcla::harness::{
    apply_kv_to_spec, audit_solution_file, parse_grid, run_experiment, ExperimentKind,
    ExperimentSpec, Scheme,
};
use fcla::kv::KvDoc;
use fcla::metrics::Audit;
use fcla::ExecMode;

#[derive(Parser)]
#[command(
    name = "fcla",
    about = "Secure MU-MISO sum-rate experiments with a flexible cylindrical array",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-iteration convergence traces over an antenna-count grid.
    Convergence(RunArgs),
    /// Mean sum rate versus transmit power (dBW grid).
    SweepPower(RunArgs),
    /// Mean sum rate versus movable region size (z_D/lambda grid).
    SweepRegion(RunArgs),
    /// Re-audits a solution file and reports every constraint residual.
    Audit {
        /// Solution file in the flat key-value format.
        solution: PathBuf,
    },
    /// Runs the built-in invariant suite on fixed seeds.
    Selftest {
        /// Comma-separated seeds.
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep grid: `lo:step:hi` or a comma list.
    #[arg(long)]
    grid: Option<String>,
    /// Monte Carlo trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial t uses base_seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Main CSV path; the aggregate, trace, and metadata files are siblings.
    #[arg(long, default_value = "fcla_out.csv")]
    out: PathBuf,
    /// Comma list of schemes: fpa, fcla_phi, fcla_phi_z.
    #[arg(long)]
    schemes: Option<String>,
    /// Rings.
    #[arg(long)]
    m: Option<usize>,
    /// Antennas per ring.
    #[arg(long)]
    n: Option<usize>,
    /// Legitimate receivers.
    #[arg(long)]
    k: Option<usize>,
    /// Paths per link.
    #[arg(long)]
    paths: Option<usize>,
    /// Transmit power budget in dBW.
    #[arg(long)]
    power_dbw: Option<f64>,
    /// Eve's SINR cap in dB.
    #[arg(long)]
    gamma_db: Option<f64>,
    /// Noise power in dBm (users and Eve).
    #[arg(long)]
    noise_dbm: Option<f64>,
    /// Vertical region height in meters.
    #[arg(long)]
    region: Option<f64>,
    /// Outer BCD iteration cap.
    #[arg(long)]
    max_outer: Option<usize>,
    /// Relative sum-rate stall tolerance.
    #[arg(long)]
    stall_tol: Option<f64>,
    /// Run trials sequentially even when the parallel feature is on.
    #[arg(long)]
    sequential: bool,
    /// Convergence runs: dump the first trial's solution file here.
    #[arg(long)]
    dump_solution: Option<PathBuf>,
}

fn build_spec(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentSpec, String> {
    let mut spec = ExperimentSpec::new(kind, args.out.clone());
    if let Some(path) = &args.config {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let doc = KvDoc::parse(&text).map_err(|e| e.to_string())?;
        apply_kv_to_spec(&mut spec, &doc).map_err(|e| e.to_string())?;
        spec.kind = kind; // the subcommand wins over the file
    }
    spec.out_path = args.out.clone();
    if let Some(grid) = &args.grid {
        spec.grid = parse_grid(grid).map_err(|e| e.to_string())?;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.base_seed = s;
    }
    if let Some(schemes) = &args.schemes {
        spec.schemes = schemes
            .split(',')
            .map(|s| Scheme::from_name(s.trim()).ok_or_else(|| format!("unknown scheme '{s}'")))
            .collect::<Result<_, _>>()?;
    }
    if let Some(m) = args.m {
        spec.params.config.m = m;
    }
    if let Some(n) = args.n {
        spec.params.config.n = n;
    }
    if let Some(k) = args.k {
        spec.params.k = k;
    }
    if let Some(l) = args.paths {
        spec.params.paths_per_link = l;
    }
    if let Some(p) = args.power_dbw {
        spec.params.power = 10f64.powf(p / 10.0);
    }
    if let Some(g) = args.gamma_db {
        spec.params.gamma_th_e = (1.0 + 10f64.powf(g / 10.0)).log2();
    }
    if let Some(nn) = args.noise_dbm {
        let watts = 10f64.powf(nn / 10.0) * 1e-3;
        spec.params.sigma2_ir = watts;
        spec.params.sigma2_eve = watts;
    }
    if let Some(a) = args.region {
        spec.params.config.a = a;
    }
    if let Some(it) = args.max_outer {
        spec.bcd.max_outer_iters = it;
    }
    if let Some(st) = args.stall_tol {
        spec.bcd.stall_tol = st;
    }
    spec.mode = if args.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    spec.dump_solution = args.dump_solution.clone();
    Ok(spec)
}

fn run(kind: ExperimentKind, args: &RunArgs) -> ExitCode {
    let spec = match build_spec(kind, args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&spec) {
        Ok(out) => {
            println!(
                "wrote {} rows to {} (aggregates: {})",
                out.rows.len(),
                out.csv_path.display(),
                out.aggregate_path.display()
            );
            if let Some(trace) = &out.trace_path {
                println!("iteration traces: {}", trace.display());
            }
            if out.n_failures > 0 {
                eprintln!("{} trial(s) failed; see the status column", out.n_failures);
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_audit(a: &Audit) {
    println!("sum_rate_bits     = {}", a.sum_rate_bits);
    println!("eve_rate_bits     = {}", a.eve_rate_bits);
    println!("power_used        = {}", a.power_used);
    println!("secrecy_residual  = {}", a.secrecy_residual);
    println!("power_residual    = {}", a.power_residual);
    println!("re_min_eig        = {}", a.re_min_eig);
    println!("placement_slack   = {}", a.placement.worst_slack());
    for v in &a.placement.violations {
        println!(
            "violated {:?} at ring {} element {:?}: slack {}",
            v.kind, v.ring, v.element, v.slack
        );
    }
    println!("csv: {}", Audit::csv_header());
    println!("csv: {}", a.to_csv_row(fcla::harness::fmt_sig));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Convergence(args) => run(ExperimentKind::Convergence, args),
        Cmd::SweepPower(args) => run(ExperimentKind::PowerSweep, args),
        Cmd::SweepRegion(args) => run(ExperimentKind::RegionSweep, args),
        Cmd::Audit { solution } => match audit_solution_file(solution) {
            Ok((a, ok)) => {
                print_audit(&a);
                if ok {
                    println!("verdict: feasible");
                    ExitCode::SUCCESS
                } else {
                    println!(
                        "verdict: INFEASIBLE (worst residual {})",
                        a.worst_residual()
                    );
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Cmd::Selftest { seeds } => {
            let parsed: Result<Vec<u64>, _> =
                seeds.split(',').map(|s| s.trim().parse::<u64>()).collect();
            match parsed {
                Ok(seeds) if !seeds.is_empty() => {
                    if fcla::harness::selftest(&seeds) {
                        println!("selftest: all checks passed");
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("selftest: failures reported above");
                        ExitCode::from(1)
                    }
                }
                _ => {
                    eprintln!("error: bad --seeds list");
                    ExitCode::from(2)
                }
            }
        }
    }
}
