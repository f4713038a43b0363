//! Experiment driver: baseline schemes, Monte Carlo averaging, parameter
//! sweeps, CSV emission, and solution-file audits.
//!
//! Output contract per experiment run:
//! * `<out>`: one row per (grid point, trial, scheme) in that order, schema
//!   `experiment,scheme,grid_value,trial,seed,iters,sum_rate_bits,
//!   eve_rate_bits,power_used,status`;
//! * `<out stem>.agg.csv`: per (scheme, grid point) aggregate
//!   `experiment,scheme,grid_value,mean,stderr,n_ok`;
//! * `<out stem>.trace.csv` (convergence runs): per-iteration rows
//!   `experiment,scheme,grid_value,trial,iteration,sum_rate_bits,i_a_bits,
//!   i_b_bits,eve_rate_bits,power_used`;
//! * `<out stem>.meta.txt`: flat key-value sidecar recording the spec,
//!   defaults, and assumption log.
//!
//! Floats are printed with 12 significant digits, making reruns of the same
//! spec byte-identical regardless of the execution mode.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

use crate::bcd::{self, BcdError, BcdOptions};
use crate::channel::CMat;
use crate::kv::{KvDoc, KvError};
use crate::metrics::{audit, Audit, BeamSolution};
use crate::scenario::{
    initial_placement, sample_scenario, validate_placement, ArrayConfig, Placement,
    SamplingParams, Scenario, ScenarioError, TWO_PI,
};
use crate::{run_indexed, ExecMode};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Bcd(#[from] BcdError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    PowerSweep,
    RegionSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::PowerSweep => "power_sweep",
            ExperimentKind::RegionSweep => "region_sweep",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "convergence" => Some(ExperimentKind::Convergence),
            "power_sweep" => Some(ExperimentKind::PowerSweep),
            "region_sweep" => Some(ExperimentKind::RegionSweep),
            _ => None,
        }
    }
}

/// Antenna-flexibility schemes compared by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Fixed-position cylindrical layout with half-wavelength ring spacing.
    Fpa,
    /// Ring angles optimized, heights fixed at the uniform spread.
    FclaPhi,
    /// Joint angle and height optimization.
    FclaPhiZ,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fpa => "fpa",
            Scheme::FclaPhi => "fcla_phi",
            Scheme::FclaPhiZ => "fcla_phi_z",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "fpa" => Some(Scheme::Fpa),
            "fcla_phi" => Some(Scheme::FclaPhi),
            "fcla_phi_z" => Some(Scheme::FclaPhiZ),
            _ => None,
        }
    }

    pub fn all() -> [Scheme; 3] {
        [Scheme::Fpa, Scheme::FclaPhi, Scheme::FclaPhiZ]
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub schemes: Vec<Scheme>,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub params: SamplingParams,
    pub bcd: BcdOptions,
    pub out_path: PathBuf,
    pub mode: ExecMode,
    /// Convergence runs: dump the first trial's solution here.
    pub dump_solution: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, out_path: PathBuf) -> Self {
        let grid = match kind {
            ExperimentKind::Convergence => vec![6.0, 8.0, 12.0],
            ExperimentKind::PowerSweep => {
                let mut g = Vec::new();
                let mut v = -10.0;
                while v <= 14.0 + 1e-9 {
                    g.push(v);
                    v += 2.0;
                }
                g
            }
            ExperimentKind::RegionSweep => (1..=8).map(|v| v as f64).collect(),
        };
        ExperimentSpec {
            kind,
            schemes: match kind {
                ExperimentKind::Convergence => vec![Scheme::FclaPhiZ],
                _ => Scheme::all().to_vec(),
            },
            grid,
            trials: 50,
            base_seed: 1,
            params: SamplingParams::default(),
            bcd: BcdOptions::default(),
            out_path,
            mode: ExecMode::Parallel,
            dump_solution: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schemes.is_empty() {
            return Err(HarnessError::Spec("empty scheme list".into()));
        }
        if self.grid.is_empty() {
            return Err(HarnessError::Spec("empty sweep grid".into()));
        }
        if self.trials < 1 {
            return Err(HarnessError::Spec("trial count must be >= 1".into()));
        }
        self.params.validate()?;
        if self.kind == ExperimentKind::Convergence {
            for &v in &self.grid {
                let nt = v as usize;
                if v.fract() != 0.0 || nt == 0 || !nt.is_multiple_of(self.params.config.n) {
                    return Err(HarnessError::Spec(format!(
                        "convergence grid value {v} is not a multiple of N = {}",
                        self.params.config.n
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fixed-position baseline layout: uniform ring angles `2 pi j / N` and
/// exact half-wavelength ring spacing, vertically centered in `[0, A]`.
pub fn fpa_layout(config: &ArrayConfig) -> Result<Placement, ScenarioError> {
    config.validate()?;
    let (m, n) = (config.m, config.n);
    let span = (m as f64 - 1.0) * config.lambda / 2.0;
    if span > config.a + 1e-12 {
        return Err(ScenarioError::InvalidConfig(format!(
            "half-wavelength stack of {m} rings needs {span} m, region is {} m",
            config.a
        )));
    }
    let phi: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|j| TWO_PI * j as f64 / n as f64).collect())
        .collect();
    let z: Vec<f64> = (0..m)
        .map(|j| config.a / 2.0 - span / 2.0 + j as f64 * config.lambda / 2.0)
        .collect();
    let p = Placement::new(phi, z)?;
    let report = validate_placement(config, &p)?;
    if !report.is_feasible() {
        return Err(ScenarioError::InvalidConfig(format!(
            "fixed layout violates spacing (worst slack {})",
            report.worst_slack()
        )));
    }
    Ok(p)
}

/// 12-significant-digit float formatting shared by all CSV writers.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.11e}")
    }
}

#[derive(Clone, Debug)]
pub struct TrialRow {
    pub grid_value: f64,
    pub trial: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub iters: usize,
    pub sum_rate_bits: f64,
    pub eve_rate_bits: f64,
    pub power_used: f64,
    pub status: String,
    pub trace: Vec<bcd::TraceRow>,
}

/// Applies one grid value to the sampling parameters for a scheme.
fn grid_params(
    spec: &ExperimentSpec,
    grid_value: f64,
    scheme: Scheme,
) -> Result<SamplingParams, HarnessError> {
    let mut params = spec.params.clone();
    match spec.kind {
        ExperimentKind::Convergence => {
            let nt = grid_value as usize;
            params.config.m = nt / params.config.n;
            params.config.validate()?;
        }
        ExperimentKind::PowerSweep => {
            params.power = 10f64.powf(grid_value / 10.0);
        }
        ExperimentKind::RegionSweep => {
            // the movable region scales with the grid; the fixed-position
            // baseline keeps its base-config layout so it cannot exploit it
            if scheme != Scheme::Fpa {
                params.config.a = grid_value * params.config.lambda;
                params.config.validate()?;
            }
        }
    }
    Ok(params)
}

fn scheme_options(base: &BcdOptions, scheme: Scheme) -> BcdOptions {
    let mut opts = *base;
    match scheme {
        Scheme::Fpa => {
            opts.optimize_angles = false;
            opts.optimize_heights = false;
        }
        Scheme::FclaPhi => {
            opts.optimize_angles = true;
            opts.optimize_heights = false;
        }
        Scheme::FclaPhiZ => {
            opts.optimize_angles = true;
            opts.optimize_heights = true;
        }
    }
    opts
}

/// Runs one (grid value, trial, scheme) cell. Deterministic in its inputs.
pub fn run_single_trial(
    spec: &ExperimentSpec,
    grid_value: f64,
    trial: usize,
    scheme: Scheme,
) -> TrialRow {
    let seed = spec.base_seed.wrapping_add(trial as u64);
    let fail = |msg: String| TrialRow {
        grid_value,
        trial,
        scheme,
        seed,
        iters: 0,
        sum_rate_bits: f64::NAN,
        eve_rate_bits: f64::NAN,
        power_used: f64::NAN,
        status: msg,
        trace: Vec::new(),
    };
    let params = match grid_params(spec, grid_value, scheme) {
        Ok(p) => p,
        Err(e) => return fail(format!("params: {e}").replace(',', ";")),
    };
    let scenario = match sample_scenario(seed, &params) {
        Ok(s) => s,
        Err(e) => return fail(format!("sample: {e}").replace(',', ";")),
    };
    let placement = match scheme {
        Scheme::Fpa => fpa_layout(&scenario.config),
        _ => initial_placement(&scenario.config),
    };
    let placement = match placement {
        Ok(p) => p,
        Err(e) => return fail(format!("layout: {e}").replace(',', ";")),
    };
    let opts = scheme_options(&spec.bcd, scheme);
    match bcd::run(&scenario, &placement, &opts) {
        Ok((sol, final_placement, trace)) => {
            let a = match audit(&scenario, &final_placement, &sol) {
                Ok(a) => a,
                Err(e) => return fail(format!("audit: {e}").replace(',', ";")),
            };
            let status = if a.is_feasible(1e-6) {
                "ok".to_string()
            } else {
                format!("infeasible({:.3e})", a.worst_residual())
            };
            TrialRow {
                grid_value,
                trial,
                scheme,
                seed,
                iters: trace.rows.len(),
                sum_rate_bits: a.sum_rate_bits,
                eve_rate_bits: a.eve_rate_bits,
                power_used: a.power_used,
                status,
                trace: trace.rows,
            }
        }
        Err(e) => fail(format!("bcd: {e}").replace(',', ";")),
    }
}

#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub scheme: Scheme,
    pub grid_value: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_ok: usize,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    pub n_failures: usize,
    pub csv_path: PathBuf,
    pub aggregate_path: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub meta_path: PathBuf,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Runs the full grid x trials x schemes matrix, writes every artifact, and
/// returns the in-memory rows. Trials execute in parallel under the default
/// feature; output order is fixed to (grid, trial, scheme) regardless.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let mut cells: Vec<(f64, usize, Scheme)> =
        Vec::with_capacity(spec.grid.len() * spec.trials * spec.schemes.len());
    for &g in &spec.grid {
        for t in 0..spec.trials {
            for &s in &spec.schemes {
                cells.push((g, t, s));
            }
        }
    }
    let rows: Vec<TrialRow> = run_indexed(cells.len(), spec.mode, |i| {
        let (g, t, s) = cells[i];
        run_single_trial(spec, g, t, s)
    });

    // aggregates over ok trials, in (scheme, grid) order
    let mut aggregates = Vec::new();
    for &s in &spec.schemes {
        for &g in &spec.grid {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.scheme == s && r.grid_value == g && r.status == "ok")
                .map(|r| r.sum_rate_bits)
                .collect();
            let n = vals.len();
            let mean = if n > 0 {
                vals.iter().sum::<f64>() / n as f64
            } else {
                f64::NAN
            };
            let stderr = if n > 1 {
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
                (var / n as f64).sqrt()
            } else {
                f64::NAN
            };
            aggregates.push(AggregateRow {
                scheme: s,
                grid_value: g,
                mean,
                stderr,
                n_ok: n,
            });
        }
    }

    // main CSV
    let mut csv = String::from(
        "experiment,scheme,grid_value,trial,seed,iters,sum_rate_bits,eve_rate_bits,power_used,status\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            spec.kind.name(),
            r.scheme,
            fmt_sig(r.grid_value),
            r.trial,
            r.seed,
            r.iters,
            fmt_sig(r.sum_rate_bits),
            fmt_sig(r.eve_rate_bits),
            fmt_sig(r.power_used),
            r.status
        ));
    }
    std::fs::write(&spec.out_path, csv)?;

    let aggregate_path = sibling(&spec.out_path, ".agg.csv");
    let mut agg = String::from("experiment,scheme,grid_value,mean,stderr,n_ok\n");
    for a in &aggregates {
        agg.push_str(&format!(
            "{},{},{},{},{},{}\n",
            spec.kind.name(),
            a.scheme,
            fmt_sig(a.grid_value),
            fmt_sig(a.mean),
            fmt_sig(a.stderr),
            a.n_ok
        ));
    }
    std::fs::write(&aggregate_path, agg)?;

    // per-iteration traces for convergence runs
    let trace_path = if spec.kind == ExperimentKind::Convergence {
        let path = sibling(&spec.out_path, ".trace.csv");
        let mut t = String::from(
            "experiment,scheme,grid_value,trial,iteration,sum_rate_bits,i_a_bits,i_b_bits,eve_rate_bits,power_used\n",
        );
        for r in &rows {
            for row in &r.trace {
                t.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    spec.kind.name(),
                    r.scheme,
                    fmt_sig(r.grid_value),
                    r.trial,
                    row.iter,
                    fmt_sig(row.sum_rate_bits),
                    fmt_sig(row.i_a_bits),
                    fmt_sig(row.i_b_bits),
                    fmt_sig(row.eve_rate_bits),
                    fmt_sig(row.power_used),
                ));
            }
        }
        std::fs::write(&path, t)?;
        Some(path)
    } else {
        None
    };

    // metadata sidecar
    let meta_path = sibling(&spec.out_path, ".meta.txt");
    let mut meta = spec_to_kv(spec);
    meta.set_str(
        "assumption.fpa_layout",
        "uniform cylindrical layout; ring spacing lambda/2; centered in [0, A]",
    );
    meta.set_str(
        "assumption.region_sweep_fpa",
        "fixed-position baseline keeps the base-config region; the sweep only grows the movable region",
    );
    meta.set_str(
        "assumption.fcla_phi_heights",
        "height-fixed scheme pins heights at the uniform spread over [0, A]",
    );
    std::fs::write(&meta_path, meta.to_text())?;

    // optional solution dump from the first cell
    if let Some(dump) = &spec.dump_solution {
        if let Some((g, t, s)) = cells.first().copied() {
            let params = grid_params(spec, g, s)?;
            let scenario = sample_scenario(spec.base_seed.wrapping_add(t as u64), &params)?;
            let placement = match s {
                Scheme::Fpa => fpa_layout(&scenario.config)?,
                _ => initial_placement(&scenario.config)?,
            };
            let (sol, final_placement, _) =
                bcd::run(&scenario, &placement, &scheme_options(&spec.bcd, s))?;
            write_solution_file(dump, &scenario, &final_placement, &sol)?;
        }
    }

    let n_failures = rows.iter().filter(|r| r.status != "ok").count();
    Ok(ExperimentOutput {
        rows,
        aggregates,
        n_failures,
        csv_path: spec.out_path.clone(),
        aggregate_path,
        trace_path,
        meta_path,
    })
}

/// Serializes the run parameters (not results) for the metadata sidecar and
/// `--config` files.
pub fn spec_to_kv(spec: &ExperimentSpec) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.set_str("experiment", spec.kind.name());
    doc.set_str(
        "schemes",
        &spec
            .schemes
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(","),
    );
    doc.set_f64_slice("grid", &spec.grid);
    doc.set_usize("trials", spec.trials);
    doc.set_u64("base_seed", spec.base_seed);
    doc.set_str("out", &spec.out_path.to_string_lossy());
    let p = &spec.params;
    doc.set_usize("config.m", p.config.m);
    doc.set_usize("config.n", p.config.n);
    doc.set_f64("config.rho", p.config.rho);
    doc.set_f64("config.lambda", p.config.lambda);
    doc.set_f64("config.phi_th", p.config.phi_th);
    doc.set_f64("config.z_th", p.config.z_th);
    doc.set_f64("config.a", p.config.a);
    doc.set_usize("k", p.k);
    doc.set_usize("paths_per_link", p.paths_per_link);
    doc.set_f64("c0", p.c0);
    doc.set_f64("alpha", p.alpha);
    doc.set_f64("disk_center_x", p.disk_center.0);
    doc.set_f64("disk_center_y", p.disk_center.1);
    doc.set_f64("disk_radius", p.disk_radius);
    doc.set_f64("theta_lo", p.theta_range.0);
    doc.set_f64("theta_hi", p.theta_range.1);
    doc.set_f64("sigma2_ir", p.sigma2_ir);
    doc.set_f64("sigma2_eve", p.sigma2_eve);
    doc.set_f64("power", p.power);
    doc.set_f64("gamma_th_e", p.gamma_th_e);
    doc.set_usize("bcd.max_outer_iters", spec.bcd.max_outer_iters);
    doc.set_f64("bcd.stall_tol", spec.bcd.stall_tol);
    doc.set_f64("bcd.conic_tol", spec.bcd.conic_tol);
    doc.set_usize("pgd.max_iters", spec.bcd.pgd.max_iters);
    doc
}

/// Applies `key = value` overrides from a config file onto a spec; unknown
/// keys are rejected.
pub fn apply_kv_to_spec(spec: &mut ExperimentSpec, doc: &KvDoc) -> Result<(), HarnessError> {
    for key in doc.keys() {
        match key.as_str() {
            "experiment" => {
                spec.kind = ExperimentKind::from_name(doc.get_str(key)?)
                    .ok_or_else(|| HarnessError::Spec(format!("unknown experiment '{key}'")))?;
            }
            "schemes" => {
                spec.schemes = doc
                    .get_str(key)?
                    .split(',')
                    .map(|s| {
                        Scheme::from_name(s.trim())
                            .ok_or_else(|| HarnessError::Spec(format!("unknown scheme '{s}'")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "grid" => spec.grid = doc.get_f64_slice(key)?,
            "trials" => spec.trials = doc.get_usize(key)?,
            "base_seed" => spec.base_seed = doc.get_u64(key)?,
            "out" => spec.out_path = PathBuf::from(doc.get_str(key)?),
            "config.m" => spec.params.config.m = doc.get_usize(key)?,
            "config.n" => spec.params.config.n = doc.get_usize(key)?,
            "config.rho" => spec.params.config.rho = doc.get_f64(key)?,
            "config.lambda" => spec.params.config.lambda = doc.get_f64(key)?,
            "config.phi_th" => spec.params.config.phi_th = doc.get_f64(key)?,
            "config.z_th" => spec.params.config.z_th = doc.get_f64(key)?,
            "config.a" => spec.params.config.a = doc.get_f64(key)?,
            "k" => spec.params.k = doc.get_usize(key)?,
            "paths_per_link" => spec.params.paths_per_link = doc.get_usize(key)?,
            "c0" => spec.params.c0 = doc.get_f64(key)?,
            "alpha" => spec.params.alpha = doc.get_f64(key)?,
            "disk_center_x" => spec.params.disk_center.0 = doc.get_f64(key)?,
            "disk_center_y" => spec.params.disk_center.1 = doc.get_f64(key)?,
            "disk_radius" => spec.params.disk_radius = doc.get_f64(key)?,
            "theta_lo" => spec.params.theta_range.0 = doc.get_f64(key)?,
            "theta_hi" => spec.params.theta_range.1 = doc.get_f64(key)?,
            "sigma2_ir" => spec.params.sigma2_ir = doc.get_f64(key)?,
            "sigma2_eve" => spec.params.sigma2_eve = doc.get_f64(key)?,
            "power" => spec.params.power = doc.get_f64(key)?,
            "gamma_th_e" => spec.params.gamma_th_e = doc.get_f64(key)?,
            "bcd.max_outer_iters" => spec.bcd.max_outer_iters = doc.get_usize(key)?,
            "bcd.stall_tol" => spec.bcd.stall_tol = doc.get_f64(key)?,
            "bcd.conic_tol" => spec.bcd.conic_tol = doc.get_f64(key)?,
            "pgd.max_iters" => spec.bcd.pgd.max_iters = doc.get_usize(key)?,
            other => {
                return Err(HarnessError::Spec(format!("unknown config key '{other}'")));
            }
        }
    }
    Ok(())
}

/// Parses `lo:step:hi` or a comma-separated list into grid values.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = |msg: &str| HarnessError::Spec(format!("grid '{s}': {msg}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:step:hi"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad("bad lo"))?;
        let step: f64 = parts[1].trim().parse().map_err(|_| bad("bad step"))?;
        let hi: f64 = parts[2].trim().parse().map_err(|_| bad("bad hi"))?;
        if !(step > 0.0) || hi < lo {
            return Err(bad("need step > 0 and hi >= lo"));
        }
        let mut out = Vec::new();
        let mut v = lo;
        while v <= hi + 1e-9 * step {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("bad value")))
            .collect()
    }
}

/// Writes a full solution file: scenario, placement, beams, and AN
/// covariance in the flat key-value grammar (matrices row major).
pub fn write_solution_file(
    path: &Path,
    scenario: &Scenario,
    placement: &Placement,
    sol: &BeamSolution,
) -> Result<(), HarnessError> {
    let mut doc = scenario.to_kv();
    doc.set_f64_slice("placement.phi", &placement.flat_phi());
    doc.set_f64_slice("placement.z", placement.z_all());
    doc.set_usize("w.rows", sol.w.nrows());
    doc.set_usize("w.cols", sol.w.ncols());
    let w_row_major: Vec<Complex64> = (0..sol.w.nrows())
        .flat_map(|i| (0..sol.w.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| sol.w[(i, j)])
        .collect();
    doc.set_c64_slice("w.data", &w_row_major);
    let re_row_major: Vec<Complex64> = (0..sol.r_e.nrows())
        .flat_map(|i| (0..sol.r_e.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| sol.r_e[(i, j)])
        .collect();
    doc.set_c64_slice("re.data", &re_row_major);
    std::fs::write(path, doc.to_text())?;
    Ok(())
}

pub fn read_solution_file(
    path: &Path,
) -> Result<(Scenario, Placement, BeamSolution), HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let doc = KvDoc::parse(&text)?;
    let scenario = Scenario::from_kv(&doc)?;
    let flat_phi = doc.get_f64_slice("placement.phi")?;
    let z = doc.get_f64_slice("placement.z")?;
    let n = scenario.config.n;
    if flat_phi.len() != scenario.config.n_t() || z.len() != scenario.config.m {
        return Err(HarnessError::Spec(
            "placement arrays do not match the config".into(),
        ));
    }
    let phi: Vec<Vec<f64>> = flat_phi.chunks(n).map(|c| c.to_vec()).collect();
    let placement = Placement::new(phi, z)?;
    let rows = doc.get_usize("w.rows")?;
    let cols = doc.get_usize("w.cols")?;
    let w_data = doc.get_c64_slice("w.data")?;
    let re_data = doc.get_c64_slice("re.data")?;
    if w_data.len() != rows * cols || re_data.len() != rows * rows {
        return Err(HarnessError::Spec("matrix data length mismatch".into()));
    }
    let w = CMat::from_fn(rows, cols, |i, j| w_data[i * cols + j]);
    let r_e = CMat::from_fn(rows, rows, |i, j| re_data[i * rows + j]);
    Ok((scenario, placement, BeamSolution { w, r_e }))
}

/// Audits a solution file; the boolean is the feasibility verdict at 1e-6.
pub fn audit_solution_file(path: &Path) -> Result<(Audit, bool), HarnessError> {
    let (scenario, placement, sol) = read_solution_file(path)?;
    let a = audit(&scenario, &placement, &sol)?;
    let ok = a.is_feasible(1e-6);
    Ok((a, ok))
}

/// Quick invariant suite over fixed seeds; prints one line per check and
/// returns overall success. Exercised by the `selftest` CLI subcommand.
pub fn selftest(seeds: &[u64]) -> bool {
    use crate::channel::ChannelSet;
    use crate::fp;
    use crate::placement::{Block, PlacementObjective};

    let mut all_ok = true;
    let mut check = |name: &str, ok: bool| {
        println!("{}  {}", if ok { "PASS" } else { "FAIL" }, name);
        all_ok &= ok;
    };
    for &seed in seeds {
        let params = SamplingParams::default();
        let sc = match sample_scenario(seed, &params) {
            Ok(s) => s,
            Err(_) => {
                check(&format!("seed {seed}: sample"), false);
                continue;
            }
        };
        let p = initial_placement(&sc.config).unwrap();
        let ch = ChannelSet::synthesize(&sc, &p).unwrap();
        let sol = bcd::initialize_beams(&sc, &ch);
        let eta = fp::update_eta(&ch, &sol, &sc.sigma2_ir);
        let varpi = fp::update_varpi(&ch, &sol, &sc.sigma2_ir);

        // FP tightness
        let ia = fp::eval_ia(&ch, &sol, &sc.sigma2_ir, &eta);
        let rate = crate::metrics::sum_rate(&ch, &sol, &sc.sigma2_ir);
        check(
            &format!("seed {seed}: dual-transform tightness"),
            (ia - rate).abs() <= 1e-8 * (1.0 + rate.abs()),
        );

        // gradient fidelity on the angle block
        let obj = PlacementObjective::new(&sc, &sol, &eta, &varpi).unwrap();
        let ok = crate::placement::fd_check(&obj, &sc.config, &p, Block::Angles, 1e-6, 1e-5)
            && crate::placement::fd_check(&obj, &sc.config, &p, Block::Heights, 1e-6, 1e-5);
        check(&format!("seed {seed}: gradient fidelity"), ok);

        // short monotone feasible run
        let opts = BcdOptions {
            max_outer_iters: 4,
            ..BcdOptions::default()
        };
        match bcd::run(&sc, &p, &opts) {
            Ok((s, pl, trace)) => {
                let monotone = trace
                    .rows
                    .windows(2)
                    .all(|w| w[1].sum_rate_bits >= w[0].sum_rate_bits - 1e-6);
                let feasible = audit(&sc, &pl, &s).map(|a| a.is_feasible(1e-6)).unwrap_or(false);
                check(&format!("seed {seed}: bcd monotone+feasible"), monotone && feasible);
            }
            Err(_) => check(&format!("seed {seed}: bcd run"), false),
        }
    }
    all_ok
}
