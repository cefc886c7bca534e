//! `alvlab` command-line driver.
//!
//! Every numeric option is optional on the command line so that the
//! effective value can be resolved as flag > config file > built-in default.
//! The config file is flat TOML whose keys are the long flag names
//! (`t-end = 500.0`). The resolved configuration is written as a JSON
//! sidecar next to every output file (or to stderr when there is none).

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::agent_sim::{bifurcation_scan, derive_seed, network_seed, run_experiment, Network, PayoffMode, ScanTemplate, SimParams, Topology, TopologyKind};
use crate::alv_dynamics::{classify_fixed_points, integrate, IntegratorConfig, PopulationState, SelectionTemperature};
use crate::error::Error;
use crate::master_oracle::{dominance_verdict, Configuration, ConfigurationDistribution, EvolveConfig, MasterEquation, OracleParams};
use crate::meanfield_phase::{
    critical_gammas, effective_payoff_matrix, family_critical_gamma, linspace, open_linspace, phase_boundary_r,
    sweep_phase_diagram, vertex_payoffs, GameFamily, SweepConfig,
};
use crate::quantum_game::{payoff_matrix_from_circuit, EntanglementParam, PayoffMatrix, PayoffTable, Strategy};

/// Largest circuit-vs-analytic payoff deviation accepted by `payoffs`.
pub const PAYOFF_DEVIATION_LIMIT: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "alvlab", version, about = "Entanglement-driven bifurcations in anti-symmetric Lotka-Volterra dynamics")]
pub struct Cli {
    /// Worker threads for sweeps and scans (0 = all available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Flat TOML file with default values keyed by long flag name.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Circuit payoff matrix vs the analytic effective matrix.
    Payoffs(PayoffsArgs),
    /// Eigenvalues and stability labels of the three vertex fixed points.
    Stability(StabilityArgs),
    /// Mean-field trajectory as CSV.
    Trajectory(TrajectoryArgs),
    /// Mean-field phase diagram over (gamma, r) with the analytic boundary.
    Phase(PhaseArgs),
    /// Agent-based Monte Carlo on a network.
    Simulate(SimulateArgs),
    /// Exact master equation for a small well-mixed population.
    Oracle(OracleArgs),
}

#[derive(Debug, Args, Clone)]
pub struct GameArgs {
    /// Family parameter: T = 1 + r, R = 1, P = 0, S = -r.
    #[arg(long)]
    pub r: Option<f64>,
    /// Explicit payoff table; overrides --r when all four are given.
    #[arg(long = "T")]
    pub t: Option<f64>,
    #[arg(long = "R")]
    pub reward: Option<f64>,
    #[arg(long = "P")]
    pub p: Option<f64>,
    #[arg(long = "S")]
    pub s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PayoffsArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub game: GameArgs,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long)]
    pub temp: Option<f64>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub game: GameArgs,
    /// Initial densities "rho_C,rho_D,rho_Q".
    #[arg(long)]
    pub rho0: Option<Triple>,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Keep every k-th integration step in the CSV.
    #[arg(long = "record-every")]
    pub record_every: Option<usize>,
    /// Integrate to t-end even after equilibrium is reached.
    #[arg(long = "full-horizon")]
    pub full_horizon: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[arg(long = "gamma-min")]
    pub gamma_min: Option<f64>,
    #[arg(long = "gamma-max")]
    pub gamma_max: Option<f64>,
    #[arg(long = "gamma-points")]
    pub gamma_points: Option<usize>,
    /// r axis is r-max * k / r-points for k = 1..=r-points.
    #[arg(long = "r-max")]
    pub r_max: Option<f64>,
    #[arg(long = "r-points")]
    pub r_points: Option<usize>,
    #[arg(long)]
    pub rho0: Option<Triple>,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of lattice, smallworld, er.
    #[arg(long)]
    pub topology: Option<String>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub periodic: Option<bool>,
    #[arg(long = "rewire-p")]
    pub rewire_p: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long = "avg-degree")]
    pub avg_degree: Option<f64>,
    /// Read the network from an edge-list file instead of building one.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Write the (first replicate's) network as an edge list.
    #[arg(long = "export-network")]
    pub export_network: Option<PathBuf>,
    #[command(flatten)]
    pub game: GameArgs,
    /// Single gamma: write the per-sweep frequency series instead of a scan.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "gamma-min")]
    pub gamma_min: Option<f64>,
    #[arg(long = "gamma-max")]
    pub gamma_max: Option<f64>,
    #[arg(long = "gamma-step")]
    pub gamma_step: Option<f64>,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "measure-window")]
    pub measure_window: Option<usize>,
    /// sum or average.
    #[arg(long = "payoff-mode")]
    pub payoff_mode: Option<String>,
    #[arg(long)]
    pub rho0: Option<Triple>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Population size.
    #[arg(long = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Step size; defaults to a quarter of the inverse maximal outflow.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial configuration "n_C,n_D,n_Q"; defaults to an even split.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long = "record-every")]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Three comma-separated reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triple(pub [f64; 3]);

impl FromStr for Triple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated values, got {s:?}"));
        }
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
        }
        Ok(Triple(out))
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical contract breach: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::SimplexDrift { .. } | Error::ProbabilityLeak { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Resolves option values and records the effective configuration.
struct Resolver {
    file: toml::Table,
    used: Vec<String>,
    effective: Map<String, Value>,
}

impl Resolver {
    fn new(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| validation(format!("{}: {e}", p.display())))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e| validation(format!("{}: {e}", p.display())))?;
                if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table() || v.is_array()) {
                    return Err(validation(format!("config key {k:?} must be a plain value (no nesting)")));
                }
                table
            }
            None => toml::Table::new(),
        };
        Ok(Self {
            file,
            used: Vec::new(),
            effective: Map::new(),
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.used.push(key.to_string());
        let Some(v) = self.file.get(key) else {
            return Ok(None);
        };
        let text = match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        text.parse::<T>()
            .map(Some)
            .map_err(|e| validation(format!("config key {key:?}: {e}")))
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.effective
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn opt<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Serialize,
        T::Err: fmt::Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Serialize,
        T::Err: fmt::Display,
    {
        let v = match self.opt(key, flag)? {
            Some(v) => v,
            None => default,
        };
        self.record(key, &v);
        Ok(v)
    }

    fn required<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Serialize,
        T::Err: fmt::Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| validation(format!("--{key} is required (flag or config file)")))
    }

    fn warn_unused(&self) {
        for k in self.file.keys() {
            if !self.used.iter().any(|u| u == k) {
                eprintln!("warning: config key {k:?} is not used by this command");
            }
        }
    }

    fn game(&mut self, game: &GameArgs) -> CliResult<PayoffTable> {
        let t = self.opt("T", game.t)?;
        let r_pay = self.opt("R", game.reward)?;
        let p = self.opt("P", game.p)?;
        let s = self.opt("S", game.s)?;
        match (t, r_pay, p, s) {
            (Some(t), Some(r), Some(p), Some(s)) => Ok(PayoffTable::new(t, r, p, s)?),
            (None, None, None, None) => {
                let r = self.get("r", game.r, 1.0)?;
                Ok(GameFamily::new(r)?.table())
            }
            _ => Err(validation("--T, --R, --P and --S must be given together")),
        }
    }

    fn gamma(&mut self, flag: Option<f64>, default: Option<f64>) -> CliResult<EntanglementParam> {
        let g = match default {
            Some(d) => self.get("gamma", flag, d)?,
            None => self.required("gamma", flag)?,
        };
        Ok(EntanglementParam::new(g)?)
    }

    fn temp(&mut self, flag: Option<f64>) -> CliResult<SelectionTemperature> {
        let t = self.get("temp", flag, SelectionTemperature::DEFAULT)?;
        Ok(SelectionTemperature::new(t)?)
    }

    fn effective(&self, command: &str) -> Value {
        let mut m = self.effective.clone();
        m.insert("command".into(), Value::String(command.into()));
        Value::Object(m)
    }
}

fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.json"))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn emit_config(out: Option<&Path>, config: &Value) -> CliResult<()> {
    match out {
        Some(p) => write_json(&sidecar_path(p, "config"), config),
        None => {
            eprintln!("config: {config}");
            Ok(())
        }
    }
}

fn open_out(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn format_matrix(w: &mut dyn Write, title: &str, m: &PayoffMatrix) -> io::Result<()> {
    writeln!(w, "{title}")?;
    writeln!(w, "{:>4} {:>14} {:>14} {:>14}", "", "C", "D", "Q")?;
    for s in Strategy::ALL {
        let row = &m.0[s.index()];
        writeln!(w, "{:>4} {:>14.10} {:>14.10} {:>14.10}", s.label(), row[0], row[1], row[2])?;
    }
    Ok(())
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut res = Resolver::new(cli.config.as_deref())?;
    let workers = res.get("workers", cli.workers, 0usize)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| validation(e.to_string()))?;
    let out = pool.install(|| match &cli.command {
        Command::Payoffs(a) => cmd_payoffs(&mut res, a),
        Command::Stability(a) => cmd_stability(&mut res, a),
        Command::Trajectory(a) => cmd_trajectory(&mut res, a),
        Command::Phase(a) => cmd_phase(&mut res, a),
        Command::Simulate(a) => cmd_simulate(&mut res, a),
        Command::Oracle(a) => cmd_oracle(&mut res, a),
    });
    res.warn_unused();
    out
}

fn cmd_payoffs(res: &mut Resolver, a: &PayoffsArgs) -> CliResult<()> {
    let gamma = res.gamma(a.gamma, None)?;
    let table = res.game(&a.game)?;
    let out = res.opt("out", a.out.as_ref().map(|p| p.display().to_string()))?.map(PathBuf::from);

    let circuit = payoff_matrix_from_circuit(gamma, &table);
    let analytic = effective_payoff_matrix(&table, gamma);
    let deviation = circuit.max_abs_diff(&analytic);

    let stdout = io::stdout();
    let mut w = stdout.lock();
    format_matrix(&mut w, "circuit payoff matrix (row player):", &circuit)?;
    format_matrix(&mut w, "effective payoff matrix (lambda = cos^2 gamma):", &analytic)?;
    writeln!(w, "max deviation: {deviation:e}")?;

    let config = res.effective("payoffs");
    if let Some(p) = &out {
        write_json(
            p,
            &json!({
                "gamma": gamma.value(),
                "table": table,
                "circuit": circuit.0,
                "analytic": analytic.0,
                "max_deviation": deviation,
            }),
        )?;
    }
    emit_config(out.as_deref(), &config)?;
    if deviation >= PAYOFF_DEVIATION_LIMIT {
        return Err(CliError::Numerical(format!(
            "circuit and analytic payoff matrices differ by {deviation:e} (limit {PAYOFF_DEVIATION_LIMIT:e})"
        )));
    }
    Ok(())
}

fn cmd_stability(res: &mut Resolver, a: &StabilityArgs) -> CliResult<()> {
    let gamma = res.gamma(a.gamma, None)?;
    let table = res.game(&a.game)?;
    let temp = res.temp(a.temp)?;
    let out = res.opt("out", a.out.as_ref().map(|p| p.display().to_string()))?.map(PathBuf::from);

    let reports = classify_fixed_points(&vertex_payoffs(&table, gamma), temp);
    let cg = critical_gammas(&table);
    let stdout = io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "gamma*_1 = {:.12}  gamma*_2 = {:.12}", cg.gamma_star_1, cg.gamma_star_2)?;
    writeln!(w, "{:<7} {:>16} {:>16} {:>16}  label", "vertex", "eig0", "eig1", "eig2")?;
    for r in &reports {
        writeln!(
            w,
            "{:<7} {:>16.10e} {:>16.10e} {:>16.10e}  {}",
            r.vertex.label(),
            r.eigenvalues[0],
            r.eigenvalues[1],
            r.eigenvalues[2],
            r.classification
        )?;
    }
    let config = res.effective("stability");
    if let Some(p) = &out {
        write_json(p, &json!({ "critical": cg, "vertices": reports }))?;
    }
    emit_config(out.as_deref(), &config)
}

fn cmd_trajectory(res: &mut Resolver, a: &TrajectoryArgs) -> CliResult<()> {
    let gamma = res.gamma(a.gamma, None)?;
    let table = res.game(&a.game)?;
    let rho0 = res.get("rho0", a.rho0, Triple([1.0 / 3.0; 3]))?;
    let temp = res.temp(a.temp)?;
    let cfg = IntegratorConfig {
        t_end: res.get("t-end", a.t_end, 1e3)?,
        dt: res.get("dt", a.dt, 1e-2)?,
        record_every: res.get("record-every", a.record_every, 1usize)?,
        stop_at_equilibrium: !res.get("full-horizon", a.full_horizon, false)?,
    };
    cfg.validate()?;
    let out = res.opt("out", a.out.as_ref().map(|p| p.display().to_string()))?.map(PathBuf::from);
    let rho0 = PopulationState::new(rho0.0)?;

    let matrix = effective_payoff_matrix(&table, gamma);
    let tr = integrate(rho0, |r| matrix.apply(r), temp, &cfg)?;
    let mut w = open_out(out.as_deref())?;
    tr.write_csv(&mut w)?;
    w.flush()?;
    let fin = tr.final_state();
    eprintln!(
        "final t = {} rho = {:?} ({:?}, max simplex correction {:e})",
        tr.final_time(),
        fin.as_array(),
        tr.termination,
        tr.max_correction
    );
    emit_config(out.as_deref(), &res.effective("trajectory"))
}

fn cmd_phase(res: &mut Resolver, a: &PhaseArgs) -> CliResult<()> {
    let g_min = res.get("gamma-min", a.gamma_min, 0.0)?;
    let g_max = res.get("gamma-max", a.gamma_max, 1.2)?;
    let g_pts = res.get("gamma-points", a.gamma_points, 101usize)?;
    let r_max = res.get("r-max", a.r_max, 3.0)?;
    let r_pts = res.get("r-points", a.r_points, 101usize)?;
    let rho0 = res.get("rho0", a.rho0, Triple([1.0 / 3.0; 3]))?;
    let temp = res.temp(a.temp)?;
    let t_end = res.get("t-end", a.t_end, 1e3)?;
    let dt = res.get("dt", a.dt, 1e-2)?;
    let out: PathBuf = res.required("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    if g_pts == 0 || r_pts == 0 {
        return Err(validation("axes need at least one point"));
    }
    if !(r_max > 0.0) {
        return Err(validation(format!("--r-max must be positive, got {r_max}")));
    }
    if !(g_max >= g_min) {
        return Err(validation("--gamma-max must be >= --gamma-min"));
    }
    let gamma_axis = linspace(g_min, g_max, g_pts);
    let r_axis = open_linspace(r_max, r_pts);
    let cfg = SweepConfig {
        rho0: PopulationState::new(rho0.0)?,
        temp,
        t_end,
        dt,
    };
    let grid = sweep_phase_diagram(&gamma_axis, &r_axis, &cfg)?;
    let mut w = BufWriter::new(File::create(&out)?);
    grid.write_csv(&mut w)?;
    w.flush()?;

    let mut samples = Vec::new();
    let mut omitted = 0usize;
    for &g in &gamma_axis {
        match phase_boundary_r(g) {
            Ok(r) => samples.push(json!({ "gamma": g, "r": r })),
            Err(_) => omitted += 1,
        }
    }
    let rows: Vec<Value> = r_axis
        .iter()
        .zip(grid.row_crossings())
        .map(|(&r, c)| {
            json!({
                "r": r,
                "gamma_star": family_critical_gamma(r).ok(),
                "empirical_crossing": c,
            })
        })
        .collect();
    let failed = grid.cells.iter().filter(|c| c.failed).count();
    let unconverged = grid.cells.iter().filter(|c| !c.converged).count();
    let boundary = json!({
        "formula": "r* = (1 - cos^2 g) / (2 cos^2 g - 1)",
        "samples": samples,
        "omitted": omitted,
        "note": if omitted > 0 { "samples with gamma >= pi/4 omitted: boundary diverges" } else { "" },
        "rows": rows,
        "unconverged_cells": unconverged,
        "failed_cells": failed,
    });
    write_json(&sidecar_path(&out, "boundary"), &boundary)?;
    eprintln!(
        "{} cells written to {} ({unconverged} not converged, {failed} failed)",
        grid.cells.len(),
        out.display()
    );
    emit_config(Some(&out), &res.effective("phase"))
}

fn cmd_simulate(res: &mut Resolver, a: &SimulateArgs) -> CliResult<()> {
    let network_file = res.opt("network", a.network.as_ref().map(|p| p.display().to_string()))?;
    let kind: TopologyKind = res
        .get("topology", a.topology.clone(), "lattice".to_string())?
        .parse()?;
    let topology = match kind {
        TopologyKind::Lattice => Topology::Lattice {
            side: res.get("side", a.side, 50usize)?,
            periodic: res.get("periodic", a.periodic, true)?,
        },
        TopologyKind::SmallWorld => Topology::SmallWorld {
            side: res.get("side", a.side, 50usize)?,
            rewire_p: res.get("rewire-p", a.rewire_p, 0.01)?,
        },
        TopologyKind::ErdosRenyi => Topology::ErdosRenyi {
            num_nodes: res.get("nodes", a.nodes, 2500usize)?,
            avg_degree: res.get("avg-degree", a.avg_degree, 4.0)?,
        },
    };
    let table = res.game(&a.game)?;
    let temp = res.temp(a.temp)?;
    let steps = res.get("steps", a.steps, 10_000usize)?;
    let measure_window = res.get("measure-window", a.measure_window, (steps / 10).max(1))?;
    let payoff_mode: PayoffMode = res.get("payoff-mode", a.payoff_mode.clone(), "sum".to_string())?.parse()?;
    let rho0 = res.get("rho0", a.rho0, Triple([1.0 / 3.0; 3]))?;
    let replicates = res.get("replicates", a.replicates, 3usize)?;
    let seed: u64 = res.required("seed", a.seed)?;
    let single_gamma = res.opt("gamma", a.gamma)?;
    let out = res.opt("out", a.out.as_ref().map(|p| p.display().to_string()))?.map(PathBuf::from);
    let export = res.opt("export-network", a.export_network.as_ref().map(|p| p.display().to_string()))?;

    let imported = match &network_file {
        Some(path) => {
            let f = File::open(path).map_err(|e| validation(format!("{path}: {e}")))?;
            Some(Arc::new(Network::read_edge_list(BufReader::new(f))?))
        }
        None => None,
    };
    let builder = |s: u64| -> crate::Result<Network> {
        match &imported {
            Some(net) => Ok((**net).clone()),
            None => topology.build(s),
        }
    };
    let template = ScanTemplate {
        table,
        temp,
        steps,
        measure_window,
        payoff_mode,
        rho0: rho0.0,
    };

    if let Some(path) = &export {
        let net = builder(network_seed(seed, 0))?;
        net.write_edge_list(BufWriter::new(File::create(path)?))?;
    }

    if let Some(g) = single_gamma {
        let gamma = EntanglementParam::new(g)?;
        let params = SimParams {
            payoffs: payoff_matrix_from_circuit(gamma, &table),
            temp,
            steps,
            payoff_mode,
            measure_window,
        };
        let net = builder(network_seed(seed, 0))?;
        let result = run_experiment(&net, &params, &rho0.0, derive_seed(seed, &[0, 0]))?;
        let mut w = open_out(out.as_deref())?;
        result.write_series_csv(&mut w)?;
        w.flush()?;
        eprintln!("tail mean (C, D, Q) = {:?}", result.tail_mean);
    } else {
        let g_min = res.get("gamma-min", a.gamma_min, 0.3)?;
        let g_max = res.get("gamma-max", a.gamma_max, 1.0)?;
        let g_step = res.get("gamma-step", a.gamma_step, 0.05)?;
        if !(g_step > 0.0) || !(g_max >= g_min) {
            return Err(validation("gamma axis needs gamma-step > 0 and gamma-max >= gamma-min"));
        }
        let n = ((g_max - g_min) / g_step + 1e-9).floor() as usize + 1;
        let axis: Vec<f64> = (0..n).map(|k| g_min + g_step * k as f64).collect();
        let scan = bifurcation_scan(builder, &template, &axis, replicates, seed)?;
        let mut w = open_out(out.as_deref())?;
        scan.write_csv(&mut w)?;
        w.flush()?;
        match scan.crossing {
            Some(c) => eprintln!("estimated crossing gamma = {c:.6}"),
            None => eprintln!("no crossing: rho_Q - rho_D never changes sign on the axis"),
        }
    }
    emit_config(out.as_deref(), &res.effective("simulate"))
}

fn cmd_oracle(res: &mut Resolver, a: &OracleArgs) -> CliResult<()> {
    let n = res.get("N", a.n, 20u32)?;
    let gamma = res.gamma(a.gamma, None)?;
    let table = res.game(&a.game)?;
    let temp = res.temp(a.temp)?;
    let t_end = res.get("t-end", a.t_end, 20.0)?;
    let record_every = res.get("record-every", a.record_every, 10usize)?;
    let init = res.opt("init", a.init.clone())?;
    let out = res.opt("out", a.out.as_ref().map(|p| p.display().to_string()))?.map(PathBuf::from);

    let params = OracleParams { table, gamma, temp };
    let eq = MasterEquation::new(n, params)?;
    let dt = res.get("dt", a.dt, eq.suggested_dt())?;
    let start = match init {
        Some(s) => {
            let t: Triple = s.parse().map_err(validation)?;
            let counts = t.0.map(|v| v as u32);
            if t.0.iter().zip(&counts).any(|(v, c)| *v != *c as f64) {
                return Err(validation(format!("--init must hold nonnegative integers, got {s:?}")));
            }
            Configuration::new(counts)
        }
        None => {
            let third = n / 3;
            let rest = n - 2 * third;
            Configuration::new([third, third, rest])
        }
    };
    let q0 = ConfigurationDistribution::point_mass(Arc::clone(eq.space()), start)?;
    let tr = eq.evolve(&q0, &EvolveConfig { t_end, dt, record_every })?;
    let mut w = open_out(out.as_deref())?;
    tr.write_mean_csv(&mut w)?;
    w.flush()?;
    let verdict = dominance_verdict(tr.final_distribution(), &params);
    println!("{verdict}");
    eprintln!("max |sum Q - 1| = {:e}", tr.max_probability_error);
    emit_config(out.as_deref(), &res.effective("oracle"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_parsing() {
        assert_eq!("0.2, 0.3,0.5".parse::<Triple>().unwrap(), Triple([0.2, 0.3, 0.5]));
        assert!("1,2".parse::<Triple>().is_err());
        assert!("a,b,c".parse::<Triple>().is_err());
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("/tmp/x/phase.csv"), "boundary"), PathBuf::from("/tmp/x/phase.boundary.json"));
        assert_eq!(sidecar_path(Path::new("run"), "config"), PathBuf::from("run.config.json"));
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "temp = 0.25\nt-end = 5.0\n").unwrap();
        let mut res = Resolver::new(Some(&cfg)).unwrap();
        assert_eq!(res.get("temp", None, 0.1).unwrap(), 0.25);
        assert_eq!(res.get("t-end", Some(9.0), 1.0).unwrap(), 9.0);
        assert_eq!(res.get("dt", None, 0.01).unwrap(), 0.01);
        let eff = res.effective("x");
        assert_eq!(eff["temp"], json!(0.25));
        assert_eq!(eff["t-end"], json!(9.0));
        assert_eq!(eff["dt"], json!(0.01));
    }

    #[test]
    fn nested_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[section]\nx = 1\n").unwrap();
        assert!(Resolver::new(Some(&cfg)).is_err());
    }

    #[test]
    fn partial_table_is_rejected() {
        let mut res = Resolver::new(None).unwrap();
        let game = GameArgs {
            r: None,
            t: Some(3.0),
            reward: Some(2.0),
            p: None,
            s: None,
        };
        assert!(res.game(&game).is_err());
    }

    #[test]
    fn error_exit_codes() {
        let e: CliError = Error::ProbabilityLeak { t: 1.0, total: 0.9 }.into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = Error::InvalidParameter("x".into()).into();
        assert_eq!(e.exit_code(), 1);
    }
}
