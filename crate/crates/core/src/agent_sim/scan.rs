use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{build_erdos_renyi, build_small_world, build_square_lattice, Network};
use super::rng::derive_seed;
use super::sim::{run_experiment, PayoffMode, SimParams};
use crate::alv_dynamics::SelectionTemperature;
use crate::error::{invalid, Error, Result};
use crate::meanfield_phase::first_crossing;
use crate::quantum_game::{payoff_matrix_from_circuit, EntanglementParam, PayoffTable};

/// Stream tag separating network seeds from dynamics seeds.
const NETWORK_STREAM: u64 = 0x6E65_7477_6F72_6B00;

/// Seed used to build the network of replicate `rep` in a scan.
pub fn network_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, &[NETWORK_STREAM, rep as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    Lattice { side: usize, periodic: bool },
    #[serde(rename = "smallworld")]
    SmallWorld { side: usize, rewire_p: f64 },
    #[serde(rename = "er")]
    ErdosRenyi { num_nodes: usize, avg_degree: f64 },
}

impl Topology {
    pub const NAMES: [&'static str; 3] = ["lattice", "smallworld", "er"];

    pub fn build(&self, seed: u64) -> Result<Network> {
        match *self {
            Topology::Lattice { side, periodic } => build_square_lattice(side, periodic),
            Topology::SmallWorld { side, rewire_p } => build_small_world(side, rewire_p, seed),
            Topology::ErdosRenyi { num_nodes, avg_degree } => build_erdos_renyi(num_nodes, avg_degree, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Topology::Lattice { .. } => "lattice",
            Topology::SmallWorld { .. } => "smallworld",
            Topology::ErdosRenyi { .. } => "er",
        }
    }
}

/// Topology kind as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Lattice,
    SmallWorld,
    ErdosRenyi,
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" => Ok(TopologyKind::Lattice),
            "smallworld" => Ok(TopologyKind::SmallWorld),
            "er" => Ok(TopologyKind::ErdosRenyi),
            other => Err(Error::Parse(format!(
                "unknown topology {other:?}; expected one of {{{}}}",
                Topology::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Lattice => "lattice",
            TopologyKind::SmallWorld => "smallworld",
            TopologyKind::ErdosRenyi => "er",
        })
    }
}

/// Everything except gamma that a single run needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanTemplate {
    pub table: PayoffTable,
    pub temp: SelectionTemperature,
    pub steps: usize,
    pub measure_window: usize,
    pub payoff_mode: PayoffMode,
    pub rho0: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub gamma: f64,
    pub mean: [f64; 3],
    /// Standard error of the replicate mean (zero for a single replicate).
    pub se: [f64; 3],
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    /// Gamma where `rho_Q - rho_D` first turns positive, by linear
    /// interpolation; `None` when the sign never changes.
    pub crossing: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanRow {
    gamma: f64,
    #[serde(rename = "mean_rho_C")]
    mean_rho_c: f64,
    #[serde(rename = "mean_rho_D")]
    mean_rho_d: f64,
    #[serde(rename = "mean_rho_Q")]
    mean_rho_q: f64,
    #[serde(rename = "se_rho_Q")]
    se_rho_q: f64,
    replicates: usize,
}

impl ScanResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        for p in &self.points {
            w.serialize(ScanRow {
                gamma: p.gamma,
                mean_rho_c: p.mean[0],
                mean_rho_d: p.mean[1],
                mean_rho_q: p.mean[2],
                se_rho_q: p.se[2],
                replicates: p.replicates,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the scan CSV. Only the `rho_Q` standard error is stored in the
    /// file, so the other two read back as zero.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: ScanRow = row?;
            points.push(ScanPoint {
                gamma: row.gamma,
                mean: [row.mean_rho_c, row.mean_rho_d, row.mean_rho_q],
                se: [0.0, 0.0, row.se_rho_q],
                replicates: row.replicates,
            });
        }
        let crossing = estimate_crossing(&points);
        Ok(Self { points, crossing })
    }
}

pub fn estimate_crossing(points: &[ScanPoint]) -> Option<f64> {
    let gammas: Vec<f64> = points.iter().map(|p| p.gamma).collect();
    let gap: Vec<f64> = points.iter().map(|p| p.mean[2] - p.mean[1]).collect();
    first_crossing(&gammas, &gap, 0.0)
}

fn mean_and_se(samples: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        for k in 0..3 {
            mean[k] += s[k] / n;
        }
    }
    let mut se = [0.0; 3];
    if samples.len() > 1 {
        for k in 0..3 {
            let var = samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0);
            se[k] = (var / n).sqrt();
        }
    }
    (mean, se)
}

/// Runs every `(gamma, replicate)` pair on the current rayon pool. Replicate
/// `k` uses the same network at every gamma; dynamics seeds are derived from
/// `(seed, gamma index, replicate)`.
pub fn bifurcation_scan<B>(
    builder: B,
    template: &ScanTemplate,
    gamma_axis: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<ScanResult>
where
    B: Fn(u64) -> Result<Network> + Sync,
{
    if replicates == 0 {
        return Err(invalid("replicates must be >= 1"));
    }
    if gamma_axis.is_empty() || gamma_axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("gamma axis must be nonempty and strictly increasing"));
    }
    let gammas = gamma_axis
        .iter()
        .map(|&g| EntanglementParam::new(g))
        .collect::<Result<Vec<_>>>()?;
    let networks = (0..replicates)
        .into_par_iter()
        .map(|rep| builder(network_seed(seed, rep)))
        .collect::<Result<Vec<_>>>()?;
    let params: Vec<SimParams> = gammas
        .iter()
        .map(|&g| SimParams {
            payoffs: payoff_matrix_from_circuit(g, &template.table),
            temp: template.temp,
            steps: template.steps,
            payoff_mode: template.payoff_mode,
            measure_window: template.measure_window,
        })
        .collect();
    params[0].validate()?;

    let tails = (0..gammas.len() * replicates)
        .into_par_iter()
        .map(|task| {
            let (gi, rep) = (task / replicates, task % replicates);
            let run_seed = derive_seed(seed, &[gi as u64, rep as u64]);
            run_experiment(&networks[rep], &params[gi], &template.rho0, run_seed).map(|r| r.tail_mean)
        })
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<ScanPoint> = gamma_axis
        .iter()
        .zip(tails.chunks(replicates))
        .map(|(&gamma, chunk)| {
            let (mean, se) = mean_and_se(chunk);
            ScanPoint {
                gamma,
                mean,
                se,
                replicates,
            }
        })
        .collect();
    let crossing = estimate_crossing(&points);
    Ok(ScanResult { points, crossing })
}
