//! Exact configurational master equation for a small well-mixed population.
//!
//! A configuration `n = (n_C, n_D, n_Q)` jumps to `n_{x->y}` (one `x`
//! player imitates a `y` player) at rate `n_x * w(x -> y) * n_y`, where the
//! Fermi rate `w` uses the effective payoffs at the configuration's own
//! densities `n / N`. Rates carry the raw `n_x n_y` factor, so one unit of
//! time here corresponds to roughly `N` units of mean-field time.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alv_dynamics::{classify_fixed_points, fermi_rate, PopulationState, SelectionTemperature, Stability};
use crate::error::{invalid, Error, Result};
use crate::meanfield_phase::{effective_payoff_matrix, vertex_payoffs};
use crate::quantum_game::{EntanglementParam, PayoffMatrix, PayoffTable, Strategy};

pub const MAX_POPULATION: u32 = 40;
/// Allowed drift of the total probability.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;
const FLUSH: f64 = 1e-200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub counts: [u32; 3],
}

impl Configuration {
    pub fn new(counts: [u32; 3]) -> Self {
        Self { counts }
    }

    pub fn population(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn count(&self, s: Strategy) -> u32 {
        self.counts[s.index()]
    }

    pub fn densities(&self) -> [f64; 3] {
        let n = self.population() as f64;
        self.counts.map(|c| c as f64 / n)
    }

    pub fn is_monomorphic(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() <= 1
    }

    /// Configuration after one `from` player switches to `to`.
    pub fn shifted(&self, from: Strategy, to: Strategy) -> Option<Self> {
        if from == to || self.counts[from.index()] == 0 {
            return None;
        }
        let mut counts = self.counts;
        counts[from.index()] -= 1;
        counts[to.index()] += 1;
        Some(Self { counts })
    }
}

/// All configurations of `population` players in lexicographic order of
/// `(n_C, n_D, n_Q)`.
pub fn enumerate_configurations(population: u32) -> Result<Vec<Configuration>> {
    if !(1..=MAX_POPULATION).contains(&population) {
        return Err(invalid(format!(
            "population must lie in [1, {MAX_POPULATION}], got {population}"
        )));
    }
    let mut out = Vec::with_capacity(((population + 1) * (population + 2) / 2) as usize);
    for c in 0..=population {
        for d in 0..=population - c {
            out.push(Configuration::new([c, d, population - c - d]));
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct StateSpace {
    population: u32,
    configs: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
}

impl StateSpace {
    pub fn new(population: u32) -> Result<Self> {
        let configs = enumerate_configurations(population)?;
        let index = configs.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Ok(Self {
            population,
            configs,
            index,
        })
    }

    pub fn population(&self) -> u32 {
        self.population
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configurations(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c).copied()
    }
}

/// Probability distribution over the configurations of a [`StateSpace`].
#[derive(Debug, Clone)]
pub struct ConfigurationDistribution {
    space: Arc<StateSpace>,
    probs: Vec<f64>,
}

impl ConfigurationDistribution {
    pub fn new(space: Arc<StateSpace>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(invalid(format!(
                "distribution has {} entries, state space has {}",
                probs.len(),
                space.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { space, probs })
    }

    pub fn point_mass(space: Arc<StateSpace>, at: Configuration) -> Result<Self> {
        let idx = space
            .index_of(&at)
            .ok_or_else(|| invalid(format!("{:?} is not a configuration of N = {}", at.counts, space.population)))?;
        let mut probs = vec![0.0; space.len()];
        probs[idx] = 1.0;
        Ok(Self { space, probs })
    }

    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let p = 1.0 / space.len() as f64;
        let probs = vec![p; space.len()];
        Self { space, probs }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn raw_mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (c, p) in self.space.configs.iter().zip(&self.probs) {
            for k in 0..3 {
                m[k] += c.counts[k] as f64 * p;
            }
        }
        m
    }

    /// `<n_x>` for each strategy.
    pub fn mean_counts(&self) -> [f64; 3] {
        self.raw_mean()
    }
}

/// `<n> / N` as a point of the simplex.
pub fn mean_occupation(q: &ConfigurationDistribution) -> PopulationState {
    let n = q.space.population as f64;
    let m = q.raw_mean().map(|v| v / n);
    let total: f64 = m.iter().sum();
    PopulationState::new(m.map(|v| v / total)).expect("mean of a distribution lies on the simplex")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub table: PayoffTable,
    pub gamma: EntanglementParam,
    pub temp: SelectionTemperature,
}

fn rate_with_matrix(n: &Configuration, x: Strategy, y: Strategy, matrix: &PayoffMatrix, temp: SelectionTemperature) -> f64 {
    let (nx, ny) = (n.count(x), n.count(y));
    if x == y || nx == 0 || ny == 0 {
        return 0.0;
    }
    let p = matrix.apply(&n.densities());
    nx as f64 * fermi_rate(p[x.index()], p[y.index()], temp) * ny as f64
}

/// Rate of the jump `n -> n_{x->y}`; zero when no `x` player exists.
pub fn configurational_rate(
    n: &Configuration,
    x: Strategy,
    y: Strategy,
    table: &PayoffTable,
    gamma: EntanglementParam,
    temp: SelectionTemperature,
) -> f64 {
    rate_with_matrix(n, x, y, &effective_payoff_matrix(table, gamma), temp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Keep every `record_every`-th distribution (zero keeps only the endpoints).
    pub record_every: usize,
}

#[derive(Debug, Clone)]
pub struct MasterTrajectory {
    pub times: Vec<f64>,
    pub distributions: Vec<ConfigurationDistribution>,
    /// Largest `|sum Q - 1|` seen over the run.
    pub max_probability_error: f64,
}

impl MasterTrajectory {
    pub fn final_distribution(&self) -> &ConfigurationDistribution {
        self.distributions.last().expect("trajectory holds the initial distribution")
    }

    /// Writes `t, mean_C, mean_D, mean_Q` with means expressed as densities.
    pub fn write_mean_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t", "mean_C", "mean_D", "mean_Q"])?;
        for (t, q) in self.times.iter().zip(&self.distributions) {
            let m = mean_occupation(q);
            let m = m.as_array();
            w.write_record([t.to_string(), m[0].to_string(), m[1].to_string(), m[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sparse generator of the master equation on one state space.
#[derive(Debug)]
pub struct MasterEquation {
    space: Arc<StateSpace>,
    params: OracleParams,
    /// Outgoing `(target index, rate)` per configuration.
    jumps: Vec<Vec<(usize, f64)>>,
    total_out: Vec<f64>,
}

impl MasterEquation {
    pub fn new(population: u32, params: OracleParams) -> Result<Self> {
        let space = Arc::new(StateSpace::new(population)?);
        let matrix = effective_payoff_matrix(&params.table, params.gamma);
        let mut jumps = Vec::with_capacity(space.len());
        let mut total_out = Vec::with_capacity(space.len());
        for c in &space.configs {
            let mut out = Vec::new();
            for x in Strategy::ALL {
                for y in Strategy::ALL {
                    let rate = rate_with_matrix(c, x, y, &matrix, params.temp);
                    if rate > 0.0 {
                        let target = c.shifted(x, y).expect("rate > 0 implies a valid jump");
                        out.push((space.index_of(&target).expect("jumps stay in the space"), rate));
                    }
                }
            }
            total_out.push(out.iter().map(|(_, r)| r).sum());
            jumps.push(out);
        }
        Ok(Self {
            space,
            params,
            jumps,
            total_out,
        })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    pub fn total_outflow(&self, c: &Configuration) -> Option<f64> {
        self.space.index_of(c).map(|i| self.total_out[i])
    }

    pub fn max_outflow(&self) -> f64 {
        self.total_out.iter().copied().fold(0.0, f64::max)
    }

    /// Step size that keeps every per-step outflow probability at or below 1/4.
    pub fn suggested_dt(&self) -> f64 {
        let m = self.max_outflow();
        if m > 0.0 {
            0.25 / m
        } else {
            1.0
        }
    }

    fn derivative_into(&self, q: &[f64], out: &mut [f64]) {
        for (o, (p, r)) in out.iter_mut().zip(q.iter().zip(&self.total_out)) {
            *o = -p * r;
        }
        for (src, jumps) in self.jumps.iter().enumerate() {
            let p = q[src];
            if p == 0.0 {
                continue;
            }
            for &(dst, rate) in jumps {
                out[dst] += p * rate;
            }
        }
    }

    /// `dQ/dt` for the given distribution.
    pub fn derivative(&self, q: &ConfigurationDistribution) -> Vec<f64> {
        let mut out = vec![0.0; q.probs.len()];
        self.derivative_into(&q.probs, &mut out);
        out
    }

    /// `d<n_x>/dt = sum_y [<n_y W_{y->x}> - <n_x W_{x->y}>]` evaluated from
    /// the microscopic rates, without forming `dQ/dt`.
    pub fn moment_derivative(&self, q: &ConfigurationDistribution) -> [f64; 3] {
        let matrix = effective_payoff_matrix(&self.params.table, self.params.gamma);
        let mut out = [0.0; 3];
        for (c, p) in self.space.configs.iter().zip(&q.probs) {
            for x in Strategy::ALL {
                for y in Strategy::ALL {
                    if x == y {
                        continue;
                    }
                    let inflow = rate_with_matrix(c, y, x, &matrix, self.params.temp);
                    let outflow = rate_with_matrix(c, x, y, &matrix, self.params.temp);
                    out[x.index()] += p * (inflow - outflow);
                }
            }
        }
        out
    }

    /// RK4 integration of the master equation.
    pub fn evolve(&self, q0: &ConfigurationDistribution, config: &EvolveConfig) -> Result<MasterTrajectory> {
        if q0.space.population != self.space.population {
            return Err(invalid("initial distribution belongs to a different population size"));
        }
        if !(config.dt > 0.0) || !config.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", config.dt)));
        }
        if !(config.t_end >= 0.0) || !config.t_end.is_finite() {
            return Err(invalid(format!("t_end must be nonnegative, got {}", config.t_end)));
        }
        let worst = self.max_outflow() * config.dt;
        if worst >= 1.0 {
            return Err(invalid(format!(
                "dt = {} gives per-step outflow probability {worst:.3} >= 1; use dt < {}",
                config.dt,
                1.0 / self.max_outflow()
            )));
        }

        let n_steps = (config.t_end / config.dt).round() as u64;
        let dt = if n_steps == 0 { 0.0 } else { config.t_end / n_steps as f64 };
        let len = self.space.len();
        let mut q = q0.probs.clone();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let mut tmp = vec![0.0; len];

        let snapshot = |probs: &[f64]| ConfigurationDistribution {
            space: Arc::clone(&self.space),
            probs: probs.to_vec(),
        };
        let mut times = vec![0.0];
        let mut distributions = vec![snapshot(&q)];
        let mut max_err = (q.iter().sum::<f64>() - 1.0).abs();
        let mut t = 0.0;

        for step in 1..=n_steps {
            self.derivative_into(&q, &mut k1);
            for i in 0..len {
                tmp[i] = q[i] + 0.5 * dt * k1[i];
            }
            self.derivative_into(&tmp, &mut k2);
            for i in 0..len {
                tmp[i] = q[i] + 0.5 * dt * k2[i];
            }
            self.derivative_into(&tmp, &mut k3);
            for i in 0..len {
                tmp[i] = q[i] + dt * k3[i];
            }
            self.derivative_into(&tmp, &mut k4);
            for i in 0..len {
                q[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                // negatives are clamped; sub-FLUSH mass is dropped to keep the
                // arithmetic out of subnormals
                if q[i] < FLUSH {
                    q[i] = 0.0;
                }
            }
            t = step as f64 * dt;
            let total: f64 = q.iter().sum();
            let err = (total - 1.0).abs();
            max_err = max_err.max(err);
            if err > PROBABILITY_TOLERANCE {
                return Err(Error::ProbabilityLeak { t, total });
            }
            if config.record_every > 0 && step % config.record_every as u64 == 0 {
                times.push(t);
                distributions.push(snapshot(&q));
            }
        }
        if *times.last().unwrap() != t {
            times.push(t);
            distributions.push(snapshot(&q));
        }
        Ok(MasterTrajectory {
            times,
            distributions,
            max_probability_error: max_err,
        })
    }
}

/// Outcome of comparing the master equation's long-time mean against the
/// mean-field stable vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub oracle_dominant: Strategy,
    /// `None` when no vertex is stable in the mean-field classification.
    pub meanfield_stable: Option<Strategy>,
    pub agrees: bool,
}

impl std::fmt::Display for DominanceVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.meanfield_stable, self.agrees) {
            (Some(_), true) => write!(f, "{} dominant, agrees with mean field", self.oracle_dominant),
            (Some(s), false) => write!(
                f,
                "{} dominant, disagrees with mean field (stable vertex {s})",
                self.oracle_dominant
            ),
            (None, _) => write!(f, "{} dominant, mean field has no stable vertex", self.oracle_dominant),
        }
    }
}

pub fn dominance_verdict(q: &ConfigurationDistribution, params: &OracleParams) -> DominanceVerdict {
    let oracle_dominant = mean_occupation(q).dominant();
    let reports = classify_fixed_points(&vertex_payoffs(&params.table, params.gamma), params.temp);
    let meanfield_stable = reports
        .iter()
        .find(|r| r.classification == Stability::Stable)
        .map(|r| r.vertex);
    DominanceVerdict {
        oracle_dominant,
        meanfield_stable,
        agrees: meanfield_stable == Some(oracle_dominant),
    }
}
