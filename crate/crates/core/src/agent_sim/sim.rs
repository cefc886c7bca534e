use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::rng::{rng_from_seed, SimRng};
use crate::alv_dynamics::{fermi_rate, SelectionTemperature};
use crate::error::{invalid, Result};
use crate::meanfield_phase::effective_payoff_matrix;
use crate::quantum_game::{payoff_matrix_from_circuit, EntanglementParam, PayoffMatrix, PayoffTable, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffMode {
    #[default]
    Sum,
    Average,
}

impl std::str::FromStr for PayoffMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(PayoffMode::Sum),
            "average" => Ok(PayoffMode::Average),
            other => Err(crate::error::Error::Parse(format!(
                "unknown payoff mode {other:?} (expected sum or average)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Row-player payoffs of every strategy pair.
    pub payoffs: PayoffMatrix,
    pub temp: SelectionTemperature,
    /// Number of Monte Carlo sweeps (N elementary events each).
    pub steps: usize,
    pub payoff_mode: PayoffMode,
    /// Trailing sweeps averaged into the reported frequencies.
    pub measure_window: usize,
}

impl SimParams {
    /// Parameters for the entangled game, with payoffs taken from the circuit.
    pub fn for_game(
        table: &PayoffTable,
        gamma: EntanglementParam,
        temp: SelectionTemperature,
        steps: usize,
        measure_window: usize,
    ) -> Result<Self> {
        let payoffs = payoff_matrix_from_circuit(gamma, table);
        debug_assert!(payoffs.max_abs_diff(&effective_payoff_matrix(table, gamma)) < 1e-10);
        let params = Self {
            payoffs,
            temp,
            steps,
            payoff_mode: PayoffMode::Sum,
            measure_window,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be >= 1"));
        }
        if self.measure_window == 0 || self.measure_window > self.steps {
            return Err(invalid(format!(
                "measure window must lie in [1, steps = {}], got {}",
                self.steps, self.measure_window
            )));
        }
        Ok(())
    }
}

/// Strategy field on a network together with its random stream.
#[derive(Debug, Clone)]
pub struct SimState {
    pub strategies: Vec<Strategy>,
    pub rng_seed: u64,
    pub step_count: usize,
    counts: [usize; 3],
    rng: SimRng,
}

impl SimState {
    pub fn new(strategies: Vec<Strategy>, rng_seed: u64) -> Self {
        let mut counts = [0; 3];
        for s in &strategies {
            counts[s.index()] += 1;
        }
        Self {
            strategies,
            rng_seed,
            step_count: 0,
            counts,
            rng: rng_from_seed(rng_seed),
        }
    }

    /// Draws each node's strategy independently from `fractions`, using the
    /// same stream that later drives the dynamics.
    pub fn random(num_nodes: usize, fractions: &[f64; 3], rng_seed: u64) -> Result<Self> {
        if fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(invalid(format!("initial fractions must be nonnegative, got {fractions:?}")));
        }
        let total: f64 = fractions.iter().sum();
        if !(total > 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("initial fractions must sum to 1, got {fractions:?}")));
        }
        let mut rng = rng_from_seed(rng_seed);
        let cut1 = fractions[0];
        let cut2 = fractions[0] + fractions[1];
        let strategies: Vec<Strategy> = (0..num_nodes)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * total;
                if u < cut1 {
                    Strategy::C
                } else if u < cut2 {
                    Strategy::D
                } else {
                    Strategy::Q
                }
            })
            .collect();
        let mut state = Self::new(strategies, rng_seed);
        state.rng = rng;
        Ok(state)
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn frequencies(&self) -> [f64; 3] {
        let n = self.strategies.len() as f64;
        self.counts.map(|c| c as f64 / n)
    }

    pub fn is_monomorphic(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() <= 1
    }
}

/// Total (or mean) payoff of `node` against all of its neighbors.
pub fn node_payoff(net: &Network, state: &SimState, node: usize, params: &SimParams) -> f64 {
    let own = state.strategies[node];
    let row = &params.payoffs.0[own.index()];
    let nbrs = net.neighbors(node);
    let sum: f64 = nbrs.iter().map(|&j| row[state.strategies[j as usize].index()]).sum();
    match params.payoff_mode {
        PayoffMode::Sum => sum,
        PayoffMode::Average => sum / nbrs.len() as f64,
    }
}

/// One elementary update: a random focal node compares itself with a
/// random neighbor and copies it with the Fermi probability. Returns true
/// when the focal node changed strategy.
pub fn mc_event(net: &Network, state: &mut SimState, params: &SimParams) -> bool {
    let n = state.strategies.len();
    let focal = state.rng.gen_range(0..n);
    let nbrs = net.neighbors(focal);
    let reference = nbrs[state.rng.gen_range(0..nbrs.len())] as usize;
    let (from, to) = (state.strategies[focal], state.strategies[reference]);
    if from == to {
        return false;
    }
    let p_focal = node_payoff(net, state, focal, params);
    let p_ref = node_payoff(net, state, reference, params);
    let adopt = fermi_rate(p_focal, p_ref, params.temp);
    if state.rng.gen::<f64>() < adopt {
        state.strategies[focal] = to;
        state.counts[from.index()] -= 1;
        state.counts[to.index()] += 1;
        true
    } else {
        false
    }
}

/// One Monte Carlo sweep: `N` elementary events.
pub fn mc_step(net: &Network, state: &mut SimState, params: &SimParams) {
    // Imitation cannot leave a monomorphic state.
    if !state.is_monomorphic() {
        for _ in 0..state.strategies.len() {
            mc_event(net, state, params);
        }
    }
    state.step_count += 1;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Frequencies after each sweep; entry 0 is the initial state.
    pub series: Vec<[f64; 3]>,
    /// Mean frequencies over the last `measure_window` sweeps.
    pub tail_mean: [f64; 3],
}

impl ExperimentResult {
    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["sweep", "rho_C", "rho_D", "rho_Q"])?;
        for (k, f) in self.series.iter().enumerate() {
            w.write_record([k.to_string(), f[0].to_string(), f[1].to_string(), f[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_experiment(net: &Network, params: &SimParams, rho0: &[f64; 3], seed: u64) -> Result<ExperimentResult> {
    params.validate()?;
    if net.min_degree() == 0 {
        return Err(invalid("network has isolated nodes"));
    }
    let mut state = SimState::random(net.num_nodes(), rho0, seed)?;
    let mut series = Vec::with_capacity(params.steps + 1);
    series.push(state.frequencies());
    let mut tail = [0.0; 3];
    let tail_start = params.steps - params.measure_window;
    for step in 0..params.steps {
        mc_step(net, &mut state, params);
        let f = state.frequencies();
        if step >= tail_start {
            for k in 0..3 {
                tail[k] += f[k];
            }
        }
        series.push(f);
    }
    let w = params.measure_window as f64;
    Ok(ExperimentResult {
        series,
        tail_mean: tail.map(|v| v / w),
    })
}
