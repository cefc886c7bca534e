//! Agent-based Monte Carlo of the entangled game on explicit networks.
//!
//! Updates are asynchronous: one elementary event picks a focal node and a
//! random neighbor and applies the Fermi imitation rule; one sweep is `N`
//! such events.

pub mod network;
pub mod rng;
pub mod scan;
pub mod sim;

pub use network::{build_erdos_renyi, build_small_world, build_square_lattice, Network};
pub use rng::{derive_seed, rng_from_seed, splitmix64};
pub use scan::{bifurcation_scan, estimate_crossing, network_seed, ScanPoint, ScanResult, ScanTemplate, Topology, TopologyKind};
pub use sim::{mc_event, mc_step, node_payoff, run_experiment, ExperimentResult, PayoffMode, SimParams, SimState};
