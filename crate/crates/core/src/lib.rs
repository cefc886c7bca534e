//! Numerical laboratory for entanglement-driven bifurcations in
//! anti-symmetric Lotka-Volterra dynamics.
//!
//! * [`quantum_game`]: the two-qubit entangled prisoner's dilemma, evaluated
//!   on the circuit.
//! * [`alv_dynamics`]: Fermi rates, the ALV vector field, RK4 integration and
//!   vertex stability.
//! * [`meanfield_phase`]: effective payoffs, critical entanglement, phase
//!   boundary and phase-diagram sweeps.
//! * [`master_oracle`]: exact master equation for small populations.
//! * [`agent_sim`]: network Monte Carlo on lattice, small-world and
//!   Erdős–Rényi graphs.
//! * [`cli`]: the `alvlab` command-line driver.

pub mod agent_sim;
pub mod alv_dynamics;
pub mod cli;
pub mod error;
pub mod master_oracle;
pub mod meanfield_phase;
pub mod quantum_game;

pub use error::{Error, Result};
