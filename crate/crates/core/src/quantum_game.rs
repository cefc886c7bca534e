//! Two-player entangled prisoner's dilemma evaluated directly on the
//! two-qubit circuit.
//!
//! The players share `J|00>` with `J = exp(i (gamma/2) sigma_y (x) sigma_y)`,
//! each applies one of three single-qubit unitaries, a referee undoes the
//! entangler and measures in the computational basis. Basis order throughout
//! is `|00>, |01>, |10>, |11>` with the first qubit belonging to the row
//! player.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Classical payoffs (temptation, reward, punishment, sucker) with the
/// dilemma ordering `T > R > P > S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    temptation: f64,
    reward: f64,
    punishment: f64,
    sucker: f64,
}

impl PayoffTable {
    pub fn new(temptation: f64, reward: f64, punishment: f64, sucker: f64) -> Result<Self> {
        let vals = [temptation, reward, punishment, sucker];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::PayoffOrdering(format!(
                "payoffs must be finite, got T={temptation}, R={reward}, P={punishment}, S={sucker}"
            )));
        }
        let pairs = [
            ("T > R", temptation, reward),
            ("R > P", reward, punishment),
            ("P > S", punishment, sucker),
        ];
        for (name, hi, lo) in pairs {
            if hi <= lo {
                return Err(Error::PayoffOrdering(format!(
                    "{name} required, got T={temptation}, R={reward}, P={punishment}, S={sucker}"
                )));
            }
        }
        Ok(Self {
            temptation,
            reward,
            punishment,
            sucker,
        })
    }

    pub fn temptation(&self) -> f64 {
        self.temptation
    }
    pub fn reward(&self) -> f64 {
        self.reward
    }
    pub fn punishment(&self) -> f64 {
        self.punishment
    }
    pub fn sucker(&self) -> f64 {
        self.sucker
    }

    /// Multiplies every payoff by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(invalid(format!("scale factor must be positive, got {factor}")));
        }
        Self::new(
            self.temptation * factor,
            self.reward * factor,
            self.punishment * factor,
            self.sucker * factor,
        )
    }
}

/// Entanglement angle in radians, restricted to `[0, pi/2]` where
/// `cos^2(gamma)` is monotone.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EntanglementParam(f64);

impl EntanglementParam {
    pub const MAX: f64 = FRAC_PI_2;

    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=Self::MAX).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, pi/2], got {gamma}")));
        }
        Ok(Self(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Mixing weight `cos^2(gamma)` of the effective payoffs.
    pub fn lambda(self) -> f64 {
        let c = self.0.cos();
        c * c
    }
}

/// The three admissible strategies. The discriminant is the species index
/// used by every population vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    C = 0,
    D = 1,
    Q = 2,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::C, Strategy::D, Strategy::Q];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// `(theta, phi)` of the single-qubit unitary.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Strategy::C => (0.0, 0.0),
            Strategy::D => (PI, 0.0),
            Strategy::Q => (0.0, FRAC_PI_2),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::C => "C",
            Strategy::D => "D",
            Strategy::Q => "Q",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "C" | "c" => Ok(Strategy::C),
            "D" | "d" => Ok(Strategy::D),
            "Q" | "q" => Ok(Strategy::Q),
            other => Err(Error::Parse(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Normalized pure state of two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    amplitudes: [Complex64; 4],
}

impl TwoQubitState {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(invalid(format!("state norm {norm} differs from 1")));
        }
        Ok(Self { amplitudes })
    }

    pub fn basis(index: usize) -> Self {
        let mut amplitudes = [ZERO; 4];
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }
}

/// 3x3 payoff matrix indexed `[row strategy][column strategy]` in order
/// `(C, D, Q)`; entry is the row player's payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix(pub [[f64; 3]; 3]);

impl PayoffMatrix {
    pub fn constant(value: f64) -> Self {
        Self([[value; 3]; 3])
    }

    pub fn get(&self, row: Strategy, col: Strategy) -> f64 {
        self.0[row.index()][col.index()]
    }

    /// Expected payoff of each strategy against the population mix `rho`.
    pub fn apply(&self, rho: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&self.0) {
            *o = row.iter().zip(rho).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &PayoffMatrix) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn pauli_y() -> Mat2 {
    [[ZERO, -I], [I, ZERO]]
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i / 2][j / 2] * b[i % 2][j % 2];
        }
    }
    out
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat4_apply(m: &Mat4, v: &[Complex64; 4]) -> [Complex64; 4] {
    let mut out = [ZERO; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

pub fn dagger4(m: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = m[j][i].conj();
        }
    }
    out
}

pub fn dagger2(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

/// Entangling operator `exp(i (gamma/2) sigma_y (x) sigma_y)`.
///
/// `M = sigma_y (x) sigma_y` is Hermitian with spectrum `{+1, -1}`, so with
/// spectral projectors `(I +- M)/2` the exponential collapses to
/// `cos(gamma/2) I + i sin(gamma/2) M`, exact to rounding.
pub fn entangler(gamma: EntanglementParam) -> Mat4 {
    let m = kron(&pauli_y(), &pauli_y());
    let half = 0.5 * gamma.value();
    let plus = Complex64::from_polar(1.0, half);
    let minus = Complex64::from_polar(1.0, -half);
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let id = if i == j { ONE } else { ZERO };
            let proj_plus = (id + m[i][j]) * 0.5;
            let proj_minus = (id - m[i][j]) * 0.5;
            out[i][j] = plus * proj_plus + minus * proj_minus;
        }
    }
    out
}

/// `U(theta, phi) = [[c, s], [-s, c*]]` with `c = e^{i phi} cos(theta/2)`,
/// `s = sin(theta/2)`.
pub fn strategy_unitary(strategy: Strategy) -> Mat2 {
    let (theta, phi) = strategy.angles();
    let c = Complex64::from_polar(1.0, phi) * (0.5 * theta).cos();
    let s = Complex64::new((0.5 * theta).sin(), 0.0);
    [[c, s], [-s, c.conj()]]
}

/// `J^dagger (U_A (x) U_B) J |00>`.
pub fn final_state(gamma: EntanglementParam, a: Strategy, b: Strategy) -> TwoQubitState {
    let j = entangler(gamma);
    let local = kron(&strategy_unitary(a), &strategy_unitary(b));
    let initial = mat4_apply(&j, TwoQubitState::basis(0).amplitudes());
    let played = mat4_apply(&local, &initial);
    let amplitudes = mat4_apply(&dagger4(&j), &played);
    TwoQubitState { amplitudes }
}

/// Born-rule probabilities of the four measurement outcomes.
pub fn outcome_probs(state: &TwoQubitState) -> [f64; 4] {
    state.amplitudes.map(|a| a.norm_sqr())
}

/// Row-player payoff `R p00 + S p01 + T p10 + P p11`. The column player's
/// payoff is obtained by swapping the strategy arguments.
pub fn pairwise_payoff(
    gamma: EntanglementParam,
    table: &PayoffTable,
    a: Strategy,
    b: Strategy,
) -> f64 {
    let p = outcome_probs(&final_state(gamma, a, b));
    table.reward * p[0] + table.sucker * p[1] + table.temptation * p[2] + table.punishment * p[3]
}

pub fn payoff_matrix_from_circuit(gamma: EntanglementParam, table: &PayoffTable) -> PayoffMatrix {
    let mut m = [[0.0; 3]; 3];
    for a in Strategy::ALL {
        for b in Strategy::ALL {
            m[a.index()][b.index()] = pairwise_payoff(gamma, table, a, b);
        }
    }
    PayoffMatrix(m)
}
