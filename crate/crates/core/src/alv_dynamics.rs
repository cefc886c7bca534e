//! Three-species anti-symmetric Lotka-Volterra dynamics driven by Fermi
//! imitation rates.
//!
//! Two orientations of the rate matrix appear here:
//!
//! * the *net rate* `A_XY = w(X -> Y) - w(Y -> X) = tanh((P_Y - P_X) / 2T)`,
//!   positive when `Y` outperforms `X`;
//! * the *growth coupling* `G_XY = A_YX = tanh((P_X - P_Y) / 2T)`, the rate
//!   at which species `X` gains mass from `Y`.
//!
//! The right-hand side `d rho_X / dt = rho_X sum_Y G_XY rho_Y` uses growth
//! couplings, so higher-payoff strategies grow.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum_game::Strategy;

/// Tolerance on simplex membership for validated population states.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Largest per-step simplex repair accepted before the integrator bails.
pub const MAX_SIMPLEX_CORRECTION: f64 = 1e-6;
/// `||d rho / dt||_inf` below which a trajectory counts as equilibrated.
pub const EQUILIBRIUM_THRESHOLD: f64 = 1e-10;
/// Eigenvalues this close to zero mark a vertex as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Densities `(rho_C, rho_D, rho_Q)` on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationState([f64; 3]);

impl PopulationState {
    pub fn new(rho: [f64; 3]) -> Result<Self> {
        if rho.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOLERANCE) {
            return Err(invalid(format!("densities must be nonnegative, got {rho:?}")));
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(invalid(format!("densities must sum to 1, got {rho:?} (sum {sum})")));
        }
        Ok(Self(rho))
    }

    pub fn vertex(species: Strategy) -> Self {
        let mut rho = [0.0; 3];
        rho[species.index()] = 1.0;
        Self(rho)
    }

    pub fn uniform() -> Self {
        Self([1.0 / 3.0; 3])
    }

    pub fn as_array(&self) -> &[f64; 3] {
        &self.0
    }

    pub fn get(&self, species: Strategy) -> f64 {
        self.0[species.index()]
    }

    /// True when every component is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|v| *v > 0.0)
    }

    /// Species with the largest density (ties resolved toward lower index).
    pub fn dominant(&self) -> Strategy {
        let mut best = 0;
        for i in 1..3 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Strategy::ALL[best]
    }
}

/// Fermi selection temperature (named to avoid clashing with the
/// temptation payoff).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SelectionTemperature(f64);

impl SelectionTemperature {
    pub const DEFAULT: f64 = 0.1;

    pub fn new(temp: f64) -> Result<Self> {
        if !(temp > 0.0) || !temp.is_finite() {
            return Err(invalid(format!("temperature must be positive and finite, got {temp}")));
        }
        Ok(Self(temp))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for SelectionTemperature {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

/// Anti-symmetric 3x3 rate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix([[f64; 3]; 3]);

impl TransitionMatrix {
    pub fn zero() -> Self {
        Self([[0.0; 3]; 3])
    }

    /// Builds a matrix from its strict upper triangle `(a01, a02, a12)`.
    pub fn from_upper(a01: f64, a02: f64, a12: f64) -> Self {
        Self([[0.0, a01, a02], [-a01, 0.0, a12], [-a02, -a12, 0.0]])
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        Self([
            [a[0][0], a[1][0], a[2][0]],
            [a[0][1], a[1][1], a[2][1]],
            [a[0][2], a[1][2], a[2][2]],
        ])
    }
}

/// Probability that a player with payoff `p_from` adopts the strategy of a
/// player with payoff `p_to`.
pub fn fermi_rate(p_from: f64, p_to: f64, temp: SelectionTemperature) -> f64 {
    let x = (p_to - p_from) / temp.value();
    if x > 700.0 {
        1.0
    } else if x < -700.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Net rates `A_XY = w(X -> Y) - w(Y -> X)`.
pub fn net_rate_matrix(payoffs: &[f64; 3], temp: SelectionTemperature) -> TransitionMatrix {
    let net = |x: usize, y: usize| {
        fermi_rate(payoffs[x], payoffs[y], temp) - fermi_rate(payoffs[y], payoffs[x], temp)
    };
    TransitionMatrix::from_upper(net(0, 1), net(0, 2), net(1, 2))
}

/// Growth couplings `G = A^T`; `G_XY > 0` when `X` outperforms `Y`.
pub fn growth_matrix(payoffs: &[f64; 3], temp: SelectionTemperature) -> TransitionMatrix {
    net_rate_matrix(payoffs, temp).transpose()
}

/// `d rho_i / dt = rho_i sum_{j != i} G_ij rho_j`.
pub fn alv_rhs(rho: &[f64; 3], growth: &TransitionMatrix) -> [f64; 3] {
    let g = &growth.0;
    let mut out = [0.0; 3];
    for i in 0..3 {
        let mut acc = 0.0;
        for j in 0..3 {
            if j != i {
                acc += g[i][j] * rho[j];
            }
        }
        out[i] = rho[i] * acc;
    }
    out
}

/// Full vector field for state-dependent payoffs.
pub fn meanfield_rhs<F>(rho: &[f64; 3], payoffs: &F, temp: SelectionTemperature) -> [f64; 3]
where
    F: Fn(&[f64; 3]) -> [f64; 3] + ?Sized,
{
    alv_rhs(rho, &growth_matrix(&payoffs(rho), temp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Store every `record_every`-th step (the initial and final states are
    /// always stored). Zero keeps only the endpoints.
    pub record_every: usize,
    /// Stop as soon as `||d rho/dt||_inf` drops below the equilibrium threshold.
    pub stop_at_equilibrium: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            t_end: 1e3,
            dt: 1e-2,
            record_every: 1,
            stop_at_equilibrium: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(invalid(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        Ok(())
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Equilibrium,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 3]>,
    pub termination: Termination,
    /// Largest simplex repair applied over the run.
    pub max_correction: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> PopulationState {
        PopulationState(*self.states.last().expect("trajectory holds the initial state"))
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial time")
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Equilibrium
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t", "rho_C", "rho_D", "rho_Q"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_record([t.to_string(), s[0].to_string(), s[1].to_string(), s[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn axpy(x: &[f64; 3], h: f64, k: &[f64; 3]) -> [f64; 3] {
    [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2]]
}

/// Clamps negatives, renormalizes, and returns the size of the repair.
fn repair_simplex(rho: &mut [f64; 3]) -> f64 {
    let mut correction: f64 = 0.0;
    for v in rho.iter_mut() {
        if *v < 0.0 {
            correction = correction.max(-*v);
            *v = 0.0;
        }
    }
    let sum: f64 = rho.iter().sum();
    correction = correction.max((sum - 1.0).abs());
    for v in rho.iter_mut() {
        *v /= sum;
    }
    correction
}

/// Classical RK4 on the mean-field vector field with the growth matrix
/// recomputed from the current state at every stage.
pub fn integrate<F>(
    rho0: PopulationState,
    payoffs: F,
    temp: SelectionTemperature,
    config: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: Fn(&[f64; 3]) -> [f64; 3],
{
    config.validate()?;
    let f = |x: &[f64; 3]| meanfield_rhs(x, &payoffs, temp);
    let n_steps = (config.t_end / config.dt).round() as u64;
    let dt = if n_steps == 0 { 0.0 } else { config.t_end / n_steps as f64 };

    let mut rho = rho0.0;
    let mut times = vec![0.0];
    let mut states = vec![rho];
    let mut max_correction: f64 = 0.0;
    let mut termination = Termination::TimeLimit;
    let mut t = 0.0;

    let mut k1 = f(&rho);
    for step in 1..=n_steps {
        if config.stop_at_equilibrium && k1.iter().all(|v| v.abs() < EQUILIBRIUM_THRESHOLD) {
            termination = Termination::Equilibrium;
            break;
        }
        let k2 = f(&axpy(&rho, 0.5 * dt, &k1));
        let k3 = f(&axpy(&rho, 0.5 * dt, &k2));
        let k4 = f(&axpy(&rho, dt, &k3));
        for i in 0..3 {
            rho[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = step as f64 * dt;
        let correction = repair_simplex(&mut rho);
        max_correction = max_correction.max(correction);
        if correction > MAX_SIMPLEX_CORRECTION {
            return Err(Error::SimplexDrift {
                t,
                correction,
                tolerance: MAX_SIMPLEX_CORRECTION,
            });
        }
        if config.record_every > 0 && step % config.record_every as u64 == 0 {
            times.push(t);
            states.push(rho);
        }
        k1 = f(&rho);
    }
    if config.stop_at_equilibrium
        && termination == Termination::TimeLimit
        && k1.iter().all(|v| v.abs() < EQUILIBRIUM_THRESHOLD)
    {
        termination = Termination::Equilibrium;
    }
    if *times.last().unwrap() != t {
        times.push(t);
        states.push(rho);
    }
    Ok(Trajectory {
        times,
        states,
        termination,
        max_correction,
    })
}

/// Nonzero spectrum of the Jacobian at a vertex: `{0, G_ji, G_ki}`, with
/// `j < k` the two other species.
pub fn vertex_jacobian_eigenvalues(growth: &TransitionMatrix, vertex: Strategy) -> [f64; 3] {
    let i = vertex.index();
    let mut out = [0.0; 3];
    let mut slot = 1;
    for j in 0..3 {
        if j != i {
            out[slot] = growth.0[j][i];
            slot += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
    Degenerate,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Saddle => "saddle",
            Stability::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub vertex: Strategy,
    pub eigenvalues: [f64; 3],
    pub classification: Stability,
}

pub fn classify_eigenvalues(eigenvalues: &[f64; 3]) -> Stability {
    let (a, b) = (eigenvalues[1], eigenvalues[2]);
    if a.abs() <= DEGENERACY_TOLERANCE || b.abs() <= DEGENERACY_TOLERANCE {
        Stability::Degenerate
    } else if a < 0.0 && b < 0.0 {
        Stability::Stable
    } else if a > 0.0 && b > 0.0 {
        Stability::Unstable
    } else {
        Stability::Saddle
    }
}

/// Classifies the three vertices. Row `i` of `vertex_payoffs` holds the
/// payoffs `(P_C, P_D, P_Q)` evaluated with the population sitting at vertex `i`.
pub fn classify_fixed_points(
    vertex_payoffs: &[[f64; 3]; 3],
    temp: SelectionTemperature,
) -> [FixedPointReport; 3] {
    Strategy::ALL.map(|v| {
        let growth = growth_matrix(&vertex_payoffs[v.index()], temp);
        let eigenvalues = vertex_jacobian_eigenvalues(&growth, v);
        FixedPointReport {
            vertex: v,
            eigenvalues,
            classification: classify_eigenvalues(&eigenvalues),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::quantum_game::Strategy;
    use proptest::prelude::*;

    fn temp(t: f64) -> SelectionTemperature {
        SelectionTemperature::new(t).unwrap()
    }

    #[test]
    fn fermi_examples() {
        let t = temp(0.1);
        assert_eq!(fermi_rate(1.0, 1.0, t), 0.5);
        assert_eq!(fermi_rate(0.0, 1e6, t), 1.0);
        assert_eq!(fermi_rate(1e6, 0.0, t), 0.0);
        // 1 / (1 + e^-2)
        assert_abs_diff_eq!(fermi_rate(0.0, 0.2, t), 0.880_797_077_977_882_3, epsilon = 1e-12);
        assert!(fermi_rate(0.0, f64::MAX, temp(1e-300)).is_finite());
    }

    #[test]
    fn temperature_must_be_positive() {
        assert!(SelectionTemperature::new(0.0).is_err());
        assert!(SelectionTemperature::new(-1.0).is_err());
        assert!(SelectionTemperature::new(f64::NAN).is_err());
    }

    #[test]
    fn net_rate_examples() {
        let t = temp(0.5);
        assert_eq!(net_rate_matrix(&[0.3; 3], t), TransitionMatrix::zero());
        let a = net_rate_matrix(&[0.0, 1.0, 0.0], t);
        assert_abs_diff_eq!(a.get(0, 1), 1f64.tanh(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.get(1, 0), -1f64.tanh(), epsilon = 1e-12);
    }

    #[test]
    fn rhs_examples() {
        let g = TransitionMatrix::from_upper(0.3, -0.7, 0.2);
        for v in Strategy::ALL {
            assert_eq!(alv_rhs(PopulationState::vertex(v).as_array(), &g), [0.0; 3]);
        }
        assert_eq!(alv_rhs(&[0.2, 0.3, 0.5], &TransitionMatrix::zero()), [0.0; 3]);
        let coupling = 0.8;
        let d = alv_rhs(&[0.5, 0.5, 0.0], &TransitionMatrix::from_upper(coupling, 0.1, 0.1));
        assert_abs_diff_eq!(d[0], coupling / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], -coupling / 4.0, epsilon = 1e-15);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn integrate_rejects_bad_config() {
        let cfg = IntegratorConfig { dt: 0.0, ..Default::default() };
        assert!(integrate(PopulationState::uniform(), |_| [0.0; 3], temp(0.1), &cfg).is_err());
        let cfg = IntegratorConfig { t_end: -1.0, ..Default::default() };
        assert!(integrate(PopulationState::uniform(), |_| [0.0; 3], temp(0.1), &cfg).is_err());
    }

    #[test]
    fn vertex_and_flat_payoffs_are_constant() {
        let cfg = IntegratorConfig {
            t_end: 5.0,
            dt: 0.01,
            record_every: 1,
            stop_at_equilibrium: false,
        };
        let payoffs = |r: &[f64; 3]| [r[1], 2.0 * r[0], r[2] - r[0]];
        let tr = integrate(PopulationState::vertex(Strategy::D), payoffs, temp(0.1), &cfg).unwrap();
        assert!(tr.states.iter().all(|s| *s == [0.0, 1.0, 0.0]));
        let start = PopulationState::new([0.2, 0.5, 0.3]).unwrap();
        let tr = integrate(start, |_| [1.0; 3], temp(0.1), &cfg).unwrap();
        assert!(tr.states.iter().all(|s| s == start.as_array()));
        assert_eq!(tr.states.len(), 501);
    }

    #[test]
    fn equilibrium_stops_early() {
        let cfg = IntegratorConfig::default();
        let tr = integrate(PopulationState::vertex(Strategy::Q), |_| [0.0, 1.0, 2.0], temp(0.1), &cfg).unwrap();
        assert!(tr.converged());
        assert_eq!(tr.final_time(), 0.0);
    }

    #[test]
    fn large_step_reports_drift() {
        // A huge step overshoots the simplex and must be flagged, not hidden.
        let cfg = IntegratorConfig {
            t_end: 50.0,
            dt: 5.0,
            record_every: 1,
            stop_at_equilibrium: false,
        };
        let res = integrate(
            PopulationState::new([0.4, 0.3, 0.3]).unwrap(),
            |_| [0.0, 10.0, 20.0],
            temp(0.01),
            &cfg,
        );
        assert!(matches!(res, Err(Error::SimplexDrift { .. })), "{res:?}");
    }

    #[test]
    fn stability_from_payoff_order() {
        // P_C < P_D < P_Q with constant payoffs.
        let p = [0.0, 0.5, 1.0];
        let reports = classify_fixed_points(&[p; 3], temp(0.2));
        assert_eq!(reports[2].classification, Stability::Stable);
        assert_eq!(reports[1].classification, Stability::Saddle);
        assert_eq!(reports[0].classification, Stability::Unstable);
        let eig_q = reports[2].eigenvalues;
        assert_eq!(eig_q[0], 0.0);
        assert!(eig_q[1] < 0.0 && eig_q[2] < 0.0);

        let flat = classify_fixed_points(&[[0.7; 3]; 3], temp(0.2));
        assert!(flat.iter().all(|r| r.classification == Stability::Degenerate));
        assert_eq!(vertex_jacobian_eigenvalues(&TransitionMatrix::zero(), Strategy::C), [0.0; 3]);
    }

    #[test]
    fn dominant_species() {
        assert_eq!(PopulationState::new([0.1, 0.2, 0.7]).unwrap().dominant(), Strategy::Q);
        assert!(PopulationState::new([0.5, 0.6, -0.1]).is_err());
        assert!(PopulationState::new([0.5, 0.6, 0.1]).is_err());
    }

    fn finite_difference_jacobian(rho: &[f64; 3], g: &TransitionMatrix) -> [[f64; 3]; 3] {
        let h = 1e-6;
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut up = *rho;
            let mut dn = *rho;
            up[j] += h;
            dn[j] -= h;
            let fu = alv_rhs(&up, g);
            let fd = alv_rhs(&dn, g);
            for i in 0..3 {
                jac[i][j] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn eigenvalues_3x3(m: &[[f64; 3]; 3]) -> [f64; 3] {
        let mat = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
        let eig = mat.complex_eigenvalues();
        [eig[0].re, eig[1].re, eig[2].re]
    }

    proptest! {
        #[test]
        fn fermi_tanh_identity(pi in -5.0..5.0f64, pj in -5.0..5.0f64, t in 0.01..3.0f64) {
            let temp = temp(t);
            let a = net_rate_matrix(&[pi, pj, 0.0], temp);
            prop_assert!((a.get(0, 1) - ((pj - pi) / (2.0 * t)).tanh()).abs() < 1e-12);
            let e = a.entries();
            for i in 0..3 { for j in 0..3 { prop_assert_eq!(e[i][j], -e[j][i]); } }
        }

        #[test]
        fn rhs_conserves_mass(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64,
                              x in 0.0..1.0f64, y in 0.0..1.0f64) {
            let (x, y) = if x + y > 1.0 { (1.0 - x, 1.0 - y) } else { (x, y) };
            let d = alv_rhs(&[x, y, 1.0 - x - y], &TransitionMatrix::from_upper(a, b, c));
            prop_assert!(d.iter().sum::<f64>().abs() < 1e-14);
        }

        #[test]
        fn vertex_eigenvalues_match_finite_differences(
            a in -0.99..0.99f64, b in -0.99..0.99f64, c in -0.99..0.99f64, v in 0usize..3
        ) {
            let g = TransitionMatrix::from_upper(a, b, c);
            let vertex = Strategy::ALL[v];
            let jac = finite_difference_jacobian(PopulationState::vertex(vertex).as_array(), &g);
            let mut numeric = eigenvalues_3x3(&jac);
            let mut closed = vertex_jacobian_eigenvalues(&g, vertex);
            numeric.sort_by(|x, y| x.partial_cmp(y).unwrap());
            closed.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for k in 0..3 {
                prop_assert!((numeric[k] - closed[k]).abs() < 1e-4, "{numeric:?} vs {closed:?}");
            }
        }
    }
}
