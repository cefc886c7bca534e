//! Effective payoffs of the entangled game, critical entanglement values,
//! the analytic phase boundary and the (gamma, r) phase-diagram sweep.

use std::f64::consts::FRAC_PI_4;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alv_dynamics::{integrate, IntegratorConfig, PopulationState, SelectionTemperature};
use crate::error::{invalid, Error, Result};
use crate::quantum_game::{EntanglementParam, PayoffMatrix, PayoffTable, Strategy};

/// One-parameter family `T = 1 + r, R = 1, P = 0, S = -r` that sits on the
/// critical condition `T - P = R - S` for every `r > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameFamily {
    r: f64,
}

impl GameFamily {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(invalid(format!("r must be positive and finite, got {r}")));
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn table(&self) -> PayoffTable {
        PayoffTable::new(1.0 + self.r, 1.0, 0.0, -self.r)
            .expect("r > 0 always yields a dilemma ordering")
    }
}

/// Analytic effective payoff matrix with `lambda = cos^2(gamma)`:
///
/// ```text
/// | R    S    R_l |      R_l = R l + P (1 - l)
/// | T    P    T_l |      T_l = T l + S (1 - l)
/// | R_l  S_l  R   |      S_l = S l + T (1 - l)
/// ```
pub fn effective_payoff_matrix(table: &PayoffTable, gamma: EntanglementParam) -> PayoffMatrix {
    let l = gamma.lambda();
    let (t, r, p, s) = (table.temptation(), table.reward(), table.punishment(), table.sucker());
    let r_l = r * l + p * (1.0 - l);
    let t_l = t * l + s * (1.0 - l);
    let s_l = s * l + t * (1.0 - l);
    PayoffMatrix([[r, s, r_l], [t, p, t_l], [r_l, s_l, r]])
}

/// Mean payoffs `(P_C, P_D, P_Q)` against the population mix `rho`.
pub fn meanfield_payoffs(rho: &PopulationState, table: &PayoffTable, gamma: EntanglementParam) -> [f64; 3] {
    effective_payoff_matrix(table, gamma).apply(rho.as_array())
}

/// Payoff vectors at each vertex, row `i` evaluated at vertex `i`; this is
/// the input expected by `classify_fixed_points`.
pub fn vertex_payoffs(table: &PayoffTable, gamma: EntanglementParam) -> [[f64; 3]; 3] {
    let m = effective_payoff_matrix(table, gamma);
    Strategy::ALL.map(|v| m.apply(PopulationState::vertex(v).as_array()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalGammas {
    /// Above this value the all-Q vertex is stable.
    pub gamma_star_1: f64,
    /// Below this value the all-D vertex is stable.
    pub gamma_star_2: f64,
}

pub fn critical_gammas(table: &PayoffTable) -> CriticalGammas {
    let (t, r, p, s) = (table.temptation(), table.reward(), table.punishment(), table.sucker());
    let ratio1 = ((r - s) / (t - s)).clamp(0.0, 1.0);
    let ratio2 = ((t - p) / (t - s)).clamp(0.0, 1.0);
    CriticalGammas {
        gamma_star_1: ratio1.sqrt().acos(),
        gamma_star_2: ratio2.sqrt().acos(),
    }
}

/// `(T - P) - (R - S)`; zero exactly when the two critical values coincide.
pub fn critical_condition_gap(table: &PayoffTable) -> f64 {
    (table.temptation() - table.punishment()) - (table.reward() - table.sucker())
}

/// Boundary `r* = (1 - cos^2 g) / (2 cos^2 g - 1)`, defined for `g < pi/4`.
pub fn phase_boundary_r(gamma_star: f64) -> Result<f64> {
    if !(0.0..FRAC_PI_4).contains(&gamma_star) {
        return Err(Error::BoundaryOutOfDomain(gamma_star));
    }
    let c2 = gamma_star.cos().powi(2);
    let denom = 2.0 * c2 - 1.0;
    if denom <= 0.0 {
        return Err(Error::BoundaryOutOfDomain(gamma_star));
    }
    Ok((1.0 - c2) / denom)
}

/// Critical entanglement of the family at a given `r` (inverse of
/// [`phase_boundary_r`]).
pub fn family_critical_gamma(r: f64) -> Result<f64> {
    Ok(critical_gammas(&GameFamily::new(r)?.table()).gamma_star_1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rho0: PopulationState,
    pub temp: SelectionTemperature,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rho0: PopulationState::uniform(),
            temp: SelectionTemperature::default(),
            t_end: 1e3,
            dt: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub rho: [f64; 3],
    pub converged: bool,
    /// The integrator bailed out; `rho` then holds the initial state.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub gamma_axis: Vec<f64>,
    pub r_axis: Vec<f64>,
    /// Row-major: `cells[r_index * gamma_axis.len() + gamma_index]`.
    pub cells: Vec<PhaseCell>,
}

fn check_axis(name: &str, axis: &[f64], lo: f64, hi: f64, open_lo: bool) -> Result<()> {
    if axis.is_empty() {
        return Err(invalid(format!("{name} axis is empty")));
    }
    if axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid(format!("{name} axis must be strictly increasing")));
    }
    for &v in axis {
        let below = if open_lo { v <= lo } else { v < lo };
        if below || v > hi || !v.is_finite() {
            return Err(invalid(format!("{name} value {v} out of range")));
        }
    }
    Ok(())
}

/// Evenly spaced points `start, ..., end` (inclusive).
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|k| start + (end - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` points covering `(0, end]`: `end * k / n` for `k = 1..=n`.
pub fn open_linspace(end: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| end * k as f64 / n as f64).collect()
}

/// Runs the mean-field dynamics at every `(gamma, r)` cell. Parallel over
/// cells on the current rayon pool; output does not depend on the pool size.
pub fn sweep_phase_diagram(gamma_axis: &[f64], r_axis: &[f64], config: &SweepConfig) -> Result<PhaseGrid> {
    check_axis("gamma", gamma_axis, 0.0, EntanglementParam::MAX, false)?;
    check_axis("r", r_axis, 0.0, f64::INFINITY, true)?;
    if !config.rho0.is_interior() {
        return Err(invalid("sweep initial state must lie in the open simplex"));
    }
    let integrator = IntegratorConfig {
        t_end: config.t_end,
        dt: config.dt,
        record_every: 0,
        stop_at_equilibrium: true,
    };
    integrator.validate()?;

    let ng = gamma_axis.len();
    let cells = (0..ng * r_axis.len())
        .into_par_iter()
        .map(|idx| {
            let gamma = EntanglementParam::new(gamma_axis[idx % ng]).expect("axis validated");
            let table = GameFamily::new(r_axis[idx / ng]).expect("axis validated").table();
            let matrix = effective_payoff_matrix(&table, gamma);
            match integrate(config.rho0, |rho| matrix.apply(rho), config.temp, &integrator) {
                Ok(tr) => PhaseCell {
                    rho: *tr.final_state().as_array(),
                    converged: tr.converged(),
                    failed: false,
                },
                Err(_) => PhaseCell {
                    rho: *config.rho0.as_array(),
                    converged: false,
                    failed: true,
                },
            }
        })
        .collect();
    Ok(PhaseGrid {
        gamma_axis: gamma_axis.to_vec(),
        r_axis: r_axis.to_vec(),
        cells,
    })
}

/// Linear interpolation of the first upward crossing of `level` by `values`
/// sampled on `axis`.
pub fn first_crossing(axis: &[f64], values: &[f64], level: f64) -> Option<f64> {
    for k in 1..axis.len().min(values.len()) {
        let (a, b) = (values[k - 1] - level, values[k] - level);
        if a <= 0.0 && b > 0.0 {
            return Some(axis[k - 1] + (axis[k] - axis[k - 1]) * (-a) / (b - a));
        }
    }
    None
}

#[derive(Debug, Serialize, Deserialize)]
struct PhaseRow {
    gamma: f64,
    r: f64,
    #[serde(rename = "rho_C")]
    rho_c: f64,
    #[serde(rename = "rho_D")]
    rho_d: f64,
    #[serde(rename = "rho_Q")]
    rho_q: f64,
    converged: u8,
}

impl PhaseGrid {
    pub fn cell(&self, r_index: usize, gamma_index: usize) -> &PhaseCell {
        &self.cells[r_index * self.gamma_axis.len() + gamma_index]
    }

    pub fn row(&self, r_index: usize) -> &[PhaseCell] {
        let ng = self.gamma_axis.len();
        &self.cells[r_index * ng..(r_index + 1) * ng]
    }

    /// Gamma at which `rho_Q` first rises through 1/2 along each `r` row.
    pub fn row_crossings(&self) -> Vec<Option<f64>> {
        (0..self.r_axis.len())
            .map(|ri| {
                let q: Vec<f64> = self.row(ri).iter().map(|c| c.rho[Strategy::Q.index()]).collect();
                first_crossing(&self.gamma_axis, &q, 0.5)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        for (ri, &r) in self.r_axis.iter().enumerate() {
            for (gi, &gamma) in self.gamma_axis.iter().enumerate() {
                let c = self.cell(ri, gi);
                w.serialize(PhaseRow {
                    gamma,
                    r,
                    rho_c: c.rho[0],
                    rho_d: c.rho[1],
                    rho_q: c.rho[2],
                    converged: c.converged as u8,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`PhaseGrid::write_csv`]. The `failed` flag is
    /// not part of the file format and reads back as false.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows: Vec<PhaseRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let mut r_axis: Vec<f64> = Vec::new();
        let mut gamma_axis: Vec<f64> = Vec::new();
        for row in &rows {
            if r_axis.last() != Some(&row.r) {
                r_axis.push(row.r);
            }
            if r_axis.len() == 1 {
                gamma_axis.push(row.gamma);
            }
        }
        if rows.len() != r_axis.len() * gamma_axis.len() {
            return Err(Error::Parse("phase grid is not rectangular".into()));
        }
        let mut cells = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            if row.gamma != gamma_axis[k % gamma_axis.len()] || row.r != r_axis[k / gamma_axis.len()] {
                return Err(Error::Parse(format!("row {} breaks r-major ordering", k + 1)));
            }
            cells.push(PhaseCell {
                rho: [row.rho_c, row.rho_d, row.rho_q],
                converged: row.converged != 0,
                failed: false,
            });
        }
        Ok(Self {
            gamma_axis,
            r_axis,
            cells,
        })
    }
}
