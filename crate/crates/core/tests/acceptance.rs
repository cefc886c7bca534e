//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::f64::consts::FRAC_PI_2;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use alvlab::agent_sim::{bifurcation_scan, rng_from_seed, PayoffMode, ScanTemplate, Topology};
use alvlab::alv_dynamics::{
    classify_fixed_points, fermi_rate, integrate, IntegratorConfig, PopulationState, SelectionTemperature, Stability,
};
use alvlab::master_oracle::{
    dominance_verdict, Configuration, ConfigurationDistribution, EvolveConfig, MasterEquation, OracleParams,
};
use alvlab::meanfield_phase::{
    critical_gammas, family_critical_gamma, linspace, open_linspace, sweep_phase_diagram, vertex_payoffs, GameFamily,
    SweepConfig,
};
use alvlab::quantum_game::{payoff_matrix_from_circuit, EntanglementParam, PayoffTable, Strategy};

/// arccos(sqrt(2/3)).
const GAMMA_STAR_R1: f64 = 0.615_479_708_670_387_3;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn family(r: f64) -> PayoffTable {
    GameFamily::new(r).unwrap().table()
}

fn gamma(g: f64) -> EntanglementParam {
    EntanglementParam::new(g).unwrap()
}

fn temp() -> SelectionTemperature {
    SelectionTemperature::default()
}

/// The effective matrix written out entry by entry.
fn expected_matrix(t: &PayoffTable, g: f64) -> [[f64; 3]; 3] {
    let l = g.cos().powi(2);
    let (tt, r, p, s) = (t.temptation(), t.reward(), t.punishment(), t.sucker());
    let r_l = r * l + p * (1.0 - l);
    let t_l = tt * l + s * (1.0 - l);
    let s_l = s * l + tt * (1.0 - l);
    [[r, s, r_l], [tt, p, t_l], [r_l, s_l, r]]
}

fn circuit_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(101);
    let mut tables = vec![family(1.0), PayoffTable::new(5.0, 3.0, 1.0, 0.0).unwrap()];
    while tables.len() < 5 {
        let mut v: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if let Ok(t) = PayoffTable::new(v[0], v[1], v[2], v[3]) {
            tables.push(t);
        }
    }
    let mut worst = 0.0f64;
    for t in &tables {
        for g in linspace(0.0, FRAC_PI_2, 101) {
            let m = payoff_matrix_from_circuit(gamma(g), t);
            let e = expected_matrix(t, g);
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max((m.0[i][j] - e[i][j]).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(1),
        format!("max |entry error| = {worst:.2e} over 505 matrices in {elapsed:.2?}"),
    )
}

fn fermi_identity() -> Outcome {
    let mut rng = rng_from_seed(202);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let pi: f64 = rng.gen_range(-10.0..10.0);
        let pj: f64 = rng.gen_range(-10.0..10.0);
        let t = SelectionTemperature::new(rng.gen_range(0.01..5.0)).unwrap();
        let net = fermi_rate(pi, pj, t) - fermi_rate(pj, pi, t);
        worst = worst.max((net - ((pj - pi) / (2.0 * t.value())).tanh()).abs());
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} over 10^4 draws"))
}

fn random_table(rng: &mut impl Rng) -> PayoffTable {
    loop {
        let mut v: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if let Ok(t) = PayoffTable::new(v[0], v[1], v[2], v[3]) {
            return t;
        }
    }
}

fn conservation() -> Outcome {
    let mut rng = rng_from_seed(303);
    let cfg = IntegratorConfig {
        t_end: 1e3,
        dt: 1e-2,
        record_every: 1,
        stop_at_equilibrium: false,
    };
    let (mut worst_sum, mut min_rho, mut worst_corr) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let table = random_table(&mut rng);
        let g = gamma(rng.gen_range(0.0..FRAC_PI_2));
        let t = SelectionTemperature::new(rng.gen_range(0.05..1.0)).unwrap();
        let raw: [f64; 3] = [rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0)];
        let total: f64 = raw.iter().sum();
        let rho0 = PopulationState::new(raw.map(|x| x / total)).unwrap();
        let m = payoff_matrix_from_circuit(g, &table);
        let tr = match integrate(rho0, |r| m.apply(r), t, &cfg) {
            Ok(tr) => tr,
            Err(e) => return outcome(false, format!("integration failed: {e}")),
        };
        worst_corr = worst_corr.max(tr.max_correction);
        for a in &tr.states {
            worst_sum = worst_sum.max((a.iter().sum::<f64>() - 1.0).abs());
            min_rho = a.iter().fold(min_rho, |m, &x| m.min(x));
        }
    }
    outcome(
        worst_sum <= 1e-9 && min_rho >= -1e-9 && worst_corr <= 1e-9,
        format!("max |sum-1| = {worst_sum:.2e}, min rho = {min_rho:.2e}, largest simplex repair = {worst_corr:.2e}"),
    )
}

/// With C absent, the family's D-versus-Q payoff gap is a constant `k`, so
/// `rho_Q` obeys a logistic law with rate `tanh(k / 2 temp)`.
fn logistic_oracle() -> Outcome {
    let r = 1.0;
    let g: f64 = 0.9;
    let lambda = g.cos().powi(2);
    let k = 1.0 + r - (1.0 + 2.0 * r) * lambda;
    let rate = (k / (2.0 * temp().value())).tanh();
    let x0 = 0.1;
    let table = family(r);
    let m = payoff_matrix_from_circuit(gamma(g), &table);
    let cfg = IntegratorConfig {
        t_end: 60.0,
        dt: 1e-3,
        record_every: 1,
        stop_at_equilibrium: false,
    };
    let tr = integrate(PopulationState::new([0.0, 1.0 - x0, x0]).unwrap(), |p| m.apply(p), temp(), &cfg).unwrap();
    let mut sup = 0.0f64;
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let e = (rate * t).exp();
        let exact = x0 * e / (1.0 - x0 + x0 * e);
        sup = sup.max((s[2] - exact).abs()).max(s[0].abs());
    }
    outcome(sup <= 1e-6, format!("sup-norm error {sup:.2e} over t in [0, 60], dt = 1e-3"))
}

fn critical_condition() -> Outcome {
    let mut worst_gap = 0.0f64;
    for r in [0.2, 0.5, 1.0, 2.0] {
        let c = critical_gammas(&family(r));
        worst_gap = worst_gap.max((c.gamma_star_1 - c.gamma_star_2).abs());
    }
    let c1 = critical_gammas(&family(1.0));
    let exact = (2.0f64 / 3.0).sqrt().acos();
    let dev = (c1.gamma_star_1 - exact).abs().max((c1.gamma_star_2 - exact).abs());
    outcome(
        worst_gap < 1e-12 && dev < 1e-12,
        format!("max |g1-g2| = {worst_gap:.2e}; r=1 gives {:.6} (|dev| = {dev:.2e})", c1.gamma_star_1),
    )
}

fn bifurcation_exchange() -> Outcome {
    let start = Instant::now();
    let table = family(1.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, winner) in [(0.5655, Strategy::D), (0.6655, Strategy::Q)] {
        let m = payoff_matrix_from_circuit(gamma(g), &table);
        let tr = integrate(PopulationState::uniform(), |p| m.apply(p), temp(), &IntegratorConfig::default()).unwrap();
        let share = tr.final_state().get(winner);
        let c = classify_fixed_points(&vertex_payoffs(&table, gamma(g)), temp())[Strategy::C.index()].classification;
        ok &= share > 0.99 && c == Stability::Saddle;
        parts.push(format!("gamma {g}: rho_{winner} = {share:.6}, C {c}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    outcome(ok, format!("{} in {elapsed:.2?}", parts.join("; ")))
}

fn phase_boundary() -> Outcome {
    let start = Instant::now();
    let gamma_axis = linspace(0.0, 0.78, 61);
    let r_axis = open_linspace(3.0, 61);
    let cell = gamma_axis[1] - gamma_axis[0];
    let grid = match sweep_phase_diagram(&gamma_axis, &r_axis, &SweepConfig::default()) {
        Ok(g) => g,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let crossings = grid.row_crossings();
    let (mut checked, mut bad, mut worst) = (0, 0, 0.0f64);
    for (&r, c) in r_axis.iter().zip(&crossings) {
        let target = family_critical_gamma(r).unwrap();
        if target > *gamma_axis.last().unwrap() {
            continue;
        }
        checked += 1;
        match c {
            Some(x) => {
                let d = (x - target).abs() / cell;
                worst = worst.max(d);
                if d > 1.0 {
                    bad += 1;
                }
            }
            None => bad += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bad == 0 && checked > 0 && elapsed < Duration::from_secs(300),
        format!("{checked} rows checked, {bad} off by more than a cell, worst {worst:.3} cells, {elapsed:.2?}"),
    )
}

fn saddle_persistence() -> Outcome {
    let mut stable = 0;
    for g in linspace(0.0, FRAC_PI_2, 20) {
        for r in open_linspace(3.0, 20) {
            let c = classify_fixed_points(&vertex_payoffs(&family(r), gamma(g)), temp())[Strategy::C.index()];
            if c.classification == Stability::Stable {
                stable += 1;
            }
        }
    }
    outcome(stable == 0, format!("C stable in {stable} of 400 grid points"))
}

/// Derivative at zero of a single RK4 step of length `s`, which is a quartic
/// in `s`, so the five-point forward stencil is exact.
fn stencil_moment(eq: &MasterEquation, q: &ConfigurationDistribution, h: f64) -> [f64; 3] {
    let mut f = vec![q.mean_counts()];
    for k in 1..=4 {
        let s = k as f64 * h;
        let tr = eq.evolve(q, &EvolveConfig { t_end: s, dt: s, record_every: 0 }).unwrap();
        f.push(tr.final_distribution().mean_counts());
    }
    let mut out = [0.0; 3];
    for x in 0..3 {
        out[x] = (-25.0 * f[0][x] + 48.0 * f[1][x] - 36.0 * f[2][x] + 16.0 * f[3][x] - 3.0 * f[4][x]) / (12.0 * h);
    }
    out
}

fn master_oracle() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [20u32, 30] {
        for g in [0.3, 0.9] {
            let params = OracleParams {
                table: family(1.0),
                gamma: gamma(g),
                temp: temp(),
            };
            let eq = MasterEquation::new(n, params).unwrap();
            let space = Arc::clone(eq.space());
            let dt = eq.suggested_dt();

            let mut absorbing = true;
            for s in Strategy::ALL {
                let mut counts = [0; 3];
                counts[s.index()] = n;
                let v = Configuration::new(counts);
                absorbing &= eq.total_outflow(&v) == Some(0.0);
                let q = ConfigurationDistribution::point_mass(Arc::clone(&space), v).unwrap();
                let tr = eq.evolve(&q, &EvolveConfig { t_end: 1.0, dt, record_every: 0 }).unwrap();
                absorbing &= tr.final_distribution().probs() == q.probs();
            }

            let third = n / 3;
            let start_cfg = Configuration::new([third, third, n - 2 * third]);
            let q0 = ConfigurationDistribution::point_mass(Arc::clone(&space), start_cfg).unwrap();
            let early = eq.evolve(&q0, &EvolveConfig { t_end: 1.0, dt, record_every: 0 }).unwrap();
            let q1 = early.final_distribution();
            let fd = stencil_moment(&eq, q1, dt / 2.0);
            let exact = eq.moment_derivative(q1);
            let moment_err = (0..3).map(|x| (fd[x] - exact[x]).abs()).fold(0.0, f64::max);

            let tr = eq.evolve(&q0, &EvolveConfig { t_end: 20.0, dt, record_every: 0 }).unwrap();
            let prob_err = tr.max_probability_error.max(early.max_probability_error);
            let verdict = dominance_verdict(tr.final_distribution(), &params);

            ok &= absorbing && moment_err <= 1e-8 && prob_err <= 1e-9 && verdict.agrees;
            parts.push(format!(
                "N={n} gamma={g}: |dP|={prob_err:.1e} moment={moment_err:.1e} absorbing={absorbing} {verdict}"
            ));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    outcome(ok, format!("{} ({elapsed:.2?})", parts.join("; ")))
}

fn agent_based() -> Outcome {
    let start = Instant::now();
    let template = ScanTemplate {
        table: family(1.0),
        temp: temp(),
        steps: 10_000,
        measure_window: 1_000,
        payoff_mode: PayoffMode::Sum,
        rho0: [1.0 / 3.0; 3],
    };
    let axis: Vec<f64> = (0..15).map(|k| ((0.3 + 0.05 * k as f64) * 1e6).round() / 1e6).collect();
    let topologies = [
        Topology::Lattice { side: 50, periodic: true },
        Topology::SmallWorld { side: 50, rewire_p: 0.01 },
        Topology::ErdosRenyi { num_nodes: 2500, avg_degree: 4.0 },
    ];
    let mut ok = true;
    let mut hats = Vec::new();
    let mut parts = Vec::new();
    for topo in topologies {
        match bifurcation_scan(|s| topo.build(s), &template, &axis, 3, 2024) {
            Ok(scan) => match scan.crossing {
                Some(c) => {
                    ok &= (c - GAMMA_STAR_R1).abs() <= 0.1;
                    hats.push(c);
                    parts.push(format!("{} {c:.4}", topo.name()));
                }
                None => {
                    ok = false;
                    parts.push(format!("{} no crossing", topo.name()));
                }
            },
            Err(e) => {
                ok = false;
                parts.push(format!("{} failed: {e}", topo.name()));
            }
        }
    }
    for i in 0..hats.len() {
        for j in i + 1..hats.len() {
            ok &= (hats[i] - hats[j]).abs() <= 0.1;
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(900);
    outcome(ok, format!("crossings {} ({elapsed:.2?})", parts.join(", ")))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_alvlab"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["simulate", "--seed", "7", "--topology", "lattice", "--side", "16", "--steps", "300", "--replicates", "2"],
        &["simulate", "--seed", "7", "--topology", "smallworld", "--side", "16", "--steps", "300", "--replicates", "2"],
        &["simulate", "--seed", "7", "--topology", "er", "--nodes", "256", "--steps", "300", "--replicates", "2"],
        &["simulate", "--seed", "7", "--topology", "er", "--nodes", "256", "--steps", "300", "--gamma", "0.62"],
    ];
    let mut identical = 0;
    for args in runs {
        match (run_cli(args), run_cli(args)) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() => identical += 1,
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("{args:?} failed: {e}")),
            _ => {}
        }
    }
    outcome(identical == runs.len(), format!("{identical}/{} commands byte-identical on rerun", runs.len()))
}

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("circuit/matrix oracle", circuit_oracle),
        ("fermi/tanh identity", fermi_identity),
        ("conservation & positivity", conservation),
        ("logistic oracle", logistic_oracle),
        ("critical condition", critical_condition),
        ("bifurcation exchange", bifurcation_exchange),
        ("phase boundary", phase_boundary),
        ("saddle persistence", saddle_persistence),
        ("master-equation oracle", master_oracle),
        ("agent-based bifurcation", agent_based),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
