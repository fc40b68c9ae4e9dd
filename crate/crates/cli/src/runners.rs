//! One runner per experiment kind. Each returns a typed report (the body
//! of the JSON output) and the tables written as CSV.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qfilter::density::reduce_to_site;
use qfilter::ensemble::{binomial_std_error, trajectory_seed, ScalarStats};
use qfilter::feedback::{
    classify_reduction, fit_exponential_rate, nearest_equilibrium, twoqubit_laws, FeedbackLaw,
    LyapunovReport, ReductionOutcome,
};
use qfilter::generator::{
    dpp_check, dynkin_check, ControlGrid, CostSpec, DppConfig, DppReport, DynkinReport, Functional,
    DEFAULT_DPP_BUDGET,
};
use qfilter::meanfield::{fixed_point_residual, ising_kernel, picard_solve, PicardResult};
use qfilter::nbody::{
    assemble_nbody, chaos_experiment, product_state, ChaosReport, NBodyComponents,
};
use qfilter::pauli::{sigma_x, sigma_z, two_qubit_equilibria};
use qfilter::sampling::{random_density, random_pure};
use qfilter::sme::{measurement_superop_of, qubit_sigma_z_model};
use qfilter::{
    embed_site, lindblad_ode, ControlLaw, Density, Matrix, Model, SiteOperator, ZeroControl,
};

use crate::config::{ControlMode, ExperimentConfig, Interaction};
use crate::stats::{sample_ensemble, ProbePoint};
use crate::table::ResultTable;
use crate::AppResult;

/// Report plus tables of one experiment.
#[derive(Clone, Debug)]
pub struct Run<R> {
    pub report: R,
    pub tables: Vec<ResultTable>,
}

/// Bloch coordinates of a 2×2 state.
pub fn bloch_xyz(m: &Matrix) -> [f64; 3] {
    let r01 = m[(0, 1)];
    [2.0 * r01.re, -2.0 * r01.im, (m[(0, 0)] - m[(1, 1)]).re]
}

fn fidelity(m: &Matrix, target: &Density) -> f64 {
    m.trace_product(target.matrix())
        .expect("dimensions agree")
        .re
}

fn lyapunov_of(f: f64) -> f64 {
    (1.0 - f).clamp(0.0, 1.0).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardSummary {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub std_error: f64,
}

impl PicardSummary {
    fn of(p: &PicardResult<f64>) -> Self {
        Self {
            iterations: p.iterations,
            residuals: p.residuals.clone(),
            std_error: p.std_error,
        }
    }
}

/// Single-qubit model `L = σz`, control `σx`; with the Ising interaction
/// the Hamiltonian carries the self-consistent flow `ξ_z(t)σz`, solved by
/// Picard iteration under `control`.
fn qubit_model(
    cfg: &ExperimentConfig,
    rho0: &Density,
    control: &dyn ControlLaw<f64>,
) -> AppResult<(Model, Option<PicardResult<f64>>)> {
    let base = qubit_sigma_z_model();
    match cfg.interaction() {
        Interaction::None => Ok((base, None)),
        Interaction::Ising => {
            let mut flat = cfg.integrator();
            flat.record_stride = 1;
            let kernel = ising_kernel();
            let mf = picard_solve(rho0, &base, &kernel, control, &flat, &cfg.picard.core())?;
            let model = base.with_hook(Arc::new(mf.flow.hook(&kernel)?))?;
            Ok((model, Some(mf)))
        }
    }
}

fn flow_table(cfg: &ExperimentConfig, mf: &PicardResult<f64>) -> ResultTable {
    let mut t = ResultTable::new("flow", &["t", "x", "y", "z"]);
    let stride = cfg.stride();
    let last = mf.flow.len() - 1;
    for (k, s) in mf.flow.states.iter().enumerate() {
        if k % stride == 0 || k == last {
            let [x, y, z] = bloch_xyz(s.matrix());
            t.push(vec![mf.flow.times[k], x, y, z]);
        }
    }
    t
}

const QUBIT_COLUMNS: [&str; 7] = ["x", "y", "z", "V", "alpha", "Y", "fidelity"];

fn qubit_probe(target: &Density) -> impl Fn(&ProbePoint<'_>) -> Vec<f64> + Sync + '_ {
    move |p| {
        let [x, y, z] = bloch_xyz(p.state);
        let f = fidelity(p.state, target);
        vec![x, y, z, lyapunov_of(f), p.controls[0], p.records[0], f]
    }
}

// ---------------------------------------------------------------- reduction

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleCheck {
    pub time: f64,
    pub mean_z: f64,
    pub std_error: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    pub z0: f64,
    pub trajectories: usize,
    pub threshold: f64,
    pub excited_fraction: f64,
    pub ground_fraction: f64,
    pub undecided_fraction: f64,
    /// `(1 + z₀)/2`.
    pub predicted_excited: f64,
    pub binomial_std_error: f64,
    pub split_within_3se: bool,
    pub classified_at_least_99pct: bool,
    pub martingale: Vec<MartingaleCheck>,
    pub repair_rate: f64,
    pub picard: Option<PicardSummary>,
}

impl ReductionReport {
    pub fn passes(&self) -> bool {
        self.split_within_3se
            && self.classified_at_least_99pct
            && self.martingale.iter().all(|m| m.passes)
    }
}

pub fn reduction(cfg: &ExperimentConfig) -> AppResult<Run<ReductionReport>> {
    let rho0 = cfg.initial.density()?;
    let control = ZeroControl::new(1);
    let (model, mf) = qubit_model(cfg, &rho0, &control)?;
    let target = cfg.target.density();
    let s = sample_ensemble(
        &rho0,
        &model,
        &control,
        &cfg.integrator(),
        cfg.trajectories,
        &QUBIT_COLUMNS,
        qubit_probe(&target),
    )?;
    let zc = s.column_index("z");
    let z0 = bloch_xyz(rho0.matrix())[2];
    let terminal = s.terminal(zc);
    let m = terminal.len() as f64;
    let count = |o: ReductionOutcome| {
        terminal
            .iter()
            .filter(|&&z| classify_reduction(z, cfg.threshold) == o)
            .count() as f64
            / m
    };
    let excited = count(ReductionOutcome::Excited);
    let ground = count(ReductionOutcome::Ground);
    let predicted = (1.0 + z0) / 2.0;
    let se = binomial_std_error(predicted, terminal.len());
    let mean_z = s.mean_path(zc);
    let martingale = cfg
        .check_times()
        .iter()
        .map(|&t| {
            let k = s.index_near(t);
            let st = &mean_z[k];
            MartingaleCheck {
                time: s.times[k],
                mean_z: st.mean(),
                std_error: st.std_error(),
                passes: (st.mean() - z0).abs() <= 3.0 * st.std_error(),
            }
        })
        .collect();
    let report = ReductionReport {
        z0,
        trajectories: cfg.trajectories,
        threshold: cfg.threshold,
        excited_fraction: excited,
        ground_fraction: ground,
        undecided_fraction: 1.0 - excited - ground,
        predicted_excited: predicted,
        binomial_std_error: se,
        split_within_3se: (excited - predicted).abs() <= 3.0 * se,
        classified_at_least_99pct: excited + ground >= 0.99,
        martingale,
        repair_rate: s.summary.repair_rate(),
        picard: mf.as_ref().map(PicardSummary::of),
    };
    let mut tables = vec![
        s.traces_table("traces", cfg.traces),
        s.summary_table("ensemble"),
        s.terminal_table("terminal"),
    ];
    if let Some(mf) = &mf {
        tables.push(flow_table(cfg, mf));
    }
    Ok(Run { report, tables })
}

// ---------------------------------------------------------------- stabilize

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub fitted_rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
}

impl FitSummary {
    fn of(r: &LyapunovReport) -> Self {
        Self {
            fitted_rate: r.fitted_rate,
            intercept: r.intercept,
            r_squared: r.r_squared,
            window: [r.fit_window.0, r.fit_window.1],
        }
    }

    /// Negative slope with `R² > 0.9`.
    pub fn decays(&self) -> bool {
        self.fitted_rate < 0.0 && self.r_squared > 0.9
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizeReport {
    pub trajectories: usize,
    pub fidelity_threshold: f64,
    /// Fraction of seeds with `tr(γ_T ϱ*)` above the threshold.
    pub stabilized_fraction: f64,
    pub mean_terminal_fidelity: f64,
    pub lyapunov_fit: FitSummary,
    pub clip_rate: f64,
    pub repair_rate: f64,
    pub picard: Option<PicardSummary>,
}

impl StabilizeReport {
    pub fn passes(&self) -> bool {
        self.stabilized_fraction >= 0.95 && self.lyapunov_fit.decays()
    }
}

pub fn stabilize(cfg: &ExperimentConfig) -> AppResult<Run<StabilizeReport>> {
    let rho0 = cfg.initial.density()?;
    let target = cfg.target.density();
    let law = FeedbackLaw::mean_field(
        target.clone(),
        cfg.fidelity_gain(),
        cfg.commutator_gain(),
        cfg.alpha_max,
    )?;
    let (model, mf) = qubit_model(cfg, &rho0, &law)?;
    let s = sample_ensemble(
        &rho0,
        &model,
        &law,
        &cfg.integrator(),
        cfg.trajectories,
        &QUBIT_COLUMNS,
        qubit_probe(&target),
    )?;
    let fc = s.column_index("fidelity");
    let terminal = s.terminal(fc);
    let thr = cfg.fidelity_threshold();
    let stabilized = terminal.iter().filter(|&&f| f > thr).count() as f64 / terminal.len() as f64;
    let mean_v: Vec<f64> = s
        .mean_path(s.column_index("V"))
        .iter()
        .map(|st| st.mean())
        .collect();
    let fit = fit_exponential_rate(&s.times, &mean_v, {
        let [a, b] = cfg.fit_window();
        (a, b)
    })?;
    let report = StabilizeReport {
        trajectories: cfg.trajectories,
        fidelity_threshold: thr,
        stabilized_fraction: stabilized,
        mean_terminal_fidelity: ScalarStats::from_samples(terminal.iter().copied()).mean(),
        lyapunov_fit: FitSummary::of(&fit),
        clip_rate: s.summary.clip_events as f64 / s.summary.steps.max(1) as f64,
        repair_rate: s.summary.repair_rate(),
        picard: mf.as_ref().map(PicardSummary::of),
    };
    let mut tables = vec![
        s.traces_table("traces", cfg.traces),
        s.summary_table("ensemble"),
        s.terminal_table("terminal"),
    ];
    if let Some(mf) = &mf {
        tables.push(flow_table(cfg, mf));
    }
    Ok(Run { report, tables })
}

// ---------------------------------------------------------------- two qubits

#[derive(Clone, Debug, Serialize)]
pub struct TwoQubitReport {
    pub controlled: bool,
    pub trajectories: usize,
    pub fidelity_threshold: f64,
    /// Fraction of seeds with `tr(ρ_T ρ_ge)` above the threshold.
    pub target_fraction: f64,
    pub equilibrium_radius: f64,
    /// Fraction of seeds ending within the radius of some equilibrium.
    pub near_equilibrium_fraction: f64,
    /// Terminal counts near `ρ_gg, ρ_ge, ρ_eg, ρ_ee`, then undecided.
    pub equilibrium_counts: [usize; 5],
    pub mean_terminal_fidelity: f64,
    pub repair_rate: f64,
}

impl TwoQubitReport {
    pub fn passes(&self) -> bool {
        if self.controlled {
            self.target_fraction >= 0.90
        } else {
            self.near_equilibrium_fraction >= 0.99
        }
    }
}

const TWO_QUBIT_COLUMNS: [&str; 14] = [
    "x1",
    "y1",
    "z1",
    "x2",
    "y2",
    "z2",
    "fidelity",
    "distance",
    "equilibrium",
    "V",
    "alpha_a",
    "alpha_b",
    "Y1",
    "Y2",
];

pub fn twoqubit(cfg: &ExperimentConfig, controlled: bool) -> AppResult<Run<TwoQubitReport>> {
    let site = cfg.initial.density()?;
    let rho0 = product_state(&site, 2);
    let nb = assemble_nbody(2, &NBodyComponents::ising())?;
    let gains = (cfg.commutator_gain(), cfg.fidelity_gain());
    let control: Box<dyn ControlLaw<f64>> = if controlled {
        Box::new(twoqubit_laws(gains, gains, cfg.alpha_max)?)
    } else {
        Box::new(ZeroControl::new(2))
    };
    let equilibria = two_qubit_equilibria::<f64>();
    let target = Density::new(equilibria[1].1.clone())?;
    let probe = |p: &ProbePoint<'_>| {
        let a = reduce_to_site(p.state, 1, 2, 2).expect("two sites");
        let b = reduce_to_site(p.state, 2, 2, 2).expect("two sites");
        let [x1, y1, z1] = bloch_xyz(&a);
        let [x2, y2, z2] = bloch_xyz(&b);
        let f = fidelity(p.state, &target);
        let d = equilibria
            .iter()
            .map(|(_, e)| p.state.hs_distance(e).expect("same dim"))
            .fold(f64::INFINITY, f64::min);
        let near = nearest_equilibrium(p.state, cfg.equilibrium_radius).expect("same dim");
        vec![
            x1,
            y1,
            z1,
            x2,
            y2,
            z2,
            f,
            d,
            near.map_or(-1.0, |k| k as f64),
            lyapunov_of(f),
            p.controls[0],
            p.controls[1],
            p.records[0],
            p.records[1],
        ]
    };
    let s = sample_ensemble(
        &rho0,
        nb.model(),
        control.as_ref(),
        &cfg.integrator(),
        cfg.trajectories,
        &TWO_QUBIT_COLUMNS,
        probe,
    )?;
    let m = cfg.trajectories as f64;
    let fid = s.terminal(s.column_index("fidelity"));
    let dist = s.terminal(s.column_index("distance"));
    let thr = cfg.fidelity_threshold();
    let mut counts = [0usize; 5];
    for e in s.terminal(s.column_index("equilibrium")) {
        counts[if e < 0.0 { 4 } else { e as usize }] += 1;
    }
    let report = TwoQubitReport {
        controlled,
        trajectories: cfg.trajectories,
        fidelity_threshold: thr,
        target_fraction: fid.iter().filter(|&&f| f > thr).count() as f64 / m,
        equilibrium_radius: cfg.equilibrium_radius,
        near_equilibrium_fraction: dist
            .iter()
            .filter(|&&d| d <= cfg.equilibrium_radius)
            .count() as f64
            / m,
        equilibrium_counts: counts,
        mean_terminal_fidelity: ScalarStats::from_samples(fid.iter().copied()).mean(),
        repair_rate: s.summary.repair_rate(),
    };
    Ok(Run {
        report,
        tables: vec![
            s.traces_table("traces", cfg.traces),
            s.summary_table("ensemble"),
            s.terminal_table("terminal"),
        ],
    })
}

// ---------------------------------------------------------------- chaos

#[derive(Clone, Debug, Serialize)]
pub struct ChaosSummary {
    #[serde(flatten)]
    pub report: ChaosReport,
    /// Distances non-increasing in `N` within two combined standard errors.
    pub non_increasing: bool,
}

pub fn chaos(cfg: &ExperimentConfig) -> AppResult<Run<ChaosSummary>> {
    let rho0 = cfg.initial.density()?;
    let report = chaos_experiment(
        &rho0,
        &cfg.ns,
        cfg.trajectories,
        &cfg.integrator(),
        &cfg.picard.core(),
    )?;
    let mut distances =
        ResultTable::new("distances", &["N", "distance", "std_error", "trajectories"]);
    for k in 0..report.ns.len() {
        distances.push(vec![
            report.ns[k] as f64,
            report.distances[k],
            report.std_errors[k],
            report.ensemble_sizes[k] as f64,
        ]);
    }
    let mut marginals = ResultTable::new("marginals", &["N", "t", "z", "x"]);
    for (k, &n) in report.ns.iter().enumerate() {
        for (j, &t) in report.times.iter().enumerate() {
            let [z, x] = report.site_paths[k][j];
            marginals.push(vec![n as f64, t, z, x]);
        }
    }
    let mut flow = ResultTable::new("flow", &["t", "z", "x"]);
    for (j, &t) in report.times.iter().enumerate() {
        let [z, x] = report.flow_path[j];
        flow.push(vec![t, z, x]);
    }
    let non_increasing = report.non_increasing_within(2.0);
    Ok(Run {
        report: ChaosSummary {
            report,
            non_increasing,
        },
        tables: vec![distances, marginals, flow],
    })
}

// ---------------------------------------------------------------- picard

#[derive(Clone, Debug, Serialize)]
pub struct FloorPoint {
    pub ensemble_size: usize,
    pub iterations: usize,
    /// Mean fresh-seed residual `sup_t ‖Ξ̂(ξ) − ξ‖₂` at the fixed point.
    pub residual: f64,
    pub residual_std_error: f64,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub control: ControlMode,
    pub ensemble_size: usize,
    pub tolerance: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub std_error: f64,
    /// Residuals decrease strictly while above the Monte Carlo floor
    /// (the final iterate's largest per-time standard error).
    pub decreasing_until_floor: bool,
    pub converged_within_budget: bool,
    pub floors: Vec<FloorPoint>,
    /// `floor(M_first) / floor(M_last)`.
    pub floor_ratio: f64,
    /// `sqrt(M_last / M_first)`.
    pub expected_ratio: f64,
    /// Ratio within a factor √2 of the expectation.
    pub floor_scaling_ok: bool,
    pub terminal_z: f64,
}

impl PicardReport {
    pub fn passes(&self) -> bool {
        self.decreasing_until_floor && self.converged_within_budget && self.floor_scaling_ok
    }
}

pub fn picard(cfg: &ExperimentConfig) -> AppResult<Run<PicardReport>> {
    let rho0 = cfg.initial.density()?;
    let base = qubit_sigma_z_model();
    let kernel = ising_kernel();
    let control: Box<dyn ControlLaw<f64>> = match cfg.picard.control {
        ControlMode::Zero => Box::new(ZeroControl::new(1)),
        ControlMode::Feedback => Box::new(FeedbackLaw::mean_field(
            cfg.target.density(),
            cfg.fidelity_gain(),
            cfg.commutator_gain(),
            cfg.alpha_max,
        )?),
    };
    let mut flat = cfg.integrator();
    flat.record_stride = 1;
    let pc = cfg.picard.core();
    let mf = picard_solve(&rho0, &base, &kernel, control.as_ref(), &flat, &pc)?;
    let floor_level = mf.std_error;
    let decreasing = mf
        .residuals
        .windows(2)
        .all(|w| w[0] <= floor_level || w[1] < w[0]);

    let mut floors = Vec::new();
    for &m in &cfg.picard.floor_sizes {
        let sized = qfilter::meanfield::PicardConfig {
            ensemble_size: m,
            ..pc
        };
        let fixed = picard_solve(&rho0, &base, &kernel, control.as_ref(), &flat, &sized)?;
        let mut stats = ScalarStats::default();
        for r in 0..cfg.picard.floor_repeats {
            let seed = trajectory_seed(cfg.seed ^ 0x5EED_F100_0000_0000, r);
            let (res, _) = fixed_point_residual(
                &rho0,
                &base,
                &kernel,
                control.as_ref(),
                &flat,
                &fixed.flow,
                m,
                seed,
            )?;
            stats.push(res);
        }
        floors.push(FloorPoint {
            ensemble_size: m,
            iterations: fixed.iterations,
            residual: stats.mean(),
            residual_std_error: stats.std_error(),
            residuals: fixed.residuals.clone(),
        });
    }
    let (floor_ratio, expected_ratio) = match (floors.first(), floors.last()) {
        (Some(a), Some(b)) if floors.len() > 1 => (
            a.residual / b.residual,
            (b.ensemble_size as f64 / a.ensemble_size as f64).sqrt(),
        ),
        _ => (f64::NAN, f64::NAN),
    };
    let floor_scaling_ok = floors.len() < 2
        || (floor_ratio >= expected_ratio / 2f64.sqrt()
            && floor_ratio <= expected_ratio * 2f64.sqrt());

    let mut residuals = ResultTable::new("residuals", &["iteration", "residual"]);
    for (k, r) in mf.residuals.iter().enumerate() {
        residuals.push(vec![(k + 1) as f64, *r]);
    }
    let mut floor_table = ResultTable::new(
        "floor",
        &["ensemble_size", "residual", "residual_se", "iterations"],
    );
    for f in &floors {
        floor_table.push(vec![
            f.ensemble_size as f64,
            f.residual,
            f.residual_std_error,
            f.iterations as f64,
        ]);
    }
    let terminal_z = bloch_xyz(mf.flow.states.last().expect("non-empty").matrix())[2];
    let report = PicardReport {
        control: cfg.picard.control,
        ensemble_size: pc.ensemble_size,
        tolerance: pc.tolerance,
        iterations: mf.iterations,
        residuals: mf.residuals.clone(),
        std_error: mf.std_error,
        decreasing_until_floor: decreasing,
        converged_within_budget: mf.iterations <= pc.max_iterations,
        floors,
        floor_ratio,
        expected_ratio,
        floor_scaling_ok,
        terminal_z,
    };
    Ok(Run {
        report,
        tables: vec![residuals, flow_table(cfg, &mf), floor_table],
    })
}

// ---------------------------------------------------------------- dynkin

#[derive(Clone, Debug, Serialize)]
pub struct DynkinCase {
    pub name: &'static str,
    pub closed_form: f64,
    #[serde(flatten)]
    pub report: DynkinReport,
    pub gap: f64,
    pub tolerance: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DynkinSuite {
    pub cases: Vec<DynkinCase>,
}

impl DynkinSuite {
    pub fn passes(&self) -> bool {
        self.cases.iter().all(|c| c.passes)
    }
}

/// `tr(σzρ)` at `ρ_e`, `tr(σxρ)` at `(I+σx)/2` and purity at `I/2`,
/// with closed-form generators 0, −2 and 2 for `L = σz`, `β = 0`.
pub fn dynkin(cfg: &ExperimentConfig) -> AppResult<Run<DynkinSuite>> {
    let model = qubit_sigma_z_model();
    let plus_x = qfilter::bloch_to_density(&qfilter::BlochVector::new(1.0, 0.0, 0.0)?)?;
    let cases: [(&'static str, Functional<f64>, Density, f64); 3] = [
        (
            "sigma_z_at_excited",
            Functional::linear(sigma_z()),
            Density::excited(),
            0.0,
        ),
        (
            "sigma_x_at_plus_x",
            Functional::linear(sigma_x()),
            plus_x,
            -2.0,
        ),
        (
            "purity_at_mixed",
            Functional::purity(2),
            Density::maximally_mixed(2),
            2.0,
        ),
    ];
    let eps = cfg.dynkin.epsilon.unwrap_or(10.0 * cfg.dt);
    let run = cfg.integrator();
    let mut table = ResultTable::new(
        "dynkin",
        &[
            "case",
            "closed_form",
            "generator",
            "mc_estimate",
            "std_error",
            "bias_bound",
            "tolerance",
            "passes",
        ],
    );
    let mut out = Vec::new();
    for (k, (name, g, rho, closed)) in cases.into_iter().enumerate() {
        let r = dynkin_check(
            &g,
            &rho,
            &model,
            &[0.0],
            eps,
            &run.with_seed(trajectory_seed(cfg.seed, 1000 + k)),
            cfg.dynkin.samples,
        )?;
        let passes = r.passes() && (r.generator_value - closed).abs() < 1e-12;
        table.push(vec![
            k as f64,
            closed,
            r.generator_value,
            r.mc_estimate,
            r.standard_error,
            r.bias_bound,
            r.tolerance(),
            passes as u8 as f64,
        ]);
        out.push(DynkinCase {
            name,
            closed_form: closed,
            gap: r.gap(),
            tolerance: r.tolerance(),
            report: r,
            passes,
        });
    }
    Ok(Run {
        report: DynkinSuite { cases: out },
        tables: vec![table],
    })
}

// ---------------------------------------------------------------- dpp

#[derive(Clone, Debug, Serialize)]
pub struct EqualityCase {
    /// `F` of the Lindblad solution at `T`.
    pub oracle: f64,
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub rhs: f64,
    pub rhs_std_error: f64,
    pub tolerance: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DppSummary {
    pub tau: f64,
    pub grid: Vec<f64>,
    #[serde(flatten)]
    pub report: DppReport,
    pub passes_equality: bool,
    pub inequality_holds: bool,
    pub equality_case: Option<EqualityCase>,
}

impl DppSummary {
    pub fn passes(&self) -> bool {
        self.passes_equality && self.equality_case.as_ref().is_none_or(|e| e.passes)
    }
}

/// The Ising qubit: `L = σz`, control `σx`, Hamiltonian `z₀σz` with `z₀`
/// the initial `⟨σz⟩` (mean-field term frozen at the initial state).
pub fn ising_qubit(rho0: &Density) -> AppResult<Model> {
    let z0 = bloch_xyz(rho0.matrix())[2];
    Ok(Model::new(
        &sigma_z::<f64>().scale_real(z0),
        &[sigma_z()],
        &[sigma_x()],
    )?)
}

pub fn dpp(cfg: &ExperimentConfig) -> AppResult<Run<DppSummary>> {
    let rho0 = cfg.initial.density()?;
    let model = ising_qubit(&rho0)?;
    let f = &Matrix::identity(2) - Density::ground().matrix();
    let cost = CostSpec::terminal_only(Functional::linear(f.clone()));
    let grid = ControlGrid::new(cfg.dpp.grid.clone(), cfg.alpha_max)?;
    let tau = cfg.dpp.tau.unwrap_or(cfg.horizon / 2.0);
    let dcfg = DppConfig::new(tau, cfg.dpp.outer, cfg.dpp.inner);
    let run = cfg.integrator();
    let report = dpp_check(&rho0, &model, &cost, &grid, &run, &dcfg)?;

    let equality_case = if cfg.dpp.equality_check {
        let zero = ControlGrid::new(vec![0.0], cfg.alpha_max)?;
        let r = dpp_check(&rho0, &model, &cost, &zero, &run, &dcfg)?;
        let path = lindblad_ode(&rho0, &model, &ZeroControl::new(1), &run)?;
        let oracle = fidelity(path.last().expect("non-empty").matrix(), &Density::new(f)?);
        let tol = r.tolerance;
        Some(EqualityCase {
            oracle,
            lhs: r.lhs,
            lhs_std_error: r.lhs_std_error,
            rhs: r.rhs,
            rhs_std_error: r.rhs_std_error,
            tolerance: tol,
            passes: r.passes() && (r.lhs - oracle).abs() <= tol && (r.rhs - oracle).abs() <= tol,
        })
    } else {
        None
    };

    let mut levels = ResultTable::new(
        "levels",
        &["level", "lhs_mean", "lhs_se", "rhs_mean", "rhs_se"],
    );
    for (k, &b) in grid.values().iter().enumerate() {
        levels.push(vec![
            b,
            report.lhs_costs[k].mean,
            report.lhs_costs[k].std_error,
            report.rhs_costs[k].mean,
            report.rhs_costs[k].std_error,
        ]);
    }
    Ok(Run {
        report: DppSummary {
            tau,
            grid: grid.values().to_vec(),
            passes_equality: report.passes(),
            inequality_holds: report.inequality_holds(),
            report,
            equality_case,
        },
        tables: vec![levels],
    })
}

/// Largest `outer × inner` accepted by [`dpp`].
pub const DPP_BUDGET: usize = DEFAULT_DPP_BUDGET;

// ---------------------------------------------------------------- lipschitz

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub dims: Vec<usize>,
    pub violations: usize,
    /// Largest `‖ℛ[ρ]−ℛ[ρ′]‖₂ / (‖L‖₂‖ρ−ρ′‖₂)` seen; the bound is 6.
    pub max_ratio: f64,
    pub bound: f64,
}

impl LipschitzReport {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Samples density pairs (mixed, pure and nearby) in each dimension with
/// `L = σz` on site 1 and checks `‖ℛ[ρ]−ℛ[ρ′]‖₂ ≤ 6‖L‖₂‖ρ−ρ′‖₂`.
pub fn lipschitz(cfg: &ExperimentConfig) -> AppResult<Run<LipschitzReport>> {
    const BOUND: f64 = 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = &cfg.lipschitz.dims;
    let couplings = dims
        .iter()
        .map(|&d| {
            let n = d.trailing_zeros() as usize;
            if n == 1 {
                Ok(sigma_z())
            } else {
                embed_site(&SiteOperator::new(sigma_z(), 1, n))
            }
        })
        .collect::<qfilter::Result<Vec<Matrix>>>()?;
    let mut table = ResultTable::new("pairs", &["pair", "dim", "kind", "lhs", "rhs", "ratio"]);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for i in 0..cfg.lipschitz.pairs {
        let slot = i % dims.len();
        let d = dims[slot];
        let l = &couplings[slot];
        let kind = (i / dims.len()) % 3;
        let (a, b) = match kind {
            0 => (random_density(d, &mut rng), random_density(d, &mut rng)),
            1 => (random_pure(d, &mut rng), random_pure(d, &mut rng)),
            _ => {
                let a: Density = random_pure(d, &mut rng);
                let c: Density = random_density(d, &mut rng);
                let s = 1e-3;
                let b = Density::mixture(&[(1.0 - s, &a), (s, &c)])?;
                (a, b)
            }
        };
        let ra = measurement_superop_of(a.matrix(), l)?;
        let rb = measurement_superop_of(b.matrix(), l)?;
        let lhs = (&ra - &rb).hs_norm();
        let delta = a.hs_distance(&b)?;
        let rhs = BOUND * l.hs_norm() * delta;
        let ratio = if delta > 0.0 {
            lhs / (l.hs_norm() * delta)
        } else {
            0.0
        };
        if lhs > rhs * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
        max_ratio = max_ratio.max(ratio);
        table.push(vec![i as f64, d as f64, kind as f64, lhs, rhs, ratio]);
    }
    Ok(Run {
        report: LipschitzReport {
            pairs: cfg.lipschitz.pairs,
            dims: dims.clone(),
            violations,
            max_ratio,
            bound: BOUND,
        },
        tables: vec![table],
    })
}
