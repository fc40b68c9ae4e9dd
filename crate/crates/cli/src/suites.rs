//! Named verification suites and the oracle checks they share with the
//! acceptance tests.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use qfilter::density::bloch_to_density_unchecked;
use qfilter::ensemble::ensemble_mean_path;
use qfilter::feedback::FeedbackLaw;
use qfilter::pauli::sigma_z;
use qfilter::sampling::random_density;
use qfilter::sme::{
    qubit_sigma_z_model, simulate_bloch, HamiltonianHook, Kernel, PiecewiseConstantHook,
};
use qfilter::{
    bloch_of_matrix, bloch_to_density, lindblad_ode, simulate_trajectory, BlochVector, Config,
    Density, Matrix, ZeroControl,
};

use crate::config::{ExperimentConfig, ExperimentKind, InitialState};
use crate::runners;
use crate::{AppError, AppResult};

pub const SUITES: [&str; 7] = [
    "invariants",
    "lemma",
    "lipschitz",
    "dynkin",
    "dpp",
    "picard",
    "chaos",
];

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

fn property<R: Serialize>(name: &str, passed: bool, detail: &R) -> PropertyResult {
    PropertyResult {
        name: name.to_string(),
        passed,
        detail: serde_json::to_value(detail).expect("report serializes"),
    }
}

// ---------------------------------------------------------------- oracles

#[derive(Clone, Debug, Serialize)]
pub struct LindbladCheck {
    pub trajectories: usize,
    pub sup_distance: f64,
    pub max_std_error: f64,
    pub tolerance: f64,
    pub repair_rate: f64,
}

impl LindbladCheck {
    pub fn passes(&self) -> bool {
        self.sup_distance <= self.tolerance
    }
}

/// Ensemble mean of `trajectories` uncontrolled `σz`-monitored qubit paths
/// against the RK4 solution of the averaged equation, compared at the
/// record points of `cfg`.
pub fn lindblad_consistency(
    rho0: &Density,
    cfg: &Config,
    trajectories: usize,
    tolerance: f64,
) -> AppResult<LindbladCheck> {
    let model = qubit_sigma_z_model();
    let control = ZeroControl::new(1);
    let mc = ensemble_mean_path(rho0, &model, &control, cfg, trajectories)?;
    let exact = lindblad_ode(rho0, &model, &control, cfg)?;
    let steps = cfg.steps();
    let at_records: Vec<Matrix> = (0..=steps)
        .filter(|&k| k % cfg.record_stride == 0 || k == steps)
        .map(|k| exact[k].matrix().clone())
        .collect();
    Ok(LindbladCheck {
        trajectories,
        sup_distance: mc.sup_distance(&at_records)?,
        max_std_error: mc.hs_std_error.iter().copied().fold(0.0, f64::max),
        tolerance,
        repair_rate: mc.summary.repair_rate(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BlochCheck {
    pub seeds: usize,
    pub max_distance: f64,
    pub tolerance: f64,
}

impl BlochCheck {
    pub fn passes(&self) -> bool {
        self.max_distance <= self.tolerance
    }
}

/// Bloch-coordinate integration against the dense matrix integrator on
/// shared noise, with a time-varying field `ξ_z(t) = 0.6 cos 2t` and the
/// mean-field feedback law toward `ρ_g`.
pub fn bloch_equivalence(cfg: &Config, seeds: usize) -> AppResult<BlochCheck> {
    let steps = cfg.steps();
    let values = (0..=steps)
        .map(|n| sigma_z::<f64>().scale_real(0.6 * (2.0 * cfg.time(n)).cos()))
        .collect();
    let hook = PiecewiseConstantHook::new(0.0, cfg.dt, values)?;
    let xi = {
        let hook = hook.clone();
        move |t: f64| hook.at(t)[(0, 0)].re
    };
    let model = qubit_sigma_z_model().with_hook(Arc::new(hook))?;
    let law = FeedbackLaw::mean_field(Density::ground(), 5.0, 1.0, 10.0)?;
    let b0 = BlochVector::new(0.3, -0.4, 0.5)?;
    let rho0 = bloch_to_density(&b0)?;
    let mut run = cfg.clone();
    run.kernel = Kernel::General;
    run.record_stride = 1;
    let mut worst: f64 = 0.0;
    for i in 0..seeds {
        let seeded = run.with_seed(qfilter::ensemble::trajectory_seed(cfg.seed, i));
        let matrix = simulate_trajectory(&rho0, &model, &law, &seeded)?;
        let bloch = simulate_bloch(&b0, &xi, &law, &seeded)?;
        for (s, b) in matrix.states.iter().zip(&bloch.points) {
            let d = s.matrix().hs_distance(&bloch_to_density_unchecked(b))?;
            worst = worst.max(d);
        }
    }
    Ok(BlochCheck {
        seeds,
        max_distance: worst,
        tolerance: 1e-8,
    })
}

// ---------------------------------------------------------------- defaults

/// Configuration used by `verify <suite>` for the experiment-backed suites.
pub fn suite_config(suite: &str) -> AppResult<ExperimentConfig> {
    let mut c = match suite {
        "lemma" | "lipschitz" => ExperimentConfig::new(ExperimentKind::Lipschitz),
        "dynkin" => {
            let mut c = ExperimentConfig::new(ExperimentKind::Dynkin);
            c.dt = 1e-4;
            c
        }
        "dpp" => {
            let mut c = ExperimentConfig::new(ExperimentKind::Dpp);
            c.horizon = 1.0;
            c.dt = 2e-3;
            c
        }
        "picard" => ExperimentConfig::new(ExperimentKind::Picard),
        "chaos" => {
            let mut c = ExperimentConfig::new(ExperimentKind::Chaos);
            c.initial = InitialState::Bloch([0.8, 0.0, 0.0]);
            c.trajectories = 500;
            c.horizon = 2.0;
            c.dt = 1e-4;
            c.record_interval = 0.01;
            c.repair_positivity = false;
            c
        }
        other => return Err(AppError::Invalid(format!("unknown suite {other:?}"))),
    };
    c.output = Some(format!("results/verify-{suite}"));
    c.resolve()
}

// ---------------------------------------------------------------- suites

pub fn run_suite(suite: &str) -> AppResult<SuiteReport> {
    let properties = match suite {
        "invariants" => invariants()?,
        "lemma" | "lipschitz" => {
            let r = runners::lipschitz(&suite_config(suite)?)?.report;
            vec![property("lipschitz_bound", r.passes(), &r)]
        }
        "dynkin" => runners::dynkin(&suite_config(suite)?)?
            .report
            .cases
            .iter()
            .map(|c| property(c.name, c.passes, c))
            .collect(),
        "dpp" => {
            let r = runners::dpp(&suite_config(suite)?)?.report;
            let mut v = vec![
                property("dpp_identity", r.passes_equality, &r.report),
                property("dpp_inequality", r.inequality_holds, &r.report),
            ];
            if let Some(e) = &r.equality_case {
                v.push(property("dpp_equality_case", e.passes, e));
            }
            v
        }
        "picard" => {
            let r = runners::picard(&suite_config(suite)?)?.report;
            vec![
                property("residuals_decrease", r.decreasing_until_floor, &r.residuals),
                property(
                    "converged",
                    r.converged_within_budget,
                    &json!({"iterations": r.iterations, "tolerance": r.tolerance}),
                ),
                property(
                    "floor_scaling",
                    r.floor_scaling_ok,
                    &json!({"floors": r.floors, "ratio": r.floor_ratio, "expected": r.expected_ratio}),
                ),
            ]
        }
        "chaos" => {
            let r = runners::chaos(&suite_config(suite)?)?.report;
            vec![property("distance_non_increasing", r.non_increasing, &r)]
        }
        other => return Err(AppError::Invalid(format!("unknown suite {other:?}"))),
    };
    Ok(SuiteReport {
        suite: suite.to_string(),
        passed: properties.iter().all(|p| p.passed),
        properties,
    })
}

fn invariants() -> AppResult<Vec<PropertyResult>> {
    let mut out = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for dim in [2, 4, 8] {
        for _ in 0..200 {
            let rho: Density = random_density(dim, &mut rng);
            Density::new(rho.matrix().clone())?;
            worst = worst.max((rho.matrix().trace().re - 1.0).abs());
            if dim == 2 {
                let b = bloch_of_matrix(rho.matrix())?;
                worst = worst.max(bloch_to_density(&b)?.hs_distance(&rho)?);
            }
        }
    }
    out.push(property(
        "density_validation",
        worst < 1e-12,
        &json!({"worst_defect": worst}),
    ));

    let model = qubit_sigma_z_model();
    let law = FeedbackLaw::mean_field(Density::ground(), 5.0, 1.0, 10.0)?;
    let mut cfg = Config::new(1e-3, 2.0, 5);
    cfg.record_stride = 50;
    let mut min_eig = f64::INFINITY;
    let mut trace_defect: f64 = 0.0;
    for i in 0..20 {
        let rec = simulate_trajectory(
            &Density::maximally_mixed(2),
            &model,
            &law,
            &cfg.with_seed(i),
        )?;
        for s in &rec.states {
            min_eig = min_eig.min(s.min_eigenvalue());
            trace_defect = trace_defect.max((s.matrix().trace().re - 1.0).abs());
        }
    }
    out.push(property(
        "trajectory_stays_in_state_space",
        min_eig >= -1e-8 && trace_defect < 1e-12,
        &json!({"min_eigenvalue": min_eig, "trace_defect": trace_defect}),
    ));

    let bloch = bloch_equivalence(&Config::new(1e-3, 1.0, 3), 20)?;
    out.push(property("bloch_matrix_equivalence", bloch.passes(), &bloch));

    let mut lc = Config::new(1e-3, 1.0, 4);
    lc.record_stride = 10;
    let plus_x = bloch_to_density(&BlochVector::new(1.0, 0.0, 0.0)?)?;
    let lind = lindblad_consistency(&plus_x, &lc, 4000, 0.05)?;
    out.push(property("lindblad_consistency", lind.passes(), &lind));

    let mut small = ExperimentConfig::new(ExperimentKind::Reduction);
    small.trajectories = 16;
    small.horizon = 0.5;
    let small = small.resolve()?;
    let a = crate::app::render_tables(&runners::reduction(&small)?.tables);
    let b = crate::app::render_tables(&runners::reduction(&small)?.tables);
    out.push(property(
        "deterministic_tables",
        a == b,
        &json!({"tables": a.len()}),
    ));

    let echo = ExperimentConfig::from_json(&small.to_json())?;
    out.push(property(
        "config_echo_round_trip",
        echo == small,
        &json!({}),
    ));
    Ok(out)
}
