//! Experiment configuration: one JSON document per run.
//!
//! Every field except `experiment` has a default. [`ExperimentConfig::resolve`]
//! fills the experiment-dependent defaults so that the echo written next to
//! the results parses back to an equal value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qfilter::nbody::{MAX_SITES, MIN_SITES};
use qfilter::{bloch_to_density, BlochVector, Density};

use crate::AppError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Reduction,
    Stabilize,
    TwoqubitReduction,
    TwoqubitStabilize,
    Chaos,
    Picard,
    Dynkin,
    Dpp,
    Lipschitz,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Reduction => "reduction",
            Self::Stabilize => "stabilize",
            Self::TwoqubitReduction => "twoqubit-reduction",
            Self::TwoqubitStabilize => "twoqubit-stabilize",
            Self::Chaos => "chaos",
            Self::Picard => "picard",
            Self::Dynkin => "dynkin",
            Self::Dpp => "dpp",
            Self::Lipschitz => "lipschitz",
        }
    }
}

/// Single-site initial state; multi-site experiments use its tensor power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    MaximallyMixed,
    Excited,
    Ground,
    /// Bloch coordinates `(x, y, z)`.
    Bloch([f64; 3]),
}

impl InitialState {
    pub fn density(&self) -> Result<Density, AppError> {
        match *self {
            Self::MaximallyMixed => Ok(Density::maximally_mixed(2)),
            Self::Excited => Ok(Density::excited()),
            Self::Ground => Ok(Density::ground()),
            Self::Bloch([x, y, z]) => {
                let b = BlochVector::new(x, y, z).map_err(AppError::invalid)?;
                bloch_to_density(&b).map_err(AppError::invalid)
            }
        }
    }

    pub fn z(&self) -> f64 {
        match *self {
            Self::MaximallyMixed => 0.0,
            Self::Excited => 1.0,
            Self::Ground => -1.0,
            Self::Bloch([_, _, z]) => z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Ground,
    Excited,
}

impl Target {
    pub fn density(self) -> Density {
        match self {
            Self::Ground => Density::ground(),
            Self::Excited => Density::excited(),
        }
    }
}

/// Mean-field term added to the single-qubit Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interaction {
    None,
    /// `A^ρ = tr(ρσz)σz`, the limit of the `σz⊗σz` pair coupling.
    Ising,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    Zero,
    Feedback,
}

/// Feedback gains. Unset entries default to 5 for the leading term of the
/// law (fidelity for one qubit, commutator for the two-qubit game) and 1
/// for the other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    /// Weight of `1 − tr(ρϱ*)`.
    #[serde(default)]
    pub fidelity: Option<f64>,
    /// Weight of the commutator term.
    #[serde(default)]
    pub commutator: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    #[serde(default = "d_picard_size")]
    pub ensemble_size: usize,
    #[serde(default = "d_picard_tol")]
    pub tolerance: f64,
    #[serde(default = "d_picard_iters")]
    pub max_iterations: usize,
    #[serde(default = "d_true")]
    pub common_random_numbers: bool,
    /// Control used by the `picard` experiment.
    #[serde(default = "d_picard_control")]
    pub control: ControlMode,
    /// Ensemble sizes for the Monte Carlo floor study (`picard` only).
    #[serde(default = "d_floor_sizes")]
    pub floor_sizes: Vec<usize>,
    /// Fresh-seed re-simulations averaged per floor size.
    #[serde(default = "d_floor_repeats")]
    pub floor_repeats: usize,
}

impl Default for PicardSection {
    fn default() -> Self {
        Self {
            ensemble_size: d_picard_size(),
            tolerance: d_picard_tol(),
            max_iterations: d_picard_iters(),
            common_random_numbers: true,
            control: d_picard_control(),
            floor_sizes: d_floor_sizes(),
            floor_repeats: d_floor_repeats(),
        }
    }
}

impl PicardSection {
    pub fn core(&self) -> qfilter::meanfield::PicardConfig {
        qfilter::meanfield::PicardConfig {
            ensemble_size: self.ensemble_size,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            common_random_numbers: self.common_random_numbers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppSection {
    /// Split time; defaults to half the horizon.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "d_dpp_outer")]
    pub outer: usize,
    #[serde(default = "d_dpp_inner")]
    pub inner: usize,
    #[serde(default = "d_dpp_grid")]
    pub grid: Vec<f64>,
    /// Also run the degenerate case (grid `{0}`) against the Lindblad oracle.
    #[serde(default = "d_true")]
    pub equality_check: bool,
}

impl Default for DppSection {
    fn default() -> Self {
        Self {
            tau: None,
            outer: d_dpp_outer(),
            inner: d_dpp_inner(),
            grid: d_dpp_grid(),
            equality_check: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynkinSection {
    /// Difference-quotient window; defaults to `10·dt`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "d_dynkin_samples")]
    pub samples: usize,
}

impl Default for DynkinSection {
    fn default() -> Self {
        Self {
            epsilon: None,
            samples: d_dynkin_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzSection {
    #[serde(default = "d_lipschitz_pairs")]
    pub pairs: usize,
    #[serde(default = "d_lipschitz_dims")]
    pub dims: Vec<usize>,
}

impl Default for LipschitzSection {
    fn default() -> Self {
        Self {
            pairs: d_lipschitz_pairs(),
            dims: d_lipschitz_dims(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_dt")]
    pub dt: f64,
    /// Horizon `T`.
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    /// Ensemble size `M`.
    #[serde(default = "d_trajectories")]
    pub trajectories: usize,
    /// Time between recorded rows.
    #[serde(default = "d_record_interval")]
    pub record_interval: f64,
    /// Number of individual trajectories written to the traces table.
    #[serde(default = "d_traces")]
    pub traces: usize,
    #[serde(default = "d_initial")]
    pub initial: InitialState,
    #[serde(default = "d_target")]
    pub target: Target,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default = "d_alpha_max")]
    pub alpha_max: f64,
    #[serde(default)]
    pub interaction: Option<Interaction>,
    #[serde(default = "d_true")]
    pub repair_positivity: bool,
    /// `|z_T|` above which a reduction trajectory counts as decided.
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    /// Terminal fidelity a stabilized trajectory must exceed.
    #[serde(default)]
    pub fidelity_threshold: Option<f64>,
    /// HS radius around the two-qubit equilibria.
    #[serde(default = "d_radius")]
    pub equilibrium_radius: f64,
    /// Times at which the mean of `z` is compared with `z₀`
    /// (default `T/5, T/2, T`).
    #[serde(default)]
    pub check_times: Option<Vec<f64>>,
    /// Window for the log-linear fit of the mean Lyapunov function
    /// (default `[T/2, 4T/5]`).
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "d_ns")]
    pub ns: Vec<usize>,
    #[serde(default)]
    pub picard: PicardSection,
    #[serde(default)]
    pub dpp: DppSection,
    #[serde(default)]
    pub dynkin: DynkinSection,
    #[serde(default)]
    pub lipschitz: LipschitzSection,
    /// Output path prefix; files are `<prefix>_<table>.csv` and
    /// `<prefix>_report.json`.
    #[serde(default)]
    pub output: Option<String>,
}

fn d_seed() -> u64 {
    1
}
fn d_dt() -> f64 {
    1e-3
}
fn d_horizon() -> f64 {
    5.0
}
fn d_trajectories() -> usize {
    200
}
fn d_record_interval() -> f64 {
    0.01
}
fn d_traces() -> usize {
    10
}
fn d_initial() -> InitialState {
    InitialState::MaximallyMixed
}
fn d_target() -> Target {
    Target::Ground
}
fn d_alpha_max() -> f64 {
    qfilter::feedback::DEFAULT_ALPHA_MAX
}
fn d_true() -> bool {
    true
}
fn d_threshold() -> f64 {
    qfilter::feedback::DEFAULT_REDUCTION_THRESHOLD
}
fn d_radius() -> f64 {
    0.05
}
fn d_ns() -> Vec<usize> {
    vec![2, 4, 6, 8]
}
fn d_picard_size() -> usize {
    2000
}
fn d_picard_tol() -> f64 {
    1e-3
}
fn d_picard_iters() -> usize {
    20
}
fn d_picard_control() -> ControlMode {
    ControlMode::Feedback
}
fn d_floor_sizes() -> Vec<usize> {
    vec![400, 1600]
}
fn d_floor_repeats() -> usize {
    4
}
fn d_dpp_outer() -> usize {
    2000
}
fn d_dpp_inner() -> usize {
    200
}
fn d_dpp_grid() -> Vec<f64> {
    vec![-1.0, 0.0, 1.0]
}
fn d_dynkin_samples() -> usize {
    10_000
}
fn d_lipschitz_pairs() -> usize {
    10_000
}
fn d_lipschitz_dims() -> Vec<usize> {
    vec![2, 4]
}

impl ExperimentConfig {
    /// Defaults for `experiment`, everything else as if omitted.
    pub fn new(experiment: ExperimentKind) -> Self {
        let json = format!("{{\"experiment\":\"{}\"}}", experiment.name());
        serde_json::from_str(&json).expect("defaults parse")
    }

    pub fn from_json(text: &str) -> Result<Self, AppError> {
        serde_json::from_str(text).map_err(|e| AppError::Invalid(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fills experiment-dependent defaults and validates every field.
    pub fn resolve(mut self) -> Result<Self, AppError> {
        use ExperimentKind::*;
        if self.interaction.is_none() {
            self.interaction = Some(match self.experiment {
                Stabilize | Picard | Chaos => Interaction::Ising,
                _ => Interaction::None,
            });
        }
        if self.fidelity_threshold.is_none() {
            self.fidelity_threshold = Some(match self.experiment {
                TwoqubitStabilize | TwoqubitReduction => 0.95,
                _ => 0.99,
            });
        }
        let (lead, other) = (
            qfilter::feedback::DEFAULT_FIDELITY_GAIN,
            qfilter::feedback::DEFAULT_COMMUTATOR_GAIN,
        );
        let (fid, comm) = match self.experiment {
            TwoqubitStabilize | TwoqubitReduction => (other, lead),
            _ => (lead, other),
        };
        self.gains.fidelity.get_or_insert(fid);
        self.gains.commutator.get_or_insert(comm);
        let t = self.horizon;
        self.check_times
            .get_or_insert_with(|| vec![t / 5.0, t / 2.0, t]);
        self.fit_window.get_or_insert([t / 2.0, 0.8 * t]);
        if self.dpp.tau.is_none() {
            self.dpp.tau = Some(self.horizon / 2.0);
        }
        if self.dynkin.epsilon.is_none() {
            self.dynkin.epsilon = Some(10.0 * self.dt);
        }
        if self.output.is_none() {
            self.output = Some(format!("results/{}", self.experiment.name()));
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), AppError> {
        let bad = |msg: String| Err(AppError::Invalid(msg));
        let positive = |name: &str, v: f64| -> Result<(), AppError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(AppError::Invalid(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        positive("record_interval", self.record_interval)?;
        positive("alpha_max", self.alpha_max)?;
        if self.dt > self.horizon {
            return bad("dt must not exceed the horizon".into());
        }
        if self.trajectories == 0 {
            return bad("trajectories must be ≥ 1".into());
        }
        for (name, g) in [
            ("gains.fidelity", self.fidelity_gain()),
            ("gains.commutator", self.commutator_gain()),
        ] {
            if !(g >= 0.0 && g.is_finite()) {
                return bad(format!("{name} must be non-negative, got {g}"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)".into());
        }
        let f = self.fidelity_threshold.unwrap_or(0.5);
        if !(f > 0.0 && f < 1.0) {
            return bad("fidelity_threshold must lie in (0, 1)".into());
        }
        positive("equilibrium_radius", self.equilibrium_radius)?;
        let within = |t: f64| t >= 0.0 && t <= self.horizon * (1.0 + 1e-12);
        if self.experiment == ExperimentKind::Reduction {
            if let Some(&t) = self.check_times().iter().find(|&&t| !within(t)) {
                return bad(format!("check time {t} outside [0, horizon]"));
            }
        } else if self.check_times().iter().any(|t| !t.is_finite()) {
            return bad("check times must be finite".into());
        }
        let [a, b] = self.fit_window();
        if !(a >= 0.0 && b > a && b.is_finite()) {
            return bad("fit_window must be an increasing pair of times ≥ 0".into());
        }
        if self.experiment == ExperimentKind::Stabilize && !within(b) {
            return bad("fit_window must lie inside [0, horizon]".into());
        }
        if self.ns.is_empty() {
            return bad("ns must not be empty".into());
        }
        if let Some(&n) = self
            .ns
            .iter()
            .find(|&&n| !(MIN_SITES..=MAX_SITES).contains(&n))
        {
            return bad(format!("N = {n} outside {MIN_SITES}..={MAX_SITES}"));
        }
        self.initial.density()?;
        self.picard.core().validate().map_err(AppError::invalid)?;
        if self.picard.floor_sizes.iter().any(|&m| m < 100) {
            return bad("picard.floor_sizes entries must be ≥ 100".into());
        }
        if self.picard.floor_repeats == 0 {
            return bad("picard.floor_repeats must be ≥ 1".into());
        }
        let tau = self.dpp.tau.unwrap_or(self.horizon / 2.0);
        if !(tau > 0.0 && tau < self.horizon) {
            return bad("dpp.tau must lie strictly inside (0, horizon)".into());
        }
        if self.dpp.outer < 2 || self.dpp.inner == 0 {
            return bad("dpp needs outer ≥ 2 and inner ≥ 1".into());
        }
        let budget = qfilter::generator::DEFAULT_DPP_BUDGET;
        if self.dpp.outer.saturating_mul(self.dpp.inner) > budget {
            return bad(format!(
                "dpp.outer × dpp.inner exceeds the budget of {budget}"
            ));
        }
        if self.dpp.grid.is_empty() || self.dpp.grid.iter().any(|g| !g.is_finite()) {
            return bad("dpp.grid must hold finite levels".into());
        }
        if self.dpp.grid.iter().any(|g| g.abs() > self.alpha_max) {
            return bad("dpp.grid levels exceed alpha_max".into());
        }
        let eps = self.dynkin.epsilon.unwrap_or(10.0 * self.dt);
        if !(eps >= 10.0 * self.dt * (1.0 - 1e-9)) {
            return bad("dynkin.epsilon must be at least 10·dt".into());
        }
        if self.dynkin.samples == 0 || self.lipschitz.pairs == 0 {
            return bad("sample counts must be ≥ 1".into());
        }
        if self.lipschitz.dims.is_empty()
            || self
                .lipschitz
                .dims
                .iter()
                .any(|&d| d < 2 || !d.is_power_of_two() || d > 1 << MAX_SITES)
        {
            return bad("lipschitz.dims must be powers of two ≥ 2".into());
        }
        if let Some(out) = &self.output {
            if out.is_empty() {
                return bad("output prefix must not be empty".into());
            }
        }
        Ok(())
    }

    /// Fidelity gain; NaN before [`resolve`](Self::resolve) unless set.
    pub fn fidelity_gain(&self) -> f64 {
        self.gains.fidelity.unwrap_or(f64::NAN)
    }

    pub fn commutator_gain(&self) -> f64 {
        self.gains.commutator.unwrap_or(f64::NAN)
    }

    /// Check times; empty before [`resolve`](Self::resolve).
    pub fn check_times(&self) -> &[f64] {
        self.check_times.as_deref().unwrap_or(&[])
    }

    /// Fit window; `[T/2, 4T/5]` before [`resolve`](Self::resolve).
    pub fn fit_window(&self) -> [f64; 2] {
        self.fit_window
            .unwrap_or([self.horizon / 2.0, 0.8 * self.horizon])
    }

    /// Record stride in grid steps.
    pub fn stride(&self) -> usize {
        ((self.record_interval / self.dt).round() as usize).max(1)
    }

    pub fn integrator(&self) -> qfilter::Config {
        let mut cfg = qfilter::Config::new(self.dt, self.horizon, self.seed);
        cfg.repair_positivity = self.repair_positivity;
        cfg.record_stride = self.stride();
        cfg
    }

    pub fn interaction(&self) -> Interaction {
        self.interaction.unwrap_or(Interaction::None)
    }

    pub fn fidelity_threshold(&self) -> f64 {
        self.fidelity_threshold.unwrap_or(0.99)
    }

    pub fn output_prefix(&self) -> &str {
        self.output.as_deref().unwrap_or("results/run")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment":"stabilize"}"#)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(c.interaction, Some(Interaction::Ising));
        assert_eq!((c.fidelity_gain(), c.commutator_gain()), (5.0, 1.0));
        let two = ExperimentConfig::new(ExperimentKind::TwoqubitStabilize)
            .resolve()
            .unwrap();
        assert_eq!((two.fidelity_gain(), two.commutator_gain()), (1.0, 5.0));
        assert_eq!(c.output.as_deref(), Some("results/stabilize"));
        assert_eq!(c.stride(), 10);
    }

    #[test]
    fn resolved_echo_round_trips() {
        for kind in [
            ExperimentKind::Reduction,
            ExperimentKind::Dpp,
            ExperimentKind::Chaos,
        ] {
            let mut c = ExperimentConfig::new(kind);
            c.initial = InitialState::Bloch([0.1, -0.2, 0.3]);
            let c = c.resolve().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.clone().resolve().unwrap(), c);
        }
    }

    #[test]
    fn invalid_fields_are_rejected() {
        let cases = [
            r#"{"experiment":"reduction","dt":0}"#,
            r#"{"experiment":"reduction","dt":-1e-3}"#,
            r#"{"experiment":"reduction","horizon":0.0001,"dt":0.001}"#,
            r#"{"experiment":"reduction","trajectories":0}"#,
            r#"{"experiment":"chaos","ns":[1]}"#,
            r#"{"experiment":"chaos","ns":[13]}"#,
            r#"{"experiment":"reduction","initial":{"bloch":[1,1,0]}}"#,
            r#"{"experiment":"dpp","dpp":{"tau":5}}"#,
            r#"{"experiment":"dpp","dpp":{"grid":[20]}}"#,
            r#"{"experiment":"dpp","dpp":{"outer":5000,"inner":1000}}"#,
            r#"{"experiment":"dynkin","dynkin":{"epsilon":1e-3},"dt":1e-3}"#,
            r#"{"experiment":"stabilize","gains":{"fidelity":-1}}"#,
            r#"{"experiment":"picard","picard":{"ensemble_size":10}}"#,
        ];
        for text in cases {
            let r = ExperimentConfig::from_json(text).and_then(|c| c.resolve());
            assert!(matches!(r, Err(AppError::Invalid(_))), "{text}");
        }
        for text in [
            r#"{"experiment":"teleport"}"#,
            r#"{"experiment":"reduction","typo":1}"#,
            r#"{"dt":1e-3}"#,
            "not json",
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }
}
