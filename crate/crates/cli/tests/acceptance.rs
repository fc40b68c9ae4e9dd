//! End-to-end acceptance checks at full budget. Runs every check in order,
//! prints one `PASS`/`FAIL` line per item and fails if any item failed.
//!
//! Takes about six minutes on a single core; run with `--nocapture` to see
//! the lines.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use qfilter::{bloch_to_density, BlochVector, Config};
use qfilter_cli::config::{ExperimentConfig, ExperimentKind, InitialState};
use qfilter_cli::runners;
use qfilter_cli::suites::{bloch_equivalence, lindblad_consistency, suite_config};

struct Outcome {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn record(out: &mut Vec<Outcome>, id: usize, title: &'static str, passed: bool, detail: String) {
    println!(
        "[{id:>2}] {} {title}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    out.push(Outcome {
        id,
        title,
        passed,
        detail,
    });
}

fn reduction_config(z0: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::Reduction);
    c.initial = InitialState::Bloch([0.0, 0.0, z0]);
    c.trajectories = 10_000;
    c.horizon = 5.0;
    c.dt = 1e-4;
    c.record_interval = 0.05;
    c.seed = 2024;
    c.resolve().unwrap()
}

fn state_reduction(out: &mut Vec<Outcome>) {
    let mut split_ok = true;
    let mut split = Vec::new();
    let mut mart_ok = true;
    let mut mart = Vec::new();
    for z0 in [0.0, 0.6] {
        let start = Instant::now();
        let r = runners::reduction(&reduction_config(z0)).unwrap().report;
        let secs = start.elapsed().as_secs_f64();
        let classified = 1.0 - r.undecided_fraction;
        split_ok &= r.split_within_3se && r.classified_at_least_99pct && secs <= 120.0;
        split.push(format!(
            "z0={z0}: P(e)={:.4} vs {:.2} ± {:.4} (3SE), classified {:.4}, {secs:.0}s",
            r.excited_fraction,
            r.predicted_excited,
            3.0 * r.binomial_std_error,
            classified
        ));
        for m in &r.martingale {
            mart_ok &= m.passes;
            mart.push(format!(
                "z0={z0} t={}: |{:.4}−{z0}| ≤ {:.4}",
                m.time,
                m.mean_z,
                3.0 * m.std_error
            ));
        }
    }
    record(out, 1, "state reduction", split_ok, split.join("; "));
    record(out, 2, "martingale", mart_ok, mart.join("; "));
}

fn lindblad(out: &mut Vec<Outcome>) {
    let mut cfg = Config::new(1e-4, 5.0, 77);
    cfg.record_stride = 100;
    let rho = bloch_to_density(&BlochVector::new(1.0, 0.0, 0.0).unwrap()).unwrap();
    let r = lindblad_consistency(&rho, &cfg, 10_000, 0.05).unwrap();
    record(
        out,
        3,
        "Lindblad consistency",
        r.passes(),
        format!(
            "sup HS distance {:.4} ≤ {} (max SE {:.4})",
            r.sup_distance, r.tolerance, r.max_std_error
        ),
    );
}

fn bloch(out: &mut Vec<Outcome>) {
    let r = bloch_equivalence(&Config::new(1e-4, 1.0, 31), 100).unwrap();
    record(
        out,
        4,
        "Bloch/matrix equivalence",
        r.passes(),
        format!("{} seeds, sup HS distance {:.2e}", r.seeds, r.max_distance),
    );
}

fn lipschitz(out: &mut Vec<Outcome>) {
    let r = runners::lipschitz(&suite_config("lemma").unwrap())
        .unwrap()
        .report;
    record(
        out,
        5,
        "Lipschitz bound",
        r.passes(),
        format!(
            "{} pairs, dims {:?}, {} violations, max ratio {:.3} (bound {})",
            r.pairs, r.dims, r.violations, r.max_ratio, r.bound
        ),
    );
}

fn dynkin(out: &mut Vec<Outcome>) {
    let r = runners::dynkin(&suite_config("dynkin").unwrap())
        .unwrap()
        .report;
    let detail = r
        .cases
        .iter()
        .map(|c| {
            format!(
                "{}: {:.3} vs {} (tol {:.3})",
                c.name, c.report.mc_estimate, c.closed_form, c.tolerance
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    record(out, 6, "generator / Dynkin", r.passes(), detail);
}

fn dpp(out: &mut Vec<Outcome>) {
    let r = runners::dpp(&suite_config("dpp").unwrap()).unwrap().report;
    let eq = r.equality_case.as_ref().unwrap();
    record(
        out,
        7,
        "dynamic programming",
        r.passes(),
        format!(
            "lhs {:.4} ± {:.4}, rhs {:.4} ± {:.4}, |gap| {:.4} vs tol {:.4}, lhs ≥ rhs − tol: {}; \
             degenerate grid: lhs {:.4}, rhs {:.4}, oracle {:.4}, tol {:.4} → {}",
            r.report.lhs,
            r.report.lhs_std_error,
            r.report.rhs,
            r.report.rhs_std_error,
            r.report.gap.abs(),
            r.report.tolerance,
            r.inequality_holds,
            eq.lhs,
            eq.rhs,
            eq.oracle,
            eq.tolerance,
            if eq.passes { "match" } else { "mismatch" }
        ),
    );
}

fn stabilization(out: &mut Vec<Outcome>) {
    let mut c = ExperimentConfig::new(ExperimentKind::Stabilize);
    c.trajectories = 1000;
    c.horizon = 5.0;
    c.dt = 1e-4;
    c.record_interval = 0.05;
    c.seed = 8;
    let r = runners::stabilize(&c.resolve().unwrap()).unwrap().report;
    record(
        out,
        8,
        "mean-field stabilization",
        r.passes(),
        format!(
            "{:.1}% of seeds with fidelity > {}, Lyapunov rate {:.3} (R² {:.3})",
            100.0 * r.stabilized_fraction,
            r.fidelity_threshold,
            r.lyapunov_fit.fitted_rate,
            r.lyapunov_fit.r_squared
        ),
    );
}

fn picard(out: &mut Vec<Outcome>) {
    let r = runners::picard(&suite_config("picard").unwrap())
        .unwrap()
        .report;
    let floors = r
        .floors
        .iter()
        .map(|f| format!("M={}: {:.4}", f.ensemble_size, f.residual))
        .collect::<Vec<_>>()
        .join(", ");
    record(
        out,
        9,
        "Picard iteration",
        r.passes(),
        format!(
            "residuals {:?} in {} iterations; floors {floors}; ratio {:.2} vs {:.2}",
            r.residuals
                .iter()
                .map(|x| format!("{x:.1e}"))
                .collect::<Vec<_>>(),
            r.iterations,
            r.floor_ratio,
            r.expected_ratio
        ),
    );
}

fn two_qubit(out: &mut Vec<Outcome>) {
    let mut c = ExperimentConfig::new(ExperimentKind::TwoqubitStabilize);
    c.trajectories = 500;
    c.horizon = 8.0;
    c.dt = 1e-4;
    c.record_interval = 0.1;
    c.seed = 55;
    let stab = runners::twoqubit(&c.clone().resolve().unwrap(), true)
        .unwrap()
        .report;
    c.experiment = ExperimentKind::TwoqubitReduction;
    let red = runners::twoqubit(&c.resolve().unwrap(), false)
        .unwrap()
        .report;
    record(
        out,
        10,
        "two-qubit game",
        stab.passes() && red.passes(),
        format!(
            "feedback: {:.1}% with fidelity to ρ_ge > {}; open loop: {:.1}% within {} of the equilibria {:?}",
            100.0 * stab.target_fraction,
            stab.fidelity_threshold,
            100.0 * red.near_equilibrium_fraction,
            red.equilibrium_radius,
            red.equilibrium_counts
        ),
    );
}

fn chaos(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let r = runners::chaos(&suite_config("chaos").unwrap())
        .unwrap()
        .report;
    let secs = start.elapsed().as_secs_f64();
    record(
        out,
        11,
        "propagation of chaos",
        r.non_increasing && secs <= 900.0,
        format!(
            "N {:?}: distances {:?} (SE {:?}), {secs:.0}s",
            r.report.ns,
            r.report
                .distances
                .iter()
                .map(|d| format!("{d:.4}"))
                .collect::<Vec<_>>(),
            r.report
                .std_errors
                .iter()
                .map(|d| format!("{d:.4}"))
                .collect::<Vec<_>>()
        ),
    );
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism(out: &mut Vec<Outcome>) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("stabilize.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"stabilize","trajectories":300,"horizon":3,"seed":99}"#,
    )
    .unwrap();
    let mut runs = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_qfilter"))
            .arg("run")
            .arg(&cfg)
            .args(["--threads", threads, "--out"])
            .arg(dir.join("out"))
            .status()
            .unwrap();
        assert!(status.success());
        runs.push(read_outputs(&dir));
    }
    let same = runs[0] == runs[1] && !runs[0].is_empty();
    record(
        out,
        12,
        "determinism",
        same,
        format!(
            "{} CSV files byte-identical across two runs (1 and 3 threads): {same}",
            runs[0].len()
        ),
    );
}

#[test]
fn acceptance_suite() {
    let mut out = Vec::new();
    let start = Instant::now();
    state_reduction(&mut out);
    lindblad(&mut out);
    bloch(&mut out);
    lipschitz(&mut out);
    dynkin(&mut out);
    dpp(&mut out);
    stabilization(&mut out);
    picard(&mut out);
    two_qubit(&mut out);
    chaos(&mut out);
    determinism(&mut out);
    out.sort_by_key(|o| o.id);
    println!("--- summary ({:.0}s) ---", start.elapsed().as_secs_f64());
    for o in &out {
        println!(
            "{:>2} {} {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.title
        );
    }
    let failed: Vec<String> = out
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("[{}] {}: {}", o.id, o.title, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed:\n{}", failed.join("\n"));
}
