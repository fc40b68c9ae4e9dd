use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qfilter::embed::embed_site_sparse;
use qfilter::feedback::FeedbackLaw;
use qfilter::pauli::{sigma_x, sigma_y, sigma_z};
use qfilter::sampling::{random_density, random_pure};
use qfilter::sme::{measurement_superop_of, qubit_sigma_z_model, Kernel};
use qfilter::{
    bloch_of_matrix, bloch_to_density, embed_site, partial_trace, simulate_trajectory, Bloch,
    ComplexMatrix, Density, DensityOperator, IntegratorConfig, SiteOperator,
};

fn bloch_ball() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..=1.0f64, -1.0..=1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r, c, phi)| {
        let s = (1.0 - c * c).sqrt();
        (r * s * phi.cos(), r * s * phi.sin(), r * c)
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_states_are_densities(seed in any::<u64>(), n in 1usize..=3) {
        let d = 1 << n;
        let mut r = rng(seed);
        for rho in [random_density::<f64, _>(d, &mut r), random_pure(d, &mut r)] {
            prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(rho.matrix().is_hermitian(1e-12));
            prop_assert!(rho.min_eigenvalue() > -1e-12);
            let p = rho.purity();
            prop_assert!(p >= 1.0 / d as f64 - 1e-12 && p <= 1.0 + 1e-12);
            prop_assert!(Density::new(rho.matrix().clone()).is_ok());
        }
    }

    #[test]
    fn single_precision_states_validate(seed in any::<u64>()) {
        let rho: DensityOperator<f32> = random_density(4, &mut rng(seed));
        prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-5);
        prop_assert!(DensityOperator::new(rho.matrix().clone()).is_ok());
    }

    #[test]
    fn bloch_round_trip((x, y, z) in bloch_ball()) {
        let b = Bloch::new(x, y, z).unwrap();
        let rho = bloch_to_density(&b).unwrap();
        let m = rho.matrix();
        prop_assert!((rho.expectation(&sigma_x()).unwrap() - x).abs() < 1e-12);
        prop_assert!((rho.expectation(&sigma_y()).unwrap() - y).abs() < 1e-12);
        prop_assert!((rho.expectation(&sigma_z()).unwrap() - z).abs() < 1e-12);
        let back = bloch_of_matrix(m).unwrap();
        prop_assert!((back.x - x).abs() < 1e-12 && (back.y - y).abs() < 1e-12 && (back.z - z).abs() < 1e-12);
        prop_assert!((rho.purity() - (1.0 + b.norm().powi(2)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_inverts_tensor(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a: Density = random_density(2, &mut r);
        let b: Density = random_density(2, &mut r);
        let c: Density = random_density(2, &mut r);
        let abc = a.tensor(&b).tensor(&c);
        for (site, part) in [(1, &a), (2, &b), (3, &c)] {
            let reduced = partial_trace(&abc, site, 3).unwrap();
            prop_assert!(reduced.hs_distance(part).unwrap() < 1e-12);
        }
    }

    #[test]
    fn sparse_and_dense_embeddings_agree(seed in any::<u64>(), n in 1usize..=4, site_pick in 0usize..4) {
        let site = 1 + site_pick % n;
        let base = random_density::<f64, _>(2, &mut rng(seed)).into_matrix();
        let op = SiteOperator::new(base.clone(), site, n);
        let dense = embed_site(&op).unwrap();
        prop_assert!(embed_site_sparse(&op).unwrap().to_dense().hs_distance(&dense).unwrap() < 1e-14);
        let before = ComplexMatrix::identity(1 << (site - 1));
        let after = ComplexMatrix::identity(1 << (n - site));
        let kron = before.kron(&base).kron(&after);
        prop_assert!(kron.hs_distance(&dense).unwrap() < 1e-14);
    }

    #[test]
    fn measurement_superop_is_traceless_and_lipschitz(seed in any::<u64>(), n in 1usize..=2) {
        let d = 1 << n;
        let mut r = rng(seed);
        let l = embed_site(&SiteOperator::new(sigma_z(), 1, n)).unwrap();
        let a: Density = random_density(d, &mut r);
        let b: Density = random_pure(d, &mut r);
        let ra = measurement_superop_of(a.matrix(), &l).unwrap();
        let rb = measurement_superop_of(b.matrix(), &l).unwrap();
        prop_assert!(ra.trace().norm() < 1e-12);
        prop_assert!(ra.is_hermitian(1e-12));
        let lhs = (&ra - &rb).hs_norm();
        prop_assert!(lhs <= 6.0 * l.hs_norm() * a.hs_distance(&b).unwrap() + 1e-12);
    }

    #[test]
    fn feedback_respects_saturation(seed in any::<u64>(), k1 in 0.0..20.0f64, k2 in 0.0..20.0f64, amax in 0.1..5.0f64) {
        let rho: Density = random_density(2, &mut rng(seed));
        for law in [
            FeedbackLaw::mean_field(Density::ground(), k1, k2, amax).unwrap(),
            FeedbackLaw::local(Density::excited(), k1, k2, amax).unwrap(),
        ] {
            let (a, clipped) = law.evaluate_matrix(rho.matrix()).unwrap();
            prop_assert!(a.abs() <= amax);
            let (raw, _) = law.raw(rho.matrix()).unwrap();
            prop_assert_eq!(clipped, raw.abs() > amax);
            if !clipped {
                prop_assert!((a - raw).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trajectories_stay_in_state_space((x, y, z) in bloch_ball(), seed in any::<u64>()) {
        let rho0 = bloch_to_density(&Bloch::new(x, y, z).unwrap()).unwrap();
        let model = qubit_sigma_z_model();
        let law = FeedbackLaw::mean_field(Density::ground(), 5.0, 1.0, 10.0).unwrap();
        let mut cfg = IntegratorConfig::new(1e-3, 0.5, seed);
        cfg.record_stride = 10;
        let fast = simulate_trajectory(&rho0, &model, &law, &cfg).unwrap();
        cfg.kernel = Kernel::General;
        let general = simulate_trajectory(&rho0, &model, &law, &cfg).unwrap();
        for (s, g) in fast.states.iter().zip(&general.states) {
            prop_assert!((s.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(s.min_eigenvalue() > -1e-9);
            prop_assert!(s.hs_distance(g).unwrap() < 1e-9);
        }
        prop_assert_eq!(fast.records.len(), fast.times.len());
    }
}

#[test]
fn seeds_reproduce_trajectories_exactly() {
    let model = qubit_sigma_z_model();
    let law = FeedbackLaw::local(Density::excited(), 1.0, 5.0, 10.0).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 1.0, 42);
    let a = simulate_trajectory(&Density::maximally_mixed(2), &model, &law, &cfg).unwrap();
    let b = simulate_trajectory(&Density::maximally_mixed(2), &model, &law, &cfg).unwrap();
    assert_eq!(a.innovations, b.innovations);
    assert_eq!(a.final_state().matrix(), b.final_state().matrix());
    let c = simulate_trajectory(
        &Density::maximally_mixed(2),
        &model,
        &law,
        &cfg.with_seed(43),
    )
    .unwrap();
    assert_ne!(a.innovations, c.innovations);
}
