//! Property tests for structural invariants of the operator algebra, the
//! device model, envelopes, Floquet solutions, Lindblad evolution and the
//! photon-number-selective sideband condition.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sideband_core::dynamics::{evolve_lindblad, evolve_unitary, CollapseSet, States};
use sideband_core::floquet::{self, period_options, quasienergy_gap};
use sideband_core::hilbert::{self, embed_local, local_lowering, random_density, random_state, OpLabel, OperatorMatrix};
use sideband_core::integrate::{MagnusOptions, OdeOptions};
use sideband_core::linalg::{self, c, CMat};
use sideband_core::model::{chi_from_coupling, coupling_from_chi, driven_two_level, TimeDependentHamiltonian};
use sideband_core::pulse::bump_envelope;
use sideband_core::synthesis::pns_amplitude;
use sideband_core::hz;

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let a = random_matrix(rng, d);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lowering_commutator_is_identity_below_top(d in 2usize..10) {
        let a = local_lowering(d);
        let comm = &a * a.adjoint() - a.adjoint() * &a;
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((comm[(i, j)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn embedding_is_multiplicative(seed in any::<u64>(), d0 in 2usize..4, d1 in 2usize..4, d2 in 2usize..3, k in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [d0, d1, d2];
        let (a, b) = (random_matrix(&mut rng, dims[k]), random_matrix(&mut rng, dims[k]));
        let lhs = embed_local(&dims, k, &a) * embed_local(&dims, k, &b);
        let rhs = embed_local(&dims, k, &(&a * &b));
        prop_assert!(linalg::max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn partial_trace_undoes_tensor(seed in any::<u64>(), da in 2usize..5, db in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ra = random_density(&mut rng, vec![da], 2);
        let rb = random_density(&mut rng, vec![db], 2);
        let joint = ra.tensor(&rb);
        let back_a = hilbert::partial_trace(&joint, &[0]).unwrap();
        let back_b = hilbert::partial_trace(&joint, &[1]).unwrap();
        prop_assert!(linalg::max_abs(&(back_a.matrix() - ra.matrix())) < 1e-12);
        prop_assert!(linalg::max_abs(&(back_b.matrix() - rb.matrix())) < 1e-12);
    }

    #[test]
    fn chi_and_coupling_are_inverse(g_mhz in 10.0f64..200.0, delta_ghz in 0.5f64..3.5, k_mhz in 50.0f64..300.0) {
        let (g, delta, k) = (hz(g_mhz * 1e6), -hz(delta_ghz * 1e9), -hz(k_mhz * 1e6));
        let chi = chi_from_coupling(g, delta, k).unwrap();
        let back = coupling_from_chi(chi, delta, k).unwrap();
        prop_assert!((back / g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bump_envelope_is_symmetric_and_compact(eps in 0.1f64..10.0, tau_frac in 0.0f64..0.5, t_ns in 20.0f64..400.0, x in 0.0f64..1.0) {
        let big_t = t_ns * 1e-9;
        let env = bump_envelope(eps, tau_frac * big_t, big_t).unwrap();
        let t = x * big_t;
        prop_assert!((env.value(t) - env.value(big_t - t)).abs() <= 1e-12 * eps);
        prop_assert_eq!(env.value(-1e-12 - t), 0.0);
        prop_assert_eq!(env.value(big_t * (1.0 + 1e-9) + t), 0.0);
        prop_assert!(env.value(t) >= 0.0 && env.value(t) <= eps * (1.0 + 1e-12));
    }

    #[test]
    fn pns_solutions_satisfy_synchronization(n1 in 0usize..4, dn in 1usize..4, m in 1usize..4, chi_khz in 100.0f64..500.0) {
        let n2 = n1 + dn;
        let chi = -hz(chi_khz * 1e3);
        let ratio = (n2 + 1) as f64 / (n1 + 1) as f64;
        match pns_amplitude(n1, n2, m, chi) {
            Ok(s) => {
                let g2 = ratio.sqrt() * s.gsb1;
                let delta = (n2 - n1) as f64 * chi;
                let gamma = (g2 * g2 + delta * delta / 4.0).sqrt();
                prop_assert!(s.gsb1 > 0.0);
                prop_assert!((gamma / (2.0 * m as f64 * s.gsb1) - 1.0).abs() < 1e-12);
            }
            Err(_) => prop_assert!(4.0 * (m * m) as f64 <= ratio),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn floquet_spectrum_is_unitary_and_t0_invariant(wq_ghz in 3.0f64..6.0, det_mhz in -100.0f64..100.0, rabi_mhz in 1.0f64..50.0, seed in any::<u64>()) {
        let wq = hz(wq_ghz * 1e9);
        let wd = wq + hz(det_mhz * 1e6);
        let h = driven_two_level(wq, wd, hz(rabi_mhz * 1e6)).unwrap();
        let s0 = floquet::solve(&h, 0.0, &period_options()).unwrap();
        let s1 = floquet::solve(&h, s0.period / 3.0, &period_options()).unwrap();
        let unit = s0.modes.adjoint() * &s0.modes - CMat::identity(2, 2);
        prop_assert!(linalg::max_abs(&unit) < 1e-8);
        let psi = random_state(&mut ChaCha8Rng::seed_from_u64(seed), vec![2]);
        let total: f64 = s0.populations(psi.amplitudes()).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        for &e in &s0.quasienergies {
            let d = s1.quasienergies.iter().map(|&q| quasienergy_gap(q, e, wd)).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-6 * wd, "quasienergy {e} moved by {d}");
        }
    }

    #[test]
    fn lindblad_preserves_trace_and_hermiticity(seed in any::<u64>(), d in 2usize..5, rate in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = TimeDependentHamiltonian::constant(random_hermitian(&mut rng, d)).unwrap();
        let rho = random_density(&mut rng, vec![d], d);
        let mut set = CollapseSet::new();
        set.push(OperatorMatrix::new(local_lowering(d), OpLabel::Collapse), rate, "decay").unwrap();
        set.push(OperatorMatrix::new(random_hermitian(&mut rng, d), OpLabel::Collapse), 0.5 * rate, "dephasing").unwrap();
        let times = [0.0, 0.3, 1.0, 2.5];
        let out = evolve_lindblad(&h, &rho, &set, &times, &OdeOptions::default()).unwrap();
        let States::Mixed(states) = out.states else { panic!("expected density matrices") };
        for s in &states {
            prop_assert!((linalg::trace(s.matrix()).re - 1.0).abs() < 1e-6);
            prop_assert!(linalg::hermiticity_defect(s.matrix()) < 1e-8);
        }
    }

    #[test]
    fn lindblad_without_collapse_matches_unitary(seed in any::<u64>(), d in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = TimeDependentHamiltonian::constant(random_hermitian(&mut rng, d)).unwrap();
        let psi = random_state(&mut rng, vec![d]);
        let times = [0.0, 0.7, 1.9];
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let mixed = evolve_lindblad(&h, &psi.to_density(), &CollapseSet::new(), &times, &opts).unwrap();
        let pure = evolve_unitary(&h, &psi, &times, &MagnusOptions::default()).unwrap();
        let (States::Mixed(m), States::Pure(p)) = (mixed.states, pure.states) else { panic!("unexpected state kinds") };
        for (a, b) in m.iter().zip(&p) {
            prop_assert!(linalg::max_abs(&(a.matrix() - b.to_density().matrix())) < 1e-6);
        }
    }
}
