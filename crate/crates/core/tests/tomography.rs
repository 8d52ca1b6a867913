use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sideband_core::fit::linear_regression;
use sideband_core::hilbert::{fidelity, mode_ket, random_density, random_state, DensityMatrix, StateVector};
use sideband_core::linalg::{self, c, cis, CMat, CVec, ONE, ZERO};
use sideband_core::model::SystemParams;
use sideband_core::tomography::*;
use sideband_core::C64;

fn fock(d: usize, n: usize) -> DensityMatrix {
    mode_ket(d, &[(n, ONE)]).unwrap().to_density()
}

/// L_n(x) = Σ_k C(n,k) (−x)^k / k!
fn laguerre_sum(n: usize, x: f64) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    let mut fact = 1.0;
    for k in 0..=n {
        if k > 0 {
            binom *= (n - k + 1) as f64 / k as f64;
            fact *= k as f64;
        }
        total += binom * (-x).powi(k as i32) / fact;
    }
    total
}

/// D(α) by exponentiating αb† − ᾱb in a large truncation.
fn brute_displacement(alpha: C64, big: usize) -> CMat {
    let b = sideband_core::hilbert::local_lowering(big);
    let gen = (b.adjoint() * alpha - &b * alpha.conj()) * c(0.0, 1.0);
    linalg::expm_herm(&linalg::hermitian_part(&gen), 1.0)
}

#[test]
fn parity_values_at_origin() {
    assert!((wigner_forward(&fock(4, 0), ZERO).unwrap() - FRAC_2_PI).abs() < 1e-14);
    assert!((wigner_forward(&fock(4, 1), ZERO).unwrap() + FRAC_2_PI).abs() < 1e-14);
}

#[test]
fn fock_radial_profile_matches_laguerre() {
    for n in 0..=4 {
        let rho = fock(6, n);
        for k in 0..25 {
            let r = 0.1 * k as f64;
            let alpha = cis(0.4 * k as f64) * r;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let exact = FRAC_2_PI * sign * (-2.0 * r * r).exp() * laguerre_sum(n, 4.0 * r * r);
            assert!((wigner_forward(&rho, alpha).unwrap() - exact).abs() < 1e-8, "n={n} r={r}");
        }
    }
}

#[test]
fn wigner_operator_matches_brute_force_displacement() {
    let big = 90;
    let parity = linalg::diag_real(&(0..big).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
    for alpha in [c(0.3, -0.2), c(-1.1, 0.7), c(1.6, 0.4)] {
        let d = brute_displacement(alpha, big);
        let full = &d * parity.clone() * d.adjoint() * c(FRAC_2_PI, 0.0);
        let block = full.view((0, 0), (6, 6)).into_owned();
        assert!((block - wigner_operator(alpha, 6)).norm() < 1e-10);
    }
}

#[test]
fn measurement_matrix_matches_forward_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = random_grid(&mut rng, 1, 30, 2.0);
    let m = build_measurement_matrix(&grid, 5).unwrap();
    assert_eq!((m.nrows(), m.ncols()), (30, 25));
    for _ in 0..5 {
        let rho = random_density(&mut rng, vec![5], 5);
        let v = CVec::from_iterator(25, rho.matrix().transpose().iter().cloned());
        let out = &m * v;
        for (i, p) in grid.points.iter().enumerate() {
            assert!((out[i].re - wigner_forward(&rho, p[0]).unwrap()).abs() < 1e-10);
            assert!(out[i].im.abs() < 1e-10);
        }
    }
    let origin = DisplacementGrid::single(vec![ZERO]);
    let m0 = build_measurement_matrix(&origin, 3).unwrap();
    assert!((m0[(0, 0)].re - FRAC_2_PI).abs() < 1e-15);
}

#[test]
fn parity_rescale_levels() {
    let cal = ParityCalibration::new(0.075, 0.912).unwrap();
    assert!((parity_rescale(0.912, &cal).unwrap() - FRAC_2_PI).abs() < 1e-15);
    assert!((parity_rescale(0.075, &cal).unwrap() + FRAC_2_PI).abs() < 1e-15);
    assert!(parity_rescale(0.5 * (0.912 + 0.075), &cal).unwrap().abs() < 1e-15);
    let degenerate = ParityCalibration { p_g: 0.5, p_e: 0.5, ..Default::default() };
    assert!(parity_rescale(0.3, &degenerate).is_err());
}

proptest! {
    #[test]
    fn parity_rescale_inverts(p in 0.0f64..1.0, pg in 0.0f64..0.3, span in 0.2f64..0.7) {
        let cal = ParityCalibration::new(pg, pg + span).unwrap();
        let w = parity_rescale(p, &cal).unwrap();
        prop_assert!((parity_unscale(w, &cal).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_is_always_physical(seed in 0u64..1000, sigma in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&mut rng, vec![3], 2);
        let grid = random_grid(&mut rng, 1, 18, 1.6);
        let ds = WignerDataset::simulate(&rho, grid, &ParityCalibration::default(), sigma, &mut rng).unwrap();
        let rec = reconstruct(&ds, 3, None).unwrap();
        prop_assert!(rec.rho.min_eigenvalue() >= -1e-8);
        prop_assert!((rec.rho.trace() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn pnrqs_is_scale_invariant(scale in 0.1f64..10.0) {
        let chi = -2.0 * PI * 400e3;
        let grid: Vec<f64> = (0..200).map(|k| chi * (-1.0 + 6.0 * k as f64 / 199.0)).collect();
        let pops = [0.5, 0.0, 0.3, 0.0, 0.2];
        let s = pnrqs_forward(&pops, chi, 0.2 * chi.abs(), &grid).unwrap();
        let a = pnrqs_fit(&grid, &s, chi, 4, 0.3 * chi.abs()).unwrap();
        let scaled: Vec<f64> = s.iter().map(|v| v * scale).collect();
        let b = pnrqs_fit(&grid, &scaled, chi, 4, 0.3 * chi.abs()).unwrap();
        for (x, y) in a.populations.iter().zip(&b.populations) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn contrast_correction_points() {
    assert_eq!(contrast_correction(ZERO, 0.3), 1.0);
    let eta: f64 = 0.25;
    let alpha = cis(0.3) * (1.0 / eta).sqrt();
    assert!((contrast_correction(alpha, eta) - 0.5).abs() < 1e-14);
}

#[test]
fn fitted_eta_tracks_chi_e() {
    let params = SystemParams::reference_device();
    let rabi = PI / (2.0 * 30e-9);
    let alphas: Vec<f64> = (0..16).map(|k| 0.2 * k as f64).collect();
    let mut chis = vec![];
    let mut etas = vec![];
    for &chi in &params.chi_e {
        let curve = contrast_calibration_curve(chi, rabi, &alphas).unwrap();
        etas.push(fit_contrast_eta(&alphas, &curve).unwrap());
        chis.push(chi.abs());
    }
    let (_, slope, r2) = linear_regression(&chis, &etas).unwrap();
    assert!(slope > 0.0);
    assert!(r2 > 0.95, "R² = {r2}");
}

#[test]
fn grid_search_properties() {
    let small = choose_displacements(2, 4, &GridSearch::default()).unwrap();
    assert!(small.condition_number.is_finite());
    assert!(choose_displacements(3, 8, &GridSearch::default()).is_err());

    let d = 4;
    let count = 16;
    let search = GridSearch { budget: 800, ..Default::default() };
    let best = choose_displacements(d, count, &search).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let r_max = 0.9 * (d as f64).sqrt();
    let mut random: Vec<f64> =
        (0..100).map(|_| condition_number(&random_grid(&mut rng, 1, count, r_max), &[d], &ParityCalibration::default()).unwrap()).collect();
    random.sort_by(f64::total_cmp);
    assert!(best.condition_number <= random[50]);
    let recomputed = condition_number(&best, &[d], &ParityCalibration::default()).unwrap();
    assert!((recomputed - best.condition_number).abs() < 1e-9 * recomputed);

    let doubled = choose_displacements(d, 2 * count, &search).unwrap();
    assert!(doubled.condition_number <= best.condition_number * (1.0 + 1e-12));
    let again = choose_displacements(d, count, &search).unwrap();
    assert_eq!(again, best);
}

#[test]
fn noiseless_random_pure_states_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = choose_displacements(5, 50, &GridSearch { budget: 600, ..Default::default() }).unwrap();
    for _ in 0..5 {
        let psi = random_state(&mut rng, vec![5]);
        let ds = WignerDataset::simulate(&psi.to_density(), grid.clone(), &ParityCalibration::default(), 0.0, &mut rng).unwrap();
        let rec = reconstruct(&ds, 5, Some(&psi)).unwrap();
        assert!(rec.fidelity.unwrap() >= 0.999, "{:?}", rec.fidelity);
    }
}

#[test]
fn binomial_coherence_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = c(FRAC_1_SQRT_2, 0.0);
    let psi = mode_ket(6, &[(0, h), (4, h)]).unwrap();
    let grid = choose_displacements(6, 72, &GridSearch { budget: 600, ..Default::default() }).unwrap();
    let cal = ParityCalibration { p_g: 0.075, p_e: 0.912, eta: 0.05, ..Default::default() };
    let ds = WignerDataset::simulate(&psi.to_density(), grid, &cal, 0.0, &mut rng).unwrap();
    let rec = reconstruct(&ds, 6, Some(&psi)).unwrap();
    assert!((rec.rho.matrix()[(0, 4)].norm() - 0.5).abs() < 0.01);
}

#[test]
fn error_bar_behaviour() {
    let d = 6;
    let psi = mode_ket(d, &[(0, ONE)]).unwrap();
    let grid = choose_displacements(d, 4 * d * d, &GridSearch { budget: 600, ..Default::default() }).unwrap();
    let cal = ParityCalibration::new(0.075, 0.912).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let clean = WignerDataset::simulate(&psi.to_density(), grid, &cal, 0.0, &mut rng).unwrap();
    let zero = error_bars(&clean, &cal, &[d], &psi, 10, (0.0, 0.0), 1).unwrap();
    assert!(zero.total_std < 1e-9);

    let mut noisy = clean.clone();
    noisy.noise_sigma = 0.05 * FRAC_2_PI;
    let spread = error_bars(&noisy, &cal, &[d], &psi, 50, (0.009, 0.006), 1).unwrap();
    assert!(spread.noise_std > 0.005 && spread.noise_std < 0.02, "{spread:?}");
    assert!(spread.calibration_std > 0.005 && spread.calibration_std < 0.02, "{spread:?}");
    assert!(spread.nominal - spread.mean <= 0.03);
}

fn two_mode_ket(d: (usize, usize), amps: &[((usize, usize), C64)]) -> StateVector {
    let mut v = CVec::zeros(d.0 * d.1);
    for ((a, b), x) in amps {
        v[a * d.1 + b] += x;
    }
    StateVector::normalized(v, vec![d.0, d.1]).unwrap()
}

#[test]
fn two_mode_parity_examples() {
    let cal = ParityCalibration::default();
    let vac = two_mode_ket((3, 3), &[((0, 0), ONE)]).to_density();
    let w00 = two_mode_parity_forward(&vac, ZERO, ZERO, &cal).unwrap();
    assert!((w00 - 4.0 / (PI * PI)).abs() < 1e-14);
    let one = two_mode_ket((3, 3), &[((1, 0), ONE)]).to_density();
    assert!((two_mode_parity_forward(&one, ZERO, ZERO, &cal).unwrap() + w00).abs() < 1e-14);

    // separable states factorize: Tr[ρA⊗ρB cos(θ1n1+θ2n2)] = Re(⟨e^{iθ1n1}⟩⟨e^{iθ2n2}⟩)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (ra, rb) = (random_density(&mut rng, vec![3], 3), random_density(&mut rng, vec![3], 3));
    let joint = ra.tensor(&rb);
    let (th1, th2) = (2.9, 3.3);
    let cal2 = ParityCalibration { theta1: th1, theta2: th2, ..Default::default() };
    let (a, b) = (c(0.4, -0.2), c(-0.3, 0.5));
    let got = two_mode_parity_forward(&joint, a, b, &cal2).unwrap();
    let ea = linalg::trace(&(displaced_phase_operator(a, th1, 3).unwrap() * ra.matrix()));
    let eb = linalg::trace(&(displaced_phase_operator(b, th2, 3).unwrap() * rb.matrix()));
    assert!((got - 4.0 / (PI * PI) * (ea * eb).re).abs() < 1e-10);
    // at θ = π both factors are real parities
    let p = two_mode_parity_forward(&joint, a, b, &cal).unwrap();
    let pa = wigner_forward(&ra, a).unwrap() / FRAC_2_PI;
    let pb = wigner_forward(&rb, b).unwrap() / FRAC_2_PI;
    assert!((p - 4.0 / (PI * PI) * pa * pb).abs() < 1e-10);
}

#[test]
fn two_mode_bell_round_trip() {
    let h = c(FRAC_1_SQRT_2, 0.0);
    let bell = two_mode_ket((3, 3), &[((1, 0), h), ((0, 1), h)]);
    let cal = ParityCalibration { theta1: 0.95 * PI, theta2: 1.05 * PI, p_g: 0.1, p_e: 0.9, ..Default::default() };
    let grid = choose_two_mode_displacements((3, 3), 100, &GridSearch { budget: 300, ..Default::default() }, &cal).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ds = WignerDataset::simulate(&bell.to_density(), grid, &cal, 0.0, &mut rng).unwrap();
    let rec = two_mode_reconstruct(&ds, (3, 3), &cal, Some(&bell)).unwrap();
    assert!(rec.fidelity.unwrap() >= 0.999, "{:?}", rec.fidelity);
}

#[test]
fn pnrqs_peaks_and_recovery() {
    let chi = -2.0 * PI * 394e3;
    let gamma = 0.25 * chi.abs();
    let grid: Vec<f64> = (0..301).map(|k| chi * (-1.0 + 6.0 * k as f64 / 300.0)).collect();
    let peaks = |s: &[f64]| -> Vec<usize> {
        (1..s.len() - 1).filter(|&i| s[i] > s[i - 1] && s[i] > s[i + 1] && s[i] > 0.1).map(|i| (grid[i] / chi).round() as usize).collect()
    };
    let vac = pnrqs_forward(&[1.0], chi, gamma, &grid).unwrap();
    assert_eq!(peaks(&vac), vec![0]);
    let two = pnrqs_forward(&[0.0, 0.0, 1.0], chi, gamma, &grid).unwrap();
    assert_eq!(peaks(&two), vec![2]);
    let cat = pnrqs_forward(&[0.5, 0.0, 0.0, 0.0, 0.5], chi, gamma, &grid).unwrap();
    assert_eq!(peaks(&cat), vec![0, 4]);

    let pops = [0.45, 0.05, 0.1, 0.0, 0.4];
    let clean = pnrqs_forward(&pops, chi, gamma, &grid).unwrap();
    let reference = normalize_to_vacuum(&clean, &vac).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let noisy: Vec<f64> = reference.iter().map(|v| 0.8 * v + noise.sample(&mut rng)).collect();
    let fit = pnrqs_fit(&grid, &noisy, chi, 4, 0.5 * gamma).unwrap();
    for (p, q) in fit.populations.iter().zip(&pops) {
        assert!((p - q).abs() < 0.02, "{:?}", fit.populations);
    }
}

fn qubit_cavity(p_e: f64, cav_g: &DensityMatrix, cav_e: &DensityMatrix) -> DensityMatrix {
    let g = linalg::diag_real(&[1.0 - p_e, 0.0, 0.0]);
    let e = linalg::diag_real(&[0.0, p_e, 0.0]);
    let m = linalg::kron(&g, cav_g.matrix()) + linalg::kron(&e, cav_e.matrix());
    DensityMatrix::new(m, vec![3, cav_g.dim()]).unwrap()
}

#[test]
fn post_selection_examples() {
    let target = mode_ket(4, &[(2, ONE)]).unwrap();
    let good = target.to_density();
    let bad = fock(4, 1);
    let pure = post_selection_model(&qubit_cavity(0.0, &good, &bad), (0.0, 0.0)).unwrap();
    assert!((pure.kept_fraction - 1.0).abs() < 1e-14);
    let mixed = post_selection_model(&qubit_cavity(0.08, &good, &bad), (0.0, 0.0)).unwrap();
    assert!((mixed.kept_fraction - 0.92).abs() < 1e-12);
    assert!(post_selection_model(&qubit_cavity(0.08, &good, &bad), (0.6, 0.0)).is_err());

    let (mut excluded, mut gains) = (vec![], vec![]);
    for k in 0..10 {
        let p = 0.01 * k as f64;
        let ps = post_selection_model(&qubit_cavity(p, &good, &bad), (0.01, 0.02)).unwrap();
        let gain = fidelity(&ps.conditioned, &target).unwrap() - fidelity(&ps.unconditioned, &target).unwrap();
        excluded.push(ps.excluded_fraction);
        gains.push(gain);
    }
    let (_, slope, r2) = linear_regression(&excluded, &gains).unwrap();
    assert!(slope > 0.0 && r2 > 0.99, "slope {slope} R² {r2}");
}

/// Post-selected two-mode tomography of a decoherent NOON state on device
/// modes 2 and 4. The cavity idles through the post-selection readout, its
/// reset and the joint-parity Ramsey delay before being measured.
fn decoherent_noon_tomography(n: usize) -> f64 {
    use sideband_core::dynamics::{readout_reset_plan_with, CollapseOptions};
    use sideband_core::integrate::OdeOptions;
    use sideband_core::synthesis::*;

    let params = SystemParams::reference_device();
    let modes = [2, 4];
    let d = n + 2;
    let cx = SynthesisContext::new(params.clone()).with_cutoff(d).with_transmon_levels(3);
    let p = noon_encode(n, modes[0], modes[1], &cx).unwrap();
    let cp = compile(&p, &cx, &CompileConfig::default(), None).unwrap();
    let m = EffectiveModel::new(&cp.context, &p.modes).unwrap();
    let h = c(FRAC_1_SQRT_2, 0.0);
    let psi0 = m.qubit_input(h, h).unwrap();
    let opts = OdeOptions { rtol: 1e-9, atol: 1e-11, ..Default::default() };
    let out = run_dissipative(&cp, &(&psi0 * psi0.adjoint()), &CollapseOptions::all(p.modes.clone()), &opts).unwrap();

    let readout = readout_reset_plan_with(params.readout_chi, params.readout_kappa, sideband_core::hz(1e6), 1.5e-6, 100e-9).unwrap();
    let (chi1, chi2) = (params.chi_e[modes[0]].abs(), params.chi_e[modes[1]].abs());
    let tau_r = 2.0 * PI / (chi1 + chi2);
    let rho = idle_modes(&out.postselected, &params, &modes, readout.total_duration() + tau_r, &opts).unwrap();

    let target = two_mode_ket((d, d), &[((n, 0), h), ((0, n), h)]);
    let cal = ParityCalibration { theta1: chi1 * tau_r, theta2: chi2 * tau_r, ..Default::default() };
    let grid = choose_two_mode_displacements((d, d), 2 * d.pow(4), &GridSearch { budget: 300, ..Default::default() }, &cal).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let ds = WignerDataset::simulate(&rho, grid, &cal, 0.0, &mut rng).unwrap();
    two_mode_reconstruct(&ds, (d, d), &cal, Some(&target)).unwrap().fidelity.unwrap()
}

#[test]
fn decoherent_noon_one_fidelity_band() {
    let f = decoherent_noon_tomography(1);
    assert!((0.93 - 0.03..=0.96 + 0.03).contains(&f), "N = 1 fidelity {f}");
}

#[test]
fn decoherent_noon_two_fidelity_band() {
    let f = decoherent_noon_tomography(2);
    assert!((0.89 - 0.03..=0.92 + 0.03).contains(&f), "N = 2 fidelity {f}");
}
