//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line with
//! the measured values and its runtime, then asserts.

use std::f64::consts::{FRAC_2_PI, PI, SQRT_2};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sideband_core::dynamics::{
    self, dispersive_channel_analytic, dispersive_model, evolve_lindblad, parity_measurement_lindblad, pi_pulse_train,
    pulse_train_fit, rabi_fidelity_fit, rabi_model, CollapseOptions, States,
};
use sideband_core::exec::Executor;
use sideband_core::fit::linear_regression;
use sideband_core::floquet::{self, find_sideband_resonance, optimize_pi_transfer, period_options, ramp_bounds, sideband_pair, RampedSideband};
use sideband_core::hilbert::{self, random_density, random_state, DensityMatrix};
use sideband_core::integrate::{MagnusOptions, OdeOptions};
use sideband_core::linalg::{self, CMat, ONE};
use sideband_core::model::{self, driven_two_level, DriveParams, DrivenModel, DrivenSetup, SystemParams};
use sideband_core::synthesis::*;
use sideband_core::tomography::{self, choose_displacements, error_bars, GridSearch, ParityCalibration, WignerDataset};
use sideband_core::hz;

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2} {name}: {detail} ({:.1} s)", elapsed.as_secs_f64());
}

fn ctx(cutoff: usize) -> SynthesisContext {
    SynthesisContext::new(SystemParams::reference_device()).with_cutoff(cutoff).with_transmon_levels(3)
}

fn ode() -> OdeOptions {
    OdeOptions { rtol: 1e-9, atol: 1e-11, ..Default::default() }
}

#[test]
fn a01_floquet_matches_two_level_closed_form() {
    let t = Instant::now();
    let (wq, om) = (hz(4.606e9), hz(20e6));
    let mut worst = 0.0f64;
    for k in 0..50 {
        let wd = wq + hz(-100e6 + 200e6 * k as f64 / 49.0);
        let sol = floquet::solve(&driven_two_level(wq, wd, om).unwrap(), 0.0, &period_options()).unwrap();
        let (em, ep) = model::two_level_quasienergies(wq, wd, om);
        for e in [em, ep] {
            let d = sol.quasienergies.iter().map(|&q| floquet::quasienergy_gap(q, e, wd)).fold(f64::INFINITY, f64::min);
            worst = worst.max(d / e.abs());
        }
    }
    let el = t.elapsed();
    let pass = worst < 1e-9 && el < Duration::from_secs(10);
    report(1, "Floquet vs two-level closed form", pass, el, format!("max relative error {worst:.2e} over 50 detunings"));
    assert!(pass);
}

#[test]
fn a02_floquet_rate_matches_lowest_order() {
    let t = Instant::now();
    let params = SystemParams::reference_device();
    let mode = 0;
    let dm = DrivenModel::new(&params, DrivenSetup::new(mode, 3, 5), 4).unwrap();
    let w0 = dm.bare_sideband_resonance();
    let (mut eps, mut rates, mut worst) = (vec![], vec![], 0.0f64);
    for xiphi in [0.02, 0.04, 0.06, 0.08, 0.1] {
        let xi = xiphi / params.phi_zpt;
        let e = (xi * (w0 * w0 - params.omega_q * params.omega_q) / (2.0 * w0)).abs();
        let shift = model::sideband_resonance_shift_estimate(&params, e, w0).unwrap();
        let g_est = model::sideband_rate_lowest_order(&params, mode, e).unwrap().exact.abs();
        let half = 3.0 * shift.abs() + 30.0 * g_est;
        let c = w0 + shift;
        let fit = find_sideband_resonance(&dm, e, (c - half, c + half), 41, Executor::default(), &period_options()).unwrap();
        worst = worst.max((fit.rate / g_est - 1.0).abs());
        eps.push(e);
        rates.push(fit.rate);
    }
    let (_, _, r2) = linear_regression(&eps, &rates).unwrap();
    let el = t.elapsed();
    let pass = worst <= 0.05 && r2 > 0.99 && el < Duration::from_secs(120);
    report(2, "sideband rate consistency", pass, el, format!("max |Floquet/formula − 1| = {worst:.3}, gap-vs-ε R² = {r2:.5}"));
    assert!(pass);
}

#[test]
fn a03_ramp_study() {
    let t = Instant::now();
    let params = SystemParams::reference_device();
    let mode = 2;
    let eps = hz(600e6);
    let dm = DrivenModel::new(&params, DrivenSetup::new(mode, 5, 3), 4).unwrap();
    let w0 = dm.bare_sideband_resonance();
    let shift = model::sideband_resonance_shift_estimate(&params, eps, w0).unwrap();
    let g_est = model::sideband_rate_lowest_order(&params, mode, eps).unwrap().exact.abs();
    let (c, half) = (w0 + 1.3 * shift, shift.abs() + 30.0 * g_est);
    let opts = MagnusOptions { tol: 1e-8, ..period_options() };
    let fit = find_sideband_resonance(&dm, eps, (c - half, c + half), 31, Executor::default(), &opts).unwrap();
    let drive = DriveParams::new(eps, fit.resonance, 0.0).unwrap();
    let ropts = MagnusOptions { tol: 1e-9, ..Default::default() };
    let bounds = ramp_bounds(&params, mode).unwrap();

    let split = |tau: f64| {
        let sb = RampedSideband::new(&dm, drive, tau, ropts).unwrap();
        let fl = sb.floquet();
        let pops = fl.populations(&(sb.ramp_up() * dm.basis.vector(2, 0)));
        let (a, b) = sideband_pair(&fl, &dm.basis);
        (sb, pops[a], pops[b])
    };
    let (_, a_fast, b_fast) = split(0.5e-9);
    let leak_fast = 1.0 - a_fast - b_fast;
    let tau = 11.6e-9;
    let (sb, a_slow, b_slow) = split(tau);
    let n0 = ((PI / (2.0 * fit.rate) - tau) / sb.period()) as usize;
    let fracs: Vec<f64> = (0..8).map(|k| k as f64 / 8.0).collect();
    let best = optimize_pi_transfer(&sb, n0.saturating_sub(40), n0 + 40, &fracs, Executor::default()).unwrap();
    let err = 1.0 - best.probability;
    let el = t.elapsed();
    let pass = leak_fast > 0.10
        && bounds.contains(tau)
        && (a_slow - 0.5).abs() <= 0.05
        && (b_slow - 0.5).abs() <= 0.05
        && err < 1e-3
        && el < Duration::from_secs(120);
    report(
        3,
        "ramp study",
        pass,
        el,
        format!("0.5 ns leakage {leak_fast:.3}; {:.1} ns split {a_slow:.3}/{b_slow:.3}; π error {err:.2e}", tau * 1e9),
    );
    assert!(pass);
}

#[test]
fn a04_pns_synchronization() {
    let t = Instant::now();
    let chi = SystemParams::reference_device().chi_f[2];
    let mut worst = 0.0f64;
    let mut amp_err = 0.0f64;
    for ((n1, n2, m), expect) in [((1, 3, 1), chi.abs() / SQRT_2), ((0, 3, 2), 3f64.sqrt() * chi.abs() / 4.0)] {
        let s = pns_amplitude(n1, n2, m, chi).unwrap();
        amp_err = amp_err.max((s.gsb1 / expect - 1.0).abs());
        let rate = |n: usize| s.gsb1 * ((n + 1) as f64 / (n1 + 1) as f64).sqrt();
        let res = sideband_pair_propagator(0.0, rate(n1), 0.0, s.pi_time);
        let det = sideband_pair_propagator(s.detuning, rate(n2), 0.0, s.pi_time);
        worst = worst.max(1.0 - res[1][0].norm_sqr()).max(1.0 - det[0][0].norm_sqr());
    }
    let el = t.elapsed();
    let pass = worst < 1e-6 && amp_err < 1e-12 && el < Duration::from_secs(10);
    report(4, "PNS synchronization", pass, el, format!("max transfer/return error {worst:.2e}, amplitude error {amp_err:.1e}"));
    assert!(pass);
}

#[test]
fn a05_binomial_coherent() {
    let t = Instant::now();
    let cx = ctx(7);
    let p = binomial_encode(2, &cx).unwrap();
    let cp = compile(&p, &cx, &CompileConfig::default(), None).unwrap();
    let rows = cardinal_fidelities(&cp, &CollapseOptions::none(p.modes.clone()), &ode(), Executor::default()).unwrap();
    let worst = rows.iter().map(|r| r.fidelity.traced).fold(1.0, f64::min);
    let dur = cp.schedule.total_duration;
    let el = t.elapsed();
    let pass = p.len() == 18 && worst > 0.999 && (dur / 4e-6 - 1.0).abs() <= 0.25 && el < Duration::from_secs(300);
    report(5, "binomial encode, coherent", pass, el, format!("{} pulses, min fidelity {worst:.5}, duration {:.2} µs", p.len(), dur * 1e6));
    assert!(pass);
}

#[test]
fn a06_binomial_decoherent() {
    let t = Instant::now();
    let cx = ctx(7);
    let p = binomial_encode(2, &cx).unwrap();
    let cp = compile(&p, &cx, &CompileConfig::default(), None).unwrap();
    let rows = cardinal_fidelities(&cp, &CollapseOptions::all(p.modes.clone()), &ode(), Executor::default()).unwrap();
    let post: Vec<f64> = rows.iter().map(|r| r.fidelity.postselected).collect();
    let excl: Vec<f64> = rows.iter().map(|r| r.fidelity.excluded_fraction).collect();
    let sota = SynthesisContext { params: cx.params.with_transmon_coherence(500e-6, 200e-6), ..cx.clone() };
    let cps = compile(&p, &sota, &CompileConfig::default(), None).unwrap();
    let rows_s = cardinal_fidelities(&cps, &CollapseOptions::all(p.modes.clone()), &ode(), Executor::default()).unwrap();
    let traced_s = rows_s.iter().map(|r| r.fidelity.traced).fold(1.0, f64::min);
    let range = |v: &[f64]| (v.iter().cloned().fold(1.0, f64::min), v.iter().cloned().fold(0.0, f64::max));
    let (pl, ph) = range(&post);
    let (el_, eh) = range(&excl);
    let el = t.elapsed();
    let pass = pl >= 0.94 && ph <= 0.98 && el_ >= 0.06 && eh <= 0.12 && traced_s >= 0.99 && el < Duration::from_secs(1800);
    report(
        6,
        "binomial encode, decoherent",
        pass,
        el,
        format!("post-selected {pl:.4}–{ph:.4}, excluded {el_:.4}–{eh:.4}, improved-transmon traced min {traced_s:.4}"),
    );
    assert!(pass);
}

#[test]
fn a07_tomography_round_trip() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let search = GridSearch { budget: 800, ..Default::default() };
    let grid5 = choose_displacements(5, 50, &search).unwrap();
    let mut worst = 1.0f64;
    for _ in 0..10 {
        let psi = random_state(&mut rng, vec![5]);
        let ds = WignerDataset::simulate(&psi.to_density(), grid5.clone(), &ParityCalibration::default(), 0.0, &mut rng).unwrap();
        worst = worst.min(tomography::reconstruct(&ds, 5, Some(&psi)).unwrap().fidelity.unwrap());
    }
    let d = 6;
    let vac = hilbert::mode_ket(d, &[(0, ONE)]).unwrap();
    let grid = choose_displacements(d, 4 * d * d, &search).unwrap();
    let cal = ParityCalibration::default();
    let mut ds = WignerDataset::simulate(&vac.to_density(), grid, &cal, 0.0, &mut rng).unwrap();
    ds.noise_sigma = 0.05 * FRAC_2_PI;
    let spread = error_bars(&ds, &cal, &[d], &vac, 50, (0.0, 0.0), 23).unwrap();
    let drop = 1.0 - spread.mean;
    let el = t.elapsed();
    let pass = worst >= 0.999 && drop <= 0.03 && (0.005..=0.02).contains(&spread.noise_std) && el < Duration::from_secs(300);
    report(
        7,
        "tomography round trip",
        pass,
        el,
        format!("min noiseless fidelity {worst:.5}; noisy vacuum drop {:.2} points, spread {:.2} points", 100.0 * drop, 100.0 * spread.noise_std),
    );
    assert!(pass);
}

#[test]
fn a08_parity_mitigation() {
    let t = Instant::now();
    let params = SystemParams::reference_device();
    let (gamma, gphi, chi) = (1.0 / params.t1_transmon, params.gamma_phi_ge(), params.chi_e[2]);
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
    let d = 6;
    let measure = |rho: &DensityMatrix| parity_measurement_lindblad(rho, chi, gamma, gphi, &opts).unwrap();
    let p_e = measure(&hilbert::mode_ket(d, &[(0, ONE)]).unwrap().to_density());
    let p_g = measure(&hilbert::mode_ket(d, &[(1, ONE)]).unwrap().to_density());
    let cal = ParityCalibration::new(p_g, p_e).unwrap();
    let parity = linalg::diag_real(&(0..d).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_parity = 0.0f64;
    for _ in 0..5 {
        let rho = random_density(&mut rng, vec![d], 3);
        let w = tomography::parity_rescale(measure(&rho), &cal).unwrap();
        let truth = linalg::trace(&(&parity * rho.matrix())).re;
        worst_parity = worst_parity.max((w / FRAC_2_PI - truth).abs());
    }
    let time = 1.0 / (2.0 * (chi / sideband_core::TWO_PI).abs());
    let mut worst_channel = 0.0f64;
    for _ in 0..5 {
        let rho = random_density(&mut rng, vec![2, 4], 4);
        let a = dispersive_channel_analytic(&rho, chi, gamma, gphi, time).unwrap();
        let (h, set) = dispersive_model(4, chi, gamma, gphi).unwrap();
        let l = evolve_lindblad(&h, &rho, &set, &[0.0, time], &opts).unwrap();
        if let States::Mixed(s) = &l.states {
            worst_channel = worst_channel.max(linalg::max_abs(&(a.matrix() - s[1].matrix())));
        }
    }
    let el = t.elapsed();
    let pass = worst_parity < 1e-3 && worst_channel < 1e-6 && el < Duration::from_secs(60);
    report(8, "parity error mitigation", pass, el, format!("parity error {worst_parity:.1e}, channel mismatch {worst_channel:.1e}"));
    assert!(pass);
}

#[test]
fn a09_noon_pipeline() {
    let t = Instant::now();
    let mut worst = 1.0f64;
    for n in 1..=2 {
        let cx = ctx(n + 1);
        let enc = noon_encode(n, 2, 4, &cx).unwrap();
        let dec = noon_decode(n, 2, 4, &cx).unwrap();
        let cfg = CompileConfig::default();
        let (ce, cd) = (compile(&enc, &cx, &cfg, None).unwrap(), compile(&dec, &cx, &cfg, None).unwrap());
        let m = EffectiveModel::new(&ce.context, &enc.modes).unwrap();
        let u = m.schedule_unitary(&cd.schedule).unwrap() * m.schedule_unitary(&ce.schedule).unwrap();
        let idx = [m.space.index(0, &[0, 0]).unwrap(), m.space.index(1, &[0, 0]).unwrap()];
        let block = CMat::from_fn(2, 2, |i, j| u[(idx[i], idx[j])]);
        worst = worst.min(linalg::trace(&block).norm_sqr() / 4.0);
    }
    let cx = ctx(2);
    let times: Vec<f64> = (0..16).map(|k| k as f64 * 0.2e-3).collect();
    let coh = bell_idle_coherence(&cx, [2, 4], &times, &ode()).unwrap();
    let (_, tau) = fit_exponential_decay(&times, &coh).unwrap();
    let predicted = predicted_bell_coherence_time(&cx, [2, 4]);
    let dev = (tau / predicted - 1.0).abs();
    let el = t.elapsed();
    let pass = worst > 0.999 && dev <= 0.15 && el < Duration::from_secs(600);
    report(
        9,
        "NOON pipeline",
        pass,
        el,
        format!("min round-trip process fidelity {worst:.6}; Bell coherence {:.3} ms vs predicted {:.3} ms", tau * 1e3, predicted * 1e3),
    );
    assert!(pass);
}

#[test]
fn a10_reset_fixed_point() {
    let t = Instant::now();
    let cx = ctx(4);
    let p = sequential_reset(3, 2, &ResetOptions::default(), &cx).unwrap();
    let cp = compile(&p, &cx, &CompileConfig::default(), None).unwrap();
    let m = EffectiveModel::new(&cp.context, &p.modes).unwrap();
    let mut g = CMat::zeros(cx.transmon_levels, cx.transmon_levels);
    g[(0, 0)] = ONE;
    let rho0 = linalg::kron(&g, DensityMatrix::thermal_mode(cx.cutoff, 0.02).unwrap().matrix());
    let set = dynamics::CollapseSet::new();
    let rho = m.evolve_density(&cp.schedule, &rho0, &set, &ode()).unwrap();
    let residual = 1.0 - m.outcome(&rho).unwrap().reduced.matrix()[(0, 0)].re;
    let el = t.elapsed();
    let pass = residual <= 0.007 && el < Duration::from_secs(300);
    report(10, "reset fixed point", pass, el, format!("residual cavity excitation {residual:.4} from n̄ = 0.02"));
    assert!(pass);
}

#[test]
fn a11_fit_machinery() {
    let t = Instant::now();
    let (k, kp, g) = (1.0 / 1.1e-3, 1.0 / 1.7e-3, hz(1.2e6));
    let times: Vec<f64> = (0..500).map(|i| i as f64 * 8e-9).collect();
    let pf: Vec<f64> = times.iter().map(|&t| rabi_model(t, k, kp, g)).collect();
    let rf = rabi_fidelity_fit(&times, &pf).unwrap();
    let rabi_err = [(rf.kappa, k), (rf.kappa_phi, kp), (rf.gsb, g)].iter().map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    let counts: Vec<f64> = (0..40).map(|k| (k * 25) as f64).collect();
    let f_true: f64 = 0.9985;
    let pops: Vec<f64> = counts.iter().map(|&n| 0.48 * f_true.powf(n) + 0.5).collect();
    let tf = pulse_train_fit(&counts, &pops).unwrap();
    let train_err = (tf.fidelity / f_true - 1.0).abs();

    let params = SystemParams::reference_device();
    let n: Vec<usize> = (0..40).map(|k| 2 * k * 25).collect();
    let sim = pi_pulse_train(&params, CompileConfig::default().transmon_pi_time, &n, &ode()).unwrap();
    let nf: Vec<f64> = n.iter().map(|&x| x as f64).collect();
    let ge = pulse_train_fit(&nf, &sim).unwrap().fidelity;
    let el = t.elapsed();
    let pass = rabi_err < 1e-3 && train_err < 1e-3 && (ge - 0.9993).abs() <= 0.001 && el < Duration::from_secs(60);
    report(
        11,
        "fit machinery",
        pass,
        el,
        format!("Rabi recovery {rabi_err:.1e}, train recovery {train_err:.1e}, π_ge train fidelity {:.3}%", 100.0 * ge),
    );
    assert!(pass);
}
