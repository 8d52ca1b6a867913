//! The runnable experiments. Each one reads its typed `[params]`, runs on
//! the configured device and returns tables plus optional artifacts.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI, PI};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sideband_core::dynamics::{pi_pulse_train, pulse_train_fit, rabi_fidelity_fit, CollapseOptions};
use sideband_core::exec::Executor;
use sideband_core::floquet::{avoided_crossing_fit, fold, period_options, scan_model};
use sideband_core::hilbert::{self, DensityMatrix, StateVector};
use sideband_core::integrate::OdeOptions;
use sideband_core::io::{self, Cell, Table};
use sideband_core::linalg::{self, c, CMat, ONE};
use sideband_core::model::{sideband_rate_lowest_order, sideband_resonance_shift_estimate, DrivenModel, DrivenSetup, SystemParams};
use sideband_core::synthesis::*;
use sideband_core::tomography::{self, choose_displacements, error_bars, truncation_warning, GridSearch, ParityCalibration, WignerDataset};
use sideband_core::{hz, C64, TWO_PI};

use crate::config::{ExperimentKind, LoadedConfig};

/// Result of one experiment before it is written to disk.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    /// Parameters actually used, defaults filled in.
    pub params: serde_json::Value,
    pub tables: Vec<Table>,
    /// Extra files: (file name, contents).
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
}

/// Default `[params]` table of `kind`, for config templates.
pub fn default_params(kind: ExperimentKind) -> Result<toml::Table> {
    fn t<P: Serialize + Default>() -> Result<toml::Table> {
        Ok(toml::Table::try_from(P::default())?)
    }
    match kind {
        ExperimentKind::FloquetScan => t::<FloquetScanParams>(),
        ExperimentKind::SidebandRabi => t::<SidebandRabiParams>(),
        ExperimentKind::PulseTrain => t::<PulseTrainParams>(),
        ExperimentKind::FockPrep => t::<FockPrepParams>(),
        ExperimentKind::VacFock => t::<VacFockParams>(),
        ExperimentKind::Noon => t::<NoonParams>(),
        ExperimentKind::BinomialEncode => t::<BinomialParams>(),
        ExperimentKind::Tomography => t::<TomographyParams>(),
        ExperimentKind::Reset => t::<ResetParams>(),
        ExperimentKind::Thermal => t::<ThermalParams>(),
        ExperimentKind::ErrorBudget => t::<ErrorBudgetParams>(),
        ExperimentKind::LawEberlyCompare => t::<LawEberlyParams>(),
    }
}

/// Parse the params of `cfg` without running anything.
pub fn check_params(cfg: &LoadedConfig) -> Result<serde_json::Value> {
    fn t<P: DeserializeOwned + Serialize + Default>(cfg: &LoadedConfig) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(cfg.typed_params::<P>()?)?)
    }
    match cfg.file.experiment {
        ExperimentKind::FloquetScan => t::<FloquetScanParams>(cfg),
        ExperimentKind::SidebandRabi => t::<SidebandRabiParams>(cfg),
        ExperimentKind::PulseTrain => t::<PulseTrainParams>(cfg),
        ExperimentKind::FockPrep => t::<FockPrepParams>(cfg),
        ExperimentKind::VacFock => t::<VacFockParams>(cfg),
        ExperimentKind::Noon => t::<NoonParams>(cfg),
        ExperimentKind::BinomialEncode => t::<BinomialParams>(cfg),
        ExperimentKind::Tomography => t::<TomographyParams>(cfg),
        ExperimentKind::Reset => t::<ResetParams>(cfg),
        ExperimentKind::Thermal => t::<ThermalParams>(cfg),
        ExperimentKind::ErrorBudget => t::<ErrorBudgetParams>(cfg),
        ExperimentKind::LawEberlyCompare => t::<LawEberlyParams>(cfg),
    }
}

pub fn run_experiment(cfg: &LoadedConfig, exec: Executor) -> Result<ExperimentOutput> {
    let p = &cfg.params;
    let seed = cfg.file.seed;
    let mut out = match cfg.file.experiment {
        ExperimentKind::FloquetScan => floquet_scan(p, &cfg.typed_params()?, exec),
        ExperimentKind::SidebandRabi => sideband_rabi(p, &cfg.typed_params()?),
        ExperimentKind::PulseTrain => pulse_train(p, &cfg.typed_params()?),
        ExperimentKind::FockPrep => fock_prep(p, &cfg.typed_params()?, exec),
        ExperimentKind::VacFock => vac_fock(p, &cfg.typed_params()?, exec),
        ExperimentKind::Noon => noon(p, &cfg.typed_params()?, exec),
        ExperimentKind::BinomialEncode => binomial(p, &cfg.typed_params()?, exec),
        ExperimentKind::Tomography => tomography(&cfg.typed_params()?, seed),
        ExperimentKind::Reset => reset(p, &cfg.typed_params()?, exec),
        ExperimentKind::Thermal => thermal(p, &cfg.typed_params()?),
        ExperimentKind::ErrorBudget => error_budget_run(p, &cfg.typed_params()?, exec),
        ExperimentKind::LawEberlyCompare => law_eberly(p, &cfg.typed_params()?),
    }
    .with_context(|| format!("experiment {}", cfg.file.experiment))?;
    out.params = check_params(cfg)?;
    Ok(out)
}

fn table(name: &str, columns: &[&str]) -> Table {
    Table::new(name, columns)
}

fn opt_cell(v: Option<f64>) -> Cell {
    v.map(Cell::Num).unwrap_or_else(|| Cell::Text(String::new()))
}

fn ctx(params: &SystemParams, cutoff: usize) -> SynthesisContext {
    SynthesisContext::new(params.clone()).with_cutoff(cutoff).with_transmon_levels(3)
}

fn check_mode(params: &SystemParams, mode: usize) -> Result<()> {
    if mode >= params.n_modes() {
        bail!("params.mode = {mode} but the device has {} modes", params.n_modes());
    }
    Ok(())
}

// ---------------------------------------------------------------- floquet

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloquetScanParams {
    pub mode: usize,
    pub transmon_levels: usize,
    pub mode_cutoff: usize,
    pub cosine_order: usize,
    pub epsilon_hz: f64,
    pub points: usize,
    /// Scan centre; defaults to the bare resonance plus the Stark estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_hz: Option<f64>,
}

impl Default for FloquetScanParams {
    fn default() -> Self {
        Self { mode: 2, transmon_levels: 3, mode_cutoff: 3, cosine_order: 4, epsilon_hz: 200e6, points: 41, center_hz: None, span_hz: None }
    }
}

fn floquet_scan(params: &SystemParams, p: &FloquetScanParams, exec: Executor) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    if p.points < 3 {
        bail!("params.points must be >= 3");
    }
    let dm = DrivenModel::new(params, DrivenSetup::new(p.mode, p.transmon_levels, p.mode_cutoff), p.cosine_order)?;
    let eps = hz(p.epsilon_hz);
    let w0 = dm.bare_sideband_resonance();
    let (shift, g_est) = if eps > 0.0 {
        (sideband_resonance_shift_estimate(params, eps, w0)?, sideband_rate_lowest_order(params, p.mode, eps)?.exact.abs())
    } else {
        (0.0, 0.0)
    };
    let center = p.center_hz.map(hz).unwrap_or(w0 + shift);
    let half = p.span_hz.map(|s| hz(s) / 2.0).unwrap_or((3.0 * shift.abs() + 30.0 * g_est).max(hz(1e6)));
    let n = p.points;
    let grid: Vec<f64> = (0..n).map(|k| center - half + 2.0 * half * k as f64 / (n - 1) as f64).collect();
    let scan = scan_model(&dm, eps, &grid, exec, &period_options())?;

    let (f0, g1) = ((2, 0), (0, 1));
    let (sf, sg, gap) = (scan.series(f0), scan.series(g1), scan.gap(f0, g1));
    let mut qt = table("quasienergies", &["omega_d_hz", "eps_f0_hz", "eps_g1_hz", "gap_hz", "shift_f0_hz", "shift_g1_hz"]);
    let hzv = |v: Option<f64>| opt_cell(v.map(|x| x / TWO_PI));
    // Drive-induced shift: quasienergy minus the undriven level, in the nearest zone.
    let (ef, eg) = (dm.basis.energy(f0.0, f0.1), dm.basis.energy(g1.0, g1.1));
    for (i, &wd) in grid.iter().enumerate() {
        let shift = |e: Option<f64>, bare: f64| hzv(e.map(|e| fold(e, wd, bare) - bare));
        qt.push(vec![Cell::Num(wd / TWO_PI), hzv(sf[i]), hzv(sg[i]), hzv(gap[i]), shift(sf[i], ef), shift(sg[i], eg)])?;
    }
    let mut out = ExperimentOutput { tables: vec![qt], ..Default::default() };
    if !scan.failures.is_empty() {
        out.warnings.push(format!("label tracking failed at {} (grid point, mode) pairs", scan.failures.len()));
    }
    if eps > 0.0 {
        let (w, g): (Vec<f64>, Vec<f64>) = grid.iter().zip(&gap).filter_map(|(&w, g)| g.map(|g| (w, g))).unzip();
        match avoided_crossing_fit(&w, &g) {
            Ok(fit) => {
                let mut ft = table("resonance_fit", &["resonance_hz", "rate_hz", "residual_hz", "bare_resonance_hz", "stark_estimate_hz", "lowest_order_rate_hz"]);
                ft.push(
                    [fit.resonance, fit.rate, fit.residual, w0, shift, g_est].iter().map(|x| Cell::Num(x / TWO_PI)).collect(),
                )?;
                out.tables.push(ft);
            }
            Err(e) => out.warnings.push(format!("avoided-crossing fit failed: {e}")),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------- sideband Rabi

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SidebandRabiParams {
    pub mode: usize,
    pub duration_s: f64,
    pub points: usize,
    pub dissipation: bool,
}

impl Default for SidebandRabiParams {
    fn default() -> Self {
        Self { mode: 2, duration_s: 4e-6, points: 201, dissipation: true }
    }
}

fn sideband_rabi(params: &SystemParams, p: &SidebandRabiParams) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    if p.points < 8 || !(p.duration_s > 0.0) {
        bail!("params.points must be >= 8 and params.duration_s > 0");
    }
    let cx = ctx(params, 2);
    let durations: Vec<f64> = (0..p.points).map(|k| p.duration_s * k as f64 / (p.points - 1) as f64).collect();
    let proto = ThermalPopulationProtocol { mode: p.mode, durations: durations.clone() };
    let vac = hilbert::mode_ket(2, &[(0, ONE)])?.to_density();
    let (pf, _) = proto.simulate(&cx, &vac, p.dissipation, &OdeOptions::default())?;
    let mut t = table("rabi", &["time_s", "p_f"]);
    for (time, v) in durations.iter().zip(&pf) {
        t.push(vec![Cell::Num(*time), Cell::Num(*v)])?;
    }
    let mut out = ExperimentOutput { tables: vec![t], ..Default::default() };
    let period = PI / cx.sideband_rate(p.mode)?;
    if p.duration_s < 3.0 * period {
        out.warnings.push(format!("sweep covers {:.1} oscillation periods; fits need at least 3", p.duration_s / period));
    }
    let fit = rabi_fidelity_fit(&durations, &pf)?;
    let mut ft = table("fit", &["gsb_hz", "kappa_per_s", "kappa_phi_per_s", "fidelity"]);
    ft.push(vec![Cell::Num(fit.gsb / TWO_PI), Cell::Num(fit.kappa), Cell::Num(fit.kappa_phi), Cell::Num(fit.fidelity)])?;
    out.tables.push(ft);
    Ok(out)
}

// ------------------------------------------------------------- pulse train

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseTrainParams {
    pub pi_time_s: f64,
    /// Largest pulse count; counts are even and evenly spaced.
    pub max_pulses: usize,
    pub points: usize,
}

impl Default for PulseTrainParams {
    fn default() -> Self {
        Self { pi_time_s: 60e-9, max_pulses: 1950, points: 40 }
    }
}

fn pulse_train(params: &SystemParams, p: &PulseTrainParams) -> Result<ExperimentOutput> {
    if p.points < 4 {
        bail!("params.points must be >= 4");
    }
    let step = (p.max_pulses / (2 * (p.points - 1))).max(1) * 2;
    let counts: Vec<usize> = (0..p.points).map(|k| k * step).collect();
    let pops = pi_pulse_train(params, p.pi_time_s, &counts, &OdeOptions::default())?;
    let mut t = table("train", &["pulses", "population"]);
    for (n, v) in counts.iter().zip(&pops) {
        t.push(vec![Cell::from(*n), Cell::Num(*v)])?;
    }
    let nf: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let fit = pulse_train_fit(&nf, &pops)?;
    let mut ft = table("fit", &["fidelity", "ci95", "amplitude", "offset", "relative_residual"]);
    ft.push(vec![Cell::Num(fit.fidelity), Cell::Num(fit.ci95), Cell::Num(fit.amplitude), Cell::Num(fit.offset), Cell::Num(fit.relative_residual)])?;
    let mut out = ExperimentOutput { tables: vec![t, ft], ..Default::default() };
    if fit.coherent_error {
        out.warnings.push(format!("pulse-train residual {:.3} suggests coherent errors", fit.relative_residual));
    }
    Ok(out)
}

// ---------------------------------------------------- state preparations

const PREP_COLUMNS: [&str; 9] =
    ["n", "pulses", "sidebands", "duration_s", "coherent_fidelity", "postselected_fidelity", "traced_fidelity", "excluded_fraction", "kept_fraction"];

/// Coherent and dissipative fidelities of `program` from (u|g⟩ + v|e⟩)|vac⟩.
fn prep_row(n: usize, program: &SequenceProgram, cx: &SynthesisContext, u: C64, v: C64, dissipation: bool) -> Result<Vec<Cell>> {
    let cp = compile(program, cx, &CompileConfig::default(), None)?;
    let model = EffectiveModel::new(&cp.context, &program.modes)?;
    let psi = model.qubit_input(u, v)?;
    let rho0 = &psi * psi.adjoint();
    let target = cavity_target(program, &model, u, v)?;
    let opts = OdeOptions::default();
    let coherent = RunFidelity::from_outcome(&run_dissipative(&cp, &rho0, &CollapseOptions::none(program.modes.clone()), &opts)?, &target)?;
    let noisy = if dissipation {
        RunFidelity::from_outcome(&run_dissipative(&cp, &rho0, &CollapseOptions::all(program.modes.clone()), &opts)?, &target)?
    } else {
        coherent
    };
    Ok(vec![
        Cell::from(n),
        Cell::from(program.len()),
        Cell::from(program.sideband_count()),
        Cell::Num(cp.schedule.total_duration),
        Cell::Num(coherent.traced),
        Cell::Num(noisy.postselected),
        Cell::Num(noisy.traced),
        Cell::Num(noisy.excluded_fraction),
        Cell::Num(1.0 - noisy.excluded_fraction),
    ])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockPrepParams {
    pub mode: usize,
    pub n_max: usize,
    pub dissipation: bool,
}

impl Default for FockPrepParams {
    fn default() -> Self {
        Self { mode: 2, n_max: 3, dissipation: true }
    }
}

fn fock_prep(params: &SystemParams, p: &FockPrepParams, exec: Executor) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let ns: Vec<usize> = (1..=p.n_max).collect();
    let rows = exec.try_map(&ns, |&n| -> Result<Vec<Cell>> {
        let cx = ctx(params, n + 1);
        prep_row(n, &sideband_core::synthesis::fock_prep(n, p.mode, &cx)?, &cx, ONE, c(0.0, 0.0), p.dissipation)
    })?;
    let mut t = table("fock_prep", &PREP_COLUMNS);
    for r in rows {
        t.push(r)?;
    }
    Ok(ExperimentOutput { tables: vec![t], ..Default::default() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VacFockParams {
    pub mode: usize,
    pub n_max: usize,
    pub theta: f64,
    pub phi: f64,
    pub dissipation: bool,
}

impl Default for VacFockParams {
    fn default() -> Self {
        Self { mode: 2, n_max: 3, theta: PI / 2.0, phi: 0.0, dissipation: true }
    }
}

fn vac_fock(params: &SystemParams, p: &VacFockParams, exec: Executor) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let ns: Vec<usize> = (1..=p.n_max).collect();
    let rows = exec.try_map(&ns, |&n| -> Result<Vec<Cell>> {
        let cx = ctx(params, n + 1);
        let prog = vacuum_fock_superposition(n, p.theta, p.phi, p.mode, &cx)?;
        prep_row(n, &prog, &cx, ONE, c(0.0, 0.0), p.dissipation)
    })?;
    let mut t = table("vac_fock", &PREP_COLUMNS);
    for r in rows {
        t.push(r)?;
    }
    Ok(ExperimentOutput { tables: vec![t], ..Default::default() })
}

// -------------------------------------------------------------------- NOON

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoonParams {
    pub modes: [usize; 2],
    pub n_max: usize,
    pub dissipation: bool,
    /// Idle times of the single-photon Bell-state coherence measurement.
    pub bell_points: usize,
    pub bell_spacing_s: f64,
}

impl Default for NoonParams {
    fn default() -> Self {
        Self { modes: [2, 4], n_max: 2, dissipation: true, bell_points: 16, bell_spacing_s: 0.2e-3 }
    }
}

fn noon(params: &SystemParams, p: &NoonParams, exec: Executor) -> Result<ExperimentOutput> {
    let [a, b] = p.modes;
    check_mode(params, a)?;
    check_mode(params, b)?;
    if a == b {
        bail!("params.modes must name two different modes");
    }
    let ns: Vec<usize> = (1..=p.n_max).collect();
    let h = c(FRAC_1_SQRT_2, 0.0);
    let rows = exec.try_map(&ns, |&n| -> Result<Vec<Cell>> {
        let cx = ctx(params, n + 1);
        let enc = noon_encode(n, a, b, &cx)?;
        let dec = noon_decode(n, a, b, &cx)?;
        let cfg = CompileConfig::default();
        let (ce, cd) = (compile(&enc, &cx, &cfg, None)?, compile(&dec, &cx, &cfg, None)?);
        let m = EffectiveModel::new(&ce.context, &enc.modes)?;
        let u = m.schedule_unitary(&cd.schedule)? * m.schedule_unitary(&ce.schedule)?;
        let idx = [m.space.index(0, &[0, 0])?, m.space.index(1, &[0, 0])?];
        let block = CMat::from_fn(2, 2, |i, j| u[(idx[i], idx[j])]);
        let process = linalg::trace(&block).norm_sqr() / 4.0;
        let mut row = prep_row(n, &enc, &cx, h, h, p.dissipation)?;
        row.push(Cell::Num(process));
        Ok(row)
    })?;
    let mut cols = PREP_COLUMNS.to_vec();
    cols.push("round_trip_process_fidelity");
    let mut t = table("noon", &cols);
    for r in rows {
        t.push(r)?;
    }
    let cx = ctx(params, 2);
    let times: Vec<f64> = (0..p.bell_points).map(|k| k as f64 * p.bell_spacing_s).collect();
    let coh = bell_idle_coherence(&cx, p.modes, &times, &OdeOptions::default())?;
    let mut bt = table("bell_coherence", &["time_s", "coherence"]);
    for (time, v) in times.iter().zip(&coh) {
        bt.push(vec![Cell::Num(*time), Cell::Num(*v)])?;
    }
    let (amp, tau) = fit_exponential_decay(&times, &coh)?;
    let mut ft = table("bell_fit", &["amplitude", "tau_s", "predicted_tau_s"]);
    ft.push(vec![Cell::Num(amp), Cell::Num(tau), Cell::Num(predicted_bell_coherence_time(&cx, p.modes))])?;
    Ok(ExperimentOutput { tables: vec![t, bt, ft], ..Default::default() })
}

// ---------------------------------------------------------------- binomial

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinomialParams {
    pub mode: usize,
    pub cutoff: usize,
    pub dissipation: bool,
}

impl Default for BinomialParams {
    fn default() -> Self {
        Self { mode: 2, cutoff: 7, dissipation: true }
    }
}

fn binomial(params: &SystemParams, p: &BinomialParams, exec: Executor) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let cx = ctx(params, p.cutoff);
    let prog = binomial_encode(p.mode, &cx)?;
    let cp = compile(&prog, &cx, &CompileConfig::default(), None)?;
    let opts = OdeOptions::default();
    let coherent = cardinal_fidelities(&cp, &CollapseOptions::none(prog.modes.clone()), &opts, exec)?;
    let noisy = if p.dissipation { cardinal_fidelities(&cp, &CollapseOptions::all(prog.modes.clone()), &opts, exec)? } else { coherent.clone() };
    let mut t = table("cardinals", &["state", "coherent_fidelity", "postselected_fidelity", "traced_fidelity", "excluded_fraction"]);
    for (c0, r) in coherent.iter().zip(&noisy) {
        t.push(vec![
            Cell::from(r.label.as_str()),
            Cell::Num(c0.fidelity.traced),
            Cell::Num(r.fidelity.postselected),
            Cell::Num(r.fidelity.traced),
            Cell::Num(r.fidelity.excluded_fraction),
        ])?;
    }
    let mut st = table("sequence", &["pulses", "sidebands", "duration_s"]);
    st.push(vec![Cell::from(prog.len()), Cell::from(prog.sideband_count()), Cell::Num(cp.schedule.total_duration)])?;
    Ok(ExperimentOutput { tables: vec![t, st], artifacts: vec![("program.txt".into(), prog.to_text().into_bytes())], ..Default::default() })
}

// -------------------------------------------------------------- tomography

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TomographyState {
    Vacuum,
    Fock,
    /// (|0⟩ + |4⟩)/√2
    Binomial,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyParams {
    pub state: TomographyState,
    /// Photon number of the `fock` state.
    pub photons: usize,
    pub cutoff: usize,
    /// Number of displacements; 0 uses 4·cutoff².
    pub points: usize,
    pub noise_sigma: f64,
    pub p_g: f64,
    pub p_e: f64,
    pub search_budget: usize,
    /// Noise resamples for error bars; 0 skips them.
    pub error_bar_iterations: usize,
    pub calibration_spread: (f64, f64),
}

impl Default for TomographyParams {
    fn default() -> Self {
        Self {
            state: TomographyState::Binomial,
            photons: 1,
            cutoff: 6,
            points: 0,
            noise_sigma: 0.05 * FRAC_2_PI,
            p_g: 0.0,
            p_e: 1.0,
            search_budget: 800,
            error_bar_iterations: 20,
            calibration_spread: (0.0, 0.0),
        }
    }
}

fn tomography(p: &TomographyParams, seed: u64) -> Result<ExperimentOutput> {
    let d = p.cutoff;
    let coeffs: Vec<(usize, C64)> = match p.state {
        TomographyState::Vacuum => vec![(0, ONE)],
        TomographyState::Fock => vec![(p.photons, ONE)],
        TomographyState::Binomial => vec![(0, c(FRAC_1_SQRT_2, 0.0)), (4, c(FRAC_1_SQRT_2, 0.0))],
    };
    if coeffs.iter().any(|(n, _)| *n >= d) {
        bail!("params.cutoff = {d} is too small for the requested state");
    }
    let target: StateVector = hilbert::mode_ket(d, &coeffs)?;
    let count = if p.points == 0 { 4 * d * d } else { p.points };
    let search = GridSearch { budget: p.search_budget, seed, ..Default::default() };
    let grid = choose_displacements(d, count, &search)?;
    let cal = ParityCalibration::new(p.p_g, p.p_e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truncated = grid.points.iter().filter(|pt| truncation_warning(pt[0], d).is_some()).count();
    let ds = WignerDataset::simulate(&target.to_density(), grid, &cal, p.noise_sigma, &mut rng)?;
    let mut rec = tomography::reconstruct(&ds, d, Some(&target))?;
    if p.error_bar_iterations > 0 {
        let spread = error_bars(&ds, &cal, &[d], &target, p.error_bar_iterations, p.calibration_spread, seed)?;
        rec.fidelity_std = Some(spread.total_std);
    }
    let mut t = table("reconstruction", &["points", "fidelity", "fidelity_std", "residual", "condition_number", "iterations"]);
    t.push(vec![
        Cell::from(ds.grid.len()),
        opt_cell(rec.fidelity),
        opt_cell(rec.fidelity_std),
        Cell::Num(rec.residual),
        Cell::Num(rec.condition_number),
        Cell::from(rec.iterations),
    ])?;
    let mut pt = table("photon_distribution", &["n", "reconstructed", "target"]);
    let tgt = target.to_density();
    for n in 0..d {
        pt.push(vec![Cell::from(n), Cell::Num(rec.rho.matrix()[(n, n)].re), Cell::Num(tgt.matrix()[(n, n)].re)])?;
    }
    let mut wig = vec![];
    io::write_wigner_csv(&ds, &mut wig)?;
    let mut rj = vec![];
    io::write_reconstruction_json(&rec, &mut rj)?;
    let mut out = ExperimentOutput {
        tables: vec![t, pt],
        artifacts: vec![("wigner.csv".into(), wig), ("reconstruction.json".into(), rj)],
        ..Default::default()
    };
    if truncated > 0 {
        out.warnings.push(format!("{truncated} displacements have |α|² > cutoff/4; truncation error may be significant"));
    }
    Ok(out)
}

// ------------------------------------------------------------------- reset

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResetParams {
    pub mode: usize,
    pub n_max: usize,
    pub nbar: f64,
    pub cycles: Vec<usize>,
    pub dissipation: bool,
}

impl Default for ResetParams {
    fn default() -> Self {
        Self { mode: 2, n_max: 3, nbar: 0.02, cycles: vec![1, 2], dissipation: false }
    }
}

fn reset(params: &SystemParams, p: &ResetParams, exec: Executor) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let cx = ctx(params, p.n_max + 1);
    let rows = exec.try_map(&p.cycles, |&cycles| -> Result<Vec<Cell>> {
        let prog = sequential_reset(p.n_max, p.mode, &ResetOptions { cycles, ..Default::default() }, &cx)?;
        let cp = compile(&prog, &cx, &CompileConfig::default(), None)?;
        let mut g = CMat::zeros(cx.transmon_levels, cx.transmon_levels);
        g[(0, 0)] = ONE;
        let rho0 = linalg::kron(&g, DensityMatrix::thermal_mode(cx.cutoff, p.nbar)?.matrix());
        let ch = if p.dissipation { CollapseOptions::all(prog.modes.clone()) } else { CollapseOptions::none(prog.modes.clone()) };
        let out = run_dissipative(&cp, &rho0, &ch, &OdeOptions::default())?;
        let residual = 1.0 - out.reduced.matrix()[(0, 0)].re;
        Ok(vec![Cell::from(cycles), Cell::from(prog.len()), Cell::Num(cp.schedule.total_duration), Cell::Num(residual), Cell::Num(out.p_ground)])
    })?;
    let mut t = table("reset", &["cycles", "pulses", "duration_s", "residual_excitation", "p_ground"]);
    for r in rows {
        t.push(r)?;
    }
    Ok(ExperimentOutput { tables: vec![t], ..Default::default() })
}

// ----------------------------------------------------------------- thermal

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    pub mode: usize,
    pub nbar: f64,
    pub cutoff: usize,
    pub points: usize,
    pub dissipation: bool,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self { mode: 2, nbar: 0.01, cutoff: 3, points: 41, dissipation: true }
    }
}

fn thermal(params: &SystemParams, p: &ThermalParams) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let cx = ctx(params, p.cutoff);
    let proto = thermal_population_protocol(p.mode, &cx, p.points)?;
    let rho = DensityMatrix::thermal_mode(p.cutoff, p.nbar)?;
    let (with, without) = proto.simulate(&cx, &rho, p.dissipation, &OdeOptions::default())?;
    let mut t = table("sweep", &["time_s", "p_f_prepared", "p_f_unprepared"]);
    for ((time, a), b) in proto.durations.iter().zip(&with).zip(&without) {
        t.push(vec![Cell::Num(*time), Cell::Num(*a), Cell::Num(*b)])?;
    }
    let est = ThermalPopulationProtocol::estimate(&with, &without)?;
    let mut et = table("estimate", &["nbar_true", "nbar_estimate", "full_contrast", "residual_contrast"]);
    et.push(vec![Cell::Num(p.nbar), Cell::Num(est.nbar), Cell::Num(est.full_contrast), Cell::Num(est.residual_contrast)])?;
    Ok(ExperimentOutput { tables: vec![t, et], ..Default::default() })
}

// ------------------------------------------------------------ error budget

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorBudgetParams {
    pub mode: usize,
    pub cutoff: usize,
    /// Optional transmon T1 override.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmon_t1_s: Option<f64>,
    /// Optional transmon pure-dephasing time override; needs `transmon_t1_s`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmon_tphi_s: Option<f64>,
}

impl Default for ErrorBudgetParams {
    fn default() -> Self {
        Self { mode: 2, cutoff: 7, transmon_t1_s: None, transmon_tphi_s: None }
    }
}

fn error_budget_run(params: &SystemParams, p: &ErrorBudgetParams, exec: Executor) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let device = match (p.transmon_t1_s, p.transmon_tphi_s) {
        (Some(t1), Some(tphi)) => params.with_transmon_coherence(t1, tphi),
        (None, None) => params.clone(),
        _ => bail!("params.transmon_t1_s and params.transmon_tphi_s must be given together"),
    };
    let cx = ctx(&device, p.cutoff);
    let prog = binomial_encode(p.mode, &cx)?;
    let cp = compile(&prog, &cx, &CompileConfig::default(), None)?;
    let rows = error_budget(&cp, &OdeOptions::default(), exec)?;
    let mut t = table("error_budget", &["channels", "postselected_infidelity", "traced_infidelity", "excluded_fraction"]);
    for r in rows {
        t.push(vec![Cell::from(r.channels), Cell::Num(r.postselected_infidelity), Cell::Num(r.traced_infidelity), Cell::Num(r.excluded_fraction)])?;
    }
    Ok(ExperimentOutput { tables: vec![t], ..Default::default() })
}

// ------------------------------------------------------------- Law–Eberly

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawEberlyParams {
    pub mode: usize,
    pub n_max: usize,
}

impl Default for LawEberlyParams {
    fn default() -> Self {
        Self { mode: 2, n_max: 4 }
    }
}

fn law_eberly(params: &SystemParams, p: &LawEberlyParams) -> Result<ExperimentOutput> {
    check_mode(params, p.mode)?;
    let cx = ctx(params, p.n_max + 1);
    let rows = law_eberly_table(p.n_max, p.mode, &cx, &CompileConfig::default())?;
    let mut t = table(
        "law_eberly_compare",
        &["n", "law_eberly_sidebands", "law_eberly_duration_s", "encoding_sidebands", "encoding_duration_s"],
    );
    for r in rows {
        t.push(vec![
            Cell::from(r.n),
            Cell::from(r.law_eberly_sidebands),
            Cell::Num(r.law_eberly_duration),
            Cell::from(r.encoding_sidebands),
            Cell::Num(r.encoding_duration),
        ])?;
    }
    Ok(ExperimentOutput { tables: vec![t], ..Default::default() })
}
