//! Time evolution (unitary and Lindblad), the closed-form dispersive
//! decoherence channel, parity mitigation, fidelity fits and the classical
//! readout-reset model.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::fit;
use crate::hilbert::{self, CompositeSpace, DensityMatrix, OpLabel, OperatorMatrix, StateVector};
use crate::integrate::{self, MagnusOptions, OdeOptions};
use crate::linalg::{self, c, cis, r, CMat, CVec, C64, IM, ZERO};
use crate::model::{SystemParams, TimeDependentHamiltonian};

/// One collapse channel L = √rate · op.
#[derive(Clone, Debug)]
pub struct Collapse {
    pub op: OperatorMatrix,
    pub rate: f64,
    pub name: String,
}

/// Which channels [`CollapseSet::from_params`] includes.
#[derive(Clone, Debug)]
pub struct CollapseOptions {
    pub transmon_decay: bool,
    pub transmon_dephasing: bool,
    pub mode_decay: bool,
    pub mode_dephasing: bool,
    /// Thermal excitation at rate n̄γ; off by default.
    pub thermal: bool,
    /// Device mode index for each mode subsystem of the space.
    pub modes: Vec<usize>,
}

impl CollapseOptions {
    pub fn all(modes: Vec<usize>) -> Self {
        Self { transmon_decay: true, transmon_dephasing: true, mode_decay: true, mode_dephasing: true, thermal: false, modes }
    }

    pub fn none(modes: Vec<usize>) -> Self {
        Self { transmon_decay: false, transmon_dephasing: false, mode_decay: false, mode_dephasing: false, thermal: false, modes }
    }

    pub fn transmon_only(modes: Vec<usize>) -> Self {
        Self { mode_decay: false, mode_dephasing: false, ..Self::all(modes) }
    }

    pub fn modes_only(modes: Vec<usize>) -> Self {
        Self { transmon_decay: false, transmon_dephasing: false, ..Self::all(modes) }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CollapseSet {
    pub channels: Vec<Collapse>,
}

/// Decay rate of transmon level `l` into `l − 1`: γ_ge for e, γ_ef for f and
/// (l/2)·γ_ef above, following the harmonic matrix-element scaling.
pub fn transmon_decay_rate(params: &SystemParams, level: usize) -> f64 {
    match level {
        0 => 0.0,
        1 => 1.0 / params.t1_transmon,
        l => l as f64 / 2.0 / params.t1_ef,
    }
}

/// Diagonal dephasing amplitudes d_l with coherence (g, l) decaying at d_l²/2:
/// d_e = √(2γφ_ge), d_f = √(2γφ_gf), and d_l = (l/2) d_f above f.
pub fn transmon_dephasing_amplitudes(params: &SystemParams, levels: usize) -> Vec<f64> {
    let de = (2.0 * params.gamma_phi_ge()).sqrt();
    let df = (2.0 * params.gamma_phi_gf()).sqrt();
    (0..levels)
        .map(|l| match l {
            0 => 0.0,
            1 => de,
            2 => df,
            l => df * l as f64 / 2.0,
        })
        .collect()
}

impl CollapseSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, op: OperatorMatrix, rate: f64, name: impl Into<String>) -> Result<()> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return invalid(format!("collapse rate {rate} must be finite and >= 0"));
        }
        if rate > 0.0 {
            self.channels.push(Collapse { op, rate, name: name.into() });
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Derive channels from device parameters.
    pub fn from_params(params: &SystemParams, space: &CompositeSpace, opts: &CollapseOptions) -> Result<Self> {
        if opts.modes.len() != space.n_modes() {
            return Err(Error::DimensionMismatch { expected: space.n_modes(), got: opts.modes.len() });
        }
        let nt = space.transmon_dim();
        let mut set = Self::new();
        if opts.transmon_decay {
            for l in 1..nt {
                let op = space.transmon_transition(l - 1, l)?;
                set.push(OperatorMatrix::new(op, OpLabel::Other(format!("t{}{}", l - 1, l))), transmon_decay_rate(params, l), format!("transmon decay {l}->{}", l - 1))?;
            }
            if opts.thermal && params.thermal_transmon > 0.0 && nt > 1 {
                let op = space.transmon_transition(1, 0)?;
                set.push(OperatorMatrix::new(op, OpLabel::Other("t10".into())), params.thermal_transmon / params.t1_transmon, "transmon thermal excitation")?;
            }
        }
        if opts.transmon_dephasing && nt > 1 {
            let d = transmon_dephasing_amplitudes(params, nt);
            let local = linalg::diag_real(&d);
            set.push(OperatorMatrix::new(space.embed(0, &local)?, OpLabel::Other("transmon dephasing".into())), 1.0, "transmon dephasing")?;
        }
        for (k, &m) in opts.modes.iter().enumerate() {
            if m >= params.n_modes() {
                return Err(Error::SubsystemOutOfRange { index: m, count: params.n_modes() });
            }
            let a = hilbert::lowering_op(space, k + 1)?;
            if opts.mode_decay {
                set.push(a.clone(), 1.0 / params.mode_t1[m], format!("mode {m} decay"))?;
                if opts.thermal {
                    set.push(a.dagger(), params.thermal_modes[m] / params.mode_t1[m], format!("mode {m} thermal excitation"))?;
                }
            }
            if opts.mode_dephasing {
                let n = hilbert::number_op(space, k + 1)?;
                set.push(n, 2.0 * params.mode_gamma_phi(m), format!("mode {m} dephasing"))?;
            }
        }
        Ok(set)
    }

    /// L_k = √rate · op.
    pub fn matrices(&self) -> Vec<CMat> {
        self.channels.iter().map(|c| &c.op.matrix * r(c.rate.sqrt())).collect()
    }
}

/// Sparse jump operator for the L ρ L† sandwich.
#[derive(Clone, Debug)]
struct Jump {
    nz: Vec<(usize, usize, C64)>,
}

impl Jump {
    fn from_dense(m: &CMat) -> Self {
        let mut nz = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    nz.push((i, j, v));
                }
            }
        }
        Self { nz }
    }

    fn sandwich_add(&self, rho: &CMat, out: &mut CMat) {
        for &(i, j, a) in &self.nz {
            for &(k, l, b) in &self.nz {
                out[(i, k)] += a * rho[(j, l)] * b.conj();
            }
        }
    }
}

/// Precomputed Lindblad generator for a fixed collapse set.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    jumps: Vec<Jump>,
    /// −(i/2) Σ L†L
    damping: CMat,
}

impl Lindbladian {
    pub fn new(dim: usize, collapse: &CollapseSet) -> Result<Self> {
        let mut damping = CMat::zeros(dim, dim);
        let mut jumps = Vec::new();
        for l in collapse.matrices() {
            if l.nrows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: l.nrows() });
            }
            damping -= (l.adjoint() * &l) * c(0.0, 0.5);
            jumps.push(Jump::from_dense(&l));
        }
        Ok(Self { jumps, damping })
    }

    /// H_eff = H − (i/2)ΣL†L.
    pub fn effective(&self, h: &CMat) -> CMat {
        h + &self.damping
    }

    /// dρ/dt = −i(H_eff ρ − ρ H_eff†) + Σ L ρ L†.
    pub fn rhs(&self, h_eff: &CMat, rho: &CMat) -> CMat {
        let a = h_eff * rho;
        let mut out = (&a - a.adjoint()) * (-IM);
        for j in &self.jumps {
            j.sandwich_add(rho, &mut out);
        }
        out
    }

    /// Evolve ρ under a constant Hamiltonian for `t`.
    pub fn evolve_static(&self, h: &CMat, rho: &CMat, t: f64, opts: &OdeOptions) -> Result<CMat> {
        if t == 0.0 {
            return Ok(rho.clone());
        }
        let h_eff = self.effective(h);
        let mut out = integrate::dopri5(|_, y| self.rhs(&h_eff, y), rho, &[0.0, t], opts)?;
        Ok(out.pop().unwrap())
    }
}

#[derive(Clone, Debug)]
pub enum States {
    Pure(Vec<StateVector>),
    Mixed(Vec<DensityMatrix>),
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub states: States,
    pub observables: Vec<(String, Vec<f64>)>,
}

impl TrajectoryResult {
    /// Record Re⟨op⟩ at every output time under `name`.
    pub fn add_observable(&mut self, name: impl Into<String>, op: &CMat) {
        let vals = match &self.states {
            States::Pure(v) => v.iter().map(|s| s.amplitudes().dotc(&(op * s.amplitudes())).re).collect(),
            States::Mixed(v) => v.iter().map(|s| s.expect(op).re).collect(),
        };
        self.observables.push((name.into(), vals));
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// CSV with a time column and one column per observable.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time_s".to_string()];
        header.extend(self.observables.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.9e}")];
            row.extend(self.observables.iter().map(|(_, v)| format!("{:.12e}", v[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unitary evolution of a pure state.
pub fn evolve_unitary(h: &TimeDependentHamiltonian, psi0: &StateVector, times: &[f64], opts: &MagnusOptions) -> Result<TrajectoryResult> {
    if psi0.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: psi0.dim() });
    }
    let vecs = integrate::evolve_state(h, psi0.amplitudes(), times, opts)?;
    let mut states = Vec::with_capacity(vecs.len());
    for (v, &t) in vecs.into_iter().zip(times) {
        let n = v.norm();
        if (n - 1.0).abs() > 1e-8 {
            return Err(Error::Integrator { t, reason: format!("norm drifted to {n}") });
        }
        states.push(StateVector::normalized(v, psi0.dims().to_vec())?);
    }
    Ok(TrajectoryResult { times: times.to_vec(), states: States::Pure(states), observables: vec![] })
}

/// Lindblad evolution of a density matrix.
pub fn evolve_lindblad(
    h: &TimeDependentHamiltonian,
    rho0: &DensityMatrix,
    collapse: &CollapseSet,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<TrajectoryResult> {
    if rho0.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: rho0.dim() });
    }
    let lind = Lindbladian::new(h.dim(), collapse)?;
    let out = if h.is_static() {
        let h_eff = lind.effective(h.static_part());
        integrate::dopri5(|_, y| lind.rhs(&h_eff, y), rho0.matrix(), times, opts)?
    } else {
        integrate::dopri5(|t, y| lind.rhs(&lind.effective(&h.at(t)), y), rho0.matrix(), times, opts)?
    };
    let mut states = Vec::with_capacity(out.len());
    for (m, &t) in out.into_iter().zip(times) {
        let rho = DensityMatrix::new_unchecked(m, rho0.dims().to_vec())?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-6 {
            return Err(Error::Integrator { t, reason: format!("trace drifted to {tr}") });
        }
        states.push(rho);
    }
    Ok(TrajectoryResult { times: times.to_vec(), states: States::Mixed(states), observables: vec![] })
}

/// Two-level transmon ⊗ mode under H = (χ/2) n σ_z with L0 = √γ σ−,
/// L1 = √(γ_φ/2) σ_z, where σ_z = |e⟩⟨e| − |g⟩⟨g|. Applies the block solution
/// for ρ^{ee}, ρ^{eg}, ρ^{ge}, ρ^{gg} at time `t`.
pub fn dispersive_channel_analytic(rho0: &DensityMatrix, chi: f64, gamma: f64, gamma_phi: f64, t: f64) -> Result<DensityMatrix> {
    let dims = rho0.dims();
    if dims.len() != 2 || dims[0] != 2 {
        return invalid("dispersive channel needs a two-level transmon ⊗ single mode");
    }
    if gamma < 0.0 || gamma_phi < 0.0 {
        return invalid("rates must be >= 0");
    }
    let d = dims[1];
    let m = rho0.matrix();
    let g = |n: usize| n;
    let e = |n: usize| d + n;
    let coh = (-(gamma / 2.0 + gamma_phi) * t).exp();
    let decay = (-gamma * t).exp();
    let mut out = CMat::zeros(2 * d, 2 * d);
    for n1 in 0..d {
        for n2 in 0..d {
            let dn = n1 as f64 - n2 as f64;
            let sum = (n1 + n2) as f64;
            let ree = m[(e(n1), e(n2))];
            out[(e(n1), e(n2))] = ree * cis(-chi / 2.0 * dn * t) * decay;
            out[(e(n1), g(n2))] = m[(e(n1), g(n2))] * cis(-chi / 2.0 * sum * t) * coh;
            out[(g(n1), e(n2))] = m[(g(n1), e(n2))] * cis(chi / 2.0 * sum * t) * coh;
            let den = c(gamma, chi * dn);
            let feed = if den.norm() == 0.0 { ZERO } else { ree * gamma / den };
            out[(g(n1), g(n2))] = (m[(g(n1), g(n2))] + feed) * cis(chi / 2.0 * dn * t) - feed * decay * cis(-chi / 2.0 * dn * t);
        }
    }
    DensityMatrix::new_unchecked(out, dims.to_vec())
}

/// The dispersive model of [`dispersive_channel_analytic`] as a Hamiltonian
/// and collapse set on a 2 ⊗ d space.
pub fn dispersive_model(d: usize, chi: f64, gamma: f64, gamma_phi: f64) -> Result<(TimeDependentHamiltonian, CollapseSet)> {
    let sz = linalg::diag_real(&[-1.0, 1.0]);
    let n = linalg::diag_real(&(0..d).map(|k| k as f64).collect::<Vec<_>>());
    let h = linalg::kron(&sz, &n) * r(chi / 2.0);
    let mut set = CollapseSet::new();
    let sm = CMat::from_row_slice(2, 2, &[ZERO, linalg::ONE, ZERO, ZERO]);
    set.push(OperatorMatrix::new(linalg::kron(&sm, &linalg::eye(d)), OpLabel::Other("sigma-".into())), gamma, "decay")?;
    set.push(OperatorMatrix::new(linalg::kron(&sz, &linalg::eye(d)), OpLabel::Other("sigma_z".into())), gamma_phi / 2.0, "dephasing")?;
    Ok((TimeDependentHamiltonian::constant(h)?, set))
}

/// P_e = ½(1 − D) + D·P_even with D = e^{−(γ/2+γ_φ)t}.
pub fn parity_outcome_probability(p_even: f64, gamma: f64, gamma_phi: f64, t: f64) -> f64 {
    let d = (-(gamma / 2.0 + gamma_phi) * t).exp();
    0.5 * (1.0 - d) + d * p_even
}

/// Inverse of [`parity_outcome_probability`].
pub fn invert_parity_outcome(p_e: f64, gamma: f64, gamma_phi: f64, t: f64) -> f64 {
    let d = (-(gamma / 2.0 + gamma_phi) * t).exp();
    (p_e - 0.5 * (1.0 - d)) / d
}

/// R(π/2) about y on the transmon: |g⟩ → (|g⟩ + |e⟩)/√2.
fn half_pi_y(d: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rot = CMat::from_row_slice(2, 2, &[r(s), r(-s), r(s), r(s)]);
    linalg::kron(&rot, &linalg::eye(d))
}

/// Simulated parity measurement on a cavity state: π/2 – wait π/|χ| – π/2 with
/// the transmon starting in |g⟩, integrated with the Lindblad solver.
/// Returns the transmon |e⟩ probability.
pub fn parity_measurement_lindblad(cavity: &DensityMatrix, chi: f64, gamma: f64, gamma_phi: f64, opts: &OdeOptions) -> Result<f64> {
    if cavity.dims().len() != 1 {
        return invalid("parity measurement expects a single-mode state");
    }
    let d = cavity.dim();
    let g = DensityMatrix::new_unchecked(linalg::diag_real(&[1.0, 0.0]), vec![2])?;
    let rho = g.tensor(cavity);
    let u = half_pi_y(d);
    let rho = &u * rho.matrix() * u.adjoint();
    let (h, set) = dispersive_model(d, chi, gamma, gamma_phi)?;
    let t = std::f64::consts::PI / chi.abs();
    let lind = Lindbladian::new(2 * d, &set)?;
    let rho = lind.evolve_static(h.static_part(), &rho, t, opts)?;
    let rho = &u * rho * u.adjoint();
    Ok((d..2 * d).map(|k| rho[(k, k)].re).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RabiFit {
    pub kappa: f64,
    pub kappa_phi: f64,
    pub gsb: f64,
    /// F ≈ 1 − (π/2)(κ + κ_φ/2)/g_sb
    pub fidelity: f64,
}

/// P_f(t) = ½e^{−κt}(1 + e^{−κ_φ t} cos 2g t).
pub fn rabi_model(t: f64, kappa: f64, kappa_phi: f64, g: f64) -> f64 {
    0.5 * (-kappa * t).exp() * (1.0 + (-kappa_phi * t).exp() * (2.0 * g * t).cos())
}

pub fn rabi_fidelity(kappa: f64, kappa_phi: f64, gsb: f64) -> f64 {
    1.0 - std::f64::consts::FRAC_PI_2 * (kappa + kappa_phi / 2.0) / gsb
}

/// Fit damped sideband Rabi data.
pub fn rabi_fidelity_fit(times: &[f64], pf: &[f64]) -> Result<RabiFit> {
    if times.len() != pf.len() || times.len() < 8 {
        return invalid("need at least 8 paired samples");
    }
    let span = times.iter().cloned().fold(f64::MIN, f64::max) - times.iter().cloned().fold(f64::MAX, f64::min);
    // frequency guess from the first minimum of P_f
    let i_min = (1..pf.len()).find(|&i| i + 1 < pf.len() && pf[i] <= pf[i - 1] && pf[i] <= pf[i + 1]).unwrap_or(pf.len() / 2);
    let g0 = std::f64::consts::FRAC_PI_2 / times[i_min].max(span / pf.len() as f64);
    if g0 * span < 3.0 * std::f64::consts::PI {
        return invalid("data must span at least three oscillation periods");
    }
    let s = 1.0 / span;
    let res = fit::least_squares(
        |p| times.iter().zip(pf).map(|(&t, &y)| rabi_model(t, p[0] * s, p[1] * s, p[2] * s) - y).collect(),
        &[0.01, 0.01, g0 / s],
    )?;
    let (kappa, kappa_phi, gsb) = (res.params[0] * s, res.params[1] * s, res.params[2].abs() * s);
    Ok(RabiFit { kappa, kappa_phi, gsb, fidelity: rabi_fidelity(kappa, kappa_phi, gsb) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseTrainFit {
    pub fidelity: f64,
    /// Half-width of the 95% confidence interval on the fidelity.
    pub ci95: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// RMS of the exponential-fit residual relative to |A|.
    pub relative_residual: f64,
    /// Residual structure too large for incoherent decay alone.
    pub coherent_error: bool,
}

/// Residual threshold (relative to |A|) that flags coherent errors.
pub const COHERENT_RESIDUAL_FLAG: f64 = 0.02;

/// Fit p(N) = A·F^N + c.
pub fn pulse_train_fit(counts: &[f64], populations: &[f64]) -> Result<PulseTrainFit> {
    if counts.len() != populations.len() || counts.len() < 5 {
        return invalid("need at least 5 pulse counts");
    }
    let n_max = counts.iter().cloned().fold(0.0, f64::max).max(1.0);
    let (first, last) = (populations[0], populations[populations.len() - 1]);
    // parameterize F = exp(−x / n_max) so x stays O(1)
    let res = fit::least_squares(
        |p| counts.iter().zip(populations).map(|(&n, &y)| p[0] * (-p[1] * n / n_max).exp() + p[2] - y).collect(),
        &[first - last.min(first) + 1e-3, 0.1, last.min(first)],
    )?;
    let (a, x, off) = (res.params[0], res.params[1], res.params[2]);
    let fidelity = (-x / n_max).exp();
    let ci95 = 1.96 * fidelity * res.std_errors[1] / n_max;
    let relative_residual = res.rms / a.abs().max(1e-300);
    Ok(PulseTrainFit { fidelity, ci95, amplitude: a, offset: off, relative_residual, coherent_error: relative_residual > COHERENT_RESIDUAL_FLAG })
}

/// Resonant π-pulse train on a two-level transmon with the device T1 and
/// pure dephasing, ideal square pulses of length `pi_time` back to back.
/// Returns the probability of the ideal outcome (g for even N, e for odd N).
pub fn pi_pulse_train(params: &SystemParams, pi_time: f64, counts: &[usize], opts: &OdeOptions) -> Result<Vec<f64>> {
    if !(pi_time > 0.0) {
        return invalid("pi_time must be > 0");
    }
    let omega = std::f64::consts::PI / pi_time;
    let h = CMat::from_row_slice(2, 2, &[ZERO, r(omega / 2.0), r(omega / 2.0), ZERO]);
    let mut set = CollapseSet::new();
    let sm = CMat::from_row_slice(2, 2, &[ZERO, linalg::ONE, ZERO, ZERO]);
    set.push(OperatorMatrix::new(sm, OpLabel::Other("sigma-".into())), 1.0 / params.t1_transmon, "decay")?;
    let sz = linalg::diag_real(&[-1.0, 1.0]);
    set.push(OperatorMatrix::new(sz, OpLabel::Other("sigma_z".into())), params.gamma_phi_ge() / 2.0, "dephasing")?;
    let lind = Lindbladian::new(2, &set)?;
    let mut rho = linalg::diag_real(&[1.0, 0.0]);
    let n_max = counts.iter().copied().max().unwrap_or(0);
    let mut out = vec![0.0; counts.len()];
    for n in 0..=n_max {
        for (k, &c) in counts.iter().enumerate() {
            if c == n {
                out[k] = if n % 2 == 0 { rho[(0, 0)].re } else { rho[(1, 1)].re };
            }
        }
        if n < n_max {
            rho = lind.evolve_static(&h, &rho, pi_time, opts)?;
        }
    }
    Ok(out)
}

/// Sign s in dα/dt = −(κ/2 + s·iχ/2)α − iε(t) for the transmon in |e⟩; |g⟩
/// uses −s. With s = +1 the e-state trajectory rotates clockwise.
pub const E_STATE_SIGN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadoutBranch {
    G,
    E,
}

impl ReadoutBranch {
    pub fn sign(self) -> f64 {
        match self {
            ReadoutBranch::E => E_STATE_SIGN,
            ReadoutBranch::G => -E_STATE_SIGN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutSegment {
    pub name: String,
    /// Complex drive amplitude ε (rad/s) in the frame of the mid-point carrier.
    pub amplitude: C64,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutResetPlan {
    pub chi: f64,
    pub kappa: f64,
    pub segments: Vec<ReadoutSegment>,
    /// 2(π − θ_r)/χ, the wait that brings both branches together.
    pub tau_r: f64,
    /// Steady states 2ε/(κ + isχ) with s the branch sign, without the −i drive phase.
    pub alpha_g: C64,
    pub alpha_e: C64,
    pub theta_r: f64,
}

impl ReadoutResetPlan {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

fn lambda(kappa: f64, chi: f64, s: f64) -> C64 {
    c(kappa / 2.0, s * chi / 2.0)
}

/// Exact solution over a constant-drive segment.
fn segment_solution(alpha0: C64, eps: C64, lam: C64, t: f64) -> C64 {
    let decay = (-lam * t).exp();
    alpha0 * decay + (-IM * eps / lam) * (1.0 - decay)
}

/// Ring-up, readout, wait and ring-down segments for the readout mode.
/// `readout_time` is the flat readout segment. The ring-down is split into two
/// equal constant segments whose amplitudes are solved so both branches end at
/// the origin.
pub fn readout_reset_plan_with(chi: f64, kappa: f64, epsilon: f64, readout_time: f64, ring_down: f64) -> Result<ReadoutResetPlan> {
    let chi = chi.abs();
    if !(chi > 0.0) || !(kappa > 0.0) {
        return invalid("χ and κ must be > 0");
    }
    let theta_r = (chi / kappa).atan();
    let tau_r = 2.0 * (std::f64::consts::PI - theta_r) / chi;
    let alpha_g = r(2.0 * epsilon) / c(kappa, ReadoutBranch::G.sign() * chi);
    let alpha_e = r(2.0 * epsilon) / c(kappa, ReadoutBranch::E.sign() * chi);
    let ring_up = 2.0 * std::f64::consts::LN_2 / kappa;
    let mut segments = vec![
        ReadoutSegment { name: "ring_up".into(), amplitude: r(2.0 * epsilon), duration: ring_up },
        ReadoutSegment { name: "readout".into(), amplitude: r(epsilon), duration: readout_time },
        ReadoutSegment { name: "wait".into(), amplitude: ZERO, duration: tau_r },
    ];
    // Two ring-down halves with amplitudes (x, y): α_s(end) = a_s + b_s x + c_s y.
    // Solving α_g(end) = α_e(end) = 0 fixes both.
    let half = ring_down / 2.0;
    let mut rows = [[ZERO; 3]; 2];
    for (row, s) in rows.iter_mut().zip([-1.0, 1.0]) {
        let lam = lambda(kappa, chi, s);
        let mut a = ZERO;
        for seg in &segments {
            a = segment_solution(a, seg.amplitude, lam, seg.duration);
        }
        let a_end = segment_solution(segment_solution(a, ZERO, lam, half), ZERO, lam, half);
        let b = segment_solution(segment_solution(ZERO, linalg::ONE, lam, half), ZERO, lam, half);
        let cc = segment_solution(ZERO, linalg::ONE, lam, half);
        *row = [b, cc, -a_end];
    }
    let det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0];
    if det.norm() < 1e-300 {
        return invalid("ring-down system is singular");
    }
    let x = (rows[0][2] * rows[1][1] - rows[0][1] * rows[1][2]) / det;
    let y = (rows[0][0] * rows[1][2] - rows[0][2] * rows[1][0]) / det;
    segments.push(ReadoutSegment { name: "ring_down_1".into(), amplitude: x, duration: half });
    segments.push(ReadoutSegment { name: "ring_down_2".into(), amplitude: y, duration: half });
    Ok(ReadoutResetPlan { chi, kappa, segments, tau_r, alpha_g, alpha_e, theta_r })
}

/// Plan with a 3 µs readout and a 100 ns ring-down.
pub fn readout_reset_plan(chi: f64, kappa: f64, epsilon: f64) -> Result<ReadoutResetPlan> {
    readout_reset_plan_with(chi, kappa, epsilon, 3e-6, 100e-9)
}

/// α(t) for one transmon branch under the plan (exact piecewise solution).
pub fn classical_readout_trajectory(plan: &ReadoutResetPlan, branch: ReadoutBranch, times: &[f64]) -> Vec<C64> {
    let lam = lambda(plan.kappa, plan.chi, branch.sign());
    times
        .iter()
        .map(|&t| {
            let mut a = ZERO;
            let mut t0 = 0.0;
            for seg in &plan.segments {
                if t <= t0 + seg.duration {
                    return segment_solution(a, seg.amplitude, lam, (t - t0).max(0.0));
                }
                a = segment_solution(a, seg.amplitude, lam, seg.duration);
                t0 += seg.duration;
            }
            segment_solution(a, ZERO, lam, t - t0)
        })
        .collect()
}

/// Populations of |l⟩ for every transmon level of a composite-space state.
pub fn transmon_populations(space: &CompositeSpace, rho: &CMat) -> Vec<f64> {
    let mut p = vec![0.0; space.transmon_dim()];
    for i in 0..space.dim() {
        p[space.label(i).0] += rho[(i, i)].re;
    }
    p
}

/// Pure-state helper: |ψ⟩⟨ψ| as a matrix.
pub fn projector(psi: &CVec) -> CMat {
    linalg::outer(psi, psi)
}
