//! Device parameters and analytic physics: Hamiltonians, dispersive shifts,
//! sideband rates and Stark shifts.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{self, CompositeSpace, OpLabel, OperatorMatrix};
use crate::linalg::{self, cis, r, CMat, IM};
use crate::pulse::Envelope;
use crate::{hz, TWO_PI};

/// Which transmon T2 value feeds the pure-dephasing rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum T2Kind {
    #[default]
    Echo,
    Ramsey,
}

/// All device parameters in angular units (rad/s) and seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_q: f64,
    pub anharm_k: f64,
    pub phi_zpt: f64,
    pub transmon_dim: usize,
    pub mode_freqs: Vec<f64>,
    pub couplings_g: Vec<f64>,
    pub chi_e: Vec<f64>,
    pub chi_f: Vec<f64>,
    pub mode_kerr: Vec<f64>,
    pub t1_transmon: f64,
    pub t2_transmon: f64,
    pub t2_star_transmon: f64,
    pub t1_ef: f64,
    pub t2_gf: f64,
    pub t2_star_gf: f64,
    pub t2_kind: T2Kind,
    pub mode_t1: Vec<f64>,
    pub mode_t2: Vec<f64>,
    pub thermal_transmon: f64,
    pub thermal_modes: Vec<f64>,
    pub readout_freq: f64,
    pub readout_chi: f64,
    pub readout_kappa: f64,
    pub readout_thermal: f64,
}

impl SystemParams {
    /// Measured parameters of the ten-mode reference device. Couplings g_i
    /// are not measured directly; they are inverted from χ_e,i.
    pub fn reference_device() -> Self {
        let khz = |v: &[f64]| v.iter().map(|x| hz(x * 1e3)).collect::<Vec<_>>();
        let ghz = |v: &[f64]| v.iter().map(|x| hz(x * 1e9)).collect::<Vec<_>>();
        let ms = |v: &[f64]| v.iter().map(|x| x * 1e-3).collect::<Vec<_>>();
        let omega_q = hz(4.606e9);
        let anharm_k = hz(4.492e9 - 4.606e9);
        let mode_freqs = ghz(&[5.750, 5.994, 6.228, 6.479, 6.720, 6.962, 7.216, 7.461, 7.715, 7.967]);
        let chi_e = khz(&[-197.0, -217.0, -202.0, -208.0, -171.0, -150.0, -165.0, -133.0, -117.0, -106.0]);
        let chi_f = khz(&[-356.0, -383.0, -394.0, -391.0, -363.0, -299.0, -304.0, -245.0, -220.0, -190.0]);
        let couplings_g = mode_freqs
            .iter()
            .zip(&chi_e)
            .map(|(&wc, &chi)| coupling_from_chi(chi, omega_q - wc, anharm_k).expect("off resonance"))
            .collect();
        let n = mode_freqs.len();
        Self {
            omega_q,
            anharm_k,
            phi_zpt: 0.3,
            transmon_dim: 4,
            mode_freqs,
            couplings_g,
            chi_e,
            chi_f,
            mode_kerr: vec![0.0; n],
            t1_transmon: 55.83e-6,
            t2_transmon: 65.65e-6,
            t2_star_transmon: 47.20e-6,
            t1_ef: 28.85e-6,
            t2_gf: 41.06e-6,
            t2_star_gf: 36.58e-6,
            t2_kind: T2Kind::Echo,
            mode_t1: ms(&[1.187, 1.253, 1.298, 1.175, 1.175, 0.899, 0.656, 0.851, 0.936, 0.989]),
            mode_t2: ms(&[1.932, 2.044, 2.0243, 1.926, 1.897, 1.559, 1.1613, 1.555, 1.662, 1.811]),
            thermal_transmon: 0.0032,
            thermal_modes: vec![0.0026, 0.0055, 0.0048, 0.0058, 0.0049, 0.0039, 0.0059, 0.0062, 0.0073, 0.0070],
            readout_freq: hz(8.0174e9),
            readout_chi: hz(-845e3),
            readout_kappa: 1.0 / 0.61e-6,
            readout_thermal: 0.0054,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.mode_freqs.len()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::SubsystemOutOfRange { index: mode, count: self.n_modes() });
        }
        Ok(())
    }

    /// Δ_i = ω_q − ω_c,i
    pub fn delta(&self, mode: usize) -> f64 {
        self.omega_q - self.mode_freqs[mode]
    }

    pub fn omega_ef(&self) -> f64 {
        self.omega_q + self.anharm_k
    }

    /// Hard checks return an error; soft checks return warning strings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.n_modes();
        for (name, len) in [
            ("couplings_g", self.couplings_g.len()),
            ("chi_e", self.chi_e.len()),
            ("chi_f", self.chi_f.len()),
            ("mode_kerr", self.mode_kerr.len()),
            ("mode_t1", self.mode_t1.len()),
            ("mode_t2", self.mode_t2.len()),
            ("thermal_modes", self.thermal_modes.len()),
        ] {
            if len != n {
                return invalid(format!("{name} has {len} entries, expected {n}"));
            }
        }
        if self.transmon_dim < 2 {
            return invalid("transmon_dim must be >= 2");
        }
        let times = [self.t1_transmon, self.t2_transmon, self.t2_star_transmon, self.t1_ef, self.t2_gf, self.t2_star_gf];
        if times.iter().chain(&self.mode_t1).chain(&self.mode_t2).any(|&t| !(t > 0.0)) {
            return invalid("all coherence times must be > 0");
        }
        if self.readout_kappa <= 0.0 {
            return invalid("readout_kappa must be > 0");
        }
        let thermals = std::iter::once(self.thermal_transmon).chain(self.thermal_modes.iter().copied());
        if thermals.chain(std::iter::once(self.readout_thermal)).any(|p| !(0.0..0.5).contains(&p)) {
            return invalid("thermal populations must lie in [0, 0.5)");
        }
        let mut warnings = Vec::new();
        for i in 0..n {
            let ratio = (self.couplings_g[i] / self.delta(i)).abs();
            if ratio >= 0.2 {
                warnings.push(format!("mode {i}: |g/Δ| = {ratio:.3} outside dispersive regime"));
            }
            let chi = chi_from_coupling(self.couplings_g[i], self.delta(i), self.anharm_k)?;
            if self.chi_e[i] != 0.0 && ((chi - self.chi_e[i]) / self.chi_e[i]).abs() > 0.1 {
                warnings.push(format!("mode {i}: χ from coupling differs from stored χ_e by more than 10%"));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }

    /// Pure dephasing of the g–e coherence from the configured T2 kind.
    pub fn gamma_phi_ge(&self) -> f64 {
        let t2 = match self.t2_kind {
            T2Kind::Echo => self.t2_transmon,
            T2Kind::Ramsey => self.t2_star_transmon,
        };
        pure_dephasing(self.t1_transmon, t2)
    }

    /// Pure dephasing of the g–f coherence: 1/T2_gf − 1/(2 T1_ef).
    pub fn gamma_phi_gf(&self) -> f64 {
        let t2 = match self.t2_kind {
            T2Kind::Echo => self.t2_gf,
            T2Kind::Ramsey => self.t2_star_gf,
        };
        pure_dephasing(self.t1_ef, t2)
    }

    pub fn mode_gamma_phi(&self, mode: usize) -> f64 {
        pure_dephasing(self.mode_t1[mode], self.mode_t2[mode])
    }

    /// Replace transmon coherences with T1 and a g–e pure dephasing time Tφ.
    /// The f level decays twice as fast as e, and the g–f pure dephasing keeps
    /// its current ratio to the g–e rate.
    pub fn with_transmon_coherence(&self, t1: f64, t_phi: f64) -> Self {
        let ratio = if self.gamma_phi_ge() > 0.0 { self.gamma_phi_gf() / self.gamma_phi_ge() } else { 1.0 };
        let mut p = self.clone();
        p.t1_transmon = t1;
        p.t1_ef = t1 / 2.0;
        p.t2_transmon = 1.0 / (1.0 / (2.0 * t1) + 1.0 / t_phi);
        p.t2_star_transmon = p.t2_transmon;
        p.t2_gf = 1.0 / (1.0 / (2.0 * p.t1_ef) + ratio / t_phi);
        p.t2_star_gf = p.t2_gf;
        p
    }
}

/// γ_φ = 1/T2 − 1/(2T1), clamped to zero.
pub fn pure_dephasing(t1: f64, t2: f64) -> f64 {
    let g = 1.0 / t2 - 1.0 / (2.0 * t1);
    if g < 0.0 {
        log::warn!("negative pure dephasing rate {g:e} clamped to 0 (T1 = {t1:e}, T2 = {t2:e})");
        0.0
    } else {
        g
    }
}

/// Dispersive shift of transmon level `level` for `mode`: 0 for g, χ_e, χ_f,
/// and linear extrapolation of the level-to-level increment beyond f.
pub fn level_chi(params: &SystemParams, level: usize, mode: usize) -> f64 {
    let (ce, cf) = (params.chi_e[mode], params.chi_f[mode]);
    match level {
        0 => 0.0,
        1 => ce,
        l => cf + (l as f64 - 2.0) * (cf - ce),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub epsilon: f64,
    pub omega_d: f64,
    pub phase: f64,
}

impl DriveParams {
    pub fn new(epsilon: f64, omega_d: f64, phase: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return invalid("drive amplitude must be >= 0");
        }
        Ok(Self { epsilon, omega_d, phase })
    }

    pub fn period(&self) -> f64 {
        TWO_PI / self.omega_d
    }
}

type CoeffFn = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// H(t) = H0 + Σ_k f_k(t)·A_k with Hermitian A_k and real coefficients.
#[derive(Clone)]
pub struct TimeDependentHamiltonian {
    h0: CMat,
    ops: Vec<CMat>,
    coeffs: Arc<CoeffFn>,
    pub period: Option<f64>,
}

impl std::fmt::Debug for TimeDependentHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeDependentHamiltonian")
            .field("dim", &self.dim())
            .field("terms", &self.ops.len())
            .field("period", &self.period)
            .finish()
    }
}

impl TimeDependentHamiltonian {
    pub fn new(
        h0: CMat,
        ops: Vec<CMat>,
        coeffs: impl Fn(f64, &mut [f64]) + Send + Sync + 'static,
        period: Option<f64>,
    ) -> Result<Self> {
        let d = h0.nrows();
        for m in std::iter::once(&h0).chain(&ops) {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.nrows() });
            }
            if linalg::hermiticity_defect(m) > 1e-10 {
                return invalid("Hamiltonian term is not Hermitian");
            }
        }
        if let Some(p) = period {
            if !(p > 0.0) {
                return invalid("period must be > 0");
            }
        }
        Ok(Self { h0, ops, coeffs: Arc::new(coeffs), period })
    }

    pub fn constant(h0: CMat) -> Result<Self> {
        Self::new(h0, vec![], |_, _| {}, None)
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn static_part(&self) -> &CMat {
        &self.h0
    }

    pub fn is_static(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn coefficients(&self, t: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.ops.len()];
        (self.coeffs)(t, &mut c);
        c
    }

    /// Evaluate H(t).
    pub fn at(&self, t: f64) -> CMat {
        let mut h = self.h0.clone();
        if self.ops.is_empty() {
            return h;
        }
        let c = self.coefficients(t);
        for (ck, op) in c.iter().zip(&self.ops) {
            if *ck != 0.0 {
                h.zip_apply(op, |a, b| *a += b * *ck);
            }
        }
        h
    }

    pub fn with_period(mut self, period: Option<f64>) -> Self {
        self.period = period;
        self
    }
}

/// Diagonal dispersive Hamiltonian with level-resolved shifts χ_{l,i}:
/// H = ω_q c†c + (K/2)c†c†cc + Σ_i [ω_c,i n_i + (K_i/2) n_i(n_i−1) + Σ_l χ_{l,i} |l⟩⟨l| n_i].
/// With χ_f = 2χ_e this is the c†c·b†b form.
pub fn dispersive_hamiltonian(params: &SystemParams, space: &CompositeSpace) -> Result<OperatorMatrix> {
    if space.n_modes() > params.n_modes() {
        return Err(Error::DimensionMismatch { expected: params.n_modes(), got: space.n_modes() });
    }
    let diag = dispersive_diagonal(params, space, true);
    Ok(OperatorMatrix::new(linalg::diag_real(&diag), OpLabel::Hamiltonian))
}

/// Diagonal of the dispersive Hamiltonian; `with_bare` = false keeps only the
/// χ and Kerr terms (interaction frame of the bare transmon and modes).
pub fn dispersive_diagonal(params: &SystemParams, space: &CompositeSpace, with_bare: bool) -> Vec<f64> {
    (0..space.dim())
        .map(|i| {
            let (l, ns) = space.label(i);
            let lf = l as f64;
            let mut e = 0.0;
            if with_bare {
                e += params.omega_q * lf + 0.5 * params.anharm_k * lf * (lf - 1.0);
            }
            for (m, &n) in ns.iter().enumerate() {
                let nf = n as f64;
                if with_bare {
                    e += params.mode_freqs[m] * nf;
                }
                e += 0.5 * params.mode_kerr[m] * nf * (nf - 1.0) + level_chi(params, l, m) * nf;
            }
            e
        })
        .collect()
}

/// χ = 2g²K / (Δ(Δ+K)).
pub fn chi_from_coupling(g: f64, delta: f64, k: f64) -> Result<f64> {
    if delta == 0.0 || delta + k == 0.0 {
        return Err(Error::Resonance(format!("Δ = {delta:e}, Δ+K = {:e}", delta + k)));
    }
    Ok(2.0 * g * g * k / (delta * (delta + k)))
}

/// g = √(χΔ(Δ+K)/(2K)).
pub fn coupling_from_chi(chi: f64, delta: f64, k: f64) -> Result<f64> {
    if delta == 0.0 || delta + k == 0.0 || k == 0.0 {
        return Err(Error::Resonance(format!("Δ = {delta:e}, K = {k:e}")));
    }
    let arg = chi * delta * (delta + k) / (2.0 * k);
    if arg < 0.0 {
        return invalid(format!("sign of χ inconsistent with Δ and K (argument {arg:e})"));
    }
    Ok(arg.sqrt())
}

/// ξ = 2ω_d ε / (ω_d² − ω_q²).
pub fn xi_displacement(drive: &DriveParams, omega_q: f64) -> Result<f64> {
    let den = drive.omega_d * drive.omega_d - omega_q * omega_q;
    if den == 0.0 {
        return Err(Error::Resonance("drive resonant with the transmon".into()));
    }
    Ok(2.0 * drive.omega_d * drive.epsilon / den)
}

/// Drive frequency that makes |f,0⟩ ↔ |g,1⟩ resonant, ignoring Stark shifts.
pub fn sideband_drive_frequency(params: &SystemParams, mode: usize) -> f64 {
    2.0 * params.omega_q + params.anharm_k - params.mode_freqs[mode]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SidebandRate {
    /// √2 (ω_q+K+Δ)/(2ω_q+K+Δ) · (ε/g) · χ
    pub exact: f64,
    /// εχ/(√2 g)
    pub approx: f64,
}

/// Lowest-order g–f sideband rate for `mode`.
pub fn sideband_rate_lowest_order(params: &SystemParams, mode: usize, epsilon: f64) -> Result<SidebandRate> {
    params.check_mode(mode)?;
    let (g, d, k, wq) = (params.couplings_g[mode], params.delta(mode), params.anharm_k, params.omega_q);
    if g == 0.0 {
        return invalid("zero coupling");
    }
    let chi = chi_from_coupling(g, d, k)?;
    let exact = std::f64::consts::SQRT_2 * (wq + k + d) / (2.0 * wq + k + d) * (epsilon / g) * chi;
    let approx = epsilon * chi / (std::f64::consts::SQRT_2 * g);
    Ok(SidebandRate { exact, approx })
}

/// Drive amplitude giving a lowest-order sideband rate of magnitude `gsb`.
pub fn epsilon_for_rate(params: &SystemParams, mode: usize, gsb: f64) -> Result<f64> {
    let unit = sideband_rate_lowest_order(params, mode, 1.0)?.exact.abs();
    Ok(gsb.abs() / unit)
}

/// Sideband rate with the φ_zpt ξ series correction, in the g–f manifold:
/// √2 · (gKξ/Δ) · Σ_{n=1..N} (−1)^{n+1}(φ_zpt ξ)^{2n−2}/((n−1)!)².
/// The √2 converts the two-photon operator rate to the |f,n⟩–|g,n+1⟩ rate.
pub fn sideband_rate_series(params: &SystemParams, mode: usize, epsilon: f64, n_terms: usize) -> Result<f64> {
    params.check_mode(mode)?;
    if n_terms < 1 {
        return invalid("n_terms must be >= 1");
    }
    let drive = DriveParams::new(epsilon, sideband_drive_frequency(params, mode), 0.0)?;
    let xi = xi_displacement(&drive, params.omega_q)?;
    let head = params.couplings_g[mode] * params.anharm_k * xi / params.delta(mode);
    Ok(std::f64::consts::SQRT_2 * head * series_factor(params.phi_zpt * xi, n_terms))
}

/// Σ_{n=1..N} (−1)^{n+1} x^{2n−2} / ((n−1)!)², summed by term recurrence.
pub fn series_factor(x: f64, n_terms: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 1..=n_terms {
        sum += term;
        let k = n as f64;
        term *= -x * x / (k * k);
    }
    sum
}

/// ω_SS ≈ −2Kξ², the drive-induced shift per transmon quantum.
pub fn stark_shift_estimate(params: &SystemParams, epsilon: f64, omega_d: f64) -> Result<f64> {
    let xi = xi_displacement(&DriveParams::new(epsilon, omega_d, 0.0)?, params.omega_q)?;
    Ok(-2.0 * params.anharm_k * xi * xi)
}

/// Shift of the |f,0⟩–|g,1⟩ resonance implied by the per-quantum estimate:
/// the f level carries two transmon quanta, and the shift lowers the transition.
pub fn sideband_resonance_shift_estimate(params: &SystemParams, epsilon: f64, omega_d: f64) -> Result<f64> {
    Ok(-2.0 * stark_shift_estimate(params, epsilon, omega_d)?)
}

/// Effective multimode JC Hamiltonian in the g–f manifold:
/// Σ_i [χ_e,i n_i|e⟩⟨e| + χ_f,i n_i|f⟩⟨f| + g_sb,i(e^{iφ_i} b_i|f⟩⟨g| + h.c.)].
pub fn effective_jc_hamiltonian(
    params: &SystemParams,
    space: &CompositeSpace,
    gsb: &[f64],
    phases: &[f64],
) -> Result<OperatorMatrix> {
    if space.transmon_dim() < 3 {
        return invalid("effective JC Hamiltonian needs transmon_dim >= 3");
    }
    let m = space.n_modes();
    if gsb.len() != m || phases.len() != m || params.n_modes() < m {
        return Err(Error::DimensionMismatch { expected: m, got: gsb.len().min(phases.len()) });
    }
    let pe = space.transmon_projector(1)?;
    let pf = space.transmon_projector(2)?;
    let fg = space.transmon_transition(2, 0)?;
    let mut h = CMat::zeros(space.dim(), space.dim());
    for i in 0..m {
        let n = hilbert::number_op(space, i + 1)?.matrix;
        let b = hilbert::lowering_op(space, i + 1)?.matrix;
        h += &pe * &n * r(params.chi_e[i]) + &pf * &n * r(params.chi_f[i]);
        let up = &fg * &b * (cis(phases[i]) * gsb[i]);
        h += &up + up.adjoint();
    }
    Ok(OperatorMatrix::new(h, OpLabel::Hamiltonian))
}

/// Frame in which the driven-transmon Hamiltonian is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriveFrame {
    /// Literal charge drive on the truncated transmon.
    Lab,
    /// Frame displaced by the classical response α(t) of the transmon; an
    /// exact periodic frame change, so quasienergies are unchanged, but far
    /// better conditioned under truncation.
    #[default]
    Displaced,
}

/// Bare (undressed) single-mode circuit parameters of the driven model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BareParams {
    pub omega_q: f64,
    pub omega_c: f64,
    /// E_J φ_zpt⁴
    pub e_js: f64,
    pub g: f64,
}

/// Truncation and frame of the driven transmon ⊗ single-mode model.
#[derive(Clone, Debug)]
pub struct DrivenSetup {
    pub mode: usize,
    pub transmon_levels: usize,
    pub mode_cutoff: usize,
    pub frame: DriveFrame,
    /// Extra transmon levels used to evaluate the nonlinearity before projection.
    pub extra_levels: usize,
    /// Transmon truncation at which bare parameters are calibrated.
    pub calibration_levels: usize,
    pub envelope: Option<Envelope>,
}

impl DrivenSetup {
    pub fn new(mode: usize, transmon_levels: usize, mode_cutoff: usize) -> Self {
        Self {
            mode,
            transmon_levels,
            mode_cutoff,
            frame: DriveFrame::Displaced,
            extra_levels: 10,
            calibration_levels: 8,
            envelope: None,
        }
    }

    pub fn space(&self) -> Result<CompositeSpace> {
        CompositeSpace::new(self.transmon_levels, vec![self.mode_cutoff])
    }
}

/// Static operator pieces of the driven model for one truncation.
struct DrivenPieces {
    h_lin: CMat,
    /// M_p with N(s) = Σ_p s^p M_p, s = 2 Re α
    nl: Vec<CMat>,
    c: CMat,
    b: CMat,
}

fn cos_coeff(k: usize) -> f64 {
    match k {
        4 => 1.0 / 24.0,
        6 => -1.0 / 720.0,
        8 => 1.0 / 40320.0,
        _ => 0.0,
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn driven_pieces(bare: &BareParams, phi: f64, nt: usize, nc: usize, extra: usize, order: usize) -> DrivenPieces {
    let big = nt + extra;
    let a = hilbert::local_lowering(big);
    let x = &a + a.adjoint();
    let mut xp = vec![linalg::eye(big)];
    for k in 1..=order {
        let next = &xp[k - 1] * &x;
        xp.push(next);
    }
    let e_j = bare.e_js / phi.powi(4);
    let project = |m: &CMat| m.view((0, 0), (nt, nt)).into_owned();
    let ic = linalg::eye(nc);
    let mut nl = Vec::with_capacity(order + 1);
    for p in 0..=order {
        let mut m = CMat::zeros(big, big);
        for k in (4..=order).step_by(2) {
            if k >= p {
                m += &xp[k - p] * r(-e_j * cos_coeff(k) * phi.powi(k as i32) * binom(k, k - p));
            }
        }
        nl.push(linalg::kron(&project(&m), &ic));
    }
    let c = linalg::kron(&hilbert::local_lowering(nt), &ic);
    let b = linalg::kron(&linalg::eye(nt), &hilbert::local_lowering(nc));
    let cd = c.adjoint();
    let bd = b.adjoint();
    let h_lin = &cd * &c * r(bare.omega_q) + &bd * &b * r(bare.omega_c) + (&c - &cd) * (&b - &bd) * r(bare.g);
    DrivenPieces { h_lin, nl, c, b }
}

/// Labeled undriven eigenbasis of the driven model.
#[derive(Clone, Debug)]
pub struct UndrivenBasis {
    pub energies: Vec<f64>,
    pub vectors: CMat,
    /// (transmon level, photon number) → eigenvector column
    pub labels: HashMap<(usize, usize), usize>,
}

impl UndrivenBasis {
    pub fn energy(&self, level: usize, n: usize) -> f64 {
        self.energies[self.labels[&(level, n)]]
    }

    pub fn vector(&self, level: usize, n: usize) -> crate::CVec {
        self.vectors.column(self.labels[&(level, n)]).into_owned()
    }
}

fn label_eigenbasis(h: &CMat, nt: usize, nc: usize) -> UndrivenBasis {
    let (energies, vectors) = linalg::herm_eig(h);
    let mut labels = HashMap::new();
    for l in 0..nt {
        for n in 0..nc {
            let row = l * nc + n;
            let (k, _) = (0..vectors.ncols())
                .map(|k| (k, vectors[(row, k)].norm_sqr()))
                .fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best });
            labels.insert((l, n), k);
        }
    }
    UndrivenBasis { energies, vectors, labels }
}

/// Dressed observables [ω_ge, ω_ef, ω_c, χ_e] of the undriven model.
fn dressed_observables(bare: &BareParams, phi: f64, nt: usize, nc: usize, extra: usize, order: usize) -> [f64; 4] {
    let p = driven_pieces(bare, phi, nt, nc, extra, order);
    let ub = label_eigenbasis(&(&p.h_lin + &p.nl[0]), nt, nc);
    let e = |l, n| ub.energy(l, n);
    [
        e(1, 0) - e(0, 0),
        e(2, 0) - e(1, 0),
        e(0, 1) - e(0, 0),
        (e(1, 1) - e(1, 0)) - (e(0, 1) - e(0, 0)),
    ]
}

/// Newton solve for bare parameters whose dressed spectrum reproduces the
/// device ω_ge, ω_ef, ω_c and χ_e at the calibration truncation.
pub fn calibrate_bare(params: &SystemParams, setup: &DrivenSetup, cosine_order: usize) -> Result<BareParams> {
    params.check_mode(setup.mode)?;
    let m = setup.mode;
    let (wq, k, wc, chi) = (params.omega_q, params.anharm_k, params.mode_freqs[m], params.chi_e[m]);
    let nt = setup.calibration_levels.max(3);
    let nc = 3;
    let target = [wq, wq + k, wc, chi];
    let scale = [hz(1e6), hz(1e6), hz(1e6), hz(1e3)];
    let g0 = coupling_from_chi(chi, wq - wc, k)?;
    let mut x = [wq - k, wc, -2.0 * k, g0];
    let to_bare = |x: &[f64; 4]| BareParams { omega_q: x[0], omega_c: x[1], e_js: x[2], g: x[3] };
    let obs = |x: &[f64; 4]| {
        let o = dressed_observables(&to_bare(x), params.phi_zpt, nt, nc, setup.extra_levels, cosine_order);
        [o[0] - target[0], o[1] - target[1], o[2] - target[2], o[3] - target[3]]
    };
    for _ in 0..30 {
        let f = obs(&x);
        if f.iter().zip(&scale).all(|(fi, s)| (fi / s).abs() < 1e-7) {
            return Ok(to_bare(&x));
        }
        let mut jac = nalgebra::DMatrix::<f64>::zeros(4, 4);
        for j in 0..4 {
            let mut xp = x;
            let dx = x[j].abs() * 1e-6;
            xp[j] += dx;
            let fp = obs(&xp);
            for i in 0..4 {
                jac[(i, j)] = (fp[i] - f[i]) / dx;
            }
        }
        let rhs = nalgebra::DVector::from_row_slice(&f);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NonConvergence { iterations: 0, residual: f64::NAN })?;
        for j in 0..4 {
            x[j] -= step[j];
        }
    }
    let f = obs(&x);
    Err(Error::NonConvergence {
        iterations: 30,
        residual: f.iter().zip(&scale).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max),
    })
}

/// A driven transmon ⊗ single-mode model with calibrated bare parameters.
#[derive(Clone, Debug)]
pub struct DrivenModel {
    pub setup: DrivenSetup,
    pub bare: BareParams,
    pub phi_zpt: f64,
    pub cosine_order: usize,
    /// Device ω_q used for the classical response α(t).
    pub omega_q_ref: f64,
    pub basis: UndrivenBasis,
    pieces_h0: CMat,
}

impl DrivenModel {
    pub fn new(params: &SystemParams, setup: DrivenSetup, cosine_order: usize) -> Result<Self> {
        check_order(cosine_order)?;
        if setup.transmon_levels < 2 || setup.mode_cutoff < 2 {
            return invalid("driven model needs >= 2 transmon levels and mode cutoff >= 2");
        }
        let bare = calibrate_bare(params, &setup, cosine_order)?;
        Self::with_bare(params, setup, cosine_order, bare)
    }

    pub fn with_bare(params: &SystemParams, setup: DrivenSetup, cosine_order: usize, bare: BareParams) -> Result<Self> {
        check_order(cosine_order)?;
        let p = driven_pieces(&bare, params.phi_zpt, setup.transmon_levels, setup.mode_cutoff, setup.extra_levels, cosine_order);
        let h0 = &p.h_lin + &p.nl[0];
        let basis = label_eigenbasis(&h0, setup.transmon_levels, setup.mode_cutoff);
        Ok(Self {
            setup,
            bare,
            phi_zpt: params.phi_zpt,
            cosine_order,
            omega_q_ref: params.omega_q,
            basis,
            pieces_h0: h0,
        })
    }

    pub fn space(&self) -> Result<CompositeSpace> {
        self.setup.space()
    }

    pub fn undriven_hamiltonian(&self) -> &CMat {
        &self.pieces_h0
    }

    /// Undriven |f,0⟩ − |g,1⟩ splitting: the unshifted sideband resonance.
    pub fn bare_sideband_resonance(&self) -> f64 {
        self.basis.energy(2, 0) - self.basis.energy(0, 1)
    }

    /// H(t) for the given drive. With an envelope, the drive is s(t)·ε.
    pub fn hamiltonian(&self, drive: &DriveParams) -> Result<TimeDependentHamiltonian> {
        let s = &self.setup;
        let p = driven_pieces(&self.bare, self.phi_zpt, s.transmon_levels, s.mode_cutoff, s.extra_levels, self.cosine_order);
        let (eps, wd, ph) = (drive.epsilon, drive.omega_d, drive.phase);
        let wq = self.omega_q_ref;
        if wd == wq || wd == -wq {
            return Err(Error::Resonance("drive resonant with the transmon".into()));
        }
        let env = s.envelope.clone();
        let envelope = move |t: f64| -> (f64, f64) {
            match &env {
                None => (1.0, 0.0),
                Some(e) => (e.shape(t), e.shape_derivative(t)),
            }
        };
        let period = if env_is_none(&s.envelope) { Some(TWO_PI / wd) } else { None };
        let cd = p.c.adjoint();
        let bd = p.b.adjoint();
        let x_c = &p.c + &cd;
        let y_c = (&cd - &p.c) * IM;
        let h0 = &p.h_lin + &p.nl[0];
        match s.frame {
            DriveFrame::Lab => {
                let ops = vec![y_c];
                TimeDependentHamiltonian::new(
                    h0,
                    ops,
                    move |t, out| {
                        let (sv, _) = envelope(t);
                        out[0] = 2.0 * eps * sv * (wd * t + ph).cos();
                    },
                    period,
                )
            }
            DriveFrame::Displaced => {
                let a_amp = IM * eps / (wd - wq);
                let b_amp = -IM * eps / (wd + wq);
                let wqb = self.bare.omega_q;
                let g = self.bare.g;
                let order = self.cosine_order;
                let mut ops = vec![x_c, y_c, (&p.b - &bd) * IM];
                ops.extend(p.nl[1..].iter().cloned());
                TimeDependentHamiltonian::new(
                    h0,
                    ops,
                    move |t, out| {
                        let (sv, dsv) = envelope(t);
                        let phase = wd * t + ph;
                        let em = cis(-phase);
                        let ep = cis(phase);
                        let carrier = a_amp * em + b_amp * ep;
                        let alpha = carrier * sv;
                        let alpha_dot = carrier * dsv + (a_amp * em * (-IM * wd) + b_amp * ep * (IM * wd)) * sv;
                        let resid = alpha * wqb - IM * alpha_dot + IM * (2.0 * sv * eps * phase.cos());
                        // r c† + r* c = Re r (c + c†) + Im r · i(c† − c)
                        out[0] = resid.re;
                        out[1] = resid.im;
                        // g(α − α*)(b − b†) = 2g Im α · i(b − b†)
                        out[2] = 2.0 * g * alpha.im;
                        let xs = 2.0 * alpha.re;
                        let mut pw = 1.0;
                        for k in 0..order {
                            pw *= xs;
                            out[3 + k] = pw;
                        }
                    },
                    period,
                )
            }
        }
    }
}

fn env_is_none(e: &Option<Envelope>) -> bool {
    e.is_none()
}

fn check_order(order: usize) -> Result<()> {
    if ![4, 6, 8].contains(&order) {
        return invalid(format!("unsupported cosine order {order}; expected 4, 6 or 8"));
    }
    Ok(())
}

/// Driven transmon ⊗ mode Hamiltonian for `params` with the given truncation.
pub fn driven_transmon_hamiltonian(
    params: &SystemParams,
    drive: &DriveParams,
    cosine_order: usize,
    setup: &DrivenSetup,
) -> Result<TimeDependentHamiltonian> {
    DrivenModel::new(params, setup.clone(), cosine_order)?.hamiltonian(drive)
}

/// Circularly driven two-level system, H = (ω_q/2)σ_z + Ω(σ_x cos ω_d t + σ_y sin ω_d t),
/// basis (g, e). Its quasienergies are ½(ω_d ± √(4Ω² + (ω_q−ω_d)²)) exactly.
pub fn driven_two_level(omega_q: f64, omega_d: f64, omega_rabi: f64) -> Result<TimeDependentHamiltonian> {
    let h0 = linalg::diag_real(&[-omega_q / 2.0, omega_q / 2.0]);
    let sx = CMat::from_row_slice(2, 2, &[linalg::ZERO, linalg::ONE, linalg::ONE, linalg::ZERO]);
    // Pauli matrices written in the (e, g) convention, so σ_+ = |e⟩⟨g| co-rotates
    let sy = CMat::from_row_slice(2, 2, &[linalg::ZERO, IM, -IM, linalg::ZERO]);
    TimeDependentHamiltonian::new(
        h0,
        vec![sx, sy],
        move |t, out| {
            out[0] = omega_rabi * (omega_d * t).cos();
            out[1] = omega_rabi * (omega_d * t).sin();
        },
        Some(TWO_PI / omega_d),
    )
}

/// Closed-form quasienergies (ε_−, ε_+) of [`driven_two_level`].
pub fn two_level_quasienergies(omega_q: f64, omega_d: f64, omega_rabi: f64) -> (f64, f64) {
    let root = (4.0 * omega_rabi * omega_rabi + (omega_q - omega_d).powi(2)).sqrt();
    (0.5 * (omega_d - root), 0.5 * (omega_d + root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> SystemParams {
        SystemParams::reference_device()
    }

    #[test]
    fn reference_device_validates() {
        let w = p().validate().unwrap();
        assert!(w.is_empty(), "{w:?}");
    }

    #[test]
    fn dispersive_shift_definition() {
        let params = p();
        let s = CompositeSpace::new(4, vec![4]).unwrap();
        let h = dispersive_hamiltonian(&params, &s).unwrap().matrix;
        let e = |l, n| h[(s.index(l, &[n]).unwrap(), s.index(l, &[n]).unwrap())].re;
        let chi = e(1, 1) - e(1, 0) - e(0, 1) + e(0, 0);
        assert!((chi - hz(-197e3)).abs() < 1e-3);
        let two = e(2, 2) - e(2, 0) - (e(0, 2) - e(0, 0));
        assert!((two - 2.0 * params.chi_f[0]).abs() < 1e-3);
        assert!(linalg::hermiticity_defect(&h) == 0.0);
    }

    #[test]
    fn chi_inversion_mode1() {
        let g = coupling_from_chi(hz(-197e3), hz(-1.144e9), hz(-114e6)).unwrap();
        assert!((g / hz(1e6) - 35.3).abs() < 0.05, "g/2π = {} MHz", g / hz(1e6));
        let chi = chi_from_coupling(g, hz(-1.144e9), hz(-114e6)).unwrap();
        assert!(((chi - hz(-197e3)) / hz(-197e3)).abs() < 1e-12);
        assert_eq!(chi_from_coupling(0.0, 1.0, -0.1).unwrap(), 0.0);
        assert!(matches!(chi_from_coupling(1.0, 0.0, -0.1), Err(Error::Resonance(_))));
        assert!(matches!(chi_from_coupling(1.0, 0.1, -0.1), Err(Error::Resonance(_))));
    }

    #[test]
    fn xi_limits_and_two_term_amplitude() {
        let d = DriveParams::new(0.0, 3.0, 0.0).unwrap();
        assert_eq!(xi_displacement(&d, 1.0).unwrap(), 0.0);
        let big = DriveParams::new(1.0, 1e9, 0.0).unwrap();
        assert!((xi_displacement(&big, 1.0).unwrap() - 2e-9).abs() < 1e-20);
        // α(t) = A e^{−iω t} + B e^{iω t}, so 2 Re α = 2ξ sin ω t
        let (eps, wd, wq) = (0.3, 2.2, 1.7);
        let a = IM * eps / (wd - wq);
        let b = -IM * eps / (wd + wq);
        let t = 0.37;
        let x = (a * cis(-wd * t) + b * cis(wd * t)).re * 2.0;
        let xi = xi_displacement(&DriveParams::new(eps, wd, 0.0).unwrap(), wq).unwrap();
        assert!((x - 2.0 * xi * (wd * t).sin()).abs() < 1e-14);
        assert!(xi_displacement(&DriveParams::new(1.0, 1.0, 0.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn sideband_rate_forms() {
        let params = p();
        assert_eq!(sideband_rate_lowest_order(&params, 0, 0.0).unwrap().exact, 0.0);
        let eps = hz(500e6);
        let sr = sideband_rate_lowest_order(&params, 0, eps).unwrap();
        let (k, d, wq) = (params.anharm_k, params.delta(0), params.omega_q);
        let rel = ((sr.exact - sr.approx) / sr.exact).abs();
        // ratio of the two forms is 2(ω_q+K+Δ)/(2ω_q+K+Δ) = 1 + (K+Δ)/(2ω_q+K+Δ)
        let expected = ((k + d) / (2.0 * wq + k + d)).abs();
        assert!((rel - expected / (1.0 + (k + d) / (2.0 * wq + k + d))).abs() < 1e-12);
    }

    #[test]
    fn thirty_times_chi() {
        let params = p();
        let target = 30.0 * params.chi_e[0].abs();
        let eps = epsilon_for_rate(&params, 0, target).unwrap();
        let sr = sideband_rate_lowest_order(&params, 0, eps).unwrap();
        assert!((sr.exact.abs() / params.chi_e[0].abs() - 30.0).abs() < 1e-9);
        assert!(eps > 0.0 && eps.is_finite());
    }

    #[test]
    fn series_head_and_sqrt2_factor() {
        let params = p();
        let eps = hz(300e6);
        let s1 = sideband_rate_series(&params, 0, eps, 1).unwrap();
        let lo = sideband_rate_lowest_order(&params, 0, eps).unwrap().exact;
        assert!(((s1 - lo) / lo).abs() < 1e-12, "{s1} vs {lo}");
        assert!((series_factor(0.0, 5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn series_matches_bruteforce_sum() {
        let x: f64 = 0.5;
        let brute: f64 = (1..=50)
            .map(|n| {
                let fact: f64 = (1..n).map(|k| k as f64).product();
                (-1f64).powi(n as i32 + 1) * x.powi(2 * n as i32 - 2) / (fact * fact)
            })
            .sum();
        assert!((series_factor(x, 50) - brute).abs() < 1e-15);
    }

    #[test]
    fn series_rate_turns_down() {
        let params = p();
        let rate = |e: f64| sideband_rate_series(&params, 0, hz(e * 1e9), 40).unwrap().abs();
        let mut prev = 0.0;
        let mut turned = false;
        for k in 1..200 {
            let v = rate(k as f64 * 0.05);
            if v < prev {
                turned = true;
                break;
            }
            prev = v;
        }
        assert!(turned);
    }

    #[test]
    fn stark_scaling() {
        let params = p();
        let wd = sideband_drive_frequency(&params, 0);
        assert_eq!(stark_shift_estimate(&params, 0.0, wd).unwrap(), 0.0);
        let a = stark_shift_estimate(&params, hz(1e8), wd).unwrap();
        let b = stark_shift_estimate(&params, hz(2e8), wd).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn jc_matrix_elements() {
        let params = p();
        let s = CompositeSpace::new(4, vec![14]).unwrap();
        let gsb = hz(1e6);
        let phi = 0.7;
        let h = effective_jc_hamiltonian(&params, &s, &[gsb], &[phi]).unwrap().matrix;
        for n in 0..13 {
            let el = h[(s.index(0, &[n + 1]).unwrap(), s.index(2, &[n]).unwrap())];
            let want = cis(-phi) * gsb * ((n + 1) as f64).sqrt();
            assert!((el - want).norm() < 1e-6);
            assert!((el.norm() / gsb - ((n + 1) as f64).sqrt()).abs() < 1e-12);
        }
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let (li, _) = s.label(i);
                let (lj, _) = s.label(j);
                if li == 1 && lj != 1 {
                    assert_eq!(h[(i, j)], linalg::ZERO);
                }
            }
        }
        assert!(effective_jc_hamiltonian(&params, &CompositeSpace::new(2, vec![3]).unwrap(), &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn chi_signs_consistent() {
        let params = p();
        for i in 0..params.n_modes() {
            assert_eq!(params.chi_e[i].signum(), params.chi_f[i].signum());
            assert!(params.chi_f[i].abs() > params.chi_e[i].abs());
        }
    }

    #[test]
    fn undriven_spectrum_reproduces_anharmonicity() {
        let params = p();
        // at the calibration truncation the dressed spectrum is reproduced exactly
        let model = DrivenModel::new(&params, DrivenSetup::new(0, 8, 3), 4).unwrap();
        let e = |l, n| model.basis.energy(l, n);
        let k = e(2, 0) - 2.0 * e(1, 0) + e(0, 0);
        assert!(((k - params.anharm_k) / params.anharm_k).abs() < 1e-6, "K = {} MHz", k / hz(1e6));
        let chi = e(1, 1) - e(1, 0) - e(0, 1) + e(0, 0);
        assert!(((chi - params.chi_e[0]) / params.chi_e[0]).abs() < 1e-4);
        let h = model.hamiltonian(&DriveParams::new(0.0, hz(3e9), 0.0).unwrap()).unwrap();
        for t in [0.0, 1e-10, 3.3e-10] {
            assert!(linalg::max_abs(&(h.at(t) - model.undriven_hamiltonian())) < 1e-3);
        }
    }

    #[test]
    fn cosine_order_six_shift_is_perturbative() {
        let params = p();
        let setup = DrivenSetup::new(0, 6, 2);
        let bare = calibrate_bare(&params, &setup, 4).unwrap();
        let m4 = DrivenModel::with_bare(&params, setup.clone(), 4, bare).unwrap();
        let m6 = DrivenModel::with_bare(&params, setup, 6, bare).unwrap();
        let df = (m6.basis.energy(2, 0) - m6.basis.energy(0, 0)) - (m4.basis.energy(2, 0) - m4.basis.energy(0, 0));
        // first-order estimate: −E_J φ⁶ (−1/720)⟨X⁶⟩ differences, O(E_J φ⁶)
        let e_j = bare.e_js / params.phi_zpt.powi(4);
        let scale = e_j * params.phi_zpt.powi(6);
        assert!(df.abs() < scale && df.abs() > 1e-3 * scale, "Δf = {df:e}, E_Jφ⁶ = {scale:e}");
    }

    #[test]
    fn driven_hamiltonian_is_hermitian() {
        let params = p();
        let model = DrivenModel::new(&params, DrivenSetup::new(0, 4, 3), 4).unwrap();
        let wd = sideband_drive_frequency(&params, 0);
        let h = model.hamiltonian(&DriveParams::new(hz(4e8), wd, 0.3).unwrap()).unwrap();
        let mut t = 0.0;
        for _ in 0..100 {
            t += 1.234e-11;
            assert!(linalg::hermiticity_defect(&h.at(t)) < 1e-10);
        }
        assert!(DrivenModel::new(&params, DrivenSetup::new(0, 4, 3), 5).is_err());
    }

    #[test]
    fn two_level_closed_form() {
        let (lo, hi) = two_level_quasienergies(1.0, 1.0, 0.1);
        assert!((hi - lo - 0.2).abs() < 1e-15);
    }
}
