//! Floquet analysis of the periodically driven transmon: one-period
//! propagators, quasienergies, labeled scans, avoided-crossing extraction,
//! ramp bounds and stroboscopic projections.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::fit;
use crate::integrate::{self, MagnusOptions};
use crate::linalg::{self, CMat, CVec};
use crate::model::{self, DriveParams, DrivenModel, DrivenSetup, SystemParams, TimeDependentHamiltonian, UndrivenBasis};
use crate::pulse::{bump_envelope, Envelope};
use crate::TWO_PI;

/// Quasienergies and Floquet modes at stroboscopic time `t0`.
#[derive(Clone, Debug)]
pub struct FloquetSolution {
    /// ε_m in the first zone [−ω_d/2, ω_d/2).
    pub quasienergies: Vec<f64>,
    /// Φ_m[t0] as columns.
    pub modes: CMat,
    pub period: f64,
    pub t0: f64,
    /// Floquet mode → (transmon level, photon number) of the adiabatically
    /// connected undriven eigenstate, when tracked.
    pub labels: Option<Vec<Option<(usize, usize)>>>,
}

impl FloquetSolution {
    pub fn omega_d(&self) -> f64 {
        TWO_PI / self.period
    }

    pub fn len(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quasienergies.is_empty()
    }

    pub fn mode(&self, m: usize) -> CVec {
        self.modes.column(m).into_owned()
    }

    /// Index of the mode carrying `label`.
    pub fn find_label(&self, label: (usize, usize)) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|l| *l == Some(label))
    }

    /// |⟨Φ_m|ψ⟩|² for every mode.
    pub fn populations(&self, psi: &CVec) -> Vec<f64> {
        (0..self.len()).map(|m| self.modes.column(m).dotc(psi).norm_sqr()).collect()
    }
}

/// Map a quasienergy into [reference − ω_d/2, reference + ω_d/2).
pub fn fold(e: f64, omega_d: f64, reference: f64) -> f64 {
    let x = (e - reference + omega_d / 2.0).rem_euclid(omega_d);
    x - omega_d / 2.0 + reference
}

/// Distance between two quasienergies on the circle of circumference ω_d.
pub fn quasienergy_gap(a: f64, b: f64, omega_d: f64) -> f64 {
    let d = (a - b).rem_euclid(omega_d);
    d.min(omega_d - d)
}

/// U(t0 + T, t0) for a periodic Hamiltonian.
pub fn one_period_propagator(h: &TimeDependentHamiltonian, t0: f64, opts: &MagnusOptions) -> Result<CMat> {
    let period = h.period.ok_or_else(|| Error::InvalidArgument("Hamiltonian has no period".into()))?;
    integrate::propagator(h, t0, t0 + period, opts)
}

/// Default options for one-period propagators.
pub fn period_options() -> MagnusOptions {
    MagnusOptions { tol: 1e-10, initial_step: None, max_steps: 2_000_000 }
}

/// Diagonalize a one-period propagator.
pub fn decompose(u: &CMat, period: f64, t0: f64) -> FloquetSolution {
    let (lam, vecs) = linalg::unitary_eig(u);
    let omega_d = TWO_PI / period;
    let quasienergies = lam.iter().map(|l| fold(-l.arg() / period, omega_d, 0.0)).collect();
    FloquetSolution { quasienergies, modes: vecs, period, t0, labels: None }
}

/// Floquet modes and quasienergies of a periodic Hamiltonian at `t0`.
pub fn solve(h: &TimeDependentHamiltonian, t0: f64, opts: &MagnusOptions) -> Result<FloquetSolution> {
    let u = one_period_propagator(h, t0, opts)?;
    Ok(decompose(&u, h.period.unwrap(), t0))
}

/// Label each Floquet mode by its largest undriven overlap. Returns the labels
/// and the winning overlaps.
pub fn label_by_undriven(sol: &FloquetSolution, basis: &UndrivenBasis) -> (Vec<Option<(usize, usize)>>, Vec<f64>) {
    let mut inv: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); basis.energies.len()];
    for (&lab, &col) in &basis.labels {
        inv[col] = lab;
    }
    let ov = basis.vectors.adjoint() * &sol.modes;
    let mut labels = Vec::with_capacity(sol.len());
    let mut best = Vec::with_capacity(sol.len());
    for m in 0..sol.len() {
        let (k, p) = (0..ov.nrows()).map(|k| (k, ov[(k, m)].norm_sqr())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        labels.push(if inv[k].0 == usize::MAX { None } else { Some(inv[k]) });
        best.push(p);
    }
    (labels, best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingFailure {
    pub grid_index: usize,
    pub mode: usize,
    pub overlap: f64,
}

#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub omega_d: f64,
    pub solution: FloquetSolution,
}

#[derive(Clone, Debug)]
pub struct QuasienergyScan {
    pub epsilon: f64,
    pub points: Vec<ScanPoint>,
    pub failures: Vec<TrackingFailure>,
}

impl QuasienergyScan {
    pub fn omega_d(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.omega_d).collect()
    }

    /// Quasienergy of the mode labeled `label` at every grid point, folded
    /// around the previous point so the series is continuous.
    pub fn series(&self, label: (usize, usize)) -> Vec<Option<f64>> {
        let mut prev: Option<f64> = None;
        self.points
            .iter()
            .map(|p| {
                let e = p.solution.find_label(label).map(|m| p.solution.quasienergies[m])?;
                let v = match prev {
                    Some(r) => fold(e, p.omega_d, r),
                    None => e,
                };
                prev = Some(v);
                Some(v)
            })
            .collect()
    }

    /// Gap between two labeled modes along the scan.
    pub fn gap(&self, a: (usize, usize), b: (usize, usize)) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| {
                let s = &p.solution;
                let (ia, ib) = (s.find_label(a)?, s.find_label(b)?);
                Some(quasienergy_gap(s.quasienergies[ia], s.quasienergies[ib], p.omega_d))
            })
            .collect()
    }

    /// CSV rows: omega_d, one column per labeled mode, and the pair gap (Hz).
    pub fn write_csv<W: Write>(&self, out: W, labels: &[(usize, usize)], pair: ((usize, usize), (usize, usize))) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["omega_d_hz".to_string()];
        header.extend(labels.iter().map(|(l, n)| format!("eps_{}{}_hz", crate::hilbert::level_name(*l), n)));
        header.push("gap_hz".into());
        w.write_record(&header)?;
        let cols: Vec<Vec<Option<f64>>> = labels.iter().map(|&l| self.series(l)).collect();
        let gap = self.gap(pair.0, pair.1);
        let fmt = |v: Option<f64>| v.map(|x| format!("{:.9e}", x / TWO_PI)).unwrap_or_default();
        for (i, p) in self.points.iter().enumerate() {
            let mut row = vec![format!("{:.12e}", p.omega_d / TWO_PI)];
            row.extend(cols.iter().map(|c| fmt(c[i])));
            row.push(fmt(gap[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Floquet spectra of the driven model across a sorted drive-frequency grid,
/// with modes tracked continuously from point to point.
pub fn scan_model(model: &DrivenModel, epsilon: f64, grid: &[f64], exec: Executor, opts: &MagnusOptions) -> Result<QuasienergyScan> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("drive-frequency grid must be strictly increasing");
    }
    let solutions = exec.try_map(grid, |&wd| {
        let h = model.hamiltonian(&DriveParams::new(epsilon, wd, 0.0)?)?;
        solve(&h, 0.0, opts)
    })?;
    let mut points: Vec<ScanPoint> = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (i, (mut sol, &wd)) in solutions.into_iter().zip(grid).enumerate() {
        let (undriven, undriven_ov) = label_by_undriven(&sol, &model.basis);
        let mut labels = vec![None; sol.len()];
        if let Some(prev) = points.last() {
            let ov = prev.solution.modes.adjoint() * &sol.modes;
            let prev_labels = prev.solution.labels.as_ref().unwrap();
            for m in 0..sol.len() {
                let (k, p) = (0..ov.nrows()).map(|k| (k, ov[(k, m)].norm_sqr())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
                if p >= 0.5 {
                    labels[m] = prev_labels[k];
                } else if undriven_ov[m] >= 0.5 {
                    labels[m] = undriven[m];
                } else {
                    failures.push(TrackingFailure { grid_index: i, mode: m, overlap: p.max(undriven_ov[m]) });
                }
            }
        } else {
            for m in 0..sol.len() {
                if undriven_ov[m] >= 0.5 {
                    labels[m] = undriven[m];
                } else {
                    failures.push(TrackingFailure { grid_index: i, mode: m, overlap: undriven_ov[m] });
                }
            }
        }
        sol.labels = Some(labels);
        points.push(ScanPoint { omega_d: wd, solution: sol });
    }
    for f in &failures {
        log::warn!("label tracking failed at grid point {} (mode {}, overlap {:.3})", f.grid_index, f.mode, f.overlap);
    }
    Ok(QuasienergyScan { epsilon, points, failures })
}

/// Quasienergy scan for one mode of `params`.
pub fn quasienergy_scan(
    params: &SystemParams,
    setup: DrivenSetup,
    cosine_order: usize,
    epsilon: f64,
    grid: &[f64],
    exec: Executor,
) -> Result<QuasienergyScan> {
    let model = DrivenModel::new(params, setup, cosine_order)?;
    scan_model(&model, epsilon, grid, exec, &period_options())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvoidedCrossingFit {
    pub resonance: f64,
    /// Half the minimum gap.
    pub rate: f64,
    pub fit_window: (f64, f64),
    /// RMS residual of the hyperbola fit (rad/s).
    pub residual: f64,
}

/// Fit gap(ω) = √(4g² + (ω − ω_res)²) to bracketed gap data.
pub fn avoided_crossing_fit(omega: &[f64], gap: &[f64]) -> Result<AvoidedCrossingFit> {
    if omega.len() != gap.len() || omega.len() < 3 {
        return invalid("need at least three (ω, gap) points");
    }
    let i = (0..gap.len()).min_by(|&a, &b| gap[a].total_cmp(&gap[b])).unwrap();
    if i == 0 || i == gap.len() - 1 {
        return Err(Error::Fit("minimum gap not bracketed by the scan".into()));
    }
    let (lo, hi) = (omega[0], omega[omega.len() - 1]);
    let center = omega[i];
    let scale = (hi - lo).abs().max(f64::MIN_POSITIVE);
    let x: Vec<f64> = omega.iter().map(|w| (w - center) / scale).collect();
    let y: Vec<f64> = gap.iter().map(|g| g / scale).collect();
    let model = |p: &[f64], x: f64| (4.0 * p[0] * p[0] + (x - p[1]).powi(2)).sqrt();
    let res = fit::least_squares(|p| x.iter().zip(&y).map(|(&x, &y)| model(p, x) - y).collect(), &[(y[i] / 2.0).max(1e-12), 0.0])?;
    let resonance = center + res.params[1] * scale;
    let rate = res.params[0].abs() * scale;
    if !(resonance >= lo && resonance <= hi) {
        return Err(Error::Fit("fitted resonance outside the scan window".into()));
    }
    Ok(AvoidedCrossingFit { resonance, rate, fit_window: (lo, hi), residual: res.rms * scale })
}

/// Fit the avoided crossing between two labeled modes of a scan.
pub fn fit_scan(scan: &QuasienergyScan, a: (usize, usize), b: (usize, usize)) -> Result<AvoidedCrossingFit> {
    let (mut w, mut g) = (Vec::new(), Vec::new());
    for (p, gap) in scan.points.iter().zip(scan.gap(a, b)) {
        if let Some(gap) = gap {
            w.push(p.omega_d);
            g.push(gap);
        }
    }
    avoided_crossing_fit(&w, &g)
}

/// Gap between the two Floquet modes that best cover span{|f,0⟩, |g,1⟩}.
pub fn sideband_pair_gap(model: &DrivenModel, epsilon: f64, omega_d: f64, opts: &MagnusOptions) -> Result<f64> {
    let h = model.hamiltonian(&DriveParams::new(epsilon, omega_d, 0.0)?)?;
    let sol = solve(&h, 0.0, opts)?;
    let (a, b) = sideband_pair(&sol, &model.basis);
    Ok(quasienergy_gap(sol.quasienergies[a], sol.quasienergies[b], omega_d))
}

/// Indices of the two modes with the largest weight in span{|f,0⟩, |g,1⟩}.
pub fn sideband_pair(sol: &FloquetSolution, basis: &UndrivenBasis) -> (usize, usize) {
    let (f0, g1) = (basis.vector(2, 0), basis.vector(0, 1));
    let mut w: Vec<(usize, f64)> = (0..sol.len())
        .map(|m| {
            let c = sol.modes.column(m);
            (m, c.dotc(&f0).norm_sqr() + c.dotc(&g1).norm_sqr())
        })
        .collect();
    w.sort_by(|a, b| b.1.total_cmp(&a.1));
    (w[0].0, w[1].0)
}

/// Locate the f0–g1 avoided crossing inside `window`: a coarse grid scan
/// followed by golden-section refinement of the minimum gap.
pub fn find_sideband_resonance(
    model: &DrivenModel,
    epsilon: f64,
    window: (f64, f64),
    grid_points: usize,
    exec: Executor,
    opts: &MagnusOptions,
) -> Result<AvoidedCrossingFit> {
    if grid_points < 3 || !(window.1 > window.0) {
        return invalid("need a non-empty window and >= 3 grid points");
    }
    let grid: Vec<f64> = (0..grid_points).map(|k| window.0 + (window.1 - window.0) * k as f64 / (grid_points - 1) as f64).collect();
    let gaps = exec.try_map(&grid, |&w| sideband_pair_gap(model, epsilon, w, opts))?;
    let i = (0..gaps.len()).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).unwrap();
    if i == 0 || i == gaps.len() - 1 {
        return Err(Error::Fit("sideband resonance not bracketed by the window".into()));
    }
    let (w, gmin) = golden_min(|w| sideband_pair_gap(model, epsilon, w, opts), grid[i - 1], grid[i + 1], 1e-10)?;
    Ok(AvoidedCrossingFit { resonance: w, rate: gmin / 2.0, fit_window: window, residual: 0.0 })
}

/// Golden-section minimization of a unimodal function on [a, b].
pub fn golden_min(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * scale {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampBounds {
    /// 2π/ω_sb
    pub lower: f64,
    /// 4πΔ²/(|K|g²)
    pub upper: f64,
}

impl RampBounds {
    /// Γ_LZ = 4πΔ²/(τ|K|g²) = upper/τ.
    pub fn lz_diabaticity(&self, tau: f64) -> f64 {
        self.upper / tau
    }

    pub fn feasible(&self) -> bool {
        self.lower < self.upper
    }

    pub fn contains(&self, tau: f64) -> bool {
        tau > self.lower && tau < self.upper
    }
}

pub fn ramp_bounds(params: &SystemParams, mode: usize) -> Result<RampBounds> {
    if mode >= params.n_modes() {
        return Err(Error::SubsystemOutOfRange { index: mode, count: params.n_modes() });
    }
    let w_sb = model::sideband_drive_frequency(params, mode);
    let (d, k, g) = (params.delta(mode), params.anharm_k, params.couplings_g[mode]);
    Ok(RampBounds { lower: TWO_PI / w_sb, upper: 4.0 * std::f64::consts::PI * d * d / (k.abs() * g * g) })
}

/// Γ_LZ = 2π|ω_SS|/(τ g̃²), with g̃ the two-photon operator rate.
pub fn lz_from_stark(omega_ss: f64, tau: f64, rate: f64) -> f64 {
    TWO_PI * omega_ss.abs() / (tau * rate * rate)
}

/// Populations over Floquet modes for states sampled at t0 + nT.
pub fn stroboscopic_decomposition(states: &[CVec], times: &[f64], basis: &FloquetSolution) -> Result<Vec<Vec<f64>>> {
    if states.len() != times.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: states.len() });
    }
    let mut out = Vec::with_capacity(states.len());
    for (psi, &t) in states.iter().zip(times) {
        let n = (t - basis.t0) / basis.period;
        if (n - n.round()).abs() > 1e-6 {
            return invalid(format!("sample time {t:e} is not stroboscopic"));
        }
        if psi.len() != basis.modes.nrows() {
            return Err(Error::DimensionMismatch { expected: basis.modes.nrows(), got: psi.len() });
        }
        out.push(basis.populations(psi));
    }
    Ok(out)
}

/// A sideband pulse with smooth ramps on the driven model. The flat part is
/// periodic, so a pulse of flat length (N + frac)·T is assembled from a
/// ramp-up, the N-th power of the period propagator, a fractional period and
/// a ramp-down that depends only on `frac`.
pub struct RampedSideband<'a> {
    pub model: &'a DrivenModel,
    pub drive: DriveParams,
    pub ramp: f64,
    pub opts: MagnusOptions,
    ramp_up: CMat,
    period_u: CMat,
    period_eig: (Vec<crate::C64>, CMat),
}

impl<'a> RampedSideband<'a> {
    pub fn new(model: &'a DrivenModel, drive: DriveParams, ramp: f64, opts: MagnusOptions) -> Result<Self> {
        let period = drive.period();
        let up = Self::ramped_h(model, &drive, ramp, 0.0)?;
        let ramp_up = integrate::propagator(&up, 0.0, ramp, &opts)?;
        let flat = model.hamiltonian(&drive)?;
        let period_u = integrate::propagator(&flat, ramp, ramp + period, &opts)?;
        let period_eig = linalg::unitary_eig(&period_u);
        Ok(Self { model, drive, ramp, opts, ramp_up, period_u, period_eig })
    }

    fn ramped_h(model: &DrivenModel, drive: &DriveParams, ramp: f64, flat: f64) -> Result<TimeDependentHamiltonian> {
        let env: Envelope = bump_envelope(1.0, ramp, 2.0 * ramp + flat)?;
        let mut m = model.clone();
        m.setup.envelope = Some(env);
        m.hamiltonian(drive)
    }

    pub fn period(&self) -> f64 {
        self.drive.period()
    }

    pub fn ramp_up(&self) -> &CMat {
        &self.ramp_up
    }

    pub fn period_propagator(&self) -> &CMat {
        &self.period_u
    }

    /// Floquet modes of the flat part at the end of the ramp-up.
    pub fn floquet(&self) -> FloquetSolution {
        let mut sol = decompose(&self.period_u, self.period(), self.ramp);
        sol.labels = Some(label_by_undriven(&sol, &self.model.basis).0);
        sol
    }

    pub fn period_power(&self, n: usize) -> CMat {
        let (lam, v) = &self.period_eig;
        let d = CVec::from_iterator(lam.len(), lam.iter().map(|l| l.powu(n as u32)));
        v * CMat::from_diagonal(&d) * v.adjoint()
    }

    /// Fractional-period and ramp-down propagators for flat length (N + frac)T,
    /// with times shifted back by N periods.
    pub fn tail(&self, frac: f64) -> Result<CMat> {
        let t_flat = frac * self.period();
        let h = Self::ramped_h(self.model, &self.drive, self.ramp, t_flat)?;
        let start = self.ramp;
        let end = 2.0 * self.ramp + t_flat;
        integrate::propagator(&h, start, end, &self.opts)
    }

    /// Full pulse propagator for flat length (n + frac)T.
    pub fn total(&self, n: usize, tail: &CMat) -> CMat {
        tail * self.period_power(n) * &self.ramp_up
    }
}

/// Best |f,0⟩ → |g,1⟩ transfer found by scanning the flat length.
#[derive(Clone, Copy, Debug)]
pub struct PiTransfer {
    pub periods: usize,
    pub frac: f64,
    pub duration: f64,
    pub probability: f64,
}

/// Scan n ∈ [n_lo, n_hi] and `fracs` for the largest |f,0⟩ → |g,1⟩ probability.
pub fn optimize_pi_transfer(sb: &RampedSideband, n_lo: usize, n_hi: usize, fracs: &[f64], exec: Executor) -> Result<PiTransfer> {
    let f0 = sb.model.basis.vector(2, 0);
    let g1 = sb.model.basis.vector(0, 1);
    let tails = exec.try_map(fracs, |&f| sb.tail(f))?;
    let start = &sb.ramp_up * &f0;
    let (lam, v) = &sb.period_eig;
    let coeff = v.adjoint() * &start;
    let mut best = PiTransfer { periods: 0, frac: 0.0, duration: 0.0, probability: -1.0 };
    for n in n_lo..=n_hi {
        let d = CVec::from_iterator(lam.len(), lam.iter().zip(coeff.iter()).map(|(l, c)| l.powu(n as u32) * c));
        let psi = v * d;
        for (tail, &f) in tails.iter().zip(fracs) {
            let p = g1.dotc(&(tail * &psi)).norm_sqr();
            if p > best.probability {
                let duration = 2.0 * sb.ramp + (n as f64 + f) * sb.period();
                best = PiTransfer { periods: n, frac: f, duration, probability: p };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz;
    use crate::model::driven_two_level;

    #[test]
    fn fold_and_gap() {
        assert!((fold(7.5, 10.0, 0.0) - (-2.5)).abs() < 1e-12);
        assert!((fold(-5.0, 10.0, 0.0) - (-5.0)).abs() < 1e-12);
        assert!((quasienergy_gap(4.9, -4.9, 10.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn static_limit_is_diagonal_in_eigenbasis() {
        let params = SystemParams::reference_device();
        let model = DrivenModel::new(&params, DrivenSetup::new(0, 3, 3), 4).unwrap();
        let wd = model.bare_sideband_resonance();
        let h = model.hamiltonian(&DriveParams::new(0.0, wd, 0.0).unwrap()).unwrap();
        let u = one_period_propagator(&h, 0.0, &period_options()).unwrap();
        let v = &model.basis.vectors;
        let ud = v.adjoint() * &u * v;
        let mut off = 0.0f64;
        for i in 0..ud.nrows() {
            for j in 0..ud.ncols() {
                if i != j {
                    off = off.max(ud[(i, j)].norm());
                }
            }
        }
        assert!(off < 1e-8, "off-diagonal {off}");
        assert!(linalg::unitarity_defect(&u) < 1e-8);
    }

    #[test]
    fn two_level_quasienergies_closed_form() {
        let (wq, om) = (1.0, 0.05);
        for wd in [0.9, 0.97, 1.0, 1.04] {
            let h = driven_two_level(wq, wd, om).unwrap();
            let sol = solve(&h, 0.0, &period_options()).unwrap();
            let (em, ep) = model::two_level_quasienergies(wq, wd, om);
            for e in [em, ep] {
                let d = sol.quasienergies.iter().map(|&q| quasienergy_gap(q, e, wd)).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-9 * e.abs(), "wd={wd}: {d}");
            }
            for i in 0..2 {
                for j in 0..2 {
                    let ip = sol.modes.column(i).dotc(&sol.modes.column(j)).norm();
                    assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn synthetic_hyperbola_recovered() {
        let (g, w0) = (hz(1.2e6), hz(2.87e9));
        let w: Vec<f64> = (0..41).map(|k| w0 + hz(0.25e6) * (k as f64 - 17.3)).collect();
        let gap: Vec<f64> = w.iter().map(|x| (4.0 * g * g + (x - w0).powi(2)).sqrt()).collect();
        let f = avoided_crossing_fit(&w, &gap).unwrap();
        assert!(((f.rate - g) / g).abs() < 1e-10);
        assert!(((f.resonance - w0) / w0).abs() < 1e-10);
        let unbracketed: Vec<f64> = gap.iter().take(10).copied().collect();
        assert!(avoided_crossing_fit(&w[..10], &unbracketed).is_err());
    }

    #[test]
    fn two_level_crossing_gives_rabi_rate() {
        let (wq, om) = (1.0, 0.01);
        let grid: Vec<f64> = (0..21).map(|k| 0.95 + 0.005 * k as f64).collect();
        let gap: Vec<f64> = grid
            .iter()
            .map(|&wd| {
                let sol = solve(&driven_two_level(wq, wd, om).unwrap(), 0.0, &period_options()).unwrap();
                quasienergy_gap(sol.quasienergies[0], sol.quasienergies[1], wd)
            })
            .collect();
        // the circular drive makes the gap exactly hyperbolic
        let f = avoided_crossing_fit(&grid, &gap).unwrap();
        assert!((f.rate - om).abs() < 1e-8);
        assert!((f.resonance - wq).abs() < 1e-8);
    }

    #[test]
    fn ramp_bounds_identities() {
        let params = SystemParams::reference_device();
        let b = ramp_bounds(&params, 0).unwrap();
        assert!(b.feasible() && b.upper / b.lower > 1e3);
        assert!((b.lz_diabaticity(2e-9) / b.lz_diabaticity(4e-9) - 2.0).abs() < 1e-12);
        let eps = hz(300e6);
        let wd = model::sideband_drive_frequency(&params, 0);
        let xi = model::xi_displacement(&DriveParams::new(eps, wd, 0.0).unwrap(), params.omega_q).unwrap();
        let wss = model::stark_shift_estimate(&params, eps, wd).unwrap();
        let gt = params.couplings_g[0] * params.anharm_k * xi / params.delta(0);
        let tau = 7e-9;
        let a = lz_from_stark(wss, tau, gt);
        assert!(((a - b.lz_diabaticity(tau)) / a).abs() < 1e-9);
    }

    #[test]
    fn stroboscopic_rejects_off_grid_times() {
        let h = driven_two_level(1.0, 1.0, 0.1).unwrap();
        let sol = solve(&h, 0.0, &period_options()).unwrap();
        let psi = CVec::from_vec(vec![linalg::ONE, linalg::ZERO]);
        assert!(stroboscopic_decomposition(&[psi.clone()], &[0.3], &sol).is_err());
        let p = stroboscopic_decomposition(&[psi], &[sol.period * 3.0], &sol).unwrap();
        assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
