//! Wigner tomography: forward models, displacement-grid design, parity
//! error mitigation, constrained reconstruction, photon-number-resolved
//! spectroscopy and post-selection.
//!
//! vec(ρ) is row-major (k = i·d + j). Internally the reconstruction works in
//! an orthonormal Hermitian basis so the density-matrix projection is a plain
//! Euclidean projection in coefficient space.

use std::f64::consts::{FRAC_2_PI, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::fit;
use crate::hilbert::{self, DensityMatrix, StateVector};
use crate::linalg::{self, c, cis, CMat, ONE};
use crate::C64;

/// 4/π², normalization of the two-mode generalized Wigner function.
pub const TWO_MODE_NORM: f64 = 4.0 / (PI * PI);

/// Generalized Laguerre polynomial L_n^{(k)}(x) by the three-term recurrence.
pub fn laguerre(n: usize, k: f64, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 + k - x);
    if n == 0 {
        return prev;
    }
    for i in 1..n {
        let i = i as f64;
        let next = ((2.0 * i + 1.0 + k - x) * cur - (i + k) * prev) / (i + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// ⟨m|D(α)|n⟩ from the closed form
/// √(n!/m!) α^{m−n} e^{−|α|²/2} L_n^{(m−n)}(|α|²) for m ≥ n.
pub fn displacement_element(m: usize, n: usize, alpha: C64) -> C64 {
    let x = alpha.norm_sqr();
    if m >= n {
        let k = m - n;
        // √(n!/m!) = 1/√((n+1)…m)
        let ratio = ((n + 1)..=m).fold(1.0, |acc, j| acc / (j as f64).sqrt());
        alpha.powu(k as u32) * (ratio * (-0.5 * x).exp() * laguerre(n, k as f64, x))
    } else {
        let k = n - m;
        let ratio = ((m + 1)..=n).fold(1.0, |acc, j| acc / (j as f64).sqrt());
        (-alpha.conj()).powu(k as u32) * (ratio * (-0.5 * x).exp() * laguerre(m, k as f64, x))
    }
}

/// Block ⟨m|D(α)|n⟩ for m < rows, n < cols.
pub fn displacement_matrix(alpha: C64, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |m, n| displacement_element(m, n, alpha))
}

/// (2/π) D(α) Π D(−α) = (2/π) D(2α) Π restricted to the first `d` Fock states.
/// Exact: no truncation enters the matrix elements.
pub fn wigner_operator(alpha: C64, d: usize) -> CMat {
    let two = alpha * 2.0;
    CMat::from_fn(d, d, |m, n| {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        displacement_element(m, n, two) * (FRAC_2_PI * sign)
    })
}

/// Warning text when |α|² exceeds a quarter of the truncation.
pub fn truncation_warning(alpha: C64, cutoff: usize) -> Option<String> {
    (alpha.norm_sqr() > cutoff as f64 / 4.0)
        .then(|| format!("|α|² = {:.3} exceeds cutoff/4 = {:.3}; displaced states leave the truncated space", alpha.norm_sqr(), cutoff as f64 / 4.0))
}

/// W(α) = (2/π) Tr[D(α) Π D(−α) ρ] for a single-mode ρ.
pub fn wigner_forward(rho: &DensityMatrix, alpha: C64) -> Result<f64> {
    if rho.dims().len() != 1 {
        return invalid("wigner_forward expects a single-mode state");
    }
    if let Some(w) = truncation_warning(alpha, rho.dim()) {
        log::warn!("{w}");
    }
    let w = wigner_operator(alpha, rho.dim());
    Ok(linalg::trace(&(w * rho.matrix())).re)
}

/// D(α) e^{iθn̂} D(α)† on the first `d` Fock states. θ = π uses the exact
/// parity form; otherwise the intermediate Fock sum runs until every row has
/// converged to 1e-13 in norm.
pub fn displaced_phase_operator(alpha: C64, theta: f64, d: usize) -> Result<CMat> {
    let wrapped = (theta - PI).rem_euclid(2.0 * PI);
    if wrapped.min(2.0 * PI - wrapped) < 1e-15 {
        return Ok(wigner_operator(alpha, d) / c(FRAC_2_PI, 0.0));
    }
    let mut k_max = d + 8;
    loop {
        let dm = displacement_matrix(alpha, d, k_max);
        let worst = (0..d).map(|m| 1.0 - dm.row(m).norm_squared()).fold(0.0f64, f64::max);
        if worst < 1e-13 {
            let phases = CMat::from_diagonal(&nalgebra::DVector::from_iterator(k_max, (0..k_max).map(|k| cis(theta * k as f64))));
            return Ok(&dm * phases * dm.adjoint());
        }
        if k_max > 600 {
            return Err(Error::Truncation(format!("displacement |α| = {} needs more than 600 Fock states", alpha.norm())));
        }
        k_max += 16;
    }
}

/// Parity readout calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityCalibration {
    /// Transmon |e⟩ probability for odd parity.
    pub p_g: f64,
    /// Transmon |e⟩ probability for even parity.
    pub p_e: f64,
    /// Contrast parameter of the first (or only) mode.
    pub eta: f64,
    /// Contrast parameter of the second mode in joint measurements.
    pub eta2: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl Default for ParityCalibration {
    fn default() -> Self {
        Self { p_g: 0.0, p_e: 1.0, eta: 0.0, eta2: 0.0, theta1: PI, theta2: PI }
    }
}

impl ParityCalibration {
    pub fn new(p_g: f64, p_e: f64) -> Result<Self> {
        let cal = Self { p_g, p_e, ..Default::default() };
        cal.check()?;
        Ok(cal)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.p_e > self.p_g) {
            return invalid(format!("parity calibration needs p_e > p_g (got {}, {})", self.p_e, self.p_g));
        }
        if self.eta < 0.0 || self.eta2 < 0.0 {
            return invalid("contrast parameters must be >= 0");
        }
        for th in [self.theta1, self.theta2] {
            if !(th > 0.0 && th < 2.0 * PI) {
                return invalid(format!("parity angle {th} outside (0, 2π)"));
            }
        }
        Ok(())
    }

    fn span(&self) -> Result<f64> {
        let s = self.p_e - self.p_g;
        if s.abs() < 1e-12 {
            return invalid("degenerate parity calibration p_e = p_g");
        }
        Ok(s)
    }
}

/// W = (2/π)(2(P − p_g)/(p_e − p_g) − 1).
pub fn parity_rescale(raw: f64, cal: &ParityCalibration) -> Result<f64> {
    Ok(FRAC_2_PI * (2.0 * (raw - cal.p_g) / cal.span()? - 1.0))
}

/// Inverse of [`parity_rescale`]: the transmon probability for a Wigner value.
pub fn parity_unscale(w: f64, cal: &ParityCalibration) -> Result<f64> {
    Ok(cal.p_g + cal.span()? * 0.5 * (w / FRAC_2_PI + 1.0))
}

/// Two-mode analogue with the 4/π² normalization.
pub fn two_mode_rescale(raw: f64, cal: &ParityCalibration) -> Result<f64> {
    Ok(TWO_MODE_NORM * (2.0 * (raw - cal.p_g) / cal.span()? - 1.0))
}

pub fn two_mode_unscale(w: f64, cal: &ParityCalibration) -> Result<f64> {
    Ok(cal.p_g + cal.span()? * 0.5 * (w / TWO_MODE_NORM + 1.0))
}

/// C(α) = 1/(1 + η²|α|⁴).
pub fn contrast_correction(alpha: C64, eta: f64) -> f64 {
    1.0 / (1.0 + eta * eta * alpha.norm_sqr().powi(2))
}

/// Simulated contrast of two back-to-back π/2 pulses (same minus opposite
/// phase) on a transmon shifted by χn, averaged over the photon distribution
/// of the coherent state |α⟩. `rabi_rate` ε sets H = (ε/2)σ_x + (δ/2)σ_z.
pub fn contrast_calibration_curve(chi: f64, rabi_rate: f64, alphas: &[f64]) -> Result<Vec<f64>> {
    if !(rabi_rate > 0.0) {
        return invalid("Rabi rate must be > 0");
    }
    let t = PI / (2.0 * rabi_rate);
    let pe_after = |delta: f64, flip: bool| -> f64 {
        let h = CMat::from_row_slice(2, 2, &[c(-delta / 2.0, 0.0), c(rabi_rate / 2.0, 0.0), c(rabi_rate / 2.0, 0.0), c(delta / 2.0, 0.0)]);
        let u1 = linalg::expm_herm(&h, t);
        let hm = CMat::from_row_slice(2, 2, &[c(-delta / 2.0, 0.0), c(-rabi_rate / 2.0, 0.0), c(-rabi_rate / 2.0, 0.0), c(delta / 2.0, 0.0)]);
        let u2 = if flip { linalg::expm_herm(&hm, t) } else { u1.clone() };
        (u2 * u1)[(1, 0)].norm_sqr()
    };
    alphas
        .iter()
        .map(|&a| {
            let nbar = a * a;
            let n_max = (nbar + 10.0 * nbar.sqrt() + 12.0).ceil() as usize;
            let mut acc = 0.0;
            let mut p = (-nbar).exp();
            for n in 0..=n_max {
                if n > 0 {
                    p *= nbar / n as f64;
                }
                let delta = chi * n as f64;
                acc += p * (pe_after(delta, false) - pe_after(delta, true));
            }
            Ok(acc)
        })
        .collect()
}

/// Least-squares η for C(α) = 1/(1 + η²α⁴).
pub fn fit_contrast_eta(alphas: &[f64], contrast: &[f64]) -> Result<f64> {
    if alphas.len() != contrast.len() || alphas.len() < 2 {
        return Err(Error::Fit("contrast fit needs paired data".into()));
    }
    let a4: Vec<f64> = alphas.iter().map(|a| a.powi(4)).collect();
    // initial guess from the largest displacement
    let k = (0..alphas.len()).max_by(|&i, &j| a4[i].total_cmp(&a4[j])).unwrap();
    let guess = if a4[k] > 0.0 && contrast[k] > 0.0 && contrast[k] < 1.0 { ((1.0 / contrast[k] - 1.0) / a4[k]).sqrt() } else { 0.1 };
    let res = fit::least_squares(|p| a4.iter().zip(contrast).map(|(x, y)| 1.0 / (1.0 + p[0] * p[0] * x) - y).collect(), &[guess])?;
    Ok(res.params[0].abs())
}

/// Displacements for tomography. Each point has one complex entry per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementGrid {
    pub modes: usize,
    pub points: Vec<Vec<C64>>,
    /// σ_max/σ_min of the measurement map on Hermitian matrices.
    pub condition_number: f64,
}

impl DisplacementGrid {
    pub fn single(points: Vec<C64>) -> Self {
        Self { modes: 1, points: points.into_iter().map(|a| vec![a]).collect(), condition_number: f64::NAN }
    }

    pub fn two_mode(points: Vec<(C64, C64)>) -> Self {
        Self { modes: 2, points: points.into_iter().map(|(a, b)| vec![a, b]).collect(), condition_number: f64::NAN }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.modes == 0 || self.modes > 2 {
            return invalid("grids cover one or two modes");
        }
        if self.points.iter().any(|p| p.len() != self.modes) {
            return invalid("grid point length does not match the mode count");
        }
        Ok(())
    }
}

/// Number of real coordinates of a D×D Hermitian matrix.
fn herm_dim(d: usize) -> usize {
    d * d
}

/// Coordinates Tr(W B_b) of a Hermitian operator in the orthonormal basis
/// {E_ii, (E_ij + E_ji)/√2, i(E_ij − E_ji)/√2}.
fn herm_coords(w: &CMat) -> Vec<f64> {
    let d = w.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(w[(i, i)].re);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            out.push(SQRT_2 * w[(i, j)].re);
            out.push(SQRT_2 * w[(i, j)].im);
        }
    }
    out
}

/// Matrix from coefficients in the same basis.
fn herm_from_coords(cf: &[f64], d: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = c(cf[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let v = c(cf[k], cf[k + 1]) / SQRT_2;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
            k += 2;
        }
    }
    m
}

/// Operator measured at one grid point for reconstruction dimension `dims`.
fn point_operator(point: &[C64], dims: &[usize], cal: &ParityCalibration) -> Result<CMat> {
    match (point, dims) {
        ([a], [d]) => {
            if (cal.theta1 - PI).abs() < 1e-15 {
                Ok(wigner_operator(*a, *d))
            } else {
                // generalized single-mode parity cos(θn̂)
                let x = displaced_phase_operator(*a, cal.theta1, *d)?;
                Ok(linalg::hermitian_part(&x) * c(FRAC_2_PI, 0.0))
            }
        }
        ([a, b], [d1, d2]) => two_mode_operator(*a, *b, (*d1, *d2), cal),
        _ => invalid("grid point does not match the reconstruction dimensions"),
    }
}

/// (4/π²) (D(α)⊗D(β)) cos(θ1 n̂1 + θ2 n̂2) (D(α)⊗D(β))† on a d1⊗d2 block.
pub fn two_mode_operator(alpha: C64, beta: C64, dims: (usize, usize), cal: &ParityCalibration) -> Result<CMat> {
    let x1 = displaced_phase_operator(alpha, cal.theta1, dims.0)?;
    let x2 = displaced_phase_operator(beta, cal.theta2, dims.1)?;
    let k = linalg::kron(&x1, &x2);
    Ok(linalg::hermitian_part(&k) * c(TWO_MODE_NORM, 0.0))
}

/// Complex measurement matrix: row i is the vectorized Wigner operator at
/// α_i, so that M·vec(ρ) = W(α_i).
pub fn build_measurement_matrix(grid: &DisplacementGrid, d: usize) -> Result<CMat> {
    measurement_matrix(grid, &[d], &ParityCalibration::default(), Executor::default())
}

/// Two-mode analogue of [`build_measurement_matrix`].
pub fn build_two_mode_matrix(grid: &DisplacementGrid, dims: (usize, usize), cal: &ParityCalibration) -> Result<CMat> {
    measurement_matrix(grid, &[dims.0, dims.1], cal, Executor::default())
}

fn measurement_matrix(grid: &DisplacementGrid, dims: &[usize], cal: &ParityCalibration, exec: Executor) -> Result<CMat> {
    grid.check()?;
    let dd: usize = dims.iter().product();
    let rows = exec.try_map(&grid.points, |p| point_operator(p, dims, cal))?;
    let mut m = CMat::zeros(rows.len(), dd * dd);
    for (r, w) in rows.iter().enumerate() {
        for i in 0..dd {
            for j in 0..dd {
                m[(r, linalg::vec_index(i, j, dd))] = w[(j, i)];
            }
        }
    }
    Ok(m)
}

/// Real measurement map on Hermitian coordinates.
fn real_map(grid: &DisplacementGrid, dims: &[usize], cal: &ParityCalibration, exec: Executor) -> Result<DMatrix<f64>> {
    grid.check()?;
    let dd: usize = dims.iter().product();
    let rows = exec.try_map(&grid.points, |p| point_operator(p, dims, cal).map(|w| herm_coords(&w)))?;
    Ok(DMatrix::from_fn(rows.len(), herm_dim(dd), |r, b| rows[r][b]))
}

fn cond_of(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if a.nrows() < a.ncols() || min <= max * 1e-15 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition number of the measurement map of `grid` for dimensions `dims`.
pub fn condition_number(grid: &DisplacementGrid, dims: &[usize], cal: &ParityCalibration) -> Result<f64> {
    Ok(cond_of(&real_map(grid, dims, cal, Executor::default())?))
}

/// Settings for the annealed displacement search.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSearch {
    /// Radius of the search disk; `None` uses 0.9√d per mode.
    pub alpha_max: Option<f64>,
    /// Annealing steps.
    pub budget: usize,
    pub seed: u64,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self { alpha_max: None, budget: 2000, seed: 7 }
    }
}

fn random_point<R: Rng>(rng: &mut R, modes: usize, r_max: f64) -> Vec<C64> {
    (0..modes)
        .map(|_| {
            let r = r_max * rng.gen::<f64>().sqrt();
            cis(2.0 * PI * rng.gen::<f64>()) * r
        })
        .collect()
}

/// Grid of `count` points uniform in the disk of radius `r_max`.
pub fn random_grid<R: Rng>(rng: &mut R, modes: usize, count: usize, r_max: f64) -> DisplacementGrid {
    DisplacementGrid { modes, points: (0..count).map(|_| random_point(rng, modes, r_max)).collect(), condition_number: f64::NAN }
}

/// Annealed search for `count` displacements minimizing the condition number
/// of single-mode reconstruction in dimension `d`.
pub fn choose_displacements(d: usize, count: usize, search: &GridSearch) -> Result<DisplacementGrid> {
    anneal_grid(&[d], count, search, &ParityCalibration::default())
}

/// Two-mode analogue over (α, β) pairs for a d1⊗d2 reconstruction.
pub fn choose_two_mode_displacements(dims: (usize, usize), count: usize, search: &GridSearch, cal: &ParityCalibration) -> Result<DisplacementGrid> {
    anneal_grid(&[dims.0, dims.1], count, search, cal)
}

fn anneal_grid(dims: &[usize], count: usize, search: &GridSearch, cal: &ParityCalibration) -> Result<DisplacementGrid> {
    let dd: usize = dims.iter().product();
    let need = dd * dd;
    if count < need {
        return invalid(format!("{count} displacements cannot determine a {dd}-dimensional state (need {need})"));
    }
    let modes = dims.len();
    let r_max = search.alpha_max.unwrap_or(0.9 * (*dims.iter().max().unwrap() as f64).sqrt());
    if !(r_max > 0.0) {
        return invalid("alpha_max must be > 0");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let row = |p: &[C64]| -> Result<Vec<f64>> { point_operator(p, dims, cal).map(|w| herm_coords(&w)) };
    let cost = |rows: &[Vec<f64>]| -> f64 { cond_of(&DMatrix::from_fn(rows.len(), need, |r, b| rows[r][b])) };

    let mut candidates: Vec<Vec<Vec<C64>>> = (0..8).map(|_| random_grid(&mut rng, modes, count, r_max).points).collect();
    // seed schedule: the half-size optimum duplicated has the same condition number
    if count % 2 == 0 && count / 2 >= need {
        let half = anneal_grid(dims, count / 2, search, cal)?;
        candidates.push(half.points.iter().chain(half.points.iter()).cloned().collect());
    }
    let mut points = Vec::new();
    let mut rows = Vec::new();
    let mut value = f64::INFINITY;
    for cand in candidates {
        let r = cand.iter().map(|p| row(p)).collect::<Result<Vec<_>>>()?;
        let v = cost(&r);
        if v <= value || points.is_empty() {
            value = v;
            points = cand;
            rows = r;
        }
    }
    let (mut best_points, mut best) = (points.clone(), value);
    let t0: f64 = 0.3;
    let t_end = 1e-3;
    for step in 0..search.budget {
        let frac = step as f64 / search.budget.max(1) as f64;
        let temp = t0 * (t_end / t0).powf(frac);
        let scale = r_max * (0.25 * (1.0 - frac) + 0.01);
        let k = rng.gen_range(0..count);
        let mut p = points[k].clone();
        for a in p.iter_mut() {
            let mut z = *a + c(scale * rng.sample::<f64, _>(rand_distr::StandardNormal), scale * rng.sample::<f64, _>(rand_distr::StandardNormal));
            if z.norm() > r_max {
                z *= r_max / z.norm();
            }
            *a = z;
        }
        let new_row = row(&p)?;
        let old_row = std::mem::replace(&mut rows[k], new_row);
        let v = cost(&rows);
        let accept = v.is_finite() && (v <= value || rng.gen::<f64>() < (-(v.ln() - value.ln()) / temp).exp());
        if accept {
            points[k] = p;
            value = v;
            if v < best {
                best = v;
                best_points = points.clone();
            }
        } else {
            rows[k] = old_row;
        }
    }
    if !best.is_finite() {
        return Err(Error::Infeasible("no informationally complete grid found".into()));
    }
    Ok(DisplacementGrid { modes, points: best_points, condition_number: best })
}

/// Measured Wigner data on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WignerDataset {
    pub grid: DisplacementGrid,
    /// Mitigated Wigner estimates.
    pub values: Vec<f64>,
    /// Transmon |e⟩ probabilities.
    pub raw: Vec<f64>,
    /// Noise level on `values`.
    pub noise_sigma: f64,
}

impl WignerDataset {
    /// Mitigate raw probabilities: parity rescaling, then division by the
    /// contrast factor (per mode, multiplied for joint points).
    pub fn from_raw(grid: DisplacementGrid, raw: Vec<f64>, cal: &ParityCalibration, noise_sigma: f64) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: raw.len() });
        }
        let values = grid.points.iter().zip(&raw).map(|(p, &r)| mitigate(p, r, cal)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, values, raw, noise_sigma })
    }

    /// Ideal readout of `rho` on `grid` through `cal` (including the contrast
    /// reduction), with Gaussian noise of `sigma` on the Wigner scale.
    pub fn simulate<R: Rng>(rho: &DensityMatrix, grid: DisplacementGrid, cal: &ParityCalibration, sigma: f64, rng: &mut R) -> Result<Self> {
        let dims = rho.dims().to_vec();
        let ideal = Executor::default().try_map(&grid.points, |p| -> Result<f64> {
            let w = point_operator(p, &dims, cal)?;
            Ok(linalg::trace(&(w * rho.matrix())).re)
        })?;
        let noise = if sigma > 0.0 { Some(Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?) } else { None };
        let mut raw = Vec::with_capacity(grid.len());
        for (p, w) in grid.points.iter().zip(&ideal) {
            let measured = w * contrast_factor(p, cal) + noise.map_or(0.0, |n| n.sample(rng));
            raw.push(if grid.modes == 1 { parity_unscale(measured, cal)? } else { two_mode_unscale(measured, cal)? });
        }
        Self::from_raw(grid, raw, cal, sigma)
    }
}

fn contrast_factor(point: &[C64], cal: &ParityCalibration) -> f64 {
    match point {
        [a] => contrast_correction(*a, cal.eta),
        [a, b] => contrast_correction(*a, cal.eta) * contrast_correction(*b, cal.eta2),
        _ => 1.0,
    }
}

fn mitigate(point: &[C64], raw: f64, cal: &ParityCalibration) -> Result<f64> {
    let w = if point.len() == 1 { parity_rescale(raw, cal)? } else { two_mode_rescale(raw, cal)? };
    Ok(w / contrast_factor(point, cal))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { max_iterations: 10_000, tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    pub fidelity: Option<f64>,
    /// One-sigma spread of the fidelity when error bars were computed.
    pub fidelity_std: Option<f64>,
    /// Fraction of shots discarded by post-selection (0 when not used).
    pub excluded_fraction: f64,
    /// ‖M·vec(ρ) − x‖₂ at the solution.
    pub residual: f64,
    pub condition_number: f64,
    pub iterations: usize,
}

/// min ‖M·vec(ρ) − x‖² over density matrices by accelerated projected
/// gradient, started from the projected unconstrained least-squares solution.
pub fn reconstruct_with_map(a: &DMatrix<f64>, x: &[f64], dims: Vec<usize>, target: Option<&StateVector>, opts: &ReconstructOptions) -> Result<ReconstructionResult> {
    let dd: usize = dims.iter().product();
    if a.ncols() != dd * dd || a.nrows() != x.len() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: dd * dd });
    }
    if a.nrows() < a.ncols() {
        return invalid(format!("{} data points cannot determine {} parameters", a.nrows(), a.ncols()));
    }
    let xv = DVector::from_column_slice(x);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let ls = svd.solve(&xv, 1e-12 * smax).map_err(|e| Error::Fit(e.to_string()))?;
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let m = linalg::project_density(&herm_from_coords(v.as_slice(), dd));
        DVector::from_vec(herm_coords(&m))
    };
    let ata = a.transpose() * a;
    let atx = a.transpose() * &xv;
    let lip = 2.0 * smax * smax;
    let mut cur = project(&ls);
    let mut y = cur.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let grad = (&ata * &y - &atx) * 2.0;
        let next = project(&(&y - grad / lip));
        let change = (&next - &cur).norm();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &cur) * ((t - 1.0) / t_next);
        t = t_next;
        cur = next;
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    let residual = (a * &cur - &xv).norm();
    if !converged {
        return Err(Error::NonConvergence { iterations, residual });
    }
    let rho = DensityMatrix::new_unchecked(herm_from_coords(cur.as_slice(), dd), dims)?;
    let fidelity = target.map(|psi| hilbert::fidelity(&rho, psi)).transpose()?;
    Ok(ReconstructionResult { rho, fidelity, fidelity_std: None, excluded_fraction: 0.0, residual, condition_number: cond, iterations })
}

/// Single-mode reconstruction in dimension `d`.
pub fn reconstruct(dataset: &WignerDataset, d: usize, target: Option<&StateVector>) -> Result<ReconstructionResult> {
    reconstruct_dims(dataset, &[d], &ParityCalibration::default(), target)
}

/// Two-mode reconstruction in dimensions (d1, d2) with the joint parity angles of `cal`.
pub fn two_mode_reconstruct(dataset: &WignerDataset, dims: (usize, usize), cal: &ParityCalibration, target: Option<&StateVector>) -> Result<ReconstructionResult> {
    reconstruct_dims(dataset, &[dims.0, dims.1], cal, target)
}

fn reconstruct_dims(dataset: &WignerDataset, dims: &[usize], cal: &ParityCalibration, target: Option<&StateVector>) -> Result<ReconstructionResult> {
    if dataset.grid.modes != dims.len() {
        return invalid("dataset grid and reconstruction dimensions disagree on the mode count");
    }
    let a = real_map(&dataset.grid, dims, cal, Executor::default())?;
    reconstruct_with_map(&a, &dataset.values, dims.to_vec(), target, &ReconstructOptions::default())
}

/// Fidelity spread from measurement noise and calibration uncertainty.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FidelitySpread {
    /// Fidelity of the unperturbed reconstruction.
    pub nominal: f64,
    /// Mean fidelity over the noise resamples.
    pub mean: f64,
    pub noise_std: f64,
    pub calibration_std: f64,
    /// Quadrature sum of the two spreads.
    pub total_std: f64,
}

/// Resample noise of `dataset.noise_sigma` on the mitigated values
/// `iterations` times, and redo the mitigation with every combination of
/// (p_g ± δp_g, p_e ± δp_e).
pub fn error_bars(
    dataset: &WignerDataset,
    cal: &ParityCalibration,
    dims: &[usize],
    target: &StateVector,
    iterations: usize,
    cal_spread: (f64, f64),
    seed: u64,
) -> Result<FidelitySpread> {
    if iterations < 10 {
        return invalid("error bars need at least 10 iterations");
    }
    let a = real_map(&dataset.grid, dims, cal, Executor::default())?;
    let opts = ReconstructOptions::default();
    let fid = |x: &[f64]| -> Result<f64> { Ok(reconstruct_with_map(&a, x, dims.to_vec(), Some(target), &opts)?.fidelity.unwrap()) };
    let nominal = fid(&dataset.values)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = if dataset.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, dataset.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (0..iterations).map(|_| dataset.values.iter().map(|v| v + noise.sample(&mut rng)).collect()).collect()
    } else {
        vec![dataset.values.clone(); iterations]
    };
    let noisy = Executor::default().try_map(&samples, |x| fid(x))?;
    let (mean, noise_std) = mean_std(&noisy);
    let mut cal_fids = Vec::new();
    if cal_spread.0 > 0.0 || cal_spread.1 > 0.0 {
        for sg in [-1.0, 1.0] {
            for se in [-1.0, 1.0] {
                let mut c2 = *cal;
                c2.p_g += sg * cal_spread.0;
                c2.p_e += se * cal_spread.1;
                let x = dataset.grid.points.iter().zip(&dataset.raw).map(|(p, &r)| mitigate(p, r, &c2)).collect::<Result<Vec<_>>>()?;
                cal_fids.push(fid(&x)?);
            }
        }
    }
    let calibration_std = if cal_fids.is_empty() { 0.0 } else { mean_std(&cal_fids).1 };
    Ok(FidelitySpread { nominal, mean, noise_std, calibration_std, total_std: noise_std.hypot(calibration_std) })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Generalized two-mode Wigner value (4/π²) Tr[ρ D Π̃ D†] with
/// Π̃ = cos(θ1 n̂1 + θ2 n̂2) and D = D(α)⊗D(β).
pub fn two_mode_parity_forward(rho2: &DensityMatrix, alpha: C64, beta: C64, cal: &ParityCalibration) -> Result<f64> {
    let dims = rho2.dims();
    if dims.len() != 2 {
        return invalid("two_mode_parity_forward expects a two-mode state");
    }
    for (a, d) in [(alpha, dims[0]), (beta, dims[1])] {
        if let Some(w) = truncation_warning(a, d) {
            log::warn!("{w}");
        }
    }
    let w = two_mode_operator(alpha, beta, (dims[0], dims[1]), cal)?;
    Ok(linalg::trace(&(w * rho2.matrix())).re)
}

/// Lorentzian of unit peak height and full width `linewidth`.
fn lorentzian(x: f64, linewidth: f64) -> f64 {
    let h = 0.5 * linewidth;
    h * h / (x * x + h * h)
}

/// Σ_n P_n L(ω − nχ) on `grid` (angular frequencies relative to the bare transmon line).
pub fn pnrqs_forward(populations: &[f64], chi: f64, linewidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(linewidth > 0.0) {
        return invalid("linewidth must be > 0");
    }
    let total: f64 = populations.iter().sum();
    if populations.iter().any(|&p| p < -1e-12) || (total - 1.0).abs() > 1e-6 {
        return invalid("populations must be non-negative and sum to 1");
    }
    Ok(grid.iter().map(|&w| populations.iter().enumerate().map(|(n, p)| p * lorentzian(w - n as f64 * chi, linewidth)).sum()).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PnrqsFit {
    /// Normalized photon-number populations.
    pub populations: Vec<f64>,
    pub linewidth: f64,
    /// Overall amplitude (sum of unnormalized peak heights).
    pub scale: f64,
    pub rms: f64,
}

/// Fit Σ_n A_n L(ω − nχ; Γ) with χ locked and one shared Γ, then normalize.
pub fn pnrqs_fit(grid: &[f64], spectrum: &[f64], chi: f64, n_max: usize, linewidth_guess: f64) -> Result<PnrqsFit> {
    if grid.len() != spectrum.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: spectrum.len() });
    }
    if !(linewidth_guess > 0.0) {
        return invalid("linewidth guess must be > 0");
    }
    let np = n_max + 1;
    let amp0: Vec<f64> = (0..np)
        .map(|n| {
            let w = n as f64 * chi;
            let k = (0..grid.len()).min_by(|&i, &j| (grid[i] - w).abs().total_cmp(&(grid[j] - w).abs())).unwrap();
            spectrum[k].max(0.0)
        })
        .collect();
    let mut p0 = amp0.clone();
    p0.push(linewidth_guess.ln());
    let res = fit::least_squares(
        |p| {
            let gamma = p[np].exp();
            grid.iter()
                .zip(spectrum)
                .map(|(&w, &s)| (0..np).map(|n| p[n] * lorentzian(w - n as f64 * chi, gamma)).sum::<f64>() - s)
                .collect()
        },
        &p0,
    )?;
    let amps: Vec<f64> = res.params[..np].iter().map(|a| a.max(0.0)).collect();
    let scale: f64 = amps.iter().sum();
    if !(scale > 0.0) {
        return Err(Error::Fit("no spectral weight".into()));
    }
    Ok(PnrqsFit { populations: amps.iter().map(|a| a / scale).collect(), linewidth: res.params[np].exp(), scale, rms: res.rms })
}

/// Divide a spectrum by the peak height of a vacuum reference so a single
/// |0⟩ peak reads 1.
pub fn normalize_to_vacuum(spectrum: &[f64], vacuum_reference: &[f64]) -> Result<Vec<f64>> {
    let peak = vacuum_reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return invalid("vacuum reference has no peak");
    }
    Ok(spectrum.iter().map(|s| s / peak).collect())
}

#[derive(Clone, Debug)]
pub struct PostSelection {
    pub kept_fraction: f64,
    pub excluded_fraction: f64,
    /// Cavity state conditioned on reading |g⟩.
    pub conditioned: DensityMatrix,
    /// Cavity state with the transmon traced out.
    pub unconditioned: DensityMatrix,
}

/// Condition a transmon ⊗ cavity state on reading |g⟩, with assignment
/// errors ε_g = P(not g | g) and ε_e = P(g | not g).
pub fn post_selection_model(state: &DensityMatrix, assignment_error: (f64, f64)) -> Result<PostSelection> {
    let (eg, ee) = assignment_error;
    if !(0.0..0.5).contains(&eg) || !(0.0..0.5).contains(&ee) {
        return invalid("assignment errors must lie in [0, 0.5)");
    }
    let dims = state.dims();
    if dims.len() < 2 {
        return invalid("post-selection needs a transmon ⊗ cavity state");
    }
    let nt = dims[0];
    let rest: usize = dims[1..].iter().product();
    let mut pg = CMat::zeros(nt, nt);
    pg[(0, 0)] = ONE;
    let proj = linalg::kron(&pg, &linalg::eye(rest));
    let rho = state.matrix();
    let in_g = &proj * rho * &proj;
    let keep: Vec<usize> = (1..dims.len()).collect();
    let trace_out = |m: CMat| -> Result<CMat> { Ok(hilbert::partial_trace(&DensityMatrix::new_unchecked(m, dims.to_vec())?, &keep)?.into_matrix()) };
    let cav_g = trace_out(in_g)?;
    let cav_all = trace_out(rho.clone())?;
    let cav_other = &cav_all - &cav_g;
    let weighted = cav_g * c(1.0 - eg, 0.0) + cav_other * c(ee, 0.0);
    let kept = linalg::trace(&weighted).re;
    if !(kept > 0.0) {
        return Err(Error::Validation("post-selection keeps no shots".into()));
    }
    let cav_dims = dims[1..].to_vec();
    Ok(PostSelection {
        kept_fraction: kept,
        excluded_fraction: 1.0 - kept,
        conditioned: DensityMatrix::new_unchecked(weighted / c(kept, 0.0), cav_dims.clone())?,
        unconditioned: DensityMatrix::new_unchecked(cav_all, cav_dims)?,
    })
}
