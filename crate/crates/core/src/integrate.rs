//! Time-ordered integrators: fourth-order Magnus for unitaries and an
//! adaptive Dormand–Prince 5(4) scheme for matrix-valued ODEs.

use crate::error::{Error, Result};
use crate::linalg::{self, r, CMat, CVec, IM};
use crate::model::TimeDependentHamiltonian;

#[derive(Clone, Copy, Debug)]
pub struct MagnusOptions {
    /// Target error of the full propagator (largest element).
    pub tol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for MagnusOptions {
    fn default() -> Self {
        Self { tol: 1e-10, initial_step: None, max_steps: 5_000_000 }
    }
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3/6
const COMM_WEIGHT: f64 = 0.144_337_567_297_406_44; // √3/12

/// One Magnus-4 step: exp(−i[(h/2)(H1+H2) + i(√3/12)h²[H1,H2]]).
pub fn magnus_step(h: &TimeDependentHamiltonian, t: f64, dt: f64) -> CMat {
    if h.is_static() {
        return linalg::expm_herm(h.static_part(), dt);
    }
    let h1 = h.at(t + (0.5 - GAUSS_OFFSET) * dt);
    let h2 = h.at(t + (0.5 + GAUSS_OFFSET) * dt);
    let mut m = (&h1 + &h2) * r(0.5 * dt);
    let comm = linalg::commutator(&h1, &h2);
    m += comm * (IM * (COMM_WEIGHT * dt * dt));
    linalg::expm_herm(&m, 1.0)
}

/// U(t1, t0) with a fixed number of Magnus steps.
pub fn propagator_fixed(h: &TimeDependentHamiltonian, t0: f64, t1: f64, steps: usize) -> CMat {
    if h.is_static() {
        return linalg::expm_herm(h.static_part(), t1 - t0);
    }
    let n = steps.max(1);
    let dt = (t1 - t0) / n as f64;
    let mut u = linalg::eye(h.dim());
    for k in 0..n {
        u = magnus_step(h, t0 + k as f64 * dt, dt) * u;
    }
    u
}

/// U(t1, t0) with adaptive step doubling.
pub fn propagator(h: &TimeDependentHamiltonian, t0: f64, t1: f64, opts: &MagnusOptions) -> Result<CMat> {
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(linalg::eye(h.dim()));
    }
    if h.is_static() {
        return Ok(linalg::expm_herm(h.static_part(), span));
    }
    let mut u = linalg::eye(h.dim());
    let mut t = t0;
    let mut dt = opts.initial_step.unwrap_or(span / 64.0).min(span);
    let mut steps = 0usize;
    while (t1 - t) > span.abs() * 1e-14 {
        if steps >= opts.max_steps {
            return Err(Error::Integrator { t, reason: format!("exceeded {} Magnus steps", opts.max_steps) });
        }
        dt = dt.min(t1 - t);
        let full = magnus_step(h, t, dt);
        let half1 = magnus_step(h, t, dt / 2.0);
        let half2 = magnus_step(h, t + dt / 2.0, dt / 2.0);
        let two = &half2 * &half1;
        let err = linalg::max_abs(&(&two - &full)) / 15.0;
        let budget = opts.tol * dt / span;
        if err <= budget || dt < span * 1e-12 {
            u = two * u;
            t += dt;
            steps += 1;
        }
        if !err.is_finite() {
            return Err(Error::Integrator { t, reason: "non-finite error estimate".into() });
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * (budget / err).powf(0.2)).clamp(0.2, 4.0) };
        dt *= factor;
    }
    Ok(u)
}

/// Propagate a state, returning it at every requested time (ascending, ≥ t0 = times[0]).
pub fn evolve_state(h: &TimeDependentHamiltonian, psi0: &CVec, times: &[f64], opts: &MagnusOptions) -> Result<Vec<CVec>> {
    let mut out = Vec::with_capacity(times.len());
    let mut psi = psi0.clone();
    let mut t = times.first().copied().unwrap_or(0.0);
    for &tn in times {
        if tn < t {
            return Err(Error::Integrator { t: tn, reason: "output times must be ascending".into() });
        }
        if tn > t {
            psi = propagator(h, t, tn, opts)? * psi;
            t = tn;
        }
        out.push(psi.clone());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, initial_step: None, max_steps: 10_000_000 }
    }
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &CMat, terms: &[(f64, &CMat)], h: f64) -> CMat {
    let mut out = y.clone();
    for &(a, k) in terms {
        if a != 0.0 {
            out.zip_apply(k, |o, v| *o += v * (a * h));
        }
    }
    out
}

/// Integrate dy/dt = f(t, y) and return y at each requested time.
pub fn dopri5<F>(f: F, y0: &CMat, times: &[f64], opts: &OdeOptions) -> Result<Vec<CMat>>
where
    F: Fn(f64, &CMat) -> CMat,
{
    let mut out = Vec::with_capacity(times.len());
    let Some(&t_start) = times.first() else { return Ok(out) };
    let t_end = *times.last().unwrap();
    let span = (t_end - t_start).abs().max(1e-300);
    let mut t = t_start;
    let mut y = y0.clone();
    let mut k1 = f(t, &y);
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let scale = linalg::max_abs(&k1).max(1e-300);
        (0.01 * linalg::max_abs(&y).max(1.0) / scale).min(span)
    });
    let mut steps = 0usize;
    for &target in times {
        if target < t - span * 1e-14 {
            return Err(Error::Integrator { t: target, reason: "output times must be ascending".into() });
        }
        while target - t > span * 1e-14 {
            if steps >= opts.max_steps {
                return Err(Error::Integrator { t, reason: format!("exceeded {} steps", opts.max_steps) });
            }
            let hs = h.min(target - t);
            let k2 = f(t + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
            let k3 = f(t + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
            let k4 = f(t + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
            let k5 = f(t + C5 * hs, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs));
            let k6 = f(t + hs, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs));
            let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
            let k7 = f(t + hs, &y_new);
            let err_m = axpy(
                &CMat::zeros(y.nrows(), y.ncols()),
                &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
                hs,
            );
            let mut err: f64 = 0.0;
            for ((e, a), b) in err_m.iter().zip(y.iter()).zip(y_new.iter()) {
                let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                return Err(Error::Integrator { t, reason: "non-finite error estimate".into() });
            }
            if err <= 1.0 {
                t += hs;
                y = y_new;
                k1 = k7;
                steps += 1;
            } else if hs < span * 1e-14 {
                return Err(Error::Integrator { t, reason: "step size underflow".into() });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // keep the proposal from the unclipped step when the clip was only to hit `target`
            if hs == h || err > 1.0 {
                h = hs * factor;
            } else {
                h = h.max(hs * factor);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
