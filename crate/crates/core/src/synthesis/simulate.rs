//! Dense simulation of compiled schedules in the dispersive interaction frame.
//!
//! Each segment evolves under H0' + V with H0' = H_disp − ω_s|f⟩⟨f| (sidebands)
//! or 0 (ideal broadband transmon pulses, displacements, reset), after which the
//! state is mapped back to the global frame with e^{iH0'T}.

use std::f64::consts::FRAC_1_SQRT_2;

use super::gates::BasisLabel;
use super::SynthesisContext;
use crate::dynamics::{CollapseSet, Lindbladian};
use crate::error::{invalid, Error, Result};
use crate::hilbert::{self, CompositeSpace, DensityMatrix, OpLabel, OperatorMatrix, StateVector};
use crate::integrate::{self, MagnusOptions, OdeOptions};
use crate::linalg::{self, c, cis, CMat, CVec, ONE, ZERO};
use crate::model::TimeDependentHamiltonian;
use crate::pulse::{Channel, EnvelopeKind, PulseSegment, Schedule};
use crate::C64;

/// The six transmon cardinal states as (label, u, v) with u|g⟩ + v|e⟩.
pub fn cardinal_states() -> Vec<(&'static str, C64, C64)> {
    let h = FRAC_1_SQRT_2;
    vec![
        ("+z", ONE, ZERO),
        ("-z", ZERO, ONE),
        ("+x", c(h, 0.0), c(h, 0.0)),
        ("-x", c(h, 0.0), c(-h, 0.0)),
        ("+y", c(h, 0.0), c(0.0, h)),
        ("-y", c(h, 0.0), c(0.0, -h)),
    ]
}

#[derive(Clone, Debug)]
pub struct EffectiveModel {
    pub ctx: SynthesisContext,
    /// Device mode of each mode subsystem.
    pub modes: Vec<usize>,
    pub space: CompositeSpace,
    frame: Vec<f64>,
    lowering: Vec<CMat>,
}

/// Result of a dissipative run post-processed on the transmon.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    /// Cavity state after projecting the transmon on |g⟩ and renormalizing.
    pub postselected: DensityMatrix,
    /// Probability of finding the transmon in |g⟩ (kept fraction).
    pub p_ground: f64,
    /// Cavity state with the transmon traced out.
    pub reduced: DensityMatrix,
}

impl EffectiveModel {
    pub fn new(ctx: &SynthesisContext, modes: &[usize]) -> Result<Self> {
        let space = CompositeSpace::new(ctx.transmon_levels, vec![ctx.cutoff; modes.len()])?;
        Self::with_space(ctx, modes, space)
    }

    pub fn with_space(ctx: &SynthesisContext, modes: &[usize], space: CompositeSpace) -> Result<Self> {
        if space.n_modes() != modes.len() {
            return Err(Error::DimensionMismatch { expected: modes.len(), got: space.n_modes() });
        }
        if let Some(&m) = modes.iter().find(|&&m| m >= ctx.params.n_modes()) {
            return Err(Error::SubsystemOutOfRange { index: m, count: ctx.params.n_modes() });
        }
        let frame = (0..space.dim())
            .map(|i| {
                let (l, ns) = space.label(i);
                ctx.frame_energy(modes, l, &ns)
            })
            .collect();
        let lowering = (0..modes.len()).map(|k| hilbert::lowering_op(&space, k + 1).map(|o| o.matrix)).collect::<Result<_>>()?;
        Ok(Self { ctx: ctx.clone(), modes: modes.to_vec(), space, frame, lowering })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    fn local(&self, device_mode: usize) -> Result<usize> {
        self.modes
            .iter()
            .position(|&m| m == device_mode)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {device_mode} is not simulated")))
    }

    /// State vector Σ a |label⟩ (not renormalized).
    pub fn vector(&self, branches: &[(BasisLabel, C64)]) -> Result<CVec> {
        let mut v = CVec::zeros(self.dim());
        for (l, a) in branches {
            v[self.space.index(l.level, &l.photons)?] += a;
        }
        Ok(v)
    }

    /// (u|g⟩ + v|e⟩) ⊗ |vacuum⟩.
    pub fn qubit_input(&self, u: C64, v: C64) -> Result<CVec> {
        let n = self.modes.len();
        self.vector(&[(BasisLabel::vacuum(0, n), u), (BasisLabel::vacuum(1, n), v)])
    }

    /// Cavity-only ket Σ a |photons⟩ over the simulated modes.
    pub fn cavity_vector(&self, amps: &[(Vec<usize>, C64)]) -> Result<StateVector> {
        let dims = self.space.mode_cutoffs().to_vec();
        let sub = CompositeSpace::new(2, dims.clone())?;
        let mut v = CVec::zeros(dims.iter().product());
        for (ph, a) in amps {
            v[sub.index(0, ph)?] += a;
        }
        StateVector::normalized(v, dims)
    }

    /// e^{iφ}|b⟩⟨a| + h.c. on the transmon.
    fn transmon_coupling(&self, a: usize, b: usize, phi: f64) -> Result<CMat> {
        let up = self.space.transmon_transition(b, a)? * cis(phi);
        Ok(&up + up.adjoint())
    }

    /// e^{iφ} b_k|f⟩⟨g| + h.c.
    fn sideband_coupling(&self, k: usize, phi: f64) -> Result<CMat> {
        let fg = self.space.transmon_transition(2, 0)?;
        let m = (&self.lowering[k] * fg) * cis(phi);
        Ok(&m + m.adjoint())
    }

    fn reset_channels(&self, rate: f64) -> Result<CollapseSet> {
        let nth = self.ctx.params.readout_thermal;
        let mut set = CollapseSet::new();
        let down = self.space.transmon_transition(0, 2)?;
        let up = self.space.transmon_transition(2, 0)?;
        set.push(OperatorMatrix::new(down, OpLabel::Collapse), rate * (1.0 + nth), "reset f->g")?;
        set.push(OperatorMatrix::new(up, OpLabel::Collapse), rate * nth, "reset bath g->f")?;
        Ok(set)
    }

    /// H0' diagonal, unit coupling V̂ and peak rate for a segment.
    fn terms(&self, seg: &PulseSegment) -> Result<SegmentTerms> {
        let dim = self.dim();
        let zero = vec![0.0; dim];
        Ok(match seg.channel {
            Channel::TransmonGe | Channel::TransmonEf | Channel::TransmonGf => {
                let (a, b) = match seg.channel {
                    Channel::TransmonGe => (0, 1),
                    Channel::TransmonEf => (1, 2),
                    _ => (0, 2),
                };
                SegmentTerms { h0: zero, v: Some(self.transmon_coupling(a, b, seg.phase)?), jumps: None }
            }
            Channel::Sideband { mode } => {
                let k = self.local(mode)?;
                let ws = seg.meta.frame_offset;
                let h0 = (0..dim).map(|i| self.frame[i] - if self.space.label(i).0 == 2 { ws } else { 0.0 }).collect();
                SegmentTerms { h0, v: Some(self.sideband_coupling(k, seg.phase)?), jumps: None }
            }
            Channel::Displacement { mode } => {
                let k = self.local(mode)?;
                let alpha = c(seg.meta.alpha.0, seg.meta.alpha.1);
                let t = seg.envelope.duration;
                if !(t > 0.0) {
                    return invalid("displacement segment needs a positive duration");
                }
                // D(α) = exp(αb† − ᾱb) = exp(−i H t) with H = i(αb† − ᾱb)/t
                let b = &self.lowering[k];
                let gen = (b.adjoint() * alpha - b * alpha.conj()) * c(0.0, 1.0 / t);
                SegmentTerms { h0: zero, v: Some(linalg::hermitian_part(&gen)), jumps: None }
            }
            Channel::Readout => SegmentTerms { h0: zero, v: None, jumps: Some(self.reset_channels(seg.meta.rate)?) },
        })
    }

    fn frame_map(&self, h0: &[f64], t: f64) -> CVec {
        CVec::from_iterator(h0.len(), h0.iter().map(|e| cis(e * t)))
    }

    /// Amplitude multiplying V̂ at time t within the segment.
    fn coefficient(seg: &PulseSegment, t: f64) -> f64 {
        match seg.channel {
            Channel::Displacement { .. } => 1.0,
            _ => seg.envelope.value(t),
        }
    }

    fn is_flat(seg: &PulseSegment) -> bool {
        matches!(seg.envelope.kind, EnvelopeKind::Constant) || matches!(seg.channel, Channel::Displacement { .. })
    }

    /// Frame-mapped propagator e^{iH0'T} U(T) of one segment.
    pub fn segment_unitary(&self, seg: &PulseSegment) -> Result<CMat> {
        let terms = self.terms(seg)?;
        if terms.jumps.is_some() {
            return invalid("reset segments are not unitary");
        }
        let t = seg.envelope.duration;
        let h0 = linalg::diag_real(&terms.h0);
        let u = match &terms.v {
            None => linalg::expm_herm(&h0, t),
            Some(v) if Self::is_flat(seg) => linalg::expm_herm(&(&h0 + v * c(Self::coefficient(seg, 0.0), 0.0)), t),
            Some(v) => {
                let env = seg.envelope;
                let h = TimeDependentHamiltonian::new(h0.clone(), vec![v.clone()], move |s, out| out[0] = env.value(s), None)?;
                integrate::propagator(&h, 0.0, t, &MagnusOptions::default())?
            }
        };
        let f = self.frame_map(&terms.h0, t);
        let mut out = u;
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= f[i];
        }
        Ok(out)
    }

    /// Product of segment propagators; gaps are identity in this frame.
    pub fn schedule_unitary(&self, schedule: &Schedule) -> Result<CMat> {
        let mut u = linalg::eye(self.dim());
        for seg in &schedule.segments {
            u = self.segment_unitary(seg)? * u;
        }
        Ok(u)
    }

    /// Dissipative evolution of ρ through the schedule with the given channels.
    pub fn evolve_density(&self, schedule: &Schedule, rho0: &CMat, collapse: &CollapseSet, opts: &OdeOptions) -> Result<CMat> {
        let base = Lindbladian::new(self.dim(), collapse)?;
        let mut rho = rho0.clone();
        let mut now = 0.0;
        for seg in &schedule.segments {
            if seg.start > now {
                rho = base.evolve_static(&CMat::zeros(self.dim(), self.dim()), &rho, seg.start - now, opts)?;
            }
            rho = self.evolve_segment(seg, &rho, collapse, &base, opts, &[seg.envelope.duration])?.pop().unwrap();
            now = seg.end();
        }
        if schedule.total_duration > now {
            rho = base.evolve_static(&CMat::zeros(self.dim(), self.dim()), &rho, schedule.total_duration - now, opts)?;
        }
        Ok(rho)
    }

    /// ρ at each requested time within one segment (times relative to its start),
    /// each mapped back to the global frame.
    pub fn evolve_segment_sampled(&self, seg: &PulseSegment, rho0: &CMat, collapse: &CollapseSet, times: &[f64], opts: &OdeOptions) -> Result<Vec<CMat>> {
        let base = Lindbladian::new(self.dim(), collapse)?;
        self.evolve_segment(seg, rho0, collapse, &base, opts, times)
    }

    fn evolve_segment(&self, seg: &PulseSegment, rho0: &CMat, collapse: &CollapseSet, base: &Lindbladian, opts: &OdeOptions, times: &[f64]) -> Result<Vec<CMat>> {
        let terms = self.terms(seg)?;
        let lind = match &terms.jumps {
            Some(extra) => {
                let mut all = collapse.clone();
                all.channels.extend(extra.channels.iter().cloned());
                Lindbladian::new(self.dim(), &all)?
            }
            None => base.clone(),
        };
        let h0 = linalg::diag_real(&terms.h0);
        let mut grid = vec![0.0];
        grid.extend_from_slice(times);
        let states = match &terms.v {
            Some(v) if !Self::is_flat(seg) => {
                let (h0e, v) = (lind.effective(&h0), v.clone());
                integrate::dopri5(|t, y| lind.rhs(&(&h0e + &v * c(seg.envelope.value(t), 0.0)), y), rho0, &grid, opts)?
            }
            _ => {
                let h = match &terms.v {
                    Some(v) => &h0 + v * c(Self::coefficient(seg, 0.0), 0.0),
                    None => h0.clone(),
                };
                let he = lind.effective(&h);
                integrate::dopri5(|_, y| lind.rhs(&he, y), rho0, &grid, opts)?
            }
        };
        Ok(states
            .into_iter()
            .skip(1)
            .zip(times)
            .map(|(rho, &t)| {
                let f = self.frame_map(&terms.h0, t);
                CMat::from_fn(rho.nrows(), rho.ncols(), |i, j| f[i] * rho[(i, j)] * f[j].conj())
            })
            .collect())
    }

    /// Project the transmon on |g⟩ and also trace it out.
    pub fn outcome(&self, rho: &CMat) -> Result<SimOutcome> {
        let dm = DensityMatrix::new_unchecked(rho.clone(), self.space.dims())?;
        let keep: Vec<usize> = (1..=self.modes.len()).collect();
        let reduced = hilbert::partial_trace(&dm, &keep)?;
        let pg_proj = self.space.transmon_projector(0)?;
        let projected = &pg_proj * rho * &pg_proj;
        let p_ground = linalg::trace(&projected).re;
        if !(p_ground > 0.0) {
            return Err(Error::Validation("no population left in |g⟩ for post-selection".into()));
        }
        let post = DensityMatrix::new_unchecked(projected / c(p_ground, 0.0), self.space.dims())?;
        let postselected = hilbert::partial_trace(&post, &keep)?;
        Ok(SimOutcome { postselected, p_ground, reduced })
    }
}

struct SegmentTerms {
    h0: Vec<f64>,
    v: Option<CMat>,
    jumps: Option<CollapseSet>,
}
