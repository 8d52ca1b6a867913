//! Lowering of validated programs to time-domain schedules.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gates::{AbstractGate, GateKind, SequenceProgram, Transition};
use super::protocols::pns_amplitude;
use super::tracker::{validate_program, ValidationReport};
use super::SynthesisContext;
use crate::error::{invalid, Error, Result};
use crate::model::{epsilon_for_rate, sideband_drive_frequency, sideband_resonance_shift_estimate};
use crate::pulse::{Channel, Envelope, EnvelopeKind, PulseSegment, Schedule, SegmentMeta};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompileConfig {
    /// Duration of every transmon rotation; the amplitude scales with the angle.
    pub transmon_pi_time: f64,
    /// Sideband envelope shape. Flat-top shapes are stretched to keep the pulse area.
    pub sideband_envelope: EnvelopeKind,
    pub displacement_time: f64,
    /// f → g reset rate; `None` uses the readout linewidth.
    pub reset_rate: Option<f64>,
    /// Add the analytic Stark-shift estimate to uncalibrated sideband carriers.
    pub stark_estimate: bool,
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            transmon_pi_time: 60e-9,
            sideband_envelope: EnvelopeKind::Constant,
            displacement_time: 20e-9,
            reset_rate: None,
            stark_estimate: true,
        }
    }
}

/// Measured (or Floquet-extracted) |f,0⟩–|g,1⟩ resonance and rate for one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    /// Drive frequency of the |f,0⟩–|g,1⟩ resonance including Stark shifts (rad/s).
    pub resonance: f64,
    /// Sideband rate g_sb at that drive amplitude (rad/s).
    pub rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SidebandCalibration {
    pub entries: BTreeMap<usize, CalibrationEntry>,
}

impl SidebandCalibration {
    pub fn insert(&mut self, mode: usize, entry: CalibrationEntry) {
        self.entries.insert(mode, entry);
    }
}

#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub program: SequenceProgram,
    pub schedule: Schedule,
    pub report: ValidationReport,
    /// Context the schedule was compiled against (rates replaced by calibration).
    pub context: SynthesisContext,
}

/// Nominal |f,0⟩–|g,1⟩ carrier and rate for `mode`.
pub(crate) fn sideband_base(mode: usize, ctx: &SynthesisContext, cfg: &CompileConfig, cal: Option<&SidebandCalibration>) -> Result<(f64, f64)> {
    if let Some(cal) = cal {
        let e = cal.entries.get(&mode).ok_or_else(|| Error::MissingCalibration(format!("sideband on mode {mode}")))?;
        return Ok((e.resonance, e.rate));
    }
    let rate = ctx.sideband_rate(mode)?;
    let omega_d = sideband_drive_frequency(&ctx.params, mode);
    let shift = if cfg.stark_estimate {
        let eps = epsilon_for_rate(&ctx.params, mode, rate)?;
        sideband_resonance_shift_estimate(&ctx.params, eps, omega_d)?
    } else {
        0.0
    };
    Ok((omega_d + shift, rate))
}

fn transmon_carrier(ctx: &SynthesisContext, t: Transition) -> f64 {
    let (wq, k) = (ctx.params.omega_q, ctx.params.anharm_k);
    match t {
        Transition::Ge => wq,
        Transition::Ef => wq + k,
        Transition::Gf => wq + 0.5 * k,
    }
}

/// Physical segment for one gate. `frame_offset` is the tracked detuning of
/// the addressed sideband pair; `base` the nominal carrier and rate.
pub(crate) fn gate_segment(
    k: usize,
    gate: &AbstractGate,
    frame_offset: Option<f64>,
    base: Option<(f64, f64)>,
    ctx: &SynthesisContext,
    cfg: &CompileConfig,
) -> Result<Option<PulseSegment>> {
    let label = gate.short_name();
    let seg = |channel, carrier, envelope, meta: SegmentMeta| PulseSegment { channel, carrier, phase: gate.phase, envelope, start: 0.0, meta };
    Ok(match gate.kind {
        GateKind::Rotation { transition, theta } => {
            let t = cfg.transmon_pi_time;
            if !(t > 0.0) {
                return invalid("transmon pulse time must be > 0");
            }
            // R(−θ, φ) = R(θ, φ + π)
            let (rate, phase) = if theta < 0.0 { (-theta / (2.0 * t), gate.phase + PI) } else { (theta / (2.0 * t), gate.phase) };
            let channel = match transition {
                Transition::Ge => Channel::TransmonGe,
                Transition::Ef => Channel::TransmonEf,
                Transition::Gf => Channel::TransmonGf,
            };
            let meta = SegmentMeta { gate_index: k, rate, label, ..Default::default() };
            let mut s = seg(channel, transmon_carrier(ctx, transition), Envelope::constant(rate, t)?, meta);
            s.phase = phase;
            Some(s)
        }
        GateKind::Sideband { mode, n, fraction } => {
            let (w0, g0) = base.ok_or_else(|| Error::MissingCalibration(format!("sideband on mode {mode}")))?;
            let area = fraction * PI / (2.0 * g0 * ((n + 1) as f64).sqrt());
            let offset = frame_offset.unwrap_or(0.0);
            let meta = SegmentMeta { gate_index: k, rate: g0, frame_offset: offset, label, ..Default::default() };
            Some(seg(Channel::Sideband { mode }, w0 + offset, shaped(cfg.sideband_envelope, g0, area)?, meta))
        }
        GateKind::PnsSideband { mode, n1, n2, m } => {
            let (w0, _) = base.ok_or_else(|| Error::MissingCalibration(format!("sideband on mode {mode}")))?;
            let sol = pns_amplitude(n1, n2, m, ctx.params.chi_f[mode])?;
            let g0 = sol.gsb1 / ((n1 + 1) as f64).sqrt();
            let offset = frame_offset.unwrap_or(0.0);
            let meta = SegmentMeta { gate_index: k, rate: g0, frame_offset: offset, label, ..Default::default() };
            Some(seg(Channel::Sideband { mode }, w0 + offset, shaped(cfg.sideband_envelope, g0, sol.pi_time)?, meta))
        }
        GateKind::Displacement { mode, re, im } => {
            let t = cfg.displacement_time;
            let meta = SegmentMeta { gate_index: k, alpha: (re, im), label, ..Default::default() };
            Some(seg(Channel::Displacement { mode }, ctx.params.mode_freqs[mode], Envelope::constant(1.0 / t, t)?, meta))
        }
        GateKind::Reset { duration } => {
            let rate = cfg.reset_rate.unwrap_or(ctx.params.readout_kappa);
            let meta = SegmentMeta { gate_index: k, rate, label, ..Default::default() };
            Some(seg(Channel::Readout, ctx.params.readout_freq, Envelope::constant(rate, duration)?, meta))
        }
        GateKind::Idle { .. } => None,
    })
}

/// Envelope of peak `amp` whose shape integral equals `area` (a constant pulse of length `area`).
fn shaped(kind: EnvelopeKind, amp: f64, area: f64) -> Result<Envelope> {
    match kind {
        EnvelopeKind::Constant => Envelope::constant(amp, area),
        EnvelopeKind::BumpFlatTop { ramp } | EnvelopeKind::Sin2FlatTop { ramp } => {
            Envelope::build(kind, amp, area + 4.0 * ramp)?.with_shape_area(area)
        }
        EnvelopeKind::Gaussian { .. } => invalid("gaussian sideband envelopes are not supported by the compiler"),
    }
}

/// Validate `program` and lower it to a sequential schedule. Sideband carriers
/// are ω_sb(0) plus the tracked dispersive offset of the addressed photon
/// configuration, which for a single mode is ω_sb(0) + nχ_f.
pub fn compile(
    program: &SequenceProgram,
    ctx: &SynthesisContext,
    cfg: &CompileConfig,
    calibration: Option<&SidebandCalibration>,
) -> Result<CompiledProgram> {
    let mut cctx = ctx.clone();
    let mut bases: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for g in &program.gates {
        if let (true, Some(m)) = (g.is_sideband(), g.mode()) {
            if let std::collections::btree_map::Entry::Vacant(e) = bases.entry(m) {
                let b = sideband_base(m, ctx, cfg, calibration)?;
                e.insert(b);
                if m < cctx.sideband_rates.len() {
                    cctx.sideband_rates[m] = b.1;
                }
            }
        }
    }
    let report = validate_program(program, &cctx)?;
    let mut schedule = Schedule::new();
    for (k, gate) in program.gates.iter().enumerate() {
        let base = gate.mode().and_then(|m| bases.get(&m).copied());
        match gate_segment(k, gate, report.steps[k].frame_offset, base, &cctx, cfg)? {
            Some(seg) => schedule.push_sequential(seg),
            None => {
                if let GateKind::Idle { duration } = gate.kind {
                    schedule.push_idle(duration);
                }
            }
        }
    }
    schedule.check()?;
    Ok(CompiledProgram { program: program.clone(), schedule, report, context: cctx })
}
