//! Pulse envelopes and sequential time-domain schedules.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::TWO_PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Smooth bump ramps of length `ramp` around a flat top.
    BumpFlatTop { ramp: f64 },
    /// sin² ramps of length `ramp` around a flat top.
    Sin2FlatTop { ramp: f64 },
    /// Gaussian of width `sigma`, truncated to `n_sigma`·σ and offset to zero at the edges.
    Gaussian { sigma: f64, n_sigma: f64 },
    Constant,
}

/// Real envelope ε(t) = amplitude·s(t) on [0, duration], zero outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub amplitude: f64,
    pub duration: f64,
}

/// ∫_{-1}^{0} exp(2 + 2/(u²−1)) du, the bump ramp area per unit ramp time.
fn bump_ramp_area() -> f64 {
    static AREA: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *AREA.get_or_init(|| simpson(|u| bump_unit(u), -1.0, 0.0, 20_000))
}

fn bump_unit(u: f64) -> f64 {
    let d = u * u - 1.0;
    if d >= 0.0 {
        0.0
    } else {
        (2.0 + 2.0 / d).exp()
    }
}

fn bump_unit_derivative(u: f64) -> f64 {
    let d = u * u - 1.0;
    if d >= 0.0 {
        0.0
    } else {
        bump_unit(u) * (-4.0 * u / (d * d))
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

impl Envelope {
    pub fn constant(amplitude: f64, duration: f64) -> Result<Self> {
        Self::build(EnvelopeKind::Constant, amplitude, duration)
    }

    pub fn build(kind: EnvelopeKind, amplitude: f64, duration: f64) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return invalid("envelope amplitude must be >= 0");
        }
        if !(duration >= 0.0) {
            return invalid("envelope duration must be >= 0");
        }
        match kind {
            EnvelopeKind::BumpFlatTop { ramp } | EnvelopeKind::Sin2FlatTop { ramp } => {
                if !(ramp > 0.0) || 2.0 * ramp > duration * (1.0 + 1e-12) {
                    return invalid(format!("ramp {ramp:e} must satisfy 0 < 2τ <= T = {duration:e}"));
                }
            }
            EnvelopeKind::Gaussian { sigma, n_sigma } => {
                if !(sigma > 0.0) || !(n_sigma > 0.0) {
                    return invalid("gaussian sigma and n_sigma must be > 0");
                }
            }
            EnvelopeKind::Constant => {}
        }
        Ok(Self { kind, amplitude, duration })
    }

    /// Normalized shape s(t) ∈ [0, 1].
    pub fn shape(&self, t: f64) -> f64 {
        let big_t = self.duration;
        if t < 0.0 || t > big_t {
            return 0.0;
        }
        match self.kind {
            EnvelopeKind::Constant => 1.0,
            EnvelopeKind::BumpFlatTop { ramp } => {
                if t <= ramp {
                    bump_unit((t - ramp) / ramp)
                } else if t >= big_t - ramp {
                    bump_unit((t - big_t + ramp) / ramp)
                } else {
                    1.0
                }
            }
            EnvelopeKind::Sin2FlatTop { ramp } => {
                if t <= ramp {
                    (0.5 * std::f64::consts::PI * t / ramp).sin().powi(2)
                } else if t >= big_t - ramp {
                    (0.5 * std::f64::consts::PI * (big_t - t) / ramp).sin().powi(2)
                } else {
                    1.0
                }
            }
            EnvelopeKind::Gaussian { sigma, .. } => {
                let half = big_t / 2.0;
                let edge = (-(half * half) / (2.0 * sigma * sigma)).exp();
                let x = t - half;
                ((-(x * x) / (2.0 * sigma * sigma)).exp() - edge) / (1.0 - edge)
            }
        }
    }

    /// ds/dt.
    pub fn shape_derivative(&self, t: f64) -> f64 {
        let big_t = self.duration;
        if t < 0.0 || t > big_t {
            return 0.0;
        }
        match self.kind {
            EnvelopeKind::Constant => 0.0,
            EnvelopeKind::BumpFlatTop { ramp } => {
                if t <= ramp {
                    bump_unit_derivative((t - ramp) / ramp) / ramp
                } else if t >= big_t - ramp {
                    bump_unit_derivative((t - big_t + ramp) / ramp) / ramp
                } else {
                    0.0
                }
            }
            EnvelopeKind::Sin2FlatTop { ramp } => {
                let w = 0.5 * std::f64::consts::PI / ramp;
                if t <= ramp {
                    w * (2.0 * w * t).sin()
                } else if t >= big_t - ramp {
                    -w * (2.0 * w * (big_t - t)).sin()
                } else {
                    0.0
                }
            }
            EnvelopeKind::Gaussian { sigma, .. } => {
                let half = big_t / 2.0;
                let edge = (-(half * half) / (2.0 * sigma * sigma)).exp();
                let x = t - half;
                -x / (sigma * sigma) * (-(x * x) / (2.0 * sigma * sigma)).exp() / (1.0 - edge)
            }
        }
    }

    /// ε(t).
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * self.shape(t)
    }

    /// ∫ s(t) dt over the pulse.
    pub fn shape_area(&self) -> f64 {
        match self.kind {
            EnvelopeKind::Constant => self.duration,
            EnvelopeKind::BumpFlatTop { ramp } => self.duration - 2.0 * ramp + 2.0 * ramp * bump_ramp_area(),
            EnvelopeKind::Sin2FlatTop { ramp } => self.duration - ramp,
            EnvelopeKind::Gaussian { .. } => simpson(|t| self.shape(t), 0.0, self.duration, 4000),
        }
    }

    /// ∫ ε(t) dt.
    pub fn area(&self) -> f64 {
        self.amplitude * self.shape_area()
    }

    /// Change the duration of a flat-top envelope so that ∫ s dt = `area`.
    pub fn with_shape_area(&self, area: f64) -> Result<Self> {
        let duration = match self.kind {
            EnvelopeKind::Constant => area,
            EnvelopeKind::BumpFlatTop { ramp } => area + 2.0 * ramp * (1.0 - bump_ramp_area()),
            EnvelopeKind::Sin2FlatTop { ramp } => area + ramp,
            EnvelopeKind::Gaussian { .. } => return invalid("gaussian envelopes have a fixed duration"),
        };
        Self::build(self.kind, self.amplitude, duration)
    }
}

/// Bump flat-top envelope with peak ε_max, ramp τ and total length T.
pub fn bump_envelope(eps_max: f64, tau: f64, big_t: f64) -> Result<Envelope> {
    if !(tau > 0.0) || 2.0 * tau > big_t {
        return invalid(format!("bump envelope needs 0 < 2τ <= T (τ = {tau:e}, T = {big_t:e})"));
    }
    Envelope::build(EnvelopeKind::BumpFlatTop { ramp: tau }, eps_max, big_t)
}

/// sin² flat-top envelope.
pub fn sin2_envelope(eps_max: f64, tau: f64, big_t: f64) -> Result<Envelope> {
    Envelope::build(EnvelopeKind::Sin2FlatTop { ramp: tau }, eps_max, big_t)
}

/// Unit-amplitude truncated Gaussian of total length n_σ·σ.
pub fn gaussian_envelope(sigma: f64, n_sigma: f64) -> Result<Envelope> {
    Envelope::build(EnvelopeKind::Gaussian { sigma, n_sigma }, 1.0, sigma * n_sigma)
}

/// t = fraction·π / (2 g_sb √(n+1)).
pub fn pi_duration(gsb: f64, n: usize, fraction: f64) -> Result<f64> {
    if !(gsb > 0.0) {
        return invalid("sideband rate must be > 0");
    }
    Ok(fraction * std::f64::consts::PI / (2.0 * gsb * ((n + 1) as f64).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Channel {
    TransmonGe,
    TransmonEf,
    TransmonGf,
    Sideband { mode: usize },
    Displacement { mode: usize },
    Readout,
}

/// Simulation metadata carried alongside each physical segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct SegmentMeta {
    /// Index of the abstract gate this segment realizes.
    pub gate_index: usize,
    /// Peak coupling rate in rad/s (Rabi Ω/2 for transmon pulses, g_sb for sidebands,
    /// reset rate for dissipative segments).
    pub rate: f64,
    /// Carrier offset from the nominal resonance of the addressed transition.
    pub frame_offset: f64,
    /// Displacement amplitude for displacement segments (real, imaginary).
    pub alpha: (f64, f64),
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub channel: Channel,
    pub carrier: f64,
    pub phase: f64,
    pub envelope: Envelope,
    pub start: f64,
    pub meta: SegmentMeta,
}

impl PulseSegment {
    pub fn end(&self) -> f64 {
        self.start + self.envelope.duration
    }
}

/// Ordered list of segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Schedule {
    pub segments: Vec<PulseSegment>,
    pub total_duration: f64,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a segment immediately after the current end.
    pub fn push_sequential(&mut self, mut seg: PulseSegment) {
        seg.start = self.total_duration;
        self.total_duration = seg.end();
        self.segments.push(seg);
    }

    /// Advance time without any segment.
    pub fn push_idle(&mut self, duration: f64) {
        self.total_duration += duration.max(0.0);
    }

    /// Add a segment at an explicit start time, rejecting same-channel overlap.
    pub fn insert(&mut self, seg: PulseSegment) -> Result<()> {
        if seg.start < 0.0 {
            return invalid("segment start must be >= 0");
        }
        for s in self.segments.iter().filter(|s| s.channel == seg.channel) {
            if overlaps(s, &seg) {
                return invalid(format!("segments overlap on channel {:?} at t = {:e}", seg.channel, seg.start));
            }
        }
        self.total_duration = self.total_duration.max(seg.end());
        self.segments.push(seg);
        self.segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(())
    }

    /// Verify no two segments on one channel overlap and the total duration is consistent.
    pub fn check(&self) -> Result<()> {
        for (i, a) in self.segments.iter().enumerate() {
            if a.start < 0.0 {
                return invalid("segment start must be >= 0");
            }
            for b in &self.segments[i + 1..] {
                if a.channel == b.channel && overlaps(a, b) {
                    return invalid(format!("segments overlap on channel {:?}", a.channel));
                }
            }
        }
        let end = self.segments.iter().map(|s| s.end()).fold(0.0, f64::max);
        if end > self.total_duration * (1.0 + 1e-12) + 1e-18 {
            return invalid("total_duration shorter than the last segment");
        }
        Ok(())
    }

    /// True when no two segments overlap in time on any channels.
    pub fn is_sequential(&self) -> bool {
        self.segments.windows(2).all(|w| w[0].end() <= w[1].start * (1.0 + 1e-12) + 1e-18)
    }

    pub fn to_json(&self) -> Result<String> {
        let export = ScheduleExport::from(self);
        Ok(serde_json::to_string_pretty(&export)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let export: ScheduleExport = serde_json::from_str(text)?;
        Ok(export.into())
    }
}

fn overlaps(a: &PulseSegment, b: &PulseSegment) -> bool {
    let tol = 1e-15;
    a.start < b.end() - tol && b.start < a.end() - tol
}

/// Hz/seconds view of a schedule for file export.
#[derive(Serialize, Deserialize)]
struct ScheduleExport {
    schema: String,
    total_duration_s: f64,
    segments: Vec<SegmentExport>,
}

#[derive(Serialize, Deserialize)]
struct SegmentExport {
    channel: Channel,
    start_s: f64,
    duration_s: f64,
    carrier_hz: f64,
    phase_rad: f64,
    envelope: EnvelopeKind,
    amplitude_hz: f64,
    rate_hz: f64,
    frame_offset_hz: f64,
    alpha: (f64, f64),
    gate_index: usize,
    label: String,
}

impl From<&Schedule> for ScheduleExport {
    fn from(s: &Schedule) -> Self {
        let segments = s
            .segments
            .iter()
            .map(|g| SegmentExport {
                channel: g.channel,
                start_s: g.start,
                duration_s: g.envelope.duration,
                carrier_hz: g.carrier / TWO_PI,
                phase_rad: g.phase,
                envelope: g.envelope.kind,
                amplitude_hz: g.envelope.amplitude / TWO_PI,
                rate_hz: g.meta.rate / TWO_PI,
                frame_offset_hz: g.meta.frame_offset / TWO_PI,
                alpha: g.meta.alpha,
                gate_index: g.meta.gate_index,
                label: g.meta.label.clone(),
            })
            .collect();
        Self { schema: "schedule/v1".into(), total_duration_s: s.total_duration, segments }
    }
}

impl From<ScheduleExport> for Schedule {
    fn from(e: ScheduleExport) -> Self {
        let segments = e
            .segments
            .into_iter()
            .map(|g| PulseSegment {
                channel: g.channel,
                carrier: g.carrier_hz * TWO_PI,
                phase: g.phase_rad,
                envelope: Envelope { kind: g.envelope, amplitude: g.amplitude_hz * TWO_PI, duration: g.duration_s },
                start: g.start_s,
                meta: SegmentMeta {
                    gate_index: g.gate_index,
                    rate: g.rate_hz * TWO_PI,
                    frame_offset: g.frame_offset_hz * TWO_PI,
                    alpha: g.alpha,
                    label: g.label,
                },
            })
            .collect();
        Schedule { segments, total_duration: e.total_duration_s }
    }
}
