//! Encoding protocols as abstract sequence programs, their symbolic
//! validation, and compilation to concrete schedules.
//!
//! Pipeline: a generator builds a [`SequenceProgram`], the tracker fixes its
//! drive phases and validates it, [`compile`] turns it into a [`Schedule`],
//! and [`EffectiveModel`] simulates the schedule in the dispersive frame.
//!
//! [`Schedule`]: crate::pulse::Schedule

mod analysis;
mod compile;
mod gates;
mod protocols;
mod simulate;
mod tracker;

pub use analysis::{
    bell_idle_coherence, budget_channels, cardinal_fidelities, cavity_target, error_budget, fit_exponential_decay, ground_density, idle_modes,
    predicted_bell_coherence_time, run_dissipative, BudgetRow, CardinalResult, RunFidelity,
};
pub use compile::{compile, CalibrationEntry, CompileConfig, CompiledProgram, SidebandCalibration};
pub use gates::{wrap_phase, AbstractGate, BasisLabel, GateKind, ProgramTarget, SequenceProgram, TargetCase, Transition};
pub use protocols::{
    binomial_encode, finalize, fock_prep, law_eberly, law_eberly_table, multimode_fock_encode, noon_decode, noon_encode,
    pns_amplitude, sequential_reset, thermal_population_protocol, vacuum_fock_superposition, PNSSolution, PrepComparison,
    ResetOptions, ThermalEstimate, ThermalPopulationProtocol,
};
pub use simulate::{cardinal_states, EffectiveModel, SimOutcome};
pub use tracker::{
    compensate_phases, derive_shelving, rotation_block, sideband_pair_propagator, track, track_from, validate_program, Branches,
    StepRecord, ValidationReport,
};

use crate::error::{invalid, Error, Result};
use crate::model::{level_chi, SystemParams};

/// Default |f,0⟩–|g,1⟩ sideband rate, 2π × 1 MHz.
pub const DEFAULT_SIDEBAND_RATE: f64 = std::f64::consts::TAU * 1e6;
pub const DEFAULT_CUTOFF: usize = 8;

/// Device parameters plus the synthesis-level choices every generator,
/// the tracker and the compiler share.
#[derive(Clone, Debug)]
pub struct SynthesisContext {
    pub params: SystemParams,
    /// |f,0⟩–|g,1⟩ rate per device mode (rad/s).
    pub sideband_rates: Vec<f64>,
    /// Photon cutoff of every program mode.
    pub cutoff: usize,
    pub transmon_levels: usize,
}

impl SynthesisContext {
    pub fn new(params: SystemParams) -> Self {
        let n = params.n_modes();
        let transmon_levels = params.transmon_dim.max(3);
        Self { params, sideband_rates: vec![DEFAULT_SIDEBAND_RATE; n], cutoff: DEFAULT_CUTOFF, transmon_levels }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_transmon_levels(mut self, levels: usize) -> Self {
        self.transmon_levels = levels;
        self
    }

    pub fn with_sideband_rate(mut self, mode: usize, rate: f64) -> Self {
        if mode < self.sideband_rates.len() {
            self.sideband_rates[mode] = rate;
        }
        self
    }

    pub fn with_uniform_rate(mut self, rate: f64) -> Self {
        self.sideband_rates.iter_mut().for_each(|r| *r = rate);
        self
    }

    pub fn sideband_rate(&self, mode: usize) -> Result<f64> {
        let r = *self
            .sideband_rates
            .get(mode)
            .ok_or(Error::SubsystemOutOfRange { index: mode, count: self.sideband_rates.len() })?;
        if !(r > 0.0) {
            return invalid(format!("sideband rate for mode {mode} must be > 0"));
        }
        Ok(r)
    }

    /// Diagonal energy in the frame of the bare transmon and modes:
    /// Σ_j [χ_{l,j} n_j + (K_j/2) n_j(n_j − 1)] over the program modes.
    pub fn frame_energy(&self, modes: &[usize], level: usize, photons: &[usize]) -> f64 {
        modes
            .iter()
            .zip(photons)
            .map(|(&m, &n)| {
                let nf = n as f64;
                level_chi(&self.params, level, m) * nf + 0.5 * self.params.mode_kerr[m] * nf * (nf - 1.0)
            })
            .sum()
    }
}
