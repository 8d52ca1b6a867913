//! Dissipative evaluation of compiled programs: cardinal-state fidelities,
//! error budgets, and two-mode idle coherence.

use serde::{Deserialize, Serialize};

use super::compile::CompiledProgram;
use super::gates::SequenceProgram;
use super::simulate::{cardinal_states, EffectiveModel, SimOutcome};
use super::SynthesisContext;
use crate::dynamics::{CollapseOptions, CollapseSet, Lindbladian};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fit;
use crate::hilbert::{self, CompositeSpace, DensityMatrix, StateVector};
use crate::integrate::OdeOptions;
use crate::linalg::{self, c, CMat, ONE};
use crate::model::SystemParams;
use crate::C64;

/// Fidelities of one run against a cavity target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFidelity {
    /// Fidelity after keeping only transmon-|g⟩ shots.
    pub postselected: f64,
    /// Fidelity with the transmon traced out.
    pub traced: f64,
    /// Probability the transmon is not in |g⟩.
    pub excluded_fraction: f64,
}

impl RunFidelity {
    pub fn from_outcome(out: &SimOutcome, target: &StateVector) -> Result<Self> {
        Ok(Self {
            postselected: hilbert::fidelity(&out.postselected, target)?,
            traced: hilbert::fidelity(&out.reduced, target)?,
            excluded_fraction: 1.0 - out.p_ground,
        })
    }
}

/// Cavity state the program should produce from (u|g⟩ + v|e⟩)|vac⟩. Only
/// outputs with the transmon back in |g⟩ are allowed.
pub fn cavity_target(program: &SequenceProgram, model: &EffectiveModel, u: C64, v: C64) -> Result<StateVector> {
    let target = program.target.as_ref().ok_or_else(|| Error::Validation("program has no target".into()))?;
    let mut amps = vec![];
    for case in &target.cases {
        if case.input_photons.is_some() {
            return Err(Error::Validation("cavity targets need vacuum inputs".into()));
        }
        let w = match case.input_level {
            0 => u,
            1 => v,
            l => return Err(Error::Validation(format!("input level {l} is not a qubit level"))),
        };
        for (label, a) in &case.output {
            if label.level != 0 {
                return Err(Error::Validation(format!("output {label} leaves the transmon excited")));
            }
            amps.push((label.photons.clone(), a * w));
        }
    }
    model.cavity_vector(&amps)
}

/// Run the compiled schedule from ρ0 and post-process on the transmon.
pub fn run_dissipative(compiled: &CompiledProgram, rho0: &CMat, collapse: &CollapseOptions, opts: &OdeOptions) -> Result<SimOutcome> {
    let model = EffectiveModel::new(&compiled.context, &compiled.program.modes)?;
    let set = CollapseSet::from_params(&compiled.context.params, &model.space, collapse)?;
    let rho = model.evolve_density(&compiled.schedule, rho0, &set, opts)?;
    model.outcome(&rho)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardinalResult {
    pub label: String,
    pub fidelity: RunFidelity,
}

/// Encode the six transmon cardinal states and compare each cavity output
/// with its target. Inputs run on `exec`.
pub fn cardinal_fidelities(compiled: &CompiledProgram, collapse: &CollapseOptions, opts: &OdeOptions, exec: Executor) -> Result<Vec<CardinalResult>> {
    let model = EffectiveModel::new(&compiled.context, &compiled.program.modes)?;
    let set = CollapseSet::from_params(&compiled.context.params, &model.space, collapse)?;
    exec.try_map(&cardinal_states(), |&(label, u, v)| -> Result<CardinalResult> {
        let psi = model.qubit_input(u, v)?;
        let rho0 = &psi * psi.adjoint();
        let rho = model.evolve_density(&compiled.schedule, &rho0, &set, opts)?;
        let target = cavity_target(&compiled.program, &model, u, v)?;
        Ok(CardinalResult { label: label.to_string(), fidelity: RunFidelity::from_outcome(&model.outcome(&rho)?, &target)? })
    })
}

/// One error-budget configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub channels: String,
    /// Mean infidelity over the six cardinal inputs, post-selected on |g⟩.
    pub postselected_infidelity: f64,
    /// Mean infidelity with the transmon traced out.
    pub traced_infidelity: f64,
    pub excluded_fraction: f64,
}

/// Channel sets of the standard error budget, in reporting order.
pub fn budget_channels(modes: &[usize]) -> Vec<(&'static str, CollapseOptions)> {
    let none = CollapseOptions::none(modes.to_vec());
    vec![
        ("none", none.clone()),
        ("transmon decay", CollapseOptions { transmon_decay: true, ..none.clone() }),
        ("transmon dephasing", CollapseOptions { transmon_dephasing: true, ..none.clone() }),
        ("cavity decay", CollapseOptions { mode_decay: true, ..none }),
        ("all", CollapseOptions::all(modes.to_vec())),
    ]
}

pub fn error_budget(compiled: &CompiledProgram, opts: &OdeOptions, exec: Executor) -> Result<Vec<BudgetRow>> {
    budget_channels(&compiled.program.modes)
        .into_iter()
        .map(|(name, ch)| {
            let rows = cardinal_fidelities(compiled, &ch, opts, exec)?;
            let n = rows.len() as f64;
            let mean = |f: fn(&RunFidelity) -> f64| rows.iter().map(|r| f(&r.fidelity)).sum::<f64>() / n;
            Ok(BudgetRow {
                channels: name.to_string(),
                postselected_infidelity: 1.0 - mean(|f| f.postselected),
                traced_infidelity: 1.0 - mean(|f| f.traced),
                excluded_fraction: mean(|f| f.excluded_fraction),
            })
        })
        .collect()
}

/// 2|ρ_{10,01}| of the state (|1,0⟩ + |0,1⟩)/√2 on `modes` left idle for each
/// of `times`, under the device's cavity decay and dephasing.
pub fn bell_idle_coherence(ctx: &SynthesisContext, modes: [usize; 2], times: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
    let small = ctx.clone().with_cutoff(2).with_transmon_levels(2);
    let model = EffectiveModel::new(&small, &modes)?;
    let h = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i10 = model.space.index(0, &[1, 0])?;
    let i01 = model.space.index(0, &[0, 1])?;
    let mut psi = crate::CVec::zeros(model.dim());
    psi[i10] = h;
    psi[i01] = h;
    let mut rho = &psi * psi.adjoint();
    let set = CollapseSet::from_params(&small.params, &model.space, &CollapseOptions::modes_only(modes.to_vec()))?;
    let lind = Lindbladian::new(model.dim(), &set)?;
    let zero = CMat::zeros(model.dim(), model.dim());
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < now {
            return Err(Error::InvalidArgument("idle times must be nondecreasing".into()));
        }
        rho = lind.evolve_static(&zero, &rho, t - now, opts)?;
        now = t;
        out.push(2.0 * rho[(i10, i01)].norm());
    }
    Ok(out)
}

/// Leave a cavity state on device `modes` idle for `t` under mode decay and
/// dephasing.
pub fn idle_modes(rho: &DensityMatrix, params: &SystemParams, modes: &[usize], t: f64, opts: &OdeOptions) -> Result<DensityMatrix> {
    let space = CompositeSpace::new(2, rho.dims().to_vec())?;
    let set = CollapseSet::from_params(params, &space, &CollapseOptions::modes_only(modes.to_vec()))?;
    let g = DensityMatrix::new_unchecked(linalg::diag_real(&[1.0, 0.0]), vec![2])?;
    let full = g.tensor(rho);
    let lind = Lindbladian::new(full.dim(), &set)?;
    let zero = CMat::zeros(full.dim(), full.dim());
    let out = DensityMatrix::new_unchecked(lind.evolve_static(&zero, full.matrix(), t, opts)?, space.dims())?;
    let keep: Vec<usize> = (1..=modes.len()).collect();
    hilbert::partial_trace(&out, &keep)
}

/// Coherence time of the two-mode single-photon Bell state implied by the
/// mode T2 values: 1/(1/T2_a + 1/T2_b).
pub fn predicted_bell_coherence_time(ctx: &SynthesisContext, modes: [usize; 2]) -> f64 {
    let p = &ctx.params;
    1.0 / (1.0 / p.mode_t2[modes[0]] + 1.0 / p.mode_t2[modes[1]])
}

/// Fit y = A e^{−t/τ}; returns (A, τ).
pub fn fit_exponential_decay(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::Fit("need at least three matching samples".into()));
    }
    let span = times.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let res = fit::least_squares(
        |p: &[f64]| times.iter().zip(values).map(|(&t, &y)| p[0] * (-t / (p[1] * span)).exp() - y).collect(),
        &[values[0].max(1e-3), 1.0],
    )?;
    Ok((res.params[0], res.params[1] * span))
}

/// |g⟩⟨g| ⊗ |vac⟩⟨vac| for `model`.
pub fn ground_density(model: &EffectiveModel) -> Result<CMat> {
    let psi = model.qubit_input(ONE, C64::new(0.0, 0.0))?;
    Ok(&psi * psi.adjoint())
}
