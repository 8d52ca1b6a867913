//! Sequence generators for the encoding, preparation and reset protocols.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use super::compile::{compile, gate_segment, sideband_base, CompileConfig};
use super::gates::{AbstractGate, BasisLabel, GateKind, ProgramTarget, SequenceProgram, TargetCase, Transition};
use super::simulate::EffectiveModel;
use super::tracker::{compensate_phases, derive_shelving, validate_program, Branches, Tracker};
use super::SynthesisContext;
use crate::dynamics::{CollapseOptions, CollapseSet};
use crate::error::{invalid, Error, Result};
use crate::hilbert::DensityMatrix;
use crate::integrate::OdeOptions;
use crate::linalg::{self, c, cis, CMat, ONE, ZERO};
use crate::pulse::PulseSegment;
use crate::C64;

/// Photon-number-selective sideband amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PNSSolution {
    /// Rate of the resonant |f,n1⟩–|g,n1+1⟩ transition (rad/s).
    pub gsb1: f64,
    pub n1: usize,
    pub n2: usize,
    /// Number of full detuned cycles of the |f,n2⟩–|g,n2+1⟩ pair.
    pub m: usize,
    /// π time of the resonant pair, π/(2 g_sb1).
    pub pi_time: f64,
    /// Δ = (n2 − n1)χ_f.
    pub detuning: f64,
    /// Phase δT/2 picked up by the returning pair: |f,n2⟩ → (−1)^m e^{+iδT/2},
    /// |g,n2+1⟩ → (−1)^m e^{−iδT/2}.
    pub residual_phase: f64,
}

/// g_sb1 = (n2 − n1)|χ_f| / (2√(4m² − (n2+1)/(n1+1))), driving the lower pair on resonance.
pub fn pns_amplitude(n1: usize, n2: usize, m: usize, chi_f: f64) -> Result<PNSSolution> {
    if n2 <= n1 {
        return invalid(format!("PNS needs n2 > n1, got n1 = {n1}, n2 = {n2}"));
    }
    if m == 0 {
        return invalid("PNS multiple m must be >= 1");
    }
    if chi_f == 0.0 || !chi_f.is_finite() {
        return Err(Error::Infeasible("χ_f = 0 gives no photon-number selectivity".into()));
    }
    let ratio = (n2 + 1) as f64 / (n1 + 1) as f64;
    let arg = 4.0 * (m * m) as f64 - ratio;
    if !(arg > 0.0) {
        return Err(Error::Infeasible(format!("4m² − (n2+1)/(n1+1) = {arg} ≤ 0 for m = {m}")));
    }
    let root = arg.sqrt();
    let gsb1 = (n2 - n1) as f64 * chi_f.abs() / (2.0 * root);
    Ok(PNSSolution {
        gsb1,
        n1,
        n2,
        m,
        pi_time: PI / (2.0 * gsb1),
        detuning: (n2 - n1) as f64 * chi_f,
        residual_phase: chi_f.signum() * 0.5 * PI * root,
    })
}

/// Smallest m with 4m² > (n2+1)/(n1+1).
fn minimal_pns_multiple(n1: usize, n2: usize) -> usize {
    let ratio = (n2 + 1) as f64 / (n1 + 1) as f64;
    (1..).find(|&m| 4.0 * (m * m) as f64 > ratio).unwrap()
}

/// Fix drive phases against the target, validate, and record the shelving
/// pulses the tracker finds necessary.
pub fn finalize(program: SequenceProgram, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    let mut prog = compensate_phases(&program, ctx)?;
    let report = validate_program(&prog, ctx)?;
    let inputs: Vec<Branches> = report.inputs.iter().map(|l| BTreeMap::from([(l.clone(), ONE)])).collect();
    prog.shelving = derive_shelving(&prog, &report.steps, &inputs);
    Ok(prog)
}

fn check_mode(ctx: &SynthesisContext, mode: usize) -> Result<()> {
    if mode >= ctx.params.n_modes() {
        return Err(Error::SubsystemOutOfRange { index: mode, count: ctx.params.n_modes() });
    }
    Ok(())
}

fn check_photons(ctx: &SynthesisContext, n: usize) -> Result<()> {
    if n >= ctx.cutoff {
        return Err(Error::Truncation(format!("photon number {n} needs cutoff > {n}, have {}", ctx.cutoff)));
    }
    Ok(())
}

/// |g,0⟩ → |g,n⟩ with n rounds of π_ge, π_ef, sideband(k).
pub fn fock_prep(n: usize, mode: usize, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    check_mode(ctx, mode)?;
    check_photons(ctx, n)?;
    let mut p = SequenceProgram::new(vec![mode], format!("Fock state |{n}> in mode {mode}"));
    for k in 0..n {
        p.push(AbstractGate::pi_ge());
        p.push(AbstractGate::pi_ef());
        p.push(AbstractGate::sideband(mode, k));
    }
    p.target = Some(ProgramTarget::single(0, vec![(BasisLabel::new(0, vec![n]), ONE)]));
    finalize(p, ctx)
}

/// (cos(θ/2)|g⟩ + e^{iφ} sin(θ/2)|e⟩)|0⟩ → |g⟩(cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|n⟩),
/// parking the vacuum branch in |e⟩ while the other branch climbs.
pub fn vacuum_fock_superposition(n: usize, theta: f64, phi: f64, mode: usize, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    if n == 0 {
        return invalid("vacuum-Fock superposition needs n >= 1");
    }
    check_mode(ctx, mode)?;
    check_photons(ctx, n)?;
    let mut p = SequenceProgram::new(vec![mode], format!("vacuum-Fock superposition |0>,|{n}> (θ = {theta}, φ = {phi}) in mode {mode}"));
    p.push(AbstractGate::rotation(Transition::Ge, theta, phi));
    p.push(AbstractGate::pi_ef());
    for k in 0..n - 1 {
        p.push(AbstractGate::pi_ge());
        p.push(AbstractGate::sideband(mode, k));
        p.push(AbstractGate::pi_ge());
        p.push(AbstractGate::pi_ef());
    }
    p.push(AbstractGate::sideband(mode, n - 1));
    let (cs, sn) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let mut out = vec![];
    if cs.abs() > 1e-12 {
        out.push((BasisLabel::new(0, vec![0]), c(cs, 0.0)));
    }
    if sn.abs() > 1e-12 {
        out.push((BasisLabel::new(0, vec![n]), cis(phi) * sn));
    }
    p.target = Some(ProgramTarget::single(0, out));
    finalize(p, ctx)
}

/// {|g⟩, |e⟩} → {|N,0⟩, |0,N⟩} on (mode1, mode2).
pub fn noon_encode(n: usize, mode1: usize, mode2: usize, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    if n == 0 {
        return invalid("NOON encoding needs N >= 1");
    }
    if mode1 == mode2 {
        return invalid("NOON encoding needs two distinct modes");
    }
    check_mode(ctx, mode1)?;
    check_mode(ctx, mode2)?;
    check_photons(ctx, n)?;
    let mut p = SequenceProgram::new(vec![mode1, mode2], format!("NOON encoder N = {n} on modes ({mode1}, {mode2})"));
    for k in 0..n {
        p.push(AbstractGate::pi_ef());
        p.push(AbstractGate::pi_ge());
        p.push(AbstractGate::sideband(mode2, k));
        p.push(AbstractGate::pi_ef());
        if k + 1 < n {
            p.push(AbstractGate::pi_ge());
        }
        p.push(AbstractGate::sideband(mode1, k));
    }
    p.target = Some(ProgramTarget {
        cases: vec![
            TargetCase::new(0, vec![(BasisLabel::new(0, vec![n, 0]), ONE)]),
            TargetCase::new(1, vec![(BasisLabel::new(0, vec![0, n]), ONE)]),
        ],
    });
    finalize(p, ctx)
}

/// Decoder: the encoder reversed with every rotation inverted.
pub fn noon_decode(n: usize, mode1: usize, mode2: usize, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    let mut p = noon_encode(n, mode1, mode2, ctx)?.inverse()?;
    p.description = format!("NOON decoder N = {n} on modes ({mode1}, {mode2})");
    Ok(p)
}

/// u|g⟩ + v|e⟩ → |g⟩(u|2⟩ + v(|0⟩ + |4⟩)/√2), 18 gates with two PNS sidebands.
pub fn binomial_encode(mode: usize, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    check_mode(ctx, mode)?;
    if ctx.cutoff < 5 {
        return Err(Error::Truncation(format!("binomial encoding needs cutoff >= 5, have {}", ctx.cutoff)));
    }
    let (ge, ef) = (AbstractGate::pi_ge(), AbstractGate::pi_ef());
    let sb = |n| AbstractGate::sideband(mode, n);
    let gates = vec![
        ef,
        ge,
        sb(0),
        ge,
        ef,
        ge,
        AbstractGate::sideband_fraction(mode, 1, 0.5),
        ge,
        ef,
        sb(2),
        ge,
        sb(0),
        ef,
        AbstractGate::pns(mode, 0, 3, 2),
        ge,
        sb(3),
        ef,
        AbstractGate::pns(mode, 1, 3, 1),
    ];
    let mut p = SequenceProgram::new(vec![mode], format!("binomial encoder on mode {mode}"));
    gates.into_iter().for_each(|g| {
        p.push(g);
    });
    let h = c(FRAC_1_SQRT_2, 0.0);
    p.target = Some(ProgramTarget {
        cases: vec![
            TargetCase::new(0, vec![(BasisLabel::new(0, vec![2]), ONE)]),
            TargetCase::new(1, vec![(BasisLabel::new(0, vec![0]), h), (BasisLabel::new(0, vec![4]), h)]),
        ],
    });
    finalize(p, ctx)
}

/// {|g⟩, |e⟩} → {|n⟩, |p⟩} over several modes, found by breadth-first search over
/// the ideal alphabet with forward-only photon moves. Only the last gate may be
/// photon-number selective.
pub fn multimode_fock_encode(n_vec: &[usize], p_vec: &[usize], modes: &[usize], ctx: &SynthesisContext) -> Result<SequenceProgram> {
    if n_vec.len() != p_vec.len() || n_vec.len() != modes.len() || modes.is_empty() {
        return invalid("photon vectors and mode list must have the same nonzero length");
    }
    if n_vec == p_vec {
        return invalid("the two target Fock states must differ");
    }
    for &m in modes {
        check_mode(ctx, m)?;
    }
    let mut seen = HashSet::new();
    if !modes.iter().all(|m| seen.insert(*m)) {
        return invalid("modes must be distinct");
    }
    for &x in n_vec.iter().chain(p_vec) {
        check_photons(ctx, x)?;
    }
    let n_tot: usize = n_vec.iter().chain(p_vec).sum();
    let goal = [BasisLabel::new(0, n_vec.to_vec()), BasisLabel::new(0, p_vec.to_vec())];
    let targets = [n_vec, p_vec];
    let shell = SequenceProgram::new(modes.to_vec(), "");
    let tracker = Tracker { ctx, modes: &shell.modes, exact: false };

    let start = [BasisLabel::vacuum(0, modes.len()), BasisLabel::vacuum(1, modes.len())];
    let mut queue = VecDeque::from([(start.clone(), Vec::<AbstractGate>::new())]);
    let mut visited = HashSet::from([start]);
    let max_depth = 4 * n_tot + 8;
    let mut pns_failure: Option<Error> = None;
    while let Some((state, path)) = queue.pop_front() {
        if state == goal {
            let mut p = SequenceProgram::new(modes.to_vec(), format!("multimode Fock encoder {n_vec:?} / {p_vec:?} on modes {modes:?}"));
            path.into_iter().for_each(|g| {
                p.push(g);
            });
            p.target = Some(ProgramTarget {
                cases: vec![
                    TargetCase::new(0, vec![(goal[0].clone(), ONE)]),
                    TargetCase::new(1, vec![(goal[1].clone(), ONE)]),
                ],
            });
            return finalize(p, ctx);
        }
        if path.len() >= max_depth {
            continue;
        }
        let mut moves = vec![AbstractGate::pi_ge(), AbstractGate::pi_ef()];
        for (b, lab) in state.iter().enumerate() {
            if lab.level != 2 {
                continue;
            }
            for (i, &m) in modes.iter().enumerate() {
                if lab.photons[i] < targets[b][i] {
                    moves.push(AbstractGate::sideband(m, lab.photons[i]));
                }
            }
        }
        // final photon-number-selective step
        for (b, lab) in state.iter().enumerate() {
            let other = &state[1 - b];
            if lab.level != 2 || *other != goal[1 - b] {
                continue;
            }
            for (i, &m) in modes.iter().enumerate() {
                let n1 = lab.photons[i];
                if n1 + 1 != targets[b][i] || other.photons[i] == 0 {
                    continue;
                }
                let n2 = other.photons[i] - 1;
                let same_rest = (0..modes.len()).all(|j| j == i || lab.photons[j] == other.photons[j]);
                if n2 > n1 && same_rest {
                    let mm = minimal_pns_multiple(n1, n2);
                    match pns_amplitude(n1, n2, mm, ctx.params.chi_f[m]) {
                        Ok(_) => moves.push(AbstractGate::pns(m, n1, n2, mm)),
                        Err(e) => pns_failure = Some(e),
                    }
                }
            }
        }
        for gate in moves {
            let mut branches: Vec<Branches> = state.iter().map(|l| BTreeMap::from([(l.clone(), ONE)])).collect();
            if tracker.apply(path.len(), &gate, &mut branches).is_err() {
                continue;
            }
            let labels: Vec<BasisLabel> = branches.iter().filter_map(|b| b.keys().next().cloned()).collect();
            if labels.len() != 2 || branches.iter().any(|b| b.len() != 1) {
                continue;
            }
            let next = [labels[0].clone(), labels[1].clone()];
            let photons = |s: &[BasisLabel; 2]| -> usize { s.iter().map(|l| l.photons.iter().sum::<usize>()).sum() };
            if gate.is_sideband() && photons(&next) != photons(&state) + 1 {
                continue;
            }
            if next.iter().zip(&targets).any(|(l, t)| l.photons.iter().zip(t.iter()).any(|(a, b)| a > b)) {
                continue;
            }
            if matches!(gate.kind, GateKind::PnsSideband { .. }) && next != goal {
                continue;
            }
            if visited.insert(next.clone()) {
                let mut p2 = path.clone();
                p2.push(gate);
                queue.push_back((next, p2));
            }
        }
    }
    Err(pns_failure.unwrap_or_else(|| Error::Infeasible(format!("no collision-free sequence reaches {n_vec:?} / {p_vec:?}"))))
}

/// Law–Eberly preparation of Σ c_n |n⟩: a backward pass removes one photon at a
/// time with the exact effective-model propagators, and the program is the
/// reverse. The g–f rotation is realized as π_ef⁻¹ · R_ge(θ, φ) · π_ef.
pub fn law_eberly(target: &[C64], mode: usize, ctx: &SynthesisContext, cfg: &CompileConfig) -> Result<SequenceProgram> {
    check_mode(ctx, mode)?;
    let norm = target.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return invalid("Law-Eberly target has zero norm");
    }
    if target.len() > ctx.cutoff {
        return Err(Error::Truncation(format!("target length {} exceeds cutoff {}", target.len(), ctx.cutoff)));
    }
    let coeffs: Vec<C64> = target.iter().map(|a| a / norm).collect();
    let top = coeffs.iter().rposition(|a| a.norm() > 1e-12).unwrap();
    check_photons(ctx, top)?;
    let model = EffectiveModel::new(ctx, &[mode])?;
    let idx = |level: usize, n: usize| model.space.index(level, &[n]);
    let mut psi = model.vector(&coeffs.iter().enumerate().map(|(n, a)| (BasisLabel::new(0, vec![n]), *a)).collect::<Vec<_>>())?;
    let base = sideband_base(mode, ctx, cfg, None)?;
    let seg_of = |gate: &AbstractGate, offset: Option<f64>| -> Result<PulseSegment> {
        gate_segment(0, gate, offset, Some(base), ctx, cfg)?.ok_or_else(|| Error::Validation("gate has no segment".into()))
    };
    let modes = [mode];
    let tol = 1e-12;
    let mut groups: Vec<Vec<AbstractGate>> = Vec::new();
    for n in (1..=top).rev() {
        // remove |g,n⟩ with a sideband on (f,n−1)–(g,n)
        let (af, ag) = (psi[idx(2, n - 1)?], psi[idx(0, n)?]);
        if ag.norm() > tol {
            let theta = 2.0 * ag.norm().atan2(af.norm());
            let phase = if af.norm() > tol { af.arg() } else { 0.0 } - ag.arg() - 0.5 * PI;
            let gate = AbstractGate::sideband_fraction(mode, n - 1, theta / PI).with_phase(phase);
            let offset = ctx.frame_energy(&modes, 2, &[n - 1]) - ctx.frame_energy(&modes, 0, &[n]);
            let u = model.segment_unitary(&seg_of(&gate, Some(offset))?)?;
            psi = u.adjoint() * psi;
            let left = psi[idx(0, n)?].norm();
            if left > 1e-8 {
                return Err(Error::NonConvergence { iterations: top - n + 1, residual: left });
            }
            groups.push(vec![gate]);
        }
        // remove |f,n−1⟩ with a g–f rotation
        let (ag, af) = (psi[idx(0, n - 1)?], psi[idx(2, n - 1)?]);
        if af.norm() > tol {
            let theta = 2.0 * af.norm().atan2(ag.norm());
            let phase = af.arg() - if ag.norm() > tol { ag.arg() } else { 0.0 } + PI;
            let trio = vec![
                AbstractGate::pi_ef().with_phase(PI),
                AbstractGate::rotation(Transition::Ge, theta, phase),
                AbstractGate::pi_ef(),
            ];
            for g in trio.iter().rev() {
                psi = model.segment_unitary(&seg_of(g, None)?)?.adjoint() * psi;
            }
            let left = psi[idx(2, n - 1)?].norm();
            if left > 1e-8 {
                return Err(Error::NonConvergence { iterations: top - n + 1, residual: left });
            }
            groups.push(trio);
        }
    }
    let ground = psi[idx(0, 0)?].norm();
    if (ground - 1.0).abs() > 1e-8 {
        return Err(Error::NonConvergence { iterations: top, residual: 1.0 - ground });
    }
    let mut p = SequenceProgram::new(vec![mode], format!("Law-Eberly preparation on mode {mode}"));
    p.detuned_pairs = true;
    for g in groups.into_iter().rev().flatten() {
        p.push(g);
    }
    let out = coeffs.iter().enumerate().filter(|(_, a)| a.norm() > 1e-12).map(|(n, a)| (BasisLabel::new(0, vec![n]), *a)).collect();
    p.target = Some(ProgramTarget::single(0, out));
    validate_program(&p, ctx)?;
    Ok(p)
}

/// One row of the Law–Eberly vs shelving-protocol comparison for (|0⟩ + |n⟩)/√2.
#[derive(Clone, Debug, Serialize)]
pub struct PrepComparison {
    pub n: usize,
    pub law_eberly_sidebands: usize,
    pub law_eberly_duration: f64,
    pub encoding_sidebands: usize,
    pub encoding_duration: f64,
}

pub fn law_eberly_table(n_max: usize, mode: usize, ctx: &SynthesisContext, cfg: &CompileConfig) -> Result<Vec<PrepComparison>> {
    (1..=n_max)
        .map(|n| {
            let mut t = vec![ZERO; n + 1];
            t[0] = c(FRAC_1_SQRT_2, 0.0);
            t[n] = c(FRAC_1_SQRT_2, 0.0);
            let le = law_eberly(&t, mode, ctx, cfg)?;
            let enc = vacuum_fock_superposition(n, PI / 2.0, 0.0, mode, ctx)?;
            Ok(PrepComparison {
                n,
                law_eberly_sidebands: le.sideband_count(),
                law_eberly_duration: compile(&le, ctx, cfg, None)?.schedule.total_duration,
                encoding_sidebands: enc.sideband_count(),
                encoding_duration: compile(&enc, ctx, cfg, None)?.schedule.total_duration,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResetOptions {
    pub cycles: usize,
    /// Length of each f → g reset segment; `None` uses 8 readout lifetimes.
    pub reset_duration: Option<f64>,
}

impl Default for ResetOptions {
    fn default() -> Self {
        Self { cycles: 1, reset_duration: None }
    }
}

/// Photon-by-photon cooling: per cycle, π_ef + reset to clear a thermal |e⟩
/// branch, then for k = N_max..1 a sideband |g,k⟩ → |f,k−1⟩ followed by a reset.
pub fn sequential_reset(n_max: usize, mode: usize, opts: &ResetOptions, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    if n_max == 0 {
        return invalid("sequential reset needs N_max >= 1");
    }
    check_mode(ctx, mode)?;
    check_photons(ctx, n_max)?;
    let t_reset = opts.reset_duration.unwrap_or(8.0 / ctx.params.readout_kappa);
    let mut p = SequenceProgram::new(vec![mode], format!("sequential reset of mode {mode} from N = {n_max}, {} cycle(s)", opts.cycles));
    for _ in 0..opts.cycles.max(1) {
        p.push(AbstractGate::pi_ef());
        p.push(AbstractGate::reset(t_reset));
        for k in (1..=n_max).rev() {
            p.push(AbstractGate::sideband(mode, k - 1));
            p.push(AbstractGate::reset(t_reset));
        }
    }
    finalize(p, ctx)
}

/// Sideband-contrast thermometer: |f,0⟩–|g,1⟩ oscillations with and without
/// first preparing |f⟩.
#[derive(Clone, Debug, Serialize)]
pub struct ThermalPopulationProtocol {
    pub mode: usize,
    pub durations: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThermalEstimate {
    pub nbar: f64,
    pub full_contrast: f64,
    pub residual_contrast: f64,
}

/// Sweep the sideband over one full |f,0⟩ → |g,1⟩ → |f,0⟩ cycle in `points` steps.
pub fn thermal_population_protocol(mode: usize, ctx: &SynthesisContext, points: usize) -> Result<ThermalPopulationProtocol> {
    check_mode(ctx, mode)?;
    let g0 = ctx.sideband_rate(mode)?;
    let points = points.max(3);
    let t_max = PI / g0;
    Ok(ThermalPopulationProtocol { mode, durations: (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect() })
}

impl ThermalPopulationProtocol {
    /// n̄ ≈ residual contrast / full contrast (first order in n̄).
    pub fn estimate(with_prep: &[f64], without_prep: &[f64]) -> Result<ThermalEstimate> {
        let contrast = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        let full = contrast(with_prep);
        if !(full > 1e-9) {
            return Err(Error::Fit("no oscillation with |f⟩ prepared".into()));
        }
        let residual = contrast(without_prep).max(0.0);
        Ok(ThermalEstimate { nbar: residual / full, full_contrast: full, residual_contrast: residual })
    }

    /// P_f along the sweep with and without the π_ge π_ef preparation,
    /// starting from |g⟩ ⊗ ρ_mode.
    pub fn simulate(&self, ctx: &SynthesisContext, rho_mode: &DensityMatrix, dissipation: bool, opts: &OdeOptions) -> Result<(Vec<f64>, Vec<f64>)> {
        let cutoff = rho_mode.dim();
        let sctx = ctx.clone().with_cutoff(cutoff);
        let model = EffectiveModel::new(&sctx, &[self.mode])?;
        let nt = sctx.transmon_levels;
        let mut g = CMat::zeros(nt, nt);
        g[(0, 0)] = ONE;
        let rho0 = linalg::kron(&g, rho_mode.matrix());
        let cfg = CompileConfig::default();
        let base = sideband_base(self.mode, &sctx, &cfg, None)?;
        let prep = [AbstractGate::pi_ge(), AbstractGate::pi_ef()]
            .iter()
            .map(|gate| model.segment_unitary(&gate_segment(0, gate, None, None, &sctx, &cfg)?.unwrap()))
            .collect::<Result<Vec<_>>>()?;
        let u_prep = &prep[1] * &prep[0];
        let rho_prep = &u_prep * &rho0 * u_prep.adjoint();
        let t_max = *self.durations.last().unwrap_or(&0.0);
        let sweep = AbstractGate::sideband_fraction(self.mode, 0, 1.0);
        let mut seg = gate_segment(0, &sweep, Some(0.0), Some(base), &sctx, &cfg)?.unwrap();
        seg.envelope.duration = t_max;
        let collapse = if dissipation {
            CollapseSet::from_params(&sctx.params, &model.space, &CollapseOptions::all(vec![self.mode]))?
        } else {
            CollapseSet::new()
        };
        let pf_proj = model.space.transmon_projector(2)?;
        let run = |rho: &CMat| -> Result<Vec<f64>> {
            let times: Vec<f64> = self.durations.iter().copied().filter(|&t| t > 0.0).collect();
            let mut out = vec![];
            if self.durations.first() == Some(&0.0) {
                out.push(linalg::trace(&(&pf_proj * rho)).re);
            }
            for r in model.evolve_segment_sampled(&seg, rho, &collapse, &times, opts)? {
                out.push(linalg::trace(&(&pf_proj * &r)).re);
            }
            Ok(out)
        };
        Ok((run(&rho_prep)?, run(&rho0)?))
    }

    /// Simulate a thermal mode with mean occupation `nbar` and estimate it back.
    pub fn simulate_thermal(&self, ctx: &SynthesisContext, nbar: f64, cutoff: usize, dissipation: bool) -> Result<ThermalEstimate> {
        let rho = DensityMatrix::thermal_mode(cutoff, nbar)?;
        let (with, without) = self.simulate(ctx, &rho, dissipation, &OdeOptions::default())?;
        Self::estimate(&with, &without)
    }
}
