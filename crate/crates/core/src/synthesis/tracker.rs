//! Symbolic branch tracking through the gate alphabet, program validation and
//! frame-phase compensation.
//!
//! Branches are sparse amplitude maps over [`BasisLabel`]s. Every gate acts
//! with the same two-level algebra the dense simulator uses, so a program that
//! validates here reproduces its target under ideal unitary simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::gates::{wrap_phase, AbstractGate, BasisLabel, GateKind, SequenceProgram};
use super::protocols::pns_amplitude;
use super::SynthesisContext;
use crate::error::{Error, Result};
use crate::linalg::{c, cis, ONE, ZERO};
use crate::C64;

pub type Branches = BTreeMap<BasisLabel, C64>;

/// Branches with |a|² below this are dropped.
const PRUNE: f64 = 1e-24;
/// Required overlap with the target.
const TARGET_TOL: f64 = 1e-9;
const PHASE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub gate: usize,
    pub name: String,
    /// f-end label of the pair a sideband gate is tuned to.
    pub active: Option<BasisLabel>,
    /// Carrier offset ω_s of a sideband gate relative to the |f,0⟩–|g,1⟩ resonance.
    pub frame_offset: Option<f64>,
    /// Branches parked in |e⟩ (or above f) while a sideband plays.
    pub shelved: Vec<BasisLabel>,
    /// Amplitudes after the gate, one list per input case.
    pub branches: Vec<Vec<(BasisLabel, C64)>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub inputs: Vec<BasisLabel>,
    pub steps: Vec<StepRecord>,
    pub outputs: Vec<Vec<(BasisLabel, C64)>>,
    /// ⟨target|output⟩ per case; empty without a target.
    pub overlaps: Vec<C64>,
    /// min |⟨target|output⟩|², 1 without a target.
    pub fidelity: f64,
    /// Largest deviation of the per-case overlap phases from a common global phase.
    pub phase_spread: f64,
}

impl ValidationReport {
    /// Per-pulse branch table (one row per gate, one column per input).
    pub fn table(&self) -> String {
        let mut s = String::new();
        let fmt_branches = |bs: &[(BasisLabel, C64)]| -> String {
            bs.iter().map(|(l, a)| format!("{l}:{:.3}∠{:+.3}", a.norm(), a.arg())).collect::<Vec<_>>().join(" ")
        };
        let inputs: Vec<String> = self.inputs.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(s, "  # gate                    | inputs: {}", inputs.join(", "));
        for st in &self.steps {
            let cols: Vec<String> = st.branches.iter().map(|b| fmt_branches(b)).collect();
            let _ = writeln!(s, "{:>3} {:<24} | {}", st.gate + 1, st.name, cols.join(" || "));
        }
        s
    }

    /// Frame offset for each gate (sideband gates only).
    pub fn frame_offsets(&self) -> Vec<Option<f64>> {
        self.steps.iter().map(|s| s.frame_offset).collect()
    }
}

fn add(map: &mut Branches, label: BasisLabel, a: C64) {
    *map.entry(label).or_insert(ZERO) += a;
}

fn prune(map: &mut Branches) {
    map.retain(|_, a| a.norm_sqr() > PRUNE);
}

/// Effective-model propagator on one sideband pair (|f,k⟩, |g,k+1⟩) in the
/// dispersive interaction frame: diag(e^{iδT}, 1)·exp(−i[[δ, w], [w̄, 0]]T)
/// with w = Ω e^{iφ}. Returned as [[U_ff, U_fg], [U_gf, U_gg]].
pub fn sideband_pair_propagator(delta: f64, omega: f64, phi: f64, t: f64) -> [[C64; 2]; 2] {
    let w = cis(phi) * omega;
    let lam = (0.25 * delta * delta + omega * omega).sqrt();
    let (cl, sl) = ((lam * t).cos(), (lam * t).sin());
    let sinc = if lam == 0.0 { t } else { sl / lam };
    let pre = cis(-0.5 * delta * t);
    // exp(−iKT) with K = [[δ/2, w], [w̄, −δ/2]]
    let m_ff = pre * (c(cl, 0.0) - c(0.0, sinc * 0.5 * delta));
    let m_gg = pre * (c(cl, 0.0) + c(0.0, sinc * 0.5 * delta));
    let m_fg = pre * c(0.0, -sinc) * w;
    let m_gf = pre * c(0.0, -sinc) * w.conj();
    let ph = cis(delta * t);
    [[ph * m_ff, ph * m_fg], [m_gf, m_gg]]
}

/// Transmon rotation by θ about the axis at phase φ on levels (a, b):
/// |a⟩ → cos(θ/2)|a⟩ − i e^{iφ} sin(θ/2)|b⟩. Returned as [[U_aa, U_ab], [U_ba, U_bb]].
pub fn rotation_block(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let (cs, sn) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    [[c(cs, 0.0), c(0.0, -sn) * cis(-phi)], [c(0.0, -sn) * cis(phi), c(cs, 0.0)]]
}

pub(crate) struct Tracker<'a> {
    pub ctx: &'a SynthesisContext,
    pub modes: &'a [usize],
    pub exact: bool,
}

pub(crate) struct StepInfo {
    active: Option<BasisLabel>,
    frame_offset: Option<f64>,
    shelved: Vec<BasisLabel>,
}

impl StepInfo {
    fn none() -> Self {
        Self { active: None, frame_offset: None, shelved: vec![] }
    }
}

impl Tracker<'_> {
    fn energy(&self, label: &BasisLabel) -> f64 {
        self.ctx.frame_energy(self.modes, label.level, &label.photons)
    }

    /// f-end label of the sideband pair containing `label` for local mode `i`.
    fn pair_of(label: &BasisLabel, i: usize) -> Option<BasisLabel> {
        match label.level {
            2 => Some(label.clone()),
            0 if label.photons[i] >= 1 => {
                let mut p = label.photons.clone();
                p[i] -= 1;
                Some(BasisLabel::new(2, p))
            }
            _ => None,
        }
    }

    fn g_end(f: &BasisLabel, i: usize) -> BasisLabel {
        let mut p = f.photons.clone();
        p[i] += 1;
        BasisLabel::new(0, p)
    }

    pub fn apply(&self, k: usize, gate: &AbstractGate, states: &mut [Branches]) -> Result<StepInfo> {
        let info = match gate.kind {
            GateKind::Rotation { transition, theta } => {
                let (a, b) = transition.levels();
                if b >= self.ctx.transmon_levels {
                    return Err(Error::Truncation(format!("gate {k}: level {b} exceeds the transmon truncation")));
                }
                let u = rotation_block(theta, gate.phase);
                for st in states.iter_mut() {
                    let mut out = Branches::new();
                    for (label, &amp) in st.iter() {
                        let mut other = label.clone();
                        if label.level == a {
                            other.level = b;
                            add(&mut out, label.clone(), u[0][0] * amp);
                            add(&mut out, other, u[1][0] * amp);
                        } else if label.level == b {
                            other.level = a;
                            add(&mut out, other, u[0][1] * amp);
                            add(&mut out, label.clone(), u[1][1] * amp);
                        } else {
                            add(&mut out, label.clone(), amp);
                        }
                    }
                    prune(&mut out);
                    *st = out;
                }
                StepInfo::none()
            }
            GateKind::Sideband { mode, n, fraction } => {
                let g0 = self.ctx.sideband_rate(mode)?;
                let t = fraction * PI / (2.0 * g0 * ((n + 1) as f64).sqrt());
                self.drive_pairs(k, mode, n, None, g0, t, gate.phase, states)?
            }
            GateKind::PnsSideband { mode, n1, n2, m } => {
                let sol = pns_amplitude(n1, n2, m, self.ctx.params.chi_f[mode])?;
                let g0 = sol.gsb1 / ((n1 + 1) as f64).sqrt();
                self.drive_pairs(k, mode, n1, Some(n2), g0, sol.pi_time, gate.phase, states)?
            }
            GateKind::Displacement { re, im, .. } => {
                if re != 0.0 || im != 0.0 {
                    return Err(Error::Validation(format!("gate {k}: displacements are outside the tracked alphabet")));
                }
                StepInfo::none()
            }
            GateKind::Idle { .. } => StepInfo::none(),
            GateKind::Reset { .. } => {
                // population-level: f branches relax to g
                for st in states.iter_mut() {
                    let mut pops: BTreeMap<BasisLabel, (f64, C64)> = BTreeMap::new();
                    for (label, &amp) in st.iter() {
                        let mut l = label.clone();
                        if l.level == 2 {
                            l.level = 0;
                        }
                        let e = pops.entry(l).or_insert((0.0, ZERO));
                        e.0 += amp.norm_sqr();
                        if e.1 == ZERO {
                            e.1 = amp / amp.norm();
                        }
                    }
                    *st = pops.into_iter().map(|(l, (p, ph))| (l, ph * p.sqrt())).collect();
                    prune(st);
                }
                StepInfo::none()
            }
        };
        Ok(info)
    }

    #[allow(clippy::too_many_arguments)]
    fn drive_pairs(
        &self,
        k: usize,
        device_mode: usize,
        n_res: usize,
        partner: Option<usize>,
        g0: f64,
        t: f64,
        phi: f64,
        states: &mut [Branches],
    ) -> Result<StepInfo> {
        let i = self
            .modes
            .iter()
            .position(|&m| m == device_mode)
            .ok_or_else(|| Error::Validation(format!("gate {k}: mode {device_mode} not declared")))?;
        let cutoff = self.ctx.cutoff;
        let mut pairs: BTreeSet<BasisLabel> = BTreeSet::new();
        let mut shelved: BTreeSet<BasisLabel> = BTreeSet::new();
        for st in states.iter() {
            for label in st.keys() {
                match Self::pair_of(label, i) {
                    Some(p) => {
                        pairs.insert(p);
                    }
                    None if label.level != 0 => {
                        shelved.insert(label.clone());
                    }
                    None => {}
                }
            }
        }
        let intended: Vec<&BasisLabel> = pairs.iter().filter(|p| p.photons[i] == n_res).collect();
        if intended.len() > 1 {
            return Err(Error::BranchCollision {
                gate: k,
                detail: format!("sideband resonant with two photon configurations {} and {}", intended[0], intended[1]),
            });
        }
        let active = match intended.first() {
            Some(p) => (*p).clone(),
            None => {
                let mut p = vec![0; self.modes.len()];
                p[i] = n_res;
                BasisLabel::new(2, p)
            }
        };
        let omega_s = self.energy(&active) - self.energy(&Self::g_end(&active, i));
        let mut blocks = Vec::new();
        for p in &pairs {
            let g = Self::g_end(p, i);
            let delta = self.energy(p) - self.energy(&g) - omega_s;
            let omega = g0 * ((p.photons[i] + 1) as f64).sqrt();
            let u = sideband_pair_propagator(delta, omega, phi, t);
            let same_config = p.photons.iter().zip(&active.photons).enumerate().all(|(j, (a, b))| j == i || a == b);
            if p.photons[i] != n_res && !self.exact {
                let is_partner = partner == Some(p.photons[i]) && same_config;
                if !is_partner {
                    let who: Vec<String> = states
                        .iter()
                        .flat_map(|st| st.keys())
                        .filter(|l| Self::pair_of(l, i).as_ref() == Some(p))
                        .map(|l| l.to_string())
                        .collect();
                    return Err(Error::BranchCollision {
                        gate: k,
                        detail: format!(
                            "unshelved branch {} sits on the |f,{}⟩–|g,{}⟩ pair while the drive addresses |f,{n_res}⟩–|g,{}⟩",
                            who.join(", "),
                            p.photons[i],
                            p.photons[i] + 1,
                            n_res + 1
                        ),
                    });
                }
                if u[0][0].norm_sqr() < 1.0 - 1e-9 {
                    return Err(Error::BranchCollision {
                        gate: k,
                        detail: format!("detuned partner pair {p} does not return (|U_ff|² = {:.3e})", u[0][0].norm_sqr()),
                    });
                }
            }
            if p.photons[i] + 1 >= cutoff {
                return Err(Error::Truncation(format!("gate {k}: branch {g} exceeds photon cutoff {cutoff}")));
            }
            blocks.push((p.clone(), g, u));
        }
        for st in states.iter_mut() {
            for (f, g, u) in &blocks {
                let xf = st.get(f).copied().unwrap_or(ZERO);
                let xg = st.get(g).copied().unwrap_or(ZERO);
                if xf == ZERO && xg == ZERO {
                    continue;
                }
                st.insert(f.clone(), u[0][0] * xf + u[0][1] * xg);
                st.insert(g.clone(), u[1][0] * xf + u[1][1] * xg);
            }
            prune(st);
        }
        Ok(StepInfo { active: Some(active), frame_offset: Some(omega_s), shelved: shelved.into_iter().collect() })
    }
}

/// Run `program` on vacuum ⊗ |level⟩ for every level in `inputs`, tracking all
/// cases in lockstep so collisions between cases are caught.
pub fn track(program: &SequenceProgram, ctx: &SynthesisContext, inputs: &[usize]) -> Result<(Vec<StepRecord>, Vec<Branches>)> {
    track_from(program, ctx, inputs.iter().map(|&l| BTreeMap::from([(BasisLabel::vacuum(l, program.modes.len()), ONE)])).collect())
}

fn track_labels(program: &SequenceProgram, ctx: &SynthesisContext, inputs: &[BasisLabel]) -> Result<(Vec<StepRecord>, Vec<Branches>)> {
    track_from(program, ctx, inputs.iter().map(|l| BTreeMap::from([(l.clone(), ONE)])).collect())
}

/// Like [`track`] with explicit initial branch maps.
pub fn track_from(program: &SequenceProgram, ctx: &SynthesisContext, mut states: Vec<Branches>) -> Result<(Vec<StepRecord>, Vec<Branches>)> {
    program.check()?;
    for st in &states {
        for l in st.keys() {
            if l.photons.len() != program.modes.len() || l.level >= ctx.transmon_levels {
                return Err(Error::Validation(format!("input label {l} does not fit the program")));
            }
        }
    }
    let tracker = Tracker { ctx, modes: &program.modes, exact: program.detuned_pairs };
    let mut steps = Vec::with_capacity(program.len());
    for (k, gate) in program.gates.iter().enumerate() {
        let info = tracker.apply(k, gate, &mut states)?;
        steps.push(StepRecord {
            gate: k,
            name: gate.short_name(),
            active: info.active,
            frame_offset: info.frame_offset,
            shelved: info.shelved,
            branches: states.iter().map(|st| st.iter().map(|(l, a)| (l.clone(), *a)).collect()).collect(),
        });
    }
    Ok((steps, states))
}

fn target_vectors(program: &SequenceProgram) -> Result<Vec<(BasisLabel, Vec<(BasisLabel, C64)>)>> {
    let Some(target) = &program.target else {
        return Ok(vec![]);
    };
    target
        .cases
        .iter()
        .map(|case| {
            let norm = case.output.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Validation(format!("target for input {} has zero norm", case.input_label(program.modes.len()))));
            }
            for (l, _) in &case.output {
                if l.photons.len() != program.modes.len() {
                    return Err(Error::Validation(format!("target label {l} does not match the program modes")));
                }
            }
            Ok((case.input_label(program.modes.len()), case.output.iter().map(|(l, a)| (l.clone(), a / norm)).collect()))
        })
        .collect()
}

/// Track the program on its declared input manifold and compare with its target.
pub fn validate_program(program: &SequenceProgram, ctx: &SynthesisContext) -> Result<ValidationReport> {
    let targets = target_vectors(program)?;
    let inputs: Vec<BasisLabel> =
        if targets.is_empty() { vec![BasisLabel::vacuum(0, program.modes.len())] } else { targets.iter().map(|t| t.0.clone()).collect() };
    let (steps, states) = track_labels(program, ctx, &inputs)?;
    let outputs: Vec<Vec<(BasisLabel, C64)>> = states.iter().map(|st| st.iter().map(|(l, a)| (l.clone(), *a)).collect()).collect();
    let mut report = ValidationReport { inputs, steps, outputs, overlaps: vec![], fidelity: 1.0, phase_spread: 0.0 };
    if targets.is_empty() {
        return Ok(report);
    }
    let overlaps: Vec<C64> = targets
        .iter()
        .zip(&states)
        .map(|((_, t), st)| t.iter().map(|(l, a)| a.conj() * st.get(l).copied().unwrap_or(ZERO)).sum())
        .collect();
    report.fidelity = overlaps.iter().map(|o| o.norm_sqr()).fold(1.0, f64::min);
    let ref_phase = overlaps[0].arg();
    report.phase_spread = overlaps.iter().map(|o| wrap_phase(o.arg() - ref_phase).abs()).fold(0.0, f64::max);
    report.overlaps = overlaps;
    if report.fidelity < 1.0 - TARGET_TOL {
        return Err(Error::Validation(format!("output overlap with target {:.9} (needs ≥ {})", report.fidelity, 1.0 - TARGET_TOL)));
    }
    if report.phase_spread > PHASE_TOL {
        return Err(Error::Validation(format!("relative phase between inputs off by {:.3e} rad", report.phase_spread)));
    }
    Ok(report)
}

/// Transmon pulses that move a branch into |e⟩ where it stays untouched
/// through the next sideband gate.
pub fn derive_shelving(program: &SequenceProgram, steps: &[StepRecord], inputs: &[Branches]) -> BTreeSet<usize> {
    let snapshot = |k: usize| -> Vec<BTreeSet<BasisLabel>> {
        steps[k].branches.iter().map(|b| b.iter().filter(|(l, _)| l.level == 1).map(|(l, _)| l.clone()).collect()).collect()
    };
    let before = |k: usize| -> Vec<BTreeSet<BasisLabel>> {
        if k == 0 {
            inputs.iter().map(|st| st.keys().filter(|l| l.level == 1).cloned().collect()).collect()
        } else {
            snapshot(k - 1)
        }
    };
    let mut out = BTreeSet::new();
    for (k, gate) in program.gates.iter().enumerate() {
        if !gate.is_transmon() {
            continue;
        }
        let Some(next_sb) = (k + 1..program.len()).find(|&j| program.gates[j].is_sideband()) else {
            continue;
        };
        let prev = before(k);
        let after = snapshot(k);
        'cases: for (case, labels) in after.iter().enumerate() {
            for l in labels.difference(&prev[case]) {
                if (k..next_sb).all(|j| snapshot(j)[case].contains(l)) {
                    out.insert(k);
                    break 'cases;
                }
            }
        }
    }
    out
}

/// Adjust the drive phases of rotations and sidebands so the tracked output
/// matches the target's relative phases (frame-update compensation).
pub fn compensate_phases(program: &SequenceProgram, ctx: &SynthesisContext) -> Result<SequenceProgram> {
    let targets = target_vectors(program)?;
    if targets.is_empty() {
        return Ok(program.clone());
    }
    let inputs: Vec<BasisLabel> = targets.iter().map(|t| t.0.clone()).collect();
    let comps: Vec<(usize, BasisLabel, f64)> = targets
        .iter()
        .enumerate()
        .flat_map(|(ci, (_, t))| t.iter().filter(|(_, a)| a.norm() > 1e-9).map(move |(l, a)| (ci, l.clone(), a.arg())))
        .collect();
    let knobs: Vec<usize> = program
        .gates
        .iter()
        .enumerate()
        .filter(|(_, g)| matches!(g.kind, GateKind::Rotation { .. } | GateKind::Sideband { .. } | GateKind::PnsSideband { .. }))
        .map(|(k, _)| k)
        .collect();
    if comps.len() < 2 || knobs.is_empty() {
        return Ok(program.clone());
    }
    let outputs = |p: &SequenceProgram| -> Result<Vec<C64>> {
        let (_, states) = track_labels(p, ctx, &inputs)?;
        Ok(comps.iter().map(|(ci, l, _)| states[*ci].get(l).copied().unwrap_or(ZERO)).collect())
    };
    // residual r_j = arg(o_j/o_0) − (θ_j − θ_0), wrapped
    let residual = |o: &[C64]| -> Option<Vec<f64>> {
        if o.iter().any(|a| a.norm() < 1e-6) {
            return None;
        }
        Some((1..o.len()).map(|j| wrap_phase((o[j] / o[0]).arg() - (comps[j].2 - comps[0].2))).collect())
    };
    let mut prog = program.clone();
    let h = 1e-6;
    for _ in 0..20 {
        let o = outputs(&prog)?;
        let r = residual(&o).ok_or_else(|| Error::Validation("a target component is not populated by the program".into()))?;
        let worst = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if worst < 1e-11 {
            return Ok(prog);
        }
        let mut jac = DMatrix::<f64>::zeros(r.len(), knobs.len());
        for (col, &k) in knobs.iter().enumerate() {
            let mut q = prog.clone();
            q.gates[k].phase += h;
            let oq = outputs(&q)?;
            for j in 1..o.len() {
                let d = ((oq[j] / oq[0]) / (o[j] / o[0])).arg();
                jac[(j - 1, col)] = d / h;
            }
        }
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let step = jac.svd(true, true).solve(&rhs, 1e-8).map_err(|e| Error::Validation(format!("phase solve failed: {e}")))?;
        for (col, &k) in knobs.iter().enumerate() {
            prog.gates[k].phase = wrap_phase(prog.gates[k].phase + step[col]);
        }
    }
    let o = outputs(&prog)?;
    let worst = residual(&o).map(|r| r.iter().fold(0.0f64, |a, b| a.max(b.abs()))).unwrap_or(f64::INFINITY);
    if worst < 1e-8 {
        Ok(prog)
    } else {
        Err(Error::NonConvergence { iterations: 20, residual: worst })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemParams;

    #[test]
    fn pair_propagator_is_unitary_and_resonant_limit() {
        for &(d, om, ph, t) in &[(0.0, 1.3, 0.2, 0.7), (2.0, 0.5, -1.0, 3.0), (-5.0, 4.0, 2.5, 0.1)] {
            let u = sideband_pair_propagator(d, om, ph, t);
            let col0 = u[0][0].norm_sqr() + u[1][0].norm_sqr();
            let col1 = u[0][1].norm_sqr() + u[1][1].norm_sqr();
            let dot = u[0][0].conj() * u[0][1] + u[1][0].conj() * u[1][1];
            assert!((col0 - 1.0).abs() < 1e-13 && (col1 - 1.0).abs() < 1e-13 && dot.norm() < 1e-13);
        }
        // resonant π pulse: |f⟩ → −i e^{−iφ}|g⟩
        let phi = 0.4;
        let u = sideband_pair_propagator(0.0, 1.0, phi, PI / 2.0);
        assert!((u[1][0] - c(0.0, -1.0) * cis(-phi)).norm() < 1e-14);
        assert!(u[0][0].norm() < 1e-14);
    }

    #[test]
    fn rotation_block_matches_convention() {
        let u = rotation_block(PI, 0.3);
        assert!((u[1][0] - c(0.0, -1.0) * cis(0.3)).norm() < 1e-15);
        let v = rotation_block(PI, 0.3 + PI);
        // R(θ, φ+π) = R(θ, φ)⁻¹
        let prod00 = v[0][0] * u[0][0] + v[0][1] * u[1][0];
        let prod10 = v[1][0] * u[0][0] + v[1][1] * u[1][0];
        assert!((prod00 - ONE).norm() < 1e-14 && prod10.norm() < 1e-14);
    }

    #[test]
    fn empty_program_validates() {
        let ctx = SynthesisContext::new(SystemParams::reference_device());
        let p = SequenceProgram::new(vec![2], "empty");
        let rep = validate_program(&p, &ctx).unwrap();
        assert!(rep.steps.is_empty());
        assert_eq!(rep.fidelity, 1.0);
    }

    #[test]
    fn unshelved_branch_collides() {
        let ctx = SynthesisContext::new(SystemParams::reference_device());
        let mut p = SequenceProgram::new(vec![2], "collide");
        // |g,0⟩ + |e,0⟩ → π_ef → |g,0⟩ + |f,0⟩ → sb0 → |g,0⟩ + |g,1⟩; then π_ge π_ef puts both in f
        p.push(AbstractGate::rotation(super::super::gates::Transition::Ge, PI / 2.0, 0.0));
        p.push(AbstractGate::pi_ef());
        p.push(AbstractGate::sideband(2, 0));
        p.push(AbstractGate::pi_ge());
        p.push(AbstractGate::pi_ef());
        p.push(AbstractGate::sideband(2, 1));
        match validate_program(&p, &ctx) {
            Err(Error::BranchCollision { gate, .. }) => assert_eq!(gate, 5),
            other => panic!("expected collision, got {other:?}"),
        }
    }

    #[test]
    fn photon_cutoff_enforced() {
        let ctx = SynthesisContext::new(SystemParams::reference_device()).with_cutoff(2);
        let mut p = SequenceProgram::new(vec![0], "cutoff");
        for k in 0..2 {
            p.push(AbstractGate::pi_ge());
            p.push(AbstractGate::pi_ef());
            p.push(AbstractGate::sideband(0, k));
        }
        assert!(matches!(validate_program(&p, &ctx), Err(Error::Truncation(_))));
    }
}
