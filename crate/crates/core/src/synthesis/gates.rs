//! Abstract gate alphabet, sequence programs and their text format.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::c;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Ge,
    Ef,
    /// Direct two-photon g–f (Raman) transition. Not used by the default generators.
    Gf,
}

impl Transition {
    /// (lower, upper) transmon levels.
    pub fn levels(self) -> (usize, usize) {
        match self {
            Transition::Ge => (0, 1),
            Transition::Ef => (1, 2),
            Transition::Gf => (0, 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transition::Ge => "ge",
            Transition::Ef => "ef",
            Transition::Gf => "gf",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ge" => Some(Transition::Ge),
            "ef" => Some(Transition::Ef),
            "gf" => Some(Transition::Gf),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateKind {
    /// Transmon rotation by `theta` on one transition.
    Rotation { transition: Transition, theta: f64 },
    /// |f,n⟩ ↔ |g,n+1⟩ sideband on `mode`; `fraction` = 1 is a full π swap.
    Sideband { mode: usize, n: usize, fraction: f64 },
    /// Photon-number-selective π on |f,n1⟩–|g,n1+1⟩ while |f,n2⟩–|g,n2+1⟩
    /// completes `m` full detuned cycles.
    PnsSideband { mode: usize, n1: usize, n2: usize, m: usize },
    Displacement { mode: usize, re: f64, im: f64 },
    Idle { duration: f64 },
    /// Engineered f → g relaxation through the readout resonator.
    Reset { duration: f64 },
}

/// One gate of the alphabet plus its drive phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractGate {
    pub kind: GateKind,
    pub phase: f64,
}

impl AbstractGate {
    pub fn new(kind: GateKind, phase: f64) -> Self {
        Self { kind, phase }
    }

    pub fn pi_ge() -> Self {
        Self::rotation(Transition::Ge, PI, 0.0)
    }

    pub fn pi_ef() -> Self {
        Self::rotation(Transition::Ef, PI, 0.0)
    }

    pub fn pi_gf_raman() -> Self {
        Self::rotation(Transition::Gf, PI, 0.0)
    }

    pub fn rotation(transition: Transition, theta: f64, phase: f64) -> Self {
        Self::new(GateKind::Rotation { transition, theta }, phase)
    }

    pub fn sideband(mode: usize, n: usize) -> Self {
        Self::sideband_fraction(mode, n, 1.0)
    }

    pub fn sideband_fraction(mode: usize, n: usize, fraction: f64) -> Self {
        Self::new(GateKind::Sideband { mode, n, fraction }, 0.0)
    }

    pub fn pns(mode: usize, n1: usize, n2: usize, m: usize) -> Self {
        Self::new(GateKind::PnsSideband { mode, n1, n2, m }, 0.0)
    }

    pub fn displacement(mode: usize, alpha: C64) -> Self {
        Self::new(GateKind::Displacement { mode, re: alpha.re, im: alpha.im }, 0.0)
    }

    pub fn idle(duration: f64) -> Self {
        Self::new(GateKind::Idle { duration }, 0.0)
    }

    pub fn reset(duration: f64) -> Self {
        Self::new(GateKind::Reset { duration }, 0.0)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !self.phase.is_finite() {
            return invalid("gate phase must be finite");
        }
        match self.kind {
            GateKind::Rotation { theta, .. } if !theta.is_finite() => invalid("rotation angle must be finite"),
            GateKind::Sideband { fraction, .. } if !(fraction > 0.0 && fraction <= 2.0) => {
                invalid(format!("sideband fraction {fraction} outside (0, 2]"))
            }
            GateKind::PnsSideband { n1, n2, .. } if n1 >= n2 => invalid(format!("PNS needs n1 < n2, got {n1}, {n2}")),
            GateKind::PnsSideband { m: 0, .. } => invalid("PNS multiple m must be >= 1"),
            GateKind::Displacement { re, im, .. } if !(re.is_finite() && im.is_finite()) => {
                invalid("displacement must be finite")
            }
            GateKind::Idle { duration } | GateKind::Reset { duration } if !(duration >= 0.0 && duration.is_finite()) => {
                invalid("duration must be finite and >= 0")
            }
            _ => Ok(()),
        }
    }

    pub fn mode(&self) -> Option<usize> {
        match self.kind {
            GateKind::Sideband { mode, .. } | GateKind::PnsSideband { mode, .. } | GateKind::Displacement { mode, .. } => Some(mode),
            _ => None,
        }
    }

    pub fn is_sideband(&self) -> bool {
        matches!(self.kind, GateKind::Sideband { .. } | GateKind::PnsSideband { .. })
    }

    pub fn is_transmon(&self) -> bool {
        matches!(self.kind, GateKind::Rotation { .. })
    }

    /// Inverse gate. Rotations and sidebands flip their drive phase by π;
    /// PNS and reset gates have no exact single-gate inverse.
    pub fn inverse(&self) -> Result<Self> {
        match self.kind {
            GateKind::Rotation { .. } | GateKind::Sideband { .. } => Ok(self.with_phase(wrap_phase(self.phase + PI))),
            GateKind::Displacement { mode, re, im } => Ok(Self::new(GateKind::Displacement { mode, re: -re, im: -im }, self.phase)),
            GateKind::Idle { .. } => Ok(*self),
            GateKind::PnsSideband { .. } => invalid("PNS gate leaves a residual phase on the detuned pair and has no single-gate inverse"),
            GateKind::Reset { .. } => invalid("reset is dissipative"),
        }
    }

    /// Short human-readable name, e.g. `pi_ef` or `sb3(n=1)`.
    pub fn short_name(&self) -> String {
        match self.kind {
            GateKind::Rotation { transition, theta } if theta == PI => format!("pi_{}", transition.name()),
            GateKind::Rotation { transition, theta } => format!("r_{}({theta:.4})", transition.name()),
            GateKind::Sideband { mode, n, fraction } if fraction == 1.0 => format!("sb{mode}(f{n}g{})", n + 1),
            GateKind::Sideband { mode, n, fraction } => format!("sb{mode}(f{n}g{},{fraction:.4})", n + 1),
            GateKind::PnsSideband { mode, n1, n2, m } => format!("pns{mode}({n1},{n2},m={m})"),
            GateKind::Displacement { mode, re, im } => format!("D{mode}({re:.3}{im:+.3}i)"),
            GateKind::Idle { duration } => format!("idle({duration:e})"),
            GateKind::Reset { duration } => format!("reset({duration:e})"),
        }
    }
}

/// Wrap to (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Transmon level plus photon numbers of the program's modes (in program mode order).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    pub level: usize,
    pub photons: Vec<usize>,
}

impl BasisLabel {
    pub fn new(level: usize, photons: Vec<usize>) -> Self {
        Self { level, photons }
    }

    pub fn vacuum(level: usize, n_modes: usize) -> Self {
        Self { level, photons: vec![0; n_modes] }
    }
}

impl std::fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ps: Vec<String> = self.photons.iter().map(|n| n.to_string()).collect();
        write!(f, "|{},{}>", crate::hilbert::level_name(self.level), ps.join(","))
    }
}

/// Expected output for one input basis state: transmon level `input_level`
/// with the cavity in vacuum, or in `input_photons` when set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetCase {
    pub input_level: usize,
    #[serde(default)]
    pub input_photons: Option<Vec<usize>>,
    pub output: Vec<(BasisLabel, C64)>,
}

impl TargetCase {
    pub fn new(input_level: usize, output: Vec<(BasisLabel, C64)>) -> Self {
        Self { input_level, input_photons: None, output }
    }

    pub fn input_label(&self, n_modes: usize) -> BasisLabel {
        match &self.input_photons {
            Some(p) => BasisLabel::new(self.input_level, p.clone()),
            None => BasisLabel::vacuum(self.input_level, n_modes),
        }
    }
}

/// Target map on the declared input manifold, defined up to one global phase
/// shared by all cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ProgramTarget {
    pub cases: Vec<TargetCase>,
}

impl ProgramTarget {
    pub fn single(input_level: usize, output: Vec<(BasisLabel, C64)>) -> Self {
        Self { cases: vec![TargetCase::new(input_level, output)] }
    }

    pub fn inputs(&self) -> Vec<usize> {
        self.cases.iter().map(|c| c.input_level).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct SequenceProgram {
    /// Device mode indices addressed by the program, in photon-vector order.
    pub modes: Vec<usize>,
    pub gates: Vec<AbstractGate>,
    /// Indices of transmon pulses that park a branch in |e⟩ (annotation only).
    pub shelving: BTreeSet<usize>,
    pub target: Option<ProgramTarget>,
    pub description: String,
    /// The program relies on off-resonant evolution of occupied non-target
    /// sideband pairs (Law–Eberly style). Such programs are tracked with the
    /// exact two-level algebra instead of the collision rules.
    #[serde(default)]
    pub detuned_pairs: bool,
}

impl SequenceProgram {
    pub fn new(modes: Vec<usize>, description: impl Into<String>) -> Self {
        Self { modes, description: description.into(), ..Default::default() }
    }

    pub fn push(&mut self, gate: AbstractGate) -> usize {
        self.gates.push(gate);
        self.gates.len() - 1
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn sideband_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_sideband()).count()
    }

    pub fn transmon_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_transmon()).count()
    }

    /// Position of a device mode in the photon vectors.
    pub fn local_mode(&self, device_mode: usize) -> Result<usize> {
        self.modes
            .iter()
            .position(|&m| m == device_mode)
            .ok_or_else(|| Error::Validation(format!("mode {device_mode} is not declared by the program")))
    }

    /// Structural checks: gate parameters and declared modes.
    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &m in &self.modes {
            if !seen.insert(m) {
                return invalid(format!("mode {m} declared twice"));
            }
        }
        for (k, g) in self.gates.iter().enumerate() {
            g.check().map_err(|e| Error::Validation(format!("gate {k}: {e}")))?;
            if let Some(m) = g.mode() {
                self.local_mode(m)?;
            }
        }
        if let Some(&s) = self.shelving.iter().find(|&&s| s >= self.gates.len()) {
            return Err(Error::Validation(format!("shelving marker {s} past the end of the program")));
        }
        Ok(())
    }

    /// Reversed program with every gate inverted. The target is dropped.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.gates.len();
        let gates = self.gates.iter().rev().map(|g| g.inverse()).collect::<Result<Vec<_>>>()?;
        // a basis-to-basis target inverts case by case
        let target = self.target.as_ref().and_then(|t| {
            t.cases
                .iter()
                .map(|case| match case.output.as_slice() {
                    [(label, a)] if (a.norm() - 1.0).abs() < 1e-9 => Some(TargetCase {
                        input_level: label.level,
                        input_photons: Some(label.photons.clone()),
                        output: vec![(case.input_label(self.modes.len()), a.conj())],
                    }),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
                .map(|cases| ProgramTarget { cases })
        });
        Ok(Self {
            modes: self.modes.clone(),
            gates,
            shelving: self.shelving.iter().map(|&s| n - 1 - s).collect(),
            target,
            description: format!("inverse of: {}", self.description),
            detuned_pairs: self.detuned_pairs,
        })
    }

    /// Program without gate `index` (shelving markers shift accordingly).
    pub fn without_gate(&self, index: usize) -> Self {
        let mut out = self.clone();
        if index < out.gates.len() {
            out.gates.remove(index);
            out.shelving = self
                .shelving
                .iter()
                .filter(|&&s| s != index)
                .map(|&s| if s > index { s - 1 } else { s })
                .collect();
        }
        out
    }

    /// One gate per line. Floats use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let desc = self.description.replace('\n', " ");
        let _ = writeln!(s, "description {desc}");
        let modes: Vec<String> = self.modes.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "modes {}", modes.join(","));
        if self.detuned_pairs {
            let _ = writeln!(s, "detuned_pairs true");
        }
        for (k, g) in self.gates.iter().enumerate() {
            let body = match g.kind {
                GateKind::Rotation { transition, theta } => {
                    format!("rotation transition={} theta={theta:?}", transition.name())
                }
                GateKind::Sideband { mode, n, fraction } => format!("sideband mode={mode} n={n} fraction={fraction:?}"),
                GateKind::PnsSideband { mode, n1, n2, m } => format!("pns mode={mode} n1={n1} n2={n2} m={m}"),
                GateKind::Displacement { mode, re, im } => format!("displacement mode={mode} re={re:?} im={im:?}"),
                GateKind::Idle { duration } => format!("idle duration={duration:?}"),
                GateKind::Reset { duration } => format!("reset duration={duration:?}"),
            };
            let shelve = if self.shelving.contains(&k) { " shelve" } else { "" };
            let _ = writeln!(s, "gate {body} phase={:?}{shelve}", g.phase);
        }
        if let Some(t) = &self.target {
            for case in &t.cases {
                let input = match &case.input_photons {
                    Some(p) => format!("{} in_photons={}", case.input_level, p.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
                    None => case.input_level.to_string(),
                };
                if case.output.is_empty() {
                    let _ = writeln!(s, "target in={input}");
                }
                for (label, a) in &case.output {
                    let ps: Vec<String> = label.photons.iter().map(|n| n.to_string()).collect();
                    let _ = writeln!(
                        s,
                        "target in={} level={} photons={} re={:?} im={:?}",
                        input,
                        label.level,
                        ps.join(","),
                        a.re,
                        a.im
                    );
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut prog = SequenceProgram::default();
        let mut target = ProgramTarget::default();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match head {
                "description" => prog.description = rest.trim().to_string(),
                "detuned_pairs" => {
                    prog.detuned_pairs = rest.trim().parse().map_err(|e| err(format!("detuned_pairs: {e}")))?;
                }
                "modes" => {
                    prog.modes = parse_list(rest.trim()).map_err(err)?;
                }
                "gate" => {
                    let mut toks = rest.split_whitespace();
                    let kind = toks.next().ok_or_else(|| err("missing gate kind".into()))?;
                    let mut kv = KeyValues::default();
                    let mut shelve = false;
                    for t in toks {
                        if t == "shelve" {
                            shelve = true;
                        } else {
                            kv.push(t).map_err(err)?;
                        }
                    }
                    let gate = parse_gate(kind, &mut kv).map_err(err)?;
                    gate.check().map_err(|e| err(e.to_string()))?;
                    let k = prog.push(gate);
                    if shelve {
                        prog.shelving.insert(k);
                    }
                    kv.finish().map_err(err)?;
                }
                "target" => {
                    let mut kv = KeyValues::default();
                    for t in rest.split_whitespace() {
                        kv.push(t).map_err(err)?;
                    }
                    let input: usize = kv.get("in").map_err(err)?;
                    let in_photons = if kv.has("in_photons") {
                        Some(parse_list(&kv.get::<String>("in_photons").map_err(err)?).map_err(err)?)
                    } else {
                        None
                    };
                    let idx = match target.cases.iter().position(|c| c.input_level == input && c.input_photons == in_photons) {
                        Some(i) => i,
                        None => {
                            target.cases.push(TargetCase { input_level: input, input_photons: in_photons, output: vec![] });
                            target.cases.len() - 1
                        }
                    };
                    if kv.has("level") {
                        let level: usize = kv.get("level").map_err(err)?;
                        let photons = parse_list(&kv.get::<String>("photons").map_err(err)?).map_err(err)?;
                        let a = c(kv.get("re").map_err(err)?, kv.get("im").map_err(err)?);
                        target.cases[idx].output.push((BasisLabel::new(level, photons), a));
                    }
                    kv.finish().map_err(err)?;
                }
                other => return Err(err(format!("unknown record '{other}'"))),
            }
        }
        if !target.cases.is_empty() {
            prog.target = Some(target);
        }
        prog.check()?;
        Ok(prog)
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad integer '{t}': {e}"))).collect()
}

#[derive(Default)]
struct KeyValues {
    items: Vec<(String, String, bool)>,
}

impl KeyValues {
    fn push(&mut self, tok: &str) -> std::result::Result<(), String> {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, got '{tok}'"))?;
        if self.has(k) {
            return Err(format!("duplicate key '{k}'"));
        }
        self.items.push((k.to_string(), v.to_string(), false));
        Ok(())
    }

    fn has(&self, key: &str) -> bool {
        self.items.iter().any(|(k, _, _)| k == key)
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str) -> std::result::Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        let item = self.items.iter_mut().find(|(k, _, _)| k == key).ok_or_else(|| format!("missing field '{key}'"))?;
        item.2 = true;
        item.1.parse::<T>().map_err(|e| format!("field '{key}': {e}"))
    }

    fn finish(&self) -> std::result::Result<(), String> {
        match self.items.iter().find(|(_, _, used)| !used) {
            Some((k, _, _)) => Err(format!("unknown field '{k}'")),
            None => Ok(()),
        }
    }
}

fn parse_gate(kind: &str, kv: &mut KeyValues) -> std::result::Result<AbstractGate, String> {
    let phase: f64 = kv.get("phase")?;
    let kind = match kind {
        "rotation" => {
            let tr: String = kv.get("transition")?;
            let transition = Transition::parse(&tr).ok_or_else(|| format!("unknown transition '{tr}'"))?;
            GateKind::Rotation { transition, theta: kv.get("theta")? }
        }
        "sideband" => GateKind::Sideband { mode: kv.get("mode")?, n: kv.get("n")?, fraction: kv.get("fraction")? },
        "pns" => GateKind::PnsSideband { mode: kv.get("mode")?, n1: kv.get("n1")?, n2: kv.get("n2")?, m: kv.get("m")? },
        "displacement" => GateKind::Displacement { mode: kv.get("mode")?, re: kv.get("re")?, im: kv.get("im")? },
        "idle" => GateKind::Idle { duration: kv.get("duration")? },
        "reset" => GateKind::Reset { duration: kv.get("duration")? },
        other => return Err(format!("unknown gate kind '{other}'")),
    };
    Ok(AbstractGate::new(kind, phase))
}
