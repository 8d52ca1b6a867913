//! Truncated transmon ⊗ multimode Hilbert space, operators and states.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, r, CMat, CVec, ONE};

/// Default cap on the total dimension.
pub const DEFAULT_DIM_LIMIT: usize = 100_000;

/// Population in the top Fock level above which a truncation warning is raised.
pub const TRUNCATION_WARN: f64 = 1e-4;

/// Transmon level names used in labels and reports.
pub const LEVEL_NAMES: [&str; 8] = ["g", "e", "f", "h", "5", "6", "7", "8"];

pub fn level_name(level: usize) -> String {
    LEVEL_NAMES
        .get(level)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("l{level}"))
}

/// One transmon plus `mode_cutoffs.len()` cavity modes. Subsystem 0 is the
/// transmon, subsystem `i + 1` is mode `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSpace {
    transmon_dim: usize,
    mode_cutoffs: Vec<usize>,
}

impl CompositeSpace {
    pub fn new(transmon_dim: usize, mode_cutoffs: Vec<usize>) -> Result<Self> {
        Self::with_limit(transmon_dim, mode_cutoffs, DEFAULT_DIM_LIMIT)
    }

    pub fn with_limit(transmon_dim: usize, mode_cutoffs: Vec<usize>, limit: usize) -> Result<Self> {
        if transmon_dim < 2 {
            return invalid(format!("transmon_dim must be >= 2, got {transmon_dim}"));
        }
        if let Some(&bad) = mode_cutoffs.iter().find(|&&c| c < 1) {
            return invalid(format!("mode cutoff must be >= 1, got {bad}"));
        }
        let dim = mode_cutoffs
            .iter()
            .try_fold(transmon_dim, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::InvalidArgument("dimension overflow".into()))?;
        if dim > limit {
            return invalid(format!("total dimension {dim} exceeds limit {limit}"));
        }
        Ok(Self { transmon_dim, mode_cutoffs })
    }

    pub fn transmon_dim(&self) -> usize {
        self.transmon_dim
    }

    pub fn mode_cutoffs(&self) -> &[usize] {
        &self.mode_cutoffs
    }

    pub fn n_modes(&self) -> usize {
        self.mode_cutoffs.len()
    }

    pub fn n_subsystems(&self) -> usize {
        1 + self.mode_cutoffs.len()
    }

    pub fn dim(&self) -> usize {
        self.transmon_dim * self.mode_cutoffs.iter().product::<usize>()
    }

    /// Local dimensions in subsystem order.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.transmon_dim];
        d.extend_from_slice(&self.mode_cutoffs);
        d
    }

    /// Lexicographic basis index of |level, photons⟩.
    pub fn index(&self, level: usize, photons: &[usize]) -> Result<usize> {
        if photons.len() != self.n_modes() {
            return Err(Error::DimensionMismatch { expected: self.n_modes(), got: photons.len() });
        }
        if level >= self.transmon_dim {
            return Err(Error::Truncation(format!(
                "transmon level {level} >= transmon_dim {}",
                self.transmon_dim
            )));
        }
        let mut idx = level;
        for (i, (&n, &c)) in photons.iter().zip(&self.mode_cutoffs).enumerate() {
            if n >= c {
                return Err(Error::Truncation(format!("mode {i}: photon number {n} >= cutoff {c}")));
            }
            idx = idx * c + n;
        }
        Ok(idx)
    }

    /// Inverse of [`index`](Self::index).
    pub fn label(&self, mut idx: usize) -> (usize, Vec<usize>) {
        let mut photons = vec![0; self.n_modes()];
        for i in (0..self.n_modes()).rev() {
            photons[i] = idx % self.mode_cutoffs[i];
            idx /= self.mode_cutoffs[i];
        }
        (idx, photons)
    }

    pub fn label_string(&self, idx: usize) -> String {
        let (l, p) = self.label(idx);
        let ps: Vec<String> = p.iter().map(|n| n.to_string()).collect();
        format!("{},{}", level_name(l), ps.join(","))
    }

    fn check_subsystem(&self, subsystem: usize) -> Result<()> {
        if subsystem >= self.n_subsystems() {
            return Err(Error::SubsystemOutOfRange { index: subsystem, count: self.n_subsystems() });
        }
        Ok(())
    }

    /// Embed a local operator acting on `subsystem` into the full space.
    pub fn embed(&self, subsystem: usize, local: &CMat) -> Result<CMat> {
        self.check_subsystem(subsystem)?;
        let dims = self.dims();
        if local.nrows() != dims[subsystem] || local.ncols() != dims[subsystem] {
            return Err(Error::DimensionMismatch { expected: dims[subsystem], got: local.nrows() });
        }
        Ok(embed_local(&dims, subsystem, local))
    }

    pub fn identity(&self) -> CMat {
        linalg::eye(self.dim())
    }

    /// |level⟩⟨level| on the transmon.
    pub fn transmon_projector(&self, level: usize) -> Result<CMat> {
        if level >= self.transmon_dim {
            return Err(Error::Truncation(format!("level {level} >= {}", self.transmon_dim)));
        }
        let mut p = CMat::zeros(self.transmon_dim, self.transmon_dim);
        p[(level, level)] = ONE;
        self.embed(0, &p)
    }

    /// |to⟩⟨from| on the transmon.
    pub fn transmon_transition(&self, to: usize, from: usize) -> Result<CMat> {
        if to.max(from) >= self.transmon_dim {
            return Err(Error::Truncation(format!("level {} >= {}", to.max(from), self.transmon_dim)));
        }
        let mut p = CMat::zeros(self.transmon_dim, self.transmon_dim);
        p[(to, from)] = ONE;
        self.embed(0, &p)
    }

    /// Same space with transmon levels replaced.
    pub fn with_transmon_dim(&self, transmon_dim: usize) -> Result<Self> {
        Self::new(transmon_dim, self.mode_cutoffs.clone())
    }
}

/// Local annihilation operator of dimension `d`.
pub fn local_lowering(d: usize) -> CMat {
    let mut a = CMat::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = r((n as f64).sqrt());
    }
    a
}

/// Kronecker embedding of `local` at position `k` among `dims`.
pub fn embed_local(dims: &[usize], k: usize, local: &CMat) -> CMat {
    let left: usize = dims[..k].iter().product();
    let right: usize = dims[k + 1..].iter().product();
    let mut m = linalg::kron(&linalg::eye(left), local);
    m = linalg::kron(&m, &linalg::eye(right));
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OpLabel {
    Lowering(usize),
    Raising(usize),
    Number(usize),
    Projector,
    Hamiltonian,
    Collapse,
    Other(String),
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: CMat,
    pub label: OpLabel,
}

impl OperatorMatrix {
    pub fn new(matrix: CMat, label: OpLabel) -> Self {
        Self { matrix, label }
    }

    pub fn dagger(&self) -> OperatorMatrix {
        let label = match self.label {
            OpLabel::Lowering(i) => OpLabel::Raising(i),
            OpLabel::Raising(i) => OpLabel::Lowering(i),
            ref l => l.clone(),
        };
        OperatorMatrix { matrix: self.matrix.adjoint(), label }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermiticity_defect(&self.matrix) < tol
    }
}

/// Annihilation operator of `subsystem` (0 = transmon, i + 1 = mode i).
pub fn lowering_op(space: &CompositeSpace, subsystem: usize) -> Result<OperatorMatrix> {
    space.check_subsystem(subsystem)?;
    let d = space.dims()[subsystem];
    Ok(OperatorMatrix::new(space.embed(subsystem, &local_lowering(d))?, OpLabel::Lowering(subsystem)))
}

/// a†a of `subsystem`.
pub fn number_op(space: &CompositeSpace, subsystem: usize) -> Result<OperatorMatrix> {
    space.check_subsystem(subsystem)?;
    let d = space.dims()[subsystem];
    let n: Vec<f64> = (0..d).map(|k| k as f64).collect();
    Ok(OperatorMatrix::new(space.embed(subsystem, &linalg::diag_real(&n))?, OpLabel::Number(subsystem)))
}

/// Pure state over a tensor-product space with local dimensions `dims`.
#[derive(Clone, Debug)]
pub struct StateVector {
    amplitudes: CVec,
    dims: Vec<usize>,
}

impl StateVector {
    /// Construct from amplitudes; the norm must already be 1 within 1e-10.
    pub fn new(amplitudes: CVec, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, amplitudes.len())?;
        let n = amplitudes.norm();
        if (n - 1.0).abs() > 1e-10 {
            return invalid(format!("state norm {n} differs from 1"));
        }
        Ok(Self { amplitudes, dims })
    }

    /// Construct and normalize.
    pub fn normalized(amplitudes: CVec, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, amplitudes.len())?;
        let n = amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return invalid("zero-norm state");
        }
        Ok(Self { amplitudes: amplitudes / r(n), dims })
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVec {
        self.amplitudes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { matrix: linalg::outer(&self.amplitudes, &self.amplitudes), dims: self.dims.clone() }
    }

    pub fn overlap(&self, other: &StateVector) -> Result<crate::C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn apply(&self, op: &CMat) -> Result<StateVector> {
        if op.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: op.ncols() });
        }
        StateVector::normalized(op * &self.amplitudes, self.dims.clone())
    }
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    let d: usize = dims.iter().product();
    if d != len {
        return Err(Error::DimensionMismatch { expected: d, got: len });
    }
    Ok(())
}

/// Basis state |transmon_level, photons⟩.
pub fn fock_state(space: &CompositeSpace, transmon_level: usize, photons: &[usize]) -> Result<StateVector> {
    let idx = space.index(transmon_level, photons)?;
    let mut v = CVec::zeros(space.dim());
    v[idx] = ONE;
    StateVector::new(v, space.dims())
}

/// Single-mode Fock-space ket |n⟩ of dimension d (no transmon factor).
pub fn mode_ket(d: usize, coeffs: &[(usize, crate::C64)]) -> Result<StateVector> {
    let mut v = CVec::zeros(d);
    for &(n, a) in coeffs {
        if n >= d {
            return Err(Error::Truncation(format!("photon number {n} >= cutoff {d}")));
        }
        v[n] += a;
    }
    StateVector::normalized(v, vec![d])
}

/// Density matrix over a tensor-product space with local dimensions `dims`.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: CMat,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Checked constructor enforcing Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMat, dims: Vec<usize>) -> Result<Self> {
        let rho = Self::new_unchecked(matrix, dims)?;
        rho.check(1e-10, 1e-8)?;
        Ok(rho)
    }

    /// Shape-checked only; for intermediate results of integrators.
    pub fn new_unchecked(matrix: CMat, dims: Vec<usize>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return invalid("density matrix must be square");
        }
        check_dims(&dims, matrix.nrows())?;
        Ok(Self { matrix, dims })
    }

    /// Verify the invariants with the given tolerances.
    pub fn check(&self, herm_tol: f64, pos_tol: f64) -> Result<()> {
        let h = linalg::hermiticity_defect(&self.matrix);
        if h > herm_tol {
            return invalid(format!("density matrix not Hermitian (defect {h:e})"));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > herm_tol.max(1e-10) {
            return invalid(format!("density matrix trace {tr} != 1"));
        }
        let (vals, _) = linalg::herm_eig(&self.matrix);
        if vals[0] < -pos_tol {
            return invalid(format!("density matrix has negative eigenvalue {:e}", vals[0]));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::herm_eig(&self.matrix).0[0]
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn expect(&self, op: &CMat) -> crate::C64 {
        linalg::trace(&(op * &self.matrix))
    }

    /// Maximally mixed state, used as a neutral starting point.
    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d: usize = dims.iter().product();
        Self { matrix: linalg::eye(d) * r(1.0 / d as f64), dims }
    }

    /// Thermal state of a single mode with mean photon number `nbar`.
    pub fn thermal_mode(d: usize, nbar: f64) -> Result<Self> {
        if nbar < 0.0 {
            return invalid("negative thermal population");
        }
        let mut p: Vec<f64> = if nbar == 0.0 {
            (0..d).map(|n| if n == 0 { 1.0 } else { 0.0 }).collect()
        } else {
            let q = nbar / (1.0 + nbar);
            (0..d).map(|n| q.powi(n as i32)).collect()
        };
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        Ok(Self { matrix: linalg::diag_real(&p), dims: vec![d] })
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityMatrix { matrix: linalg::kron(&self.matrix, &other.matrix), dims }
    }
}

/// F = ⟨ψ|ρ|ψ⟩, clamped to [0, 1].
pub fn fidelity(rho: &DensityMatrix, target: &StateVector) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: target.dim() });
    }
    Ok(linalg::expect_pure(&rho.matrix, &target.amplitudes).clamp(0.0, 1.0))
}

/// Trace out every subsystem not in `keep`. Kept subsystems stay in ascending order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return invalid("partial_trace: empty keep set");
    }
    let dims = rho.dims.clone();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&k) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::SubsystemOutOfRange { index: k, count: dims.len() });
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let dk: usize = keep.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();

    // strides of each subsystem in the full lexicographic index
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let offsets = |sub: &[usize], mut idx: usize| -> usize {
        let mut off = 0;
        for &k in sub.iter().rev() {
            off += (idx % dims[k]) * strides[k];
            idx /= dims[k];
        }
        off
    };
    let kept_off: Vec<usize> = (0..dk).map(|i| offsets(&keep, i)).collect();
    let traced_off: Vec<usize> = (0..dt).map(|i| offsets(&traced, i)).collect();

    let mut out = CMat::zeros(dk, dk);
    for &t in &traced_off {
        for (a, &ka) in kept_off.iter().enumerate() {
            for (b, &kb) in kept_off.iter().enumerate() {
                out[(a, b)] += rho.matrix[(ka + t, kb + t)];
            }
        }
    }
    Ok(DensityMatrix { matrix: out, dims: keep.iter().map(|&k| dims[k]).collect() })
}

/// Population in the top Fock level of each mode.
pub fn top_level_populations(space: &CompositeSpace, rho: &DensityMatrix) -> Vec<f64> {
    (0..space.n_modes())
        .map(|m| {
            let top = space.mode_cutoffs()[m] - 1;
            (0..space.dim())
                .filter(|&i| space.label(i).1[m] == top)
                .map(|i| rho.matrix[(i, i)].re)
                .sum()
        })
        .collect()
}

/// Truncation warnings for every mode whose top level holds ≥ 1e-4 population.
pub fn truncation_warnings(space: &CompositeSpace, rho: &DensityMatrix) -> Vec<String> {
    top_level_populations(space, rho)
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p >= TRUNCATION_WARN)
        .map(|(m, p)| {
            let msg = format!("mode {m}: top Fock level population {p:.2e} (cutoff {})", space.mode_cutoffs()[m]);
            log::warn!("truncation: {msg}");
            msg
        })
        .collect()
}

/// Haar-like random pure state from a seeded generator (test and bench helper).
pub fn random_state<R: rand::Rng>(rng: &mut R, dims: Vec<usize>) -> StateVector {
    use rand_distr::{Distribution, StandardNormal};
    let d: usize = dims.iter().product();
    let v = CVec::from_iterator(
        d,
        (0..d).map(|_| crate::C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))),
    );
    StateVector::normalized(v, dims).expect("nonzero random state")
}

/// Random mixed state of the given rank.
pub fn random_density<R: rand::Rng>(rng: &mut R, dims: Vec<usize>, rank: usize) -> DensityMatrix {
    let d: usize = dims.iter().product();
    let mut m = CMat::zeros(d, d);
    let mut w: Vec<f64> = (0..rank.max(1)).map(|_| rng.gen::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    for wk in w {
        let psi = random_state(rng, dims.clone());
        m += linalg::outer(psi.amplitudes(), psi.amplitudes()) * r(wk);
    }
    DensityMatrix { matrix: linalg::hermitian_part(&m), dims }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sp(t: usize, c: &[usize]) -> CompositeSpace {
        CompositeSpace::new(t, c.to_vec()).unwrap()
    }

    #[test]
    fn lowering_matrix_elements() {
        let s = sp(3, &[3]);
        let a = lowering_op(&s, 1).unwrap();
        let two = fock_state(&s, 0, &[2]).unwrap();
        let out = &a.matrix * two.amplitudes();
        let one = s.index(0, &[1]).unwrap();
        assert!((out[one].re - 1.41421356).abs() < 1e-8);
        let vac = fock_state(&s, 0, &[0]).unwrap();
        assert!((&a.matrix * vac.amplitudes()).norm() < 1e-15);
        let n = &a.matrix.adjoint() * &a.matrix;
        for k in 0..3 {
            let i = s.index(1, &[k]).unwrap();
            assert!((n[(i, i)].re - k as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn subsystem_out_of_range() {
        let s = sp(3, &[3]);
        assert!(matches!(lowering_op(&s, 2), Err(Error::SubsystemOutOfRange { .. })));
    }

    #[test]
    fn fock_indexing() {
        let s = sp(4, &[5]);
        assert_eq!(s.index(0, &[0]).unwrap(), 0);
        assert_eq!(s.index(2, &[1]).unwrap(), 11);
        let f1 = fock_state(&s, 2, &[1]).unwrap();
        assert_eq!(f1.amplitudes()[11], ONE);
        assert!((f1.norm() - 1.0).abs() < 1e-15);
        assert!(fock_state(&s, 4, &[0]).is_err());
        assert!(fock_state(&s, 0, &[5]).is_err());
        assert_eq!(s.label(11), (2, vec![1]));
    }

    #[test]
    fn dimension_limit() {
        assert!(CompositeSpace::with_limit(4, vec![10, 10], 300).is_err());
        assert!(CompositeSpace::new(1, vec![3]).is_err());
        assert!(CompositeSpace::new(2, vec![0]).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let d = vec![2];
        let k0 = mode_ket(2, &[(0, ONE)]).unwrap();
        let k1 = mode_ket(2, &[(1, ONE)]).unwrap();
        assert!((fidelity(&k0.to_density(), &k0).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&k0.to_density(), &k1).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::new(linalg::diag_real(&[0.5, 0.5]), d).unwrap();
        let plus = mode_ket(2, &[(0, ONE), (1, ONE)]).unwrap();
        assert!((fidelity(&mixed, &plus).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_examples() {
        let s = sp(3, &[4]);
        let rho = fock_state(&s, 0, &[2]).unwrap().to_density();
        let red = partial_trace(&rho, &[1]).unwrap();
        assert_eq!(red.dims(), &[4]);
        assert!((red.matrix()[(2, 2)].re - 1.0).abs() < 1e-14);

        let mut v = CVec::zeros(s.dim());
        v[s.index(0, &[0]).unwrap()] = ONE;
        v[s.index(1, &[1]).unwrap()] = ONE;
        let bell = StateVector::normalized(v, s.dims()).unwrap().to_density();
        let red = partial_trace(&bell, &[1]).unwrap();
        assert!((red.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((red.matrix()[(1, 1)].re - 0.5).abs() < 1e-14);
        assert!(red.matrix()[(0, 1)].norm() < 1e-14);
        assert!(partial_trace(&bell, &[]).is_err());
    }

    #[test]
    fn partial_trace_of_product_middle_subsystem() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = random_density(&mut rng, vec![2], 2);
        let b = random_density(&mut rng, vec![3], 2);
        let c = random_density(&mut rng, vec![2], 1);
        let abc = a.tensor(&b).tensor(&c);
        let red = partial_trace(&abc, &[1]).unwrap();
        assert!(linalg::max_abs(&(red.matrix() - b.matrix())) < 1e-13);
        let ac = partial_trace(&abc, &[0, 2]).unwrap();
        assert!(linalg::max_abs(&(ac.matrix() - a.tensor(&c).matrix())) < 1e-13);
    }

    #[test]
    fn truncation_guard_fires() {
        let s = sp(2, &[3]);
        let top = fock_state(&s, 0, &[2]).unwrap().to_density();
        assert_eq!(truncation_warnings(&s, &top).len(), 1);
        let vac = fock_state(&s, 0, &[0]).unwrap().to_density();
        assert!(truncation_warnings(&s, &vac).is_empty());
    }

    #[test]
    fn thermal_mode_mean() {
        let rho = DensityMatrix::thermal_mode(40, 0.02).unwrap();
        let mean: f64 = rho.populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        assert!((mean - 0.02).abs() < 1e-12);
    }
}
