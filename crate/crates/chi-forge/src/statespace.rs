//! Dense complex linear algebra over tensor-product Hilbert spaces.
//!
//! Composite indices are row-major over the factor list: the first factor
//! is the most significant digit. All values are immutable after
//! construction; every operation here is a pure function.

use crate::error::{ChiError, Result};
use crate::{C64, CMat, CVec};
use nalgebra::DVector;

/// Tolerance below which density-matrix eigenvalues count as zero in
/// entropy sums.
pub const ENTROPY_EIGVAL_FLOOR: f64 = 1e-12;
/// Most negative density-matrix eigenvalue tolerated (integrator round-off).
pub const DENSITY_EIGVAL_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// An ordered list of labelled tensor factors. Atoms come in physical
/// order 1,2,3,4; the cavity, when present, is the last factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertSpace {
    factors: Vec<Factor>,
}

impl HilbertSpace {
    pub fn new(factors: &[(&str, usize)]) -> Result<Self> {
        if factors.is_empty() {
            return Err(ChiError::Config("a Hilbert space needs at least one factor".into()));
        }
        for (label, dim) in factors {
            if *dim < 2 {
                return Err(ChiError::Config(format!(
                    "factor `{label}` has dimension {dim}; factors must have dimension >= 2"
                )));
            }
        }
        for (i, (label, _)) in factors.iter().enumerate() {
            if factors[..i].iter().any(|(l, _)| l == label) {
                return Err(ChiError::Config(format!("duplicate factor label `{label}`")));
            }
        }
        Ok(Self {
            factors: factors
                .iter()
                .map(|(l, d)| Factor { label: (*l).to_string(), dim: *d })
                .collect(),
        })
    }

    /// Single-factor space, used for operators defined on one site.
    pub fn single(label: &str, dim: usize) -> Self {
        Self::new(&[(label, dim)]).expect("single factor is always valid")
    }

    /// Four two-level atoms `a1..a4` (ground manifold).
    pub fn four_qubits() -> Self {
        Self::new(&[("a1", 2), ("a2", 2), ("a3", 2), ("a4", 2)]).unwrap()
    }

    /// Four two-level atoms plus a cavity truncated at `fock_dim` photons.
    pub fn qubits_with_cavity(fock_dim: usize) -> Result<Self> {
        Self::new(&[("a1", 2), ("a2", 2), ("a3", 2), ("a4", 2), ("cav", fock_dim)])
    }

    /// Four three-level atoms plus a truncated cavity (the full model).
    pub fn atoms_with_cavity(fock_dim: usize) -> Result<Self> {
        Self::new(&[("a1", 3), ("a2", 3), ("a3", 3), ("a4", 3), ("cav", fock_dim)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| ChiError::UnknownLabel(label.to_string()))
    }

    pub fn factor_dim(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.position(label)?].dim)
    }

    /// Row-major strides, one per factor.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.factors.len();
        let mut s = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.factors[i + 1].dim;
        }
        s
    }

    /// Composite index of a product basis state given per-factor digits.
    pub fn index_of(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.factors.len() {
            return Err(ChiError::DimensionMismatch(format!(
                "{} digits given for {} factors",
                digits.len(),
                self.factors.len()
            )));
        }
        let mut idx = 0usize;
        for (d, f) in digits.iter().zip(&self.factors) {
            if *d >= f.dim {
                return Err(ChiError::DimensionMismatch(format!(
                    "digit {d} out of range for factor `{}` (dim {})",
                    f.label, f.dim
                )));
            }
            idx = idx * f.dim + d;
        }
        Ok(idx)
    }

    /// Per-factor digits of a composite index.
    pub fn digits_of(&self, mut index: usize) -> Vec<usize> {
        let n = self.factors.len();
        let mut out = vec![0usize; n];
        for i in (0..n).rev() {
            out[i] = index % self.factors[i].dim;
            index /= self.factors[i].dim;
        }
        out
    }
}

/// A normalized pure state over a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct StateVector {
    space: HilbertSpace,
    amps: CVec,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amps: CVec) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(ChiError::DimensionMismatch(format!(
                "amplitude vector of length {} on space of dimension {}",
                amps.len(),
                space.dim()
            )));
        }
        Ok(Self { space, amps })
    }

    /// Product basis state with the given per-factor digits.
    pub fn basis(space: &HilbertSpace, digits: &[usize]) -> Result<Self> {
        let idx = space.index_of(digits)?;
        let mut amps = CVec::zeros(space.dim());
        amps[idx] = C64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), amps })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut CVec {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(ChiError::Integration(format!("cannot normalize state of norm {n}")));
        }
        self.amps /= C64::new(n, 0.0);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.check_same_space(other)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let mut factors: Vec<(&str, usize)> = Vec::new();
        for f in self.space.factors().iter().chain(other.space.factors()) {
            factors.push((&f.label, f.dim));
        }
        let space = HilbertSpace::new(&factors)?;
        let amps = self.amps.kronecker(&other.amps);
        StateVector::new(space, CVec::from_column_slice(amps.as_slice()))
    }

    pub fn density(&self) -> DensityMatrix {
        let mat = &self.amps * self.amps.adjoint();
        DensityMatrix { space: self.space.clone(), mat }
    }

    fn check_same_space(&self, other: &StateVector) -> Result<()> {
        if self.space != other.space {
            return Err(ChiError::SpaceMismatch(
                "states live on different Hilbert spaces".into(),
            ));
        }
        Ok(())
    }
}

/// A dense operator on a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct Operator {
    space: HilbertSpace,
    mat: CMat,
}

impl Operator {
    pub fn new(space: HilbertSpace, mat: CMat) -> Result<Self> {
        let d = space.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(ChiError::DimensionMismatch(format!(
                "{}x{} matrix on space of dimension {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { space, mat })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), mat: CMat::identity(d, d) }
    }

    pub fn zero(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), mat: CMat::zeros(d, d) }
    }

    /// Operator on a fresh single-factor space, for use with
    /// [`tensor_embed`].
    pub fn on_site(label: &str, mat: CMat) -> Result<Self> {
        let dim = mat.nrows();
        Self::new(HilbertSpace::single(label, dim), mat)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn dagger(&self) -> Operator {
        Operator { space: self.space.clone(), mat: self.mat.adjoint() }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.space != *psi.space() {
            return Err(ChiError::SpaceMismatch("operator and state spaces differ".into()));
        }
        StateVector::new(self.space.clone(), &self.mat * psi.amplitudes())
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        if self.space != other.space {
            return Err(ChiError::SpaceMismatch("operator spaces differ".into()));
        }
        Ok(Operator { space: self.space.clone(), mat: &self.mat * &other.mat })
    }

    /// Entrywise max of |M - M^dagger|.
    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.mat.adjoint();
        (&self.mat - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Entrywise max of |U^dagger U - I|.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.mat.nrows();
        let prod = self.mat.adjoint() * &self.mat;
        let eye = CMat::identity(d, d);
        (prod - eye).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator { space: self.space.clone(), mat: self.mat.clone() * c }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.space != other.space {
            return Err(ChiError::SpaceMismatch("operator spaces differ".into()));
        }
        Ok(Operator { space: self.space.clone(), mat: &self.mat + &other.mat })
    }
}

/// A density matrix on a [`HilbertSpace`]. `new` enforces Hermiticity,
/// unit trace, and positivity down to integrator round-off.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    space: HilbertSpace,
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(space: HilbertSpace, mat: CMat) -> Result<Self> {
        let d = space.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(ChiError::DimensionMismatch(format!(
                "{}x{} matrix on space of dimension {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let rho = Self { space, mat };
        let herm = rho.hermiticity_error();
        if herm > 1e-12 {
            return Err(ChiError::NotHermitian(herm));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-8 {
            return Err(ChiError::Physics(format!("density matrix trace {tr} != 1")));
        }
        let min_eig = rho.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < DENSITY_EIGVAL_FLOOR {
            return Err(ChiError::Physics(format!(
                "density matrix has eigenvalue {min_eig:.3e} below {DENSITY_EIGVAL_FLOOR:.0e}"
            )));
        }
        Ok(rho)
    }

    /// Construct without running the invariant checks. For intermediate
    /// integrator states only.
    pub(crate) fn new_unchecked(space: HilbertSpace, mat: CMat) -> Self {
        Self { space, mat }
    }

    pub fn from_state(psi: &StateVector) -> Self {
        psi.density()
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.mat.adjoint();
        (&self.mat - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Real eigenvalue spectrum (of the symmetrized matrix).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        nalgebra::linalg::SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .cloned()
            .collect()
    }

    /// Overlap `<psi| rho |psi>`.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if self.space != *psi.space() {
            return Err(ChiError::SpaceMismatch("state and density spaces differ".into()));
        }
        let v = &self.mat * psi.amplitudes();
        Ok(psi.amplitudes().dotc(&v).re)
    }
}

/// Embed a single-factor operator at the named site of a larger space:
/// returns `I x ... x op x ... x I` in canonical factor order.
pub fn tensor_embed(op: &Operator, site: &str, space: &HilbertSpace) -> Result<Operator> {
    if op.space().n_factors() != 1 {
        return Err(ChiError::DimensionMismatch(
            "tensor_embed expects an operator on a single factor".into(),
        ));
    }
    let pos = space.position(site)?;
    let want = space.factors()[pos].dim;
    if op.space().dim() != want {
        return Err(ChiError::DimensionMismatch(format!(
            "operator of dimension {} embedded at factor `{site}` of dimension {want}",
            op.space().dim()
        )));
    }
    let mut acc = CMat::identity(1, 1);
    for (i, f) in space.factors().iter().enumerate() {
        let next = if i == pos {
            acc.kronecker(op.matrix())
        } else {
            acc.kronecker(&CMat::identity(f.dim, f.dim))
        };
        acc = next;
    }
    Operator::new(space.clone(), acc)
}

/// Exact unitary `exp(-i H dt)` via Hermitian eigendecomposition.
pub fn propagator(h: &Operator, dt: f64) -> Result<Operator> {
    let scale = h.mat.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let herm = h.hermiticity_error();
    if herm > 1e-9 * scale {
        return Err(ChiError::NotHermitian(herm));
    }
    let sym = (&h.mat + h.mat.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::linalg::SymmetricEigen::new(sym);
    let phases: DVector<C64> = eig
        .eigenvalues
        .map(|e| C64::new(0.0, -e * dt).exp());
    let u = &eig.eigenvectors * CMat::from_diagonal(&phases) * eig.eigenvectors.adjoint();
    Operator::new(h.space.clone(), u)
}

/// Reduced density matrix on the kept factors (canonical factor order),
/// tracing out everything else.
pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(ChiError::Config("partial_trace needs a non-empty keep set".into()));
    }
    let space = rho.space();
    let mut keep_pos: Vec<usize> = keep
        .iter()
        .map(|l| space.position(l))
        .collect::<Result<Vec<_>>>()?;
    keep_pos.sort_unstable();
    keep_pos.dedup();
    let trace_pos: Vec<usize> = (0..space.n_factors())
        .filter(|p| !keep_pos.contains(p))
        .collect();

    let strides = space.strides();
    let kept_factors: Vec<(&str, usize)> = keep_pos
        .iter()
        .map(|&p| (space.factors()[p].label.as_str(), space.factors()[p].dim))
        .collect();
    let out_space = HilbertSpace::new(&kept_factors)?;

    // Offset tables: composite index = keep_offset[a] + trace_offset[t].
    let offsets = |positions: &[usize]| -> Vec<usize> {
        let dims: Vec<usize> = positions.iter().map(|&p| space.factors()[p].dim).collect();
        let total: usize = dims.iter().product();
        (0..total)
            .map(|mut i| {
                let mut off = 0usize;
                for k in (0..positions.len()).rev() {
                    off += (i % dims[k]) * strides[positions[k]];
                    i /= dims[k];
                }
                off
            })
            .collect()
    };
    let keep_off = offsets(&keep_pos);
    let trace_off = offsets(&trace_pos);

    let dk = out_space.dim();
    let mut out = CMat::zeros(dk, dk);
    let m = rho.matrix();
    for (a, &oa) in keep_off.iter().enumerate() {
        for (b, &ob) in keep_off.iter().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for &ot in &trace_off {
                s += m[(oa + ot, ob + ot)];
            }
            out[(a, b)] = s;
        }
    }
    Ok(DensityMatrix::new_unchecked(out_space, out))
}

/// Partial trace of a pure state's density matrix.
pub fn partial_trace_state(psi: &StateVector, keep: &[&str]) -> Result<DensityMatrix> {
    partial_trace(&psi.density(), keep)
}

/// Von Neumann entropy in bits: `-sum p_i log2 p_i` over the spectrum,
/// with eigenvalues below 1e-12 contributing zero.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .iter()
        .filter(|&&p| p > ENTROPY_EIGVAL_FLOOR)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Squared overlap `|<a|b>|^2`. Symmetric and global-phase invariant.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hermitian(rng: &mut impl Rng, d: usize) -> CMat {
        let raw = CMat::from_fn(d, d, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        (&raw + raw.adjoint()) * c(0.5, 0.0)
    }

    fn sigma_x() -> CMat {
        CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn sigma_z() -> CMat {
        CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    #[test]
    fn space_invariants() {
        let sp = HilbertSpace::new(&[("a", 3), ("b", 2)]).unwrap();
        assert_eq!(sp.dim(), 6);
        assert_eq!(sp.strides(), vec![2, 1]);
        assert_eq!(sp.index_of(&[2, 1]).unwrap(), 5);
        assert_eq!(sp.digits_of(5), vec![2, 1]);
        assert!(HilbertSpace::new(&[("a", 1)]).is_err());
        assert!(HilbertSpace::new(&[("a", 2), ("a", 2)]).is_err());
    }

    #[test]
    fn embed_identity_is_identity() {
        let sp = HilbertSpace::new(&[("a", 3), ("b", 2), ("c", 4)]).unwrap();
        for label in ["a", "b", "c"] {
            let d = sp.factor_dim(label).unwrap();
            let op = Operator::on_site(label, CMat::identity(d, d)).unwrap();
            let full = tensor_embed(&op, label, &sp).unwrap();
            assert_eq!(full.matrix(), Operator::identity(&sp).matrix());
        }
    }

    #[test]
    fn embed_basis_action() {
        // |s><g| on atom 1 of a (3,3) space maps |g g> to |s g>.
        let sp = HilbertSpace::new(&[("a1", 3), ("a2", 3)]).unwrap();
        let mut raise = CMat::zeros(3, 3);
        raise[(1, 0)] = c(1.0, 0.0); // levels: 0 = g, 1 = s, 2 = r
        let op = Operator::on_site("a1", raise).unwrap();
        let full = tensor_embed(&op, "a1", &sp).unwrap();
        let gg = StateVector::basis(&sp, &[0, 0]).unwrap();
        let sg = StateVector::basis(&sp, &[1, 0]).unwrap();
        let out = full.apply(&gg).unwrap();
        assert!((out.inner(&sg).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn embed_matches_kronecker_oracle() {
        // Brute-force oracle: I (x) sigma_x (x) I (x) I assembled directly.
        let sp = HilbertSpace::four_qubits();
        let op = Operator::on_site("a2", sigma_x()).unwrap();
        let emb = tensor_embed(&op, "a2", &sp).unwrap();
        let eye2 = CMat::identity(2, 2);
        let oracle = eye2.kronecker(&sigma_x()).kronecker(&eye2).kronecker(&eye2);
        assert!((emb.matrix() - oracle).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn embeds_on_disjoint_sites_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sp = HilbertSpace::new(&[("a", 2), ("b", 3), ("c", 2)]).unwrap();
        for _ in 0..5 {
            let a = Operator::on_site("a", random_hermitian(&mut rng, 2)).unwrap();
            let b = Operator::on_site("b", random_hermitian(&mut rng, 3)).unwrap();
            let ea = tensor_embed(&a, "a", &sp).unwrap();
            let eb = tensor_embed(&b, "b", &sp).unwrap();
            let ab = ea.matmul(&eb).unwrap();
            let ba = eb.matmul(&ea).unwrap();
            let diff = (ab.matrix() - ba.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn embed_rejects_bad_input() {
        let sp = HilbertSpace::four_qubits();
        let op = Operator::on_site("x", CMat::identity(2, 2)).unwrap();
        assert!(tensor_embed(&op, "nope", &sp).is_err());
        let op3 = Operator::on_site("x", CMat::identity(3, 3)).unwrap();
        assert!(tensor_embed(&op3, "a1", &sp).is_err());
    }

    #[test]
    fn propagator_of_zero_is_identity() {
        let sp = HilbertSpace::single("q", 4);
        let h = Operator::zero(&sp);
        let u = propagator(&h, 1.7).unwrap();
        assert!(u.unitarity_error() < 1e-12);
        let eye = CMat::identity(4, 4);
        assert!((u.matrix() - eye).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn propagator_two_level_full_period() {
        // H = omega sigma_z / 2 at dt = 2 pi / omega gives diag(-1, -1).
        let omega = 0.83;
        let sp = HilbertSpace::single("q", 2);
        let h = Operator::new(sp, sigma_z() * c(omega / 2.0, 0.0)).unwrap();
        let u = propagator(&h, 2.0 * std::f64::consts::PI / omega).unwrap();
        let minus_eye = CMat::identity(2, 2) * c(-1.0, 0.0);
        assert!((u.matrix() - minus_eye).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn propagator_matches_taylor_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sp = HilbertSpace::single("q", 6);
        let h = Operator::new(sp, random_hermitian(&mut rng, 6)).unwrap();
        let dt = 0.37;
        let u = propagator(&h, dt).unwrap();
        // Independent oracle: partial sums of exp(-i H dt).
        let a = h.matrix() * c(0.0, -dt);
        let mut term = CMat::identity(6, 6);
        let mut series = CMat::identity(6, 6);
        for k in 1..60 {
            term = (&term * &a) / c(k as f64, 0.0);
            series += &term;
        }
        let diff = (u.matrix() - series).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "taylor mismatch {diff:.3e}");
        assert!(u.unitarity_error() < 1e-10);
    }

    #[test]
    fn propagator_composes_over_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sp = HilbertSpace::single("q", 5);
        let h = Operator::new(sp, random_hermitian(&mut rng, 5)).unwrap();
        let u1 = propagator(&h, 0.4).unwrap();
        let u2 = propagator(&h, 1.1).unwrap();
        let u12 = propagator(&h, 1.5).unwrap();
        let prod = u1.matmul(&u2).unwrap();
        let diff = (prod.matrix() - u12.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn propagator_rejects_non_hermitian() {
        let sp = HilbertSpace::single("q", 2);
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        let h = Operator::new(sp, m).unwrap();
        assert!(propagator(&h, 1.0).is_err());
    }

    #[test]
    fn partial_trace_product_state() {
        let sp = HilbertSpace::new(&[("a", 2), ("b", 2)]).unwrap();
        let psi = StateVector::basis(&sp, &[0, 1]).unwrap();
        let red = partial_trace_state(&psi, &["a"]).unwrap();
        assert!((red.matrix()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((red.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_bell_state_is_maximally_mixed() {
        let sp = HilbertSpace::new(&[("a", 2), ("b", 2)]).unwrap();
        let mut amps = CVec::zeros(4);
        amps[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amps[3] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = StateVector::new(sp, amps).unwrap();
        let red = partial_trace_state(&psi, &["a"]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((red.matrix()[(i, j)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
        assert!((von_neumann_entropy(&red) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_keeping_everything_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sp = HilbertSpace::new(&[("a", 2), ("b", 3)]).unwrap();
        let amps = CVec::from_fn(6, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let psi = StateVector::new(sp, amps).unwrap().normalized().unwrap();
        let red = partial_trace_state(&psi, &["a", "b"]).unwrap();
        let full = psi.density();
        let diff = (red.matrix() - full.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
        assert!(von_neumann_entropy(&red).abs() < 1e-9);
    }

    #[test]
    fn partial_trace_rejects_empty_keep() {
        let sp = HilbertSpace::four_qubits();
        let psi = StateVector::basis(&sp, &[0, 0, 0, 0]).unwrap();
        assert!(partial_trace_state(&psi, &[]).is_err());
    }

    #[test]
    fn partial_trace_matches_brute_force_oracle() {
        // Oracle: rho_keep = sum_t (I (x) <t|) rho (I (x) |t>) via explicit
        // kron matrices, tracing the second factor of a (2,3) space.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sp = HilbertSpace::new(&[("a", 2), ("b", 3)]).unwrap();
        let amps = CVec::from_fn(6, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let psi = StateVector::new(sp, amps).unwrap().normalized().unwrap();
        let red = partial_trace_state(&psi, &["a"]).unwrap();

        let rho = psi.density();
        let mut oracle = CMat::zeros(2, 2);
        for t in 0..3 {
            let mut bra_t = CMat::zeros(1, 3);
            bra_t[(0, t)] = c(1.0, 0.0);
            let proj = CMat::identity(2, 2).kronecker(&bra_t); // 2 x 6
            oracle += &proj * rho.matrix() * proj.adjoint();
        }
        let diff = (red.matrix() - oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn entropy_trivial_values() {
        let sp = HilbertSpace::single("q", 2);
        let pure = StateVector::basis(&sp, &[0]).unwrap().density();
        assert!(von_neumann_entropy(&pure).abs() < 1e-12);

        let mixed = DensityMatrix::new(sp.clone(), CMat::identity(2, 2) * c(0.5, 0.0)).unwrap();
        assert!((von_neumann_entropy(&mixed) - 1.0).abs() < 1e-12);

        let sp2 = HilbertSpace::new(&[("a", 2), ("b", 2)]).unwrap();
        let mixed2 = DensityMatrix::new(sp2, CMat::identity(4, 4) * c(0.25, 0.0)).unwrap();
        assert!((von_neumann_entropy(&mixed2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_trivial_values() {
        let sp = HilbertSpace::single("q", 2);
        let zero = StateVector::basis(&sp, &[0]).unwrap();
        let one = StateVector::basis(&sp, &[1]).unwrap();
        let mut plus_amp = CVec::zeros(2);
        plus_amp[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        plus_amp[1] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let plus = StateVector::new(sp, plus_amp).unwrap();

        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-14);
        assert!(fidelity(&zero, &one).unwrap() < 1e-14);
        assert!((fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fidelity_is_phase_invariant_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sp = HilbertSpace::single("q", 4);
        for _ in 0..10 {
            let a = StateVector::new(
                sp.clone(),
                CVec::from_fn(4, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
            )
            .unwrap()
            .normalized()
            .unwrap();
            let b = StateVector::new(
                sp.clone(),
                CVec::from_fn(4, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
            )
            .unwrap()
            .normalized()
            .unwrap();
            let f = fidelity(&a, &b).unwrap();
            let phase = C64::new(0.0, rng.gen::<f64>() * 6.28).exp();
            let b2 = StateVector::new(sp.clone(), b.amplitudes() * phase).unwrap();
            assert!((fidelity(&a, &b2).unwrap() - f).abs() < 1e-12);
            assert!((fidelity(&b, &a).unwrap() - f).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_rejects_space_mismatch() {
        let a = StateVector::basis(&HilbertSpace::single("q", 2), &[0]).unwrap();
        let b = StateVector::basis(&HilbertSpace::single("r", 2), &[0]).unwrap();
        assert!(fidelity(&a, &b).is_err());
    }

    #[test]
    fn density_matrix_rejects_bad_eigenvalues() {
        let sp = HilbertSpace::single("q", 2);
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = c(1.5, 0.0);
        m[(1, 1)] = c(-0.5, 0.0);
        assert!(DensityMatrix::new(sp, m).is_err());
    }
}
