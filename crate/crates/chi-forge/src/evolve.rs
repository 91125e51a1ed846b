//! Time-evolution engines.
//!
//! Hamiltonians are sums of sparse constant matrices with rotating phase
//! factors, `H(t) = sum_k [ e^{i w_k t} A_k (+ H.c.) ]`. A fixed-step
//! classical 4th-order scheme integrates the Schrodinger and Lindblad
//! equations; the effective-model evolution has a closed form built from
//! commuting x-axis rotations.

use crate::error::{ChiError, Result};
use crate::statespace::{DensityMatrix, HilbertSpace, Operator, StateVector};
use crate::{C64, CMat, CVec};

/// Cumulative norm drift above which a unitary run is aborted.
pub const NORM_DRIFT_ABORT: f64 = 1e-6;
/// Cumulative trace drift above which a Lindblad run is aborted.
pub const TRACE_DRIFT_ABORT: f64 = 1e-4;

/// Sparse matrix in coordinate form, for fast matrix-vector products.
#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(u32, u32, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMat) -> Self {
        let dim = m.nrows();
        let mut entries = Vec::new();
        for i in 0..dim {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.norm_sqr() > 0.0 {
                    entries.push((i as u32, j as u32, v));
                }
            }
        }
        Self { dim, entries }
    }

    pub fn dagger(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, v)| (j, i, v.conj())).collect(),
        }
    }

    /// `y += c * (A x)`.
    #[inline]
    pub fn matvec_add(&self, c: C64, x: &CVec, y: &mut CVec) {
        for &(i, j, v) in &self.entries {
            y[i as usize] += c * v * x[j as usize];
        }
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i as usize, j as usize)] += v;
        }
        m
    }

    /// Max absolute row sum; an upper bound for the spectral norm.
    pub fn row_sum_norm(&self) -> f64 {
        let mut rows = vec![0.0f64; self.dim];
        for &(i, _, v) in &self.entries {
            rows[i as usize] += v.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}

/// One rotating term of a Hamiltonian: `e^{i freq t} A`, optionally plus
/// its Hermitian conjugate.
#[derive(Debug, Clone)]
pub struct HTerm {
    pub freq: f64,
    op: SparseOp,
    op_dag: SparseOp,
    pub with_conjugate: bool,
}

impl HTerm {
    /// Rotating term `e^{i freq t} A + H.c.`.
    pub fn rotating(freq: f64, op: &Operator) -> Self {
        let sp = SparseOp::from_dense(op.matrix());
        let dag = sp.dagger();
        Self { freq, op: sp, op_dag: dag, with_conjugate: true }
    }

    /// Static Hermitian term.
    pub fn constant(op: &Operator) -> Self {
        let sp = SparseOp::from_dense(op.matrix());
        let dag = sp.dagger();
        Self { freq: 0.0, op: sp, op_dag: dag, with_conjugate: false }
    }
}

/// A Hermitian operator-valued function of time.
pub struct TimeDependentOperator {
    space: HilbertSpace,
    terms: Vec<HTerm>,
}

impl TimeDependentOperator {
    pub fn new(space: HilbertSpace, terms: Vec<HTerm>) -> Self {
        Self { space, terms }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn terms(&self) -> &[HTerm] {
        &self.terms
    }

    /// Largest phase rate among terms.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.freq.abs()).fold(0.0, f64::max)
    }

    /// Cheap upper bound on `max_t ||H(t)||`.
    pub fn norm_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.op.row_sum_norm() * if t.with_conjugate { 2.0 } else { 1.0 })
            .sum()
    }

    /// Dense matrix of `H(t)`.
    pub fn eval(&self, t: f64) -> Operator {
        let d = self.space.dim();
        let mut m = CMat::zeros(d, d);
        for term in &self.terms {
            let phase = C64::new(0.0, term.freq * t).exp();
            m += term.op.to_dense() * phase;
            if term.with_conjugate {
                m += term.op_dag.to_dense() * phase.conj();
            }
        }
        Operator::new(self.space.clone(), m).expect("terms match the space dimension")
    }

    /// `y = -i H(t) x` without materializing the dense matrix.
    #[inline]
    fn schrodinger_rhs(&self, t: f64, x: &CVec, y: &mut CVec) {
        y.fill(C64::new(0.0, 0.0));
        let minus_i = C64::new(0.0, -1.0);
        for term in &self.terms {
            let phase = C64::new(0.0, term.freq * t).exp();
            term.op.matvec_add(minus_i * phase, x, y);
            if term.with_conjugate {
                term.op_dag.matvec_add(minus_i * phase.conj(), x, y);
            }
        }
    }

    /// Conjugate every term by a fixed unitary: `H -> U^dagger H U`.
    pub fn conjugated(&self, u: &Operator) -> Result<TimeDependentOperator> {
        if *u.space() != self.space {
            return Err(ChiError::SpaceMismatch("conjugating unitary on wrong space".into()));
        }
        let udag = u.dagger();
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let dense = t.op.to_dense();
                let conj = udag.matrix() * dense * u.matrix();
                let sp = SparseOp::from_dense(&conj);
                let dag = sp.dagger();
                HTerm {
                    freq: t.freq,
                    op: sp,
                    op_dag: dag,
                    with_conjugate: t.with_conjugate,
                }
            })
            .collect();
        Ok(TimeDependentOperator::new(self.space.clone(), terms))
    }
}

/// A Lindblad collapse channel.
#[derive(Debug, Clone)]
pub struct CollapseChannel {
    pub op: Operator,
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(op: Operator, rate: f64) -> Result<Self> {
        if rate < 0.0 {
            return Err(ChiError::Config(format!("collapse rate {rate} < 0")));
        }
        Ok(Self { op, rate })
    }
}

/// Outcome of a unitary integration.
pub struct Propagated {
    pub state: StateVector,
    /// Accumulated per-step deviation of the norm from 1 (before the
    /// per-step renormalization).
    pub norm_drift: f64,
    pub steps: usize,
}

fn step_count(h: &TimeDependentOperator, t0: f64, t1: f64, steps_per_period: usize) -> (usize, f64) {
    let span = t1 - t0;
    if span == 0.0 {
        return (0, 0.0);
    }
    let scale = h.max_frequency().max(h.norm_bound()).max(1e-9);
    let dt_target = 2.0 * std::f64::consts::PI / (steps_per_period as f64 * scale);
    let steps = (span / dt_target).ceil().max(1.0) as usize;
    (steps, span / steps as f64)
}

/// Integrate `i d psi/dt = H(t) psi` from `t0` to `t1` with a fixed-step
/// classical 4th-order scheme. The state is renormalized each step and the
/// accumulated drift is recorded; drift beyond [`NORM_DRIFT_ABORT`] aborts.
pub fn integrate_unitary(
    h: &TimeDependentOperator,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    steps_per_period: usize,
) -> Result<Propagated> {
    integrate_unitary_observed(h, psi0, t0, t1, steps_per_period, usize::MAX, |_, _| {})
}

/// [`integrate_unitary`] with an observer called every `observe_every`
/// steps (and after the final step).
pub fn integrate_unitary_observed(
    h: &TimeDependentOperator,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    steps_per_period: usize,
    observe_every: usize,
    mut observe: impl FnMut(f64, &CVec),
) -> Result<Propagated> {
    if *psi0.space() != *h.space() {
        return Err(ChiError::SpaceMismatch("state and Hamiltonian spaces differ".into()));
    }
    if t1 < t0 {
        return Err(ChiError::Config(format!("t1 = {t1} < t0 = {t0}")));
    }
    if steps_per_period < 20 {
        return Err(ChiError::Config(format!(
            "steps_per_period = {steps_per_period} < 20"
        )));
    }
    let (steps, dt) = step_count(h, t0, t1, steps_per_period);
    let d = h.space().dim();
    let mut x = psi0.amplitudes().clone();
    let mut k1 = CVec::zeros(d);
    let mut k2 = CVec::zeros(d);
    let mut k3 = CVec::zeros(d);
    let mut k4 = CVec::zeros(d);
    let mut tmp = CVec::zeros(d);
    let mut drift = 0.0f64;
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        h.schrodinger_rhs(t, &x, &mut k1);
        tmp.copy_from(&x);
        tmp.axpy(half, &k1, C64::new(1.0, 0.0));
        h.schrodinger_rhs(t + dt / 2.0, &tmp, &mut k2);
        tmp.copy_from(&x);
        tmp.axpy(half, &k2, C64::new(1.0, 0.0));
        h.schrodinger_rhs(t + dt / 2.0, &tmp, &mut k3);
        tmp.copy_from(&x);
        tmp.axpy(full, &k3, C64::new(1.0, 0.0));
        h.schrodinger_rhs(t + dt, &tmp, &mut k4);

        // x += dt/6 (k1 + 2 k2 + 2 k3 + k4)
        tmp.copy_from(&k1);
        tmp.axpy(two, &k2, C64::new(1.0, 0.0));
        tmp.axpy(two, &k3, C64::new(1.0, 0.0));
        tmp.axpy(C64::new(1.0, 0.0), &k4, C64::new(1.0, 0.0));
        x.axpy(sixth, &tmp, C64::new(1.0, 0.0));

        let n = x.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(ChiError::Integration(format!(
                "non-finite amplitudes at step {step} (t = {t:.6})"
            )));
        }
        drift += (1.0 - n).abs();
        if drift > NORM_DRIFT_ABORT {
            return Err(ChiError::Integration(format!(
                "norm drift {drift:.3e} exceeds {NORM_DRIFT_ABORT:.0e}; step too large"
            )));
        }
        x /= C64::new(n, 0.0);

        if observe_every != usize::MAX && ((step + 1) % observe_every == 0 || step + 1 == steps) {
            observe(t + dt, &x);
        }
    }
    Ok(Propagated {
        state: StateVector::new(h.space().clone(), x)?,
        norm_drift: drift,
        steps,
    })
}

/// Outcome of a Lindblad integration.
pub struct PropagatedDensity {
    pub rho: DensityMatrix,
    pub trace_drift: f64,
    pub steps: usize,
}

/// Integrate the Lindblad master equation
/// `d rho/dt = -i [H, rho] + sum_k rate_k (L rho L^dag - {L^dag L, rho}/2)`.
/// The density matrix is re-symmetrized every step; trace drift beyond
/// [`TRACE_DRIFT_ABORT`] aborts, and a final eigenvalue below -1e-6 is an
/// error.
pub fn integrate_lindblad(
    h: &TimeDependentOperator,
    channels: &[CollapseChannel],
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    steps_per_period: usize,
) -> Result<PropagatedDensity> {
    if *rho0.space() != *h.space() {
        return Err(ChiError::SpaceMismatch("density and Hamiltonian spaces differ".into()));
    }
    if steps_per_period < 20 {
        return Err(ChiError::Config(format!(
            "steps_per_period = {steps_per_period} < 20"
        )));
    }
    for ch in channels {
        if *ch.op.space() != *h.space() {
            return Err(ChiError::SpaceMismatch("collapse operator on wrong space".into()));
        }
        if ch.rate < 0.0 {
            return Err(ChiError::Config(format!("collapse rate {} < 0", ch.rate)));
        }
    }
    // Include the dissipative rates in the step-size scale.
    let rate_scale: f64 = channels
        .iter()
        .map(|ch| ch.rate * ch.op.matrix().norm() * ch.op.matrix().norm())
        .sum();
    let scale = h.max_frequency().max(h.norm_bound()).max(rate_scale).max(1e-9);
    let span = t1 - t0;
    let (steps, dt) = if span == 0.0 {
        (0usize, 0.0)
    } else {
        let dt_target = 2.0 * std::f64::consts::PI / (steps_per_period as f64 * scale);
        let n = (span / dt_target).ceil().max(1.0) as usize;
        (n, span / n as f64)
    };

    let ls: Vec<CMat> = channels.iter().map(|c| c.op.matrix().clone()).collect();
    let ldags: Vec<CMat> = ls.iter().map(|l| l.adjoint()).collect();
    let ldag_ls: Vec<CMat> = ls.iter().zip(&ldags).map(|(l, ld)| ld * l).collect();
    let rates: Vec<f64> = channels.iter().map(|c| c.rate).collect();

    let rhs = |t: f64, r: &CMat| -> CMat {
        let hm = h.eval(t);
        let hmat = hm.matrix();
        let mut out = (hmat * r - r * hmat) * C64::new(0.0, -1.0);
        for ((l, (ld, m)), &g) in ls.iter().zip(ldags.iter().zip(&ldag_ls)).zip(&rates) {
            if g == 0.0 {
                continue;
            }
            let jump = l * r * ld;
            let anti = (m * r + r * m) * C64::new(0.5, 0.0);
            out += (jump - anti) * C64::new(g, 0.0);
        }
        out
    };

    let mut r = rho0.matrix().clone();
    let mut drift = 0.0f64;
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let k1 = rhs(t, &r);
        let k2 = rhs(t + dt / 2.0, &(&r + &k1 * C64::new(dt / 2.0, 0.0)));
        let k3 = rhs(t + dt / 2.0, &(&r + &k2 * C64::new(dt / 2.0, 0.0)));
        let k4 = rhs(t + dt, &(&r + &k3 * C64::new(dt, 0.0)));
        r += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
            * C64::new(dt / 6.0, 0.0);
        // enforce Hermiticity
        r = (&r + r.adjoint()) * C64::new(0.5, 0.0);
        let tr: f64 = r.diagonal().iter().map(|z| z.re).sum();
        if !tr.is_finite() {
            return Err(ChiError::Integration(format!(
                "non-finite trace at step {step} (t = {t:.6})"
            )));
        }
        drift = drift.max((1.0 - tr).abs());
        if drift > TRACE_DRIFT_ABORT {
            return Err(ChiError::Integration(format!(
                "trace drift {drift:.3e} exceeds {TRACE_DRIFT_ABORT:.0e}"
            )));
        }
    }

    let rho = DensityMatrix::new_unchecked(h.space().clone(), r);
    let min_eig = rho.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-6 {
        return Err(ChiError::Integration(format!(
            "density matrix eigenvalue {min_eig:.3e} below -1e-6"
        )));
    }
    Ok(PropagatedDensity { rho, trace_drift: drift, steps })
}

/// Apply `exp(-i theta X_a X_b)` in place on two 2-dimensional factors.
pub fn apply_xx_rotation(psi: &mut StateVector, site_a: &str, site_b: &str, theta: f64) -> Result<()> {
    let space = psi.space().clone();
    let pa = space.position(site_a)?;
    let pb = space.position(site_b)?;
    if pa == pb {
        return Err(ChiError::Config("xx rotation needs two distinct sites".into()));
    }
    for p in [pa, pb] {
        if space.factors()[p].dim != 2 {
            return Err(ChiError::DimensionMismatch(format!(
                "xx rotation on non-qubit factor `{}`",
                space.factors()[p].label
            )));
        }
    }
    let strides = space.strides();
    // order so sa > sb, avoiding underflow in orbit arithmetic
    let (sa, sb) = if strides[pa] > strides[pb] {
        (strides[pa], strides[pb])
    } else {
        (strides[pb], strides[pa])
    };
    let cos = C64::new(theta.cos(), 0.0);
    let misin = C64::new(0.0, -theta.sin());
    let amps = psi.amplitudes_mut();
    let dim = amps.len();
    for i in 0..dim {
        let da = (i / sa) % 2;
        let db = (i / sb) % 2;
        if da == 0 && db == 0 {
            // orbit representatives {|00>,|11>} and {|01>,|10>}
            let j = i + sa + sb;
            let (u, v) = (amps[i], amps[j]);
            amps[i] = cos * u + misin * v;
            amps[j] = cos * v + misin * u;
        } else if da == 0 && db == 1 {
            let j = i + sa - sb;
            let (u, v) = (amps[i], amps[j]);
            amps[i] = cos * u + misin * v;
            amps[j] = cos * v + misin * u;
        }
    }
    Ok(())
}

/// Apply `exp(-i theta X_a)` in place on a 2-dimensional factor.
pub fn apply_x_rotation(psi: &mut StateVector, site: &str, theta: f64) -> Result<()> {
    let space = psi.space().clone();
    let p = space.position(site)?;
    if space.factors()[p].dim != 2 {
        return Err(ChiError::DimensionMismatch(format!(
            "x rotation on non-qubit factor `{site}`"
        )));
    }
    let s = space.strides()[p];
    let cos = C64::new(theta.cos(), 0.0);
    let misin = C64::new(0.0, -theta.sin());
    let amps = psi.amplitudes_mut();
    let dim = amps.len();
    for i in 0..dim {
        if (i / s) % 2 == 0 {
            let j = i + s;
            let (u, v) = (amps[i], amps[j]);
            amps[i] = cos * u + misin * v;
            amps[j] = cos * v + misin * u;
        }
    }
    Ok(())
}

/// A pair of atoms with its dispersive coupling strength.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairCoupling {
    /// 0-based atom indices.
    pub a: usize,
    pub b: usize,
    /// Coupling strength in units of g.
    pub beta: f64,
}

/// Closed-form evolution of the effective model over one drive segment:
/// `exp(-i H0 t) exp(-i H_eff t)` with
/// `H_eff = sum_pairs beta X X + (alpha energy shifts)` and
/// `H0 = sum_l omega_s X_l` in the (g,s) basis. Both factors are built from
/// commuting x-axis rotations. The alpha energy shifts are proportional to
/// the identity and are returned as an accumulated global phase (radians)
/// rather than applied to the state.
pub fn evolve_step_analytic(
    pairs: &[PairCoupling],
    alpha_sum: f64,
    omega_s: f64,
    t: f64,
    psi0: &StateVector,
) -> Result<(StateVector, f64)> {
    let angles: Vec<(usize, usize, f64)> =
        pairs.iter().map(|p| (p.a, p.b, p.beta * t)).collect();
    evolve_step_analytic_angles(&angles, omega_s * t, psi0).map(|s| (s, -alpha_sum * t))
}

/// Same as [`evolve_step_analytic`] but with explicit entangling and drive
/// angles, as needed by the timing-error models.
pub fn evolve_step_analytic_angles(
    pair_angles: &[(usize, usize, f64)],
    x_angle: f64,
    psi0: &StateVector,
) -> Result<StateVector> {
    let mut seen = [false; 4];
    for &(a, b, _) in pair_angles {
        for idx in [a, b] {
            if idx >= 4 {
                return Err(ChiError::Config(format!("atom index {idx} out of range")));
            }
            if seen[idx] {
                return Err(ChiError::Physics(format!(
                    "overlapping pairs: atom {} appears twice",
                    idx + 1
                )));
            }
            seen[idx] = true;
        }
    }
    let labels = ["a1", "a2", "a3", "a4"];
    let mut psi = psi0.clone();
    for &(a, b, theta) in pair_angles {
        apply_xx_rotation(&mut psi, labels[a], labels[b], theta)?;
    }
    for label in labels {
        if psi.space().position(label).is_ok() {
            apply_x_rotation(&mut psi, label, x_angle)?;
        }
    }
    Ok(psi)
}
