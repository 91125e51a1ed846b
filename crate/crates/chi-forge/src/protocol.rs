//! The two-step entangling protocol and its execution engines.
//!
//! Step 1 entangles the (1,2) and (3,4) pairs; step 2 drives only atoms 2
//! and 3 so that just the (2,3) pair entangles. Each step lasts until the
//! pair rotation reaches pi/4 while the always-on drive completes an
//! integer number of half-periods. A final single-atom phase gate on atoms
//! 1 and 3 turns the result into the four-particle chi state.

use crate::error::{ChiError, Result};
use crate::evolve::{
    evolve_step_analytic_angles, integrate_unitary, integrate_unitary_observed,
    PairCoupling,
};
use crate::model::{
    build_h_full, build_h_ground, build_h_reduced, derive_params, AtomDrive, SystemParams,
};
use crate::statespace::{tensor_embed, HilbertSpace, Operator, StateVector};
use crate::{C64, CMat};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative beta mismatch between the pair couplings of one step above
/// which the schedule is rejected.
pub const BETA_MISMATCH_ABORT: f64 = 0.02;

/// Relative beta mismatch above which a warning is recorded.
pub const BETA_MISMATCH_WARN: f64 = 0.005;

/// Minimum acceptable weight of the monitored-subspace projection at the
/// end of a step (vacuum cavity, no excited level).
pub const MIN_PROJECTION_WEIGHT: f64 = 0.5;

/// Which level of the model hierarchy executes the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Closed-form pair rotations; no integration.
    Analytic,
    /// Numerical integration of the dispersive four-qubit Hamiltonian.
    EffectiveNumeric,
    /// Rotating-frame atom-cavity model without the fast drive terms.
    ReducedNumeric,
    /// Ground-manifold atom-cavity model with drive and Stark shifts.
    GroundNumeric,
    /// Full three-level atoms coupled to the cavity.
    FullNumeric,
}

impl Engine {
    pub const ALL: [Engine; 5] = [
        Engine::Analytic,
        Engine::EffectiveNumeric,
        Engine::ReducedNumeric,
        Engine::GroundNumeric,
        Engine::FullNumeric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::EffectiveNumeric => "effective_numeric",
            Engine::ReducedNumeric => "reduced_numeric",
            Engine::GroundNumeric => "ground_numeric",
            Engine::FullNumeric => "full_numeric",
        }
    }

    /// Whether the always-on drive is part of the integrated Hamiltonian
    /// (rather than applied as explicit rotations after each step).
    pub fn drive_is_intrinsic(self) -> bool {
        matches!(self, Engine::GroundNumeric | Engine::FullNumeric)
    }

    pub fn uses_cavity(self) -> bool {
        !matches!(self, Engine::Analytic | Engine::EffectiveNumeric)
    }
}

/// How a fractional timing error n perturbs a step of duration t(1 + n).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModel {
    /// Only the slow pair rotation accumulates the extra angle; the fast
    /// drive phase stays locked to its nearest half-period.
    #[default]
    BetaOnly,
    /// Every phase in the step scales with the mistimed duration.
    FullPhase,
}

impl ErrorModel {
    pub fn name(self) -> &'static str {
        match self {
            ErrorModel::BetaOnly => "beta_only",
            ErrorModel::FullPhase => "full_phase",
        }
    }
}

/// Fractional timing error per protocol step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingError {
    pub n1: f64,
    pub n2: f64,
}

impl TimingError {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(n1: f64, n2: f64) -> Self {
        Self { n1, n2 }
    }

    fn for_step(&self, step: usize) -> f64 {
        if step == 0 {
            self.n1
        } else {
            self.n2
        }
    }
}

/// Single-atom gate applied after the unitary schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalGate {
    /// diag(1, i) in the (g, s) basis.
    PhaseS,
}

impl LocalGate {
    pub fn matrix(self) -> CMat {
        match self {
            LocalGate::PhaseS => {
                let mut m = CMat::identity(2, 2);
                m[(1, 1)] = C64::new(0.0, 1.0);
                m
            }
        }
    }
}

/// One timed segment of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    /// Drive configuration during the segment (atom order 1..4).
    pub drives: [AtomDrive; 4],
    /// Segment duration in units of 1/g.
    pub duration: f64,
    /// Pair couplings the segment is designed to realize, with the nominal
    /// (schedule) beta used by the dispersive engines.
    pub pairs: Vec<PairCoupling>,
    /// Total dispersive self-shift, summed over driven atoms.
    pub alpha_sum: f64,
}

/// A full executable protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Base parameters (drive fields are overridden per step).
    pub base: SystemParams,
    pub steps: Vec<ScheduleStep>,
    /// Post-schedule single-atom gates, as (atom index, gate).
    pub post_unitaries: Vec<(usize, LocalGate)>,
    /// Label order of the target state relative to physical order 1234.
    pub label_order: [usize; 4],
    /// Notes accumulated while building the schedule.
    pub warnings: Vec<String>,
}

/// Result of one protocol execution.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Final four-qubit state (cavity and excited level projected out).
    pub state: StateVector,
    /// Weight of the monitored subspace at the end of each step, for
    /// engines that carry a cavity (1.0 otherwise).
    pub projection_weights: Vec<f64>,
    /// Largest excited-level population seen during the run
    /// (full engine only).
    pub max_r_leakage: f64,
    /// Accumulated norm drift of the integrator.
    pub norm_drift: f64,
}

/// Integration controls for the numeric engines.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunOptions {
    /// RK4 steps per shortest period.
    pub steps_per_period: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { steps_per_period: 200 }
    }
}

/// Pick the always-on drive so that `Omega_S t1` is an integer multiple of
/// pi, as close to the target as possible. Returns (omega_s, n).
pub fn choose_omega_s(target: f64, t1: f64) -> Result<(f64, usize)> {
    if t1 <= 0.0 || target <= 0.0 {
        return Err(ChiError::Config(format!(
            "choose_omega_s needs positive target and duration (got {target}, {t1})"
        )));
    }
    let n = (target * t1 / PI).round() as i64;
    if n < 1 {
        return Err(ChiError::Physics(format!(
            "no positive half-period count fits Omega_S target {target} over t1 = {t1}"
        )));
    }
    let n = n as usize;
    Ok((n as f64 * PI / t1, n))
}

/// Build the two-step chi-state protocol from a step-1 parameter set.
/// Atoms 1,2 carry drive A and atoms 3,4 drive B in step 1; in step 2 only
/// atoms 2 and 3 are driven (both with drive A), entangling the (2,3) pair
/// alone. Step durations are pi/(4 beta) using the drive-A pair coupling;
/// the drive-B coupling must match it to within 2%. Omega_S is tuned to
/// the nearest half-period lock.
pub fn chi_protocol(params: &SystemParams) -> Result<Protocol> {
    params.validate()?;
    let d = derive_params(params)?;
    for l in 0..4 {
        if !params.drives[l].is_on() {
            return Err(ChiError::Config(format!(
                "chi protocol needs all four atoms driven; atom {} is off",
                l + 1
            )));
        }
    }
    if params.drives[0] != params.drives[1] || params.drives[2] != params.drives[3] {
        return Err(ChiError::Config(
            "chi protocol expects equal drives within pairs (1,2) and (3,4)".into(),
        ));
    }
    let beta_a = d.beta(0, 1);
    let beta_b = d.beta(2, 3);
    if beta_a <= 0.0 || beta_b <= 0.0 {
        return Err(ChiError::Physics(format!(
            "pair couplings must be positive (got {beta_a:.3e}, {beta_b:.3e})"
        )));
    }
    let mismatch = (beta_b / beta_a - 1.0).abs();
    if mismatch > BETA_MISMATCH_ABORT {
        return Err(ChiError::Physics(format!(
            "pair couplings differ by {:.2}% (> {:.0}%): step durations cannot \
             satisfy both pairs",
            mismatch * 100.0,
            BETA_MISMATCH_ABORT * 100.0
        )));
    }
    let mut warnings = Vec::new();
    if mismatch > BETA_MISMATCH_WARN {
        warnings.push(format!(
            "pair couplings differ by {:.3}%; the schedule uses the (1,2) value \
             for both pairs",
            mismatch * 100.0
        ));
    }
    let t1 = PI / (4.0 * beta_a);
    let (omega_s, n_half) = choose_omega_s(params.omega_s, t1)?;
    if (omega_s / params.omega_s - 1.0).abs() > 0.05 {
        warnings.push(format!(
            "half-period lock moved Omega_S from {} to {:.6} (n = {n_half})",
            params.omega_s, omega_s
        ));
    }
    let mut base = params.clone();
    base.omega_s = omega_s;

    // both pairs of a step run at the schedule beta so that exactly pi/4 of
    // pair rotation accumulates over t1 in the dispersive engines
    let step1 = ScheduleStep {
        drives: base.drives,
        duration: t1,
        pairs: vec![
            PairCoupling { a: 0, b: 1, beta: beta_a },
            PairCoupling { a: 2, b: 3, beta: beta_a },
        ],
        alpha_sum: (0..4).map(|l| d.alpha[l]).sum(),
    };
    // step 2: only atoms 2 and 3 are driven (with the pair-A drive), so
    // only the (2,3) pair entangles; its coupling equals beta_a exactly
    let drives2 = [
        AtomDrive::off(),
        base.drives[0],
        base.drives[0],
        AtomDrive::off(),
    ];
    let step2 = ScheduleStep {
        drives: drives2,
        duration: t1,
        pairs: vec![PairCoupling { a: 1, b: 2, beta: beta_a }],
        alpha_sum: 2.0 * d.alpha[0],
    };
    Ok(Protocol {
        base,
        steps: vec![step1, step2],
        post_unitaries: vec![(0, LocalGate::PhaseS), (2, LocalGate::PhaseS)],
        label_order: [3, 2, 1, 4],
        warnings,
    })
}

/// The four-particle chi state targeted by the protocol, written on the
/// physical 1234 qubit order. Its defining label order is carried by
/// [`Protocol::label_order`].
pub fn chi_target() -> StateVector {
    let space = HilbertSpace::four_qubits();
    let amp = 0.5 * std::f64::consts::FRAC_1_SQRT_2;
    let mut v = vec![C64::new(0.0, 0.0); 16];
    // basis indices in physical order (atom1 = most significant digit)
    for &(idx, sign) in &[
        (0usize, 1.0),
        (3, 1.0),
        (5, -1.0),
        (6, 1.0),
        (9, -1.0),
        (10, 1.0),
        (12, 1.0),
        (15, 1.0),
    ] {
        v[idx] = C64::new(sign * amp, 0.0);
    }
    StateVector::new(space, crate::CVec::from_vec(v)).expect("chi target is well formed")
}

/// Ideal state after step 1: a product of two identically entangled pairs,
/// `(1/2)(|gggg> - i|ggss> - i|ssgg> - |ssss>)` on physical order 1234.
pub fn intermediate_after_step1() -> StateVector {
    let space = HilbertSpace::four_qubits();
    let mut v = vec![C64::new(0.0, 0.0); 16];
    v[0] = C64::new(0.5, 0.0);
    v[3] = C64::new(0.0, -0.5);
    v[12] = C64::new(0.0, -0.5);
    v[15] = C64::new(-0.5, 0.0);
    StateVector::new(space, crate::CVec::from_vec(v)).expect("intermediate state is well formed")
}

/// Ideal state after step 2, before the local phase gates.
pub fn chi_before_phase_gates() -> StateVector {
    let space = HilbertSpace::four_qubits();
    let mut v = vec![C64::new(0.0, 0.0); 16];
    // assembled by applying the inverse phase gates diag(1,-i) on atoms 1,3
    // to the chi target
    let chi = chi_target();
    for (idx, a) in chi.amplitudes().iter().enumerate() {
        let digits = chi.space().digits_of(idx);
        let mut phase = C64::new(1.0, 0.0);
        if digits[0] == 1 {
            phase *= C64::new(0.0, -1.0);
        }
        if digits[2] == 1 {
            phase *= C64::new(0.0, -1.0);
        }
        v[idx] = a * phase;
    }
    StateVector::new(space, crate::CVec::from_vec(v)).expect("pre-gate state is well formed")
}

/// Reorder a four-qubit state from physical order 1234 to a given label
/// order (entry k of `order` names the physical atom shown in slot k).
pub fn permute_labels(state: &StateVector, order: &[usize; 4]) -> Result<StateVector> {
    let space = state.space().clone();
    if space.dim() != 16 {
        return Err(ChiError::SpaceMismatch("label permutation needs a four-qubit state".into()));
    }
    let mut check = *order;
    check.sort_unstable();
    if check != [1, 2, 3, 4] {
        return Err(ChiError::Config(format!("invalid label order {order:?}")));
    }
    let mut v = vec![C64::new(0.0, 0.0); 16];
    for idx in 0..16 {
        let digits = space.digits_of(idx);
        let mut out = [0usize; 4];
        for (slot, &atom) in order.iter().enumerate() {
            out[slot] = digits[atom - 1];
        }
        let j = space.index_of(&out).unwrap();
        v[j] = state.amplitudes()[idx];
    }
    StateVector::new(space, crate::CVec::from_vec(v))
}

fn atom_labels_of(space: &HilbertSpace) -> Vec<String> {
    space
        .factors()
        .iter()
        .filter(|f| f.label != "cav")
        .map(|f| f.label.clone())
        .collect()
}

/// Embed a bare four-qubit state into an engine space (cavity in vacuum,
/// atoms restricted to their lowest two levels).
fn embed_initial(space: &HilbertSpace, psi: &StateVector) -> Result<StateVector> {
    let dim = space.dim();
    let mut v = vec![C64::new(0.0, 0.0); dim];
    let qspace = psi.space();
    for idx in 0..qspace.dim() {
        let digits = qspace.digits_of(idx);
        let mut full = digits.clone();
        if space.factors().iter().any(|f| f.label == "cav") {
            full.push(0);
        }
        let j = space.index_of(&full)?;
        v[j] = psi.amplitudes()[idx];
    }
    StateVector::new(space.clone(), crate::CVec::from_vec(v))
}

/// Project an engine-space state back onto the bare four-qubit space
/// (atoms in their lowest two levels, cavity in vacuum). Returns the
/// normalized projection and its weight.
fn project_to_qubits(state: &StateVector) -> Result<(StateVector, f64)> {
    let space = state.space();
    let qspace = HilbertSpace::four_qubits();
    let mut v = vec![C64::new(0.0, 0.0); 16];
    let mut weight = 0.0;
    for (idx, a) in state.amplitudes().iter().enumerate() {
        let digits = space.digits_of(idx);
        let natoms = atom_labels_of(space).len();
        let atom_digits = &digits[..natoms];
        let cav_ok = digits.len() == natoms || digits[natoms] == 0;
        let levels_ok = atom_digits.iter().all(|&d| d < 2);
        if cav_ok && levels_ok {
            let j = qspace
                .index_of(atom_digits)
                .expect("qubit digits in range");
            v[j] = *a;
            weight += a.norm_sqr();
        }
    }
    if weight < MIN_PROJECTION_WEIGHT {
        return Err(ChiError::Physics(format!(
            "monitored-subspace weight {weight:.4} fell below {MIN_PROJECTION_WEIGHT}; \
             the reduced description no longer applies"
        )));
    }
    let scale = C64::new(1.0 / weight.sqrt(), 0.0);
    let scaled: Vec<C64> = v.into_iter().map(|z| z * scale).collect();
    Ok((StateVector::new(qspace, crate::CVec::from_vec(scaled))?, weight))
}

/// Excited-level population of a full-engine state.
fn r_population(space: &HilbertSpace, amps: &[C64]) -> f64 {
    let natoms = atom_labels_of(space).len();
    amps.iter()
        .enumerate()
        .filter(|(idx, _)| space.digits_of(*idx)[..natoms].iter().any(|&d| d == 2))
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Angles realized by one step under a timing-error model.
struct StepAngles {
    /// theta such that the pair evolves by exp(-i theta X X) per pair.
    pair_angles: Vec<(usize, usize, f64)>,
    /// Angle of the single-atom x rotation exp(-i phi X) per atom.
    x_angle: f64,
    /// Global phase committed by the alpha shift (diagnostic only).
    alpha_phase: f64,
}

fn step_angles(
    step: &ScheduleStep,
    omega_s: f64,
    n: f64,
    model: ErrorModel,
) -> StepAngles {
    let t = step.duration * (1.0 + n);
    let nominal_half_periods = (omega_s * step.duration / PI).round();
    let x_angle = match model {
        // drive phase snaps to the nearest half-period: a multiple of pi,
        // which the x rotation realizes exactly
        ErrorModel::BetaOnly => nominal_half_periods * PI,
        ErrorModel::FullPhase => omega_s * t,
    };
    let pair_angles = step
        .pairs
        .iter()
        .map(|pc| (pc.a, pc.b, pc.beta * t))
        .collect();
    StepAngles { pair_angles, x_angle, alpha_phase: -step.alpha_sum * t }
}

fn apply_post_unitaries(proto: &Protocol, psi: &StateVector) -> Result<StateVector> {
    let mut out = psi.clone();
    let space = psi.space().clone();
    for &(atom, gate) in &proto.post_unitaries {
        let label = format!("a{}", atom + 1);
        let site = Operator::on_site(&label, gate.matrix())?;
        let full = tensor_embed(&site, &label, &space)?;
        out = full.apply(&out)?;
    }
    Ok(out)
}

/// Execute a protocol from a bare four-qubit initial state.
pub fn run_protocol(
    proto: &Protocol,
    psi0: &StateVector,
    engine: Engine,
    timing: TimingError,
    model: ErrorModel,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    if psi0.space().dim() != 16 {
        return Err(ChiError::SpaceMismatch(
            "protocol initial state must live on the bare four-qubit space".into(),
        ));
    }
    if engine.drive_is_intrinsic() && model == ErrorModel::BetaOnly {
        return Err(ChiError::Config(format!(
            "error model beta_only is not represented in the {} engine: the drive \
             phase cannot be snapped inside an integrated Hamiltonian",
            engine.name()
        )));
    }
    match engine {
        Engine::Analytic => run_analytic(proto, psi0, timing, model),
        Engine::EffectiveNumeric => run_effective(proto, psi0, timing, model, opts),
        Engine::ReducedNumeric | Engine::GroundNumeric | Engine::FullNumeric => {
            run_cavity_engine(proto, psi0, engine, timing, opts)
        }
    }
}

fn run_analytic(
    proto: &Protocol,
    psi0: &StateVector,
    timing: TimingError,
    model: ErrorModel,
) -> Result<RunOutcome> {
    let mut psi = psi0.clone();
    for (k, step) in proto.steps.iter().enumerate() {
        let ang = step_angles(step, proto.base.omega_s, timing.for_step(k), model);
        psi = evolve_step_analytic_angles(&ang.pair_angles, ang.x_angle, &psi)?;
        let _ = ang.alpha_phase; // global phase: irrelevant to fidelities
    }
    psi = apply_post_unitaries(proto, &psi)?;
    Ok(RunOutcome {
        state: psi,
        projection_weights: vec![1.0; proto.steps.len()],
        max_r_leakage: 0.0,
        norm_drift: 0.0,
    })
}

fn run_effective(
    proto: &Protocol,
    psi0: &StateVector,
    timing: TimingError,
    model: ErrorModel,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    use crate::evolve::{HTerm, TimeDependentOperator};
    use crate::model::ketbra;

    let space = HilbertSpace::four_qubits();
    let mut psi = psi0.clone();
    let mut drift = 0.0;
    for (k, step) in proto.steps.iter().enumerate() {
        let ang = step_angles(step, proto.base.omega_s, timing.for_step(k), model);
        // integrate H = sum beta XX over the mistimed duration, then apply
        // the drive rotation exactly as the analytic engine does
        let t = step.duration * (1.0 + timing.for_step(k));
        let mut terms = Vec::new();
        for pc in &step.pairs {
            let la = format!("a{}", pc.a + 1);
            let lb = format!("a{}", pc.b + 1);
            let sx = ketbra(2, 1, 0) + ketbra(2, 0, 1);
            let ox = tensor_embed(&Operator::on_site(&la, sx.clone())?, &la, &space)?;
            let oy = tensor_embed(&Operator::on_site(&lb, sx)?, &lb, &space)?;
            let xx = ox.matmul(&oy)?.scale(C64::new(pc.beta, 0.0));
            terms.push(HTerm::constant(&xx));
        }
        let h = TimeDependentOperator::new(space.clone(), terms);
        let out = integrate_unitary(&h, &psi, 0.0, t, opts.steps_per_period)?;
        drift += out.norm_drift;
        psi = apply_x_rotation_atoms(&out.state, ang.x_angle)?;
    }
    psi = apply_post_unitaries(proto, &psi)?;
    Ok(RunOutcome {
        state: psi,
        projection_weights: vec![1.0; proto.steps.len()],
        max_r_leakage: 0.0,
        norm_drift: drift,
    })
}

fn run_cavity_engine(
    proto: &Protocol,
    psi0: &StateVector,
    engine: Engine,
    timing: TimingError,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let mut weights = Vec::new();
    let mut max_leak = 0.0f64;
    let mut drift = 0.0;
    let mut psi_q = psi0.clone();
    for (k, step) in proto.steps.iter().enumerate() {
        let params = proto.base.with_drives(step.drives);
        let h = match engine {
            Engine::ReducedNumeric => build_h_reduced(&params)?,
            Engine::GroundNumeric => build_h_ground(&params)?,
            Engine::FullNumeric => build_h_full(&params)?,
            _ => unreachable!(),
        };
        let t = step.duration * (1.0 + timing.for_step(k));
        let psi_in = embed_initial(h.space(), &psi_q)?;
        let out = if engine == Engine::FullNumeric {
            let mut leak = 0.0f64;
            let space = h.space().clone();
            let res = integrate_unitary_observed(
                &h,
                &psi_in,
                0.0,
                t,
                opts.steps_per_period,
                64,
                |_, amps| {
                    leak = leak.max(r_population(&space, amps.as_slice()));
                },
            )?;
            max_leak = max_leak.max(leak);
            res
        } else {
            integrate_unitary(&h, &psi_in, 0.0, t, opts.steps_per_period)?
        };
        drift += out.norm_drift;
        let mut state = out.state;
        if engine == Engine::FullNumeric {
            max_leak =
                max_leak.max(r_population(state.space(), state.amplitudes().as_slice()));
        }
        if !engine.drive_is_intrinsic() {
            // reduced engine: the drive rotation is applied explicitly
            let ang = step_angles(step, proto.base.omega_s, timing.for_step(k), ErrorModel::FullPhase);
            state = apply_x_rotation_atoms(&state, ang.x_angle)?;
        }
        let (projected, w) = project_to_qubits(&state)?;
        weights.push(w);
        psi_q = projected;
    }
    psi_q = apply_post_unitaries(proto, &psi_q)?;
    Ok(RunOutcome {
        state: psi_q,
        projection_weights: weights,
        max_r_leakage: max_leak,
        norm_drift: drift,
    })
}

/// exp(-i phi X) on every two-level atom factor of the state's space.
fn apply_x_rotation_atoms(state: &StateVector, phi: f64) -> Result<StateVector> {
    let mut out = state.clone();
    for label in atom_labels_of(state.space()) {
        crate::evolve::apply_x_rotation(&mut out, &label, phi)?;
    }
    Ok(out)
}
