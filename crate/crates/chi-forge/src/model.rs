//! Physical parameters and the Hamiltonian ladder.
//!
//! All frequencies are in units of the atom-cavity coupling g (time in
//! units of 1/g); SI conversion happens only in the feasibility report.
//!
//! Atom levels: 0 = g, 1 = s (ground manifold), 2 = r (excited, full model
//! only). The cavity factor is last and truncated at `fock_dim` photons.

use crate::error::{ChiError, Result};
use crate::evolve::{HTerm, TimeDependentOperator};
use crate::statespace::{tensor_embed, HilbertSpace, Operator};
use crate::{C64, CMat};
use serde::{Deserialize, Serialize};

/// The coupling constant g defines the frequency unit.
pub const COUPLING_G: f64 = 1.0;

/// A pair (l,m) is kept in the effective model only if its detuning
/// difference is negligible against the pair coupling.
pub const PAIR_KEEP_RATIO: f64 = 1e-3;

/// Default cavity truncation (photon numbers 0..4).
pub const DEFAULT_FOCK_DIM: usize = 5;

/// Sign convention for the ground-manifold drive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveSign {
    /// `+Omega_S (S+ + S-)`, the net sign obtained from the full model.
    #[default]
    Plus,
    /// The opposite convention, kept selectable for audits.
    Minus,
}

impl DriveSign {
    pub fn factor(self) -> f64 {
        match self {
            DriveSign::Plus => 1.0,
            DriveSign::Minus => -1.0,
        }
    }
}

/// Classical drive applied to one atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomDrive {
    /// Rabi frequency of the g-r drive, in units of g.
    pub rabi: f64,
    /// Detuning of the g-r drive, in units of g.
    pub detuning1: f64,
}

impl AtomDrive {
    pub fn off() -> Self {
        Self { rabi: 0.0, detuning1: 0.0 }
    }

    pub fn is_on(&self) -> bool {
        self.rabi > 0.0
    }

    fn validate(&self, atom: usize) -> Result<()> {
        if self.rabi < 0.0 {
            return Err(ChiError::Config(format!("atom {}: rabi {} < 0", atom + 1, self.rabi)));
        }
        if self.rabi > 0.0 && self.detuning1 <= 0.0 {
            return Err(ChiError::Config(format!(
                "atom {}: driven atom needs detuning1 > 0 (got {})",
                atom + 1,
                self.detuning1
            )));
        }
        Ok(())
    }
}

/// Physical inputs of the model, in units of g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// One drive record per atom, physical order 1..4.
    pub drives: [AtomDrive; 4],
    /// Cavity detuning Delta_2, in units of g.
    pub detuning2: f64,
    /// Always-on g-s drive Omega_S, in units of g.
    pub omega_s: f64,
    /// Cavity truncation: photon numbers 0..fock_dim-1.
    pub fock_dim: usize,
    /// Ground-manifold drive sign convention.
    #[serde(default)]
    pub drive_sign: DriveSign,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.drives.iter().enumerate() {
            d.validate(i)?;
        }
        if self.detuning2 <= 0.0 {
            return Err(ChiError::Config(format!("detuning2 {} must be > 0", self.detuning2)));
        }
        if self.omega_s < 0.0 {
            return Err(ChiError::Config(format!("omega_s {} must be >= 0", self.omega_s)));
        }
        if self.fock_dim < 2 {
            return Err(ChiError::Config(format!("fock_dim {} must be >= 2", self.fock_dim)));
        }
        Ok(())
    }

    /// Copy with different drives (same global settings).
    pub fn with_drives(&self, drives: [AtomDrive; 4]) -> Self {
        Self { drives, ..self.clone() }
    }

    /// Step-1 parameter set of the reference protocol: atoms 1,2 driven at
    /// Omega = g with Delta_1 = 10g, atoms 3,4 at Omega' = 0.725g with
    /// Delta_1' = 10.5g, cavity detuning 11g.
    pub fn reference() -> Self {
        Self {
            drives: [
                AtomDrive { rabi: 1.0, detuning1: 10.0 },
                AtomDrive { rabi: 1.0, detuning1: 10.0 },
                AtomDrive { rabi: 0.725, detuning1: 10.5 },
                AtomDrive { rabi: 0.725, detuning1: 10.5 },
            ],
            detuning2: 11.0,
            omega_s: 10.0,
            fock_dim: DEFAULT_FOCK_DIM,
            drive_sign: DriveSign::Plus,
        }
    }
}

/// Coefficients of the reduced models, all in units of g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Stark shift of g per atom: Omega^2 / Delta_1.
    pub eta: [f64; 4],
    /// Cavity-mediated Raman coupling per atom:
    /// (Omega g / 2)(1/Delta_1 + 1/Delta_2).
    pub lambda: [f64; 4],
    /// Two-photon detuning per atom: Delta_2 - Delta_1.
    pub delta: [f64; 4],
    /// Cavity Stark shift: g^2 / Delta_2.
    pub xi: f64,
    /// Dispersive self-shift per atom: lambda^2 / (4 delta).
    pub alpha: [f64; 4],
}

impl DerivedParams {
    /// Dispersive pair coupling `(lambda_l lambda_m / 4)(1/delta_l + 1/delta_m)`.
    /// Zero whenever either atom is undriven. Symmetric in (l, m).
    pub fn beta(&self, l: usize, m: usize) -> f64 {
        if self.lambda[l] == 0.0 || self.lambda[m] == 0.0 {
            return 0.0;
        }
        self.lambda[l] * self.lambda[m] / 4.0 * (1.0 / self.delta[l] + 1.0 / self.delta[m])
    }
}

/// Derive the reduced-model coefficients from the physical inputs.
/// Errors when a driven atom sits at the two-photon resonance delta = 0,
/// where the dispersive reduction breaks down.
pub fn derive_params(p: &SystemParams) -> Result<DerivedParams> {
    p.validate()?;
    let mut eta = [0.0; 4];
    let mut lambda = [0.0; 4];
    let mut delta = [0.0; 4];
    let mut alpha = [0.0; 4];
    for l in 0..4 {
        let d = &p.drives[l];
        delta[l] = p.detuning2 - d.detuning1;
        if d.is_on() {
            if delta[l] == 0.0 {
                return Err(ChiError::Physics(format!(
                    "atom {}: delta = Delta_2 - Delta_1 = 0 (resonant two-photon case)",
                    l + 1
                )));
            }
            eta[l] = d.rabi * d.rabi / d.detuning1;
            lambda[l] = d.rabi * COUPLING_G / 2.0 * (1.0 / d.detuning1 + 1.0 / p.detuning2);
            alpha[l] = lambda[l] * lambda[l] / (4.0 * delta[l]);
        }
    }
    let xi = COUPLING_G * COUPLING_G / p.detuning2;
    Ok(DerivedParams { eta, lambda, delta, xi, alpha })
}

/// One validated inequality instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeEntry {
    pub condition: String,
    pub left: f64,
    pub right: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Hierarchy-of-scales report for the derivation chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeReport {
    pub threshold: f64,
    pub entries: Vec<RegimeEntry>,
}

impl RegimeReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Check every separation-of-scales condition behind the reduction chain:
/// Delta_1 >> Omega, Delta_2 >> g, 2 Omega_S >> {delta, lambda, eta, xi},
/// and delta >> lambda/2. Failures are reported, never thrown.
pub fn validate_regime(p: &SystemParams, threshold: f64) -> Result<RegimeReport> {
    let d = derive_params(p)?;
    let mut entries = Vec::new();
    let mut push = |condition: String, left: f64, right: f64| {
        let ratio = if right == 0.0 { f64::INFINITY } else { left / right };
        entries.push(RegimeEntry { condition, left, right, ratio, pass: ratio >= threshold });
    };
    for l in 0..4 {
        let drv = &p.drives[l];
        if drv.is_on() {
            push(format!("Delta_1,{} >> Omega_{}", l + 1, l + 1), drv.detuning1, drv.rabi);
        }
    }
    push("Delta_2 >> g".into(), p.detuning2, COUPLING_G);
    let two_os = 2.0 * p.omega_s;
    for l in 0..4 {
        if p.drives[l].is_on() {
            push(format!("2 Omega_S >> delta_{}", l + 1), two_os, d.delta[l].abs());
            push(format!("2 Omega_S >> lambda_{}", l + 1), two_os, d.lambda[l]);
            push(format!("2 Omega_S >> eta_{}", l + 1), two_os, d.eta[l]);
        }
    }
    push("2 Omega_S >> xi".into(), two_os, d.xi);
    for l in 0..4 {
        if p.drives[l].is_on() {
            push(
                format!("delta_{} >> lambda_{}/2", l + 1, l + 1),
                d.delta[l].abs(),
                d.lambda[l] / 2.0,
            );
        }
    }
    Ok(RegimeReport { threshold, entries })
}

/// Smallest ratio |Delta_1,l +/- Omega_S| / Omega_l over the driven atoms.
///
/// In the frame rotating with the strong transverse drive, the classical
/// drive acquires sideband components at Delta_1,l -/+ Omega_S. When either
/// sideband detuning becomes comparable to Omega_l the drive resonantly
/// populates the eliminated excited level and the two-level reduction breaks
/// down, no matter how well the static separation-of-scales conditions hold.
/// Values well above ~10 keep excited-level leakage at the percent scale.
pub fn dressed_resonance_margin(p: &SystemParams) -> f64 {
    let mut margin = f64::INFINITY;
    for drv in &p.drives {
        if drv.is_on() {
            let near = (drv.detuning1 - p.omega_s).abs().min((drv.detuning1 + p.omega_s).abs());
            margin = margin.min(near / drv.rabi);
        }
    }
    margin
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Annihilation operator on the truncated cavity.
pub fn annihilation(fock_dim: usize) -> CMat {
    let mut a = CMat::zeros(fock_dim, fock_dim);
    for n in 1..fock_dim {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    a
}

/// Photon-number operator on the truncated cavity.
pub fn number_op(fock_dim: usize) -> CMat {
    CMat::from_fn(fock_dim, fock_dim, |i, j| if i == j { c(i as f64, 0.0) } else { c(0.0, 0.0) })
}

/// `|to><from|` on a d-level system.
pub fn ketbra(dim: usize, to: usize, from: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    m[(to, from)] = c(1.0, 0.0);
    m
}

const ATOM_LABELS: [&str; 4] = ["a1", "a2", "a3", "a4"];

fn embed_atom(space: &HilbertSpace, atom: usize, m: CMat) -> Operator {
    let op = Operator::on_site(ATOM_LABELS[atom], m).expect("square atom matrix");
    tensor_embed(&op, ATOM_LABELS[atom], space).expect("atom factor exists")
}

fn embed_cav(space: &HilbertSpace, m: CMat) -> Operator {
    let op = Operator::on_site("cav", m).expect("square cavity matrix");
    tensor_embed(&op, "cav", space).expect("cavity factor exists")
}

/// Full interaction-picture Hamiltonian of the driven three-level atoms
/// coupled to the cavity:
/// `H(t) = sum_l [ e^{i Delta_1,l t} Omega_l |r><g|_l
///               + g a e^{i Delta_2 t} |r><s|_l
///               + Omega_S |s><g|_l + H.c. ]`
/// on the (3,3,3,3,N) space.
pub fn build_h_full(p: &SystemParams) -> Result<TimeDependentOperator> {
    p.validate()?;
    let space = HilbertSpace::atoms_with_cavity(p.fock_dim)?;
    let a = annihilation(p.fock_dim);
    let mut terms = Vec::new();
    for l in 0..4 {
        let drv = &p.drives[l];
        if drv.is_on() {
            let op = embed_atom(&space, l, ketbra(3, 2, 0) * c(drv.rabi, 0.0));
            terms.push(HTerm::rotating(drv.detuning1, &op));
        }
        let rs = embed_atom(&space, l, ketbra(3, 2, 1));
        let cav = embed_cav(&space, a.clone() * c(COUPLING_G, 0.0));
        terms.push(HTerm::rotating(p.detuning2, &rs.matmul(&cav)?));
        if p.omega_s > 0.0 {
            let sg = embed_atom(&space, l, ketbra(3, 1, 0) * c(p.omega_s, 0.0));
            terms.push(HTerm::rotating(0.0, &sg));
        }
    }
    Ok(TimeDependentOperator::new(space, terms))
}

/// Ground-manifold Hamiltonian after eliminating the excited level:
/// `H'(t) = -sum_l [ eta_l |g><g|_l + xi a'a |s><s|_l
///                 + lambda_l (a' S+_l e^{-i delta_l t} + H.c.)
///                 - sign (Omega_S S+_l + H.c.) ]`
/// on the (2,2,2,2,N) space.
pub fn build_h_ground(p: &SystemParams) -> Result<TimeDependentOperator> {
    let d = derive_params(p)?;
    let space = HilbertSpace::qubits_with_cavity(p.fock_dim)?;
    let adag = annihilation(p.fock_dim).adjoint();
    let nop = number_op(p.fock_dim);
    let mut terms = Vec::new();
    for l in 0..4 {
        if d.eta[l] != 0.0 {
            let gg = embed_atom(&space, l, ketbra(2, 0, 0) * c(-d.eta[l], 0.0));
            terms.push(HTerm::constant(&gg));
        }
        // xi a'a |s><s| acts on every atom: it comes from the cavity
        // coupling, not the classical drive.
        let ss = embed_atom(&space, l, ketbra(2, 1, 1));
        let num = embed_cav(&space, nop.clone() * c(-d.xi, 0.0));
        terms.push(HTerm::constant(&ss.matmul(&num)?));
        if d.lambda[l] != 0.0 {
            let sp = embed_atom(&space, l, ketbra(2, 1, 0));
            let cav = embed_cav(&space, adag.clone() * c(-d.lambda[l], 0.0));
            terms.push(HTerm::rotating(-d.delta[l], &sp.matmul(&cav)?));
        }
        if p.omega_s > 0.0 {
            let sg = embed_atom(
                &space,
                l,
                ketbra(2, 1, 0) * c(p.drive_sign.factor() * p.omega_s, 0.0),
            );
            terms.push(HTerm::rotating(0.0, &sg));
        }
    }
    Ok(TimeDependentOperator::new(space, terms))
}

/// Rotating-frame Hamiltonian after dropping the fast 2 Omega_S terms:
/// `H(t) = -sum_l (lambda_l / 2)(e^{i delta_l t} a + e^{-i delta_l t} a')
///         (S+_l + S-_l)`
/// on the (2,2,2,2,N) space, expressed in the lab (g,s) basis.
pub fn build_h_reduced(p: &SystemParams) -> Result<TimeDependentOperator> {
    let d = derive_params(p)?;
    let space = HilbertSpace::qubits_with_cavity(p.fock_dim)?;
    let a = annihilation(p.fock_dim);
    let sigma_x = ketbra(2, 1, 0) + ketbra(2, 0, 1);
    let mut terms = Vec::new();
    for l in 0..4 {
        if d.lambda[l] == 0.0 {
            continue;
        }
        let sx = embed_atom(&space, l, sigma_x.clone());
        let cav = embed_cav(&space, a.clone() * c(-d.lambda[l] / 2.0, 0.0));
        terms.push(HTerm::rotating(d.delta[l], &sx.matmul(&cav)?));
    }
    Ok(TimeDependentOperator::new(space, terms))
}

/// Effective dispersive Hamiltonian on the bare four-qubit space:
/// energy shifts `alpha_l I` per active atom plus, for every retained pair,
/// `beta (e^{-i(delta_l - delta_m) t} (S+_l S+_m + S+_l S-_m) + H.c.)`.
/// A pair is retained only when its detuning difference is negligible
/// against beta; in particular exactly degenerate pairs are always kept.
pub fn build_h_eff(p: &SystemParams, active: &[usize]) -> Result<TimeDependentOperator> {
    let d = derive_params(p)?;
    for &l in active {
        if l >= 4 {
            return Err(ChiError::Config(format!("atom index {l} out of range")));
        }
        if !p.drives[l].is_on() {
            return Err(ChiError::Physics(format!(
                "atom {} is in the active set but undriven",
                l + 1
            )));
        }
    }
    let space = HilbertSpace::four_qubits();
    let mut terms = Vec::new();
    let alpha_total: f64 = active.iter().map(|&l| d.alpha[l]).sum();
    if alpha_total != 0.0 {
        let shift = Operator::identity(&space).scale(c(alpha_total, 0.0));
        terms.push(HTerm::constant(&shift));
    }
    for (i, &l) in active.iter().enumerate() {
        for &m in &active[i + 1..] {
            let beta = d.beta(l, m);
            let dfreq = d.delta[l] - d.delta[m];
            if dfreq.abs() > beta.abs() * PAIR_KEEP_RATIO {
                continue; // far-detuned pair: decoupled
            }
            let sp_l = embed_atom(&space, l, ketbra(2, 1, 0));
            let sp_m = embed_atom(&space, m, ketbra(2, 1, 0));
            let sm_m = embed_atom(&space, m, ketbra(2, 0, 1));
            let pair = sp_l.matmul(&sp_m.add(&sm_m)?)?.scale(c(beta, 0.0));
            terms.push(HTerm::rotating(-dfreq, &pair));
        }
    }
    Ok(TimeDependentOperator::new(space, terms))
}

/// Retained pairs of [`build_h_eff`] for a given active set, with their
/// beta values.
pub fn retained_pairs(p: &SystemParams, active: &[usize]) -> Result<Vec<(usize, usize, f64)>> {
    let d = derive_params(p)?;
    let mut out = Vec::new();
    for (i, &l) in active.iter().enumerate() {
        for &m in &active[i + 1..] {
            let beta = d.beta(l, m);
            if (d.delta[l] - d.delta[m]).abs() <= beta.abs() * PAIR_KEEP_RATIO {
                out.push((l, m, beta));
            }
        }
    }
    Ok(out)
}

/// Per-atom basis-change unitary to the (+,-) basis, identity elsewhere.
pub fn pm_basis_unitary(space: &HilbertSpace) -> Result<Operator> {
    let h = CMat::from_row_slice(
        2,
        2,
        &[
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ],
    );
    let mut u = Operator::identity(space);
    for f in space.factors() {
        if f.label.starts_with('a') && f.dim == 2 {
            let site = Operator::on_site(&f.label, h.clone())?;
            u = u.matmul(&tensor_embed(&site, &f.label, space)?)?;
        }
    }
    Ok(u)
}

/// Rewrite an operator in the per-atom (+,-) basis.
pub fn to_pm_basis(op: &Operator) -> Result<Operator> {
    let u = pm_basis_unitary(op.space())?;
    u.dagger().matmul(op)?.matmul(&u)
}

/// Rewrite a time-dependent operator in the per-atom (+,-) basis.
pub fn to_pm_basis_td(op: &TimeDependentOperator) -> Result<TimeDependentOperator> {
    let u = pm_basis_unitary(op.space())?;
    op.conjugated(&u)
}
