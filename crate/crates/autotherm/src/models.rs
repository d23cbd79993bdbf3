//! Declarative model descriptors and constructors for the simulated
//! systems: qubit-oscillator and qubit-qubit excitation exchange, a damped
//! qubit, and a qubit coupled to a damped reaction coordinate.
//!
//! Energy conventions: qubit-oscillator models carry the qubit term as
//! (omega/2) sigma_z so internal energy is symmetric about zero; the
//! qubit-qubit model uses omega |e><e| with the ground level at zero.
//! Thermodynamic differences are invariant under that shift.

use nalgebra::{DMatrix, DVector};

use crate::operators::{
    annihilation, identity, kron, number, sigma_ee, sigma_minus, sigma_plus, sigma_z, Operator,
    QuantumState,
};
use crate::{C64, Error, Result};

/// Population allowed past the end of a truncated coherent expansion.
pub const COHERENT_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Qubit,
    Oscillator,
}

#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub label: Label,
    pub kind: Kind,
    /// In units of the reference frequency (hbar = 1).
    pub frequency: f64,
    /// Hilbert-space levels: 2 for a qubit, n_max + 1 for an oscillator.
    pub truncation: usize,
}

impl SubsystemSpec {
    pub fn qubit(label: Label, frequency: f64) -> Self {
        Self {
            label,
            kind: Kind::Qubit,
            frequency,
            truncation: 2,
        }
    }

    pub fn oscillator(label: Label, frequency: f64, truncation: usize) -> Self {
        Self {
            label,
            kind: Kind::Oscillator,
            frequency,
            truncation,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0) {
            return Err(Error::BadSpec(format!(
                "subsystem frequency must be positive, got {}",
                self.frequency
            )));
        }
        if self.truncation < 2 || (self.kind == Kind::Qubit && self.truncation != 2) {
            return Err(Error::BadSpec(format!(
                "bad truncation {} for {:?}",
                self.truncation, self.kind
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionForm {
    /// g (A_raise x B_lower + h.c.), the rotating-wave exchange form.
    ExcitationExchange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpId {
    LoweringOnA,
    LoweringOnB,
}

#[derive(Debug, Clone, Copy)]
pub struct Dissipator {
    pub jump: JumpId,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// One entry for a lone damped qubit, two otherwise.
    pub subsystems: Vec<SubsystemSpec>,
    pub coupling: f64,
    pub interaction_form: InteractionForm,
    pub dissipator: Option<Dissipator>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subsystems.is_empty() || self.subsystems.len() > 2 {
            return Err(Error::BadSpec(format!(
                "expected 1 or 2 subsystems, got {}",
                self.subsystems.len()
            )));
        }
        for s in &self.subsystems {
            s.validate()?;
        }
        if let Some(d) = &self.dissipator {
            if !(d.rate >= 0.0) {
                return Err(Error::BadSpec(format!(
                    "dissipator rate must be >= 0, got {}",
                    d.rate
                )));
            }
            if d.jump == JumpId::LoweringOnB && self.subsystems.len() < 2 {
                return Err(Error::BadSpec(
                    "lowering-on-B dissipator needs a second subsystem".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialFactor {
    Ground,
    Excited,
    Fock(usize),
    Coherent(f64),
    EqualSuperposition,
    Gibbs(f64),
    MaximallyMixed,
}

#[derive(Debug, Clone)]
pub struct InitialStateSpec {
    /// One entry per subsystem, in subsystem order.
    pub factors: Vec<InitialFactor>,
}

/// Default oscillator levels for Fock-type scenarios holding at most
/// `max_excitations` quanta: exchange conservation makes one spare level
/// above the reachable band exact.
pub fn default_fock_levels(max_excitations: usize) -> usize {
    max_excitations + 2
}

/// Default oscillator levels for a coherent state of amplitude `alpha`:
/// mean photon number plus ten standard deviations, plus a constant margin.
/// The margin keeps the truncation-tail invariant satisfied at small
/// amplitudes, where Poisson tails need absolute headroom rather than
/// multiples of the standard deviation.
pub fn default_coherent_levels(alpha: f64) -> usize {
    (alpha * alpha + 10.0 * alpha.abs()).ceil() as usize + 7
}

fn qubit_half_sigma_z(frequency: f64) -> DMatrix<C64> {
    sigma_z().scale(C64::new(frequency / 2.0, 0.0)).into_mat()
}

fn check_kinds(spec: &ModelSpec, expect: &[Kind], what: &str) -> Result<()> {
    spec.validate()?;
    let kinds: Vec<Kind> = spec.subsystems.iter().map(|s| s.kind).collect();
    if kinds != expect {
        return Err(Error::BadSpec(format!(
            "{what} expects subsystem kinds {expect:?}, got {kinds:?}"
        )));
    }
    Ok(())
}

/// Qubit-oscillator exchange model.
///
/// Returns (H_A, H_B, V, H_total), all on the joint space with dims
/// [2, levels]: H_A = (w_A/2) sigma_z x I, H_B = w_B I x a'a,
/// V = g (sigma_+ x a + sigma_- x a').
pub fn build_jc(spec: &ModelSpec) -> Result<(Operator, Operator, Operator, Operator)> {
    check_kinds(spec, &[Kind::Qubit, Kind::Oscillator], "qubit-oscillator model")?;
    let (qa, qb) = (&spec.subsystems[0], &spec.subsystems[1]);
    let levels = qb.truncation;
    let h_a = kron(
        &Operator::atomic(qubit_half_sigma_z(qa.frequency))?,
        &identity(levels),
    );
    let h_b = kron(&identity(2), &number(levels)).scale(C64::new(qb.frequency, 0.0));
    let raise_lower = kron(&sigma_plus(), &annihilation(levels));
    let v = raise_lower
        .add(&raise_lower.adjoint())?
        .scale(C64::new(spec.coupling, 0.0));
    let h_total = h_a.add(&h_b)?.add(&v)?;
    Ok((h_a, h_b, v, h_total))
}

/// Two-qubit exchange model with ground energy zero.
///
/// Returns (H_A, H_B, V, H_total) on dims [2, 2]: H_j = w_j |e><e|,
/// V = g (sigma_+ x sigma_- + sigma_- x sigma_+).
pub fn build_qubit_qubit(spec: &ModelSpec) -> Result<(Operator, Operator, Operator, Operator)> {
    check_kinds(spec, &[Kind::Qubit, Kind::Qubit], "qubit-qubit model")?;
    let (qa, qb) = (&spec.subsystems[0], &spec.subsystems[1]);
    let h_a = kron(&sigma_ee(), &identity(2)).scale(C64::new(qa.frequency, 0.0));
    let h_b = kron(&identity(2), &sigma_ee()).scale(C64::new(qb.frequency, 0.0));
    let exchange = kron(&sigma_plus(), &sigma_minus());
    let v = exchange
        .add(&exchange.adjoint())?
        .scale(C64::new(spec.coupling, 0.0));
    let h_total = h_a.add(&h_b)?.add(&v)?;
    Ok((h_a, h_b, v, h_total))
}

/// Damped single qubit: H = (w/2) sigma_z with lowering jump at the
/// dissipator rate (rate 0 yields a unitary model with an inert jump).
pub fn build_spontaneous_emission(spec: &ModelSpec) -> Result<(Operator, Vec<(Operator, f64)>)> {
    check_kinds(spec, &[Kind::Qubit], "damped-qubit model")?;
    let rate = match &spec.dissipator {
        Some(d) if d.jump == JumpId::LoweringOnA => d.rate,
        Some(_) => {
            return Err(Error::BadSpec(
                "damped-qubit model supports only a lowering jump on the qubit".into(),
            ))
        }
        None => 0.0,
    };
    let h = Operator::new(qubit_half_sigma_z(spec.subsystems[0].frequency), vec![2])?;
    Ok((h, vec![(sigma_minus(), rate)]))
}

/// Qubit exchanging with a damped oscillator mode (reaction coordinate).
///
/// Returns the joint Hamiltonian (same form as [`build_jc`]) and the
/// oscillator lowering jump I x a at rate kappa.
pub fn build_rc(spec: &ModelSpec) -> Result<(Operator, Vec<(Operator, f64)>)> {
    check_kinds(spec, &[Kind::Qubit, Kind::Oscillator], "damped-mode model")?;
    let rate = match &spec.dissipator {
        Some(d) if d.jump == JumpId::LoweringOnB => d.rate,
        Some(_) => {
            return Err(Error::BadSpec(
                "damped-mode model supports only a lowering jump on the oscillator".into(),
            ))
        }
        None => 0.0,
    };
    let (_, _, _, h_total) = build_jc(spec)?;
    let jump = kron(&identity(2), &annihilation(spec.subsystems[1].truncation));
    Ok((h_total, vec![(jump, rate)]))
}

/// Coherent-state amplitudes c_n = e^{-|a|^2/2} a^n / sqrt(n!), computed in
/// log space so large amplitudes do not overflow.
pub(crate) fn coherent_vector(alpha: f64, levels: usize) -> Result<DVector<C64>> {
    let mut v = DVector::<C64>::zeros(levels);
    if alpha == 0.0 {
        v[0] = C64::new(1.0, 0.0);
        return Ok(v);
    }
    let la = alpha.abs().ln();
    let mut log_mag = -alpha * alpha / 2.0;
    let mut sign = 1.0f64;
    let mut total = 0.0;
    for n in 0..levels {
        if n > 0 {
            log_mag += la - 0.5 * (n as f64).ln();
            if alpha < 0.0 {
                sign = -sign;
            }
        }
        let c = sign * log_mag.exp();
        v[n] = C64::new(c, 0.0);
        total += c * c;
    }
    if 1.0 - total > COHERENT_TAIL_TOL {
        return Err(Error::TruncationTooSmall(format!(
            "coherent tail past {} levels holds {:.3e} population",
            levels,
            1.0 - total
        )));
    }
    Ok(v / C64::new(total.sqrt(), 0.0))
}

/// Gibbs populations over the energy ladder of one subsystem; only energy
/// gaps enter, so the qubit zero-point convention drops out.
fn gibbs_populations(beta: f64, frequency: f64, levels: usize) -> Result<Vec<f64>> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::BadSpec(format!(
            "Gibbs inverse temperature must be finite and >= 0, got {beta}"
        )));
    }
    let weights: Vec<f64> = (0..levels)
        .map(|n| (-beta * frequency * n as f64).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

enum Factor {
    Vector(DVector<C64>),
    Matrix(DMatrix<C64>),
}

fn build_factor(choice: &InitialFactor, sub: &SubsystemSpec) -> Result<Factor> {
    let d = sub.truncation;
    let basis = |i: usize| {
        let mut v = DVector::<C64>::zeros(d);
        v[i] = C64::new(1.0, 0.0);
        v
    };
    Ok(match choice {
        InitialFactor::Ground => Factor::Vector(basis(0)),
        InitialFactor::Excited => Factor::Vector(basis(1)),
        InitialFactor::Fock(n) => {
            if sub.kind != Kind::Oscillator {
                return Err(Error::BadSpec("Fock factor needs an oscillator".into()));
            }
            if *n >= d {
                return Err(Error::TruncationTooSmall(format!(
                    "Fock level {n} outside {d}-level truncation"
                )));
            }
            Factor::Vector(basis(*n))
        }
        InitialFactor::Coherent(alpha) => {
            if sub.kind != Kind::Oscillator {
                return Err(Error::BadSpec("coherent factor needs an oscillator".into()));
            }
            Factor::Vector(coherent_vector(*alpha, d)?)
        }
        InitialFactor::EqualSuperposition => {
            let mut v = DVector::<C64>::zeros(d);
            let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            v[0] = r;
            v[1] = r;
            Factor::Vector(v)
        }
        InitialFactor::Gibbs(beta) => {
            let pops = gibbs_populations(*beta, sub.frequency, d)?;
            Factor::Matrix(DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                pops.into_iter().map(|p| C64::new(p, 0.0)),
            )))
        }
        InitialFactor::MaximallyMixed => {
            Factor::Matrix(DMatrix::identity(d, d) / C64::new(d as f64, 0.0))
        }
    })
}

/// Tensor-product initial state; pure-vector representation whenever every
/// factor is pure, density matrix otherwise.
pub fn make_initial_state(init: &InitialStateSpec, model: &ModelSpec) -> Result<QuantumState> {
    model.validate()?;
    if init.factors.len() != model.subsystems.len() {
        return Err(Error::BadSpec(format!(
            "{} initial factors for {} subsystems",
            init.factors.len(),
            model.subsystems.len()
        )));
    }
    let factors: Vec<Factor> = init
        .factors
        .iter()
        .zip(&model.subsystems)
        .map(|(f, s)| build_factor(f, s))
        .collect::<Result<_>>()?;
    let dims: Vec<usize> = model.subsystems.iter().map(|s| s.truncation).collect();
    let all_pure = factors.iter().all(|f| matches!(f, Factor::Vector(_)));
    if all_pure {
        let mut v: Option<DVector<C64>> = None;
        for f in &factors {
            let Factor::Vector(fv) = f else { unreachable!() };
            v = Some(match v {
                None => fv.clone(),
                Some(prev) => prev.kronecker(fv),
            });
        }
        QuantumState::pure(v.unwrap(), dims)
    } else {
        let mut m: Option<DMatrix<C64>> = None;
        for f in &factors {
            let fm = match f {
                Factor::Vector(v) => v * v.adjoint(),
                Factor::Matrix(mm) => mm.clone(),
            };
            m = Some(match m {
                None => fm,
                Some(prev) => prev.kronecker(&fm),
            });
        }
        QuantumState::density(m.unwrap(), dims)
    }
}
