//! Time propagation. Four propagators share one Trajectory output: exact
//! unitary evolution by spectral decomposition, an excitation-block fast
//! path for the qubit-oscillator exchange model, fixed-step Lindblad
//! integration, and self-consistent mean-field evolution of a product
//! state.
//!
//! All propagators treat the initial state as the state at `times[0]` and
//! keep no history between samples. Fixed steps everywhere: rerunning a
//! scenario reproduces its output bit for bit.

use nalgebra::{DMatrix, DVector};

use crate::models::{Kind, ModelSpec};
use crate::operators::{hermitian_eig_mat, Operator, QuantumState, StateData};
use crate::{C64, Error, Result};

/// Allowed trace drift of an integrated density matrix before renormalizing
/// is considered dishonest.
pub const TRACE_DRIFT_TOL: f64 = 1e-8;
/// Step-doubling local error threshold for fixed-step integration.
pub const STEP_ERROR_TOL: f64 = 1e-7;
/// Sample intervals between step-doubling spot checks.
const STEP_CHECK_STRIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationKind {
    UnitaryExact,
    JcBlock,
    Lindblad,
    MeanField,
}

/// A sampled evolution: states aligned with strictly increasing times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub model: Option<ModelSpec>,
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    pub kind: PropagationKind,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::BadSpec("empty time grid".into()));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::BadSpec(format!(
                "times must increase strictly, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Exact closed evolution of a pure or mixed state under a Hermitian H,
/// via one spectral decomposition and per-sample phase application.
pub fn propagate_unitary(
    h: &Operator,
    state0: &QuantumState,
    times: &[f64],
) -> Result<Trajectory> {
    check_times(times)?;
    if h.dim() != state0.dim() {
        return Err(Error::DimensionMismatch(
            "Hamiltonian and state dimensions differ".into(),
        ));
    }
    let eig = hermitian_eig_mat(h.mat())?;
    let u = &eig.vectors;
    let dims = state0.dims().to_vec();
    let t0 = times[0];
    let phases = |dt: f64| {
        DVector::<C64>::from_iterator(
            eig.values.len(),
            eig.values.iter().map(|&e| C64::new(0.0, -e * dt).exp()),
        )
    };
    let mut states = Vec::with_capacity(times.len());
    match state0.data() {
        StateData::Pure(v) => {
            let c0 = u.adjoint() * v;
            for &t in times {
                if t == t0 {
                    states.push(state0.clone());
                    continue;
                }
                let ph = phases(t - t0);
                let rotated = DVector::from_iterator(
                    c0.len(),
                    c0.iter().zip(ph.iter()).map(|(c, p)| c * p),
                );
                states.push(QuantumState::pure(u * rotated, dims.clone())?);
            }
        }
        StateData::Density(m) => {
            let r0 = u.adjoint() * m * u;
            for &t in times {
                if t == t0 {
                    states.push(state0.clone());
                    continue;
                }
                let ph = phases(t - t0);
                let mut r = r0.clone();
                for i in 0..r.nrows() {
                    for j in 0..r.ncols() {
                        r[(i, j)] *= ph[i] * ph[j].conj();
                    }
                }
                states.push(QuantumState::density(u * r * u.adjoint(), dims.clone())?);
            }
        }
    }
    Ok(Trajectory {
        model: None,
        times: times.to_vec(),
        states,
        kind: PropagationKind::UnitaryExact,
    })
}

/// Closed-form evolution factor of a real-symmetric 2x2 block
/// [[a, c], [c, b]]: returns the four entries of e^{-i H2 t}.
fn block_evolution(a: f64, b: f64, c: f64, t: f64) -> [C64; 4] {
    let mu = 0.5 * (a + b);
    let delta = 0.5 * (a - b);
    let omega = (delta * delta + c * c).sqrt();
    let global = C64::new(0.0, -mu * t).exp();
    if omega == 0.0 {
        return [global, C64::new(0.0, 0.0), C64::new(0.0, 0.0), global];
    }
    let (s, co) = (omega * t).sin_cos();
    let i = C64::new(0.0, 1.0);
    let uee = global * (C64::new(co, 0.0) - i * C64::new(delta / omega * s, 0.0));
    let ugg = global * (C64::new(co, 0.0) + i * C64::new(delta / omega * s, 0.0));
    let ueg = global * (-i) * C64::new(c / omega * s, 0.0);
    [uee, ueg, ueg, ugg]
}

/// Fast path for the qubit-oscillator exchange model: the Hamiltonian is
/// block diagonal over total excitation number, so each pure state evolves
/// by independent 2x2 rotations. Cost per sample is linear in the
/// oscillator truncation.
pub fn propagate_jc_blocks(
    model: &ModelSpec,
    psi0: &QuantumState,
    times: &[f64],
) -> Result<Trajectory> {
    check_times(times)?;
    model.validate()?;
    let kinds: Vec<Kind> = model.subsystems.iter().map(|s| s.kind).collect();
    if kinds != [Kind::Qubit, Kind::Oscillator] {
        return Err(Error::BadSpec(
            "block propagation needs the qubit-oscillator model".into(),
        ));
    }
    let v0 = psi0
        .vector()
        .ok_or_else(|| Error::BadSpec("block propagation needs a pure state".into()))?;
    let levels = model.subsystems[1].truncation;
    if psi0.dim() != 2 * levels {
        return Err(Error::DimensionMismatch(
            "state does not match model truncation".into(),
        ));
    }
    let (wa, wb, g) = (
        model.subsystems[0].frequency,
        model.subsystems[1].frequency,
        model.coupling,
    );
    // |e, levels-1> has no exchange partner inside the truncation, so it
    // only picks up a phase. Its population must stay within the same
    // budget as the truncation tail of a coherent expansion.
    let dangling = v0[levels + (levels - 1)];
    if dangling.norm_sqr() > crate::models::COHERENT_TAIL_TOL {
        return Err(Error::TruncationTooSmall(format!(
            "top excitation block holds population {:.3e}",
            dangling.norm_sqr()
        )));
    }
    let dims = psi0.dims().to_vec();
    let t0 = times[0];
    let e_ground = -wa / 2.0;
    let e_dangling = wa / 2.0 + wb * (levels - 1) as f64;
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        if t == t0 {
            states.push(psi0.clone());
            continue;
        }
        let dt = t - t0;
        let mut v = DVector::<C64>::zeros(2 * levels);
        v[0] = v0[0] * C64::new(0.0, -e_ground * dt).exp();
        v[levels + (levels - 1)] = dangling * C64::new(0.0, -e_dangling * dt).exp();
        for n in 1..levels {
            let ie = levels + (n - 1);
            let ig = n;
            let he = wa / 2.0 + wb * (n - 1) as f64;
            let hg = -wa / 2.0 + wb * n as f64;
            let c = g * (n as f64).sqrt();
            let [uee, ueg, uge, ugg] = block_evolution(he, hg, c, dt);
            let (ae, ag) = (v0[ie], v0[ig]);
            v[ie] = uee * ae + ueg * ag;
            v[ig] = uge * ae + ugg * ag;
        }
        states.push(QuantumState::pure(v, dims.clone())?);
    }
    Ok(Trajectory {
        model: Some(model.clone()),
        times: times.to_vec(),
        states,
        kind: PropagationKind::JcBlock,
    })
}

/// Preallocated RK4 workspace for matrix-valued right-hand sides.
struct Rk4Buffers {
    k1: DMatrix<C64>,
    k2: DMatrix<C64>,
    k3: DMatrix<C64>,
    k4: DMatrix<C64>,
    stage: DMatrix<C64>,
    tmp: DMatrix<C64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        let z = DMatrix::<C64>::zeros(n, n);
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            stage: z.clone(),
            tmp: z,
        }
    }
}

struct LindbladRhs {
    h: DMatrix<C64>,
    /// (J, J_dagger, J_dagger J, rate) for each active channel.
    jumps: Vec<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>, f64)>,
}

impl LindbladRhs {
    fn eval(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, tmp: &mut DMatrix<C64>) {
        let i = C64::new(0.0, 1.0);
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        out.gemm(-i, &self.h, rho, zero);
        out.gemm(i, rho, &self.h, one);
        for (j, j_dag, k, rate) in &self.jumps {
            let r = C64::new(*rate, 0.0);
            tmp.gemm(one, j, rho, zero);
            out.gemm(r, tmp, j_dag, one);
            out.gemm(-r * 0.5, k, rho, one);
            out.gemm(-r * 0.5, rho, k, one);
        }
    }

    fn rk4_step(&self, rho: &mut DMatrix<C64>, dt: f64, b: &mut Rk4Buffers) {
        let h2 = C64::new(dt / 2.0, 0.0);
        let h1 = C64::new(dt, 0.0);
        self.eval(rho, &mut b.k1, &mut b.tmp);
        b.stage.copy_from(rho);
        axpy_mat(&mut b.stage, h2, &b.k1);
        let stage = b.stage.clone();
        self.eval(&stage, &mut b.k2, &mut b.tmp);
        b.stage.copy_from(rho);
        axpy_mat(&mut b.stage, h2, &b.k2);
        let stage = b.stage.clone();
        self.eval(&stage, &mut b.k3, &mut b.tmp);
        b.stage.copy_from(rho);
        axpy_mat(&mut b.stage, h1, &b.k3);
        let stage = b.stage.clone();
        self.eval(&stage, &mut b.k4, &mut b.tmp);
        let w = C64::new(dt / 6.0, 0.0);
        axpy_mat(rho, w, &b.k1);
        axpy_mat(rho, w * 2.0, &b.k2);
        axpy_mat(rho, w * 2.0, &b.k3);
        axpy_mat(rho, w, &b.k4);
    }
}

/// y += a * x, elementwise over matrices.
fn axpy_mat(y: &mut DMatrix<C64>, a: C64, x: &DMatrix<C64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Fixed-step 4th-order integration of the Lindblad master equation
/// d rho/dt = -i[H, rho] + sum_k rate_k (J rho J' - {J'J, rho}/2).
///
/// `dt` is shrunk per interval so steps tile each sampling interval
/// exactly. Local error is estimated by step doubling on the first
/// interval and on every 16th thereafter; estimates above the threshold
/// abort with StepTooLarge. The trace is renormalized at each sample when
/// its drift is small, and anything larger is an integration failure.
pub fn propagate_lindblad(
    h: &Operator,
    jumps: &[(Operator, f64)],
    rho0: &QuantumState,
    times: &[f64],
    dt: f64,
) -> Result<Trajectory> {
    check_times(times)?;
    if !(dt > 0.0) {
        return Err(Error::BadSpec(format!("dt must be positive, got {dt}")));
    }
    if h.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch(
            "Hamiltonian and state dimensions differ".into(),
        ));
    }
    if !h.is_hermitian() {
        return Err(Error::NotHermitian("Lindblad Hamiltonian".into()));
    }
    for (j, rate) in jumps {
        if !(*rate >= 0.0) {
            return Err(Error::BadSpec(format!("jump rate {rate} is negative")));
        }
        if j.dim() != h.dim() {
            return Err(Error::DimensionMismatch("jump operator".into()));
        }
    }
    let rhs = LindbladRhs {
        h: h.mat().clone(),
        jumps: jumps
            .iter()
            .filter(|(_, rate)| *rate > 0.0)
            .map(|(j, rate)| {
                let jm = j.mat().clone();
                let jd = jm.adjoint();
                let k = &jd * &jm;
                (jm, jd, k, *rate)
            })
            .collect(),
    };
    let n = h.dim();
    let mut buffers = Rk4Buffers::new(n);
    let dims = rho0.dims().to_vec();
    let mut rho = rho0.density_matrix();
    let mut states = Vec::with_capacity(times.len());
    states.push(QuantumState::density(rho.clone(), dims.clone())?);
    for i in 1..times.len() {
        let span = times[i] - times[i - 1];
        let steps = (span / dt).ceil().max(1.0) as usize;
        let dt_actual = span / steps as f64;
        let check = i == 1 || i % STEP_CHECK_STRIDE == 0;
        let coarse = if check {
            let mut probe = rho.clone();
            for _ in 0..steps {
                rhs.rk4_step(&mut probe, dt_actual, &mut buffers);
            }
            Some(probe)
        } else {
            None
        };
        let (fine_steps, fine_dt) = if check {
            (2 * steps, dt_actual / 2.0)
        } else {
            (steps, dt_actual)
        };
        for _ in 0..fine_steps {
            rhs.rk4_step(&mut rho, fine_dt, &mut buffers);
        }
        if let Some(coarse) = coarse {
            let err = max_abs_diff(&coarse, &rho);
            // NaN-safe: a diverged integration must not slip past the check.
            if !(err <= STEP_ERROR_TOL) {
                return Err(Error::AtSample {
                    time: times[i],
                    source: Box::new(Error::StepTooLarge(format!(
                        "step-doubling error estimate {err:.3e} exceeds {STEP_ERROR_TOL:.0e}"
                    ))),
                });
            }
        }
        hermitize(&mut rho);
        let tr = rho.diagonal().iter().map(|z| z.re).sum::<f64>();
        if !((tr - 1.0).abs() <= TRACE_DRIFT_TOL) {
            return Err(Error::AtSample {
                time: times[i],
                source: Box::new(Error::NonPhysicalState(format!(
                    "trace drifted to {tr} during integration"
                ))),
            });
        }
        rho /= C64::new(tr, 0.0);
        states.push(QuantumState::density_unchecked(rho.clone(), dims.clone()));
    }
    Ok(Trajectory {
        model: None,
        times: times.to_vec(),
        states,
        kind: PropagationKind::Lindblad,
    })
}

/// Sparse triplet form of an operator, for O(nnz) matrix-vector products.
struct Triplets {
    entries: Vec<(usize, usize, C64)>,
    dim: usize,
}

impl Triplets {
    fn from_matrix(m: &DMatrix<C64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self {
            entries,
            dim: m.nrows(),
        }
    }

    /// out += fwd * M v + adj * M_dagger v
    fn apply_with_adjoint(
        &self,
        fwd: C64,
        adj: C64,
        v: &DVector<C64>,
        out: &mut DVector<C64>,
    ) {
        for &(i, j, x) in &self.entries {
            out[i] += fwd * x * v[j];
            out[j] += adj * x.conj() * v[i];
        }
    }

    /// <v| M |v>
    fn expectation(&self, v: &DVector<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(i, j, x) in &self.entries {
            acc += v[i].conj() * x * v[j];
        }
        acc
    }

    /// Tr[rho M]
    fn trace_with(&self, rho: &DMatrix<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(i, j, x) in &self.entries {
            acc += rho[(j, i)] * x;
        }
        acc
    }

    fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, x) in &self.entries {
            m[(i, j)] = x;
        }
        m
    }
}

/// The factored pieces of an exchange model, in local spaces: diagonal
/// local Hamiltonians, raising operator on A, lowering operator on B, and
/// the transition frequency each coupling operator rotates at.
pub(crate) struct ExchangeParts {
    pub h_a: DMatrix<C64>,
    pub h_b: DMatrix<C64>,
    pub g: f64,
    pub a_raise: DMatrix<C64>,
    pub b_lower: DMatrix<C64>,
    pub omega_a: f64,
    pub omega_b: f64,
    pub dims: (usize, usize),
}

/// Local factors of a bipartite exchange model. The qubit convention
/// follows each model family: symmetric about zero next to an oscillator,
/// ground at zero next to another qubit.
pub(crate) fn exchange_parts(model: &ModelSpec) -> Result<ExchangeParts> {
    use crate::operators::{annihilation, number, sigma_ee, sigma_plus, sigma_z};
    model.validate()?;
    if model.subsystems.len() != 2 {
        return Err(Error::BadSpec("exchange model needs two subsystems".into()));
    }
    let kinds: Vec<Kind> = model.subsystems.iter().map(|s| s.kind).collect();
    let (wa, wb) = (
        model.subsystems[0].frequency,
        model.subsystems[1].frequency,
    );
    let (h_a, h_b, a_raise, b_lower, dims) = match kinds[..] {
        [Kind::Qubit, Kind::Oscillator] => {
            let l = model.subsystems[1].truncation;
            (
                sigma_z().scale(C64::new(wa / 2.0, 0.0)).into_mat(),
                number(l).scale(C64::new(wb, 0.0)).into_mat(),
                sigma_plus().into_mat(),
                annihilation(l).into_mat(),
                (2, l),
            )
        }
        [Kind::Qubit, Kind::Qubit] => (
            sigma_ee().scale(C64::new(wa, 0.0)).into_mat(),
            sigma_ee().scale(C64::new(wb, 0.0)).into_mat(),
            sigma_plus().into_mat(),
            sigma_plus().adjoint().into_mat(),
            (2, 2),
        ),
        _ => {
            return Err(Error::BadSpec(
                "exchange model needs a qubit first".into(),
            ))
        }
    };
    Ok(ExchangeParts {
        h_a,
        h_b,
        g: model.coupling,
        a_raise,
        b_lower,
        omega_a: wa,
        omega_b: wb,
        dims,
    })
}

enum LocalState {
    Vector(DVector<C64>),
    Matrix(DMatrix<C64>),
}

/// Self-consistent product-state evolution: each side moves under its own
/// Hamiltonian plus the partner's mean field,
/// d rho_A/dt = -i[H_A + g(<B> A + <B'> A'), rho_A] and symmetrically.
///
/// Integration happens in the local interaction pictures, where the
/// generator turns at the exchange rate instead of the bare frequencies;
/// that keeps the fixed step stable for highly excited oscillators. Both
/// local Hamiltonians must be diagonal with the coupling operators rotating
/// at a single transition frequency, which holds for every model family
/// here.
pub fn propagate_mean_field(
    model: &ModelSpec,
    a0: &QuantumState,
    b0: &QuantumState,
    times: &[f64],
    dt: f64,
) -> Result<(Trajectory, Trajectory)> {
    check_times(times)?;
    if !(dt > 0.0) {
        return Err(Error::BadSpec(format!("dt must be positive, got {dt}")));
    }
    if let Some(d) = &model.dissipator {
        if d.rate > 0.0 {
            return Err(Error::BadSpec(
                "mean-field evolution is defined for closed models".into(),
            ));
        }
    }
    let parts = exchange_parts(model)?;
    if a0.dim() != parts.dims.0 || b0.dim() != parts.dims.1 {
        return Err(Error::DimensionMismatch(
            "initial factors do not match the model".into(),
        ));
    }
    let a_op = Triplets::from_matrix(&parts.a_raise);
    let b_op = Triplets::from_matrix(&parts.b_lower);
    let e_a: Vec<f64> = (0..parts.dims.0).map(|i| parts.h_a[(i, i)].re).collect();
    let e_b: Vec<f64> = (0..parts.dims.1).map(|i| parts.h_b[(i, i)].re).collect();
    let g = parts.g;
    let (wa, wb) = (parts.omega_a, parts.omega_b);

    // Interaction-picture states.
    let mut sa = match a0.data() {
        StateData::Pure(v) => LocalState::Vector(v.clone()),
        StateData::Density(m) => LocalState::Matrix(m.clone()),
    };
    let mut sb = match b0.data() {
        StateData::Pure(v) => LocalState::Vector(v.clone()),
        StateData::Density(m) => LocalState::Matrix(m.clone()),
    };

    // <A>(s) in the lab frame = e^{+i wa s} <A>_int; <B>(s) = e^{-i wb s} <B>_int.
    let expect_a = |s: &LocalState| match s {
        LocalState::Vector(v) => a_op.expectation(v),
        LocalState::Matrix(m) => a_op.trace_with(m),
    };
    let expect_b = |s: &LocalState| match s {
        LocalState::Vector(v) => b_op.expectation(v),
        LocalState::Matrix(m) => b_op.trace_with(m),
    };

    // d phi_A/ds = -i g (z A + z* A') phi_A with z = e^{+i wa s} <B>(s).
    let a_dense = a_op.to_dense();
    let a_dense_adj = a_dense.adjoint();
    let b_dense = b_op.to_dense();
    let b_dense_adj = b_dense.adjoint();
    let deriv = |op: &Triplets,
                 dense: &DMatrix<C64>,
                 dense_adj: &DMatrix<C64>,
                 s: &LocalState,
                 z: C64|
     -> LocalState {
        let mi = C64::new(0.0, -g);
        match s {
            LocalState::Vector(v) => {
                let mut out = DVector::zeros(v.len());
                op.apply_with_adjoint(mi * z, mi * z.conj(), v, &mut out);
                LocalState::Vector(out)
            }
            LocalState::Matrix(m) => {
                let h = dense * z + dense_adj * z.conj();
                LocalState::Matrix((&h * m - m * &h) * mi)
            }
        }
    };
    let deriv_a = |s: &LocalState, z: C64| deriv(&a_op, &a_dense, &a_dense_adj, s, z);
    let deriv_b = |s: &LocalState, w: C64| deriv(&b_op, &b_dense, &b_dense_adj, s, w);

    let add_scaled = |base: &LocalState, k: &LocalState, c: f64| -> LocalState {
        match (base, k) {
            (LocalState::Vector(v), LocalState::Vector(d)) => {
                LocalState::Vector(v + d * C64::new(c, 0.0))
            }
            (LocalState::Matrix(m), LocalState::Matrix(d)) => {
                LocalState::Matrix(m + d * C64::new(c, 0.0))
            }
            _ => unreachable!(),
        }
    };

    let lab_state = |s: &LocalState, e: &[f64], t: f64, dim: usize| -> Result<QuantumState> {
        let ph: Vec<C64> = e.iter().map(|&ek| C64::new(0.0, -ek * t).exp()).collect();
        match s {
            LocalState::Vector(v) => {
                let out = DVector::from_iterator(dim, v.iter().zip(&ph).map(|(x, p)| x * p));
                QuantumState::pure(out, vec![dim])
            }
            LocalState::Matrix(m) => {
                let mut out = m.clone();
                for i in 0..dim {
                    for j in 0..dim {
                        out[(i, j)] *= ph[i] * ph[j].conj();
                    }
                }
                let mut h = out;
                hermitize(&mut h);
                QuantumState::density(h, vec![dim])
            }
        }
    };

    let t0 = times[0];
    let mut traj_a = Vec::with_capacity(times.len());
    let mut traj_b = Vec::with_capacity(times.len());
    traj_a.push(lab_state(&sa, &e_a, 0.0, parts.dims.0)?);
    traj_b.push(lab_state(&sb, &e_b, 0.0, parts.dims.1)?);
    let mut s_now = 0.0;
    for i in 1..times.len() {
        let span = times[i] - times[i - 1];
        let steps = (span / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            // RK4 on the coupled pair with time-dependent phases.
            let stage = |sa_s: &LocalState, sb_s: &LocalState, s_abs: f64| {
                let pa = C64::new(0.0, wa * s_abs).exp();
                let pb = C64::new(0.0, -wb * s_abs).exp();
                let mean_b = pb * expect_b(sb_s);
                let mean_a = pa * expect_a(sa_s);
                let z = pa * mean_b;
                let w = pb * mean_a;
                (deriv_a(sa_s, z), deriv_b(sb_s, w))
            };
            let (k1a, k1b) = stage(&sa, &sb, s_now);
            let (k2a, k2b) = stage(
                &add_scaled(&sa, &k1a, h / 2.0),
                &add_scaled(&sb, &k1b, h / 2.0),
                s_now + h / 2.0,
            );
            let (k3a, k3b) = stage(
                &add_scaled(&sa, &k2a, h / 2.0),
                &add_scaled(&sb, &k2b, h / 2.0),
                s_now + h / 2.0,
            );
            let (k4a, k4b) = stage(
                &add_scaled(&sa, &k3a, h),
                &add_scaled(&sb, &k3b, h),
                s_now + h,
            );
            let mut acc_a = add_scaled(&sa, &k1a, h / 6.0);
            acc_a = add_scaled(&acc_a, &k2a, h / 3.0);
            acc_a = add_scaled(&acc_a, &k3a, h / 3.0);
            sa = add_scaled(&acc_a, &k4a, h / 6.0);
            let mut acc_b = add_scaled(&sb, &k1b, h / 6.0);
            acc_b = add_scaled(&acc_b, &k2b, h / 3.0);
            acc_b = add_scaled(&acc_b, &k3b, h / 3.0);
            sb = add_scaled(&acc_b, &k4b, h / 6.0);
            s_now += h;
        }
        // Renormalize against integrator drift before recording.
        match &mut sa {
            LocalState::Vector(v) => {
                let n2 = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
                if !((n2 - 1.0).abs() <= TRACE_DRIFT_TOL) {
                    return Err(Error::AtSample {
                        time: times[i],
                        source: Box::new(Error::NonPhysicalState(format!(
                            "mean-field norm drifted to {n2}"
                        ))),
                    });
                }
                *v /= C64::new(n2.sqrt(), 0.0);
            }
            LocalState::Matrix(m) => {
                let tr = m.diagonal().iter().map(|z| z.re).sum::<f64>();
                *m /= C64::new(tr, 0.0);
            }
        }
        match &mut sb {
            LocalState::Vector(v) => {
                let n2 = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
                *v /= C64::new(n2.sqrt(), 0.0);
            }
            LocalState::Matrix(m) => {
                let tr = m.diagonal().iter().map(|z| z.re).sum::<f64>();
                *m /= C64::new(tr, 0.0);
            }
        }
        let t_rel = times[i] - t0;
        traj_a.push(lab_state(&sa, &e_a, t_rel, parts.dims.0)?);
        traj_b.push(lab_state(&sb, &e_b, t_rel, parts.dims.1)?);
    }
    Ok((
        Trajectory {
            model: Some(model.clone()),
            times: times.to_vec(),
            states: traj_a,
            kind: PropagationKind::MeanField,
        },
        Trajectory {
            model: Some(model.clone()),
            times: times.to_vec(),
            states: traj_b,
            kind: PropagationKind::MeanField,
        },
    ))
}

/// Join two local trajectories on the same grid into the product-state joint
/// trajectory of `model`. Pure factors stay pure; any mixed factor promotes
/// the joint sample to a density matrix.
pub fn product_trajectory(a: &Trajectory, b: &Trajectory, model: &ModelSpec) -> Result<Trajectory> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(Error::BadSpec(
            "local trajectories are sampled on different grids".into(),
        ));
    }
    let parts = exchange_parts(model)?;
    let dims = vec![parts.dims.0, parts.dims.1];
    let states = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(sa, sb)| {
            if sa.dim() != parts.dims.0 || sb.dim() != parts.dims.1 {
                return Err(Error::DimensionMismatch(
                    "local factors do not match the model".into(),
                ));
            }
            match (sa.data(), sb.data()) {
                (StateData::Pure(va), StateData::Pure(vb)) => {
                    QuantumState::pure(va.kronecker(vb), dims.clone())
                }
                _ => {
                    let ma = sa.density_matrix();
                    let mb = sb.density_matrix();
                    QuantumState::density(ma.kronecker(&mb), dims.clone())
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        model: Some(model.clone()),
        times: a.times.clone(),
        states,
        kind: PropagationKind::MeanField,
    })
}

/// Uniform grid of `samples + 1` points covering [0, t_max]; checkpoints at
/// rational fractions of t_max land exactly on the grid when `samples` is
/// chosen divisibly.
pub fn time_grid(t_max: f64, samples: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0) || samples == 0 {
        return Err(Error::BadSpec(format!(
            "need t_max > 0 and samples > 0, got {t_max}, {samples}"
        )));
    }
    Ok((0..=samples)
        .map(|i| t_max * i as f64 / samples as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        build_jc, build_qubit_qubit, build_spontaneous_emission, default_coherent_levels,
        Dissipator, InitialFactor, InitialStateSpec, JumpId, Label, SubsystemSpec,
    };
    use crate::models::{make_initial_state, InteractionForm};
    use crate::operators::{identity, kron, partial_trace, sigma_ee, von_neumann_entropy};
    use approx::assert_abs_diff_eq;

    fn jc_spec(g: f64, levels: usize) -> ModelSpec {
        ModelSpec {
            subsystems: vec![
                SubsystemSpec::qubit(Label::A, 1.0),
                SubsystemSpec::oscillator(Label::B, 1.0, levels),
            ],
            coupling: g,
            interaction_form: InteractionForm::ExcitationExchange,
            dissipator: None,
        }
    }

    fn excited_vacuum(spec: &ModelSpec) -> QuantumState {
        make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::Excited, InitialFactor::Fock(0)],
            },
            spec,
        )
        .unwrap()
    }

    fn qubit_pe(state: &QuantumState) -> f64 {
        let q = partial_trace(state, 0).unwrap();
        q.density_matrix()[(1, 1)].re
    }

    #[test]
    fn unitary_returns_initial_state_at_t_zero() {
        let spec = jc_spec(0.1, 3);
        let (_, _, _, h) = build_jc(&spec).unwrap();
        let psi0 = excited_vacuum(&spec);
        let traj = propagate_unitary(&h, &psi0, &[0.0, 1.0]).unwrap();
        assert_eq!(
            traj.states[0].vector().unwrap(),
            psi0.vector().unwrap()
        );
    }

    #[test]
    fn jc_excited_vacuum_rabi_populations() {
        let g = 0.01;
        let spec = jc_spec(g, 3);
        let (_, _, _, h) = build_jc(&spec).unwrap();
        let psi0 = excited_vacuum(&spec);
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * (std::f64::consts::PI / 2.0 / g) / 40.0).collect();
        let traj = propagate_unitary(&h, &psi0, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let pe = qubit_pe(&traj.states[i]);
            assert_abs_diff_eq!(pe, (g * t).cos().powi(2), epsilon = 1e-10);
        }
        // global energy constant
        let e0 = traj.states[0].expectation(&h).unwrap().re;
        for s in &traj.states {
            let e = s.expectation(&h).unwrap().re;
            assert!((e - e0).abs() <= 1e-9 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn qubit_qubit_exchange_oscillation() {
        let g = 0.05;
        let spec = ModelSpec {
            subsystems: vec![
                SubsystemSpec::qubit(Label::A, 1.0),
                SubsystemSpec::qubit(Label::B, 1.0),
            ],
            coupling: g,
            interaction_form: InteractionForm::ExcitationExchange,
            dissipator: None,
        };
        let (_, _, _, h) = build_qubit_qubit(&spec).unwrap();
        let psi0 = make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::Excited, InitialFactor::Ground],
            },
            &spec,
        )
        .unwrap();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 2.0).collect();
        let traj = propagate_unitary(&h, &psi0, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let pa = qubit_pe(&traj.states[i]);
            let pb = partial_trace(&traj.states[i], 1).unwrap().density_matrix()[(1, 1)].re;
            assert_abs_diff_eq!(pa, (g * t).cos().powi(2), epsilon = 1e-10);
            assert_abs_diff_eq!(pb, (g * t).sin().powi(2), epsilon = 1e-10);
        }
    }

    #[test]
    fn block_propagation_matches_unitary_on_excited_vacuum() {
        let spec = jc_spec(0.01, 3);
        let (_, _, _, h) = build_jc(&spec).unwrap();
        let psi0 = excited_vacuum(&spec);
        let times = time_grid(200.0, 50).unwrap();
        let full = propagate_unitary(&h, &psi0, &times).unwrap();
        let fast = propagate_jc_blocks(&spec, &psi0, &times).unwrap();
        for (a, b) in full.states.iter().zip(&fast.states) {
            let d = (a.vector().unwrap() - b.vector().unwrap())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-10, "deviation {d}");
        }
    }

    #[test]
    fn block_propagation_matches_unitary_on_small_coherent_drive() {
        let levels = default_coherent_levels(2.0);
        let spec = jc_spec(0.01, levels);
        let (_, _, v, h) = build_jc(&spec).unwrap();
        let psi0 = make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::Excited, InitialFactor::Coherent(2.0)],
            },
            &spec,
        )
        .unwrap();
        let times = time_grid(50.0, 25).unwrap();
        let full = propagate_unitary(&h, &psi0, &times).unwrap();
        let fast = propagate_jc_blocks(&spec, &psi0, &times).unwrap();
        for (a, b) in full.states.iter().zip(&fast.states) {
            let d = (a.vector().unwrap() - b.vector().unwrap())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-9, "deviation {d}");
            let va = a.expectation(&v).unwrap().re;
            let vb = b.expectation(&v).unwrap().re;
            assert!((va - vb).abs() < 1e-9);
        }
    }

    #[test]
    fn resonant_exchange_expectation_stays_zero() {
        // Superposition of |e,0> rotating into |g,1> keeps <V> = 0 on
        // resonance: the overlap is purely imaginary at all times.
        let spec = jc_spec(0.02, 3);
        let (_, _, v, _) = build_jc(&spec).unwrap();
        let psi0 = excited_vacuum(&spec);
        let times = time_grid(150.0, 60).unwrap();
        let traj = propagate_jc_blocks(&spec, &psi0, &times).unwrap();
        for s in &traj.states {
            assert!(s.expectation(&v).unwrap().re.abs() < 1e-12);
        }
    }

    #[test]
    fn lindblad_reproduces_exponential_decay() {
        let gamma = 0.01;
        let spec = ModelSpec {
            subsystems: vec![SubsystemSpec::qubit(Label::A, 1.0)],
            coupling: 0.0,
            interaction_form: InteractionForm::ExcitationExchange,
            dissipator: Some(Dissipator {
                jump: JumpId::LoweringOnA,
                rate: gamma,
            }),
        };
        let (h, jumps) = build_spontaneous_emission(&spec).unwrap();
        let mut rho0 = DMatrix::<C64>::zeros(2, 2);
        rho0[(1, 1)] = C64::new(1.0, 0.0);
        let state0 = QuantumState::density(rho0, vec![2]).unwrap();
        let times = time_grid(5.0 / gamma, 100).unwrap();
        let traj = propagate_lindblad(&h, &jumps, &state0, &times, 1e-3 / gamma).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let pe = traj.states[i].density_matrix()[(1, 1)].re;
            assert_abs_diff_eq!(pe, (-gamma * t).exp(), epsilon = 1e-9);
            let tr = traj.states[i].density_matrix().trace().re;
            assert!((tr - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lindblad_with_zero_rate_matches_unitary() {
        let spec = jc_spec(0.05, 3);
        let (_, _, _, h) = build_jc(&spec).unwrap();
        let psi0 = excited_vacuum(&spec);
        let times = time_grid(40.0, 20).unwrap();
        let jump = kron(&identity(2), &crate::operators::annihilation(3));
        let uni = propagate_unitary(&h, &psi0, &times).unwrap();
        let rho0 = QuantumState::density(psi0.density_matrix(), vec![2, 3]).unwrap();
        let lin = propagate_lindblad(&h, &[(jump, 0.0)], &rho0, &times, 0.01).unwrap();
        for (a, b) in uni.states.iter().zip(&lin.states) {
            let d = (a.density_matrix() - b.density_matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-8, "deviation {d}");
        }
    }

    #[test]
    fn lindblad_rejects_oversized_steps() {
        let gamma = 0.5;
        let spec = ModelSpec {
            subsystems: vec![SubsystemSpec::qubit(Label::A, 10.0)],
            coupling: 0.0,
            interaction_form: InteractionForm::ExcitationExchange,
            dissipator: Some(Dissipator {
                jump: JumpId::LoweringOnA,
                rate: gamma,
            }),
        };
        let (h, jumps) = build_spontaneous_emission(&spec).unwrap();
        let mut rho0 = DMatrix::<C64>::zeros(2, 2);
        rho0[(0, 1)] = C64::new(0.5, 0.0);
        rho0[(1, 0)] = C64::new(0.5, 0.0);
        rho0[(0, 0)] = C64::new(0.5, 0.0);
        rho0[(1, 1)] = C64::new(0.5, 0.0);
        let state0 = QuantumState::density(rho0, vec![2]).unwrap();
        let times = vec![0.0, 10.0];
        let out = propagate_lindblad(&h, &jumps, &state0, &times, 10.0);
        assert!(matches!(
            out,
            Err(Error::AtSample { .. })
        ));
    }

    #[test]
    fn damped_exchange_population_oscillates_before_decaying() {
        let lambda = 0.1;
        let kappa = 0.08;
        let spec = ModelSpec {
            subsystems: vec![
                SubsystemSpec::qubit(Label::A, 1.0),
                SubsystemSpec::oscillator(Label::B, 1.0, 3),
            ],
            coupling: lambda,
            interaction_form: InteractionForm::ExcitationExchange,
            dissipator: Some(Dissipator {
                jump: JumpId::LoweringOnB,
                rate: kappa,
            }),
        };
        let (h, jumps) = crate::models::build_rc(&spec).unwrap();
        let psi0 = excited_vacuum(&spec);
        let rho0 = QuantumState::density(psi0.density_matrix(), vec![2, 3]).unwrap();
        let times = time_grid(50.0 / lambda, 200).unwrap();
        let traj = propagate_lindblad(&h, &jumps, &rho0, &times, 0.01).unwrap();
        let pe: Vec<f64> = traj
            .states
            .iter()
            .map(|s| partial_trace(s, 0).unwrap().density_matrix()[(1, 1)].re)
            .collect();
        let rises = pe.windows(2).filter(|w| w[1] > w[0] + 1e-9).count();
        assert!(rises > 5, "population should oscillate, rises = {rises}");
        assert!(pe[pe.len() - 1] < 0.02, "population should decay");
    }

    #[test]
    fn mean_field_with_zero_coupling_is_free_evolution() {
        let spec = jc_spec(0.0, 4);
        let a0 = make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::EqualSuperposition, InitialFactor::Fock(1)],
            },
            &spec,
        )
        .unwrap();
        let qa = partial_trace(&a0, 0).unwrap();
        let qb = partial_trace(&a0, 1).unwrap();
        let times = time_grid(10.0, 10).unwrap();
        let (ta, tb) = propagate_mean_field(&spec, &qa, &qb, &times, 0.01).unwrap();
        // populations frozen, coherences rotating at the bare frequency
        for (i, &t) in times.iter().enumerate() {
            let ma = ta.states[i].density_matrix();
            assert_abs_diff_eq!(ma[(1, 1)].re, 0.5, epsilon = 1e-12);
            let expected = C64::new(0.5, 0.0) * C64::new(0.0, -t).exp();
            assert!((ma[(1, 0)] - expected).norm() < 1e-10);
            let mb = tb.states[i].density_matrix();
            assert_abs_diff_eq!(mb[(1, 1)].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_field_tracks_full_dynamics_in_semiclassical_window() {
        let g = 0.01;
        let alpha = 30.0;
        let levels = default_coherent_levels(alpha);
        let spec = jc_spec(g, levels);
        let psi0 = make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::Ground, InitialFactor::Coherent(alpha)],
            },
            &spec,
        )
        .unwrap();
        let times = time_grid(0.1 / g, 50).unwrap();
        let full = propagate_jc_blocks(&spec, &psi0, &times).unwrap();
        // Pure local factors keep the mean-field integration on the O(levels)
        // vector path.
        let qa = QuantumState::pure(
            DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
            vec![2],
        )
        .unwrap();
        let osc_only = ModelSpec {
            subsystems: vec![SubsystemSpec::oscillator(Label::B, 1.0, levels)],
            coupling: 0.0,
            interaction_form: InteractionForm::ExcitationExchange,
            dissipator: None,
        };
        let qb = make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::Coherent(alpha)],
            },
            &osc_only,
        )
        .unwrap();
        let (ta, _) = propagate_mean_field(&spec, &qa, &qb, &times, 0.01).unwrap();
        for (i, s) in full.states.iter().enumerate() {
            let pe_full = qubit_pe(s);
            let pe_mf = ta.states[i].density_matrix()[(1, 1)].re;
            assert!(
                (pe_full - pe_mf).abs() < 2e-2,
                "at {} deviation {}",
                times[i],
                (pe_full - pe_mf).abs()
            );
        }
        // local entropy stays constant under mean-field flow
        for s in &ta.states {
            assert!(von_neumann_entropy(s).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn full_period_return_of_excited_vacuum() {
        let g = 0.01;
        let spec = jc_spec(g, 3);
        let psi0 = excited_vacuum(&spec);
        let period = std::f64::consts::PI / g;
        let times = time_grid(period, 80).unwrap();
        let traj = propagate_jc_blocks(&spec, &psi0, &times).unwrap();
        let overlap = (psi0.vector().unwrap().adjoint() * traj.states[80].vector().unwrap())
            [(0, 0)]
            .norm();
        assert!(1.0 - overlap * overlap < 1e-8, "fidelity defect too large");
        // U_A(t) mirrors about the half period.
        let ee = kron(&sigma_ee(), &identity(3));
        for i in 0..=80 {
            let u1 = traj.states[i].expectation(&ee).unwrap().re;
            let u2 = traj.states[80 - i].expectation(&ee).unwrap().re;
            assert!((u1 - u2).abs() < 1e-8);
        }
    }

    #[test]
    fn unitary_kinds_preserve_entropy_and_purity() {
        let spec = jc_spec(0.05, 3);
        let (_, _, _, h) = build_jc(&spec).unwrap();
        let mixed = make_initial_state(
            &InitialStateSpec {
                factors: vec![InitialFactor::MaximallyMixed, InitialFactor::Fock(0)],
            },
            &spec,
        )
        .unwrap();
        let times = time_grid(100.0, 25).unwrap();
        let traj = propagate_unitary(&h, &mixed, &times).unwrap();
        let s0 = von_neumann_entropy(&traj.states[0]).unwrap();
        for s in &traj.states {
            assert!((von_neumann_entropy(s).unwrap() - s0).abs() < 1e-9);
            let m = s.density_matrix();
            let purity = (&m * &m).trace().re;
            assert!((purity - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn time_grid_covers_interval_inclusively() {
        let g = time_grid(2.0, 4).unwrap();
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(time_grid(0.0, 4).is_err());
    }
}
