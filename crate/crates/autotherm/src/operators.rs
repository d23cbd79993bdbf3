//! Dense complex operators and states on tensor-product Hilbert spaces.
//!
//! Conventions: subsystem 0 is the slowest (leftmost) Kronecker factor, so a
//! composite index reads `(i0 * d1 + i1) * d2 + ...`. Qubits are ordered
//! (|g>, |e>) = (0, 1) so Hamiltonian spectra come out ascending.

use nalgebra::{DMatrix, DVector};

use crate::{C64, Error, Result};

/// Absolute floor for `max |M - M_dagger|`, scaled by max(1, max |entry|).
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Allowed deviation of a state trace (or pure-state norm squared) from 1.
pub const STATE_TRACE_TOL: f64 = 1e-10;
/// Density-matrix eigenvalues in [-EIG_CLIP_TOL, 0) clip to 0; lower errors.
pub const EIG_CLIP_TOL: f64 = 1e-10;
/// Spectrum weights below this contribute nothing to entropies.
pub const ENTROPY_WEIGHT_FLOOR: f64 = 1e-14;
/// Support tolerance on the second argument of the relative entropy.
pub const SUPPORT_TOL_SIGMA: f64 = 1e-12;
/// Weight above which the first argument counts as occupying a direction.
pub const SUPPORT_TOL_RHO: f64 = 1e-10;

/// Dense operator together with the tensor-factor dimensions it acts on.
///
/// `dims` may be empty for an atomic system, in which case the single
/// factor dimension is the matrix size.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
    dims: Vec<usize>,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if !dims.is_empty() {
            let prod: usize = dims.iter().product();
            if prod != mat.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "subsystem dims {:?} do not multiply to matrix size {}",
                    dims,
                    mat.nrows()
                )));
            }
            if dims.iter().any(|&d| d == 0) {
                return Err(Error::DimensionMismatch("zero subsystem dimension".into()));
            }
        }
        Ok(Self { mat, dims })
    }

    /// Atomic operator: one unlabeled factor.
    pub fn atomic(mat: DMatrix<C64>) -> Result<Self> {
        Self::new(mat, vec![])
    }

    pub fn mat(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_mat(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Factor dimensions, defaulting to a single factor for atomic operators.
    pub fn factor_dims(&self) -> Vec<usize> {
        if self.dims.is_empty() {
            vec![self.dim()]
        } else {
            self.dims.clone()
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            dims: self.dims.clone(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            mat: &self.mat * s,
            dims: self.dims.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("operator sum".into()));
        }
        Ok(Self {
            mat: &self.mat + &other.mat,
            dims: self.dims.clone(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("operator product".into()));
        }
        Ok(Self {
            mat: &self.mat * &other.mat,
            dims: self.dims.clone(),
        })
    }

    pub fn is_hermitian(&self) -> bool {
        hermiticity_defect(&self.mat) <= HERMITICITY_TOL * matrix_scale(&self.mat)
    }
}

pub(crate) fn matrix_scale(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(1.0, f64::max)
}

pub(crate) fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// State of a (possibly composite) system: pure vector or density matrix.
#[derive(Debug, Clone)]
pub struct QuantumState {
    data: StateData,
    dims: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum StateData {
    Pure(DVector<C64>),
    Density(DMatrix<C64>),
}

impl QuantumState {
    /// Pure state from a normalized vector (renormalized if within tolerance).
    pub fn pure(v: DVector<C64>, dims: Vec<usize>) -> Result<Self> {
        let prod: usize = dims.iter().product();
        if dims.is_empty() || prod != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "state dims {:?} do not match vector length {}",
                dims,
                v.len()
            )));
        }
        let n2 = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if (n2 - 1.0).abs() > STATE_TRACE_TOL {
            return Err(Error::NonPhysicalState(format!(
                "pure state norm^2 = {n2}, expected 1"
            )));
        }
        let v = v / C64::new(n2.sqrt(), 0.0);
        Ok(Self {
            data: StateData::Pure(v),
            dims,
        })
    }

    /// Density matrix; Hermiticity and unit trace are enforced here, the
    /// spectral floor is enforced wherever eigenvalues are consumed.
    pub fn density(m: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        let prod: usize = dims.iter().product();
        if dims.is_empty() || prod != m.nrows() || m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "state dims {:?} do not match matrix size {}x{}",
                dims,
                m.nrows(),
                m.ncols()
            )));
        }
        if hermiticity_defect(&m) > HERMITICITY_TOL * matrix_scale(&m) {
            return Err(Error::NonPhysicalState("density matrix not Hermitian".into()));
        }
        let tr = m.diagonal().iter().map(|z| z.re).sum::<f64>();
        if (tr - 1.0).abs() > STATE_TRACE_TOL {
            return Err(Error::NonPhysicalState(format!(
                "density matrix trace = {tr}, expected 1"
            )));
        }
        let m = &m / C64::new(tr, 0.0);
        Ok(Self {
            data: StateData::Density(m),
            dims,
        })
    }

    pub(crate) fn density_unchecked(m: DMatrix<C64>, dims: Vec<usize>) -> Self {
        Self {
            data: StateData::Density(m),
            dims,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            StateData::Pure(v) => v.len(),
            StateData::Density(m) => m.nrows(),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn vector(&self) -> Option<&DVector<C64>> {
        match &self.data {
            StateData::Pure(v) => Some(v),
            StateData::Density(_) => None,
        }
    }

    /// Materialized density matrix (|psi><psi| for pure states).
    pub fn density_matrix(&self) -> DMatrix<C64> {
        match &self.data {
            StateData::Pure(v) => v * v.adjoint(),
            StateData::Density(m) => m.clone(),
        }
    }

    /// <O> = Tr[rho O].
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch("expectation value".into()));
        }
        Ok(match &self.data {
            StateData::Pure(v) => (v.adjoint() * op.mat() * v)[(0, 0)],
            StateData::Density(m) => trace_product(op.mat(), m),
        })
    }
}

/// Tr[A B] without forming the product matrix.
pub(crate) fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Kronecker product; subsystem dimension lists concatenate.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let mut dims = a.factor_dims();
    dims.extend(b.factor_dims());
    Operator {
        mat: a.mat().kronecker(b.mat()),
        dims,
    }
}

/// Reduced state of factor `keep`, tracing out every other factor.
pub fn partial_trace(state: &QuantumState, keep: usize) -> Result<QuantumState> {
    let dims = state.dims();
    if dims.len() < 2 {
        return Err(Error::IndexError(
            "partial trace needs a composite state".into(),
        ));
    }
    if keep >= dims.len() {
        return Err(Error::IndexError(format!(
            "keep = {keep} but state has {} subsystems",
            dims.len()
        )));
    }
    let d_left: usize = dims[..keep].iter().product();
    let dk = dims[keep];
    let d_right: usize = dims[keep + 1..].iter().product();
    let idx = |l: usize, i: usize, r: usize| (l * dk + i) * d_right + r;
    let mut out = DMatrix::<C64>::zeros(dk, dk);
    match state.data() {
        StateData::Pure(v) => {
            for l in 0..d_left {
                for r in 0..d_right {
                    for i in 0..dk {
                        let vi = v[idx(l, i, r)];
                        if vi.norm_sqr() == 0.0 {
                            continue;
                        }
                        for j in 0..dk {
                            out[(i, j)] += vi * v[idx(l, j, r)].conj();
                        }
                    }
                }
            }
        }
        StateData::Density(m) => {
            for i in 0..dk {
                for j in 0..dk {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..d_left {
                        for r in 0..d_right {
                            acc += m[(idx(l, i, r), idx(l, j, r))];
                        }
                    }
                    out[(i, j)] = acc;
                }
            }
        }
    }
    Ok(QuantumState::density_unchecked(out, vec![dk]))
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
pub struct HermitianEig {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, ordered like `values`.
    pub vectors: DMatrix<C64>,
}

pub fn hermitian_eig(op: &Operator) -> Result<HermitianEig> {
    hermitian_eig_mat(op.mat())
}

pub(crate) fn hermitian_eig_mat(m: &DMatrix<C64>) -> Result<HermitianEig> {
    let defect = hermiticity_defect(m);
    if defect > HERMITICITY_TOL * matrix_scale(m) {
        return Err(Error::NotHermitian(format!(
            "max |M - M_dagger| = {defect:.3e}"
        )));
    }
    let n = m.nrows();
    let mut off_diag_zero = true;
    'outer: for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] != C64::new(0.0, 0.0) {
                off_diag_zero = false;
                break 'outer;
            }
        }
    }
    let (raw_vals, raw_vecs) = if off_diag_zero {
        let vals: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
        (vals, DMatrix::<C64>::identity(n, n))
    } else {
        let fm = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| {
            faer::c64::new(m[(i, j)].re, m[(i, j)].im)
        });
        let eig = fm.self_adjoint_eigen(faer::Side::Lower).map_err(|e| {
            Error::PhysicsViolation(format!("eigendecomposition did not converge: {e:?}"))
        })?;
        let s = eig.S();
        let u = eig.U();
        let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
        let vecs = DMatrix::from_fn(n, n, |i, j| {
            let z = u[(i, j)];
            C64::new(z.re, z.im)
        });
        (vals, vecs)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw_vals[a].partial_cmp(&raw_vals[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| raw_vals[i]).collect();
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw_vecs.column(src));
    }
    Ok(HermitianEig { values, vectors })
}

/// Apply the density-spectrum floor: values in [-EIG_CLIP_TOL, 0) become 0,
/// anything lower is a non-physical state.
pub(crate) fn clip_spectrum(vals: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(vals.len());
    for &v in vals {
        if v < -EIG_CLIP_TOL {
            return Err(Error::NonPhysicalState(format!(
                "density eigenvalue {v:.3e} below -{EIG_CLIP_TOL:.0e}"
            )));
        }
        out.push(if v < 0.0 { 0.0 } else { v });
    }
    Ok(out)
}

/// Shannon entropy (nats) of a clipped spectrum.
pub(crate) fn entropy_of_spectrum(vals: &[f64]) -> f64 {
    vals.iter()
        .filter(|&&p| p > ENTROPY_WEIGHT_FLOOR)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Eigenvalues of a state, sorted descending, clipped to be physical.
pub(crate) fn state_spectrum(state: &QuantumState) -> Result<Vec<f64>> {
    let spec = match state.data() {
        StateData::Pure(v) => {
            let mut s = vec![0.0; v.len()];
            s[0] = 1.0;
            s
        }
        StateData::Density(m) => {
            let eig = hermitian_eig_mat(m)?;
            let mut s = clip_spectrum(&eig.values)?;
            s.reverse();
            s
        }
    };
    Ok(spec)
}

/// von Neumann entropy in nats; exactly 0 for pure states.
pub fn von_neumann_entropy(state: &QuantumState) -> Result<f64> {
    match state.data() {
        StateData::Pure(_) => Ok(0.0),
        StateData::Density(m) => {
            let eig = hermitian_eig_mat(m)?;
            let spec = clip_spectrum(&eig.values)?;
            Ok(entropy_of_spectrum(&spec))
        }
    }
}

/// Quantum relative entropy D[rho || sigma] in nats, +inf outside the
/// support of sigma.
pub fn relative_entropy(rho: &QuantumState, sigma: &QuantumState) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch("relative entropy".into()));
    }
    let sig_eig = hermitian_eig_mat(&sigma.density_matrix())?;
    let sig_vals = clip_spectrum(&sig_eig.values)?;
    let s_rho = von_neumann_entropy(rho)?;
    let rho_m = rho.density_matrix();
    let mut cross = 0.0;
    for (i, &sv) in sig_vals.iter().enumerate() {
        let v = sig_eig.vectors.column(i);
        let w = (v.adjoint() * &rho_m * v)[(0, 0)].re;
        if sv < SUPPORT_TOL_SIGMA {
            if w > SUPPORT_TOL_RHO {
                return Ok(f64::INFINITY);
            }
        } else if w > ENTROPY_WEIGHT_FLOOR {
            cross += w * sv.ln();
        }
    }
    Ok(-s_rho - cross)
}

/// Shared (Schmidt) spectrum of a bipartite pure state, descending, padded
/// with zeros to `min(d_A, d_B)` entries; both reduced states carry exactly
/// these nonzero eigenvalues.
pub fn schmidt_spectrum(state: &QuantumState) -> Result<Vec<f64>> {
    let dims = state.dims();
    if dims.len() != 2 {
        return Err(Error::DimensionMismatch(
            "Schmidt spectrum needs a bipartite state".into(),
        ));
    }
    let v = state.vector().ok_or_else(|| {
        Error::BadSpec("Schmidt spectrum is defined for pure states".into())
    })?;
    let (da, db) = (dims[0], dims[1]);
    let small = da.min(db);
    let mut gram = DMatrix::<C64>::zeros(small, small);
    if da <= db {
        // gram[i,k] = sum_j C[i,j] conj(C[k,j])
        for i in 0..da {
            for k in 0..da {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..db {
                    acc += v[i * db + j] * v[k * db + j].conj();
                }
                gram[(i, k)] = acc;
            }
        }
    } else {
        for j in 0..db {
            for l in 0..db {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..da {
                    acc += v[i * db + j] * v[i * db + l].conj();
                }
                gram[(j, l)] = acc;
            }
        }
    }
    let eig = hermitian_eig_mat(&gram)?;
    let mut spec = clip_spectrum(&eig.values)?;
    spec.reverse();
    Ok(spec)
}

/// I(A:B) = S_A + S_B - S_AB of a bipartite state.
pub fn mutual_information(state: &QuantumState) -> Result<f64> {
    if state.dims().len() != 2 {
        return Err(Error::DimensionMismatch(
            "mutual information needs a bipartite state".into(),
        ));
    }
    if state.is_pure() {
        let spec = schmidt_spectrum(state)?;
        return Ok(2.0 * entropy_of_spectrum(&spec));
    }
    let s_a = von_neumann_entropy(&partial_trace(state, 0)?)?;
    let s_b = von_neumann_entropy(&partial_trace(state, 1)?)?;
    let s_ab = von_neumann_entropy(state)?;
    Ok(s_a + s_b - s_ab)
}

// Elementary building blocks.

pub fn identity(n: usize) -> Operator {
    Operator {
        mat: DMatrix::identity(n, n),
        dims: vec![n],
    }
}

/// Pauli z in the (|g>, |e>) ordering: diag(-1, +1).
pub fn sigma_z() -> Operator {
    let mut m = DMatrix::zeros(2, 2);
    m[(0, 0)] = C64::new(-1.0, 0.0);
    m[(1, 1)] = C64::new(1.0, 0.0);
    Operator { mat: m, dims: vec![2] }
}

/// Raising operator |e><g|.
pub fn sigma_plus() -> Operator {
    let mut m = DMatrix::zeros(2, 2);
    m[(1, 0)] = C64::new(1.0, 0.0);
    Operator { mat: m, dims: vec![2] }
}

/// Lowering operator |g><e|.
pub fn sigma_minus() -> Operator {
    sigma_plus().adjoint()
}

/// Excited-level projector |e><e|.
pub fn sigma_ee() -> Operator {
    let mut m = DMatrix::zeros(2, 2);
    m[(1, 1)] = C64::new(1.0, 0.0);
    Operator { mat: m, dims: vec![2] }
}

/// Truncated annihilation operator: a[n-1, n] = sqrt(n).
pub fn annihilation(levels: usize) -> Operator {
    let mut m = DMatrix::zeros(levels, levels);
    for n in 1..levels {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator {
        mat: m,
        dims: vec![levels],
    }
}

/// Number operator diag(0, 1, ..., levels-1).
pub fn number(levels: usize) -> Operator {
    let mut m = DMatrix::zeros(levels, levels);
    for n in 0..levels {
        m[(n, n)] = C64::new(n as f64, 0.0);
    }
    Operator {
        mat: m,
        dims: vec![levels],
    }
}

/// [A, B] = AB - BA.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("commutator".into()));
    }
    Ok(Operator {
        mat: a.mat() * b.mat() - b.mat() * a.mat(),
        dims: a.dims.clone(),
    })
}


#[cfg(test)]
pub(crate) use tests::random_density;
