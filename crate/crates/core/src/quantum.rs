//! One- and two-qubit states, qubit channels in process-matrix form, and
//! negativity.
//!
//! Two-qubit ordering is fixed throughout the crate: the ion is the slow
//! (first) tensor factor and the photon the fast (second) one, so basis index
//! `2·ion + photon` with `g = H = 0` and `e = V = 1`.
//!
//! Channels are written as `ε(ρ) = Σ_ij χ_ij O_i ρ O_j†` over the operator
//! basis `{I, Z, X, −iY}`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::linalg::ComplexMatrix;

pub const HERMITICITY_TOLERANCE: f64 = 1e-9;
pub const TRACE_TOLERANCE: f64 = 1e-9;
/// Eigenvalues down to `-PSD_TOLERANCE` are accepted as floating-point noise.
pub const PSD_TOLERANCE: f64 = 1e-9;
pub const TRACE_PRESERVATION_TOLERANCE: f64 = 1e-6;

/// Serialized tag naming the operator basis of a process matrix.
pub const BASIS_TAG: &str = "I,Z,X,-iY";

/// Index of the ion in a two-qubit state.
pub const ION: usize = 0;
/// Index of the photon in a two-qubit state.
pub const PHOTON: usize = 1;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The fixed qubit operator basis `{I, Z, X, −iY}`.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    elements: [ComplexMatrix; 4],
}

impl OperatorBasis {
    pub fn standard() -> Self {
        let o = c(0.0, 0.0);
        let l = c(1.0, 0.0);
        let m = |r: [[Complex64; 2]; 2]| ComplexMatrix::from_rows(&[r[0].to_vec(), r[1].to_vec()]).unwrap();
        Self {
            elements: [
                m([[l, o], [o, l]]),
                m([[l, o], [o, -l]]),
                m([[o, l], [l, o]]),
                // −iY = [[0, −1], [1, 0]]
                m([[o, -l], [l, o]]),
            ],
        }
    }

    pub fn elements(&self) -> &[ComplexMatrix; 4] {
        &self.elements
    }

    pub fn get(&self, k: usize) -> &ComplexMatrix {
        &self.elements[k]
    }

    /// Coefficients `c_k = Tr(O_k† M)/2` of a 2×2 operator in this basis.
    pub fn expand(&self, m: &ComplexMatrix) -> [Complex64; 4] {
        std::array::from_fn(|k| (&self.elements[k].adjoint() * m).trace() * 0.5)
    }

    /// Matrix `M_ki = Tr(O_k† f(O_i))/2` of a linear map on operators.
    fn map_matrix(&self, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
        let cols: Vec<[Complex64; 4]> = self.elements.iter().map(|o| self.expand(&f(o))).collect();
        ComplexMatrix::from_fn(4, |k, i| cols[i][k])
    }
}

thread_local! {
    static BASIS: OperatorBasis = OperatorBasis::standard();
}

fn with_basis<T>(f: impl FnOnce(&OperatorBasis) -> T) -> T {
    BASIS.with(f)
}

/// A validated one- or two-qubit density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let herm = matrix.hermiticity_defect();
        if herm > HERMITICITY_TOLERANCE {
            return Err(contract(format!("density matrix not Hermitian (defect {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOLERANCE || tr.im.abs() > TRACE_TOLERANCE {
            return Err(contract(format!("density matrix trace is {tr}, expected 1")));
        }
        let min = matrix.eigenvalues_hermitian()[0];
        if min < -PSD_TOLERANCE {
            return Err(contract(format!(
                "density matrix not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Hermitizes and trace-normalizes a channel output before validation.
    /// Absorbs the trace-preservation slack a process matrix is allowed.
    pub(crate) fn from_channel_output(m: ComplexMatrix) -> Result<Self> {
        let h = m.hermitian_part();
        let tr = h.trace().re;
        if tr <= 0.0 {
            return Err(contract("channel output has non-positive trace"));
        }
        Self::new(h.scale_real(1.0 / tr))
    }

    /// |ψ⟩⟨ψ| for a state vector of length 2 or 4 (normalized here).
    pub fn from_pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(contract("zero state vector"));
        }
        let psi: Vec<Complex64> = amplitudes.iter().map(|a| a / norm).collect();
        Self::new(ComplexMatrix::outer(&psi, &psi)?)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim != 2 && dim != 4 {
            return Err(contract(format!("unsupported dimension {dim}")));
        }
        Ok(Self {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        })
    }

    /// (|g,H⟩ + |e,V⟩)/√2.
    pub fn ion_photon_bell() -> Self {
        let a = c(FRAC_1_SQRT_2, 0.0);
        let z = c(0.0, 0.0);
        Self::from_pure(&[a, z, z, a]).expect("Bell state is valid")
    }

    /// ρ_ion ⊗ ρ_photon.
    pub fn product(ion: &DensityMatrix, photon: &DensityMatrix) -> Result<Self> {
        Self::new(ion.matrix.kron(&photon.matrix)?)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized state vector.
    pub fn overlap(&self, psi: &[Complex64]) -> f64 {
        let n = self.dim();
        let mut acc = c(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += psi[i].conj() * self.matrix[(i, j)] * psi[j];
            }
        }
        acc.re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Reduced state of one subsystem of a two-qubit state.
    pub fn reduced(&self, keep: usize) -> Result<Self> {
        if self.dim() != 4 {
            return Err(contract("reduced state needs a two-qubit state"));
        }
        let m = &self.matrix;
        let r = match keep {
            ION => ComplexMatrix::from_fn(2, |a, b| m[(2 * a, 2 * b)] + m[(2 * a + 1, 2 * b + 1)]),
            PHOTON => ComplexMatrix::from_fn(2, |a, b| m[(a, b)] + m[(2 + a, 2 + b)]),
            _ => return Err(domain(format!("subsystem index {keep} is not 0 (ion) or 1 (photon)"))),
        };
        Self::new(r)
    }

    /// (U_ion ⊗ U_photon) ρ (U_ion ⊗ U_photon)†.
    pub fn local_unitary(&self, u_ion: &ComplexMatrix, u_photon: &ComplexMatrix) -> Result<Self> {
        let u = u_ion.kron(u_photon)?;
        Self::from_channel_output(&(&u * &self.matrix) * &u.adjoint())
    }

    /// U ρ U† for a one-qubit state.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(contract("unitary dimension does not match state"));
        }
        Self::from_channel_output(&(u * &self.matrix) * &u.adjoint())
    }
}

/// Pure polarization state α|H⟩ + β|V⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationState {
    alpha: Complex64,
    beta: Complex64,
}

impl PolarizationState {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > 1e-9 {
            return Err(contract(format!("polarization state norm² is {n}, expected 1")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn h() -> Self {
        Self { alpha: c(1.0, 0.0), beta: c(0.0, 0.0) }
    }
    pub fn v() -> Self {
        Self { alpha: c(0.0, 0.0), beta: c(1.0, 0.0) }
    }
    pub fn d() -> Self {
        Self { alpha: c(FRAC_1_SQRT_2, 0.0), beta: c(FRAC_1_SQRT_2, 0.0) }
    }
    pub fn a() -> Self {
        Self { alpha: c(FRAC_1_SQRT_2, 0.0), beta: c(-FRAC_1_SQRT_2, 0.0) }
    }
    pub fn r() -> Self {
        Self { alpha: c(FRAC_1_SQRT_2, 0.0), beta: c(0.0, FRAC_1_SQRT_2) }
    }
    pub fn l() -> Self {
        Self { alpha: c(FRAC_1_SQRT_2, 0.0), beta: c(0.0, -FRAC_1_SQRT_2) }
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }
    pub fn beta(&self) -> Complex64 {
        self.beta
    }
    pub fn amplitudes(&self) -> [Complex64; 2] {
        [self.alpha, self.beta]
    }

    /// H ↔ V swap: α|V⟩ + β|H⟩.
    pub fn flipped(&self) -> Self {
        Self { alpha: self.beta, beta: self.alpha }
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.amplitudes()).expect("normalized polarization state")
    }
}

/// A qubit channel as a 4×4 χ matrix over `{I, Z, X, −iY}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    chi: ComplexMatrix,
}

impl ProcessMatrix {
    /// Validates Hermiticity, positivity and trace preservation.
    pub fn new(chi: ComplexMatrix) -> Result<Self> {
        if chi.dim() != 4 {
            return Err(contract("process matrix must be 4×4"));
        }
        let herm = chi.hermiticity_defect();
        if herm > HERMITICITY_TOLERANCE {
            return Err(contract(format!("process matrix not Hermitian (defect {herm:.3e})")));
        }
        let min = chi.eigenvalues_hermitian()[0];
        if min < -PSD_TOLERANCE {
            return Err(contract(format!(
                "process matrix not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        let tp = trace_preservation_defect(&chi);
        if tp > TRACE_PRESERVATION_TOLERANCE {
            return Err(contract(format!("process matrix not trace preserving (defect {tp:.3e})")));
        }
        Ok(Self { chi })
    }

    /// χ = e_k e_kᵀ: conjugation by the k-th basis operator.
    pub fn basis_conjugation(k: usize) -> Result<Self> {
        if k > 3 {
            return Err(domain(format!("basis index {k} out of range")));
        }
        Self::new(ComplexMatrix::from_fn(4, |i, j| {
            if i == k && j == k {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        }))
    }

    pub fn identity() -> Self {
        Self::basis_conjugation(0).expect("identity process")
    }

    /// ρ ↦ UρU†, with χ_ij = u_i conj(u_j) for U = Σ u_k O_k.
    pub fn from_unitary(u: &ComplexMatrix) -> Result<Self> {
        if u.dim() != 2 {
            return Err(contract("unitary must be 2×2"));
        }
        let defect = (&u.adjoint() * u).max_abs_diff(&ComplexMatrix::identity(2));
        if defect > 1e-9 {
            return Err(contract(format!("matrix is not unitary (defect {defect:.3e})")));
        }
        let coeffs = with_basis(|b| b.expand(u));
        Self::new(ComplexMatrix::from_fn(4, |i, j| coeffs[i] * coeffs[j].conj()))
    }

    /// ρ ↦ wρ + (1−w)I/2.
    pub fn depolarizing(w: f64) -> Result<Self> {
        check_weight(w)?;
        let off = (1.0 - w) / 4.0;
        Self::new(ComplexMatrix::from_fn(4, |i, j| match (i, j) {
            (0, 0) => c(w + off, 0.0),
            (i, j) if i == j => c(off, 0.0),
            _ => c(0.0, 0.0),
        }))
    }

    /// χ of an arbitrary linear map on 2×2 operators, computed through its
    /// Choi matrix `J = Σ_mn |m⟩⟨n| ⊗ ε(|m⟩⟨n|)` and `χ_ij = ⟨⟨O_i|J|O_j⟩⟩/4`.
    pub fn from_linear_map(map: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> Result<Self> {
        Self::new(chi_of_linear_map(map))
    }

    pub fn chi(&self) -> &ComplexMatrix {
        &self.chi
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.chi[(i, j)]
    }

    /// χ₁₁, the identity-process weight.
    pub fn identity_weight(&self) -> f64 {
        self.chi[(0, 0)].re
    }

    /// Raw Σ χ_ij O_i M O_j† for any 2×2 operator M.
    pub fn apply_operator(&self, m: &ComplexMatrix) -> ComplexMatrix {
        with_basis(|b| {
            let mut out = ComplexMatrix::zeros(2);
            for i in 0..4 {
                let left = b.get(i) * m;
                for j in 0..4 {
                    let w = self.chi[(i, j)];
                    if w.norm_sqr() == 0.0 {
                        continue;
                    }
                    out = &out + &(&left * &b.get(j).adjoint()).scale(w);
                }
            }
            out
        })
    }

    /// The channel followed by `next`.
    pub fn then(&self, next: &ProcessMatrix) -> Result<Self> {
        Self::from_linear_map(|m| next.apply_operator(&self.apply_operator(m)))
    }

    /// χ′ of ρ ↦ U ε(ρ) U†, computed as χ′ = AχA† with `U O_i = Σ_k A_ki O_k`.
    pub fn followed_by_unitary(&self, u: &ComplexMatrix) -> Result<Self> {
        let a = with_basis(|b| b.map_matrix(|o| u * o));
        Self::new(&(&a * &self.chi) * &a.adjoint())
    }

    pub fn hilbert_schmidt_distance(&self, other: &ProcessMatrix) -> f64 {
        (&self.chi - &other.chi).frobenius_norm()
    }
}

/// χ of a linear map without validating the result.
pub(crate) fn chi_of_linear_map(map: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
    // J[(2m+k),(2n+l)] = ε(|m⟩⟨n|)[k][l]
    let mut choi = ComplexMatrix::zeros(4);
    for m in 0..2 {
        for n in 0..2 {
            let unit = ComplexMatrix::from_fn(2, |i, j| if i == m && j == n { c(1.0, 0.0) } else { c(0.0, 0.0) });
            let out = map(&unit);
            for k in 0..2 {
                for l in 0..2 {
                    choi[(2 * m + k, 2 * n + l)] = out[(k, l)];
                }
            }
        }
    }
    // |O⟩⟩ = Σ_m |m⟩ ⊗ O|m⟩, entry (2m+k) = O[k][m]
    let vecs: Vec<[Complex64; 4]> = with_basis(|b| {
        b.elements()
            .iter()
            .map(|o| std::array::from_fn(|idx| o[(idx % 2, idx / 2)]))
            .collect()
    });
    ComplexMatrix::from_fn(4, |i, j| {
        let mut acc = c(0.0, 0.0);
        for a in 0..4 {
            for bb in 0..4 {
                acc += vecs[i][a].conj() * choi[(a, bb)] * vecs[j][bb];
            }
        }
        acc * 0.25
    })
}

/// `Σ_ij χ_ij O_j† O_i`, which equals the identity for a trace-preserving χ.
pub(crate) fn trace_preservation_operator(chi: &ComplexMatrix) -> ComplexMatrix {
    with_basis(|b| {
        let mut f = ComplexMatrix::zeros(2);
        for i in 0..4 {
            for j in 0..4 {
                let w = chi[(i, j)];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                f = &f + &(&b.get(j).adjoint() * b.get(i)).scale(w);
            }
        }
        f
    })
}

/// Max element deviation of `Σ_ij χ_ij O_j† O_i` from the identity.
pub fn trace_preservation_defect(chi: &ComplexMatrix) -> f64 {
    trace_preservation_operator(chi).max_abs_diff(&ComplexMatrix::identity(2))
}

/// Rescales χ so the channel becomes exactly trace preserving while staying
/// completely positive: ε′(ρ) = ε(GρG†) with G = F^{-1/2}, F = ε†(I).
/// Returns `None` if F is numerically singular.
pub(crate) fn project_trace_preserving(chi: &ComplexMatrix) -> Option<ComplexMatrix> {
    let f = trace_preservation_operator(chi).hermitian_part();
    let (vals, _) = f.eigh();
    if !(vals[0] > 1e-12 * vals[1].abs().max(1e-300)) || !vals[0].is_finite() {
        return None;
    }
    let g = f.hermitian_function(|x| 1.0 / x.sqrt());
    let bmat = with_basis(|b| b.map_matrix(|o| o * &g));
    Some(&(&bmat * chi) * &bmat.adjoint())
}

fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(domain(format!("depolarizing weight {w} outside [0, 1]")))
    }
}

/// ε(ρ) = Σ_ij χ_ij O_i ρ O_j† on a one-qubit state.
pub fn apply_process(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != 2 {
        return Err(contract(format!(
            "process matrix acts on one qubit, got a {}×{} state",
            rho.dim(),
            rho.dim()
        )));
    }
    DensityMatrix::from_channel_output(chi.apply_operator(rho.matrix()))
}

/// (Identity ⊗ ε)(ρ): the channel acts on the photon of an ion–photon state.
pub fn apply_to_photon_half(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != 4 {
        return Err(contract(format!(
            "expected a two-qubit (4×4) state, got {}×{}",
            rho.dim(),
            rho.dim()
        )));
    }
    let id = ComplexMatrix::identity(2);
    let out = with_basis(|b| {
        let lifted: Vec<ComplexMatrix> = b.elements().iter().map(|o| id.kron(o).unwrap()).collect();
        let mut out = ComplexMatrix::zeros(4);
        for i in 0..4 {
            let left = &lifted[i] * rho.matrix();
            for j in 0..4 {
                let w = chi.chi[(i, j)];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                out = &out + &(&left * &lifted[j].adjoint()).scale(w);
            }
        }
        out
    });
    DensityMatrix::from_channel_output(out)
}

/// w·ρ + (1−w)·I/d.
pub fn depolarize(rho: &DensityMatrix, w: f64) -> Result<DensityMatrix> {
    check_weight(w)?;
    let d = rho.dim();
    let mixed = ComplexMatrix::identity(d).scale_real((1.0 - w) / d as f64);
    DensityMatrix::new(&rho.matrix().scale_real(w) + &mixed)
}

/// Partial transpose of a two-qubit state on `subsystem` (0 = ion, 1 = photon).
pub fn partial_transpose(rho: &DensityMatrix, subsystem: usize) -> Result<ComplexMatrix> {
    if rho.dim() != 4 {
        return Err(contract("partial transpose needs a two-qubit state"));
    }
    let m = rho.matrix();
    let split = |k: usize| (k / 2, k % 2);
    let join = |a: usize, b: usize| 2 * a + b;
    match subsystem {
        ION => Ok(ComplexMatrix::from_fn(4, |r, s| {
            let ((a, b), (c2, d)) = (split(r), split(s));
            m[(join(c2, b), join(a, d))]
        })),
        PHOTON => Ok(ComplexMatrix::from_fn(4, |r, s| {
            let ((a, b), (c2, d)) = (split(r), split(s));
            m[(join(a, d), join(c2, b))]
        })),
        other => Err(domain(format!("subsystem index {other} is not 0 (ion) or 1 (photon)"))),
    }
}

/// Negativity `(‖ρ^Γ‖₁ − 1)/2`, the summed magnitude of the negative
/// eigenvalues of the partial transpose.
/// Eigenvalues smaller in magnitude than this multiple of the spectral radius
/// are eigensolver round-off and count as zero.
pub const EIGENVALUE_ROUNDOFF: f64 = 64.0 * f64::EPSILON;

pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    let eig = partial_transpose(rho, PHOTON)?.eigenvalues_hermitian();
    let floor = EIGENVALUE_ROUNDOFF * eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(eig.iter().filter(|&&v| v < -floor).fold(0.0, |acc, v| acc - v))
}

/// Smallest eigenvalue of the photon partial transpose.
pub fn min_partial_transpose_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    Ok(partial_transpose(rho, PHOTON)?.eigenvalues_hermitian()[0])
}

/// U = Rz(φ)·Ry(θ)·Rz(λ) with Rz(a) = diag(e^{−ia/2}, e^{ia/2}).
pub fn unitary_from_angles(theta: f64, phi: f64, lam: f64) -> ComplexMatrix {
    let rz = |a: f64| {
        ComplexMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => Complex64::from_polar(1.0, -a / 2.0),
            (1, 1) => Complex64::from_polar(1.0, a / 2.0),
            _ => c(0.0, 0.0),
        })
    };
    let (s, co) = (theta / 2.0).sin_cos();
    let ry = ComplexMatrix::from_rows(&[vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]])
        .unwrap();
    &(&rz(phi) * &ry) * &rz(lam)
}

/// True if `u` and `v` act identically by conjugation (equal up to phase).
pub fn same_up_to_phase(u: &ComplexMatrix, v: &ComplexMatrix, tol: f64) -> bool {
    let overlap = (&u.adjoint() * v).trace();
    let n = u.dim() as f64;
    (overlap.norm() - n).abs() <= tol * n
}

// JSON forms: nested [re, im] pairs plus the basis tag.

type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn to_json_matrix(m: &ComplexMatrix) -> JsonMatrix {
    m.rows()
        .into_iter()
        .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

fn from_json_matrix(rows: &JsonMatrix) -> Result<ComplexMatrix> {
    let rows: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| r.iter().map(|p| c(p[0], p[1])).collect())
        .collect();
    ComplexMatrix::from_rows(&rows)
}

fn check_tag(tag: &str) -> Result<()> {
    if tag == BASIS_TAG {
        Ok(())
    } else {
        Err(Error::Format(format!("basis tag must be \"{BASIS_TAG}\", got \"{tag}\"")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessMatrixJson {
    basis: String,
    chi: JsonMatrix,
}

impl Serialize for ProcessMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProcessMatrixJson {
            basis: BASIS_TAG.to_string(),
            chi: to_json_matrix(&self.chi),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProcessMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ProcessMatrixJson::deserialize(d)?;
        check_tag(&raw.basis)
            .and_then(|_| from_json_matrix(&raw.chi))
            .and_then(ProcessMatrix::new)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityMatrixJson {
    basis: String,
    rho: JsonMatrix,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DensityMatrixJson {
            basis: BASIS_TAG.to_string(),
            rho: to_json_matrix(&self.matrix),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DensityMatrixJson::deserialize(d)?;
        check_tag(&raw.basis)
            .and_then(|_| from_json_matrix(&raw.rho))
            .and_then(DensityMatrix::new)
            .map_err(serde::de::Error::custom)
    }
}
