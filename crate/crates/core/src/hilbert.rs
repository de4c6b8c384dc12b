//! Dense complex linear algebra and quantum-information primitives.
//!
//! Conventions, used consistently by every module in the crate:
//!
//! - Tensor ordering: the system factor is the slow (leftmost) index, i.e.
//!   `kron(a, b)[(i*q + k, j*q + l)] = a[(i, j)] * b[(k, l)]` for `b` of size
//!   `q`.
//! - Vectorization is column-stacking: `vec(rho)[j*d + i] = rho[(i, j)]`, so
//!   the matrix of the superoperator `rho -> A rho B` is
//!   `kron(B.transpose(), A)`.
//! - ħ = 1 throughout; all quantities are dimensionless in internal units.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Global tolerance for Hermiticity, unit-trace and positivity validation.
///
/// Chosen for double-precision eigensolvers at dimensions up to ~256.
pub const VALIDATION_TOL: f64 = 1e-10;

/// Hermiticity tolerance accepted by [`hermitian_eigensystem`].
pub const HERMITICITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("matrix is not Hermitian (max deviation {deviation:.3e}, tolerance {tolerance:.3e})")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("trace deviates from one by {0:.3e}")]
    TraceNotOne(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),
    #[error("dimension {0} is not a perfect square")]
    NotPerfectSquare(usize),
    #[error("composite dimension {dim} does not factor as {dim_s}x{dim_e}")]
    BadFactorization {
        dim: usize,
        dim_s: usize,
        dim_e: usize,
    },
}

/// Which tensor factor of a composite state to keep under a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    System,
    Environment,
}

/// Dimensions of a system ⊗ environment splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompositeDims {
    pub dim_s: usize,
    pub dim_e: usize,
}

impl CompositeDims {
    pub fn new(dim_s: usize, dim_e: usize) -> Self {
        assert!(
            dim_s > 0 && dim_e > 0,
            "subsystem dimensions must be positive"
        );
        Self { dim_s, dim_e }
    }

    pub fn total(&self) -> usize {
        self.dim_s * self.dim_e
    }
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite
/// (all within [`VALIDATION_TOL`], or an explicit tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    mat: CMatrix,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self, HilbertError> {
        Self::with_tolerance(mat, VALIDATION_TOL)
    }

    /// Validate with a caller-chosen tolerance (propagated superoperator
    /// arithmetic warrants a slightly looser 1e-9).
    pub fn with_tolerance(mat: CMatrix, tol: f64) -> Result<Self, HilbertError> {
        let dim = check_square(&mat)?;
        if !all_finite(&mat) {
            return Err(HilbertError::NonFinite);
        }
        let dev = hermiticity_deviation(&mat);
        if dev > tol {
            return Err(HilbertError::NotHermitian {
                deviation: dev,
                tolerance: tol,
            });
        }
        let tr = trace(&mat);
        let tr_dev = (tr - Complex64::new(1.0, 0.0)).norm();
        if tr_dev > tol {
            return Err(HilbertError::TraceNotOne(tr_dev));
        }
        let (values, _) = hermitian_eigen_core(&hermitian_part(&mat));
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(HilbertError::NotPositiveSemidefinite(min));
        }
        Ok(Self { dim, mat })
    }

    /// Projector |psi⟩⟨psi| of a state vector, normalized first.
    pub fn from_pure(ket: &CVector) -> Result<Self, HilbertError> {
        let norm = ket.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(HilbertError::NonFinite);
        }
        let psi = ket / Complex64::new(norm, 0.0);
        let mat = &psi * psi.adjoint();
        Self::new(mat)
    }

    /// Maximally mixed state `I/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mat = CMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0);
        Self { dim, mat }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }
}

fn check_square(m: &CMatrix) -> Result<usize, HilbertError> {
    if m.nrows() != m.ncols() {
        Err(HilbertError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    } else {
        Ok(m.nrows())
    }
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Largest entry modulus; zero for an empty matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Max deviation of `m` from its own adjoint.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Trace distance `D(a, b) = ||a - b||_1 / 2`, in `[0, 1]` for states.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64, HilbertError> {
    if a.dim() != b.dim() {
        return Err(HilbertError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(0.5 * hermitian_trace_norm(&(a.matrix() - b.matrix())))
}

/// Trace norm of a (numerically) Hermitian matrix: the sum of the absolute
/// eigenvalues of its Hermitian part.
pub fn hermitian_trace_norm(m: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen_core(&hermitian_part(m));
    values.iter().map(|l| l.abs()).sum()
}

// Eigendecomposition of an (exactly) Hermitian matrix by complex Householder
// tridiagonalization followed by implicit-shift QL on the real tridiagonal
// form, with eigenvectors accumulated along the way. Degenerate input
// (repeated eigenvalues, whole zero rows) deflates cleanly, which dense
// quantum maps produce all the time.
fn hermitian_eigen_core(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let mut a = a.clone();
    let mut q = CMatrix::identity(n, n);
    // Householder reduction to Hermitian tridiagonal form. The reflector is
    // built in units of the column maximum and normalized, so residual
    // columns of rounding dust cannot overflow the update.
    for k in 0..n.saturating_sub(2) {
        let col_max = (k + 1..n).map(|i| a[(i, k)].norm()).fold(0.0, f64::max);
        if col_max == 0.0 {
            continue;
        }
        let mut v = CVector::zeros(n);
        for i in k + 1..n {
            v[i] = a[(i, k)] / col_max;
        }
        let scaled_norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let x0 = v[k + 1];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        v[k + 1] += phase * scaled_norm;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        let v = v / Complex64::new(vnorm, 0.0);
        // H = I - 2 v v†: HAH = A - v u† - u v† with u = 2 A v - 2 (v†Av) v
        let w = &a * &v;
        let s: Complex64 = v.dotc(&w);
        let u = w.scale(2.0) - v.scale(2.0 * s.re);
        for i in 0..n {
            for j in 0..n {
                let upd = v[i] * u[j].conj() + u[i] * v[j].conj();
                a[(i, j)] -= upd;
            }
        }
        // Q <- Q H
        let qv = &q * &v;
        for i in 0..n {
            for j in 0..n {
                let upd = qv[i] * v[j].conj() * 2.0;
                q[(i, j)] -= upd;
            }
        }
    }
    // Phase-rotate the subdiagonal onto the real axis
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut phase = vec![Complex64::new(1.0, 0.0); n];
    d[0] = a[(0, 0)].re;
    for k in 0..n - 1 {
        let sub = a[(k + 1, k)];
        let p = if sub.norm() > 0.0 {
            sub / sub.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        phase[k + 1] = phase[k] * p;
        e[k] = sub.norm();
        d[k + 1] = a[(k + 1, k + 1)].re;
    }
    let mut z = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            z[(i, j)] = q[(i, j)] * phase[j];
        }
    }
    // Implicit-shift QL with eigenvector accumulation. The convergence test
    // compares subdiagonals against a running global scale, so blocks of
    // exact zeros (high-multiplicity spectra) deflate instead of stalling.
    let eps = f64::EPSILON;
    let mut shift_acc = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        let m = m.min(n - 1);
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                assert!(iter <= 100 * n, "tridiagonal QL failed to converge");
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                shift_acc += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g_i = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g_i;
                    d[i + 1] = h + s * (c * g_i + s * d[i]);
                    for k in 0..n {
                        let zk = z[(k, i + 1)];
                        let zi = z[(k, i)];
                        z[(k, i + 1)] =
                            Complex64::new(s * zi.re + c * zk.re, s * zi.im + c * zk.im);
                        z[(k, i)] = Complex64::new(c * zi.re - s * zk.re, c * zi.im - s * zk.im);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_acc;
        e[l] = 0.0;
    }
    (d, z)
}

/// Tensor product with the first factor on the slow index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Partial trace over the discarded factor of a raw composite matrix.
///
/// `keep = System` traces out the environment and vice versa. Works on any
/// matrix (Choi matrices included), not only states.
pub fn partial_trace_matrix(
    m: &CMatrix,
    dims: CompositeDims,
    keep: Subsystem,
) -> Result<CMatrix, HilbertError> {
    let dim = check_square(m)?;
    if dims.total() != dim {
        return Err(HilbertError::BadFactorization {
            dim,
            dim_s: dims.dim_s,
            dim_e: dims.dim_e,
        });
    }
    let (ds, de) = (dims.dim_s, dims.dim_e);
    match keep {
        Subsystem::System => {
            let mut out = CMatrix::zeros(ds, ds);
            for i in 0..ds {
                for j in 0..ds {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..de {
                        acc += m[(i * de + k, j * de + k)];
                    }
                    out[(i, j)] = acc;
                }
            }
            Ok(out)
        }
        Subsystem::Environment => {
            let mut out = CMatrix::zeros(de, de);
            for k in 0..de {
                for l in 0..de {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..ds {
                        acc += m[(i * de + k, i * de + l)];
                    }
                    out[(k, l)] = acc;
                }
            }
            Ok(out)
        }
    }
}

/// Reduced state of the kept subsystem.
pub fn partial_trace(
    rho: &DensityMatrix,
    dims: CompositeDims,
    keep: Subsystem,
) -> Result<DensityMatrix, HilbertError> {
    let reduced = partial_trace_matrix(rho.matrix(), dims, keep)?;
    DensityMatrix::new(reduced)
}

/// Eigenvalues (ascending) and matching eigenvector columns of a Hermitian
/// matrix. The input must be Hermitian within [`HERMITICITY_TOL`] relative to
/// its largest entry (with an absolute floor of the same size).
pub fn hermitian_eigensystem(m: &CMatrix) -> Result<(Vec<f64>, CMatrix), HilbertError> {
    check_square(m)?;
    if !all_finite(m) {
        return Err(HilbertError::NonFinite);
    }
    let scale = max_abs(m).max(1.0);
    let dev = hermiticity_deviation(m);
    if dev > HERMITICITY_TOL * scale {
        return Err(HilbertError::NotHermitian {
            deviation: dev,
            tolerance: HERMITICITY_TOL * scale,
        });
    }
    let (raw_values, raw_vectors) = hermitian_eigen_core(&hermitian_part(m));
    let n = raw_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw_values[i].total_cmp(&raw_values[j]));
    let values: Vec<f64> = order.iter().map(|&i| raw_values[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &raw_vectors.column(i));
    }
    Ok((values, vectors))
}

// Padé order thresholds for the scaling-and-squaring exponential
// (Higham 2005, table for double precision).
const PADE_THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(order: usize) -> &'static [f64] {
    match order {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé order"),
    }
}

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != Complex64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

fn pade_exponential(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let id = CMatrix::identity(n, n);
    let norm = one_norm(a);
    let (order, squarings) = {
        let mut chosen = None;
        for &(order, theta) in &PADE_THETA[..4] {
            if norm <= theta {
                chosen = Some((order, 0u32));
                break;
            }
        }
        chosen.unwrap_or_else(|| {
            let theta13 = PADE_THETA[4].1;
            let s = (norm / theta13).log2().ceil().max(0.0) as u32;
            (13, s)
        })
    };
    let a = a / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let b = pade_coefficients(order);
    let a2 = &a * &a;
    let (u, v) = if order < 13 {
        // U = A * sum_{odd k} b_k A^(k-1), V = sum_{even k} b_k A^k
        let mut u_poly = id.scale(b[1]);
        let mut v_poly = id.scale(b[0]);
        let mut power = id.clone();
        for k in (2..=order).step_by(2) {
            power = &power * &a2;
            u_poly += power.scale(b[k + 1]);
            v_poly += power.scale(b[k]);
        }
        (&a * u_poly, v_poly)
    } else {
        let a4 = &a2 * &a2;
        let a6 = &a2 * &a4;
        let u_hi = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]));
        let u_lo = a6.scale(b[7]) + a4.scale(b[5]) + a2.scale(b[3]) + id.scale(b[1]);
        let v_hi = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]));
        let v_lo = a6.scale(b[6]) + a4.scale(b[4]) + a2.scale(b[2]) + id.scale(b[0]);
        (&a * (u_hi + u_lo), v_hi + v_lo)
    };
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut result = lhs
        .lu()
        .solve(&rhs)
        .expect("Padé denominator must be invertible for finite input");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Matrix exponential `exp(t*m)`.
///
/// Diagonal input is exponentiated entrywise; Hermitian and anti-Hermitian
/// input goes through an eigendecomposition; everything else uses
/// scaling-and-squaring with a Padé approximant.
///
/// Panics on non-square input.
pub fn matrix_exponential(m: &CMatrix, t: f64) -> CMatrix {
    let n = check_square(m).expect("matrix_exponential requires a square matrix");
    let a = m.scale(t);
    if max_abs(&a) == 0.0 {
        return CMatrix::identity(n, n);
    }
    if is_diagonal(&a) {
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = a[(i, i)].exp();
        }
        return out;
    }
    let scale = max_abs(&a);
    if hermiticity_deviation(&a) <= 1e-12 * scale {
        let (values, vectors) = hermitian_eigen_core(&hermitian_part(&a));
        let exp_diag = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i].exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        return &vectors * exp_diag * vectors.adjoint();
    }
    // anti-Hermitian: a = -iH with H Hermitian, exp(a) = V e^{-i lambda} V^dag
    let h = a.map(|z| z * Complex64::new(0.0, 1.0));
    if hermiticity_deviation(&h) <= 1e-12 * scale {
        let (values, vectors) = hermitian_eigen_core(&hermitian_part(&h));
        let exp_diag = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(0.0, -values[i]).exp()
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        return &vectors * exp_diag * vectors.adjoint();
    }
    pade_exponential(&a)
}

fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Complex Ginibre matrix with i.i.d. standard-normal real and imaginary
/// parts.
pub fn random_ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| standard_complex(rng))
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of the
/// R diagonal absorbed into Q.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = random_ginibre(dim, rng);
    let qr = g.qr();
    let r = qr.r();
    let phases: Vec<Complex64> = (0..dim)
        .map(|i| {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();
    let mut q = qr.q();
    for (j, phase) in phases.iter().enumerate() {
        let col = q.column(j) * *phase;
        q.set_column(j, &col);
    }
    q
}

/// Random mixed state `G G† / tr(G G†)` from a Ginibre draw.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = random_ginibre(dim, rng);
    let gg = &g * g.adjoint();
    let tr = trace(&gg).re;
    DensityMatrix::new(gg / Complex64::new(tr, 0.0))
        .expect("Ginibre construction yields a valid state")
}

/// Haar-random normalized state vector.
pub fn random_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(dim, |_, _| standard_complex(rng));
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

/// Projector onto a Haar-random pure state.
pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let ket = random_ket(dim, rng);
    DensityMatrix::from_pure(&ket).expect("normalized ket yields a valid projector")
}

/// Column-stacking vectorization, `vec(m)[j*d + i] = m[(i, j)]`.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`] for a `d*d` vector.
pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    assert_eq!(v.len(), dim * dim, "vector length must be dim^2");
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Choi matrix `C = (Phi ⊗ id)(|Omega><Omega|)` of a superoperator matrix
/// acting on column-stacked states, with `|Omega> = sum_i |ii>` unnormalized.
///
/// `Phi` is completely positive iff `C` is positive semidefinite, and trace
/// preserving iff the partial trace of `C` over the first (output) factor is
/// the identity.
pub fn choi_matrix(map: &CMatrix) -> Result<CMatrix, HilbertError> {
    let n = check_square(map)?;
    let dim = (n as f64).sqrt().round() as usize;
    if dim * dim != n {
        return Err(HilbertError::NotPerfectSquare(n));
    }
    // C[a*d + c, b*d + e] = Phi(E_ce)[a, b] = map[b*d + a, e*d + c]
    let mut choi = CMatrix::zeros(n, n);
    for a in 0..dim {
        for c in 0..dim {
            for b in 0..dim {
                for e in 0..dim {
                    choi[(a * dim + c, b * dim + e)] = map[(b * dim + a, e * dim + c)];
                }
            }
        }
    }
    Ok(choi)
}

/// Smallest eigenvalue of the Choi matrix of a superoperator matrix; the map
/// is completely positive iff this is (numerically) non-negative.
pub fn choi_min_eigenvalue(map: &CMatrix) -> Result<f64, HilbertError> {
    let choi = choi_matrix(map)?;
    let (values, _) = hermitian_eigensystem(&choi)?;
    Ok(values[0])
}

/// Max-entry deviation of a map from trace preservation, measured through the
/// partial trace of its Choi matrix over the output factor.
pub fn tp_deviation(map: &CMatrix) -> Result<f64, HilbertError> {
    let n = map.nrows();
    let dim = (n as f64).sqrt().round() as usize;
    if dim * dim != n {
        return Err(HilbertError::NotPerfectSquare(n));
    }
    let choi = choi_matrix(map)?;
    let reduced =
        partial_trace_matrix(&choi, CompositeDims::new(dim, dim), Subsystem::Environment)?;
    let id = CMatrix::identity(dim, dim);
    Ok(max_abs(&(reduced - id)))
}
