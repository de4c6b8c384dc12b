//! Lindblad generators, dense superoperators and exact propagation.
//!
//! Three generator constructions are provided:
//!
//! - [`LindbladGenerator`]: the generic form
//!   `L[rho] = -i [H, rho] + sum_k lambda_k (A_k rho A_k† - {A_k† A_k, rho}/2)`.
//! - [`Superoperator::grw`]: the position-localization generator
//!   `rho -> -lambda (rho - sum_j dy L(y_j, x) rho L(y_j, x))` with the
//!   center sum on a grid padded by `6 r_c`. On position matrix units it
//!   multiplies `<x|rho|y>` by `-Gamma(x, y)` with
//!   `Gamma(x, y) = lambda (1 - exp(-(x - y)^2 / (4 r_c^2)))`.
//! - [`Superoperator::covariant`]: the translationally covariant momentum-kick
//!   form `rho -> -lambda (rho - sum_j dq Lt(q_j) e^{i q x} rho e^{-i q x})`.
//!   The weight `Lt(q) = (r_c / sqrt(pi)) exp(-q^2 r_c^2)` is the squared
//!   modulus of the Fourier transform of the localization profile divided by
//!   `2 pi`; it is the unique Gaussian weight that is normalized to
//!   `∫ Lt dq = 1` (trace preservation) and reproduces the kernel
//!   `Gamma(x, y)` above, making the two constructions equal as matrices.
//!
//! Superoperators act on column-stacked density matrices and are integrated
//! by exact matrix exponentials; an adaptive RK4 fallback covers
//! time-dependent generators.

use num_complex::Complex64;
use rand::Rng;
use std::io::{self, Write};
use thiserror::Error;

use crate::grw::{GrwParams, PositionGrid};
use crate::hilbert::{
    hermitian_part, hermiticity_deviation, kron, matrix_exponential, max_abs, random_ginibre,
    unvectorize, vectorize, CMatrix, DensityMatrix, HilbertError,
};

#[derive(Debug, Error)]
pub enum LindbladError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("channel rate must be non-negative (got {0})")]
    NegativeRate(f64),
    #[error("hamiltonian is not Hermitian (max deviation {0:.3e})")]
    NonHermitianHamiltonian(f64),
    #[error("momentum grid under-resolves the kick weight (normalization deficit {0:.3e})")]
    UnderResolvedQGrid(f64),
    #[error("times must be sorted and non-negative")]
    UnsortedTimes,
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Effective Hamiltonian plus a list of `(rate, operator)` decay channels.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    hamiltonian: CMatrix,
    channels: Vec<(f64, CMatrix)>,
}

impl LindbladGenerator {
    pub fn new(hamiltonian: CMatrix, channels: Vec<(f64, CMatrix)>) -> Result<Self, LindbladError> {
        let dim = hamiltonian.nrows();
        if hamiltonian.ncols() != dim {
            return Err(LindbladError::DimensionMismatch(dim, hamiltonian.ncols()));
        }
        let dev = hermiticity_deviation(&hamiltonian);
        if dev > 1e-10 * max_abs(&hamiltonian).max(1.0) {
            return Err(LindbladError::NonHermitianHamiltonian(dev));
        }
        for (rate, op) in &channels {
            if !(rate.is_finite() && *rate >= 0.0) {
                return Err(LindbladError::NegativeRate(*rate));
            }
            if op.nrows() != dim || op.ncols() != dim {
                return Err(LindbladError::DimensionMismatch(dim, op.nrows()));
            }
        }
        Ok(Self {
            hamiltonian,
            channels,
        })
    }

    /// Generator with a GUE Hamiltonian and Frobenius-normalized Ginibre
    /// channel operators at unit-scale random rates; drives randomized
    /// semigroup tests. Normalizing the channels keeps the propagators well
    /// conditioned over order-one time spans.
    pub fn random<R: Rng + ?Sized>(dim: usize, n_channels: usize, rng: &mut R) -> Self {
        let hamiltonian = hermitian_part(&random_ginibre(dim, rng));
        let channels = (0..n_channels)
            .map(|_| {
                let g = random_ginibre(dim, rng);
                let norm = g.norm();
                (0.1 + 0.9 * rng.gen::<f64>(), g / Complex64::new(norm, 0.0))
            })
            .collect();
        Self::new(hamiltonian, channels).expect("randomized generator is valid by construction")
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[(f64, CMatrix)] {
        &self.channels
    }

    /// Apply the generator to a raw matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let h = &self.hamiltonian;
        let commutator = h * rho - rho * h;
        let mut out = commutator.map(|z| z * Complex64::new(0.0, -1.0));
        for (rate, a) in &self.channels {
            let a_dag = a.adjoint();
            let a_dag_a = &a_dag * a;
            let sandwich = a * rho * &a_dag;
            let anti = (&a_dag_a * rho + rho * &a_dag_a).scale(0.5);
            out += (sandwich - anti).scale(*rate);
        }
        out
    }
}

/// Right-hand side `L[rho]` of the master equation; traceless and Hermitian
/// for a valid state.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    gen: &LindbladGenerator,
) -> Result<CMatrix, LindbladError> {
    if rho.dim() != gen.dim() {
        return Err(LindbladError::DimensionMismatch(rho.dim(), gen.dim()));
    }
    Ok(gen.apply(rho.matrix()))
}

/// Dense matrix of a superoperator acting on column-stacked states.
#[derive(Debug, Clone)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    /// Matrix of a [`LindbladGenerator`], using
    /// `vec(A rho B) = kron(B^T, A) vec(rho)`.
    pub fn from_generator(gen: &LindbladGenerator) -> Self {
        let d = gen.dim();
        let id = CMatrix::identity(d, d);
        let h = gen.hamiltonian();
        let mut m =
            (kron(&id, h) - kron(&h.transpose(), &id)).map(|z| z * Complex64::new(0.0, -1.0));
        for (rate, a) in gen.channels() {
            let a_dag_a = a.adjoint() * a;
            let jump = kron(&a.map(|z| z.conj()), a);
            let anti = (kron(&id, &a_dag_a) + kron(&a_dag_a.transpose(), &id)).scale(0.5);
            m += (jump - anti).scale(*rate);
        }
        Self { dim: d, matrix: m }
    }

    /// Localization generator on a position grid; diagonal on matrix units,
    /// multiplying `<x_i|rho|x_j>` by `-Gamma(x_i, x_j)`.
    pub fn grw(grid: &PositionGrid, p: &GrwParams) -> Self {
        let kernel = DecoherenceKernel::from_quadrature(grid, p);
        let n = grid.n_points();
        let mut m = CMatrix::zeros(n * n, n * n);
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                m[(k, k)] = Complex64::new(-kernel.gamma(i, j), 0.0);
            }
        }
        Self { dim: n, matrix: m }
    }

    /// Covariant momentum-kick generator on the given symmetric `q` grid.
    ///
    /// Fails when the quadrature of the kick weight deviates from one by
    /// more than 1e-6.
    pub fn covariant(
        grid: &PositionGrid,
        p: &GrwParams,
        q_grid: &[f64],
    ) -> Result<Self, LindbladError> {
        if q_grid.len() < 2 {
            return Err(LindbladError::UnderResolvedQGrid(1.0));
        }
        let dq = q_grid[1] - q_grid[0];
        let weights: Vec<f64> = q_grid.iter().map(|&q| kick_weight(q, p.r_c) * dq).collect();
        let total: f64 = weights.iter().sum();
        let deficit = (total - 1.0).abs();
        if deficit > 1e-6 {
            return Err(LindbladError::UnderResolvedQGrid(deficit));
        }
        let n = grid.n_points();
        let mut m = CMatrix::zeros(n * n, n * n);
        for j in 0..n {
            for i in 0..n {
                let u = grid.point(i) - grid.point(j);
                let mut phase_sum = Complex64::new(0.0, 0.0);
                for (&q, &w) in q_grid.iter().zip(&weights) {
                    phase_sum += Complex64::new(0.0, q * u).exp() * w;
                }
                let k = j * n + i;
                m[(k, k)] = (phase_sum - Complex64::new(1.0, 0.0)).scale(p.lambda);
            }
        }
        Ok(Self { dim: n, matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim)
    }

    /// Propagator `exp(t L)` as a superoperator matrix.
    pub fn propagator(&self, t: f64) -> CMatrix {
        matrix_exponential(&self.matrix, t)
    }
}

/// Gaussian momentum-kick weight, normalized so that `∫ Lt(q) dq = 1`.
pub fn kick_weight(q: f64, r_c: f64) -> f64 {
    r_c / std::f64::consts::PI.sqrt() * (-q * q * r_c * r_c).exp()
}

/// Symmetric momentum grid wide and fine enough for
/// [`Superoperator::covariant`] on the given position grid: span `±6/r_c`,
/// spacing set by the largest position separation so the oscillatory
/// quadrature stays converged.
pub fn default_q_grid(grid: &PositionGrid, p: &GrwParams) -> Vec<f64> {
    let u_max = grid.x_max() - grid.x_min();
    let dq = 2.0 * std::f64::consts::PI / (1.3 * (u_max + 12.0 * p.r_c));
    let q_max = 6.0 / p.r_c;
    let half = (q_max / dq).ceil() as i64;
    (-half..=half).map(|k| k as f64 * dq).collect()
}

/// Position-decoherence kernel `Gamma(x_i, x_j)`.
#[derive(Debug, Clone)]
pub struct DecoherenceKernel {
    grid: PositionGrid,
    lambda: f64,
    gamma: nalgebra::DMatrix<f64>,
}

impl DecoherenceKernel {
    /// Closed form `Gamma(x, y) = lambda (1 - exp(-(x - y)^2 / (4 r_c^2)))`.
    pub fn closed_form(grid: &PositionGrid, p: &GrwParams) -> Self {
        let n = grid.n_points();
        let gamma = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            let d = grid.point(i) - grid.point(j);
            p.lambda * (1.0 - (-d * d / (4.0 * p.r_c * p.r_c)).exp())
        });
        Self {
            grid: *grid,
            lambda: p.lambda,
            gamma,
        }
    }

    /// Kernel from the trapezoid quadrature of the localization-overlap
    /// integral `∫ L(z, x) L(z, y) dz` on the padded center grid.
    pub fn from_quadrature(grid: &PositionGrid, p: &GrwParams) -> Self {
        let pad = crate::grw::JUMP_GRID_PADDING * p.r_c;
        let lo = grid.x_min() - pad;
        let hi = grid.x_max() + pad;
        let dz_target = grid.dx().min(p.r_c / 2.0);
        let n_z = ((hi - lo) / dz_target).ceil() as usize + 1;
        let dz = (hi - lo) / (n_z - 1) as f64;
        let prefactor = (std::f64::consts::PI * p.r_c * p.r_c).powf(-0.25);
        let inv_2rc2 = 1.0 / (2.0 * p.r_c * p.r_c);
        let n = grid.n_points();
        // profiles[(m, i)] = L(z_m, x_i)
        let profiles = nalgebra::DMatrix::from_fn(n_z, n, |m, i| {
            let z = lo + m as f64 * dz;
            let d = z - grid.point(i);
            prefactor * (-d * d * inv_2rc2).exp()
        });
        let overlap = profiles.transpose() * &profiles * dz;
        let gamma = nalgebra::DMatrix::from_fn(n, n, |i, j| p.lambda * (1.0 - overlap[(i, j)]));
        Self {
            grid: *grid,
            lambda: p.lambda,
            gamma,
        }
    }

    pub fn grid(&self) -> &PositionGrid {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.gamma[(i, j)]
    }
}

fn check_times(times: &[f64]) -> Result<(), LindbladError> {
    let ok = !times.is_empty()
        && times.windows(2).all(|w| w[0] <= w[1])
        && times[0] >= 0.0
        && times.iter().all(|t| t.is_finite());
    if ok {
        Ok(())
    } else {
        Err(LindbladError::UnsortedTimes)
    }
}

/// Propagate `rho0` under `exp(t L)` at each requested time.
pub fn integrate_lindblad(
    rho0: &DensityMatrix,
    sup: &Superoperator,
    times: &[f64],
) -> Result<Vec<DensityMatrix>, LindbladError> {
    if rho0.dim() != sup.dim() {
        return Err(LindbladError::DimensionMismatch(rho0.dim(), sup.dim()));
    }
    check_times(times)?;
    let v0 = vectorize(rho0.matrix());
    times
        .iter()
        .map(|&t| {
            let phi = matrix_exponential(sup.matrix(), t);
            let mat = unvectorize(&(&phi * &v0), sup.dim());
            DensityMatrix::with_tolerance(mat, 1e-9).map_err(LindbladError::from)
        })
        .collect()
}

/// Closed-form solution of the localization master equation without a
/// Hamiltonian: `<x|rho(t)|y> = exp(-Gamma(x, y) t) <x|rho(0)|y>`.
pub fn analytic_decoherence_solution(
    rho0: &DensityMatrix,
    grid: &PositionGrid,
    t: f64,
    p: &GrwParams,
) -> Result<DensityMatrix, LindbladError> {
    if rho0.dim() != grid.n_points() {
        return Err(LindbladError::DimensionMismatch(
            rho0.dim(),
            grid.n_points(),
        ));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(LindbladError::UnsortedTimes);
    }
    let kernel = DecoherenceKernel::closed_form(grid, p);
    let n = grid.n_points();
    let mat = CMatrix::from_fn(n, n, |i, j| {
        rho0.matrix()[(i, j)] * Complex64::new((-kernel.gamma(i, j) * t).exp(), 0.0)
    });
    DensityMatrix::with_tolerance(mat, 1e-9).map_err(LindbladError::from)
}

/// Adaptive RK4 for a (possibly time-dependent) right-hand side, with
/// step-halving error control: a step is accepted when one full step and two
/// half steps agree within `tol`.
pub fn integrate_rk4_adaptive<F>(
    rho0: &CMatrix,
    rhs: F,
    times: &[f64],
    tol: f64,
) -> Result<Vec<CMatrix>, LindbladError>
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    check_times(times)?;
    let step = |t: f64, y: &CMatrix, h: f64| -> CMatrix {
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * h, &(y + k1.scale(0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(y + k2.scale(0.5 * h)));
        let k4 = rhs(t + h, &(y + k3.scale(h)));
        y + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0)
    };
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = rho0.clone();
    let mut h: f64 = 1e-2;
    for &target in times {
        while t < target {
            let h_try = h.min(target - t);
            let full = step(t, &y, h_try);
            let half = step(t, &y, 0.5 * h_try);
            let double = step(t + 0.5 * h_try, &half, 0.5 * h_try);
            let err = max_abs(&(&full - &double));
            if err <= tol || h_try <= 1e-12 {
                y = double;
                t += h_try;
                if err < tol / 64.0 {
                    h = (h_try * 2.0).min(0.5);
                }
            } else {
                h = 0.5 * h_try;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Write a complex matrix as CSV rows: one line per matrix row with Re/Im
/// entries interleaved.
pub fn write_matrix_csv<W: Write>(m: &CMatrix, w: &mut W) -> io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                write!(w, ",")?;
            }
            let z = m[(i, j)];
            write!(w, "{},{}", z.re, z.im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
