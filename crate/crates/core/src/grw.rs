//! Monte Carlo unraveling of the GRW localization process.
//!
//! A wavefunction on a uniform 1-D position grid undergoes free (or
//! Hamiltonian) evolution interrupted by Poisson-distributed localization
//! jumps. A jump at center `y` multiplies the wavefunction by the Gaussian
//! localization operator
//!
//! `L(y, x) = (pi r_c^2)^(-1/4) exp(-(y - x)^2 / (2 r_c^2))`
//!
//! followed by renormalization. The prefactor makes `∫ L^2(y, x) dy = 1`,
//! so the total jump rate integrates exactly to `lambda` for any normalized
//! state and ensemble averages of `|psi><psi|` obey the localization master
//! equation of [`crate::lindblad`].
//!
//! Jump centers are sampled by inverse transform on a grid padded by
//! `6 r_c` beyond the position grid; waiting times are exponential with the
//! exact state-independent total rate `lambda`. Trajectories are
//! deterministic per seed, and ensembles seed trajectory `i` with
//! `base_seed + i` so results do not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

use crate::hilbert::{hermitian_eigensystem, CMatrix, CVector, DensityMatrix, HilbertError};

/// Padding, in units of `r_c`, added to the position grid when sampling jump
/// centers; keeps the truncated localization tail below 1e-8.
pub const JUMP_GRID_PADDING: f64 = 6.0;

/// Initial-state mass allowed within `4 r_c` of the grid edges before a
/// warning is emitted.
pub const EDGE_MASS_WARN: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GrwError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("amplitude vector has length {got}, grid has {expected} points")]
    LengthMismatch { got: usize, expected: usize },
    #[error("wavefunction is not normalized on the grid (norm {0})")]
    NotNormalized(f64),
    #[error("{name} must be positive and finite (got {value})")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("jump density vanished on the sampling grid")]
    DegenerateJumpDensity,
    #[error("localization annihilated the state (norm {0:.3e})")]
    VanishingNorm(f64),
    #[error("sample times must be sorted and non-negative")]
    InvalidSampleTimes,
    #[error("trajectory ensemble is empty")]
    EmptyEnsemble,
    #[error("trajectories do not share grid and sample times")]
    EnsembleMismatch,
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Uniform position grid on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl PositionGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self, GrwError> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(GrwError::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 8 {
            return Err(GrwError::InvalidGrid(format!(
                "need at least 8 points, got {n_points}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.dx()).round();
        (i.max(0.0) as usize).min(self.n_points - 1)
    }
}

/// Collapse-rate and localization-length parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrwParams {
    pub lambda: f64,
    pub r_c: f64,
}

impl GrwParams {
    pub fn new(lambda: f64, r_c: f64) -> Result<Self, GrwError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(GrwError::NonPositiveParameter {
                name: "lambda",
                value: lambda,
            });
        }
        if !(r_c.is_finite() && r_c > 0.0) {
            return Err(GrwError::NonPositiveParameter {
                name: "r_c",
                value: r_c,
            });
        }
        Ok(Self { lambda, r_c })
    }
}

/// Complex amplitudes on a [`PositionGrid`], unit norm under the grid
/// quadrature `sum_i |psi(x_i)|^2 dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: PositionGrid,
    amplitudes: CVector,
}

impl WaveFunction {
    pub fn new(grid: PositionGrid, amplitudes: CVector) -> Result<Self, GrwError> {
        if amplitudes.len() != grid.n_points() {
            return Err(GrwError::LengthMismatch {
                got: amplitudes.len(),
                expected: grid.n_points(),
            });
        }
        let psi = Self { grid, amplitudes };
        let norm = psi.grid_norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-10 {
            return Err(GrwError::NotNormalized(norm));
        }
        Ok(psi)
    }

    /// Build from arbitrary amplitudes, rescaling to unit grid norm.
    pub fn normalized(grid: PositionGrid, amplitudes: CVector) -> Result<Self, GrwError> {
        if amplitudes.len() != grid.n_points() {
            return Err(GrwError::LengthMismatch {
                got: amplitudes.len(),
                expected: grid.n_points(),
            });
        }
        let norm = (amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GrwError::VanishingNorm(norm));
        }
        Ok(Self {
            grid,
            amplitudes: amplitudes / Complex64::new(norm, 0.0),
        })
    }

    /// Gaussian packet with mean `center` and position spread `width`
    /// (the standard deviation of `|psi|^2`).
    pub fn gaussian(grid: PositionGrid, center: f64, width: f64) -> Result<Self, GrwError> {
        if !(width.is_finite() && width > 0.0) {
            return Err(GrwError::NonPositiveParameter {
                name: "width",
                value: width,
            });
        }
        let amps = CVector::from_fn(grid.n_points(), |i, _| {
            let x = grid.point(i);
            Complex64::new((-(x - center).powi(2) / (4.0 * width * width)).exp(), 0.0)
        });
        Self::normalized(grid, amps)
    }

    /// Equal-weight superposition of two Gaussian packets.
    pub fn two_gaussian_superposition(
        grid: PositionGrid,
        center_a: f64,
        center_b: f64,
        width: f64,
    ) -> Result<Self, GrwError> {
        let a = Self::gaussian(grid, center_a, width)?;
        let b = Self::gaussian(grid, center_b, width)?;
        Self::normalized(grid, a.amplitudes + b.amplitudes)
    }

    pub fn grid(&self) -> &PositionGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn grid_norm(&self) -> f64 {
        (self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// `sum_i |psi(x_i)|^2 dx` over points within `4 r_c` of either grid edge.
    pub fn edge_mass(&self, r_c: f64) -> f64 {
        let dx = self.grid.dx();
        let margin = 4.0 * r_c;
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let x = self.grid.point(*i);
                x - self.grid.x_min() < margin || self.grid.x_max() - x < margin
            })
            .map(|(_, a)| a.norm_sqr() * dx)
            .sum()
    }
}

/// One localization event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub center: f64,
}

/// One realization of the jump process, with the state recorded at each
/// requested sample time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub states: Vec<WaveFunction>,
    pub jumps: Vec<Jump>,
    pub seed: u64,
}

/// Diagonal entries of the localization operator `L(y, x_i)` on the grid.
pub fn localization_operator(y: f64, grid: &PositionGrid, r_c: f64) -> DVector<f64> {
    let prefactor = (std::f64::consts::PI * r_c * r_c).powf(-0.25);
    DVector::from_fn(grid.n_points(), |i, _| {
        let x = grid.point(i);
        prefactor * (-(y - x).powi(2) / (2.0 * r_c * r_c)).exp()
    })
}

/// Jump-rate density `lambda * || L(y, x) psi ||^2` at center `y`.
pub fn jump_rate_density(psi: &WaveFunction, y: f64, p: &GrwParams) -> f64 {
    let grid = psi.grid();
    let dx = grid.dx();
    let inv_rc2 = 1.0 / (p.r_c * p.r_c);
    let prefactor = (std::f64::consts::PI * p.r_c * p.r_c).powf(-0.5);
    let sum: f64 = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let x = grid.point(i);
            prefactor * (-(y - x).powi(2) * inv_rc2).exp() * a.norm_sqr()
        })
        .sum();
    p.lambda * sum * dx
}

/// Waiting time to the next jump; exponential with the exact total rate
/// `lambda` (state independent because `∫ L^2 dy = 1`).
pub fn sample_wait_time<R: Rng + ?Sized>(p: &GrwParams, rng: &mut R) -> f64 {
    Exp::new(p.lambda).expect("validated rate").sample(rng)
}

/// Inverse-transform sampler for jump centers, with the squared localization
/// profile precomputed on the padded center grid.
///
/// Building the sampler costs `O(n_y * n_x)` exponentials; sampling from it
/// is a matrix-vector product per draw, so ensembles construct it once and
/// share it.
pub struct JumpSampler {
    y_points: Vec<f64>,
    dy: f64,
    // weights[(j, i)] = lambda * L^2(y_j, x_i) * dx
    weights: DMatrix<f64>,
}

impl JumpSampler {
    pub fn new(grid: &PositionGrid, p: &GrwParams) -> Self {
        let pad = JUMP_GRID_PADDING * p.r_c;
        let lo = grid.x_min() - pad;
        let hi = grid.x_max() + pad;
        let dy_target = grid.dx().min(p.r_c) / 4.0;
        let n_y = ((hi - lo) / dy_target).ceil() as usize + 1;
        let dy = (hi - lo) / (n_y - 1) as f64;
        let y_points: Vec<f64> = (0..n_y).map(|j| lo + j as f64 * dy).collect();
        let prefactor = (std::f64::consts::PI * p.r_c * p.r_c).powf(-0.5);
        let inv_rc2 = 1.0 / (p.r_c * p.r_c);
        let dx = grid.dx();
        let weights = DMatrix::from_fn(n_y, grid.n_points(), |j, i| {
            let d = y_points[j] - grid.point(i);
            p.lambda * prefactor * (-d * d * inv_rc2).exp() * dx
        });
        Self {
            y_points,
            dy,
            weights,
        }
    }

    pub fn y_points(&self) -> &[f64] {
        &self.y_points
    }

    /// Rate density evaluated on all center-grid nodes.
    pub fn density(&self, psi: &WaveFunction) -> DVector<f64> {
        let probs = DVector::from_fn(psi.amplitudes().len(), |i, _| {
            psi.amplitudes()[i].norm_sqr()
        });
        &self.weights * probs
    }

    /// Draw a jump center from the normalized rate density by inverting the
    /// piecewise-linear density between center-grid nodes.
    pub fn sample_center<R: Rng + ?Sized>(
        &self,
        psi: &WaveFunction,
        rng: &mut R,
    ) -> Result<f64, GrwError> {
        let density = self.density(psi);
        let n = density.len();
        let mut cdf = vec![0.0; n];
        for j in 1..n {
            cdf[j] = cdf[j - 1] + 0.5 * self.dy * (density[j - 1] + density[j]);
        }
        let total = cdf[n - 1];
        if !(total.is_finite() && total > 0.0) {
            return Err(GrwError::DegenerateJumpDensity);
        }
        let target = rng.gen::<f64>() * total;
        let cell = match cdf.partition_point(|c| *c <= target) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        let tau = (target - cdf[cell]) / self.dy;
        let lo = density[cell];
        let slope = density[cell + 1] - lo;
        // solve (slope/2) s^2 + lo s = tau on [0, 1]
        let s = if slope.abs() < 1e-300 {
            if lo > 0.0 {
                (tau / lo).clamp(0.0, 1.0)
            } else {
                0.5
            }
        } else {
            let disc = (lo * lo + 2.0 * slope * tau).max(0.0);
            ((disc.sqrt() - lo) / slope).clamp(0.0, 1.0)
        };
        Ok(self.y_points[cell] + s * self.dy)
    }
}

/// Waiting time and jump center for the next localization event of `psi`.
///
/// Convenience wrapper that builds a fresh [`JumpSampler`]; loops should
/// cache the sampler instead.
pub fn sample_jump<R: Rng + ?Sized>(
    psi: &WaveFunction,
    p: &GrwParams,
    rng: &mut R,
) -> Result<(f64, f64), GrwError> {
    let wait = sample_wait_time(p, rng);
    let sampler = JumpSampler::new(psi.grid(), p);
    let y = sampler.sample_center(psi, rng)?;
    Ok((wait, y))
}

/// Apply `L(y, x) / ||L(y, x) psi||` to the state.
pub fn apply_jump(psi: &WaveFunction, y: f64, p: &GrwParams) -> Result<WaveFunction, GrwError> {
    let l = localization_operator(y, psi.grid(), p.r_c);
    let amps = CVector::from_fn(psi.amplitudes().len(), |i, _| {
        psi.amplitudes()[i] * Complex64::new(l[i], 0.0)
    });
    WaveFunction::normalized(*psi.grid(), amps)
}

/// Exact grid propagator `exp(-i H dt)` from the one-time eigendecomposition
/// of a Hermitian grid Hamiltonian.
pub struct Propagator {
    energies: Vec<f64>,
    basis: CMatrix,
}

impl Propagator {
    pub fn new(hamiltonian: &CMatrix) -> Result<Self, GrwError> {
        let (energies, basis) = hermitian_eigensystem(hamiltonian)?;
        Ok(Self { energies, basis })
    }

    pub fn apply(&self, amplitudes: &CVector, dt: f64) -> CVector {
        let mut coeffs = self.basis.adjoint() * amplitudes;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= Complex64::new(0.0, -self.energies[k] * dt).exp();
        }
        &self.basis * coeffs
    }
}

/// Deterministic evolution between jumps: `exp(-i H dt) psi`, or the
/// identity when no Hamiltonian is supplied.
pub fn evolve_deterministic(
    psi: &WaveFunction,
    propagator: Option<&Propagator>,
    dt: f64,
) -> WaveFunction {
    assert!(dt >= 0.0, "dt must be non-negative");
    match propagator {
        None => psi.clone(),
        Some(prop) => WaveFunction {
            grid: *psi.grid(),
            amplitudes: prop.apply(psi.amplitudes(), dt),
        },
    }
}

/// Free-particle kinetic term `-1/(2m) d^2/dx^2` discretized with central
/// differences and Dirichlet boundaries.
pub fn kinetic_hamiltonian(grid: &PositionGrid, mass: f64) -> CMatrix {
    let n = grid.n_points();
    let scale = 1.0 / (2.0 * mass * grid.dx() * grid.dx());
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(2.0 * scale, 0.0)
        } else if i.abs_diff(j) == 1 {
            Complex64::new(-scale, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn check_sample_times(times: &[f64]) -> Result<(), GrwError> {
    if times.is_empty() {
        return Err(GrwError::InvalidSampleTimes);
    }
    let sorted = times.windows(2).all(|w| w[0] <= w[1]);
    if !sorted || times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
        return Err(GrwError::InvalidSampleTimes);
    }
    Ok(())
}

fn warn_on_edge_mass(psi0: &WaveFunction, p: &GrwParams) {
    let edge = psi0.edge_mass(p.r_c);
    if edge > EDGE_MASS_WARN {
        log::warn!(
            "initial state carries mass {edge:.3e} within 4 r_c of the grid edges; \
             localization tails will be truncated"
        );
    }
}

fn run_trajectory(
    psi0: &WaveFunction,
    p: &GrwParams,
    propagator: Option<&Propagator>,
    sampler: &JumpSampler,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory, GrwError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let mut jumps = Vec::new();
    let mut states = Vec::with_capacity(sample_times.len());
    let mut next_jump = sample_wait_time(p, &mut rng);
    for &ts in sample_times {
        while next_jump < ts {
            psi = evolve_deterministic(&psi, propagator, next_jump - t);
            t = next_jump;
            let y = sampler.sample_center(&psi, &mut rng)?;
            psi = apply_jump(&psi, y, p)?;
            jumps.push(Jump { time: t, center: y });
            next_jump = t + sample_wait_time(p, &mut rng);
        }
        psi = evolve_deterministic(&psi, propagator, ts - t);
        t = ts;
        states.push(psi.clone());
    }
    Ok(Trajectory {
        sample_times: sample_times.to_vec(),
        states,
        jumps,
        seed,
    })
}

/// Simulate one realization of the jump process, recording the state at each
/// sample time.
pub fn simulate_trajectory(
    psi0: &WaveFunction,
    p: &GrwParams,
    hamiltonian: Option<&CMatrix>,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory, GrwError> {
    check_sample_times(sample_times)?;
    warn_on_edge_mass(psi0, p);
    let propagator = hamiltonian.map(Propagator::new).transpose()?;
    let sampler = JumpSampler::new(psi0.grid(), p);
    run_trajectory(psi0, p, propagator.as_ref(), &sampler, sample_times, seed)
}

/// Simulate `n_trajectories` independent realizations in parallel.
///
/// Trajectory `i` uses seed `base_seed + i`, so the result is identical
/// whether trajectories run serially or in parallel.
pub fn simulate_ensemble(
    psi0: &WaveFunction,
    p: &GrwParams,
    hamiltonian: Option<&CMatrix>,
    sample_times: &[f64],
    n_trajectories: usize,
    base_seed: u64,
) -> Result<Vec<Trajectory>, GrwError> {
    if n_trajectories == 0 {
        return Err(GrwError::EmptyEnsemble);
    }
    check_sample_times(sample_times)?;
    warn_on_edge_mass(psi0, p);
    let propagator = hamiltonian.map(Propagator::new).transpose()?;
    let sampler = JumpSampler::new(psi0.grid(), p);
    (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            run_trajectory(
                psi0,
                p,
                propagator.as_ref(),
                &sampler,
                sample_times,
                base_seed.wrapping_add(i as u64),
            )
        })
        .collect()
}

/// Ensemble-averaged density matrix at the given sample-time index,
/// `rho = dx * mean_k |psi_k><psi_k|`, so that the grid trace equals one.
///
/// Trajectories are accumulated in index order, independently of how they
/// were produced.
pub fn ensemble_average(
    trajectories: &[Trajectory],
    time_index: usize,
) -> Result<DensityMatrix, GrwError> {
    let first = trajectories.first().ok_or(GrwError::EmptyEnsemble)?;
    let state0 = first
        .states
        .get(time_index)
        .ok_or(GrwError::InvalidSampleTimes)?;
    let grid = *state0.grid();
    let n = grid.n_points();
    let mut acc = CMatrix::zeros(n, n);
    for traj in trajectories {
        let psi = traj
            .states
            .get(time_index)
            .ok_or(GrwError::InvalidSampleTimes)?;
        if *psi.grid() != grid || traj.sample_times != first.sample_times {
            return Err(GrwError::EnsembleMismatch);
        }
        let amps = psi.amplitudes();
        acc += amps * amps.adjoint();
    }
    let weight = grid.dx() / trajectories.len() as f64;
    Ok(DensityMatrix::new(acc.scale(weight))?)
}

/// Write one trajectory as CSV: a row per sample time with the Re/Im
/// amplitude pairs of the stored state.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: &mut W) -> io::Result<()> {
    let n = traj
        .states
        .first()
        .map(|s| s.amplitudes().len())
        .unwrap_or(0);
    write!(w, "time")?;
    for i in 0..n {
        write!(w, ",re_{i},im_{i}")?;
    }
    writeln!(w)?;
    for (t, state) in traj.sample_times.iter().zip(&traj.states) {
        write!(w, "{t}")?;
        for a in state.amplitudes().iter() {
            write!(w, ",{},{}", a.re, a.im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PositionGrid {
        PositionGrid::new(-10.0, 10.0, 256).unwrap()
    }

    fn params() -> GrwParams {
        GrwParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn localization_peak_value() {
        let g = grid();
        let r_c = 0.7;
        let y = g.point(100);
        let l = localization_operator(y, &g, r_c);
        let expected = (std::f64::consts::PI * r_c * r_c).powf(-0.25);
        assert!((l[100] - expected).abs() < 1e-14);
    }

    #[test]
    fn localization_square_integrates_to_one() {
        // independent quadrature over a wide fine center grid
        let g = grid();
        let r_c = 0.9;
        let x = g.point(128);
        let n = 4001;
        let lo = x - 12.0;
        let dy = 24.0 / (n - 1) as f64;
        let mut sum = 0.0;
        let prefactor = (std::f64::consts::PI * r_c * r_c).powf(-0.25);
        for j in 0..n {
            let y = lo + j as f64 * dy;
            let val = prefactor * (-(y - x).powi(2) / (2.0 * r_c * r_c)).exp();
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            sum += w * val * val * dy;
        }
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn localization_tail_is_negligible() {
        let g = grid();
        let r_c = 0.5;
        let y = g.point(128);
        let l = localization_operator(y, &g, r_c);
        let peak = (std::f64::consts::PI * r_c * r_c).powf(-0.25);
        let far = g.nearest_index(y + 10.0 * r_c);
        assert!(l[far] < 1e-20 * peak);
    }

    #[test]
    fn jump_rate_integrates_to_lambda() {
        let g = grid();
        let p = GrwParams::new(2.5, 0.8).unwrap();
        let psi = WaveFunction::two_gaussian_superposition(g, -2.0, 2.0, 0.6).unwrap();
        // independent trapezoid over a wide fine y grid
        let n = 8001;
        let lo = -20.0;
        let dy = 40.0 / (n - 1) as f64;
        let mut total = 0.0;
        for j in 0..n {
            let y = lo + j as f64 * dy;
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            total += w * jump_rate_density(&psi, y, &p) * dy;
        }
        assert!((total / p.lambda - 1.0).abs() < 1e-6);
    }

    #[test]
    fn jump_rate_peaks_at_packet_center() {
        let g = grid();
        let p = params();
        let psi = WaveFunction::gaussian(g, 1.5, 0.3).unwrap();
        let at_center = jump_rate_density(&psi, 1.5, &p);
        for y in [-3.0, 0.0, 3.0, 5.0] {
            assert!(jump_rate_density(&psi, y, &p) < at_center);
        }
    }

    #[test]
    fn jump_rate_is_gaussian_convolution() {
        // |psi|^2 = N(mu, s^2) convolved with N(0, r_c^2 / 2)
        let g = grid();
        let p = params();
        let (mu, s) = (0.5, 1.0);
        let psi = WaveFunction::gaussian(g, mu, s).unwrap();
        let var = s * s + p.r_c * p.r_c / 2.0;
        for y in [-1.0, 0.0, 0.5, 1.3, 2.5] {
            let expected = p.lambda * (-(y - mu).powi(2) / (2.0 * var)).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt();
            let got = jump_rate_density(&psi, y, &p);
            assert!(
                (got - expected).abs() < 1e-6,
                "y={y}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn wait_times_have_exponential_mean() {
        let p = GrwParams::new(2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_wait_time(&p, &mut rng)).sum::<f64>() / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn jump_centers_match_convolved_gaussian() {
        // Kolmogorov-Smirnov against N(mu, s^2 + r_c^2/2)
        use statrs::distribution::{ContinuousCDF, Normal};
        let g = grid();
        let p = params();
        let (mu, s) = (0.5, 1.0);
        let psi = WaveFunction::gaussian(g, mu, s).unwrap();
        let sampler = JumpSampler::new(&g, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut samples: Vec<f64> = (0..n)
            .map(|_| sampler.sample_center(&psi, &mut rng).unwrap())
            .collect();
        samples.sort_by(f64::total_cmp);
        let normal = Normal::new(mu, (s * s + p.r_c * p.r_c / 2.0).sqrt()).unwrap();
        let mut ks: f64 = 0.0;
        for (i, x) in samples.iter().enumerate() {
            let f = normal.cdf(*x);
            ks = ks.max((f - i as f64 / n as f64).abs());
            ks = ks.max((f - (i + 1) as f64 / n as f64).abs());
        }
        let critical = 1.358 / (n as f64).sqrt();
        assert!(ks < critical, "KS statistic {ks} >= {critical}");
    }

    #[test]
    fn sample_jump_is_deterministic() {
        let g = grid();
        let p = params();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        let a = sample_jump(&psi, &p, &mut rng_a).unwrap();
        let b = sample_jump(&psi, &p, &mut rng_b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jump_preserves_point_support() {
        let g = grid();
        let p = params();
        let mut amps = CVector::zeros(g.n_points());
        amps[40] = Complex64::new(1.0, 0.0);
        let psi = WaveFunction::normalized(g, amps).unwrap();
        let jumped = apply_jump(&psi, 3.0, &p).unwrap();
        assert!((jumped.amplitudes()[40].norm() - psi.amplitudes()[40].norm()).abs() < 1e-12);
    }

    #[test]
    fn jump_suppresses_distant_branch() {
        let g = PositionGrid::new(-16.0, 16.0, 512).unwrap();
        let p = GrwParams::new(1.0, 0.5).unwrap();
        // branches 20 r_c apart
        let psi = WaveFunction::two_gaussian_superposition(g, -5.0, 5.0, 0.4).unwrap();
        let jumped = apply_jump(&psi, -5.0, &p).unwrap();
        let dx = g.dx();
        let far_mass: f64 = (0..g.n_points())
            .filter(|&i| g.point(i) > 0.0)
            .map(|i| jumped.amplitudes()[i].norm_sqr() * dx)
            .sum();
        assert!(far_mass < 1e-10);
    }

    #[test]
    fn jump_posterior_mean_matches_gaussian_product() {
        let g = PositionGrid::new(-14.0, 14.0, 1024).unwrap();
        let p = GrwParams::new(1.0, 0.8).unwrap();
        let (mu, s, y) = (-0.5, 0.7, 1.1);
        let psi = WaveFunction::gaussian(g, mu, s).unwrap();
        let jumped = apply_jump(&psi, y, &p).unwrap();
        let dx = g.dx();
        let mean: f64 = (0..g.n_points())
            .map(|i| g.point(i) * jumped.amplitudes()[i].norm_sqr() * dx)
            .sum();
        let rc2 = p.r_c * p.r_c;
        let expected = (mu * rc2 + 2.0 * s * s * y) / (rc2 + 2.0 * s * s);
        assert!((mean - expected).abs() < 1e-6, "mean {mean} vs {expected}");
    }

    #[test]
    fn jump_with_annihilating_center_is_an_error() {
        let g = PositionGrid::new(-8.0, 8.0, 64).unwrap();
        let p = GrwParams::new(1.0, 0.05).unwrap();
        let mut amps = CVector::zeros(g.n_points());
        amps[4] = Complex64::new(1.0, 0.0);
        let psi = WaveFunction::normalized(g, amps).unwrap();
        // center so far away that the Gaussian factor underflows
        assert!(matches!(
            apply_jump(&psi, 8.0, &p),
            Err(GrwError::VanishingNorm(_))
        ));
    }

    #[test]
    fn deterministic_evolution_without_hamiltonian_is_identity() {
        let g = grid();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0).unwrap();
        let out = evolve_deterministic(&psi, None, 0.7);
        assert_eq!(out.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn diagonal_hamiltonian_only_rotates_phases() {
        let g = PositionGrid::new(-4.0, 4.0, 16).unwrap();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0).unwrap();
        let h = CMatrix::from_fn(16, 16, |i, j| {
            if i == j {
                Complex64::new(0.3 * i as f64, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let prop = Propagator::new(&h).unwrap();
        let dt = 0.9;
        let out = evolve_deterministic(&psi, Some(&prop), dt);
        for i in 0..16 {
            let expected = psi.amplitudes()[i] * Complex64::new(0.0, -0.3 * i as f64 * dt).exp();
            assert!((out.amplitudes()[i] - expected).norm() < 1e-12);
            assert!((out.amplitudes()[i].norm() - psi.amplitudes()[i].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_half_steps_equal_one_full_step() {
        let g = PositionGrid::new(-6.0, 6.0, 48).unwrap();
        let psi = WaveFunction::gaussian(g, 0.5, 0.8).unwrap();
        let h = kinetic_hamiltonian(&g, 1.0);
        let prop = Propagator::new(&h).unwrap();
        let full = evolve_deterministic(&psi, Some(&prop), 0.8);
        let halves = evolve_deterministic(
            &evolve_deterministic(&psi, Some(&prop), 0.4),
            Some(&prop),
            0.4,
        );
        assert!((full.amplitudes() - halves.amplitudes()).norm() < 1e-10);
        assert!((full.grid_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_rate_reduces_to_schroedinger_evolution() {
        let g = PositionGrid::new(-6.0, 6.0, 32).unwrap();
        let p = GrwParams::new(1e-12, 1.0).unwrap();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0).unwrap();
        let h = kinetic_hamiltonian(&g, 1.0);
        let times = [0.5, 1.0, 2.0];
        let traj = simulate_trajectory(&psi, &p, Some(&h), &times, 3).unwrap();
        assert!(traj.jumps.is_empty());
        let prop = Propagator::new(&h).unwrap();
        for (k, t) in times.iter().enumerate() {
            let expected = prop.apply(psi.amplitudes(), *t);
            assert!((traj.states[k].amplitudes() - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn jump_counts_are_poissonian() {
        let g = PositionGrid::new(-8.0, 8.0, 32).unwrap();
        let p = params();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0).unwrap();
        let n = 10_000;
        let trajs = simulate_ensemble(&psi, &p, None, &[2.0], n, 900).unwrap();
        let mean = trajs.iter().map(|t| t.jumps.len() as f64).sum::<f64>() / n as f64;
        let se = (2.0f64 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean jump count {mean}");
    }

    #[test]
    fn trajectories_are_reproducible_and_normalized() {
        let g = PositionGrid::new(-8.0, 8.0, 64).unwrap();
        let p = params();
        let psi = WaveFunction::two_gaussian_superposition(g, -2.0, 2.0, 0.35).unwrap();
        let times = [0.3, 0.9, 1.7];
        let a = simulate_trajectory(&psi, &p, None, &times, 11).unwrap();
        let b = simulate_trajectory(&psi, &p, None, &times, 11).unwrap();
        assert_eq!(a.jumps, b.jumps);
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa.amplitudes(), sb.amplitudes());
            assert!((sa.grid_norm() - 1.0).abs() < 1e-10);
        }
        assert!(a.jumps.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn ensemble_of_one_is_a_pure_projector() {
        let g = PositionGrid::new(-8.0, 8.0, 32).unwrap();
        let p = params();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0).unwrap();
        let trajs = simulate_ensemble(&psi, &p, None, &[0.0], 1, 4).unwrap();
        let rho = ensemble_average(&trajs, 0).unwrap();
        // purity of dx * |psi><psi| equals 1 under the same trace convention
        let sq = rho.matrix() * rho.matrix();
        let purity: f64 = (0..32).map(|i| sq[(i, i)].re).sum();
        assert!((purity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ensemble_populations_are_preserved_without_hamiltonian() {
        let g = PositionGrid::new(-8.0, 8.0, 64).unwrap();
        let p = params();
        let psi = WaveFunction::two_gaussian_superposition(g, -2.0, 2.0, 0.35).unwrap();
        let trajs = simulate_ensemble(&psi, &p, None, &[0.0, 1.0], 2000, 77).unwrap();
        let rho0 = ensemble_average(&trajs, 0).unwrap();
        let rho1 = ensemble_average(&trajs, 1).unwrap();
        let dx = g.dx();
        for i in 0..64 {
            let p0 = rho0.matrix()[(i, i)].re;
            let p1 = rho1.matrix()[(i, i)].re;
            // Monte Carlo error on a bounded population observable
            let se = (p0.abs() / dx / 2000.0).sqrt() * dx + 1e-4;
            assert!(
                (p1 - p0).abs() < 4.0 * se + 1e-6,
                "population drift at {i}: {p0} -> {p1}"
            );
        }
    }

    #[test]
    fn edge_mass_flags_states_near_the_boundary() {
        let g = PositionGrid::new(-8.0, 8.0, 128).unwrap();
        let centered = WaveFunction::gaussian(g, 0.0, 0.5).unwrap();
        assert!(centered.edge_mass(1.0) < EDGE_MASS_WARN);
        let offset = WaveFunction::gaussian(g, 6.0, 0.5).unwrap();
        assert!(offset.edge_mass(1.0) > EDGE_MASS_WARN);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(PositionGrid::new(1.0, -1.0, 64).is_err());
        assert!(PositionGrid::new(-1.0, 1.0, 4).is_err());
        assert!(GrwParams::new(0.0, 1.0).is_err());
        assert!(GrwParams::new(1.0, -2.0).is_err());
        let g = PositionGrid::new(-2.0, 2.0, 16).unwrap();
        let psi = WaveFunction::gaussian(g, 0.0, 0.5).unwrap();
        let p = params();
        assert!(matches!(
            simulate_trajectory(&psi, &p, None, &[0.5, 0.2], 1),
            Err(GrwError::InvalidSampleTimes)
        ));
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let g = PositionGrid::new(-4.0, 4.0, 8).unwrap();
        let p = params();
        let psi = WaveFunction::gaussian(g, 0.0, 0.8).unwrap();
        let traj = simulate_trajectory(&psi, &p, None, &[0.0, 0.5], 2).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 1 + 2 * 8);
        assert_eq!(lines.count(), 2);
    }
}
