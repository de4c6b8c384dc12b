//! Trace-distance non-Markovianity analysis on families of dynamical maps.
//!
//! A [`MapFamily`] is an ordered sequence of time-stamped CPTP maps stored as
//! matrices on column-stacked states. Memory effects are quantified two ways:
//!
//! - distinguishability revivals: the distance trajectory
//!   `D(t) = D(Phi(t) rho1, Phi(t) rho2)` is non-increasing for divisible
//!   dynamics, so any increase witnesses information flowing back into the
//!   system. The measure integrates `sigma = dD/dt` over the regions where it
//!   is positive, maximized over a pair search.
//! - divisibility: the intermediate map `Phi(t, s) = Phi(t) Phi(s)^(-1)` of a
//!   memoryless evolution is itself completely positive; a negative Choi
//!   eigenvalue of some step is the complementary memory signature.
//!
//! The positive part of `sigma` is integrated cellwise from the increments of
//! the sampled distance (the exact integral of the piecewise-linear
//! interpolant), which keeps the measure second-order accurate even at the
//! cusps that `|f(t)|`-shaped trajectories produce. `sigma` itself is
//! reported from centered differences.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{self, BufRead, Write};
use thiserror::Error;

use crate::hilbert::{
    choi_min_eigenvalue, hermitian_eigensystem, hermitian_trace_norm, max_abs, random_state,
    random_unitary, tp_deviation, unvectorize, vectorize, CMatrix, CVector, DensityMatrix,
    HilbertError,
};
use crate::lindblad::Superoperator;

/// Snapshots must be completely positive and trace preserving within this
/// tolerance.
pub const CPTP_TOL: f64 = 1e-8;

/// An intermediate map counts as singular (rather than non-CP) above this
/// condition number.
pub const CONDITION_THRESHOLD: f64 = 1e12;

/// Distance slopes below this threshold are treated as numerical noise, not
/// revivals.
pub const REVIVAL_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NonMarkovError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid map family: {0}")]
    InvalidFamily(String),
    #[error("times must be strictly increasing, starting at 0")]
    UnsortedTimes,
    #[error("distance and time lists must have equal length >= 2")]
    LengthMismatch,
    #[error("invalid dephasing model: {0}")]
    InvalidDephasing(String),
    #[error("step indices must satisfy s_index < t_index < len")]
    BadStepOrder,
    #[error("family CSV: {0}")]
    CsvFormat(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Ordered sequence of time-stamped CPTP maps on column-stacked states.
///
/// Construction validates the invariants: times ascending from 0, the first
/// map is the identity, and every snapshot is trace preserving and completely
/// positive within [`CPTP_TOL`].
#[derive(Debug, Clone)]
pub struct MapFamily {
    dim: usize,
    times: Vec<f64>,
    maps: Vec<CMatrix>,
}

impl MapFamily {
    pub fn new(dim: usize, times: Vec<f64>, maps: Vec<CMatrix>) -> Result<Self, NonMarkovError> {
        if dim < 2 {
            return Err(NonMarkovError::InvalidFamily(
                "dimension must be at least 2".into(),
            ));
        }
        if times.is_empty() || times.len() != maps.len() {
            return Err(NonMarkovError::InvalidFamily(
                "need equally many times and maps, at least one".into(),
            ));
        }
        if times[0].abs() > 1e-12
            || !times.windows(2).all(|w| w[0] < w[1])
            || !times.iter().all(|t| t.is_finite())
        {
            return Err(NonMarkovError::UnsortedTimes);
        }
        for (k, map) in maps.iter().enumerate() {
            if map.nrows() != dim * dim || map.ncols() != dim * dim {
                return Err(NonMarkovError::DimensionMismatch(map.nrows(), dim * dim));
            }
            if k == 0 {
                let id = CMatrix::identity(dim * dim, dim * dim);
                let dev = max_abs(&(map - id));
                if dev > CPTP_TOL {
                    return Err(NonMarkovError::InvalidFamily(format!(
                        "first map deviates from the identity by {dev:.3e}"
                    )));
                }
                continue;
            }
            let tp = tp_deviation(map)?;
            if tp > CPTP_TOL {
                return Err(NonMarkovError::InvalidFamily(format!(
                    "map {k} violates trace preservation by {tp:.3e}"
                )));
            }
            let min_eig = choi_min_eigenvalue(map)?;
            if min_eig < -CPTP_TOL {
                return Err(NonMarkovError::InvalidFamily(format!(
                    "map {k} is not completely positive (Choi eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(Self { dim, times, maps })
    }

    /// Semigroup family `Phi(t_k) = exp(t_k L)` of a fixed generator.
    pub fn semigroup(sup: &Superoperator, times: &[f64]) -> Result<Self, NonMarkovError> {
        let maps = times.iter().map(|&t| sup.propagator(t)).collect();
        Self::new(sup.dim(), times.to_vec(), maps)
    }

    /// Qubit random-unitary dephasing family: populations fixed, coherences
    /// multiplied by the sampled decoherence function.
    pub fn dephasing(model: &DephasingModel) -> Result<Self, NonMarkovError> {
        let maps = model
            .values()
            .iter()
            .map(|&f| {
                CMatrix::from_fn(4, 4, |i, j| {
                    if i != j {
                        Complex64::new(0.0, 0.0)
                    } else if i == 1 || i == 2 {
                        Complex64::new(f, 0.0)
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
            })
            .collect();
        Self::new(2, model.times().to_vec(), maps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn map(&self, k: usize) -> &CMatrix {
        &self.maps[k]
    }

    /// Apply snapshot `k` to a raw state matrix.
    pub fn apply(&self, k: usize, rho: &CMatrix) -> CMatrix {
        unvectorize(&(&self.maps[k] * vectorize(rho)), self.dim)
    }

    /// Export as CSV: `dim` and `times` header lines, then one `map,<k>`
    /// marker per snapshot followed by its row-major Re/Im-interleaved rows.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "dim,{}", self.dim)?;
        write!(w, "times")?;
        for t in &self.times {
            write!(w, ",{t}")?;
        }
        writeln!(w)?;
        for (k, map) in self.maps.iter().enumerate() {
            writeln!(w, "map,{k}")?;
            for i in 0..map.nrows() {
                for j in 0..map.ncols() {
                    if j > 0 {
                        write!(w, ",")?;
                    }
                    write!(w, "{},{}", map[(i, j)].re, map[(i, j)].im)?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Parse the format written by [`MapFamily::to_csv`]; the result is
    /// validated like any other family.
    pub fn from_csv<R: BufRead>(r: R) -> Result<Self, NonMarkovError> {
        let mut lines = r.lines().enumerate();
        let bad =
            |line: usize, msg: &str| NonMarkovError::CsvFormat(format!("line {}: {msg}", line + 1));
        let (ln, first) = lines
            .next()
            .ok_or_else(|| NonMarkovError::CsvFormat("empty input".into()))?;
        let first = first.map_err(|e| bad(ln, &e.to_string()))?;
        let dim: usize = first
            .strip_prefix("dim,")
            .ok_or_else(|| bad(ln, "expected `dim,<n>`"))?
            .trim()
            .parse()
            .map_err(|_| bad(ln, "invalid dimension"))?;
        let (ln, second) = lines
            .next()
            .ok_or_else(|| NonMarkovError::CsvFormat("missing times line".into()))?;
        let second = second.map_err(|e| bad(ln, &e.to_string()))?;
        let times: Vec<f64> = second
            .strip_prefix("times")
            .ok_or_else(|| bad(ln, "expected `times,...`"))?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(ln, "invalid time value"))?;
        let side = dim * dim;
        let mut maps = Vec::with_capacity(times.len());
        let mut current: Option<(Vec<Complex64>, usize)> = None;
        for (ln, line) in lines {
            let line = line.map_err(|e| bad(ln, &e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            if line.starts_with("map,") {
                if let Some((entries, rows)) = current.take() {
                    if rows != side {
                        return Err(bad(ln, "snapshot has wrong number of rows"));
                    }
                    maps.push(CMatrix::from_row_slice(side, side, &entries));
                }
                current = Some((Vec::with_capacity(side * side), 0));
                continue;
            }
            let (entries, rows) = current
                .as_mut()
                .ok_or_else(|| bad(ln, "matrix row before any `map,` marker"))?;
            let values: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(ln, "invalid matrix entry"))?;
            if values.len() != 2 * side {
                return Err(bad(ln, "matrix row has wrong number of entries"));
            }
            for pair in values.chunks(2) {
                entries.push(Complex64::new(pair[0], pair[1]));
            }
            *rows += 1;
        }
        if let Some((entries, rows)) = current.take() {
            if rows != side {
                return Err(NonMarkovError::CsvFormat(
                    "last snapshot has wrong number of rows".into(),
                ));
            }
            maps.push(CMatrix::from_row_slice(side, side, &entries));
        }
        Self::new(dim, times, maps)
    }
}

/// Sampled decoherence function of a qubit random-unitary dephasing model;
/// requires `f(0) = 1` and `|f| <= 1`.
#[derive(Debug, Clone)]
pub struct DephasingModel {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DephasingModel {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, NonMarkovError> {
        if times.is_empty() || times.len() != values.len() {
            return Err(NonMarkovError::InvalidDephasing(
                "need equally many times and samples".into(),
            ));
        }
        if times[0].abs() > 1e-12 || !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(NonMarkovError::UnsortedTimes);
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(NonMarkovError::InvalidDephasing(format!(
                "f(0) = {} instead of 1",
                values[0]
            )));
        }
        if let Some(v) = values
            .iter()
            .find(|v| v.abs() > 1.0 + 1e-12 || !v.is_finite())
        {
            return Err(NonMarkovError::InvalidDephasing(format!(
                "|f| exceeds 1 (sample {v})"
            )));
        }
        Ok(Self { times, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(f: F, times: Vec<f64>) -> Result<Self, NonMarkovError> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    /// Uniform sampling of `[0, t_max]` with `steps` intervals.
    pub fn sampled<F: Fn(f64) -> f64>(
        f: F,
        t_max: f64,
        steps: usize,
    ) -> Result<Self, NonMarkovError> {
        if t_max <= 0.0 || !t_max.is_finite() || steps == 0 {
            return Err(NonMarkovError::UnsortedTimes);
        }
        let dt = t_max / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        Self::from_fn(f, times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `D(t_k)` along the family for a fixed state pair.
pub fn distance_trajectory(
    family: &MapFamily,
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
) -> Result<Vec<f64>, NonMarkovError> {
    if rho1.dim() != family.dim() || rho2.dim() != family.dim() {
        return Err(NonMarkovError::DimensionMismatch(rho1.dim(), family.dim()));
    }
    let delta = vectorize(&(rho1.matrix() - rho2.matrix()));
    Ok((0..family.len())
        .map(|k| {
            let evolved = unvectorize(&(family.map(k) * &delta), family.dim());
            0.5 * hermitian_trace_norm(&evolved)
        })
        .collect())
}

/// Time derivative of a sampled distance trajectory: centered differences in
/// the interior, one-sided at the endpoints.
pub fn blp_sigma(d_values: &[f64], times: &[f64]) -> Result<Vec<f64>, NonMarkovError> {
    if d_values.len() != times.len() || d_values.len() < 2 {
        return Err(NonMarkovError::LengthMismatch);
    }
    if !times.windows(2).all(|w| w[0] < w[1]) {
        return Err(NonMarkovError::UnsortedTimes);
    }
    let n = d_values.len();
    let mut sigma = Vec::with_capacity(n);
    sigma.push((d_values[1] - d_values[0]) / (times[1] - times[0]));
    for k in 1..n - 1 {
        sigma.push((d_values[k + 1] - d_values[k - 1]) / (times[k + 1] - times[k - 1]));
    }
    sigma.push((d_values[n - 1] - d_values[n - 2]) / (times[n - 1] - times[n - 2]));
    Ok(sigma)
}

/// Integration options for the positive part of `sigma`.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    /// Subdivisions of each sampling cell of the piecewise-linear distance
    /// interpolant. The measure is invariant under refinement (up to
    /// rounding); the knob exists to demonstrate that convergence.
    pub subdivisions: usize,
    /// Slopes below this are treated as numerical noise.
    pub revival_threshold: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            subdivisions: 1,
            revival_threshold: REVIVAL_THRESHOLD,
        }
    }
}

/// Positive-part quadrature of `dD/dt` from distance samples.
pub fn measure_from_distances(d_values: &[f64], times: &[f64], quad: &Quadrature) -> f64 {
    let sub = quad.subdivisions.max(1);
    let mut total = 0.0;
    for k in 0..d_values.len().saturating_sub(1) {
        let dt = times[k + 1] - times[k];
        let rate = (d_values[k + 1] - d_values[k]) / dt;
        if rate > quad.revival_threshold {
            // exact integral of the linear interpolant over each subcell
            let inc = (d_values[k + 1] - d_values[k]) / sub as f64;
            for _ in 0..sub {
                total += inc;
            }
        }
    }
    total
}

/// Which state pairs to examine when maximizing the measure.
#[derive(Debug, Clone)]
pub enum PairStrategy {
    /// Explicitly supplied pairs.
    Fixed(Vec<(DensityMatrix, DensityMatrix)>),
    /// Antipodal (orthogonal) pure pairs on Haar-random axes plus random
    /// mixed pairs, with a deterministic stream per pair index so that
    /// growing the counts never changes earlier pairs.
    Search {
        orthogonal_pure: usize,
        random_mixed: usize,
        seed: u64,
    },
}

impl Default for PairStrategy {
    fn default() -> Self {
        PairStrategy::Search {
            orthogonal_pure: 32,
            random_mixed: 32,
            seed: 0,
        }
    }
}

/// Result of a BLP-measure evaluation: the best pair found, its distance
/// derivative, the measure, and the per-pair search log.
#[derive(Debug, Clone)]
pub struct BlpResult {
    pub state_pair: (DensityMatrix, DensityMatrix),
    pub sigma: Vec<f64>,
    pub measure: f64,
    pub pair_search_log: Vec<(String, f64)>,
}

fn search_pairs(
    dim: usize,
    strategy: &PairStrategy,
) -> Vec<(String, DensityMatrix, DensityMatrix)> {
    match strategy {
        PairStrategy::Fixed(pairs) => pairs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| (format!("fixed-{i}"), a.clone(), b.clone()))
            .collect(),
        PairStrategy::Search {
            orthogonal_pure,
            random_mixed,
            seed,
        } => {
            let mut out = Vec::with_capacity(orthogonal_pure + random_mixed);
            for i in 0..*orthogonal_pure {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(i as u64);
                let u = random_unitary(dim, &mut rng);
                let col = |j: usize| {
                    let v = u.column(j).into_owned();
                    DensityMatrix::from_pure(&CVector::from_column_slice(v.as_slice()))
                        .expect("unitary column is normalized")
                };
                out.push((format!("orthogonal-{i}"), col(0), col(1)));
            }
            for i in 0..*random_mixed {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream((1 << 32) | i as u64);
                let a = random_state(dim, &mut rng);
                let b = random_state(dim, &mut rng);
                out.push((format!("mixed-{i}"), a, b));
            }
            out
        }
    }
}

/// Maximize the positive-part integral of `dD/dt` over the searched pairs.
pub fn blp_measure(
    family: &MapFamily,
    strategy: &PairStrategy,
    quad: &Quadrature,
) -> Result<BlpResult, NonMarkovError> {
    let pairs = search_pairs(family.dim(), strategy);
    if pairs.is_empty() {
        return Err(NonMarkovError::InvalidFamily(
            "pair strategy produced no pairs".into(),
        ));
    }
    let mut log = Vec::with_capacity(pairs.len());
    let mut best: Option<(f64, Vec<f64>, DensityMatrix, DensityMatrix)> = None;
    for (id, a, b) in pairs {
        let d = distance_trajectory(family, &a, &b)?;
        let measure = measure_from_distances(&d, family.times(), quad);
        log.push((id, measure));
        let better = match &best {
            None => true,
            Some((m, ..)) => measure > *m,
        };
        if better {
            best = Some((measure, d, a, b));
        }
    }
    let (measure, d, a, b) = best.expect("at least one pair was evaluated");
    let sigma = blp_sigma(&d, family.times())?;
    Ok(BlpResult {
        state_pair: (a, b),
        sigma,
        measure,
        pair_search_log: log,
    })
}

/// Verdict on one intermediate map `Phi(t, s) = Phi(t) Phi(s)^(-1)`.
#[derive(Debug, Clone, Copy)]
pub enum DivisibilityOutcome {
    Checked {
        min_choi_eigenvalue: f64,
        is_cp_step: bool,
    },
    /// `Phi(s)` is too ill-conditioned to invert; physically distinct from a
    /// non-CP verdict and reported as such.
    NotInvertible { condition_number: f64 },
}

/// Check complete positivity of the intermediate map between two snapshot
/// indices.
pub fn cp_divisibility_check(
    family: &MapFamily,
    s_index: usize,
    t_index: usize,
) -> Result<DivisibilityOutcome, NonMarkovError> {
    if s_index >= t_index || t_index >= family.len() {
        return Err(NonMarkovError::BadStepOrder);
    }
    let phi_s = family.map(s_index);
    // condition number from the singular values of Phi(s)
    let gram = phi_s.adjoint() * phi_s;
    let (gram_eigs, _) = hermitian_eigensystem(&gram)?;
    let smax = gram_eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let smin = gram_eigs.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !condition.is_finite() || condition > CONDITION_THRESHOLD {
        return Ok(DivisibilityOutcome::NotInvertible {
            condition_number: condition,
        });
    }
    let inverse = match phi_s.clone().lu().try_inverse() {
        Some(inv) => inv,
        None => {
            return Ok(DivisibilityOutcome::NotInvertible {
                condition_number: condition,
            })
        }
    };
    let intermediate = family.map(t_index) * inverse;
    // the inversion leaves O(eps * condition) non-Hermitian noise on the
    // Choi matrix; its Hermitian part carries the verdict
    let choi = crate::hilbert::choi_matrix(&intermediate)?;
    let (choi_eigs, _) = hermitian_eigensystem(&crate::hilbert::hermitian_part(&choi))?;
    let min_choi_eigenvalue = choi_eigs[0];
    Ok(DivisibilityOutcome::Checked {
        min_choi_eigenvalue,
        is_cp_step: min_choi_eigenvalue >= -CPTP_TOL,
    })
}

/// The `|+><+|`, `|-><-|` pair that maximizes dephasing revivals.
pub fn plus_minus_pair() -> (DensityMatrix, DensityMatrix) {
    let inv = 1.0 / 2f64.sqrt();
    let plus = CVector::from_column_slice(&[Complex64::new(inv, 0.0), Complex64::new(inv, 0.0)]);
    let minus = CVector::from_column_slice(&[Complex64::new(inv, 0.0), Complex64::new(-inv, 0.0)]);
    (
        DensityMatrix::from_pure(&plus).expect("normalized"),
        DensityMatrix::from_pure(&minus).expect("normalized"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grw::{GrwParams, PositionGrid};
    use crate::hilbert::trace_distance;
    use crate::lindblad::LindbladGenerator;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn exp_cos_model(steps: usize) -> DephasingModel {
        DephasingModel::sampled(
            |t| (-t).exp() * (std::f64::consts::PI * t).cos(),
            4.0,
            steps,
        )
        .unwrap()
    }

    fn sigma_z_dephasing_family(times: &[f64]) -> MapFamily {
        let sz =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let gen = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![(1.0, sz)]).unwrap();
        MapFamily::semigroup(&Superoperator::from_generator(&gen), times).unwrap()
    }

    // continuum reference for f(t) = e^{-t} cos(pi t) on [0, 4]:
    // sum over revivals of the post-zero maxima of |f|
    const EXP_COS_MEASURE: f64 = 0.6005122085362543;
    const EXP_COS_FIRST_REVIVAL: f64 = 0.3866783743133139;

    #[test]
    fn equal_states_stay_at_zero_distance() {
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.3).collect();
        let family = sigma_z_dephasing_family(&times);
        let (plus, _) = plus_minus_pair();
        let d = distance_trajectory(&family, &plus, &plus).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn unitary_family_preserves_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let h = crate::hilbert::hermitian_part(&crate::hilbert::random_ginibre(3, &mut rng));
        let gen = LindbladGenerator::new(h, vec![]).unwrap();
        let family =
            MapFamily::semigroup(&Superoperator::from_generator(&gen), &[0.0, 0.4, 1.1, 2.0])
                .unwrap();
        let a = random_state(3, &mut rng);
        let b = random_state(3, &mut rng);
        let d = distance_trajectory(&family, &a, &b).unwrap();
        let d0 = trace_distance(&a, &b).unwrap();
        assert!(d.iter().all(|v| (v - d0).abs() < 1e-10));
    }

    #[test]
    fn grw_family_distance_follows_the_kernel_decay() {
        // coherent superposition vs incoherent mixture of two distant sites
        let grid = PositionGrid::new(-4.0, 4.0, 8).unwrap();
        let p = GrwParams::new(1.0, 0.4).unwrap();
        let sup = Superoperator::grw(&grid, &p);
        let times: Vec<f64> = (0..9).map(|k| 0.25 * k as f64).collect();
        let family = MapFamily::semigroup(&sup, &times).unwrap();
        let (ia, ib) = (1, 6);
        let mut pure = CMatrix::zeros(8, 8);
        pure[(ia, ia)] = c(0.5, 0.0);
        pure[(ib, ib)] = c(0.5, 0.0);
        pure[(ia, ib)] = c(0.5, 0.0);
        pure[(ib, ia)] = c(0.5, 0.0);
        let mut mixed = CMatrix::zeros(8, 8);
        mixed[(ia, ia)] = c(0.5, 0.0);
        mixed[(ib, ib)] = c(0.5, 0.0);
        let rho1 = DensityMatrix::new(pure).unwrap();
        let rho2 = DensityMatrix::new(mixed).unwrap();
        let d = distance_trajectory(&family, &rho1, &rho2).unwrap();
        let gamma = crate::lindblad::DecoherenceKernel::closed_form(&grid, &p).gamma(ia, ib);
        for (k, &t) in times.iter().enumerate() {
            let expected = d[0] * (-gamma * t).exp();
            assert!(
                (d[k] - expected).abs() < 1e-7,
                "t={t}: {} vs {expected}",
                d[k]
            );
        }
    }

    #[test]
    fn sigma_of_constant_distance_is_zero() {
        let d = vec![0.3; 5];
        let times: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let sigma = blp_sigma(&d, &times).unwrap();
        assert!(sigma.iter().all(|s| s.abs() < 1e-15));
    }

    #[test]
    fn sigma_matches_analytic_derivative() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 1e-3).collect();
        let d: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let sigma = blp_sigma(&d, &times).unwrap();
        for (k, &t) in times.iter().enumerate().skip(1).take(1998) {
            assert!((sigma[k] + (-t).exp()).abs() < 1e-5);
        }
    }

    #[test]
    fn sigma_is_positive_during_a_revival() {
        let model = exp_cos_model(400);
        let d: Vec<f64> = model.values().iter().map(|f| f.abs()).collect();
        let sigma = blp_sigma(&d, model.times()).unwrap();
        assert!(sigma.iter().any(|s| *s > REVIVAL_THRESHOLD));
    }

    #[test]
    fn semigroup_measure_is_zero() {
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
        let family = sigma_z_dephasing_family(&times);
        let result =
            blp_measure(&family, &PairStrategy::default(), &Quadrature::default()).unwrap();
        assert!(result.measure <= 1e-8, "measure {}", result.measure);
    }

    #[test]
    fn dephasing_distance_equals_the_decoherence_function() {
        let model = exp_cos_model(1000);
        let family = MapFamily::dephasing(&model).unwrap();
        let (plus, minus) = plus_minus_pair();
        let d = distance_trajectory(&family, &plus, &minus).unwrap();
        for (k, f) in model.values().iter().enumerate() {
            assert!((d[k] - f.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_cos_measure_matches_the_frozen_reference() {
        let model = exp_cos_model(4000);
        let family = MapFamily::dephasing(&model).unwrap();
        let strategy = PairStrategy::Fixed(vec![plus_minus_pair()]);
        let result = blp_measure(&family, &strategy, &Quadrature::default()).unwrap();
        assert!(
            (result.measure - EXP_COS_MEASURE).abs() < 1e-5,
            "measure {}",
            result.measure
        );
        // first revival peak: the maximum of D between the first two zeros
        // of f, i.e. t in (0.5, 1.5) at this sampling
        let d = distance_trajectory(&family, &result.state_pair.0, &result.state_pair.1).unwrap();
        let first_peak = d[500..1500].iter().cloned().fold(0.0f64, f64::max);
        assert!((first_peak - EXP_COS_FIRST_REVIVAL).abs() < 1e-5);
    }

    #[test]
    fn measure_is_invariant_under_quadrature_refinement() {
        let model = exp_cos_model(2000);
        let family = MapFamily::dephasing(&model).unwrap();
        let strategy = PairStrategy::Fixed(vec![plus_minus_pair()]);
        let coarse = blp_measure(&family, &strategy, &Quadrature::default()).unwrap();
        let fine = blp_measure(
            &family,
            &strategy,
            &Quadrature {
                subdivisions: 2,
                ..Quadrature::default()
            },
        )
        .unwrap();
        assert!((coarse.measure - fine.measure).abs() <= 1e-10);
    }

    #[test]
    fn measure_tracks_the_trapezoid_of_positive_sigma() {
        // the increment quadrature and the trapezoid of centered-difference
        // sigma samples estimate the same integral; they differ by the
        // O(dt) smearing the trapezoid suffers at the cusps of |f|
        let model = exp_cos_model(4000);
        let family = MapFamily::dephasing(&model).unwrap();
        let (plus, minus) = plus_minus_pair();
        let d = distance_trajectory(&family, &plus, &minus).unwrap();
        let measure = measure_from_distances(&d, family.times(), &Quadrature::default());
        let sigma = blp_sigma(&d, family.times()).unwrap();
        let times = family.times();
        let mut trapezoid = 0.0;
        for k in 0..sigma.len() - 1 {
            let a = sigma[k].max(0.0);
            let b = sigma[k + 1].max(0.0);
            trapezoid += 0.5 * (a + b) * (times[k + 1] - times[k]);
        }
        assert!(
            (measure - trapezoid).abs() < 5e-3,
            "{measure} vs {trapezoid}"
        );
    }

    #[test]
    fn search_is_deterministic_and_monotone_in_pair_count() {
        let model = exp_cos_model(400);
        let family = MapFamily::dephasing(&model).unwrap();
        let quad = Quadrature::default();
        let small = PairStrategy::Search {
            orthogonal_pure: 8,
            random_mixed: 8,
            seed: 5,
        };
        let large = PairStrategy::Search {
            orthogonal_pure: 16,
            random_mixed: 16,
            seed: 5,
        };
        let a1 = blp_measure(&family, &small, &quad).unwrap();
        let a2 = blp_measure(&family, &small, &quad).unwrap();
        assert_eq!(a1.measure, a2.measure);
        assert_eq!(a1.pair_search_log, a2.pair_search_log);
        let b = blp_measure(&family, &large, &quad).unwrap();
        assert!(b.measure >= a1.measure);
        // the smaller log is a prefix of the larger one, per kind
        for (id, m) in &a1.pair_search_log {
            let found = b.pair_search_log.iter().find(|(i, _)| i == id).unwrap();
            assert_eq!(found.1, *m);
        }
    }

    #[test]
    fn semigroup_steps_are_cp_divisible() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.2).collect();
        let family = sigma_z_dephasing_family(&times);
        for s in 0..family.len() - 1 {
            for t in s + 1..family.len() {
                match cp_divisibility_check(&family, s, t).unwrap() {
                    DivisibilityOutcome::Checked {
                        min_choi_eigenvalue,
                        is_cp_step,
                    } => {
                        assert!(is_cp_step, "step ({s},{t}): {min_choi_eigenvalue}");
                        assert!(min_choi_eigenvalue >= -1e-8);
                    }
                    DivisibilityOutcome::NotInvertible { .. } => {
                        panic!("semigroup snapshot reported singular")
                    }
                }
            }
        }
    }

    #[test]
    fn growing_decoherence_function_gives_ncp_steps() {
        // f rises between t = 0.6 and t = 0.9 on this sampling
        let model = exp_cos_model(40);
        let family = MapFamily::dephasing(&model).unwrap();
        let values = model.values();
        let (mut s_idx, mut t_idx) = (0, 0);
        for k in 0..values.len() - 1 {
            // away from the zeros of f, so the step map is well conditioned
            if values[k].abs() > 0.05 && values[k + 1].abs() > values[k].abs() + 0.05 {
                s_idx = k;
                t_idx = k + 1;
                break;
            }
        }
        assert!(t_idx > 0, "no rising segment found");
        match cp_divisibility_check(&family, s_idx, t_idx).unwrap() {
            DivisibilityOutcome::Checked {
                min_choi_eigenvalue,
                is_cp_step,
            } => {
                assert!(!is_cp_step);
                // hand oracle: intermediate map scales coherences by
                // r = f(t)/f(s); Choi spectrum contains 1 - |r| < 0
                let r = values[t_idx] / values[s_idx];
                assert!(
                    (min_choi_eigenvalue - (1.0 - r.abs())).abs() < 1e-9,
                    "min {min_choi_eigenvalue} vs {}",
                    1.0 - r.abs()
                );
            }
            DivisibilityOutcome::NotInvertible { .. } => panic!("step unexpectedly singular"),
        }
    }

    #[test]
    fn unitary_family_divides_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = crate::hilbert::hermitian_part(&crate::hilbert::random_ginibre(2, &mut rng));
        let gen = LindbladGenerator::new(h, vec![]).unwrap();
        let family =
            MapFamily::semigroup(&Superoperator::from_generator(&gen), &[0.0, 0.5, 1.0]).unwrap();
        match cp_divisibility_check(&family, 0, 2).unwrap() {
            DivisibilityOutcome::Checked {
                min_choi_eigenvalue,
                is_cp_step,
            } => {
                assert!(is_cp_step);
                assert!(min_choi_eigenvalue >= -1e-12);
            }
            _ => panic!("unitary family must be invertible"),
        }
    }

    #[test]
    fn vanishing_decoherence_function_reports_not_invertible() {
        // f crosses zero at t = 0.5; include that instant in the sampling
        let model = exp_cos_model(8);
        let family = MapFamily::dephasing(&model).unwrap();
        let zero_idx = model
            .values()
            .iter()
            .position(|v| v.abs() < 1e-12)
            .expect("sampling hits the zero of cos(pi t)");
        match cp_divisibility_check(&family, zero_idx, zero_idx + 1).unwrap() {
            DivisibilityOutcome::NotInvertible { condition_number } => {
                assert!(condition_number > CONDITION_THRESHOLD);
            }
            DivisibilityOutcome::Checked { .. } => panic!("singular map not detected"),
        }
    }

    #[test]
    fn step_order_is_validated() {
        let times: Vec<f64> = (0..4).map(|k| k as f64).collect();
        let family = sigma_z_dephasing_family(&times);
        assert!(matches!(
            cp_divisibility_check(&family, 2, 2),
            Err(NonMarkovError::BadStepOrder)
        ));
        assert!(matches!(
            cp_divisibility_check(&family, 1, 9),
            Err(NonMarkovError::BadStepOrder)
        ));
    }

    #[test]
    fn trivial_dephasing_model_gives_identity_family() {
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.5).collect();
        let model = DephasingModel::from_fn(|_| 1.0, times).unwrap();
        let family = MapFamily::dephasing(&model).unwrap();
        let id = CMatrix::identity(4, 4);
        for k in 0..family.len() {
            assert!(max_abs(&(family.map(k) - &id)) < 1e-14);
        }
    }

    #[test]
    fn exponential_dephasing_equals_the_semigroup() {
        let times: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
        let model = DephasingModel::from_fn(|t| (-2.0 * t).exp(), times.clone()).unwrap();
        let family = MapFamily::dephasing(&model).unwrap();
        let semigroup = sigma_z_dephasing_family(&times);
        for k in 0..family.len() {
            assert!(max_abs(&(family.map(k) - semigroup.map(k))) < 1e-9);
        }
    }

    #[test]
    fn dephasing_model_validation() {
        assert!(DephasingModel::new(vec![0.0, 1.0], vec![0.9, 0.5]).is_err());
        assert!(DephasingModel::new(vec![0.0, 1.0], vec![1.0, 1.2]).is_err());
        assert!(DephasingModel::new(vec![0.5, 1.0], vec![1.0, 0.5]).is_err());
        assert!(DephasingModel::new(vec![0.0, 1.0], vec![1.0, -0.3]).is_ok());
    }

    #[test]
    fn family_validation_rejects_bad_input() {
        let id = CMatrix::identity(4, 4);
        // times not starting at zero
        assert!(MapFamily::new(2, vec![0.5, 1.0], vec![id.clone(), id.clone()]).is_err());
        // non-CP snapshot: transpose map
        let mut transpose = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                transpose[(i * 2 + j, j * 2 + i)] = c(1.0, 0.0);
            }
        }
        let res = MapFamily::new(2, vec![0.0, 1.0], vec![id.clone(), transpose]);
        assert!(matches!(res, Err(NonMarkovError::InvalidFamily(_))));
        // non-TP snapshot
        let half = id.scale(0.5);
        assert!(MapFamily::new(2, vec![0.0, 1.0], vec![id, half]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let model = exp_cos_model(16);
        let family = MapFamily::dephasing(&model).unwrap();
        let mut buf = Vec::new();
        family.to_csv(&mut buf).unwrap();
        let parsed = MapFamily::from_csv(&buf[..]).unwrap();
        assert_eq!(parsed.dim(), family.dim());
        assert_eq!(parsed.times(), family.times());
        for k in 0..family.len() {
            assert_eq!(parsed.map(k), family.map(k));
        }
    }

    #[test]
    fn random_semigroups_are_monotone_with_zero_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let times: Vec<f64> = (0..=12).map(|k| k as f64 * 0.15).collect();
        for trial in 0..10 {
            let dim = 2 + trial % 3;
            let gen = LindbladGenerator::random(dim, 2, &mut rng);
            let family =
                MapFamily::semigroup(&Superoperator::from_generator(&gen), &times).unwrap();
            for _ in 0..5 {
                let a = random_state(dim, &mut rng);
                let b = random_state(dim, &mut rng);
                let d = distance_trajectory(&family, &a, &b).unwrap();
                for w in d.windows(2) {
                    assert!(w[1] <= w[0] + 1e-10);
                }
                assert!(d.iter().all(|v| *v <= d[0] + 1e-10));
            }
            let result =
                blp_measure(&family, &PairStrategy::default(), &Quadrature::default()).unwrap();
            assert!(result.measure <= 1e-8);
        }
    }

    #[test]
    fn revivals_and_ncp_steps_witness_each_other() {
        // monotone model: zero measure, every step CP;
        // oscillating models: positive measure iff some step is NCP
        let cases: Vec<(DephasingModel, bool)> = vec![
            (
                DephasingModel::sampled(|t| (-t).exp(), 4.0, 60).unwrap(),
                false,
            ),
            (exp_cos_model(60), true),
            (
                DephasingModel::sampled(
                    |t| (-0.2 * t).exp() * (0.5 * std::f64::consts::PI * t).cos(),
                    4.0,
                    60,
                )
                .unwrap(),
                true,
            ),
        ];
        for (model, expect_memory) in cases {
            let family = MapFamily::dephasing(&model).unwrap();
            let strategy = PairStrategy::Fixed(vec![plus_minus_pair()]);
            let result = blp_measure(&family, &strategy, &Quadrature::default()).unwrap();
            let mut any_ncp = false;
            for k in 0..family.len() - 1 {
                if let DivisibilityOutcome::Checked { is_cp_step, .. } =
                    cp_divisibility_check(&family, k, k + 1).unwrap()
                {
                    any_ncp |= !is_cp_step;
                }
            }
            if expect_memory {
                assert!(result.measure > 1e-8, "expected revivals");
                assert!(any_ncp, "expected an NCP step");
            } else {
                assert!(result.measure <= 1e-8);
                assert!(!any_ncp);
            }
        }
    }
}
