//! Experiment runners: build the model from its config section, run it, and
//! write the CSV outputs plus a manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use oqslab::composite::{bound_campaign, write_campaign_csv};
use oqslab::grw::{ensemble_average, simulate_ensemble, GrwParams, PositionGrid, WaveFunction};
use oqslab::hilbert::{CMatrix, CompositeDims, DensityMatrix};
use oqslab::lindblad::{
    analytic_decoherence_solution, integrate_lindblad, LindbladGenerator, Superoperator,
};
use oqslab::nonmarkov::{
    blp_measure, cp_divisibility_check, distance_trajectory, plus_minus_pair, BlpResult,
    DephasingModel, DivisibilityOutcome, MapFamily, PairStrategy, Quadrature,
};
use oqslab::Complex64;

use crate::config::{
    BlpConfig, BoundCampaignConfig, DivisibilityConfig, ExportFamilyConfig, FamilySpec,
    GrwMcConfig, InitialState, LindbladConfig,
};
use crate::CliError;

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn csv_writer(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    File::create(out.join(name))
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("cannot create {name}: {e}")))
}

/// Manifest written next to the outputs, including on failure. All physical
/// quantities are in internal units with hbar = 1.
pub fn write_manifest<C: Serialize>(
    out: &Path,
    experiment: &str,
    seed: u64,
    config: &C,
    wall_time_s: f64,
    status: &str,
) -> Result<(), CliError> {
    let mut root = toml::map::Map::new();
    let mut run = toml::map::Map::new();
    run.insert("experiment".into(), experiment.into());
    run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    run.insert("seed".into(), toml::Value::String(seed.to_string()));
    run.insert("wall_time_s".into(), toml::Value::Float(wall_time_s));
    run.insert("status".into(), status.into());
    root.insert("run".into(), toml::Value::Table(run));
    let config_value =
        toml::Value::try_from(config).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    root.insert("config".into(), config_value);
    let text = toml::to_string(&toml::Value::Table(root))
        .map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    fs::write(out.join("manifest.toml"), text)
        .map_err(|e| CliError::Config(format!("cannot write manifest: {e}")))
}

/// Run `body`, then write the manifest with the outcome; the body's error is
/// preserved.
pub fn with_manifest<C: Serialize>(
    out: &Path,
    experiment: &str,
    seed: u64,
    config: &C,
    body: impl FnOnce() -> Result<(), CliError>,
) -> Result<(), CliError> {
    let start = Instant::now();
    let result = body();
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    write_manifest(
        out,
        experiment,
        seed,
        config,
        start.elapsed().as_secs_f64(),
        &status,
    )?;
    result
}

fn initial_wavefunction(
    grid: PositionGrid,
    initial: &InitialState,
) -> Result<WaveFunction, CliError> {
    match initial.kind.as_str() {
        "gaussian" => {
            WaveFunction::gaussian(grid, initial.center.expect("validated"), initial.width)
        }
        "two-gaussian" => {
            let centers = initial.centers.expect("validated");
            WaveFunction::two_gaussian_superposition(grid, centers[0], centers[1], initial.width)
        }
        _ => unreachable!("validated initial kind"),
    }
    .map_err(numerical)
}

pub fn run_grw_mc(cfg: &GrwMcConfig, out: &Path) -> Result<(), CliError> {
    let grid = PositionGrid::new(cfg.x_min, cfg.x_max, cfg.n_points).map_err(numerical)?;
    let p = GrwParams::new(cfg.lambda, cfg.r_c).map_err(numerical)?;
    let psi0 = initial_wavefunction(grid, &cfg.initial)?;
    let track = cfg
        .track
        .or(cfg.initial.centers)
        .expect("validated: track or centers present");
    let (ia, ib) = (grid.nearest_index(track[0]), grid.nearest_index(track[1]));

    let trajs = simulate_ensemble(
        &psi0,
        &p,
        None,
        &cfg.sample_times,
        cfg.trajectories,
        cfg.seed,
    )
    .map_err(numerical)?;
    let amps0 = psi0.amplitudes();
    let rho0 = DensityMatrix::new((amps0 * amps0.adjoint()).scale(grid.dx())).map_err(numerical)?;

    let mut grid_csv = csv_writer(out, "grid.csv")?;
    writeln!(grid_csv, "index,position").map_err(numerical)?;
    for i in 0..grid.n_points() {
        writeln!(grid_csv, "{i},{}", grid.point(i)).map_err(numerical)?;
    }

    let mut pops = csv_writer(out, "populations.csv")?;
    write!(pops, "time").map_err(numerical)?;
    for i in 0..grid.n_points() {
        write!(pops, ",pop_{i}").map_err(numerical)?;
    }
    writeln!(pops).map_err(numerical)?;

    let mut decay = csv_writer(out, "offdiagonal_decay.csv")?;
    writeln!(decay, "time,re_mc,im_mc,abs_mc,abs_analytic,std_error").map_err(numerical)?;

    for (k, &t) in cfg.sample_times.iter().enumerate() {
        let rho_mc = ensemble_average(&trajs, k).map_err(numerical)?;
        write!(pops, "{t}").map_err(numerical)?;
        for i in 0..grid.n_points() {
            write!(pops, ",{}", rho_mc.matrix()[(i, i)].re).map_err(numerical)?;
        }
        writeln!(pops).map_err(numerical)?;

        let entry = rho_mc.matrix()[(ia, ib)];
        let analytic = analytic_decoherence_solution(&rho0, &grid, t, &p).map_err(numerical)?;
        let exact_abs = analytic.matrix()[(ia, ib)].norm();
        // per-trajectory standard error of the tracked coherence
        let dx = grid.dx();
        let n = trajs.len() as f64;
        let (mut sum_re, mut sum_im, mut sum_re2, mut sum_im2) = (0.0, 0.0, 0.0, 0.0);
        for traj in &trajs {
            let a = traj.states[k].amplitudes();
            let x = a[ia] * a[ib].conj() * Complex64::new(dx, 0.0);
            sum_re += x.re;
            sum_im += x.im;
            sum_re2 += x.re * x.re;
            sum_im2 += x.im * x.im;
        }
        let var = (sum_re2 / n - (sum_re / n).powi(2)).max(0.0)
            + (sum_im2 / n - (sum_im / n).powi(2)).max(0.0);
        let se = (var / n).sqrt();
        writeln!(
            decay,
            "{t},{},{},{},{exact_abs},{se}",
            entry.re,
            entry.im,
            entry.norm()
        )
        .map_err(numerical)?;
    }
    Ok(())
}

fn bloch_state(v: [f64; 3]) -> Result<DensityMatrix, CliError> {
    let c = Complex64::new;
    let mat = CMatrix::from_row_slice(
        2,
        2,
        &[
            c(0.5 * (1.0 + v[2]), 0.0),
            c(0.5 * v[0], -0.5 * v[1]),
            c(0.5 * v[0], 0.5 * v[1]),
            c(0.5 * (1.0 - v[2]), 0.0),
        ],
    );
    DensityMatrix::new(mat).map_err(numerical)
}

pub fn run_lindblad(cfg: &LindbladConfig, out: &Path) -> Result<(), CliError> {
    let (sup, rho0) = match cfg.model.as_str() {
        "grw" => {
            let grid = PositionGrid::new(
                cfg.x_min.expect("validated"),
                cfg.x_max.expect("validated"),
                cfg.n_points.expect("validated"),
            )
            .map_err(numerical)?;
            let p = GrwParams::new(cfg.lambda.expect("validated"), cfg.r_c.expect("validated"))
                .map_err(numerical)?;
            let psi0 = initial_wavefunction(grid, cfg.initial.as_ref().expect("validated"))?;
            let amps = psi0.amplitudes();
            let rho0 =
                DensityMatrix::new((amps * amps.adjoint()).scale(grid.dx())).map_err(numerical)?;
            (Superoperator::grw(&grid, &p), rho0)
        }
        "qubit-dephasing" => {
            let c = Complex64::new;
            let sz = CMatrix::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
            );
            let gen = LindbladGenerator::new(
                CMatrix::zeros(2, 2),
                vec![(cfg.rate.expect("validated"), sz)],
            )
            .map_err(numerical)?;
            (
                Superoperator::from_generator(&gen),
                bloch_state(cfg.bloch.expect("validated"))?,
            )
        }
        _ => unreachable!("validated model"),
    };
    let states = integrate_lindblad(&rho0, &sup, &cfg.times).map_err(numerical)?;

    let mut w = csv_writer(out, "states.csv")?;
    let n = sup.dim();
    write!(w, "time").map_err(numerical)?;
    for i in 0..n {
        for j in 0..n {
            write!(w, ",re_{i}_{j},im_{i}_{j}").map_err(numerical)?;
        }
    }
    writeln!(w).map_err(numerical)?;
    for (k, &t) in cfg.times.iter().enumerate() {
        write!(w, "{t}").map_err(numerical)?;
        let m = states[k].matrix();
        for i in 0..n {
            for j in 0..n {
                write!(w, ",{},{}", m[(i, j)].re, m[(i, j)].im).map_err(numerical)?;
            }
        }
        writeln!(w).map_err(numerical)?;
    }
    Ok(())
}

/// Build the dynamical-map family named by a [`FamilySpec`].
pub fn build_family(spec: &FamilySpec, section: &str) -> Result<MapFamily, CliError> {
    let times = || -> Vec<f64> {
        let t_max = spec.t_max.expect("validated");
        let steps = spec.steps.expect("validated");
        let dt = t_max / steps as f64;
        (0..=steps).map(|k| k as f64 * dt).collect()
    };
    match spec.model.as_str() {
        "exp-cos" => {
            let decay = spec.decay.expect("validated");
            let omega = spec.omega.expect("validated");
            let model =
                DephasingModel::from_fn(|t| (-decay * t).exp() * (omega * t).cos(), times())
                    .map_err(numerical)?;
            MapFamily::dephasing(&model).map_err(numerical)
        }
        "exp" => {
            let decay = spec.decay.expect("validated");
            let model =
                DephasingModel::from_fn(|t| (-decay * t).exp(), times()).map_err(numerical)?;
            MapFamily::dephasing(&model).map_err(numerical)
        }
        "qubit-dephasing" => {
            let c = Complex64::new;
            let sz = CMatrix::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
            );
            let gen = LindbladGenerator::new(
                CMatrix::zeros(2, 2),
                vec![(spec.rate.expect("validated"), sz)],
            )
            .map_err(numerical)?;
            MapFamily::semigroup(&Superoperator::from_generator(&gen), &times()).map_err(numerical)
        }
        "grw" => {
            let grid = PositionGrid::new(
                spec.x_min.expect("validated"),
                spec.x_max.expect("validated"),
                spec.n_points.expect("validated"),
            )
            .map_err(numerical)?;
            let p = GrwParams::new(
                spec.lambda.expect("validated"),
                spec.r_c.expect("validated"),
            )
            .map_err(numerical)?;
            MapFamily::semigroup(&Superoperator::grw(&grid, &p), &times()).map_err(numerical)
        }
        "family-csv" => {
            let path = spec.family_path.as_ref().expect("validated");
            let file = File::open(path).map_err(|e| {
                CliError::Config(format!("{section}.family_path: cannot open {path:?}: {e}"))
            })?;
            MapFamily::from_csv(BufReader::new(file))
                .map_err(|e| CliError::Config(format!("{section}.family_path: {e}")))
        }
        _ => unreachable!("validated model"),
    }
}

fn run_blp_strategy(family: &MapFamily, cfg: &BlpConfig) -> Result<BlpResult, CliError> {
    let quad = Quadrature::default();
    let fixed = PairStrategy::Fixed(vec![plus_minus_pair()]);
    let search = PairStrategy::Search {
        orthogonal_pure: cfg.orthogonal_pure,
        random_mixed: cfg.random_mixed,
        seed: cfg.seed,
    };
    match cfg.pairs.as_str() {
        "plus-minus" => {
            if family.dim() != 2 {
                return Err(CliError::Config(
                    "blp.pairs = \"plus-minus\" requires a qubit family".into(),
                ));
            }
            blp_measure(family, &fixed, &quad).map_err(numerical)
        }
        "search" => blp_measure(family, &search, &quad).map_err(numerical),
        "both" => {
            if family.dim() != 2 {
                return Err(CliError::Config(
                    "blp.pairs = \"both\" requires a qubit family".into(),
                ));
            }
            let a = blp_measure(family, &fixed, &quad).map_err(numerical)?;
            let b = blp_measure(family, &search, &quad).map_err(numerical)?;
            let mut best = if a.measure >= b.measure {
                a.clone()
            } else {
                b.clone()
            };
            best.pair_search_log = a
                .pair_search_log
                .into_iter()
                .chain(b.pair_search_log)
                .collect();
            Ok(best)
        }
        _ => unreachable!("validated pairs mode"),
    }
}

pub fn run_blp(cfg: &BlpConfig, out: &Path) -> Result<(), CliError> {
    let family = build_family(&cfg.family, "blp")?;
    let result = run_blp_strategy(&family, cfg)?;
    let d = distance_trajectory(&family, &result.state_pair.0, &result.state_pair.1)
        .map_err(numerical)?;

    let mut w = csv_writer(out, "distance.csv")?;
    writeln!(w, "time,distance,sigma").map_err(numerical)?;
    for (k, &t) in family.times().iter().enumerate() {
        writeln!(w, "{t},{},{}", d[k], result.sigma[k]).map_err(numerical)?;
    }

    let mut w = csv_writer(out, "pairs.csv")?;
    writeln!(w, "pair,measure").map_err(numerical)?;
    for (id, measure) in &result.pair_search_log {
        writeln!(w, "{id},{measure}").map_err(numerical)?;
    }

    let mut w = csv_writer(out, "measure.csv")?;
    writeln!(w, "measure").map_err(numerical)?;
    writeln!(w, "{}", result.measure).map_err(numerical)?;
    Ok(())
}

pub fn run_divisibility(cfg: &DivisibilityConfig, out: &Path) -> Result<(), CliError> {
    let family = build_family(&cfg.family, "divisibility")?;
    let mut w = csv_writer(out, "divisibility.csv")?;
    writeln!(
        w,
        "s_index,t_index,s,t,outcome,min_choi_eigenvalue,condition_number"
    )
    .map_err(numerical)?;
    let stride = cfg.stride;
    let times = family.times();
    for s in 0..family.len().saturating_sub(stride) {
        let t = s + stride;
        match cp_divisibility_check(&family, s, t).map_err(numerical)? {
            DivisibilityOutcome::Checked {
                min_choi_eigenvalue,
                is_cp_step,
            } => {
                let outcome = if is_cp_step { "cp" } else { "ncp" };
                writeln!(
                    w,
                    "{s},{t},{},{},{outcome},{min_choi_eigenvalue},",
                    times[s], times[t]
                )
                .map_err(numerical)?;
            }
            DivisibilityOutcome::NotInvertible { condition_number } => {
                writeln!(
                    w,
                    "{s},{t},{},{},not-invertible,,{condition_number}",
                    times[s], times[t]
                )
                .map_err(numerical)?;
            }
        }
    }
    Ok(())
}

pub fn run_bound_campaign(cfg: &BoundCampaignConfig, out: &Path) -> Result<(), CliError> {
    let rows = bound_campaign(
        CompositeDims::new(cfg.dim_s, cfg.dim_e),
        cfg.instances,
        cfg.t_max,
        cfg.seed,
    )
    .map_err(numerical)?;
    let mut w = csv_writer(out, "campaign.csv")?;
    write_campaign_csv(&rows, &mut w).map_err(numerical)?;
    Ok(())
}

pub fn run_export_family(cfg: &ExportFamilyConfig, out: &Path) -> Result<(), CliError> {
    let family = build_family(&cfg.family, "export-family")?;
    let mut w = csv_writer(out, "family.csv")?;
    family.to_csv(&mut w).map_err(numerical)?;
    Ok(())
}
