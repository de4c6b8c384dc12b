//! Experiment configuration: one TOML section per subcommand, flat keys,
//! lossless serialization round trip.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::CliError;

fn default_seed() -> u64 {
    0
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_pairs() -> String {
    "search".into()
}

fn default_pair_count() -> usize {
    32
}

fn default_stride() -> usize {
    1
}

/// Whole config file; each experiment reads its own section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "grw-mc", skip_serializing_if = "Option::is_none")]
    pub grw_mc: Option<GrwMcConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lindblad: Option<LindbladConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blp: Option<BlpConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divisibility: Option<DivisibilityConfig>,
    #[serde(rename = "bound-campaign", skip_serializing_if = "Option::is_none")]
    pub bound_campaign: Option<BoundCampaignConfig>,
    #[serde(rename = "export-family", skip_serializing_if = "Option::is_none")]
    pub export_family: Option<ExportFamilyConfig>,
}

fn require_positive(section: &str, field: &str, value: f64) -> Result<(), CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{section}.{field} must be positive and finite (got {value})"
        )))
    }
}

fn require_sorted_times(section: &str, field: &str, times: &[f64]) -> Result<(), CliError> {
    let ok = !times.is_empty()
        && times[0] >= 0.0
        && times.windows(2).all(|w| w[0] < w[1])
        && times.iter().all(|t| t.is_finite());
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{section}.{field} must be non-empty, non-negative and strictly increasing"
        )))
    }
}

/// Initial wavefunction on the grid: a single Gaussian packet or an equal
/// superposition of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// `gaussian` or `two-gaussian`.
    pub kind: String,
    /// Packet center (`gaussian`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Packet centers (`two-gaussian`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<[f64; 2]>,
    /// Position spread of each packet.
    pub width: f64,
}

impl InitialState {
    pub fn validate(&self, section: &str) -> Result<(), CliError> {
        require_positive(section, "initial.width", self.width)?;
        match self.kind.as_str() {
            "gaussian" => {
                if self.center.is_none() {
                    return Err(CliError::Config(format!(
                        "{section}.initial.center is required for kind = \"gaussian\""
                    )));
                }
            }
            "two-gaussian" => {
                if self.centers.is_none() {
                    return Err(CliError::Config(format!(
                        "{section}.initial.centers is required for kind = \"two-gaussian\""
                    )));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                "{section}.initial.kind must be \"gaussian\" or \"two-gaussian\" (got \"{other}\")"
            )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrwMcConfig {
    pub lambda: f64,
    pub r_c: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub sample_times: Vec<f64>,
    pub trajectories: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub initial: InitialState,
    /// Positions whose coherence to track; defaults to the packet centers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track: Option<[f64; 2]>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl GrwMcConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let s = "grw-mc";
        require_positive(s, "lambda", self.lambda)?;
        require_positive(s, "r_c", self.r_c)?;
        if self.x_min >= self.x_max || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(CliError::Config(format!("{s}.x_min must be below x_max")));
        }
        if self.n_points < 8 {
            return Err(CliError::Config(format!("{s}.n_points must be at least 8")));
        }
        require_sorted_times(s, "sample_times", &self.sample_times)?;
        if self.trajectories == 0 {
            return Err(CliError::Config(format!(
                "{s}.trajectories must be at least 1"
            )));
        }
        self.initial.validate(s)?;
        if self.initial.kind == "gaussian" && self.track.is_none() {
            return Err(CliError::Config(format!(
                "{s}.track is required when the initial state has a single packet"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    /// `grw` or `qubit-dephasing`.
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    /// Dephasing rate (`qubit-dephasing`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Initial Bloch vector (`qubit-dephasing`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bloch: Option<[f64; 3]>,
    pub times: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl LindbladConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let s = "lindblad";
        require_sorted_times(s, "times", &self.times)?;
        match self.model.as_str() {
            "grw" => {
                let lambda = self.lambda.ok_or_else(|| {
                    CliError::Config(format!("{s}.lambda is required for model = \"grw\""))
                })?;
                let r_c = self.r_c.ok_or_else(|| {
                    CliError::Config(format!("{s}.r_c is required for model = \"grw\""))
                })?;
                require_positive(s, "lambda", lambda)?;
                require_positive(s, "r_c", r_c)?;
                let n = self.n_points.ok_or_else(|| {
                    CliError::Config(format!("{s}.n_points is required for model = \"grw\""))
                })?;
                if !(8..=64).contains(&n) {
                    return Err(CliError::Config(format!(
                        "{s}.n_points must lie in 8..=64 for dense superoperator integration (got {n})"
                    )));
                }
                match (self.x_min, self.x_max) {
                    (Some(a), Some(b)) if a < b => {}
                    _ => {
                        return Err(CliError::Config(format!(
                            "{s}.x_min and {s}.x_max with x_min < x_max are required for model = \"grw\""
                        )))
                    }
                }
                let initial = self.initial.as_ref().ok_or_else(|| {
                    CliError::Config(format!("{s}.initial is required for model = \"grw\""))
                })?;
                initial.validate(s)?;
            }
            "qubit-dephasing" => {
                let rate = self.rate.ok_or_else(|| {
                    CliError::Config(format!(
                        "{s}.rate is required for model = \"qubit-dephasing\""
                    ))
                })?;
                require_positive(s, "rate", rate)?;
                let bloch = self.bloch.ok_or_else(|| {
                    CliError::Config(format!(
                        "{s}.bloch is required for model = \"qubit-dephasing\""
                    ))
                })?;
                let norm = (bloch[0].powi(2) + bloch[1].powi(2) + bloch[2].powi(2)).sqrt();
                if norm > 1.0 + 1e-12 {
                    return Err(CliError::Config(format!(
                        "{s}.bloch must lie inside the Bloch ball (norm {norm})"
                    )));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "{s}.model must be \"grw\" or \"qubit-dephasing\" (got \"{other}\")"
                )))
            }
        }
        Ok(())
    }
}

/// Dynamics selector shared by the map-family experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// `exp-cos`, `exp`, `qubit-dephasing`, `grw` or `family-csv`.
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    /// Snapshot horizon; the analysis never guesses an asymptotic cutoff.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_path: Option<PathBuf>,
}

impl FamilySpec {
    pub fn validate(&self, section: &str) -> Result<(), CliError> {
        let s = section;
        let need_grid = |field: &str, v: Option<f64>| {
            v.ok_or_else(|| {
                CliError::Config(format!("{s}.{field} is required for model = \"grw\""))
            })
        };
        let need_times = || -> Result<(f64, usize), CliError> {
            let t_max = self.t_max.ok_or_else(|| {
                CliError::Config(format!(
                    "{s}.t_max is required (no asymptotic horizon is assumed)"
                ))
            })?;
            let steps = self
                .steps
                .ok_or_else(|| CliError::Config(format!("{s}.steps is required")))?;
            require_positive(s, "t_max", t_max)?;
            if steps == 0 {
                return Err(CliError::Config(format!("{s}.steps must be at least 1")));
            }
            Ok((t_max, steps))
        };
        match self.model.as_str() {
            "exp-cos" => {
                let decay = self
                    .decay
                    .ok_or_else(|| CliError::Config(format!("{s}.decay is required for model = \"exp-cos\"")))?;
                if !(decay.is_finite() && decay >= 0.0) {
                    return Err(CliError::Config(format!("{s}.decay must be non-negative")));
                }
                let omega = self
                    .omega
                    .ok_or_else(|| CliError::Config(format!("{s}.omega is required for model = \"exp-cos\"")))?;
                if !omega.is_finite() {
                    return Err(CliError::Config(format!("{s}.omega must be finite")));
                }
                need_times()?;
            }
            "exp" => {
                let decay = self
                    .decay
                    .ok_or_else(|| CliError::Config(format!("{s}.decay is required for model = \"exp\"")))?;
                if !(decay.is_finite() && decay >= 0.0) {
                    return Err(CliError::Config(format!("{s}.decay must be non-negative")));
                }
                need_times()?;
            }
            "qubit-dephasing" => {
                let rate = self.rate.ok_or_else(|| {
                    CliError::Config(format!("{s}.rate is required for model = \"qubit-dephasing\""))
                })?;
                require_positive(s, "rate", rate)?;
                need_times()?;
            }
            "grw" => {
                require_positive(s, "lambda", need_grid("lambda", self.lambda)?)?;
                require_positive(s, "r_c", need_grid("r_c", self.r_c)?)?;
                need_grid("x_min", self.x_min)?;
                need_grid("x_max", self.x_max)?;
                let n = self.n_points.ok_or_else(|| {
                    CliError::Config(format!("{s}.n_points is required for model = \"grw\""))
                })?;
                if !(8..=16).contains(&n) {
                    return Err(CliError::Config(format!(
                        "{s}.n_points must lie in 8..=16 for map-family analysis (got {n})"
                    )));
                }
                need_times()?;
            }
            "family-csv" => {
                if self.family_path.is_none() {
                    return Err(CliError::Config(format!(
                        "{s}.family_path is required for model = \"family-csv\""
                    )));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "{s}.model must be one of exp-cos, exp, qubit-dephasing, grw, family-csv (got \"{other}\")"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlpConfig {
    #[serde(flatten)]
    pub family: FamilySpec,
    /// `plus-minus`, `search` or `both`.
    #[serde(default = "default_pairs")]
    pub pairs: String,
    #[serde(default = "default_pair_count")]
    pub orthogonal_pure: usize,
    #[serde(default = "default_pair_count")]
    pub random_mixed: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl BlpConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.family.validate("blp")?;
        match self.pairs.as_str() {
            "plus-minus" | "search" | "both" => {}
            other => {
                return Err(CliError::Config(format!(
                    "blp.pairs must be plus-minus, search or both (got \"{other}\")"
                )))
            }
        }
        if self.pairs != "plus-minus" && self.orthogonal_pure + self.random_mixed == 0 {
            return Err(CliError::Config(
                "blp.orthogonal_pure + blp.random_mixed must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisibilityConfig {
    #[serde(flatten)]
    pub family: FamilySpec,
    /// Check steps `(k, k + stride)` along the family.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl DivisibilityConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.family.validate("divisibility")?;
        if self.stride == 0 {
            return Err(CliError::Config(
                "divisibility.stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCampaignConfig {
    pub dim_s: usize,
    pub dim_e: usize,
    pub instances: usize,
    pub t_max: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl BoundCampaignConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let s = "bound-campaign";
        if self.dim_s < 2 {
            return Err(CliError::Config(format!("{s}.dim_s must be at least 2")));
        }
        if !(2..=8).contains(&self.dim_e) {
            return Err(CliError::Config(format!(
                "{s}.dim_e must lie in 2..=8 (exact diagonalization cost)"
            )));
        }
        if self.instances == 0 {
            return Err(CliError::Config(format!(
                "{s}.instances must be at least 1"
            )));
        }
        require_positive(s, "t_max", self.t_max)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportFamilyConfig {
    #[serde(flatten)]
    pub family: FamilySpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExportFamilyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.family.validate("export-family")
    }
}
