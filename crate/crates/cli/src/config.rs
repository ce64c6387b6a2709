//! Run configuration: a TOML or JSON file, overridden field by field by
//! command-line flags, validated before any computation starts.

use std::fs;
use std::path::{Path, PathBuf};

use plrdiff_core::degrade::{default_sigma, gaussian_kernel, DegradationModel, SpectralResponse};
use plrdiff_core::schedule::{linear_schedule, NoiseSchedule};
use plrdiff_core::{BandSelection, GuidanceConfig, MetricOptions, VjpMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Full-resolution input of `degrade`.
    pub hrms: Option<PathBuf>,
    pub lrms: Option<PathBuf>,
    pub pan: Option<PathBuf>,
    /// Output directory.
    pub output: Option<PathBuf>,
    /// Ground truth for metrics and sweeps.
    pub reference: Option<PathBuf>,
    /// TinyDenoiser weight file.
    pub weights: Option<PathBuf>,
}

/// PAN spectral response: explicit weights, a uniform 1-based inclusive band
/// range, or (neither) the uniform average of all bands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseConfig {
    pub range: Option<[usize; 2]>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    pub scale: usize,
    pub kernel_size: usize,
    /// Blur width; defaults to the value matched to `scale = 4`.
    pub sigma: Option<f64>,
    pub response: ResponseConfig,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            scale: 4,
            kernel_size: 9,
            sigma: None,
            response: ResponseConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceConfig {
    /// Number of base bands `s`.
    pub rank: usize,
    /// Explicit 1-based band indices; overrides the equal-interval rule.
    pub indices: Option<Vec<usize>>,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self { rank: 3, indices: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Explicit first/last beta; both or neither. Defaults to the rescaled linear schedule.
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub eta1: f64,
    pub eta2: f64,
    pub vjp_mode: VjpMode,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: None,
            beta_end: None,
            eta1: 1.0,
            eta2: 2.0,
            vjp_mode: VjpMode::StopGradient,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Gaussian,
    Tiny,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(PredictorKind::Gaussian),
            "tiny" => Ok(PredictorKind::Tiny),
            other => Err(format!("expected `gaussian` or `tiny`, got `{other}`")),
        }
    }
}

/// Noise predictor choice. The Gaussian prior mean is taken from `mean`
/// (an s-band array), else the constant `mean_value`, else the selected bands
/// of the zero-order-hold upsampled LRMS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub mean: Option<PathBuf>,
    pub mean_value: Option<f64>,
    pub variance: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Gaussian,
            mean: None,
            mean_value: None,
            variance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub hidden: usize,
    pub holdout_fraction: f64,
    /// Training arrays; when empty, synthetic textures are generated.
    pub data: Vec<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_size: usize,
    /// Bands of synthetic textures; defaults to the subspace rank.
    pub synthetic_bands: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 2,
            learning_rate: 0.02,
            momentum: 0.9,
            hidden: 8,
            holdout_fraction: 0.2,
            data: Vec::new(),
            synthetic_count: 10,
            synthetic_size: 64,
            synthetic_bands: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub peak: f64,
    pub q2n_block: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            peak: 1.0,
            q2n_block: 32,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Worker threads; defaults to the number of CPUs.
    pub workers: Option<usize>,
    /// Use the base seed at every point instead of a per-point derived seed.
    pub shared_seed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub degradation: DegradationConfig,
    pub subspace: SubspaceConfig,
    pub sampler: SamplerConfig,
    pub predictor: PredictorConfig,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    /// Parses a `.toml` or `.json` file (by extension).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "json" => serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
            "toml" => toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
            _ => Err(CliError::config(format!(
                "{}: config files must end in .toml or .json",
                path.display()
            ))),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.degradation.sigma.unwrap_or_else(default_sigma)
    }

    /// Range checks on every numeric field; errors name the field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(CliError::config(format!("`{field}` {why}")));
        let d = &self.degradation;
        if d.scale == 0 {
            return bad("degradation.scale", "must be positive".into());
        }
        if d.kernel_size == 0 || d.kernel_size % 2 == 0 {
            return bad("degradation.kernel_size", format!("must be odd, got {}", d.kernel_size));
        }
        if let Some(s) = d.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad("degradation.sigma", format!("must be positive, got {s}"));
            }
        }
        if d.response.range.is_some() && d.response.weights.is_some() {
            return bad(
                "degradation.response",
                "takes either `range` or `weights`, not both".into(),
            );
        }
        if let Some([a, b]) = d.response.range {
            if a == 0 || b < a {
                return bad(
                    "degradation.response.range",
                    format!("needs 1 <= first <= last, got [{a}, {b}]"),
                );
            }
        }
        if self.subspace.rank == 0 {
            return bad("subspace.rank", "must be positive".into());
        }
        if let Some(ix) = &self.subspace.indices {
            if ix.len() != self.subspace.rank {
                return bad(
                    "subspace.indices",
                    format!("has {} entries but subspace.rank is {}", ix.len(), self.subspace.rank),
                );
            }
        }
        let s = &self.sampler;
        if s.steps == 0 {
            return bad("sampler.steps", "must be positive".into());
        }
        if s.beta_start.is_some() != s.beta_end.is_some() {
            return bad(
                "sampler.beta_start",
                "and `sampler.beta_end` must be given together".into(),
            );
        }
        for (name, v) in [("sampler.eta1", s.eta1), ("sampler.eta2", s.eta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, format!("must be >= 0, got {v}"));
            }
        }
        if !(self.predictor.variance > 0.0 && self.predictor.variance.is_finite()) {
            return bad(
                "predictor.variance",
                format!("must be positive, got {}", self.predictor.variance),
            );
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return bad("train.batch_size", "must be positive".into());
        }
        if t.learning_rate.is_nan() || t.learning_rate <= 0.0 {
            return bad("train.learning_rate", "must be positive".into());
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return bad("train.momentum", "must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&t.holdout_fraction) {
            return bad("train.holdout_fraction", "must lie in [0, 1)".into());
        }
        if t.hidden == 0 {
            return bad("train.hidden", "must be positive".into());
        }
        if self.metrics.peak.is_nan() || self.metrics.peak <= 0.0 {
            return bad("metrics.peak", "must be positive".into());
        }
        if self.metrics.q2n_block < 2 {
            return bad("metrics.q2n_block", "must be at least 2".into());
        }
        if self.sweep.workers == Some(0) {
            return bad("sweep.workers", "must be positive".into());
        }
        Ok(())
    }

    pub fn degradation_model(&self, bands: usize) -> Result<DegradationModel> {
        let d = &self.degradation;
        let response = match (&d.response.range, &d.response.weights) {
            (Some([a, b]), _) => SpectralResponse::uniform_range(bands, *a, *b)?,
            (_, Some(w)) => {
                if w.len() != bands {
                    return Err(CliError::config(format!(
                        "`degradation.response.weights` has {} entries for {bands} bands",
                        w.len()
                    )));
                }
                SpectralResponse::new(w.clone())?
            }
            _ => SpectralResponse::uniform(bands)?,
        };
        let kernel = gaussian_kernel(d.kernel_size, self.sigma())?;
        Ok(DegradationModel::new(d.scale, kernel, response)?)
    }

    pub fn band_selection(&self, bands: usize) -> Result<BandSelection> {
        Ok(match &self.subspace.indices {
            Some(ix) => BandSelection::from_indices(bands, ix.clone())?,
            None => BandSelection::equal_interval(bands, self.subspace.rank)?,
        })
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let s = &self.sampler;
        Ok(match (s.beta_start, s.beta_end) {
            (Some(a), Some(b)) => NoiseSchedule::linear(s.steps, a, b)?,
            _ => linear_schedule(s.steps)?,
        })
    }

    pub fn guidance(&self) -> Result<GuidanceConfig> {
        Ok(GuidanceConfig::new(
            self.sampler.eta1,
            self.sampler.eta2,
            self.sampler.vjp_mode,
        )?)
    }

    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            peak: self.metrics.peak,
            scale: self.degradation.scale,
            q2n_block: self.metrics.q2n_block,
        }
    }

    /// Returns the path or a config error naming the missing field.
    pub fn require(&self, field: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let p = value
            .clone()
            .ok_or_else(|| CliError::config(format!("`paths.{field}` is required")))?;
        Ok(p)
    }

    /// Like [`RunConfig::require`] but also checks that the file exists.
    pub fn require_file(&self, field: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let p = self.require(field, value)?;
        if !p.is_file() {
            return Err(CliError::config(format!(
                "`paths.{field}` = {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }
}
