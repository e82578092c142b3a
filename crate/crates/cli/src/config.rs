//! Experiment configuration: JSON schema, loading, and validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nerfsim_core::field::{AnalyticScene, NetworkConfig};
use nerfsim_core::geometry::{CameraPose, Vec3};
use nerfsim_core::profile::HardwareConfig;
use nerfsim_core::rig::{ring_poses, RingSpec};
use nerfsim_core::sampling::SamplingConfig;
use nerfsim_core::scheduler::{validate_candidates, FeatureLayout, PatchShape};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_VERSION: u32 = 1;

/// A configuration problem, located in a file and, when known, a line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.file.display(), l, self.message),
            None => write!(f, "{}: {}", self.file.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    #[default]
    Analytic,
    Neural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoseSpec {
    LookAt { center: [f64; 3], target: [f64; 3], hfov_deg: f64, image_width: u32, image_height: u32 },
    Explicit { pose: CameraPose },
}

impl PoseSpec {
    pub fn resolve(&self) -> nerfsim_core::Result<CameraPose> {
        match self {
            PoseSpec::LookAt { center, target, hfov_deg, image_width, image_height } => CameraPose::look_at_fov(
                Vec3::from(*center),
                Vec3::from(*target),
                Vec3::new(0.0, -1.0, 0.0),
                *hfov_deg,
                *image_width,
                *image_height,
            ),
            PoseSpec::Explicit { pose } => Ok(pose.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Ring { ring: RingSpec },
    List { poses: Vec<PoseSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub novel: PoseSpec,
    pub sources: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub candidates: Vec<PatchShape>,
    /// Depth bins of the focused-stage workload cube.
    pub focused_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Scene file, relative to the config file.
    pub scene: PathBuf,
    pub rig: RigConfig,
    pub depth_range: (f64, f64),
    #[serde(default)]
    pub evaluator: Evaluator,
    pub features: FeatureLayout,
    pub sampling: SamplingConfig,
    pub network: NetworkConfig,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub hardware: HardwareConfig,
    #[serde(default)]
    pub seed: u64,
    /// Dense points per ray of an optional reference render.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_points: Option<usize>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A validated config with its scene loaded and cameras built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scene: AnalyticScene,
    pub novel: CameraPose,
    pub sources: Vec<CameraPose>,
}

impl Experiment {
    /// Short hex digest of the canonical config JSON.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::to_string(&self.config).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// 1-based line of the first occurrence of `"key"` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let pat = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&pat)).map(|i| i + 1)
}

pub fn parse_config(text: &str, file: &Path) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError {
        file: file.to_path_buf(),
        line: (e.line() > 0).then_some(e.line()),
        message: e.to_string(),
    })
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        file: path.to_path_buf(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    let config = parse_config(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scene_path = base.join(&config.scene);
    let scene = load_scene(&scene_path)?;
    resolve(config, scene, &text, path)
}

pub fn load_scene(path: &Path) -> Result<AnalyticScene, ConfigError> {
    let err = |line, message| ConfigError { file: path.to_path_buf(), line, message };
    let text = fs::read_to_string(path).map_err(|e| err(None, format!("cannot read scene: {e}")))?;
    serde_json::from_str(&text).map_err(|e| err((e.line() > 0).then_some(e.line()), e.to_string()))
}

/// Checks every sub-config and builds the cameras. `text` and `file` locate
/// errors; pass an empty text when the config did not come from a file.
pub fn resolve(config: ExperimentConfig, scene: AnalyticScene, text: &str, file: &Path) -> Result<Experiment, ConfigError> {
    let fail = |key: &str, message: String| ConfigError { file: file.to_path_buf(), line: line_of(text, key), message };
    if config.version != CONFIG_VERSION {
        return Err(fail("version", format!("unsupported config version {} (expected {CONFIG_VERSION})", config.version)));
    }
    let novel = config.rig.novel.resolve().map_err(|e| fail("novel", e.to_string()))?;
    let sources = match &config.rig.sources {
        SourceSpec::Ring { ring } => ring_poses(ring),
        SourceSpec::List { poses } => poses.iter().map(PoseSpec::resolve).collect(),
    }
    .map_err(|e| fail("sources", e.to_string()))?;
    if sources.is_empty() {
        return Err(fail("sources", "at least one source view is required".into()));
    }
    let (t_near, t_far) = config.depth_range;
    if !(t_near > 0.0 && t_near < t_far && t_far.is_finite()) {
        return Err(fail("depth_range", format!("invalid depth range [{t_near}, {t_far}]")));
    }
    config.sampling.validate(sources.len()).map_err(|e| fail("sampling", e.to_string()))?;
    config.network.validate().map_err(|e| fail("network", e.to_string()))?;
    config.hardware.validate().map_err(|e| fail("hardware", e.to_string()))?;
    validate_candidates(&config.scheduler.candidates).map_err(|e| fail("candidates", e.to_string()))?;
    if config.scheduler.focused_bins == 0 {
        return Err(fail("focused_bins", "focused_bins must be at least 1".into()));
    }
    let f = &config.features;
    if f.height < 2 || f.width < 2 || f.channels == 0 || f.bytes_per_feature == 0 {
        return Err(fail("features", "feature layout must be at least 2x2 with nonzero channels and bytes".into()));
    }
    if f.channels != config.network.feature_channels {
        return Err(fail(
            "feature_channels",
            format!("network input width {} differs from feature channels {}", config.network.feature_channels, f.channels),
        ));
    }
    if config.evaluator == Evaluator::Neural {
        if f.channels < 4 {
            return Err(fail("channels", "the neural evaluator needs at least 4 feature channels".into()));
        }
        let need = config.sampling.n_coarse + config.sampling.n_max;
        if config.network.n_max < need {
            return Err(fail("n_max", format!("network n_max must hold coarse plus focused points ({need})")));
        }
    }
    if config.reference_points.is_some_and(|n| n == 0) {
        return Err(fail("reference_points", "reference_points must be at least 1".into()));
    }
    Ok(Experiment { config, scene, novel, sources })
}

impl ExperimentConfig {
    /// Copy with `views` ring sources; the coarse view count is clamped.
    pub fn with_views(&self, views: usize) -> Result<Self, String> {
        let mut c = self.clone();
        match &mut c.rig.sources {
            SourceSpec::Ring { ring } => ring.count = views,
            SourceSpec::List { .. } => return Err("view sweeps need ring sources".into()),
        }
        c.sampling.coarse_views = c.sampling.coarse_views.min(views);
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_lookup() {
        let t = "{\n  \"version\": 1,\n  \"seed\": 3\n}";
        assert_eq!(line_of(t, "seed"), Some(3));
        assert_eq!(line_of(t, "nope"), None);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = parse_config("{\n\"version\": 1,\n\"bogus\": 2\n}", Path::new("c.json")).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("c.json:3:"));
    }
}
