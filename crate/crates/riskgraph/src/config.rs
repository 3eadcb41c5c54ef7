//! Pipeline configuration (TOML or JSON).

use std::fs;
use std::path::{Path, PathBuf};

use riskgraph_core::classify::SvmParams;
use riskgraph_core::graphs::GridSpec;
use riskgraph_core::ingest::synth::SynthSpec;
use riskgraph_core::ingest::DEFAULT_SPAN;
use riskgraph_core::kernels::NhgkParams;
use riskgraph_core::labels::LabelParams;
use riskgraph_core::scenes::ExtractParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, RunError};
use crate::io::artifact::digest_of;
use crate::io::csv_log::LogSchema;

/// Seeds that must be written out explicitly; `synth.seed` only applies
/// when a `[synth]` table is present.
const REQUIRED_SEEDS: &[&[&str]] = &[
    &["labels", "seed"],
    &["kernels", "nhgk", "seed"],
    &["cv", "seed"],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Driver identifier carried into the report.
    pub driver: String,
    pub paths: Paths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub extract: ExtractParams,
    #[serde(default)]
    pub grid: GridSpec,
    pub labels: LabelParams,
    pub kernels: KernelsConfig,
    #[serde(default)]
    pub svm: SvmParams,
    pub cv: CvConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Driving log CSV; with `[synth]` it is where the generated log goes.
    pub log: Option<PathBuf>,
    /// Column mapping of the log; the canonical names when absent.
    pub schema: Option<PathBuf>,
    /// Directory receiving every intermediate and the report.
    pub work_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub spec: SynthSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub smooth_span: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            smooth_span: DEFAULT_SPAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsConfig {
    #[serde(default)]
    pub spgk: SpgkConfig,
    pub nhgk: NhgkParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpgkConfig {
    pub normalize: bool,
}

impl Default for SpgkConfig {
    fn default() -> Self {
        Self { normalize: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "five")]
    pub folds: usize,
    pub seed: u64,
}

fn five() -> usize {
    5
}

/// A configuration with its paths resolved to usable locations.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub log: PathBuf,
    pub schema: Option<PathBuf>,
    pub work_dir: PathBuf,
}

fn present(value: &Value, path: &[&str]) -> bool {
    path.iter()
        .try_fold(value, |v, key| v.get(key))
        .is_some_and(|v| !v.is_null())
}

impl PipelineConfig {
    /// Parses TOML, or JSON when the text starts with `{`, and checks that
    /// every seed is explicit.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?
        };
        let mut required: Vec<&[&str]> = REQUIRED_SEEDS.to_vec();
        if present(&value, &["synth"]) {
            required.push(&["synth", "seed"]);
        }
        for path in required {
            if !present(&value, path) {
                return Err(RunError::Config(format!(
                    "missing required field `{}`",
                    path.join(".")
                )));
            }
        }
        let config: PipelineConfig =
            serde_json::from_value(value).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RunError::Config(m.to_owned()));
        if self.driver.trim().is_empty() {
            return bad("`driver` must not be empty");
        }
        let span = self.ingest.smooth_span;
        if span < 3 || span.is_multiple_of(2) {
            return bad("`ingest.smooth_span` must be odd and at least 3");
        }
        if self.cv.folds < 2 {
            return bad("`cv.folds` must be at least 2");
        }
        if self.labels.k_min < 2 || self.labels.k_min > self.labels.k_max {
            return bad("`labels.k_min` must be at least 2 and not above `labels.k_max`");
        }
        self.kernels
            .nhgk
            .validate()
            .map_err(|m| RunError::Config(format!("kernels.nhgk: {m}")))?;
        self.grid
            .validate()
            .map_err(|e| RunError::Config(format!("grid: {e}")))?;
        Ok(())
    }

    /// Digest of every stage parameter. Paths are left out so a run is
    /// identified by what it computes, not by where it writes.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        digest_of(&c)
    }

    /// Reads a config file and resolves its paths: relative paths are taken
    /// against the config's directory, except a synthesised log, which lives
    /// in the work directory.
    pub fn load(path: &Path, work_dir: Option<&Path>) -> Result<LoadedConfig> {
        let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let work_dir = match (work_dir, &config.paths.work_dir) {
            (Some(w), _) => w.to_path_buf(),
            (None, Some(w)) => base.join(w),
            (None, None) => {
                return Err(RunError::Config(
                    "missing required field `paths.work_dir`".into(),
                ))
            }
        };
        let log = match (&config.paths.log, &config.synth) {
            (Some(l), Some(_)) => work_dir.join(l),
            (Some(l), None) => base.join(l),
            (None, _) => {
                return Err(RunError::Config(
                    "missing required field `paths.log`".into(),
                ))
            }
        };
        let schema = config.paths.schema.as_ref().map(|s| base.join(s));
        Ok(LoadedConfig {
            config,
            log,
            schema,
            work_dir,
        })
    }
}

impl LoadedConfig {
    pub fn schema(&self) -> Result<LogSchema> {
        match &self.schema {
            None => Ok(LogSchema::default()),
            Some(p) => load_schema(p),
        }
    }
}

pub fn load_schema(path: &Path) -> Result<LogSchema> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::data(path, e))
}
