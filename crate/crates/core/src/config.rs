//! Application configuration (TOML).
//!
//! All model identities and endpoints live here, never in code. Relative
//! paths (mock scripts, dataset, template dir, output dir) resolve against
//! the config file's directory. Secrets enter only through env vars named
//! in the config, so audit files never contain tokens.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{FixedClock, SharedClock, SystemClock};
use crate::gateway::{BackendKind, Gateway};
use crate::orchestrator::{Pipeline, PipelineConfig};
use crate::prompts::PromptRegistry;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which clock the pipeline runs on. `fixed` pins every timestamp to one
/// instant, which makes audit trails, `{time}` bindings and runtime cells
/// fully reproducible with mock backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockChoice {
    #[default]
    System,
    Fixed,
}

impl ClockChoice {
    pub fn build(&self) -> SharedClock {
        match self {
            ClockChoice::System => Arc::new(SystemClock),
            ClockChoice::Fixed => Arc::new(FixedClock::default_test_time()),
        }
    }
}

fn default_label() -> String {
    "run".into()
}

fn default_sample_n() -> usize {
    50
}

fn default_seed() -> u64 {
    17
}

fn default_concurrency() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    #[serde(default = "default_sample_n")]
    pub sample_n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            dataset_path: None,
            sample_n: default_sample_n(),
            seed: default_seed(),
            output_dir: None,
            concurrency_limit: default_concurrency(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PromptsSection {
    /// Template asset directory; defaults to the bundled assets.
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppConfig {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub clock: ClockChoice,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub prompts: PromptsSection,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: AppConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply_defaults();
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for backend in self.backends_mut() {
            if backend.kind == BackendKind::Mock {
                let mut p = PathBuf::from(&backend.endpoint_url);
                resolve(&mut p);
                backend.endpoint_url = p.to_string_lossy().into_owned();
            }
        }
        if let Some(p) = self.eval.dataset_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.eval.output_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.prompts.template_dir.as_mut() {
            resolve(p);
        }
    }

    /// Sampling temperatures when the config does not pin them: 0.0 for the
    /// judge, 0.2 everywhere else.
    fn apply_defaults(&mut self) {
        if let Some(judge) = self.pipeline.judge.as_mut() {
            judge.temperature.get_or_insert(0.0);
        }
        for backend in [&mut self.pipeline.backbone, &mut self.pipeline.captioner]
            .into_iter()
            .chain(self.pipeline.suite.iter_mut())
        {
            backend.temperature.get_or_insert(0.2);
        }
    }

    fn backends_mut(&mut self) -> impl Iterator<Item = &mut crate::gateway::BackendConfig> {
        std::iter::once(&mut self.pipeline.backbone)
            .chain(std::iter::once(&mut self.pipeline.captioner))
            .chain(self.pipeline.suite.iter_mut())
            .chain(self.pipeline.judge.iter_mut())
    }

    fn backends(&self) -> impl Iterator<Item = &crate::gateway::BackendConfig> {
        std::iter::once(&self.pipeline.backbone)
            .chain(std::iter::once(&self.pipeline.captioner))
            .chain(self.pipeline.suite.iter())
            .chain(self.pipeline.judge.iter())
    }

    /// Structural checks plus environment checks: every referenced auth
    /// env var must be resolvable now, not at call time.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for backend in self.backends() {
            if let Some(var) = &backend.auth_token_env {
                if std::env::var(var).is_err() {
                    return Err(ConfigError::Invalid(format!(
                        "backend {}: auth env var {var} is not set",
                        backend.backend_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Assembles the runtime this config describes: prompt registry,
    /// gateway on the configured clock, and the pipeline.
    pub fn build(&self) -> Result<RuntimeParts, ConfigError> {
        self.validate()?;
        let registry = match &self.prompts.template_dir {
            Some(dir) => PromptRegistry::load_dir(dir),
            None => PromptRegistry::load_default(),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let registry = Arc::new(registry);
        let gateway = Arc::new(
            Gateway::new(self.clock.build())
                .with_max_in_flight(self.eval.concurrency_limit.max(1) * 4),
        );
        let pipeline = Pipeline::new(self.pipeline.clone(), registry.clone(), gateway.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(RuntimeParts {
            registry,
            gateway,
            pipeline,
        })
    }
}

/// Everything needed to serve one config.
pub struct RuntimeParts {
    pub registry: Arc<PromptRegistry>,
    pub gateway: Arc<Gateway>,
    pub pipeline: Pipeline,
}
