use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use schemagraph::model::TrainConfig;
use serde::Deserialize;

/// Optional run configuration file. Command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kg: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub grounded: Option<PathBuf>,
    pub graphs: Option<PathBuf>,
    pub dev_graphs: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub model: Option<TrainConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg.relative_to(path.parent().unwrap_or(Path::new("."))))
    }

    /// Resolves relative paths against the directory of the config file.
    fn relative_to(mut self, base: &Path) -> Self {
        for p in [
            &mut self.kg,
            &mut self.dataset,
            &mut self.dev,
            &mut self.grounded,
            &mut self.graphs,
            &mut self.dev_graphs,
            &mut self.embeddings,
            &mut self.vectors,
            &mut self.checkpoint,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }
}
