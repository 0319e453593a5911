//! Declarative job configuration (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geo::Role;
use crate::registry::CategoryRegistry;

fn default_tile_size() -> u32 {
    512
}

fn default_true() -> bool {
    true
}

/// A registry given inline or as a path to a TOML/JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegistrySource {
    File(PathBuf),
    Inline(CategoryRegistry),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFiles {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl PointFiles {
    pub fn get(&self, role: Role) -> Option<&PathBuf> {
        match role {
            Role::Train => self.train.as_ref(),
            Role::Valid => self.valid.as_ref(),
            Role::Test => self.test.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub original: PathBuf,
    pub semantic: PathBuf,
    pub sequential: PathBuf,
    pub points: PointFiles,
    pub output: PathBuf,
    pub registry: RegistrySource,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
    /// Zero-based band indices of the original image to keep; all when absent.
    #[serde(default)]
    pub channels: Option<Vec<u16>>,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub fail_on_overlap: bool,
    #[serde(default = "default_true")]
    pub train_may_overlap: bool,
    #[serde(default)]
    pub merged_semantic: bool,
    /// Sequential raster values that mark stuff rather than thing instances.
    #[serde(default)]
    pub stuff_sequential_values: BTreeSet<u32>,
    /// Worker threads; 0 picks the number of CPUs.
    #[serde(default)]
    pub workers: usize,
}

impl JobConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.original);
        fix(&mut self.semantic);
        fix(&mut self.sequential);
        fix(&mut self.output);
        for p in [
            &mut self.points.train,
            &mut self.points.valid,
            &mut self.points.test,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let RegistrySource::File(p) = &mut self.registry {
            fix(p);
        }
    }

    pub fn load_registry(&self) -> Result<CategoryRegistry, PipelineError> {
        let reg = match &self.registry {
            RegistrySource::File(p) => CategoryRegistry::load(p)?,
            RegistrySource::Inline(r) => CategoryRegistry::new(r.void_label, r.categories.clone())?,
        };
        reg.validate_panoptic()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tile_size < 2 || !self.tile_size.is_multiple_of(2) {
            return Err(PipelineError::Config(format!(
                "tile_size {} must be even and at least 2",
                self.tile_size
            )));
        }
        if Role::ALL.iter().all(|&r| self.points.get(r).is_none()) {
            return Err(PipelineError::Config("no point files given".into()));
        }
        Ok(())
    }
}
