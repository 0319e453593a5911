//! Category registry: numeric label, name, and thing/stuff flag per class.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate category label {0}")]
    DuplicateLabel(u32),
    #[error("void label {0} must not be registered as a category")]
    VoidRegistered(u32),
    #[error("registry needs at least one thing and one stuff category")]
    MissingKind,
    #[error("registry is empty")]
    Empty,
    #[error("cannot read registry {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: u32,
    pub name: String,
    pub isthing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRegistry {
    #[serde(default)]
    pub void_label: u32,
    pub categories: Vec<Category>,
}

impl CategoryRegistry {
    /// Builds and validates a registry; categories are kept sorted by label.
    pub fn new(void_label: u32, mut categories: Vec<Category>) -> Result<Self, RegistryError> {
        categories.sort_by_key(|c| c.label);
        let reg = Self {
            void_label,
            categories,
        };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.categories.is_empty() {
            return Err(RegistryError::Empty);
        }
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if !seen.insert(c.label) {
                return Err(RegistryError::DuplicateLabel(c.label));
            }
            if c.label == self.void_label {
                return Err(RegistryError::VoidRegistered(c.label));
            }
        }
        Ok(())
    }

    /// Stricter check required before writing panoptic output.
    pub fn validate_panoptic(&self) -> Result<(), RegistryError> {
        self.validate()?;
        if self.things().next().is_none() || self.stuff().next().is_none() {
            return Err(RegistryError::MissingKind);
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let reg: CategoryRegistry = toml::from_str(text).map_err(|e| RegistryError::Load {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        Self::new(reg.void_label, reg.categories)
    }

    /// Loads a TOML or JSON registry file (chosen by extension).
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let load_err = |message: String| RegistryError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let reg: CategoryRegistry = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| load_err(e.to_string()))?
        };
        Self::new(reg.void_label, reg.categories)
    }

    pub fn get(&self, label: u32) -> Option<&Category> {
        self.categories
            .binary_search_by_key(&label, |c| c.label)
            .ok()
            .map(|i| &self.categories[i])
    }

    pub fn is_thing(&self, label: u32) -> bool {
        self.get(label).is_some_and(|c| c.isthing)
    }

    pub fn is_stuff(&self, label: u32) -> bool {
        self.get(label).is_some_and(|c| !c.isthing)
    }

    pub fn things(&self) -> impl Iterator<Item = &Category> {
        self.categories.iter().filter(|c| c.isthing)
    }

    pub fn stuff(&self) -> impl Iterator<Item = &Category> {
        self.categories.iter().filter(|c| !c.isthing)
    }

    pub fn name(&self, label: u32) -> Option<&str> {
        self.get(label).map(|c| c.name.as_str())
    }

    /// Label used for the single merged "things" class: one past the largest stuff label.
    pub fn merged_things_label(&self) -> u32 {
        self.stuff().map(|c| c.label).max().map_or(1, |m| m + 1)
    }
}
