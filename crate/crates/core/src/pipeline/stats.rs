use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convert::set_title;
use super::PipelineError;
use crate::dataset::{read_png, read_split, set_folder};
use crate::geo::Role;
use crate::metrics::report::render_table;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub label: u32,
    pub name: String,
    /// `None` for the void label.
    pub isthing: Option<bool>,
    /// Instance count; `None` for stuff and void.
    pub polygons: Option<u64>,
    pub pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetStats {
    pub role: Role,
    pub images: u64,
    pub instances: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub categories: Vec<CategoryStats>,
    pub sets: Vec<SetStats>,
}

impl StatsReport {
    pub fn category_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .categories
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    c.label.to_string(),
                    match c.isthing {
                        Some(true) => "Thing",
                        Some(false) => "Stuff",
                        None => "-",
                    }
                    .to_string(),
                    c.polygons
                        .map_or_else(|| "-".to_string(), |p| p.to_string()),
                    c.pixels.to_string(),
                ]
            })
            .collect();
        render_table(
            &[
                "Category",
                "Label",
                "Thing/Stuff",
                "Number of polygons",
                "Number of pixels",
            ],
            &rows,
        )
    }

    pub fn set_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .sets
            .iter()
            .map(|s| {
                vec![
                    set_title(s.role).to_string(),
                    s.images.to_string(),
                    s.instances.to_string(),
                ]
            })
            .collect();
        render_table(&["Set", "Number of tiles", "Number of instances"], &rows)
    }

    pub fn to_text(&self) -> String {
        format!("{}\n{}", self.category_table(), self.set_table())
    }
}

/// Per-category instance and pixel counts over all splits, and per-split totals.
pub fn stats(root: &Path) -> Result<StatsReport, PipelineError> {
    let mut polygons: BTreeMap<u32, u64> = BTreeMap::new();
    let mut pixels: BTreeMap<u32, u64> = BTreeMap::new();
    let mut sets = Vec::new();
    let mut names: BTreeMap<u32, (String, bool)> = BTreeMap::new();
    let mut void_label = 0;
    for role in Role::ALL {
        let docs = read_split(root, role)?;
        void_label = docs.semantic.void_label;
        for c in &docs.semantic.categories {
            names.insert(c.id, (c.name.clone(), c.isthing == 1));
        }
        for a in &docs.instances.annotations {
            *polygons.entry(a.category_id).or_default() += 1;
        }
        let dir = root.join(set_folder("semantic", role));
        let counts: Vec<BTreeMap<u32, u64>> = docs
            .semantic
            .annotations
            .par_iter()
            .map(|a| -> Result<_, PipelineError> {
                let r = read_png(&dir.join(&a.file_name))?;
                let mut m = BTreeMap::new();
                for l in r
                    .labels()
                    .map_err(|e| PipelineError::geo(&a.file_name, e))?
                {
                    *m.entry(l).or_default() += 1;
                }
                Ok(m)
            })
            .collect::<Result<_, _>>()?;
        for m in counts {
            for (l, n) in m {
                *pixels.entry(l).or_default() += n;
            }
        }
        sets.push(SetStats {
            role,
            images: docs.instances.images.len() as u64,
            instances: docs.instances.annotations.len() as u64,
        });
    }

    let mut categories = vec![CategoryStats {
        label: void_label,
        name: "Background".into(),
        isthing: None,
        polygons: None,
        pixels: pixels.get(&void_label).copied().unwrap_or(0),
    }];
    for (&label, (name, isthing)) in &names {
        categories.push(CategoryStats {
            label,
            name: name.clone(),
            isthing: Some(*isthing),
            polygons: isthing.then(|| polygons.get(&label).copied().unwrap_or(0)),
            pixels: pixels.get(&label).copied().unwrap_or(0),
        });
    }
    for (&label, &n) in &pixels {
        if label != void_label && !names.contains_key(&label) {
            categories.push(CategoryStats {
                label,
                name: format!("unregistered {label}"),
                isthing: None,
                polygons: None,
                pixels: n,
            });
        }
    }
    categories.sort_by_key(|c| c.label);
    Ok(StatsReport { categories, sets })
}
