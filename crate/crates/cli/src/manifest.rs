//! Workspace manifest: named law and grid artifacts plus default budgets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats::{load_law, read_grid, read_json};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
}

/// Budgets used when a command leaves them out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefaultBudgets {
    pub compute: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub data: Option<u64>,
    pub seq_len: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub laws: Vec<Artifact>,
    #[serde(default)]
    pub grids: Vec<Artifact>,
    #[serde(default)]
    pub defaults: DefaultBudgets,
    #[serde(skip)]
    root: PathBuf,
}

impl WorkspaceManifest {
    /// Read and fully validate: names unique, every artifact present and
    /// parseable.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut m: WorkspaceManifest = read_json(path)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CliError::format(path, format!("schema_version {} unsupported", m.schema_version)));
        }
        for (kind, list) in [("law", &m.laws), ("grid", &m.grids)] {
            let mut seen = BTreeSet::new();
            for a in list {
                if !seen.insert(a.name.as_str()) {
                    return Err(CliError::format(path, format!("duplicate {kind} name {:?}", a.name)));
                }
            }
        }
        for a in &m.laws {
            load_law(&m.resolve(&a.path).to_string_lossy())?;
        }
        for a in &m.grids {
            read_grid(&m.resolve(&a.path))?;
        }
        Ok(m)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Path of the law called `name`, if the manifest has one.
    pub fn law(&self, name: &str) -> Option<PathBuf> {
        self.laws.iter().find(|a| a.name == name).map(|a| self.resolve(&a.path))
    }

    pub fn grid(&self, name: &str) -> Option<PathBuf> {
        self.grids.iter().find(|a| a.name == name).map(|a| self.resolve(&a.path))
    }
}
