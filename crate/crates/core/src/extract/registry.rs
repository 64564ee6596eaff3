use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::viewnet::{load_checkpoint, ViewNet};

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub checkpoint: PathBuf,
    pub model: ViewNet<f32>,
}

/// One generator per class. Immutable once built: every checkpoint is loaded
/// (and so validated) when it is registered.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a registry from `(class, checkpoint path)` pairs.
    pub fn from_paths<I, S, P>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, P)>,
        S: Into<String>,
        P: Into<PathBuf>,
    {
        let mut reg = Self::new();
        for (class, path) in pairs {
            let path = path.into();
            let model = load_checkpoint(&path)?;
            reg.insert(class.into(), path, model)?;
        }
        Ok(reg)
    }

    /// Registers an already-loaded model.
    pub fn insert(
        &mut self,
        class: String,
        checkpoint: PathBuf,
        model: ViewNet<f32>,
    ) -> Result<()> {
        if self.entries.contains_key(&class) {
            return Err(Error::Config(format!(
                "class `{class}` is registered twice"
            )));
        }
        self.entries
            .insert(class, RegistryEntry { checkpoint, model });
        Ok(())
    }

    /// Reads a `class = checkpoint path` text file. Relative paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc = KvDoc::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_paths(doc.entries().map(|(k, v)| (k.to_string(), base.join(v))))
    }

    pub fn get(&self, class: &str) -> Option<&RegistryEntry> {
        self.entries.get(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Picks the generator for `label`, or for `override_class` when given (used
/// to push one class's image through another class's generator).
pub fn route<'a>(
    label: &str,
    registry: &'a ModelRegistry,
    override_class: Option<&str>,
) -> Result<&'a ViewNet<f32>> {
    let class = override_class.unwrap_or(label);
    registry
        .get(class)
        .map(|e| &e.model)
        .ok_or_else(|| Error::NoModel(class.to_string()))
}
