//! Layered run configuration: reference defaults, then a config file, then
//! `--set key.path=value` overrides, then the typed command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dsi_core::data::RunConfig;
use toml::Value;

/// Merges `overlay` into `base`, recursing into tables.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses the right-hand side of `--set` as a TOML literal, falling back to a
/// bare string so `--set synth.languages=[\"xa\"]` and `--set x=abc` both work.
fn parse_literal(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("empty key segment in {path:?}");
        }
        let table = node
            .as_table_mut()
            .with_context(|| format!("{path:?}: {:?} is not a table", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    Ok(())
}

pub struct ConfigBuilder {
    tree: Value,
}

impl ConfigBuilder {
    pub fn reference() -> Result<Self> {
        let text = RunConfig::reference().to_toml_string()?;
        Ok(Self {
            tree: Value::Table(toml::from_str(&text)?),
        })
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let overlay: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge(&mut self.tree, Value::Table(overlay));
        Ok(self)
    }

    /// Applies one `key.path=value` assignment.
    pub fn assign(mut self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {assignment:?}"))?;
        set_path(&mut self.tree, key.trim(), parse_literal(raw.trim()))?;
        Ok(self)
    }

    pub fn set(mut self, key: &str, value: impl Into<Value>) -> Result<Self> {
        set_path(&mut self.tree, key, value.into())?;
        Ok(self)
    }

    pub fn build(self) -> Result<RunConfig> {
        let text = toml::to_string(&self.tree)?;
        Ok(RunConfig::from_toml_str(&text)?)
    }
}
