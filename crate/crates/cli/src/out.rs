//! Output directory handling. Every file the CLI writes goes through
//! [`OutDir`], which only accepts plain file names below the root, and every
//! run ends with a `manifest.toml` listing the inputs and outputs.

use std::fs;
use std::path::{Component, Path, PathBuf};

use avse_core::{Error, Result};
use toml::{Table, Value};

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    /// Path for `name` inside the directory. The manifest records top-level
    /// entries only, so nested files show up as their directory.
    pub fn file(&mut self, name: &str) -> Result<PathBuf> {
        let rel = Path::new(name);
        let nested = rel.components().all(|c| matches!(c, Component::Normal(_)));
        if !nested || name.is_empty() {
            return Err(Error::InvalidInput(format!("output name {name:?} escapes the output directory")));
        }
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let top = match name.split_once('/') {
            Some((dir, _)) => format!("{dir}/"),
            None => name.to_string(),
        };
        if !self.written.contains(&top) {
            self.written.push(top);
        }
        Ok(path)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.file(name)?;
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    /// Writes `manifest.toml`: tool version, command, arguments, seed,
    /// `extra` keys and the list of files written so far.
    pub fn finish(mut self, command: &str, seed: Option<u64>, extra: Table) -> Result<()> {
        let mut m = Table::new();
        m.insert("tool".into(), Value::String(env!("CARGO_PKG_NAME").into()));
        m.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
        m.insert("command".into(), Value::String(command.into()));
        let args: Vec<Value> = std::env::args().skip(1).map(Value::String).collect();
        m.insert("args".into(), Value::Array(args));
        if let Some(seed) = seed {
            m.insert("seed".into(), Value::Integer(seed as i64));
        }
        m.extend(extra);
        let mut outputs: Vec<Value> = self.written.iter().cloned().map(Value::String).collect();
        outputs.push(Value::String("manifest.toml".into()));
        m.insert("outputs".into(), Value::Array(outputs));
        let text = toml::to_string(&m).map_err(|e| Error::Config(e.to_string()))?;
        self.write("manifest.toml", text)
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source: e }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_escaping_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        for bad in ["../x", "/tmp/x", "a/../../x", ""] {
            assert!(out.file(bad).is_err(), "{bad}");
        }
        assert!(out.file("frames/0001.png").unwrap().starts_with(dir.path()));
    }
}
