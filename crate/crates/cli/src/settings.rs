//! Config files with `key=value` overrides.

use std::path::Path;

use avse_core::{Error, Result};
use serde::de::DeserializeOwned;
use toml::{Table, Value};

pub fn read_table(path: Option<&Path>) -> Result<Table> {
    let Some(path) = path else { return Ok(Table::new()) };
    let text = std::fs::read_to_string(path).map_err(|e| crate::out::io_err(path, e))?;
    text.parse::<Table>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Parses `value` as a TOML value, falling back to a bare string.
pub fn parse_value(value: &str) -> Value {
    format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()))
}

/// Sets a dotted `key` such as `channel.loss_rate`.
pub fn set(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {key:?}")))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{p} in {key:?} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Applies `key=value` pairs in order.
pub fn apply(table: &mut Table, pairs: &[String]) -> Result<()> {
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        set(table, k.trim(), parse_value(v.trim()))?;
    }
    Ok(())
}

pub fn resolve<T: DeserializeOwned>(table: Table) -> Result<T> {
    Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides() {
        let mut t: Table = "t_i = 1.0\n[channel]\nname = \"5g\"\n".parse().unwrap();
        apply(&mut t, &["channel.loss_rate=0.1".into(), "t_i = 2".into(), "mode=live".into()]).unwrap();
        assert_eq!(t["channel"]["loss_rate"].as_float(), Some(0.1));
        assert_eq!(t["channel"]["name"].as_str(), Some("5g"));
        assert_eq!(t["t_i"].as_integer(), Some(2));
        assert_eq!(t["mode"].as_str(), Some("live"));
        assert!(apply(&mut t, &["t_i.x=1".into()]).is_err());
        assert!(apply(&mut t, &["novalue".into()]).is_err());
    }
}
