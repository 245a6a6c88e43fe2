use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use serde_json::{Map, Value};

use crate::config::RunConfig;

/// Writes `contents` to `path` through a temporary file and a rename, or to
/// stdout when no path is given.
pub fn write_atomic(path: Option<&Path>, contents: &[u8]) -> anyhow::Result<()> {
    let Some(path) = path else {
        io::stdout().write_all(contents)?;
        return Ok(());
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// A JSON document with the run config under `run_config` and the payload
/// entries after it.
pub fn envelope(cfg: &RunConfig, entries: Vec<(&str, Value)>) -> Value {
    let mut map = Map::new();
    map.insert("run_config".into(), cfg.to_json());
    for (k, v) in entries {
        map.insert(k.into(), v);
    }
    Value::Object(map)
}

pub fn write_json(path: Option<&Path>, doc: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV text whose first line is `# run-config: {...}`.
pub fn csv_with_config<S: serde::Serialize>(cfg: &RunConfig, rows: &[S]) -> anyhow::Result<Vec<u8>> {
    let mut out = format!("# run-config: {}\n", serde_json::to_string(&cfg.to_json())?).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(out)
}
