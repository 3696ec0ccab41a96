//! Map sources: `builtin:empty-<W>x<H>`, `builtin:random-<W>x<H>[-<pct>[-<seed>]]`
//! (defaults 20% obstacles, seed 1), or a path to a MovingAI `.map` file.

use std::fs;

use mapfrd_core::grid::GridMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("unknown builtin map `{0}`")]
    Builtin(String),
    #[error("reading `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing `{path}`: {reason}")]
    Parse { path: String, reason: String },
}

fn dims(s: &str) -> Option<(u32, u32)> {
    let (w, h) = s.split_once('x')?;
    let (w, h) = (w.parse().ok()?, h.parse().ok()?);
    (w > 0 && h > 0).then_some((w, h))
}

pub fn load_map(source: &str) -> Result<GridMap, MapError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let unknown = || MapError::Builtin(name.to_string());
        if let Some(rest) = name.strip_prefix("empty-") {
            let (w, h) = dims(rest).ok_or_else(unknown)?;
            return Ok(GridMap::empty(w, h));
        }
        if let Some(rest) = name.strip_prefix("random-") {
            let mut parts = rest.split('-');
            let (w, h) = parts.next().and_then(dims).ok_or_else(unknown)?;
            let pct = parts.next().map_or(Ok(20), |p| p.parse::<u32>()).map_err(|_| unknown())?;
            let seed = parts.next().map_or(Ok(1), |p| p.parse::<u64>()).map_err(|_| unknown())?;
            if parts.next().is_some() || pct >= 100 {
                return Err(unknown());
            }
            return Ok(GridMap::random(w, h, pct, seed));
        }
        return Err(unknown());
    }
    let text = fs::read_to_string(source).map_err(|source_err| MapError::Io {
        path: source.to_string(),
        source: source_err,
    })?;
    GridMap::parse(&text).map_err(|e| MapError::Parse {
        path: source.to_string(),
        reason: e.to_string(),
    })
}

/// Short label for CSV rows: the builtin name or the file stem.
pub fn map_label(source: &str) -> String {
    match source.strip_prefix("builtin:") {
        Some(name) => name.to_string(),
        None => std::path::Path::new(source)
            .file_stem()
            .map_or_else(|| source.to_string(), |s| s.to_string_lossy().into_owned()),
    }
}
