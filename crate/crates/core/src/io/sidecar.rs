//! Per-primitive score channels stored as JSON next to a PLY.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::ScoreChannels;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deficiency: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    densify: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prune: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<Vec<f64>>,
}

/// `scene.ply` → `scene.scores.json`.
pub fn sidecar_path(ply: impl AsRef<Path>) -> PathBuf {
    ply.as_ref().with_extension("scores.json")
}

pub fn encode_scores(scores: &ScoreChannels, count: usize) -> Result<String> {
    let s = Sidecar {
        count,
        deficiency: scores.deficiency.clone(),
        densify: scores.densify.clone(),
        prune: scores.prune.clone(),
        weight: scores.weight.clone(),
    };
    let mut text = serde_json::to_string(&s).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_scores(path: impl AsRef<Path>, scores: &ScoreChannels, count: usize) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_scores(scores, count)?).map_err(|e| Error::io(path, e))
}

/// Reads a sidecar and checks it covers exactly `count` primitives.
pub fn read_scores(path: impl AsRef<Path>, count: usize) -> Result<ScoreChannels> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if s.count != count {
        return Err(Error::format(
            path,
            format!("scores cover {} primitives, cloud has {count}", s.count),
        ));
    }
    let scores = ScoreChannels {
        deficiency: s.deficiency,
        densify: s.densify,
        prune: s.prune,
        weight: s.weight,
    };
    scores.check_len(count).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(scores)
}
