//! Batch front-end: TOML configs in, CSV/JSON artifacts out.

pub mod config;
pub mod output;
pub mod protocol;
pub mod run;
pub mod scan;
pub mod series;

use std::path::Path;

use polariton_core::container::Container;
use serde_json::json;

use crate::run::RunError;

/// Header, metadata and block shapes of a container file, plus the
/// occupations when it is a checkpoint.
pub fn inspect(path: &Path) -> Result<serde_json::Value, RunError> {
    let c = Container::read(path).map_err(|e| crate::config::ConfigError::Invalid(format!("{}: {e}", path.display())))?;
    let blocks: Vec<_> = c.blocks().map(|(name, shape)| json!({ "name": name, "shape": shape })).collect();
    let mut out = json!({
        "kind": c.kind,
        "model_hash": c.model_hash,
        "grid": c.grid,
        "meta": c.meta,
        "blocks": blocks,
    });
    if let Ok((_, occ)) = c.block("occupations") {
        out["occupations"] = json!(occ);
        out["electron_count"] = json!(occ.iter().sum::<f64>());
    }
    Ok(out)
}
