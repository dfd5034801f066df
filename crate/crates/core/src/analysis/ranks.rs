use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delta::DeltaArchive;
use crate::error::{Error, Result};

/// Group for layers that match no prefix.
pub const OTHER_GROUP: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGroup {
    pub name: String,
    pub prefixes: Vec<String>,
}

/// Ordered prefix rules; a layer joins the first group with a matching
/// prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGroupSpec {
    pub groups: Vec<LayerGroup>,
}

impl Default for LayerGroupSpec {
    /// The five functional groups of a Stable Diffusion UNet.
    fn default() -> Self {
        let group = |name: &str, prefix: &str| LayerGroup {
            name: name.to_string(),
            prefixes: vec![prefix.to_string()],
        };
        LayerGroupSpec {
            groups: vec![
                group("Conv_in", "conv_in"),
                group("Conv_out", "conv_out"),
                group("Down_blocks", "down_blocks"),
                group("Mid_block", "mid_block"),
                group("Up_blocks", "up_blocks"),
            ],
        }
    }
}

impl LayerGroupSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("group config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn assign<'a>(&'a self, layer: &str) -> &'a str {
        self.groups
            .iter()
            .find(|g| g.prefixes.iter().any(|p| layer.starts_with(p.as_str())))
            .map_or(OTHER_GROUP, |g| g.name.as_str())
    }
}

/// Mean effective rank per group: `t` for factors, `min(d, k)` for dense,
/// zero for unchanged. Groups without layers are omitted.
pub fn rank_table(archive: &DeltaArchive, spec: &LayerGroupSpec) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for layer in archive.layers.values() {
        let entry = sums.entry(spec.assign(&layer.name)).or_default();
        entry.0 += layer.effective_rank();
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(g, (total, n))| (g.to_string(), total as f64 / n as f64))
        .collect()
}
