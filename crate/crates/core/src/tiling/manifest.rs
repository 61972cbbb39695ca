//! JSON manifest shared with the training side.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::{cross_split_overlaps, Split, SplitFractions, TileManifest, TileRecord};
use super::{TileSpec, TilingError, Window};
use crate::raster::GridGeometry;

pub const MANIFEST_SCHEMA: &str = "fieldpipe-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub tiles: usize,
    pub per_split: BTreeMap<Split, usize>,
    pub realized_fractions: [f64; 3],
    /// Overlapping tile pairs that ended up in different splits.
    pub cross_split_overlaps: usize,
}

impl ManifestSummary {
    pub fn of(m: &TileManifest) -> Self {
        Self {
            tiles: m.records.len(),
            per_split: Split::ALL.iter().map(|&s| (s, m.count(s))).collect(),
            realized_fractions: m.realized_fractions(),
            cross_split_overlaps: cross_split_overlaps(m),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    schema: String,
    spec: TileSpec,
    source_geometry: GridGeometry,
    fractions: [f64; 3],
    cell_size: usize,
    seed: u64,
    records: Vec<RecordFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<ManifestSummary>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordFile {
    tile_id: String,
    window: [usize; 3],
    geo_bounds: [f64; 4],
    split: Split,
    grid_cell: [usize; 2],
    image_path: String,
    mask_path: String,
}

impl TileManifest {
    pub fn to_json(&self) -> String {
        let file = ManifestFile {
            schema: MANIFEST_SCHEMA.to_string(),
            spec: self.spec,
            source_geometry: self.source_geometry,
            fractions: self.fractions.as_array(),
            cell_size: self.cell_size,
            seed: self.seed,
            records: self
                .records
                .iter()
                .map(|r| RecordFile {
                    tile_id: r.tile_id.clone(),
                    window: [r.window.col_off, r.window.row_off, r.window.size],
                    geo_bounds: r.geo_bounds,
                    split: r.split,
                    grid_cell: [r.grid_cell.0, r.grid_cell.1],
                    image_path: r.image_path.clone(),
                    mask_path: r.mask_path.clone(),
                })
                .collect(),
            summary: Some(ManifestSummary::of(self)),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TilingError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| TilingError::Malformed(e.to_string()))?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
        if found != MANIFEST_SCHEMA {
            return Err(TilingError::SchemaVersion {
                found: found.to_string(),
                expected: MANIFEST_SCHEMA.to_string(),
            });
        }
        let file: ManifestFile = serde_json::from_value(value).map_err(|e| TilingError::Malformed(e.to_string()))?;
        file.spec.validate()?;
        file.source_geometry.validate()?;
        let [train, val, test] = file.fractions;
        let fractions = SplitFractions::new(train, val, test)?;
        let mut ids = HashSet::new();
        let mut cell_split: BTreeMap<(usize, usize), Split> = BTreeMap::new();
        let mut records = Vec::with_capacity(file.records.len());
        for r in file.records {
            if !ids.insert(r.tile_id.clone()) {
                return Err(TilingError::DuplicateTile(r.tile_id));
            }
            let window = Window { col_off: r.window[0], row_off: r.window[1], size: r.window[2] };
            if !window.fits(&file.source_geometry) {
                return Err(TilingError::OutOfBounds(window, file.source_geometry.width, file.source_geometry.height));
            }
            let cell = (r.grid_cell[0], r.grid_cell[1]);
            if *cell_split.entry(cell).or_insert(r.split) != r.split {
                return Err(TilingError::Malformed(format!("location cell {cell:?} spans several splits")));
            }
            records.push(TileRecord {
                tile_id: r.tile_id,
                window,
                geo_bounds: r.geo_bounds,
                split: r.split,
                image_path: r.image_path,
                mask_path: r.mask_path,
                grid_cell: cell,
            });
        }
        Ok(TileManifest {
            spec: file.spec,
            source_geometry: file.source_geometry,
            records,
            fractions,
            cell_size: file.cell_size,
            seed: file.seed,
        })
    }
}

pub fn write_manifest(manifest: &TileManifest, path: impl AsRef<Path>) -> Result<(), TilingError> {
    let path = path.as_ref();
    std::fs::write(path, manifest.to_json())
        .map_err(|source| TilingError::Io { path: path.display().to_string(), source })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<TileManifest, TilingError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| TilingError::Io { path: path.display().to_string(), source })?;
    TileManifest::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::{assign_splits, plan_tiles, EdgePolicy};

    fn manifest() -> TileManifest {
        let g = GridGeometry::new(500_000.0, 5_800_000.0, 10.0, 1024, 768, 32631).unwrap();
        let spec = TileSpec::new(256, 128, EdgePolicy::SnapToEdge).unwrap();
        let w = plan_tiles(&g, &spec);
        assign_splits(&w, &g, &spec, SplitFractions::default(), 2, 11).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let m = manifest();
        let text = m.to_json();
        assert!(text.contains("\"schema\": \"fieldpipe-manifest/1\""));
        assert!(text.contains("\"edge_policy\": \"snap-to-edge\""));
        assert_eq!(TileManifest::from_json(&text).unwrap(), m);
    }

    #[test]
    fn unknown_schema_version() {
        let text = manifest().to_json().replace("fieldpipe-manifest/1", "fieldpipe-manifest/9");
        assert!(matches!(TileManifest::from_json(&text), Err(TilingError::SchemaVersion { .. })));
    }

    #[test]
    fn duplicate_tile_id_rejected() {
        let m = manifest();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        let first = v["records"][0].clone();
        v["records"].as_array_mut().unwrap().push(first);
        let text = serde_json::to_string(&v).unwrap();
        assert!(matches!(TileManifest::from_json(&text), Err(TilingError::DuplicateTile(_))));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(TileManifest::from_json("{"), Err(TilingError::Malformed(_))));
    }
}
