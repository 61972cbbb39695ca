//! Overlapping tile plans and leakage-aware dataset splits.

mod manifest;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::ClassMask;
use std::path::Path;

use rayon::prelude::*;

use crate::raster::{write_class_mask, write_raster, GridGeometry, Raster, RasterError};

pub use manifest::{read_manifest, write_manifest, ManifestSummary, MANIFEST_SCHEMA};
pub use split::{assign_splits, cross_split_overlaps, Split, SplitFractions, TileManifest, TileRecord};

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("invalid tile spec: {0}")]
    Spec(String),
    #[error("invalid split fractions: {0}")]
    Fractions(String),
    #[error("split {0} received no location cells")]
    EmptySplit(Split),
    #[error("window {0:?} outside {1}x{2} source")]
    OutOfBounds(Window, usize, usize),
    #[error("image and mask grids differ")]
    Alignment,
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("manifest schema {found:?} not supported (expected {expected:?})")]
    SchemaVersion { found: String, expected: String },
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("duplicate tile id {0}")]
    DuplicateTile(String),
    #[error("manifest I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgePolicy {
    /// Clamp a final window per axis so the raster edge is covered.
    #[default]
    SnapToEdge,
    /// Only windows that fit entirely on the regular stride grid.
    DropPartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile_size: usize,
    pub stride: usize,
    pub edge_policy: EdgePolicy,
}

impl TileSpec {
    pub fn new(tile_size: usize, stride: usize, edge_policy: EdgePolicy) -> Result<Self, TilingError> {
        let spec = Self { tile_size, stride, edge_policy };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TilingError> {
        if self.stride == 0 || self.stride > self.tile_size {
            return Err(TilingError::Spec(format!(
                "need 0 < stride <= tile_size, got stride {} tile {}",
                self.stride, self.tile_size
            )));
        }
        Ok(())
    }
}

/// Square tile window in source pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Window {
    pub col_off: usize,
    pub row_off: usize,
    pub size: usize,
}

impl Window {
    pub fn intersects(&self, other: &Window) -> bool {
        self.col_off < other.col_off + other.size
            && other.col_off < self.col_off + self.size
            && self.row_off < other.row_off + other.size
            && other.row_off < self.row_off + self.size
    }

    pub fn tile_id(&self) -> String {
        format!("r{}_c{}", self.row_off, self.col_off)
    }

    pub fn fits(&self, g: &GridGeometry) -> bool {
        self.size > 0 && self.col_off + self.size <= g.width && self.row_off + self.size <= g.height
    }
}

fn axis_offsets(extent: usize, spec: &TileSpec) -> Vec<usize> {
    if extent < spec.tile_size {
        return Vec::new();
    }
    let last_fit = extent - spec.tile_size;
    let mut offs: Vec<usize> = (0..=last_fit).step_by(spec.stride).collect();
    if spec.edge_policy == EdgePolicy::SnapToEdge && offs.last() != Some(&last_fit) {
        offs.push(last_fit);
    }
    offs
}

/// Row-major windows at multiples of the stride.
///
/// A grid smaller than one tile yields an empty plan (logged).
pub fn plan_tiles(geometry: &GridGeometry, spec: &TileSpec) -> Vec<Window> {
    if geometry.width < spec.tile_size || geometry.height < spec.tile_size {
        log::warn!(
            "{}x{} grid is smaller than a {} px tile; no tiles planned",
            geometry.width,
            geometry.height,
            spec.tile_size
        );
        return Vec::new();
    }
    let cols = axis_offsets(geometry.width, spec);
    let rows = axis_offsets(geometry.height, spec);
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| Window { col_off: c, row_off: r, size: spec.tile_size }))
        .collect()
}

/// Crops the same window out of an image and its aligned mask.
pub fn extract_tile(image: &Raster, mask: &ClassMask, window: Window) -> Result<(Raster, ClassMask), TilingError> {
    if !image.geometry().same_grid(mask.geometry()) {
        return Err(TilingError::Alignment);
    }
    let g = image.geometry();
    if !window.fits(g) {
        return Err(TilingError::OutOfBounds(window, g.width, g.height));
    }
    let img = image.crop(window.col_off, window.row_off, window.size, window.size)?;
    let m = mask.crop(window.col_off, window.row_off, window.size, window.size)?;
    Ok((img, m))
}

/// Writes the image and mask GeoTIFF of every record, resolving record
/// paths against `base_dir`. Tiles are written in parallel.
pub fn export_tiles(
    image: &Raster,
    mask: &ClassMask,
    manifest: &TileManifest,
    base_dir: impl AsRef<Path>,
) -> Result<(), TilingError> {
    let base = base_dir.as_ref();
    if !image.geometry().same_grid(&manifest.source_geometry) {
        return Err(TilingError::Alignment);
    }
    let dirs: std::collections::BTreeSet<_> = manifest
        .records
        .iter()
        .flat_map(|r| [&r.image_path, &r.mask_path])
        .filter_map(|p| base.join(p).parent().map(Path::to_path_buf))
        .collect();
    for dir in dirs {
        std::fs::create_dir_all(&dir).map_err(|source| TilingError::Io { path: dir.display().to_string(), source })?;
    }
    manifest.records.par_iter().try_for_each(|r| {
        let (img, m) = extract_tile(image, mask, r.window)?;
        write_raster(&img, base.join(&r.image_path))?;
        write_class_mask(&m, base.join(&r.mask_path))?;
        Ok(())
    })
}

/// Ground area of one square tile in km².
pub fn tile_area_km2(tile_size: usize, pixel_size: f64) -> Result<f64, TilingError> {
    if tile_size == 0 || !(pixel_size > 0.0) {
        return Err(TilingError::Spec(format!(
            "tile size and pixel size must be positive, got {tile_size} and {pixel_size}"
        )));
    }
    let side = tile_size as f64 * pixel_size;
    Ok(side * side / 1e6)
}
