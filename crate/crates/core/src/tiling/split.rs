use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TileSpec, TilingError, Window};
use crate::raster::GridGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Requested share of tiles per split; positive and summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, TilingError> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), TilingError> {
        let arr = self.as_array();
        if arr.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(TilingError::Fractions(format!("fractions must be positive, got {arr:?}")));
        }
        let sum: f64 = arr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TilingError::Fractions(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn get(&self, s: Split) -> f64 {
        self.as_array()[s as usize]
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.7, val: 0.2, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub tile_id: String,
    pub window: Window,
    /// `[min_x, min_y, max_x, max_y]` in map units.
    pub geo_bounds: [f64; 4],
    pub split: Split,
    pub image_path: String,
    pub mask_path: String,
    /// Location cell `(row, col)` in units of `cell_size` strides.
    pub grid_cell: (usize, usize),
}

/// The tile list handed to model training.
#[derive(Debug, Clone, PartialEq)]
pub struct TileManifest {
    pub spec: TileSpec,
    pub source_geometry: GridGeometry,
    pub records: Vec<TileRecord>,
    pub fractions: SplitFractions,
    pub cell_size: usize,
    pub seed: u64,
}

impl TileManifest {
    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    pub fn realized_fractions(&self) -> [f64; 3] {
        let n = self.records.len().max(1) as f64;
        Split::ALL.map(|s| self.count(s) as f64 / n)
    }

    pub fn records_in(&self, split: Option<Split>) -> impl Iterator<Item = &TileRecord> {
        self.records.iter().filter(move |r| split.is_none_or(|s| r.split == s))
    }
}

pub(crate) fn tile_image_path(id: &str) -> String {
    format!("tiles/{id}_img.tif")
}

pub(crate) fn tile_mask_path(id: &str) -> String {
    format!("tiles/{id}_mask.tif")
}

fn geo_bounds(g: &GridGeometry, w: &Window) -> [f64; 4] {
    let ps = g.pixel_size;
    [
        g.origin_x + w.col_off as f64 * ps,
        g.origin_y - (w.row_off + w.size) as f64 * ps,
        g.origin_x + (w.col_off + w.size) as f64 * ps,
        g.origin_y - w.row_off as f64 * ps,
    ]
}

/// Groups windows into square location cells of `cell_size` strides,
/// shuffles the cells with a seeded ChaCha8 generator and deals them to
/// the split with the largest remaining tile deficit. All tiles of a cell
/// share one split.
pub fn assign_splits(
    windows: &[Window],
    geometry: &GridGeometry,
    spec: &TileSpec,
    fractions: SplitFractions,
    cell_size: usize,
    seed: u64,
) -> Result<TileManifest, TilingError> {
    spec.validate()?;
    fractions.validate()?;
    if cell_size == 0 {
        return Err(TilingError::Spec("cell_size must be at least 1".into()));
    }
    let cell_px = spec.stride * cell_size;
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        if !w.fits(geometry) {
            return Err(TilingError::OutOfBounds(*w, geometry.width, geometry.height));
        }
        cells.entry((w.row_off / cell_px, w.col_off / cell_px)).or_default().push(i);
    }
    let mut order: Vec<(usize, usize)> = cells.keys().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = windows.len() as f64;
    let targets = fractions.as_array().map(|f| f * total);
    let mut assigned = [0usize; 3];
    let mut cell_counts = [0usize; 3];
    let mut split_of = BTreeMap::new();
    for cell in &order {
        let k = (0..3)
            .max_by(|&a, &b| {
                let da = targets[a] - assigned[a] as f64;
                let db = targets[b] - assigned[b] as f64;
                // ties go to the earlier split
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("three splits");
        assigned[k] += cells[cell].len();
        cell_counts[k] += 1;
        split_of.insert(*cell, Split::ALL[k]);
    }
    if order.len() >= 3 {
        if let Some(k) = (0..3).find(|&k| cell_counts[k] == 0) {
            return Err(TilingError::EmptySplit(Split::ALL[k]));
        }
    } else if !order.is_empty() {
        log::warn!("only {} location cells; some splits will be empty", order.len());
    }

    let records = windows
        .iter()
        .map(|w| {
            let cell = (w.row_off / cell_px, w.col_off / cell_px);
            let id = w.tile_id();
            TileRecord {
                image_path: tile_image_path(&id),
                mask_path: tile_mask_path(&id),
                tile_id: id,
                window: *w,
                geo_bounds: geo_bounds(geometry, w),
                split: split_of[&cell],
                grid_cell: cell,
            }
        })
        .collect();
    Ok(TileManifest { spec: *spec, source_geometry: *geometry, records, fractions, cell_size, seed })
}

/// Number of tile pairs in different splits whose windows overlap.
pub fn cross_split_overlaps(manifest: &TileManifest) -> usize {
    let mut recs: Vec<&TileRecord> = manifest.records.iter().collect();
    recs.sort_by_key(|r| (r.window.row_off, r.window.col_off));
    let mut n = 0;
    for (i, a) in recs.iter().enumerate() {
        for b in &recs[i + 1..] {
            if b.window.row_off >= a.window.row_off + a.window.size {
                break;
            }
            if a.split != b.split && a.window.intersects(&b.window) {
                n += 1;
            }
        }
    }
    n
}
