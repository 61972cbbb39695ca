//! Confusion counts and intersection-over-union.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{ClassMask, MASK_NODATA};
use crate::postprocess::{argmax_classes, PostprocessError, PredictionRaster};
use crate::raster::{read_class_mask, read_raster, RasterError};
use crate::tiling::{Split, TileManifest};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction is {pred_w}x{pred_h} but truth is {truth_w}x{truth_h}")]
    DimensionMismatch { pred_w: usize, pred_h: usize, truth_w: usize, truth_h: usize },
    #[error("unknown class code {0}")]
    UnknownClass(u8),
    #[error("no class is present in prediction or truth")]
    NoDefinedClass,
    #[error("missing predictions for tiles: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("no tiles selected")]
    NoTiles,
    #[error("tile {tile_id}: {source}")]
    Tile {
        tile_id: String,
        #[source]
        source: Box<MetricsError>,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Prediction(#[from] PostprocessError),
}

/// Per-class one-vs-rest pixel counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: [ClassCounts; NUM_CLASSES],
    pub valid_pixels: u64,
}

impl ConfusionCounts {
    pub fn class(&self, code: u8) -> Result<&ClassCounts, MetricsError> {
        self.classes.get(code as usize).ok_or(MetricsError::UnknownClass(code))
    }

    /// Pixels where prediction and truth agree.
    pub fn correct(&self) -> u64 {
        self.classes.iter().map(|c| c.tp).sum()
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.classes.iter_mut().zip(rhs.classes) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
            a.tn += b.tn;
        }
        self.valid_pixels += rhs.valid_pixels;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Adds the pixels of one prediction/truth pair to `counts`. Pixels that
/// are nodata on either side are skipped.
pub fn accumulate_confusion(
    pred: &ClassMask,
    truth: &ClassMask,
    counts: ConfusionCounts,
) -> Result<ConfusionCounts, MetricsError> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(MetricsError::DimensionMismatch {
            pred_w: pred.width(),
            pred_h: pred.height(),
            truth_w: truth.width(),
            truth_h: truth.height(),
        });
    }
    // joint histogram, then one-vs-rest counts
    let mut joint = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &t) in pred.codes().iter().zip(truth.codes()) {
        if p == MASK_NODATA || t == MASK_NODATA {
            continue;
        }
        joint[p as usize][t as usize] += 1;
    }
    let valid: u64 = joint.iter().flatten().sum();
    let mut out = ConfusionCounts { valid_pixels: valid, ..Default::default() };
    for k in 0..NUM_CLASSES {
        let tp = joint[k][k];
        let pred_k: u64 = joint[k].iter().sum();
        let truth_k: u64 = joint.iter().map(|row| row[k]).sum();
        let c = &mut out.classes[k];
        c.tp = tp;
        c.fp = pred_k - tp;
        c.fn_ = truth_k - tp;
        c.tn = valid - tp - c.fp - c.fn_;
    }
    Ok(counts + out)
}

/// `tp / (tp + fp + fn)`, or `None` when the class is absent from both sides.
pub fn iou(counts: &ConfusionCounts, class: u8) -> Result<Option<f64>, MetricsError> {
    let c = counts.class(class)?;
    let denom = c.tp + c.fp + c.fn_;
    Ok((denom > 0).then(|| c.tp as f64 / denom as f64))
}

pub fn per_class_iou(counts: &ConfusionCounts) -> [Option<f64>; NUM_CLASSES] {
    [0u8, 1, 2].map(|k| iou(counts, k).expect("class code in range"))
}

/// Mean of the defined per-class IoUs.
pub fn mean_iou(counts: &ConfusionCounts) -> Result<f64, MetricsError> {
    mean_defined(&per_class_iou(counts)).ok_or(MetricsError::NoDefinedClass)
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileIou {
    pub tile_id: String,
    /// `None` when the tile holds no valid pixels.
    pub mean_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// Keyed by class code; `null` for classes absent on both sides.
    pub per_class_iou: BTreeMap<String, Option<f64>>,
    /// Macro mean over classes from globally accumulated counts.
    pub mean_iou: f64,
    /// Unweighted average of the per-tile means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_tile_mean_iou_average: Option<f64>,
    #[serde(default)]
    pub per_tile: Vec<TileIou>,
    pub valid_pixels: u64,
    pub counts: ConfusionCounts,
}

impl IouReport {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self, MetricsError> {
        let per_class = per_class_iou(&counts);
        Ok(Self {
            per_class_iou: per_class.iter().enumerate().map(|(k, v)| (k.to_string(), *v)).collect(),
            mean_iou: mean_iou(&counts)?,
            per_tile_mean_iou_average: None,
            per_tile: Vec::new(),
            valid_pixels: counts.valid_pixels,
            counts,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

const CLASS_NAMES: [&str; NUM_CLASSES] = ["non-crop", "interior", "boundary"];

impl fmt::Display for IouReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "{:<6} {:<10} {:>8}", "class", "name", "IoU")?;
        for (k, name) in CLASS_NAMES.iter().enumerate() {
            let v = self.per_class_iou.get(&k.to_string()).copied().flatten();
            writeln!(f, "{k:<6} {name:<10} {:>8}", cell(v))?;
        }
        writeln!(f, "{:<17} {:>8.4}", "mean IoU (global)", self.mean_iou)?;
        if let Some(avg) = self.per_tile_mean_iou_average {
            writeln!(f, "{:<17} {:>8.4}", "mean IoU (tiles)", avg)?;
        }
        write!(f, "{} valid pixels over {} tiles", self.valid_pixels, self.per_tile.len())
    }
}

/// Prediction file expected for a tile.
pub fn prediction_path(predictions_dir: &Path, tile_id: &str) -> PathBuf {
    predictions_dir.join(format!("{tile_id}_pred.tif"))
}

/// Loads a prediction as class codes: single-band rasters hold codes,
/// three-band rasters hold class probabilities.
pub fn load_prediction(path: &Path) -> Result<ClassMask, MetricsError> {
    if let Ok(mask) = read_class_mask(path) {
        return Ok(mask);
    }
    let raster = read_raster(path)?;
    match raster.band_count() {
        3 => Ok(argmax_classes(&PredictionRaster::new(raster)?)),
        1 => {
            let (geometry, bands, _, nodata) = raster.into_parts();
            let codes = bands[0]
                .values()
                .iter()
                .map(|&v| if crate::raster::is_nodata(v, nodata) { MASK_NODATA } else { v as u8 })
                .collect();
            Ok(ClassMask::new(geometry, codes)?)
        }
        n => Err(RasterError::Arity { expected: 3, actual: n }.into()),
    }
}

/// Scores the predictions of every selected tile against its mask.
/// Tile paths in the manifest are resolved against `base_dir`.
pub fn evaluate_manifest(
    manifest: &TileManifest,
    base_dir: &Path,
    predictions_dir: &Path,
    split: Option<Split>,
) -> Result<IouReport, MetricsError> {
    let records: Vec<_> = manifest.records_in(split).collect();
    if records.is_empty() {
        return Err(MetricsError::NoTiles);
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !prediction_path(predictions_dir, &r.tile_id).is_file())
        .map(|r| r.tile_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingPredictions(missing));
    }
    let per_tile: Vec<(String, ConfusionCounts)> = records
        .par_iter()
        .map(|r| {
            let wrap = |e: MetricsError| MetricsError::Tile { tile_id: r.tile_id.clone(), source: Box::new(e) };
            let truth = read_class_mask(base_dir.join(&r.mask_path)).map_err(|e| wrap(e.into()))?;
            let pred = load_prediction(&prediction_path(predictions_dir, &r.tile_id)).map_err(wrap)?;
            let counts = accumulate_confusion(&pred, &truth, ConfusionCounts::default()).map_err(wrap)?;
            Ok((r.tile_id.clone(), counts))
        })
        .collect::<Result<_, MetricsError>>()?;

    let total: ConfusionCounts = per_tile.iter().map(|(_, c)| *c).sum();
    let mut report = IouReport::from_counts(total)?;
    report.per_tile = per_tile
        .iter()
        .map(|(id, c)| TileIou { tile_id: id.clone(), mean_iou: mean_iou(c).ok() })
        .collect();
    let tile_means: Vec<Option<f64>> = report.per_tile.iter().map(|t| t.mean_iou).collect();
    report.per_tile_mean_iou_average = mean_defined(&tile_means);
    Ok(report)
}
