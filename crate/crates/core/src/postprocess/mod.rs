//! Class predictions to closed, simplified field polygons.

mod eliminate;
mod polygonize;
mod simplify;
mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{ClassMask, BOUNDARY, MASK_NODATA};
use crate::raster::{is_nodata, Band, Raster, RasterError};

pub use eliminate::eliminate_fragments;
pub use polygonize::{label_components, polygonize_fields, FieldPolygon};
pub use simplify::{simplify_polygon, simplify_ring};
pub use stats::{field_stats, histogram_svg, FieldSizeStats, HistogramBin, DEFAULT_BIN_EDGES_HA};

/// Allowed deviation of a pixel's probability sum from 1.
pub const PROBABILITY_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("prediction needs 3 probability bands, got {0}")]
    BandCount(usize),
    #[error("pixel ({col}, {row}): probabilities {probs:?} are not a distribution")]
    Probability { col: usize, row: usize, probs: [f32; 3] },
    #[error("no polygons to summarise")]
    Empty,
    #[error("histogram edges must be finite and strictly increasing: {0:?}")]
    BinEdges(Vec<f64>),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Per-pixel class probabilities (bands 0, 1, 2 for the mask codes).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRaster {
    raster: Raster,
}

impl PredictionRaster {
    pub fn new(raster: Raster) -> Result<Self, PostprocessError> {
        if raster.band_count() != 3 {
            return Err(PostprocessError::BandCount(raster.band_count()));
        }
        let width = raster.geometry().width;
        let nodata = raster.nodata();
        let b = raster.bands();
        let bad = (0..raster.geometry().len()).into_par_iter().find_first(|&i| {
            let p = [b[0].values()[i], b[1].values()[i], b[2].values()[i]];
            if p.iter().any(|&v| is_nodata(v, nodata)) {
                return false;
            }
            let sum: f32 = p.iter().sum();
            p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > PROBABILITY_TOLERANCE
        });
        if let Some(i) = bad {
            let probs = [b[0].values()[i], b[1].values()[i], b[2].values()[i]];
            return Err(PostprocessError::Probability { col: i % width, row: i / width, probs });
        }
        Ok(Self { raster })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn into_raster(self) -> Raster {
        self.raster
    }
}

/// Most probable class per pixel; ties go to the higher code.
pub fn argmax_classes(pred: &PredictionRaster) -> ClassMask {
    let r = &pred.raster;
    let nodata = r.nodata();
    let b = r.bands();
    let codes = (0..r.geometry().len())
        .into_par_iter()
        .map(|i| {
            let p = [b[0].values()[i], b[1].values()[i], b[2].values()[i]];
            if p.iter().any(|&v| is_nodata(v, nodata)) {
                return MASK_NODATA;
            }
            let mut best = 2;
            for k in (0..2).rev() {
                if p[k] > p[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    ClassMask::new(*r.geometry(), codes).expect("argmax codes are valid")
}

/// One-hot probabilities reproducing `mask` under [`argmax_classes`].
pub fn one_hot_encode(mask: &ClassMask, nodata: f32) -> PredictionRaster {
    let (w, h) = (mask.width(), mask.height());
    let bands = (0..3u8)
        .map(|k| {
            let values = mask
                .codes()
                .iter()
                .map(|&c| match c {
                    MASK_NODATA => nodata,
                    c if c == k => 1.0,
                    _ => 0.0,
                })
                .collect();
            Band::new(w, h, values).expect("sized to the mask")
        })
        .collect();
    let names = vec!["P0".to_string(), "P1".to_string(), "P2".to_string()];
    let raster = Raster::new(*mask.geometry(), bands, names, nodata).expect("bands match the grid");
    PredictionRaster { raster }
}

/// Square-window "any" filter along one axis using a running count.
fn dilate_line(src: &[bool], dst: &mut [bool], r: usize) {
    let n = src.len();
    let mut count = src[..r.min(n)].iter().filter(|&&v| v).count();
    for i in 0..n {
        if i + r < n && src[i + r] {
            count += 1;
        }
        if i > r && src[i - r - 1] {
            count -= 1;
        }
        dst[i] = count > 0;
    }
}

fn dilate(set: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut rows = vec![false; set.len()];
    rows.par_chunks_mut(w)
        .zip(set.par_chunks(w))
        .for_each(|(dst, src)| dilate_line(src, dst, r));
    // transpose so the column pass also runs over contiguous memory
    let mut t = vec![false; set.len()];
    for row in 0..h {
        for col in 0..w {
            t[col * h + row] = rows[row * w + col];
        }
    }
    let mut tc = vec![false; set.len()];
    tc.par_chunks_mut(h)
        .zip(t.par_chunks(h))
        .for_each(|(dst, src)| dilate_line(src, dst, r));
    let mut out = vec![false; set.len()];
    for row in 0..h {
        for col in 0..w {
            out[row * w + col] = tc[col * h + row];
        }
    }
    out
}

/// Morphological closing of the boundary class with a
/// `(2 radius + 1)`-pixel square. Only non-boundary pixels bridging a gap
/// are converted; nodata stays nodata. Pixels beyond the raster edge do not
/// restrict the erosion.
pub fn close_boundary_gaps(mask: &ClassMask, radius: usize) -> ClassMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let set: Vec<bool> = mask.codes().iter().map(|&c| c == BOUNDARY).collect();
    let dilated = dilate(&set, w, h, radius);
    // erosion is the complement of dilating the complement
    let complement: Vec<bool> = dilated.iter().map(|v| !v).collect();
    let closed = dilate(&complement, w, h, radius);
    let mut out = mask.clone();
    for (c, gap) in out.codes_mut().iter_mut().zip(closed) {
        if !gap && *c != MASK_NODATA {
            *c = BOUNDARY;
        }
    }
    out
}

/// Parameters of the prediction-to-polygon chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocessParams {
    pub closing_radius: usize,
    pub expand_px: usize,
    /// Map units.
    pub simplify_tolerance: f64,
    pub min_area_ha: f64,
    pub bin_edges_ha: Vec<f64>,
}

impl PostprocessParams {
    /// Defaults derived from the pixel size and mask corridor half-width.
    pub fn for_resolution(pixel_size: f64, half_width: f64, min_area_ha: f64) -> Self {
        Self {
            closing_radius: 1,
            expand_px: (half_width / pixel_size).ceil().max(0.0) as usize,
            simplify_tolerance: pixel_size,
            min_area_ha,
            bin_edges_ha: DEFAULT_BIN_EDGES_HA.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), PostprocessError> {
        if !(self.simplify_tolerance >= 0.0) || !(self.min_area_ha >= 0.0) {
            return Err(PostprocessError::Parameter(format!(
                "tolerance {} and min area {} must be non-negative",
                self.simplify_tolerance, self.min_area_ha
            )));
        }
        stats::check_edges(&self.bin_edges_ha)
    }
}

#[derive(Debug, Clone)]
pub struct PostprocessOutput {
    pub closed_mask: ClassMask,
    pub fields: Vec<FieldPolygon>,
    /// `None` when no field survived.
    pub stats: Option<FieldSizeStats>,
}

/// Closing, polygonisation, simplification, fragment elimination and
/// size statistics, in that order.
pub fn postprocess_mask(mask: &ClassMask, params: &PostprocessParams) -> Result<PostprocessOutput, PostprocessError> {
    params.validate()?;
    let closed_mask = close_boundary_gaps(mask, params.closing_radius);
    let raw = polygonize_fields(&closed_mask, params.expand_px);
    let simplified: Vec<FieldPolygon> =
        raw.par_iter().map(|p| simplify_polygon(p, params.simplify_tolerance)).collect();
    let fields = eliminate_fragments(simplified, params.min_area_ha);
    let stats = match field_stats(&fields, &params.bin_edges_ha) {
        Ok(s) => Some(s),
        Err(PostprocessError::Empty) => None,
        Err(e) => return Err(e),
    };
    Ok(PostprocessOutput { closed_mask, fields, stats })
}

/// GeoJSON FeatureCollection with `field_id` and `area_ha` properties.
pub fn fields_to_geojson(fields: &[FieldPolygon], crs_code: u32) -> serde_json::Value {
    let ring = |r: &geo::LineString<f64>| r.coords().map(|c| vec![c.x, c.y]).collect::<Vec<_>>();
    let features: Vec<serde_json::Value> = fields
        .iter()
        .map(|f| {
            let rings: Vec<_> = std::iter::once(f.polygon.exterior()).chain(f.polygon.interiors()).map(ring).collect();
            serde_json::json!({
                "type": "Feature",
                "id": f.field_id,
                "properties": { "field_id": f.field_id, "area_ha": f.area_ha },
                "geometry": { "type": "Polygon", "coordinates": rings },
            })
        })
        .collect();
    serde_json::json!({
        "type": "FeatureCollection",
        "crs": { "type": "name", "properties": { "name": format!("EPSG:{crs_code}") } },
        "features": features,
    })
}
