use chrono::NaiveDate;
use rayon::prelude::*;

use super::{is_nodata, Band, GridGeometry, NdviStack, Raster, RasterError, Result, RGBN};

/// Per-pixel `(NIR - Red) / (NIR + Red)`.
///
/// Pixels where either input is nodata, or where the denominator is zero,
/// are written as `nodata`. Results are clamped to `[-1, 1]`, which only
/// matters for negative reflectances.
pub fn compute_ndvi(red: &Band, nir: &Band, nodata: f32) -> Result<Band> {
    compute_ndvi_scaled(red, nir, nodata, 1.0)
}

/// [`compute_ndvi`] for scaled reflectance products: both inputs are divided
/// by `scale` (e.g. 10000 for integer surface reflectance) first.
pub fn compute_ndvi_scaled(red: &Band, nir: &Band, nodata: f32, scale: f64) -> Result<Band> {
    if !red.same_shape(nir) {
        return Err(RasterError::DimensionMismatch(format!(
            "red {}x{} vs nir {}x{}",
            red.width(),
            red.height(),
            nir.width(),
            nir.height()
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(RasterError::BandLayout(format!("reflectance scale must be positive, got {scale}")));
    }
    let values: Vec<f32> = red
        .values()
        .par_iter()
        .zip(nir.values().par_iter())
        .map(|(&r, &n)| ndvi_pixel(r, n, nodata, scale))
        .collect();
    Band::new(red.width(), red.height(), values)
}

#[inline]
fn ndvi_pixel(red: f32, nir: f32, nodata: f32, scale: f64) -> f32 {
    if is_nodata(red, nodata) || is_nodata(nir, nodata) || !red.is_finite() || !nir.is_finite() {
        return nodata;
    }
    let r = red as f64 / scale;
    let n = nir as f64 / scale;
    let sum = n + r;
    if sum == 0.0 {
        return nodata;
    }
    ((n - r) / sum).clamp(-1.0, 1.0) as f32
}

/// Per-pixel, per-band median over the valid samples of all scenes.
///
/// Even counts take the mean of the two middle values. A pixel is nodata in
/// the output only when every scene is nodata there. The output uses the
/// first scene's nodata sentinel and band names.
pub fn median_composite(scenes: &[Raster]) -> Result<Raster> {
    let first = scenes.first().ok_or(RasterError::EmptyInput)?;
    for (i, s) in scenes.iter().enumerate().skip(1) {
        if !s.geometry().same_grid(first.geometry()) {
            return Err(RasterError::GeometryMismatch(format!(
                "scene {i} grid differs from scene 0"
            )));
        }
        if s.band_count() != first.band_count() {
            return Err(RasterError::BandLayout(format!(
                "scene {i} has {} bands, scene 0 has {}",
                s.band_count(),
                first.band_count()
            )));
        }
    }
    let out_nodata = first.nodata();
    let n_px = first.geometry().len();
    let bands = (0..first.band_count())
        .map(|b| {
            let values: Vec<f32> = (0..n_px)
                .into_par_iter()
                .map_init(
                    || Vec::with_capacity(scenes.len()),
                    |buf: &mut Vec<f32>, i| {
                        buf.clear();
                        buf.extend(scenes.iter().filter_map(|s| {
                            let v = s.band(b).values()[i];
                            (!is_nodata(v, s.nodata()) && !v.is_nan()).then_some(v)
                        }));
                        median_of(buf).unwrap_or(out_nodata)
                    },
                )
                .collect();
            Band::new(first.geometry().width, first.geometry().height, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Raster::new(*first.geometry(), bands, first.band_names().to_vec(), out_nodata)
}

fn median_of(values: &mut [f32]) -> Option<f32> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f32::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        Some(values[mid])
    } else {
        Some(((values[mid - 1] as f64 + values[mid] as f64) / 2.0) as f32)
    }
}

/// Orders three date-tagged NDVI bands by date and wraps them as a stack
/// named `NDVI1..NDVI3`.
pub fn stack_ndvi(
    ndvi_bands: Vec<(NaiveDate, Band)>,
    geometry: GridGeometry,
    nodata: f32,
) -> Result<NdviStack> {
    if ndvi_bands.len() != 3 {
        return Err(RasterError::Arity { expected: 3, actual: ndvi_bands.len() });
    }
    let mut tagged = ndvi_bands;
    tagged.sort_by_key(|(d, _)| *d);
    if let Some(w) = tagged.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(RasterError::DuplicateDate(w[0].0));
    }
    let dates = [tagged[0].0, tagged[1].0, tagged[2].0];
    let bands: Vec<Band> = tagged.into_iter().map(|(_, b)| b).collect();
    let names = (1..=3).map(|i| format!("NDVI{i}")).collect();
    let raster = Raster::new(geometry, bands, names, nodata)?;
    NdviStack::from_parts(raster, dates)
}

/// Concatenates three dated `R,G,B,NIR` rasters into one 12-band raster
/// grouped per date, ascending: `R1,G1,B1,NIR1,R2,...,NIR3`.
pub fn stack_bands(rasters: Vec<(NaiveDate, Raster)>) -> Result<Raster> {
    if rasters.len() != 3 {
        return Err(RasterError::Arity { expected: 3, actual: rasters.len() });
    }
    let mut tagged = rasters;
    tagged.sort_by_key(|(d, _)| *d);
    if let Some(w) = tagged.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(RasterError::DuplicateDate(w[0].0));
    }
    let geometry = *tagged[0].1.geometry();
    let nodata = tagged[0].1.nodata();
    let mut bands = Vec::with_capacity(12);
    let mut names = Vec::with_capacity(12);
    for (i, (date, r)) in tagged.into_iter().enumerate() {
        if !r.geometry().same_grid(&geometry) {
            return Err(RasterError::GeometryMismatch(format!("scene for {date} is on a different grid")));
        }
        check_rgbn_layout(&r).map_err(|e| match e {
            RasterError::BandLayout(msg) => RasterError::BandLayout(format!("{date}: {msg}")),
            other => other,
        })?;
        let src_nodata = r.nodata();
        let (_, src_bands, _, _) = r.into_parts();
        for (name, mut band) in RGBN.iter().zip(src_bands) {
            if !is_nodata(src_nodata, nodata) {
                for v in band.values_mut() {
                    if is_nodata(*v, src_nodata) {
                        *v = nodata;
                    }
                }
            }
            bands.push(band);
            names.push(format!("{name}{}", i + 1));
        }
    }
    Raster::new(geometry, bands, names, nodata)
}

/// Accepts exactly four bands named `R,G,B,NIR` (any case) or carrying
/// generic `band1..band4` names.
pub(crate) fn check_rgbn_layout(r: &Raster) -> Result<()> {
    if r.band_count() != 4 {
        return Err(RasterError::BandLayout(format!(
            "expected 4 bands (R,G,B,NIR), got {}",
            r.band_count()
        )));
    }
    let named = r.band_names().iter().zip(RGBN).all(|(n, want)| n.eq_ignore_ascii_case(want));
    let generic = r.band_names() == super::default_band_names(4).as_slice();
    if named || generic {
        Ok(())
    } else {
        Err(RasterError::BandLayout(format!(
            "expected bands R,G,B,NIR, got {}",
            r.band_names().join(",")
        )))
    }
}
