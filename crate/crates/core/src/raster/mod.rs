//! Georeferenced rasters and the spectral operations built on them.

mod composite;
mod geotiff;

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub use composite::{compute_ndvi, compute_ndvi_scaled, median_composite, stack_bands, stack_ndvi};
pub use geotiff::{
    read_class_mask, read_ndvi_stack, read_raster, write_class_mask, write_ndvi_stack,
    write_raster,
};

/// Default nodata sentinel for floating-point products.
pub const DEFAULT_NODATA: f32 = -9999.0;

/// Band labels of a single-date 4-band scene, in file order.
pub const RGBN: [&str; 4] = ["R", "G", "B", "NIR"];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported raster encoding in {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("missing georeferencing in {path}: {reason}")]
    Georeferencing { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("band layout error: {0}")]
    BandLayout(String),
    #[error("expected {expected} inputs, got {actual}")]
    Arity { expected: usize, actual: usize },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("empty scene list")]
    EmptyInput,
}

pub type Result<T, E = RasterError> = std::result::Result<T, E>;

/// Affine pixel grid with square pixels and a north-up orientation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridGeometry {
    /// Easting of the upper-left corner.
    pub origin_x: f64,
    /// Northing of the upper-left corner.
    pub origin_y: f64,
    /// Ground size of one pixel, in map units.
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    pub crs_code: u32,
}

impl GridGeometry {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        width: usize,
        height: usize,
        crs_code: u32,
    ) -> Result<Self> {
        let g = Self { origin_x, origin_y, pixel_size, width, height, crs_code };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size > 0.0) || !self.pixel_size.is_finite() {
            return Err(RasterError::InvalidGeometry(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::InvalidGeometry(format!(
                "empty grid {}x{}",
                self.width, self.height
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(RasterError::InvalidGeometry("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Map coordinates of the centre of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Pixel containing map point `(x, y)`, if it falls inside the extent.
    pub fn pixel_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.origin_x) / self.pixel_size).floor();
        let row = ((self.origin_y - y) / self.pixel_size).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }

    /// `[min_x, min_y, max_x, max_y]` of the full extent.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin_x,
            self.origin_y - self.height as f64 * self.pixel_size,
            self.origin_x + self.width as f64 * self.pixel_size,
            self.origin_y,
        ]
    }

    /// Geometry of a `width x height` sub-window whose upper-left pixel is
    /// `(col_off, row_off)`.
    pub fn window(&self, col_off: usize, row_off: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || col_off + width > self.width || row_off + height > self.height {
            return Err(RasterError::InvalidGeometry(format!(
                "window ({col_off},{row_off},{width}x{height}) outside {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(Self {
            origin_x: self.origin_x + col_off as f64 * self.pixel_size,
            origin_y: self.origin_y - row_off as f64 * self.pixel_size,
            width,
            height,
            ..*self
        })
    }

    /// Same shape, origin, pixel size and CRS.
    pub fn same_grid(&self, other: &Self) -> bool {
        self == other
    }
}

/// One sample plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Band {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(RasterError::DimensionMismatch(format!(
                "{} samples for a {width}x{height} band",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self { width, height, values: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(col, row));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.values[row * self.width + col] = v;
    }

    pub fn same_shape(&self, other: &Band) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies out the `width x height` block starting at `(col_off, row_off)`.
    pub fn crop(&self, col_off: usize, row_off: usize, width: usize, height: usize) -> Band {
        let mut values = Vec::with_capacity(width * height);
        for row in row_off..row_off + height {
            let start = row * self.width + col_off;
            values.extend_from_slice(&self.values[start..start + width]);
        }
        Band { width, height, values }
    }
}

/// Whether `v` is the nodata sentinel. A NaN sentinel matches any NaN.
#[inline]
pub fn is_nodata(v: f32, nodata: f32) -> bool {
    v == nodata || (nodata.is_nan() && v.is_nan())
}

/// A georeferenced stack of named bands sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    geometry: GridGeometry,
    bands: Vec<Band>,
    band_names: Vec<String>,
    nodata: f32,
}

impl Raster {
    pub fn new(
        geometry: GridGeometry,
        bands: Vec<Band>,
        band_names: Vec<String>,
        nodata: f32,
    ) -> Result<Self> {
        geometry.validate()?;
        if bands.is_empty() {
            return Err(RasterError::BandLayout("raster needs at least one band".into()));
        }
        if band_names.len() != bands.len() {
            return Err(RasterError::BandLayout(format!(
                "{} names for {} bands",
                band_names.len(),
                bands.len()
            )));
        }
        for (i, name) in band_names.iter().enumerate() {
            if band_names[..i].contains(name) {
                return Err(RasterError::BandLayout(format!("duplicate band name {name:?}")));
            }
        }
        for (band, name) in bands.iter().zip(&band_names) {
            if band.width != geometry.width || band.height != geometry.height {
                return Err(RasterError::DimensionMismatch(format!(
                    "band {name:?} is {}x{}, grid is {}x{}",
                    band.width, band.height, geometry.width, geometry.height
                )));
            }
        }
        Ok(Self { geometry, bands, band_names, nodata })
    }

    /// Builds a raster with generic names `band1..bandN`.
    pub fn with_default_names(geometry: GridGeometry, bands: Vec<Band>, nodata: f32) -> Result<Self> {
        let names = default_band_names(bands.len());
        Self::new(geometry, bands, names, nodata)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band(&self, index: usize) -> &Band {
        &self.bands[index]
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn into_parts(self) -> (GridGeometry, Vec<Band>, Vec<String>, f32) {
        (self.geometry, self.bands, self.band_names, self.nodata)
    }

    /// Copies the `width x height` window at `(col_off, row_off)`.
    pub fn crop(&self, col_off: usize, row_off: usize, width: usize, height: usize) -> Result<Raster> {
        let geometry = self.geometry.window(col_off, row_off, width, height)?;
        let bands = self.bands.iter().map(|b| b.crop(col_off, row_off, width, height)).collect();
        Ok(Raster { geometry, bands, band_names: self.band_names.clone(), nodata: self.nodata })
    }
}

pub(crate) fn default_band_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("band{i}")).collect()
}

/// Three NDVI bands in strictly ascending date order.
#[derive(Debug, Clone, PartialEq)]
pub struct NdviStack {
    raster: Raster,
    dates: [NaiveDate; 3],
}

impl NdviStack {
    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn dates(&self) -> &[NaiveDate; 3] {
        &self.dates
    }

    pub fn into_raster(self) -> Raster {
        self.raster
    }

    pub(crate) fn from_parts(raster: Raster, dates: [NaiveDate; 3]) -> Result<Self> {
        if raster.band_count() != 3 {
            return Err(RasterError::Arity { expected: 3, actual: raster.band_count() });
        }
        if !(dates[0] < dates[1] && dates[1] < dates[2]) {
            return Err(RasterError::BandLayout(format!(
                "NDVI dates must be strictly ascending, got {} {} {}",
                dates[0], dates[1], dates[2]
            )));
        }
        Ok(Self { raster, dates })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridGeometry {
        GridGeometry::new(1000.0, 2000.0, 10.0, 4, 3, 32631).unwrap()
    }

    #[test]
    fn pixel_center_round_trips() {
        let g = grid();
        for row in 0..g.height {
            for col in 0..g.width {
                let (x, y) = g.pixel_center(col, row);
                assert_eq!(g.pixel_at(x, y), Some((col, row)));
            }
        }
        assert_eq!(g.pixel_center(0, 0), (1005.0, 1995.0));
        assert_eq!(g.pixel_at(999.0, 1995.0), None);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(GridGeometry::new(0.0, 0.0, 0.0, 1, 1, 1).is_err());
        assert!(GridGeometry::new(0.0, 0.0, 1.0, 0, 1, 1).is_err());
    }

    #[test]
    fn window_shifts_origin() {
        let g = grid().window(1, 2, 2, 1).unwrap();
        assert_eq!(g.origin_x, 1010.0);
        assert_eq!(g.origin_y, 1980.0);
        assert!(grid().window(3, 0, 2, 1).is_err());
    }

    #[test]
    fn raster_rejects_duplicate_names_and_bad_shapes() {
        let g = grid();
        let b = Band::filled(4, 3, 0.0);
        assert!(Raster::new(g, vec![b.clone(), b.clone()], vec!["a".into(), "a".into()], 0.0).is_err());
        let small = Band::filled(2, 2, 0.0);
        assert!(Raster::new(g, vec![small], vec!["a".into()], 0.0).is_err());
        assert!(Raster::new(g, vec![b], vec![], 0.0).is_err());
    }
}
