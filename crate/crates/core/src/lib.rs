//! Field-boundary dataset tooling for multi-date satellite imagery.
//!
//! The crate covers the primary half of a field-boundary segmentation
//! workflow:
//!
//! * [`raster`]: georeferenced rasters, GeoTIFF I/O, NDVI, median
//!   compositing and multi-date stacking.
//! * [`label`]: parcel vectors to 3-class masks (non-crop / interior /
//!   boundary).
//! * [`tiling`]: overlapping tile plans, location-grid splits and the tile
//!   manifest consumed by model training.
//! * [`metrics`]: confusion counts and IoU.
//! * [`postprocess`]: class predictions to closed, simplified field polygons
//!   and field-size statistics.
//! * [`synthetic`]: seeded parcel layouts and imagery for demos and tests.

pub mod geom;
pub mod label;
pub mod mask;
pub mod metrics;
pub mod postprocess;
pub mod raster;
pub mod synthetic;
pub mod tiling;

pub use label::{BoundaryBand, CropRule, Parcel, ParcelSet};
pub use mask::{ClassMask, BOUNDARY, INTERIOR, MASK_NODATA, NON_CROP};
pub use metrics::{ConfusionCounts, IouReport};
pub use postprocess::{FieldPolygon, FieldSizeStats, PredictionRaster};
pub use tiling::{EdgePolicy, Split, SplitFractions, TileManifest, TileRecord, TileSpec, Window};
pub use raster::{Band, GridGeometry, NdviStack, Raster, DEFAULT_NODATA};

