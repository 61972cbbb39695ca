//! Parcel vectors and the 3-class boundary mask derived from them.
//!
//! Crop parcels are outlined, the outlines are buffered into a boundary
//! band, and every pixel is classified by its centre: boundary band first,
//! then crop interior, else non-crop.

mod band;
mod parcels;
mod rasterize;

use thiserror::Error;

pub use band::{buffer_boundaries, polygons_to_boundaries, BoundaryBand, QUARTER_CIRCLE_SEGMENTS};
pub use parcels::{load_parcels, parse_parcels, CropRule, LoadedParcels, Parcel, ParcelSet, RejectedParcel};
pub use rasterize::{build_class_mask, build_class_mask_with_report, MaskReport};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("cannot read parcel file {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("malformed GeoJSON: {0}")]
    Format(String),
    #[error("invalid crop rule {rule:?}: {reason}")]
    Rule { rule: String, reason: String },
    #[error("attribute {0:?} not present on any feature")]
    UnknownAttribute(String),
    #[error("no valid parcels ({total} features, {rejected} rejected)")]
    NoParcels { total: usize, rejected: usize },
    #[error("duplicate parcel id {0}")]
    DuplicateId(i64),
    #[error("invalid parcel {id}: {reason}")]
    InvalidParcel { id: i64, reason: String },
    #[error("buffer half-width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("CRS mismatch: parcels EPSG:{parcels}, grid EPSG:{grid}")]
    CrsMismatch { parcels: u32, grid: u32 },
}
