//! Three-class label rasters.

use crate::raster::{GridGeometry, RasterError};

pub const NON_CROP: u8 = 0;
pub const INTERIOR: u8 = 1;
pub const BOUNDARY: u8 = 2;
/// Pixels outside the defined source extent.
pub const MASK_NODATA: u8 = 255;

/// Single-band 8-bit mask with codes {0 non-crop, 1 field interior,
/// 2 field boundary, 255 nodata}.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMask {
    geometry: GridGeometry,
    codes: Vec<u8>,
}

impl ClassMask {
    pub fn new(geometry: GridGeometry, codes: Vec<u8>) -> Result<Self, RasterError> {
        geometry.validate()?;
        if codes.len() != geometry.len() {
            return Err(RasterError::DimensionMismatch(format!(
                "{} codes for a {}x{} grid",
                codes.len(),
                geometry.width,
                geometry.height
            )));
        }
        if let Some(bad) = codes.iter().find(|&&c| !is_valid_code(c)) {
            return Err(RasterError::BandLayout(format!("invalid mask code {bad}")));
        }
        Ok(Self { geometry, codes })
    }

    pub fn filled(geometry: GridGeometry, code: u8) -> Self {
        debug_assert!(is_valid_code(code));
        Self { codes: vec![code; geometry.len()], geometry }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn into_codes(self) -> Vec<u8> {
        self.codes
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.codes[row * self.geometry.width + col]
    }

    pub(crate) fn codes_mut(&mut self) -> &mut [u8] {
        &mut self.codes
    }

    /// Number of pixels holding `code`.
    pub fn count(&self, code: u8) -> usize {
        self.codes.iter().filter(|&&c| c == code).count()
    }

    pub fn crop(&self, col_off: usize, row_off: usize, width: usize, height: usize) -> Result<Self, RasterError> {
        let geometry = self.geometry.window(col_off, row_off, width, height)?;
        let mut codes = Vec::with_capacity(width * height);
        for row in row_off..row_off + height {
            let start = row * self.geometry.width + col_off;
            codes.extend_from_slice(&self.codes[start..start + width]);
        }
        Ok(Self { geometry, codes })
    }
}

#[inline]
pub fn is_valid_code(c: u8) -> bool {
    c <= BOUNDARY || c == MASK_NODATA
}
