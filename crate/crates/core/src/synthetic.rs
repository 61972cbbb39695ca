//! Seeded synthetic parcels and imagery for demos, tests and benchmarks.

use chrono::NaiveDate;
use geo::{Coord, LineString, MultiPolygon, Polygon};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::label::{Parcel, ParcelSet};
use crate::raster::{Band, GridGeometry, Raster, RGBN};

fn ring(g: &GridGeometry, px: &[(usize, usize)]) -> LineString<f64> {
    let mut pts: Vec<Coord<f64>> = px
        .iter()
        .map(|&(c, r)| Coord { x: g.origin_x + c as f64 * g.pixel_size, y: g.origin_y - r as f64 * g.pixel_size })
        .collect();
    pts.push(pts[0]);
    LineString(pts)
}

/// Axis-aligned rectangle on pixel edges, `[c0, c1) x [r0, r1)`.
pub fn rectangle(g: &GridGeometry, c0: usize, r0: usize, c1: usize, r1: usize) -> Polygon<f64> {
    Polygon::new(ring(g, &[(c0, r1), (c1, r1), (c1, r0), (c0, r0)]), vec![])
}

/// Rectangle with the `(cw, ch)` corner block at `corner` (0..4, clockwise
/// from top-left) removed.
fn l_shape(g: &GridGeometry, c0: usize, r0: usize, c1: usize, r1: usize, cw: usize, ch: usize, corner: u8) -> Polygon<f64> {
    let pts = match corner {
        0 => vec![(c0, r1), (c1, r1), (c1, r0), (c0 + cw, r0), (c0 + cw, r0 + ch), (c0, r0 + ch)],
        1 => vec![(c0, r1), (c1, r1), (c1, r0 + ch), (c1 - cw, r0 + ch), (c1 - cw, r0), (c0, r0)],
        2 => vec![(c0, r1), (c1 - cw, r1), (c1 - cw, r1 - ch), (c1, r1 - ch), (c1, r0), (c0, r0)],
        _ => vec![(c0, r1 - ch), (c0 + cw, r1 - ch), (c0 + cw, r1), (c1, r1), (c1, r0), (c0, r0)],
    };
    Polygon::new(ring(g, &pts), vec![])
}

/// Up to `max_shapes` non-overlapping rectangles and L-shapes with corners
/// on pixel edges. Shapes may share edges. Every parcel is crop.
pub fn random_layout(rng: &mut impl Rng, g: &GridGeometry, max_shapes: usize) -> ParcelSet {
    let (w, h) = (g.width, g.height);
    let mut taken = vec![false; w * h];
    let mut parcels = Vec::new();
    let mut attempts = 0;
    let target = rng.gen_range(1..=max_shapes.max(1));
    while parcels.len() < target && attempts < 200 {
        attempts += 1;
        let sw = rng.gen_range(2..=(w / 2).max(2));
        let sh = rng.gen_range(2..=(h / 2).max(2));
        if sw >= w || sh >= h {
            continue;
        }
        let c0 = rng.gen_range(0..=w - sw);
        let r0 = rng.gen_range(0..=h - sh);
        let (c1, r1) = (c0 + sw, r0 + sh);
        let cut = (sw >= 3 && sh >= 3 && rng.gen_bool(0.4))
            .then(|| (rng.gen_range(1..sw), rng.gen_range(1..sh), rng.gen_range(0..4u8)));
        let covers = |c: usize, r: usize| {
            let Some((cw, ch, corner)) = cut else { return true };
            let in_c = if corner == 0 || corner == 3 { c < c0 + cw } else { c >= c1 - cw };
            let in_r = if corner == 0 || corner == 1 { r < r0 + ch } else { r >= r1 - ch };
            !(in_c && in_r)
        };
        let cells: Vec<usize> = (r0..r1)
            .flat_map(|r| (c0..c1).map(move |c| (c, r)))
            .filter(|&(c, r)| covers(c, r))
            .map(|(c, r)| r * w + c)
            .collect();
        if cells.iter().any(|&i| taken[i]) {
            continue;
        }
        for &i in &cells {
            taken[i] = true;
        }
        let poly = match cut {
            Some((cw, ch, corner)) => l_shape(g, c0, r0, c1, r1, cw, ch, corner),
            None => rectangle(g, c0, r0, c1, r1),
        };
        parcels.push(Parcel { id: parcels.len() as i64 + 1, geometry: MultiPolygon(vec![poly]), crop: true });
    }
    ParcelSet::new(parcels, g.crs_code).expect("generated parcels are valid")
}

/// A scene of rectangular crop fields separated by non-crop strips, with
/// three dates of 4-band imagery.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub geometry: GridGeometry,
    pub parcels: ParcelSet,
    /// Field rectangles in pixels, `(c0, r0, c1, r1)`.
    pub fields_px: Vec<(usize, usize, usize, usize)>,
    pub dates: [NaiveDate; 3],
    /// Scenes per date, band order R, G, B, NIR.
    pub scenes: Vec<Vec<Raster>>,
}

/// Lays `rows x cols` fields on a regular grid with random insets of
/// `min_gap_px..=2*min_gap_px` pixels, plus one non-crop parcel.
pub fn synthetic_scene(
    geometry: GridGeometry,
    rows: usize,
    cols: usize,
    min_gap_px: usize,
    scenes_per_date: usize,
    seed: u64,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (geometry.width, geometry.height);
    let (cell_w, cell_h) = (w / cols, h / rows);
    let mut fields_px = Vec::new();
    let mut parcels = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let inset = |rng: &mut ChaCha8Rng| rng.gen_range(min_gap_px..=2 * min_gap_px);
            let c0 = j * cell_w + inset(&mut rng);
            let r0 = i * cell_h + inset(&mut rng);
            let c1 = (j + 1) * cell_w - inset(&mut rng);
            let r1 = (i + 1) * cell_h - inset(&mut rng);
            assert!(c1 > c0 + 2 && r1 > r0 + 2, "cells too small for the requested gaps");
            fields_px.push((c0, r0, c1, r1));
            let poly = rectangle(&geometry, c0, r0, c1, r1);
            parcels.push(Parcel { id: parcels.len() as i64 + 1, geometry: MultiPolygon(vec![poly]), crop: true });
        }
    }
    // a non-crop parcel in the gap strip must not produce labels
    let poly = rectangle(&geometry, 0, 0, min_gap_px.max(1), min_gap_px.max(1));
    parcels.push(Parcel { id: parcels.len() as i64 + 1, geometry: MultiPolygon(vec![poly]), crop: false });
    let parcels = ParcelSet::new(parcels, geometry.crs_code).expect("generated parcels are valid");

    let mut field_of = vec![usize::MAX; w * h];
    for (k, &(c0, r0, c1, r1)) in fields_px.iter().enumerate() {
        for r in r0..r1 {
            field_of[r * w + c0..r * w + c1].fill(k);
        }
    }
    let dates = [
        NaiveDate::from_ymd_opt(2021, 4, 15).expect("valid date"),
        NaiveDate::from_ymd_opt(2021, 6, 15).expect("valid date"),
        NaiveDate::from_ymd_opt(2021, 8, 15).expect("valid date"),
    ];
    // per-field vigour per date so neighbouring fields differ
    let vigour: Vec<[f32; 3]> = (0..fields_px.len()).map(|_| [0; 3].map(|_| rng.gen_range(0.3..0.9))).collect();
    let scenes = (0..3)
        .map(|d| {
            (0..scenes_per_date)
                .map(|_| {
                    let mut bands: Vec<Vec<f32>> = (0..4).map(|_| Vec::with_capacity(w * h)).collect();
                    for &f in &field_of {
                        let v = if f == usize::MAX { 0.15 } else { vigour[f][d] };
                        let noise = rng.gen_range(-0.02f32..0.02);
                        let red = 0.25 - 0.2 * v + noise;
                        let nir = 0.2 + 0.4 * v - noise;
                        bands[0].push(red);
                        bands[1].push(0.5 * (red + nir) * 0.6);
                        bands[2].push(red * 0.8);
                        bands[3].push(nir);
                    }
                    let bands = bands.into_iter().map(|v| Band::new(w, h, v).expect("sized to grid")).collect();
                    let names = RGBN.iter().map(|s| s.to_string()).collect();
                    Raster::new(geometry, bands, names, crate::raster::DEFAULT_NODATA).expect("valid raster")
                })
                .collect()
        })
        .collect();
    SyntheticScene { geometry, parcels, fields_px, dates, scenes }
}
