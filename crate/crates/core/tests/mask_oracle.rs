//! Mask building against a brute-force per-pixel oracle.

use fieldpipe::label::build_class_mask;
use fieldpipe::synthetic::random_layout;
use fieldpipe::{ClassMask, GridGeometry, ParcelSet, BOUNDARY, INTERIOR, NON_CROP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Winding number of a closed ring around `p`.
fn winding(p: (f64, f64), ring: &[(f64, f64)]) -> i32 {
    let mut wn = 0;
    for e in ring.windows(2) {
        let (a, b) = (e[0], e[1]);
        let side = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
        if a.1 <= p.1 {
            if b.1 > p.1 && side > 0.0 {
                wn += 1;
            }
        } else if b.1 <= p.1 && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn oracle(parcels: &ParcelSet, g: &GridGeometry, hw: f64) -> Vec<u8> {
    let rings: Vec<Vec<(f64, f64)>> = parcels
        .crop_parcels()
        .flat_map(|p| p.geometry.0.iter())
        .flat_map(|poly| std::iter::once(poly.exterior()).chain(poly.interiors()))
        .map(|r| r.coords().map(|c| (c.x, c.y)).collect())
        .collect();
    let shells: Vec<Vec<Vec<(f64, f64)>>> = parcels
        .crop_parcels()
        .flat_map(|p| p.geometry.0.iter())
        .map(|poly| {
            std::iter::once(poly.exterior())
                .chain(poly.interiors())
                .map(|r| r.coords().map(|c| (c.x, c.y)).collect())
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(g.width * g.height);
    for row in 0..g.height {
        for col in 0..g.width {
            let p = (g.origin_x + (col as f64 + 0.5) * g.pixel_size, g.origin_y - (row as f64 + 0.5) * g.pixel_size);
            let near = rings.iter().any(|r| r.windows(2).any(|e| seg_dist(p, e[0], e[1]) <= hw));
            let inside = shells.iter().any(|poly| {
                winding(p, &poly[0]) != 0 && poly[1..].iter().all(|hole| winding(p, hole) == 0)
            });
            out.push(if near { BOUNDARY } else if inside { INTERIOR } else { NON_CROP });
        }
    }
    out
}

fn separated(m: &ClassMask) -> bool {
    let (w, h) = (m.width(), m.height());
    for r in 0..h {
        for c in 0..w {
            if m.get(c, r) != INTERIOR {
                continue;
            }
            let n = [(c.wrapping_sub(1), r), (c + 1, r), (c, r.wrapping_sub(1)), (c, r + 1)];
            if n.iter().any(|&(x, y)| x < w && y < h && m.get(x, y) == NON_CROP) {
                return false;
            }
        }
    }
    true
}

#[test]
fn random_layouts_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..120 {
        let w = rng.gen_range(8..=64);
        let h = rng.gen_range(8..=64);
        let ps = [1.0, 3.0, 10.0][case % 3];
        let g = GridGeometry::new(500.0, 9000.0, ps, w, h, 32631).unwrap();
        let parcels = random_layout(&mut rng, &g, 10);
        let hw = ps * [1.0, 1.3, 2.0][rng.gen_range(0..3)];
        let mask = build_class_mask(&parcels, &g, hw).unwrap();
        assert_eq!(mask.codes(), oracle(&parcels, &g, hw).as_slice(), "case {case}");
        assert!(separated(&mask), "case {case}: interior touches non-crop");
    }
}

#[test]
fn geojson_round_trip_keeps_mask() {
    let g = GridGeometry::new(0.0, 320.0, 10.0, 32, 32, 32631).unwrap();
    let parcels = random_layout(&mut ChaCha8Rng::seed_from_u64(5), &g, 6);
    let text = parcels.to_geojson();
    let again = fieldpipe::label::parse_parcels(&text, &fieldpipe::CropRule::all()).unwrap().parcels;
    assert_eq!(build_class_mask(&parcels, &g, 10.0).unwrap(), build_class_mask(&again, &g, 10.0).unwrap());
}
