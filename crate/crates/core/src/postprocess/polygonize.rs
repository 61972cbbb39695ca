use std::collections::HashMap;

use geo::{Coord, LineString, Polygon};

use crate::geom::{polygon_area, ring_signed_area};
use crate::mask::{ClassMask, BOUNDARY, INTERIOR};
use crate::raster::GridGeometry;

/// One delineated field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPolygon {
    pub field_id: u32,
    /// Exterior counter-clockwise, holes clockwise, map units.
    pub polygon: Polygon<f64>,
    pub area_ha: f64,
    /// Pixels of the traced region.
    pub source_component_px: usize,
}

impl FieldPolygon {
    pub fn new(field_id: u32, polygon: Polygon<f64>, source_component_px: usize) -> Self {
        let area_ha = polygon_area(&polygon) / 1e4;
        Self { field_id, polygon, area_ha, source_component_px }
    }
}

const NONE: u32 = 0;
const CONTESTED: u32 = u32::MAX;

/// 4-connected components of interior pixels, labelled 1.. in row-major
/// order of their first pixel; 0 elsewhere.
pub fn label_components(mask: &ClassMask) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width(), mask.height());
    let codes = mask.codes();
    let mut labels = vec![NONE; codes.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..codes.len() {
        if codes[start] != INTERIOR || labels[start] != NONE {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for n in neighbours4(i, w, h).into_iter().flatten() {
                if codes[n] == INTERIOR && labels[n] == NONE {
                    labels[n] = next;
                    stack.push(n);
                }
            }
        }
    }
    (labels, next)
}

fn neighbours4(i: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    let (c, r) = (i % w, i / w);
    [
        (r > 0).then(|| i - w),
        (c > 0).then(|| i - 1),
        (c + 1 < w).then(|| i + 1),
        (r + 1 < h).then(|| i + w),
    ]
}

fn neighbours8(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (c, r) = ((i % w) as i64, (i / w) as i64);
    (-1..=1i64)
        .flat_map(move |dr| (-1..=1i64).map(move |dc| (c + dc, r + dr)))
        .filter(move |&(x, y)| (x, y) != (c, r) && x >= 0 && y >= 0 && x < w as i64 && y < h as i64)
        .map(move |(x, y)| y as usize * w + x as usize)
}

/// Grows every component over boundary pixels by up to `expand_px`
/// (geodesic chessboard distance). A pixel goes to the strictly nearest
/// component; pixels equidistant to several stay unclaimed but still pass
/// every tied label on to the next layer.
fn expand(mask: &ClassMask, labels: &mut [u32], expand_px: usize) {
    let (w, h) = (mask.width(), mask.height());
    let codes = mask.codes();
    let mut reached = vec![false; labels.len()];
    let mut frontier: Vec<(usize, Vec<u32>)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NONE {
            reached[i] = true;
            frontier.push((i, vec![l]));
        }
    }
    for _ in 0..expand_px {
        let mut layer: HashMap<usize, Vec<u32>> = HashMap::new();
        for (i, ls) in &frontier {
            for n in neighbours8(*i, w, h) {
                if codes[n] != BOUNDARY || reached[n] {
                    continue;
                }
                layer.entry(n).or_default().extend_from_slice(ls);
            }
        }
        if layer.is_empty() {
            break;
        }
        frontier = layer
            .into_iter()
            .map(|(n, mut ls)| {
                ls.sort_unstable();
                ls.dedup();
                reached[n] = true;
                labels[n] = if ls.len() == 1 { ls[0] } else { CONTESTED };
                (n, ls)
            })
            .collect();
        frontier.sort_unstable();
    }
}

/// Closed field polygons from the interior class.
///
/// Components are 4-connected; each grows by `expand_px` pixels into the
/// boundary class without entering another component's reach, and keeps
/// only grown pixels 4-connected to itself. Rings follow pixel edges.
pub fn polygonize_fields(mask: &ClassMask, expand_px: usize) -> Vec<FieldPolygon> {
    let (w, h) = (mask.width(), mask.height());
    let (mut labels, n) = label_components(mask);
    if n == 0 {
        return Vec::new();
    }
    let seeds: Vec<usize> = {
        let mut first = vec![usize::MAX; n as usize + 1];
        for (i, &l) in labels.iter().enumerate() {
            if l != NONE && first[l as usize] == usize::MAX {
                first[l as usize] = i;
            }
        }
        first
    };
    expand(mask, &mut labels, expand_px);

    // keep the part of each grown region that is 4-connected to its seed
    let mut region = vec![NONE; labels.len()];
    let mut pixels: Vec<Vec<usize>> = vec![Vec::new(); n as usize + 1];
    for l in 1..=n {
        let s = seeds[l as usize];
        region[s] = l;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            pixels[l as usize].push(i);
            for nb in neighbours4(i, w, h).into_iter().flatten() {
                if labels[nb] == l && region[nb] == NONE {
                    region[nb] = l;
                    stack.push(nb);
                }
            }
        }
    }

    let geometry = mask.geometry();
    (1..=n)
        .map(|l| {
            let px = &pixels[l as usize];
            let polygon = trace_region(&region, w, h, l, px, geometry);
            FieldPolygon::new(l, polygon, px.len())
        })
        .collect()
}

type Vertex = (u32, u32);

/// Directed pixel edges of a region, with the region on the left when
/// viewed with rows increasing downward.
fn boundary_edges(region: &[u32], w: usize, h: usize, label: u32, px: &[usize]) -> Vec<(Vertex, Vertex)> {
    let inside = |c: i64, r: i64| c >= 0 && r >= 0 && c < w as i64 && r < h as i64 && region[r as usize * w + c as usize] == label;
    let mut edges = Vec::new();
    for &i in px {
        let (c, r) = ((i % w) as i64, (i / w) as i64);
        let (x, y) = (c as u32, r as u32);
        if !inside(c, r - 1) {
            edges.push(((x + 1, y), (x, y)));
        }
        if !inside(c, r + 1) {
            edges.push(((x, y + 1), (x + 1, y + 1)));
        }
        if !inside(c - 1, r) {
            edges.push(((x, y), (x, y + 1)));
        }
        if !inside(c + 1, r) {
            edges.push(((x + 1, y + 1), (x + 1, y)));
        }
    }
    edges.sort_unstable();
    edges
}

fn dir(e: (Vertex, Vertex)) -> (i64, i64) {
    (e.1 .0 as i64 - e.0 .0 as i64, e.1 .1 as i64 - e.0 .1 as i64)
}

/// Closed vertex loops. Where two loops meet at a corner the walk turns
/// right (toward the diagonal neighbour), so diagonally touching pixels
/// stay on one ring.
fn trace_loops(edges: &[(Vertex, Vertex)]) -> Vec<Vec<Vertex>> {
    let mut out_edges: HashMap<Vertex, Vec<usize>> = HashMap::new();
    for (k, e) in edges.iter().enumerate() {
        out_edges.entry(e.0).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut k = start;
        loop {
            used[k] = true;
            ring.push(edges[k].0);
            let end = edges[k].1;
            let d = dir(edges[k]);
            let candidates: Vec<usize> =
                out_edges[&end].iter().copied().filter(|&j| !used[j] || j == start).collect();
            let next = match candidates.len() {
                0 => unreachable!("pixel-edge boundaries are closed"),
                1 => candidates[0],
                // right turn on screen: (dx, dy) -> (-dy, dx)
                _ => *candidates
                    .iter()
                    .find(|&&j| dir(edges[j]) == (-d.1, d.0))
                    .unwrap_or(&candidates[0]),
            };
            if next == start {
                break;
            }
            k = next;
        }
        loops.push(ring);
    }
    loops
}

fn drop_collinear(ring: Vec<Vertex>) -> Vec<Vertex> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let (p, q, r) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            let d1 = (q.0 as i64 - p.0 as i64, q.1 as i64 - p.1 as i64);
            let d2 = (r.0 as i64 - q.0 as i64, r.1 as i64 - q.1 as i64);
            d1.0 * d2.1 - d1.1 * d2.0 != 0
        })
        .map(|i| ring[i])
        .collect()
}

fn to_map(ring: &[Vertex], g: &GridGeometry) -> LineString<f64> {
    let mut pts: Vec<Coord<f64>> = ring
        .iter()
        .map(|&(x, y)| Coord { x: g.origin_x + x as f64 * g.pixel_size, y: g.origin_y - y as f64 * g.pixel_size })
        .collect();
    pts.push(pts[0]);
    LineString(pts)
}

fn trace_region(region: &[u32], w: usize, h: usize, label: u32, px: &[usize], g: &GridGeometry) -> Polygon<f64> {
    let edges = boundary_edges(region, w, h, label, px);
    let mut rings: Vec<LineString<f64>> =
        trace_loops(&edges).into_iter().map(drop_collinear).map(|r| to_map(&r, g)).collect();
    // rows run downward, so a walk with the region on its left is
    // counter-clockwise in map coordinates: the shell has the largest
    // signed area and holes come out clockwise
    rings.sort_by(|a, b| ring_signed_area(b).total_cmp(&ring_signed_area(a)));
    let shell = rings.remove(0);
    let holes = rings;
    Polygon::new(shell, holes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ring_is_simple;
    use crate::mask::NON_CROP;

    fn mask_from(rows: &[&str]) -> ClassMask {
        let h = rows.len();
        let w = rows[0].len();
        let codes = rows.iter().flat_map(|r| r.bytes().map(|b| b - b'0')).collect();
        ClassMask::new(GridGeometry::new(0.0, h as f64, 1.0, w, h, 32631).unwrap(), codes).unwrap()
    }

    #[test]
    fn block_without_expansion() {
        let g = GridGeometry::new(100.0, 200.0, 10.0, 14, 14, 32631).unwrap();
        let mut codes = vec![NON_CROP; 196];
        for r in 2..12 {
            for c in 2..12 {
                codes[r * 14 + c] = INTERIOR;
            }
        }
        let fields = polygonize_fields(&ClassMask::new(g, codes).unwrap(), 0);
        assert_eq!(fields.len(), 1);
        let f = &fields[0];
        assert_eq!(f.source_component_px, 100);
        assert!((f.area_ha - 1.0).abs() < 1e-12);
        assert_eq!(f.polygon.exterior().0.len(), 5);
        assert!(ring_signed_area(f.polygon.exterior()) > 0.0);
    }

    #[test]
    fn two_blocks_split_the_band() {
        let m = mask_from(&["1122211", "1122211", "1122211"]);
        let fields = polygonize_fields(&m, 1);
        assert_eq!(fields.len(), 2);
        // each side grows one column; nothing is contested with a 3-px band
        assert_eq!(fields[0].source_component_px, 9);
        assert_eq!(fields[1].source_component_px, 9);
        let m = mask_from(&["11211", "11211"]);
        let fields = polygonize_fields(&m, 1);
        // the single boundary column is equidistant and stays unclaimed
        assert_eq!(fields.iter().map(|f| f.source_component_px).collect::<Vec<_>>(), vec![4, 4]);
    }

    #[test]
    fn holes_are_kept() {
        let m = mask_from(&["11111", "10001", "10001", "11111"]);
        let f = &polygonize_fields(&m, 0)[0];
        assert_eq!(f.polygon.interiors().len(), 1);
        assert!(ring_signed_area(&f.polygon.interiors()[0]) < 0.0);
        assert!((f.area_ha * 1e4 - 14.0).abs() < 1e-9);
    }

    #[test]
    fn pinch_gives_simple_rings() {
        // the 0 at (1,1) touches the outside only through a corner
        let m = mask_from(&["111", "101", "110", "100"]);
        let fields = polygonize_fields(&m, 0);
        assert_eq!(fields.len(), 1);
        let p = &fields[0].polygon;
        assert!(ring_is_simple(p.exterior()));
        assert_eq!(p.interiors().len(), 1);
        assert!((polygon_area(p) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_blocks_are_separate_components() {
        let m = mask_from(&["1010", "0101", "1010"]);
        assert_eq!(polygonize_fields(&m, 0).len(), 6);
    }

    #[test]
    fn empty_mask() {
        assert!(polygonize_fields(&mask_from(&["000", "222"]), 2).is_empty());
    }
}
