use geo::BooleanOps;

use super::FieldPolygon;
use crate::geom::{bbox, shared_border_length};

fn boxes_touch(a: &[f64; 4], b: &[f64; 4], tol: f64) -> bool {
    a[0] <= b[2] + tol && b[0] <= a[2] + tol && a[1] <= b[3] + tol && b[1] <= a[3] + tol
}

/// Merges every polygon smaller than `min_area_ha` into the neighbour it
/// shares the longest border with, smallest first (ties by `field_id`),
/// until none is left below the threshold. Fragments without a touching
/// neighbour are dropped. The receiving field keeps its id.
pub fn eliminate_fragments(mut polys: Vec<FieldPolygon>, min_area_ha: f64) -> Vec<FieldPolygon> {
    loop {
        let Some(frag) = polys
            .iter()
            .enumerate()
            .filter(|(_, p)| p.area_ha < min_area_ha)
            .min_by(|(_, a), (_, b)| a.area_ha.total_cmp(&b.area_ha).then(a.field_id.cmp(&b.field_id)))
            .map(|(i, _)| i)
        else {
            break;
        };
        let fragment = polys.remove(frag);
        let fb = bbox(&fragment.polygon);
        let scale = fb.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = scale * 1e-9;
        let best = polys
            .iter()
            .enumerate()
            .filter(|(_, p)| boxes_touch(&fb, &bbox(&p.polygon), tol))
            .map(|(i, p)| (i, shared_border_length(&fragment.polygon, &p.polygon, tol)))
            .filter(|&(_, len)| len > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(polys[b.0].field_id.cmp(&polys[a.0].field_id)));
        let Some((target, _)) = best else {
            log::debug!("dropping isolated fragment {} ({:.4} ha)", fragment.field_id, fragment.area_ha);
            continue;
        };
        let host = &polys[target];
        let merged = host.polygon.union(&fragment.polygon);
        match merged.0.as_slice() {
            [single] => {
                polys[target] =
                    FieldPolygon::new(host.field_id, single.clone(), host.source_component_px + fragment.source_component_px);
            }
            _ => log::warn!(
                "fragment {} does not join field {} into one polygon; dropped",
                fragment.field_id,
                host.field_id
            ),
        }
    }
    polys
}
