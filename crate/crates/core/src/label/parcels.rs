use std::collections::HashSet;
use std::path::Path;

use geo::{Coord, LineString, MultiPolygon, Polygon};
use geojson::{feature::Id, Feature, FeatureCollection, GeoJson, GeometryValue, PolygonType};
use serde_json::Value;

use super::LabelError;
use crate::geom::ring_is_simple;

/// CRS assumed for GeoJSON without a `crs` member.
const GEOJSON_DEFAULT_CRS: u32 = 4326;

#[derive(Debug, Clone, PartialEq)]
pub struct Parcel {
    pub id: i64,
    pub geometry: MultiPolygon<f64>,
    /// True for crop fields; non-crop parcels contribute neither interiors
    /// nor boundaries.
    pub crop: bool,
}

/// Validated parcel polygons in one CRS. Ids are unique and every ring is
/// closed and simple.
#[derive(Debug, Clone, PartialEq)]
pub struct ParcelSet {
    parcels: Vec<Parcel>,
    crs_code: u32,
}

impl ParcelSet {
    pub fn new(parcels: Vec<Parcel>, crs_code: u32) -> Result<Self, LabelError> {
        let mut seen = HashSet::new();
        for p in &parcels {
            if !seen.insert(p.id) {
                return Err(LabelError::DuplicateId(p.id));
            }
            validate_geometry(&p.geometry).map_err(|reason| LabelError::InvalidParcel { id: p.id, reason })?;
        }
        Ok(Self { parcels, crs_code })
    }

    pub fn empty(crs_code: u32) -> Self {
        Self { parcels: Vec::new(), crs_code }
    }

    pub fn parcels(&self) -> &[Parcel] {
        &self.parcels
    }

    pub fn crs_code(&self) -> u32 {
        self.crs_code
    }

    pub fn len(&self) -> usize {
        self.parcels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parcels.is_empty()
    }

    pub fn crop_parcels(&self) -> impl Iterator<Item = &Parcel> {
        self.parcels.iter().filter(|p| p.crop)
    }

    /// FeatureCollection with a `crop` property and a legacy `crs` member,
    /// readable by [`parse_parcels`].
    pub fn to_geojson(&self) -> String {
        let ring = |r: &LineString<f64>| r.coords().map(|c| vec![c.x, c.y]).collect::<Vec<_>>();
        let features: Vec<Value> = self
            .parcels
            .iter()
            .map(|p| {
                let polys: Vec<Vec<_>> = p
                    .geometry
                    .0
                    .iter()
                    .map(|poly| std::iter::once(poly.exterior()).chain(poly.interiors()).map(ring).collect())
                    .collect();
                let geometry = match polys.as_slice() {
                    [one] => serde_json::json!({ "type": "Polygon", "coordinates": one }),
                    _ => serde_json::json!({ "type": "MultiPolygon", "coordinates": polys }),
                };
                serde_json::json!({
                    "type": "Feature",
                    "id": p.id,
                    "properties": { "crop": p.crop },
                    "geometry": geometry,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "type": "FeatureCollection",
            "crs": { "type": "name", "properties": { "name": format!("EPSG:{}", self.crs_code) } },
            "features": features,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("parcels serialise");
        s.push('\n');
        s
    }
}

fn validate_geometry(mp: &MultiPolygon<f64>) -> Result<(), String> {
    if mp.0.is_empty() {
        return Err("empty geometry".into());
    }
    for poly in &mp.0 {
        for (i, ring) in std::iter::once(poly.exterior()).chain(poly.interiors()).enumerate() {
            if ring.0.len() < 4 {
                return Err(format!("ring {i} has {} vertices, need at least 4", ring.0.len()));
            }
            if ring.0.first() != ring.0.last() {
                return Err(format!("ring {i} is not closed"));
            }
            if !ring_is_simple(ring) {
                return Err(format!("ring {i} self-intersects"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleOp {
    Eq,
    Ne,
    In,
}

/// Attribute predicate deciding which features are crop parcels.
///
/// Grammar: `attr == <json>`, `attr != <json>`, `attr in [<json>, ...]`,
/// or `*` (every feature is crop). Right-hand sides are JSON literals, so
/// strings are double-quoted: `category == "Cropland"`.
#[derive(Debug, Clone, PartialEq)]
pub struct CropRule {
    attribute: Option<String>,
    op: RuleOp,
    values: Vec<Value>,
    source: String,
}

impl CropRule {
    pub fn all() -> Self {
        Self { attribute: None, op: RuleOp::Eq, values: Vec::new(), source: "*".into() }
    }

    pub fn parse(rule: &str) -> Result<Self, LabelError> {
        let src = rule.trim();
        let err = |reason: &str| LabelError::Rule { rule: src.to_string(), reason: reason.to_string() };
        if src == "*" {
            return Ok(Self::all());
        }
        let (attr, op, rhs) = if let Some((a, r)) = src.split_once("==") {
            (a, RuleOp::Eq, r)
        } else if let Some((a, r)) = src.split_once("!=") {
            (a, RuleOp::Ne, r)
        } else if let Some((a, r)) = split_keyword(src, " in ") {
            (a, RuleOp::In, r)
        } else {
            return Err(err("expected `==`, `!=` or `in`"));
        };
        let attr = attr.trim();
        if attr.is_empty() || attr.contains(char::is_whitespace) {
            return Err(err("attribute name must be a single token"));
        }
        let rhs: Value = serde_json::from_str(rhs.trim()).map_err(|e| err(&format!("bad literal: {e}")))?;
        let values = match (op, rhs) {
            (RuleOp::In, Value::Array(vs)) => vs,
            (RuleOp::In, _) => return Err(err("`in` needs a JSON array")),
            (_, v) => vec![v],
        };
        Ok(Self { attribute: Some(attr.to_string()), op, values, source: src.to_string() })
    }

    pub fn attribute(&self) -> Option<&str> {
        self.attribute.as_deref()
    }

    pub fn matches(&self, props: Option<&serde_json::Map<String, Value>>) -> bool {
        let Some(attr) = &self.attribute else { return true };
        let v = props.and_then(|p| p.get(attr));
        let hit = v.is_some_and(|v| self.values.iter().any(|w| json_eq(v, w)));
        match self.op {
            RuleOp::Eq | RuleOp::In => hit,
            RuleOp::Ne => !hit,
        }
    }
}

impl std::fmt::Display for CropRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for CropRule {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

fn split_keyword<'a>(s: &'a str, kw: &str) -> Option<(&'a str, &'a str)> {
    s.find(kw).map(|i| (&s[..i], &s[i + kw.len()..]))
}

fn json_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        _ => a == b,
    }
}

/// A feature excluded during loading.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedParcel {
    pub id: i64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedParcels {
    pub parcels: ParcelSet,
    pub rejected: Vec<RejectedParcel>,
}

/// Reads a GeoJSON FeatureCollection of (multi)polygons.
///
/// Features with invalid geometry are excluded and listed in
/// [`LoadedParcels::rejected`]. Feature ids come from the feature `id`,
/// else an integer `id` property, else the 1-based feature position.
pub fn load_parcels(path: impl AsRef<Path>, rule: &CropRule) -> Result<LoadedParcels, LabelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabelError::Read { path: path.display().to_string(), reason: e.to_string() })?;
    parse_parcels(&text, rule)
}

pub fn parse_parcels(text: &str, rule: &CropRule) -> Result<LoadedParcels, LabelError> {
    let gj: GeoJson = text.parse().map_err(|e: geojson::Error| LabelError::Format(e.to_string()))?;
    let fc = match gj {
        GeoJson::FeatureCollection(fc) => fc,
        GeoJson::Feature(f) => FeatureCollection::new([f]),
        GeoJson::Geometry(_) => return Err(LabelError::Format("expected a FeatureCollection".into())),
    };
    let crs = parse_crs(&fc)?;
    let total = fc.features.len();
    if total == 0 {
        return Err(LabelError::NoParcels { total: 0, rejected: 0 });
    }
    if let Some(attr) = rule.attribute() {
        let present = fc.features.iter().any(|f| f.properties.as_ref().is_some_and(|p| p.contains_key(attr)));
        if !present {
            return Err(LabelError::UnknownAttribute(attr.to_string()));
        }
    }

    let mut parcels = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for (i, f) in fc.features.iter().enumerate() {
        let id = feature_id(f).unwrap_or(i as i64 + 1);
        if !seen.insert(id) {
            return Err(LabelError::DuplicateId(id));
        }
        let geometry = match feature_geometry(f).and_then(|g| validate_geometry(&g).map(|_| g)) {
            Ok(g) => g,
            Err(reason) => {
                log::warn!("rejecting parcel {id}: {reason}");
                rejected.push(RejectedParcel { id, reason });
                continue;
            }
        };
        parcels.push(Parcel { id, geometry, crop: rule.matches(f.properties.as_ref()) });
    }
    if parcels.is_empty() {
        return Err(LabelError::NoParcels { total, rejected: rejected.len() });
    }
    Ok(LoadedParcels { parcels: ParcelSet { parcels, crs_code: crs }, rejected })
}

fn feature_id(f: &Feature) -> Option<i64> {
    match &f.id {
        Some(Id::Number(n)) => n.as_i64(),
        Some(Id::String(s)) => s.parse().ok(),
        None => f.properties.as_ref()?.get("id")?.as_i64(),
    }
}

fn ring_from(positions: &[geojson::Position]) -> Result<LineString<f64>, String> {
    positions
        .iter()
        .map(|p| match p.as_slice() {
            [x, y, ..] if x.is_finite() && y.is_finite() => Ok(Coord { x: *x, y: *y }),
            _ => Err("bad coordinate".to_string()),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(LineString)
}

fn polygon_from(rings: &PolygonType) -> Result<Polygon<f64>, String> {
    let mut it = rings.iter();
    let shell = ring_from(it.next().ok_or("polygon without rings")?)?;
    let holes = it.map(|r| ring_from(r)).collect::<Result<Vec<_>, _>>()?;
    // closure is checked here because Polygon::new silently closes rings
    for (i, r) in std::iter::once(&shell).chain(&holes).enumerate() {
        if r.0.len() < 4 {
            return Err(format!("ring {i} has {} vertices, need at least 4", r.0.len()));
        }
        if r.0.first() != r.0.last() {
            return Err(format!("ring {i} is not closed"));
        }
    }
    Ok(Polygon::new(shell, holes))
}

fn feature_geometry(f: &Feature) -> Result<MultiPolygon<f64>, String> {
    let g = f.geometry.as_ref().ok_or("feature has no geometry")?;
    match &g.value {
        GeometryValue::Polygon { coordinates } => Ok(MultiPolygon(vec![polygon_from(coordinates)?])),
        GeometryValue::MultiPolygon { coordinates } => {
            Ok(MultiPolygon(coordinates.iter().map(polygon_from).collect::<Result<_, _>>()?))
        }
        other => Err(format!("unsupported geometry type {}", other.type_name())),
    }
}

/// Reads the legacy `crs` member (`EPSG:n` or `urn:ogc:def:crs:EPSG::n`).
fn parse_crs(fc: &FeatureCollection) -> Result<u32, LabelError> {
    let Some(crs) = fc.foreign_members.as_ref().and_then(|m| m.get("crs")) else {
        return Ok(GEOJSON_DEFAULT_CRS);
    };
    let name = crs
        .pointer("/properties/name")
        .and_then(Value::as_str)
        .ok_or_else(|| LabelError::Format("crs member without properties.name".into()))?;
    if name.ends_with("CRS84") {
        return Ok(GEOJSON_DEFAULT_CRS);
    }
    name.rsplit(':')
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| LabelError::Format(format!("unrecognised crs name {name:?}")))
}
