//! Minimal GeoJSON reading and writing for unit boundaries and circle grids.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::frame::LocalFrame;
use super::grid::{CircleGrid, Lattice};
use super::polygon::{GeoPolygon, Point};
use super::{GeometryError, Result};

fn bad(msg: impl Into<String>) -> GeometryError {
    GeometryError::GeoJson(msg.into())
}

/// Reads a FeatureCollection of Polygon / MultiPolygon features. Each feature
/// needs an `id` property (or a top-level feature `id`). MultiPolygons become
/// several [`GeoPolygon`]s with the same id.
pub fn read_units<R: Read>(r: R) -> Result<Vec<GeoPolygon>> {
    let doc: Value = serde_json::from_reader(r)?;
    parse_units(&doc)
}

pub fn parse_units(doc: &Value) -> Result<Vec<GeoPolygon>> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection"));
    }
    let features = doc.get("features").and_then(Value::as_array).ok_or_else(|| bad("missing features array"))?;
    let mut out = Vec::new();
    for (k, f) in features.iter().enumerate() {
        let id = feature_id(f).ok_or_else(|| bad(format!("feature {k} has no id property")))?;
        let geom = f.get("geometry").ok_or_else(|| bad(format!("feature {id} has no geometry")))?;
        let coords = geom.get("coordinates").ok_or_else(|| bad(format!("feature {id} has no coordinates")))?;
        match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => out.push(polygon(&id, coords)?),
            Some("MultiPolygon") => {
                let parts = coords.as_array().ok_or_else(|| bad(format!("feature {id}: malformed MultiPolygon")))?;
                for part in parts {
                    out.push(polygon(&id, part)?);
                }
            }
            other => return Err(bad(format!("feature {id}: unsupported geometry {other:?}"))),
        }
    }
    Ok(out)
}

fn feature_id(f: &Value) -> Option<String> {
    let v = f.get("properties").and_then(|p| p.get("id")).or_else(|| f.get("id"))?;
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn ring(id: &str, v: &Value) -> Result<Vec<Point>> {
    let arr = v.as_array().ok_or_else(|| bad(format!("feature {id}: ring is not an array")))?;
    arr.iter()
        .map(|p| match p.as_array().map(|c| c.as_slice()) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => Err(bad(format!("feature {id}: non-numeric coordinate"))),
            },
            _ => Err(bad(format!("feature {id}: malformed position"))),
        })
        .collect()
}

fn polygon(id: &str, coords: &Value) -> Result<GeoPolygon> {
    let rings = coords.as_array().ok_or_else(|| bad(format!("feature {id}: malformed Polygon")))?;
    let (first, rest) = rings.split_first().ok_or_else(|| bad(format!("feature {id}: empty Polygon")))?;
    let exterior = ring(id, first)?;
    let holes = rest.iter().map(|r| ring(id, r)).collect::<Result<Vec<_>>>()?;
    GeoPolygon::new(id, exterior, holes)
}

fn polygon_coords(p: &GeoPolygon) -> Value {
    let ring = |r: &[Point]| Value::Array(r.iter().map(|q| json!([q[0], q[1]])).collect());
    let mut rings = vec![ring(p.exterior())];
    rings.extend(p.holes().iter().map(|h| ring(h)));
    Value::Array(rings)
}

/// Unit boundaries as a FeatureCollection, one feature per distinct id
/// (Polygon or MultiPolygon), with extra properties per id.
pub fn units_to_value(units: &[GeoPolygon], props: impl Fn(&str) -> Map<String, Value>) -> Value {
    let mut ids: Vec<&str> = Vec::new();
    for u in units {
        if !ids.contains(&u.id.as_str()) {
            ids.push(&u.id);
        }
    }
    let features: Vec<Value> = ids
        .into_iter()
        .map(|id| {
            let parts: Vec<&GeoPolygon> = units.iter().filter(|u| u.id == id).collect();
            let geometry = if parts.len() == 1 {
                json!({"type": "Polygon", "coordinates": polygon_coords(parts[0])})
            } else {
                json!({"type": "MultiPolygon", "coordinates": parts.iter().map(|p| polygon_coords(p)).collect::<Vec<_>>()})
            };
            let mut properties = Map::new();
            properties.insert("id".into(), Value::String(id.to_string()));
            properties.extend(props(id));
            json!({"type": "Feature", "properties": properties, "geometry": geometry})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_units<W: Write>(units: &[GeoPolygon], w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &units_to_value(units, |_| Map::new()))?;
    Ok(())
}

/// Circle centres as WGS84 points with `circle_id` and `radius_m` properties.
pub fn grid_to_value(grid: &CircleGrid) -> Value {
    let features: Vec<Value> = grid
        .circles
        .iter()
        .map(|c| {
            let p = grid.frame.inverse(c.center);
            json!({
                "type": "Feature",
                "properties": {"circle_id": c.id, "radius_m": c.radius},
                "geometry": {"type": "Point", "coordinates": [p[0], p[1]]},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_grid<W: Write>(grid: &CircleGrid, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &grid_to_value(grid))?;
    Ok(())
}

/// Reads a grid written by [`write_grid`], reprojecting centres with `frame`.
pub fn read_grid<R: Read>(r: R, frame: &LocalFrame, lattice: Lattice, spacing: f64) -> Result<CircleGrid> {
    let doc: Value = serde_json::from_reader(r)?;
    let features = doc.get("features").and_then(Value::as_array).ok_or_else(|| bad("missing features array"))?;
    let mut circles = Vec::with_capacity(features.len());
    let mut radius = 0.0;
    for f in features {
        let props = f.get("properties").ok_or_else(|| bad("circle without properties"))?;
        let id = props.get("circle_id").and_then(Value::as_u64).ok_or_else(|| bad("circle without circle_id"))? as usize;
        radius = props.get("radius_m").and_then(Value::as_f64).ok_or_else(|| bad("circle without radius_m"))?;
        let c = f.pointer("/geometry/coordinates").and_then(Value::as_array).ok_or_else(|| bad("circle without point"))?;
        let lonlat = [c[0].as_f64().unwrap_or(f64::NAN), c[1].as_f64().unwrap_or(f64::NAN)];
        circles.push(super::grid::Circle { id, center: frame.forward(lonlat), radius });
    }
    Ok(CircleGrid { circles, lattice, spacing, radius, frame: *frame })
}

/// JSON sidecar describing how a weight matrix was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub frame: LocalFrame,
    pub unit: String,
    pub radius_m: f64,
    pub spacing_m: f64,
    pub lattice: Lattice,
    pub segments: usize,
    pub circles: usize,
    pub units: usize,
    pub overlap_warnings: Vec<usize>,
}
