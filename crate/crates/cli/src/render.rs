//! SVG choropleths of unit values and circle-level maps.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sesmap_core::audience::natural_cmp;
use sesmap_core::geometry::{geojson, CircleGrid, GeoPolygon, LocalFrame, Point};

pub const MISSING_FILL: &str = "#bfbfbf";

const PALETTE: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorScale {
    #[default]
    Linear,
    /// Colour by rank among the distinct values.
    Quantile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    pub title: String,
    pub scale: ColorScale,
    pub width: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { title: String::new(), scale: ColorScale::Linear, width: 640.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("no values to map")]
    Empty,
}

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - i as f64;
    let c: Vec<u8> = (0..3).map(|k| (PALETTE[i][k] + f * (PALETTE[i + 1][k] - PALETTE[i][k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Maps values to colours; ids without a finite value are gray.
struct Scale {
    kind: ColorScale,
    min: f64,
    max: f64,
    sorted: Vec<f64>,
}

impl Scale {
    fn new<'a>(values: impl Iterator<Item = &'a f64>, kind: ColorScale) -> Result<Self, RenderError> {
        let mut sorted: Vec<f64> = values.copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return Err(RenderError::Empty);
        }
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        Ok(Self { kind, min: sorted[0], max: sorted[sorted.len() - 1], sorted })
    }

    fn fill(&self, v: Option<f64>) -> String {
        let Some(v) = v.filter(|v| v.is_finite()) else {
            return MISSING_FILL.to_string();
        };
        if self.max == self.min {
            return color(0.5);
        }
        let t = match self.kind {
            ColorScale::Linear => (v - self.min) / (self.max - self.min),
            ColorScale::Quantile => {
                let rank = self.sorted.partition_point(|&s| s < v);
                rank as f64 / (self.sorted.len() - 1) as f64
            }
        };
        color(t)
    }
}

fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Planar bounds of the drawing and the affine map into SVG pixels.
struct Canvas {
    lo: Point,
    k: f64,
    width: f64,
    map_height: f64,
}

const MARGIN: f64 = 10.0;
const HEADER: f64 = 28.0;
const LEGEND: f64 = 46.0;

impl Canvas {
    fn new(points: impl Iterator<Item = Point>, width: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let k = (width - 2.0 * MARGIN) / span;
        Self { lo: [lo[0], hi[1]], k, width, map_height: (hi[1] - lo[1]) * k }
    }

    fn xy(&self, p: Point) -> (f64, f64) {
        (MARGIN + (p[0] - self.lo[0]) * self.k, HEADER + (self.lo[1] - p[1]) * self.k)
    }

    fn height(&self) -> f64 {
        HEADER + self.map_height + LEGEND
    }

    fn open(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">",
            self.width,
            self.height(),
            self.width,
            self.height()
        );
        let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
        let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">{}</text>", escape(title));
        s
    }

    fn legend(&self, s: &mut String, scale: &Scale) {
        let y = HEADER + self.map_height + 12.0;
        let w = (self.width - 2.0 * MARGIN).min(240.0);
        let _ = writeln!(s, "<defs><linearGradient id=\"ramp\">");
        for (i, _) in PALETTE.iter().enumerate() {
            let t = i as f64 / (PALETTE.len() - 1) as f64;
            let c = if scale.max == scale.min { color(0.5) } else { color(t) };
            let _ = writeln!(s, "<stop offset=\"{:.2}\" stop-color=\"{c}\"/>", t);
        }
        let _ = writeln!(s, "</linearGradient></defs>");
        let _ = writeln!(s, "<rect x=\"{MARGIN}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"10\" fill=\"url(#ramp)\" stroke=\"#333333\" stroke-width=\"0.5\"/>");
        let ty = y + 24.0;
        let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{ty:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>", num(scale.min));
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{ty:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            MARGIN + w,
            num(scale.max)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"10\" height=\"10\" fill=\"{MISSING_FILL}\"/><text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">missing</text>",
            MARGIN + w + 16.0,
            MARGIN + w + 30.0,
            y + 9.0
        );
    }
}

fn sorted_units(units: &[GeoPolygon]) -> Vec<&GeoPolygon> {
    let mut out: Vec<&GeoPolygon> = units.iter().collect();
    out.sort_by(|a, b| natural_cmp(&a.id, &b.id));
    out
}

fn local_frame(units: &[GeoPolygon]) -> LocalFrame {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for u in units {
        let (a, b) = u.bbox();
        for k in 0..2 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    LocalFrame::equirectangular([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0])
}

fn path(canvas: &Canvas, frame: &LocalFrame, u: &GeoPolygon) -> String {
    let mut d = String::new();
    for ring in std::iter::once(u.exterior()).chain(u.holes().iter().map(|h| h.as_slice())) {
        for (i, p) in ring.iter().enumerate() {
            let (x, y) = canvas.xy(frame.forward(*p));
            let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { "L" });
        }
        d.push('Z');
    }
    d
}

/// Choropleth of one value per unit id. Units are drawn in id order, so the
/// output does not depend on the order of `units`.
pub fn render_choropleth(units: &[GeoPolygon], values: &BTreeMap<String, f64>, opts: &MapOptions) -> Result<String, RenderError> {
    let scale = Scale::new(values.iter().filter(|(id, _)| units.iter().any(|u| &u.id == *id)).map(|(_, v)| v), opts.scale)?;
    let frame = local_frame(units);
    let canvas = Canvas::new(units.iter().flat_map(|u| u.exterior().iter().map(|p| frame.forward(*p))), opts.width);
    let mut s = canvas.open(&opts.title);
    for u in sorted_units(units) {
        let fill = scale.fill(values.get(&u.id).copied());
        let _ = writeln!(
            s,
            "<path id=\"u-{}\" d=\"{}\" fill=\"{fill}\" fill-rule=\"evenodd\" stroke=\"#ffffff\" stroke-width=\"0.6\"/>",
            escape(&u.id),
            path(&canvas, &frame, u)
        );
    }
    canvas.legend(&mut s, &scale);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Circles coloured by a per-circle value, over the unit outlines.
pub fn render_circle_map(
    grid: &CircleGrid,
    units: &[GeoPolygon],
    values: &BTreeMap<usize, f64>,
    opts: &MapOptions,
) -> Result<String, RenderError> {
    let scale = Scale::new(values.values(), opts.scale)?;
    let frame = &grid.frame;
    let corners = grid.circles.iter().flat_map(|c| {
        [[c.center[0] - c.radius, c.center[1] - c.radius], [c.center[0] + c.radius, c.center[1] + c.radius]]
    });
    let outline = units.iter().flat_map(|u| u.exterior().iter().map(|p| frame.forward(*p)));
    let canvas = Canvas::new(corners.chain(outline), opts.width);
    let mut s = canvas.open(&opts.title);
    for u in sorted_units(units) {
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"#555555\" stroke-width=\"0.6\"/>", path(&canvas, frame, u));
    }
    for c in &grid.circles {
        let (x, y) = canvas.xy(c.center);
        let fill = scale.fill(values.get(&c.id).copied());
        let _ = writeln!(
            s,
            "<circle id=\"c-{}\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\" fill=\"{fill}\" fill-opacity=\"0.85\"/>",
            c.id,
            c.radius * canvas.k
        );
    }
    canvas.legend(&mut s, &scale);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Units as GeoJSON with `value` and `fill` properties matching the SVG.
pub fn choropleth_geojson(units: &[GeoPolygon], values: &BTreeMap<String, f64>, scale: ColorScale) -> Result<Value, RenderError> {
    let s = Scale::new(values.iter().filter(|(id, _)| units.iter().any(|u| &u.id == *id)).map(|(_, v)| v), scale)?;
    let sorted: Vec<GeoPolygon> = sorted_units(units).into_iter().cloned().collect();
    Ok(geojson::units_to_value(&sorted, |id| {
        let v = values.get(id).copied().filter(|v| v.is_finite());
        let mut m = Map::new();
        m.insert("value".into(), v.map_or(Value::Null, |v| json!(v)));
        m.insert("fill".into(), json!(s.fill(v)));
        m
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units() -> Vec<GeoPolygon> {
        (0..3).map(|i| GeoPolygon::rectangle(i.to_string(), [i as f64 * 0.01, 0.0], [(i + 1) as f64 * 0.01, 0.01]).unwrap()).collect()
    }

    fn fills(svg: &str) -> Vec<String> {
        svg.lines().filter(|l| l.starts_with("<path id=")).map(|l| l.split("fill=\"").nth(1).unwrap()[..7].to_string()).collect()
    }

    #[test]
    fn constant_values_single_colour() {
        let v: BTreeMap<String, f64> = (0..3).map(|i| (i.to_string(), 4.0)).collect();
        let svg = render_choropleth(&units(), &v, &MapOptions::default()).unwrap();
        let f = fills(&svg);
        assert!(f.iter().all(|c| *c == f[0]));
        assert!(svg.contains(">4.0000<"));
    }

    #[test]
    fn missing_is_gray_and_order_independent() {
        let v: BTreeMap<String, f64> = [("0".to_string(), 1.0), ("2".to_string(), 3.0)].into_iter().collect();
        let mut u = units();
        let a = render_choropleth(&u, &v, &MapOptions::default()).unwrap();
        assert_eq!(fills(&a)[1], MISSING_FILL);
        u.reverse();
        assert_eq!(render_choropleth(&u, &v, &MapOptions::default()).unwrap(), a);
    }

    #[test]
    fn scales() {
        let v: BTreeMap<String, f64> = [("0", 0.0), ("1", 1.0), ("2", 100.0)].iter().map(|(k, x)| (k.to_string(), *x)).collect();
        let lin = fills(&render_choropleth(&units(), &v, &MapOptions::default()).unwrap());
        let q = fills(&render_choropleth(&units(), &v, &MapOptions { scale: ColorScale::Quantile, ..Default::default() }).unwrap());
        assert_eq!(lin[0], color(0.0));
        assert_eq!(lin[2], color(1.0));
        assert_eq!(q[1], color(0.5));
        assert_ne!(lin[1], q[1]);
    }

    #[test]
    fn empty_values_rejected() {
        assert!(matches!(render_choropleth(&units(), &BTreeMap::new(), &MapOptions::default()), Err(RenderError::Empty)));
        let stray: BTreeMap<String, f64> = [("x".to_string(), 1.0)].into_iter().collect();
        assert!(render_choropleth(&units(), &stray, &MapOptions::default()).is_err());
    }
}
