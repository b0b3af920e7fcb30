//! Area of a circle (as a regular polygon) intersected with an arbitrary
//! simple polygon with holes.
//!
//! The circle approximation is convex, so each ring of the unit is clipped
//! against it with Sutherland–Hodgman. For a concave subject the output may
//! contain zero-width bridges along the clip boundary; those contribute no
//! signed area, so the shoelace area of the clipped ring is exactly the area
//! of `ring ∩ circle`. The unit's area is then exterior minus holes.

use std::f64::consts::PI;

use super::grid::Circle;
use super::polygon::{ring_area, PlanarPolygon, Point};
use super::{GeometryError, Result, MIN_SEGMENTS};

/// Vertices of the regular `segments`-gon inscribed in the circle, CCW,
/// starting at angle zero.
pub fn circle_polygon(center: Point, radius: f64, segments: usize) -> Vec<Point> {
    (0..segments)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / segments as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect()
}

/// Closed-form area of the regular `segments`-gon inscribed in a circle.
pub fn regular_polygon_area(radius: f64, segments: usize) -> f64 {
    let n = segments as f64;
    0.5 * n * radius * radius * (2.0 * PI / n).sin()
}

/// Area of `circle ∩ unit` in square meters, with the circle approximated by
/// a regular `segments`-gon.
pub fn circle_polygon_intersection_area(circle: &Circle, unit: &PlanarPolygon, segments: usize) -> Result<f64> {
    if segments < MIN_SEGMENTS {
        return Err(GeometryError::TooFewSegments(segments));
    }
    let c = circle.center;
    let r = circle.radius;
    let (lo, hi) = unit.bbox();
    if lo[0] > c[0] + r || hi[0] < c[0] - r || lo[1] > c[1] + r || hi[1] < c[1] - r {
        return Ok(0.0);
    }
    // work in circle-centred coordinates
    let clip = circle_polygon([0.0, 0.0], r, segments);
    let local = |ring: &[Point]| ring.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect::<Vec<_>>();

    let outer = clipped_area(&local(unit.exterior()), &clip);
    let holes: f64 = unit.holes().iter().map(|h| clipped_area(&local(h), &clip)).sum();
    let cap = regular_polygon_area(r, segments).min(unit.area());
    Ok((outer - holes).clamp(0.0, cap))
}

fn clipped_area(ring: &[Point], convex_ccw: &[Point]) -> f64 {
    let mut poly = ring.to_vec();
    let n = convex_ccw.len();
    for k in 0..n {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_half_plane(&poly, convex_ccw[k], convex_ccw[(k + 1) % n]);
    }
    ring_area(&poly).abs()
}

/// Keeps the part of `poly` on the left of the directed line `a → b`.
fn clip_half_plane(poly: &[Point], a: Point, b: Point) -> Vec<Point> {
    let side = |p: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let m = poly.len();
    let mut out = Vec::with_capacity(m + 4);
    for i in 0..m {
        let cur = poly[i];
        let prev = poly[(i + m - 1) % m];
        let (sc, sp) = (side(cur), side(prev));
        let (cin, pin) = (sc >= 0.0, sp >= 0.0);
        if cin != pin {
            let t = sp / (sp - sc);
            out.push([prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]);
        }
        if cin {
            out.push(cur);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(x: f64, y: f64, r: f64) -> Circle {
        Circle { id: 0, center: [x, y], radius: r }
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> PlanarPolygon {
        PlanarPolygon::new("r", vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]], vec![]).unwrap()
    }

    #[test]
    fn inside_large_unit_is_polygon_area() {
        let r = 1000.0;
        let got = circle_polygon_intersection_area(&circle(0.0, 0.0, r), &rect(-5e3, -5e3, 5e3, 5e3), 64).unwrap();
        let h = 2.0 * PI / 64.0;
        let oracle = PI * r * r * h.sin() / h;
        assert!((got - oracle).abs() / oracle < 1e-12, "{got} vs {oracle}");
        assert!((got / (PI * r * r) - 0.99839).abs() < 1e-5);
    }

    #[test]
    fn disjoint_is_zero() {
        let got = circle_polygon_intersection_area(&circle(0.0, 0.0, 10.0), &rect(50.0, 50.0, 60.0, 60.0), 64).unwrap();
        assert_eq!(got, 0.0);
        // bbox overlaps but geometry does not
        let tri = PlanarPolygon::new("t", vec![[9.0, 9.0], [30.0, 9.0], [30.0, 30.0], [9.0, 9.0]], vec![]).unwrap();
        assert!(circle_polygon_intersection_area(&circle(0.0, 0.0, 10.0), &tri, 64).unwrap().abs() < 1e-12);
    }

    #[test]
    fn centred_on_edge_is_half() {
        let c = circle(0.0, 0.0, 1000.0);
        let below = circle_polygon_intersection_area(&c, &rect(-1e5, -1e5, 1e5, 0.0), 64).unwrap();
        let above = circle_polygon_intersection_area(&c, &rect(-1e5, 0.0, 1e5, 1e5), 64).unwrap();
        let full = regular_polygon_area(1000.0, 64);
        assert!((below - full / 2.0).abs() / full < 1e-9);
        assert!(((below + above) - full).abs() / full < 1e-9);
    }

    #[test]
    fn concave_unit_and_hole() {
        // U shape around the circle centre: the notch removes the middle column
        let u = PlanarPolygon::new(
            "u",
            vec![[-3.0, -3.0], [3.0, -3.0], [3.0, 3.0], [1.0, 3.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 3.0], [-3.0, 3.0], [-3.0, -3.0]],
            vec![],
        )
        .unwrap();
        // a tiny radius-0.5 circle centred in the notch at (0, 1) sees nothing
        let a = circle_polygon_intersection_area(&circle(0.0, 1.0, 0.5), &u, 64).unwrap();
        assert!(a.abs() < 1e-12);
        // centred at (2, 0): fully inside the right arm
        let b = circle_polygon_intersection_area(&circle(2.0, 0.0, 0.5), &u, 64).unwrap();
        assert!((b - regular_polygon_area(0.5, 64)).abs() < 1e-12);
        // a hole swallowing the whole circle
        let holed = PlanarPolygon::new(
            "h",
            vec![[-10.0, -10.0], [10.0, -10.0], [10.0, 10.0], [-10.0, 10.0], [-10.0, -10.0]],
            vec![vec![[-2.0, -2.0], [-2.0, 2.0], [2.0, 2.0], [2.0, -2.0], [-2.0, -2.0]]],
        )
        .unwrap();
        assert!(circle_polygon_intersection_area(&circle(0.0, 0.0, 1.0), &holed, 64).unwrap().abs() < 1e-12);
        // circle straddling the hole edge x = 2: outer half in, inner half in hole
        let half = circle_polygon_intersection_area(&circle(2.0, 0.0, 1.0), &holed, 64).unwrap();
        assert!((half - regular_polygon_area(1.0, 64) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_segments() {
        let err = circle_polygon_intersection_area(&circle(0.0, 0.0, 1.0), &rect(0.0, 0.0, 1.0, 1.0), 8);
        assert!(matches!(err, Err(GeometryError::TooFewSegments(8))));
    }
}
