use serde::{Deserialize, Serialize};

use super::polygon::{bbox_of, ring_area, GeoPolygon, PlanarPolygon, Point};
use super::{GeometryError, Result};

/// WGS84 semi-major axis, meters.
const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Largest east-west scale error tolerated across the boundary's bounding box.
pub const MAX_DISTORTION: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// Plate carrée about the origin with longitudes scaled by `cos(lat0)`.
    Equirectangular,
}

/// A local metric frame centred on a city.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    /// `[lon, lat]` of the frame origin, degrees.
    pub origin: Point,
    pub projection: ProjectionKind,
    /// Maximum relative east-west scale error over the boundary's bounding box.
    pub distortion_bound: f64,
}

impl LocalFrame {
    pub fn equirectangular(origin: Point) -> Self {
        Self { origin, projection: ProjectionKind::Equirectangular, distortion_bound: 0.0 }
    }

    fn scales(&self) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        (k * self.origin[1].to_radians().cos(), k)
    }

    /// `[lon, lat]` degrees to `[x, y]` meters.
    pub fn forward(&self, p: Point) -> Point {
        let (kx, ky) = self.scales();
        [(p[0] - self.origin[0]) * kx, (p[1] - self.origin[1]) * ky]
    }

    /// `[x, y]` meters to `[lon, lat]` degrees.
    pub fn inverse(&self, p: Point) -> Point {
        let (kx, ky) = self.scales();
        [self.origin[0] + p[0] / kx, self.origin[1] + p[1] / ky]
    }

    pub fn project_polygon(&self, poly: &GeoPolygon) -> PlanarPolygon {
        let map = |ring: &[Point]| ring.iter().map(|&p| self.forward(p)).collect::<Vec<_>>();
        // the projection is affine per axis, so validity carries over
        PlanarPolygon::from_valid(
            poly.id.clone(),
            map(poly.exterior()),
            poly.holes().iter().map(|h| map(h)).collect(),
        )
    }
}

/// Builds an equirectangular frame at the area-weighted centroid of the
/// boundary. Fails when the boundary is empty or so tall in latitude that
/// the east-west scale error would exceed [`MAX_DISTORTION`].
pub fn build_local_frame(boundary: &[GeoPolygon]) -> Result<LocalFrame> {
    if boundary.is_empty() {
        return Err(GeometryError::EmptyBoundary);
    }
    let mut area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut min_lat = f64::INFINITY;
    let mut max_lat = f64::NEG_INFINITY;
    for poly in boundary {
        let ext = poly.exterior();
        let (lo, hi) = bbox_of(ext);
        min_lat = min_lat.min(lo[1]);
        max_lat = max_lat.max(hi[1]);
        let rings = std::iter::once((ext, 1.0)).chain(poly.holes().iter().map(|h| (h.as_slice(), -1.0)));
        for (ring, sign) in rings {
            let (a, c) = ring_centroid(ring);
            let a = sign * a.abs();
            area += a;
            cx += a * c[0];
            cy += a * c[1];
        }
    }
    if area <= 0.0 {
        return Err(GeometryError::InvalidPolygon { id: boundary[0].id.clone(), reason: "boundary has no area".into() });
    }
    let origin = [cx / area, cy / area];
    let distortion = east_west_distortion(origin[1], min_lat, max_lat);
    if distortion > MAX_DISTORTION {
        return Err(GeometryError::ExcessiveDistortion { distortion, limit: MAX_DISTORTION });
    }
    Ok(LocalFrame { origin, projection: ProjectionKind::Equirectangular, distortion_bound: distortion })
}

/// Area and centroid of one ring.
fn ring_centroid(ring: &[Point]) -> (f64, Point) {
    let a = ring_area(ring);
    let n = ring.len();
    let (mut x, mut y) = (0.0, 0.0);
    // shift to the first vertex to keep the products small
    let o = ring[0];
    for i in 0..n {
        let p = [ring[i][0] - o[0], ring[i][1] - o[1]];
        let q = [ring[(i + 1) % n][0] - o[0], ring[(i + 1) % n][1] - o[1]];
        let cross = p[0] * q[1] - q[0] * p[1];
        x += (p[0] + q[0]) * cross;
        y += (p[1] + q[1]) * cross;
    }
    (a, [o[0] + x / (6.0 * a), o[1] + y / (6.0 * a)])
}

fn east_west_distortion(lat0: f64, min_lat: f64, max_lat: f64) -> f64 {
    let c0 = lat0.to_radians().cos();
    let mut lats = vec![min_lat, max_lat];
    if min_lat < 0.0 && max_lat > 0.0 {
        lats.push(0.0);
    }
    lats.into_iter().map(|lat| (lat.to_radians().cos() / c0 - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square_at_origin() -> GeoPolygon {
        GeoPolygon::rectangle("sq", [-0.5, -0.5], [0.5, 0.5]).unwrap()
    }

    #[test]
    fn origin_is_fixed_point() {
        let frame = build_local_frame(&[unit_square_at_origin()]).unwrap();
        assert_eq!(frame.origin, [0.0, 0.0]);
        assert_eq!(frame.forward([0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn hundredth_degree_east_at_equator() {
        let frame = LocalFrame::equirectangular([0.0, 0.0]);
        let x = frame.forward([0.01, 0.0])[0];
        let expected = 0.01 * (std::f64::consts::PI / 180.0) * 6_378_137.0;
        assert!((x - expected).abs() < 1e-9);
        assert!((x - 1113.2).abs() < 0.05, "x = {x}");
    }

    #[test]
    fn round_trip_within_nanometer() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for origin in [[-84.39, 33.75], [-74.08, 4.71], [-70.65, -33.45], [-7.59, 33.57]] {
            let frame = LocalFrame::equirectangular(origin);
            for _ in 0..100 {
                let p = [rng.gen_range(-1e5..1e5), rng.gen_range(-1e5..1e5)];
                let q = frame.forward(frame.inverse(p));
                let err = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                assert!(err < 1e-9, "round trip error {err} at {p:?}");
            }
        }
    }

    #[test]
    fn centroid_of_offset_rectangle() {
        let r = GeoPolygon::rectangle("r", [10.0, 40.0], [10.2, 40.1]).unwrap();
        let frame = build_local_frame(&[r]).unwrap();
        assert!((frame.origin[0] - 10.1).abs() < 1e-12);
        assert!((frame.origin[1] - 40.05).abs() < 1e-12);
        assert!(frame.distortion_bound > 0.0 && frame.distortion_bound < MAX_DISTORTION);
    }

    #[test]
    fn empty_and_huge_boundaries_rejected() {
        assert!(matches!(build_local_frame(&[]), Err(GeometryError::EmptyBoundary)));
        let tall = GeoPolygon::rectangle("t", [0.0, 30.0], [1.0, 40.0]).unwrap();
        assert!(matches!(build_local_frame(&[tall]), Err(GeometryError::ExcessiveDistortion { .. })));
    }
}
