use super::{GeometryError, Result};

/// A planar point `[x, y]`, or `[lon, lat]` for geographic rings.
pub type Point = [f64; 2];

/// An administrative unit boundary in WGS84 degrees.
///
/// Rings are stored closed (first vertex repeated at the end). A unit made of
/// several disjoint parts is represented by several `GeoPolygon`s sharing the
/// same `id`; their intersection areas are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPolygon {
    pub id: String,
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

impl GeoPolygon {
    pub fn new(id: impl Into<String>, exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let id = id.into();
        validate_rings(&id, &exterior, &holes, true)?;
        Ok(Self { id, exterior, holes })
    }

    /// Axis-aligned rectangle `[min_lon, max_lon] x [min_lat, max_lat]`.
    pub fn rectangle(id: impl Into<String>, min: Point, max: Point) -> Result<Self> {
        let ring = vec![
            [min[0], min[1]],
            [max[0], min[1]],
            [max[0], max[1]],
            [min[0], max[1]],
            [min[0], min[1]],
        ];
        Self::new(id, ring, Vec::new())
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    /// Bounding box as `(min, max)`.
    pub fn bbox(&self) -> (Point, Point) {
        bbox_of(&self.exterior)
    }
}

/// A polygon projected into a local metric frame. Rings are stored open and
/// have been validated (non-degenerate, simple, holes inside the exterior).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPolygon {
    pub id: String,
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
    bbox: (Point, Point),
}

impl PlanarPolygon {
    /// Builds a planar polygon from closed rings, validating them.
    pub fn new(id: impl Into<String>, exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let id = id.into();
        validate_rings(&id, &exterior, &holes, false)?;
        Ok(Self::from_valid(id, exterior, holes))
    }

    /// Builds from rings already known to be valid (e.g. the affine image of a
    /// validated [`GeoPolygon`]).
    pub(crate) fn from_valid(id: String, mut exterior: Vec<Point>, mut holes: Vec<Vec<Point>>) -> Self {
        exterior.pop();
        for h in &mut holes {
            h.pop();
        }
        let bbox = bbox_of(&exterior);
        Self { id, exterior, holes, bbox }
    }

    /// Exterior ring, open (no repeated closing vertex).
    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    /// Hole rings, open.
    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn bbox(&self) -> (Point, Point) {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_area(h).abs()).sum();
        (ring_area(&self.exterior).abs() - holes).max(0.0)
    }

    /// Even-odd point containment (boundary points may go either way).
    pub fn contains(&self, p: Point) -> bool {
        point_in_ring(p, &self.exterior) && !self.holes.iter().any(|h| point_in_ring(p, h))
    }
}

/// Signed shoelace area of an open or closed ring (positive when CCW).
pub fn ring_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

pub(crate) fn bbox_of(ring: &[Point]) -> (Point, Point) {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for p in ring {
        for k in 0..2 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    (min, max)
}

pub(crate) fn point_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn invalid(id: &str, reason: impl Into<String>) -> GeometryError {
    GeometryError::InvalidPolygon { id: id.to_string(), reason: reason.into() }
}

fn validate_rings(id: &str, exterior: &[Point], holes: &[Vec<Point>], geographic: bool) -> Result<()> {
    validate_ring(id, "exterior", exterior, geographic)?;
    for (k, hole) in holes.iter().enumerate() {
        let name = format!("hole {k}");
        validate_ring(id, &name, hole, geographic)?;
        let open = &exterior[..exterior.len() - 1];
        // a hole vertex may touch the exterior, but its interior must not leave it
        let outside = hole[..hole.len() - 1]
            .iter()
            .any(|&p| !point_in_ring(p, open) && !on_ring(p, open));
        if outside {
            return Err(invalid(id, format!("{name} is not inside the exterior ring")));
        }
        if rings_cross(open, &hole[..hole.len() - 1]) {
            return Err(invalid(id, format!("{name} crosses the exterior ring")));
        }
    }
    Ok(())
}

fn validate_ring(id: &str, name: &str, ring: &[Point], geographic: bool) -> Result<()> {
    if ring.len() < 4 {
        return Err(invalid(id, format!("{name} ring has {} vertices, need at least 4", ring.len())));
    }
    if ring.first() != ring.last() {
        return Err(invalid(id, format!("{name} ring is not closed")));
    }
    if let Some(p) = ring.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(invalid(id, format!("{name} ring has a non-finite vertex {p:?}")));
    }
    if geographic {
        if let Some(p) = ring.iter().find(|p| p[0].abs() > 180.0 || p[1].abs() > 90.0) {
            return Err(invalid(id, format!("{name} ring vertex {p:?} is outside WGS84 range")));
        }
    }
    let open = &ring[..ring.len() - 1];
    if ring_area(open) == 0.0 {
        return Err(invalid(id, format!("{name} ring has zero area")));
    }
    if let Some((i, j)) = self_intersection(open) {
        return Err(invalid(id, format!("{name} ring self-intersects between edges {i} and {j}")));
    }
    Ok(())
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    orient(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn on_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    (0..n).any(|i| on_segment(ring[i], ring[(i + 1) % n], p))
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

fn proper_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// First pair of non-adjacent edges that touch, if any. Quadratic, with a
/// bounding-box sweep over edges sorted by min x.
fn self_intersection(ring: &[Point]) -> Option<(usize, usize)> {
    let n = ring.len();
    let mut edges: Vec<(usize, f64, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            (i, a[0].min(b[0]), a[0].max(b[0]))
        })
        .collect();
    edges.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    for (k, &(i, _, imax)) in edges.iter().enumerate() {
        for &(j, jmin, _) in &edges[k + 1..] {
            if jmin > imax {
                break;
            }
            let adjacent = i.abs_diff(j) == 1 || i.abs_diff(j) == n - 1;
            if adjacent {
                // adjacent edges share a vertex; they only conflict if they fold back
                let (s, t) = if (i + 1) % n == j { (i, j) } else { (j, i) };
                let (a, b, c) = (ring[s], ring[t], ring[(t + 1) % n]);
                if orient(a, b, c) == 0.0 && (c[0] - b[0]) * (a[0] - b[0]) + (c[1] - b[1]) * (a[1] - b[1]) > 0.0 {
                    return Some((i.min(j), i.max(j)));
                }
                continue;
            }
            if segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}

fn rings_cross(a: &[Point], b: &[Point]) -> bool {
    let (na, nb) = (a.len(), b.len());
    (0..na).any(|i| (0..nb).any(|j| proper_cross(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(s: f64) -> Vec<Point> {
        vec![[0.0, 0.0], [s, 0.0], [s, s], [0.0, s], [0.0, 0.0]]
    }

    #[test]
    fn accepts_square_with_hole() {
        let hole = vec![[1.0, 1.0], [1.0, 2.0], [2.0, 2.0], [2.0, 1.0], [1.0, 1.0]];
        let p = PlanarPolygon::new("a", square(4.0), vec![hole]).unwrap();
        assert_eq!(p.area(), 15.0);
        assert!(p.contains([0.5, 0.5]));
        assert!(!p.contains([1.5, 1.5]));
    }

    #[test]
    fn rejects_bowtie() {
        let ring = vec![[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let err = PlanarPolygon::new("bow", ring, vec![]).unwrap_err();
        assert!(err.to_string().contains("self-intersects"), "{err}");
    }

    #[test]
    fn rejects_open_and_short_rings() {
        let open = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(PlanarPolygon::new("o", open, vec![]).unwrap_err().to_string().contains("not closed"));
        let short = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        assert!(PlanarPolygon::new("s", short, vec![]).is_err());
    }

    #[test]
    fn rejects_hole_outside() {
        let hole = vec![[5.0, 5.0], [5.0, 6.0], [6.0, 6.0], [6.0, 5.0], [5.0, 5.0]];
        assert!(PlanarPolygon::new("h", square(4.0), vec![hole]).is_err());
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        let ring = vec![[0.0, 0.0], [200.0, 0.0], [200.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(GeoPolygon::new("x", ring, vec![]).is_err());
    }

    #[test]
    fn concave_polygon_is_valid() {
        let ring = vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [2.0, 1.0], [0.0, 4.0], [0.0, 0.0]];
        let p = PlanarPolygon::new("c", ring, vec![]).unwrap();
        assert!((p.area() - 10.0).abs() < 1e-12);
    }
}
