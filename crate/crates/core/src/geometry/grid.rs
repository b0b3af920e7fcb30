use serde::{Deserialize, Serialize};

use super::frame::LocalFrame;
use super::polygon::{GeoPolygon, Point};
use super::{GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub id: usize,
    /// Centre in the local frame, meters.
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    #[default]
    Square,
    Hexagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleGrid {
    pub circles: Vec<Circle>,
    pub lattice: Lattice,
    pub spacing: f64,
    pub radius: f64,
    pub frame: LocalFrame,
}

impl CircleGrid {
    pub fn len(&self) -> usize {
        self.circles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.circles.is_empty()
    }
}

/// Covers the units' bounding box with a lattice of circles centred on the
/// box centre, keeping circles whose bounding box overlaps at least one unit.
///
/// With a square lattice there are `floor(extent / spacing) + 1` centres per
/// axis, so every point of every unit lies within `spacing/√2 + radius` of a
/// centre. Circles are numbered row by row from the south-west.
pub fn generate_grid(
    units: &[GeoPolygon],
    frame: &LocalFrame,
    radius: f64,
    spacing: f64,
    lattice: Lattice,
) -> Result<CircleGrid> {
    if !(radius > 0.0) {
        return Err(GeometryError::NonPositiveRadius(radius));
    }
    if !(spacing > 0.0) {
        return Err(GeometryError::NonPositiveSpacing(spacing));
    }
    if units.is_empty() {
        return Err(GeometryError::EmptyBoundary);
    }
    let boxes: Vec<(Point, Point)> = units.iter().map(|u| frame.project_polygon(u).bbox()).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (a, b) in &boxes {
        for k in 0..2 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let (width, height) = (hi[0] - lo[0], hi[1] - lo[1]);

    let mut centers = Vec::new();
    match lattice {
        Lattice::Square => {
            let nx = lattice_count(width, spacing);
            let ny = lattice_count(height, spacing);
            for j in 0..ny {
                let y = mid[1] + (j as f64 - (ny - 1) as f64 / 2.0) * spacing;
                for i in 0..nx {
                    centers.push([mid[0] + (i as f64 - (nx - 1) as f64 / 2.0) * spacing, y]);
                }
            }
        }
        Lattice::Hexagonal => {
            let dy = spacing * 3f64.sqrt() / 2.0;
            let nx = lattice_count(width, spacing);
            let ny = lattice_count(height, dy);
            for j in 0..ny {
                let y = mid[1] + (j as f64 - (ny - 1) as f64 / 2.0) * dy;
                // odd rows are shifted by half a spacing and get one extra centre
                let (count, shift) = if j % 2 == 0 { (nx, (nx - 1) as f64 / 2.0) } else { (nx + 1, nx as f64 / 2.0) };
                for i in 0..count {
                    centers.push([mid[0] + (i as f64 - shift) * spacing, y]);
                }
            }
        }
    }

    let circles = centers
        .into_iter()
        .filter(|c| {
            boxes.iter().any(|(a, b)| a[0] < c[0] + radius && b[0] > c[0] - radius && a[1] < c[1] + radius && b[1] > c[1] - radius)
        })
        .enumerate()
        .map(|(id, center)| Circle { id, center, radius })
        .collect();
    Ok(CircleGrid { circles, lattice, spacing, radius, frame: *frame })
}

/// Centres needed along one axis; the slack absorbs projection round-off on
/// extents that are exact multiples of the spacing.
fn lattice_count(extent: f64, step: f64) -> usize {
    (extent / step + 1e-9).floor() as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A `side_m` square centred on the frame origin at the equator.
    fn square_unit(side_m: f64) -> (GeoPolygon, LocalFrame) {
        let frame = LocalFrame::equirectangular([0.0, 0.0]);
        let h = side_m / 2.0;
        let lo = frame.inverse([-h, -h]);
        let hi = frame.inverse([h, h]);
        (GeoPolygon::rectangle("sq", lo, hi).unwrap(), frame)
    }

    #[test]
    fn ten_km_square_gives_six_by_six() {
        let (unit, frame) = square_unit(10_000.0);
        let grid = generate_grid(&[unit], &frame, 1000.0, 2000.0, Lattice::Square).unwrap();
        assert_eq!(grid.len(), 36);
        let mut xs: Vec<i64> = grid.circles.iter().map(|c| c.center[0].round() as i64).collect();
        xs.sort();
        xs.dedup();
        assert_eq!(xs, vec![-5000, -3000, -1000, 1000, 3000, 5000]);
    }

    #[test]
    fn tiny_unit_gets_one_circle() {
        let (unit, frame) = square_unit(300.0);
        let grid = generate_grid(&[unit], &frame, 1000.0, 2000.0, Lattice::Square).unwrap();
        assert_eq!(grid.len(), 1);
    }

    #[test]
    fn covering_radius_and_spacing() {
        let (unit, frame) = square_unit(9_000.0);
        for lattice in [Lattice::Square, Lattice::Hexagonal] {
            let grid = generate_grid(std::slice::from_ref(&unit), &frame, 1000.0, 2000.0, lattice).unwrap();
            for (a, ca) in grid.circles.iter().enumerate() {
                for cb in &grid.circles[a + 1..] {
                    let d = ((ca.center[0] - cb.center[0]).powi(2) + (ca.center[1] - cb.center[1]).powi(2)).sqrt();
                    assert!(d >= 2000.0 - 1e-6);
                }
            }
            if lattice == Lattice::Square {
                let bound = 2000.0 / 2f64.sqrt() + 1000.0;
                for i in 0..=30 {
                    for j in 0..=30 {
                        let p = [-4500.0 + 300.0 * i as f64, -4500.0 + 300.0 * j as f64];
                        let near = grid.circles.iter().map(|c| ((c.center[0] - p[0]).powi(2) + (c.center[1] - p[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
                        assert!(near <= bound);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let (unit, frame) = square_unit(1000.0);
        assert!(matches!(generate_grid(std::slice::from_ref(&unit), &frame, 0.0, 1.0, Lattice::Square), Err(GeometryError::NonPositiveRadius(_))));
        assert!(matches!(generate_grid(&[unit], &frame, 1.0, -1.0, Lattice::Square), Err(GeometryError::NonPositiveSpacing(_))));
    }

    #[test]
    fn deterministic() {
        let (unit, frame) = square_unit(7_300.0);
        let a = generate_grid(std::slice::from_ref(&unit), &frame, 1000.0, 1700.0, Lattice::Hexagonal).unwrap();
        let b = generate_grid(&[unit], &frame, 1000.0, 1700.0, Lattice::Hexagonal).unwrap();
        assert_eq!(a, b);
    }
}
