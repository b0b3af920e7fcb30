//! Planar geometry for the circle sampling scheme.
//!
//! Administrative units arrive as WGS84 polygons, are projected into a
//! [`LocalFrame`] in meters, covered by a [`CircleGrid`], and turned into an
//! [`AreaWeightMatrix`] whose entry `a_ij` is the fraction of circle `i`
//! lying inside unit `j`.

mod clip;
mod frame;
pub mod geojson;
mod grid;
mod polygon;
mod weights;

use thiserror::Error;

pub use clip::{circle_polygon, circle_polygon_intersection_area, regular_polygon_area};
pub use frame::{build_local_frame, LocalFrame, ProjectionKind, MAX_DISTORTION};
pub use grid::{generate_grid, Circle, CircleGrid, Lattice};
pub use polygon::{ring_area, GeoPolygon, PlanarPolygon, Point};
pub use weights::{build_weight_matrix, AreaWeightMatrix, WeightEntry, WeightOptions};

/// Default number of vertices of the polygonal circle approximation.
pub const DEFAULT_SEGMENTS: usize = 64;

/// Smallest supported circle approximation.
pub const MIN_SEGMENTS: usize = 16;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("empty boundary: no polygons supplied")]
    EmptyBoundary,
    #[error("polygon {id}: {reason}")]
    InvalidPolygon { id: String, reason: String },
    #[error("boundary spans too much latitude: distortion {distortion:.4} exceeds {limit}")]
    ExcessiveDistortion { distortion: f64, limit: f64 },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("circle approximation needs at least {MIN_SEGMENTS} segments, got {0}")]
    TooFewSegments(usize),
    #[error("circle {circle}, unit {unit}: {source}")]
    Pair {
        circle: usize,
        unit: String,
        #[source]
        source: Box<GeometryError>,
    },
    #[error("geojson: {0}")]
    GeoJson(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
