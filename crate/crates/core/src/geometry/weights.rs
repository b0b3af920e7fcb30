use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clip::{circle_polygon_intersection_area, regular_polygon_area};
use super::frame::LocalFrame;
use super::grid::CircleGrid;
use super::polygon::{GeoPolygon, PlanarPolygon};
use super::{GeometryError, Result, DEFAULT_SEGMENTS};

/// Entries below this fraction are dropped.
const MIN_WEIGHT: f64 = 1e-9;

/// A circle whose weights add to more than `1 + OVERLAP_SLACK` indicates
/// overlapping units.
const OVERLAP_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct WeightOptions {
    pub segments: usize,
}

impl Default for WeightOptions {
    fn default() -> Self {
        Self { segments: DEFAULT_SEGMENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub circle_id: usize,
    pub unit_id: String,
    pub weight: f64,
}

/// Sparse `a_ij`: the fraction of circle `i`'s (polygonal) area inside unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaWeightMatrix {
    /// Sorted by circle id, then unit id.
    entries: Vec<WeightEntry>,
    /// Polygonal area of each circle, indexed by circle id.
    pub circle_areas: Vec<f64>,
    /// Sorted unit ids (columns), including units no circle reaches.
    pub unit_ids: Vec<String>,
    /// Circles whose row sum exceeds one, i.e. evidence of overlapping units.
    pub overlap_warnings: Vec<usize>,
}

impl AreaWeightMatrix {
    pub fn from_entries(mut entries: Vec<WeightEntry>, circle_areas: Vec<f64>, mut unit_ids: Vec<String>) -> Self {
        entries.sort_by(|a, b| a.circle_id.cmp(&b.circle_id).then_with(|| a.unit_id.cmp(&b.unit_id)));
        for e in &entries {
            unit_ids.push(e.unit_id.clone());
        }
        unit_ids.sort();
        unit_ids.dedup();
        let mut m = Self { entries, circle_areas, unit_ids, overlap_warnings: Vec::new() };
        m.overlap_warnings = m.row_sums().into_iter().filter(|(_, s)| *s > 1.0 + OVERLAP_SLACK).map(|(i, _)| i).collect();
        m
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn get(&self, circle: usize, unit: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.circle_id == circle && e.unit_id == unit).map(|e| e.weight)
    }

    pub fn row_sum(&self, circle: usize) -> f64 {
        self.entries.iter().filter(|e| e.circle_id == circle).map(|e| e.weight).sum()
    }

    /// `(circle, Σ_j a_ij)` for every circle with at least one entry.
    pub fn row_sums(&self) -> Vec<(usize, f64)> {
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for e in &self.entries {
            *sums.entry(e.circle_id).or_default() += e.weight;
        }
        sums.into_iter().collect()
    }

    /// `ν_j` with weights: circles intersecting `unit`, ordered by circle id.
    pub fn column(&self, unit: &str) -> Vec<(usize, f64)> {
        self.entries.iter().filter(|e| e.unit_id == unit).map(|e| (e.circle_id, e.weight)).collect()
    }

    /// Circle ids appearing in at least one entry.
    pub fn circle_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.entries.iter().map(|e| e.circle_id).collect();
        ids.dedup();
        ids
    }

    /// Writes `circle_id,unit_id,weight`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.entries {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). Circle areas
    /// are not part of the CSV and come back empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let entries = rdr.deserialize().collect::<std::result::Result<Vec<WeightEntry>, _>>()?;
        Ok(Self::from_entries(entries, Vec::new(), Vec::new()))
    }
}

/// Computes `a_ij` for every circle of the grid against every unit.
///
/// Units sharing an id (multi-part units) are summed. Work is spread over
/// circles in parallel; the output order does not depend on scheduling.
pub fn build_weight_matrix(
    grid: &CircleGrid,
    units: &[GeoPolygon],
    frame: &LocalFrame,
    opts: WeightOptions,
) -> Result<AreaWeightMatrix> {
    let planar: Vec<PlanarPolygon> = units.iter().map(|u| frame.project_polygon(u)).collect();
    let circle_area = regular_polygon_area(grid.radius, opts.segments);

    let rows = grid
        .circles
        .par_iter()
        .map(|circle| {
            let mut per_unit: BTreeMap<&str, f64> = BTreeMap::new();
            for unit in &planar {
                let area = circle_polygon_intersection_area(circle, unit, opts.segments).map_err(|e| GeometryError::Pair {
                    circle: circle.id,
                    unit: unit.id.clone(),
                    source: Box::new(e),
                })?;
                if area > 0.0 {
                    *per_unit.entry(unit.id.as_str()).or_default() += area;
                }
            }
            let area = regular_polygon_area(circle.radius, opts.segments);
            Ok(per_unit
                .into_iter()
                .map(|(unit, a)| WeightEntry { circle_id: circle.id, unit_id: unit.to_string(), weight: (a / area).min(1.0) })
                .filter(|e| e.weight >= MIN_WEIGHT)
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let max_id = grid.circles.iter().map(|c| c.id + 1).max().unwrap_or(0);
    let mut areas = vec![circle_area; max_id];
    for c in &grid.circles {
        areas[c.id] = regular_polygon_area(c.radius, opts.segments);
    }
    let unit_ids = units.iter().map(|u| u.id.clone()).collect();
    let matrix = AreaWeightMatrix::from_entries(rows.into_iter().flatten().collect(), areas, unit_ids);
    if !matrix.overlap_warnings.is_empty() {
        warn!(
            "{} circles have weight rows summing above 1 + {OVERLAP_SLACK}; units appear to overlap (first: circle {})",
            matrix.overlap_warnings.len(),
            matrix.overlap_warnings[0]
        );
    }
    Ok(matrix)
}
