use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use log::warn;

use super::{FeatureKey, FeaturizeError, Result};
use crate::audience::{natural_cmp, AgeGroup, AudiencePanel, LocationId, TOTAL};
use crate::geometry::AreaWeightMatrix;

/// Audience per administrative unit: `values[unit][feature]`, with the
/// [`TOTAL`] pseudo-attribute stored as ordinary feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPanel {
    pub units: Vec<String>,
    pub features: Vec<FeatureKey>,
    pub values: Vec<Vec<f64>>,
}

/// Diagnostics from [`project_to_units`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectionReport {
    /// (circle, feature) pairs referenced by the weights but absent from the
    /// panel; counted as zero.
    pub missing_values: usize,
}

impl UnitPanel {
    pub fn feature_index(&self, key: &FeatureKey) -> Option<usize> {
        self.features.iter().position(|f| f == key)
    }

    pub fn value(&self, unit: &str, key: &FeatureKey) -> Option<f64> {
        let r = self.units.iter().position(|u| u == unit)?;
        Some(self.values[r][self.feature_index(key)?])
    }

    /// Writes the long format used for panels: one row per (unit, feature).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit_id", "attribute", "age_group", "mau"])?;
        for (u, row) in self.units.iter().zip(&self.values) {
            for (f, v) in self.features.iter().zip(row) {
                out.write_record([u.as_str(), f.attribute.as_str(), f.age_group.as_str(), &v.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut cells: BTreeMap<(String, FeatureKey), f64> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let bad = || FeaturizeError::DesignCsv(format!("malformed unit panel row {rec:?}"));
            let age: AgeGroup = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let v: f64 = rec.get(3).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            cells.insert((rec[0].to_string(), FeatureKey::new(&rec[1], age)), v);
        }
        Ok(from_cells(cells))
    }
}

fn from_cells(cells: BTreeMap<(String, FeatureKey), f64>) -> UnitPanel {
    let mut units: Vec<String> = cells.keys().map(|(u, _)| u.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    units.sort_by(|a, b| natural_cmp(a, b));
    let features: Vec<FeatureKey> = cells.keys().map(|(_, f)| f.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let values = units
        .iter()
        .map(|u| features.iter().map(|f| cells.get(&(u.clone(), f.clone())).copied().unwrap_or(0.0)).collect())
        .collect();
    UnitPanel { units, features, values }
}

/// Area-weighted projection `MAU_j = Σ_{i ∈ ν_j} MAU_i a_ij` for every unit
/// column of `weights` and every (attribute, age group) in `panel`.
pub fn project_to_units(panel: &AudiencePanel, weights: &AreaWeightMatrix) -> Result<(UnitPanel, ProjectionReport)> {
    let mut circle_ids = HashMap::new();
    for loc in panel.locations() {
        let id: usize = loc.as_str().parse().map_err(|_| FeaturizeError::UnknownCircle(loc.to_string()))?;
        circle_ids.insert(id, loc);
    }
    let features: Vec<FeatureKey> = {
        let mut set = BTreeSet::new();
        for (k, _) in panel.cells() {
            set.insert(FeatureKey::new(&k.attribute, k.age_group));
        }
        set.into_iter().collect()
    };

    let mut report = ProjectionReport::default();
    let mut units = weights.unit_ids.clone();
    units.sort_by(|a, b| natural_cmp(a, b));
    let mut values = Vec::with_capacity(units.len());
    for unit in &units {
        let column = weights.column(unit);
        let row = features
            .iter()
            .map(|f| {
                let mut acc = 0.0;
                for &(circle, a) in &column {
                    match circle_ids.get(&circle).and_then(|loc| panel.value(loc, &f.attribute, f.age_group)) {
                        Some(mau) => acc += mau * a,
                        None => report.missing_values += 1,
                    }
                }
                acc
            })
            .collect();
        values.push(row);
    }
    if report.missing_values > 0 {
        warn!("{} circle values missing during projection; treated as zero", report.missing_values);
    }
    Ok((UnitPanel { units, features, values }, report))
}

/// Identity mapping for panels already keyed by unit id (platforms that
/// accept the target geography directly, e.g. postal codes). Missing cells
/// become zero.
pub fn passthrough_units(panel: &AudiencePanel) -> UnitPanel {
    let mut cells = BTreeMap::new();
    for (k, e) in panel.cells() {
        cells.insert((k.location.0.clone(), FeatureKey::new(&k.attribute, k.age_group)), e.mau_mean);
    }
    // keep units whose every cell went missing, with zeros
    let mut panel_units: Vec<&LocationId> = panel.missing.iter().map(|k| &k.location).collect();
    panel_units.dedup();
    let mut up = from_cells(cells);
    for l in panel_units {
        if !up.units.iter().any(|u| u == l.as_str()) {
            up.units.push(l.0.clone());
            up.values.push(vec![0.0; up.features.len()]);
        }
    }
    let mut order: Vec<usize> = (0..up.units.len()).collect();
    order.sort_by(|&a, &b| natural_cmp(&up.units[a], &up.units[b]));
    UnitPanel {
        units: order.iter().map(|&i| up.units[i].clone()).collect(),
        values: order.iter().map(|&i| up.values[i].clone()).collect(),
        features: up.features,
    }
}

/// Attribute shares `x_jf = MAU_jf / TOTAL_j` for one age group.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareMatrix {
    pub age_group: AgeGroup,
    pub units: Vec<String>,
    pub features: Vec<FeatureKey>,
    pub values: Vec<Vec<f64>>,
    /// Units whose total audience is zero; excluded, no division performed.
    pub zero_total: Vec<String>,
}

pub fn normalize(panel: &UnitPanel, age_group: AgeGroup) -> Result<ShareMatrix> {
    let total_idx =
        panel.feature_index(&FeatureKey::new(TOTAL, age_group)).ok_or(FeaturizeError::MissingTotal(age_group))?;
    let cols: Vec<usize> = (0..panel.features.len())
        .filter(|&c| panel.features[c].age_group == age_group && panel.features[c].attribute != TOTAL)
        .collect();
    let mut out = ShareMatrix {
        age_group,
        units: Vec::new(),
        features: cols.iter().map(|&c| panel.features[c].clone()).collect(),
        values: Vec::new(),
        zero_total: Vec::new(),
    };
    for (unit, row) in panel.units.iter().zip(&panel.values) {
        let total = row[total_idx];
        if total > 0.0 {
            out.units.push(unit.clone());
            out.values.push(cols.iter().map(|&c| row[c] / total).collect());
        } else {
            out.zero_total.push(unit.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WeightEntry;
    use proptest::prelude::*;

    fn weights(entries: &[(usize, &str, f64)]) -> AreaWeightMatrix {
        let e = entries.iter().map(|&(c, u, w)| WeightEntry { circle_id: c, unit_id: u.into(), weight: w }).collect();
        AreaWeightMatrix::from_entries(e, vec![], vec![])
    }

    #[test]
    fn hand_computed_projection() {
        let w = weights(&[(0, "j", 0.5), (1, "j", 0.25)]);
        let mut p = AudiencePanel::new();
        p.insert_value(0usize, "ios", AgeGroup::All, 2000.0);
        p.insert_value(1usize, "ios", AgeGroup::All, 4000.0);
        let (up, report) = project_to_units(&p, &w).unwrap();
        assert_eq!(up.value("j", &FeatureKey::new("ios", AgeGroup::All)), Some(2000.0));
        assert_eq!(report.missing_values, 0);
    }

    #[test]
    fn missing_circles_count_as_zero() {
        let w = weights(&[(0, "j", 0.5), (1, "j", 0.25)]);
        let mut p = AudiencePanel::new();
        p.insert_value(0usize, "ios", AgeGroup::All, 2000.0);
        let (up, report) = project_to_units(&p, &w).unwrap();
        assert_eq!(up.value("j", &FeatureKey::new("ios", AgeGroup::All)), Some(1000.0));
        assert_eq!(report.missing_values, 1);
    }

    #[test]
    fn non_circle_location_rejected() {
        let w = weights(&[(0, "j", 1.0)]);
        let mut p = AudiencePanel::new();
        p.insert_value("zip30301", "ios", AgeGroup::All, 2000.0);
        assert!(matches!(project_to_units(&p, &w), Err(FeaturizeError::UnknownCircle(_))));
    }

    #[test]
    fn passthrough_keeps_values_and_orders_units() {
        let mut p = AudiencePanel::new();
        for u in (0..40).rev() {
            p.insert_value(format!("{}", 30300 + u), "ios", AgeGroup::All, 1000.0 + u as f64);
            p.insert_value(format!("{}", 30300 + u), TOTAL, AgeGroup::All, 5000.0);
        }
        p.insert_value("30300", "casino", AgeGroup::All, 0.0);
        let up = passthrough_units(&p);
        assert_eq!(up.units.len(), 40);
        assert_eq!(up.units[0], "30300");
        assert_eq!(up.units[39], "30339");
        assert_eq!(up.value("30305", &FeatureKey::new("ios", AgeGroup::All)), Some(1005.0));
        // casino only recorded for one unit: everyone else is zero
        assert_eq!(up.value("30339", &FeatureKey::new("casino", AgeGroup::All)), Some(0.0));
    }

    #[test]
    fn normalization() {
        let up = UnitPanel {
            units: vec!["a".into(), "b".into()],
            features: vec![FeatureKey::new("ios", AgeGroup::All), FeatureKey::new(TOTAL, AgeGroup::All)],
            values: vec![vec![500.0, 2000.0], vec![300.0, 0.0]],
        };
        let s = normalize(&up, AgeGroup::All).unwrap();
        assert_eq!(s.units, vec!["a"]);
        assert_eq!(s.values, vec![vec![0.25]]);
        assert_eq!(s.zero_total, vec!["b"]);
        assert!(matches!(normalize(&up, AgeGroup::Adult), Err(FeaturizeError::MissingTotal(AgeGroup::Adult))));

        let same = UnitPanel { values: vec![vec![2000.0, 2000.0]], units: vec!["a".into()], features: up.features.clone() };
        assert_eq!(normalize(&same, AgeGroup::All).unwrap().values[0][0], 1.0);
    }

    #[test]
    fn unit_panel_csv_round_trip() {
        let up = UnitPanel {
            units: vec!["2".into(), "10".into()],
            features: vec![FeatureKey::new("ios", AgeGroup::All), FeatureKey::new(TOTAL, AgeGroup::All)],
            values: vec![vec![1.5, 2.0], vec![0.1, 3.0]],
        };
        let mut buf = Vec::new();
        up.write_csv(&mut buf).unwrap();
        assert_eq!(UnitPanel::read_csv(buf.as_slice()).unwrap(), up);
    }

    proptest! {
        #[test]
        fn projection_is_linear(
            a in prop::collection::vec(0.0f64..1e5, 6),
            b in prop::collection::vec(0.0f64..1e5, 6),
            ws in prop::collection::vec(0.0f64..1.0, 6),
            alpha in 0.0f64..5.0, beta in 0.0f64..5.0,
        ) {
            let units = ["u", "v"];
            let entries: Vec<(usize, &str, f64)> = (0..6).map(|i| (i, units[i % 2], ws[i])).collect();
            let w = weights(&entries);
            let panel = |v: &[f64]| {
                let mut p = AudiencePanel::new();
                for (i, x) in v.iter().enumerate() {
                    p.insert_value(i, "ios", AgeGroup::All, *x);
                }
                p
            };
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let (pa, _) = project_to_units(&panel(&a), &w).unwrap();
            let (pb, _) = project_to_units(&panel(&b), &w).unwrap();
            let (pm, _) = project_to_units(&panel(&mix), &w).unwrap();
            for r in 0..2 {
                let expect = alpha * pa.values[r][0] + beta * pb.values[r][0];
                prop_assert!((pm.values[r][0] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
            }
            let doubled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
            let (pd, _) = project_to_units(&panel(&doubled), &w).unwrap();
            for r in 0..2 {
                prop_assert_eq!(pd.values[r][0], 2.0 * pa.values[r][0]);
            }
        }
    }
}
