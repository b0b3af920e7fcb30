use std::collections::HashMap;
use std::io::{Read, Write};

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureKey, FeaturizeError, IndicatorMeta, Result, ShareMatrix, TargetVector};
use crate::audience::AgeGroup;

/// Which features the column filter removes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRule {
    /// Drop features that are zero in every unit.
    #[default]
    AllZero,
    /// Drop features that are zero in any unit.
    AnyZero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOrder {
    #[default]
    ColumnsFirst,
    RowsFirst,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub column_rule: ColumnRule,
    pub order: FilterOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterAxis {
    Row,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    /// Unit with zero total audience.
    ZeroTotal,
    /// Unit without a target value.
    NoTarget,
    AllZeroColumn,
    AnyZeroColumn,
    /// Unit with a zero share in a surviving feature.
    ZeroShareRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterEvent {
    pub axis: FilterAxis,
    pub id: String,
    pub rule: FilterRule,
    /// 0 for alignment drops, then the fixed-point iteration number.
    pub round: usize,
}

/// Shape the filters would have produced under another rule/order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativeShape {
    pub column_rule: ColumnRule,
    pub order: FilterOrder,
    pub rows: usize,
    pub columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterLog {
    pub age_group: AgeGroup,
    pub options: DesignOptions,
    pub input_rows: usize,
    pub input_columns: usize,
    pub rounds: usize,
    pub events: Vec<FilterEvent>,
    /// Target units with no features; not counted as input rows.
    pub unmatched_target: Vec<String>,
    pub alternatives: Vec<AlternativeShape>,
}

impl FilterLog {
    pub fn dropped(&self, axis: FilterAxis) -> usize {
        self.events.iter().filter(|e| e.axis == axis).count()
    }
}

/// Filtered design matrix with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub age_group: AgeGroup,
    pub rows: Vec<String>,
    pub columns: Vec<FeatureKey>,
    pub x: DMatrix<f64>,
    pub log: FilterLog,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn to_shares(&self) -> ShareMatrix {
        ShareMatrix {
            age_group: self.age_group,
            units: self.rows.clone(),
            features: self.columns.clone(),
            values: self.x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            zero_total: Vec::new(),
        }
    }

    /// `unit_id,target,<feature>...`
    pub fn write_csv<W: Write>(&self, w: W, y: &TargetVector) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["unit_id".to_string(), "target".to_string()];
        header.extend(self.columns.iter().map(|c| c.to_string()));
        out.write_record(&header)?;
        for (i, id) in self.rows.iter().enumerate() {
            let mut rec = vec![id.clone(), y.values[i].to_string()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: IndicatorMeta) -> Result<(Self, TargetVector)> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "unit_id" || &header[1] != "target" {
            return Err(FeaturizeError::DesignCsv("header must be unit_id,target,<features>".into()));
        }
        let columns: Vec<FeatureKey> = header.iter().skip(2).map(str::parse).collect::<Result<_>>()?;
        let age_group = columns[0].age_group;
        let (mut rows, mut y, mut data) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec[0].to_string());
            let mut nums = rec.iter().skip(1).map(|s| {
                s.parse::<f64>().map_err(|_| FeaturizeError::DesignCsv(format!("`{s}` is not a number")))
            });
            y.push(nums.next().unwrap()?);
            for v in nums {
                data.push(v?);
            }
        }
        let x = DMatrix::from_row_slice(rows.len(), columns.len(), &data);
        let target = TargetVector::new(rows.clone(), y, meta)?;
        let log = FilterLog {
            age_group,
            options: DesignOptions::default(),
            input_rows: rows.len(),
            input_columns: columns.len(),
            rounds: 0,
            events: Vec::new(),
            unmatched_target: Vec::new(),
            alternatives: Vec::new(),
        };
        Ok((DesignMatrix { age_group, rows, columns, x, log }, target))
    }
}

struct Filtered {
    rows: Vec<bool>,
    cols: Vec<bool>,
    events: Vec<(FilterAxis, usize, FilterRule, usize)>,
    rounds: usize,
}

fn zero(v: f64) -> bool {
    !(v > 0.0)
}

fn column_pass(values: &[Vec<f64>], f: &mut Filtered, rule: ColumnRule, round: usize) -> bool {
    let mut changed = false;
    for c in 0..f.cols.len() {
        if !f.cols[c] {
            continue;
        }
        let mut live = values.iter().zip(&f.rows).filter(|(_, &keep)| keep).map(|(r, _)| zero(r[c]));
        let drop = match rule {
            ColumnRule::AllZero => live.all(|z| z),
            ColumnRule::AnyZero => live.any(|z| z),
        };
        if drop {
            f.cols[c] = false;
            let why = match rule {
                ColumnRule::AllZero => FilterRule::AllZeroColumn,
                ColumnRule::AnyZero => FilterRule::AnyZeroColumn,
            };
            f.events.push((FilterAxis::Column, c, why, round));
            changed = true;
        }
    }
    changed
}

fn row_pass(values: &[Vec<f64>], f: &mut Filtered, round: usize) -> bool {
    let mut changed = false;
    for (r, row) in values.iter().enumerate() {
        if f.rows[r] && row.iter().zip(&f.cols).any(|(&v, &keep)| keep && zero(v)) {
            f.rows[r] = false;
            f.events.push((FilterAxis::Row, r, FilterRule::ZeroShareRow, round));
            changed = true;
        }
    }
    changed
}

fn run_filters(values: &[Vec<f64>], p: usize, opts: DesignOptions) -> Filtered {
    let mut f = Filtered { rows: vec![true; values.len()], cols: vec![true; p], events: Vec::new(), rounds: 0 };
    loop {
        f.rounds += 1;
        let round = f.rounds;
        let changed = match opts.order {
            FilterOrder::ColumnsFirst => {
                let a = column_pass(values, &mut f, opts.column_rule, round);
                row_pass(values, &mut f, round) | a
            }
            FilterOrder::RowsFirst => {
                let a = row_pass(values, &mut f, round);
                column_pass(values, &mut f, opts.column_rule, round) | a
            }
        };
        if !changed {
            return f;
        }
    }
}

/// Aligns shares with the target and applies the column and row filters to
/// a fixed point. Every dropped unit and feature is recorded in the log.
pub fn build_design(
    shares: &ShareMatrix,
    target: &TargetVector,
    opts: DesignOptions,
) -> Result<(DesignMatrix, TargetVector)> {
    let target_index: HashMap<&str, usize> = target.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut events: Vec<FilterEvent> = shares
        .zero_total
        .iter()
        .map(|id| FilterEvent { axis: FilterAxis::Row, id: id.clone(), rule: FilterRule::ZeroTotal, round: 0 })
        .collect();

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut y = Vec::new();
    for (id, row) in shares.units.iter().zip(&shares.values) {
        match target_index.get(id.as_str()) {
            Some(&t) => {
                ids.push(id.clone());
                values.push(row.clone());
                y.push(target.values[t]);
            }
            None => events.push(FilterEvent { axis: FilterAxis::Row, id: id.clone(), rule: FilterRule::NoTarget, round: 0 }),
        }
    }
    if ids.is_empty() {
        return Err(FeaturizeError::NoCommonUnits);
    }
    let unmatched_target: Vec<String> = target
        .ids
        .iter()
        .filter(|id| !shares.units.contains(id) && !shares.zero_total.contains(id))
        .cloned()
        .collect();
    if !unmatched_target.is_empty() {
        warn!("{} target units have no audience features", unmatched_target.len());
    }

    let p = shares.features.len();
    let f = run_filters(&values, p, opts);
    for &(axis, idx, rule, round) in &f.events {
        let id = match axis {
            FilterAxis::Row => ids[idx].clone(),
            FilterAxis::Column => shares.features[idx].to_string(),
        };
        events.push(FilterEvent { axis, id, rule, round });
    }

    let kept_rows: Vec<usize> = (0..ids.len()).filter(|&r| f.rows[r]).collect();
    let kept_cols: Vec<usize> = (0..p).filter(|&c| f.cols[c]).collect();

    let mut alternatives = Vec::new();
    for column_rule in [ColumnRule::AllZero, ColumnRule::AnyZero] {
        for order in [FilterOrder::ColumnsFirst, FilterOrder::RowsFirst] {
            let alt = DesignOptions { column_rule, order };
            if alt == opts {
                continue;
            }
            let g = run_filters(&values, p, alt);
            let shape = AlternativeShape {
                column_rule,
                order,
                rows: g.rows.iter().filter(|&&k| k).count(),
                columns: g.cols.iter().filter(|&&k| k).count(),
            };
            if column_rule != opts.column_rule && order == opts.order
                && (shape.rows, shape.columns) != (kept_rows.len(), kept_cols.len())
            {
                info!(
                    "column rule {:?} would give {}x{} instead of {}x{}",
                    column_rule, shape.rows, shape.columns, kept_rows.len(), kept_cols.len()
                );
            }
            alternatives.push(shape);
        }
    }

    if kept_rows.len() < 3 || kept_cols.is_empty() {
        return Err(FeaturizeError::Degenerate { rows: kept_rows.len(), cols: kept_cols.len() });
    }

    let x = DMatrix::from_fn(kept_rows.len(), kept_cols.len(), |r, c| values[kept_rows[r]][kept_cols[c]]);
    let rows: Vec<String> = kept_rows.iter().map(|&r| ids[r].clone()).collect();
    let y = TargetVector::new(rows.clone(), kept_rows.iter().map(|&r| y[r]).collect(), target.meta.clone())?;
    let log = FilterLog {
        age_group: shares.age_group,
        options: opts,
        input_rows: shares.units.len() + shares.zero_total.len(),
        input_columns: p,
        rounds: f.rounds,
        events,
        unmatched_target,
        alternatives,
    };
    let design = DesignMatrix {
        age_group: shares.age_group,
        rows,
        columns: kept_cols.iter().map(|&c| shares.features[c].clone()).collect(),
        x,
        log,
    };
    Ok((design, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shares(values: Vec<Vec<f64>>) -> ShareMatrix {
        let p = values[0].len();
        ShareMatrix {
            age_group: AgeGroup::All,
            units: (0..values.len()).map(|i| i.to_string()).collect(),
            features: (0..p).map(|c| FeatureKey::new(&format!("f{c}"), AgeGroup::All)).collect(),
            values,
            zero_total: Vec::new(),
        }
    }

    fn target(n: usize) -> TargetVector {
        TargetVector::new((0..n).map(|i| i.to_string()).collect(), (0..n).map(|i| i as f64).collect(), IndicatorMeta::default())
            .unwrap()
    }

    #[test]
    fn all_positive_input_unchanged() {
        let v = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]];
        let (d, y) = build_design(&shares(v), &target(3), DesignOptions::default()).unwrap();
        assert_eq!(d.x, DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        assert!(d.log.events.is_empty());
        assert_eq!(y.ids, d.rows);
    }

    #[test]
    fn all_zero_column_dropped_then_zero_row() {
        let v = vec![vec![0.1, 0.0, 0.2], vec![0.3, 0.0, 0.0], vec![0.5, 0.0, 0.6], vec![0.7, 0.0, 0.8]];
        let (d, y) = build_design(&shares(v), &target(4), DesignOptions::default()).unwrap();
        assert_eq!(d.columns.iter().map(|c| c.attribute.as_str()).collect::<Vec<_>>(), ["f0", "f2"]);
        assert_eq!(d.rows, ["0", "2", "3"]);
        assert_eq!(y.values, vec![0.0, 2.0, 3.0]);
        let col = d.log.events.iter().find(|e| e.axis == FilterAxis::Column).unwrap();
        assert_eq!((col.id.as_str(), col.rule), ("f1:ALL", FilterRule::AllZeroColumn));
        let row = d.log.events.iter().find(|e| e.axis == FilterAxis::Row).unwrap();
        assert_eq!((row.id.as_str(), row.rule), ("1", FilterRule::ZeroShareRow));
    }

    #[test]
    fn strict_rule_keeps_rows() {
        let v = vec![vec![0.1, 0.2], vec![0.3, 0.0], vec![0.5, 0.6], vec![0.7, 0.8]];
        let opts = DesignOptions { column_rule: ColumnRule::AnyZero, ..Default::default() };
        let (d, _) = build_design(&shares(v.clone()), &target(4), opts).unwrap();
        assert_eq!((d.n(), d.p()), (4, 1));
        let (lenient, _) = build_design(&shares(v), &target(4), DesignOptions::default()).unwrap();
        assert_eq!((lenient.n(), lenient.p()), (3, 2));
        assert!(lenient.log.alternatives.contains(&AlternativeShape {
            column_rule: ColumnRule::AnyZero,
            order: FilterOrder::ColumnsFirst,
            rows: 4,
            columns: 1
        }));
    }

    #[test]
    fn alignment_and_degenerate() {
        let mut s = shares(vec![vec![0.1], vec![0.2], vec![0.3], vec![0.4]]);
        s.zero_total.push("9".into());
        let t = TargetVector::new(vec!["1".into(), "2".into(), "3".into(), "7".into()], vec![1.0, 2.0, 3.0, 7.0], IndicatorMeta::default())
            .unwrap();
        let (d, y) = build_design(&s, &t, DesignOptions::default()).unwrap();
        assert_eq!(d.rows, ["1", "2", "3"]);
        assert_eq!(y.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(d.log.input_rows - d.n(), d.log.dropped(FilterAxis::Row));
        assert_eq!(d.log.unmatched_target, ["7"]);

        let v = vec![vec![0.1, 0.0], vec![0.0, 0.2], vec![0.3, 0.4]];
        let err = build_design(&shares(v), &target(3), DesignOptions::default()).unwrap_err();
        assert!(matches!(err, FeaturizeError::Degenerate { rows: 1, cols: 2 }), "{err}");
    }

    #[test]
    fn design_csv_round_trip() {
        let v = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 1.0 / 3.0]];
        let (d, y) = build_design(&shares(v), &target(3), DesignOptions::default()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &y).unwrap();
        let (d2, y2) = DesignMatrix::read_csv(buf.as_slice(), IndicatorMeta::default()).unwrap();
        assert_eq!(d2.x, d.x);
        assert_eq!(d2.columns, d.columns);
        assert_eq!(y2, y);
    }

    proptest! {
        #[test]
        fn filters_positive_idempotent_and_accounted(
            raw in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.001f64..1.0], 5), 4..12),
            strict in any::<bool>(),
            rows_first in any::<bool>(),
        ) {
            let n = raw.len();
            let opts = DesignOptions {
                column_rule: if strict { ColumnRule::AnyZero } else { ColumnRule::AllZero },
                order: if rows_first { FilterOrder::RowsFirst } else { FilterOrder::ColumnsFirst },
            };
            let Ok((d, y)) = build_design(&shares(raw), &target(n), opts) else { return Ok(()); };
            prop_assert!(d.x.iter().all(|&v| v > 0.0 && v.is_finite()));
            prop_assert_eq!(d.log.input_rows - d.n(), d.log.dropped(FilterAxis::Row));
            prop_assert_eq!(d.log.input_columns - d.p(), d.log.dropped(FilterAxis::Column));
            prop_assert_eq!(&y.ids, &d.rows);
            let (again, y2) = build_design(&d.to_shares(), &y, opts).unwrap();
            prop_assert_eq!(&again.x, &d.x);
            prop_assert_eq!(&again.rows, &d.rows);
            prop_assert!(again.log.events.is_empty());
            prop_assert_eq!(y2, y);
        }
    }
}
