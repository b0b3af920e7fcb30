use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FeaturizeError, Result};
use crate::audience::natural_cmp;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Income, strata: positive coefficients mean wealthier.
    #[default]
    HigherIsWealthier,
    /// Poverty rates: positive coefficients mean poorer.
    HigherIsPoorer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorMeta {
    pub name: String,
    pub unit: String,
    pub orientation: Orientation,
}

/// Socioeconomic indicator per administrative unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
    pub meta: IndicatorMeta,
}

impl TargetVector {
    pub fn new(ids: Vec<String>, values: Vec<f64>, meta: IndicatorMeta) -> Result<Self> {
        if ids.len() != values.len() {
            return Err(FeaturizeError::Target(format!("{} ids but {} values", ids.len(), values.len())));
        }
        let mut seen = HashSet::new();
        for (id, v) in ids.iter().zip(&values) {
            if !v.is_finite() {
                return Err(FeaturizeError::Target(format!("non-finite value for unit `{id}`")));
            }
            if !seen.insert(id.as_str()) {
                return Err(FeaturizeError::Target(format!("duplicate unit `{id}`")));
            }
        }
        Ok(Self { ids, values, meta })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|u| u == id).map(|i| self.values[i])
    }

    /// Reads `unit_id,value` rows; output is in natural id order.
    pub fn read_csv<R: Read>(r: R, meta: IndicatorMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let (Some(id), Some(v)) = (rec.get(0), rec.get(1)) else {
                return Err(FeaturizeError::Target(format!("row {} needs unit_id,value", line + 2)));
            };
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| FeaturizeError::Target(format!("row {}: `{v}` is not a number", line + 2)))?;
            rows.push((id.trim().to_string(), v));
        }
        rows.sort_by(|a, b| natural_cmp(&a.0, &b.0));
        let (ids, values) = rows.into_iter().unzip();
        Self::new(ids, values, meta)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit_id", "value"])?;
        for (id, v) in self.ids.iter().zip(&self.values) {
            out.write_record([id.as_str(), &v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
