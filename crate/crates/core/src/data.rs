//! Survival dataset container and CSV ingestion.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column tag for a covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

/// Right-censored survival data: one row per subject with an observed time,
/// an event indicator, a treatment-arm indicator, and covariates.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<u8>,
    treatments: Vec<u8>,
    covariates: Array2<f64>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
}

impl SurvivalDataset {
    pub fn new(
        times: Vec<f64>,
        events: Vec<u8>,
        treatments: Vec<u8>,
        covariates: Array2<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if events.len() != n || treatments.len() != n || covariates.nrows() != n {
            return Err(Error::Dimension(format!(
                "inconsistent row counts: times={}, events={}, treatments={}, covariates={}",
                n,
                events.len(),
                treatments.len(),
                covariates.nrows()
            )));
        }
        if feature_names.len() != covariates.ncols() {
            return Err(Error::Dimension(format!(
                "{} feature names for {} covariate columns",
                feature_names.len(),
                covariates.ncols()
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Data(format!(
                    "time at row {i} must be strictly positive and finite, got {t}"
                )));
            }
        }
        for (i, &e) in events.iter().enumerate() {
            if e > 1 {
                return Err(Error::Data(format!("event at row {i} must be 0 or 1")));
            }
        }
        for (i, &z) in treatments.iter().enumerate() {
            if z > 1 {
                return Err(Error::Data(format!("treatment at row {i} must be 0 or 1")));
            }
        }
        if let Some(((i, j), v)) = covariates
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ij, v)| (ij, *v))
        {
            return Err(Error::Data(format!(
                "covariate `{}` at row {i} is not finite ({v})",
                feature_names.get(j).map(String::as_str).unwrap_or("?")
            )));
        }
        let feature_kinds = infer_kinds(&covariates);
        Ok(Self {
            times,
            events,
            treatments,
            covariates,
            feature_names,
            feature_kinds,
        })
    }

    /// Loads a dataset from CSV. The header must contain `time`, `event` and
    /// `treatment`; every remaining column is a covariate. Missing cells are
    /// a load-time error.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        Self::from_csv_reader(&mut reader)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Self> {
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("missing required column `{name}`")))
        };
        let time_col = find("time")?;
        let event_col = find("event")?;
        let treat_col = find("treatment")?;
        let reserved = [time_col, event_col, treat_col];
        let cov_cols: Vec<usize> = (0..headers.len()).filter(|c| !reserved.contains(c)).collect();
        let feature_names: Vec<String> = cov_cols.iter().map(|&c| headers[c].clone()).collect();

        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut treatments = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "row {row_idx} has {} fields, expected {}",
                    record.len(),
                    headers.len()
                )));
            }
            let cell = |col: usize| -> Result<f64> {
                let raw = record.get(col).unwrap_or("").trim();
                if raw.is_empty() {
                    return Err(Error::Data(format!(
                        "missing value in column `{}` at row {row_idx}",
                        headers[col]
                    )));
                }
                raw.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "cannot parse `{raw}` in column `{}` at row {row_idx}",
                        headers[col]
                    ))
                })
            };
            times.push(cell(time_col)?);
            events.push(parse_indicator(cell(event_col)?, "event", row_idx)?);
            treatments.push(parse_indicator(cell(treat_col)?, "treatment", row_idx)?);
            for &c in &cov_cols {
                values.push(cell(c)?);
            }
        }
        let n = times.len();
        let covariates = Array2::from_shape_vec((n, cov_cols.len()), values)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(times, events, treatments, covariates, feature_names)
    }

    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn n_features(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[u8] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e == 1).count()
    }

    /// Events within one treatment arm.
    pub fn n_events_in_arm(&self, arm: u8) -> usize {
        self.events
            .iter()
            .zip(&self.treatments)
            .filter(|&(&e, &z)| e == 1 && z == arm)
            .count()
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatments
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.covariates.row(i)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }
}

fn parse_indicator(v: f64, what: &str, row: usize) -> Result<u8> {
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Data(format!(
            "{what} at row {row} must be 0 or 1, got {v}"
        )))
    }
}

fn infer_kinds(covariates: &Array2<f64>) -> Vec<FeatureKind> {
    (0..covariates.ncols())
        .map(|j| {
            if covariates.column(j).iter().all(|&v| v == 0.0 || v == 1.0) {
                FeatureKind::Binary
            } else {
                FeatureKind::Continuous
            }
        })
        .collect()
}
