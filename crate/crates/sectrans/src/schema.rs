//! Versioned JSON documents read and written by the command-line tool.
//!
//! Every document carries `schema_version`. It is checked before the rest of
//! the document is decoded, so a version mismatch is reported as such rather
//! than as a confusing field error.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sectrans_core::milp::SynthesisResult;
use sectrans_core::model::{ModelError, QocCurve, SystemModel};
use sectrans_core::opportunistic::{OpportunisticOptions, SporadicTrafficModel};
use sectrans_core::qoc_sim::PlantModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed JSON: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: schema_version {found:?} is not supported (expected {SCHEMA_VERSION})")]
    Version { path: String, found: Option<u64> },
    #[error("{path}: {source}")]
    Model { path: String, source: ModelError },
    #[error("{0}")]
    Lp(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDoc {
    pub schema_version: u32,
    #[serde(flatten)]
    pub system: SystemModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDoc {
    pub f: u32,
    /// `(l, J)` pairs.
    pub points: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveDoc {
    pub plant_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub series: Vec<SeriesDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvesDoc {
    pub schema_version: u32,
    pub curves: Vec<CurveDoc>,
}

impl CurvesDoc {
    /// Entries with `l < f` are dropped; everything else goes through the
    /// curve's own validation.
    pub fn to_curves(&self) -> Result<Vec<QocCurve>, ModelError> {
        self.curves
            .iter()
            .map(|c| {
                let points = c
                    .series
                    .iter()
                    .flat_map(|s| s.points.iter().filter(move |&&(l, _)| l >= s.f).map(move |&(l, j)| (l, s.f, j)));
                QocCurve::from_points(&c.plant_id, points)
            })
            .collect()
    }

    pub fn from_curves(curves: &[QocCurve]) -> Self {
        let curves = curves
            .iter()
            .map(|c| CurveDoc {
                plant_id: c.plant_id.clone(),
                note: None,
                series: c.block_lengths().into_iter().map(|f| SeriesDoc { f, points: c.series(f) }).collect(),
            })
            .collect();
        CurvesDoc { schema_version: SCHEMA_VERSION, curves }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantsDoc {
    pub schema_version: u32,
    pub plants: Vec<PlantModel>,
}

/// Decoded without `flatten`, which cannot read the integer-keyed assignment map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value")]
pub struct SolutionDoc {
    pub schema_version: u32,
    #[serde(flatten)]
    pub result: SynthesisResult,
}

impl TryFrom<serde_json::Value> for SolutionDoc {
    type Error = serde_json::Error;

    fn try_from(mut value: serde_json::Value) -> Result<Self, Self::Error> {
        let version = value.as_object_mut().and_then(|m| m.remove("schema_version"));
        let schema_version = serde_json::from_value(version.unwrap_or_default())?;
        Ok(SolutionDoc { schema_version, result: serde_json::from_value(value)? })
    }
}

/// Settings of an opportunistic run that do not fit on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpportunisticConfigDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default = "one")]
    pub min_gain: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sporadic: Option<SporadicTrafficModel>,
}

fn one() -> u32 {
    1
}

impl OpportunisticConfigDoc {
    pub fn options(&self, horizon: i64, seed: u64) -> OpportunisticOptions {
        OpportunisticOptions { weights: self.weights.clone(), min_gain: self.min_gain, horizon, seed }
    }
}

/// Reads `path`, checks `schema_version` and decodes the rest.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io { path: shown.clone(), source })?;
    parse(&text, &shown)
}

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, FormatError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|source| FormatError::Json { path: origin.into(), source })?;
    let found = value.get("schema_version").and_then(serde_json::Value::as_u64);
    if found != Some(u64::from(SCHEMA_VERSION)) {
        return Err(FormatError::Version { path: origin.into(), found });
    }
    serde_json::from_value(value).map_err(|source| FormatError::Json { path: origin.into(), source })
}

/// Pretty JSON with a trailing newline, so identical values give identical bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn save<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    fs::write(path, to_json(value)).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_checked_first() {
        let e = parse::<SystemDoc>(r#"{"schema_version": 2, "ecus": []}"#, "x").unwrap_err();
        assert!(matches!(e, FormatError::Version { found: Some(2), .. }));
        let e = parse::<SystemDoc>(r#"{"ecus": []}"#, "x").unwrap_err();
        assert!(matches!(e, FormatError::Version { found: None, .. }));
        assert!(matches!(parse::<SystemDoc>("{", "x"), Err(FormatError::Json { .. })));
    }

    #[test]
    fn short_entries_are_dropped_from_curves() {
        let doc = CurvesDoc {
            schema_version: 1,
            curves: vec![CurveDoc {
                plant_id: "P".into(),
                note: None,
                series: vec![SeriesDoc { f: 2, points: vec![(1, 0.1), (2, 0.2), (3, 0.3)] }],
            }],
        };
        let curves = doc.to_curves().unwrap();
        assert_eq!(curves[0].series(2), vec![(2, 0.2), (3, 0.3)]);
        assert_eq!(CurvesDoc::from_curves(&curves).to_curves().unwrap(), curves);
    }
}
