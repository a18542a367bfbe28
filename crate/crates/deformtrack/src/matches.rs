//! Match files: a JSON array of
//! `{template_point, observed_point, weight?, preselected?}` records.

use std::path::Path;

use deformtrack_core::geom::Vec3;
use deformtrack_core::matching::MatchSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub template_point: [f64; 3],
    pub observed_point: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preselected: Option<bool>,
}

/// Output of a standalone preselection; also accepted as match input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchDocument {
    pub matches: Vec<MatchRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Input {
    Records(Vec<MatchRecord>),
    Document(MatchDocument),
}

pub fn records(matches: &MatchSet) -> Vec<MatchRecord> {
    matches
        .pairs
        .iter()
        .zip(&matches.weights)
        .zip(&matches.preselected)
        .map(|(((a, b), &w), &p)| MatchRecord {
            template_point: [a.x, a.y, a.z],
            observed_point: [b.x, b.y, b.z],
            weight: Some(w),
            preselected: Some(p),
        })
        .collect()
}

/// Missing weights default to 1 and missing flags to `false`.
pub fn to_match_set(records: &[MatchRecord], path: &Path) -> Result<MatchSet> {
    let mut set = MatchSet::default();
    for (i, r) in records.iter().enumerate() {
        let finite = r.template_point.iter().chain(&r.observed_point).all(|v| v.is_finite());
        if !finite {
            return Err(Error::format(path, format!("match {i}: non-finite coordinate")));
        }
        let w = r.weight.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::format(path, format!("match {i}: weight {w} outside [0, 1]")));
        }
        set.pairs.push((Vec3::from(r.template_point), Vec3::from(r.observed_point)));
        set.weights.push(w);
        set.preselected.push(r.preselected.unwrap_or(false));
    }
    Ok(set)
}

pub fn read_matches(path: &Path) -> Result<MatchSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let input: Input = serde_json::from_str(&text).or_else(|_| {
        // re-parse strictly as an array for a precise message
        serde_json::from_str::<Vec<MatchRecord>>(&text)
            .map(Input::Records)
            .map_err(|e| Error::format(path, e.to_string()))
    })?;
    let recs = match input {
        Input::Records(r) => r,
        Input::Document(d) => d.matches,
    };
    to_match_set(&recs, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
