//! Per-round metrics series and its CSV schema.

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

/// One row of the per-round metrics series. Column order in the CSV export
/// follows the field order here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub round: u32,
    pub total_residual_j: f64,
    pub mean_residual_j: f64,
    pub alive_count: u32,
    pub records_delivered: u32,
    pub elections_held: u32,
    pub bytes_on_air: u64,
}

pub const CSV_HEADER: &str =
    "round,total_residual_j,mean_residual_j,alive_count,records_delivered,elections_held,bytes_on_air";

/// Serializes a series: header plus one row per round, decimals at fixed
/// 6-digit precision, newline-terminated. Byte-identical for equal input.
pub fn export_csv(series: &[MetricsSample]) -> String {
    let mut out = String::with_capacity(64 * (series.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in series {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{}\n",
            s.round,
            s.total_residual_j,
            s.mean_residual_j,
            s.alive_count,
            s.records_delivered,
            s.elections_held,
            s.bytes_on_air
        ));
    }
    out
}

/// Parses a series produced by `export_csv`.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsSample>, ScenarioError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(ScenarioError::Validation(format!(
                "unexpected metrics CSV header: {:?}",
                other
            )))
        }
    }
    let mut series = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(ScenarioError::Validation(format!(
                "metrics CSV row {} has {} fields, expected 7",
                i + 2,
                fields.len()
            )));
        }
        let parse_err = |what: &str| {
            ScenarioError::Validation(format!("metrics CSV row {}: bad {}", i + 2, what))
        };
        series.push(MetricsSample {
            round: fields[0].parse().map_err(|_| parse_err("round"))?,
            total_residual_j: fields[1]
                .parse()
                .map_err(|_| parse_err("total_residual_j"))?,
            mean_residual_j: fields[2]
                .parse()
                .map_err(|_| parse_err("mean_residual_j"))?,
            alive_count: fields[3].parse().map_err(|_| parse_err("alive_count"))?,
            records_delivered: fields[4]
                .parse()
                .map_err(|_| parse_err("records_delivered"))?,
            elections_held: fields[5].parse().map_err(|_| parse_err("elections_held"))?,
            bytes_on_air: fields[6].parse().map_err(|_| parse_err("bytes_on_air"))?,
        });
    }
    Ok(series)
}

/// Round index of the first sample where a node has died, if any.
pub fn first_death_round(series: &[MetricsSample], initial_nodes: u32) -> Option<u32> {
    series
        .iter()
        .find(|s| s.alive_count < initial_nodes)
        .map(|s| s.round)
}
