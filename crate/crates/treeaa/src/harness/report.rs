use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sim::Round;
use crate::tree_aa::Mode;

pub const CSV_HEADER: &str = "seed,mode,n,t,tree_kind,vertices,diameter,rounds,lb_rounds,max_dist,valid";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(HarnessError::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: Mode,
    pub n: usize,
    pub t: usize,
    pub adversary: String,
    pub tree_kind: String,
    pub vertices: usize,
    pub diameter: usize,
    pub rounds: Round,
    pub lb_rounds: u32,
    pub max_dist: usize,
    pub valid: bool,
    /// Output label per honest party id.
    pub outputs: BTreeMap<u32, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.valid && self.max_dist <= 1
    }
}

pub fn emit_report(reports: &[RunReport], format: Format) -> Result<String, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(reports)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
            w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
            for r in reports {
                w.write_record([
                    r.seed.to_string(),
                    r.mode.name().to_string(),
                    r.n.to_string(),
                    r.t.to_string(),
                    r.tree_kind.clone(),
                    r.vertices.to_string(),
                    r.diameter.to_string(),
                    r.rounds.to_string(),
                    r.lb_rounds.to_string(),
                    r.max_dist.to_string(),
                    r.valid.to_string(),
                ])
                .map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| HarnessError::Csv(e.to_string()))
        }
    }
}

pub fn parse_json_reports(text: &str) -> Result<Vec<RunReport>, HarnessError> {
    Ok(serde_json::from_str(text)?)
}
