use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalConfig;
use crate::components::Connectivity;
use crate::datasets::Exclusion;
use crate::error::{Error, Result};
use crate::metrics::{ApResult, F1Result, McResult, MetricId, WsolResult};

/// Every metric of a run; `None` for metrics that were not selected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricResults {
    pub max_3d_box_acc: Option<WsolResult>,
    pub max_3d_box_acc_v2: Option<WsolResult>,
    pub vxap: Option<ApResult>,
    pub max_f1: Option<F1Result>,
    pub max_box_acc: Option<WsolResult>,
    pub max_box_acc_v2: Option<WsolResult>,
    pub pxap: Option<ApResult>,
    pub mass_concentration: Option<McResult>,
}

impl MetricResults {
    /// Column values of one metric, if it was computed.
    pub fn values(&self, m: MetricId) -> Option<Vec<f64>> {
        let wsol = |r: &Option<WsolResult>| r.as_ref().map(|r| vec![r.value]);
        match m {
            MetricId::Max3DBoxAcc => wsol(&self.max_3d_box_acc),
            MetricId::Max3DBoxAccV2 => wsol(&self.max_3d_box_acc_v2),
            MetricId::VxAP => self.vxap.as_ref().map(|r| vec![r.value]),
            MetricId::MaxF1 => self
                .max_f1
                .as_ref()
                .map(|r| vec![r.max_f1, r.prec_at_f1, r.rec_at_f1]),
            MetricId::MaxBoxAcc => wsol(&self.max_box_acc),
            MetricId::MaxBoxAccV2 => wsol(&self.max_box_acc_v2),
            MetricId::PxAP => self.pxap.as_ref().map(|r| vec![r.value]),
            MetricId::MassConcentration => self.mass_concentration.as_ref().map(|r| vec![r.value]),
        }
    }

    /// `(column, value)` for every computed metric, in column order.
    pub fn row(&self) -> Vec<(&'static str, f64)> {
        MetricId::ALL
            .into_iter()
            .filter_map(|m| self.values(m).map(|v| m.columns().iter().copied().zip(v)))
            .flatten()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    /// The configuration that produced this report, for file-based runs.
    pub config: Option<EvalConfig>,
    pub thresholds: Vec<f64>,
    pub connectivity: Connectivity,
    /// Evaluated samples; per-sample traces follow this order.
    pub sample_ids: Vec<String>,
    pub results: MetricResults,
    /// Samples deliberately left out (negatives).
    pub exclusions: Vec<Exclusion>,
    /// Samples that failed to load.
    pub errors: Vec<Exclusion>,
    pub seconds_per_sample: Vec<f64>,
}

impl MetricReport {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Validation(format!("unknown report format {s:?}"))),
        }
    }
}

/// JSON carries everything; CSV is one `dataset,<metric columns>` row, or
/// just the header when no metric was computed.
pub fn emit_report(report: &MetricReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let row = report.results.row();
            let mut out = String::from("dataset");
            for (c, _) in &row {
                write!(out, ",{c}").expect("write to string");
            }
            out.push('\n');
            if row.is_empty() {
                return Ok(out.into_bytes());
            }
            out.push_str(&csv_field(&report.dataset));
            for (_, v) in &row {
                write!(out, ",{v}").expect("write to string");
            }
            out.push('\n');
            Ok(out.into_bytes())
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
