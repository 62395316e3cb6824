use std::str::FromStr;

use super::metrics::MetricsRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::config(format!("unknown report format `{s}` (md|csv)"))),
        }
    }
}

pub fn emit_report(records: &[MetricsRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => markdown(records),
        ReportFormat::Csv => csv_text(records),
    }
}

fn best<T: Copy + PartialOrd>(vals: impl Iterator<Item = Option<T>>) -> Option<T> {
    vals.flatten()
        .fold(None, |acc, v| match acc {
            Some(a) if a <= v => Some(a),
            _ => Some(v),
        })
}

fn cell(text: String, bold: bool) -> String {
    if bold {
        format!("**{text}**")
    } else {
        text
    }
}

fn markdown(records: &[MetricsRecord]) -> String {
    let many = records.len() > 1;
    let b_rel = best(records.iter().map(|r| r.rel_l2_pct));
    let b_mae = best(records.iter().map(|r| Some(r.mae)));
    let b_time = best(records.iter().map(|r| r.s_per_epoch));
    let b_par = best(records.iter().map(|r| Some(r.params)));
    let mut out = String::from("| Model | Dataset | RelL2% | MAE | s/epoch | Params |\n|---|---|---:|---:|---:|---:|\n");
    for r in records {
        let rel = match r.rel_l2_pct {
            Some(v) => cell(format!("{v:.2}"), many && Some(v) == b_rel),
            None => "n/a".into(),
        };
        let time = match r.s_per_epoch {
            Some(v) => cell(format!("{v:.2}"), many && Some(v) == b_time),
            None => "-".into(),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.model,
            r.dataset,
            rel,
            cell(format!("{:.2e}", r.mae), many && Some(r.mae) == b_mae),
            time,
            cell(r.params.to_string(), many && Some(r.params) == b_par),
        ));
    }
    out
}

fn csv_text(records: &[MetricsRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Reads records written by [`emit_report`] in CSV form.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Format {
                path: "<csv>".into(),
                offset: e.position().map(|p| p.byte()).unwrap_or(0),
                msg: format!("record {i}: {e}"),
            })
        })
        .collect()
}
