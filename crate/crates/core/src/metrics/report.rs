//! Metric reports and their CSV / markdown renderings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: Option<f64>,
    pub rouge_l: Option<f64>,
    pub fq_gap: Option<f64>,
    pub ppl: Option<f64>,
    pub forget_quality_p: Option<f64>,
    pub model_utility: Option<f64>,
    pub verbmem: Option<f64>,
    pub knowmem_forget: Option<f64>,
    pub knowmem_retain: Option<f64>,
    pub privleak: Option<f64>,
    /// Per-subset values keyed `"<subset>/<metric>"`.
    #[serde(default)]
    pub breakdown: BTreeMap<String, f64>,
}

const UNIT_INTERVAL: [&str; 6] = [
    "bleu",
    "rouge_l",
    "forget_quality_p",
    "verbmem",
    "knowmem_forget",
    "knowmem_retain",
];

impl MetricsReport {
    /// Headline metrics in a fixed order, then the breakdown in key order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let headline = [
            ("bleu", self.bleu),
            ("rouge_l", self.rouge_l),
            ("fq_gap", self.fq_gap),
            ("ppl", self.ppl),
            ("forget_quality_p", self.forget_quality_p),
            ("model_utility", self.model_utility),
            ("verbmem", self.verbmem),
            ("knowmem_forget", self.knowmem_forget),
            ("knowmem_retain", self.knowmem_retain),
            ("privleak", self.privleak),
        ];
        headline
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .chain(self.breakdown.iter().map(|(k, v)| (k.clone(), *v)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("metric {name} is {v}")));
            }
            if UNIT_INTERVAL.contains(&name.as_str()) && !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(
                    "metrics report",
                    format!("{name} = {v} outside [0, 1]"),
                ));
            }
        }
        if matches!(self.ppl, Some(p) if p < 1.0 - 1e-12) {
            return Err(Error::domain("metrics report", "perplexity below 1"));
        }
        if matches!(self.model_utility, Some(m) if m <= 0.0) {
            return Err(Error::domain(
                "metrics report",
                "model utility must be positive",
            ));
        }
        if matches!(self.fq_gap, Some(g) if g < 0.0) {
            return Err(Error::domain("metrics report", "negative FQ gap"));
        }
        Ok(())
    }
}

/// One line of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub divergence: String,
    pub metric: String,
    pub value: f64,
}

/// Flattens a report; `divergence` is `"-"` for methods without one.
pub fn report_rows(
    method: &str,
    divergence: Option<&str>,
    report: &MetricsReport,
) -> Vec<ReportRow> {
    report
        .entries()
        .into_iter()
        .map(|(metric, value)| ReportRow {
            method: method.to_string(),
            divergence: divergence.unwrap_or("-").to_string(),
            metric,
            value,
        })
        .collect()
}

pub fn write_csv_to<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(file, rows)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

fn row_label(method: &str, divergence: &str) -> String {
    if divergence == "-" {
        method.to_string()
    } else {
        format!("{method} ({divergence})")
    }
}

/// Methods as rows, metrics as columns, both in first-seen order.
/// PrivLeak is shown in percent.
pub fn markdown_table(rows: &[ReportRow]) -> String {
    let mut labels: Vec<String> = Vec::new();
    let mut metrics: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in rows {
        let label = row_label(&r.method, &r.divergence);
        if !labels.contains(&label) {
            labels.push(label.clone());
        }
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric.clone());
        }
        cells.insert((label, r.metric.clone()), r.value);
    }
    let mut out = String::from("| Method |");
    for m in &metrics {
        if m == "privleak" {
            out.push_str(" privleak (%) |");
        } else {
            out.push_str(&format!(" {m} |"));
        }
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(metrics.len()));
    out.push('\n');
    for label in &labels {
        out.push_str(&format!("| {label} |"));
        for m in &metrics {
            match cells.get(&(label.clone(), m.clone())) {
                Some(v) if m == "privleak" => out.push_str(&format!(" {:.2} |", v * 100.0)),
                Some(v) if v.abs() >= 1e-3 || *v == 0.0 => out.push_str(&format!(" {v:.4} |")),
                Some(v) => out.push_str(&format!(" {v:.3e} |")),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsReport {
        let mut r = MetricsReport {
            bleu: Some(0.25),
            rouge_l: Some(0.5),
            ppl: Some(3.5),
            privleak: Some(0.2),
            ..Default::default()
        };
        r.breakdown.insert("retain/truth_ratio".into(), 0.7);
        r
    }

    #[test]
    fn entries_skip_missing_metrics() {
        let names: Vec<String> = sample().entries().into_iter().map(|e| e.0).collect();
        assert_eq!(
            names,
            ["bleu", "rouge_l", "ppl", "privleak", "retain/truth_ratio"]
        );
    }

    #[test]
    fn validation() {
        assert!(sample().validate().is_ok());
        let mut bad = sample();
        bad.bleu = Some(1.5);
        assert!(bad.validate().is_err());
        let mut bad = sample();
        bad.ppl = Some(f64::NAN);
        assert!(matches!(bad.validate(), Err(Error::Numerical(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = report_rows("ga", None, &sample());
        rows.extend(report_rows("flat", Some("kl"), &sample()));
        let text = csv_string(&rows).unwrap();
        assert!(text.starts_with("method,divergence,metric,value\nga,-,bleu,0.25\n"));
        assert_eq!(read_csv_from(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn markdown_layout() {
        let mut rows = report_rows("ga", None, &sample());
        rows.extend(report_rows(
            "flat",
            Some("kl"),
            &MetricsReport {
                bleu: Some(0.1),
                ..Default::default()
            },
        ));
        let md = markdown_table(&rows);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("privleak (%)"));
        assert!(lines[2].starts_with("| ga | 0.2500 | 0.5000 | 3.5000 | 20.00 |"));
        assert!(lines[3].starts_with("| flat (kl) | 0.1000 | - |"));
    }
}
