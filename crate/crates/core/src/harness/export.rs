//! CSV/JSON output of experiment rows, summaries and ROC curves.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{ExperimentRow, HarnessError, SummaryReport};
use crate::evaluation::{roc_sweep_with, RocCurve};
use crate::format;
use crate::optimizer::AdaptConfig;
use crate::similarity::SimilarityDistributions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ExportFormat::Json,
            _ => ExportFormat::Csv,
        }
    }
}

pub fn write_rows_csv<W: Write>(rows: &[ExperimentRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ExperimentRow::FIELDS)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.threshold_kind.to_string(),
            format::real(r.lambda),
            format::real(r.precision),
            format::real(r.recall),
            format::real(r.f1),
            format::real(r.accuracy),
            format::real(r.tpr),
            format::real(r.fpr),
            r.auc.map(format::real).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<ExperimentRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(ExperimentRow::FIELDS) {
        return Err(HarnessError::Malformed(format!(
            "unexpected header {header:?}"
        )));
    }
    let real = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| HarnessError::Malformed(format!("`{s}` is not a number")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ExperimentRow {
            step: rec[0]
                .parse()
                .map_err(|_| HarnessError::Malformed(format!("bad step `{}`", &rec[0])))?,
            threshold_kind: rec[1].parse()?,
            lambda: real(&rec[2])?,
            precision: real(&rec[3])?,
            recall: real(&rec[4])?,
            f1: real(&rec[5])?,
            accuracy: real(&rec[6])?,
            tpr: real(&rec[7])?,
            fpr: real(&rec[8])?,
            auc: if rec[9].is_empty() {
                None
            } else {
                Some(real(&rec[9])?)
            },
        });
    }
    Ok(rows)
}

pub fn export_rows(
    rows: &[ExperimentRow],
    path: &Path,
    format: ExportFormat,
) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ExportFormat::Csv => write_rows_csv(rows, &mut out)?,
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn export_summary(
    report: &SummaryReport,
    path: &Path,
    format: ExportFormat,
) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "threshold_kind",
                "steps",
                "mean_accuracy_pct",
                "auc",
                "f1_at_least_0_8_pct",
            ])?;
            for k in &report.kinds {
                w.write_record([
                    k.threshold_kind.to_string(),
                    k.steps.to_string(),
                    format::real(k.mean_accuracy_pct),
                    k.auc.map(format::real).unwrap_or_default(),
                    format::real(k.f1_at_least_0_8_pct),
                ])?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `lambda,fpr,tpr` per ROC point, then a `# auc=…` comment line.
pub fn write_roc_csv<W: Write>(curve: &RocCurve, mut writer: W) -> Result<(), HarnessError> {
    {
        let mut w = csv::Writer::from_writer(&mut writer);
        w.write_record(["lambda", "fpr", "tpr"])?;
        for p in &curve.points {
            w.write_record([
                format::real(p.lambda),
                format::real(p.fpr),
                format::real(p.tpr),
            ])?;
        }
        w.flush()?;
    }
    writeln!(writer, "# auc={}", format::real(curve.auc))?;
    Ok(())
}

/// Sweeps `num_points` thresholds and writes the curve to `path`.
pub fn roc_export(
    dist: &SimilarityDistributions,
    config: &AdaptConfig,
    num_points: usize,
    path: &Path,
) -> Result<RocCurve, HarnessError> {
    let curve = roc_sweep_with(dist, num_points, config.epsilon, config.tpr_denominator)?;
    let mut out = BufWriter::new(File::create(path)?);
    write_roc_csv(&curve, &mut out)?;
    out.flush()?;
    Ok(curve)
}
