use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// CSV header, in column order. Undefined metrics are empty cells.
pub const CSV_COLUMNS: [&str; 25] = [
    "geometry",
    "segmenter",
    "foreground_fraction",
    "tp",
    "tn",
    "fp",
    "fn",
    "sensitivity",
    "specificity",
    "precision",
    "dice",
    "jaccard",
    "volume_similarity",
    "chamfer_sq_mm2",
    "chamfer_mm",
    "ahd_mm",
    "rmse_mm",
    "segmentation_threshold",
    "landmark_rmse_mm",
    "ransac_fitness",
    "ransac_inlier_rmse_mm",
    "ransac_iterations",
    "icp_fitness",
    "icp_inlier_rmse_mm",
    "icp_iterations",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn row(r: &MetricsReport) -> Vec<String> {
    let v = &r.voxel;
    let s = &r.surface;
    let g = &r.registration;
    let segmenter = serde_json::to_value(r.segmenter).ok().and_then(|x| x.as_str().map(str::to_owned)).unwrap_or_default();
    vec![
        r.geometry.clone(),
        segmenter,
        format!("{:?}", r.foreground_fraction),
        v.counts.tp.to_string(),
        v.counts.tn.to_string(),
        v.counts.fp.to_string(),
        v.counts.fn_.to_string(),
        opt(v.sensitivity),
        opt(v.specificity),
        opt(v.precision),
        opt(v.dice),
        opt(v.jaccard),
        opt(v.volume_similarity),
        format!("{:?}", s.chamfer_sq_mm2),
        format!("{:?}", s.chamfer_mm),
        format!("{:?}", s.ahd_mm),
        format!("{:?}", s.rmse_mm),
        opt(r.segmentation.threshold),
        format!("{:?}", r.alignment.landmark_rmse_mm),
        format!("{:?}", g.ransac.fitness),
        format!("{:?}", g.ransac.inlier_rmse_mm),
        g.ransac.iterations.to_string(),
        format!("{:?}", g.icp.fitness),
        format!("{:?}", g.icp.inlier_rmse_mm),
        g.icp.iterations.to_string(),
    ]
}

fn to_csv(reports: &[MetricsReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes one JSON object, or one CSV row, per report.
pub fn write_report(reports: &[MetricsReport], path: &Path, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports)?;
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => to_csv(reports)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<Vec<MetricsReport>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
