use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plots::grouped_bar_chart;
use crate::error::{Error, Result};
use crate::metrics::{format_db, QualityRow, SsimMode};
use crate::recognition::CropSetting;

/// A Table-2-style quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub title: String,
    pub ssim_mode: SsimMode,
    pub rows: Vec<QualityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    /// Rank-1 accuracy in percent, aligned with the report's settings.
    pub cells: Vec<Option<f64>>,
}

/// Rank-1 accuracy of every method under each crop setting on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub dataset: String,
    pub title: String,
    pub task: String,
    pub settings: Vec<CropSetting>,
    pub rows: Vec<AccuracyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvalReport {
    Quality(QualityReport),
    Accuracy(AccuracyReport),
}

/// Indices of the rows holding the best value of a column.
fn best_rows(values: &[Option<f64>], higher_is_better: bool) -> Vec<usize> {
    let best = values.iter().flatten().copied().fold(None, |acc: Option<f64>, v| match acc {
        None => Some(v),
        Some(a) if (higher_is_better && v > a) || (!higher_is_better && v < a) => Some(v),
        keep => keep,
    });
    match best {
        None => Vec::new(),
        Some(b) => values.iter().enumerate().filter(|(_, v)| **v == Some(b)).map(|(i, _)| i).collect(),
    }
}

fn cell(text: String, bold: bool) -> String {
    if bold {
        format!("**{text}**")
    } else {
        text
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct QualityJson<'a> {
    #[serde(flatten)]
    report: &'a QualityReport,
    best: BestQuality,
}

#[derive(Serialize)]
struct BestQuality {
    psnr_db: Vec<usize>,
    ssim: Vec<usize>,
    avg_inference_seconds: Vec<usize>,
    fps: Vec<usize>,
}

#[derive(Serialize)]
struct AccuracyJson<'a> {
    #[serde(flatten)]
    report: &'a AccuracyReport,
    best: Vec<Vec<usize>>,
}

fn quality_markdown(r: &QualityReport) -> (String, BestQuality) {
    let col = |f: &dyn Fn(&QualityRow) -> f64| r.rows.iter().map(|row| Some(f(row))).collect::<Vec<_>>();
    let best = BestQuality {
        psnr_db: best_rows(&col(&|x| x.psnr_db), true),
        ssim: best_rows(&col(&|x| x.ssim), true),
        avg_inference_seconds: best_rows(&col(&|x| x.avg_inference_seconds), false),
        fps: best_rows(&col(&|x| x.fps), true),
    };
    let mut md = String::new();
    let _ = writeln!(md, "## {}\n", r.title);
    let mode = match r.ssim_mode {
        SsimMode::RgbMean => "mean over RGB",
        SsimMode::Luma => "luma",
    };
    let _ = writeln!(md, "SSIM computed on: {mode}\n");
    md.push_str("| Method | PSNR | SSIM | Avg. inference (s) | FPS | Channel |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for (i, row) in r.rows.iter().enumerate() {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            row.model,
            cell(format_db(row.psnr_db), best.psnr_db.contains(&i)),
            cell(format!("{:.4}", row.ssim), best.ssim.contains(&i)),
            cell(format!("{:.4}", row.avg_inference_seconds), best.avg_inference_seconds.contains(&i)),
            cell(format!("{:.2}", row.fps), best.fps.contains(&i)),
            row.channel
        );
    }
    (md, best)
}

fn accuracy_markdown(r: &AccuracyReport) -> (String, Vec<Vec<usize>>) {
    let best: Vec<Vec<usize>> = (0..r.settings.len())
        .map(|c| best_rows(&r.rows.iter().map(|row| row.cells.get(c).copied().flatten()).collect::<Vec<_>>(), true))
        .collect();
    let mut md = String::new();
    let _ = writeln!(md, "## {}\n", r.title);
    let _ = writeln!(md, "Rank-1 accuracy (%), task: {}\n", r.task);
    md.push_str("| Method |");
    for s in &r.settings {
        let _ = write!(md, " {} |", s.label());
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(r.settings.len()));
    md.push('\n');
    for (i, row) in r.rows.iter().enumerate() {
        let _ = write!(md, "| {} |", row.model);
        for c in 0..r.settings.len() {
            let text = match row.cells.get(c).copied().flatten() {
                Some(v) => cell(format!("{v:.2}"), best[c].contains(&i)),
                None => "-".into(),
            };
            let _ = write!(md, " {text} |");
        }
        md.push('\n');
    }
    (md, best)
}

/// Writes `quality.md`/`quality.json` for quality records and
/// `accuracy_<dataset>.{md,json,svg}` for each accuracy record. Best values per
/// column are bold in markdown and listed by row index in JSON.
pub fn emit_report(records: &[EvalReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let quality: Vec<&QualityReport> = records
        .iter()
        .filter_map(|r| match r {
            EvalReport::Quality(q) => Some(q),
            _ => None,
        })
        .collect();
    if !quality.is_empty() {
        let mut md = String::new();
        let mut json = Vec::new();
        for q in &quality {
            let (text, best) = quality_markdown(q);
            md.push_str(&text);
            md.push('\n');
            json.push(QualityJson { report: q, best });
        }
        let (md_path, json_path) = (out_dir.join("quality.md"), out_dir.join("quality.json"));
        write(&md_path, &md)?;
        write(&json_path, &(serde_json::to_string_pretty(&json)? + "\n"))?;
        written.extend([md_path, json_path]);
    }
    for r in records {
        let EvalReport::Accuracy(a) = r else { continue };
        let stem = format!("accuracy_{}", slug(&a.dataset));
        let (md, best) = accuracy_markdown(a);
        let md_path = out_dir.join(format!("{stem}.md"));
        let json_path = out_dir.join(format!("{stem}.json"));
        let svg_path = out_dir.join(format!("{stem}.svg"));
        write(&md_path, &md)?;
        write(&json_path, &(serde_json::to_string_pretty(&AccuracyJson { report: a, best })? + "\n"))?;
        let categories: Vec<String> = a.rows.iter().map(|r| r.model.clone()).collect();
        let series: Vec<(String, Vec<Option<f64>>)> = a
            .settings
            .iter()
            .enumerate()
            .map(|(c, s)| (s.label().to_string(), a.rows.iter().map(|r| r.cells.get(c).copied().flatten()).collect()))
            .collect();
        grouped_bar_chart(&svg_path, &a.title, "Rank-1 accuracy (%)", &categories, &series)?;
        written.extend([md_path, json_path, svg_path]);
    }
    Ok(written)
}
