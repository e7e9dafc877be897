//! Published results shipped as fixtures so the tables, plots and hypothesis
//! tests can be regenerated without retraining.
//!
//! The Wilcoxon pairings are a reconstruction: the original analysis does not
//! enumerate which experiments were paired. Here a pair is one
//! (dataset, setting) cell of a base model and its variant.

use serde::Deserialize;

use super::{AccuracyReport, EvalReport, PairedResults, QualityReport};
use crate::error::Result;
use crate::metrics::{QualityRow, SsimMode};

const TABLES: &str = include_str!("../../fixtures/thesis_tables.json");

/// Reported Spearman coefficients and p-values (PSNR, SSIM vs accuracy).
pub const SPEARMAN_PSNR: (f64, f64) = (-0.3625, 5.671e-07);
pub const SPEARMAN_SSIM: (f64, f64) = (0.1159, 0.121);
/// Reported Wilcoxon p-values for the CoordConv and FaceLoss hypotheses.
pub const WILCOXON_COORD_P: f64 = 0.083;
pub const WILCOXON_FACELOSS_P: f64 = 0.03;

/// Base/variant pairs for the CoordConv hypothesis.
pub const COORD_PAIRS: [(&str, &str); 4] = [
    ("SRCNN", "SRCNN Coord"),
    ("SubCNN", "SubCNN Coord"),
    ("FSRCNN", "FSRCNN Coord"),
    ("SRGAN", "SRGAN Coord"),
];

/// Base/variant pairs for the FaceLoss hypothesis.
pub const FACELOSS_PAIRS: [(&str, &str); 2] = [("SRGAN", "SRGAN FaceLoss"), ("SRGAN Coord", "SRGAN Coord FaceLoss")];

#[derive(Deserialize)]
struct Tables {
    quality: Vec<QualityRow>,
    accuracy: Vec<AccuracyReport>,
}

fn tables() -> Tables {
    serde_json::from_str(TABLES).expect("fixture parses")
}

/// Validation quality table (4× upscaling, 2,000 images).
pub fn quality_report() -> QualityReport {
    QualityReport {
        title: "Validation metric results for 4x upscaling".into(),
        ssim_mode: SsimMode::RgbMean,
        rows: tables().quality,
    }
}

/// Rank-1 accuracy tables: the watch-list dataset then three classrooms.
pub fn accuracy_reports() -> Vec<AccuracyReport> {
    tables().accuracy
}

pub fn all_reports() -> Vec<EvalReport> {
    let mut v = vec![EvalReport::Quality(quality_report())];
    v.extend(accuracy_reports().into_iter().map(EvalReport::Accuracy));
    v
}

/// Paired accuracies of each (base, variant) pair over every dataset and
/// setting cell.
pub fn paired_accuracies(pairs: &[(&str, &str)]) -> Result<PairedResults> {
    let reports = accuracy_reports();
    let (mut labels, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for r in &reports {
        let row = |name: &str| r.rows.iter().find(|x| x.model == name).expect("model in fixture");
        for (c, setting) in r.settings.iter().enumerate() {
            for (base, variant) in pairs {
                labels.push(format!("{}/{}/{}", r.dataset, setting.cli_name(), variant));
                a.push(row(base).cells[c].expect("complete table"));
                b.push(row(variant).cells[c].expect("complete table"));
            }
        }
    }
    PairedResults::new(labels, a, b)
}

/// (PSNR, accuracy) and (SSIM, accuracy) points over every method and
/// accuracy cell.
pub fn quality_vs_accuracy() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let quality = quality_report();
    let (mut psnr, mut ssim, mut acc) = (Vec::new(), Vec::new(), Vec::new());
    for r in accuracy_reports() {
        for (c, _) in r.settings.iter().enumerate() {
            for row in &r.rows {
                let q = quality.rows.iter().find(|q| q.model == row.model).expect("model in quality table");
                psnr.push(q.psnr_db);
                ssim.push(q.ssim);
                acc.push(row.cells[c].expect("complete table"));
            }
        }
    }
    (psnr, ssim, acc)
}
