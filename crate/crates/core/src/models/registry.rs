use super::{Family, SRModelSpec};
use crate::error::{Error, Result};

pub const BICUBIC: &str = "bicubic";

const CANONICAL: [(&str, Family, bool, bool); 11] = [
    ("SRCNN", Family::Srcnn, false, false),
    ("SRCNN Coord", Family::Srcnn, true, false),
    ("SubCNN", Family::SubCnn, false, false),
    ("SubCNN Coord", Family::SubCnn, true, false),
    ("FSRCNN", Family::Fsrcnn, false, false),
    ("FSRCNN Coord", Family::Fsrcnn, true, false),
    ("FSRCNN Coord FaceLoss", Family::Fsrcnn, true, true),
    ("SRGAN", Family::Srgan, false, false),
    ("SRGAN Coord", Family::Srgan, true, false),
    ("SRGAN FaceLoss", Family::Srgan, false, true),
    ("SRGAN Coord FaceLoss", Family::Srgan, true, true),
];

pub fn canonical_names() -> Vec<&'static str> {
    CANONICAL.iter().map(|(n, ..)| *n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Model(SRModelSpec),
    /// Interpolation-only baseline handled by the evaluation harness.
    Bicubic,
}

impl ModelChoice {
    pub fn name(&self) -> String {
        match self {
            ModelChoice::Model(spec) => spec.name(),
            ModelChoice::Bicubic => "Bicubic".to_string(),
        }
    }
}

/// Resolves one of the eleven canonical model names (or `bicubic`).
/// `Subpixel CNN` and `Face Loss` spellings are accepted as aliases.
pub fn registry_lookup(name: &str) -> Result<ModelChoice> {
    let normalized = name
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace("Subpixel CNN", "SubCNN")
        .replace("Face Loss", "FaceLoss");
    if normalized.eq_ignore_ascii_case(BICUBIC) {
        return Ok(ModelChoice::Bicubic);
    }
    CANONICAL
        .iter()
        .find(|(n, ..)| *n == normalized)
        .map(|&(_, family, coord, faceloss)| ModelChoice::Model(SRModelSpec::new(family, coord, faceloss)))
        .ok_or_else(|| {
            let mut valid: Vec<String> = canonical_names().into_iter().map(String::from).collect();
            valid.push(BICUBIC.to_string());
            Error::Lookup {
                name: name.to_string(),
                valid,
            }
        })
}

/// File-system friendly form of a model name: `FSRCNN Coord FaceLoss` → `fsrcnn-coord-faceloss`.
pub fn slug(name: &str) -> String {
    name.split_whitespace()
        .map(|w| w.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join("-")
}
