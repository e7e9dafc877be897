use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GallerySet, ProbeSet, Role, CropSetting};
use crate::backends::{Embedder, Embedding};
use crate::error::{Error, Result};
use crate::imaging::{read_jsonl, resize, write_jsonl, Image, ResizeMethod};
use crate::models::Upscaler;

pub const MARGIN: f64 = 1.3;
pub const CROP_SIZE: usize = 40;
pub const EMBED_SIZE: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl BoundingBox {
    pub fn full(img: &Image) -> Self {
        BoundingBox { top: 0, left: 0, height: img.height(), width: img.width() }
    }
}

/// Scales `b` by `margin` about its centre and clamps it to the image.
pub fn expand_box(b: BoundingBox, margin: f64, img_h: usize, img_w: usize) -> BoundingBox {
    let axis = |start: usize, len: usize, limit: usize| -> (usize, usize) {
        let centre = start as f64 + len as f64 / 2.0;
        let new_len = (len as f64 * margin).round();
        let lo = (centre - new_len / 2.0).round();
        let hi = (lo + new_len).min(limit as f64).max(0.0) as usize;
        let lo = lo.max(0.0).min(limit.saturating_sub(1) as f64) as usize;
        (lo, hi.max(lo + 1) - lo)
    };
    let (top, height) = axis(b.top, b.height, img_h);
    let (left, width) = axis(b.left, b.width, img_w);
    BoundingBox { top, left, height, width }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Ground-truth identity carried by fixture boxes; `None` for unlabeled
    /// (possibly spurious) detections.
    pub subject_id: Option<String>,
}

/// Face detector. `key` identifies the image (its manifest path) so replay
/// backends can look up stored boxes.
pub trait DetectorBackend {
    fn detect(&self, image: &Image, key: &str) -> Result<Vec<Detection>>;
}

/// Replays stored detections. Images without stored boxes yield no faces.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureDetector {
    pub boxes: BTreeMap<String, Vec<FixtureBox>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureBox {
    /// `None` covers the whole frame.
    pub bbox: Option<BoundingBox>,
    pub subject_id: Option<String>,
}

impl FixtureDetector {
    pub fn from_manifest(manifest: &VerificationManifest) -> Self {
        let mut det = FixtureDetector::default();
        for e in &manifest.entries {
            det.boxes.entry(e.image.to_string_lossy().into_owned()).or_default().push(FixtureBox {
                bbox: e.bbox,
                subject_id: Some(e.subject_id.clone()),
            });
        }
        det
    }

    pub fn add_unlabeled(&mut self, key: &str, bbox: BoundingBox) {
        self.boxes.entry(key.to_string()).or_default().push(FixtureBox { bbox: Some(bbox), subject_id: None });
    }
}

impl DetectorBackend for FixtureDetector {
    fn detect(&self, image: &Image, key: &str) -> Result<Vec<Detection>> {
        Ok(self
            .boxes
            .get(key)
            .map(|v| {
                v.iter()
                    .map(|b| Detection {
                        bbox: b.bbox.unwrap_or_else(|| BoundingBox::full(image)),
                        subject_id: b.subject_id.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCrop {
    pub image: Image,
    pub subject_id: Option<String>,
    pub role: Role,
    pub setting: CropSetting,
    /// Image key and box, for diagnostics.
    pub source: String,
}

/// Crops every detected face, expanding the box by the margin and resizing
/// to 40×40 as the setting requires.
pub fn detect_and_crop(
    raw: &Image,
    key: &str,
    role: Role,
    detector: &dyn DetectorBackend,
    setting: CropSetting,
) -> Result<Vec<FaceCrop>> {
    let mut crops = Vec::new();
    for det in detector.detect(raw, key)? {
        let b = match setting.margin() {
            Some(m) => expand_box(det.bbox, m, raw.height(), raw.width()),
            None => expand_box(det.bbox, 1.0, raw.height(), raw.width()),
        };
        let mut img = raw.crop(b.top, b.left, b.height, b.width)?;
        if setting.resizes() {
            img = resize(&img, CROP_SIZE, CROP_SIZE, ResizeMethod::Bicubic)?;
        }
        crops.push(FaceCrop {
            image: img,
            subject_id: det.subject_id,
            role,
            setting,
            source: format!("{key}@{},{},{}x{}", b.top, b.left, b.height, b.width),
        });
    }
    Ok(crops)
}

/// Brings a crop to 160×160 (super-resolution followed by a bicubic fit, or
/// bicubic alone) and embeds it.
pub fn embed(crop: &FaceCrop, upscaler: &Upscaler<'_>, embedder: &dyn Embedder) -> Result<Embedding> {
    let face = match upscaler {
        Upscaler::Bicubic => resize(&crop.image, EMBED_SIZE, EMBED_SIZE, ResizeMethod::Bicubic)?,
        Upscaler::Model(_) => upscaler.upscale_to(&crop.image, EMBED_SIZE)?,
    };
    let chw = face.pixels().view().permuted_axes([2, 0, 1]).mapv(|v| v as f64);
    embedder
        .embed_labeled(chw.view(), crop.subject_id.as_deref())
        .map_err(|e| Error::Backend(format!("{} (crop {})", e, crop.source)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub role: Role,
    /// Relative to the manifest root.
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
    /// Marks the frontal enrollment image of a gallery subject.
    #[serde(default)]
    pub frontal: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl VerificationManifest {
    pub const FILE: &'static str = "verification.jsonl";

    pub fn load(path: &Path) -> Result<Self> {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(VerificationManifest { root, entries: read_jsonl(path)? })
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.root.join(Self::FILE);
        write_jsonl(&path, &self.entries)?;
        Ok(path)
    }

    pub fn subjects(&self, role: Role) -> Vec<&str> {
        let mut ids: Vec<&str> = self.entries.iter().filter(|e| e.role == role).map(|e| e.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Which gallery images enroll a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GalleryPolicy {
    /// The frontal image only (first gallery image when none is marked).
    FrontalOnly,
    All,
}

/// Runs detection, cropping, upscaling and embedding over a manifest.
/// Unlabeled detections are excluded.
pub fn embed_manifest(
    manifest: &VerificationManifest,
    detector: &dyn DetectorBackend,
    setting: CropSetting,
    upscaler: &Upscaler<'_>,
    embedder: &dyn Embedder,
    policy: GalleryPolicy,
) -> Result<(GallerySet, ProbeSet)> {
    let mut enrolled: BTreeMap<&str, &ManifestEntry> = BTreeMap::new();
    if policy == GalleryPolicy::FrontalOnly {
        for e in manifest.entries.iter().filter(|e| e.role == Role::Gallery) {
            let slot = enrolled.entry(e.subject_id.as_str()).or_insert(e);
            if e.frontal && !slot.frontal {
                *slot = e;
            }
        }
    }
    let mut images: BTreeMap<(Role, &Path), ()> = BTreeMap::new();
    for e in &manifest.entries {
        if e.role == Role::Gallery && policy == GalleryPolicy::FrontalOnly && !std::ptr::eq(enrolled[e.subject_id.as_str()], e) {
            continue;
        }
        images.insert((e.role, e.image.as_path()), ());
    }
    let mut gallery = GallerySet::default();
    let mut probes = ProbeSet::default();
    for (role, rel) in images.into_keys() {
        let raw = Image::load(&manifest.root.join(rel))?;
        let key = rel.to_string_lossy();
        for crop in detect_and_crop(&raw, &key, role, detector, setting)? {
            let Some(id) = crop.subject_id.clone() else {
                continue;
            };
            // Gallery images may hold boxes of other subjects in shared photos.
            if role == Role::Gallery
                && !manifest.entries.iter().any(|e| e.role == role && e.image == rel && e.subject_id == id)
            {
                continue;
            }
            let emb = embed(&crop, upscaler, embedder)?;
            match role {
                Role::Gallery => gallery.add(&id, emb),
                Role::Probe => probes.entries.push((id, emb)),
            }
        }
    }
    Ok((gallery, probes))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn rel(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).unwrap_or(p).to_path_buf()
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `<root>/gallery/<subject>/*` and `<root>/probe/<subject>/*`, whole-frame faces.
pub fn directory_layout(root: &Path) -> Result<VerificationManifest> {
    let mut entries = Vec::new();
    for (role, sub) in [(Role::Gallery, "gallery"), (Role::Probe, "probe")] {
        for subject_dir in sorted_dirs(&root.join(sub))? {
            let id = subject_dir.file_name().unwrap().to_string_lossy().into_owned();
            for (i, f) in sorted_files(&subject_dir)?.into_iter().enumerate() {
                entries.push(ManifestEntry {
                    subject_id: id.clone(),
                    role,
                    image: rel(root, &f),
                    bbox: None,
                    frontal: role == Role::Gallery && i == 0,
                });
            }
        }
    }
    Ok(VerificationManifest { root: root.to_path_buf(), entries })
}

/// `<root>/<subject>/gallery/*` (3 images, first frontal) and
/// `<root>/<subject>/probe/*` (5 images).
pub fn watchlist_layout(root: &Path) -> Result<VerificationManifest> {
    let mut entries = Vec::new();
    for subject_dir in sorted_dirs(root)? {
        let id = subject_dir.file_name().unwrap().to_string_lossy().into_owned();
        for (role, sub, expected) in [(Role::Gallery, "gallery", 3), (Role::Probe, "probe", 5)] {
            let files = sorted_files(&subject_dir.join(sub))?;
            if files.len() != expected {
                log::warn!("subject {id}: {} {sub} images (layout expects {expected})", files.len());
            }
            for (i, f) in files.into_iter().enumerate() {
                entries.push(ManifestEntry {
                    subject_id: id.clone(),
                    role,
                    image: rel(root, &f),
                    bbox: None,
                    frontal: role == Role::Gallery && i == 0,
                });
            }
        }
    }
    Ok(VerificationManifest { root: root.to_path_buf(), entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassroomBox {
    pub image: PathBuf,
    pub subject_id: String,
    pub bbox: BoundingBox,
}

/// `<root>/gallery/<subject>.<ext>` enrollment images plus class photos
/// listed with labeled boxes in `<root>/boxes.jsonl`.
pub fn classroom_layout(root: &Path) -> Result<VerificationManifest> {
    let mut entries = Vec::new();
    for f in sorted_files(&root.join("gallery"))? {
        entries.push(ManifestEntry {
            subject_id: file_stem(&f),
            role: Role::Gallery,
            image: rel(root, &f),
            bbox: None,
            frontal: true,
        });
    }
    let boxes: Vec<ClassroomBox> = read_jsonl(&root.join("boxes.jsonl"))?;
    for b in boxes {
        entries.push(ManifestEntry {
            subject_id: b.subject_id,
            role: Role::Probe,
            image: b.image,
            bbox: Some(b.bbox),
            frontal: false,
        });
    }
    Ok(VerificationManifest { root: root.to_path_buf(), entries })
}
