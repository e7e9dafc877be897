//! Synthetic verification datasets in the watch-list and classroom layouts.

use std::path::Path;

use ndarray::{s, Array3};
use rand::Rng;

use super::pipeline::{classroom_layout, BoundingBox, ClassroomBox, ManifestEntry, VerificationManifest};
use super::Role;
use crate::error::{Error, Result};
use crate::imaging::{write_jsonl, ColorSpace, Image, SyntheticFaces};
use crate::rng::derived_rng;

fn subject_id(i: usize) -> String {
    format!("s{i:03}")
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn paste(canvas: &mut Array3<f32>, face: &Image, top: usize, left: usize) {
    let (h, w, _) = face.dims();
    canvas.slice_mut(s![top..top + h, left..left + w, ..]).assign(face.pixels());
}

/// Three 160×160 gallery images and five probe photos per subject. Each probe
/// is a small face at a random position in a larger frame, with its box
/// recorded in the manifest.
pub fn synthetic_watchlist(root: &Path, subjects: usize, seed: u64) -> Result<VerificationManifest> {
    let faces = SyntheticFaces::new(seed);
    let mut rng = derived_rng(seed, "synthetic/watchlist");
    let mut entries = Vec::new();
    for i in 0..subjects {
        let id = subject_id(i);
        let (gdir, pdir) = (root.join(&id).join("gallery"), root.join(&id).join("probe"));
        create_dir(&gdir)?;
        create_dir(&pdir)?;
        for v in 0..3 {
            let rel = Path::new(&id).join("gallery").join(format!("{v}.png"));
            faces.face(i, v).save_png(&root.join(&rel))?;
            entries.push(ManifestEntry { subject_id: id.clone(), role: Role::Gallery, image: rel, bbox: None, frontal: v == 0 });
        }
        for v in 0..5 {
            let side = rng.random_range(48..=72);
            let frame = 112;
            let (top, left) = (rng.random_range(0..=frame - side), rng.random_range(0..=frame - side));
            let mut canvas = Array3::from_elem((frame, frame, 3), rng.random_range(0.2f32..0.6));
            paste(&mut canvas, &faces.render(i, 3 + v, side, side), top, left);
            let rel = Path::new(&id).join("probe").join(format!("{v}.png"));
            Image::new(canvas, ColorSpace::Rgb)?.save_png(&root.join(&rel))?;
            entries.push(ManifestEntry {
                subject_id: id.clone(),
                role: Role::Probe,
                image: rel,
                bbox: Some(BoundingBox { top, left, height: side, width: side }),
                frontal: false,
            });
        }
    }
    let manifest = VerificationManifest { root: root.to_path_buf(), entries };
    manifest.save()?;
    Ok(manifest)
}

/// One enrollment image per student and class photos holding up to four
/// 48×48 faces each; every student appears in `appearances` photos.
pub fn synthetic_classroom(root: &Path, students: usize, appearances: usize, seed: u64) -> Result<VerificationManifest> {
    let faces = SyntheticFaces::new(seed);
    let mut rng = derived_rng(seed, "synthetic/classroom");
    create_dir(&root.join("gallery"))?;
    create_dir(&root.join("photos"))?;
    for i in 0..students {
        faces.face(i, 0).save_png(&root.join("gallery").join(format!("{}.png", subject_id(i))))?;
    }
    let mut order: Vec<usize> = (0..appearances).flat_map(|_| 0..students).collect();
    let mut boxes = Vec::new();
    for (p, group) in order.chunks_mut(4).enumerate() {
        let (side, slot) = (48, 60);
        let mut canvas = Array3::from_elem((slot, slot * 4, 3), 0.35f32);
        let rel = Path::new("photos").join(format!("p{p:03}.png"));
        for (k, &student) in group.iter().enumerate() {
            let (top, left) = (rng.random_range(0..=slot - side), k * slot + rng.random_range(0..=slot - side));
            paste(&mut canvas, &faces.render(student, 1 + p, side, side), top, left);
            boxes.push(ClassroomBox {
                image: rel.clone(),
                subject_id: subject_id(student),
                bbox: BoundingBox { top, left, height: side, width: side },
            });
        }
        Image::new(canvas, ColorSpace::Rgb)?.save_png(&root.join(&rel))?;
    }
    write_jsonl(&root.join("boxes.jsonl"), &boxes)?;
    let manifest = classroom_layout(root)?;
    manifest.save()?;
    Ok(manifest)
}
