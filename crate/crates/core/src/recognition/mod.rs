//! Face verification: cropping settings, embedding extraction, cosine
//! nearest-neighbour matching and the watch-list (1×5) and attendance (1×N)
//! tasks.

mod pipeline;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::backends::Embedding;
use crate::error::{Error, Result};
use crate::losses::cosine_similarity;
use crate::rng::derived_rng;

pub use pipeline::{
    classroom_layout, detect_and_crop, directory_layout, embed, embed_manifest, expand_box, watchlist_layout,
    BoundingBox, ClassroomBox, Detection, DetectorBackend, FaceCrop, FixtureBox, FixtureDetector, GalleryPolicy, ManifestEntry,
    VerificationManifest, CROP_SIZE, EMBED_SIZE, MARGIN,
};
pub use synthetic::{synthetic_classroom, synthetic_watchlist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Gallery,
    Probe,
}

/// Crop/resize setting applied to detected faces before super-resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CropSetting {
    NoResize,
    Size40,
    Size40Margin13,
}

impl CropSetting {
    pub const ALL: [CropSetting; 3] = [CropSetting::NoResize, CropSetting::Size40, CropSetting::Size40Margin13];

    pub fn cli_name(self) -> &'static str {
        match self {
            CropSetting::NoResize => "no-resize",
            CropSetting::Size40 => "size40",
            CropSetting::Size40Margin13 => "size40-margin13",
        }
    }

    /// Column header used in accuracy tables.
    pub fn label(self) -> &'static str {
        match self {
            CropSetting::NoResize => "No Resize No Margin",
            CropSetting::Size40 => "Size 40 No Margin",
            CropSetting::Size40Margin13 => "Size 40 Margin 1.3",
        }
    }

    pub fn margin(self) -> Option<f64> {
        matches!(self, CropSetting::Size40Margin13).then_some(MARGIN)
    }

    pub fn resizes(self) -> bool {
        !matches!(self, CropSetting::NoResize)
    }
}

impl fmt::Display for CropSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for CropSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CropSetting::ALL
            .into_iter()
            .find(|c| c.cli_name() == s)
            .ok_or_else(|| Error::Lookup {
                name: s.to_string(),
                valid: CropSetting::ALL.iter().map(|c| c.cli_name().to_string()).collect(),
            })
    }
}

/// `1 − cos(a, b)`, in [0,2]. Symmetric and scale invariant, but not a
/// metric: the triangle inequality does not hold.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Enrolled subjects, each with one or more embeddings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GallerySet {
    subjects: BTreeMap<String, Vec<Embedding>>,
}

impl GallerySet {
    /// One entry per subject; duplicate ids are rejected.
    pub fn from_entries(entries: Vec<(String, Vec<Embedding>)>) -> Result<Self> {
        let mut subjects = BTreeMap::new();
        for (id, embs) in entries {
            if embs.is_empty() {
                return Err(Error::Argument(format!("gallery subject {id:?} has no embeddings")));
            }
            if subjects.insert(id.clone(), embs).is_some() {
                return Err(Error::Argument(format!("duplicate gallery id {id:?}")));
            }
        }
        Ok(GallerySet { subjects })
    }

    pub fn add(&mut self, id: &str, emb: Embedding) {
        self.subjects.entry(id.to_string()).or_default().push(emb);
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.subjects.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.subjects.keys().map(String::as_str)
    }

    pub fn subset(&self, ids: &[&str]) -> Result<GallerySet> {
        let mut entries = Vec::with_capacity(ids.len());
        for id in ids {
            let embs = self
                .subjects
                .get(*id)
                .ok_or_else(|| Error::Argument(format!("unknown gallery id {id:?}")))?;
            entries.push((id.to_string(), embs.clone()));
        }
        GallerySet::from_entries(entries)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub entries: Vec<(String, Embedding)>,
}

impl ProbeSet {
    pub fn of_subject(&self, id: &str) -> Vec<&Embedding> {
        self.entries.iter().filter(|(s, _)| s == id).map(|(_, e)| e).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub probe_id: String,
    /// Gallery ids ascending by distance; ties broken by lowest id.
    pub ranked: Vec<(String, f64)>,
}

impl MatchResult {
    pub fn top(&self) -> Option<&str> {
        self.ranked.first().map(|(id, _)| id.as_str())
    }
}

/// Ranks gallery subjects by their closest embedding to `probe`.
pub fn match_probe(gallery: &GallerySet, probe_id: &str, probe: &Embedding) -> Result<MatchResult> {
    let mut ranked = Vec::with_capacity(gallery.len());
    for (id, embs) in &gallery.subjects {
        let mut best = f64::INFINITY;
        for e in embs {
            best = best.min(cosine_distance(probe, e)?);
        }
        ranked.push((id.clone(), best));
    }
    // BTreeMap order is ascending by id, so a stable sort keeps the lowest id first on ties.
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(MatchResult { probe_id: probe_id.to_string(), ranked })
}

/// One 1×5 trial: hit when the nearest of the five gallery subjects is the
/// probe's own identity.
pub fn watchlist_trial(gallery: &GallerySet, probe_id: &str, probe: &Embedding) -> Result<(MatchResult, bool)> {
    if gallery.len() != 5 {
        return Err(Error::Argument(format!("watch-list gallery must hold 5 subjects, got {}", gallery.len())));
    }
    if !gallery.contains(probe_id) {
        return Err(Error::Argument(format!("probe subject {probe_id:?} is not on the watch-list")));
    }
    let m = match_probe(gallery, probe_id, probe)?;
    let hit = m.top() == Some(probe_id);
    Ok((m, hit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub target: String,
    pub roster: Vec<String>,
    pub probe_index: usize,
    pub predicted: String,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchlistOutcome {
    pub accuracy: f64,
    pub hits: usize,
    pub trials: Vec<TrialRecord>,
}

/// Seeded watch-list evaluation. Trial `i` targets subject `i mod n`: one of
/// its probes is drawn at random and matched against its gallery entry plus
/// four other randomly drawn subjects.
pub fn watchlist_eval(gallery: &GallerySet, probes: &ProbeSet, trials: usize, seed: u64) -> Result<WatchlistOutcome> {
    let ids: Vec<&str> = gallery.ids().filter(|id| !probes.of_subject(id).is_empty()).collect();
    if gallery.len() < 5 {
        return Err(Error::Argument(format!("watch-list needs at least 5 gallery subjects, got {}", gallery.len())));
    }
    if ids.is_empty() || trials == 0 {
        return Err(Error::Data("no probe has a gallery entry".into()));
    }
    let all: Vec<&str> = gallery.ids().collect();
    let mut rng = derived_rng(seed, "watchlist");
    let mut records = Vec::with_capacity(trials);
    let mut hits = 0;
    for i in 0..trials {
        let target = ids[i % ids.len()];
        let others: Vec<&str> = all.iter().copied().filter(|id| *id != target).collect();
        let mut roster: Vec<&str> = others.choose_multiple(&mut rng, 4).copied().collect();
        roster.push(target);
        roster.sort_unstable();
        let candidates = probes.of_subject(target);
        let probe_index = rand::Rng::random_range(&mut rng, 0..candidates.len());
        let (m, hit) = watchlist_trial(&gallery.subset(&roster)?, target, candidates[probe_index])?;
        hits += hit as usize;
        records.push(TrialRecord {
            target: target.to_string(),
            roster: roster.iter().map(|s| s.to_string()).collect(),
            probe_index,
            predicted: m.top().unwrap_or_default().to_string(),
            hit,
        });
    }
    Ok(WatchlistOutcome { accuracy: hits as f64 / trials as f64, hits, trials: records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendanceOutcome {
    pub accuracy: f64,
    pub evaluated: usize,
    pub correct: usize,
    /// Probe subjects without a gallery entry, excluded from the accuracy.
    pub open_set: Vec<String>,
}

/// Rank-1 accuracy of every probe against the whole gallery (1×N).
pub fn attendance_eval(gallery: &GallerySet, probes: &ProbeSet) -> Result<AttendanceOutcome> {
    if gallery.len() < 2 {
        return Err(Error::Argument(format!("attendance needs at least 2 enrolled subjects, got {}", gallery.len())));
    }
    let (mut evaluated, mut correct) = (0, 0);
    let mut open_set = Vec::new();
    for (id, emb) in &probes.entries {
        if !gallery.contains(id) {
            log::warn!("probe subject {id:?} is not enrolled; excluded as open-set");
            open_set.push(id.clone());
            continue;
        }
        evaluated += 1;
        if match_probe(gallery, id, emb)?.top() == Some(id.as_str()) {
            correct += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::Data("no probe subject is enrolled".into()));
    }
    Ok(AttendanceOutcome { accuracy: correct as f64 / evaluated as f64, evaluated, correct, open_set })
}
