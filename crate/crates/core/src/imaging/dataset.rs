//! On-disk LR/HR pair corpus.
//!
//! Layout: `<root>/hr/<id>.png`, `<root>/lr/<id>.jpg`, `<root>/manifest.jsonl`
//! with one [`PairRecord`] per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{crappify_encoded, decode_jpeg, resize, EncodedPair, FacePairSample, Image, ResizeMethod, HR_SIZE};
use crate::error::{Error, Result};
use crate::rng::derived_rng;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DEFAULT_TRAIN: usize = 18_000;
pub const DEFAULT_VAL: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub jpeg_quality: u8,
    pub source: String,
    pub split: Split,
}

/// Train/validation sizes for a corpus of `count` samples: the default
/// 18,000/2,000 boundary, scaled proportionally for smaller corpora.
pub fn split_sizes(count: usize) -> (usize, usize) {
    let full = DEFAULT_TRAIN + DEFAULT_VAL;
    if count >= full {
        return (DEFAULT_TRAIN, count - DEFAULT_TRAIN);
    }
    let train = ((count as f64) * DEFAULT_TRAIN as f64 / full as f64).round() as usize;
    let train = train.clamp(count.min(1), count);
    (train, count - train)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn append_jsonl<T: Serialize>(path: &Path, row: &T) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(row)?;
    line.push(b'\n');
    file.write_all(&line).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PairDataset {
    root: PathBuf,
    records: Vec<PairRecord>,
}

impl PairDataset {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["hr", "lr"] {
            fs::create_dir_all(root.join(sub)).map_err(|e| Error::io(root.join(sub), e))?;
        }
        Ok(PairDataset {
            root: root.to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let records = read_jsonl(&root.join(MANIFEST_FILE))?;
        Ok(PairDataset {
            root: root.to_path_buf(),
            records,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn hr_path(&self, id: &str) -> PathBuf {
        self.root.join("hr").join(format!("{id}.png"))
    }

    pub fn lr_path(&self, id: &str) -> PathBuf {
        self.root.join("lr").join(format!("{id}.jpg"))
    }

    /// Writes the HR PNG and the exact LR JPEG stream, and records the sample.
    pub fn push(&mut self, pair: &EncodedPair, source: &str, split: Split) -> Result<()> {
        let s = &pair.sample;
        s.hr.save_png(&self.hr_path(&s.source_id))?;
        let lr = self.lr_path(&s.source_id);
        fs::write(&lr, &pair.lr_jpeg).map_err(|e| Error::io(&lr, e))?;
        self.records.push(PairRecord {
            id: s.source_id.clone(),
            jpeg_quality: s.jpeg_quality,
            source: source.to_string(),
            split,
        });
        Ok(())
    }

    pub fn write_manifest(&self) -> Result<()> {
        write_jsonl(&self.root.join(MANIFEST_FILE), &self.records)
    }

    pub fn load(&self, record: &PairRecord) -> Result<FacePairSample> {
        let hr = Image::load(&self.hr_path(&record.id))?;
        let lr_path = self.lr_path(&record.id);
        let bytes = fs::read(&lr_path).map_err(|e| Error::io(&lr_path, e))?;
        Ok(FacePairSample {
            lr: decode_jpeg(&bytes)?,
            hr,
            source_id: record.id.clone(),
            jpeg_quality: record.jpeg_quality,
        })
    }

    pub fn load_split(&self, split: Split, limit: Option<usize>) -> Result<Vec<FacePairSample>> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .take(limit.unwrap_or(usize::MAX))
            .map(|r| self.load(r))
            .collect()
    }
}

/// Image files directly under `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
        if path.is_file() && matches!(ext.as_deref(), Some("jpg" | "jpeg" | "png" | "bmp")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Centre-square crop resized to the HR size and rounded to 8 bits.
pub fn normalize_face(raw: &Image) -> Result<Image> {
    Ok(resize(&raw.center_square(), HR_SIZE, HR_SIZE, ResizeMethod::Bicubic)?.quantized())
}

/// Crappifies the first `count` readable images of `raw_dir` (sorted by name)
/// into `out_dir`. The first [`split_sizes`] share goes to training.
/// Unreadable files are skipped with a warning.
pub fn prepare_dataset(raw_dir: &Path, out_dir: &Path, count: usize, seed: u64) -> Result<PairDataset> {
    if count == 0 {
        return Err(Error::Argument("count must be positive".into()));
    }
    let files = list_images(raw_dir)?;
    let (train, _) = split_sizes(count);
    let mut ds = PairDataset::create(out_dir)?;
    let mut rng = derived_rng(seed, "prepare/quality");
    for path in &files {
        if ds.records.len() == count {
            break;
        }
        let raw = match Image::load(path) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let idx = ds.records.len();
        let id = format!("{:06}", idx + 1);
        let pair = crappify_encoded(&normalize_face(&raw)?, &id, &mut rng)?;
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let split = if idx < train { Split::Train } else { Split::Val };
        ds.push(&pair, &source, split)?;
    }
    if ds.records.is_empty() {
        return Err(Error::Data(format!("no readable images in {}", raw_dir.display())));
    }
    if ds.records.len() < count {
        return Err(Error::Data(format!(
            "requested {count} pairs but {} holds only {} readable images",
            raw_dir.display(),
            ds.records.len()
        )));
    }
    ds.write_manifest()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{crappify_encoded, synthetic::SyntheticFaces};
    use crate::rng::rng_from_seed;

    #[test]
    fn split_boundaries() {
        assert_eq!(split_sizes(20_000), (18_000, 2_000));
        assert_eq!(split_sizes(25_000), (18_000, 7_000));
        assert_eq!(split_sizes(100), (90, 10));
        assert_eq!(split_sizes(1), (1, 0));
    }

    #[test]
    fn disk_round_trip_preserves_decoded_lr() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = PairDataset::create(dir.path()).unwrap();
        let hr = SyntheticFaces::new(2).face(1, 0).quantized();
        let pair = crappify_encoded(&hr, "000001", &mut rng_from_seed(9)).unwrap();
        ds.push(&pair, "synthetic:1/0", Split::Val).unwrap();
        ds.write_manifest().unwrap();

        let reopened = PairDataset::open(dir.path()).unwrap();
        assert_eq!(reopened.records(), ds.records());
        let loaded = reopened.load(&reopened.records()[0]).unwrap();
        assert_eq!(loaded, pair.sample);
    }

    fn raw_corpus(dir: &Path, n: usize) {
        let faces = SyntheticFaces::new(4);
        for i in 0..n {
            faces.render(i, 0, 96, 80).save_png(&dir.join(format!("raw{i:02}.png"))).unwrap();
        }
        fs::write(dir.join("broken.jpg"), b"not a jpeg").unwrap();
    }

    #[test]
    fn prepare_is_deterministic_and_skips_unreadable() {
        let raw = tempfile::tempdir().unwrap();
        raw_corpus(raw.path(), 12);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let da = prepare_dataset(raw.path(), a.path(), 10, 7).unwrap();
        let db = prepare_dataset(raw.path(), b.path(), 10, 7).unwrap();
        assert_eq!(da.records(), db.records());
        let manifest = |d: &Path| fs::read(d.join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest(a.path()), manifest(b.path()));
        assert_eq!(da.records().iter().filter(|r| r.split == Split::Train).count(), 9);
        assert!(da.records().iter().all(|r| r.source != "broken.jpg"));
        let s = da.load(&da.records()[0]).unwrap();
        assert_eq!((s.hr.dims(), s.lr.dims()), ((160, 160, 3), (40, 40, 3)));

        let one = tempfile::tempdir().unwrap();
        let d1 = prepare_dataset(raw.path(), one.path(), 1, 7).unwrap();
        assert_eq!(PairDataset::open(one.path()).unwrap().records(), d1.records());
        assert_eq!(d1.records()[0].split, Split::Train);

        let too_many = tempfile::tempdir().unwrap();
        assert!(matches!(prepare_dataset(raw.path(), too_many.path(), 13, 7), Err(Error::Data(_))));
        let empty = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(prepare_dataset(empty.path(), out.path(), 1, 7), Err(Error::Data(_))));
    }
}
