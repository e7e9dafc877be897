use std::path::{Path, PathBuf};
use std::str::FromStr;

use facesr_core::analysis::thesis::{self, COORD_PAIRS, FACELOSS_PAIRS};
use facesr_core::analysis::{emit_report, spearman, wilcoxon_signed_rank, AccuracyReport, AccuracyRow, EvalReport, QualityReport};
use facesr_core::backends::{Embedder, Embedding, RandomEmbedder, ReplayEmbedder, StubEmbedder, StubFeatureExtractor};
use facesr_core::imaging::dataset::MANIFEST_FILE as PAIRS_MANIFEST;
use facesr_core::imaging::{prepare_dataset, PairDataset, Split};
use facesr_core::losses::Backends;
use facesr_core::metrics::evaluate_sr;
use facesr_core::models::{load_checkpoint, registry_lookup, Arch, Generator, Upscaler};
use facesr_core::recognition::{
    attendance_eval, classroom_layout, directory_layout, embed_manifest, watchlist_eval, watchlist_layout, CropSetting,
    FixtureDetector, GalleryPolicy, Role, VerificationManifest,
};
use facesr_core::rng::derive_seed;
use facesr_core::training::{self, default_config, run_directory, ThresholdMode, TrainRunConfig, TrainingData};
use facesr_core::{Error, Result};
use serde::Serialize;
use toml::Table;

use crate::config::{absolute, check_keys, to_table, typed, EvalSrConfig, EvalVerifyConfig, PrepareConfig, ReportConfig, TrainConfig};
use crate::manifest::RunManifest;
use crate::{exit_code, BACKEND_CACHE_ENV};

pub const RECORDS_FILE: &str = "records.json";
pub const COMMANDS: [&str; 5] = ["prepare", "train", "eval-sr", "eval-verify", "report"];

/// A command with its merged configuration table.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub table: Table,
}

/// What a command reports back for its manifest.
#[derive(Debug, Default)]
struct Record {
    out_dir: Option<PathBuf>,
    seed: u64,
    snapshot: Table,
    artifacts: Vec<PathBuf>,
}

pub struct Completed {
    pub manifest: RunManifest,
    pub manifest_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn backend_cache() -> Option<PathBuf> {
    std::env::var_os(BACKEND_CACHE_ENV).map(PathBuf::from)
}

/// Runs the command and writes its manifest into the command's output
/// directory, on failure too once that directory is known.
pub fn execute(inv: &Invocation) -> std::result::Result<Completed, (Error, Option<Completed>)> {
    let started_at = now();
    let mut rec = Record {
        snapshot: inv.table.clone(),
        ..Default::default()
    };
    let result = match inv.command.as_str() {
        "prepare" => prepare(&inv.table, &mut rec),
        "train" => train(&inv.table, &mut rec),
        "eval-sr" => eval_sr(&inv.table, &mut rec),
        "eval-verify" => eval_verify(&inv.table, &mut rec),
        "report" => report(&inv.table, &mut rec),
        other => Err(Error::Lookup {
            name: other.to_string(),
            valid: COMMANDS.iter().map(|s| s.to_string()).collect(),
        }),
    };
    let (status, code) = match &result {
        Ok(()) => ("ok".to_string(), 0),
        Err(e) => (e.to_string(), exit_code(e)),
    };
    let manifest = RunManifest {
        command: inv.command.clone(),
        config_path: inv.config_path.as_deref().map(absolute),
        config: rec.snapshot,
        seed: rec.seed,
        started_at,
        finished_at: now(),
        status,
        exit_code: code,
        artifacts: rec.artifacts,
        backend_cache: backend_cache(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let manifest_path = match &rec.out_dir {
        Some(dir) => match manifest.save(dir) {
            Ok(p) => Some(p),
            Err(e) if result.is_ok() => return Err((e, None)),
            Err(e) => {
                log::error!("could not write run manifest: {e}");
                None
            }
        },
        None => None,
    };
    let done = Completed {
        manifest,
        manifest_path,
        out_dir: rec.out_dir,
    };
    match result {
        Ok(()) => Ok(done),
        Err(e) => Err((e, Some(done))),
    }
}

/// Reruns the command recorded in a manifest, optionally into another directory.
pub fn replay(manifest_path: &Path, out_dir: Option<&Path>) -> Result<Invocation> {
    let m = RunManifest::load(manifest_path)?;
    let mut table = m.config;
    if let Some(dir) = out_dir {
        table.insert("out_dir".into(), toml::Value::String(dir.to_string_lossy().into_owned()));
    }
    Ok(Invocation {
        command: m.command,
        config_path: Some(manifest_path.to_path_buf()),
        table,
    })
}

fn required<T>(v: Option<T>, key: &str, hint: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("`{key}` is required; {hint}")))
}

fn prepare(table: &Table, rec: &mut Record) -> Result<()> {
    check_keys(table, "prepare", PrepareConfig::KEYS)?;
    let mut cfg: PrepareConfig = typed(table, "prepare")?;
    cfg.raw_dir = absolute(&cfg.raw_dir);
    cfg.out_dir = absolute(&cfg.out_dir);
    if !cfg.raw_dir.is_dir() {
        return Err(Error::Config(format!("raw_dir {} is not a directory", cfg.raw_dir.display())));
    }
    rec.snapshot = to_table(&cfg)?;
    rec.seed = cfg.seed;
    rec.out_dir = Some(cfg.out_dir.clone());
    let ds = prepare_dataset(&cfg.raw_dir, &cfg.out_dir, cfg.count, cfg.seed)?;
    let train = ds.records().iter().filter(|r| r.split == Split::Train).count();
    log::info!("prepared {} pairs ({train} train / {} val)", ds.records().len(), ds.records().len() - train);
    rec.artifacts.push(cfg.out_dir.join(PAIRS_MANIFEST));
    Ok(())
}

fn resolve_arch(cfg: &TrainConfig, run: &TrainRunConfig) -> Result<Option<Arch>> {
    let keys = [
        ("n1", cfg.n1),
        ("n2", cfg.n2),
        ("d", cfg.d),
        ("s", cfg.s),
        ("m", cfg.m),
        ("blocks", cfg.blocks),
        ("filters", cfg.filters),
        ("disc_filters", cfg.disc_filters),
    ];
    if keys.iter().all(|(_, v)| v.is_none()) {
        return Ok(run.arch);
    }
    let base = run.spec()?.arch;
    let allowed: &[&str] = match base {
        Arch::Srcnn { .. } | Arch::SubCnn { .. } => &["n1", "n2"],
        Arch::Fsrcnn { .. } => &["d", "s", "m"],
        Arch::Srgan { .. } => &["blocks", "filters", "disc_filters"],
    };
    if let Some((k, _)) = keys.iter().find(|(k, v)| v.is_some() && !allowed.contains(k)) {
        return Err(Error::Config(format!(
            "layer key `{k}` does not apply to {}; valid layer keys: {}",
            run.model_name,
            allowed.join(", ")
        )));
    }
    Ok(Some(match base {
        Arch::Srcnn { n1, n2 } => Arch::Srcnn {
            n1: cfg.n1.unwrap_or(n1),
            n2: cfg.n2.unwrap_or(n2),
        },
        Arch::SubCnn { n1, n2 } => Arch::SubCnn {
            n1: cfg.n1.unwrap_or(n1),
            n2: cfg.n2.unwrap_or(n2),
        },
        Arch::Fsrcnn { d, s, m } => Arch::Fsrcnn {
            d: cfg.d.unwrap_or(d),
            s: cfg.s.unwrap_or(s),
            m: cfg.m.unwrap_or(m),
        },
        Arch::Srgan {
            blocks,
            filters,
            disc_filters,
        } => Arch::Srgan {
            blocks: cfg.blocks.unwrap_or(blocks),
            filters: cfg.filters.unwrap_or(filters),
            disc_filters: cfg.disc_filters.unwrap_or(disc_filters),
        },
    }))
}

fn parse_threshold_mode(s: &str) -> Result<ThresholdMode> {
    match s {
        "per-batch" => Ok(ThresholdMode::PerBatch),
        "epoch-average" => Ok(ThresholdMode::EpochAverage),
        _ => Err(Error::Lookup {
            name: s.to_string(),
            valid: vec!["per-batch".into(), "epoch-average".into()],
        }),
    }
}

/// Published defaults for the model with the file and flag values applied.
pub fn resolve_train(cfg: &TrainConfig) -> Result<TrainRunConfig> {
    let model = required(cfg.model.clone(), "model", "name one of the registered models")?;
    let mut run = default_config(&model)?;
    macro_rules! set {
        ($($src:ident => $($dst:ident).+),* $(,)?) => {
            $(if let Some(v) = cfg.$src { run.$($dst).+ = v; })*
        };
    }
    set!(
        seed => seed,
        batch_size => batch_size,
        epochs => epochs,
        base_lr => base_lr,
        decay_factor => decay_factor,
        decay_every => decay_every,
        beta1 => optimizer.beta1,
        beta2 => optimizer.beta2,
        pretrain_epochs => pretrain_epochs,
        disc_threshold => disc_threshold,
        checkpoint_every => checkpoint_every,
        pixel_weight => loss_weights.pixel,
        adversarial_weight => loss_weights.adversarial,
        content_weight => loss_weights.content,
        face_weight => loss_weights.face,
    );
    if let Some(mode) = &cfg.threshold_mode {
        run.threshold_mode = parse_threshold_mode(mode)?;
    }
    run.arch = resolve_arch(cfg, &run)?;
    run.validate()?;
    Ok(run)
}

fn snapshot_train(cfg: &TrainConfig, run: &TrainRunConfig) -> TrainConfig {
    let (mut n1, mut n2, mut d, mut s, mut m, mut blocks, mut filters, mut disc_filters) = Default::default();
    match run.arch {
        Some(Arch::Srcnn { n1: a, n2: b }) | Some(Arch::SubCnn { n1: a, n2: b }) => (n1, n2) = (Some(a), Some(b)),
        Some(Arch::Fsrcnn { d: a, s: b, m: c }) => (d, s, m) = (Some(a), Some(b), Some(c)),
        Some(Arch::Srgan {
            blocks: a,
            filters: b,
            disc_filters: c,
        }) => (blocks, filters, disc_filters) = (Some(a), Some(b), Some(c)),
        None => {}
    }
    TrainConfig {
        model: Some(run.model_name.clone()),
        dataset: cfg.dataset.as_deref().map(absolute),
        out_dir: absolute(&cfg.out_dir),
        train_limit: cfg.train_limit,
        seed: Some(run.seed),
        batch_size: Some(run.batch_size),
        epochs: Some(run.epochs),
        base_lr: Some(run.base_lr),
        decay_factor: Some(run.decay_factor),
        decay_every: Some(run.decay_every),
        beta1: Some(run.optimizer.beta1),
        beta2: Some(run.optimizer.beta2),
        pretrain_epochs: Some(run.pretrain_epochs),
        disc_threshold: Some(run.disc_threshold),
        threshold_mode: Some(
            match run.threshold_mode {
                ThresholdMode::PerBatch => "per-batch",
                ThresholdMode::EpochAverage => "epoch-average",
            }
            .into(),
        ),
        checkpoint_every: Some(run.checkpoint_every),
        pixel_weight: Some(run.loss_weights.pixel),
        adversarial_weight: Some(run.loss_weights.adversarial),
        content_weight: Some(run.loss_weights.content),
        face_weight: Some(run.loss_weights.face),
        n1,
        n2,
        d,
        s,
        m,
        blocks,
        filters,
        disc_filters,
        backend_seed: cfg.backend_seed,
    }
}

fn open_pairs(dir: &Path, key: &str) -> Result<PairDataset> {
    if !dir.join(PAIRS_MANIFEST).is_file() {
        return Err(Error::Config(format!(
            "`{key}` {} is not a prepared pair directory (no {PAIRS_MANIFEST}); run `facesr prepare` first",
            dir.display()
        )));
    }
    PairDataset::open(dir)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

fn train(table: &Table, rec: &mut Record) -> Result<()> {
    check_keys(table, "train", TrainConfig::KEYS)?;
    let cfg: TrainConfig = typed(table, "train")?;
    let run = resolve_train(&cfg)?;
    let dataset = required(cfg.dataset.clone(), "dataset", "point it at a directory written by `facesr prepare`")?;
    let pairs = open_pairs(&dataset, "dataset")?;
    rec.snapshot = to_table(&snapshot_train(&cfg, &run))?;
    rec.seed = run.seed;

    let samples = pairs.load_split(Split::Train, cfg.train_limit)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{} has no training pairs", dataset.display())));
    }
    let data = TrainingData::from_samples(&samples)?;
    let features = StubFeatureExtractor::new(derive_seed(cfg.backend_seed, "backend/features"));
    let embedder = StubEmbedder::new(derive_seed(cfg.backend_seed, "backend/embedder"));
    let w = run.loss_weights;
    let backends = Backends {
        features: (w.content > 0.0).then_some(&features as &dyn facesr_core::backends::FeatureExtractor),
        embedder: (w.face > 0.0).then_some(&embedder as &dyn Embedder),
    };
    if w.content > 0.0 || w.face > 0.0 {
        log::warn!("using seeded stub backends for content/face terms ({BACKEND_CACHE_ENV} holds no loadable weights)");
    }
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%3fZ").to_string();
    let dir = run_directory(&absolute(&cfg.out_dir), &run.model_name, &stamp);
    rec.out_dir = Some(dir.clone());
    log::info!("training {} on {} pairs into {}", run.model_name, data.len(), dir.display());
    training::train(&run, &data, &backends, Some(&dir))?;
    collect_files(&dir, &mut rec.artifacts);
    Ok(())
}

/// `path` or `Model Name=path`.
fn load_models(specs: &[String]) -> Result<Vec<Generator<f32>>> {
    let mut out = Vec::new();
    for spec in specs {
        let (expected, path) = match spec.split_once('=') {
            Some((name, path)) if registry_lookup(name.trim()).is_ok() => (Some(name.trim()), path),
            _ => (None, spec.as_str()),
        };
        let path = Path::new(path);
        if !path.is_file() {
            return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
        }
        let ck = load_checkpoint::<f32>(path)?;
        if let Some(name) = expected {
            let want = registry_lookup(name)?.name();
            if want != ck.spec.name() {
                return Err(Error::Config(format!(
                    "checkpoint {} holds {}, not {want}",
                    path.display(),
                    ck.spec.name()
                )));
            }
        }
        out.push(ck.generator);
    }
    Ok(out)
}

fn upscalers<'a>(include_bicubic: bool, models: &'a [Generator<f32>]) -> Result<Vec<Upscaler<'a>>> {
    let mut v = Vec::new();
    if include_bicubic {
        v.push(Upscaler::Bicubic);
    }
    v.extend(models.iter().map(Upscaler::Model));
    if v.is_empty() {
        return Err(Error::Config("nothing to evaluate: no checkpoints and include_bicubic = false".into()));
    }
    Ok(v)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn emit(records: &[EvalReport], out_dir: &Path, rec: &mut Record) -> Result<()> {
    rec.artifacts.extend(emit_report(records, out_dir)?);
    rec.artifacts.push(write_json(&out_dir.join(RECORDS_FILE), &records)?);
    Ok(())
}

fn abs_checkpoints(specs: &[String]) -> Vec<String> {
    specs
        .iter()
        .map(|s| match s.split_once('=') {
            Some((name, path)) if registry_lookup(name.trim()).is_ok() => {
                format!("{}={}", name.trim(), absolute(Path::new(path)).display())
            }
            _ => absolute(Path::new(s)).display().to_string(),
        })
        .collect()
}

fn eval_sr(table: &Table, rec: &mut Record) -> Result<()> {
    check_keys(table, "eval-sr", EvalSrConfig::KEYS)?;
    let mut cfg: EvalSrConfig = typed(table, "eval-sr")?;
    let val_dir = absolute(&required(cfg.val_dir.clone(), "val_dir", "point it at a directory written by `facesr prepare`")?);
    cfg.val_dir = Some(val_dir.clone());
    cfg.out_dir = absolute(&cfg.out_dir);
    cfg.checkpoints = abs_checkpoints(&cfg.checkpoints);
    let pairs = open_pairs(&val_dir, "val_dir")?;
    let models = load_models(&cfg.checkpoints)?;
    let ups = upscalers(cfg.include_bicubic, &models)?;
    rec.snapshot = to_table(&cfg)?;
    rec.out_dir = Some(cfg.out_dir.clone());

    let samples = pairs.load_split(Split::Val, cfg.val_limit)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{} has no validation pairs", val_dir.display())));
    }
    let mut rows = Vec::new();
    for u in &ups {
        let row = evaluate_sr(u, &samples, cfg.ssim_mode, cfg.timing_runs)?;
        log::info!("{}: PSNR {:.2} dB, SSIM {:.4}", row.model, row.psnr_db, row.ssim);
        rows.push(row);
    }
    let report = QualityReport {
        title: cfg
            .title
            .clone()
            .unwrap_or_else(|| format!("Validation metric results for 4x upscaling ({} images)", samples.len())),
        ssim_mode: cfg.ssim_mode,
        rows,
    };
    emit(&[EvalReport::Quality(report)], &cfg.out_dir, rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Watchlist,
    Attendance,
}

fn parse_task(s: &str) -> Result<Task> {
    match s {
        "watchlist" => Ok(Task::Watchlist),
        "attendance" => Ok(Task::Attendance),
        _ => Err(Error::Lookup {
            name: s.to_string(),
            valid: vec!["watchlist".into(), "attendance".into()],
        }),
    }
}

fn load_verification(root: &Path, adapter: &str) -> Result<VerificationManifest> {
    match adapter {
        "manifest" => {
            let path = root.join(VerificationManifest::FILE);
            if !path.is_file() {
                return Err(Error::Config(format!("{} not found; pick another adapter", path.display())));
            }
            VerificationManifest::load(&path)
        }
        "directory" => directory_layout(root),
        "watchlist" => watchlist_layout(root),
        "classroom" => classroom_layout(root),
        _ => Err(Error::Lookup {
            name: adapter.to_string(),
            valid: ["manifest", "directory", "watchlist", "classroom"].map(String::from).to_vec(),
        }),
    }
}

pub const REPLAY_FILE: &str = "replay_embeddings.json";

fn make_embedder(name: &str, backend_seed: u64, manifest: &VerificationManifest) -> Result<Box<dyn Embedder>> {
    Ok(match name {
        "stub" => Box::new(StubEmbedder::new(derive_seed(backend_seed, "backend/embedder"))),
        "random" => Box::new(RandomEmbedder::new(derive_seed(backend_seed, "backend/random"))),
        "perfect-replay" => {
            let mut subjects = manifest.subjects(Role::Gallery);
            subjects.extend(manifest.subjects(Role::Probe));
            subjects.sort_unstable();
            subjects.dedup();
            Box::new(ReplayEmbedder::perfect(subjects))
        }
        "replay" => {
            let dir = backend_cache()
                .ok_or_else(|| Error::Config(format!("embedder `replay` reads {REPLAY_FILE} from ${BACKEND_CACHE_ENV}, which is unset")))?;
            let path = dir.join(REPLAY_FILE);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let table: std::collections::BTreeMap<String, Embedding> = serde_json::from_str(&text)?;
            Box::new(ReplayEmbedder { table })
        }
        _ => {
            return Err(Error::Lookup {
                name: name.to_string(),
                valid: ["stub", "random", "perfect-replay", "replay"].map(String::from).to_vec(),
            })
        }
    })
}

fn parse_policy(s: &str) -> Result<GalleryPolicy> {
    match s {
        "frontal-only" => Ok(GalleryPolicy::FrontalOnly),
        "all" => Ok(GalleryPolicy::All),
        _ => Err(Error::Lookup {
            name: s.to_string(),
            valid: vec!["frontal-only".into(), "all".into()],
        }),
    }
}

#[derive(Debug, Serialize)]
struct VerifyCell {
    model: String,
    setting: CropSetting,
    accuracy: f64,
    correct: usize,
    evaluated: usize,
    seed: u64,
}

fn eval_verify(table: &Table, rec: &mut Record) -> Result<()> {
    check_keys(table, "eval-verify", EvalVerifyConfig::KEYS)?;
    let mut cfg: EvalVerifyConfig = typed(table, "eval-verify")?;
    let root = absolute(&required(cfg.dataset.clone(), "dataset", "point it at a verification dataset root")?);
    let task = parse_task(&required(cfg.task.clone(), "task", "use `watchlist` or `attendance`")?)?;
    let settings = cfg
        .settings
        .iter()
        .map(|s| CropSetting::from_str(s))
        .collect::<Result<Vec<_>>>()?;
    if settings.is_empty() {
        return Err(Error::Config("`settings` must name at least one crop setting".into()));
    }
    let policy = parse_policy(cfg.gallery_policy.as_deref().unwrap_or("frontal-only"))?;
    if task == Task::Watchlist && cfg.trials == 0 {
        return Err(Error::Config("`trials` must be positive".into()));
    }
    cfg.dataset = Some(root.clone());
    cfg.out_dir = absolute(&cfg.out_dir);
    cfg.checkpoints = abs_checkpoints(&cfg.checkpoints);
    cfg.gallery_policy = Some(if policy == GalleryPolicy::All { "all" } else { "frontal-only" }.into());
    let manifest = load_verification(&root, &cfg.adapter)?;
    let embedder = make_embedder(&cfg.embedder, cfg.backend_seed, &manifest)?;
    let models = load_models(&cfg.checkpoints)?;
    let ups = upscalers(cfg.include_bicubic, &models)?;
    let dataset_name = cfg.dataset_name.clone().unwrap_or_else(|| {
        root.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    cfg.dataset_name = Some(dataset_name.clone());
    rec.snapshot = to_table(&cfg)?;
    rec.seed = cfg.seed;
    rec.out_dir = Some(cfg.out_dir.clone());

    let detector = FixtureDetector::from_manifest(&manifest);
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for u in &ups {
        let mut row = AccuracyRow {
            model: u.name(),
            cells: Vec::new(),
        };
        for &setting in &settings {
            let (gallery, probes) = embed_manifest(&manifest, &detector, setting, u, embedder.as_ref(), policy)?;
            let (accuracy, correct, evaluated) = match task {
                Task::Watchlist => {
                    let o = watchlist_eval(&gallery, &probes, cfg.trials, cfg.seed)?;
                    (o.accuracy, o.hits, o.trials.len())
                }
                Task::Attendance => {
                    let o = attendance_eval(&gallery, &probes)?;
                    (o.accuracy, o.correct, o.evaluated)
                }
            };
            log::info!("{} / {setting}: rank-1 {:.2}%", row.model, 100.0 * accuracy);
            row.cells.push(Some(100.0 * accuracy));
            cells.push(VerifyCell {
                model: row.model.clone(),
                setting,
                accuracy,
                correct,
                evaluated,
                seed: cfg.seed,
            });
        }
        rows.push(row);
    }
    let task_name = match task {
        Task::Watchlist => "watchlist",
        Task::Attendance => "attendance",
    };
    let report = AccuracyReport {
        title: format!("Rank-1 accuracy (%) on {dataset_name}"),
        dataset: dataset_name,
        task: task_name.into(),
        settings,
        rows,
    };
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    rec.artifacts.push(write_json(&cfg.out_dir.join("verify_cells.json"), &cells)?);
    emit(&[EvalReport::Accuracy(report)], &cfg.out_dir, rec)
}

#[derive(Debug, Serialize)]
struct ThesisStats {
    spearman_psnr_accuracy: facesr_core::analysis::CorrelationOutcome,
    spearman_ssim_accuracy: facesr_core::analysis::CorrelationOutcome,
    reported_spearman_psnr: (f64, f64),
    reported_spearman_ssim: (f64, f64),
    wilcoxon_coord: facesr_core::analysis::WilcoxonOutcome,
    reported_wilcoxon_coord_p: f64,
    wilcoxon_faceloss: facesr_core::analysis::WilcoxonOutcome,
    reported_wilcoxon_faceloss_p: f64,
}

fn thesis_stats() -> Result<ThesisStats> {
    let (psnr, ssim, acc) = thesis::quality_vs_accuracy();
    Ok(ThesisStats {
        spearman_psnr_accuracy: spearman(&psnr, &acc)?,
        spearman_ssim_accuracy: spearman(&ssim, &acc)?,
        reported_spearman_psnr: thesis::SPEARMAN_PSNR,
        reported_spearman_ssim: thesis::SPEARMAN_SSIM,
        wilcoxon_coord: wilcoxon_signed_rank(&thesis::paired_accuracies(&COORD_PAIRS)?)?,
        reported_wilcoxon_coord_p: thesis::WILCOXON_COORD_P,
        wilcoxon_faceloss: wilcoxon_signed_rank(&thesis::paired_accuracies(&FACELOSS_PAIRS)?)?,
        reported_wilcoxon_faceloss_p: thesis::WILCOXON_FACELOSS_P,
    })
}

fn report(table: &Table, rec: &mut Record) -> Result<()> {
    check_keys(table, "report", ReportConfig::KEYS)?;
    let mut cfg: ReportConfig = typed(table, "report")?;
    cfg.out_dir = absolute(&cfg.out_dir);
    cfg.inputs = cfg.inputs.iter().map(|p| absolute(p)).collect();
    if cfg.inputs.is_empty() && !cfg.thesis {
        return Err(Error::Config("nothing to report: give `inputs` or set `thesis = true`".into()));
    }
    let mut records = Vec::new();
    for path in &cfg.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r: Vec<EvalReport> =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        records.append(&mut r);
    }
    rec.snapshot = to_table(&cfg)?;
    rec.out_dir = Some(cfg.out_dir.clone());
    if cfg.thesis {
        records.extend(thesis::all_reports());
    }
    emit(&records, &cfg.out_dir, rec)?;
    if cfg.thesis {
        rec.artifacts.push(write_json(&cfg.out_dir.join("thesis_stats.json"), &thesis_stats()?)?);
    }
    Ok(())
}
