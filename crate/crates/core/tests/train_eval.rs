use facesr_core::imaging::{crappify, SyntheticFaces};
use facesr_core::losses::Backends;
use facesr_core::metrics::{evaluate_sr, SsimMode};
use facesr_core::models::{checkpoint_file_name, load_checkpoint, save_checkpoint, Upscaler};
use facesr_core::rng::derived_rng;
use facesr_core::training::{self, default_config, TrainingData};

#[test]
fn trained_model_survives_a_checkpoint_round_trip() {
    let faces = SyntheticFaces::new(2);
    let mut rng = derived_rng(2, "pairs");
    let samples: Vec<_> = (0..8)
        .map(|i| crappify(&faces.face(i, 0).quantized(), &format!("f{i}"), &mut rng).unwrap())
        .collect();
    let mut cfg = default_config("SRCNN").unwrap();
    cfg.epochs = 1;
    cfg.batch_size = 4;
    let out = training::train(&cfg, &TrainingData::from_samples(&samples).unwrap(), &Backends::default(), None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(checkpoint_file_name(out.generator.spec(), 1));
    save_checkpoint(&path, &out.generator, None, 1, cfg.seed).unwrap();
    let back = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(back.generator.checksum(), out.generator.checksum());
    assert_eq!(back.epoch, 1);

    let a = evaluate_sr(&Upscaler::Model(&out.generator), &samples, SsimMode::RgbMean, 1).unwrap();
    let b = evaluate_sr(&Upscaler::Model(&back.generator), &samples, SsimMode::RgbMean, 1).unwrap();
    assert_eq!(a.psnr_db.to_bits(), b.psnr_db.to_bits());
    assert_eq!(a.ssim.to_bits(), b.ssim.to_bits());
    assert_eq!(a.model, "SRCNN");
}
