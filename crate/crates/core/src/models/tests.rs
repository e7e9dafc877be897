use ndarray::Array4;
use rand::Rng;

use super::*;
use crate::rng::rng_from_seed;

fn lr_batch<F: Float>(n: usize, c: usize, size: usize, seed: u64) -> Tensor<F> {
    let mut rng = rng_from_seed(seed);
    Array4::from_shape_simple_fn((n, c, size, size), || F::lit(rng.random::<f64>()))
}

fn first_weight_shape<F: Float>(g: &Generator<F>) -> Vec<usize> {
    let mut shape = None;
    g.network().visit_params("", &mut |n, p| {
        if shape.is_none() && n.ends_with("weight") {
            shape = Some(p.value.shape().to_vec());
        }
    });
    shape.unwrap()
}

fn spec(name: &str) -> SRModelSpec {
    match registry_lookup(name).unwrap() {
        ModelChoice::Model(s) => s,
        ModelChoice::Bicubic => panic!("not a model"),
    }
}

#[test]
fn registry_examples() {
    let s = spec("FSRCNN Coord FaceLoss");
    assert_eq!((s.family, s.coord, s.faceloss, s.channel), (Family::Fsrcnn, true, true, Channel::Rgb));
    let s = spec("SRCNN");
    assert_eq!((s.family, s.coord, s.faceloss, s.channel), (Family::Srcnn, false, false, Channel::Y));
    assert_eq!(registry_lookup("bicubic").unwrap(), ModelChoice::Bicubic);
    assert_eq!(spec("Subpixel CNN Coord").family, Family::SubCnn);
    match registry_lookup("SRGANN") {
        Err(crate::Error::Lookup { valid, .. }) => {
            assert_eq!(valid.len(), 12);
            assert!(valid.contains(&"SRGAN".to_string()));
        }
        other => panic!("expected lookup error, got {other:?}"),
    }
    assert!(registry_lookup("SRCNN FaceLoss").is_err());
    for name in canonical_names() {
        assert_eq!(spec(name).name(), name);
    }
    assert_eq!(slug("FSRCNN Coord FaceLoss"), "fsrcnn-coord-faceloss");
}

#[test]
fn invalid_specs_rejected() {
    let mut s = SRModelSpec::new(Family::Fsrcnn, false, false);
    s.scale = 2;
    assert!(build::<f32>(&s, 0).is_err());
    let mut s = SRModelSpec::new(Family::Srcnn, false, false);
    s.channel = Channel::Rgb;
    assert!(build::<f32>(&s, 0).is_err());
    let s = SRModelSpec::new(Family::Srcnn, false, false).with_arch(Arch::Fsrcnn { d: 4, s: 2, m: 1 });
    assert!(build::<f32>(&s, 0).is_err());
}

#[test]
fn every_model_maps_40_to_160() {
    for name in canonical_names() {
        let s = spec(name);
        let model = build::<f32>(&s, 1).unwrap();
        let c = s.channel.count();
        let lr = lr_batch::<f32>(1, c, 40, 2);
        let prepared = model.generator.prepare_input(&lr).unwrap();
        let expected_in = if s.family.pre_upsampling() { 160 } else { 40 };
        assert_eq!(prepared.dim(), (1, c, expected_in, expected_in), "{name}");
        let out = model.generator.infer(&prepared).unwrap();
        assert_eq!(out.dim(), (1, c, 160, 160), "{name}");
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(model.discriminator.is_some(), s.family == Family::Srgan);
    }
}

#[test]
fn coord_adds_two_input_channels_only_on_first_layer() {
    for family in [Family::Srcnn, Family::SubCnn, Family::Fsrcnn, Family::Srgan] {
        let base = build::<f32>(&SRModelSpec::new(family, false, false), 3).unwrap().generator;
        let coord = build::<f32>(&SRModelSpec::new(family, true, false), 3).unwrap().generator;
        let (b, c) = (first_weight_shape(&base), first_weight_shape(&coord));
        assert_eq!(c[1], b[1] + 2, "{family:?}");
        let mut shapes_b = Vec::new();
        let mut shapes_c = Vec::new();
        base.network().visit_params("", &mut |_, p| shapes_b.push(p.value.shape().to_vec()));
        coord.network().visit_params("", &mut |_, p| shapes_c.push(p.value.shape().to_vec()));
        assert_eq!(shapes_b[1..], shapes_c[1..]);
    }
}

#[test]
fn faceloss_does_not_change_graph() {
    let a = build::<f32>(&SRModelSpec::new(Family::Srgan, true, false), 4).unwrap();
    let b = build::<f32>(&SRModelSpec::new(Family::Srgan, true, true), 4).unwrap();
    assert_eq!(a.generator.param_count(), b.generator.param_count());
    assert_eq!(a.generator.checksum(), b.generator.checksum());
}

#[test]
fn param_counts_match_golden_file() {
    let golden: std::collections::BTreeMap<String, usize> =
        serde_json::from_str(include_str!("../../tests/golden/param_counts.json")).unwrap();
    for name in canonical_names() {
        let model = build::<f32>(&spec(name), 99).unwrap();
        let total = model.generator.param_count();
        assert_eq!(golden[name], total, "{name}");
        if let Some(d) = model.discriminator {
            assert_eq!(golden["SRGAN discriminator"], d.param_count());
        }
    }
    // Hand count for the 9-1-5 network on one channel.
    assert_eq!(golden["SRCNN"], 9 * 9 * 64 + 64 + 64 * 32 + 32 + 5 * 5 * 32 + 1);
    assert_eq!(golden["SRCNN Coord"] - golden["SRCNN"], 2 * 9 * 9 * 64);
}

#[test]
fn zero_output_layer_gives_constant_image() {
    for family in [Family::Srcnn, Family::Fsrcnn] {
        let mut g = build::<f64>(&SRModelSpec::new(family, false, false), 5).unwrap().generator;
        let mut last_weight = String::new();
        g.network().visit_params("", &mut |n, _| {
            if n.ends_with("weight") {
                last_weight = n.to_string();
            }
        });
        let bias_name = last_weight.replace("weight", "bias");
        g.network_mut().visit_params_mut("", &mut |n, p| {
            if n == last_weight {
                p.value.fill(0.0);
            } else if n == bias_name {
                p.value.fill(0.3);
            }
        });
        let c = g.spec().channel.count();
        let out = g.upscale(&lr_batch(2, c, 12, 6)).unwrap();
        assert!(out.iter().all(|&v| (v - 0.3).abs() < 1e-12), "{family:?}");
    }
}

#[test]
fn inference_is_deterministic_and_seeded() {
    let s = SRModelSpec::new(Family::SubCnn, true, false);
    let a = build::<f32>(&s, 7).unwrap().generator;
    let b = build::<f32>(&s, 7).unwrap().generator;
    let c = build::<f32>(&s, 8).unwrap().generator;
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a.checksum(), c.checksum());
    let lr = lr_batch::<f32>(2, 1, 16, 9);
    assert_eq!(a.upscale(&lr).unwrap(), a.upscale(&lr).unwrap());
    assert_eq!(a.upscale(&lr).unwrap(), b.upscale(&lr).unwrap());
}

#[test]
fn wrong_input_channels_rejected() {
    let g = build::<f32>(&SRModelSpec::new(Family::Fsrcnn, false, false), 1).unwrap().generator;
    assert!(g.upscale(&lr_batch(1, 1, 8, 1)).is_err());
}

#[test]
fn discriminator_outputs_probabilities() {
    let model = build::<f32>(&SRModelSpec::new(Family::Srgan, false, false), 10).unwrap();
    let d = model.discriminator.unwrap();
    let p = d.probabilities(&lr_batch(1, 3, 160, 11)).unwrap();
    assert_eq!(p.len(), 1);
    assert!(p[0] > 0.0 && p[0] < 1.0);
}

fn tiny_fsrcnn() -> SRModelSpec {
    SRModelSpec::new(Family::Fsrcnn, true, false).with_arch(Arch::Fsrcnn { d: 4, s: 2, m: 1 })
}

/// Five-parameter probe of d(MSE)/dθ against central differences.
#[test]
fn fsrcnn_parameter_gradients_match_finite_differences() {
    let mut g = build::<f64>(&tiny_fsrcnn(), 12).unwrap().generator;
    let x = lr_batch::<f64>(1, 3, 4, 13);
    let target = lr_batch::<f64>(1, 3, 16, 14);
    let loss = |g: &mut Generator<f64>| -> f64 {
        let y = g.forward(&x).unwrap();
        (&y - &target).mapv(|d| d * d).mean().unwrap()
    };
    let y = g.forward(&x).unwrap();
    let grad = (&y - &target).mapv(|d| 2.0 * d / y.len() as f64);
    crate::nn::zero_grads(g.network_mut());
    g.backward(&grad).unwrap();
    let mut analytic: Vec<(usize, usize, f64)> = Vec::new();
    let mut pi = 0;
    g.network().visit_params("", &mut |_, p| {
        if analytic.len() < 5 && p.value.len() > 1 {
            analytic.push((pi, p.value.len() / 2, p.grad.as_slice().unwrap()[p.value.len() / 2]));
        }
        pi += 1;
    });
    assert_eq!(analytic.len(), 5);
    let eps = 1e-6;
    for (param, elem, a) in analytic {
        let nudge = |g: &mut Generator<f64>, delta: f64| {
            let mut k = 0;
            g.network_mut().visit_params_mut("", &mut |_, p| {
                if k == param {
                    p.value.as_slice_mut().unwrap()[elem] += delta;
                }
                k += 1;
            });
        };
        nudge(&mut g, eps);
        let lp = loss(&mut g);
        nudge(&mut g, -2.0 * eps);
        let lm = loss(&mut g);
        nudge(&mut g, eps);
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-10);
        assert!(rel < 1e-3, "param {param}[{elem}]: {a} vs {numeric}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = SRModelSpec::new(Family::Srgan, true, true).with_arch(Arch::Srgan {
        blocks: 2,
        filters: 8,
        disc_filters: 4,
    });
    let mut model = build::<f32>(&s, 21).unwrap();
    // A training pass moves the batch-norm running statistics off their defaults.
    model.generator.forward(&lr_batch(2, 3, 10, 22)).unwrap();
    let path = dir.path().join(checkpoint_file_name(&s, 3));
    assert!(path.ends_with("srgan-coord-faceloss_e3.ckpt"));
    save_checkpoint(&path, &model.generator, model.discriminator.as_ref(), 3, 21).unwrap();
    let ck = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!((ck.epoch, ck.seed, ck.spec), (3, 21, s));
    let lr = lr_batch::<f32>(1, 3, 12, 23);
    assert_eq!(model.generator.upscale(&lr).unwrap(), ck.generator.upscale(&lr).unwrap());
    let hr = lr_batch::<f32>(1, 3, 48, 24);
    assert_eq!(
        model.discriminator.as_ref().unwrap().probabilities(&hr).unwrap(),
        ck.discriminator.as_ref().unwrap().probabilities(&hr).unwrap()
    );
    assert!(load_checkpoint::<f64>(&path).is_err());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(load_checkpoint::<f32>(&path).is_err());
}

