use super::*;
use crate::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn paired(a: Vec<f64>, b: Vec<f64>) -> PairedResults {
    PairedResults::new((0..a.len()).map(|i| format!("p{i}")).collect(), a, b).unwrap()
}

#[test]
fn spearman_monotone_series() {
    for n in [5, 12] {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let up: Vec<f64> = x.iter().map(|v| v * v * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| (-v).exp()).collect();
        assert_eq!(spearman(&x, &up).unwrap().rho, 1.0);
        assert_eq!(spearman(&x, &down).unwrap().rho, -1.0);
    }
    assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Degenerate(_))));
    assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
}

/// Values frozen from scipy.stats.spearmanr and, for n <= 10, a brute-force
/// enumeration of |rho| over all 8! pairings.
#[test]
fn spearman_matches_reference_values() {
    let x: Vec<f64> = (1..=12).map(f64::from).collect();
    let y = [1.5, 3.1, 2.2, 4.9, 5.5, 5.9, 7.7, 8.1, 9.9, 9.2, 12.5, 11.1];
    let r = spearman(&x, &y).unwrap();
    assert!((r.rho - 0.9790209790209792).abs() < 1e-12);
    assert!((r.p_value - 3.0898013985487064e-08).abs() < 1e-12);
    assert_eq!(r.method, PMethod::TApproximation);

    let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
    let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0];
    let r = spearman(&x, &y).unwrap();
    assert!((r.rho - 0.19885368120992467).abs() < 1e-12);
    assert!((r.p_value - 0.6291666666666667).abs() < 1e-12);
    assert_eq!(r.method, PMethod::Exact);
}

#[test]
fn wilcoxon_examples() {
    assert!(matches!(wilcoxon_signed_rank(&paired(vec![1.0, 2.0], vec![1.0, 2.0])), Err(Error::Degenerate(_))));
    let a = vec![1.83, 0.50, 1.62, 2.48, 1.68, 1.88];
    let b = vec![0.878, 0.647, 0.598, 2.05, 1.06, 1.29];
    let r = wilcoxon_signed_rank(&paired(a, b)).unwrap();
    assert!((r.p_value - 0.0625).abs() < 1e-15);
    assert_eq!(r.method, PMethod::Exact);
}

/// Ranks by counting, independent of the sort-based implementation.
fn ranks_by_counting(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided p from all 2^n sign assignments: the share of assignments at
/// least as far from the null mean as the observed statistic.
fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).filter(|d| *d != 0.0).collect();
    let r = ranks_by_counting(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let n = d.len();
    let mean = r.iter().sum::<f64>() / 2.0;
    let observed: f64 = d.iter().zip(&r).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let mut extreme = 0u64;
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| r[i]).sum();
        if (w - mean).abs() >= (observed - mean).abs() - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

#[test]
fn exact_wilcoxon_matches_enumeration_for_small_n() {
    let mut rng = rng_from_seed(42);
    for n in 1..=10 {
        let mut checked = 0;
        while checked < 100 {
            // Small integers produce ties and zero differences.
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
            if a == b {
                continue;
            }
            let p = wilcoxon_signed_rank(&paired(a.clone(), b.clone())).unwrap().p_value;
            assert!((p - brute_force_p(&a, &b)).abs() < 1e-12, "n={n} a={a:?} b={b:?}");
            checked += 1;
        }
    }
}

#[test]
fn thesis_fixtures_regenerate() {
    let icb = &thesis::accuracy_reports()[0];
    assert_eq!(icb.dataset, "icb-rw");
    let srgan = icb.rows.iter().find(|r| r.model == "SRGAN").unwrap();
    assert_eq!(srgan.cells[0], Some(85.78));
    let best = icb.rows.iter().max_by(|a, b| a.cells[0].partial_cmp(&b.cells[0]).unwrap()).unwrap();
    assert_eq!(best.model, "SRGAN");
    let sizes: Vec<usize> = thesis::accuracy_reports().iter().map(|r| r.rows.len()).collect();
    assert_eq!(sizes, [12, 12, 12, 12]);
    let q = thesis::quality_report();
    let bicubic = q.rows.iter().find(|r| r.model == "Bicubic").unwrap();
    assert_eq!((bicubic.psnr_db, bicubic.ssim), (27.93, 0.7881));
}

/// The reconstructed FaceLoss pairing reproduces the reported p = 0.03; no
/// natural CoordConv pairing reproduces 0.083. Both frozen against
/// scipy.stats.wilcoxon(zero_method="wilcox", correction=True) on differences
/// rounded to 9 decimals.
#[test]
fn thesis_wilcoxon_reconstruction() {
    let face = wilcoxon_signed_rank(&thesis::paired_accuracies(&thesis::FACELOSS_PAIRS).unwrap()).unwrap();
    assert_eq!((face.n, face.method), (20, PMethod::NormalApproximation));
    assert!((face.p_value - 0.02755336935576408).abs() < 1e-9);
    assert!((face.p_value - thesis::WILCOXON_FACELOSS_P).abs() < 0.005);
    let coord = wilcoxon_signed_rank(&thesis::paired_accuracies(&thesis::COORD_PAIRS).unwrap()).unwrap();
    assert_eq!(coord.n, 41);
    assert!((coord.p_value - 0.19491485338173953).abs() < 1e-9);
}

/// Frozen against scipy.stats.spearmanr over the same 144 points.
#[test]
fn thesis_spearman_reconstruction() {
    let (psnr, ssim, acc) = thesis::quality_vs_accuracy();
    assert_eq!(psnr.len(), 144);
    let p = spearman(&psnr, &acc).unwrap();
    assert!((p.rho - -0.34446086425217076).abs() < 1e-12);
    assert!((p.p_value - 2.3617032263027005e-05).abs() < 1e-9);
    let s = spearman(&ssim, &acc).unwrap();
    assert!((s.rho - 0.11768454233673346).abs() < 1e-12);
    assert!((s.p_value - 0.1600828291352895).abs() < 1e-6);
}

fn read(p: &std::path::Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn report_emission_is_stable_and_consistent() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let records = thesis::all_reports();
    let f1 = emit_report(&records, d1.path()).unwrap();
    let f2 = emit_report(&records, d2.path()).unwrap();
    assert_eq!(f1.len(), 2 + 4 * 3);
    for (a, b) in f1.iter().zip(&f2) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{a:?}");
    }
    let md = read(&d1.path().join("accuracy_icb-rw.md"));
    assert!(md.contains("| SRGAN | **85.78** | 77.33 | **72.00** |"));

    // Markdown and JSON twins agree cell for cell.
    for r in thesis::accuracy_reports() {
        let md = read(&d1.path().join(format!("accuracy_{}.md", r.dataset)));
        let json: serde_json::Value = serde_json::from_str(&read(&d1.path().join(format!("accuracy_{}.json", r.dataset)))).unwrap();
        let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Method")).collect();
        assert_eq!(rows.len(), json["rows"].as_array().unwrap().len());
        for (line, row) in rows.iter().zip(json["rows"].as_array().unwrap()) {
            let cells: Vec<String> = line.trim_matches('|').split('|').map(|c| c.trim().trim_matches('*').to_string()).collect();
            assert_eq!(cells[0], row["model"].as_str().unwrap());
            for (c, v) in row["cells"].as_array().unwrap().iter().enumerate() {
                assert_eq!(cells[c + 1], format!("{:.2}", v.as_f64().unwrap()));
            }
        }
    }
    let q = read(&d1.path().join("quality.md"));
    assert!(q.contains("| FSRCNN Coord | **28.88** | **0.8175** |"));
    assert!(q.contains("| Bicubic | 27.93 | 0.7881 | **0.0012** | **833.33** | - |"));
}

#[test]
fn single_record_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = thesis::accuracy_reports().remove(1);
    r.rows.truncate(1);
    let files = emit_report(&[EvalReport::Accuracy(r)], dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    assert!(read(&files[0]).lines().filter(|l| l.starts_with("| ")).count() == 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spearman_invariant_under_monotone_transforms(seed in any::<u64>(), n in 3usize..16) {
        let mut rng = rng_from_seed(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let base = spearman(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let ty: Vec<f64> = y.iter().map(|v| v * v * v - 7.0).collect();
        let t = spearman(&tx, &ty).unwrap();
        prop_assert!((base.rho - t.rho).abs() < 1e-12);
        prop_assert!((base.p_value - t.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base.p_value));
    }

    #[test]
    fn wilcoxon_symmetric_under_swap(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = rng_from_seed(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let p = paired(a, b);
        match (wilcoxon_signed_rank(&p), wilcoxon_signed_rank(&p.swapped())) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&x.p_value));
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
