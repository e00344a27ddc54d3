use std::collections::BTreeMap;

use gazekit::baselines::{centerbias, gold_standard, KdeSpec};
use gazekit::sampling::{sample_fixations, seeded_rng};
use gazekit::{DensityGrid, FixationSet};

fn blob(h: usize, w: usize, cy: f64, cx: f64) -> DensityGrid<f64> {
    let v: Vec<f64> = (0..h * w)
        .map(|i| {
            let dy = (i / w) as f64 + 0.5 - cy;
            let dx = (i % w) as f64 + 0.5 - cx;
            (-(dx * dx + dy * dy) / 18.0).exp()
        })
        .collect();
    DensityGrid::normalize(h, w, &v).unwrap()
}

#[test]
fn centerbias_is_valid_for_every_bandwidth() {
    let mut rng = seeded_rng(1);
    let mut records = Vec::new();
    let mut dims = BTreeMap::new();
    for i in 0..4 {
        let id = format!("img{i}");
        records.extend(sample_fixations(&id, "s", &blob(10, 14, 5.0, 7.0), 40, &mut rng));
        dims.insert(id, (10, 14));
    }
    let fix = FixationSet::new(records);
    let spec = KdeSpec::<f64>::default();
    for &sigma in &spec.bandwidth_grid {
        let cb = centerbias(&fix, &dims, (10, 14), &KdeSpec::fixed(sigma, 1e-4).unwrap()).unwrap();
        assert!((cb.density.mass() - 1.0).abs() < 1e-9);
        assert!(cb.density.log_p().iter().all(|l| l.is_finite()));
    }
    let a = centerbias(&fix, &dims, (10, 14), &spec).unwrap();
    let b = centerbias(&fix, &dims, (10, 14), &spec).unwrap();
    assert_eq!(a.bandwidth, b.bandwidth);
}

#[test]
fn leave_one_out_never_beats_pooled() {
    for seed in 0..10 {
        let mut rng = seeded_rng(seed);
        let fix = sample_fixations("a", "s", &blob(12, 12, 4.0, 8.0), 30, &mut rng);
        let gold = gold_standard(&fix, (12, 12), &KdeSpec::<f64>::default()).unwrap();
        assert!(gold.loo_log_likelihood() <= gold.pooled_log_likelihood());
    }
}

#[test]
fn gold_standard_beats_centerbias_on_structured_images() {
    let mut rng = seeded_rng(5);
    let mut records = Vec::new();
    let mut dims = BTreeMap::new();
    let centers = [(3.0, 3.0), (3.0, 13.0), (13.0, 3.0), (13.0, 13.0)];
    for (i, &(cy, cx)) in centers.iter().enumerate() {
        let id = format!("img{i}");
        records.extend(sample_fixations(&id, "s", &blob(16, 16, cy, cx), 60, &mut rng));
        dims.insert(id, (16, 16));
    }
    let fix = FixationSet::new(records);
    let spec = KdeSpec::<f64>::default();
    let cb = centerbias(&fix, &dims, (16, 16), &spec).unwrap();
    let (mut gold_sum, mut cb_sum, mut n) = (0.0, 0.0, 0.0);
    for group in fix.by_image().into_values() {
        let owned: Vec<_> = group.into_iter().cloned().collect();
        let gold = gold_standard(&owned, (16, 16), &spec).unwrap();
        gold_sum += gold.loo_log2_sum();
        cb_sum += owned.iter().map(|f| cb.density.log_at(f.pixel().0, f.pixel().1)).sum::<f64>() / 2f64.ln();
        n += owned.len() as f64;
    }
    assert!(gold_sum / n > cb_sum / n + 0.5);
}
