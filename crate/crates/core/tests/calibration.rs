use std::collections::BTreeMap;

use gazekit::calibration::{bin_masses, calibration_histogram, critical_value, quantile_partition, Verdict};
use gazekit::dataset::DensityMap;
use gazekit::sampling::{sample_fixations, seeded_rng};
use gazekit::{DensityGrid, FixationSet};
use rand::Rng;

fn smooth_density(h: usize, w: usize, seed: u64) -> DensityGrid<f64> {
    let mut rng = seeded_rng(seed);
    let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
    let v: Vec<f64> = (0..h * w)
        .map(|i| {
            let dy = (i / w) as f64 - cy;
            let dx = (i % w) as f64 - cx;
            0.02 + (-(dx * dx + dy * dy) / 20.0).exp()
        })
        .collect();
    DensityGrid::normalize(h, w, &v).unwrap()
}

#[test]
fn partition_is_total_and_contiguous() {
    for seed in 0..10 {
        let d = smooth_density(9, 11, seed);
        for k in [2, 4, 7] {
            let part = quantile_partition(&d, k).unwrap();
            assert_eq!(part.len(), 99);
            let mut order: Vec<usize> = (0..99).collect();
            order.sort_by(|&a, &b| d.log_p()[a].partial_cmp(&d.log_p()[b]).unwrap().then(a.cmp(&b)));
            let bins: Vec<usize> = order.iter().map(|&i| part[i]).collect();
            assert!(bins.windows(2).all(|w| w[0] <= w[1]));
            assert!(bins.iter().all(|&b| b < k));
        }
    }
}

#[test]
fn quartiles_hold_a_quarter_each() {
    let d = smooth_density(40, 40, 3);
    let part = quantile_partition(&d, 4).unwrap();
    let max_pixel = d.probs().into_iter().fold(0.0, f64::max);
    for m in bin_masses(&d, &part, 4) {
        assert!((m - 0.25).abs() <= max_pixel + 1e-12, "{m}");
    }
}

#[test]
fn self_sampled_counts_follow_the_multinomial_oracle() {
    // Oracle: with bin masses m_j per image, counts are multinomial with
    // expectation Σ n m_j and variance Σ n m_j (1 − m_j).
    let mut model: DensityMap<f64> = BTreeMap::new();
    let mut rng = seeded_rng(11);
    let mut records = Vec::new();
    for i in 0..5 {
        let id = format!("img{i}");
        let d = smooth_density(12, 12, i);
        records.extend(sample_fixations(&id, "s", &d, 2000, &mut rng));
        model.insert(id, d);
    }
    let fix = FixationSet::new(records);
    let hist = calibration_histogram(&model, &fix, 4).unwrap();
    let mut var = [0.0; 4];
    for d in model.values() {
        let masses = bin_masses(d, &quantile_partition(d, 4).unwrap(), 4);
        for j in 0..4 {
            var[j] += 2000.0 * masses[j] * (1.0 - masses[j]);
        }
    }
    for j in 0..4 {
        let z = (hist.bins[j] as f64 - hist.expected[j]) / var[j].sqrt();
        assert!(z.abs() < 4.0, "bin {j}: z = {z}");
    }
    assert!(hist.chi_square < critical_value(3) * 2.0);
}

#[test]
fn histogram_ignores_record_order() {
    let mut model: DensityMap<f64> = BTreeMap::new();
    let mut rng = seeded_rng(2);
    let mut records = Vec::new();
    for i in 0..4 {
        let id = format!("img{i}");
        let d = smooth_density(8, 8, i);
        records.extend(sample_fixations(&id, "s", &d, 50, &mut rng));
        model.insert(id, d);
    }
    let a = calibration_histogram(&model, &FixationSet::new(records.clone()), 5).unwrap();
    records.reverse();
    let b = calibration_histogram(&model, &FixationSet::new(records), 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sharpened_density_reads_overconfident() {
    let truth = smooth_density(16, 16, 4);
    let squared: Vec<f64> = truth.probs().iter().map(|p| p * p).collect();
    let sharp = DensityGrid::normalize(16, 16, &squared).unwrap();
    let mut rng = seeded_rng(8);
    let fix = FixationSet::new(sample_fixations("a", "s", &truth, 5000, &mut rng));
    let model: DensityMap<f64> = [("a".to_string(), sharp)].into_iter().collect();
    assert_eq!(calibration_histogram(&model, &fix, 4).unwrap().verdict, Verdict::Overconfident);
}
