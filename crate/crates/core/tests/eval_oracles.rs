use mtl_core::eval::{
    confusion, ecdf_at, error_cdf, match_estimates, quantile, random_guess, rmse, sensor_density, sweep_points,
    unit_square_mean_distance, ErrorSummary, SweepMode,
};
use mtl_core::{Area, Point2, SeedSchedule, TransmitterSet};
use proptest::prelude::*;
use rand::Rng;

/// Minimum total cost over injective maps of the smaller set into the larger,
/// by plain recursion without pruning.
fn recursive_min_cost(small: &[Point2], large: &[Point2], used: &mut Vec<bool>) -> f64 {
    let Some((first, rest)) = small.split_first() else {
        return 0.0;
    };
    let mut best = f64::INFINITY;
    for j in 0..large.len() {
        if !used[j] {
            used[j] = true;
            best = best.min(first.distance(large[j]) + recursive_min_cost(rest, large, used));
            used[j] = false;
        }
    }
    best
}

#[test]
fn matching_agrees_with_recursive_oracle_on_1000_instances() {
    let mut rng = SeedSchedule::new(2024).stream("match", 0);
    for _ in 0..1000 {
        let nt = rng.random_range(1..=4);
        let ne = rng.random_range(1..=5);
        let t: Vec<Point2> =
            (0..nt).map(|_| Point2::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0))).collect();
        let e: Vec<Point2> =
            (0..ne).map(|_| Point2::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0))).collect();
        let m = match_estimates(&TransmitterSet::new(t.clone()), &TransmitterSet::new(e.clone()));
        let oracle = if nt <= ne {
            recursive_min_cost(&t, &e, &mut vec![false; ne])
        } else {
            recursive_min_cost(&e, &t, &mut vec![false; nt])
        };
        assert!((m.total_cost() - oracle).abs() < 1e-9, "{} vs {oracle}", m.total_cost());
        assert_eq!(m.pairs.len(), nt.min(ne));
        assert_eq!(m.unmatched_truths.len(), nt.saturating_sub(ne));
        for &(i, j, d) in &m.pairs {
            assert_eq!(d, t[i].distance(e[j]));
        }
        let mut ti: Vec<usize> = m.pairs.iter().map(|p| p.0).chain(m.unmatched_truths.iter().copied()).collect();
        ti.sort();
        assert_eq!(ti, (0..nt).collect::<Vec<_>>());
    }
}

proptest! {
    #[test]
    fn matching_beats_identity(pts in proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0, 0.0f64..20.0, 0.0f64..20.0), 1..5)) {
        let t: Vec<Point2> = pts.iter().map(|p| Point2::new(p.0, p.1)).collect();
        let e: Vec<Point2> = pts.iter().map(|p| Point2::new(p.2, p.3)).collect();
        let identity: f64 = t.iter().zip(&e).map(|(a, b)| a.distance(*b)).sum();
        let m = match_estimates(&TransmitterSet::new(t.clone()), &TransmitterSet::new(e.clone()));
        prop_assert!(m.total_cost() <= identity + 1e-12);
        let mut rev = e.clone();
        rev.reverse();
        let m2 = match_estimates(&TransmitterSet::new(t), &TransmitterSet::new(rev));
        prop_assert!((m.total_cost() - m2.total_cost()).abs() < 1e-9);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one(errors in proptest::collection::vec(0.0f64..30.0, 1..200)) {
        let cdf = error_cdf(&errors);
        for w in cdf.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        prop_assert!(cdf[0].1 > 0.0);
        for &(x, f) in &cdf {
            let naive = errors.iter().filter(|e| **e <= x).count() as f64 / errors.len() as f64;
            prop_assert!((f - naive).abs() < 1e-12);
            prop_assert!((ecdf_at(&errors, x) - naive).abs() < 1e-12);
        }
        let naive_rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        prop_assert!((rmse(&errors) - naive_rmse).abs() < 1e-12);
        let lo = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = errors.iter().cloned().fold(0.0, f64::max);
        prop_assert_eq!(quantile(&errors, 0.0), lo);
        prop_assert_eq!(quantile(&errors, 1.0), hi);
    }

    #[test]
    fn confusion_agrees_with_naive_counter(pairs in proptest::collection::vec((1usize..=4, 1usize..=4), 1..300)) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = confusion(&pred, &truth, 4).unwrap();
        for c in 1..=4 {
            let tp = pairs.iter().filter(|p| p.0 == c && p.1 == c).count() as f64;
            let pc = pairs.iter().filter(|p| p.0 == c).count() as f64;
            let tc = pairs.iter().filter(|p| p.1 == c).count() as f64;
            prop_assert_eq!(cm.precision(c), (pc > 0.0).then(|| tp / pc));
            prop_assert_eq!(cm.recall(c), (tc > 0.0).then(|| tp / tc));
            prop_assert_eq!(cm.counts[c - 1].iter().sum::<u64>() as f64, tc);
        }
        let correct = pairs.iter().filter(|p| p.0 == p.1).count() as f64;
        prop_assert_eq!(cm.accuracy(), Some(correct / pairs.len() as f64));
    }
}

#[test]
fn error_summary_excludes_unmatched_truths() {
    let mut s = ErrorSummary::default();
    let truth = TransmitterSet::new(vec![Point2::new(0.0, 0.0), Point2::new(10.0, 10.0)]);
    s.push(&truth, &TransmitterSet::new(vec![Point2::new(3.0, 4.0)]));
    s.push(&truth, &TransmitterSet::new(vec![]));
    assert_eq!(s.errors, vec![5.0]);
    assert_eq!(s.unmatched_truths, 3);
    assert_eq!(s.samples, 2);
}

#[test]
fn random_guess_mean_distance_matches_closed_form() {
    let area = Area::square(20.0).unwrap();
    let mut rng = SeedSchedule::new(99).stream("rg", 0);
    let n = 100_000;
    let mut total = 0.0;
    for _ in 0..n {
        let truth = random_guess(area, 1, &mut rng);
        let guess = random_guess(area, 1, &mut rng);
        assert!(area.contains(guess.coords[0]));
        total += truth.coords[0].distance(guess.coords[0]);
    }
    let mc = total / n as f64;
    let exact = 20.0 * unit_square_mean_distance();
    assert!((unit_square_mean_distance() - 0.5214054).abs() < 1e-7);
    assert!((mc - 10.45).abs() / 10.45 < 0.02, "{mc}");
    assert!((mc - exact).abs() / exact < 0.01, "{mc} vs {exact}");
}

#[test]
fn sweep_geometry() {
    let a20 = Area::square(20.0).unwrap();
    assert_eq!(sensor_density(16, a20), 4.0);
    let pts = sweep_points(SweepMode::ConstantDensity, &[16.0, 36.0, 64.0], 4.0, a20).unwrap();
    let sides: Vec<f64> = pts.iter().map(|p| p.area.width).collect();
    assert_eq!(sides, vec![20.0, 30.0, 40.0]);
    assert!(pts.iter().all(|p| (sensor_density(p.n_s, p.area) - 4.0).abs() < 1e-12));
    let pts = sweep_points(SweepMode::ConstantArea, &[1.0, 4.0, 9.0, 16.0, 25.0], 4.0, a20).unwrap();
    assert_eq!(pts.iter().map(|p| p.n_s).collect::<Vec<_>>(), vec![4, 16, 36, 64, 100]);
    assert!(sweep_points(SweepMode::ConstantArea, &[0.3], 4.0, a20).is_err());
}
