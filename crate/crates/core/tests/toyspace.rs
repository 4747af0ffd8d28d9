use oodbench::toyspace::{generate_toy, ground_truth_id, reference_ood_score, ToyGeometry, ToySpec};
use oodbench::{Points, ToyKind};
use proptest::prelude::*;

fn all_specs() -> Vec<ToySpec> {
    ToyKind::ALL.iter().map(|k| ToySpec::default_for(*k)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn circle_interior_has_no_training_points(seed in any::<u64>()) {
        let spec = ToySpec::circle();
        let ToyGeometry::Circle(c) = &spec.geometry else { unreachable!() };
        let inner = c.base_radius - c.amplitude - 2.0 * spec.noise_sigma;
        let s = generate_toy(&spec, seed, 1000, 200, 10).unwrap();
        for r in s.train.points.rows() {
            let radius = (r[0] - c.center[0]).hypot(r[1] - c.center[1]);
            prop_assert!(radius >= inner, "radius {radius} < {inner}");
        }
    }

    #[test]
    fn haystack_constant_column_is_exact(seed in any::<u64>()) {
        let spec = ToySpec::haystack();
        let ToyGeometry::Haystack(h) = &spec.geometry else { unreachable!() };
        let s = generate_toy(&spec, seed, 500, 500, 10).unwrap();
        for split in [&s.train.points, &s.valid.points] {
            prop_assert!(split.column(h.constant_index).iter().all(|v| *v == h.constant_value));
        }
    }

    #[test]
    fn train_and_valid_are_ground_truth_id(seed in any::<u64>()) {
        for spec in all_specs() {
            let s = generate_toy(&spec, seed, 300, 300, 10).unwrap();
            prop_assert!(ground_truth_id(&spec, &s.train.points).unwrap().iter().all(|b| *b));
            prop_assert!(ground_truth_id(&spec, &s.valid.points).unwrap().iter().all(|b| *b));
        }
    }

    #[test]
    fn test_labels_match_ground_truth_and_are_balanced(seed in any::<u64>()) {
        for spec in all_specs() {
            let s = generate_toy(&spec, seed, 10, 10, 1000).unwrap();
            let truth = ground_truth_id(&spec, &s.test.points).unwrap();
            prop_assert_eq!(&truth, &s.test_is_id);
            let frac = truth.iter().filter(|b| **b).count() as f64 / truth.len() as f64;
            prop_assert!((frac - 0.5).abs() <= 0.05, "{}: ID fraction {}", spec.kind().name(), frac);
        }
    }
}

#[test]
fn generation_is_bit_identical_per_seed() {
    for spec in all_specs() {
        let a = generate_toy(&spec, 42, 100, 50, 80).unwrap();
        let b = generate_toy(&spec, 42, 100, 50, 80).unwrap();
        assert_eq!(a, b);
        let c = generate_toy(&spec, 43, 100, 50, 80).unwrap();
        assert_ne!(a.train.points, c.train.points);
    }
}

#[test]
fn scores_are_non_negative_and_zero_only_on_the_manifold() {
    for spec in all_specs() {
        let s = generate_toy(&spec, 11, 10, 10, 500).unwrap();
        let score = reference_ood_score(&spec, &s.test.points).unwrap();
        assert!(score.iter().all(|v| *v >= 0.0 && v.is_finite()));
        for (v, id) in score.iter().zip(&s.test_is_id) {
            if !id {
                assert!(*v > 0.0);
            }
        }
    }
}

#[test]
fn line_boundary_cases() {
    let spec = ToySpec::line();
    let ToyGeometry::Line(l) = &spec.geometry else { unreachable!() };
    let normal = [-l.direction[1], l.direction[0]];
    let at = |d: f64| {
        vec![l.anchor[0] + 2.0 * l.direction[0] + d * normal[0], l.anchor[1] + 2.0 * l.direction[1] + d * normal[1]]
    };
    let pts =
        Points::from_rows(&[at(0.0), at(1.999 * spec.noise_sigma), at(2.001 * spec.noise_sigma), at(-3.0)]).unwrap();
    assert_eq!(ground_truth_id(&spec, &pts).unwrap(), vec![true, true, false, false]);
}

#[test]
fn haystack_offset_score() {
    let spec = ToySpec::haystack();
    let ToyGeometry::Haystack(h) = &spec.geometry else { unreachable!() };
    let mut x = vec![0.0; 10];
    x[h.constant_index] = h.constant_value + 0.3;
    let mut y = vec![1.0; 10];
    y[h.constant_index] = h.constant_value;
    let pts = Points::from_rows(&[x, y]).unwrap();
    let s = reference_ood_score(&spec, &pts).unwrap();
    assert!((s[0] - 0.3).abs() < 1e-12);
    assert_eq!(s[1], 0.0);
    assert_eq!(ground_truth_id(&spec, &pts).unwrap(), vec![false, true]);
}

#[test]
fn rejects_empty_splits() {
    assert!(generate_toy(&ToySpec::line(), 0, 0, 1, 1).is_err());
    assert!(generate_toy(&ToySpec::circle(), 0, 1, 1, 0).is_err());
}
