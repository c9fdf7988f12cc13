use nalgebra::DMatrix;
use proptest::prelude::*;
use romopt::optim::expected_improvement;
use romopt::params::{Normalizer, ParameterSpace, SampleSet};
use romopt::pod::{compute_pod, project_vector, reconstruct, SnapshotSet, Truncation};
use romopt::structeval::{count_yielded, objective, PenaltyConfig, YieldThresholds};
use romopt::synthfom::{LoadCase, StressField};

proptest! {
    #[test]
    fn normalizer_round_trip(lo in -50.0..50.0f64, w in 0.1..100.0f64, t in 0.0..1.0f64) {
        let n = Normalizer::new(vec![lo], vec![lo + w]);
        let x = lo + t * w;
        let u = n.to_unit(&[x]);
        prop_assert!(u[0] >= -1.0 - 1e-12 && u[0] <= 1.0 + 1e-12);
        prop_assert!((n.from_unit(&u)[0] - x).abs() <= 1e-9 * w.max(1.0));
    }

    #[test]
    fn snapping_is_idempotent_and_admissible(u in prop::collection::vec(0.0..1.0f64, 16)) {
        let space = ParameterSpace::hull16(0.5);
        let raw: Vec<f64> = space.dims().iter().zip(&u).map(|(d, t)| d.lower_mm - 1.0 + t * (d.upper_mm - d.lower_mm + 2.0)).collect();
        let s = space.snap(&raw);
        prop_assert!(space.is_admissible(&s));
        prop_assert_eq!(space.snap(&s), s);
    }

    #[test]
    fn sample_csv_round_trip(seed in 0..1000u64) {
        let space = ParameterSpace::hull16(0.5);
        let mut rng = romopt::rng::stream(seed, 0);
        let points: Vec<Vec<f64>> = (0..5).map(|_| space.point_at(&space.random_levels(&mut rng))).collect();
        let set = SampleSet { points, seed };
        let back = SampleSet::from_csv(&set.to_csv(&space.names()).unwrap(), &space).unwrap();
        prop_assert_eq!(back.points, set.points);
    }

    #[test]
    fn pod_modes_orthonormal_and_projection_exact_in_span(n in 3..30usize, m in 2..8usize, seed in 0..500u64) {
        let mut rng = romopt::rng::stream(seed, 1);
        let s = DMatrix::from_fn(n, m, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let set = SnapshotSet::new("s", vec![vec![0.0]; m], s.clone()).unwrap();
        let basis = compute_pod(&set, Truncation::Energy(1.0)).unwrap();
        let r = basis.rank();
        let g = basis.modes.transpose() * &basis.modes;
        prop_assert!((g - DMatrix::identity(r, r)).abs().max() < 1e-10);
        let col: Vec<f64> = s.column(0).iter().copied().collect();
        let back = reconstruct(&basis, &project_vector(&basis, &col).unwrap()).unwrap();
        let err: f64 = back.iter().zip(&col).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9);
    }

    #[test]
    fn objective_monotone(m in 0.0..1e7f64, ny in 0.0..2000.0f64, nb in 0.0..50000.0f64, d in 0.0..100.0f64) {
        let c = PenaltyConfig::default();
        let f = objective(m, ny, nb, &c);
        prop_assert!(f >= m);
        prop_assert!(objective(m + d, ny, nb, &c) >= f);
        prop_assert!(objective(m, ny + d, nb, &c) >= f);
        prop_assert!(objective(m, ny, nb + d, &c) >= f);
    }

    #[test]
    fn expected_improvement_properties(mean in -10.0..10.0f64, sd in 0.0..5.0f64, best in -10.0..10.0f64, dm in 0.0..3.0f64) {
        let ei = expected_improvement(mean, sd, best);
        prop_assert!(ei >= 0.0);
        prop_assert!(ei >= (best - mean).max(0.0) - 1e-12);
        prop_assert!(expected_improvement(mean + dm, sd, best) <= ei + 1e-12);
    }

    #[test]
    fn yield_count_bounded_and_scale_monotone(values in prop::collection::vec(-400.0..400.0f64, 6 * 2 * 20), k in 0.0..1.0f64) {
        let mut f = StressField::zeros(20, &LoadCase::ALL);
        f.data.copy_from_slice(&values);
        let th = YieldThresholds::default();
        let n = count_yielded(&f, &th);
        prop_assert!(n <= 20);
        let mut g = f.clone();
        g.data.iter_mut().for_each(|v| *v *= k);
        prop_assert!(count_yielded(&g, &th) <= n);
    }
}
