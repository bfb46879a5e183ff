use gpsl_core::hv::{
    dominates, exact_hv, nondominated_filter, r2_hv_approx, r2_hv_value_and_subgradient, MinMaxNormalizer,
};
use gpsl_core::network::init_network;
use gpsl_core::problems::{Problem, ProblemId};
use gpsl_core::sampling::{binomial, das_dennis, sample_dirichlet, sample_gaussian, sample_lhs};
use ndarray::Array2;
use proptest::prelude::*;

fn point_set(m: usize, max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, m), 1..=max_n)
}

fn sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=4).prop_flat_map(|m| point_set(m, 25))
}

fn reference(m: usize) -> Vec<f64> {
    vec![1.1; m]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hv_grows_when_a_point_is_added(points in sets(), extra in prop::collection::vec(0.0..1.0f64, 4)) {
        let m = points[0].len();
        let r = reference(m);
        let before = exact_hv(&points, &r).unwrap();
        let mut more = points.clone();
        more.push(extra[..m].to_vec());
        prop_assert!(exact_hv(&more, &r).unwrap() >= before - 1e-12);
    }

    #[test]
    fn dominated_points_do_not_change_hv(points in sets(), shift in prop::collection::vec(0.0..0.1f64, 4)) {
        let m = points[0].len();
        let r = reference(m);
        let before = exact_hv(&points, &r).unwrap();
        let mut more = points.clone();
        more.push(points[0].iter().zip(&shift).map(|(a, s)| a + s).collect());
        prop_assert!((exact_hv(&more, &r).unwrap() - before).abs() <= 1e-12);
    }

    #[test]
    fn filtering_preserves_hv(points in sets()) {
        let r = reference(points[0].len());
        let front = nondominated_filter(&points).unwrap();
        let a = exact_hv(&points, &r).unwrap();
        let b = exact_hv(&front, &r).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn filter_output_is_mutually_nondominated_and_covers_input(points in sets()) {
        let front = nondominated_filter(&points).unwrap();
        for a in &front {
            prop_assert!(points.contains(a));
            prop_assert!(front.iter().all(|b| !dominates(b, a)));
        }
        for p in &points {
            prop_assert!(front.iter().any(|f| f == p || dominates(f, p)));
        }
    }

    #[test]
    fn r2_subgradient_ascent_does_not_decrease(points in (2usize..=3).prop_flat_map(|m| point_set(m, 8))) {
        let m = points[0].len();
        let r = reference(m);
        let dirs = das_dennis(m, if m == 2 { 31 } else { 8 }).unwrap();
        let (value, grad) = r2_hv_value_and_subgradient(&points, &r, &dirs);
        let stepped: Vec<Vec<f64>> = points
            .iter()
            .zip(&grad)
            .map(|(p, g)| p.iter().zip(g).map(|(a, b)| a + 1e-4 * b).collect())
            .collect();
        prop_assert!(r2_hv_approx(&stepped, &r, &dirs) >= value - 1e-12);
    }

    #[test]
    fn das_dennis_directions_are_unit_and_counted(m in 2usize..=5, h in 1usize..=12) {
        let dirs = das_dennis(m, h).unwrap();
        prop_assert_eq!(dirs.len(), binomial(h + m - 1, m - 1));
        for d in dirs.directions() {
            let n: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
            prop_assert!(d.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn lhs_puts_one_sample_per_stratum(k in 1usize..=5, n in 1usize..=40, seed in any::<u64>()) {
        let lower: Vec<f64> = (0..k).map(|i| -(i as f64)).collect();
        let upper: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
        let batch = sample_lhs(k, &lower, &upper, n, seed).unwrap();
        prop_assert_eq!(batch.samples.dim(), (n, k));
        for j in 0..k {
            let mut hit = vec![false; n];
            for v in batch.samples.column(j) {
                let u = (v - lower[j]) / (upper[j] - lower[j]);
                prop_assert!((0.0..1.0).contains(&u));
                let cell = (u * n as f64).floor() as usize;
                prop_assert!(!hit[cell]);
                hit[cell] = true;
            }
        }
    }

    #[test]
    fn dirichlet_samples_lie_on_the_simplex(m in 2usize..=6, alpha in 0.2..5.0f64, seed in any::<u64>()) {
        let batch = sample_dirichlet(m, alpha, 16, seed).unwrap();
        for row in batch.samples.rows() {
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn samplers_are_deterministic(seed in any::<u64>()) {
        let center = [0.5, -1.0, 2.0];
        prop_assert_eq!(
            sample_gaussian(3, &center, 10, seed).unwrap(),
            sample_gaussian(3, &center, 10, seed).unwrap()
        );
        prop_assert_eq!(
            sample_lhs(2, &[0.0, 0.0], &[1.0, 1.0], 10, seed).unwrap(),
            sample_lhs(2, &[0.0, 0.0], &[1.0, 1.0], 10, seed).unwrap()
        );
        prop_assert_eq!(sample_dirichlet(3, 1.0, 10, seed).unwrap(), sample_dirichlet(3, 1.0, 10, seed).unwrap());
    }

    #[test]
    fn network_outputs_stay_inside_bounds(
        seed in any::<u64>(),
        latents in prop::collection::vec(-50.0..50.0f64, 12),
    ) {
        let params = init_network(&[3, 16, 16, 2], seed).unwrap();
        let lower = [-2.0, 0.5];
        let upper = [3.0, 0.75];
        let v = Array2::from_shape_vec((4, 3), latents).unwrap();
        let (x, _) = params.forward_batch(&v, &lower, &upper).unwrap();
        for row in x.rows() {
            for j in 0..2 {
                prop_assert!(row[j] >= lower[j] && row[j] <= upper[j]);
            }
        }
    }

    #[test]
    fn normalizer_maps_extremes_to_unit_range(points in sets()) {
        let m = points[0].len();
        let lo: Vec<f64> = (0..m).map(|i| points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..m).map(|i| points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let normalizer = MinMaxNormalizer::new(lo.clone(), hi.clone());
        let a = normalizer.apply(&lo);
        let b = normalizer.apply(&hi);
        for i in 0..m {
            prop_assert!(a[i].abs() < 1e-12);
            if hi[i] > lo[i] {
                prop_assert!((b[i] - 1.0).abs() < 1e-12);
            }
        }
        for p in normalizer.apply_all(&points) {
            prop_assert!(p.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        }
    }
}

#[test]
fn analytic_fronts_are_nondominated() {
    for id in [ProblemId::Zdt3, ProblemId::Dtlz5, ProblemId::Dtlz7] {
        let front = Problem::new(id).analytic_front(60).unwrap();
        let filtered = nondominated_filter(&front.points).unwrap();
        assert_eq!(filtered.len(), front.points.len(), "{id}");
    }
}
