use nalgebra::DMatrix;
use proptest::prelude::*;

use warpmetric::losses::{hamming_paths, ConcaveSal};
use warpmetric::metric::feature_map_naive;
use warpmetric::{
    affinity, delta_abs, delta_max, dtw_decode, feature_map, sym_area_loss, AffinityMatrix,
    AlignmentPath, MetricMatrix, Structure,
};

/// A random monotone path built from a move sequence, clipped to the grid.
fn path_strategy() -> impl Strategy<Value = AlignmentPath> {
    (1usize..8, 1usize..8, prop::collection::vec(0u8..3, 0..20)).prop_map(|(r, c, moves)| {
        let (mut i, mut j) = (1, 1);
        let mut steps = vec![(1, 1)];
        for m in moves {
            let (di, dj) = match m {
                0 => (1, 1),
                1 => (1, 0),
                _ => (0, 1),
            };
            if i + di <= r && j + dj <= c {
                i += di;
                j += dj;
                steps.push((i, j));
            }
        }
        while (i, j) != (r, c) {
            if i < r {
                i += 1;
            }
            if j < c {
                j += 1;
            }
            steps.push((i, j));
        }
        AlignmentPath::new(steps, r, c).unwrap()
    })
}

fn path_pair() -> impl Strategy<Value = (AlignmentPath, AlignmentPath)> {
    path_strategy().prop_flat_map(|p| {
        let (r, c) = p.dims();
        let other = prop::collection::vec(0u8..3, 0..20).prop_map(move |moves| {
            let (mut i, mut j) = (1, 1);
            let mut steps = vec![(1, 1)];
            for m in moves.into_iter().chain(std::iter::repeat_n(0, r + c)) {
                if (i, j) == (r, c) {
                    break;
                }
                let (di, dj) = match m {
                    0 => (usize::from(i < r), usize::from(j < c)),
                    1 if i < r => (1, 0),
                    2 if j < c => (0, 1),
                    _ => continue,
                };
                i += di;
                j += dj;
                steps.push((i, j));
            }
            AlignmentPath::new(steps, r, c).unwrap()
        });
        (Just(p), other)
    })
}

proptest! {
    #[test]
    fn matrix_round_trip(p in path_strategy()) {
        prop_assert_eq!(AlignmentPath::from_matrix(&p.to_matrix()).unwrap(), p);
    }

    #[test]
    fn losses_are_symmetric_metrics((p, q) in path_pair()) {
        prop_assert_eq!(hamming_paths(&p, &q).unwrap(), hamming_paths(&q, &p).unwrap());
        prop_assert_eq!(delta_abs(&p, &q).unwrap(), delta_abs(&q, &p).unwrap());
        prop_assert!(delta_abs(&p, &q).unwrap() <= delta_max(&p, &q).unwrap());
        let (a, b) = (p.to_matrix(), q.to_matrix());
        prop_assert_eq!(sym_area_loss(&a, &b).unwrap(), sym_area_loss(&b, &a).unwrap());
        prop_assert_eq!(sym_area_loss(&a, &a).unwrap(), 0.0);
        let same = p == q;
        prop_assert_eq!(hamming_paths(&p, &q).unwrap() == 0.0, same);
        prop_assert_eq!(sym_area_loss(&a, &b).unwrap() == 0.0, same);
    }

    #[test]
    fn concave_extension_is_exact_on_vertices((p, q) in path_pair()) {
        let (r, c) = p.dims();
        let sal = ConcaveSal::new(r, c).unwrap();
        let exact = sym_area_loss(&p.to_matrix(), &q.to_matrix()).unwrap();
        let got = sal.value(&p.to_matrix(), &q.to_matrix()).unwrap();
        prop_assert!((exact - got).abs() <= 1e-9 * exact.max(1.0));
    }

    #[test]
    fn decoded_path_is_at_least_as_good_as_any((p, _) in path_pair(), seed in 0u64..1000) {
        let (r, c) = p.dims();
        let vals = DMatrix::from_fn(r, c, |i, j| (((i * 31 + j * 17) as u64 + seed) % 13) as f64 - 6.0);
        let decoded = dtw_decode(&AffinityMatrix::new(vals.clone()).unwrap());
        prop_assert!(decoded.score >= p.score(&vals));
        prop_assert_eq!(decoded.path.score(&vals), decoded.score);
    }

    #[test]
    fn inner_product_with_feature_map_is_the_affinity_score(
        p in path_strategy(),
        raw in prop::collection::vec(-2.0f64..2.0, 2 * 7 * 3 + 9),
    ) {
        let (r, c) = p.dims();
        let a = DMatrix::from_fn(r, 3, |i, k| raw[i * 3 + k]);
        let b = DMatrix::from_fn(c, 3, |j, k| raw[21 + j * 3 + k]);
        let m = DMatrix::from_fn(3, 3, |i, k| raw[42 + i * 3 + k]);
        let w = MetricMatrix::new(&m * m.transpose(), Structure::Psd).unwrap();
        let phi = feature_map(&a, &b, &p).unwrap();
        let naive = feature_map_naive(&a, &b, &p).unwrap();
        prop_assert!((&phi - &naive).amax() <= 1e-9 * naive.amax().max(1.0));
        let score = p.score(affinity(&a, &b, &w).unwrap().values());
        prop_assert!((w.values().dot(&phi) - score).abs() <= 1e-8 * score.abs().max(1.0));
    }
}
