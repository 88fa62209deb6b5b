use detangle_core::align::{greedy_alignment, injective_alignment, objective};
use detangle_core::analysis::pearson;
use detangle_core::dataset::{
    discretize_neuron, parse_representation_csv, representation_csv, split_indices, BinStrategy, FactorSchema,
    RepresentationSet, SplitSpec,
};
use detangle_core::infotheory::{entropy, mutual_information};
use detangle_core::metrics::dci;
use detangle_core::ImportanceMatrix;
use proptest::prelude::*;

/// Best total over all injective assignments, by exhaustive search.
fn brute_force(values: &[Vec<f64>]) -> f64 {
    fn go(values: &[Vec<f64>], j: usize, used: &mut Vec<bool>) -> f64 {
        if j == values.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                best = best.max(values[j][i] + go(values, j + 1, used));
                used[i] = false;
            }
        }
        best
    }
    go(values, 0, &mut vec![false; values[0].len()])
}

fn matrix(max_n: usize, max_m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_n).prop_flat_map(move |n| {
        (n..=max_m.max(n)).prop_flat_map(move |m| prop::collection::vec(prop::collection::vec(0.0..1.0f64, m), n))
    })
}

fn labels(len: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn injective_alignment_is_optimal(values in matrix(4, 6)) {
        let imp = ImportanceMatrix::from_rows(values.clone()).unwrap();
        let a = injective_alignment(&imp).unwrap();
        prop_assert!(a.is_injective());
        let best = brute_force(&values);
        prop_assert!((objective(&imp, &a.assignment) - best).abs() < 1e-9);
        prop_assert!((a.objective_value - best).abs() < 1e-9);
        // greedy never beats the optimum and agrees with it when injective
        let g = greedy_alignment(&imp);
        prop_assert!(g.objective_value >= best - 1e-9);
        if g.is_injective() {
            prop_assert!((g.objective_value - best).abs() < 1e-9);
        }
    }

    #[test]
    fn alignment_is_scale_invariant(values in matrix(4, 5), scale in 0.01..100.0f64) {
        let imp = ImportanceMatrix::from_rows(values.clone()).unwrap();
        let scaled = ImportanceMatrix::from_rows(
            values.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect(),
        ).unwrap();
        let a = injective_alignment(&imp).unwrap();
        let b = injective_alignment(&scaled).unwrap();
        prop_assert!((objective(&imp, &b.assignment) - objective(&imp, &a.assignment)).abs() < 1e-9);
    }

    #[test]
    fn discretize_is_invariant_to_monotone_maps(
        values in prop::collection::vec(-100.0..100.0f64, 1..80),
        bins in 1usize..12,
        equal_width in any::<bool>(),
    ) {
        let strategy = if equal_width { BinStrategy::EqualWidth } else { BinStrategy::Quantile };
        let d = discretize_neuron(&values, bins, strategy).unwrap();
        prop_assert!(d.bins.iter().all(|&b| b < d.num_bins()));
        // bin order follows value order
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(d.bins[i] <= d.bins[j]);
                }
            }
        }
        if !equal_width {
            let mapped: Vec<f64> = values.iter().map(|v| v.mul_add(3.0, 7.0)).collect();
            prop_assert_eq!(discretize_neuron(&mapped, bins, strategy).unwrap().bins, d.bins);
        }
    }

    #[test]
    fn mutual_information_is_symmetric_and_bounded(
        (x, y) in (1usize..120).prop_flat_map(|n| (labels(n, 5), labels(n, 4))),
    ) {
        let ixy = mutual_information(&x, &y).unwrap();
        let iyx = mutual_information(&y, &x).unwrap();
        prop_assert!((ixy - iyx).abs() < 1e-9);
        prop_assert!(ixy >= 0.0);
        let (hx, hy) = (entropy(&x).unwrap(), entropy(&y).unwrap());
        prop_assert!(ixy <= hx.min(hy) + 1e-9);
        prop_assert!((mutual_information(&x, &x).unwrap() - hx).abs() < 1e-9);
    }

    #[test]
    fn random_split_partitions_rows(n in 2usize..200, frac in 0.05..0.95f64, seed in any::<u64>()) {
        let set = RepresentationSet::new(
            vec![(0..n).map(|i| i as f64).collect()],
            vec![(0..n).map(|i| i % 2).collect()],
            FactorSchema::from_pairs([("f", 2)]).unwrap(),
        ).unwrap();
        let (train, test) = split_indices(&set, &SplitSpec::Random { test_fraction: frac, seed }).unwrap();
        prop_assert_eq!(test.len(), (n as f64 * frac).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn cg_split_excludes_exactly_the_combination(
        (a, b, rows) in (0usize..3, 0usize..4, prop::collection::vec((0usize..3, 0usize..4), 1..100)),
    ) {
        let set = RepresentationSet::new(
            vec![rows.iter().map(|r| r.0 as f64).collect(), rows.iter().map(|r| r.1 as f64).collect()],
            vec![rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect()],
            FactorSchema::from_pairs([("shape", 3), ("size", 4)]).unwrap(),
        ).unwrap();
        let spec = SplitSpec::CgExclusion { factor_a: 0, value_a: a, factor_b: 1, value_b: b };
        let held = rows.iter().filter(|&&r| r == (a, b)).count();
        let Ok((train, test)) = split_indices(&set, &spec) else {
            // only a split with an empty side is refused
            prop_assert!(held == 0 || held == rows.len());
            return Ok(());
        };
        prop_assert_eq!(test.len(), held);
        prop_assert!(test.iter().all(|&i| rows[i] == (a, b)));
        prop_assert!(train.iter().all(|&i| rows[i] != (a, b)));
        prop_assert_eq!(train.len() + test.len(), rows.len());
    }

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec((-1e6..1e6f64, -1.0..1.0f64, 0usize..3, 0usize..2), 1..50),
    ) {
        let schema = FactorSchema::from_pairs([("a", 3), ("b", 2)]).unwrap();
        let set = RepresentationSet::new(
            vec![rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect()],
            vec![rows.iter().map(|r| r.2).collect(), rows.iter().map(|r| r.3).collect()],
            schema.clone(),
        ).unwrap();
        let text = representation_csv(&set);
        let back = parse_representation_csv(text.as_bytes(), schema).unwrap();
        prop_assert_eq!(back.neurons(), set.neurons());
        prop_assert_eq!(back.factors(), set.factors());
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..60),
        scale in 0.1..10.0f64,
        shift in -5.0..5.0f64,
    ) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let Ok(xy) = pearson(&x, &y) else { return Ok(()) };
        let yx = pearson(&y, &x).unwrap();
        prop_assert!((xy.r - yx.r).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&xy.r));
        prop_assert!((0.0..=1.0).contains(&xy.p));
        let moved: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
        prop_assert!((pearson(&moved, &y).unwrap().r - xy.r).abs() < 1e-9);
        let flipped: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((pearson(&flipped, &y).unwrap().r + xy.r).abs() < 1e-9);
    }

    #[test]
    fn dci_ignores_neuron_order(values in matrix(3, 5), seed in any::<u64>()) {
        let imp = ImportanceMatrix::from_rows(values.clone()).unwrap();
        let m = values[0].len();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.rotate_left((seed % m as u64) as usize);
        let shuffled = ImportanceMatrix::from_rows(
            values.iter().map(|r| perm.iter().map(|&i| r[i]).collect()).collect(),
        ).unwrap();
        let (a, b) = (dci(&imp, None).unwrap(), dci(&shuffled, None).unwrap());
        prop_assert!((a.disentanglement - b.disentanglement).abs() < 1e-9);
        prop_assert!((a.completeness - b.completeness).abs() < 1e-9);
    }
}

#[test]
fn injective_alignment_five_by_ten_matches_brute_force() {
    // deterministic pseudo-random matrix
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let values: Vec<Vec<f64>> = (0..5).map(|_| (0..10).map(|_| next()).collect()).collect();
    let imp = ImportanceMatrix::from_rows(values.clone()).unwrap();
    let a = injective_alignment(&imp).unwrap();
    assert!((a.objective_value - brute_force(&values)).abs() < 1e-12);
}
