//! Property tests for the structural invariants: the partition identity of
//! the tree aggregation, the homology oracle's agreement with it, hierarchy
//! round-trips, and the feature-matrix transformations.

use nalgebra::DMatrix;
use proptest::prelude::*;

use ctree::atlas::AtlasHierarchy;
use ctree::connectome::{
    filter_zero_variance, impute_mean, vectorize_upper, AdjacencyMatrix, FeatureMatrix,
};
use ctree::homology::{corank, verify_theorem, OracleOptions};
use ctree::synth::{random_hierarchy, random_matrix};
use ctree::tree::{build_tree, conservation_check};

fn adjacency_from_upper(p: usize, upper: &[u64]) -> AdjacencyMatrix {
    let mut counts = vec![0u64; p * p];
    let mut k = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            counts[i * p + j] = upper[k];
            counts[j * p + i] = upper[k];
            k += 1;
        }
    }
    let names = (0..p).map(|i| format!("r{i}")).collect();
    AdjacencyMatrix::from_counts("prop", p, counts, names).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every off-diagonal pair feeds exactly one internal node, so the
    /// internal weights always sum to the strict upper-triangle total.
    #[test]
    fn partition_property_random_hierarchy_and_matrix(
        hseed in 0u64..1000,
        mseed in 0u64..1000,
    ) {
        let h = random_hierarchy(hseed, 4, 16);
        let a = random_matrix(&h, mseed, 9);
        let t = build_tree(&h, &a).unwrap();
        let report = conservation_check(&h, &a, &t).unwrap();
        prop_assert!(report.holds());
        prop_assert_eq!(report.internal_weight_sum, a.upper_triangle_sum());
        prop_assert_eq!(report.leaf_weight_sum, a.trace());
    }

    /// Corank equals tree weight at every internal node (the oracle run also
    /// machine-checks the chain-map law on every constructed map).
    #[test]
    fn theorem_holds_on_random_instances(
        hseed in 0u64..500,
        mseed in 0u64..500,
    ) {
        let h = random_hierarchy(hseed, 4, 12);
        let a = random_matrix(&h, mseed, 6);
        let report = verify_theorem(&h, &a, &OracleOptions::default()).unwrap();
        prop_assert!(report.all_match(), "{}", report.to_csv());
    }

    /// Relabeling leaves inside one child never changes any corank.
    #[test]
    fn corank_invariant_under_within_child_relabeling(
        mseed in 0u64..300,
        swap_seed in 0u64..300,
    ) {
        let h = random_hierarchy(7, 4, 12);
        let a = random_matrix(&h, mseed, 6);
        // Pick an internal node with a child holding >= 2 leaves and swap two
        // of that child's leaves in the matrix indexing.
        let mut swapped = None;
        'outer: for &node in h.internal_nodes() {
            for child in h.children(node).unwrap() {
                let rois = h.descendant_rois(child).unwrap();
                if rois.len() >= 2 {
                    let pick = (swap_seed as usize) % (rois.len() - 1);
                    swapped = Some((rois[pick], rois[pick + 1]));
                    break 'outer;
                }
            }
        }
        prop_assume!(swapped.is_some());
        let (x, y) = swapped.unwrap();
        let p = h.p();
        let mut perm: Vec<usize> = (0..p).collect();
        perm.swap(x, y);
        let mut counts = vec![0u64; p * p];
        for i in 0..p {
            for j in 0..p {
                counts[i * p + j] = a.get(perm[i], perm[j]);
            }
        }
        let names = (0..p).map(|i| format!("r{i}")).collect();
        let b = AdjacencyMatrix::from_counts("perm", p, counts, names).unwrap();
        let options = OracleOptions::default();
        for &node in h.internal_nodes() {
            prop_assert_eq!(
                corank(&h, &a, node, &options).unwrap(),
                corank(&h, &b, node, &options).unwrap()
            );
        }
    }

    /// parse(serialize(h)) is the identity on valid hierarchies.
    #[test]
    fn hierarchy_roundtrip(seed in 0u64..2000) {
        let h = random_hierarchy(seed, 5, 20);
        let again = AtlasHierarchy::parse(&h.serialize()).unwrap();
        prop_assert_eq!(&again, &h);
        prop_assert_eq!(again.fingerprint(), h.fingerprint());
    }

    /// internal + leaves partitions the node set.
    #[test]
    fn internal_plus_leaves_is_total(seed in 0u64..2000) {
        let h = random_hierarchy(seed, 5, 20);
        prop_assert_eq!(h.internal_nodes().len() + h.p(), h.node_count());
    }

    /// LCA level never exceeds either leaf's level, and the LCA contains both.
    #[test]
    fn lca_level_and_containment(seed in 0u64..500, a in 0usize..100, b in 0usize..100) {
        let h = random_hierarchy(seed, 5, 20);
        let (a, b) = (a % h.p(), b % h.p());
        let lca = h.lowest_common_ancestor(a, b).unwrap();
        let node = h.node(lca).unwrap();
        let la = h.node(h.leaf_by_roi(a).unwrap()).unwrap().level;
        let lb = h.node(h.leaf_by_roi(b).unwrap()).unwrap().level;
        prop_assert!(node.level <= la.min(lb));
        let rois = h.descendant_rois(lca).unwrap();
        prop_assert!(rois.binary_search(&a).is_ok());
        prop_assert!(rois.binary_search(&b).is_ok());
    }

    /// Vectorizing then reassembling a zero-diagonal symmetric matrix
    /// reproduces all off-diagonal entries.
    #[test]
    fn vectorize_roundtrip(upper in proptest::collection::vec(0u64..50, 10)) {
        let p = 5;
        let a = adjacency_from_upper(p, &upper);
        let x = vectorize_upper(std::slice::from_ref(&a)).unwrap();
        let mut k = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                prop_assert_eq!(x.values()[(0, k)] as u64, a.get(i, j));
                k += 1;
            }
        }
    }

    /// Zero-variance filtering is idempotent.
    #[test]
    fn zero_variance_filter_idempotent(
        rows in proptest::collection::vec(proptest::collection::vec(0u64..3, 6), 4)
    ) {
        let values = DMatrix::from_fn(4, 6, |i, j| rows[i][j] as f64);
        let labels = (0..6).map(|j| format!("c{j}")).collect();
        let ids = (0..4).map(|i| format!("s{i}")).collect();
        let x = FeatureMatrix::new(values, labels, (0..6).collect(), ids).unwrap();
        let once = filter_zero_variance(&x).unwrap();
        let twice = filter_zero_variance(&once).unwrap();
        prop_assert_eq!(once, twice);
    }

    /// Mean imputation never changes a column's mean.
    #[test]
    fn impute_preserves_column_means(
        values in proptest::collection::vec(-100.0f64..100.0, 12),
        missing in proptest::collection::vec(0usize..12, 0..6),
    ) {
        let mut data: Vec<f64> = values.clone();
        for &m in &missing {
            data[m] = f64::NAN;
        }
        // Keep at least one observed value.
        data[0] = values[0];
        let matrix = DMatrix::from_column_slice(12, 1, &data);
        let x = FeatureMatrix::new(
            matrix,
            vec!["t".into()],
            vec![0],
            (0..12).map(|i| format!("s{i}")).collect(),
        )
        .unwrap();
        let observed: Vec<f64> = data.iter().copied().filter(|v| !v.is_nan()).collect();
        let expected = observed.iter().sum::<f64>() / observed.len() as f64;
        let filled = impute_mean(&x).unwrap();
        let got = filled.column(0).iter().sum::<f64>() / 12.0;
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    /// Increasing one entry moves exactly one node weight, by exactly that
    /// amount.
    #[test]
    fn monotone_response(seed in 0u64..300, delta in 1u64..20) {
        let h = random_hierarchy(seed, 4, 12);
        let a = random_matrix(&h, seed.wrapping_add(17), 5);
        let p = h.p();
        prop_assume!(p >= 2);
        let (i, j) = (0, p - 1);
        let t = build_tree(&h, &a).unwrap();
        let mut counts = vec![0u64; p * p];
        for x in 0..p {
            for y in 0..p {
                counts[x * p + y] = a.get(x, y);
            }
        }
        counts[i * p + j] += delta;
        counts[j * p + i] += delta;
        let names = (0..p).map(|k| format!("r{k}")).collect();
        let b = AdjacencyMatrix::from_counts("bumped", p, counts, names).unwrap();
        let t2 = build_tree(&h, &b).unwrap();
        let lca = h.lowest_common_ancestor(i, j).unwrap();
        for node in h.nodes() {
            let before = t.weight(&h, node.node_id).unwrap();
            let after = t2.weight(&h, node.node_id).unwrap();
            if node.node_id == lca {
                prop_assert_eq!(after, before + delta);
            } else {
                prop_assert_eq!(after, before);
            }
        }
    }
}
