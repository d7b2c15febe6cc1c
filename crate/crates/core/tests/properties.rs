//! Property-based invariants of the building blocks.

use dpmbart_core::bart::LeafSuffStats;
use dpmbart_core::dpm::{ew_draw_a, ew_draw_b, log_p_clusters_given_alpha, Baseline, ClusterState, Theta};
use dpmbart_core::prior::{calibrate_lambda, BaselineG0};
use dpmbart_core::rng::stream;
use dpmbart_core::summary::{linspace, trapezoid};
use dpmbart_core::tree::{NodeKind, Rule};
use dpmbart_core::{CutpointGrid, Dataset, Tree};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_draws_keep_state_valid(
        e in prop::collection::vec(-5.0f64..5.0, 1..60),
        alpha in 0.01f64..20.0,
        seed in any::<u64>(),
    ) {
        let g0 = BaselineG0::new(10.0, 0.4, 0.0, 1.6).unwrap();
        let baseline = Baseline::NormalInvChisq(g0);
        let mut rng = stream(seed, 0);
        let mut state = ClusterState::single(e.len(), Theta { mu: 0.0, sigma: 1.0 });
        for _ in 0..5 {
            ew_draw_a(&e, &mut state, alpha, &baseline, &mut rng).unwrap();
            state.check().unwrap();
            prop_assert_eq!(state.counts().iter().sum::<usize>(), e.len());
            prop_assert!(state.counts().iter().all(|&c| c > 0));
            prop_assert_eq!(state.i_unique(), state.thetas().len());
            ew_draw_b(&e, &mut state, &baseline, &mut rng).unwrap();
            state.check().unwrap();
            prop_assert!(state.thetas().iter().all(|t| t.sigma > 0.0 && t.mu.is_finite()));
        }
    }

    #[test]
    fn predictive_density_is_a_density(
        e in prop::collection::vec(-3.0f64..3.0, 1..40),
        alpha in 0.01f64..10.0,
        seed in any::<u64>(),
    ) {
        let g0 = BaselineG0::new(10.0, 0.4, 0.0, 1.6).unwrap();
        let baseline = Baseline::NormalInvChisq(g0);
        let mut rng = stream(seed, 1);
        let mut state = ClusterState::single(e.len(), Theta { mu: 0.0, sigma: 1.0 });
        ew_draw_a(&e, &mut state, alpha, &baseline, &mut rng).unwrap();
        ew_draw_b(&e, &mut state, &baseline, &mut rng).unwrap();
        let snap = state.snapshot();
        let grid = linspace(-200.0, 200.0, 400_001);
        let d: Vec<f64> = grid.iter().map(|&x| snap.predictive_density(x, alpha, &baseline)).collect();
        prop_assert!(d.iter().all(|&v| v >= 0.0));
        let mass = trapezoid(&grid, &d);
        prop_assert!((mass - 1.0).abs() < 2e-3, "mass {}", mass);
    }

    #[test]
    fn suff_stats_merge_like_concatenation(
        a in prop::collection::vec((-5.0f64..5.0, 0.1f64..10.0), 0..30),
        b in prop::collection::vec((-5.0f64..5.0, 0.1f64..10.0), 0..30),
    ) {
        let stats = |v: &[(f64, f64)]| {
            let r: Vec<f64> = v.iter().map(|p| p.0).collect();
            let s: Vec<f64> = v.iter().map(|p| p.1).collect();
            LeafSuffStats::from_residuals(&r, &s)
        };
        let merged = stats(&a).merge(&stats(&b));
        let all: Vec<(f64, f64)> = a.iter().chain(&b).copied().collect();
        let direct = stats(&all);
        prop_assert_eq!(merged.count, direct.count);
        prop_assert!((merged.prec_sum - direct.prec_sum).abs() <= 1e-9 * (1.0 + direct.prec_sum));
        prop_assert!((merged.weighted_resid_sum - direct.weighted_resid_sum).abs() <= 1e-9 * (1.0 + direct.prec_sum * 5.0));
    }

    #[test]
    fn cluster_count_law_normalises(n in 1usize..60, alpha in 0.001f64..100.0) {
        let total: f64 = (1..=n).map(|k| log_p_clusters_given_alpha(k, n, alpha).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_is_scale_equivariant(s in 0.01f64..100.0, c in 0.1f64..10.0, nu in 1.0f64..30.0, q in 0.05f64..0.99) {
        let a = calibrate_lambda(c * s, nu, q).unwrap();
        let b = c * c * calibrate_lambda(s, nu, q).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn grown_trees_survive_text_round_trip_and_pruning(seed in any::<u64>(), steps in 0usize..25) {
        let mut rng = stream(seed, 2);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let data = Dataset::new(rows, vec![0.0; 40]).unwrap();
        let grid = CutpointGrid::build(&data, 20).unwrap();
        let mut tree = Tree::leaf(0.0);
        for _ in 0..steps {
            let leaves = tree.leaves();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let vars = tree.splittable_vars(leaf, &grid);
            if vars.is_empty() {
                continue;
            }
            let var = vars[rng.random_range(0..vars.len())];
            let (lo, hi) = tree.feasible_cut_range(leaf, var, grid.cuts(var).len());
            let cut_index = rng.random_range(lo..hi);
            let rule = Rule { var, cut_index, cut: grid.value(var, cut_index) };
            tree.grow(leaf, rule, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        prop_assert_eq!(tree.num_nodes(), 2 * tree.num_leaves() - 1);
        let back = Tree::from_text(&tree.to_text(), &grid).unwrap();
        for row in data.rows() {
            prop_assert_eq!(back.eval(row), tree.eval(row));
        }
        // assignments agree with dropping each row down the tree
        let assign = tree.leaf_assignment(&data);
        for (i, row) in data.rows().enumerate() {
            prop_assert_eq!(assign[i], tree.find_leaf(row));
        }
        // pruning nogs repeatedly returns to a single leaf
        while let Some(&nog) = tree.nog_nodes().first() {
            tree.prune(nog, 0.0);
        }
        prop_assert_eq!(tree.num_leaves(), 1);
        let root_is_leaf = matches!(tree.node(Tree::ROOT).kind, NodeKind::Leaf { .. });
        prop_assert!(root_is_leaf);
    }
}
