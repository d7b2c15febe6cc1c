//! With a flat likelihood the birth/death chain samples the tree prior; its
//! depth histogram is compared with direct simulation of the growth process.

use dpmbart_core::bart::{birth_death_step, TreeTarget, TreeUpdatePriors};
use dpmbart_core::rng::stream;
use dpmbart_core::{CutpointGrid, Dataset, Tree, TreePrior};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Depth of a tree drawn by growing from the root: a node at depth `d` with
/// a feasible cut splits with probability `prior.split_prob(d)`.
fn grow_depth<R: Rng>(ranges: &[(usize, usize)], depth: usize, prior: &TreePrior, rng: &mut R) -> usize {
    let vars: Vec<usize> = (0..ranges.len()).filter(|&v| ranges[v].1 > ranges[v].0).collect();
    if vars.is_empty() || rng.random::<f64>() >= prior.split_prob(depth) {
        return depth;
    }
    let v = vars[rng.random_range(0..vars.len())];
    let (lo, hi) = ranges[v];
    let c = rng.random_range(lo..hi);
    let mut left = ranges.to_vec();
    left[v] = (lo, c);
    let mut right = ranges.to_vec();
    right[v] = (c + 1, hi);
    grow_depth(&left, depth + 1, prior, rng).max(grow_depth(&right, depth + 1, prior, rng))
}

fn histogram(depths: &[usize], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &d in depths {
        h[d.min(bins - 1)] += 1.0;
    }
    h
}

/// Two-sample chi-square homogeneity statistic.
fn chi_square(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0.0)
        .map(|(x, y)| ((nb / na).sqrt() * x - (na / nb).sqrt() * y).powi(2) / (x + y))
        .sum()
}

fn run(prior: TreePrior, cuts: Vec<Vec<f64>>, seed: u64) {
    let grid = CutpointGrid::from_cuts(cuts.clone()).unwrap();
    let mut rng = stream(seed, 0);
    let n = 30;
    let p = cuts.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let data = Dataset::new(rows, vec![0.0; n]).unwrap();
    let residuals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    // zero precision: every leaf marginal is constant, leaving only the prior
    let precisions = vec![0.0; n];
    let target = TreeTarget {
        data: &data,
        residuals: &residuals,
        precisions: &precisions,
    };
    let priors = TreeUpdatePriors {
        tree: prior,
        tau: 1.0,
        min_leaf: 0,
    };
    let mut tree = Tree::leaf(0.0);
    let mut leaf_of = vec![Tree::ROOT; n];
    let (samples, thin) = (20_000, 25);
    let mut chain = Vec::with_capacity(samples);
    for t in 0..(samples + 100) * thin {
        birth_death_step(&mut tree, &mut leaf_of, &target, &grid, &priors, &mut rng);
        if t % thin == 0 && t >= 100 * thin {
            chain.push(tree.max_depth());
        }
    }
    let ranges: Vec<(usize, usize)> = cuts.iter().map(|c| (0, c.len())).collect();
    let direct: Vec<usize> = (0..200_000).map(|_| grow_depth(&ranges, 0, &prior, &mut rng)).collect();
    let bins = 5;
    let (hc, hd) = (histogram(&chain, bins), histogram(&direct, bins));
    let stat = chi_square(&hc, &hd);
    let used = hc.iter().zip(&hd).filter(|(a, b)| **a + **b > 0.0).count();
    let critical = ChiSquared::new((used - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi2 {} >= {} (chain {:?}, direct {:?})", stat, critical, hc, hd);
}

#[test]
fn default_prior_depths() {
    let cuts: Vec<f64> = (1..=100).map(|k| -1.0 + 2.0 * k as f64 / 101.0).collect();
    run(TreePrior::new(0.95, 2.0).unwrap(), vec![cuts], 11);
}

#[test]
fn bushy_prior_with_binding_cutpoints() {
    // few cutpoints, so feasibility limits depth as well as the prior
    run(TreePrior::new(0.95, 0.5).unwrap(), vec![vec![-0.5, 0.0, 0.5], vec![0.0]], 12);
}

#[test]
fn split_probabilities_at_root_and_depth_one() {
    let prior = TreePrior::new(0.95, 2.0).unwrap();
    assert!((prior.split_prob(0) - 0.95).abs() < 1e-15);
    assert!((prior.split_prob(1) - 0.2375).abs() < 1e-15);
}
