//! Backfitting sweep of the sum-of-trees model under known per-observation
//! error parameters.
//!
//! Each tree is updated against the partial residuals
//! `r_i = y_i - mu_i - sum_{k != j} g(x_i; T_k, M_k)` with precision
//! `1 / sigma_i^2`, so plain BART is the special case of equal `sigma_i` and
//! zero `mu_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CutpointGrid, Dataset, PerObsErrorParams};
use crate::dist::{scaled_inv_chi_squared, std_normal};
use crate::error::{Error, Result};
use crate::prior::TreePrior;
use crate::tree::{Ensemble, NodeId, NodeKind, Rule, Tree};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Full recomputation of the cached fit happens every this many sweeps.
pub const CACHE_REFRESH_EVERY: usize = 1000;

/// Precision-weighted sufficient statistics of the residuals in one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeafSuffStats {
    pub count: usize,
    /// `sum 1/sigma_i^2`
    pub prec_sum: f64,
    /// `sum r_i/sigma_i^2`
    pub weighted_resid_sum: f64,
    /// `sum r_i^2/sigma_i^2`
    pub weighted_sq_sum: f64,
    /// `sum log(1/sigma_i^2)`
    pub log_prec_sum: f64,
}

impl LeafSuffStats {
    #[inline]
    pub fn push(&mut self, r: f64, prec: f64) {
        self.count += 1;
        self.prec_sum += prec;
        self.weighted_resid_sum += r * prec;
        self.weighted_sq_sum += r * r * prec;
        self.log_prec_sum += prec.ln();
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            count: self.count + other.count,
            prec_sum: self.prec_sum + other.prec_sum,
            weighted_resid_sum: self.weighted_resid_sum + other.weighted_resid_sum,
            weighted_sq_sum: self.weighted_sq_sum + other.weighted_sq_sum,
            log_prec_sum: self.log_prec_sum + other.log_prec_sum,
        }
    }

    pub fn from_residuals(r: &[f64], sigma: &[f64]) -> Self {
        let mut s = Self::default();
        for (&ri, &si) in r.iter().zip(sigma) {
            s.push(ri, 1.0 / (si * si));
        }
        s
    }

    /// Posterior variance and mean of the leaf value.
    #[inline]
    pub fn posterior(&self, tau: f64) -> (f64, f64) {
        let v = 1.0 / (1.0 / (tau * tau) + self.prec_sum);
        (v, v * self.weighted_resid_sum)
    }
}

/// `log ∫ prod_i N(r_i | mu, sigma_i^2) N(mu | 0, tau^2) dmu`.
pub fn leaf_log_marginal(stats: &LeafSuffStats, tau: f64) -> f64 {
    -0.5 * stats.count as f64 * LN_2PI + 0.5 * stats.log_prec_sum - 0.5 * stats.weighted_sq_sum
        + leaf_log_marginal_reduced(stats, tau)
}

/// The part of [`leaf_log_marginal`] that changes when observations are
/// regrouped into different leaves: `½ log(v/tau^2) + mhat^2/(2v)`.
#[inline]
pub fn leaf_log_marginal_reduced(stats: &LeafSuffStats, tau: f64) -> f64 {
    let (v, mhat) = stats.posterior(tau);
    0.5 * (v / (tau * tau)).ln() + 0.5 * mhat * mhat / v
}

/// Priors used by one tree update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeUpdatePriors {
    pub tree: TreePrior,
    pub tau: f64,
    /// Births creating a leaf with fewer observations are rejected.
    pub min_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    /// Neither a birth nor a death is possible.
    Stay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MoveCounts {
    pub births_proposed: u64,
    pub births_accepted: u64,
    pub deaths_proposed: u64,
    pub deaths_accepted: u64,
}

fn is_splittable(tree: &Tree, id: NodeId, grid: &CutpointGrid) -> bool {
    (0..grid.num_predictors()).any(|j| {
        let (lo, hi) = tree.feasible_cut_range(id, j, grid.cuts(j).len());
        hi > lo
    })
}

/// Whether a child created by splitting `leaf` with `rule` could split again.
fn child_splittable(tree: &Tree, leaf: NodeId, rule: &Rule, left: bool, grid: &CutpointGrid) -> bool {
    (0..grid.num_predictors()).any(|j| {
        let (mut lo, mut hi) = tree.feasible_cut_range(leaf, j, grid.cuts(j).len());
        if j == rule.var {
            if left {
                hi = rule.cut_index;
            } else {
                lo = rule.cut_index + 1;
            }
        }
        hi > lo
    })
}

/// Log prior factor of a terminal node: `log(1 - p_split)` where nodes that
/// cannot split have `p_split = 0`.
#[inline]
fn ln_leaf_factor(prior: &TreePrior, depth: usize, splittable: bool) -> f64 {
    if splittable {
        (1.0 - prior.split_prob(depth)).ln()
    } else {
        0.0
    }
}

fn is_nog(tree: &Tree, id: NodeId) -> bool {
    match tree.node(id).kind {
        NodeKind::Split { left, right, .. } => tree.is_leaf(left) && tree.is_leaf(right),
        NodeKind::Leaf { .. } => false,
    }
}

fn sibling(tree: &Tree, id: NodeId) -> Option<NodeId> {
    let p = tree.node(id).parent?;
    match tree.node(p).kind {
        NodeKind::Split { left, right, .. } => Some(if left == id { right } else { left }),
        NodeKind::Leaf { .. } => None,
    }
}

/// Structural summary of a tree for proposal probabilities.
struct MoveSet {
    /// Leaves with at least one feasible split.
    birth_leaves: Vec<NodeId>,
    nogs: Vec<NodeId>,
}

impl MoveSet {
    fn of(tree: &Tree, grid: &CutpointGrid) -> Self {
        Self {
            birth_leaves: tree.leaves().into_iter().filter(|&l| is_splittable(tree, l, grid)).collect(),
            nogs: tree.nog_nodes(),
        }
    }

    fn p_birth(&self) -> f64 {
        match (self.birth_leaves.is_empty(), self.nogs.is_empty()) {
            (false, false) => 0.5,
            (false, true) => 1.0,
            _ => 0.0,
        }
    }

    fn p_death(&self) -> f64 {
        match (self.birth_leaves.is_empty(), self.nogs.is_empty()) {
            (false, false) => 0.5,
            (true, false) => 1.0,
            _ => 0.0,
        }
    }
}

/// Log Metropolis–Hastings ratio for growing `leaf` with `rule`, given the
/// statistics of the two would-be children.
///
/// The rule part of the tree prior (uniform predictor, then uniform cut)
/// equals the proposal's choice probabilities and cancels.
pub fn birth_log_ratio(
    tree: &Tree,
    leaf: NodeId,
    rule: &Rule,
    left: &LeafSuffStats,
    right: &LeafSuffStats,
    grid: &CutpointGrid,
    priors: &TreeUpdatePriors,
) -> f64 {
    let moves = MoveSet::of(tree, grid);
    debug_assert!(moves.birth_leaves.contains(&leaf));
    let depth = tree.depth(leaf);
    let left_split = child_splittable(tree, leaf, rule, true, grid);
    let right_split = child_splittable(tree, leaf, rule, false, grid);

    // proposed tree: the leaf's parent stops being a nog, the leaf becomes one
    let parent_was_nog = sibling(tree, leaf).is_some_and(|s| tree.is_leaf(s));
    let nogs_after = moves.nogs.len() - usize::from(parent_was_nog) + 1;
    let birth_after = moves.birth_leaves.len() > 1 || left_split || right_split;
    let p_death_after = if birth_after { 0.5 } else { 1.0 };

    let ln_proposal = (p_death_after / nogs_after as f64).ln()
        - (moves.p_birth() / moves.birth_leaves.len() as f64).ln();
    let ln_prior = priors.tree.split_prob(depth).ln()
        + ln_leaf_factor(&priors.tree, depth + 1, left_split)
        + ln_leaf_factor(&priors.tree, depth + 1, right_split)
        - ln_leaf_factor(&priors.tree, depth, true);
    let parent = left.merge(right);
    let ln_lik = leaf_log_marginal_reduced(left, priors.tau) + leaf_log_marginal_reduced(right, priors.tau)
        - leaf_log_marginal_reduced(&parent, priors.tau);
    ln_proposal + ln_prior + ln_lik
}

/// Log Metropolis–Hastings ratio for collapsing nog node `node`.
pub fn death_log_ratio(
    tree: &Tree,
    node: NodeId,
    left: &LeafSuffStats,
    right: &LeafSuffStats,
    grid: &CutpointGrid,
    priors: &TreeUpdatePriors,
) -> f64 {
    let moves = MoveSet::of(tree, grid);
    debug_assert!(is_nog(tree, node));
    let (l, r) = match tree.node(node).kind {
        NodeKind::Split { left, right, .. } => (left, right),
        NodeKind::Leaf { .. } => unreachable!("death on a leaf"),
    };
    let depth = tree.depth(node);
    let left_split = is_splittable(tree, l, grid);
    let right_split = is_splittable(tree, r, grid);

    // pruned tree: the node becomes a (splittable) leaf; its parent may become a nog
    let birth_leaves_after = moves.birth_leaves.len() - usize::from(left_split) - usize::from(right_split) + 1;
    let parent_becomes_nog = sibling(tree, node).is_some_and(|s| tree.is_leaf(s));
    let nogs_after = moves.nogs.len() - 1 + usize::from(parent_becomes_nog);
    let p_birth_after = if nogs_after > 0 { 0.5 } else { 1.0 };

    let ln_proposal = (p_birth_after / birth_leaves_after as f64).ln()
        - (moves.p_death() / moves.nogs.len() as f64).ln();
    let ln_prior = ln_leaf_factor(&priors.tree, depth, true)
        - priors.tree.split_prob(depth).ln()
        - ln_leaf_factor(&priors.tree, depth + 1, left_split)
        - ln_leaf_factor(&priors.tree, depth + 1, right_split);
    let merged = left.merge(right);
    let ln_lik = leaf_log_marginal_reduced(&merged, priors.tau)
        - leaf_log_marginal_reduced(left, priors.tau)
        - leaf_log_marginal_reduced(right, priors.tau);
    ln_proposal + ln_prior + ln_lik
}

/// Residuals and precisions one tree is fitted against.
pub struct TreeTarget<'a> {
    pub data: &'a Dataset,
    pub residuals: &'a [f64],
    pub precisions: &'a [f64],
}

fn leaf_stats(tree_arena_len: usize, leaf_of: &[NodeId], target: &TreeTarget) -> Vec<LeafSuffStats> {
    let mut stats = vec![LeafSuffStats::default(); tree_arena_len];
    for (i, &leaf) in leaf_of.iter().enumerate() {
        stats[leaf].push(target.residuals[i], target.precisions[i]);
    }
    stats
}

fn arena_len(tree: &Tree) -> usize {
    tree.node_ids().max().map_or(1, |m| m + 1)
}

/// One Metropolis–Hastings birth-or-death update of `tree`, with the leaf
/// means integrated out. `leaf_of` caches each observation's leaf and is
/// kept consistent.
pub fn birth_death_step<R: Rng + ?Sized>(
    tree: &mut Tree,
    leaf_of: &mut [NodeId],
    target: &TreeTarget,
    grid: &CutpointGrid,
    priors: &TreeUpdatePriors,
    rng: &mut R,
) -> MoveOutcome {
    let moves = MoveSet::of(tree, grid);
    let p_birth = moves.p_birth();
    if p_birth == 0.0 && moves.p_death() == 0.0 {
        return MoveOutcome {
            kind: MoveKind::Stay,
            accepted: false,
        };
    }
    if rng.random::<f64>() < p_birth {
        let leaf = moves.birth_leaves[rng.random_range(0..moves.birth_leaves.len())];
        let vars = tree.splittable_vars(leaf, grid);
        let var = vars[rng.random_range(0..vars.len())];
        let (lo, hi) = tree.feasible_cut_range(leaf, var, grid.cuts(var).len());
        let cut_index = rng.random_range(lo..hi);
        let rule = Rule {
            var,
            cut_index,
            cut: grid.value(var, cut_index),
        };
        let (mut left, mut right) = (LeafSuffStats::default(), LeafSuffStats::default());
        for (i, _) in leaf_of.iter().enumerate().filter(|(_, &l)| l == leaf) {
            let s = if rule.goes_left(target.data.row(i)) { &mut left } else { &mut right };
            s.push(target.residuals[i], target.precisions[i]);
        }
        let u: f64 = rng.random();
        if left.count < priors.min_leaf || right.count < priors.min_leaf {
            return MoveOutcome {
                kind: MoveKind::Birth,
                accepted: false,
            };
        }
        let ratio = birth_log_ratio(tree, leaf, &rule, &left, &right, grid, priors);
        let accepted = u.ln() < ratio;
        if accepted {
            let mu = tree.leaf_mu(leaf);
            let (l, r) = tree.grow(leaf, rule, mu, mu);
            for (i, slot) in leaf_of.iter_mut().enumerate() {
                if *slot == leaf {
                    *slot = if rule.goes_left(target.data.row(i)) { l } else { r };
                }
            }
        }
        MoveOutcome {
            kind: MoveKind::Birth,
            accepted,
        }
    } else {
        let node = moves.nogs[rng.random_range(0..moves.nogs.len())];
        let (l, r) = match tree.node(node).kind {
            NodeKind::Split { left, right, .. } => (left, right),
            NodeKind::Leaf { .. } => unreachable!("nog list holds a leaf"),
        };
        let (mut left, mut right) = (LeafSuffStats::default(), LeafSuffStats::default());
        for (i, &slot) in leaf_of.iter().enumerate() {
            if slot == l {
                left.push(target.residuals[i], target.precisions[i]);
            } else if slot == r {
                right.push(target.residuals[i], target.precisions[i]);
            }
        }
        let u: f64 = rng.random();
        let ratio = death_log_ratio(tree, node, &left, &right, grid, priors);
        let accepted = u.ln() < ratio;
        if accepted {
            tree.prune(node, 0.0);
            for slot in leaf_of.iter_mut() {
                if *slot == l || *slot == r {
                    *slot = node;
                }
            }
        }
        MoveOutcome {
            kind: MoveKind::Death,
            accepted,
        }
    }
}

/// Redraws every leaf mean from its conjugate posterior `N(mhat, v)`.
pub fn draw_leaf_means<R: Rng + ?Sized>(
    tree: &mut Tree,
    leaf_of: &[NodeId],
    target: &TreeTarget,
    tau: f64,
    rng: &mut R,
) {
    let stats = leaf_stats(arena_len(tree), leaf_of, target);
    for leaf in tree.leaves() {
        let (v, mhat) = stats[leaf].posterior(tau);
        tree.set_leaf_mu(leaf, mhat + v.sqrt() * std_normal(rng));
    }
}

/// Draws `sigma` for homoscedastic BART: `sigma^2 ~ (nu lambda + sum r^2) / chi^2_{nu+n}`.
pub fn draw_sigma_bart<R: Rng + ?Sized>(residuals: &[f64], nu: f64, lambda: f64, rng: &mut R) -> f64 {
    let n = residuals.len() as f64;
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    scaled_inv_chi_squared(rng, nu + n, (nu * lambda + ss) / (nu + n)).sqrt()
}

/// Sum-of-trees state with cached leaf assignments and fitted values.
#[derive(Debug, Clone)]
pub struct Backfitter {
    ensemble: Ensemble,
    leaf_of: Vec<Vec<NodeId>>,
    tree_fit: Vec<f64>,
    fit: Vec<f64>,
    residuals: Vec<f64>,
    precisions: Vec<f64>,
    sweeps: usize,
    pub counts: MoveCounts,
    /// When set, every move outcome is appended here.
    pub move_log: Option<Vec<MoveOutcome>>,
}

impl Backfitter {
    /// `m` single-leaf trees at zero.
    pub fn new(data: &Dataset, m: usize) -> Result<Self> {
        Self::from_ensemble(data, Ensemble::new(m)?)
    }

    pub fn from_ensemble(data: &Dataset, ensemble: Ensemble) -> Result<Self> {
        let leaf_of: Vec<Vec<NodeId>> = ensemble.trees().iter().map(|t| t.leaf_assignment(data)).collect();
        let fit = ensemble.predict(data);
        Ok(Self {
            ensemble,
            leaf_of,
            tree_fit: vec![0.0; data.n()],
            fit,
            residuals: vec![0.0; data.n()],
            precisions: vec![0.0; data.n()],
            sweeps: 0,
            counts: MoveCounts::default(),
            move_log: None,
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    /// Cached `sum_j g(x_i; T_j, M_j)`.
    pub fn fit(&self) -> &[f64] {
        &self.fit
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Updates every tree in turn against the residuals excluding it.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        data: &Dataset,
        grid: &CutpointGrid,
        theta: &PerObsErrorParams,
        priors: &TreeUpdatePriors,
        rng: &mut R,
    ) -> Result<()> {
        let n = data.n();
        if theta.len() != n {
            return Err(Error::InvalidArgument("error parameters do not match the data".into()));
        }
        for (p, s) in self.precisions.iter_mut().zip(&theta.sigma) {
            *p = 1.0 / (s * s);
        }
        let y = data.y();
        for j in 0..self.ensemble.m() {
            let tree = self.ensemble.tree_mut(j);
            let leaf_of = &mut self.leaf_of[j];
            for i in 0..n {
                let own = tree.leaf_mu(leaf_of[i]);
                self.fit[i] -= own;
                self.residuals[i] = y[i] - theta.mu[i] - self.fit[i];
            }
            let target = TreeTarget {
                data,
                residuals: &self.residuals,
                precisions: &self.precisions,
            };
            let outcome = birth_death_step(tree, leaf_of, &target, grid, priors, rng);
            match (outcome.kind, outcome.accepted) {
                (MoveKind::Birth, a) => {
                    self.counts.births_proposed += 1;
                    self.counts.births_accepted += u64::from(a);
                }
                (MoveKind::Death, a) => {
                    self.counts.deaths_proposed += 1;
                    self.counts.deaths_accepted += u64::from(a);
                }
                (MoveKind::Stay, _) => {}
            }
            if let Some(log) = self.move_log.as_mut() {
                log.push(outcome);
            }
            draw_leaf_means(tree, leaf_of, &target, priors.tau, rng);
            for ((tf, f), &leaf) in self.tree_fit.iter_mut().zip(self.fit.iter_mut()).zip(leaf_of.iter()) {
                *tf = tree.leaf_mu(leaf);
                *f += *tf;
            }
        }
        self.sweeps += 1;
        if self.sweeps.is_multiple_of(CACHE_REFRESH_EVERY) {
            self.refresh_cache(data);
        }
        Ok(())
    }

    /// Recomputes the fitted values from the trees.
    pub fn refresh_cache(&mut self, data: &Dataset) {
        for (i, f) in self.fit.iter_mut().enumerate() {
            *f = self
                .ensemble
                .trees()
                .iter()
                .zip(&self.leaf_of)
                .map(|(t, l)| t.leaf_mu(l[i]))
                .sum();
        }
        debug_assert!(self.cache_error(data) == 0.0);
    }

    /// Largest absolute gap between the cache and a full evaluation.
    pub fn cache_error(&self, data: &Dataset) -> f64 {
        let mut worst = 0.0f64;
        for (j, tree) in self.ensemble.trees().iter().enumerate() {
            if tree.leaf_assignment(data) != self.leaf_of[j] {
                return f64::INFINITY;
            }
        }
        for (i, row) in data.rows().enumerate() {
            worst = worst.max((self.fit[i] - self.ensemble.eval(row)).abs());
        }
        worst
    }

    pub fn check_cache(&self, data: &Dataset, tol: f64) -> Result<()> {
        let err = self.cache_error(data);
        if err > tol {
            return Err(Error::Invariant(format!("cached fit drifted by {} (tolerance {})", err, tol)));
        }
        Ok(())
    }
}
