//! Binary decision trees and sums of trees.
//!
//! A tree is kept in an arena of nodes addressed by stable ids so that the
//! sampler can cache per-observation leaf ids across birth and death moves.
//! Freed slots are recycled.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{CutpointGrid, Dataset};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Decision rule `x[var] < cut`; ties go right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub var: usize,
    pub cut_index: usize,
    pub cut: f64,
}

impl Rule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.var] < self.cut
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf { mu: f64 },
    Split { rule: Rule, left: NodeId, right: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Option<Node>>,
    free: Vec<NodeId>,
}

impl Default for Tree {
    fn default() -> Self {
        Self::leaf(0.0)
    }
}

impl Tree {
    /// A single-leaf tree.
    pub fn leaf(mu: f64) -> Self {
        Self {
            nodes: vec![Some(Node {
                parent: None,
                kind: NodeKind::Leaf { mu },
            })],
            free: Vec::new(),
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes[id].as_ref().expect("dangling node id")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id].as_mut().expect("dangling node id")
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.node(id).kind, NodeKind::Leaf { .. })
    }

    pub fn leaf_mu(&self, id: NodeId) -> f64 {
        match self.node(id).kind {
            NodeKind::Leaf { mu } => mu,
            NodeKind::Split { .. } => panic!("node {} is not a leaf", id),
        }
    }

    pub fn set_leaf_mu(&mut self, id: NodeId, value: f64) {
        match &mut self.node_mut(id).kind {
            NodeKind::Leaf { mu } => *mu = value,
            NodeKind::Split { .. } => panic!("node {} is not a leaf", id),
        }
    }

    /// Live node ids in arena order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|_| i))
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.node_ids().filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.node_ids().filter(|&i| self.is_leaf(i)).count()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    /// Interior nodes whose children are both leaves.
    pub fn nog_nodes(&self) -> Vec<NodeId> {
        self.node_ids()
            .filter(|&i| match self.node(i).kind {
                NodeKind::Split { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                NodeKind::Leaf { .. } => false,
            })
            .collect()
    }

    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            d += 1;
            cur = p;
        }
        d
    }

    pub fn max_depth(&self) -> usize {
        self.leaves().into_iter().map(|l| self.depth(l)).max().unwrap_or(0)
    }

    /// Half-open range of cut indices for predictor `var` still consistent
    /// with the rules on the path from the root to `id`.
    pub fn feasible_cut_range(&self, id: NodeId, var: usize, num_cuts: usize) -> (usize, usize) {
        let (mut lo, mut hi) = (0usize, num_cuts);
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            if let NodeKind::Split { rule, left, .. } = self.node(p).kind {
                if rule.var == var {
                    if cur == left {
                        hi = hi.min(rule.cut_index);
                    } else {
                        lo = lo.max(rule.cut_index + 1);
                    }
                }
            }
            cur = p;
        }
        (lo, hi.max(lo))
    }

    /// Predictors with at least one feasible cut at `id`.
    pub fn splittable_vars(&self, id: NodeId, grid: &CutpointGrid) -> Vec<usize> {
        (0..grid.num_predictors())
            .filter(|&j| {
                let (lo, hi) = self.feasible_cut_range(id, j, grid.cuts(j).len());
                hi > lo
            })
            .collect()
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        }
    }

    /// Turns leaf `id` into a split with two new leaves. Returns the child ids.
    pub fn grow(&mut self, id: NodeId, rule: Rule, mu_left: f64, mu_right: f64) -> (NodeId, NodeId) {
        assert!(self.is_leaf(id), "grow on interior node {}", id);
        let left = self.alloc(Node {
            parent: Some(id),
            kind: NodeKind::Leaf { mu: mu_left },
        });
        let right = self.alloc(Node {
            parent: Some(id),
            kind: NodeKind::Leaf { mu: mu_right },
        });
        self.node_mut(id).kind = NodeKind::Split { rule, left, right };
        (left, right)
    }

    /// Collapses a nog node back into a leaf with mean `mu`.
    pub fn prune(&mut self, id: NodeId, mu: f64) -> (NodeId, NodeId) {
        let (left, right) = match self.node(id).kind {
            NodeKind::Split { left, right, .. } => (left, right),
            NodeKind::Leaf { .. } => panic!("prune on leaf {}", id),
        };
        assert!(self.is_leaf(left) && self.is_leaf(right), "prune on non-nog node {}", id);
        self.nodes[left] = None;
        self.nodes[right] = None;
        self.free.push(right);
        self.free.push(left);
        self.node_mut(id).kind = NodeKind::Leaf { mu };
        (left, right)
    }

    /// Leaf reached by dropping `x` down the tree.
    #[inline]
    pub fn find_leaf(&self, x: &[f64]) -> NodeId {
        let mut cur = Self::ROOT;
        loop {
            match &self.node(cur).kind {
                NodeKind::Leaf { .. } => return cur,
                NodeKind::Split { rule, left, right } => {
                    cur = if rule.goes_left(x) { *left } else { *right };
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.leaf_mu(self.find_leaf(x))
    }

    /// Leaf id of every observation in `data`.
    pub fn leaf_assignment(&self, data: &Dataset) -> Vec<NodeId> {
        data.rows().map(|r| self.find_leaf(r)).collect()
    }

    fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.num_nodes());
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let NodeKind::Split { left, right, .. } = self.node(id).kind {
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    /// One line per node in preorder: `id parent side leaf mu` or
    /// `id parent side split var cut`. Ids are renumbered in preorder; the
    /// root has parent `-1` and side `root`.
    pub fn to_text(&self) -> String {
        let order = self.preorder();
        let mut renumber = vec![usize::MAX; self.nodes.len()];
        for (k, &id) in order.iter().enumerate() {
            renumber[id] = k;
        }
        let mut out = String::new();
        for (k, &id) in order.iter().enumerate() {
            let node = self.node(id);
            let (parent, side) = match node.parent {
                None => ("-1".to_string(), "root"),
                Some(p) => {
                    let side = match self.node(p).kind {
                        NodeKind::Split { left, .. } if left == id => "L",
                        _ => "R",
                    };
                    (renumber[p].to_string(), side)
                }
            };
            match node.kind {
                NodeKind::Leaf { mu } => writeln!(out, "{} {} {} leaf {:?}", k, parent, side, mu),
                NodeKind::Split { rule, .. } => {
                    writeln!(out, "{} {} {} split {} {:?}", k, parent, side, rule.var, rule.cut)
                }
            }
            .expect("writing to String");
        }
        out
    }

    /// Parses [`Tree::to_text`] output. Cut values are resolved to indices on
    /// `grid` and must match a grid point exactly.
    pub fn from_text(text: &str, grid: &CutpointGrid) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::InvalidArgument(format!("tree line {}: {}", line + 1, msg));
        let mut specs: Vec<(Option<usize>, &str, NodeKind)> = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 5 {
                return Err(bad(ln, "too few fields"));
            }
            let id: usize = f[0].parse().map_err(|_| bad(ln, "bad id"))?;
            if id != specs.len() {
                return Err(bad(ln, "ids must be consecutive from 0"));
            }
            let parent = match f[1] {
                "-1" => None,
                s => Some(s.parse::<usize>().map_err(|_| bad(ln, "bad parent"))?),
            };
            let kind = match f[3] {
                "leaf" => NodeKind::Leaf {
                    mu: f[4].parse().map_err(|_| bad(ln, "bad leaf value"))?,
                },
                "split" if f.len() == 6 => {
                    let var: usize = f[4].parse().map_err(|_| bad(ln, "bad predictor"))?;
                    let cut: f64 = f[5].parse().map_err(|_| bad(ln, "bad cut"))?;
                    if var >= grid.num_predictors() {
                        return Err(bad(ln, "predictor out of range"));
                    }
                    let cut_index = grid
                        .cuts(var)
                        .iter()
                        .position(|&c| c == cut)
                        .ok_or_else(|| bad(ln, "cut value not on grid"))?;
                    NodeKind::Split {
                        rule: Rule { var, cut_index, cut },
                        left: usize::MAX,
                        right: usize::MAX,
                    }
                }
                _ => return Err(bad(ln, "unknown node kind")),
            };
            specs.push((parent, f[2], kind));
        }
        if specs.is_empty() || specs[0].0.is_some() {
            return Err(Error::InvalidArgument("tree text must start with the root".into()));
        }
        let mut nodes: Vec<Option<Node>> = specs
            .iter()
            .map(|(parent, _, kind)| Some(Node { parent: *parent, kind: kind.clone() }))
            .collect();
        for (id, (parent, side, _)) in specs.iter().enumerate().skip(1) {
            let p = parent.ok_or_else(|| bad(id, "only the root may lack a parent"))?;
            match nodes.get_mut(p).and_then(|n| n.as_mut()).map(|n| &mut n.kind) {
                Some(NodeKind::Split { left, right, .. }) => match *side {
                    "L" if *left == usize::MAX => *left = id,
                    "R" if *right == usize::MAX => *right = id,
                    _ => return Err(bad(id, "bad or duplicate side")),
                },
                _ => return Err(bad(id, "parent is not a split")),
            }
        }
        for (id, n) in nodes.iter().enumerate() {
            if let Some(Node {
                kind: NodeKind::Split { left, right, .. },
                ..
            }) = n
            {
                if *left == usize::MAX || *right == usize::MAX {
                    return Err(bad(id, "split node missing a child"));
                }
            }
        }
        Ok(Self { nodes, free: Vec::new() })
    }
}

/// A fixed-size sum of trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    trees: Vec<Tree>,
}

impl Ensemble {
    /// `m` single-leaf trees with mean zero.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one tree".into()));
        }
        Ok(Self {
            trees: vec![Tree::leaf(0.0); m],
        })
    }

    pub fn from_trees(trees: Vec<Tree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs at least one tree".into()));
        }
        Ok(Self { trees })
    }

    pub fn m(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree_mut(&mut self, j: usize) -> &mut Tree {
        &mut self.trees[j]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.eval(x)).sum()
    }

    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|r| self.eval(r)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (j, t) in self.trees.iter().enumerate() {
            writeln!(out, "# tree {}", j).expect("writing to String");
            out.push_str(&t.to_text());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(var: usize, cut_index: usize, cut: f64) -> Rule {
        Rule { var, cut_index, cut }
    }

    /// root: x2 < 0 -> -1; else x5 < 2 -> 0 else 5 (1-based predictors).
    fn two_split() -> Tree {
        let mut t = Tree::leaf(0.0);
        let (_, r) = t.grow(Tree::ROOT, rule(1, 0, 0.0), -1.0, 0.0);
        t.grow(r, rule(4, 0, 2.0), 0.0, 5.0);
        t
    }

    #[test]
    fn single_leaf_evaluates_to_mean() {
        let t = Tree::leaf(3.7);
        assert_eq!(t.eval(&[1.0, -4.0]), 3.7);
        assert_eq!(t.num_leaves(), 1);
    }

    #[test]
    fn hand_traced_path() {
        let t = two_split();
        assert_eq!(t.eval(&[9.0, 1.0, 9.0, 9.0, 3.0]), 5.0);
        assert_eq!(t.eval(&[9.0, -1.0, 9.0, 9.0, 3.0]), -1.0);
        assert_eq!(t.eval(&[9.0, 1.0, 9.0, 9.0, 1.0]), 0.0);
        assert_eq!(t.num_leaves(), 3);
    }

    #[test]
    fn ties_route_right() {
        let mut t = Tree::leaf(0.0);
        t.grow(Tree::ROOT, rule(0, 0, 0.5), 1.0, 2.0);
        assert_eq!(t.eval(&[0.5]), 2.0);
        assert_eq!(t.eval(&[0.4999]), 1.0);
    }

    #[test]
    fn feasible_ranges_shrink_along_path() {
        let mut t = Tree::leaf(0.0);
        let (l, r) = t.grow(Tree::ROOT, rule(0, 4, 0.5), 0.0, 0.0);
        assert_eq!(t.feasible_cut_range(l, 0, 10), (0, 4));
        assert_eq!(t.feasible_cut_range(r, 0, 10), (5, 10));
        assert_eq!(t.feasible_cut_range(r, 1, 7), (0, 7));
        let (rl, _) = t.grow(r, rule(0, 5, 0.6), 0.0, 0.0);
        assert_eq!(t.feasible_cut_range(rl, 0, 10), (5, 5));
    }

    #[test]
    fn grow_prune_recycles_slots() {
        let mut t = two_split();
        let nogs = t.nog_nodes();
        assert_eq!(nogs.len(), 1);
        t.prune(nogs[0], 0.25);
        assert_eq!(t.num_leaves(), 2);
        assert_eq!(t.num_nodes(), 3);
        let leaf = t.leaves()[1];
        t.grow(leaf, rule(0, 1, 1.0), 0.0, 0.0);
        assert_eq!(t.num_nodes(), 5);
        assert_eq!(t.nodes.len(), 5);
    }

    #[test]
    fn text_round_trip() {
        let grid = CutpointGrid::from_cuts(vec![vec![], vec![0.0], vec![], vec![], vec![2.0]]).unwrap();
        let t = two_split();
        let text = t.to_text();
        assert_eq!(
            text,
            "0 -1 root split 1 0.0\n1 0 L leaf -1.0\n2 0 R split 4 2.0\n3 2 L leaf 0.0\n4 2 R leaf 5.0\n"
        );
        let back = Tree::from_text(&text, &grid).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.eval(&[0.0, 1.0, 0.0, 0.0, 3.0]), 5.0);
        assert!(Tree::from_text("0 -1 root split 1 0.3\n", &grid).is_err());
        assert!(Tree::from_text("0 -1 root split 1 0.0\n1 0 L leaf 1\n", &grid).is_err());
    }

    #[test]
    fn ensemble_is_additive() {
        let ens = Ensemble::from_trees(vec![Tree::leaf(1.5), Tree::leaf(1.5)]).unwrap();
        assert_eq!(ens.eval(&[0.0]), 3.0);
        let one = Ensemble::from_trees(vec![two_split()]).unwrap();
        let x = [0.0, 1.0, 0.0, 0.0, 3.0];
        assert_eq!(one.eval(&x), two_split().eval(&x));
        assert!(Ensemble::new(0).is_err());
    }

    #[test]
    fn leaf_assignment_matches_eval() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![0.0, (i as f64) / 10.0 - 1.5, 0.0, 0.0, (i % 5) as f64])
            .collect();
        let data = Dataset::new(rows, vec![0.0; 30]).unwrap();
        let t = two_split();
        let a = t.leaf_assignment(&data);
        for (i, &leaf) in a.iter().enumerate() {
            assert_eq!(t.leaf_mu(leaf), t.eval(data.row(i)));
        }
        let leaves = t.leaves();
        let total: usize = leaves.iter().map(|l| a.iter().filter(|&&x| x == *l).count()).sum();
        assert_eq!(total, data.n());
        assert!(Tree::leaf(1.0).leaf_assignment(&data).iter().all(|&x| x == 0));
    }
}
