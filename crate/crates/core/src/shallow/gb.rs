//! Multinomial-deviance gradient boosting with depth-bounded regression trees.

use crate::error::{Error, Result};
use crate::models::Container;
use crate::nn::Tensor;
use crate::shallow::{check_rows, class_count, softmax};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GbParams {
    pub shrinkage: f64,
    pub max_depth: usize,
    pub stages: usize,
}

impl Default for GbParams {
    fn default() -> Self {
        GbParams { shrinkage: 0.08, max_depth: 3, stages: 100 }
    }
}

impl GbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::invalid(format!("shrinkage must lie in (0, 1], got {}", self.shrinkage)));
        }
        if self.max_depth < 1 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if self.stages < 1 {
            return Err(Error::invalid("stages must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// Nodes in preorder; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Best variance-reduction split of `idx` on residuals `r`: the gain is
/// `S_L²/n_L + S_R²/n_R − S²/n`. Features are scanned in index order and
/// thresholds ascending; only a strictly larger gain replaces the incumbent.
fn best_split(
    rows: &[Vec<f64>],
    sorted: &[Vec<usize>],
    member: &[bool],
    r: &[f64],
    idx: &[usize],
) -> Option<(usize, f64)> {
    let n = idx.len() as f64;
    let total: f64 = idx.iter().map(|&i| r[i]).sum();
    let base = total * total / n;
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, order) in sorted.iter().enumerate() {
        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        let mut prev: Option<usize> = None;
        for &i in order.iter().filter(|&&i| member[i]) {
            if let Some(p) = prev {
                let (a, b) = (rows[p][f], rows[i][f]);
                if a < b {
                    let ln = left_n as f64;
                    let rn = n - ln;
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / ln + right_sum * right_sum / rn - base;
                    if best.is_none_or(|(_, _, g)| gain > g) {
                        let mid = a + (b - a) / 2.0;
                        best = Some((f, if mid < b { mid } else { a }, gain));
                    }
                }
            }
            left_sum += r[i];
            left_n += 1;
            prev = Some(i);
        }
    }
    best.map(|(f, t, _)| (f, t))
}

const PURE: f64 = 1e-12;

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    member: Vec<bool>,
    residual: &'a [f64],
    leaf_value: &'a dyn Fn(&[usize]) -> f64,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let impurity: f64 = idx.iter().map(|&i| self.residual[i] * self.residual[i]).sum::<f64>() - sum * sum / n;
        let split = if depth < self.max_depth && idx.len() >= 2 && impurity > PURE {
            idx.iter().for_each(|&i| self.member[i] = true);
            let s = best_split(self.rows, self.sorted, &self.member, self.residual, &idx);
            idx.iter().for_each(|&i| self.member[i] = false);
            s
        } else {
            None
        };
        match split {
            None => self.nodes[at] = Node::Leaf((self.leaf_value)(&idx)),
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[at] = Node::Split { feature, threshold, left, right };
            }
        }
        at
    }
}

/// Fits a regression tree to `residual` with leaves from `leaf_value`.
pub fn fit_tree(rows: &[Vec<f64>], residual: &[f64], max_depth: usize, leaf_value: &dyn Fn(&[usize]) -> f64) -> Tree {
    let sorted = presort(rows);
    fit_tree_presorted(rows, &sorted, residual, max_depth, leaf_value)
}

fn presort(rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dim = rows.first().map_or(0, Vec::len);
    (0..dim)
        .map(|f| {
            let mut o: Vec<usize> = (0..rows.len()).collect();
            o.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
            o
        })
        .collect()
}

fn fit_tree_presorted(
    rows: &[Vec<f64>],
    sorted: &[Vec<usize>],
    residual: &[f64],
    max_depth: usize,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> Tree {
    let mut b = TreeBuilder {
        rows,
        sorted,
        member: vec![false; rows.len()],
        residual,
        leaf_value,
        max_depth,
        nodes: Vec::new(),
    };
    b.grow((0..rows.len()).collect(), 0);
    Tree { nodes: b.nodes }
}

/// `(K−1)/K · Σr / Σp(1−p)` over the leaf's rows; 0 when the denominator vanishes.
pub fn newton_leaf(residual: &[f64], prob: &[f64], idx: &[usize], k: usize) -> f64 {
    let num: f64 = idx.iter().map(|&i| residual[i]).sum();
    let den: f64 = idx.iter().map(|&i| prob[i] * (1.0 - prob[i])).sum();
    if den.abs() < 1e-150 {
        0.0
    } else {
        (k as f64 - 1.0) / k as f64 * num / den
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbModel {
    pub params: GbParams,
    pub num_classes: usize,
    pub dim: usize,
    /// Log class priors.
    pub init: Vec<f64>,
    /// `stages[s][k]`: the tree for class `k` at stage `s`.
    pub stages: Vec<Vec<Tree>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbTrainRun {
    pub model: GbModel,
    /// Mean training deviance after `s` stages, `s = 0..=stages`.
    pub deviance: Vec<f64>,
}

pub fn gb_train(rows: &[Vec<f64>], labels: &[usize], params: &GbParams) -> Result<GbTrainRun> {
    params.validate()?;
    let dim = check_rows(rows, labels)?;
    let k = class_count(labels)?;
    let n = rows.len();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {c} has no training rows")));
    }
    let init: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
    let mut scores: Vec<Vec<f64>> = vec![init.clone(); n];
    let sorted = presort(rows);
    let mut deviance = vec![mean_deviance(&scores, labels)];
    let mut stages = Vec::with_capacity(params.stages);
    for _ in 0..params.stages {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut trees = Vec::with_capacity(k);
        for class in 0..k {
            let p: Vec<f64> = probs.iter().map(|p| p[class]).collect();
            let r: Vec<f64> = labels.iter().zip(&p).map(|(&l, p)| if l == class { 1.0 - p } else { -p }).collect();
            let leaf = |idx: &[usize]| newton_leaf(&r, &p, idx, k);
            trees.push(fit_tree_presorted(rows, &sorted, &r, params.max_depth, &leaf));
        }
        for (x, s) in rows.iter().zip(scores.iter_mut()) {
            for (class, t) in trees.iter().enumerate() {
                s[class] += params.shrinkage * t.predict(x);
            }
        }
        deviance.push(mean_deviance(&scores, labels));
        stages.push(trees);
    }
    Ok(GbTrainRun { model: GbModel { params: *params, num_classes: k, dim, init, stages }, deviance })
}

/// `−mean log p(yᵢ)`.
pub fn mean_deviance(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - s[l]
        })
        .sum();
    total / scores.len() as f64
}

impl GbModel {
    /// Raw class scores using the first `stages` stages.
    pub fn staged_scores(&self, x: &[f64], stages: usize) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::shape("gb", format!("row has {} features, model expects {}", x.len(), self.dim)));
        }
        if stages > self.stages.len() {
            return Err(Error::invalid(format!("model has {} stages, asked for {stages}", self.stages.len())));
        }
        let mut s = self.init.clone();
        for trees in &self.stages[..stages] {
            for (v, t) in s.iter_mut().zip(trees) {
                *v += self.params.shrinkage * t.predict(x);
            }
        }
        Ok(s)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.staged_scores(x, self.stages.len())
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(x)?))
    }

    pub(crate) fn write(&self, c: &mut Container) -> Result<()> {
        let p = &self.params;
        c.config.push(("gb.shrinkage".into(), p.shrinkage.to_string()));
        c.config.push(("gb.max_depth".into(), p.max_depth.to_string()));
        c.config.push(("gb.stages".into(), self.stages.len().to_string()));
        c.config.push(("gb.classes".into(), self.num_classes.to_string()));
        c.config.push(("gb.dim".into(), self.dim.to_string()));
        c.tensors.push(("gb.init".into(), Tensor::new(&[self.num_classes], self.init.clone())?));
        // One row per node: kind (0 leaf, 1 split), feature, threshold or value, left, right.
        let mut flat = Vec::new();
        let mut offsets = Vec::new();
        for t in self.stages.iter().flatten() {
            offsets.push((flat.len() / 5) as f64);
            for node in &t.nodes {
                match *node {
                    Node::Leaf(v) => flat.extend([0.0, 0.0, v, 0.0, 0.0]),
                    Node::Split { feature, threshold, left, right } => {
                        flat.extend([1.0, feature as f64, threshold, left as f64, right as f64])
                    }
                }
            }
        }
        let total = flat.len() / 5;
        c.tensors.push(("gb.nodes".into(), Tensor::new(&[total, 5], flat)?));
        c.tensors.push(("gb.offsets".into(), Tensor::new(&[offsets.len()], offsets)?));
        Ok(())
    }

    pub(crate) fn read(c: &Container) -> Result<Self> {
        let params = GbParams {
            shrinkage: c.parse_config("gb.shrinkage")?,
            max_depth: c.parse_config("gb.max_depth")?,
            stages: c.parse_config("gb.stages")?,
        };
        let k: usize = c.parse_config("gb.classes")?;
        let dim: usize = c.parse_config("gb.dim")?;
        let init = c.tensor("gb.init")?;
        let nodes = c.tensor("gb.nodes")?;
        let offsets = c.tensor("gb.offsets")?;
        let bad = |m: &str| Error::Format(format!("gb model: {m}"));
        if init.shape() != [k] || offsets.len() != params.stages * k || nodes.rank() != 2 || nodes.shape()[1] != 5 {
            return Err(bad("tensor shapes disagree with the config"));
        }
        let total = nodes.shape()[0];
        let index = |v: f64, limit: usize| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && (v as usize) < limit {
                Ok(v as usize)
            } else {
                Err(bad("node index out of range"))
            }
        };
        let mut trees = Vec::with_capacity(offsets.len());
        for t in 0..offsets.len() {
            let start = index(offsets.data()[t], total)?;
            let end = if t + 1 < offsets.len() { index(offsets.data()[t + 1], total)? } else { total };
            if end <= start {
                return Err(bad("empty tree"));
            }
            let size = end - start;
            let mut tree = Vec::with_capacity(size);
            for row in nodes.data()[start * 5..end * 5].chunks_exact(5) {
                tree.push(match row[0] {
                    0.0 => Node::Leaf(row[2]),
                    1.0 => {
                        let (left, right) = (index(row[3], size)?, index(row[4], size)?);
                        let here = tree.len();
                        if left <= here || right <= here {
                            return Err(bad("split children must follow their parent"));
                        }
                        Node::Split { feature: index(row[1], dim)?, threshold: row[2], left, right }
                    }
                    _ => return Err(bad("unknown node kind")),
                });
            }
            trees.push(Tree { nodes: tree });
        }
        let mut stages = Vec::with_capacity(params.stages);
        let mut it = trees.into_iter();
        for _ in 0..params.stages {
            stages.push(it.by_ref().take(k).collect());
        }
        Ok(GbModel { params, num_classes: k, dim, init: init.data().to_vec(), stages })
    }
}
