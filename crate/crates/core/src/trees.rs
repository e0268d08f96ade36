//! Axis-aligned least-squares regression trees.
//!
//! Splits are searched exhaustively over every feature and every midpoint
//! between consecutive distinct values present at the node. Rows with
//! `x[feature] <= threshold` go left. Among candidates whose variance
//! reduction is equal (within a relative `1e-10` of the node's squared
//! error), the lowest feature index and then the lowest threshold win.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::types::Regressor;

/// Relative tolerance under which two candidate reductions count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// Minimum reduction, relative to the node's squared error, for a split.
pub const MIN_RELATIVE_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Reduction in summed squared error achieved by this split.
        gain: f64,
        n_samples: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        n_samples: usize,
        /// Mean squared deviation of the leaf's training targets.
        squared_error: f64,
    },
}

impl TreeNode {
    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Split { n_samples, .. } | TreeNode::Leaf { n_samples, .. } => *n_samples,
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub params: TreeParams,
    pub root: TreeNode,
}

impl RegressionTree {
    pub fn leaf(n_features: usize, value: f64) -> Self {
        Self {
            n_features,
            params: TreeParams {
                max_depth: 0,
                min_samples_leaf: 1,
            },
            root: TreeNode::Leaf {
                value,
                n_samples: 0,
                squared_error: 0.0,
            },
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn n_train(&self) -> usize {
        self.root.n_samples()
    }

    /// Prediction without the dimension check; `x` must have `n_features` entries.
    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        Ok(self.predict_unchecked(x))
    }

    /// Per-feature sum of split gains, each weighted by the fraction of
    /// training rows reaching the split.
    pub fn split_gains(&self) -> Vec<f64> {
        let mut gains = vec![0.0; self.n_features];
        let total = self.n_train();
        if total == 0 {
            return gains;
        }
        fn walk(node: &TreeNode, total: f64, gains: &mut [f64]) {
            if let TreeNode::Split {
                feature,
                gain,
                left,
                right,
                ..
            } = node
            {
                // n_node/N * (SSE reduction / n_node) == reduction / N
                gains[*feature] += gain / total;
                walk(left, total, gains);
                walk(right, total, gains);
            }
        }
        walk(&self.root, total as f64, &mut gains);
        gains
    }

    /// Graphviz rendering of the tree.
    pub fn to_dot(&self, feature_names: Option<&[String]>) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        let mut next_id = 0usize;
        fn emit(
            node: &TreeNode,
            names: Option<&[String]>,
            out: &mut String,
            next_id: &mut usize,
        ) -> usize {
            let id = *next_id;
            *next_id += 1;
            match node {
                TreeNode::Leaf {
                    value,
                    n_samples,
                    squared_error,
                } => {
                    let _ = writeln!(
                        out,
                        "  n{id} [label=\"value = {value:.4}\\nsamples = {n_samples}\\nsquared_error = {squared_error:.4}\"];"
                    );
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    n_samples,
                    left,
                    right,
                    ..
                } => {
                    let name = names
                        .and_then(|n| n.get(*feature).cloned())
                        .unwrap_or_else(|| format!("x[{feature}]"));
                    let _ = writeln!(
                        out,
                        "  n{id} [label=\"{name} <= {threshold:.4}\\nsamples = {n_samples}\"];"
                    );
                    let l = emit(left, names, out, next_id);
                    let r = emit(right, names, out, next_id);
                    let _ = writeln!(out, "  n{id} -> n{l} [label=\"true\"];");
                    let _ = writeln!(out, "  n{id} -> n{r} [label=\"false\"];");
                }
            }
            id
        }
        emit(&self.root, feature_names, &mut out, &mut next_id);
        out.push_str("}\n");
        out
    }
}

impl Regressor for RegressionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

/// Feature matrix pre-indexed by per-feature value rank, reusable across
/// many fits on the same inputs (boosting stages).
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    n_rows: usize,
    /// Sorted distinct values per feature.
    uniques: Vec<Vec<f64>>,
    /// Rank of each row's value within `uniques`, per feature.
    ranks: Vec<Vec<u32>>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    split_rank: u32,
    reduction: f64,
}

struct Scratch {
    count: Vec<u32>,
    sum: Vec<f64>,
    pairs: Vec<(u32, f64)>,
}

impl TreeBuilder {
    pub fn new(x: &[Vec<f64>]) -> Result<Self> {
        let n_rows = x.len();
        if n_rows == 0 {
            return Err(Error::Empty("tree inputs"));
        }
        let d = x[0].len();
        if d == 0 {
            return Err(Error::Empty("tree features"));
        }
        for row in x {
            check_dim(d, row.len())?;
            check_finite(row, "tree inputs")?;
        }
        let mut uniques = Vec::with_capacity(d);
        let mut ranks = Vec::with_capacity(d);
        for f in 0..d {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let col_ranks = x
                .iter()
                .map(|r| {
                    vals.binary_search_by(|v| v.total_cmp(&r[f]))
                        .expect("value present") as u32
                })
                .collect();
            uniques.push(vals);
            ranks.push(col_ranks);
        }
        Ok(Self {
            n_rows,
            uniques,
            ranks,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.uniques.len()
    }

    pub fn fit(&self, y: &[f64], params: TreeParams) -> Result<RegressionTree> {
        check_dim(self.n_rows, y.len())?;
        check_finite(y, "tree targets")?;
        if params.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be >= 1".into()));
        }
        let max_unique = self.uniques.iter().map(Vec::len).max().unwrap_or(0);
        let mut scratch = Scratch {
            count: vec![0; max_unique],
            sum: vec![0.0; max_unique],
            pairs: Vec::new(),
        };
        let rows: Vec<u32> = (0..self.n_rows as u32).collect();
        let root = self.grow(y, rows, 0, params, &mut scratch);
        Ok(RegressionTree {
            n_features: self.n_features(),
            params,
            root,
        })
    }

    fn grow(
        &self,
        y: &[f64],
        rows: Vec<u32>,
        depth: usize,
        params: TreeParams,
        scratch: &mut Scratch,
    ) -> TreeNode {
        let n = rows.len();
        let mean = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / n as f64;
        let sse: f64 = rows.iter().map(|&r| (y[r as usize] - mean).powi(2)).sum();
        let leaf = || TreeNode::Leaf {
            value: mean,
            n_samples: n,
            squared_error: sse / n as f64,
        };
        if depth >= params.max_depth || n < 2 * params.min_samples_leaf {
            return leaf();
        }
        let scale: f64 = rows.iter().map(|&r| y[r as usize].powi(2)).sum::<f64>() * f64::EPSILON;
        let Some(best) = self.best_split(y, &rows, mean, sse, params.min_samples_leaf, scratch)
        else {
            return leaf();
        };
        if best.reduction <= MIN_RELATIVE_GAIN * sse.max(scale) {
            return leaf();
        }
        let ranks = &self.ranks[best.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| ranks[r as usize] <= best.split_rank);
        let left = self.grow(y, left_rows, depth + 1, params, scratch);
        let right = self.grow(y, right_rows, depth + 1, params, scratch);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.reduction,
            n_samples: n,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(
        &self,
        y: &[f64],
        rows: &[u32],
        mean: f64,
        sse: f64,
        min_leaf: usize,
        scratch: &mut Scratch,
    ) -> Option<Candidate> {
        let n = rows.len();
        let tol = TIE_TOLERANCE * sse;
        let mut best: Option<Candidate> = None;
        let consider = |best: &mut Option<Candidate>, cand: Candidate| {
            let better = match best {
                None => true,
                Some(b) => cand.reduction > b.reduction + tol,
            };
            if better {
                *best = Some(cand);
            }
        };

        for (feature, uniques) in self.uniques.iter().enumerate() {
            if uniques.len() < 2 {
                continue;
            }
            let ranks = &self.ranks[feature];
            // Walk (rank, centred target) groups in ascending rank order.
            let mut groups: Vec<(u32, u32, f64)> = Vec::new();
            if n * 4 >= uniques.len() {
                let count = &mut scratch.count[..uniques.len()];
                let sum = &mut scratch.sum[..uniques.len()];
                for &r in rows {
                    let k = ranks[r as usize] as usize;
                    count[k] += 1;
                    sum[k] += y[r as usize] - mean;
                }
                for k in 0..uniques.len() {
                    if count[k] > 0 {
                        groups.push((k as u32, count[k], sum[k]));
                        count[k] = 0;
                        sum[k] = 0.0;
                    }
                }
            } else {
                scratch.pairs.clear();
                scratch
                    .pairs
                    .extend(rows.iter().map(|&r| (ranks[r as usize], y[r as usize] - mean)));
                scratch.pairs.sort_by_key(|p| p.0);
                for &(k, v) in &scratch.pairs {
                    match groups.last_mut() {
                        Some(g) if g.0 == k => {
                            g.1 += 1;
                            g.2 += v;
                        }
                        _ => groups.push((k, 1, v)),
                    }
                }
            }
            if groups.len() < 2 {
                continue;
            }
            let total_sum: f64 = groups.iter().map(|g| g.2).sum();
            let mut left_n = 0usize;
            let mut left_sum = 0.0;
            for w in 0..groups.len() - 1 {
                left_n += groups[w].1 as usize;
                left_sum += groups[w].2;
                let right_n = n - left_n;
                if left_n < min_leaf {
                    continue;
                }
                if right_n < min_leaf {
                    break;
                }
                let right_sum = total_sum - left_sum;
                let reduction = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - total_sum * total_sum / n as f64;
                let lo = uniques[groups[w].0 as usize];
                let hi = uniques[groups[w + 1].0 as usize];
                consider(
                    &mut best,
                    Candidate {
                        feature,
                        threshold: midpoint(lo, hi),
                        split_rank: groups[w].0,
                        reduction,
                    },
                );
            }
        }
        best
    }
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Fits one tree. Too few rows for a split yields a single mean leaf.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Result<RegressionTree> {
    check_dim(x.len(), y.len())?;
    TreeBuilder::new(x)?.fit(y, params)
}
