//! Oracles shared by the integration tests and the acceptance harness.

#![allow(dead_code)]

use policy_distill::trees::{midpoint, RegressionTree, TreeNode, TreeParams, MIN_RELATIVE_GAIN, TIE_TOLERANCE};

/// Brute-force CART: at every node, every feature and every midpoint
/// between distinct node values is tried, and each side's squared error is
/// recomputed from scratch. Same stopping and tie rules as the builder.
pub fn oracle_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> TreeNode {
    let rows: Vec<usize> = (0..y.len()).collect();
    grow(x, y, &rows, 0, params)
}

fn mean_sse(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    (mean, rows.iter().map(|&r| (y[r] - mean).powi(2)).sum())
}

fn grow(x: &[Vec<f64>], y: &[f64], rows: &[usize], depth: usize, params: TreeParams) -> TreeNode {
    let n = rows.len();
    let (mean, sse) = mean_sse(y, rows);
    let leaf = TreeNode::Leaf {
        value: mean,
        n_samples: n,
        squared_error: sse / n as f64,
    };
    if depth >= params.max_depth || n < 2 * params.min_samples_leaf {
        return leaf;
    }
    let d = x[0].len();
    let tol = TIE_TOLERANCE * sse;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = midpoint(w[0], w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            if l.len() < params.min_samples_leaf || r.len() < params.min_samples_leaf {
                continue;
            }
            let reduction = sse - mean_sse(y, &l).1 - mean_sse(y, &r).1;
            if best.is_none_or(|b| reduction > b.2 + tol) {
                best = Some((f, t, reduction));
            }
        }
    }
    let scale = rows.iter().map(|&r| y[r].powi(2)).sum::<f64>() * f64::EPSILON;
    match best {
        Some((f, t, reduction)) if reduction > MIN_RELATIVE_GAIN * sse.max(scale) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            TreeNode::Split {
                feature: f,
                threshold: t,
                gain: reduction,
                n_samples: n,
                left: Box::new(grow(x, y, &l, depth + 1, params)),
                right: Box::new(grow(x, y, &r, depth + 1, params)),
            }
        }
        _ => leaf,
    }
}

/// Same shape, features and thresholds; leaf values within `tol`.
pub fn same_structure(a: &TreeNode, b: &TreeNode, tol: f64) -> bool {
    match (a, b) {
        (TreeNode::Leaf { value: va, n_samples: na, .. }, TreeNode::Leaf { value: vb, n_samples: nb, .. }) => {
            na == nb && (va - vb).abs() <= tol * (1.0 + va.abs())
        }
        (
            TreeNode::Split { feature: fa, threshold: ta, left: la, right: ra, .. },
            TreeNode::Split { feature: fb, threshold: tb, left: lb, right: rb, .. },
        ) => fa == fb && ta == tb && same_structure(la, lb, tol) && same_structure(ra, rb, tol),
        _ => false,
    }
}

pub fn predict_node(node: &TreeNode, x: &[f64]) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split { feature, threshold, left, right, .. } => {
            if x[*feature] <= *threshold {
                predict_node(left, x)
            } else {
                predict_node(right, x)
            }
        }
    }
}

/// Training squared error of a tree.
pub fn training_sse(node: &TreeNode, x: &[Vec<f64>], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(r, t)| (predict_node(node, r) - t).powi(2)).sum()
}

/// The builder must reproduce the oracle's splits exactly, with leaf values
/// equal up to summation order.
pub fn agrees_with_oracle(x: &[Vec<f64>], y: &[f64], params: TreeParams, tree: &RegressionTree) -> bool {
    same_structure(&tree.root, &oracle_tree(x, y, params), 1e-12)
}

pub fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}
