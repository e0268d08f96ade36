//! Explainable boosting machine: an additive model with one binned lookup
//! table per feature plus a few pairwise tables, trained by cyclic
//! boosting of depth-limited trees on the bin grid.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::types::Regressor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EbmParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub max_interaction_bins: usize,
    pub max_pairs: usize,
    /// Depth of the micro-step trees on the bin grid.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for EbmParams {
    fn default() -> Self {
        Self {
            rounds: 500,
            learning_rate: 0.1,
            max_bins: 256,
            max_interaction_bins: 32,
            // Three pairs per feature of the 18-dimensional gait observation.
            max_pairs: 54,
            max_depth: 2,
            min_samples_leaf: 2,
        }
    }
}

impl EbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("ebm needs at least one round".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ebm learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_bins < 2 || self.max_interaction_bins < 2 {
            return Err(Error::InvalidArgument("bin limits must be >= 2".into()));
        }
        if !(1..=2).contains(&self.max_depth) {
            return Err(Error::InvalidArgument("ebm micro-step depth must be 1 or 2".into()));
        }
        if self.max_bins > u16::MAX as usize + 1 {
            return Err(Error::InvalidArgument("max_bins too large".into()));
        }
        Ok(())
    }
}

/// Quantile cut points per feature. A value `v` falls in bin
/// `#{cuts c : c < v}`, so values equal to a cut go to the lower bin and
/// values outside the training range land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningMap {
    pub cuts: Vec<Vec<f64>>,
    /// Training range per feature, used to place edge-bin centres.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BinningMap {
    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, value: f64) -> usize {
        self.cuts[feature].partition_point(|&c| c < value)
    }

    /// Lower and upper edge of every bin, closed by the training range.
    pub fn bin_edges(&self, feature: usize) -> Vec<(f64, f64)> {
        let cuts = &self.cuts[feature];
        let mut edges = Vec::with_capacity(cuts.len() + 1);
        let mut lo = self.min[feature].min(cuts.first().copied().unwrap_or(f64::INFINITY));
        for &c in cuts {
            edges.push((lo, c));
            lo = c;
        }
        edges.push((lo, self.max[feature].max(lo)));
        edges
    }

    fn columns(&self, x: &[Vec<f64>]) -> Vec<Vec<u16>> {
        (0..self.n_features())
            .map(|f| x.iter().map(|r| self.bin(f, r[f]) as u16).collect())
            .collect()
    }
}

pub fn build_bins(x: &[Vec<f64>], max_bins: usize) -> Result<BinningMap> {
    if x.is_empty() {
        return Err(Error::Empty("binning inputs"));
    }
    if max_bins < 1 {
        return Err(Error::InvalidArgument("max_bins must be >= 1".into()));
    }
    let d = x[0].len();
    let mut cuts = Vec::with_capacity(d);
    let mut min = Vec::with_capacity(d);
    let mut max = Vec::with_capacity(d);
    for f in 0..d {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        check_finite(&vals, "binning inputs")?;
        vals.sort_by(f64::total_cmp);
        min.push(vals[0]);
        max.push(*vals.last().expect("non-empty"));
        let mut uniq = vals.clone();
        uniq.dedup();
        let feature_cuts: Vec<f64> = if uniq.len() <= max_bins {
            uniq.windows(2).map(|w| crate::trees::midpoint(w[0], w[1])).collect()
        } else {
            let n = vals.len();
            let mut out: Vec<f64> = Vec::with_capacity(max_bins - 1);
            for k in 1..max_bins {
                let pos = ((k as f64 * n as f64 / max_bins as f64).round() as usize).clamp(1, n - 1);
                let (lo, hi) = (vals[pos - 1], vals[pos]);
                if lo < hi {
                    let c = crate::trees::midpoint(lo, hi);
                    if out.last().map_or(true, |&last| c > last) {
                        out.push(c);
                    }
                }
            }
            out
        };
        cuts.push(feature_cuts);
    }
    Ok(BinningMap { cuts, min, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub features: (usize, usize),
    pub cuts_first: Vec<f64>,
    pub cuts_second: Vec<f64>,
    /// Row-major table, `cuts_first.len() + 1` rows by `cuts_second.len() + 1` columns.
    pub table: Vec<f64>,
}

impl PairTerm {
    fn n_cols(&self) -> usize {
        self.cuts_second.len() + 1
    }

    #[inline]
    fn lookup(&self, x: &[f64]) -> f64 {
        let a = self.cuts_first.partition_point(|&c| c < x[self.features.0]);
        let b = self.cuts_second.partition_point(|&c| c < x[self.features.1]);
        self.table[a * self.n_cols() + b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbmModel {
    pub intercept: f64,
    pub feature_names: Vec<String>,
    pub bins: BinningMap,
    /// One table per feature, indexed by bin.
    pub terms: Vec<Vec<f64>>,
    pub pairs: Vec<PairTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub term: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionScore {
    pub pair: (usize, usize),
    pub score: f64,
}

/// Cell-wise sums over a rectangular bin grid.
struct Grid {
    rows: usize,
    cols: usize,
    /// Prefix sums with one padding row and column.
    psum: Vec<f64>,
    pcount: Vec<f64>,
}

impl Grid {
    fn new(rows: usize, cols: usize, sum: &[f64], count: &[f64]) -> Self {
        let w = cols + 1;
        let mut psum = vec![0.0; (rows + 1) * w];
        let mut pcount = vec![0.0; (rows + 1) * w];
        for a in 0..rows {
            for b in 0..cols {
                let i = (a + 1) * w + (b + 1);
                psum[i] = sum[a * cols + b] + psum[a * w + b + 1] + psum[(a + 1) * w + b]
                    - psum[a * w + b];
                pcount[i] = count[a * cols + b] + pcount[a * w + b + 1] + pcount[(a + 1) * w + b]
                    - pcount[a * w + b];
            }
        }
        Self {
            rows,
            cols,
            psum,
            pcount,
        }
    }

    /// (sum, count) over `[a0, a1) x [b0, b1)`.
    fn region(&self, r: Region) -> (f64, f64) {
        let w = self.cols + 1;
        let at = |p: &[f64], a: usize, b: usize| p[a * w + b];
        let s = at(&self.psum, r.a1, r.b1) - at(&self.psum, r.a0, r.b1) - at(&self.psum, r.a1, r.b0)
            + at(&self.psum, r.a0, r.b0);
        let n = at(&self.pcount, r.a1, r.b1)
            - at(&self.pcount, r.a0, r.b1)
            - at(&self.pcount, r.a1, r.b0)
            + at(&self.pcount, r.a0, r.b0);
        (s, n.round())
    }
}

#[derive(Debug, Clone, Copy)]
struct Region {
    a0: usize,
    a1: usize,
    b0: usize,
    b1: usize,
}

/// Best single axis-aligned cut of a region: (reduction, left, right).
fn best_cut(grid: &Grid, r: Region, min_leaf: f64) -> Option<(f64, Region, Region)> {
    let (s, n) = grid.region(r);
    if n < 2.0 * min_leaf {
        return None;
    }
    let base = s * s / n;
    let mut best: Option<(f64, Region, Region)> = None;
    let mut try_cut = |left: Region, right: Region| {
        let (sl, nl) = grid.region(left);
        let (sr, nr) = grid.region(right);
        if nl < min_leaf || nr < min_leaf {
            return;
        }
        let red = sl * sl / nl + sr * sr / nr - base;
        if red > 0.0 && best.as_ref().map_or(true, |b| red > b.0) {
            best = Some((red, left, right));
        }
    };
    for c in r.a0 + 1..r.a1 {
        try_cut(Region { a1: c, ..r }, Region { a0: c, ..r });
    }
    for c in r.b0 + 1..r.b1 {
        try_cut(Region { b1: c, ..r }, Region { b0: c, ..r });
    }
    best
}

/// Root cut maximising its own reduction plus the best single cut in each
/// child.
fn lookahead_cut(grid: &Grid, r: Region, min_leaf: f64) -> Option<(f64, Region, Region)> {
    let (s, n) = grid.region(r);
    if n < 2.0 * min_leaf {
        return None;
    }
    let base = s * s / n;
    let mut best: Option<(f64, Region, Region)> = None;
    let mut try_cut = |left: Region, right: Region| {
        let (sl, nl) = grid.region(left);
        let (sr, nr) = grid.region(right);
        if nl < min_leaf || nr < min_leaf {
            return;
        }
        let mut red = sl * sl / nl + sr * sr / nr - base;
        red += best_cut(grid, left, min_leaf).map_or(0.0, |c| c.0);
        red += best_cut(grid, right, min_leaf).map_or(0.0, |c| c.0);
        if red > 0.0 && best.as_ref().map_or(true, |b| red > b.0) {
            best = Some((red, left, right));
        }
    };
    for c in r.a0 + 1..r.a1 {
        try_cut(Region { a1: c, ..r }, Region { a0: c, ..r });
    }
    for c in r.b0 + 1..r.b1 {
        try_cut(Region { b1: c, ..r }, Region { b0: c, ..r });
    }
    best
}

/// Fits a depth-limited tree on the grid and writes each leaf's mean into
/// every cell of that leaf.
fn fit_grid_tree(grid: &Grid, depth: usize, min_leaf: usize, out: &mut [f64]) {
    fn recurse(grid: &Grid, r: Region, depth: usize, min_leaf: f64, out: &mut [f64]) {
        if depth > 0 {
            // On a 2-D grid a greedy root cut can be blind to interactions
            // (exclusive-or has zero single-cut gain), so pick it by lookahead.
            let cut = if depth >= 2 && grid.cols > 1 {
                lookahead_cut(grid, r, min_leaf)
            } else {
                best_cut(grid, r, min_leaf)
            };
            if let Some((_, left, right)) = cut {
                recurse(grid, left, depth - 1, min_leaf, out);
                recurse(grid, right, depth - 1, min_leaf, out);
                return;
            }
        }
        let (s, n) = grid.region(r);
        let value = if n > 0.0 { s / n } else { 0.0 };
        for a in r.a0..r.a1 {
            for b in r.b0..r.b1 {
                out[a * grid.cols + b] = value;
            }
        }
    }
    let full = Region {
        a0: 0,
        a1: grid.rows,
        b0: 0,
        b1: grid.cols,
    };
    recurse(grid, full, depth, min_leaf as f64, out);
}

/// Squared-error reduction of the per-cell mean predictor, the best
/// predictor expressible on the grid, relative to the global mean.
fn cell_mean_score(sum: &[f64], count: &[f64]) -> f64 {
    let (mut total_s, mut total_n, mut explained) = (0.0, 0.0, 0.0);
    for (&s, &n) in sum.iter().zip(count) {
        if n > 0.0 {
            explained += s * s / n;
            total_s += s;
            total_n += n;
        }
    }
    if total_n == 0.0 {
        return 0.0;
    }
    explained - total_s * total_s / total_n
}

fn accumulate(bins_a: &[u16], bins_b: Option<&[u16]>, cols: usize, residual: &[f64], sum: &mut [f64], count: &mut [f64]) {
    sum.iter_mut().for_each(|v| *v = 0.0);
    count.iter_mut().for_each(|v| *v = 0.0);
    match bins_b {
        None => {
            for (&a, &r) in bins_a.iter().zip(residual) {
                sum[a as usize] += r;
                count[a as usize] += 1.0;
            }
        }
        Some(bins_b) => {
            for ((&a, &b), &r) in bins_a.iter().zip(bins_b).zip(residual) {
                let i = a as usize * cols + b as usize;
                sum[i] += r;
                count[i] += 1.0;
            }
        }
    }
}

/// Scores every feature pair by how much of the residual the per-cell mean
/// on that pair's bin grid explains (as mean squared error reduction), and
/// returns the top `max_pairs`, ties broken by pair order.
pub fn detect_interactions(
    x: &[Vec<f64>],
    residuals: &[f64],
    max_pairs: usize,
    max_interaction_bins: usize,
) -> Result<Vec<InteractionScore>> {
    check_dim(x.len(), residuals.len())?;
    if max_pairs == 0 || x.is_empty() {
        return Ok(Vec::new());
    }
    let bins = build_bins(x, max_interaction_bins)?;
    let cols = bins.columns(x);
    Ok(score_pairs(&bins, &cols, residuals, max_pairs))
}

fn score_pairs(
    bins: &BinningMap,
    cols: &[Vec<u16>],
    residuals: &[f64],
    max_pairs: usize,
) -> Vec<InteractionScore> {
    let d = bins.n_features();
    let n = residuals.len() as f64;
    let mut scores = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let (ra, rb) = (bins.n_bins(i), bins.n_bins(j));
            let mut sum = vec![0.0; ra * rb];
            let mut count = vec![0.0; ra * rb];
            accumulate(&cols[i], Some(&cols[j]), rb, residuals, &mut sum, &mut count);
            scores.push(InteractionScore {
                pair: (i, j),
                score: cell_mean_score(&sum, &count) / n,
            });
        }
    }
    // Stable sort keeps lexicographic pair order among equal scores.
    scores.sort_by(|a, b| b.score.total_cmp(&a.score));
    scores.truncate(max_pairs);
    scores
}

pub fn fit_ebm(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    params: &EbmParams,
) -> Result<EbmModel> {
    params.validate()?;
    check_dim(x.len(), y.len())?;
    if y.len() < 2 {
        return Err(Error::InvalidArgument("ebm needs at least 2 rows".into()));
    }
    check_finite(y, "ebm targets")?;
    let d = x[0].len();
    check_dim(d, feature_names.len())?;
    for row in x {
        check_dim(d, row.len())?;
    }
    let n = y.len();
    let bins = build_bins(x, params.max_bins)?;
    let cols = bins.columns(x);
    let mut intercept = y.iter().sum::<f64>() / n as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    let mut terms: Vec<Vec<f64>> = (0..d).map(|f| vec![0.0; bins.n_bins(f)]).collect();

    let max_b = (0..d).map(|f| bins.n_bins(f)).max().unwrap_or(1);
    let mut sum = vec![0.0; max_b];
    let mut count = vec![0.0; max_b];
    let mut update = vec![0.0; max_b];
    for _ in 0..params.rounds {
        for f in 0..d {
            let b = bins.n_bins(f);
            if b < 2 {
                continue;
            }
            accumulate(&cols[f], None, 1, &residual, &mut sum[..b], &mut count[..b]);
            let grid = Grid::new(b, 1, &sum[..b], &count[..b]);
            fit_grid_tree(&grid, params.max_depth, params.min_samples_leaf, &mut update[..b]);
            for (t, u) in terms[f].iter_mut().zip(&update[..b]) {
                *t += params.learning_rate * u;
            }
            for (r, &k) in residual.iter_mut().zip(&cols[f]) {
                *r -= params.learning_rate * update[k as usize];
            }
        }
    }

    let mut pairs = Vec::new();
    if params.max_pairs > 0 && d >= 2 {
        let pair_bins = build_bins(x, params.max_interaction_bins)?;
        let pair_cols = pair_bins.columns(x);
        let selected = score_pairs(&pair_bins, &pair_cols, &residual, params.max_pairs);
        for s in &selected {
            let (i, j) = s.pair;
            pairs.push(PairTerm {
                features: (i, j),
                cuts_first: pair_bins.cuts[i].clone(),
                cuts_second: pair_bins.cuts[j].clone(),
                table: vec![0.0; pair_bins.n_bins(i) * pair_bins.n_bins(j)],
            });
        }
        let mut sum = Vec::new();
        let mut count = Vec::new();
        let mut update = Vec::new();
        for _ in 0..params.rounds {
            for term in &mut pairs {
                let (i, j) = term.features;
                let (ra, rb) = (pair_bins.n_bins(i), pair_bins.n_bins(j));
                sum.resize(ra * rb, 0.0);
                count.resize(ra * rb, 0.0);
                update.resize(ra * rb, 0.0);
                accumulate(&pair_cols[i], Some(&pair_cols[j]), rb, &residual, &mut sum, &mut count);
                let grid = Grid::new(ra, rb, &sum, &count);
                fit_grid_tree(&grid, params.max_depth, params.min_samples_leaf, &mut update);
                for (t, u) in term.table.iter_mut().zip(&update) {
                    *t += params.learning_rate * u;
                }
                for ((r, &a), &b) in residual.iter_mut().zip(&pair_cols[i]).zip(&pair_cols[j]) {
                    *r -= params.learning_rate * update[a as usize * rb + b as usize];
                }
            }
        }
        // Centre pair tables under the training cell occupancy.
        for term in &mut pairs {
            let (i, j) = term.features;
            let rb = pair_bins.n_bins(j);
            let mean = pair_cols[i]
                .iter()
                .zip(&pair_cols[j])
                .map(|(&a, &b)| term.table[a as usize * rb + b as usize])
                .sum::<f64>()
                / n as f64;
            term.table.iter_mut().for_each(|v| *v -= mean);
            intercept += mean;
        }
    }

    let mut model = EbmModel {
        intercept,
        feature_names: feature_names.to_vec(),
        bins,
        terms,
        pairs,
    };
    model.center_terms(&cols);
    Ok(model)
}

impl EbmModel {
    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    /// Shifts every table to zero mean under the training occupancy and
    /// folds the shifts into the intercept. Predictions are unchanged.
    fn center_terms(&mut self, cols: &[Vec<u16>]) {
        for (f, table) in self.terms.iter_mut().enumerate() {
            let n = cols[f].len() as f64;
            let mean = cols[f].iter().map(|&k| table[k as usize]).sum::<f64>() / n;
            table.iter_mut().for_each(|v| *v -= mean);
            self.intercept += mean;
        }
    }

    pub fn term_names(&self) -> Vec<String> {
        let mut names = self.feature_names.clone();
        names.extend(self.pairs.iter().map(|p| {
            format!(
                "{} & {}",
                self.feature_names[p.features.0], self.feature_names[p.features.1]
            )
        }));
        names
    }

    /// Contribution of every term (univariate first, then pairs) at `x`.
    pub fn contributions(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_features(), x.len())?;
        let mut out: Vec<f64> = self
            .terms
            .iter()
            .enumerate()
            .map(|(f, t)| t[self.bins.bin(f, x[f])])
            .collect();
        out.extend(self.pairs.iter().map(|p| p.lookup(x)));
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.intercept + self.contributions(x)?.iter().sum::<f64>())
    }

    /// Per-term contributions ordered by magnitude, largest first.
    pub fn local_explanation(&self, x: &[f64]) -> Result<Vec<TermContribution>> {
        let contributions = self.contributions(x)?;
        let mut entries: Vec<(usize, TermContribution)> = self
            .term_names()
            .into_iter()
            .zip(contributions)
            .map(|(term, contribution)| TermContribution { term, contribution })
            .enumerate()
            .collect();
        entries.sort_by(|(ia, a), (ib, b)| {
            b.contribution
                .abs()
                .total_cmp(&a.contribution.abs())
                .then(ia.cmp(ib))
        });
        Ok(entries.into_iter().map(|(_, e)| e).collect())
    }

    /// Mean absolute contribution of each term over `x`, largest first.
    pub fn global_importance(&self, x: &[Vec<f64>]) -> Result<Vec<TermContribution>> {
        if x.is_empty() {
            return Err(Error::Empty("global importance inputs"));
        }
        let names = self.term_names();
        let mut totals = vec![0.0; names.len()];
        for row in x {
            for (t, c) in totals.iter_mut().zip(self.contributions(row)?) {
                *t += c.abs();
            }
        }
        let mut entries: Vec<(usize, TermContribution)> = names
            .into_iter()
            .zip(totals)
            .map(|(term, total)| TermContribution {
                term,
                contribution: total / x.len() as f64,
            })
            .enumerate()
            .collect();
        entries.sort_by(|(ia, a), (ib, b)| {
            b.contribution.total_cmp(&a.contribution).then(ia.cmp(ib))
        });
        Ok(entries.into_iter().map(|(_, e)| e).collect())
    }

    /// Shape function of one feature as (lower edge, upper edge, value) per bin.
    pub fn shape_function(&self, feature: usize) -> Vec<(f64, f64, f64)> {
        self.bins
            .bin_edges(feature)
            .into_iter()
            .zip(&self.terms[feature])
            .map(|((lo, hi), &v)| (lo, hi, v))
            .collect()
    }
}

impl Regressor for EbmModel {
    fn n_features(&self) -> usize {
        self.terms.len()
    }

    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    fn xor_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        // Signed exclusive-or: positive when the two signs differ.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let a = if i % 2 == 0 { 1.0 } else { -1.0 };
            let b = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let c = (i % 5) as f64;
            x.push(vec![a, b, c]);
            y.push(if a * b < 0.0 { 1.0 } else { -1.0 });
        }
        (x, y)
    }

    #[test]
    fn binary_feature_gets_two_bins() {
        let bins = build_bins(&[vec![0.0], vec![1.0], vec![1.0]], 256).unwrap();
        assert_eq!(bins.cuts[0], vec![0.5]);
        assert_eq!(bins.bin(0, 0.0), 0);
        assert_eq!(bins.bin(0, 0.5), 0);
        assert_eq!(bins.bin(0, 1.0), 1);
        assert_eq!(bins.bin(0, 9.0), 1);
        assert_eq!(bins.bin(0, -9.0), 0);
    }

    #[test]
    fn constant_feature_is_single_bin() {
        let bins = build_bins(&[vec![3.0], vec![3.0]], 256).unwrap();
        assert_eq!(bins.n_bins(0), 1);
    }

    #[test]
    fn uniform_occupancy_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.gen::<f64>()]).collect();
        let bins = build_bins(&x, 256).unwrap();
        assert_eq!(bins.n_bins(0), 256);
        let mut occ = vec![0usize; 256];
        for r in &x {
            occ[bins.bin(0, r[0])] += 1;
        }
        let expected = 1000.0 / 256.0;
        for &c in &occ {
            assert!((c as f64) >= 0.5 * expected && (c as f64) <= 1.5 * expected, "{occ:?}");
        }
        assert!(bins.cuts[0].windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_target_gives_zero_terms() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let m = fit_ebm(&x, &[4.0; 20], &names(2), &EbmParams::default()).unwrap();
        assert_eq!(m.intercept, 4.0);
        assert!(m.terms.iter().flatten().all(|&v| v == 0.0));
        assert!(m.pairs.iter().all(|p| p.table.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn identity_target_converges_to_half_steps() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let params = EbmParams { rounds: 500, learning_rate: 0.1, max_pairs: 0, ..EbmParams::default() };
        let m = fit_ebm(&x, &y, &names(1), &params).unwrap();
        assert!((m.intercept - 0.5).abs() < 1e-3);
        assert!((m.terms[0][0] + 0.5).abs() < 1e-3);
        assert!((m.terms[0][1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn xor_signal_lands_in_pair_term() {
        let (x, y) = xor_data();
        let params = EbmParams { rounds: 100, max_pairs: 2, ..EbmParams::default() };
        let m = fit_ebm(&x, &y, &names(3), &params).unwrap();
        assert!(m.terms.iter().flatten().all(|v| v.abs() < 1e-9), "{:?}", m.terms);
        assert_eq!(m.pairs[0].features, (0, 1));
        let expl = m.local_explanation(&[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(expl[0].term, "x0 & x1");
        assert!(expl[0].contribution > 0.9);
        let expl = m.local_explanation(&[1.0, 1.0, 0.0]).unwrap();
        assert!(expl[0].contribution < -0.9);

        let scores = detect_interactions(&x, &y, 3, 32).unwrap();
        assert_eq!(scores[0].pair, (0, 1));
        assert!(scores[0].score > 0.99);
    }

    #[test]
    fn additive_truth_has_negligible_pair_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1]).collect();
        let params = EbmParams { max_pairs: 0, ..EbmParams::default() };
        let m = fit_ebm(&x, &y, &names(3), &params).unwrap();
        let residual: Vec<f64> = x.iter().zip(&y).map(|(r, t)| t - m.predict(r).unwrap()).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let scores = detect_interactions(&x, &residual, 3, 32).unwrap();
        assert_eq!(scores.len(), 3);
        for s in &scores {
            assert!(s.score < 0.01 * var, "{s:?} var {var}");
        }
        assert!(detect_interactions(&x, &residual, 0, 32).unwrap().is_empty());
    }

    fn fitted() -> (EbmModel, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0), (rng.gen_range(0..4)) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + r[2].cos() + 0.3 * r[0]).collect();
        let params = EbmParams { rounds: 60, max_pairs: 2, ..EbmParams::default() };
        (fit_ebm(&x, &y, &names(3), &params).unwrap(), x)
    }

    #[test]
    fn terms_are_centred() {
        let (m, x) = fitted();
        for f in 0..3 {
            let mean = x.iter().map(|r| m.terms[f][m.bins.bin(f, r[f])]).sum::<f64>() / x.len() as f64;
            assert!(mean.abs() < 1e-9, "feature {f}: {mean}");
        }
    }

    #[test]
    fn out_of_range_clamps_to_edge_bins() {
        let (m, _) = fitted();
        let lo = m.bins.min[0];
        let hi = m.bins.max[0];
        assert_eq!(m.predict(&[lo - 100.0, 0.5, 1.0]).unwrap(), m.predict(&[lo, 0.5, 1.0]).unwrap());
        assert_eq!(m.predict(&[hi + 100.0, 0.5, 1.0]).unwrap(), m.predict(&[hi, 0.5, 1.0]).unwrap());
        assert!(m.predict(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn global_importance_scales_linearly_and_zero_terms_rank_last() {
        let (mut m, x) = fitted();
        let before = m.global_importance(&x).unwrap();
        let score = |list: &[TermContribution], name: &str| {
            list.iter().find(|t| t.term == name).unwrap().contribution
        };
        m.terms[0].iter_mut().for_each(|v| *v *= 2.0);
        let after = m.global_importance(&x).unwrap();
        assert!((score(&after, "x0") - 2.0 * score(&before, "x0")).abs() < 1e-12);

        m.terms[1].iter_mut().for_each(|v| *v = 0.0);
        m.pairs.clear();
        let g = m.global_importance(&x).unwrap();
        assert_eq!(g.last().unwrap().term, "x1");
        assert_eq!(g.last().unwrap().contribution, 0.0);
        let local = m.local_explanation(&x[0]).unwrap();
        assert_eq!(local.last().unwrap().term, "x1");
        assert_eq!(local.last().unwrap().contribution, 0.0);
    }

    #[test]
    fn serialization_round_trips_exactly() {
        let (m, _) = fitted();
        let json = serde_json::to_string(&m).unwrap();
        let back: EbmModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
        let shape = m.shape_function(0);
        assert_eq!(shape.len(), m.bins.n_bins(0));
    }

    #[test]
    fn pure_gam_changes_only_the_moved_feature() {
        let (x, y) = xor_data();
        let params = EbmParams { rounds: 30, max_pairs: 0, ..EbmParams::default() };
        let m = fit_ebm(&x, &y, &names(3), &params).unwrap();
        let base = m.contributions(&x[0]).unwrap();
        let mut moved = x[0].clone();
        moved[2] = 4.0;
        let after = m.contributions(&moved).unwrap();
        assert_eq!(base[0], after[0]);
        assert_eq!(base[1], after[1]);
    }

    proptest! {
        #[test]
        fn prediction_is_exactly_additive(a in -5.0f64..5.0, b in -1.0f64..2.0, c in -1.0f64..5.0) {
            let m = FITTED.with(|f| f.0.clone());
            let x = [a, b, c];
            let total: f64 = m.contributions(&x).unwrap().iter().sum();
            prop_assert!((m.predict(&x).unwrap() - m.intercept - total).abs() < 1e-12);
        }
    }

    thread_local! {
        static FITTED: (EbmModel, Vec<Vec<f64>>) = fitted();
    }
}
