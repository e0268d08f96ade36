//! Model-agnostic inspection: permutation importance, partial dependence
//! and ranked importance tables.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::metrics::r2_score_1d;
use crate::types::{derive_seed, FeatureSchema, Regressor};

const PERMUTATION_STREAM: u64 = 0x7065_726d;

/// Row order used to shuffle column `feature` in repeat `repeat`.
pub fn column_permutation(n: usize, seed: u64, feature: usize, repeat: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let stream_seed = derive_seed(
        seed,
        PERMUTATION_STREAM,
        ((feature as u64) << 32) | repeat as u64,
    );
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed));
    order
}

/// Mean drop in R² when each feature column is shuffled.
pub fn permutation_importance<M: Regressor + ?Sized>(
    model: &M,
    x: &[Vec<f64>],
    y: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be >= 1".into()));
    }
    check_dim(x.len(), y.len())?;
    let d = model.n_features();
    for row in x {
        check_dim(d, row.len())?;
    }
    let baseline = r2_score_1d(&model.predict_rows(x)?, y)?;
    let mut scratch: Vec<Vec<f64>> = x.to_vec();
    let mut drops = vec![0.0; d];
    for (feature, drop) in drops.iter_mut().enumerate() {
        let mut total = 0.0;
        for repeat in 0..n_repeats {
            let order = column_permutation(x.len(), seed, feature, repeat);
            for (row, &src) in scratch.iter_mut().zip(&order) {
                row[feature] = x[src][feature];
            }
            let score = r2_score_1d(&model.predict_rows(&scratch)?, y)?;
            total += baseline - score;
        }
        for (row, orig) in scratch.iter_mut().zip(x) {
            row[feature] = orig[feature];
        }
        *drop = total / n_repeats as f64;
    }
    Ok(drops)
}

/// Average prediction with `feature` forced to each grid value.
pub fn partial_dependence<M: Regressor + ?Sized>(
    model: &M,
    feature: usize,
    grid: &[f64],
    background: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if background.is_empty() {
        return Err(Error::Empty("partial dependence background"));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("partial dependence grid needs >= 2 points".into()));
    }
    if feature >= model.n_features() {
        return Err(Error::InvalidArgument(format!(
            "feature {feature} out of range for {} features",
            model.n_features()
        )));
    }
    let mut row_buf = vec![0.0; model.n_features()];
    grid.iter()
        .map(|&v| {
            let mut total = 0.0;
            for row in background {
                check_dim(row_buf.len(), row.len())?;
                row_buf.copy_from_slice(row);
                row_buf[feature] = v;
                total += model.predict_row(&row_buf)?;
            }
            Ok(total / background.len() as f64)
        })
        .collect()
}

/// Evenly spaced grid between the observed minimum and maximum of a column.
pub fn linear_grid(column: impl Iterator<Item = f64>, points: usize) -> Vec<f64> {
    let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || points < 2 {
        return vec![];
    }
    if lo == hi {
        return vec![lo, hi];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub output: String,
    pub split_gain: Vec<RankedFeature>,
    pub permutation: Vec<RankedFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub k: usize,
    pub rows: Vec<ImportanceRow>,
}

/// Per output, the top-`k` features under both importance methods.
pub fn top_k_importance_report(
    split_gain: &[Vec<f64>],
    permutation: &[Vec<f64>],
    schema: &FeatureSchema,
    output_names: &[String],
    k: usize,
) -> Result<ImportanceTable> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    check_dim(output_names.len(), split_gain.len())?;
    check_dim(output_names.len(), permutation.len())?;
    let rank = |scores: &[f64]| -> Result<Vec<RankedFeature>> {
        check_dim(schema.len(), scores.len())?;
        Ok(top_k_indices(scores, k)
            .into_iter()
            .map(|i| RankedFeature {
                index: i,
                name: schema.name(i).to_string(),
                score: scores[i],
            })
            .collect())
    };
    let rows = output_names
        .iter()
        .zip(split_gain.iter().zip(permutation))
        .map(|(name, (fi, pi))| {
            Ok(ImportanceRow {
                output: name.clone(),
                split_gain: rank(fi)?,
                permutation: rank(pi)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ImportanceTable { k, rows })
}

impl ImportanceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("output,method,rank,feature,score\n");
        for row in &self.rows {
            for (method, list) in [("split_gain", &row.split_gain), ("permutation", &row.permutation)]
            {
                for (rank, f) in list.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        row.output,
                        method,
                        rank + 1,
                        f.name,
                        f.score
                    ));
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let names = |l: &[RankedFeature]| {
                l.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", ")
            };
            out.push_str(&format!(
                "{:<14} split-gain: {:<50} permutation: {}\n",
                row.output,
                names(&row.split_gain),
                names(&row.permutation)
            ));
        }
        out
    }
}

/// Fraction of rows on which both score vectors share the same argmax.
pub fn argmax_agreement(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Empty("importance matrices"));
    }
    let agree = a
        .iter()
        .zip(b)
        .filter(|(x, y)| top_k_indices(x, 1) == top_k_indices(y, 1))
        .count();
    Ok(agree as f64 / a.len() as f64)
}
