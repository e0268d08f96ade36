use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Coefficient of determination averaged uniformly over output columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Score {
    pub score: f64,
    pub per_output: Vec<f64>,
    /// Outputs whose targets were constant; their score is defined as 0.
    pub degenerate_outputs: Vec<usize>,
}

/// R² of `predictions` against `targets`, both shaped `[n][m]`.
pub fn r2_score(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<R2Score> {
    let n = targets.len();
    check_dim(n, predictions.len())?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "r2 needs at least 2 rows, got {n}"
        )));
    }
    let m = targets[0].len();
    if m == 0 {
        return Err(Error::Empty("r2 output columns"));
    }
    for (p, t) in predictions.iter().zip(targets) {
        check_dim(m, t.len())?;
        check_dim(m, p.len())?;
    }

    let mut per_output = Vec::with_capacity(m);
    let mut degenerate_outputs = Vec::new();
    for j in 0..m {
        let mean = targets.iter().map(|t| t[j]).sum::<f64>() / n as f64;
        let ss_tot: f64 = targets.iter().map(|t| (t[j] - mean).powi(2)).sum();
        let ss_res: f64 = predictions
            .iter()
            .zip(targets)
            .map(|(p, t)| (t[j] - p[j]).powi(2))
            .sum();
        if ss_tot == 0.0 {
            log::warn!("r2: output {j} has constant targets; score defined as 0");
            degenerate_outputs.push(j);
            per_output.push(0.0);
        } else {
            per_output.push(1.0 - ss_res / ss_tot);
        }
    }
    let score = per_output.iter().sum::<f64>() / m as f64;
    Ok(R2Score {
        score,
        per_output,
        degenerate_outputs,
    })
}

/// Single-output convenience wrapper.
pub fn r2_score_1d(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    let p: Vec<Vec<f64>> = predictions.iter().map(|&v| vec![v]).collect();
    let t: Vec<Vec<f64>> = targets.iter().map(|&v| vec![v]).collect();
    Ok(r2_score(&p, &t)?.score)
}

pub fn mean_squared_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_dim(targets.len(), predictions.len())?;
    if targets.is_empty() {
        return Err(Error::Empty("mse targets"));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / targets.len() as f64)
}
