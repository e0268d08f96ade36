//! Evaluation artifacts: R² tables, ratio sweeps, importance heatmaps,
//! additive-term exports, explanation dumps and run manifests.
//!
//! Every writer is a pure function of its inputs and formats floats with
//! `Display` (shortest round-trip), so regenerating from the same runs gives
//! identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distill::Ratio;
use crate::ebm::EbmModel;
use crate::envs::Gait;
use crate::error::{check_dim, Error, Result};
use crate::model::{DistilledPolicy, PolicyModel};
use crate::types::PolicyFamily;

/// Tolerated reward deviation from the expert baseline, as a fraction of it.
pub const FLATNESS_TOLERANCE: f64 = 0.10;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// ---------------------------------------------------------------- R² table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Cell {
    pub family: PolicyFamily,
    pub gait: Gait,
    pub seed: u64,
    pub r2: f64,
}

/// Families × gaits; each cell is the mean over seeds, `None` when no run
/// supplied it.
#[derive(Debug, Clone, PartialEq)]
pub struct R2Table {
    pub families: Vec<PolicyFamily>,
    pub gaits: Vec<Gait>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Gaits where the expected EBM ≥ GBM ≥ symbolic ordering does not hold.
    pub ordering_flags: Vec<Gait>,
}

pub fn build_r2_table(cells: &[R2Cell]) -> R2Table {
    let families = PolicyFamily::LEARNED.to_vec();
    let gaits = Gait::ALL.to_vec();
    let values: Vec<Vec<Option<f64>>> = families
        .iter()
        .map(|&f| {
            gaits
                .iter()
                .map(|&g| {
                    let v: Vec<f64> = cells.iter().filter(|c| c.family == f && c.gait == g).map(|c| c.r2).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect()
        })
        .collect();
    let ordering_flags = gaits
        .iter()
        .enumerate()
        .filter(|&(j, _)| {
            let col: Vec<Option<f64>> = values.iter().map(|row| row[j]).collect();
            // Rows are GBM, EBM, symbolic.
            match (col[0], col[1], col[2]) {
                (Some(g), Some(e), Some(s)) => !(e >= g && g >= s),
                _ => false,
            }
        })
        .map(|(_, &g)| g)
        .collect();
    R2Table {
        families,
        gaits,
        values,
        ordering_flags,
    }
}

impl R2Table {
    pub fn get(&self, family: PolicyFamily, gait: Gait) -> Option<f64> {
        let i = self.families.iter().position(|&f| f == family)?;
        let j = self.gaits.iter().position(|&g| g == gait)?;
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("family");
        for g in &self.gaits {
            let _ = write!(out, ",{g}");
        }
        out.push('\n');
        for (f, row) in self.families.iter().zip(&self.values) {
            out.push_str(f.as_str());
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10}", "R2");
        for g in &self.gaits {
            let _ = write!(out, "{:>10}", g.as_str());
        }
        out.push('\n');
        for (f, row) in self.families.iter().zip(&self.values) {
            let _ = write!(out, "{:<10}", f.as_str());
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(out, "{v:>10.4}");
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        for g in &self.ordering_flags {
            let _ = writeln!(out, "note: {g}: expected ordering ebm >= gbm >= symbolic does not hold");
        }
        out
    }
}

// ------------------------------------------------------------- ratio sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub family: PolicyFamily,
    pub gait: Gait,
    pub ratio: String,
    pub seed: u64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub family: PolicyFamily,
    pub gait: Gait,
    /// (ratio, mean reward over seeds), in the order of the ratio grid.
    pub points: Vec<(Ratio, f64)>,
}

impl SweepCurve {
    pub fn baseline(&self) -> Option<f64> {
        self.points.iter().find(|(r, _)| *r == Ratio::ONE).map(|p| p.1)
    }

    /// Largest |reward − baseline| / |baseline| over the curve.
    pub fn max_relative_deviation(&self) -> Option<f64> {
        let b = self.baseline()?;
        if b == 0.0 {
            return None;
        }
        Some(self.points.iter().map(|(_, v)| (v - b).abs() / b.abs()).fold(0.0, f64::max))
    }

    pub fn is_flat(&self) -> bool {
        self.max_relative_deviation().is_some_and(|d| d <= FLATNESS_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSweep {
    pub ratios: Vec<Ratio>,
    pub curves: Vec<SweepCurve>,
}

pub fn build_ratio_sweep(cells: &[SweepCell], ratios: &[Ratio]) -> Result<RatioSweep> {
    if !ratios.contains(&Ratio::Zero) || !ratios.contains(&Ratio::ONE) {
        return Err(Error::InvalidArgument("sweep grid must include the ratios 0 and 1".into()));
    }
    let mut grouped: BTreeMap<(PolicyFamily, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let gait_index = |g: Gait| Gait::ALL.iter().position(|&x| x == g).expect("known gait");
    for c in cells {
        let r: Ratio = c.ratio.parse()?;
        let Some(k) = ratios.iter().position(|&x| x == r) else {
            continue;
        };
        grouped
            .entry((c.family, gait_index(c.gait)))
            .or_default()
            .entry(k)
            .or_default()
            .push(c.mean_reward);
    }
    let curves = grouped
        .into_iter()
        .map(|((family, g), by_ratio)| SweepCurve {
            family,
            gait: Gait::ALL[g],
            points: by_ratio
                .into_iter()
                .map(|(k, v)| (ratios[k], v.iter().sum::<f64>() / v.len() as f64))
                .collect(),
        })
        .collect();
    Ok(RatioSweep {
        ratios: ratios.to_vec(),
        curves,
    })
}

impl RatioSweep {
    pub fn curve(&self, family: PolicyFamily, gait: Gait) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.family == family && c.gait == gait)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,gait,ratio,ratio_value,mean_reward,relative_to_expert\n");
        for c in &self.curves {
            let b = c.baseline();
            for (r, v) in &c.points {
                let rel = b.filter(|b| *b != 0.0).map(|b| (v / b).to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{},{},{}", c.family, c.gait, r, r.value(), v, rel);
            }
        }
        out
    }

    /// One panel per gait; x axis is the ratio grid position, y is reward.
    pub fn to_svg(&self) -> String {
        let gaits: Vec<Gait> = Gait::ALL.iter().copied().filter(|g| self.curves.iter().any(|c| c.gait == *g)).collect();
        let (pw, ph, pad) = (320.0, 220.0, 40.0);
        let width = pad + gaits.len().max(1) as f64 * (pw + pad);
        let height = ph + 2.5 * pad;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
        );
        let colours = [("gbm", "#1f77b4"), ("ebm", "#2ca02c"), ("symbolic", "#d62728"), ("expert", "#555555")];
        let colour = |f: &str| colours.iter().find(|c| c.0 == f).map_or("#000000", |c| c.1);
        let n = self.ratios.len().max(2) as f64 - 1.0;
        for (p, gait) in gaits.iter().enumerate() {
            let x0 = pad + p as f64 * (pw + pad);
            let y0 = pad;
            let curves: Vec<&SweepCurve> = self.curves.iter().filter(|c| c.gait == *gait).collect();
            let values = curves.iter().flat_map(|c| c.points.iter().map(|p| p.1));
            let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
            let sx = |k: usize| x0 + pw * k as f64 / n;
            let sy = |v: f64| y0 + ph * (1.0 - (v - lo) / (hi - lo));
            let _ = writeln!(
                svg,
                "<rect x=\"{x0}\" y=\"{y0}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#999\"/>\n<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{gait}</text>",
                x0 + pw / 2.0,
                y0 - 8.0
            );
            for (k, r) in self.ratios.iter().enumerate() {
                let _ = writeln!(
                    svg,
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{r}</text>",
                    sx(k),
                    y0 + ph + 14.0
                );
            }
            let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\">{hi:.1}</text>", x0 + 2.0, y0 + 11.0);
            let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\">{lo:.1}</text>", x0 + 2.0, y0 + ph - 3.0);
            if let Some(b) = curves.iter().find_map(|c| c.baseline()) {
                let _ = writeln!(
                    svg,
                    "<line x1=\"{x0}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"{}\" stroke-dasharray=\"4 3\"/>",
                    sy(b),
                    x0 + pw,
                    sy(b),
                    colour("expert")
                );
            }
            for c in &curves {
                let pts: Vec<String> = c
                    .points
                    .iter()
                    .map(|(r, v)| {
                        let k = self.ratios.iter().position(|x| x == r).expect("grid ratio");
                        format!("{:.2},{:.2}", sx(k), sy(*v))
                    })
                    .collect();
                let _ = writeln!(
                    svg,
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
                    colour(c.family.as_str()),
                    pts.join(" ")
                );
            }
        }
        for (i, (name, col)) in colours.iter().enumerate() {
            let x = pad + i as f64 * 90.0;
            let y = height - 10.0;
            let _ = writeln!(svg, "<text x=\"{x}\" y=\"{y}\" fill=\"{col}\">{name}</text>");
        }
        svg.push_str("</svg>\n");
        svg
    }
}

// ------------------------------------------------------------------ heatmaps

/// Outputs × features score matrix with labelled axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub method: String,
    pub row_names: Vec<String>,
    pub column_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn new(method: &str, row_names: Vec<String>, column_names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(row_names.len(), values.len())?;
        for row in &values {
            check_dim(column_names.len(), row.len())?;
        }
        Ok(Self {
            method: method.to_string(),
            row_names,
            column_names,
            values,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("output");
        for c in &self.column_names {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (name, row) in self.row_names.iter().zip(&self.values) {
            out.push_str(&csv_field(name));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(method: &str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.is_empty() {
            return Err(Error::Parse("heatmap csv has no header".into()));
        }
        let column_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut row_names = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            row_names.push(rec[0].to_string());
            values.push(
                rec.iter()
                    .skip(1)
                    .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad heatmap value '{s}'"))))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        Self::new(method, row_names, column_names, values)
    }

    /// Each row is shaded relative to its own maximum, so the brightest cell
    /// of a row marks that output's top feature.
    pub fn to_svg(&self) -> String {
        let (cell, left, top) = (22.0, 150.0, 130.0);
        let width = left + cell * self.column_names.len() as f64 + 20.0;
        let height = top + cell * self.row_names.len() as f64 + 20.0;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n<text x=\"4\" y=\"14\">{}</text>\n",
            xml_escape(&self.method)
        );
        for (j, c) in self.column_names.iter().enumerate() {
            let x = left + cell * (j as f64 + 0.5);
            let _ = writeln!(
                svg,
                "<text transform=\"translate({x:.1},{:.1}) rotate(-60)\">{}</text>",
                top - 4.0,
                xml_escape(c)
            );
        }
        for (i, (name, row)) in self.row_names.iter().zip(&self.values).enumerate() {
            let y = top + cell * i as f64;
            let _ = writeln!(svg, "<text x=\"4\" y=\"{:.1}\">{}</text>", y + cell * 0.7, xml_escape(name));
            let max = row.iter().copied().fold(0.0, f64::max);
            for (j, v) in row.iter().enumerate() {
                let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
                let shade = (255.0 * (1.0 - t)).round() as u8;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"#ff{shade:02x}{shade:02x}\" stroke=\"#ddd\"><title>{v}</title></rect>",
                    left + cell * j as f64
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

// --------------------------------------------------------------- EBM terms

/// Shape functions and pair tables as long-format CSV.
pub fn ebm_terms_csv(model: &EbmModel, output: &str) -> String {
    let mut out = String::from("output,term,bin_a,lower_a,upper_a,bin_b,lower_b,upper_b,value\n");
    let _ = writeln!(out, "{},intercept,,,,,,,{}", csv_field(output), model.intercept);
    for f in 0..model.terms.len() {
        for (b, (lo, hi, v)) in model.shape_function(f).into_iter().enumerate() {
            let _ = writeln!(out, "{},{},{b},{lo},{hi},,,,{v}", csv_field(output), csv_field(&model.feature_names[f]));
        }
    }
    for pair in &model.pairs {
        let (a, b) = pair.features;
        let name = format!("{} & {}", model.feature_names[a], model.feature_names[b]);
        let edges = |cuts: &[f64]| -> Vec<(f64, f64)> {
            let mut bounds = vec![f64::NEG_INFINITY];
            bounds.extend_from_slice(cuts);
            bounds.push(f64::INFINITY);
            bounds.windows(2).map(|w| (w[0], w[1])).collect()
        };
        let (ea, eb) = (edges(&pair.cuts_first), edges(&pair.cuts_second));
        for (i, (la, ua)) in ea.iter().enumerate() {
            for (j, (lb, ub)) in eb.iter().enumerate() {
                let v = pair.table[i * eb.len() + j];
                let _ = writeln!(out, "{},{},{i},{la},{ua},{j},{lb},{ub},{v}", csv_field(output), csv_field(&name));
            }
        }
    }
    out
}

/// Step plot of one shape function.
/// Every output's Pareto archive, one row per (output, complexity).
pub fn symbolic_archive_csv(policy: &DistilledPolicy) -> String {
    let mut out = String::from("output,complexity,train_loss,validation_loss,expression\n");
    if let PolicyModel::Symbolic(outputs) = &policy.model {
        for (o, name) in outputs.iter().zip(&policy.action_names) {
            for e in &o.archive {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(name),
                    e.complexity,
                    e.train_loss,
                    e.validation_loss,
                    csv_field(&e.expression.to_infix(Some(&policy.feature_names)))
                );
            }
        }
    }
    out
}

pub fn shape_function_svg(model: &EbmModel, feature: usize) -> String {
    let shape = model.shape_function(feature);
    let (w, h, pad) = (360.0, 200.0, 30.0);
    let lo_x = shape.first().map_or(0.0, |s| s.0);
    let hi_x = shape.last().map_or(1.0, |s| s.1);
    let (lo_x, hi_x) = if hi_x > lo_x { (lo_x, hi_x) } else { (lo_x - 0.5, lo_x + 0.5) };
    let (lo_y, hi_y) = shape.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.2), b.max(s.2)));
    let (lo_y, hi_y) = if hi_y > lo_y { (lo_y, hi_y) } else { (lo_y - 1.0, lo_y + 1.0) };
    let sx = |x: f64| pad + w * (x - lo_x) / (hi_x - lo_x);
    let sy = |y: f64| pad + h * (1.0 - (y - lo_y) / (hi_y - lo_y));
    let pts: Vec<String> = shape
        .iter()
        .flat_map(|&(a, b, v)| [format!("{:.2},{:.2}", sx(a), sy(v)), format!("{:.2},{:.2}", sx(b), sy(v))])
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n<text x=\"{pad}\" y=\"18\">{}</text>\n<rect x=\"{pad}\" y=\"{pad}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#999\"/>\n<polyline fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"1.5\" points=\"{}\"/>\n</svg>\n",
        w + 2.0 * pad,
        h + 2.0 * pad,
        xml_escape(&model.feature_names[feature]),
        pts.join(" ")
    )
}

// ------------------------------------------------------------ explanations

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub term: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanationRecord {
    pub record: usize,
    pub output: String,
    pub intercept: f64,
    pub prediction: f64,
    pub contributions: Vec<TermValue>,
}

pub fn explain_local(model: &EbmModel, record: usize, output: &str, x: &[f64]) -> Result<LocalExplanationRecord> {
    let contributions = model
        .local_explanation(x)?
        .into_iter()
        .map(|c| TermValue {
            term: c.term,
            contribution: c.contribution,
        })
        .collect();
    Ok(LocalExplanationRecord {
        record,
        output: output.to_string(),
        intercept: model.intercept,
        prediction: model.predict(x)?,
        contributions,
    })
}

pub fn to_json_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

// ----------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to regenerate a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Resolved configuration of the command.
    pub config: serde_json::Value,
    /// Declared interpretation choices recorded alongside results.
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: Vec<u64>) -> Result<Self> {
        let value = serde_json::to_value(config)?;
        let canonical = serde_json::to_string(&value)?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: sha256_hex(format!("{command}\n{canonical}").as_bytes()),
            seeds,
            config: value,
            notes: standard_notes(),
        })
    }

    /// Short prefix of the config hash used to name run directories.
    pub fn short_hash(&self) -> &str {
        &self.config_hash[..16]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn standard_notes() -> Vec<String> {
    vec![
        "r2: uniform mean of per-output scores; constant-target outputs score 0".into(),
        "symbolic complexity: node count <= 90; operator nesting depth <= 4 within any operator subtree".into(),
        "symbolic fitness: mse * (1 + 0.001 * complexity) on a seeded subsample".into(),
        "learner refit from scratch on all aggregated data after each episode; symbolic warm-starts from the previous archive".into(),
        "test split: per-record seeded shuffle, 20%".into(),
    ]
}

/// Digest of every listed file, in the given order.
pub fn digest_files(dir: &Path, files: &[&str]) -> Result<Vec<ArtifactDigest>> {
    files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            Ok(ArtifactDigest {
                file: f.to_string(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ebm::{fit_ebm, EbmParams};

    fn cell(family: PolicyFamily, gait: Gait, seed: u64, r2: f64) -> R2Cell {
        R2Cell { family, gait, seed, r2 }
    }

    #[test]
    fn r2_table_has_three_by_four_shape_and_absent_cells() {
        let cells = vec![
            cell(PolicyFamily::Gbm, Gait::Walk, 1, 1.0),
            cell(PolicyFamily::Ebm, Gait::Walk, 1, 1.0),
            cell(PolicyFamily::Symbolic, Gait::Walk, 1, 1.0),
            cell(PolicyFamily::Gbm, Gait::Trot, 1, 0.9),
            cell(PolicyFamily::Gbm, Gait::Trot, 2, 0.8),
        ];
        let t = build_r2_table(&cells);
        assert_eq!(t.values.len(), 3);
        assert!(t.values.iter().all(|r| r.len() == 4));
        assert_eq!(t.get(PolicyFamily::Gbm, Gait::Walk), Some(1.0));
        assert!((t.get(PolicyFamily::Gbm, Gait::Trot).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(t.get(PolicyFamily::Ebm, Gait::Pace), None);
        let csv = t.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "family,walk,trot,pace,bound");
        assert_eq!(csv.lines().nth(2).unwrap(), "ebm,1,,,");
        assert!(t.ordering_flags.is_empty());
        assert!(t.to_text().contains('-'));
    }

    #[test]
    fn r2_ordering_deviation_is_flagged_not_failed() {
        let cells = vec![
            cell(PolicyFamily::Gbm, Gait::Pace, 1, 0.99),
            cell(PolicyFamily::Ebm, Gait::Pace, 1, 0.97),
            cell(PolicyFamily::Symbolic, Gait::Pace, 1, 0.6),
        ];
        let t = build_r2_table(&cells);
        assert_eq!(t.ordering_flags, vec![Gait::Pace]);
        assert!(t.to_text().contains("note: pace"));
    }

    fn sweep_cells() -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for (family, rewards) in [
            (PolicyFamily::Gbm, [95.0, 99.0, 100.0]),
            (PolicyFamily::Symbolic, [40.0, 90.0, 100.0]),
        ] {
            for (r, v) in ["0", "1/2", "1"].iter().zip(rewards) {
                cells.push(SweepCell { family, gait: Gait::Walk, ratio: r.to_string(), seed: 0, mean_reward: v });
            }
        }
        cells
    }

    #[test]
    fn sweep_curves_and_flatness() {
        let ratios = vec![Ratio::Zero, Ratio::Inverse(2), Ratio::ONE];
        let s = build_ratio_sweep(&sweep_cells(), &ratios).unwrap();
        let g = s.curve(PolicyFamily::Gbm, Gait::Walk).unwrap();
        assert_eq!(g.baseline(), Some(100.0));
        assert!((g.max_relative_deviation().unwrap() - 0.05).abs() < 1e-12);
        assert!(g.is_flat());
        assert!(!s.curve(PolicyFamily::Symbolic, Gait::Walk).unwrap().is_flat());
        let csv = s.to_csv();
        assert!(csv.contains("gbm,walk,1/2,0.5,99,0.99"));
        let svg = s.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(build_ratio_sweep(&sweep_cells(), &ratios[..2]).is_err());
    }

    #[test]
    fn heatmap_round_trips_and_one_hot_rows_have_one_bright_cell() {
        let h = Heatmap::new(
            "split_gain",
            vec!["a0".into(), "a1".into()],
            vec!["x,0".into(), "x1".into(), "x2".into()],
            vec![vec![0.0, 1.0, 0.0], vec![0.1, 0.2, 0.7]],
        )
        .unwrap();
        let back = Heatmap::from_csv("split_gain", &h.to_csv()).unwrap();
        assert_eq!(back, h);
        let one_hot = Heatmap::new("m", vec!["a".into()], vec!["x".into(), "y".into()], vec![vec![0.0, 1.0]]).unwrap();
        let svg = one_hot.to_svg();
        assert_eq!(svg.matches("fill=\"#ff0000\"").count(), 1);
        assert_eq!(svg.matches("fill=\"#ffffff\"").count(), 1);
        assert!(Heatmap::new("m", vec!["a".into()], vec!["x".into()], vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ebm_exports_and_local_records_are_consistent() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 4) as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - r[1]).collect();
        let names = vec!["p".to_string(), "q".to_string()];
        let m = fit_ebm(&x, &y, &names, &EbmParams { rounds: 50, ..EbmParams::default() }).unwrap();
        let csv = ebm_terms_csv(&m, "a0");
        assert!(csv.lines().nth(1).unwrap().starts_with("a0,intercept"));
        let rows = 1 + m.terms.iter().map(Vec::len).sum::<usize>() + m.pairs.iter().map(|p| p.table.len()).sum::<usize>();
        assert_eq!(csv.lines().count(), rows + 1);
        let rec = explain_local(&m, 3, "a0", &x[3]).unwrap();
        let total: f64 = rec.intercept + rec.contributions.iter().map(|c| c.contribution).sum::<f64>();
        assert!((total - rec.prediction).abs() < 1e-12);
        let lines = to_json_lines(&[rec.clone(), rec]).unwrap();
        assert_eq!(lines.lines().count(), 2);
        assert!(shape_function_svg(&m, 0).contains("<polyline"));
    }

    #[test]
    fn manifest_hash_tracks_config_and_command() {
        #[derive(Serialize)]
        struct C {
            a: u32,
        }
        let m1 = RunManifest::new("distill", &C { a: 1 }, vec![1]).unwrap();
        let m2 = RunManifest::new("distill", &C { a: 1 }, vec![1]).unwrap();
        let m3 = RunManifest::new("distill", &C { a: 2 }, vec![1]).unwrap();
        let m4 = RunManifest::new("sweep", &C { a: 1 }, vec![1]).unwrap();
        assert_eq!(m1, m2);
        assert_ne!(m1.config_hash, m3.config_hash);
        assert_ne!(m1.config_hash, m4.config_hash);
        assert_eq!(m1.short_hash().len(), 16);
        let back: RunManifest = serde_json::from_str(&m1.to_json().unwrap()).unwrap();
        assert_eq!(back, m1);
    }
}
