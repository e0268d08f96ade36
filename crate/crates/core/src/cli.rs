//! Command-line frontend. Every command resolves its configuration, writes a
//! manifest into a directory named after the configuration hash, produces
//! its artifacts and finally drops a `COMPLETE` marker. A completed
//! directory is never modified; rerunning the same command returns it.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::AggregatedDataset;
use crate::distill::{
    parse_ratios, rollout_with_ratio, run_distillation, write_episode_log, DistillationConfig,
    Ratio,
};
use crate::envs::{feature_schema, GaitExpert, Gait, PhaseGaitEnv};
use crate::error::{Error, Result};
use crate::importance::{linear_grid, partial_dependence, permutation_importance, top_k_importance_report};
use crate::metrics::r2_score;
use crate::model::{DistilledPolicy, PolicyModel};
use crate::report::{
    build_r2_table, build_ratio_sweep, digest_files, ebm_terms_csv, symbolic_archive_csv, explain_local, shape_function_svg,
    to_json_lines, write_text, Heatmap, R2Cell, RunManifest, SweepCell,
};
use crate::types::{Policy, PolicyFamily};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPLETE_FILE: &str = "COMPLETE";
pub const MODEL_FILE: &str = "model.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const EPISODES_FILE: &str = "episodes.csv";

#[derive(Debug, Parser)]
#[command(name = "policy-distill", version, about = "Distil control policies into interpretable models")]
pub struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, env = "POLICY_DISTILL_OUT", default_value = "runs")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the alternation-curriculum distillation for one gait and family.
    Distill(DistillArgs),
    /// Score a distilled run: held-out R² and reward across alternation ratios.
    Evaluate(EvaluateArgs),
    /// Train (or reuse) runs over a grid and build the R² table and ratio curves.
    Sweep(SweepArgs),
    /// Explain a model: EBM local terms, GBM partial dependence or symbolic text.
    Explain(ExplainArgs),
    /// Importance heatmaps and top-k tables for a distilled run.
    Importance(ImportanceArgs),
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// TOML config, or a previous run's manifest.json to replay it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gait: Option<Gait>,
    #[arg(long)]
    pub family: Option<PolicyFamily>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of distillation episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Completed distill run directory.
    #[arg(long)]
    pub run: PathBuf,
    /// Comma-separated ratios: 0, 1 or 1/k.
    #[arg(long, default_value = "0,1/8,1/6,1/4,1/2,1")]
    pub ratios: String,
    /// Evaluation episodes per ratio.
    #[arg(long, default_value_t = 26)]
    pub episodes: usize,
    #[arg(long, default_value_t = 1000)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML sweep config, or a previous sweep manifest.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub gait: Vec<Gait>,
    #[arg(long, value_delimiter = ',')]
    pub family: Vec<PolicyFamily>,
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub ratios: Option<String>,
    /// Evaluation episodes per cell.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainKind {
    Local,
    Pd,
    Expression,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose header contains the model's feature names (a run's
    /// dataset.csv works). Needed for local and pd.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Defaults to the family's natural explanation.
    #[arg(long)]
    pub kind: Option<ExplainKind>,
    /// Feature name or index for partial dependence.
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub grid_points: usize,
    /// Only the first N observation rows.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<PathBuf> {
    let out = cli.out;
    match cli.command {
        Command::Distill(a) => {
            let config = resolve_distill_config(&a)?;
            distill_run(&config, &out)
        }
        Command::Evaluate(a) => evaluate_run(&a.run, &parse_ratios(&a.ratios)?, a.episodes, a.seed, &out),
        Command::Sweep(a) => {
            let config = resolve_sweep_config(&a)?;
            sweep(&config, &out)
        }
        Command::Explain(a) => explain(&a, &out),
        Command::Importance(a) => importance(&a.run, a.k, a.repeats, a.seed, &out),
    }
}

// ------------------------------------------------------------ run directories

fn is_complete(dir: &Path, manifest: &RunManifest) -> Result<bool> {
    if !dir.join(COMPLETE_FILE).exists() {
        return Ok(false);
    }
    let existing = RunManifest::load(&dir.join(MANIFEST_FILE))?;
    if existing.config_hash != manifest.config_hash {
        return Err(Error::Config(format!(
            "{} holds a different run (hash {})",
            dir.display(),
            existing.config_hash
        )));
    }
    Ok(true)
}

/// Creates (or resumes) a run directory and writes its manifest first.
fn begin(dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(MANIFEST_FILE), &manifest.to_json()?)
}

fn finish(dir: &Path, files: &[&str]) -> Result<()> {
    let digests = digest_files(dir, files)?;
    write_text(&dir.join(COMPLETE_FILE), &(serde_json::to_string_pretty(&digests)? + "\n"))
}

fn manifest_config<T: for<'de> Deserialize<'de>>(path: &Path, command: &str) -> Result<T> {
    let m = RunManifest::load(path)?;
    if m.command != command {
        return Err(Error::Config(format!("{} is a '{}' manifest, not '{command}'", path.display(), m.command)));
    }
    serde_json::from_value(m.config).map_err(|e| Error::Config(e.to_string()))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

// ------------------------------------------------------------------- distill

pub fn resolve_distill_config(a: &DistillArgs) -> Result<DistillationConfig> {
    let mut c = match &a.config {
        Some(p) if is_json(p) => manifest_config(p, "distill")?,
        Some(p) => DistillationConfig::load(p)?,
        None => DistillationConfig::default(),
    };
    if let Some(g) = a.gait {
        c.gait = g;
    }
    if let Some(f) = a.family {
        c.family = f;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(e) = a.episodes {
        c.max_episodes = e;
    }
    c.validate()?;
    Ok(c)
}

pub fn distill_dir(config: &DistillationConfig, out: &Path) -> Result<PathBuf> {
    let m = RunManifest::new("distill", config, vec![config.seed])?;
    Ok(out.join(format!("distill-{}-{}-s{}-{}", config.gait, config.family, config.seed, m.short_hash())))
}

/// Runs one distillation into its content-addressed directory, or returns
/// the directory untouched if that run already completed.
pub fn distill_run(config: &DistillationConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    let manifest = RunManifest::new("distill", config, vec![config.seed])?;
    let dir = distill_dir(config, out)?;
    if is_complete(&dir, &manifest)? {
        log::info!("{} already complete", dir.display());
        return Ok(dir);
    }
    begin(&dir, &manifest)?;
    let params = config.env_params();
    let mut env = PhaseGaitEnv::new(config.gait, params)?;
    let expert = GaitExpert::with_gains(config.gait, params, config.expert);
    let outcome = run_distillation(&mut env, &expert, config)?;
    outcome.policy.save(&dir.join(MODEL_FILE))?;
    outcome.dataset.save_csv(&dir.join(DATASET_FILE))?;
    let mut buf = Vec::new();
    write_episode_log(&outcome.log, &mut buf)?;
    std::fs::write(dir.join(EPISODES_FILE), buf).map_err(|e| Error::io(dir.join(EPISODES_FILE), e))?;
    finish(&dir, &[MANIFEST_FILE, MODEL_FILE, DATASET_FILE, EPISODES_FILE])?;
    Ok(dir)
}

/// A completed distill run loaded back from disk.
pub struct LoadedRun {
    pub config: DistillationConfig,
    pub policy: DistilledPolicy,
    pub dataset: AggregatedDataset,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    if !dir.join(COMPLETE_FILE).exists() {
        return Err(Error::InvalidArgument(format!("{} is not a completed run", dir.display())));
    }
    let config: DistillationConfig = manifest_config(&dir.join(MANIFEST_FILE), "distill")?;
    let policy = DistilledPolicy::load(&dir.join(MODEL_FILE))?;
    let mut dataset = AggregatedDataset::load_csv(&dir.join(DATASET_FILE), feature_schema())?;
    // The partition is not stored; the last refit's split is reproducible.
    dataset.split_train_test(config.test_fraction, crate::distill::final_split_seed(&config))?;
    Ok(LoadedRun { config, policy, dataset })
}

pub fn held_out_r2(policy: &dyn Policy, dataset: &AggregatedDataset) -> Result<f64> {
    let idx = dataset.test_indices();
    let preds = idx
        .iter()
        .map(|&i| Ok(policy.act(&dataset.records()[i].state)?.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    Ok(r2_score(&preds, &dataset.labels(&idx))?.score)
}

// ------------------------------------------------------------------ evaluate

#[derive(Debug, Clone, Serialize)]
struct EvaluateConfig<'a> {
    run_hash: &'a str,
    ratios: Vec<String>,
    episodes: usize,
    seed: u64,
}

pub fn evaluate_run(run: &Path, ratios: &[Ratio], episodes: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    let loaded = load_run(run)?;
    let run_manifest = RunManifest::load(&run.join(MANIFEST_FILE))?;
    let cfg = EvaluateConfig {
        run_hash: &run_manifest.config_hash,
        ratios: ratios.iter().map(Ratio::to_string).collect(),
        episodes,
        seed,
    };
    let manifest = RunManifest::new("evaluate", &cfg, vec![loaded.config.seed, seed])?;
    let dir = out.join(format!("evaluate-{}", manifest.short_hash()));
    if is_complete(&dir, &manifest)? {
        return Ok(dir);
    }
    begin(&dir, &manifest)?;
    let r2 = held_out_r2(&loaded.policy, &loaded.dataset)?;
    write_text(&dir.join("r2.csv"), &format!("gait,family,seed,test_r2\n{},{},{},{r2}\n", loaded.config.gait, loaded.config.family, loaded.config.seed))?;
    let params = loaded.config.env_params();
    let mut env = PhaseGaitEnv::new(loaded.config.gait, params)?;
    let expert = GaitExpert::with_gains(loaded.config.gait, params, loaded.config.expert);
    let mut csv = String::from("ratio,ratio_value,mean_reward\n");
    for &r in ratios {
        let s = rollout_with_ratio(&mut env, &expert, &loaded.policy, r, episodes, &loaded.config.commands, seed)?;
        csv.push_str(&format!("{r},{},{}\n", r.value(), s.mean_reward));
    }
    write_text(&dir.join("ratio_rewards.csv"), &csv)?;
    finish(&dir, &[MANIFEST_FILE, "r2.csv", "ratio_rewards.csv"])?;
    Ok(dir)
}

// --------------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub base: DistillationConfig,
    pub gaits: Vec<Gait>,
    pub families: Vec<PolicyFamily>,
    pub seeds: Vec<u64>,
    pub ratios: Vec<String>,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: DistillationConfig::default(),
            gaits: Gait::ALL.to_vec(),
            families: PolicyFamily::LEARNED.to_vec(),
            seeds: vec![1, 2, 3],
            ratios: Ratio::default_grid().iter().map(Ratio::to_string).collect(),
            eval_episodes: 26,
            eval_seed: 1000,
        }
    }
}

impl SweepConfig {
    pub fn ratio_grid(&self) -> Result<Vec<Ratio>> {
        self.ratios.iter().map(|r| r.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaits.is_empty() || self.families.is_empty() || self.seeds.is_empty() || self.ratios.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        let grid = self.ratio_grid()?;
        if !grid.contains(&Ratio::Zero) || !grid.contains(&Ratio::ONE) {
            return Err(Error::Config("sweep ratios must include 0 and 1".into()));
        }
        self.base.validate()
    }
}

pub fn resolve_sweep_config(a: &SweepArgs) -> Result<SweepConfig> {
    let mut c: SweepConfig = match &a.config {
        Some(p) if is_json(p) => manifest_config(p, "sweep")?,
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?
        }
        None => SweepConfig::default(),
    };
    if !a.gait.is_empty() {
        c.gaits = a.gait.clone();
    }
    if !a.family.is_empty() {
        c.families = a.family.clone();
    }
    if !a.seed.is_empty() {
        c.seeds = a.seed.clone();
    }
    if let Some(r) = &a.ratios {
        c.ratios = parse_ratios(r)?.iter().map(Ratio::to_string).collect();
    }
    if let Some(e) = a.episodes {
        c.eval_episodes = e;
    }
    c.validate()?;
    Ok(c)
}

/// Trains or reuses every (family, gait, seed) run, then writes the R²
/// table and ratio-sweep bundle.
pub fn sweep(config: &SweepConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    let manifest = RunManifest::new("sweep", config, config.seeds.clone())?;
    let dir = out.join(format!("sweep-{}", manifest.short_hash()));
    if is_complete(&dir, &manifest)? {
        return Ok(dir);
    }
    begin(&dir, &manifest)?;
    let ratios = config.ratio_grid()?;
    let mut r2_cells = Vec::new();
    let mut sweep_cells = Vec::new();
    for &family in &config.families {
        for &gait in &config.gaits {
            for &seed in &config.seeds {
                let run_config = DistillationConfig {
                    gait,
                    family,
                    seed,
                    ..config.base.clone()
                };
                let run_dir = match distill_run(&run_config, out) {
                    Ok(d) => d,
                    Err(e) => {
                        log::warn!("sweep cell {family}/{gait}/{seed} skipped: {e}");
                        continue;
                    }
                };
                let loaded = load_run(&run_dir)?;
                r2_cells.push(R2Cell {
                    family,
                    gait,
                    seed,
                    r2: held_out_r2(&loaded.policy, &loaded.dataset)?,
                });
                let params = run_config.env_params();
                let mut env = PhaseGaitEnv::new(gait, params)?;
                let expert = GaitExpert::with_gains(gait, params, run_config.expert);
                for &r in &ratios {
                    let s = rollout_with_ratio(
                        &mut env,
                        &expert,
                        &loaded.policy,
                        r,
                        config.eval_episodes,
                        &run_config.commands,
                        config.eval_seed,
                    )?;
                    sweep_cells.push(SweepCell {
                        family,
                        gait,
                        ratio: r.to_string(),
                        seed,
                        mean_reward: s.mean_reward,
                    });
                }
            }
        }
    }
    let table = build_r2_table(&r2_cells);
    let sweep = build_ratio_sweep(&sweep_cells, &ratios)?;
    let mut cells_csv = String::from("family,gait,seed,ratio,mean_reward\n");
    for c in &sweep_cells {
        cells_csv.push_str(&format!("{},{},{},{},{}\n", c.family, c.gait, c.seed, c.ratio, c.mean_reward));
    }
    let mut r2_csv = String::from("family,gait,seed,test_r2\n");
    for c in &r2_cells {
        r2_csv.push_str(&format!("{},{},{},{}\n", c.family, c.gait, c.seed, c.r2));
    }
    let mut flat = String::from("family,gait,max_relative_deviation,flat\n");
    for c in &sweep.curves {
        let d = c.max_relative_deviation().map(|d| d.to_string()).unwrap_or_default();
        flat.push_str(&format!("{},{},{d},{}\n", c.family, c.gait, c.is_flat()));
    }
    write_text(&dir.join("r2_table.csv"), &table.to_csv())?;
    write_text(&dir.join("r2_table.txt"), &table.to_text())?;
    write_text(&dir.join("r2_cells.csv"), &r2_csv)?;
    write_text(&dir.join("ratio_sweep.csv"), &sweep.to_csv())?;
    write_text(&dir.join("ratio_cells.csv"), &cells_csv)?;
    write_text(&dir.join("flatness.csv"), &flat)?;
    write_text(&dir.join("ratio_sweep.svg"), &sweep.to_svg())?;
    finish(
        &dir,
        &[
            MANIFEST_FILE,
            "r2_table.csv",
            "r2_table.txt",
            "r2_cells.csv",
            "ratio_sweep.csv",
            "ratio_cells.csv",
            "flatness.csv",
            "ratio_sweep.svg",
        ],
    )?;
    Ok(dir)
}

// ------------------------------------------------------------------- explain

/// Reads the model's feature columns, by name, from a headed CSV.
pub fn read_observations(path: &Path, feature_names: &[String], limit: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    let columns: Vec<usize> = feature_names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Parse(format!("{} lacks column '{n}'", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        if limit.is_some_and(|l| rows.len() >= l) {
            break;
        }
        let rec = rec?;
        rows.push(
            columns
                .iter()
                .map(|&c| rec[c].parse::<f64>().map_err(|_| Error::Parse(format!("bad value '{}'", &rec[c]))))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::Empty("observations"));
    }
    Ok(rows)
}

const SUPPORTED_EXPLANATIONS: &str = "ebm+local, gbm+pd, symbolic+expression";

#[derive(Debug, Serialize)]
struct ExplainConfig {
    model_sha256: String,
    observations_sha256: Option<String>,
    kind: ExplainKind,
    feature: Option<String>,
    grid_points: usize,
    limit: Option<usize>,
}

pub fn explain(a: &ExplainArgs, out: &Path) -> Result<PathBuf> {
    let policy = DistilledPolicy::load(&a.model)?;
    let family = policy.family();
    let kind = a.kind.unwrap_or(match family {
        PolicyFamily::Ebm => ExplainKind::Local,
        PolicyFamily::Gbm => ExplainKind::Pd,
        _ => ExplainKind::Expression,
    });
    let supported = matches!(
        (family, kind),
        (PolicyFamily::Ebm, ExplainKind::Local) | (PolicyFamily::Gbm, ExplainKind::Pd) | (PolicyFamily::Symbolic, ExplainKind::Expression)
    );
    if !supported {
        return Err(Error::Unsupported(format!(
            "{family} models do not support {kind:?} explanations; supported pairs: {SUPPORTED_EXPLANATIONS}"
        )));
    }
    let file_hash = |p: &Path| -> Result<String> {
        Ok(crate::report::sha256_hex(&std::fs::read(p).map_err(|e| Error::io(p, e))?))
    };
    let cfg = ExplainConfig {
        model_sha256: file_hash(&a.model)?,
        observations_sha256: a.observations.as_deref().map(file_hash).transpose()?,
        kind,
        feature: a.feature.clone(),
        grid_points: a.grid_points,
        limit: a.limit,
    };
    let manifest = RunManifest::new("explain", &cfg, vec![])?;
    let dir = out.join(format!("explain-{}", manifest.short_hash()));
    if is_complete(&dir, &manifest)? {
        return Ok(dir);
    }
    let need_obs = || -> Result<Vec<Vec<f64>>> {
        let p = a
            .observations
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--observations is required for this explanation".into()))?;
        read_observations(p, &policy.feature_names, a.limit)
    };
    let files: Vec<(&str, String)> = match (&policy.model, kind) {
        (PolicyModel::Ebm(models), ExplainKind::Local) => {
            let obs = need_obs()?;
            let mut records = Vec::new();
            for (i, x) in obs.iter().enumerate() {
                for (m, name) in models.iter().zip(&policy.action_names) {
                    records.push(explain_local(m, i, name, x)?);
                }
            }
            vec![("explanations.jsonl", to_json_lines(&records)?)]
        }
        (PolicyModel::Gbm(models), ExplainKind::Pd) => {
            let obs = need_obs()?;
            let spec = a
                .feature
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("--feature is required for partial dependence".into()))?;
            let feature = policy
                .feature_names
                .iter()
                .position(|n| n == spec)
                .or_else(|| spec.parse::<usize>().ok().filter(|&i| i < policy.feature_names.len()))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown feature '{spec}'")))?;
            let grid = linear_grid(obs.iter().map(|r| r[feature]), a.grid_points);
            let mut csv = String::from("output,feature,value,partial_dependence\n");
            for (m, name) in models.iter().zip(&policy.action_names) {
                for (v, pd) in grid.iter().zip(partial_dependence(m, feature, &grid, &obs)?) {
                    csv.push_str(&format!("{name},{},{v},{pd}\n", policy.feature_names[feature]));
                }
            }
            vec![("partial_dependence.csv", csv)]
        }
        (PolicyModel::Symbolic(outputs), ExplainKind::Expression) => {
            let mut text = String::new();
            for (o, name) in outputs.iter().zip(&policy.action_names) {
                text.push_str(&format!(
                    "{name} = {}    # complexity {}\n",
                    o.expression.to_infix(Some(&policy.feature_names)),
                    o.expression.complexity()
                ));
            }
            vec![("expressions.txt", text), ("pareto_archive.csv", symbolic_archive_csv(&policy))]
        }
        _ => unreachable!("checked above"),
    };
    begin(&dir, &manifest)?;
    for (name, body) in &files {
        write_text(&dir.join(name), body)?;
    }
    let mut names = vec![MANIFEST_FILE];
    names.extend(files.iter().map(|f| f.0));
    finish(&dir, &names)?;
    Ok(dir)
}

// ---------------------------------------------------------------- importance

#[derive(Debug, Serialize)]
struct ImportanceConfig<'a> {
    run_hash: &'a str,
    k: usize,
    repeats: usize,
    seed: u64,
}

pub fn importance(run: &Path, k: usize, repeats: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    let loaded = load_run(run)?;
    let run_manifest = RunManifest::load(&run.join(MANIFEST_FILE))?;
    let cfg = ImportanceConfig {
        run_hash: &run_manifest.config_hash,
        k,
        repeats,
        seed,
    };
    let manifest = RunManifest::new("importance", &cfg, vec![seed])?;
    let dir = out.join(format!("importance-{}", manifest.short_hash()));
    if is_complete(&dir, &manifest)? {
        return Ok(dir);
    }
    begin(&dir, &manifest)?;
    let policy = &loaded.policy;
    let test = loaded.dataset.test_indices();
    let x = loaded.dataset.features(&test);
    let mut permutation = Vec::new();
    for o in 0..policy.n_outputs() {
        let y = loaded.dataset.label_column(&test, o);
        permutation.push(permutation_importance(policy.output(o)?, &x, &y, repeats, seed)?);
    }
    let names = policy.feature_names.clone();
    let outputs = policy.action_names.clone();
    let mut files = vec![MANIFEST_FILE.to_string()];
    let mut emit = |name: String, body: String| -> Result<()> {
        write_text(&dir.join(&name), &body)?;
        files.push(name);
        Ok(())
    };
    let perm_map = Heatmap::new("permutation", outputs.clone(), names.clone(), permutation.clone())?;
    emit("permutation_importance.csv".into(), perm_map.to_csv())?;
    emit("permutation_importance.svg".into(), perm_map.to_svg())?;
    let split_gain: Option<Vec<Vec<f64>>> = match &policy.model {
        PolicyModel::Gbm(models) => Some(models.iter().map(|m| m.feature_importance().values).collect()),
        _ => None,
    };
    if let Some(sg) = &split_gain {
        let map = Heatmap::new("split_gain", outputs.clone(), names.clone(), sg.clone())?;
        emit("split_gain_importance.csv".into(), map.to_csv())?;
        emit("split_gain_importance.svg".into(), map.to_svg())?;
        let table = top_k_importance_report(sg, &permutation, loaded.dataset.schema(), &outputs, k)?;
        emit("top_k.csv".into(), table.to_csv())?;
        emit("top_k.txt".into(), table.to_text())?;
    }
    if let PolicyModel::Ebm(models) = &policy.model {
        let mut terms = String::new();
        let mut global_csv = String::from("output,term,mean_abs_contribution\n");
        for (i, (m, o)) in models.iter().zip(&outputs).enumerate() {
            let csv = ebm_terms_csv(m, o);
            terms.push_str(if i == 0 { &csv } else { csv.split_once('\n').map_or("", |s| s.1) });
            let global = m.global_importance(&x)?;
            for t in &global {
                global_csv.push_str(&format!("{o},{},{}\n", crate::report::csv_field(&t.term), t.contribution));
            }
            if let Some(f) = global.iter().find_map(|t| names.iter().position(|n| *n == t.term)) {
                emit(format!("shape_{o}_{}.svg", names[f]), shape_function_svg(m, f))?;
            }
        }
        emit("ebm_terms.csv".into(), terms)?;
        emit("ebm_global_importance.csv".into(), global_csv)?;
    }
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    finish(&dir, &refs)?;
    Ok(dir)
}
