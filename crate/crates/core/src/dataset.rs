//! Labelled transitions and the aggregated supervised dataset.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::{Action, Actor, FeatureSchema, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: Observation,
    pub executed_action: Action,
    /// Expert output at `state`, whoever acted.
    pub expert_label: Action,
    pub reward: f64,
    pub step_index: usize,
    pub episode_index: usize,
    pub actor: Actor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDataset {
    records: Vec<TransitionRecord>,
    schema: FeatureSchema,
    action_names: Vec<String>,
    partition: Option<Vec<Partition>>,
}

impl AggregatedDataset {
    pub fn new(schema: FeatureSchema, action_names: Vec<String>) -> Result<Self> {
        if action_names.is_empty() {
            return Err(Error::Empty("action names"));
        }
        Ok(Self {
            records: Vec::new(),
            schema,
            action_names,
            partition: None,
        })
    }

    /// Appends a record. Any existing partition is discarded.
    pub fn push(&mut self, record: TransitionRecord) -> Result<()> {
        check_dim(self.schema.len(), record.state.len())?;
        check_dim(self.action_names.len(), record.expert_label.len())?;
        check_dim(self.action_names.len(), record.executed_action.len())?;
        self.partition = None;
        self.records.push(record);
        Ok(())
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = TransitionRecord>) -> Result<()> {
        for r in records {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn partition(&self) -> Option<&[Partition]> {
        self.partition.as_deref()
    }

    /// Assigns a seeded per-record train/test partition. The test side holds
    /// `ceil(n * test_fraction)` records.
    pub fn split_train_test(&mut self, test_fraction: f64, seed: u64) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let n = self.records.len();
        // Guard against 0.2 * 10 landing a hair above 2.
        let n_test = ((n as f64 * test_fraction - 1e-9).ceil() as usize).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut partition = vec![Partition::Train; n];
        for &i in &order[..n_test] {
            partition[i] = Partition::Test;
        }
        self.partition = Some(partition);
        Ok(())
    }

    fn indices(&self, which: Partition) -> Vec<usize> {
        match &self.partition {
            Some(p) => (0..self.records.len()).filter(|&i| p[i] == which).collect(),
            None if which == Partition::Train => (0..self.records.len()).collect(),
            None => Vec::new(),
        }
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Partition::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Partition::Test)
    }

    pub fn features(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| self.records[i].state.as_slice().to_vec())
            .collect()
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| self.records[i].expert_label.as_slice().to_vec())
            .collect()
    }

    /// Column `output` of the expert labels at `indices`.
    pub fn label_column(&self, indices: &[usize], output: usize) -> Vec<f64> {
        indices
            .iter()
            .map(|&i| self.records[i].expert_label.as_slice()[output])
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut header: Vec<String> = self.schema.names().to_vec();
        header.extend(self.action_names.iter().cloned());
        header.extend(["reward", "step", "episode", "actor"].map(String::from));
        header
    }

    /// Writes the dataset as CSV: feature columns, expert-label columns, then
    /// reward, step, episode and actor.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        let mut row: Vec<String> = Vec::with_capacity(self.header().len());
        for r in &self.records {
            row.clear();
            row.extend(r.state.as_slice().iter().map(|v| v.to_string()));
            row.extend(r.expert_label.as_slice().iter().map(|v| v.to_string()));
            row.push(r.reward.to_string());
            row.push(r.step_index.to_string());
            row.push(r.episode_index.to_string());
            row.push(r.actor.as_str().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a dataset written by [`write_csv`](Self::write_csv). The number
    /// of features is given by `schema`; executed actions are not stored and
    /// are reconstructed from the labels for expert-actor rows only (distilled
    /// rows get the label as a stand-in).
    pub fn read_csv<R: Read>(reader: R, schema: FeatureSchema) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let d = schema.len();
        if header.len() < d + 5 {
            return Err(Error::Parse("dataset header too short".into()));
        }
        if header[..d] != *schema.names() {
            return Err(Error::Parse("dataset header does not match schema".into()));
        }
        let m = header.len() - d - 4;
        let tail = &header[d + m..];
        if tail != ["reward", "step", "episode", "actor"] {
            return Err(Error::Parse(format!("unexpected trailing columns {tail:?}")));
        }
        let action_names = header[d..d + m].to_vec();
        let mut ds = Self::new(schema, action_names)?;
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
        };
        for rec in rdr.records() {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().collect();
            check_dim(header.len(), fields.len())?;
            let state = Observation::new(
                fields[..d].iter().map(|s| parse(s)).collect::<Result<_>>()?,
            )?;
            let label = Action::new(
                fields[d..d + m]
                    .iter()
                    .map(|s| parse(s))
                    .collect::<Result<_>>()?,
            )?;
            let int = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
            };
            ds.push(TransitionRecord {
                state,
                executed_action: label.clone(),
                expert_label: label,
                reward: parse(fields[d + m])?,
                step_index: int(fields[d + m + 1])?,
                episode_index: int(fields[d + m + 2])?,
                actor: fields[d + m + 3].parse()?,
            })?;
        }
        Ok(ds)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path, schema: FeatureSchema) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), schema)
    }
}
