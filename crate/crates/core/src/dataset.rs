//! Datasets, CSV loading/encoding, train/test splits, and base rates.
//!
//! Sensitive groups are indexed `0..K` internally, assigned by first
//! appearance in file order. The label-map artifact records the mapping
//! from group names to indices so train and test agree.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A labeled sample set: real-valued features (categoricals one-hot
/// encoded), binary labels, and a sensitive group index per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    /// n rows of p features each.
    pub features: Vec<Vec<f64>>,
    /// Binary labels, 0 or 1.
    pub labels: Vec<u8>,
    /// Group index in `0..group_count` per row.
    pub sensitive: Vec<usize>,
    pub group_count: usize,
    pub feature_names: Vec<String>,
    /// Group names in index order.
    pub group_names: Vec<String>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Checks the construction invariants: indices in range, every group
    /// populated, all features finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.labels.len() != n || self.sensitive.len() != n {
            return Err(Error::Schema("column lengths disagree".into()));
        }
        if self.group_count < 2 {
            return Err(Error::DegenerateGroup(format!(
                "need at least 2 groups, got {}",
                self.group_count
            )));
        }
        let mut seen = vec![false; self.group_count];
        for &z in &self.sensitive {
            if z >= self.group_count {
                return Err(Error::Schema(format!("group index {z} out of range")));
            }
            seen[z] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::DegenerateGroup(format!("group {k} has no rows")));
        }
        for row in &self.features {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse("non-finite feature value".into()));
            }
        }
        Ok(())
    }

    /// Label-map artifact: group name to index.
    pub fn label_map(&self) -> BTreeMap<String, usize> {
        self.group_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect()
    }

    fn take_rows(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sensitive: idx.iter().map(|&i| self.sensitive[i]).collect(),
            group_count: self.group_count,
            feature_names: self.feature_names.clone(),
            group_names: self.group_names.clone(),
        }
    }
}

/// Empirical group frequencies; a stochastic vector of length K.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseRates {
    pub rates: Vec<f64>,
}

/// Computes per-group base rates. Permutation-invariant in the rows.
pub fn base_rates(ds: &LabeledDataset) -> Result<BaseRates> {
    if ds.is_empty() {
        return Err(Error::Schema("empty dataset".into()));
    }
    let mut counts = vec![0usize; ds.group_count];
    for &z in &ds.sensitive {
        counts[z] += 1;
    }
    let n = ds.len() as f64;
    Ok(BaseRates {
        rates: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// The distribution the collected set should match. Defaults to uniform.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TargetDistribution {
    /// Disjoint groups: a single stochastic vector of length K.
    Disjoint { target: Vec<f64> },
    /// Intersecting groups partitioned into classes; entry 1/k_i for every
    /// group in a class of size k_i, entries within each class sum to 1.
    Intersecting {
        /// (class id, class size); sizes sum to K.
        group_classes: Vec<(String, usize)>,
        target: Vec<f64>,
    },
}

impl TargetDistribution {
    /// Uniform 1/K target over disjoint groups.
    pub fn uniform(k: usize) -> TargetDistribution {
        TargetDistribution::Disjoint {
            target: vec![1.0 / k as f64; k],
        }
    }

    pub fn from_vec(target: Vec<f64>) -> Result<TargetDistribution> {
        let sum: f64 = target.iter().sum();
        if target.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("target is not a stochastic vector".into()));
        }
        Ok(TargetDistribution::Disjoint { target })
    }

    /// Target for intersecting group classes (e.g. sex with 2 groups and
    /// race with 5 groups gives K = 7 entries).
    pub fn intersecting(classes: Vec<(String, usize)>) -> Result<TargetDistribution> {
        if classes.iter().any(|(_, k)| *k == 0) {
            return Err(Error::Domain("empty group class".into()));
        }
        let target: Vec<f64> = classes
            .iter()
            .flat_map(|(_, k)| std::iter::repeat_n(1.0 / *k as f64, *k))
            .collect();
        Ok(TargetDistribution::Intersecting {
            group_classes: classes,
            target,
        })
    }

    pub fn vector(&self) -> &[f64] {
        match self {
            TargetDistribution::Disjoint { target } => target,
            TargetDistribution::Intersecting { target, .. } => target,
        }
    }

    pub fn len(&self) -> usize {
        self.vector().len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector().is_empty()
    }
}

/// Per-sample weights at one tree vertex: the probability each sample
/// reaches the vertex under the randomized tree.
#[derive(Debug, Clone)]
pub struct WeightedView {
    pub weights: Vec<f64>,
    /// Binary-string vertex id, root = "0".
    pub vertex_id: String,
}

impl WeightedView {
    pub fn root(n: usize) -> WeightedView {
        WeightedView {
            weights: vec![1.0; n],
            vertex_id: "0".into(),
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    /// Raw value mapped to label 1; every other value maps to 0.
    pub positive_label: String,
    pub sensitive_column: String,
    /// Columns dropped before encoding (ids, leakage, etc).
    #[serde(default)]
    pub drop_columns: Vec<String>,
}

/// How one raw column is turned into encoded features.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoder {
    Numeric { name: String },
    /// One indicator feature per category, in first-appearance order.
    Categorical { name: String, categories: Vec<String> },
}

/// Encoding artifact: applies the training-time column layout to new files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<ColumnEncoder>,
    pub group_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Encoder {
    /// Encodes a raw record (values for the encoder's columns, in order)
    /// into a feature vector. Unseen categories encode as all-zero
    /// indicators.
    pub fn encode_row(&self, values: &[String]) -> Result<Vec<f64>> {
        if values.len() != self.columns.len() {
            return Err(Error::Schema(format!(
                "expected {} values, got {}",
                self.columns.len(),
                values.len()
            )));
        }
        let mut row = Vec::with_capacity(self.feature_names.len());
        for (col, raw) in self.columns.iter().zip(values) {
            match col {
                ColumnEncoder::Numeric { name } => {
                    let v: f64 = raw.trim().parse().map_err(|_| {
                        Error::Parse(format!("non-numeric value {raw:?} in column {name}"))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse(format!("non-finite value in column {name}")));
                    }
                    row.push(v);
                }
                ColumnEncoder::Categorical { categories, .. } => {
                    let raw = raw.trim();
                    for c in categories {
                        row.push(if c == raw { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        Ok(row)
    }
}

/// Result of loading a CSV: the encoded dataset, the reusable encoder,
/// and how many rows were dropped for missing fields.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: LabeledDataset,
    pub encoder: Encoder,
    pub dropped_rows: usize,
}

fn is_missing(v: &str) -> bool {
    let v = v.trim();
    v.is_empty() || v == "?"
}

/// Loads an RFC-4180 CSV with a header row. Categorical columns are
/// one-hot encoded; the sensitive column maps to group indices by first
/// appearance; rows with missing fields are dropped and counted.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let label_idx = col_index(&schema.label_column)?;
    let sens_idx = col_index(&schema.sensitive_column)?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| {
            i != label_idx && i != sens_idx && !schema.drop_columns.contains(&headers[i])
        })
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut sensitive_raw: Vec<String> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        rows.push(feature_cols.iter().map(|&i| record[i].to_string()).collect());
        labels.push(u8::from(record[label_idx].trim() == schema.positive_label));
        sensitive_raw.push(record[sens_idx].to_string());
    }
    if rows.is_empty() {
        return Err(Error::Schema("no usable rows".into()));
    }

    // Group indices by first appearance.
    let mut group_names: Vec<String> = Vec::new();
    let mut sensitive: Vec<usize> = Vec::with_capacity(sensitive_raw.len());
    for g in &sensitive_raw {
        let idx = match group_names.iter().position(|n| n == g) {
            Some(i) => i,
            None => {
                group_names.push(g.clone());
                group_names.len() - 1
            }
        };
        sensitive.push(idx);
    }
    if group_names.len() < 2 {
        return Err(Error::DegenerateGroup(
            "sensitive column takes a single value".into(),
        ));
    }

    // A column is numeric when every value parses as f64.
    let mut columns: Vec<ColumnEncoder> = Vec::new();
    for (ci, &col) in feature_cols.iter().enumerate() {
        let name = headers[col].clone();
        let numeric = rows.iter().all(|r| r[ci].parse::<f64>().is_ok());
        if numeric {
            columns.push(ColumnEncoder::Numeric { name });
        } else {
            let mut categories: Vec<String> = Vec::new();
            for r in &rows {
                if !categories.contains(&r[ci]) {
                    categories.push(r[ci].clone());
                }
            }
            columns.push(ColumnEncoder::Categorical { name, categories });
        }
    }
    let mut feature_names: Vec<String> = Vec::new();
    for col in &columns {
        match col {
            ColumnEncoder::Numeric { name } => feature_names.push(name.clone()),
            ColumnEncoder::Categorical { name, categories } => {
                for c in categories {
                    feature_names.push(format!("{name}={c}"));
                }
            }
        }
    }
    let encoder = Encoder {
        columns,
        group_names: group_names.clone(),
        feature_names: feature_names.clone(),
    };

    let mut features = Vec::with_capacity(rows.len());
    for r in &rows {
        features.push(encoder.encode_row(r)?);
    }

    let dataset = LabeledDataset {
        features,
        labels,
        sensitive,
        group_count: group_names.len(),
        feature_names,
        group_names,
    };
    dataset.validate()?;
    Ok(LoadedData {
        dataset,
        encoder,
        dropped_rows: dropped,
    })
}

/// Min-max scaling parameters, fit on training statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaler {
    pub fn fit(ds: &LabeledDataset) -> Scaler {
        let p = ds.dim();
        let mut mins = vec![f64::INFINITY; p];
        let mut maxs = vec![f64::NEG_INFINITY; p];
        for row in &ds.features {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Scaler { mins, maxs }
    }

    /// Maps each feature into [0,1] by the fitted range; constant columns
    /// map to 0. Values outside the fitted range are clamped.
    pub fn transform(&self, ds: &mut LabeledDataset) {
        for row in &mut ds.features {
            self.transform_row(row);
        }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            let span = self.maxs[j] - self.mins[j];
            *v = if span > 0.0 {
                ((*v - self.mins[j]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
}

const SPLIT_RETRIES: usize = 100;

/// Deterministic shuffled split; both sides retain at least one sample of
/// every group, re-shuffling up to a bounded retry count.
pub fn split_train_test(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Domain(format!("fraction {fraction} outside (0,1)")));
    }
    let n = ds.len();
    // Test size floors so train = n - floor(n * (1 - fraction)).
    let test_size = (n as f64 * (1.0 - fraction)).floor() as usize;
    let train_size = n - test_size;
    if train_size == 0 || test_size == 0 {
        return Err(Error::Domain("split leaves one side empty".into()));
    }

    for attempt in 0..SPLIT_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (train_idx, test_idx) = idx.split_at(train_size);
        let covers = |part: &[usize]| {
            let mut seen = vec![false; ds.group_count];
            for &i in part {
                seen[ds.sensitive[i]] = true;
            }
            seen.iter().all(|&s| s)
        };
        if covers(train_idx) && covers(test_idx) {
            return Ok((ds.take_rows(train_idx), ds.take_rows(test_idx)));
        }
    }
    Err(Error::DegenerateSplit {
        retries: SPLIT_RETRIES,
    })
}
