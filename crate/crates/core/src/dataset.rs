//! Group-structured survival datasets: loading, validation, standardization
//! and stratified cross-validation folds.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::rng::derive_rng;

/// One right-censored observation: follow-up time and event indicator
/// (`true` = death observed, `false` = censored).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub time: f64,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }

    /// Event indicator as 0/1.
    pub fn indicator(&self) -> f64 {
        if self.event {
            1.0
        } else {
            0.0
        }
    }
}

/// Disjoint, exhaustive partition of the feature columns into named groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroupMap {
    group_names: Vec<String>,
    group_columns: Vec<Vec<usize>>,
    clinical_group: Option<usize>,
}

impl FeatureGroupMap {
    /// Builds and validates a group map. `clinical` must name one of the
    /// groups if given; columns must partition `0..p` exactly.
    pub fn new(
        names: Vec<String>,
        columns: Vec<Vec<usize>>,
        clinical: Option<&str>,
    ) -> Result<Self, DataError> {
        if names.len() != columns.len() {
            return Err(DataError::Invalid(
                "group names/columns length mismatch".into(),
            ));
        }
        for (name, cols) in names.iter().zip(&columns) {
            if cols.is_empty() {
                return Err(DataError::EmptyGroup { name: name.clone() });
            }
        }
        let p: usize = columns.iter().map(Vec::len).sum();
        let mut seen = vec![false; p];
        for cols in &columns {
            for &c in cols {
                if c >= p || seen[c] {
                    return Err(DataError::Invalid(format!(
                        "group columns do not partition 0..{p} (column {c})"
                    )));
                }
                seen[c] = true;
            }
        }
        let clinical_group = match clinical {
            None => None,
            Some(name) => Some(names.iter().position(|n| n == name).ok_or_else(|| {
                DataError::UnknownClinicalGroup {
                    name: name.to_string(),
                }
            })?),
        };
        Ok(Self {
            group_names: names,
            group_columns: columns,
            clinical_group,
        })
    }

    /// Single unnamed group covering `p` columns.
    pub fn single(p: usize) -> Self {
        Self {
            group_names: vec!["all".to_string()],
            group_columns: vec![(0..p).collect()],
            clinical_group: None,
        }
    }

    pub fn group_count(&self) -> usize {
        self.group_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.group_columns.iter().map(Vec::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.group_names
    }

    pub fn name(&self, g: usize) -> &str {
        &self.group_names[g]
    }

    pub fn columns(&self, g: usize) -> &[usize] {
        &self.group_columns[g]
    }

    pub fn group_size(&self, g: usize) -> usize {
        self.group_columns[g].len()
    }

    pub fn clinical_index(&self) -> Option<usize> {
        self.clinical_group
    }

    /// For each column, the index of its group.
    pub fn group_of_columns(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.n_features()];
        for (g, cols) in self.group_columns.iter().enumerate() {
            for &c in cols {
                out[c] = g;
            }
        }
        out
    }
}

/// A validated survival dataset: feature matrix, outcomes, feature groups
/// and observation ids. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    pub name: String,
    features: Array2<f64>,
    outcomes: Vec<SurvivalOutcome>,
    groups: FeatureGroupMap,
    observation_ids: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(
        name: String,
        features: Array2<f64>,
        outcomes: Vec<SurvivalOutcome>,
        groups: FeatureGroupMap,
        observation_ids: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = features.nrows();
        if n < 2 {
            return Err(DataError::TooFewObservations { n });
        }
        if outcomes.len() != n || observation_ids.len() != n {
            return Err(DataError::Invalid(
                "features, outcomes and ids must have equal length".into(),
            ));
        }
        if groups.n_features() != features.ncols() {
            return Err(DataError::Invalid(format!(
                "group map covers {} columns but matrix has {}",
                groups.n_features(),
                features.ncols()
            )));
        }
        for (id, o) in observation_ids.iter().zip(&outcomes) {
            if !(o.time > 0.0) {
                return Err(DataError::NonPositiveTime {
                    id: id.clone(),
                    time: o.time,
                });
            }
        }
        if !outcomes.iter().any(|o| o.event) {
            return Err(DataError::ZeroEvents);
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid(
                "feature matrix contains non-finite values".into(),
            ));
        }
        Ok(Self {
            name,
            features,
            outcomes,
            groups,
            observation_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn outcomes(&self) -> &[SurvivalOutcome] {
        &self.outcomes
    }

    pub fn groups(&self) -> &FeatureGroupMap {
        &self.groups
    }

    pub fn observation_ids(&self) -> &[String] {
        &self.observation_ids
    }

    pub fn event_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.event).count()
    }

    /// Row subset sharing the feature/group schema. Evaluation splits may
    /// hold zero events, so invariants are not re-checked here.
    pub fn subset(&self, rows: &[usize]) -> SurvivalDataset {
        let features = Array2::from_shape_fn((rows.len(), self.p()), |(i, j)| {
            self.features[[rows[i], j]]
        });
        SurvivalDataset {
            name: self.name.clone(),
            features,
            outcomes: rows.iter().map(|&i| self.outcomes[i]).collect(),
            groups: self.groups.clone(),
            observation_ids: rows.iter().map(|&i| self.observation_ids[i].clone()).collect(),
        }
    }

    /// In-memory size of the numeric payload, used by the CV-scheme rule.
    pub fn payload_bytes(&self) -> u64 {
        ((self.n() * self.p() + 2 * self.n()) * std::mem::size_of::<f64>()) as u64
    }
}

/// Fold labels (1-based, in `1..=k`) for one repetition of k-fold CV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub repetition: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        *self.fold_of.iter().max().unwrap_or(&0)
    }

    /// Row indices of the given test fold and of its complement.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Deals shuffled indices round-robin into `k` folds (1-based labels).
fn deal_round_robin(fold_of: &mut [usize], indices: &[usize], k: usize, start: usize) -> usize {
    let mut cursor = start;
    for &i in indices {
        fold_of[i] = cursor % k + 1;
        cursor += 1;
    }
    cursor
}

fn build_assignment(
    outcomes: &[SurvivalOutcome],
    k: usize,
    repetition: usize,
    seed: u64,
) -> FoldAssignment {
    let mut events: Vec<usize> = Vec::new();
    let mut censored: Vec<usize> = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        if o.event {
            events.push(i);
        } else {
            censored.push(i);
        }
    }
    let mut rng = derive_rng(seed, &[repetition as u64]);
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);
    let mut fold_of = vec![0usize; outcomes.len()];
    // Censored dealing continues the event cursor so overall fold sizes
    // stay within one of each other as well.
    let cursor = deal_round_robin(&mut fold_of, &events, k, 0);
    deal_round_robin(&mut fold_of, &censored, k, cursor);
    FoldAssignment {
        repetition,
        fold_of,
    }
}

/// Event-stratified repeated k-fold assignments.
///
/// Events and censored observations are shuffled separately (seeded) and
/// dealt round-robin, so per-fold event counts differ by at most one.
/// Deterministic given `seed`.
pub fn stratified_folds(
    outcomes: &[SurvivalOutcome],
    k: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<FoldAssignment>, DataError> {
    if k < 2 {
        return Err(DataError::BadFoldCount { k });
    }
    let n_events = outcomes.iter().filter(|o| o.event).count();
    let n_censored = outcomes.len() - n_events;
    if n_events < k {
        return Err(DataError::TooFewForFolds {
            class: "event",
            k,
            have: n_events,
        });
    }
    if n_censored < k {
        return Err(DataError::TooFewForFolds {
            class: "censored",
            k,
            have: n_censored,
        });
    }
    Ok((0..repetitions)
        .map(|rep| build_assignment(outcomes, k, rep, seed))
        .collect())
}

/// Inner-tuning folds: same dealing scheme without the minimum-count
/// preconditions. Folds are non-empty whenever `n >= k`.
pub(crate) fn inner_folds(outcomes: &[SurvivalOutcome], k: usize, seed: u64) -> FoldAssignment {
    let k = k.min(outcomes.len()).max(2);
    build_assignment(outcomes, k, 0, seed)
}

/// Column means and scales used to standardize a feature matrix, plus flags
/// for constant columns (which are zeroed rather than rejected).
#[derive(Debug, Clone)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardization {
    /// Maps coefficients fitted on the standardized scale back to the
    /// original feature scale. Constant columns get coefficient 0.
    pub fn restore_coefficients(&self, beta_std: &[f64]) -> Vec<f64> {
        beta_std
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                if self.constant[j] {
                    0.0
                } else {
                    b / self.scales[j]
                }
            })
            .collect()
    }

    /// Inverse of [`restore_coefficients`](Self::restore_coefficients).
    pub fn standardize_coefficients(&self, beta_orig: &[f64]) -> Vec<f64> {
        beta_orig
            .iter()
            .enumerate()
            .map(|(j, &b)| if self.constant[j] { 0.0 } else { b * self.scales[j] })
            .collect()
    }
}

/// Centers every column to mean 0 and scales non-constant columns to unit
/// population standard deviation. Constant columns are zeroed and flagged.
pub fn standardize(features: &Array2<f64>) -> (Array2<f64>, Standardization) {
    let n = features.nrows();
    let p = features.ncols();
    assert!(n >= 2, "standardize requires n >= 2");
    let nf = n as f64;
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    let mut constant = vec![false; p];
    let mut out = features.clone();
    for j in 0..p {
        let col = features.column(j);
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let sd = var.sqrt();
        means[j] = mean;
        if sd > 0.0 {
            scales[j] = sd;
            for i in 0..n {
                out[[i, j]] = (features[[i, j]] - mean) / sd;
            }
        } else {
            constant[j] = true;
            scales[j] = 1.0;
            for i in 0..n {
                out[[i, j]] = 0.0;
            }
        }
    }
    (
        out,
        Standardization {
            means,
            scales,
            constant,
        },
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestGroup {
    name: String,
    file: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    outcome_file: String,
    groups: Vec<ManifestGroup>,
    #[serde(default)]
    clinical_group: Option<String>,
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_cell(raw: &str, file: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("na") || trimmed.eq_ignore_ascii_case("nan")
    {
        return Err(DataError::MissingValue {
            file: file.to_string(),
            row,
            column: column.to_string(),
        });
    }
    let value: f64 = trimmed.parse().map_err(|_| DataError::MissingValue {
        file: file.to_string(),
        row,
        column: column.to_string(),
    })?;
    if !value.is_finite() {
        return Err(DataError::MissingValue {
            file: file.to_string(),
            row,
            column: column.to_string(),
        });
    }
    Ok(value)
}

struct OutcomeFile {
    ids: Vec<String>,
    outcomes: Vec<SurvivalOutcome>,
}

fn read_outcome_file(path: &Path) -> Result<OutcomeFile, DataError> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| DataError::Csv {
            path: file_label.clone(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: file_label.clone(),
            source,
        })?
        .clone();
    let expected = ["id", "time", "event"];
    if headers.len() < 3 || headers.iter().take(3).zip(expected).any(|(h, e)| h != e) {
        return Err(DataError::Manifest(format!(
            "outcome file {file_label} must have columns id,time,event"
        )));
    }
    let mut ids = Vec::new();
    let mut outcomes = Vec::new();
    let mut seen = HashMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: file_label.clone(),
            source,
        })?;
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(DataError::MissingValue {
                file: file_label.clone(),
                row: row_idx + 1,
                column: "id".into(),
            });
        }
        if seen.insert(id.clone(), ()).is_some() {
            return Err(DataError::DuplicateId {
                id,
                file: file_label.clone(),
            });
        }
        let time = parse_cell(record.get(1).unwrap_or(""), &file_label, row_idx + 1, "time")?;
        let event_raw = record.get(2).unwrap_or("").trim();
        let event = match event_raw {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::BadEventIndicator {
                    id,
                    value: other.to_string(),
                })
            }
        };
        if !(time > 0.0) {
            return Err(DataError::NonPositiveTime { id, time });
        }
        ids.push(id);
        outcomes.push(SurvivalOutcome::new(time, event));
    }
    Ok(OutcomeFile { ids, outcomes })
}

struct GroupFile {
    column_names: Vec<String>,
    /// id -> row of feature values
    rows: HashMap<String, Vec<f64>>,
}

fn read_group_file(path: &Path) -> Result<GroupFile, DataError> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| DataError::Csv {
            path: file_label.clone(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: file_label.clone(),
            source,
        })?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("id") {
        return Err(DataError::Manifest(format!(
            "group file {file_label} must start with an id column"
        )));
    }
    let column_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if column_names.is_empty() {
        return Err(DataError::Manifest(format!(
            "group file {file_label} has no feature columns"
        )));
    }
    let mut rows = HashMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: file_label.clone(),
            source,
        })?;
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(DataError::MissingValue {
                file: file_label.clone(),
                row: row_idx + 1,
                column: "id".into(),
            });
        }
        let mut values = Vec::with_capacity(column_names.len());
        for (c, name) in column_names.iter().enumerate() {
            values.push(parse_cell(
                record.get(c + 1).unwrap_or(""),
                &file_label,
                row_idx + 1,
                name,
            )?);
        }
        if rows.insert(id.clone(), values).is_some() {
            return Err(DataError::DuplicateId {
                id,
                file: file_label,
            });
        }
    }
    Ok(GroupFile { column_names, rows })
}

/// Loads a dataset from a JSON manifest referencing one outcome CSV and one
/// CSV per feature group. Rows are aligned by `id` (outcome-file order);
/// column order follows the manifest's group order, then file order.
pub fn load_dataset<P: AsRef<Path>>(manifest_path: P) -> Result<SurvivalDataset, DataError> {
    let manifest_path = manifest_path.as_ref();
    let manifest: Manifest = serde_json::from_str(&read_to_string(manifest_path)?)
        .map_err(|e| DataError::Manifest(e.to_string()))?;
    if manifest.groups.is_empty() {
        return Err(DataError::Manifest("manifest lists no groups".into()));
    }
    let base: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let outcome = read_outcome_file(&base.join(&manifest.outcome_file))?;
    let n = outcome.ids.len();

    let mut group_names = Vec::new();
    let mut group_columns = Vec::new();
    let mut all_column_names: HashMap<String, ()> = HashMap::new();
    let mut columns_data: Vec<Vec<f64>> = Vec::new(); // column-major

    for group in &manifest.groups {
        let path = base.join(&group.file);
        let parsed = read_group_file(&path)?;
        let file_label = path.display().to_string();
        let start = columns_data.len();
        for name in &parsed.column_names {
            if all_column_names.insert(name.clone(), ()).is_some() {
                return Err(DataError::DuplicateColumn { name: name.clone() });
            }
        }
        let width = parsed.column_names.len();
        let mut cols = vec![Vec::with_capacity(n); width];
        for id in &outcome.ids {
            let row = parsed.rows.get(id).ok_or_else(|| DataError::IdMissing {
                id: id.clone(),
                file: file_label.clone(),
            })?;
            for (c, &v) in row.iter().enumerate() {
                cols[c].push(v);
            }
        }
        columns_data.extend(cols);
        group_names.push(group.name.clone());
        group_columns.push((start..start + width).collect());
    }

    let p = columns_data.len();
    let features = Array2::from_shape_fn((n, p), |(i, j)| columns_data[j][i]);
    let groups = FeatureGroupMap::new(group_names, group_columns, manifest.clinical_group.as_deref())?;
    SurvivalDataset::new(manifest.name, features, outcome.outcomes, groups, outcome.ids)
}
