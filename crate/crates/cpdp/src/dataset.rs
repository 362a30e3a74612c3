//! Project datasets: labeled or unlabeled software-metric vectors.
//!
//! A dataset is an ordered list of instances, each a fixed-width vector of
//! static code metrics with an optional fault label. CSV is the interchange
//! format: one header row, an optional `id` column, an optional label
//! column, and every remaining column parsed as a numeric feature.

use std::fs::File;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Fault label of a module-level instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Faulty,
    Clean,
}

impl Label {
    /// Parses a label token. Accepts `1`, `0`, `faulty`, `clean`,
    /// case-insensitively and ignoring surrounding whitespace.
    pub fn parse(token: &str) -> Option<Label> {
        match token.trim().to_ascii_lowercase().as_str() {
            "1" | "faulty" => Some(Label::Faulty),
            "0" | "clean" => Some(Label::Clean),
            _ => None,
        }
    }

    /// Canonical CSV token for the label.
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Faulty => "faulty",
            Label::Clean => "clean",
        }
    }
}

/// One module's metric vector plus its optional fault label.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricInstance<T> {
    pub id: String,
    pub features: Vec<T>,
    pub label: Option<Label>,
}

/// An ordered collection of equally wide metric instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectDataset<T> {
    name: String,
    feature_names: Vec<String>,
    instances: Vec<MetricInstance<T>>,
}

impl<T: Scalar> ProjectDataset<T> {
    /// Validates widths, finiteness, and feature-name uniqueness.
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        instances: Vec<MetricInstance<T>>,
    ) -> Result<Self> {
        let name = name.into();
        if feature_names.is_empty() {
            return Err(Error::EmptyDataset(format!("{name}: no feature columns")));
        }
        for (i, a) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(a) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate feature column {a:?}"
                )));
            }
        }
        let width = feature_names.len();
        for inst in &instances {
            if inst.features.len() != width {
                return Err(Error::ShapeMismatch(format!(
                    "instance {:?} has {} features, expected {}",
                    inst.id,
                    inst.features.len(),
                    width
                )));
            }
            if let Some(j) = inst.features.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "feature {:?} of instance {:?}",
                    feature_names[j], inst.id
                )));
            }
        }
        Ok(ProjectDataset {
            name,
            feature_names,
            instances,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[MetricInstance<T>] {
        &self.instances
    }

    /// Values of feature column `j` in instance order.
    pub fn feature_column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.instances.iter().map(move |inst| inst.features[j])
    }

    /// Features as an `n x F` matrix in instance order.
    pub fn to_matrix(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.len(), self.feature_count());
        for (r, inst) in self.instances.iter().enumerate() {
            for (c, &x) in inst.features.iter().enumerate() {
                out.set(r, c, x);
            }
        }
        out
    }

    /// Copy of the dataset with every label removed.
    pub fn without_labels(&self) -> ProjectDataset<T> {
        let instances = self
            .instances
            .iter()
            .map(|inst| MetricInstance {
                id: inst.id.clone(),
                features: inst.features.clone(),
                label: None,
            })
            .collect();
        ProjectDataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            instances,
        }
    }

    /// Copy with feature vectors replaced row-for-row; ids, labels, and
    /// column names are preserved.
    pub fn with_features(&self, rows: Vec<Vec<T>>) -> Result<ProjectDataset<T>> {
        if rows.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} replacement rows for {} instances",
                rows.len(),
                self.len()
            )));
        }
        let instances = self
            .instances
            .iter()
            .zip(rows)
            .map(|(inst, features)| MetricInstance {
                id: inst.id.clone(),
                features,
                label: inst.label,
            })
            .collect();
        ProjectDataset::new(self.name.clone(), self.feature_names.clone(), instances)
    }

    /// Labels in instance order; errors on the first unlabeled instance.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.instances
            .iter()
            .map(|inst| {
                inst.label
                    .ok_or_else(|| Error::UnlabeledInstance(inst.id.clone()))
            })
            .collect()
    }

    /// Instance count, faulty count, and percentage of faulty modules.
    pub fn stats(&self) -> Result<DatasetStats> {
        if self.is_empty() {
            return Err(Error::EmptyDataset(self.name.clone()));
        }
        let mut n_faulty = 0usize;
        for inst in &self.instances {
            match inst.label {
                Some(Label::Faulty) => n_faulty += 1,
                Some(Label::Clean) => {}
                None => return Err(Error::UnlabeledInstance(inst.id.clone())),
            }
        }
        Ok(DatasetStats {
            n_instances: self.len(),
            n_faulty,
        })
    }
}

/// Label tally of a fully labeled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub n_instances: usize,
    pub n_faulty: usize,
}

impl DatasetStats {
    /// Faulty percentage, exact.
    pub fn buggy_rate_percent(&self) -> f64 {
        100.0 * self.n_faulty as f64 / self.n_instances as f64
    }

    /// Faulty percentage rounded half-away-from-zero to two decimals, the
    /// form shown in reports (e.g. 129/324 -> 39.81).
    pub fn buggy_rate_rounded(&self) -> f64 {
        (self.buggy_rate_percent() * 100.0).round() / 100.0
    }

    /// Two-decimal display string of the buggy rate.
    pub fn buggy_rate_display(&self) -> String {
        format!("{:.2}", self.buggy_rate_percent())
    }
}

/// Loads a dataset from CSV.
///
/// The first row is the header. A column named `id` (case-insensitive)
/// supplies instance ids; otherwise ids are synthesized as `row-<k>` with
/// `k` the zero-based data-row index. When `label_column` is given, that
/// column is parsed as labels; every remaining column must parse as a
/// finite number. Error rows are reported by 1-based file row, so the first
/// data row is row 2.
pub fn load_csv<T: Scalar>(path: &Path, label_column: Option<&str>) -> Result<ProjectDataset<T>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if header.len() == 0 || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }

    let id_idx = header
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("id"));
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingLabelColumn(name.to_string()))?,
        ),
        None => None,
    };

    let mut feature_cols = Vec::new();
    let mut feature_names = Vec::new();
    for (idx, col) in header.iter().enumerate() {
        if Some(idx) == id_idx || Some(idx) == label_idx {
            continue;
        }
        feature_cols.push(idx);
        feature_names.push(col.trim().to_string());
    }
    if feature_cols.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{}: no feature columns",
            path.display()
        )));
    }

    let mut instances = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != header.len() {
            return Err(Error::RowWidth {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = match id_idx {
            Some(i) => record[i].trim().to_string(),
            None => format!("row-{k}"),
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for (&col, name) in feature_cols.iter().zip(&feature_names) {
            let raw = record[col].trim();
            let value: f64 = raw.parse().map_err(|_| Error::NonNumericCell {
                row,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumericCell {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                });
            }
            features.push(T::from_f64_lossy(value));
        }
        let label = match label_idx {
            Some(i) => {
                let token = &record[i];
                Some(Label::parse(token).ok_or_else(|| Error::UnknownLabel {
                    row,
                    token: token.trim().to_string(),
                })?)
            }
            None => None,
        };
        instances.push(MetricInstance {
            id,
            features,
            label,
        });
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    ProjectDataset::new(name, feature_names, instances)
}

/// Writes a dataset to CSV with an `id` column, one column per feature, and
/// (when `label_column` is given) a trailing label column with tokens
/// `faulty` / `clean`. Floats are written in shortest round-trip form, so
/// `load_csv(save_csv(ds))` reproduces the feature values exactly.
pub fn save_csv<T: Scalar>(
    dataset: &ProjectDataset<T>,
    path: &Path,
    label_column: Option<&str>,
) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(file);

    let mut header = vec!["id".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    if let Some(name) = label_column {
        header.push(name.to_string());
    }
    writer.write_record(&header).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;

    for inst in &dataset.instances {
        let mut record = vec![inst.id.clone()];
        record.extend(inst.features.iter().map(|x| format!("{x}")));
        if label_column.is_some() {
            let label = inst
                .label
                .ok_or_else(|| Error::UnlabeledInstance(inst.id.clone()))?;
            record.push(label.as_str().to_string());
        }
        writer.write_record(&record).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Draws a two-class Gaussian dataset for experiments and tests.
///
/// `floor(buggy_fraction * n)` faulty instances come first (ids `syn-0`,
/// `syn-1`, ...), clean instances follow. Feature `j` of a faulty instance
/// is drawn from `N(faulty_means[j], faulty_std^2)` and likewise for clean.
/// The draw order is fixed, so equal seeds give identical datasets.
#[allow(clippy::too_many_arguments)]
pub fn synthesize<T: Scalar>(
    name: &str,
    n: usize,
    n_features: usize,
    faulty_means: &[T],
    clean_means: &[T],
    faulty_std: T,
    clean_std: T,
    buggy_fraction: f64,
    seed: u64,
) -> Result<ProjectDataset<T>> {
    if n_features == 0 {
        return Err(Error::InvalidParameter("n_features must be >= 1".into()));
    }
    if faulty_means.len() != n_features || clean_means.len() != n_features {
        return Err(Error::ShapeMismatch(format!(
            "class means must have {} entries",
            n_features
        )));
    }
    if !(0.0..=1.0).contains(&buggy_fraction) {
        return Err(Error::InvalidParameter(format!(
            "buggy_fraction {buggy_fraction} outside [0, 1]"
        )));
    }
    for (what, std) in [("faulty_std", faulty_std), ("clean_std", clean_std)] {
        if !(std.is_finite() && std > T::zero()) {
            return Err(Error::InvalidParameter(format!("{what} must be positive")));
        }
    }

    let n_faulty = (buggy_fraction * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    for k in 0..n {
        let faulty = k < n_faulty;
        let (means, std) = if faulty {
            (faulty_means, faulty_std)
        } else {
            (clean_means, clean_std)
        };
        let features = means
            .iter()
            .map(|&mu| {
                let dist = Normal::new(mu.to_f64_lossy(), std.to_f64_lossy())
                    .expect("validated std is positive and finite");
                T::from_f64_lossy(dist.sample(&mut rng))
            })
            .collect();
        instances.push(MetricInstance {
            id: format!("syn-{k}"),
            features,
            label: Some(if faulty { Label::Faulty } else { Label::Clean }),
        });
    }

    let feature_names = (0..n_features).map(|j| format!("m{j}")).collect();
    ProjectDataset::new(name, feature_names, instances)
}
