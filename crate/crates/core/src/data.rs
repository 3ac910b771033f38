//! Flow-table ingestion and the benign-only preprocessing protocol.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, RowError};
use crate::matrix::Matrix;

/// NetFlow flow keys removed before training.
pub const DEFAULT_DROP_COLUMNS: [&str; 4] = [
    "IPV4_SRC_ADDR",
    "IPV4_DST_ADDR",
    "L4_SRC_PORT",
    "L4_DST_PORT",
];
pub const DEFAULT_LABEL_COLUMN: &str = "Label";
pub const DEFAULT_CATEGORY_COLUMN: &str = "Attack";

pub const BENIGN: u8 = 0;
pub const ATTACK: u8 = 1;

/// Rows from a flow table: numeric features, a binary label and optional attack group.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub columns: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub categories: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(
        columns: Vec<String>,
        features: Matrix,
        labels: Vec<u8>,
        categories: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.rows() > 0 && features.cols() != columns.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset columns",
                expected: columns.len(),
                actual: features.cols(),
            });
        }
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
        }
        if let Some(c) = &categories {
            if c.len() != labels.len() {
                return Err(Error::DimensionMismatch {
                    context: "dataset categories",
                    expected: labels.len(),
                    actual: c.len(),
                });
            }
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            columns,
            features,
            labels,
            categories,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn benign_indices(&self) -> Vec<usize> {
        self.indices_with(BENIGN)
    }

    pub fn attack_indices(&self) -> Vec<usize> {
        self.indices_with(ATTACK)
    }

    fn indices_with(&self, label: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            categories: self
                .categories
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i].clone()).collect()),
        }
    }

    pub fn schema(&self) -> Schema {
        Schema::new(self.columns.clone())
    }
}

/// Ordered feature-column list a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<String>,
}

impl Schema {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns }
    }

    /// SHA-256 over each column name as `u32 LE length || UTF-8 bytes`.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update((c.len() as u32).to_le_bytes());
            h.update(c.as_bytes());
        }
        h.finalize().into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: String,
    /// Optional attack-group column; ignored when absent from the header.
    pub category_column: Option<String>,
    pub drop_columns: Vec<String>,
    /// Drop unparseable rows instead of failing; fails only if every row is invalid.
    pub skip_invalid: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: DEFAULT_LABEL_COLUMN.into(),
            category_column: Some(DEFAULT_CATEGORY_COLUMN.into()),
            drop_columns: DEFAULT_DROP_COLUMNS.iter().map(|s| s.to_string()).collect(),
            skip_invalid: false,
        }
    }
}

/// How header fields map onto features, label and category.
#[derive(Debug, Clone)]
pub struct ColumnLayout {
    pub feature_idx: Vec<usize>,
    pub feature_names: Vec<String>,
    pub label_idx: Option<usize>,
    pub category_idx: Option<usize>,
}

impl ColumnLayout {
    /// Everything that is not dropped, the label or the category is a feature.
    pub fn resolve(
        header: &csv::StringRecord,
        opts: &CsvOptions,
        require_label: bool,
    ) -> Result<Self> {
        let label_idx = header.iter().position(|h| h == opts.label_column);
        if require_label && label_idx.is_none() {
            return Err(Error::MissingColumn(opts.label_column.clone()));
        }
        let category_idx = opts
            .category_column
            .as_deref()
            .and_then(|name| header.iter().position(|h| h == name));
        let mut feature_idx = Vec::new();
        let mut feature_names = Vec::new();
        for (i, name) in header.iter().enumerate() {
            if Some(i) == label_idx
                || Some(i) == category_idx
                || opts.drop_columns.iter().any(|d| d == name)
            {
                continue;
            }
            feature_idx.push(i);
            feature_names.push(name.to_string());
        }
        Ok(Self {
            feature_idx,
            feature_names,
            label_idx,
            category_idx,
        })
    }

    /// Parses the feature fields of one record into `out`.
    pub fn parse_features(
        &self,
        record: &csv::StringRecord,
        line: usize,
        out: &mut Vec<f64>,
    ) -> Result<(), RowError> {
        out.clear();
        for (&i, name) in self.feature_idx.iter().zip(&self.feature_names) {
            let raw = record.get(i).unwrap_or("");
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    return Err(RowError {
                        line,
                        column: name.clone(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        Ok(())
    }
}

/// `0`/`1` (any numeric, non-zero = attack) or `Benign` vs anything else.
pub fn parse_label(raw: &str) -> Option<u8> {
    let t = raw.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(v) = t.parse::<f64>() {
        return Some(if v == 0.0 { BENIGN } else { ATTACK });
    }
    Some(if t.eq_ignore_ascii_case("benign") {
        BENIGN
    } else {
        ATTACK
    })
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyInput("CSV file has no header row"));
    }
    let layout = ColumnLayout::resolve(&header, opts, true)?;
    let label_idx = layout.label_idx.expect("required");

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut categories = layout.category_idx.map(|_| Vec::new());
    let mut rejected = Vec::new();
    let mut total = 0usize;
    let mut row = Vec::with_capacity(layout.feature_idx.len());

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 1;
        total += 1;
        if let Err(e) = layout.parse_features(&record, line, &mut row) {
            rejected.push(e);
            continue;
        }
        let raw_label = record.get(label_idx).unwrap_or("");
        let Some(label) = parse_label(raw_label) else {
            rejected.push(RowError {
                line,
                column: opts.label_column.clone(),
                value: raw_label.to_string(),
            });
            continue;
        };
        data.extend_from_slice(&row);
        labels.push(label);
        if let (Some(cats), Some(ci)) = (categories.as_mut(), layout.category_idx) {
            cats.push(record.get(ci).unwrap_or("").to_string());
        }
    }

    if total == 0 {
        return Err(Error::EmptyInput("CSV file has no data rows"));
    }
    if !rejected.is_empty() && (!opts.skip_invalid || rejected.len() == total) {
        return Err(Error::InvalidRows {
            count: rejected.len(),
            rows: rejected,
        });
    }
    let features = Matrix::from_vec(labels.len(), layout.feature_idx.len(), data)?;
    LabeledDataset::new(layout.feature_names, features, labels, categories)
}

/// Writes features, then the label column, then the category column if present.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(
    ds: &LabeledDataset,
    writer: W,
    label_column: &str,
    category_column: &str,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.columns.iter().map(String::as_str).collect();
    header.push(label_column);
    if ds.categories.is_some() {
        header.push(category_column);
    }
    wtr.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        fields.clear();
        fields.extend(ds.features.row(i).iter().map(|v| v.to_string()));
        fields.push(ds.labels[i].to_string());
        if let Some(c) = &ds.categories {
            fields.push(c[i].clone());
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(
        ds,
        std::io::BufWriter::new(file),
        DEFAULT_LABEL_COLUMN,
        DEFAULT_CATEGORY_COLUMN,
    )
}

/// Per-feature min/max fitted on benign training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// `(x − min)/(max − min)` clamped to `[0, 1]`; constant features map to 0.
    pub fn transform_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "scaler input",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        for ((o, &v), (&lo, &hi)) in out.iter_mut().zip(x).zip(self.mins.iter().zip(&self.maxs)) {
            let range = hi - lo;
            *o = if range > 0.0 {
                ((v - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.transform_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply(&self, data: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(data.rows(), self.dim());
        if data.rows() > 0 && data.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "scaler input",
                expected: self.dim(),
                actual: data.cols(),
            });
        }
        for (i, x) in data.iter_rows().enumerate() {
            self.transform_into(x, out.row_mut(i))?;
        }
        Ok(out)
    }

    /// Scaling that leaves `[0, 1]` data unchanged.
    pub fn unit(dim: usize) -> Self {
        Self {
            mins: vec![0.0; dim],
            maxs: vec![1.0; dim],
        }
    }
}

pub fn fit_scaler(train: &Matrix) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::EmptyInput("scaler training rows"));
    }
    let (mins, maxs) = (0..train.cols())
        .map(|j| {
            train
                .column(j)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .unzip();
    Ok(ScalerParams { mins, maxs })
}

pub fn apply_scaler(params: &ScalerParams, data: &Matrix) -> Result<Matrix> {
    params.apply(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub benign_train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            benign_train_fraction: 0.7,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.benign_train_fraction > 0.0 && self.benign_train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "benign_train_fraction must lie strictly between 0 and 1, got {}",
                self.benign_train_fraction
            )));
        }
        Ok(())
    }
}

/// Row indices of the benign training part and of the test part
/// (held-out benign rows first, then every attack row in original order).
pub fn split_benign_indices(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let mut benign = ds.benign_indices();
    if benign.is_empty() {
        return Err(Error::InsufficientData(
            "at least one benign row to split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    benign.shuffle(&mut rng);
    let n_train = ((benign.len() as f64 * spec.benign_train_fraction).round() as usize)
        .clamp(1, benign.len());
    let test_benign = benign.split_off(n_train);
    let test = test_benign.into_iter().chain(ds.attack_indices()).collect();
    Ok((benign, test))
}

/// Benign-only training features and a test set holding the remaining benign rows plus all attacks.
pub fn split_benign(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(Matrix, LabeledDataset)> {
    let (train, test) = split_benign_indices(ds, spec)?;
    Ok((ds.features.select_rows(&train), ds.subset(&test)))
}

/// Parameters of the synthetic two-cluster flow table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_benign: usize,
    pub n_attack: usize,
    pub dims: usize,
    pub shift: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 5000 benign, 500 attack, 16 features, shift 0.6, seed 42.
    pub const STANDARD: SynthSpec = SynthSpec {
        n_benign: 5000,
        n_attack: 500,
        dims: 16,
        shift: 0.6,
        seed: 42,
    };
}

/// Per-coordinate standard deviation of each benign mixture component.
pub const SYNTH_SIGMA: f64 = 0.05;
/// Component means are drawn uniformly from this box.
pub const SYNTH_MEAN_RANGE: (f64, f64) = (0.3, 0.7);
pub const SYNTH_ATTACK_CATEGORY: &str = "Shifted";
pub const SYNTH_BENIGN_CATEGORY: &str = "Benign";

/// Benign rows come from a two-component isotropic Gaussian mixture clamped to `[0,1]^dims`.
/// Attack rows come from the same mixture translated by `shift` along a fixed random unit
/// direction with standard deviation inflated to `sigma·(1 + shift)`. Rows are shuffled.
pub fn synth_generate(spec: &SynthSpec) -> Result<LabeledDataset> {
    if spec.n_benign == 0 {
        return Err(Error::InvalidConfig("n_benign must be positive".into()));
    }
    if spec.n_attack == 0 {
        return Err(Error::InvalidConfig("n_attack must be positive".into()));
    }
    if spec.dims == 0 {
        return Err(Error::InvalidConfig("dims must be positive".into()));
    }
    if !(spec.shift >= 0.0 && spec.shift.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "shift must be non-negative, got {}",
            spec.shift
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = SYNTH_MEAN_RANGE;
    let means: [Vec<f64>; 2] =
        std::array::from_fn(|_| (0..spec.dims).map(|_| rng.random_range(lo..hi)).collect());
    let mut direction: Vec<f64> = (0..spec.dims)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = direction
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    direction.iter_mut().for_each(|v| *v /= norm);

    let attack_sigma = SYNTH_SIGMA * (1.0 + spec.shift);
    let total = spec.n_benign + spec.n_attack;
    let mut rows: Vec<(Vec<f64>, u8)> = Vec::with_capacity(total);
    for i in 0..total {
        let attack = i >= spec.n_benign;
        let mean = &means[usize::from(rng.random_bool(0.5))];
        let sigma = if attack { attack_sigma } else { SYNTH_SIGMA };
        let row = (0..spec.dims)
            .map(|j| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let offset = if attack {
                    spec.shift * direction[j]
                } else {
                    0.0
                };
                (mean[j] + offset + sigma * noise).clamp(0.0, 1.0)
            })
            .collect();
        rows.push((row, u8::from(attack)));
    }
    rows.shuffle(&mut rng);

    let columns = (0..spec.dims).map(|j| format!("f{j:02}")).collect();
    let mut data = Vec::with_capacity(total * spec.dims);
    let mut labels = Vec::with_capacity(total);
    let mut categories = Vec::with_capacity(total);
    for (row, label) in rows {
        data.extend(row);
        labels.push(label);
        categories.push(
            if label == ATTACK {
                SYNTH_ATTACK_CATEGORY
            } else {
                SYNTH_BENIGN_CATEGORY
            }
            .to_string(),
        );
    }
    LabeledDataset::new(
        columns,
        Matrix::from_vec(total, spec.dims, data)?,
        labels,
        Some(categories),
    )
}
