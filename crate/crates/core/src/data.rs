//! Datasets of fixed-dimension embeddings: the embedding CSV format,
//! synthetic Gaussian-cluster generators, splitting and seeded batching.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};
use crate::tensor::Matrix;

/// Default embedding width (sentence-encoder output).
pub const EMBEDDING_DIM: usize = 512;

/// The ten humanitarian categories, ids 0 to 9 in this order.
pub const HUMAID_LABELS: [&str; 10] = [
    "caution_and_advice",
    "displaced_people_and_evacuations",
    "infrastructure_and_utility_damage",
    "injured_or_dead_people",
    "missing_or_found_people",
    "not_humanitarian",
    "other_relevant_information",
    "requests_or_urgent_needs",
    "rescue_volunteering_or_donation_effort",
    "sympathy_and_support",
];

/// Names for `n_classes` labels: the humanitarian set when there are ten,
/// `class_<k>` otherwise.
pub fn default_label_names(n_classes: usize) -> Vec<String> {
    if n_classes == HUMAID_LABELS.len() {
        HUMAID_LABELS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n_classes).map(|k| format!("class_{k}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        Self::with_names(features, labels, default_label_names(n_classes))
    }

    pub fn with_names(features: Matrix, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "dataset labels vs feature rows",
                features.rows(),
                labels.len(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::Data {
                row: 0,
                col: None,
                message: "dataset must contain at least one row".into(),
            });
        }
        let n_classes = label_names.len();
        if let Some((row, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::Data {
                row,
                col: Some(0),
                message: format!("label {y} out of range [0, {n_classes})"),
            });
        }
        Ok(Dataset {
            features,
            labels,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false for a constructed dataset; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::with_names(
            self.features.gather_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.label_names.clone(),
        )
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// One event's train/valid/test data.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSplits {
    pub name: String,
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl EventSplits {
    pub fn new(name: impl Into<String>, train: Dataset, valid: Dataset, test: Dataset) -> Result<Self> {
        let name = name.into();
        for (split, d) in [("valid", &valid), ("test", &test)] {
            if d.dim() != train.dim() {
                return Err(Error::shape(format!("event `{name}` {split} dim"), train.dim(), d.dim()));
            }
            if d.n_classes() != train.n_classes() {
                return Err(Error::shape(
                    format!("event `{name}` {split} n_classes"),
                    train.n_classes(),
                    d.n_classes(),
                ));
            }
        }
        Ok(EventSplits {
            name,
            train,
            valid,
            test,
        })
    }

    /// Loads three embedding CSV files as-is; pre-split data is never re-split.
    pub fn load(
        name: impl Into<String>,
        train: impl AsRef<Path>,
        valid: impl AsRef<Path>,
        test: impl AsRef<Path>,
    ) -> Result<Self> {
        EventSplits::new(
            name,
            load_embedding_csv(train)?,
            load_embedding_csv(valid)?,
            load_embedding_csv(test)?,
        )
    }
}

/// Parses an embedding CSV.
///
/// Layout: optional `#` comment lines (one may be `# n_classes=<k>`, default
/// 10), then the header `label,e0,…,e{dim−1}`, then one row per sample.
pub fn load_embedding_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_csv(&text)
}

pub fn parse_embedding_csv(text: &str) -> Result<Dataset> {
    let mut n_classes = 10usize;
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));

    let (header_line, header) = loop {
        match lines.next() {
            None => {
                return Err(Error::Format {
                    line: 1,
                    message: "missing header".into(),
                })
            }
            Some((n, l)) if l.starts_with('#') => {
                let body = l[1..].trim();
                if let Some(v) = body.strip_prefix("n_classes=") {
                    n_classes = v.trim().parse().map_err(|_| Error::Format {
                        line: n,
                        message: format!("bad n_classes value `{v}`"),
                    })?;
                    if n_classes < 2 {
                        return Err(Error::Format {
                            line: n,
                            message: "n_classes must be >= 2".into(),
                        });
                    }
                }
            }
            Some(found) => break found,
        }
    };

    let cols: Vec<&str> = header.split(',').collect();
    let dim = cols.len().saturating_sub(1);
    let header_ok = cols.first() == Some(&"label")
        && dim >= 1
        && cols[1..].iter().enumerate().all(|(i, c)| *c == format!("e{i}"));
    if !header_ok {
        return Err(Error::Format {
            line: header_line,
            message: "expected header `label,e0,e1,...`".into(),
        });
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row = labels.len();
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        let label: usize = fields[0].trim().parse().map_err(|_| Error::Data {
            row,
            col: Some(0),
            message: format!("label `{}` is not a non-negative integer", fields[0]),
        })?;
        if label >= n_classes {
            return Err(Error::Data {
                row,
                col: Some(0),
                message: format!("label {label} out of range [0, {n_classes})"),
            });
        }
        labels.push(label);
        for (c, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Data {
                row,
                col: Some(c + 1),
                message: format!("`{f}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    col: Some(c + 1),
                    message: "non-finite value".into(),
                });
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Format {
            line: header_line,
            message: "no data rows after header".into(),
        });
    }
    let n = labels.len();
    Dataset::new(Matrix::from_vec(n, dim, data)?, labels, n_classes)
}

/// Renders the embedding CSV format with 17 significant digits per value.
pub fn format_embedding_csv(data: &Dataset) -> String {
    let mut out = String::with_capacity(data.len() * data.dim() * 24);
    let _ = writeln!(out, "# n_classes={}", data.n_classes());
    out.push_str("label");
    for i in 0..data.dim() {
        let _ = write!(out, ",e{i}");
    }
    out.push('\n');
    for (r, &y) in data.labels().iter().enumerate() {
        let _ = write!(out, "{y}");
        for v in data.features().row(r) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_embedding_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_embedding_csv(data)).map_err(|e| Error::io(path, e))
}

/// Class centers: row `c` is `scale ·` a unit-normalized standard Gaussian
/// draw keyed by `(center_seed, c)`.
pub fn class_centers(n_classes: usize, dim: usize, scale: f64, center_seed: u64) -> Matrix {
    let mut centers = Matrix::zeros(n_classes, dim);
    for c in 0..n_classes {
        let row = unit_gaussian(dim, mix(center_seed, &[c as u64]));
        for (dst, v) in centers.row_mut(c).iter_mut().zip(row) {
            *dst = scale * v;
        }
    }
    centers
}

fn unit_gaussian(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v[0] = 1.0;
    }
    v
}

/// `n_per_class` samples per center row, class-major order, each
/// `center + noise_sigma · N(0, I)`.
pub fn sample_around(centers: &Matrix, n_per_class: usize, noise_sigma: f64, sample_seed: u64) -> Result<Dataset> {
    let (n_classes, dim) = centers.shape();
    let mut rng = rng_from(sample_seed);
    let n = n_classes * n_per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..n_classes {
        for _ in 0..n_per_class {
            for &mu in centers.row(c) {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(mu + noise_sigma * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, labels, n_classes)
}

/// Isotropic Gaussian clusters around [`class_centers`].
pub fn synth_gaussian(
    n_per_class: usize,
    n_classes: usize,
    dim: usize,
    center_scale: f64,
    noise_sigma: f64,
    center_seed: u64,
    sample_seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::config("n_per_class", "must be >= 1"));
    }
    if n_classes < 2 {
        return Err(Error::config("n_classes", "must be >= 2"));
    }
    if dim == 0 {
        return Err(Error::config("dim", "must be >= 1"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::config("noise_sigma", "must be >= 0"));
    }
    let centers = class_centers(n_classes, dim, center_scale, center_seed);
    sample_around(&centers, n_per_class, noise_sigma, sample_seed)
}

/// A sequence of synthetic events sharing one label set whose class centers
/// drift from event to event.
///
/// Event `k` puts class `c` at `scale · normalize((1 − drift)·base_c + drift·fresh_{k,c})`,
/// where `base` is shared by all events and `fresh` is redrawn per event.
/// `drift = 1` redraws centers independently per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSuite {
    pub events: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub valid_per_class: usize,
    pub test_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub drift: f64,
    pub seed: u64,
}

impl Default for SyntheticSuite {
    fn default() -> Self {
        SyntheticSuite {
            events: 3,
            n_classes: 10,
            dim: EMBEDDING_DIM,
            train_per_class: 30,
            valid_per_class: 10,
            test_per_class: 20,
            center_scale: 3.0,
            noise_sigma: 1.0,
            drift: 0.6,
            seed: 0,
        }
    }
}

impl SyntheticSuite {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("events", self.events),
            ("train_per_class", self.train_per_class),
            ("valid_per_class", self.valid_per_class),
            ("test_per_class", self.test_per_class),
            ("dim", self.dim),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("data.synthetic.{field}"), "must be >= 1"));
            }
        }
        if self.n_classes < 2 {
            return Err(Error::config("data.synthetic.n_classes", "must be >= 2"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("data.synthetic.noise_sigma", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::config("data.synthetic.drift", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Centers of event `k`.
    pub fn centers(&self, k: usize) -> Matrix {
        let base = class_centers(self.n_classes, self.dim, 1.0, mix(self.seed, &[0xba5e]));
        let fresh = class_centers(self.n_classes, self.dim, 1.0, mix(self.seed, &[0xf4e5, k as u64]));
        let mut out = Matrix::zeros(self.n_classes, self.dim);
        for c in 0..self.n_classes {
            let blended: Vec<f64> = base
                .row(c)
                .iter()
                .zip(fresh.row(c))
                .map(|(b, f)| (1.0 - self.drift) * b + self.drift * f)
                .collect();
            let norm = blended.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (dst, v) in out.row_mut(c).iter_mut().zip(&blended) {
                *dst = self.center_scale * v / norm;
            }
        }
        out
    }

    pub fn generate(&self) -> Result<Vec<EventSplits>> {
        self.validate()?;
        (0..self.events)
            .map(|k| {
                let centers = self.centers(k);
                let seed = |split: u64| mix(self.seed, &[0x5a3b, k as u64, split]);
                EventSplits::new(
                    format!("event{k}"),
                    sample_around(&centers, self.train_per_class, self.noise_sigma, seed(0))?,
                    sample_around(&centers, self.valid_per_class, self.noise_sigma, seed(1))?,
                    sample_around(&centers, self.test_per_class, self.noise_sigma, seed(2))?,
                )
            })
            .collect()
    }
}

/// Train/valid/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

/// Seeded shuffle, then contiguous train/valid/test cuts. Valid and test get
/// `floor(N·fraction)` rows; train gets the remainder.
pub fn split_dataset(data: &Dataset, fractions: SplitFractions, seed: u64) -> Result<EventSplits> {
    let SplitFractions { train, valid, test } = fractions;
    if !(train > 0.0 && valid > 0.0 && test > 0.0) {
        return Err(Error::config("fractions", "all fractions must be positive"));
    }
    if ((train + valid + test) - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", "fractions must sum to 1"));
    }
    let (n_train, n_valid, n_test) = split_sizes(data.len(), fractions);
    for (name, n) in [("train", n_train), ("valid", n_valid), ("test", n_test)] {
        if n == 0 {
            return Err(Error::config(
                format!("fractions.{name}"),
                format!("{name} split would be empty for N = {}", data.len()),
            ));
        }
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng_from(mix(seed, &[0x5911])));
    let (tr, rest) = idx.split_at(n_train);
    let (va, te) = rest.split_at(n_valid);
    EventSplits::new("split", data.subset(tr)?, data.subset(va)?, data.subset(te)?)
}

pub(crate) fn split_sizes(n: usize, f: SplitFractions) -> (usize, usize, usize) {
    let floor = |x: f64| (n as f64 * x + 1e-9).floor() as usize;
    let (v, t) = (floor(f.valid), floor(f.test));
    (n.saturating_sub(v + t), v, t)
}

/// One mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Row indices into the source dataset.
    pub indices: Vec<usize>,
    pub features: Matrix,
    pub labels: Vec<usize>,
}

/// Row order for one epoch: a permutation keyed by `(seed, epoch)` cut into
/// `ceil(N / batch_size)` chunks, the last possibly short.
pub fn batch_order(n: usize, batch_size: usize, epoch: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(mix(seed, &[0xba7c, epoch as u64])));
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn batch_iter(data: &Dataset, batch_size: usize, epoch: usize, seed: u64) -> impl Iterator<Item = Batch> + '_ {
    batch_order(data.len(), batch_size, epoch, seed)
        .into_iter()
        .map(move |indices| Batch {
            features: data.features().gather_rows(&indices),
            labels: indices.iter().map(|&i| data.labels()[i]).collect(),
            indices,
        })
}
