//! Datasets, parsers, preprocessing and seeded generators.
//!
//! All randomness goes through `ChaCha8Rng` seeded from a `u64`; its output
//! stream is fixed by the algorithm, so seeded results are reproducible
//! across runs and platforms.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense binary-classification data: row-major features and labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    d: usize,
    name: Option<String>,
}

impl Dataset {
    /// `features` is row-major with `labels.len()` rows.
    pub fn new(features: Vec<f64>, labels: Vec<f64>, d: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 || d == 0 {
            return Err(Error::usage("a dataset needs n >= 1 and d >= 1"));
        }
        if features.len() != n * d {
            return Err(Error::usage(format!(
                "feature buffer has {} values, expected {n} x {d}",
                features.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::usage(format!(
                "label {} at row {i} is not -1 or +1",
                labels[i]
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("features must be finite"));
        }
        Ok(Dataset {
            x: features,
            y: labels,
            d,
            name: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::usage("rows have differing dimensions"));
        }
        Dataset::new(rows.concat(), labels, d)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.x.chunks_exact(self.d).collect()
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn count_positive(&self) -> usize {
        self.y.iter().filter(|&&l| l > 0.0).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.count_positive();
        pos > 0 && pos < self.n()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::usage("empty subset"));
        }
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::usage(format!("index {i} out of range")));
            }
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Ok(Dataset {
            x,
            y,
            d: self.d,
            name: self.name.clone(),
        })
    }

    /// Appends one sample.
    pub fn with_sample(&self, x: &[f64], label: f64) -> Result<Self> {
        if x.len() != self.d {
            return Err(Error::usage("appended sample has the wrong dimension"));
        }
        let mut feats = self.x.clone();
        feats.extend_from_slice(x);
        let mut labels = self.y.clone();
        labels.push(label);
        let mut ds = Dataset::new(feats, labels, self.d)?;
        ds.name = self.name.clone();
        Ok(ds)
    }

    pub(crate) fn with_labels(&self, labels: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len(), self.y.len());
        Dataset {
            x: self.x.clone(),
            y: labels,
            d: self.d,
            name: self.name.clone(),
        }
    }

    /// Writes CSV rows `x_1,...,x_d,label` without a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n() {
            let mut fields: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            fields.push(if self.y[i] > 0.0 { "+1" } else { "-1" }.to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("label '{token}' is not numeric")))?;
    if v == 1.0 || v == -1.0 {
        Ok(v)
    } else {
        Err(Error::parse(line, format!("label '{token}' is not -1 or +1")))
    }
}

fn parse_feature(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("field '{}' is not a number", token.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("field '{}' is not finite", token.trim())));
    }
    Ok(v)
}

/// Comma-separated rows, label in the last column. A first row containing a
/// non-numeric field is treated as a header. Blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut d: Option<usize> = None;
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if first {
            first = false;
            if fields.iter().any(|f| f.trim().parse::<f64>().is_err()) && looks_like_header(&fields)
            {
                continue;
            }
        }
        if fields.len() < 2 {
            return Err(Error::parse(
                line_no,
                "need at least one feature and a label",
            ));
        }
        let width = fields.len() - 1;
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(Error::parse(
                    line_no,
                    format!("expected {w} features, found {width}"),
                ))
            }
            _ => {}
        }
        for f in &fields[..width] {
            x.push(parse_feature(f, line_no)?);
        }
        y.push(parse_label(fields[width], line_no)?);
    }
    let d = d.ok_or_else(|| Error::parse(1, "no data rows"))?;
    Dataset::new(x, y, d)
}

// A header has no numeric fields at all; a data row with one bad field is an error.
fn looks_like_header(fields: &[&str]) -> bool {
    fields.iter().all(|f| f.trim().parse::<f64>().is_err())
}

/// LIBSVM rows `label idx:val ...` with 1-based, strictly increasing indices.
/// Missing entries are zero; `dim` fixes the width, otherwise the largest
/// index seen is used.
pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<Dataset> {
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut y = Vec::new();
    let mut max_idx = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or(""), line_no)?;
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, format!("expected idx:val, got '{tok}'")))?;
            let i: i64 = i
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad index '{i}'")))?;
            if i <= 0 {
                return Err(Error::parse(line_no, format!("index {i} is not >= 1")));
            }
            let i = i as usize;
            if i <= prev {
                return Err(Error::parse(
                    line_no,
                    format!("index {i} does not increase (previous {prev})"),
                ));
            }
            prev = i;
            entries.push((i, parse_feature(v, line_no)?));
        }
        max_idx = max_idx.max(prev);
        sparse.push(entries);
        y.push(label);
    }
    if y.is_empty() {
        return Err(Error::parse(1, "no data rows"));
    }
    let d = match dim {
        Some(d) if d < max_idx => {
            return Err(Error::usage(format!(
                "dimension {d} is smaller than the largest index {max_idx}"
            )))
        }
        Some(d) => d,
        None => max_idx,
    };
    if d == 0 {
        return Err(Error::usage(
            "no features present; pass an explicit dimension",
        ));
    }
    let mut x = vec![0.0; y.len() * d];
    for (r, entries) in sparse.iter().enumerate() {
        for &(i, v) in entries {
            x[r * d + i - 1] = v;
        }
    }
    Dataset::new(x, y, d)
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.d() != self.mu.len() {
            return Err(Error::usage(format!(
                "transform expects {} features, data has {}",
                self.mu.len(),
                ds.d()
            )));
        }
        let mut x = ds.features().to_vec();
        for row in x.chunks_exact_mut(ds.d()) {
            self.apply_row(row);
        }
        let mut out = Dataset::new(x, ds.labels().to_vec(), ds.d())?;
        out.name = ds.name.clone();
        Ok(out)
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mu).zip(&self.sigma) {
            *v = (*v - m) / s;
        }
    }
}

/// Zero mean and unit population standard deviation per feature. Features
/// with std below 1e-12 are only centered (sigma recorded as 1).
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::usage("standardization needs at least two samples"));
    }
    let d = ds.d();
    let mut mu = vec![0.0; d];
    for row in ds.rows() {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in ds.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mu) {
            *s += (v - m) * (v - m);
        }
    }
    let sigma = var
        .into_iter()
        .map(|v| {
            let sd = (v / n as f64).sqrt();
            if sd < 1e-12 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    let t = Standardizer { mu, sigma };
    Ok((t.apply(ds)?, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&rate) {
            return Err(Error::domain(format!(
                "noise rate must lie in [0, 0.5], got {rate}"
            )));
        }
        Ok(NoiseSpec { rate, seed })
    }

    pub fn flip_count(&self, n: usize) -> usize {
        (self.rate * n as f64).floor() as usize
    }

    /// Indices flipped for a dataset of size `n`, sorted.
    pub fn flip_indices(&self, n: usize) -> Vec<usize> {
        let mut rng = rng_from_seed(self.seed);
        let mut idx = index::sample(&mut rng, n, self.flip_count(n)).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Negates exactly `floor(rate * n)` labels chosen without replacement.
/// Applying the same spec twice restores the original labels.
pub fn inject_label_noise(ds: &Dataset, spec: &NoiseSpec) -> Dataset {
    let mut labels = ds.labels().to_vec();
    for i in spec.flip_indices(ds.n()) {
        labels[i] = -labels[i];
    }
    ds.with_labels(labels)
}

/// One `(train, test)` pair of index lists.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Stratified k-fold split. Each class is shuffled and dealt round-robin
/// over the folds; the negative class continues where the positive class
/// stopped so total fold sizes also differ by at most one.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = ds.n();
    if k < 2 || k > n {
        return Err(Error::usage(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| ds.labels()[i] > 0.0);
    if pos.len() < k || neg.len() < k {
        return Err(Error::usage(format!(
            "each class needs at least k={k} samples (have {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut test: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        test[slot % k].push(i);
    }
    Ok(test
        .into_iter()
        .map(|mut t| {
            t.sort_unstable();
            let train = (0..n).filter(|i| t.binary_search(i).is_err()).collect();
            (train, t)
        })
        .collect())
}

/// Seeded stratified holdout split; `test_fraction` of each class goes to the test set.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::usage("test fraction must lie in (0, 1)"));
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..ds.n()).partition(|&i| ds.labels()[i] > 0.0);
    let mut rng = rng_from_seed(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [&pos, &neg] {
        let m = ((class.len() as f64) * test_fraction).round() as usize;
        if m == 0 || m == class.len() {
            return Err(Error::usage(
                "each class needs enough samples for both train and test splits",
            ));
        }
        test.extend_from_slice(&class[..m]);
        train.extend_from_slice(&class[m..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Two isotropic Gaussians with means `+-(separation/2)/sqrt(d) * (1,...,1)`.
/// Rows alternate `+1, -1, +1, ...`.
pub fn synth_two_gaussians(
    n: usize,
    d: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::usage(format!("n must be even and positive, got {n}")));
    }
    if d == 0 {
        return Err(Error::usage("d must be >= 1"));
    }
    if !separation.is_finite() {
        return Err(Error::domain("separation must be finite"));
    }
    let normal = Normal::new(0.0, sigma)
        .ok()
        .filter(|_| sigma.is_finite() && sigma > 0.0)
        .ok_or_else(|| Error::domain(format!("sigma must be > 0, got {sigma}")))?;
    let offset = 0.5 * separation / (d as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..d {
            x.push(label * offset + normal.sample(&mut rng));
        }
        y.push(label);
    }
    Ok(Dataset::new(x, y, d)?.with_name("two-gaussians"))
}
