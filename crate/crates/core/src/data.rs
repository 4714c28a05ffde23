//! Regression datasets: CSV loading, standardization, train/test splits.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SviError};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Csv,
}

/// `n` rows of `p` features (row-major) with scalar targets.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    pub n_features: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma_eps: f64,
    pub provenance: Provenance,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl RegressionDataset {
    pub fn new(
        n_features: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        sigma_eps: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(SviError::Shape("dataset needs at least one feature".into()));
        }
        if x.len() != n_features * y.len() {
            return Err(SviError::Shape(format!(
                "{} feature values for {} rows of {n_features} features",
                x.len(),
                y.len()
            )));
        }
        Ok(RegressionDataset {
            n_features,
            x,
            y,
            sigma_eps,
            provenance,
            feature_names: (0..n_features).map(|i| format!("x{i}")).collect(),
            target_name: "y".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_features)
    }

    pub fn pairs(&self) -> Vec<(&[f64], f64)> {
        self.rows().zip(self.y.iter().copied()).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Vec<(&[f64], f64)> {
        indices.iter().map(|&i| (self.row(i), self.y[i])).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        RegressionDataset {
            n_features: self.n_features,
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            sigma_eps: self.sigma_eps,
            provenance: self.provenance,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Writes a header row followed by one line per sample, target last.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_features + 1);
        for (row, y) in self.rows().zip(&self.y) {
            record.clear();
            record.extend(row.iter().map(|v| format_f64(*v)));
            record.push(format_f64(*y));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| SviError::io(path, e))?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    /// Negative values count from the end, `-1` is the last column.
    Index(i64),
}

impl TargetColumn {
    /// Integers are indices, anything else is a column name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<i64>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        }
    }
}

/// Loads a headed, comma-delimited numeric CSV. Rows in error messages are
/// 1-based file lines, counting the header as line 1; columns are 1-based.
pub fn load_csv(path: &Path, target: &TargetColumn) -> Result<RegressionDataset> {
    let file = std::fs::File::open(path).map_err(|e| SviError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let ncol = headers.len();
    let target_idx = match target {
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SviError::MissingColumn(name.clone()))?,
        TargetColumn::Index(i) => {
            let idx = if *i < 0 { ncol as i64 + i } else { *i };
            if idx < 0 || idx >= ncol as i64 {
                return Err(SviError::MissingColumn(format!("index {i}")));
            }
            idx as usize
        }
    };
    if ncol < 2 {
        return Err(SviError::Shape("CSV needs a target and at least one feature".into()));
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| SviError::Parse {
                row: line,
                col: c + 1,
                cell: cell.to_string(),
            })?;
            if c == target_idx {
                y.push(value);
            } else {
                x.push(value);
            }
        }
    }
    let mut ds = RegressionDataset::new(ncol - 1, x, y, 1.0, Provenance::Csv)?;
    ds.target_name = headers[target_idx].clone();
    ds.feature_names = headers
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h)
        .collect();
    Ok(ds)
}

/// Columnwise affine standardization fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_means: Vec<f64>,
    pub x_stds: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

pub fn fit_standardizer(train: &RegressionDataset) -> Result<Standardizer> {
    if train.is_empty() {
        return Err(SviError::Argument("cannot standardize an empty dataset".into()));
    }
    let p = train.n_features;
    let (x_means, x_stds) = (0..p)
        .map(|j| mean_std(train.x.iter().skip(j).step_by(p).copied()))
        .unzip();
    let (y_mean, y_std) = mean_std(train.y.iter().copied());
    Ok(Standardizer {
        x_means,
        x_stds,
        y_mean,
        y_std,
    })
}

impl Standardizer {
    pub fn apply(&self, ds: &RegressionDataset) -> Result<RegressionDataset> {
        if ds.n_features != self.x_means.len() {
            return Err(SviError::Shape(format!(
                "standardizer fitted on {} features, dataset has {}",
                self.x_means.len(),
                ds.n_features
            )));
        }
        let mut out = ds.clone();
        for row in out.x.chunks_exact_mut(ds.n_features) {
            for ((v, m), s) in row.iter_mut().zip(&self.x_means).zip(&self.x_stds) {
                *v = (*v - m) / s;
            }
        }
        for v in &mut out.y {
            *v = (*v - self.y_mean) / self.y_std;
        }
        out.sigma_eps = ds.sigma_eps / self.y_std;
        Ok(out)
    }

    pub fn invert_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_std + self.y_mean).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.1,
            seed: 0,
            replications: 20,
        }
    }
}

/// Row indices of one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn test_size(&self, n: usize) -> usize {
        ((self.test_fraction * n as f64).floor() as usize).max(1)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(SviError::Argument(format!(
                "test_fraction must lie in (0,1), got {}",
                self.test_fraction
            )));
        }
        if self.replications == 0 {
            return Err(SviError::Argument("replications must be positive".into()));
        }
        if n < 2 || self.test_size(n) >= n {
            return Err(SviError::Argument(format!(
                "{n} rows cannot be split with test_fraction {}",
                self.test_fraction
            )));
        }
        Ok(())
    }

    /// Seeded permutations, one per replication.
    pub fn indices(&self, n: usize) -> Result<Vec<SplitIndices>> {
        self.validate(n)?;
        let n_test = self.test_size(n);
        Ok((0..self.replications)
            .map(|r| {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut seeded(derive_seed(self.seed, r as u64)));
                let train = perm.split_off(n_test);
                SplitIndices { train, test: perm }
            })
            .collect())
    }
}

pub fn split(
    ds: &RegressionDataset,
    spec: &SplitSpec,
) -> Result<Vec<(RegressionDataset, RegressionDataset)>> {
    Ok(spec
        .indices(ds.len())?
        .into_iter()
        .map(|s| (ds.subset(&s.train), ds.subset(&s.test)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy(n: usize) -> RegressionDataset {
        let x = (0..2 * n).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let y = (0..n).map(|i| i as f64 * 0.5 - 2.0).collect();
        RegressionDataset::new(2, x, y, 1.0, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn loads_by_name_and_index() {
        let f = write("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let by_name = load_csv(f.path(), &TargetColumn::Name("y".into())).unwrap();
        assert_eq!(by_name.len(), 3);
        assert_eq!(by_name.n_features, 2);
        assert_eq!(by_name.x, vec![1.0, 2.0, 4.0, 5.0, 7.0, 8.0]);
        assert_eq!(by_name.y, vec![3.0, 6.0, 9.0]);
        assert_eq!(by_name.provenance, Provenance::Csv);
        let by_index = load_csv(f.path(), &TargetColumn::Index(-1)).unwrap();
        assert_eq!(by_name, by_index);

        let middle = load_csv(f.path(), &TargetColumn::parse("b")).unwrap();
        assert_eq!(middle.y, vec![2.0, 5.0, 8.0]);
        assert_eq!(middle.feature_names, vec!["a", "y"]);
    }

    #[test]
    fn reports_bad_cell_location() {
        let mut content = String::from("a,b,y\n");
        for r in 2..=10 {
            if r == 7 {
                content.push_str("1,oops,3\n");
            } else {
                content.push_str("1,2,3\n");
            }
        }
        let f = write(&content);
        match load_csv(f.path(), &TargetColumn::Name("y".into())) {
            Err(SviError::Parse { row, col, .. }) => assert_eq!((row, col), (7, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_inputs() {
        let f = write("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &TargetColumn::Name("y".into())),
            Err(SviError::MissingColumn(_))
        ));
        assert!(matches!(
            load_csv(f.path(), &TargetColumn::Index(5)),
            Err(SviError::MissingColumn(_))
        ));
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv"), &TargetColumn::Index(-1)),
            Err(SviError::Io { .. })
        ));
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let ds = RegressionDataset::new(
            2,
            vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0],
            vec![1.0, 2.0, 3.0],
            1.0,
            Provenance::Csv,
        )
        .unwrap();
        let st = fit_standardizer(&ds).unwrap();
        assert_eq!(st.x_stds[0], 1.0);
        let out = st.apply(&ds).unwrap();
        assert!(out.rows().all(|r| r[0] == 0.0));
    }

    #[test]
    fn standardized_statistics() {
        let ds = toy(37);
        let st = fit_standardizer(&ds).unwrap();
        let out = st.apply(&ds).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = out.rows().map(|r| r[j]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-10);
            assert!((std - 1.0).abs() < 1e-10);
        }
        let back = st.invert_y(&out.y);
        for (a, b) in back.iter().zip(&ds.y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn statistics_ignore_test_rows() {
        let ds = toy(30);
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 4,
            replications: 1,
        };
        let s = &spec.indices(ds.len()).unwrap()[0];
        let st = fit_standardizer(&ds.subset(&s.train)).unwrap();
        let mut poisoned = ds.clone();
        for &i in &s.test {
            poisoned.y[i] = 1e9;
            poisoned.x[2 * i] = -1e9;
        }
        let st2 = fit_standardizer(&poisoned.subset(&s.train)).unwrap();
        assert_eq!(st, st2);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = toy(10);
        let spec = SplitSpec {
            test_fraction: 0.1,
            seed: 1,
            replications: 3,
        };
        let pairs = split(&ds, &spec).unwrap();
        assert!(pairs.iter().all(|(tr, te)| tr.len() == 9 && te.len() == 1));
        assert_eq!(pairs, split(&ds, &spec).unwrap());
    }

    #[test]
    fn split_disjoint_cover_distinct() {
        let spec = SplitSpec {
            test_fraction: 0.1,
            seed: 9,
            replications: 20,
        };
        let splits = spec.indices(100).unwrap();
        for s in &splits {
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
        let distinct: HashSet<Vec<usize>> = splits
            .iter()
            .map(|s| s.test.iter().chain(&s.train).copied().collect())
            .collect();
        assert!(distinct.len() >= 19);
    }

    #[test]
    fn split_rejects_degenerate() {
        assert!(SplitSpec {
            test_fraction: 1.0,
            seed: 0,
            replications: 1
        }
        .indices(10)
        .is_err());
        assert!(SplitSpec::default().indices(1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy(5);
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(f.path()).unwrap();
        let back = load_csv(f.path(), &TargetColumn::Index(-1)).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
    }
}
