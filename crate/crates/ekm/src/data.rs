//! Dataset ingestion, min-max scaling, and stratified k-fold partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EkmError, Result};

/// One labeled example: a feature vector plus a contiguous class id.
///
/// `source_index` is the example's position in the dataset it was taken
/// from; prototype ranking uses it for deterministic tie-breaking and to
/// exclude an example from its own neighbor list.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
    pub source_index: usize,
}

/// Which column of a CSV file holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    First,
    Last,
}

/// An immutable labeled dataset with a uniform feature dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
    pub dimension: usize,
    /// Original label tokens, indexed by class id (first-appearance order).
    pub label_names: Vec<String>,
    /// Number of examples per class id.
    pub class_counts: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from examples whose labels already are contiguous
    /// ids into `label_names`.
    pub fn new(
        name: impl Into<String>,
        examples: Vec<LabeledExample>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if examples.is_empty() {
            return Err(EkmError::InvalidInput(format!("dataset {name} is empty")));
        }
        let dimension = examples[0].features.len();
        if dimension == 0 {
            return Err(EkmError::InvalidInput(format!(
                "dataset {name} has no feature columns"
            )));
        }
        let mut class_counts = vec![0usize; label_names.len()];
        for (i, e) in examples.iter().enumerate() {
            if e.features.len() != dimension {
                return Err(EkmError::InvalidInput(format!(
                    "dataset {name}: example {i} has dimension {} != {dimension}",
                    e.features.len()
                )));
            }
            if e.label >= label_names.len() {
                return Err(EkmError::InvalidInput(format!(
                    "dataset {name}: example {i} has label id {} out of range",
                    e.label
                )));
            }
            class_counts[e.label] += 1;
        }
        Ok(Dataset { name, examples, dimension, label_names, class_counts })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// New dataset from a subset of rows, re-indexed from 0. The class id
    /// space is kept intact even if some class is absent from the subset.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        let examples: Vec<LabeledExample> = indices
            .iter()
            .enumerate()
            .map(|(new_idx, &i)| LabeledExample {
                features: self.examples[i].features.clone(),
                label: self.examples[i].label,
                source_index: new_idx,
            })
            .collect();
        let mut class_counts = vec![0usize; self.label_names.len()];
        for e in &examples {
            class_counts[e.label] += 1;
        }
        Dataset {
            name: name.into(),
            examples,
            dimension: self.dimension,
            label_names: self.label_names.clone(),
            class_counts,
        }
    }

    /// Indices of the examples of class `c`, in dataset order.
    pub fn class_members(&self, c: usize) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == c)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Loads a numeric CSV file.
///
/// The label column position is flag-selected; labels are mapped to
/// contiguous ids in first-appearance order and the original tokens are
/// retained in `label_names`. Accepts LF or CRLF endings and an optional
/// single header row.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: LabelColumn,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let load_err = |message: String| EkmError::DatasetLoad {
        path: path.to_path_buf(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| load_err(e.to_string()))?;

    let mut examples = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut dimension = None;

    for (row_idx, record) in reader.records().enumerate() {
        // Rows are reported 1-based, counting the header if present.
        let row_no = row_idx + 1 + usize::from(has_header);
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => load_err(format!(
                "ragged row {row_no}: expected {expected_len} fields, found {len}"
            )),
            _ => load_err(format!("row {row_no}: {e}")),
        })?;
        if record.len() < 2 {
            return Err(load_err(format!(
                "row {row_no} has {} fields; need at least one feature and a label",
                record.len()
            )));
        }
        let label_pos = match label_column {
            LabelColumn::First => 0,
            LabelColumn::Last => record.len() - 1,
        };
        let mut features = Vec::with_capacity(record.len() - 1);
        let mut label_token = None;
        for (col_idx, field) in record.iter().enumerate() {
            if col_idx == label_pos {
                // The label must be numeric, but its token is kept verbatim
                // as the class name.
                field.parse::<f64>().map_err(|_| {
                    load_err(format!(
                        "non-numeric label '{field}' at row {row_no}, column {}",
                        col_idx + 1
                    ))
                })?;
                label_token = Some(field.to_string());
            } else {
                let v = field.parse::<f64>().map_err(|_| {
                    load_err(format!(
                        "non-numeric cell '{field}' at row {row_no}, column {}",
                        col_idx + 1
                    ))
                })?;
                features.push(v);
            }
        }
        let token = label_token.expect("label position within record");
        let label = match label_names.iter().position(|t| *t == token) {
            Some(id) => id,
            None => {
                label_names.push(token);
                label_names.len() - 1
            }
        };
        if let Some(d) = dimension {
            debug_assert_eq!(d, features.len());
        } else {
            dimension = Some(features.len());
        }
        let source_index = examples.len();
        examples.push(LabeledExample { features, label, source_index });
    }

    if examples.is_empty() {
        return Err(load_err("no data rows".into()));
    }
    if label_names.len() < 2 {
        return Err(load_err(format!(
            "only one class ('{}') present; need at least two",
            label_names[0]
        )));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(name, examples, label_names)
}

/// Per-feature min-max ranges fitted on a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

/// Fits per-feature minima and maxima on `train` only.
pub fn scale_fit(train: &[LabeledExample]) -> ScalingParams {
    assert!(!train.is_empty(), "scale_fit needs a nonempty training set");
    let d = train[0].features.len();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for e in train {
        for (f, &v) in e.features.iter().enumerate() {
            mins[f] = mins[f].min(v);
            maxs[f] = maxs[f].max(v);
        }
    }
    ScalingParams { mins, maxs }
}

impl ScalingParams {
    /// Maps feature `f` to `(v - min) / (max - min)`; constant features map
    /// to 0. Values outside the training range land outside `[0, 1]` and
    /// are not clipped.
    pub fn apply_point(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&mn, &mx))| if mx > mn { (v - mn) / (mx - mn) } else { 0.0 })
            .collect()
    }
}

/// Applies fitted scaling to a set of examples, preserving labels and
/// source indices.
pub fn scale_apply(params: &ScalingParams, examples: &[LabeledExample]) -> Vec<LabeledExample> {
    examples
        .iter()
        .map(|e| LabeledExample {
            features: params.apply_point(&e.features),
            label: e.label,
            source_index: e.source_index,
        })
        .collect()
}

/// A stratified k-fold partition: `folds[f]` holds fold `f`'s test indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// The complement of fold `fold`, in ascending order.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut in_test = vec![false; self.n];
        for &i in &self.folds[fold] {
            in_test[i] = true;
        }
        (0..self.n).filter(|&i| !in_test[i]).collect()
    }
}

/// Stratified k-fold partition.
///
/// Within each class the examples are shuffled, then the class-ordered
/// sequence is dealt round-robin over the folds, so every fold receives
/// `floor(n_c / k)` or `ceil(n_c / k)` members of class `c` and fold sizes
/// differ by at most one.
pub fn stratified_folds<R: Rng>(dataset: &Dataset, k: usize, rng: &mut R) -> Result<FoldPlan> {
    if k < 2 {
        return Err(EkmError::InvalidInput(format!("fold count {k} < 2")));
    }
    for (c, &count) in dataset.class_counts.iter().enumerate() {
        if count < k {
            return Err(EkmError::InvalidInput(format!(
                "class '{}' has {count} members, fewer than {k} folds",
                dataset.label_names[c]
            )));
        }
    }
    let mut dealt = Vec::with_capacity(dataset.len());
    for c in 0..dataset.n_classes() {
        let mut members = dataset.class_members(c);
        members.shuffle(rng);
        dealt.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (g, idx) in dealt.into_iter().enumerate() {
        folds[g % k].push(idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { n: dataset.len(), folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_csv() {
        let f = write_tmp("1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n");
        let ds = load_csv(f.path(), LabelColumn::Last, false).unwrap();
        assert_eq!(ds.dimension, 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.label_names, vec!["0", "1"]);
        assert_eq!(ds.class_counts, vec![2, 1]);
        assert_eq!(ds.examples[1].label, 1);
        assert_eq!(ds.examples[2].source_index, 2);
    }

    #[test]
    fn load_label_first_and_header() {
        let f = write_tmp("class,a,b\n7,1.0,2.0\n9,3.0,4.0\n");
        let ds = load_csv(f.path(), LabelColumn::First, true).unwrap();
        assert_eq!(ds.dimension, 2);
        assert_eq!(ds.label_names, vec!["7", "9"]);
        assert_eq!(ds.examples[0].features, vec![1.0, 2.0]);
    }

    #[test]
    fn load_errors() {
        let ragged = write_tmp("1,2,0\n1,0\n");
        let err = load_csv(ragged.path(), LabelColumn::Last, false).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");

        let bad_cell = write_tmp("1,2,0\n1,x,1\n");
        let err = load_csv(bad_cell.path(), LabelColumn::Last, false).unwrap_err();
        assert!(err.to_string().contains("row 2") && err.to_string().contains("column 2"), "{err}");

        let one_class = write_tmp("1,2,0\n3,4,0\n");
        assert!(load_csv(one_class.path(), LabelColumn::Last, false).is_err());

        assert!(load_csv("/nonexistent/file.csv", LabelColumn::Last, false).is_err());
    }

    #[test]
    fn crlf_accepted() {
        let f = write_tmp("1,2,0\r\n3,4,1\r\n");
        let ds = load_csv(f.path(), LabelColumn::Last, false).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn scaling_basic() {
        let exs = vec![
            LabeledExample { features: vec![2.0, 5.0], label: 0, source_index: 0 },
            LabeledExample { features: vec![4.0, 5.0], label: 1, source_index: 1 },
        ];
        let p = scale_fit(&exs);
        assert_eq!(p.apply_point(&[3.0, 5.0]), vec![0.5, 0.0]);
        // outside the training range: not clipped
        assert_eq!(p.apply_point(&[6.0, 5.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let mut examples = Vec::new();
        for i in 0..100 {
            examples.push(LabeledExample {
                features: vec![i as f64],
                label: usize::from(i >= 50),
                source_index: i,
            });
        }
        let ds = Dataset::new("even", examples, vec!["a".into(), "b".into()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plan = stratified_folds(&ds, 10, &mut rng).unwrap();

        let mut seen = vec![false; 100];
        for f in 0..10 {
            assert_eq!(plan.folds[f].len(), 10);
            let a = plan.folds[f].iter().filter(|&&i| ds.examples[i].label == 0).count();
            assert_eq!(a, 5);
            for &i in &plan.folds[f] {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(plan.train_indices(0).len(), 90);
    }

    #[test]
    fn folds_deterministic() {
        let mut examples = Vec::new();
        for i in 0..40 {
            examples.push(LabeledExample {
                features: vec![i as f64],
                label: i % 2,
                source_index: i,
            });
        }
        let ds = Dataset::new("d", examples, vec!["x".into(), "y".into()]).unwrap();
        let a = stratified_folds(&ds, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = stratified_folds(&ds, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn folds_class_too_small() {
        let examples = vec![
            LabeledExample { features: vec![0.0], label: 0, source_index: 0 },
            LabeledExample { features: vec![1.0], label: 1, source_index: 1 },
            LabeledExample { features: vec![2.0], label: 0, source_index: 2 },
        ];
        let ds = Dataset::new("d", examples, vec!["a".into(), "b".into()]).unwrap();
        assert!(stratified_folds(&ds, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
