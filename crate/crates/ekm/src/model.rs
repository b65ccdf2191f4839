//! Self-contained model files: the kernel text, the prototype set, the
//! label mapping, and any scaling, enough to classify new points anywhere.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledExample, ScalingParams};
use crate::error::{EkmError, Result};
use crate::fitness::classify_nn;
use crate::kernel::{parse, KernelExpr};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PrototypeRecord {
    features: Vec<f64>,
    label: usize,
}

/// On-disk model layout (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    dataset: String,
    dimension: usize,
    label_names: Vec<String>,
    kernel: String,
    prototypes: Vec<PrototypeRecord>,
    scaling: Option<ScalingParams>,
}

/// A ready-to-use kernel nearest-neighbor classifier.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub dataset: String,
    pub dimension: usize,
    pub label_names: Vec<String>,
    pub kernel: KernelExpr,
    pub prototypes: Vec<LabeledExample>,
    pub scaling: Option<ScalingParams>,
}

impl Classifier {
    /// Assembles a classifier from a trained kernel and its prototype set.
    /// Prototype features must be in the same space the kernel was trained
    /// on (already scaled when `scaling` is present).
    pub fn new(
        dataset: impl Into<String>,
        dimension: usize,
        label_names: Vec<String>,
        kernel: KernelExpr,
        prototypes: Vec<LabeledExample>,
        scaling: Option<ScalingParams>,
    ) -> Result<Self> {
        let classifier = Classifier {
            dataset: dataset.into(),
            dimension,
            label_names,
            kernel,
            prototypes,
            scaling,
        };
        classifier.check()?;
        Ok(classifier)
    }

    fn check(&self) -> Result<()> {
        if self.prototypes.is_empty() {
            return Err(EkmError::Model("no prototypes".into()));
        }
        if let Some(p) = self.prototypes.iter().find(|p| p.features.len() != self.dimension) {
            return Err(EkmError::Model(format!(
                "prototype dimension {} does not match model dimension {}",
                p.features.len(),
                self.dimension
            )));
        }
        if self.kernel.min_dim() > self.dimension {
            return Err(EkmError::Model(format!(
                "kernel needs dimension >= {}, model declares {}",
                self.kernel.min_dim(),
                self.dimension
            )));
        }
        if let Some(s) = &self.scaling {
            if s.mins.len() != self.dimension || s.maxs.len() != self.dimension {
                return Err(EkmError::Model("scaling dimension mismatch".into()));
            }
        }
        if let Some(p) = self.prototypes.iter().find(|p| p.label >= self.label_names.len()) {
            return Err(EkmError::Model(format!("prototype label {} unmapped", p.label)));
        }
        Ok(())
    }

    /// Predicts the class id of a raw point by 1-NN over the stored
    /// prototypes, applying the stored scaling first.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        if features.len() != self.dimension {
            return Err(EkmError::InvalidInput(format!(
                "point dimension {} does not match model dimension {}",
                features.len(),
                self.dimension
            )));
        }
        let scaled;
        let point = match &self.scaling {
            Some(params) => {
                scaled = params.apply_point(features);
                &scaled
            }
            None => features,
        };
        Ok(classify_nn(&self.kernel, &self.prototypes, point, 1))
    }

    /// Predicts and maps the class id back to its original label token.
    pub fn predict_label(&self, features: &[f64]) -> Result<&str> {
        Ok(&self.label_names[self.predict(features)?])
    }

    /// Writes the model as a self-contained JSON file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dataset: self.dataset.clone(),
            dimension: self.dimension,
            label_names: self.label_names.clone(),
            kernel: self.kernel.format(),
            prototypes: self
                .prototypes
                .iter()
                .map(|p| PrototypeRecord { features: p.features.clone(), label: p.label })
                .collect(),
            scaling: self.scaling.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Loads and validates a model file; rejects unknown versions and any
    /// dimension inconsistency before constructing the classifier.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(&path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(EkmError::Model(format!(
                "unsupported model format version {} (expected {})",
                file.format_version, MODEL_FORMAT_VERSION
            )));
        }
        let kernel = parse(&file.kernel, file.dimension)?;
        let prototypes = file
            .prototypes
            .into_iter()
            .enumerate()
            .map(|(i, p)| LabeledExample {
                features: p.features,
                label: p.label,
                source_index: i,
            })
            .collect();
        Classifier::new(
            file.dataset,
            file.dimension,
            file.label_names,
            kernel,
            prototypes,
            file.scaling,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_classifier() -> Classifier {
        let kernel = parse("(ADD2 (DOT) (MUL2 (E 0.5) (EUC)))", 2).unwrap();
        let prototypes = vec![
            LabeledExample { features: vec![0.0, 0.0], label: 0, source_index: 0 },
            LabeledExample { features: vec![0.5, 0.1], label: 0, source_index: 1 },
            LabeledExample { features: vec![5.0, 5.0], label: 1, source_index: 2 },
        ];
        Classifier::new(
            "toy",
            2,
            vec!["neg".into(), "pos".into()],
            kernel,
            prototypes,
            None,
        )
        .unwrap()
    }

    #[test]
    fn save_load_predict_round_trip() {
        let classifier = toy_classifier();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        classifier.save(&path).unwrap();
        let loaded = Classifier::load(&path).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-2.0..7.0), rng.random_range(-2.0..7.0)];
            assert_eq!(classifier.predict(&x).unwrap(), loaded.predict(&x).unwrap());
        }
        assert_eq!(loaded.predict_label(&[4.9, 4.9]).unwrap(), "pos");
    }

    #[test]
    fn corrupted_file_is_a_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, "{ \"format_version\": 1, garbage").unwrap();
        assert!(matches!(Classifier::load(&path), Err(EkmError::Json(_))));
    }

    #[test]
    fn version_mismatch_rejected() {
        let classifier = toy_classifier();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        classifier.save(&path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(Classifier::load(&path), Err(EkmError::Model(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let classifier = toy_classifier();
        assert!(classifier.predict(&[1.0]).is_err());
    }

    #[test]
    fn scaling_applied_on_predict() {
        let mut classifier = toy_classifier();
        // Shift the decision boundary: stored prototypes live in the scaled
        // space, so raw queries must be scaled before matching.
        classifier.scaling = Some(ScalingParams {
            mins: vec![0.0, 0.0],
            maxs: vec![10.0, 10.0],
        });
        // Raw (5, 5) scales to (0.5, 0.5), nearer the class-0 prototypes.
        assert_eq!(classifier.predict(&[5.0, 5.0]).unwrap(), 0);
    }
}
