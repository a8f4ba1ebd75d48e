//! Bundled synthetic benchmark: isotropic Gaussian class blobs with
//! train/test splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::rng::{RngSeed, SeededRng, Stream};

/// Features with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledSet {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "LabeledSet::new",
                format!("{} feature rows", features.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(row) = labels.iter().position(|&c| c >= num_classes) {
            return Err(Error::Data {
                row,
                msg: format!("label {} outside 0..{num_classes}", labels[row]),
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Indices of rows whose label is in `classes`.
    pub fn rows_of(&self, classes: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.num_classes];
        for &c in classes {
            if c < self.num_classes {
                member[c] = true;
            }
        }
        (0..self.len()).filter(|&i| member[self.labels[i]]).collect()
    }

    pub fn one_hot(&self) -> Result<DenseMatrix> {
        DenseMatrix::one_hot(&self.labels, self.num_classes)
    }

    /// Per-class mean feature vectors; classes without rows get `None`.
    pub fn centroids(&self) -> Vec<Option<Vec<f64>>> {
        let d = self.dim();
        let mut sums = vec![vec![0.0; d]; self.num_classes];
        let mut counts = vec![0usize; self.num_classes];
        for (i, &c) in self.labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(self.features.row(i)) {
                *s += v;
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Expected norm of the class centers.
    pub margin: f64,
    /// Per-coordinate noise std.
    pub noise: f64,
    pub seed: RngSeed,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 20,
            dim: 32,
            train_per_class: 100,
            test_per_class: 40,
            margin: 4.0,
            noise: 1.0,
            seed: RngSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub centers: DenseMatrix,
}

/// Draw order from the data stream of `seed`: all centers (`classes × dim`,
/// `N(0, margin²/dim)`), then train rows class-major, then test rows
/// class-major (`center + N(0, noise²)`), then one permutation of the train
/// rows and one of the test rows. Sample features are rounded to `f32` so a
/// suite written to a dataset file reads back unchanged.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticSuite> {
    if cfg.classes < 2 || cfg.dim == 0 || cfg.train_per_class == 0 || cfg.test_per_class == 0 {
        return Err(Error::Parameter(format!(
            "synthetic suite needs >= 2 classes and nonzero dims/counts, got {cfg:?}"
        )));
    }
    if !(cfg.margin > 0.0) || !(cfg.noise > 0.0) {
        return Err(Error::Parameter("margin and noise must be > 0".into()));
    }
    let mut rng = SeededRng::new(cfg.seed, Stream::Data);
    let center_std = cfg.margin / (cfg.dim as f64).sqrt();
    let centers_data: Vec<f64> = (0..cfg.classes * cfg.dim).map(|_| center_std * rng.normal()).collect();
    let centers = DenseMatrix::new(cfg.classes, cfg.dim, centers_data)?;

    let draw = |per_class: usize, rng: &mut SeededRng| {
        let mut data = Vec::with_capacity(cfg.classes * per_class * cfg.dim);
        let mut labels = Vec::with_capacity(cfg.classes * per_class);
        for c in 0..cfg.classes {
            for _ in 0..per_class {
                data.extend(
                    centers
                        .row(c)
                        .iter()
                        .map(|m| (m + cfg.noise * rng.normal()) as f32 as f64),
                );
                labels.push(c);
            }
        }
        (data, labels)
    };
    let (train_data, train_labels) = draw(cfg.train_per_class, &mut rng);
    let (test_data, test_labels) = draw(cfg.test_per_class, &mut rng);

    let train = LabeledSet::new(
        DenseMatrix::new(train_labels.len(), cfg.dim, train_data)?,
        train_labels,
        cfg.classes,
    )?;
    let test = LabeledSet::new(
        DenseMatrix::new(test_labels.len(), cfg.dim, test_data)?,
        test_labels,
        cfg.classes,
    )?;
    let train_perm = rng.permutation(train.len());
    let test_perm = rng.permutation(test.len());
    Ok(SyntheticSuite {
        train: train.subset(&train_perm),
        test: test.subset(&test_perm),
        centers,
    })
}

/// Accuracy of assigning every row to its nearest centroid (Euclidean).
pub fn nearest_centroid_accuracy(set: &LabeledSet, centroids: &[Option<Vec<f64>>]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let correct = (0..set.len())
        .filter(|&i| {
            let x = set.features.row(i);
            let mut best = (f64::INFINITY, usize::MAX);
            for (c, m) in centroids.iter().enumerate() {
                if let Some(m) = m {
                    let d: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, c);
                    }
                }
            }
            best.1 == set.labels[i]
        })
        .count();
    correct as f64 / set.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_sized() {
        let cfg = SynthConfig {
            classes: 5,
            dim: 8,
            train_per_class: 10,
            test_per_class: 4,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 50);
        assert_eq!(a.test.len(), 20);
        for c in 0..5 {
            assert_eq!(a.train.rows_of(&[c]).len(), 10);
        }
    }

    #[test]
    fn default_suite_is_centroid_separable() {
        let s = generate(&SynthConfig::default()).unwrap();
        let acc = nearest_centroid_accuracy(&s.test, &s.train.centroids());
        assert!(acc > 0.9, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig { classes: 1, ..SynthConfig::default() }).is_err());
        assert!(generate(&SynthConfig { noise: 0.0, ..SynthConfig::default() }).is_err());
    }
}
