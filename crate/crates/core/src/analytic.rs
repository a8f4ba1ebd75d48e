//! Buffer layer and the recursive analytic classifier.
//!
//! The classifier keeps the ridge weight `W` and the autocorrelation memory
//! `R = (XᵀX + γI)⁻¹` over every row seen so far. New rows are folded in with
//! the Woodbury identity, so the weight after any sequence of updates equals
//! the joint ridge solution over all rows without storing any of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{gaussian_matrix, sym_inverse, Cholesky, DenseMatrix};
use crate::rng::RngSeed;

/// Default ridge regularizer.
pub const DEFAULT_GAMMA: f64 = 1e-2;

/// Rows folded in per Woodbury step; bounds the inner `n × n` solve.
pub const DEFAULT_CHUNK_ROWS: usize = 256;

/// Optional elementwise map applied after the buffer projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BufferActivation {
    #[default]
    Identity,
    Relu,
}

/// Frozen random expansion from backbone width `d_cnn` to `d_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferLayer {
    weight: DenseMatrix,
    seed: RngSeed,
    activation: BufferActivation,
}

impl BufferLayer {
    /// Gaussian weights with entry scale `scale` (use [`BufferLayer::default_scale`]
    /// for `1/√d_cnn`).
    pub fn new(d_cnn: usize, d_b: usize, scale: f64, seed: RngSeed) -> Result<Self> {
        Ok(Self {
            weight: gaussian_matrix(d_cnn, d_b, scale, seed)?,
            seed,
            activation: BufferActivation::Identity,
        })
    }

    pub fn default_scale(d_cnn: usize) -> f64 {
        1.0 / (d_cnn as f64).sqrt()
    }

    /// Wraps explicit weights (checkpoint restore, test hooks).
    pub fn from_weight(weight: DenseMatrix, seed: RngSeed) -> Result<Self> {
        if !weight.is_finite() {
            return Err(Error::Parameter("buffer weight has non-finite entries".into()));
        }
        Ok(Self {
            weight,
            seed,
            activation: BufferActivation::Identity,
        })
    }

    pub fn with_activation(mut self, activation: BufferActivation) -> Self {
        self.activation = activation;
        self
    }

    pub fn activation(&self) -> BufferActivation {
        self.activation
    }

    pub fn d_cnn(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_b(&self) -> usize {
        self.weight.cols()
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    pub fn weight(&self) -> &DenseMatrix {
        &self.weight
    }

    /// `X_B = X_cnn · W_B`.
    pub fn project(&self, embeddings: &DenseMatrix) -> Result<DenseMatrix> {
        if embeddings.cols() != self.d_cnn() {
            return Err(Error::shape(
                "buffer_project",
                format!("embeddings with {} columns", embeddings.cols()),
                format!("buffer expecting {}", self.d_cnn()),
            ));
        }
        let out = embeddings.matmul(&self.weight)?;
        Ok(match self.activation {
            BufferActivation::Identity => out,
            BufferActivation::Relu => out.map(|v| v.max(0.0)),
        })
    }
}

/// Ridge classifier with its autocorrelation memory matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticClassifier {
    weight: DenseMatrix,
    memory: DenseMatrix,
    gamma: f64,
    phase_index: usize,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("gamma must be > 0, got {gamma}")))
    }
}

fn check_one_hot(labels: &DenseMatrix) -> Result<()> {
    for i in 0..labels.rows() {
        let row = labels.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Data {
                row: i,
                msg: "label row is not one-hot".into(),
            });
        }
    }
    Ok(())
}

/// Closed-form ridge solve shared by the base fit and the joint oracle.
fn ridge_solve(features: &DenseMatrix, labels: &DenseMatrix, gamma: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    check_gamma(gamma)?;
    if features.rows() == 0 {
        return Err(Error::EmptyBase);
    }
    if features.rows() != labels.rows() {
        return Err(Error::shape(
            "ridge fit",
            format!("{} feature rows", features.rows()),
            format!("{} label rows", labels.rows()),
        ));
    }
    check_one_hot(labels)?;
    let mut gram = features.t_matmul(features)?;
    gram.add_to_diagonal(gamma);
    let memory = sym_inverse(&gram)?;
    let weight = memory.matmul(&features.t_matmul(labels)?)?;
    Ok((weight, memory))
}

impl AnalyticClassifier {
    /// Base-phase fit: `R₀ = (XᵀX + γI)⁻¹`, `W₀ = R₀ XᵀY`.
    pub fn ainit(features: &DenseMatrix, labels_onehot: &DenseMatrix, gamma: f64) -> Result<Self> {
        let (weight, memory) = ridge_solve(features, labels_onehot, gamma)?;
        Ok(Self {
            weight,
            memory,
            gamma,
            phase_index: 0,
        })
    }

    /// Ridge solution over all rows at once.
    ///
    /// Needs every training row, so it is only a reference for checking the
    /// recursive path; the incremental runner never calls it. The weight is
    /// obtained by a Cholesky solve rather than through the explicit inverse.
    pub fn joint_fit(features_all: &DenseMatrix, labels_all: &DenseMatrix, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if features_all.rows() == 0 {
            return Err(Error::EmptyBase);
        }
        if features_all.rows() != labels_all.rows() {
            return Err(Error::shape(
                "joint_fit",
                format!("{} feature rows", features_all.rows()),
                format!("{} label rows", labels_all.rows()),
            ));
        }
        check_one_hot(labels_all)?;
        let mut gram = features_all.t_matmul(features_all)?;
        gram.add_to_diagonal(gamma);
        let chol = Cholesky::factor(&gram)?;
        let weight = chol.solve(&features_all.t_matmul(labels_all)?)?;
        Ok(Self {
            weight,
            memory: chol.inverse(),
            gamma,
            phase_index: 0,
        })
    }

    /// Reassembles a classifier from stored parts.
    pub fn from_parts(weight: DenseMatrix, memory: DenseMatrix, gamma: f64, phase_index: usize) -> Result<Self> {
        check_gamma(gamma)?;
        if memory.rows() != memory.cols() || weight.rows() != memory.rows() {
            return Err(Error::shape(
                "AnalyticClassifier::from_parts",
                format!("W {}x{}", weight.rows(), weight.cols()),
                format!("R {}x{}", memory.rows(), memory.cols()),
            ));
        }
        Ok(Self {
            weight,
            memory,
            gamma,
            phase_index,
        })
    }

    pub fn weight(&self) -> &DenseMatrix {
        &self.weight
    }

    pub fn memory(&self) -> &DenseMatrix {
        &self.memory
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn classes_seen(&self) -> usize {
        self.weight.cols()
    }

    pub fn phase_index(&self) -> usize {
        self.phase_index
    }

    pub fn d_b(&self) -> usize {
        self.memory.rows()
    }

    /// Appends `new_classes` zero columns to the weight.
    pub fn expand_classes(self, new_classes: usize) -> Self {
        Self {
            weight: self.weight.pad_cols(new_classes),
            ..self
        }
    }

    /// One incremental phase: folds in the phase rows in blocks of
    /// [`DEFAULT_CHUNK_ROWS`] and advances the phase counter.
    pub fn phase_update(self, features: &DenseMatrix, labels_onehot: &DenseMatrix) -> Result<Self> {
        self.phase_update_chunked(features, labels_onehot, DEFAULT_CHUNK_ROWS)
    }

    pub fn phase_update_chunked(
        self,
        features: &DenseMatrix,
        labels_onehot: &DenseMatrix,
        chunk_rows: usize,
    ) -> Result<Self> {
        if chunk_rows == 0 {
            return Err(Error::Parameter("chunk_rows must be >= 1".into()));
        }
        self.check_update_shapes(features, labels_onehot)?;
        let mut clf = self;
        let n = features.rows();
        let mut start = 0;
        while start < n {
            let end = (start + chunk_rows).min(n);
            clf = clf.absorb(&features.slice_rows(start, end), &labels_onehot.slice_rows(start, end))?;
            start = end;
        }
        clf.phase_index += 1;
        Ok(clf)
    }

    fn check_update_shapes(&self, features: &DenseMatrix, labels: &DenseMatrix) -> Result<()> {
        if features.rows() != labels.rows() {
            return Err(Error::shape(
                "phase_update",
                format!("{} feature rows", features.rows()),
                format!("{} label rows", labels.rows()),
            ));
        }
        if features.rows() > 0 && features.cols() != self.d_b() {
            return Err(Error::shape(
                "phase_update",
                format!("features with {} columns", features.cols()),
                format!("classifier width {}", self.d_b()),
            ));
        }
        if labels.rows() > 0 && labels.cols() > self.classes_seen() {
            return Err(Error::Protocol(format!(
                "labels have {} columns but only {} classes are allocated; expand first",
                labels.cols(),
                self.classes_seen()
            )));
        }
        Ok(())
    }

    /// Folds a block of rows into `W` and `R` without touching the phase
    /// counter:
    ///
    /// `R' = R − R Xᵀ (I + X R Xᵀ)⁻¹ X R`,  `W' = W + R' Xᵀ (Y − X W)`.
    ///
    /// Labels narrower than the classifier are zero-padded on the right.
    pub fn absorb(self, features: &DenseMatrix, labels: &DenseMatrix) -> Result<Self> {
        self.check_update_shapes(features, labels)?;
        if features.rows() == 0 {
            return Ok(self);
        }
        let labels = labels.pad_cols(self.classes_seen() - labels.cols());

        // U = R Xᵀ (d × n); S = I + X U = L Lᵀ; V = L⁻¹ Uᵀ; R' = R − VᵀV.
        let u = self.memory.matmul_t(features)?;
        let mut s = features.matmul(&u)?;
        s.symmetrize();
        s.add_to_diagonal(1.0);
        let chol = Cholesky::factor(&s)?;
        let v = chol.forward_solve(&u.transpose())?;
        let mut memory = self.memory.sub(&v.t_matmul(&v)?)?;
        memory.symmetrize();

        let residual = labels.sub(&features.matmul(&self.weight)?)?;
        let gain = memory.matmul_t(features)?;
        let mut weight = self.weight;
        weight.add_scaled_in_place(&gain.matmul(&residual)?, 1.0)?;
        Ok(Self {
            weight,
            memory,
            gamma: self.gamma,
            phase_index: self.phase_index,
        })
    }

    /// Raw scores `X_B · W`.
    pub fn logits(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        if features.cols() != self.d_b() {
            return Err(Error::shape(
                "predict",
                format!("features with {} columns", features.cols()),
                format!("classifier width {}", self.d_b()),
            ));
        }
        features.matmul(&self.weight)
    }

    /// Argmax class per row, ties to the lowest index.
    pub fn predict(&self, features: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(self.logits(features)?.argmax_rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeededRng, Stream};

    fn random_problem(n: usize, d: usize, classes: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
        let x = gaussian_matrix(n, d, 1.0, RngSeed(seed)).unwrap();
        let mut rng = SeededRng::new(RngSeed(seed), Stream::Data);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        (x, DenseMatrix::one_hot(&labels, classes).unwrap())
    }

    /// Normal equations with an explicit inverse and plain products.
    fn explicit_ridge(x: &DenseMatrix, y: &DenseMatrix, gamma: f64) -> DenseMatrix {
        let xt = x.transpose();
        let mut g = xt.matmul(x).unwrap();
        g.add_to_diagonal(gamma);
        sym_inverse(&g).unwrap().matmul(&xt.matmul(y).unwrap()).unwrap()
    }

    #[test]
    fn buffer_identity_hook_and_zero_rows() {
        let layer = BufferLayer::from_weight(DenseMatrix::identity(4), RngSeed(0)).unwrap();
        let x = gaussian_matrix(3, 4, 1.0, RngSeed(9)).unwrap();
        assert_eq!(layer.project(&x).unwrap(), x);
        let layer = BufferLayer::new(4, 10, BufferLayer::default_scale(4), RngSeed(5)).unwrap();
        assert_eq!(layer.project(&DenseMatrix::zeros(2, 4)).unwrap(), DenseMatrix::zeros(2, 10));
        assert_eq!(layer.project(&DenseMatrix::zeros(2, 5)).unwrap_err().kind(), "shape");
    }

    #[test]
    fn buffer_is_deterministic() {
        let a = BufferLayer::new(6, 12, 0.4, RngSeed(77)).unwrap();
        let b = BufferLayer::new(6, 12, 0.4, RngSeed(77)).unwrap();
        let x = gaussian_matrix(5, 6, 1.0, RngSeed(1)).unwrap();
        assert_eq!(a.project(&x).unwrap().data(), b.project(&x).unwrap().data());
    }

    #[test]
    fn buffer_relu_hook() {
        let layer = BufferLayer::from_weight(DenseMatrix::identity(2), RngSeed(0))
            .unwrap()
            .with_activation(BufferActivation::Relu);
        let x = DenseMatrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        assert_eq!(layer.project(&x).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn ainit_closed_forms() {
        let i2 = DenseMatrix::identity(2);
        let clf = AnalyticClassifier::ainit(&i2, &i2, 1e-12).unwrap();
        assert!(clf.weight().max_abs_diff(&i2) < 1e-10);
        let clf = AnalyticClassifier::ainit(&i2, &i2, 1.0).unwrap();
        assert!(clf.weight().max_abs_diff(&i2.scale(0.5)) < 1e-15);
        assert_eq!(clf.classes_seen(), 2);
        assert_eq!(clf.phase_index(), 0);
    }

    #[test]
    fn ainit_matches_explicit_normal_equations() {
        let (x, y) = random_problem(40, 8, 4, 3);
        let clf = AnalyticClassifier::ainit(&x, &y, 0.01).unwrap();
        let oracle = explicit_ridge(&x, &y, 0.01);
        assert!(clf.weight().rel_frobenius_err(&oracle) <= 1e-10);
    }

    #[test]
    fn ainit_errors() {
        let x = DenseMatrix::identity(2);
        let bad = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        match AnalyticClassifier::ainit(&x, &bad, 0.1).unwrap_err() {
            Error::Data { row, .. } => assert_eq!(row, 1),
            e => panic!("unexpected {e}"),
        }
        let err = AnalyticClassifier::ainit(&DenseMatrix::zeros(0, 2), &DenseMatrix::zeros(0, 2), 0.1).unwrap_err();
        assert!(matches!(err, Error::EmptyBase));
        assert_eq!(AnalyticClassifier::ainit(&x, &x, 0.0).unwrap_err().kind(), "parameter");
    }

    #[test]
    fn expand_classes_appends_zero_columns() {
        let (x, y) = random_problem(30, 6, 3, 4);
        let clf = AnalyticClassifier::ainit(&x, &y, 0.1).unwrap();
        assert_eq!(clf.clone().expand_classes(0), clf);
        let wide = clf.clone().expand_classes(2);
        assert_eq!(wide.classes_seen(), 5);
        assert_eq!(wide.memory(), clf.memory());
        for i in 0..wide.d_b() {
            assert_eq!(&wide.weight().row(i)[3..], &[0.0, 0.0]);
        }
        let logits = clf.logits(&x).unwrap();
        let probe: Vec<usize> = (0..x.rows())
            .filter(|&i| logits.row(i).iter().cloned().fold(f64::MIN, f64::max) > 0.0)
            .collect();
        assert!(!probe.is_empty());
        let xp = x.select_rows(&probe);
        assert_eq!(clf.predict(&xp).unwrap(), wide.predict(&xp).unwrap());
    }

    #[test]
    fn empty_update_is_identity_on_state() {
        let (x, y) = random_problem(30, 6, 3, 5);
        let clf = AnalyticClassifier::ainit(&x, &y, 0.1).unwrap();
        let next = clf.clone().phase_update(&DenseMatrix::zeros(0, 6), &DenseMatrix::zeros(0, 3)).unwrap();
        assert_eq!(next.weight(), clf.weight());
        assert_eq!(next.memory(), clf.memory());
        assert_eq!(next.phase_index(), 1);
    }

    #[test]
    fn two_chunk_update_matches_joint_fit_and_direct_inverse() {
        let (x, y) = random_problem(60, 10, 4, 6);
        let joint = AnalyticClassifier::joint_fit(&x, &y, 0.01).unwrap();
        let clf = AnalyticClassifier::ainit(&x.slice_rows(0, 35), &y.slice_rows(0, 35), 0.01)
            .unwrap()
            .phase_update(&x.slice_rows(35, 60), &y.slice_rows(35, 60))
            .unwrap();
        assert!(clf.weight().rel_frobenius_err(joint.weight()) <= 1e-8);
        assert!(clf.memory().rel_frobenius_err(joint.memory()) <= 1e-8);

        let mut g = x.transpose().matmul(&x).unwrap();
        g.add_to_diagonal(0.01);
        assert!(clf.memory().max_abs_diff(&sym_inverse(&g).unwrap()) <= 1e-8);
    }

    #[test]
    fn update_shape_and_protocol_errors() {
        let (x, y) = random_problem(20, 5, 2, 7);
        let clf = AnalyticClassifier::ainit(&x, &y, 0.1).unwrap();
        let err = clf.clone().phase_update(&x.slice_rows(0, 3), &y.slice_rows(0, 2)).unwrap_err();
        assert_eq!(err.kind(), "shape");
        let wide = DenseMatrix::one_hot(&[2, 2, 2], 3).unwrap();
        let err = clf.phase_update(&x.slice_rows(0, 3), &wide).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn joint_fit_single_phase_equals_ainit_and_is_order_free() {
        let (x, y) = random_problem(50, 7, 3, 8);
        let a = AnalyticClassifier::ainit(&x, &y, 0.05).unwrap();
        let j = AnalyticClassifier::joint_fit(&x, &y, 0.05).unwrap();
        assert!(j.weight().rel_frobenius_err(a.weight()) <= 1e-12);

        let perm = SeededRng::new(RngSeed(1), Stream::Shuffle).permutation(50);
        let jp = AnalyticClassifier::joint_fit(&x.select_rows(&perm), &y.select_rows(&perm), 0.05).unwrap();
        assert!(jp.weight().rel_frobenius_err(j.weight()) <= 1e-10);
    }

    #[test]
    fn predict_examples() {
        let clf = AnalyticClassifier::from_parts(DenseMatrix::identity(3), DenseMatrix::identity(3), 1.0, 0).unwrap();
        let e2 = DenseMatrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(clf.predict(&e2).unwrap(), vec![1]);
        assert_eq!(clf.predict(&DenseMatrix::zeros(1, 3)).unwrap(), vec![0]);
        assert_eq!(clf.predict(&DenseMatrix::zeros(1, 4)).unwrap_err().kind(), "shape");
    }
}
