//! Representation-enhancing distillation.
//!
//! The contrastively pretrained student is fine-tuned on the base phase with
//! a λ-blend of two signals: cosine mimicry of the supervised teacher's
//! embeddings and cross-entropy through a temporary linear head. The student
//! leaves this stage frozen; the head is thrown away.

use serde::{Deserialize, Serialize};

use crate::backbone::{
    ensure_finite_loss, one_hot_classes, softmax_cross_entropy, LinearHead, MlpBackbone, Sgd, TrainConfig,
};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::rng::{SeededRng, Stream};
use crate::sscl::cosine_sum_and_grad;

/// λ values searched by the grid helper.
pub const LAMBDA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Epoch counts searched by the grid helper.
pub const EPOCH_GRID: [usize; 7] = [5, 10, 15, 20, 30, 40, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Optimizer settings; its `epochs` field is ignored in favor of `epochs`.
    pub optimizer: TrainConfig,
}

impl Default for RedConfig {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            epochs: 20,
            optimizer: TrainConfig::default(),
        }
    }
}

impl RedConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.epochs == 0 {
            return Err(Error::Parameter("distillation epochs must be >= 1".into()));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            ..self.optimizer.clone()
        }
    }
}

/// Every (λ, e) cell of the search grid, λ-major.
pub fn grid_cells() -> Vec<(f64, usize)> {
    LAMBDA_GRID
        .iter()
        .flat_map(|&l| EPOCH_GRID.iter().map(move |&e| (l, e)))
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("lambda must be in [0, 1], got {lambda}")))
    }
}

/// Backbone output; flattening is the identity on vector inputs.
pub fn extract_embeddings(backbone: &MlpBackbone, x: &DenseMatrix) -> Result<DenseMatrix> {
    backbone.forward(x)
}

/// `−(1/N) Σᵢ cos(teacherᵢ, studentᵢ)`.
pub fn feature_loss(student_emb: &DenseMatrix, teacher_emb: &DenseMatrix) -> Result<f64> {
    Ok(feature_loss_and_grad(student_emb, teacher_emb)?.0)
}

/// Feature loss and its gradient w.r.t. the student embeddings.
pub fn feature_loss_and_grad(student_emb: &DenseMatrix, teacher_emb: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let n = student_emb.rows();
    if n == 0 {
        return Err(Error::Parameter("feature loss needs at least one row".into()));
    }
    let (sum, grad) = cosine_sum_and_grad(teacher_emb, student_emb)?;
    let inv = 1.0 / n as f64;
    Ok((-sum * inv, grad.scale(-inv)))
}

/// Mean cross-entropy of `softmax(student(x) · head)`.
pub fn label_loss(
    student: &MlpBackbone,
    head: &LinearHead,
    x: &DenseMatrix,
    labels_onehot: &DenseMatrix,
) -> Result<f64> {
    let logits = head.logits(&student.forward(x)?)?;
    Ok(softmax_cross_entropy(&logits, labels_onehot)?.0)
}

/// `λ·feature + (1 − λ)·label`.
pub fn red_loss(feature: f64, label: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda * feature + (1.0 - lambda) * label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedLossParts {
    pub feature: f64,
    pub label: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RedGrads {
    pub backbone: Vec<DenseMatrix>,
    pub head: DenseMatrix,
}

/// Combined loss and gradients. `teacher_emb` are constants.
pub fn red_loss_and_grads(
    student: &MlpBackbone,
    head: &LinearHead,
    x: &DenseMatrix,
    labels_onehot: &DenseMatrix,
    teacher_emb: &DenseMatrix,
    lambda: f64,
) -> Result<(RedLossParts, RedGrads)> {
    check_lambda(lambda)?;
    let trace = student.forward_trace(x)?;
    let emb = trace.output();
    let (feature, g_feat) = feature_loss_and_grad(emb, teacher_emb)?;
    let logits = head.logits(emb)?;
    let (label, g_logits) = softmax_cross_entropy(&logits, labels_onehot)?;

    let head_grad = emb.t_matmul(&g_logits)?.scale(1.0 - lambda);
    let mut g_emb = g_logits.matmul_t(&head.weight)?.scale(1.0 - lambda);
    g_emb.add_scaled_in_place(&g_feat, lambda)?;
    let backbone = student.backward(&trace, &g_emb)?.weight_grads;
    Ok((
        RedLossParts {
            feature,
            label,
            total: red_loss(feature, label, lambda)?,
        },
        RedGrads {
            backbone,
            head: head_grad,
        },
    ))
}

fn full_loss(
    student: &MlpBackbone,
    head: &LinearHead,
    x: &DenseMatrix,
    labels: &DenseMatrix,
    teacher_emb: &DenseMatrix,
    lambda: f64,
) -> Result<RedLossParts> {
    let emb = student.forward(x)?;
    let feature = feature_loss(&emb, teacher_emb)?;
    let label = softmax_cross_entropy(&head.logits(&emb)?, labels)?.0;
    Ok(RedLossParts {
        feature,
        label,
        total: red_loss(feature, label, lambda)?,
    })
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    /// Frozen student backbone.
    pub student: MlpBackbone,
    /// Full-data losses before training, then after each epoch.
    pub trajectory: Vec<RedLossParts>,
}

fn weight_bits(net: &MlpBackbone) -> Vec<u64> {
    net.weights()
        .iter()
        .flat_map(|w| w.data().iter().map(|v| v.to_bits()))
        .collect()
}

/// Fine-tunes `student` and the inserted `head` on the λ-blended objective
/// for `cfg.epochs` epochs, then freezes the student. The teacher is only
/// read; its weights are compared bit-for-bit before and after.
pub fn distill(
    mut student: MlpBackbone,
    teacher: &MlpBackbone,
    mut head: LinearHead,
    data: &DenseMatrix,
    labels_onehot: &DenseMatrix,
    cfg: &RedConfig,
) -> Result<DistillOutcome> {
    cfg.validate()?;
    if student.is_frozen() {
        return Err(Error::Frozen);
    }
    if data.rows() != labels_onehot.rows() {
        return Err(Error::shape(
            "distill",
            format!("{} data rows", data.rows()),
            format!("{} label rows", labels_onehot.rows()),
        ));
    }
    if teacher.d_cnn() != student.d_cnn() {
        return Err(Error::shape(
            "distill",
            format!("teacher embedding width {}", teacher.d_cnn()),
            format!("student embedding width {}", student.d_cnn()),
        ));
    }
    one_hot_classes(labels_onehot)?;
    let teacher_before = weight_bits(teacher);
    let teacher_emb = extract_embeddings(teacher, data)?;

    let train = cfg.train_config();
    let mut rng = SeededRng::new(train.seed, Stream::Shuffle);
    let mut opt = Sgd::new(student.weights().iter().chain(std::iter::once(&head.weight)));
    let initial = full_loss(&student, &head, data, labels_onehot, &teacher_emb, cfg.lambda)?;
    ensure_finite_loss(initial.total, "distill", 0)?;
    let mut trajectory = vec![initial];

    for epoch in 0..train.epochs {
        let lr = train.lr_at(epoch);
        for batch in train.batches(data.rows(), &mut rng) {
            let xb = data.select_rows(&batch);
            let yb = labels_onehot.select_rows(&batch);
            let tb = teacher_emb.select_rows(&batch);
            let (parts, grads) = red_loss_and_grads(&student, &head, &xb, &yb, &tb, cfg.lambda)?;
            ensure_finite_loss(parts.total, "distill", epoch)?;
            let mut all = grads.backbone;
            all.push(grads.head);
            let params = student.weights_mut()?.iter_mut().chain(std::iter::once(&mut head.weight));
            opt.step(params, &all, lr, &train)?;
        }
        let parts = full_loss(&student, &head, data, labels_onehot, &teacher_emb, cfg.lambda)?;
        ensure_finite_loss(parts.total, "distill", epoch)?;
        trajectory.push(parts);
    }

    if weight_bits(teacher) != teacher_before {
        return Err(Error::Contract("teacher weights changed during distillation".into()));
    }
    student.freeze();
    Ok(DistillOutcome { student, trajectory })
}
