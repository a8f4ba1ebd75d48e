//! Feature extractor, linear head and the SGD machinery used by every
//! gradient-trained stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{Backward, Mlp, Trace};
use crate::numkit::{gaussian_matrix, DenseMatrix};
use crate::rng::{RngSeed, SeededRng, Stream};

/// Backbone network. Once frozen it still runs forward but rejects every
/// training operation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBackbone {
    net: Mlp,
    frozen: bool,
}

impl MlpBackbone {
    pub fn new(widths: &[usize], seed: RngSeed) -> Result<Self> {
        Ok(Self {
            net: Mlp::new(widths, seed)?,
            frozen: false,
        })
    }

    pub fn from_mlp(net: Mlp, frozen: bool) -> Self {
        Self { net, frozen }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn widths(&self) -> Vec<usize> {
        self.net.widths()
    }

    pub fn d_in(&self) -> usize {
        self.net.input_dim()
    }

    pub fn d_cnn(&self) -> usize {
        self.net.output_dim()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.net.forward(x)
    }

    pub fn forward_trace(&self, x: &DenseMatrix) -> Result<Trace> {
        self.net.forward_trace(x)
    }

    pub fn backward(&self, trace: &Trace, upstream: &DenseMatrix) -> Result<Backward> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        self.net.backward(trace, upstream)
    }

    /// Forward + backward in one call.
    pub fn gradients(&self, x: &DenseMatrix, upstream: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let trace = self.net.forward_trace(x)?;
        Ok(self.net.backward(&trace, upstream)?.weight_grads)
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        self.net.weights()
    }

    pub fn weights_mut(&mut self) -> Result<&mut [DenseMatrix]> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(self.net.weights_mut())
    }
}

/// Linear classifier on top of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weight: DenseMatrix,
}

impl LinearHead {
    pub fn new(d_cnn: usize, classes: usize, seed: RngSeed) -> Result<Self> {
        Ok(Self {
            weight: gaussian_matrix(d_cnn, classes, 1.0 / (d_cnn as f64).sqrt(), seed)?,
        })
    }

    pub fn from_weight(weight: DenseMatrix) -> Result<Self> {
        if !weight.is_finite() {
            return Err(Error::Parameter("head weight must be finite".into()));
        }
        Ok(Self { weight })
    }

    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits(&self, embeddings: &DenseMatrix) -> Result<DenseMatrix> {
        embeddings.matmul(&self.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fractions of `epochs` at which the learning rate is divided by
    /// `lr_divisor`.
    pub milestones: Vec<f64>,
    pub lr_divisor: f64,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            batch_size: 128,
            milestones: vec![0.5, 0.75],
            lr_divisor: 10.0,
            seed: RngSeed(0),
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted and turns training into a no-op.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Parameter(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Parameter("weight decay must be >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        if !(self.lr_divisor > 0.0) {
            return Err(Error::Parameter("lr divisor must be > 0".into()));
        }
        Ok(())
    }

    /// Step-decayed learning rate for `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self
            .milestones
            .iter()
            .filter(|&&f| epoch >= (f * self.epochs as f64).floor() as usize && f > 0.0)
            .count();
        self.lr / self.lr_divisor.powi(passed as i32)
    }

    pub(crate) fn batches(&self, n: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
        rng.permutation(n)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Momentum SGD with weight decay folded into the gradient:
///
/// `v ← μ·v + g + λ·w`,  `w ← w − lr·v`.
pub fn sgd_step(
    weight: &mut DenseMatrix,
    grad: &DenseMatrix,
    velocity: &mut DenseMatrix,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if weight.shape() != grad.shape() || weight.shape() != velocity.shape() {
        return Err(Error::shape(
            "sgd_step",
            format!("weight {}x{}", weight.rows(), weight.cols()),
            format!(
                "grad {}x{} / velocity {}x{}",
                grad.rows(),
                grad.cols(),
                velocity.rows(),
                velocity.cols()
            ),
        ));
    }
    for ((w, g), v) in weight
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g + weight_decay * *w;
        *w -= lr * *v;
    }
    Ok(())
}

/// Velocity buffers for a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Sgd {
    velocity: Vec<DenseMatrix>,
}

impl Sgd {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a DenseMatrix>) -> Self {
        Self {
            velocity: params
                .into_iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut DenseMatrix>,
        grads: &[DenseMatrix],
        lr: f64,
        cfg: &TrainConfig,
    ) -> Result<()> {
        let mut count = 0;
        for ((w, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            sgd_step(w, g, v, lr, cfg.momentum, cfg.weight_decay)?;
            count += 1;
        }
        if count != self.velocity.len() || count != grads.len() {
            return Err(Error::shape(
                "Sgd::step",
                format!("{} velocity buffers", self.velocity.len()),
                format!("{count} params / {} grads", grads.len()),
            ));
        }
        Ok(())
    }
}

/// Validates one-hot rows and returns the class index of each.
pub fn one_hot_classes(labels: &DenseMatrix) -> Result<Vec<usize>> {
    (0..labels.rows())
        .map(|i| {
            let row = labels.row(i);
            let mut hit = None;
            for (j, &v) in row.iter().enumerate() {
                if v == 1.0 && hit.is_none() {
                    hit = Some(j);
                } else if v != 0.0 {
                    hit = None;
                    break;
                }
            }
            let valid = hit.is_some() && row.iter().filter(|&&v| v != 0.0).count() == 1;
            match hit {
                Some(j) if valid => Ok(j),
                _ => Err(Error::Data {
                    row: i,
                    msg: "label row must contain exactly one 1".into(),
                }),
            }
        })
        .collect()
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &DenseMatrix, labels_onehot: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if logits.shape() != labels_onehot.shape() {
        return Err(Error::shape(
            "cross_entropy",
            format!("logits {}x{}", logits.rows(), logits.cols()),
            format!("labels {}x{}", labels_onehot.rows(), labels_onehot.cols()),
        ));
    }
    let classes = one_hot_classes(labels_onehot)?;
    let n = logits.rows();
    if n == 0 {
        return Ok((0.0, logits.clone()));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = DenseMatrix::zeros(n, logits.cols());
    let mut loss = 0.0;
    for (i, &c) in classes.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[c];
        let g = grad.row_mut(i);
        for (gj, v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv_n;
        }
        g[c] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

pub(crate) fn ensure_finite_loss(loss: f64, stage: &'static str, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            stage,
            epoch,
            msg: format!("loss became {loss}"),
        })
    }
}

/// Supervised loss and gradients for the backbone + head pair.
pub fn supervised_loss_and_grads(
    net: &MlpBackbone,
    head: &LinearHead,
    x: &DenseMatrix,
    labels_onehot: &DenseMatrix,
) -> Result<(f64, Vec<DenseMatrix>, DenseMatrix)> {
    let trace = net.forward_trace(x)?;
    let emb = trace.output();
    let logits = head.logits(emb)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels_onehot)?;
    let head_grad = emb.t_matmul(&dlogits)?;
    let demb = dlogits.matmul_t(&head.weight)?;
    let grads = net.backward(&trace, &demb)?.weight_grads;
    Ok((loss, grads, head_grad))
}

pub fn supervised_loss(net: &MlpBackbone, head: &LinearHead, x: &DenseMatrix, labels: &DenseMatrix) -> Result<f64> {
    let logits = head.logits(&net.forward(x)?)?;
    Ok(softmax_cross_entropy(&logits, labels)?.0)
}

#[derive(Debug, Clone)]
pub struct SupervisedOutcome {
    pub net: MlpBackbone,
    pub head: LinearHead,
    /// Full-data loss before training followed by one entry per epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch softmax cross-entropy training of backbone and head.
pub fn train_supervised(
    mut net: MlpBackbone,
    mut head: LinearHead,
    data: &DenseMatrix,
    labels_onehot: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<SupervisedOutcome> {
    cfg.validate()?;
    if net.is_frozen() {
        return Err(Error::Frozen);
    }
    if data.rows() != labels_onehot.rows() {
        return Err(Error::shape(
            "train_supervised",
            format!("{} data rows", data.rows()),
            format!("{} label rows", labels_onehot.rows()),
        ));
    }
    if labels_onehot.cols() != head.classes() {
        return Err(Error::shape(
            "train_supervised",
            format!("{} label columns", labels_onehot.cols()),
            format!("head with {} classes", head.classes()),
        ));
    }
    one_hot_classes(labels_onehot)?;

    let mut rng = SeededRng::new(cfg.seed, Stream::Shuffle);
    let mut opt = Sgd::new(net.weights().iter().chain(std::iter::once(&head.weight)));
    let initial = supervised_loss(&net, &head, data, labels_onehot)?;
    ensure_finite_loss(initial, "supervised", 0)?;
    let mut losses = vec![initial];

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        for batch in cfg.batches(data.rows(), &mut rng) {
            let xb = data.select_rows(&batch);
            let yb = labels_onehot.select_rows(&batch);
            let (loss, mut grads, head_grad) = supervised_loss_and_grads(&net, &head, &xb, &yb)?;
            ensure_finite_loss(loss, "supervised", epoch)?;
            grads.push(head_grad);
            let params = net.weights_mut()?.iter_mut().chain(std::iter::once(&mut head.weight));
            opt.step(params, &grads, lr, cfg)?;
        }
        let loss = supervised_loss(&net, &head, data, labels_onehot)?;
        ensure_finite_loss(loss, "supervised", epoch)?;
        losses.push(loss);
    }
    Ok(SupervisedOutcome { net, head, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;

    #[test]
    fn forward_examples() {
        let net = MlpBackbone::from_mlp(Mlp::from_weights(vec![DenseMatrix::identity(3)]).unwrap(), false);
        let x = DenseMatrix::from_rows(&[vec![0.5, 1.0, 2.0], vec![0.0, 3.0, 0.25]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);

        let zero = Mlp::from_weights(vec![DenseMatrix::zeros(3, 4), DenseMatrix::zeros(4, 2)]).unwrap();
        let out = MlpBackbone::from_mlp(zero, false).forward(&x).unwrap();
        assert_eq!(out, DenseMatrix::zeros(2, 2));
        assert_eq!(net.forward(&DenseMatrix::zeros(1, 2)).unwrap_err().kind(), "shape");
    }

    #[test]
    fn forward_weight_jacobian_matches_finite_differences() {
        let net = MlpBackbone::new(&[4, 5, 3], RngSeed(21)).unwrap();
        let x = gaussian_matrix(3, 4, 1.0, RngSeed(22)).unwrap();
        // d out[r][c] / d w for every output entry via unit upstream grads.
        for r in 0..3 {
            for c in 0..3 {
                let mut up = DenseMatrix::zeros(3, 3);
                up.set(r, c, 1.0);
                let grads = net.gradients(&x, &up).unwrap();
                let numeric = fd::weight_grads(net.weights(), 1e-5, |ws| {
                    let m = Mlp::from_weights(ws.to_vec()).unwrap();
                    m.forward(&x).unwrap().get(r, c)
                });
                fd::assert_close(&grads, &numeric, 1e-4);
            }
        }
    }

    #[test]
    fn backward_examples() {
        let net = MlpBackbone::new(&[3, 4, 2], RngSeed(1)).unwrap();
        let x = gaussian_matrix(5, 3, 1.0, RngSeed(2)).unwrap();
        let grads = net.gradients(&x, &DenseMatrix::zeros(5, 2)).unwrap();
        assert!(grads.iter().all(|g| g.max_abs() == 0.0));

        let lin = MlpBackbone::new(&[3, 2], RngSeed(3)).unwrap();
        let up = gaussian_matrix(5, 2, 1.0, RngSeed(4)).unwrap();
        let g = lin.gradients(&x, &up).unwrap();
        assert!(g[0].max_abs_diff(&x.t_matmul(&up).unwrap()) < 1e-15);

        let mut frozen = net.clone();
        frozen.freeze();
        assert!(matches!(frozen.gradients(&x, &DenseMatrix::zeros(5, 2)), Err(Error::Frozen)));
        assert!(matches!(frozen.weights_mut(), Err(Error::Frozen)));
        assert!(frozen.forward(&x).is_ok());
    }

    #[test]
    fn sgd_step_examples() {
        let w0 = DenseMatrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let g = DenseMatrix::from_rows(&[vec![0.5, 0.25]]).unwrap();

        let mut w = w0.clone();
        let mut v = DenseMatrix::zeros(1, 2);
        sgd_step(&mut w, &g, &mut v, 0.1, 0.0, 0.0).unwrap();
        assert!(w.max_abs_diff(&w0.sub(&g.scale(0.1)).unwrap()) < 1e-15);

        let mut w = w0.clone();
        let mut v = DenseMatrix::zeros(1, 2);
        sgd_step(&mut w, &DenseMatrix::zeros(1, 2), &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(w, w0);

        let mut w = w0.clone();
        let mut v = DenseMatrix::zeros(1, 2);
        sgd_step(&mut w, &g, &mut v, 0.1, 0.9, 0.0).unwrap();
        sgd_step(&mut w, &g, &mut v, 0.1, 0.9, 0.0).unwrap();
        let expected = w0.sub(&g.scale(0.1 * 2.9)).unwrap();
        assert!(w.max_abs_diff(&expected) < 1e-15);

        let mut bad_v = DenseMatrix::zeros(2, 2);
        assert_eq!(sgd_step(&mut w, &g, &mut bad_v, 0.1, 0.9, 0.0).unwrap_err().kind(), "shape");
    }

    #[test]
    fn lr_schedule_steps_down() {
        let cfg = TrainConfig {
            epochs: 160,
            milestones: vec![0.5, 0.75],
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 0.1);
        assert_eq!(cfg.lr_at(79), 0.1);
        assert!((cfg.lr_at(80) - 0.01).abs() < 1e-18);
        assert!((cfg.lr_at(120) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { momentum: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn cross_entropy_matches_finite_differences() {
        let logits = gaussian_matrix(4, 3, 2.0, RngSeed(8)).unwrap();
        let labels = DenseMatrix::one_hot(&[0, 2, 1, 2], 3).unwrap();
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        let numeric = fd::weight_grads(std::slice::from_ref(&logits), 1e-6, |m| {
            softmax_cross_entropy(&m[0], &labels).unwrap().0
        });
        fd::assert_close(std::slice::from_ref(&g), &numeric, 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = DenseMatrix::zeros(2, 3);
        let labels = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        match softmax_cross_entropy(&logits, &labels).unwrap_err() {
            Error::Data { row, .. } => assert_eq!(row, 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn supervised_grads_match_finite_differences() {
        for seed in 0..3u64 {
            let net = MlpBackbone::new(&[4, 6, 5], RngSeed(seed)).unwrap();
            let head = LinearHead::new(5, 3, RngSeed(seed + 100)).unwrap();
            let x = gaussian_matrix(6, 4, 1.0, RngSeed(seed + 200)).unwrap();
            let y = DenseMatrix::one_hot(&[0, 1, 2, 0, 1, 2], 3).unwrap();
            let (_, grads, head_grad) = supervised_loss_and_grads(&net, &head, &x, &y).unwrap();
            let numeric = fd::weight_grads(net.weights(), 1e-5, |ws| {
                let n = MlpBackbone::from_mlp(Mlp::from_weights(ws.to_vec()).unwrap(), false);
                supervised_loss(&n, &head, &x, &y).unwrap()
            });
            fd::assert_close(&grads, &numeric, 1e-4);
            let numeric = fd::weight_grads(std::slice::from_ref(&head.weight), 1e-5, |ws| {
                let h = LinearHead::from_weight(ws[0].clone()).unwrap();
                supervised_loss(&net, &h, &x, &y).unwrap()
            });
            fd::assert_close(std::slice::from_ref(&head_grad), &numeric, 1e-4);
        }
    }

    fn two_blobs(n_per: usize, seed: u64) -> (DenseMatrix, DenseMatrix, Vec<usize>) {
        let mut rng = SeededRng::new(RngSeed(seed), Stream::Data);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            let center = if c == 0 { [-2.0, -1.0] } else { [2.0, 1.0] };
            for _ in 0..n_per {
                rows.push(vec![center[0] + 0.5 * rng.normal(), center[1] + 0.5 * rng.normal()]);
                labels.push(c);
            }
        }
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let y = DenseMatrix::one_hot(&labels, 2).unwrap();
        (x, y, labels)
    }

    /// Perceptron with bias; returns true once an epoch makes no mistakes.
    fn perceptron_separates(x: &DenseMatrix, labels: &[usize]) -> bool {
        let mut w = [0.0f64; 3];
        for _ in 0..1000 {
            let mut mistakes = 0;
            for (i, &c) in labels.iter().enumerate() {
                let t = if c == 1 { 1.0 } else { -1.0 };
                let r = x.row(i);
                let s = w[0] * r[0] + w[1] * r[1] + w[2];
                if t * s <= 0.0 {
                    w[0] += t * r[0];
                    w[1] += t * r[1];
                    w[2] += t;
                    mistakes += 1;
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    fn blob_cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            lr,
            epochs: 50,
            batch_size: 16,
            seed: RngSeed(5),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn supervised_training_fits_separable_blobs() {
        let (x, y, labels) = two_blobs(100, 11);
        assert!(perceptron_separates(&x, &labels));
        let net = MlpBackbone::new(&[2, 16, 16], RngSeed(1)).unwrap();
        let head = LinearHead::new(16, 2, RngSeed(2)).unwrap();
        let out = train_supervised(net, head, &x, &y, &blob_cfg(0.05)).unwrap();
        assert!(out.losses.last().unwrap() < &out.losses[0]);
        let pred = out.head.logits(&out.net.forward(&x).unwrap()).unwrap().argmax_rows();
        let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
        assert!(acc >= 0.98, "accuracy {acc}");
    }

    #[test]
    fn zero_lr_is_a_no_op_and_runs_are_deterministic() {
        let (x, y, _) = two_blobs(20, 3);
        let net = MlpBackbone::new(&[2, 8, 4], RngSeed(1)).unwrap();
        let head = LinearHead::new(4, 2, RngSeed(2)).unwrap();
        let out = train_supervised(net.clone(), head.clone(), &x, &y, &blob_cfg(0.0)).unwrap();
        assert_eq!(out.net, net);
        assert_eq!(out.head, head);
        assert!(out.losses.iter().all(|l| *l == out.losses[0]));

        let a = train_supervised(net.clone(), head.clone(), &x, &y, &blob_cfg(0.05)).unwrap();
        let b = train_supervised(net, head, &x, &y, &blob_cfg(0.05)).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn divergence_reports_epoch() {
        let x = gaussian_matrix(40, 2, 1.0, RngSeed(3)).unwrap();
        let mut rng = SeededRng::new(RngSeed(4), Stream::Data);
        let labels: Vec<usize> = (0..40).map(|_| rng.below(2)).collect();
        let y = DenseMatrix::one_hot(&labels, 2).unwrap();
        let net = MlpBackbone::new(&[2, 8, 4], RngSeed(1)).unwrap();
        let head = LinearHead::new(4, 2, RngSeed(2)).unwrap();
        let cfg = TrainConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            ..blob_cfg(1e300)
        };
        match train_supervised(net, head, &x, &y, &cfg).unwrap_err() {
            Error::Training { stage, .. } => assert_eq!(stage, "supervised"),
            e => panic!("{e}"),
        }
    }
}
