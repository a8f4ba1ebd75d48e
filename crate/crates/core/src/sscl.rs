//! Self-supervised contrastive stream: two augmented views, a projector, a
//! predictor and the symmetric negative-cosine objective with stop-gradient
//! on the projector-branch targets.

use crate::backbone::{ensure_finite_loss, MlpBackbone, Sgd, TrainConfig};
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::numkit::{dot, DenseMatrix};
use crate::rng::{RngSeed, SeededRng, Stream};

/// Two-layer MLP `d_cnn → d_proj → d_proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector(pub Mlp);

/// Two-layer MLP `d_proj → hidden → d_proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor(pub Mlp);

impl Projector {
    pub fn new(d_cnn: usize, d_proj: usize, seed: RngSeed) -> Result<Self> {
        Ok(Self(Mlp::new(&[d_cnn, d_proj, d_proj], seed)?))
    }
}

impl Predictor {
    pub fn new(d_proj: usize, hidden: usize, seed: RngSeed) -> Result<Self> {
        Ok(Self(Mlp::new(&[d_proj, hidden, d_proj], seed)?))
    }
}

/// Vector-space augmentations: additive Gaussian jitter followed by random
/// coordinate masking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationPolicy {
    jitter_std: f64,
    mask_prob: f64,
    seed: RngSeed,
}

impl AugmentationPolicy {
    pub fn new(jitter_std: f64, mask_prob: f64, seed: RngSeed) -> Result<Self> {
        if !(jitter_std >= 0.0) || !jitter_std.is_finite() {
            return Err(Error::Parameter(format!("jitter std must be >= 0, got {jitter_std}")));
        }
        if !(0.0..1.0).contains(&mask_prob) {
            return Err(Error::Parameter(format!("mask probability must be in [0, 1), got {mask_prob}")));
        }
        if jitter_std == 0.0 && mask_prob == 0.0 {
            return Err(Error::Parameter(
                "augmentation needs jitter > 0 or mask probability > 0; identical views are degenerate".into(),
            ));
        }
        Ok(Self {
            jitter_std,
            mask_prob,
            seed,
        })
    }

    pub fn jitter_std(&self) -> f64 {
        self.jitter_std
    }

    pub fn mask_prob(&self) -> f64 {
        self.mask_prob
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    /// Stateful stream of augmentations starting at the policy seed.
    pub fn augmenter(&self) -> Augmenter {
        Augmenter {
            policy: *self,
            rng: SeededRng::new(self.seed, Stream::Augment),
        }
    }

    /// First pair of views from a fresh stream.
    pub fn two_views(&self, x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        self.augmenter().two_views(x)
    }
}

pub struct Augmenter {
    policy: AugmentationPolicy,
    rng: SeededRng,
}

impl Augmenter {
    /// Per entry, row-major: one normal draw if jitter is on, then one
    /// uniform draw if masking is on.
    pub fn view(&mut self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        let AugmentationPolicy { jitter_std, mask_prob, .. } = self.policy;
        for v in out.data_mut() {
            if jitter_std > 0.0 {
                *v += jitter_std * self.rng.normal();
            }
            if mask_prob > 0.0 && self.rng.uniform() < mask_prob {
                *v = 0.0;
            }
        }
        out
    }

    pub fn two_views(&mut self, x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let a = self.view(x);
        let b = self.view(x);
        (a, b)
    }
}

/// `−Σᵢ cos(z1ᵢ, z2ᵢ)`, summed over rows.
pub fn negative_cosine(z1: &DenseMatrix, z2: &DenseMatrix) -> Result<f64> {
    Ok(-cosine_sum_and_grad(z1, z2)?.0)
}

/// `Σᵢ cos(aᵢ, bᵢ)` and its gradient w.r.t. `b` (`a` held constant).
pub(crate) fn cosine_sum_and_grad(a: &DenseMatrix, b: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "cosine",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    let mut grad = DenseMatrix::zeros(b.rows(), b.cols());
    let mut total = 0.0;
    for i in 0..a.rows() {
        let (ai, bi) = (a.row(i), b.row(i));
        let na = dot(ai, ai).sqrt();
        let nb = dot(bi, bi).sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::DegenerateRow { row: i });
        }
        let cos = dot(ai, bi) / (na * nb);
        total += cos;
        // d cos / d b = a / (|a||b|) − cos · b / |b|²
        for ((g, x), y) in grad.row_mut(i).iter_mut().zip(ai).zip(bi) {
            *g = x / (na * nb) - cos * y / (nb * nb);
        }
    }
    Ok((total, grad))
}

/// Symmetric objective from the four branch outputs:
/// `½·L_cos(z1, p2) + ½·L_cos(z2, p1)`.
pub fn sscl_loss_from_outputs(
    z1: &DenseMatrix,
    z2: &DenseMatrix,
    p1: &DenseMatrix,
    p2: &DenseMatrix,
) -> Result<f64> {
    Ok(0.5 * negative_cosine(z1, p2)? + 0.5 * negative_cosine(z2, p1)?)
}

/// Gradients of the contrastive objective.
#[derive(Debug, Clone)]
pub struct SsclGrads {
    pub backbone: Vec<DenseMatrix>,
    pub projector: Vec<DenseMatrix>,
    pub predictor: Vec<DenseMatrix>,
    /// Gradient reaching the projector outputs in their role as targets.
    /// Stop-gradient makes these identically zero.
    pub target_grads: [DenseMatrix; 2],
}

#[derive(Debug, Clone)]
pub struct SsclLoss {
    pub loss: f64,
    pub grads: SsclGrads,
}

fn add_all(acc: &mut [DenseMatrix], other: &[DenseMatrix]) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(other) {
        a.add_scaled_in_place(b, 1.0)?;
    }
    Ok(())
}

/// Loss and gradients for one pair of views. Targets `z1, z2` are treated as
/// constants; only the predictor branch carries gradient.
pub fn sscl_forward_loss(
    backbone: &MlpBackbone,
    projector: &Projector,
    predictor: &Predictor,
    x_aug1: &DenseMatrix,
    x_aug2: &DenseMatrix,
) -> Result<SsclLoss> {
    if x_aug1.shape() != x_aug2.shape() {
        return Err(Error::shape(
            "sscl_forward_loss",
            format!("view 1 {}x{}", x_aug1.rows(), x_aug1.cols()),
            format!("view 2 {}x{}", x_aug2.rows(), x_aug2.cols()),
        ));
    }
    let h1 = backbone.forward_trace(x_aug1)?;
    let h2 = backbone.forward_trace(x_aug2)?;
    let z1 = projector.0.forward_trace(h1.output())?;
    let z2 = projector.0.forward_trace(h2.output())?;
    let p1 = predictor.0.forward_trace(z1.output())?;
    let p2 = predictor.0.forward_trace(z2.output())?;

    let (cos_a, g_p2) = cosine_sum_and_grad(z1.output(), p2.output())?;
    let (cos_b, g_p1) = cosine_sum_and_grad(z2.output(), p1.output())?;
    let loss = -0.5 * cos_a - 0.5 * cos_b;
    let g_p1 = g_p1.scale(-0.5);
    let g_p2 = g_p2.scale(-0.5);

    let mut predictor_grads = Vec::new();
    let mut projector_grads = Vec::new();
    let mut backbone_grads = Vec::new();
    for (h, z, p, g_p) in [(&h1, &z1, &p1, &g_p1), (&h2, &z2, &p2, &g_p2)] {
        let bp = predictor.0.backward(p, g_p)?;
        let bz = projector.0.backward(z, &bp.input_grad)?;
        let bh = backbone.backward(h, &bz.input_grad)?;
        if predictor_grads.is_empty() {
            predictor_grads = bp.weight_grads;
            projector_grads = bz.weight_grads;
            backbone_grads = bh.weight_grads;
        } else {
            add_all(&mut predictor_grads, &bp.weight_grads)?;
            add_all(&mut projector_grads, &bz.weight_grads)?;
            add_all(&mut backbone_grads, &bh.weight_grads)?;
        }
    }
    let (n, d) = z1.output().shape();
    Ok(SsclLoss {
        loss,
        grads: SsclGrads {
            backbone: backbone_grads,
            projector: projector_grads,
            predictor: predictor_grads,
            target_grads: [DenseMatrix::zeros(n, d), DenseMatrix::zeros(n, d)],
        },
    })
}

#[derive(Debug, Clone)]
pub struct SsclOutcome {
    pub backbone: MlpBackbone,
    /// Mean per-sample loss of each epoch, in `[-1, 1]`.
    pub losses: Vec<f64>,
    /// Mean per-coordinate std of L2-normalized embeddings after each epoch;
    /// values near zero signal collapse.
    pub embedding_std: Vec<f64>,
}

/// Mean over coordinates of the std across rows of row-normalized `x`.
pub fn normalized_embedding_std(x: &DenseMatrix) -> f64 {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return 0.0;
    }
    let mut normed = x.clone();
    for i in 0..n {
        let r = normed.row_mut(i);
        let norm = dot(r, r).sqrt();
        if norm > 0.0 {
            r.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut total = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| normed.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (normed.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        total += var.sqrt();
    }
    total / d as f64
}

/// Trains the backbone with the contrastive objective and returns it alone;
/// projector and predictor are dropped. Gradients are divided by the batch
/// size before each step.
pub fn pretrain_sscl(
    mut backbone: MlpBackbone,
    mut projector: Projector,
    mut predictor: Predictor,
    data: &DenseMatrix,
    policy: &AugmentationPolicy,
    cfg: &TrainConfig,
) -> Result<SsclOutcome> {
    cfg.validate()?;
    if backbone.is_frozen() {
        return Err(Error::Frozen);
    }
    let mut rng = SeededRng::new(cfg.seed, Stream::Shuffle);
    let mut aug = policy.augmenter();
    let mut opt = Sgd::new(
        backbone
            .weights()
            .iter()
            .chain(projector.0.weights())
            .chain(predictor.0.weights()),
    );
    let n_backbone = backbone.weights().len();
    let n_projector = projector.0.weights().len();

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut embedding_std = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in cfg.batches(data.rows(), &mut rng) {
            let xb = data.select_rows(&batch);
            let (v1, v2) = aug.two_views(&xb);
            let out = sscl_forward_loss(&backbone, &projector, &predictor, &v1, &v2)?;
            ensure_finite_loss(out.loss, "sscl", epoch)?;
            let per_sample = out.loss / batch.len() as f64;
            if per_sample < -1.0 - 1e-12 {
                return Err(Error::Contract(format!(
                    "per-sample contrastive loss {per_sample} below -1 at epoch {epoch}"
                )));
            }
            sum += per_sample;
            batches += 1;

            let inv = 1.0 / batch.len() as f64;
            let grads: Vec<DenseMatrix> = out
                .grads
                .backbone
                .iter()
                .chain(&out.grads.projector)
                .chain(&out.grads.predictor)
                .map(|g| g.scale(inv))
                .collect();
            debug_assert_eq!(grads.len(), n_backbone + n_projector + predictor.0.weights().len());
            let params = backbone
                .weights_mut()?
                .iter_mut()
                .chain(projector.0.weights_mut())
                .chain(predictor.0.weights_mut());
            opt.step(params, &grads, lr, cfg)?;
        }
        losses.push(sum / batches.max(1) as f64);
        embedding_std.push(normalized_embedding_std(&backbone.forward(data)?));
    }
    Ok(SsclOutcome {
        backbone,
        losses,
        embedding_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use crate::numkit::gaussian_matrix;

    #[test]
    fn policy_validation() {
        assert_eq!(AugmentationPolicy::new(0.0, 0.0, RngSeed(1)).unwrap_err().kind(), "parameter");
        assert!(AugmentationPolicy::new(0.0, 1.0, RngSeed(1)).is_err());
        assert!(AugmentationPolicy::new(-0.1, 0.2, RngSeed(1)).is_err());
        assert!(AugmentationPolicy::new(0.0, 0.2, RngSeed(1)).is_ok());
    }

    #[test]
    fn same_seed_same_views() {
        let x = gaussian_matrix(4, 6, 1.0, RngSeed(3)).unwrap();
        let p = AugmentationPolicy::new(0.2, 0.1, RngSeed(9)).unwrap();
        let (a1, b1) = p.two_views(&x);
        let (a2, b2) = p.two_views(&x);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_ne!(a1, b1);
        assert_eq!(a1.shape(), x.shape());
    }

    #[test]
    fn jitter_mean_absolute_deviation_is_folded_normal() {
        let sigma = 0.1;
        let x = DenseMatrix::zeros(1000, 10);
        let p = AugmentationPolicy::new(sigma, 0.0, RngSeed(17)).unwrap();
        let (a, _) = p.two_views(&x);
        let mad = a.data().iter().map(|v| v.abs()).sum::<f64>() / a.data().len() as f64;
        let expected = (2.0 / std::f64::consts::PI).sqrt() * sigma;
        assert!((mad - expected).abs() <= 0.05 * expected, "{mad} vs {expected}");
    }

    #[test]
    fn negative_cosine_identities() {
        let z = gaussian_matrix(7, 5, 1.0, RngSeed(4)).unwrap();
        assert!((negative_cosine(&z, &z).unwrap() + 7.0).abs() < 1e-12);
        assert!((negative_cosine(&z, &z.scale(-1.0)).unwrap() - 7.0).abs() < 1e-12);
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![0.0, 3.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(negative_cosine(&a, &b).unwrap(), 0.0);
        let zero_row = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            negative_cosine(&a, &zero_row).unwrap_err(),
            Error::DegenerateRow { row: 1 }
        ));
    }

    #[test]
    fn forced_equal_outputs_give_minus_n() {
        let z = gaussian_matrix(6, 4, 1.0, RngSeed(8)).unwrap();
        assert!((sscl_loss_from_outputs(&z, &z, &z, &z).unwrap() + 6.0).abs() < 1e-12);
    }

    fn setup(seed: u64) -> (MlpBackbone, Projector, Predictor, DenseMatrix, DenseMatrix) {
        let bb = MlpBackbone::new(&[5, 7, 6], RngSeed(seed)).unwrap();
        let proj = Projector::new(6, 6, RngSeed(seed + 1)).unwrap();
        let pred = Predictor::new(6, 4, RngSeed(seed + 2)).unwrap();
        let x = gaussian_matrix(5, 5, 1.0, RngSeed(seed + 3)).unwrap();
        let (v1, v2) = AugmentationPolicy::new(0.3, 0.1, RngSeed(seed + 4)).unwrap().two_views(&x);
        (bb, proj, pred, v1, v2)
    }

    #[test]
    fn gradients_match_stop_gradient_finite_differences() {
        let (bb, proj, pred, v1, v2) = setup(30);
        let out = sscl_forward_loss(&bb, &proj, &pred, &v1, &v2).unwrap();
        // Targets frozen at the unperturbed weights.
        let t1 = proj.0.forward(&bb.forward(&v1).unwrap()).unwrap();
        let t2 = proj.0.forward(&bb.forward(&v2).unwrap()).unwrap();
        let objective = |b: &Mlp, pj: &Mlp, pd: &Mlp| {
            let p1 = pd.forward(&pj.forward(&b.forward(&v1).unwrap()).unwrap()).unwrap();
            let p2 = pd.forward(&pj.forward(&b.forward(&v2).unwrap()).unwrap()).unwrap();
            sscl_loss_from_outputs(&t1, &t2, &p1, &p2).unwrap()
        };
        let num_b = fd::weight_grads(bb.weights(), 1e-5, |ws| {
            objective(&Mlp::from_weights(ws.to_vec()).unwrap(), &proj.0, &pred.0)
        });
        fd::assert_close(&out.grads.backbone, &num_b, 1e-4);
        let num_pj = fd::weight_grads(proj.0.weights(), 1e-5, |ws| {
            objective(bb.mlp(), &Mlp::from_weights(ws.to_vec()).unwrap(), &pred.0)
        });
        fd::assert_close(&out.grads.projector, &num_pj, 1e-4);
        let num_pd = fd::weight_grads(pred.0.weights(), 1e-5, |ws| {
            objective(bb.mlp(), &proj.0, &Mlp::from_weights(ws.to_vec()).unwrap())
        });
        fd::assert_close(&out.grads.predictor, &num_pd, 1e-4);
        assert!(out.grads.target_grads.iter().all(|g| g.max_abs() == 0.0));
    }

    #[test]
    fn loss_is_symmetric_in_views_and_bounded() {
        let (bb, proj, pred, v1, v2) = setup(40);
        let a = sscl_forward_loss(&bb, &proj, &pred, &v1, &v2).unwrap().loss;
        let b = sscl_forward_loss(&bb, &proj, &pred, &v2, &v1).unwrap().loss;
        assert!((a - b).abs() < 1e-12);
        let n = v1.rows() as f64;
        assert!((-n..=n).contains(&a));
    }

    #[test]
    fn frozen_backbone_rejected() {
        let (mut bb, proj, pred, v1, v2) = setup(50);
        bb.freeze();
        assert!(matches!(
            sscl_forward_loss(&bb, &proj, &pred, &v1, &v2).unwrap_err(),
            Error::Frozen
        ));
    }
}
