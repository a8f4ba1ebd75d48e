//! Class-incremental experiment protocol: phase plans, the end-to-end
//! pipeline, evaluation and metrics.
//!
//! Classifier column `j` always corresponds to `plan.class_order[j]`, so
//! expanding the classifier by a phase's class count appends exactly that
//! phase's classes.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticClassifier, BufferLayer, DEFAULT_CHUNK_ROWS, DEFAULT_GAMMA};
use crate::backbone::{train_supervised, LinearHead, MlpBackbone, TrainConfig};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::red::{distill, RedConfig, RedLossParts};
use crate::rng::{RngSeed, SeededRng, Stream};
use crate::sscl::{pretrain_sscl, AugmentationPolicy, Predictor, Projector, SsclOutcome};
use crate::synth::LabeledSet;

/// Report schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Base phase with half the classes, the rest split evenly over `k` phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub num_classes: usize,
    /// Base classes followed by each incremental phase's classes.
    pub class_order: Vec<usize>,
    pub base: Vec<usize>,
    pub phases: Vec<Vec<usize>>,
}

/// Shuffles `0..num_classes` with the plan stream of `seed`, then slices.
/// The class order depends only on `(num_classes, seed)`, never on `k`.
pub fn make_phase_plan(num_classes: usize, k: usize, seed: RngSeed) -> Result<PhasePlan> {
    if num_classes < 2 {
        return Err(Error::Plan(format!("need at least 2 classes, got {num_classes}")));
    }
    if k == 0 {
        return Err(Error::Plan("need at least one incremental phase".into()));
    }
    let base_len = num_classes / 2;
    let rest = num_classes - base_len;
    if !rest.is_multiple_of(k) {
        let valid: Vec<String> = (1..=rest).filter(|&d| rest.is_multiple_of(d)).map(|d| d.to_string()).collect();
        return Err(Error::Plan(format!(
            "{rest} incremental classes cannot be split evenly into {k} phases; valid K: {}",
            valid.join(", ")
        )));
    }
    let mut order: Vec<usize> = (0..num_classes).collect();
    SeededRng::new(seed, Stream::Plan).shuffle(&mut order);
    let per_phase = rest / k;
    let base = order[..base_len].to_vec();
    let phases = order[base_len..].chunks(per_phase).map(<[usize]>::to_vec).collect();
    Ok(PhasePlan {
        num_classes,
        class_order: order,
        base,
        phases,
    })
}

impl PhasePlan {
    pub fn k(&self) -> usize {
        self.phases.len()
    }

    /// Classes introduced in phase `k` (0 = base).
    pub fn phase_classes(&self, k: usize) -> &[usize] {
        if k == 0 {
            &self.base
        } else {
            &self.phases[k - 1]
        }
    }

    /// Classes seen after phase `k`, in column order.
    pub fn classes_through(&self, k: usize) -> &[usize] {
        let n = self.base.len() + self.phases.iter().take(k).map(Vec::len).sum::<usize>();
        &self.class_order[..n]
    }

    /// Column index of every class.
    pub fn columns(&self) -> Vec<usize> {
        let mut col = vec![0; self.num_classes];
        for (j, &c) in self.class_order.iter().enumerate() {
            col[c] = j;
        }
        col
    }

    pub fn incremental_classes(&self) -> &[usize] {
        &self.class_order[self.base.len()..]
    }

    pub fn validate_against(&self, data: &LabeledSet) -> Result<()> {
        if data.num_classes != self.num_classes {
            return Err(Error::Plan(format!(
                "plan covers {} classes but dataset has {}",
                self.num_classes, data.num_classes
            )));
        }
        Ok(())
    }
}

/// Every knob of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Hidden widths of the backbone (input width comes from the data).
    pub hidden: Vec<usize>,
    pub d_cnn: usize,
    pub sl: TrainConfig,
    pub sscl: TrainConfig,
    pub jitter: f64,
    pub mask_prob: f64,
    pub d_proj: usize,
    pub d_pred_hidden: usize,
    pub red: RedConfig,
    pub gamma: f64,
    pub d_b: usize,
    /// Buffer entry scale; `None` means `1/√d_cnn`.
    pub buffer_scale: Option<f64>,
    pub chunk_rows: usize,
    pub seeds: SeedSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub data: u64,
    pub plan: u64,
    /// Weight initialization. Teacher uses `init`, student `init + 1`,
    /// projector `+ 2`, predictor `+ 3`, supervised head `+ 4`,
    /// distillation head `+ 5`.
    pub init: u64,
    pub train: u64,
    pub augment: u64,
    pub buffer: u64,
}

impl SeedSet {
    pub fn uniform(seed: u64) -> Self {
        Self {
            data: seed,
            plan: seed,
            init: seed,
            train: seed,
            augment: seed,
            buffer: seed,
        }
    }

    fn init_offset(&self, offset: u64) -> RngSeed {
        RngSeed(self.init.wrapping_add(offset))
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sl = TrainConfig {
            lr: 0.05,
            epochs: 30,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let sscl = TrainConfig {
            lr: 0.05,
            epochs: 40,
            batch_size: 64,
            ..TrainConfig::default()
        };
        Self {
            hidden: vec![128],
            d_cnn: 128,
            red: RedConfig {
                lambda: 0.4,
                epochs: 20,
                optimizer: sl.clone(),
            },
            sl,
            sscl,
            jitter: 0.5,
            mask_prob: 0.2,
            d_proj: 128,
            d_pred_hidden: 128,
            gamma: DEFAULT_GAMMA,
            d_b: 512,
            buffer_scale: None,
            chunk_rows: DEFAULT_CHUNK_ROWS,
            seeds: SeedSet::uniform(0),
        }
    }
}

impl PipelineConfig {
    fn widths(&self, d_in: usize) -> Vec<usize> {
        let mut w = vec![d_in];
        w.extend(&self.hidden);
        w.push(self.d_cnn);
        w
    }

    fn with_seed(&self, mut cfg: TrainConfig) -> TrainConfig {
        cfg.seed = RngSeed(self.seeds.train);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.sl.validate()?;
        self.sscl.validate()?;
        self.red.validate()?;
        if self.d_cnn == 0 || self.d_b == 0 || self.d_proj == 0 || self.d_pred_hidden == 0 {
            return Err(Error::Parameter("network widths must be nonzero".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Parameter("hidden widths must be nonzero".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Parameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.chunk_rows == 0 {
            return Err(Error::Parameter("chunk_rows must be >= 1".into()));
        }
        if let Some(s) = self.buffer_scale {
            if !(s > 0.0) {
                return Err(Error::Parameter("buffer scale must be > 0".into()));
            }
        }
        AugmentationPolicy::new(self.jitter, self.mask_prob, RngSeed(self.seeds.augment))?;
        Ok(())
    }
}

/// One read of training rows, tagged with the phase that was active.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub active_phase: usize,
    pub requested_phase: usize,
    pub stage: String,
    pub rows: usize,
}

/// Gatekeeper for training rows. While phase `k ≥ 1` is active only phase
/// `k` rows can be read; every read is logged.
#[derive(Debug)]
pub struct PhaseTrainStore<'a> {
    data: &'a LabeledSet,
    rows_by_phase: Vec<Vec<usize>>,
    active: usize,
    log: Vec<AccessRecord>,
}

impl<'a> PhaseTrainStore<'a> {
    pub fn new(data: &'a LabeledSet, plan: &PhasePlan) -> Self {
        let rows_by_phase = (0..=plan.k()).map(|k| data.rows_of(plan.phase_classes(k))).collect();
        Self {
            data,
            rows_by_phase,
            active: 0,
            log: Vec::new(),
        }
    }

    pub fn enter_phase(&mut self, k: usize) -> Result<()> {
        if k >= self.rows_by_phase.len() {
            return Err(Error::Protocol(format!("phase {k} is not in the plan")));
        }
        if k < self.active {
            return Err(Error::Protocol(format!(
                "phases run forward only (active {}, requested {k})",
                self.active
            )));
        }
        self.active = k;
        Ok(())
    }

    pub fn active_phase(&self) -> usize {
        self.active
    }

    pub fn read(&mut self, phase: usize, stage: &str) -> Result<LabeledSet> {
        if phase >= self.rows_by_phase.len() {
            return Err(Error::Protocol(format!("phase {phase} is not in the plan")));
        }
        if phase != self.active {
            return Err(Error::ExemplarViolation {
                phase: self.active,
                requested: phase,
            });
        }
        let rows = &self.rows_by_phase[phase];
        self.log.push(AccessRecord {
            active_phase: self.active,
            requested_phase: phase,
            stage: stage.to_string(),
            rows: rows.len(),
        });
        Ok(self.data.subset(rows))
    }

    pub fn log(&self) -> &[AccessRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<AccessRecord> {
        self.log
    }
}

/// Count of audit records in phases `k ≥ 1` that touched another phase's rows.
pub fn exemplar_violations(log: &[AccessRecord]) -> usize {
    log.iter()
        .filter(|r| r.active_phase >= 1 && r.requested_phase != r.active_phase)
        .count()
}

/// Backbone variants compared by the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Contrastive backbone distilled with the configured λ.
    Real,
    /// Contrastive backbone, no distillation.
    SsclOnly,
    /// Contrastive backbone distilled with λ = 0 (labels only).
    SsclLabel,
    /// Contrastive backbone distilled with λ = 1 (teacher only).
    SsclTeacher,
    /// Supervised backbone alone, no contrastive stream or distillation.
    SlOnly,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Real => "real",
            Arm::SsclOnly => "sscl_only",
            Arm::SsclLabel => "sscl_label",
            Arm::SsclTeacher => "sscl_teacher",
            Arm::SlOnly => "sl_only",
        }
    }

    pub fn all() -> [Arm; 5] {
        [Arm::SsclOnly, Arm::SsclLabel, Arm::SsclTeacher, Arm::Real, Arm::SlOnly]
    }
}

/// Outputs of both pretraining streams on the base phase.
#[derive(Debug, Clone)]
pub struct DualStreams {
    /// Supervised backbone, frozen.
    pub teacher: MlpBackbone,
    /// Contrastively pretrained backbone, still trainable.
    pub student: MlpBackbone,
    pub sl_losses: Vec<f64>,
    pub sscl_losses: Vec<f64>,
    pub sscl_embedding_std: Vec<f64>,
    pub sl_seconds: f64,
    pub sscl_seconds: f64,
}

fn base_targets(base: &LabeledSet, plan: &PhasePlan) -> Result<DenseMatrix> {
    let col = plan.columns();
    let labels: Vec<usize> = base.labels.iter().map(|&c| col[c]).collect();
    DenseMatrix::one_hot(&labels, plan.base.len())
}

/// Supervised stream: backbone plus a linear head trained with cross-entropy
/// on the base classes. Returns the frozen backbone and its loss trajectory.
pub fn pretrain_sl(base: &LabeledSet, plan: &PhasePlan, cfg: &PipelineConfig) -> Result<(MlpBackbone, Vec<f64>)> {
    cfg.validate()?;
    if base.is_empty() {
        return Err(Error::EmptyBase);
    }
    let y = base_targets(base, plan)?;
    let teacher = MlpBackbone::new(&cfg.widths(base.dim()), cfg.seeds.init_offset(0))?;
    let head = LinearHead::new(cfg.d_cnn, plan.base.len(), cfg.seeds.init_offset(4))?;
    let sl = train_supervised(teacher, head, &base.features, &y, &cfg.with_seed(cfg.sl.clone()))
        .map_err(|e| e.in_stage("pretrain-sl"))?;
    let mut teacher = sl.net;
    teacher.freeze();
    Ok((teacher, sl.losses))
}

/// Contrastive stream on unlabeled base rows; the backbone stays trainable.
pub fn pretrain_contrastive(base: &LabeledSet, cfg: &PipelineConfig) -> Result<SsclOutcome> {
    cfg.validate()?;
    if base.is_empty() {
        return Err(Error::EmptyBase);
    }
    let student = MlpBackbone::new(&cfg.widths(base.dim()), cfg.seeds.init_offset(1))?;
    let projector = Projector::new(cfg.d_cnn, cfg.d_proj, cfg.seeds.init_offset(2))?;
    let predictor = Predictor::new(cfg.d_proj, cfg.d_pred_hidden, cfg.seeds.init_offset(3))?;
    let policy = AugmentationPolicy::new(cfg.jitter, cfg.mask_prob, RngSeed(cfg.seeds.augment))?;
    pretrain_sscl(
        student,
        projector,
        predictor,
        &base.features,
        &policy,
        &cfg.with_seed(cfg.sscl.clone()),
    )
    .map_err(|e| e.in_stage("pretrain-sscl"))
}

/// Trains the supervised and contrastive streams on base rows.
pub fn pretrain_streams(base: &LabeledSet, plan: &PhasePlan, cfg: &PipelineConfig) -> Result<DualStreams> {
    let t0 = Instant::now();
    let (teacher, sl_losses) = pretrain_sl(base, plan, cfg)?;
    let sl_seconds = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let sscl = pretrain_contrastive(base, cfg)?;
    Ok(DualStreams {
        teacher,
        student: sscl.backbone,
        sl_losses,
        sscl_losses: sscl.losses,
        sscl_embedding_std: sscl.embedding_std,
        sl_seconds,
        sscl_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Distills `teacher` into a copy of `student` on the base rows with the
/// given λ and `cfg.red.epochs`; the result is frozen.
pub fn distill_backbone(
    student: &MlpBackbone,
    teacher: &MlpBackbone,
    base: &LabeledSet,
    plan: &PhasePlan,
    cfg: &PipelineConfig,
    lambda: f64,
) -> Result<(MlpBackbone, Vec<RedLossParts>)> {
    let red = RedConfig {
        lambda,
        epochs: cfg.red.epochs,
        optimizer: cfg.with_seed(cfg.red.optimizer.clone()),
    };
    let y = base_targets(base, plan)?;
    let head = LinearHead::new(cfg.d_cnn, plan.base.len(), cfg.seeds.init_offset(5))?;
    let out = distill(student.clone(), teacher, head, &base.features, &y, &red).map_err(|e| e.in_stage("distill"))?;
    Ok((out.student, out.trajectory))
}

/// Frozen backbone for one arm plus the distillation trajectory, if any.
pub fn arm_backbone(
    arm: Arm,
    streams: &DualStreams,
    base: &LabeledSet,
    plan: &PhasePlan,
    cfg: &PipelineConfig,
) -> Result<(MlpBackbone, Vec<RedLossParts>)> {
    let lambda = match arm {
        Arm::SlOnly => return Ok((streams.teacher.clone(), Vec::new())),
        Arm::SsclOnly => {
            let mut b = streams.student.clone();
            b.freeze();
            return Ok((b, Vec::new()));
        }
        Arm::Real => cfg.red.lambda,
        Arm::SsclLabel => 0.0,
        Arm::SsclTeacher => 1.0,
    };
    distill_backbone(&streams.student, &streams.teacher, base, plan, cfg, lambda)
}

pub fn make_buffer(cfg: &PipelineConfig) -> Result<BufferLayer> {
    let scale = cfg.buffer_scale.unwrap_or_else(|| BufferLayer::default_scale(cfg.d_cnn));
    BufferLayer::new(cfg.d_cnn, cfg.d_b, scale, RngSeed(cfg.seeds.buffer))
}

/// Buffer features of `x` through the frozen backbone.
pub fn features(backbone: &MlpBackbone, buffer: &BufferLayer, x: &DenseMatrix) -> Result<DenseMatrix> {
    buffer.project(&backbone.forward(x)?)
}

/// Raw sample accuracy on test rows whose class is in `classes`.
pub fn accuracy_on(
    classifier: &AnalyticClassifier,
    backbone: &MlpBackbone,
    buffer: &BufferLayer,
    test: &LabeledSet,
    plan: &PhasePlan,
    classes: &[usize],
) -> Result<(usize, usize)> {
    let rows = test.rows_of(classes);
    if rows.is_empty() {
        return Ok((0, 0));
    }
    let subset = test.subset(&rows);
    let pred = classifier.predict(&features(backbone, buffer, &subset.features)?)?;
    let correct = pred
        .iter()
        .zip(&subset.labels)
        .filter(|(&col, &label)| plan.class_order.get(col) == Some(&label))
        .count();
    Ok((correct, rows.len()))
}

/// Accuracy split into base-class and incremental-class test rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub base: f64,
    pub incremental: f64,
    pub base_correct: usize,
    pub base_total: usize,
    pub incremental_correct: usize,
    pub incremental_total: usize,
}

pub fn evaluate_split(
    classifier: &AnalyticClassifier,
    backbone: &MlpBackbone,
    buffer: &BufferLayer,
    test: &LabeledSet,
    plan: &PhasePlan,
) -> Result<SplitAccuracy> {
    if classifier.classes_seen() != plan.num_classes {
        return Err(Error::Evaluation(format!(
            "classifier covers {} of {} classes",
            classifier.classes_seen(),
            plan.num_classes
        )));
    }
    let (bc, bt) = accuracy_on(classifier, backbone, buffer, test, plan, &plan.base)?;
    let (ic, it) = accuracy_on(classifier, backbone, buffer, test, plan, plan.incremental_classes())?;
    if bt == 0 || it == 0 {
        return Err(Error::Evaluation(format!(
            "empty split: {bt} base rows, {it} incremental rows"
        )));
    }
    Ok(SplitAccuracy {
        base: bc as f64 / bt as f64,
        incremental: ic as f64 / it as f64,
        base_correct: bc,
        base_total: bt,
        incremental_correct: ic,
        incremental_total: it,
    })
}

/// `(mean, last)` of per-phase accuracies.
pub fn metrics(accuracies: &[f64]) -> Result<(f64, f64)> {
    if accuracies.is_empty() {
        return Err(Error::Data {
            row: 0,
            msg: "no accuracies".into(),
        });
    }
    if let Some(i) = accuracies.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Data {
            row: i,
            msg: format!("accuracy {} outside [0, 1]", accuracies[i]),
        });
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    Ok((mean, *accuracies.last().expect("non-empty")))
}

/// Result of the analytic phases on a frozen backbone.
#[derive(Debug, Clone)]
pub struct IncrementalRun {
    pub classifier: AnalyticClassifier,
    pub buffer: BufferLayer,
    pub accuracies: Vec<f64>,
    pub access_log: Vec<AccessRecord>,
    pub split: SplitAccuracy,
}

/// Observer invoked after every phase with the phase index and classifier.
pub type PhaseHook<'h> = &'h mut dyn FnMut(usize, &AnalyticClassifier) -> Result<()>;

/// AInit on the base phase, then expand + recursive update for each phase,
/// evaluating on the cumulative test classes after each one. Training rows
/// are only reachable through a [`PhaseTrainStore`].
pub fn run_incremental(
    backbone: &MlpBackbone,
    train: &LabeledSet,
    test: &LabeledSet,
    plan: &PhasePlan,
    cfg: &PipelineConfig,
    hook: Option<PhaseHook<'_>>,
) -> Result<IncrementalRun> {
    plan.validate_against(train)?;
    if !backbone.is_frozen() {
        return Err(Error::Protocol("backbone must be frozen before analytic learning".into()));
    }
    let buffer = make_buffer(cfg)?;
    let col = plan.columns();
    let mut store = PhaseTrainStore::new(train, plan);
    let mut hook = hook;

    let base = store.read(0, "ainit")?;
    if base.is_empty() {
        return Err(Error::EmptyBase);
    }
    let xb = features(backbone, &buffer, &base.features)?;
    let yb = DenseMatrix::one_hot(&base.labels.iter().map(|&c| col[c]).collect::<Vec<_>>(), plan.base.len())?;
    let mut clf = AnalyticClassifier::ainit(&xb, &yb, cfg.gamma).map_err(|e| e.in_stage("ainit"))?;

    let mut accuracies = Vec::with_capacity(plan.k() + 1);
    let eval = |clf: &AnalyticClassifier, k: usize| -> Result<f64> {
        let (c, t) = accuracy_on(clf, backbone, &buffer, test, plan, plan.classes_through(k))?;
        if t == 0 {
            return Err(Error::Evaluation(format!("no test rows for phases 0..={k}")));
        }
        Ok(c as f64 / t as f64)
    };
    accuracies.push(eval(&clf, 0)?);
    if let Some(h) = hook.as_mut() {
        h(0, &clf)?;
    }

    for k in 1..=plan.k() {
        store.enter_phase(k)?;
        let phase = store.read(k, "phase_update")?;
        let seen = plan.classes_through(k).len();
        clf = clf.expand_classes(plan.phase_classes(k).len());
        let x = features(backbone, &buffer, &phase.features)?;
        let y = DenseMatrix::one_hot(&phase.labels.iter().map(|&c| col[c]).collect::<Vec<_>>(), seen)?;
        clf = clf
            .phase_update_chunked(&x, &y, cfg.chunk_rows)
            .map_err(|e| e.in_stage("phase_update"))?;
        accuracies.push(eval(&clf, k)?);
        if let Some(h) = hook.as_mut() {
            h(k, &clf)?;
        }
    }

    let split = evaluate_split(&clf, backbone, &buffer, test, plan)?;
    Ok(IncrementalRun {
        classifier: clf,
        buffer,
        accuracies,
        access_log: store.into_log(),
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrajectories {
    pub sl: Vec<f64>,
    pub sscl: Vec<f64>,
    pub sscl_embedding_std: Vec<f64>,
    pub red: Vec<RedLossParts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CilRunReport {
    pub schema: u32,
    pub arm: Arm,
    pub config: PipelineConfig,
    pub plan: PhasePlan,
    pub accuracies: Vec<f64>,
    pub average_accuracy: f64,
    pub last_accuracy: f64,
    pub split: SplitAccuracy,
    pub losses: LossTrajectories,
    pub access_log: Vec<AccessRecord>,
    pub exemplar_violations: usize,
    /// Resolved `key=value` settings when the run was driven by a config
    /// file (includes data-generation keys the pipeline config lacks).
    #[serde(default)]
    pub run_config: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timing: BTreeMap<String, f64>,
}

/// Report plus the trained models it describes.
#[derive(Debug, Clone)]
pub struct CilRun {
    pub report: CilRunReport,
    pub backbone: MlpBackbone,
    pub buffer: BufferLayer,
    pub classifier: AnalyticClassifier,
}

fn finish_arm(
    arm: Arm,
    streams: &DualStreams,
    train: &LabeledSet,
    test: &LabeledSet,
    plan: &PhasePlan,
    cfg: &PipelineConfig,
) -> Result<CilRun> {
    let mut timing = BTreeMap::new();
    timing.insert("pretrain_sl".to_string(), streams.sl_seconds);
    timing.insert("pretrain_sscl".to_string(), streams.sscl_seconds);

    let base = train.subset(&train.rows_of(&plan.base));
    let t0 = Instant::now();
    let (backbone, red) = arm_backbone(arm, streams, &base, plan, cfg)?;
    timing.insert("distill".to_string(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let inc = run_incremental(&backbone, train, test, plan, cfg, None)?;
    timing.insert("analytic".to_string(), t0.elapsed().as_secs_f64());

    let (average_accuracy, last_accuracy) = metrics(&inc.accuracies)?;
    let exemplar_violations = exemplar_violations(&inc.access_log);
    if exemplar_violations > 0 {
        return Err(Error::Contract(format!(
            "{exemplar_violations} reads of earlier-phase training rows"
        )));
    }
    Ok(CilRun {
        report: CilRunReport {
            schema: SCHEMA_VERSION,
            arm,
            config: cfg.clone(),
            plan: plan.clone(),
            accuracies: inc.accuracies,
            average_accuracy,
            last_accuracy,
            split: inc.split,
            losses: LossTrajectories {
                sl: streams.sl_losses.clone(),
                sscl: streams.sscl_losses.clone(),
                sscl_embedding_std: streams.sscl_embedding_std.clone(),
                red,
            },
            access_log: inc.access_log,
            exemplar_violations,
            run_config: BTreeMap::new(),
            timing,
        },
        backbone,
        buffer: inc.buffer,
        classifier: inc.classifier,
    })
}

/// Full pipeline for one arm: both streams on the base phase, the arm's
/// backbone, then the analytic phases.
pub fn run_arm(arm: Arm, train: &LabeledSet, test: &LabeledSet, plan: &PhasePlan, cfg: &PipelineConfig) -> Result<CilRun> {
    plan.validate_against(train)?;
    plan.validate_against(test)?;
    let mut store = PhaseTrainStore::new(train, plan);
    let base = store.read(0, "pretrain")?;
    let streams = pretrain_streams(&base, plan, cfg)?;
    finish_arm(arm, &streams, train, test, plan, cfg)
}

/// The complete method (distilled contrastive backbone).
pub fn run_cil(train: &LabeledSet, test: &LabeledSet, plan: &PhasePlan, cfg: &PipelineConfig) -> Result<CilRun> {
    run_arm(Arm::Real, train, test, plan, cfg)
}

/// Every arm from a single pair of pretrained streams.
pub fn run_ablation(
    train: &LabeledSet,
    test: &LabeledSet,
    plan: &PhasePlan,
    cfg: &PipelineConfig,
) -> Result<Vec<CilRun>> {
    plan.validate_against(train)?;
    plan.validate_against(test)?;
    let base = train.subset(&train.rows_of(&plan.base));
    let streams = pretrain_streams(&base, plan, cfg)?;
    Arm::all()
        .iter()
        .map(|&arm| finish_arm(arm, &streams, train, test, plan, cfg))
        .collect()
}

/// Deterministic 90/10 row split of a training set.
pub fn validation_split(train: &LabeledSet, fraction: f64, seed: RngSeed) -> Result<(LabeledSet, LabeledSet)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Parameter(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let perm = SeededRng::new(seed, Stream::Split).permutation(train.len());
    let n_val = ((train.len() as f64) * fraction).round() as usize;
    let (val, fit) = perm.split_at(n_val);
    let mut fit = fit.to_vec();
    let mut val = val.to_vec();
    fit.sort_unstable();
    val.sort_unstable();
    Ok((train.subset(&fit), train.subset(&val)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda: f64,
    pub epochs: usize,
    pub validation_accuracies: Vec<f64>,
    pub validation_average: f64,
    pub validation_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub schema: u32,
    pub validation_fraction: f64,
    pub cells: Vec<GridCell>,
    /// Index into `cells` with the highest validation average accuracy
    /// (first wins ties).
    pub best: usize,
    /// Full-training-set run with the best cell, evaluated on the test set.
    pub best_report: CilRunReport,
}

/// Searches (λ, e) on a held-out split of the training rows. Both streams
/// are pretrained once on the fitting split; cells run in parallel.
pub fn grid_search(
    train: &LabeledSet,
    test: &LabeledSet,
    plan: &PhasePlan,
    cfg: &PipelineConfig,
    cells: &[(f64, usize)],
    validation_fraction: f64,
) -> Result<GridSummary> {
    use rayon::prelude::*;

    if cells.is_empty() {
        return Err(Error::Parameter("grid needs at least one cell".into()));
    }
    let (fit, val) = validation_split(train, validation_fraction, RngSeed(cfg.seeds.data))?;
    let fit_base = fit.subset(&fit.rows_of(&plan.base));
    let streams = pretrain_streams(&fit_base, plan, cfg)?;

    let results: Vec<Result<GridCell>> = cells
        .par_iter()
        .map(|&(lambda, epochs)| {
            let mut cell_cfg = cfg.clone();
            cell_cfg.red.lambda = lambda;
            cell_cfg.red.epochs = epochs;
            let run = finish_arm(Arm::Real, &streams, &fit, &val, plan, &cell_cfg)?;
            Ok(GridCell {
                lambda,
                epochs,
                validation_accuracies: run.report.accuracies,
                validation_average: run.report.average_accuracy,
                validation_last: run.report.last_accuracy,
            })
        })
        .collect();
    let cells: Vec<GridCell> = results.into_iter().collect::<Result<_>>()?;
    let best = cells
        .iter()
        .enumerate()
        .fold(0, |b, (i, c)| if c.validation_average > cells[b].validation_average { i } else { b });

    let mut best_cfg = cfg.clone();
    best_cfg.red.lambda = cells[best].lambda;
    best_cfg.red.epochs = cells[best].epochs;
    let best_report = run_cil(train, test, plan, &best_cfg)?.report;
    Ok(GridSummary {
        schema: SCHEMA_VERSION,
        validation_fraction,
        cells,
        best,
        best_report,
    })
}
