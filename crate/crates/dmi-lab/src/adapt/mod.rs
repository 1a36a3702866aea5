//! The bidirectional adaptation pipeline.
//!
//! One run is: supervised source pretraining → proxy burn-in on caption
//! pseudo-labels → per-batch alternation of two stages. The teacher
//! adjustment stage (TCA) updates the prompt offsets and the proxy with a
//! mutual-consistency term toward the frozen target model plus a conditional
//! decorrelation term between the two teachers given the target prediction.
//! The distillation stage (MDA) updates the target model with
//! agreement-gated cross-entropy plus subset-restricted information
//! maximization, the subset coming from the two teachers' confident classes.
//!
//! Stage discipline is structural: each step registers only its trainable
//! bundle on the tape, everything else enters as constants, so gradients for
//! frozen players cannot exist.

pub mod losses;
pub mod opt;

pub use opt::OptState;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dmi::{
    candidate_subset, conditional_dmi, dmi_from_predictions, selective_im, ClassSubset, DmiConfig,
};
use crate::error::{Error, Result};
use crate::models::{
    forward_classifier, forward_prototype, CaptionTeacher, ClassifierConfig, ClassifierParams,
    PrototypeTeacher, PROMPT_PARAM,
};
use crate::prob::ProbMatrix;
use crate::rng::{derive_seed, Rng};
use crate::synthdata::{LabeledSet, ScenarioBundle};
use crate::tensor::{Graph, NodeId, Tensor};

/// Which information objective drives both stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Decomposed mutual information over candidate class subsets.
    Dmi,
    /// Plain mutual information over the full class space.
    Mi,
    /// Row-wise KL alignment (reference distribution treated as ground truth).
    Kl,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Dmi => "dmi",
            Objective::Mi => "mi",
            Objective::Kl => "kl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmi" => Ok(Objective::Dmi),
            "mi" => Ok(Objective::Mi),
            "kl" => Ok(Objective::Kl),
            other => Err(Error::InvalidConfig(format!("unknown objective {other:?}"))),
        }
    }
}

/// Ablation switches for the four loss components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub mc: bool,
    pub cd: bool,
    pub ags: bool,
    pub sim: bool,
}

impl Default for ComponentSet {
    fn default() -> Self {
        ComponentSet {
            mc: true,
            cd: true,
            ags: true,
            sim: true,
        }
    }
}

impl ComponentSet {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.sim {
            parts.push("sim");
        }
        if self.ags {
            parts.push("ags");
        }
        if self.mc {
            parts.push("mc");
        }
        if self.cd {
            parts.push("cd");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// Frozen-teacher construction knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub embed_dim: usize,
    pub temperature: f64,
    pub caption_noise: f64,
    /// Angular offset of the prototype teacher's class concepts from the
    /// domain's actual class geometry (0 = perfectly aligned).
    pub prototype_misalignment: f64,
    /// Same for the caption teacher's class-name embeddings.
    pub caption_misalignment: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    /// Balance of the conditional decorrelation term in the teacher stage.
    pub alpha: f64,
    /// Balance of the information-maximization term in the target stage.
    pub beta: f64,
    pub dmi_lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    pub lr_target: f64,
    pub lr_proxy: f64,
    pub lr_prompt: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub pretrain_epochs: usize,
    pub burn_in_epochs: usize,
    pub objective: Objective,
    pub components: ComponentSet,
    pub symmetrize: bool,
    pub teachers: TeacherConfig,
    pub seed: u64,
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha and beta must be positive, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidConfig(format!(
                "label smoothing must be in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.dmi_lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "dmi lambda must be positive, got {}",
                self.dmi_lambda
            )));
        }
        Ok(())
    }

    pub fn dmi_config(&self) -> DmiConfig {
        DmiConfig {
            lambda: self.dmi_lambda,
            ..DmiConfig::default()
        }
    }
}

/// One epoch of bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub target_accuracy: f64,
    pub proxy_accuracy: f64,
    pub prototype_teacher_accuracy: f64,
    pub loss_mc: f64,
    pub loss_cd: f64,
    pub loss_tca: f64,
    pub loss_ags: f64,
    pub loss_sim: f64,
    pub loss_mda: f64,
    pub agreement_rate: f64,
    pub mean_subset_size: f64,
    pub skipped_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub epochs: Vec<EpochRecord>,
    pub final_accuracy: f64,
    /// Not serialized: wall-clock is the one non-deterministic quantity.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

pub struct TcaOutcome {
    pub l_mc: f64,
    pub l_cd: f64,
    pub l_tca: f64,
    pub skipped: bool,
    pub subset_sizes: Vec<usize>,
}

pub struct MdaOutcome {
    pub l_ags: f64,
    pub l_sim: f64,
    pub l_mda: f64,
    pub skipped: bool,
    pub agreed: usize,
    pub batch_size: usize,
    pub subset_size: usize,
}

fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let cols = t.cols();
    let mut out = Tensor::zeros(vec![idx.len(), cols]);
    for (r, &i) in idx.iter().enumerate() {
        for j in 0..cols {
            out.set(r, j, t.at(i, j));
        }
    }
    out
}

fn finite_or_diverged(value: f64, context: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged {
            context: context.to_string(),
        })
    }
}

/// The per-pair candidate subsets one teacher-adjustment step works with.
#[derive(Clone, Debug)]
pub struct TcaSubsets {
    /// From (target, proxy) predictions.
    pub tb: ClassSubset,
    /// From (target, prototype-teacher) predictions.
    pub tc: ClassSubset,
    /// From (proxy, prototype-teacher) predictions.
    pub bc: ClassSubset,
}

/// Candidate subsets for a teacher-adjustment step; the full class set under
/// the plain-MI objective.
pub fn tca_subsets(
    pm_t: &ProbMatrix,
    pm_b: &ProbMatrix,
    pm_c: &ProbMatrix,
    objective: Objective,
) -> Result<TcaSubsets> {
    let k = pm_t.k();
    Ok(match objective {
        Objective::Dmi => TcaSubsets {
            tb: candidate_subset(pm_t, pm_b)?,
            tc: candidate_subset(pm_t, pm_c)?,
            bc: candidate_subset(pm_b, pm_c)?,
        },
        _ => TcaSubsets {
            tb: ClassSubset::full(k),
            tc: ClassSubset::full(k),
            bc: ClassSubset::full(k),
        },
    })
}

/// Nodes of one assembled teacher-stage loss.
pub struct TcaLoss {
    pub mc: Option<NodeId>,
    pub cd: Option<NodeId>,
    pub total: Option<NodeId>,
}

/// Assemble the teacher-stage loss `L_MC + α·L_CD` on the tape. Subsets are
/// fixed inputs (computed once per batch from unperturbed forward values).
pub fn build_tca_loss(
    g: &mut Graph,
    p_t: NodeId,
    p_b: NodeId,
    p_c: NodeId,
    subsets: &TcaSubsets,
    cfg: &AdaptConfig,
) -> Result<TcaLoss> {
    let dmi_cfg = cfg.dmi_config();
    let sym = cfg.symmetrize;
    let mut mc_node: Option<NodeId> = None;
    let mut cd_node: Option<NodeId> = None;

    match cfg.objective {
        Objective::Dmi | Objective::Mi => {
            if cfg.components.mc {
                let t1 = dmi_from_predictions(g, p_t, p_b, &subsets.tb, &dmi_cfg, sym)?;
                let t2 = dmi_from_predictions(g, p_t, p_c, &subsets.tc, &dmi_cfg, sym)?;
                let total = match (t1.node, t2.node) {
                    (Some(a), Some(b)) => Some(g.add(a, b)?),
                    (Some(a), None) => Some(a),
                    (None, Some(b)) => Some(b),
                    (None, None) => None,
                };
                mc_node = total.map(|n| g.neg(n));
            }
            if cfg.components.cd {
                let cond = conditional_dmi(g, p_b, p_c, p_t, &subsets.bc, &dmi_cfg, sym)?;
                cd_node = cond.node;
            }
        }
        Objective::Kl => {
            if cfg.components.mc {
                let kb = losses::kl_divergence_node(g, p_t, p_b)?;
                let kc = losses::kl_divergence_node(g, p_t, p_c)?;
                mc_node = Some(g.add(kb, kc)?);
            }
            // conditional decorrelation has no KL counterpart; the term is
            // dropped when the ablation keeps it enabled under this objective
        }
    }

    let total = match (mc_node, cd_node) {
        (Some(mc), Some(cd)) => {
            let scaled = g.scale(cd, cfg.alpha);
            Some(g.add(mc, scaled)?)
        }
        (Some(mc), None) => Some(mc),
        (None, Some(cd)) => Some(g.scale(cd, cfg.alpha)),
        (None, None) => None,
    };
    Ok(TcaLoss {
        mc: mc_node,
        cd: cd_node,
        total,
    })
}

/// Teacher-adjustment step: updates the prompt offsets and the proxy while
/// the target model stays frozen. Returns per-component loss values; a step
/// where every objective term degenerated performs no update.
pub fn tca_step(
    features: &Tensor,
    views_global: &Tensor,
    target: &ClassifierParams,
    proxy: &mut ClassifierParams,
    prototype: &mut PrototypeTeacher,
    opt_proxy: &mut OptState,
    opt_prompt: &mut OptState,
    cfg: &AdaptConfig,
    context: &str,
) -> Result<TcaOutcome> {
    let mut g = Graph::new();
    let feat = g.constant(features.clone());
    let views = g.constant(views_global.clone());

    let t_nodes = target.register(&mut g, "tgt", false);
    let p_t = forward_classifier(&mut g, &t_nodes, feat)?;
    let b_nodes = proxy.register(&mut g, "proxy", true);
    let p_b = forward_classifier(&mut g, &b_nodes, feat)?;
    let c_nodes = prototype.register(&mut g, true);
    let p_c = forward_prototype(&mut g, &c_nodes, views, prototype.temperature)?;

    let pm_t = ProbMatrix::new(g.value(p_t).clone())?;
    let pm_b = ProbMatrix::new(g.value(p_b).clone())?;
    let pm_c = ProbMatrix::new(g.value(p_c).clone())?;

    let subsets = tca_subsets(&pm_t, &pm_b, &pm_c, cfg.objective)?;
    let subset_sizes = vec![subsets.tb.size(), subsets.tc.size(), subsets.bc.size()];
    let loss = build_tca_loss(&mut g, p_t, p_b, p_c, &subsets, cfg)?;

    let Some(total) = loss.total else {
        return Ok(TcaOutcome {
            l_mc: 0.0,
            l_cd: 0.0,
            l_tca: 0.0,
            skipped: true,
            subset_sizes,
        });
    };

    let l_tca = finite_or_diverged(g.value(total).item(), context)?;
    let grads = g.backward(total)?;
    debug_assert!(grads
        .keys()
        .all(|k| k.starts_with("proxy.") || k == PROMPT_PARAM));
    opt_proxy.step(&mut proxy.named_mut("proxy"), &grads);
    opt_prompt.step(
        &mut [(PROMPT_PARAM.to_string(), &mut prototype.prompt_offsets)],
        &grads,
    );

    Ok(TcaOutcome {
        l_mc: loss.mc.map_or(0.0, |n| g.value(n).item()),
        l_cd: loss.cd.map_or(0.0, |n| g.value(n).item()),
        l_tca,
        skipped: false,
        subset_sizes,
    })
}

/// Agreement gating and candidate subset for one distillation step, computed
/// from the frozen teachers' predictions.
#[derive(Clone, Debug)]
pub struct MdaGating {
    pub agreed_rows: Vec<usize>,
    pub agreed_labels: Vec<usize>,
    pub subset: ClassSubset,
}

pub fn mda_gating(pm_c: &ProbMatrix, pm_b: &ProbMatrix, objective: Objective) -> Result<MdaGating> {
    let argmax_c = pm_c.argmax_rows();
    let argmax_b = pm_b.argmax_rows();
    let mut agreed_rows = Vec::new();
    let mut agreed_labels = Vec::new();
    for i in 0..pm_c.n() {
        if argmax_c[i] == argmax_b[i] {
            agreed_rows.push(i);
            agreed_labels.push(argmax_c[i]);
        }
    }
    let subset = match objective {
        Objective::Dmi => candidate_subset(pm_c, pm_b)?,
        _ => ClassSubset::full(pm_c.k()),
    };
    Ok(MdaGating {
        agreed_rows,
        agreed_labels,
        subset,
    })
}

/// Nodes of one assembled distillation loss.
pub struct MdaLoss {
    pub ags: Option<NodeId>,
    pub sim: Option<NodeId>,
    pub total: Option<NodeId>,
}

/// Assemble the distillation loss `L_AGS + β·L_SIM` on the tape.
pub fn build_mda_loss(
    g: &mut Graph,
    p_t: NodeId,
    pm_c: &ProbMatrix,
    pm_b: &ProbMatrix,
    gating: &MdaGating,
    cfg: &AdaptConfig,
) -> Result<MdaLoss> {
    let ags_node = if cfg.components.ags && !gating.agreed_rows.is_empty() {
        Some(losses::masked_cross_entropy_node(
            g,
            p_t,
            &gating.agreed_rows,
            &gating.agreed_labels,
        )?)
    } else {
        None
    };

    let sim_node = if cfg.components.sim {
        match cfg.objective {
            Objective::Dmi | Objective::Mi => {
                let term = selective_im(g, p_t, &gating.subset, &cfg.dmi_config())?;
                term.node.map(|nd| g.neg(nd))
            }
            Objective::Kl => {
                let (n, k) = (pm_c.n(), pm_c.k());
                let mix = Tensor::from_fn(n, k, |i, j| {
                    0.5 * (pm_c.as_tensor().at(i, j) + pm_b.as_tensor().at(i, j))
                });
                let mix = g.constant(mix);
                Some(losses::kl_divergence_node(g, mix, p_t)?)
            }
        }
    } else {
        None
    };

    let total = match (ags_node, sim_node) {
        (Some(a), Some(s)) => {
            let scaled = g.scale(s, cfg.beta);
            Some(g.add(a, scaled)?)
        }
        (Some(a), None) => Some(a),
        (None, Some(s)) => Some(g.scale(s, cfg.beta)),
        (None, None) => None,
    };
    Ok(MdaLoss {
        ags: ags_node,
        sim: sim_node,
        total,
    })
}

/// Target-distillation step: updates the target model while both teachers
/// stay frozen. In the decomposed objective a degenerate candidate subset
/// skips the whole batch.
pub fn mda_step(
    features: &Tensor,
    views_global: &Tensor,
    target: &mut ClassifierParams,
    proxy: &ClassifierParams,
    prototype: &PrototypeTeacher,
    opt_target: &mut OptState,
    cfg: &AdaptConfig,
    context: &str,
) -> Result<MdaOutcome> {
    let n = features.rows();
    let pm_c = prototype.predict(views_global)?;
    let pm_b = proxy.predict(features)?;
    let gating = mda_gating(&pm_c, &pm_b, cfg.objective)?;

    if cfg.objective == Objective::Dmi && gating.subset.size() < 2 {
        return Ok(MdaOutcome {
            l_ags: 0.0,
            l_sim: 0.0,
            l_mda: 0.0,
            skipped: true,
            agreed: gating.agreed_rows.len(),
            batch_size: n,
            subset_size: gating.subset.size(),
        });
    }

    let mut g = Graph::new();
    let feat = g.constant(features.clone());
    let t_nodes = target.register(&mut g, "target", true);
    let p_t = forward_classifier(&mut g, &t_nodes, feat)?;
    let loss = build_mda_loss(&mut g, p_t, &pm_c, &pm_b, &gating, cfg)?;

    let Some(total) = loss.total else {
        return Ok(MdaOutcome {
            l_ags: 0.0,
            l_sim: 0.0,
            l_mda: 0.0,
            skipped: true,
            agreed: gating.agreed_rows.len(),
            batch_size: n,
            subset_size: gating.subset.size(),
        });
    };

    let l_mda = finite_or_diverged(g.value(total).item(), context)?;
    let grads = g.backward(total)?;
    debug_assert!(grads.keys().all(|k| k.starts_with("target.")));
    opt_target.step(&mut target.named_mut("target"), &grads);

    Ok(MdaOutcome {
        l_ags: loss.ags.map_or(0.0, |nd| g.value(nd).item()),
        l_sim: loss.sim.map_or(0.0, |nd| g.value(nd).item()),
        l_mda,
        skipped: false,
        agreed: gating.agreed_rows.len(),
        batch_size: n,
        subset_size: gating.subset.size(),
    })
}

/// Accuracy over known classes; samples labeled beyond the known space are
/// tallied separately (open-set protocol).
#[derive(Clone, Debug)]
pub struct EvalResult {
    pub accuracy: f64,
    /// (correct, total) per known class.
    pub per_class: Vec<(usize, usize)>,
    pub unknown_count: usize,
}

pub fn evaluate(
    params: &ClassifierParams,
    set: &LabeledSet,
    known_classes: usize,
) -> Result<EvalResult> {
    if set.is_empty() {
        return Err(Error::EmptyDataset("evaluate"));
    }
    let pred = params.predict(&set.features)?;
    let argmax = pred.argmax_rows();
    let mut per_class = vec![(0usize, 0usize); known_classes];
    let mut unknown_count = 0;
    let mut correct = 0;
    let mut shared = 0;
    for (i, &label) in set.labels.iter().enumerate() {
        if label >= known_classes {
            unknown_count += 1;
            continue;
        }
        shared += 1;
        per_class[label].1 += 1;
        if argmax[i] == label {
            correct += 1;
            per_class[label].0 += 1;
        }
    }
    let accuracy = if shared > 0 {
        correct as f64 / shared as f64
    } else {
        0.0
    };
    Ok(EvalResult {
        accuracy,
        per_class,
        unknown_count,
    })
}

fn classifier_config(bundle: &ScenarioBundle, cfg: &AdaptConfig) -> ClassifierConfig {
    ClassifierConfig {
        input_dim: bundle.config.dim(),
        hidden_dim: cfg.hidden_dim,
        bottleneck_dim: cfg.bottleneck_dim,
        classes: bundle.config.classes,
    }
}

fn train_supervised(
    params: &mut ClassifierParams,
    features: &Tensor,
    labels: &[usize],
    epochs: usize,
    learning_rate: f64,
    cfg: &AdaptConfig,
    stream: &str,
) -> Result<()> {
    let n = labels.len();
    let mut opt = OptState::new(learning_rate, cfg.momentum, cfg.weight_decay);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::stream(cfg.seed, &format!("{stream}-{epoch}")).shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather_rows(features, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let b = g.constant(batch);
            let nodes = params.register(&mut g, "m", true);
            let pred = forward_classifier(&mut g, &nodes, b)?;
            let loss = losses::smoothed_cross_entropy_node(
                &mut g,
                pred,
                &batch_labels,
                cfg.label_smoothing,
            )?;
            finite_or_diverged(g.value(loss).item(), &format!("{stream} epoch {epoch}"))?;
            let grads = g.backward(loss)?;
            opt.step(&mut params.named_mut("m"), &grads);
        }
    }
    Ok(())
}

/// Supervised source training with label smoothing.
pub fn pretrain_source(bundle: &ScenarioBundle, cfg: &AdaptConfig) -> Result<ClassifierParams> {
    if bundle.source.is_empty() {
        return Err(Error::EmptyDataset("pretrain_source"));
    }
    let mut rng = Rng::stream(cfg.seed, "source-init");
    let mut params = ClassifierParams::init(classifier_config(bundle, cfg), &mut rng);
    train_supervised(
        &mut params,
        &bundle.source.features,
        &bundle.source.labels,
        cfg.pretrain_epochs,
        cfg.lr_target,
        cfg,
        "pretrain",
    )?;
    Ok(params)
}

/// Burn-in: clone the source model and fit it to the caption teacher's
/// cosine pseudo-labels over the target data.
pub fn burn_in_proxy(
    bundle: &ScenarioBundle,
    caption: &CaptionTeacher,
    source: &ClassifierParams,
    cfg: &AdaptConfig,
) -> Result<ClassifierParams> {
    let mut proxy = source.clone();
    if cfg.burn_in_epochs == 0 {
        return Ok(proxy);
    }
    let pseudo = caption.pseudo_labels(
        &bundle.target_views_local,
        derive_seed(bundle.config.seed, "caption-labels"),
    )?;
    train_supervised(
        &mut proxy,
        &bundle.target.features,
        &pseudo,
        cfg.burn_in_epochs,
        cfg.lr_proxy,
        cfg,
        "burn-in",
    )?;
    Ok(proxy)
}

/// Build the two frozen teachers for a scenario. Seeded from the scenario,
/// not the run, so every run on a bundle sees identical teachers.
pub fn build_teachers(
    bundle: &ScenarioBundle,
    cfg: &AdaptConfig,
) -> Result<(PrototypeTeacher, CaptionTeacher)> {
    let prototype = PrototypeTeacher::from_class_means(
        &bundle.class_means_global,
        cfg.teachers.embed_dim,
        cfg.teachers.temperature,
        cfg.teachers.prototype_misalignment,
        bundle.config.seed,
    )?;
    let caption = CaptionTeacher::from_class_means(
        &bundle.class_means_local,
        cfg.teachers.embed_dim,
        cfg.teachers.caption_noise,
        cfg.teachers.caption_misalignment,
        bundle.config.seed,
    )?;
    Ok((prototype, caption))
}

/// Run the full alternating adaptation and return the adapted target model
/// with its per-epoch report.
pub fn adapt(
    bundle: &ScenarioBundle,
    source: &ClassifierParams,
    proxy: ClassifierParams,
    prototype: PrototypeTeacher,
    cfg: &AdaptConfig,
) -> Result<(ClassifierParams, AdaptReport)> {
    adapt_with(bundle, source, proxy, prototype, cfg, |_| Ok(()))
}

/// As [`adapt`], invoking `on_epoch` after every epoch (used by the
/// experiment runner to flush metrics incrementally).
pub fn adapt_with(
    bundle: &ScenarioBundle,
    source: &ClassifierParams,
    proxy: ClassifierParams,
    prototype: PrototypeTeacher,
    cfg: &AdaptConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<(ClassifierParams, AdaptReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut target = source.clone();
    let mut proxy = proxy;
    let mut prototype = prototype;

    let mut opt_target = OptState::new(cfg.lr_target, cfg.momentum, cfg.weight_decay);
    let mut opt_proxy = OptState::new(cfg.lr_proxy, cfg.momentum, cfg.weight_decay);
    let mut opt_prompt = OptState::new(cfg.lr_prompt, cfg.momentum, cfg.weight_decay);

    let n = bundle.target.len();
    if n == 0 {
        return Err(Error::EmptyDataset("adapt"));
    }
    let k = bundle.config.classes;
    let run_tca = cfg.components.mc || cfg.components.cd;
    let run_mda = cfg.components.ags || cfg.components.sim;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::stream(cfg.seed, &format!("adapt-shuffle-{epoch}")).shuffle(&mut order);

        let mut sums = EpochRecord {
            epoch,
            target_accuracy: 0.0,
            proxy_accuracy: 0.0,
            prototype_teacher_accuracy: 0.0,
            loss_mc: 0.0,
            loss_cd: 0.0,
            loss_tca: 0.0,
            loss_ags: 0.0,
            loss_sim: 0.0,
            loss_mda: 0.0,
            agreement_rate: 0.0,
            mean_subset_size: 0.0,
            skipped_steps: 0,
        };
        let mut batches = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            batches += 1;
            let features = gather_rows(&bundle.target.features, chunk);
            let views = gather_rows(&bundle.target_views_global, chunk);
            let context = format!("adapt epoch {epoch} batch {batches}");

            if run_tca {
                let tca = tca_step(
                    &features,
                    &views,
                    &target,
                    &mut proxy,
                    &mut prototype,
                    &mut opt_proxy,
                    &mut opt_prompt,
                    cfg,
                    &context,
                )?;
                sums.loss_mc += tca.l_mc;
                sums.loss_cd += tca.l_cd;
                sums.loss_tca += tca.l_tca;
                if tca.skipped {
                    sums.skipped_steps += 1;
                }
            }

            if run_mda {
                let mda = mda_step(
                    &features,
                    &views,
                    &mut target,
                    &proxy,
                    &prototype,
                    &mut opt_target,
                    cfg,
                    &context,
                )?;
                sums.loss_ags += mda.l_ags;
                sums.loss_sim += mda.l_sim;
                sums.loss_mda += mda.l_mda;
                sums.agreement_rate += mda.agreed as f64 / mda.batch_size as f64;
                sums.mean_subset_size += mda.subset_size as f64;
                if mda.skipped {
                    sums.skipped_steps += 1;
                }
            }
        }

        let b = batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            target_accuracy: evaluate(&target, &bundle.target, k)?.accuracy,
            proxy_accuracy: evaluate(&proxy, &bundle.target, k)?.accuracy,
            prototype_teacher_accuracy: teacher_accuracy(&prototype, bundle)?,
            loss_mc: sums.loss_mc / b,
            loss_cd: sums.loss_cd / b,
            loss_tca: sums.loss_tca / b,
            loss_ags: sums.loss_ags / b,
            loss_sim: sums.loss_sim / b,
            loss_mda: sums.loss_mda / b,
            agreement_rate: sums.agreement_rate / b,
            mean_subset_size: sums.mean_subset_size / b,
            skipped_steps: sums.skipped_steps,
        };
        on_epoch(&record)?;
        epochs.push(record);
    }

    let final_accuracy = evaluate(&target, &bundle.target, k)?.accuracy;
    Ok((
        target,
        AdaptReport {
            epochs,
            final_accuracy,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Prototype-teacher accuracy on the target's known-class samples.
pub fn teacher_accuracy(prototype: &PrototypeTeacher, bundle: &ScenarioBundle) -> Result<f64> {
    let pred = prototype.predict(&bundle.target_views_global)?;
    let argmax = pred.argmax_rows();
    let k = bundle.config.classes;
    let mut correct = 0;
    let mut total = 0;
    for (i, &label) in bundle.target.labels.iter().enumerate() {
        if label < k {
            total += 1;
            if argmax[i] == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Stable fingerprints of every parameter bundle in play, for stage audits.
pub fn fingerprints(
    target: &ClassifierParams,
    proxy: &ClassifierParams,
    prototype: &PrototypeTeacher,
) -> BTreeMap<String, u64> {
    use crate::models::params_fingerprint;
    let mut map = BTreeMap::new();
    map.insert(
        "target".into(),
        params_fingerprint(target.named("t").iter().map(|(_, t)| *t)),
    );
    map.insert(
        "proxy".into(),
        params_fingerprint(proxy.named("p").iter().map(|(_, t)| *t)),
    );
    map.insert(
        "prompt".into(),
        params_fingerprint([&prototype.prompt_offsets]),
    );
    map.insert(
        "prototype_frozen".into(),
        params_fingerprint([&prototype.encoder, &prototype.prototypes]),
    );
    map
}
