//! Decomposed mutual information over candidate class subsets.
//!
//! A mini-batch rarely covers every class, so its estimated joint carries
//! spurious mass for absent classes. The decomposed objective splits the
//! joint space along the candidate class subset S (the union of confident
//! batch predictions from both models): mutual information is *enhanced* on
//! the S×S block and *suppressed* on the S^∁×S^∁ block, the suppression term
//! weighted by `λ·log|S|/log|S^∁|` so that the whole quantity stays inside
//! `[-λ·log|S|, log|S|]`.
//!
//! Degenerate geometry follows two hard rules: `|S^∁| ≤ 1` drops the
//! suppression term (scale forced to zero), and `|S| ≤ 1` skips the batch
//! entirely — no value, no gradient.

use crate::error::{Error, Result};
use crate::prob::{
    self, estimate_joint_node, mi_node, neg_plogp_sum_node, JointDistribution, ProbMatrix,
};
use crate::tensor::{Axis, Graph, NodeId, Tensor};

/// Regions with fewer than this many classes are degenerate.
pub const MIN_REGION_SIZE: usize = 2;

/// A subset S of the class space together with its complement S^∁.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSubset {
    k: usize,
    members: Vec<usize>,
    complement: Vec<usize>,
}

impl ClassSubset {
    /// Build from member indices; duplicates collapse, order is ascending.
    pub fn new(k: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut present = vec![false; k];
        for c in members {
            if c >= k {
                return Err(Error::IndexOutOfRange {
                    op: "ClassSubset::new",
                    index: c,
                    size: k,
                });
            }
            present[c] = true;
        }
        let members: Vec<usize> = (0..k).filter(|&c| present[c]).collect();
        if members.is_empty() {
            return Err(Error::EmptySelection {
                op: "ClassSubset::new",
            });
        }
        let complement = (0..k).filter(|&c| !present[c]).collect();
        Ok(ClassSubset {
            k,
            members,
            complement,
        })
    }

    pub fn full(k: usize) -> Self {
        ClassSubset {
            k,
            members: (0..k).collect(),
            complement: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn complement_size(&self) -> usize {
        self.complement.len()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.members.binary_search(&class).is_ok()
    }
}

/// Configuration of the decomposed objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmiConfig {
    /// Suppression strength relative to enhancement (λ > 0); 1.0 recovers the
    /// plain decomposed form.
    pub lambda: f64,
    /// Probabilities are clamped to this floor before any logarithm.
    pub clamp_floor: f64,
}

impl Default for DmiConfig {
    fn default() -> Self {
        DmiConfig {
            lambda: 0.5,
            clamp_floor: prob::CLAMP_FLOOR,
        }
    }
}

impl DmiConfig {
    pub fn with_lambda(lambda: f64) -> Result<Self> {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "dmi lambda must be positive, got {lambda}"
            )));
        }
        Ok(DmiConfig {
            lambda,
            ..DmiConfig::default()
        })
    }
}

/// Why a batch produced no decomposed value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipReason {
    /// The candidate class subset has fewer than two members.
    ConfidentRegionTooSmall,
}

/// The pieces of one decomposed evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DmiBreakdown {
    pub value: f64,
    /// Mutual information over the renormalized S×S block.
    pub enhancement: f64,
    /// Mutual information over the renormalized S^∁×S^∁ block.
    pub suppression: f64,
    /// The factor `λ·log|S|/log|S^∁|` actually applied (0 when degenerate).
    pub scale: f64,
    pub s_size: usize,
    pub sc_size: usize,
    pub skipped: Option<SkipReason>,
}

impl DmiBreakdown {
    fn skipped(subset: &ClassSubset) -> Self {
        DmiBreakdown {
            value: 0.0,
            enhancement: 0.0,
            suppression: 0.0,
            scale: 0.0,
            s_size: subset.size(),
            sc_size: subset.complement_size(),
            skipped: Some(SkipReason::ConfidentRegionTooSmall),
        }
    }
}

/// A decomposed value that may live on a tape. `node` is `None` when the
/// batch was skipped or every region was empty (constant zero contribution).
#[derive(Debug)]
pub struct DmiTerm {
    pub breakdown: DmiBreakdown,
    pub node: Option<NodeId>,
}

impl DmiTerm {
    pub fn is_skipped(&self) -> bool {
        self.breakdown.skipped.is_some()
    }
}

/// Which block of the decomposed joint space to extract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// The S×S block.
    Confident,
    /// The S^∁×S^∁ block.
    Uncertain,
}

fn region_indices(subset: &ClassSubset, region: Region) -> &[usize] {
    match region {
        Region::Confident => subset.members(),
        Region::Uncertain => subset.complement(),
    }
}

/// The suppression weight `λ·log|S|/log|S^∁|`, zero for degenerate complements.
fn suppression_scale(subset: &ClassSubset, cfg: &DmiConfig) -> f64 {
    if subset.complement_size() < MIN_REGION_SIZE {
        0.0
    } else {
        cfg.lambda * (subset.size() as f64).ln() / (subset.complement_size() as f64).ln()
    }
}

/// Candidate class subset: union of per-row argmaxes of both prediction
/// matrices; ties break toward the lowest class index.
pub fn candidate_subset(x: &ProbMatrix, y: &ProbMatrix) -> Result<ClassSubset> {
    if x.n() != y.n() || x.k() != y.k() {
        return Err(Error::ShapeMismatch {
            op: "candidate_subset",
            left: x.as_tensor().shape().to_vec(),
            right: y.as_tensor().shape().to_vec(),
        });
    }
    let members = x.argmax_rows().into_iter().chain(y.argmax_rows());
    ClassSubset::new(x.k(), members)
}

/// As [`candidate_subset`], but a row only contributes its argmax when the
/// winning probability reaches `min_confidence`. Off (0.0) by default in all
/// pipelines.
pub fn candidate_subset_thresholded(
    x: &ProbMatrix,
    y: &ProbMatrix,
    min_confidence: f64,
) -> Result<ClassSubset> {
    if x.n() != y.n() || x.k() != y.k() {
        return Err(Error::ShapeMismatch {
            op: "candidate_subset",
            left: x.as_tensor().shape().to_vec(),
            right: y.as_tensor().shape().to_vec(),
        });
    }
    let mut members = Vec::new();
    for m in [x, y] {
        for i in 0..m.n() {
            let row = m.row(i);
            let c = prob::argmax(row);
            if row[c] >= min_confidence {
                members.push(c);
            }
        }
    }
    ClassSubset::new(x.k(), members)
}

/// A region block of a joint, renormalized to a distribution. `joint` is
/// `None` when the block's raw mass is below numerical floor.
#[derive(Clone, Debug)]
pub struct RestrictedJoint {
    pub joint: Option<JointDistribution>,
    pub mass: f64,
}

/// Extract the requested block of the joint, record its raw mass and
/// renormalize it into a proper distribution.
pub fn restrict_joint(
    p: &JointDistribution,
    subset: &ClassSubset,
    region: Region,
) -> Result<RestrictedJoint> {
    let idx = region_indices(subset, region);
    if idx.is_empty() {
        return Err(Error::EmptySelection {
            op: "restrict_joint",
        });
    }
    let r = idx.len();
    let mut block = Tensor::zeros(vec![r, r]);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            block.set(a, b, p.at(i, j));
        }
    }
    let mass: f64 = block.data().iter().sum();
    if mass < prob::CLAMP_FLOOR {
        return Ok(RestrictedJoint { joint: None, mass });
    }
    for v in block.data_mut() {
        *v /= mass;
    }
    Ok(RestrictedJoint {
        joint: Some(JointDistribution::new(block)?),
        mass,
    })
}

/// Decomposed mutual information of a joint (value level).
pub fn dmi(p: &JointDistribution, subset: &ClassSubset, cfg: &DmiConfig) -> Result<DmiBreakdown> {
    if subset.size() < MIN_REGION_SIZE {
        return Ok(DmiBreakdown::skipped(subset));
    }
    let enhancement = match restrict_joint(p, subset, Region::Confident)?.joint {
        Some(block) => prob::mutual_information(&block)?,
        None => 0.0,
    };
    let scale = suppression_scale(subset, cfg);
    let suppression = if subset.complement_size() < MIN_REGION_SIZE {
        0.0
    } else {
        match restrict_joint(p, subset, Region::Uncertain)?.joint {
            Some(block) => prob::mutual_information(&block)?,
            None => 0.0,
        }
    };
    Ok(DmiBreakdown {
        value: enhancement - scale * suppression,
        enhancement,
        suppression,
        scale,
        s_size: subset.size(),
        sc_size: subset.complement_size(),
        skipped: None,
    })
}

/// Result of checking a decomposed value against its analytic bound.
#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub pass: bool,
    /// Distance from the value to the nearest bound (negative on violation).
    pub margin: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Verify `−λ·log|S| ≤ value ≤ log|S|` with 1e-9 slack.
pub fn bound_check(b: &DmiBreakdown, cfg: &DmiConfig) -> BoundCheck {
    assert!(
        b.skipped.is_none(),
        "bound_check is only defined for non-skipped evaluations"
    );
    let log_s = (b.s_size as f64).ln();
    let lower = -cfg.lambda * log_s;
    let upper = log_s;
    let margin = (b.value - lower).min(upper - b.value);
    BoundCheck {
        pass: b.value >= lower - 1e-9 && b.value <= upper + 1e-9,
        margin,
        lower,
        upper,
    }
}

/// Decomposed MI of a joint node on the tape. Shared by the prediction-level
/// and conditional forms.
fn dmi_of_joint_node(
    g: &mut Graph,
    joint: NodeId,
    subset: &ClassSubset,
    cfg: &DmiConfig,
) -> Result<DmiTerm> {
    if subset.size() < MIN_REGION_SIZE {
        return Ok(DmiTerm {
            breakdown: DmiBreakdown::skipped(subset),
            node: None,
        });
    }

    let mut region_mi = |idx: &[usize]| -> Result<Option<NodeId>> {
        let rows = g.row_select(joint, idx)?;
        let block = g.col_select(rows, idx)?;
        let mass = g.sum_all(block);
        if g.value(mass).item() < cfg.clamp_floor {
            return Ok(None);
        }
        let norm = g.div(block, mass)?;
        Ok(Some(mi_node(g, norm, cfg.clamp_floor)?))
    };

    let enh = region_mi(subset.members())?;
    let scale = suppression_scale(subset, cfg);
    let sup = if subset.complement_size() < MIN_REGION_SIZE {
        None
    } else {
        region_mi(subset.complement())?
    };

    let node = match (enh, sup) {
        (Some(e), Some(s)) => {
            let scaled = g.scale(s, scale);
            Some(g.sub(e, scaled)?)
        }
        (Some(e), None) => Some(e),
        (None, Some(s)) => Some(g.scale(s, -scale)),
        (None, None) => None,
    };

    let enhancement = enh.map_or(0.0, |n| g.value(n).item());
    let suppression = sup.map_or(0.0, |n| g.value(n).item());
    Ok(DmiTerm {
        breakdown: DmiBreakdown {
            value: enhancement - scale * suppression,
            enhancement,
            suppression,
            scale,
            s_size: subset.size(),
            sc_size: subset.complement_size(),
            skipped: None,
        },
        node,
    })
}

/// Differentiable decomposed MI between two prediction nodes: the joint is
/// estimated on the tape so gradients reach whichever of `x`, `y` is
/// produced by trainable parameters.
pub fn dmi_from_predictions(
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    subset: &ClassSubset,
    cfg: &DmiConfig,
    symmetrize: bool,
) -> Result<DmiTerm> {
    if subset.size() < MIN_REGION_SIZE {
        return Ok(DmiTerm {
            breakdown: DmiBreakdown::skipped(subset),
            node: None,
        });
    }
    let joint = estimate_joint_node(g, x, y, symmetrize)?;
    dmi_of_joint_node(g, joint, subset, cfg)
}

/// Differentiable conditional decomposed MI: the expectation over the
/// conditioning prediction `z` of per-class decomposed MI values, skipping
/// conditioning classes with (almost) no mass.
pub fn conditional_dmi(
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    z: NodeId,
    subset: &ClassSubset,
    cfg: &DmiConfig,
    symmetrize: bool,
) -> Result<DmiTerm> {
    if subset.size() < MIN_REGION_SIZE {
        return Ok(DmiTerm {
            breakdown: DmiBreakdown::skipped(subset),
            node: None,
        });
    }
    let k = g.value(z).cols();
    let mut total: Option<NodeId> = None;
    let mut enhancement = 0.0;
    let mut suppression = 0.0;
    let mut scale = 0.0;
    for class in 0..k {
        let Some((weight, joint)) = prob::conditioned_joint_node(g, x, y, z, class, symmetrize)?
        else {
            continue;
        };
        let term = dmi_of_joint_node(g, joint, subset, cfg)?;
        let w = g.value(weight).item();
        enhancement += w * term.breakdown.enhancement;
        suppression += w * term.breakdown.suppression;
        scale = term.breakdown.scale;
        if let Some(node) = term.node {
            let contrib = g.mul(weight, node)?;
            total = Some(match total {
                Some(t) => g.add(t, contrib)?,
                None => contrib,
            });
        }
    }
    Ok(DmiTerm {
        breakdown: DmiBreakdown {
            value: enhancement - scale * suppression,
            enhancement,
            suppression,
            scale,
            s_size: subset.size(),
            sc_size: subset.complement_size(),
            skipped: None,
        },
        node: total,
    })
}

/// Subset-restricted information maximization of a single prediction matrix:
/// for each region, `H(mean of region-renormalized rows) − mean row entropy`,
/// combined as enhancement minus scaled suppression. Rows with region mass
/// below 1e-9 are excluded from that region's averages.
pub fn selective_im(
    g: &mut Graph,
    t: NodeId,
    subset: &ClassSubset,
    cfg: &DmiConfig,
) -> Result<DmiTerm> {
    if subset.size() < MIN_REGION_SIZE {
        return Ok(DmiTerm {
            breakdown: DmiBreakdown::skipped(subset),
            node: None,
        });
    }

    let mut region_im = |idx: &[usize]| -> Result<Option<NodeId>> {
        let sub = g.col_select(t, idx)?;
        let n = g.value(sub).rows();
        let kept: Vec<usize> = (0..n)
            .filter(|&i| g.value(sub).row(i).iter().sum::<f64>() >= prob::PROB_TOL)
            .collect();
        if kept.is_empty() {
            return Ok(None);
        }
        let rows = g.row_select(sub, &kept)?;
        let mass = g.sum_axis(rows, Axis::Cols)?;
        let ones_row = g.constant(Tensor::ones(vec![1, idx.len()]));
        let spread = g.matmul(mass, ones_row)?;
        let norm = g.div(rows, spread)?;
        let mean_sum = g.sum_axis(norm, Axis::Rows)?;
        let mean_pred = g.scale(mean_sum, 1.0 / kept.len() as f64);
        let h_mean = neg_plogp_sum_node(g, mean_pred, cfg.clamp_floor)?;
        let h_total = neg_plogp_sum_node(g, norm, cfg.clamp_floor)?;
        let mean_h = g.scale(h_total, 1.0 / kept.len() as f64);
        Ok(Some(g.sub(h_mean, mean_h)?))
    };

    let enh = region_im(subset.members())?;
    let scale = suppression_scale(subset, cfg);
    let sup = if subset.complement_size() < MIN_REGION_SIZE {
        None
    } else {
        region_im(subset.complement())?
    };

    let node = match (enh, sup) {
        (Some(e), Some(s)) => {
            let scaled = g.scale(s, scale);
            Some(g.sub(e, scaled)?)
        }
        (Some(e), None) => Some(e),
        (None, Some(s)) => Some(g.scale(s, -scale)),
        (None, None) => None,
    };

    let enhancement = enh.map_or(0.0, |n| g.value(n).item());
    let suppression = sup.map_or(0.0, |n| g.value(n).item());
    Ok(DmiTerm {
        breakdown: DmiBreakdown {
            value: enhancement - scale * suppression,
            enhancement,
            suppression,
            scale,
            s_size: subset.size(),
            sc_size: subset.complement_size(),
            skipped: None,
        },
        node,
    })
}
