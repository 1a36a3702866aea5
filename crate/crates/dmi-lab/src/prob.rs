//! Probability-vector utilities, batch joint-distribution estimation,
//! entropy and mutual information over discrete class spaces.
//!
//! Joints are estimated from two row-stochastic prediction matrices over the
//! same mini-batch as the normalized product `XᵀY / n`, optionally
//! symmetrized. Everything here exists twice: as plain value-level functions
//! and as tape builders (`*_node`) so the same quantities can sit inside a
//! differentiated loss.

use crate::error::{Error, Result};
use crate::tensor::{Axis, Graph, NodeId, Tensor};

/// Probabilities below this floor are clamped before any logarithm.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Row-sum tolerance for probability matrices and joints.
pub const PROB_TOL: f64 = 1e-9;

/// A batch of n probability vectors over K classes (row-stochastic).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix {
    tensor: Tensor,
}

impl ProbMatrix {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "ProbMatrix::new",
                expected: 2,
                found: tensor.shape().to_vec(),
            });
        }
        let (n, k) = (tensor.rows(), tensor.cols());
        if k < 2 {
            return Err(Error::InvalidProbability {
                context: "ProbMatrix::new",
                detail: format!("need at least 2 classes, got {k}"),
            });
        }
        for i in 0..n {
            let row = tensor.row(i);
            if let Some(&bad) = row.iter().find(|&&v| v < -CLAMP_FLOOR || !v.is_finite()) {
                return Err(Error::InvalidProbability {
                    context: "ProbMatrix::new",
                    detail: format!("row {i} has entry {bad}"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidProbability {
                    context: "ProbMatrix::new",
                    detail: format!("row {i} sums to {sum}"),
                });
            }
        }
        Ok(ProbMatrix { tensor })
    }

    /// One-hot rows from a label vector.
    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut t = Tensor::zeros(vec![labels.len(), k]);
        for (i, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
            t.set(i, label, 1.0);
        }
        ProbMatrix::new(t)
    }

    pub fn n(&self) -> usize {
        self.tensor.rows()
    }

    pub fn k(&self) -> usize {
        self.tensor.cols()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.tensor.row(i)
    }

    /// Per-row argmax; ties break toward the lowest class index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.n()).map(|i| argmax(self.row(i))).collect()
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// A K×K joint distribution over two class variables.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    p: Tensor,
}

impl JointDistribution {
    pub fn new(p: Tensor) -> Result<Self> {
        if p.shape().len() != 2 || p.rows() != p.cols() {
            return Err(Error::InvalidProbability {
                context: "JointDistribution::new",
                detail: format!("expected square matrix, got {:?}", p.shape()),
            });
        }
        if let Some(&bad) = p.data().iter().find(|&&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidProbability {
                context: "JointDistribution::new",
                detail: format!("entry {bad} out of range"),
            });
        }
        let total: f64 = p.data().iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidProbability {
                context: "JointDistribution::new",
                detail: format!("entries sum to {total}"),
            });
        }
        Ok(JointDistribution { p })
    }

    pub fn uniform(k: usize) -> Self {
        let v = 1.0 / (k * k) as f64;
        JointDistribution {
            p: Tensor::new(vec![k, k], vec![v; k * k]).expect("uniform joint"),
        }
    }

    pub fn k(&self) -> usize {
        self.p.rows()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.p
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.p.at(i, j)
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.p.row(i).iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let k = self.k();
        (0..k)
            .map(|j| (0..k).map(|i| self.p.at(i, j)).sum())
            .collect()
    }
}

/// Weighted per-class conditioned joints.
#[derive(Clone, Debug)]
pub struct ConditionedJoint {
    pub weight: f64,
    pub joint: JointDistribution,
    /// Conditioning class received (almost) no probability mass; the joint is
    /// a uniform placeholder and downstream expectations skip it.
    pub zero_weight: bool,
}

#[derive(Clone, Debug)]
pub struct ConditionedJoints {
    pub entries: Vec<ConditionedJoint>,
}

fn check_same_batch(op: &'static str, x: &ProbMatrix, y: &ProbMatrix) -> Result<()> {
    if x.n() != y.n() || x.k() != y.k() {
        return Err(Error::ShapeMismatch {
            op,
            left: x.as_tensor().shape().to_vec(),
            right: y.as_tensor().shape().to_vec(),
        });
    }
    Ok(())
}

fn finish_joint(mut p: Tensor, symmetrize: bool) -> Result<JointDistribution> {
    let k = p.rows();
    if symmetrize {
        let mut sym = Tensor::zeros(vec![k, k]);
        for i in 0..k {
            for j in 0..k {
                sym.set(i, j, 0.5 * (p.at(i, j) + p.at(j, i)));
            }
        }
        p = sym;
    }
    for v in p.data_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = p.data().iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidProbability {
            context: "estimate_joint",
            detail: "joint has no mass".to_string(),
        });
    }
    for v in p.data_mut() {
        *v /= total;
    }
    JointDistribution::new(p)
}

/// Estimate the batch joint `p(x, y) = XᵀY / n`, optionally symmetrized.
pub fn estimate_joint(
    x: &ProbMatrix,
    y: &ProbMatrix,
    symmetrize: bool,
) -> Result<JointDistribution> {
    check_same_batch("estimate_joint", x, y)?;
    let (n, k) = (x.n(), x.k());
    let mut p = Tensor::zeros(vec![k, k]);
    for a in 0..k {
        for b in 0..k {
            let mut acc = 0.0;
            for i in 0..n {
                acc += x.as_tensor().at(i, a) * y.as_tensor().at(i, b);
            }
            p.set(a, b, acc / n as f64);
        }
    }
    finish_joint(p, symmetrize)
}

/// Shannon entropy in nats with the `0·log 0 := 0` convention.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(&bad) = p.iter().find(|&&v| v < -CLAMP_FLOOR || !v.is_finite()) {
        return Err(Error::InvalidProbability {
            context: "entropy",
            detail: format!("entry {bad}"),
        });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidProbability {
            context: "entropy",
            detail: format!("sums to {sum}"),
        });
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    Ok(h.max(0.0))
}

/// Mutual information of a joint in nats: `Σ pᵢⱼ (log pᵢⱼ − log pᵢ· − log p·ⱼ)`.
pub fn mutual_information(p: &JointDistribution) -> Result<f64> {
    let k = p.k();
    let rows = p.row_marginal();
    let cols = p.col_marginal();
    let mut mi = 0.0;
    for i in 0..k {
        for j in 0..k {
            let v = p.at(i, j);
            if v > 0.0 {
                mi += v * (v.ln() - rows[i].ln() - cols[j].ln());
            }
        }
    }
    Ok(mi)
}

/// Per-class conditioned joints `P⁽ᵏ⁾ = Σᵢ Zᵢₖ xᵢ yᵢᵀ / Σᵢ Zᵢₖ` with weights
/// `wₖ = (1/n) Σᵢ Zᵢₖ`.
pub fn conditional_joints(
    x: &ProbMatrix,
    y: &ProbMatrix,
    z: &ProbMatrix,
    symmetrize: bool,
) -> Result<ConditionedJoints> {
    check_same_batch("conditional_joints", x, y)?;
    check_same_batch("conditional_joints", x, z)?;
    let (n, k) = (x.n(), x.k());
    let mut entries = Vec::with_capacity(k);
    for cls in 0..k {
        let mass: f64 = (0..n).map(|i| z.as_tensor().at(i, cls)).sum();
        let weight = mass / n as f64;
        if mass < PROB_TOL {
            entries.push(ConditionedJoint {
                weight,
                joint: JointDistribution::uniform(k),
                zero_weight: true,
            });
            continue;
        }
        let mut p = Tensor::zeros(vec![k, k]);
        for a in 0..k {
            for b in 0..k {
                let mut acc = 0.0;
                for i in 0..n {
                    acc +=
                        z.as_tensor().at(i, cls) * x.as_tensor().at(i, a) * y.as_tensor().at(i, b);
                }
                p.set(a, b, acc / mass);
            }
        }
        entries.push(ConditionedJoint {
            weight,
            joint: finish_joint(p, symmetrize)?,
            zero_weight: false,
        });
    }
    Ok(ConditionedJoints { entries })
}

// ---- tape builders ---------------------------------------------------------

/// Joint estimation inside the tape: `clamp(XᵀY/n) / Σ`, optionally symmetrized.
pub fn estimate_joint_node(
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    symmetrize: bool,
) -> Result<NodeId> {
    let n = g.value(x).rows();
    let xt = g.transpose(x)?;
    let mut p = g.matmul(xt, y)?;
    p = g.scale(p, 1.0 / n as f64);
    if symmetrize {
        let pt = g.transpose(p)?;
        let sum = g.add(p, pt)?;
        p = g.scale(sum, 0.5);
    }
    p = g.clamp_min(p, 0.0);
    let total = g.sum_all(p);
    g.div(p, total)
}

/// Per-class conditioned joint and weight inside the tape. Returns `None`
/// when the conditioning class carries (almost) no mass.
pub fn conditioned_joint_node(
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    z: NodeId,
    class: usize,
    symmetrize: bool,
) -> Result<Option<(NodeId, NodeId)>> {
    let (n, k) = (g.value(x).rows(), g.value(x).cols());
    let z_col = g.col_select(z, &[class])?;
    let mass = g.sum_all(z_col);
    if g.value(mass).item() < PROB_TOL {
        return Ok(None);
    }
    let ones_row = g.constant(Tensor::ones(vec![1, k]));
    let z_spread = g.matmul(z_col, ones_row)?;
    let xw = g.mul(x, z_spread)?;
    let xwt = g.transpose(xw)?;
    let mut p = g.matmul(xwt, y)?;
    p = g.div(p, mass)?;
    if symmetrize {
        let pt = g.transpose(p)?;
        let sum = g.add(p, pt)?;
        p = g.scale(sum, 0.5);
    }
    p = g.clamp_min(p, 0.0);
    let total = g.sum_all(p);
    p = g.div(p, total)?;
    let weight = g.scale(mass, 1.0 / n as f64);
    Ok(Some((weight, p)))
}

/// Mutual information of a joint node via the marginal outer product.
pub fn mi_node(g: &mut Graph, joint: NodeId, floor: f64) -> Result<NodeId> {
    let r = g.sum_axis(joint, Axis::Cols)?;
    let c = g.sum_axis(joint, Axis::Rows)?;
    let m = g.matmul(r, c)?;
    let pj = g.clamp_min(joint, floor);
    let pm = g.clamp_min(m, floor);
    let lp = g.log(pj)?;
    let lm = g.log(pm)?;
    let diff = g.sub(lp, lm)?;
    let prod = g.mul(joint, diff)?;
    Ok(g.sum_all(prod))
}

/// `−Σ p log p` over all entries of a node (rows need not be normalized to
/// use this; callers decide what the sum ranges over).
pub fn neg_plogp_sum_node(g: &mut Graph, p: NodeId, floor: f64) -> Result<NodeId> {
    let pc = g.clamp_min(p, floor);
    let lp = g.log(pc)?;
    let prod = g.mul(p, lp)?;
    let s = g.sum_all(prod);
    Ok(g.neg(s))
}
