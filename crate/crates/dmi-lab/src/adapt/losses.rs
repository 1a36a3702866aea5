//! Loss builders shared across pipeline stages.

use crate::error::{Error, Result};
use crate::prob::{estimate_joint_node, mi_node, CLAMP_FLOOR};
use crate::tensor::{Graph, NodeId, Tensor};

/// Label-smoothed cross-entropy: mean over the batch of `−Σₖ l̃ₖ log predₖ`
/// with `l̃ₖ = (1−σ)·onehotₖ + σ/K`.
pub fn smoothed_cross_entropy_node(
    g: &mut Graph,
    pred: NodeId,
    labels: &[usize],
    sigma: f64,
) -> Result<NodeId> {
    let (n, k) = (g.value(pred).rows(), g.value(pred).cols());
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "smoothed_cross_entropy",
            left: vec![labels.len()],
            right: vec![n],
        });
    }
    let mut soft = Tensor::from_fn(n, k, |_, _| sigma / k as f64);
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let v = soft.at(i, label);
        soft.set(i, label, v + 1.0 - sigma);
    }
    let soft = g.constant(soft);
    let clamped = g.clamp_min(pred, CLAMP_FLOOR);
    let logp = g.log(clamped)?;
    let weighted = g.mul(soft, logp)?;
    let total = g.sum_all(weighted);
    Ok(g.scale(total, -1.0 / n as f64))
}

/// Cross-entropy on a subset of rows against hard pseudo-labels (mean over
/// the subset). `rows` and `labels` must align.
pub fn masked_cross_entropy_node(
    g: &mut Graph,
    pred: NodeId,
    rows: &[usize],
    labels: &[usize],
) -> Result<NodeId> {
    assert_eq!(rows.len(), labels.len());
    let picked = g.row_select(pred, rows)?;
    let k = g.value(picked).cols();
    let mut mask = Tensor::zeros(vec![rows.len(), k]);
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        mask.set(r, label, 1.0);
    }
    let mask = g.constant(mask);
    let clamped = g.clamp_min(picked, CLAMP_FLOOR);
    let logp = g.log(clamped)?;
    let hit = g.mul(mask, logp)?;
    let total = g.sum_all(hit);
    Ok(g.scale(total, -1.0 / rows.len() as f64))
}

/// Mean row-wise `KL(aligned ‖ reference)`; the reference plays the role of
/// ground truth, pulling the aligned distribution toward it.
pub fn kl_divergence_node(g: &mut Graph, reference: NodeId, aligned: NodeId) -> Result<NodeId> {
    let n = g.value(aligned).rows();
    let ac = g.clamp_min(aligned, CLAMP_FLOOR);
    let rc = g.clamp_min(reference, CLAMP_FLOOR);
    let la = g.log(ac)?;
    let lr = g.log(rc)?;
    let diff = g.sub(la, lr)?;
    let weighted = g.mul(aligned, diff)?;
    let total = g.sum_all(weighted);
    Ok(g.scale(total, 1.0 / n as f64))
}

/// Plain mutual information between two prediction nodes over the full class
/// space (no decomposition).
pub fn full_mi_node(g: &mut Graph, x: NodeId, y: NodeId, symmetrize: bool) -> Result<NodeId> {
    let joint = estimate_joint_node(g, x, y, symmetrize)?;
    mi_node(g, joint, CLAMP_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ProbMatrix;
    use crate::rng::Rng;
    use crate::tensor::grad_check;
    use std::collections::BTreeMap;

    #[test]
    fn unsmoothed_ce_on_perfect_prediction_is_zero() {
        let mut g = Graph::new();
        let pred = g.constant(ProbMatrix::one_hot(&[1, 0], 3).unwrap().into_tensor());
        let loss = smoothed_cross_entropy_node(&mut g, pred, &[1, 0], 0.0).unwrap();
        // clamping floors the zero entries, so "perfect" is zero up to the floor
        assert!(g.value(loss).item().abs() < 1e-9);
    }

    #[test]
    fn unsmoothed_ce_on_uniform_prediction_is_log_k() {
        let mut g = Graph::new();
        let pred = g.constant(Tensor::from_fn(4, 10, |_, _| 0.1));
        let loss = smoothed_cross_entropy_node(&mut g, pred, &[0, 3, 7, 9], 0.0).unwrap();
        assert!((g.value(loss).item() - 10.0_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn smoothed_ce_matches_direct_formula() {
        let mut rng = Rng::new(30);
        let (n, k) = (6, 10);
        let logits = Tensor::from_fn(n, k, |_, _| rng.normal());
        let mut g = Graph::new();
        let l = g.constant(logits);
        let pred = g.softmax(l).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let sigma = 0.1;
        let loss = smoothed_cross_entropy_node(&mut g, pred, &labels, sigma).unwrap();

        // direct-summation oracle
        let p = g.value(pred).clone();
        let mut want = 0.0;
        for i in 0..n {
            for c in 0..k {
                let soft = if c == labels[i] {
                    1.0 - sigma + sigma / k as f64
                } else {
                    sigma / k as f64
                };
                want -= soft * p.at(i, c).ln();
            }
        }
        want /= n as f64;
        assert!((g.value(loss).item() - want).abs() < 1e-12);
    }

    #[test]
    fn smoothing_adds_irreducible_loss() {
        // a confident, correct prediction scores worse under smoothing
        let mut g = Graph::new();
        let t = Tensor::matrix(1, 4, vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let pred = g.constant(t);
        let plain = smoothed_cross_entropy_node(&mut g, pred, &[0], 0.0).unwrap();
        let smooth = smoothed_cross_entropy_node(&mut g, pred, &[0], 0.1).unwrap();
        assert!(g.value(smooth).item() > g.value(plain).item());
    }

    #[test]
    fn ce_gradients_check() {
        let mut rng = Rng::new(31);
        let mut params = BTreeMap::new();
        params.insert(
            "logits".to_string(),
            Tensor::from_fn(5, 4, |_, _| rng.normal()),
        );
        let err = grad_check(
            |g, ids| {
                let pred = g.softmax(ids["logits"])?;
                smoothed_cross_entropy_node(g, pred, &[0, 1, 2, 3, 0], 0.1)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let mut rng = Rng::new(32);
        let logits = Tensor::from_fn(4, 5, |_, _| rng.normal());
        let mut g = Graph::new();
        let l = g.constant(logits);
        let p = g.softmax(l).unwrap();
        let kl = kl_divergence_node(&mut g, p, p).unwrap();
        assert!(g.value(kl).item().abs() < 1e-12);
    }

    #[test]
    fn kl_is_positive_for_different_distributions() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![0.9, 0.1]).unwrap());
        let b = g.constant(Tensor::matrix(1, 2, vec![0.2, 0.8]).unwrap());
        let kl = kl_divergence_node(&mut g, a, b).unwrap();
        assert!(g.value(kl).item() > 0.5);
    }

    #[test]
    fn full_mi_of_diagonal_joint_is_log_k() {
        let k = 6;
        let labels: Vec<usize> = (0..k).collect();
        let x = ProbMatrix::one_hot(&labels, k).unwrap();
        let mut g = Graph::new();
        let xn = g.constant(x.into_tensor());
        let mi = full_mi_node(&mut g, xn, xn, true).unwrap();
        assert!((g.value(mi).item() - (k as f64).ln()).abs() < 1e-9);
    }
}
