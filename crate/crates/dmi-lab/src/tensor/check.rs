//! Finite-difference validation harness for the tape's gradients.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{Graph, NodeId, Tensor};

/// Compare analytic gradients against central finite differences.
///
/// `build` must deterministically construct the scalar loss from the given
/// parameter nodes. Returns the maximum relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)` over every
/// entry of every parameter.
pub fn grad_check<F>(build: F, params: &BTreeMap<String, Tensor>, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &BTreeMap<String, NodeId>) -> Result<NodeId>,
{
    assert!(epsilon > 0.0, "epsilon must be positive");

    let eval = |theta: &BTreeMap<String, Tensor>, context: &str| -> Result<(f64, Graph, NodeId)> {
        let mut graph = Graph::new();
        let mut ids = BTreeMap::new();
        for (name, value) in theta {
            ids.insert(name.clone(), graph.param(name.clone(), value.clone()));
        }
        let loss = build(&mut graph, &ids)?;
        let v = graph.value(loss);
        if !v.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: v.shape().to_vec(),
            });
        }
        let value = v.item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: context.to_string(),
            });
        }
        Ok((value, graph, loss))
    };

    let (_, graph, loss) = eval(params, "grad_check base point")?;
    let analytic = graph.backward(loss)?;

    let mut max_rel = 0.0_f64;
    for (name, value) in params {
        let zero = Tensor::zeros(value.shape().to_vec());
        let grad = analytic.get(name).unwrap_or(&zero);
        for entry in 0..value.len() {
            let mut plus = params.clone();
            plus.get_mut(name).expect("param present").data_mut()[entry] += epsilon;
            let mut minus = params.clone();
            minus.get_mut(name).expect("param present").data_mut()[entry] -= epsilon;

            let context = format!("grad_check perturbation of {name}[{entry}]");
            let (f_plus, _, _) = eval(&plus, &context)?;
            let (f_minus, _, _) = eval(&minus, &context)?;
            let numeric = (f_plus - f_minus) / (2.0 * epsilon);
            let a = grad.data()[entry];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn quadratic_loss_checks_to_machine_precision() {
        let mut rng = Rng::new(9);
        let mut params = BTreeMap::new();
        params.insert(
            "p".to_string(),
            Tensor::new(vec![4], (0..4).map(|_| rng.normal()).collect()).unwrap(),
        );
        let err = grad_check(
            |g, ids| {
                let p = ids["p"];
                let sq = g.mul(p, p)?;
                Ok(g.sum_all(sq))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn composite_log_exp_softmax_checks() {
        let mut rng = Rng::new(23);
        let mut params = BTreeMap::new();
        params.insert("w".to_string(), Tensor::from_fn(3, 4, |_, _| rng.normal()));
        let err = grad_check(
            |g, ids| {
                let w = ids["w"];
                let s = g.softmax(w)?;
                let c = g.clamp_min(s, 1e-12);
                let l = g.log(c)?;
                let prod = g.mul(s, l)?;
                let total = g.sum_all(prod);
                Ok(g.neg(total))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn matmul_chain_checks() {
        let mut rng = Rng::new(31);
        let mut params = BTreeMap::new();
        params.insert("a".to_string(), Tensor::from_fn(3, 5, |_, _| rng.normal()));
        params.insert("b".to_string(), Tensor::from_fn(5, 2, |_, _| rng.normal()));
        let err = grad_check(
            |g, ids| {
                let p = g.matmul(ids["a"], ids["b"])?;
                let t = g.tanh(p);
                Ok(g.mean_all(t))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut params = BTreeMap::new();
        params.insert("p".to_string(), Tensor::scalar(700.0));
        // exp(exp(x)) overflows at the base point
        let res = grad_check(
            |g, ids| {
                let e = g.exp(ids["p"]);
                let ee = g.exp(e);
                Ok(g.sum_all(ee))
            },
            &params,
            1e-5,
        );
        assert!(matches!(res, Err(Error::NonFinite { .. })));
    }
}
