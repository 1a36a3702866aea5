//! Desk-scale model zoo: differentiable encoder+classifier bundles, a frozen
//! prototype teacher with a learnable per-class offset ("prompt") tensor, and
//! a frozen caption-embedding teacher used for burn-in pseudo-labels.
//!
//! Teachers are frozen by construction: only the prototype offsets `v` ever
//! register as trainable, everything else enters computation tapes as
//! constants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Container, KIND_CHECKPOINT};
use crate::prob::{self, ProbMatrix};
use crate::rng::Rng;
use crate::tensor::{Axis, Graph, NodeId, Tensor};

/// Squared norms are clamped here before the square root.
const NORM_FLOOR: f64 = 1e-24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    pub classes: usize,
}

/// Two-layer encoder (affine → tanh → affine) plus an affine classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub config: ClassifierConfig,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub wc: Tensor,
    pub bc: Tensor,
}

/// Tape handles for one registered classifier.
#[derive(Clone, Copy, Debug)]
pub struct ClassifierNodes {
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
    wc: NodeId,
    bc: NodeId,
}

impl ClassifierParams {
    pub fn init(config: ClassifierConfig, rng: &mut Rng) -> Self {
        let gaussian = |rng: &mut Rng, rows: usize, cols: usize, scale: f64| {
            Tensor::from_fn(rows, cols, |_, _| rng.normal() * scale)
        };
        let s1 = 1.0 / (config.input_dim as f64).sqrt();
        let s2 = 1.0 / (config.hidden_dim as f64).sqrt();
        let s3 = 1.0 / (config.bottleneck_dim as f64).sqrt();
        ClassifierParams {
            w1: gaussian(rng, config.input_dim, config.hidden_dim, s1),
            b1: Tensor::zeros(vec![1, config.hidden_dim]),
            w2: gaussian(rng, config.hidden_dim, config.bottleneck_dim, s2),
            b2: Tensor::zeros(vec![1, config.bottleneck_dim]),
            wc: gaussian(rng, config.bottleneck_dim, config.classes, s3),
            bc: Tensor::zeros(vec![1, config.classes]),
            config,
        }
    }

    /// Named views of every parameter, prefixed (e.g. `target.w1`).
    pub fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{prefix}.w1"), &self.w1),
            (format!("{prefix}.b1"), &self.b1),
            (format!("{prefix}.w2"), &self.w2),
            (format!("{prefix}.b2"), &self.b2),
            (format!("{prefix}.wc"), &self.wc),
            (format!("{prefix}.bc"), &self.bc),
        ]
    }

    pub fn named_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (format!("{prefix}.w1"), &mut self.w1),
            (format!("{prefix}.b1"), &mut self.b1),
            (format!("{prefix}.w2"), &mut self.w2),
            (format!("{prefix}.b2"), &mut self.b2),
            (format!("{prefix}.wc"), &mut self.wc),
            (format!("{prefix}.bc"), &mut self.bc),
        ]
    }

    /// Assemble node handles from parameters someone else already put on the
    /// tape under `prefix` (finite-difference harnesses do this).
    pub fn nodes_from_ids(
        prefix: &str,
        ids: &std::collections::BTreeMap<String, NodeId>,
    ) -> ClassifierNodes {
        let get = |suffix: &str| ids[&format!("{prefix}.{suffix}")];
        ClassifierNodes {
            w1: get("w1"),
            b1: get("b1"),
            w2: get("w2"),
            b2: get("b2"),
            wc: get("wc"),
            bc: get("bc"),
        }
    }

    /// Put the parameters on a tape, trainable or frozen.
    pub fn register(&self, g: &mut Graph, prefix: &str, trainable: bool) -> ClassifierNodes {
        let mut reg = |name: String, t: &Tensor| {
            if trainable {
                g.param(name, t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        ClassifierNodes {
            w1: reg(format!("{prefix}.w1"), &self.w1),
            b1: reg(format!("{prefix}.b1"), &self.b1),
            w2: reg(format!("{prefix}.w2"), &self.w2),
            b2: reg(format!("{prefix}.b2"), &self.b2),
            wc: reg(format!("{prefix}.wc"), &self.wc),
            bc: reg(format!("{prefix}.bc"), &self.bc),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new(KIND_CHECKPOINT);
        c.meta
            .insert("config".into(), serde_json::to_string(&self.config)?);
        for (name, t) in self.named("model") {
            c.tensors.insert(name, t.clone());
        }
        c.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read_from(path, KIND_CHECKPOINT)?;
        let config: ClassifierConfig = serde_json::from_str(c.meta_value("config")?)?;
        Ok(ClassifierParams {
            config,
            w1: c.tensor("model.w1")?.clone(),
            b1: c.tensor("model.b1")?.clone(),
            w2: c.tensor("model.w2")?.clone(),
            b2: c.tensor("model.b2")?.clone(),
            wc: c.tensor("model.wc")?.clone(),
            bc: c.tensor("model.bc")?.clone(),
        })
    }

    /// Row-stochastic predictions for a feature batch (value level).
    pub fn predict(&self, batch: &Tensor) -> Result<ProbMatrix> {
        let mut g = Graph::new();
        let nodes = self.register(&mut g, "m", false);
        let b = g.constant(batch.clone());
        let out = forward_classifier(&mut g, &nodes, b)?;
        ProbMatrix::new(g.value(out).clone())
    }
}

/// Softmax predictions of a registered classifier over a batch node.
pub fn forward_classifier(g: &mut Graph, nodes: &ClassifierNodes, batch: NodeId) -> Result<NodeId> {
    let n = g.value(batch).rows();
    let ones = g.constant(Tensor::ones(vec![n, 1]));

    let affine = |g: &mut Graph, x: NodeId, w: NodeId, b: NodeId| -> Result<NodeId> {
        let xw = g.matmul(x, w)?;
        let bias = g.matmul(ones, b)?;
        g.add(xw, bias)
    };

    let h_pre = affine(g, batch, nodes.w1, nodes.b1)?;
    let h = g.tanh(h_pre);
    let z = affine(g, h, nodes.w2, nodes.b2)?;
    let logits = affine(g, z, nodes.wc, nodes.bc)?;
    g.softmax(logits)
}

/// FNV-1a fingerprint of a set of tensors, for mutation audits.
pub fn params_fingerprint<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tensors {
        for &v in t.data() {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

// ---- prototype teacher ------------------------------------------------------

/// Frozen linear encoder plus frozen unit prototypes; the only trainable part
/// is the per-class additive offset `prompt_offsets` (zero-initialized).
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeTeacher {
    pub encoder: Tensor,
    pub prototypes: Tensor,
    pub prompt_offsets: Tensor,
    pub temperature: f64,
}

/// Tape handles for a registered prototype teacher.
#[derive(Clone, Copy, Debug)]
pub struct PrototypeTeacherNodes {
    encoder: NodeId,
    prototypes: NodeId,
    offsets: NodeId,
}

/// Name under which the prompt offsets register on a tape.
pub const PROMPT_PARAM: &str = "prompt.v";

impl PrototypeTeacher {
    /// Build a teacher whose prototypes are the embedded class means of its
    /// view, each perturbed by a unit-relative `misalignment` offset. Zero
    /// misalignment places every prototype exactly on its class; positive
    /// values model a task-agnostic teacher whose class concepts sit some
    /// angle away from the domain's actual classes, leaving room for the
    /// learnable offsets to close the gap.
    pub fn from_class_means(
        class_means: &Tensor,
        embed_dim: usize,
        temperature: f64,
        misalignment: f64,
        seed: u64,
    ) -> Result<Self> {
        let (k, view_dim) = (class_means.rows(), class_means.cols());
        let mut rng = Rng::stream(seed, "prototype-teacher");
        let scale = 1.0 / (view_dim as f64).sqrt();
        let encoder = Tensor::from_fn(view_dim, embed_dim, |_, _| rng.normal() * scale);
        let embedded = normalize_rows(&matmul_plain(class_means, &encoder))?;
        let noise_scale = misalignment / (embed_dim as f64).sqrt();
        let mut rng_mis = Rng::stream(seed, "prototype-misalign");
        let perturbed = Tensor::from_fn(k, embed_dim, |i, j| {
            embedded.at(i, j) + noise_scale * rng_mis.normal()
        });
        let prototypes = normalize_rows(&perturbed)?;
        Ok(PrototypeTeacher {
            encoder,
            prototypes,
            prompt_offsets: Tensor::zeros(vec![k, embed_dim]),
            temperature,
        })
    }

    pub fn classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn register(&self, g: &mut Graph, trainable_offsets: bool) -> PrototypeTeacherNodes {
        PrototypeTeacherNodes {
            encoder: g.constant(self.encoder.clone()),
            prototypes: g.constant(self.prototypes.clone()),
            offsets: if trainable_offsets {
                g.param(PROMPT_PARAM, self.prompt_offsets.clone())
            } else {
                g.constant(self.prompt_offsets.clone())
            },
        }
    }

    /// Value-level predictions over teacher views.
    pub fn predict(&self, views: &Tensor) -> Result<ProbMatrix> {
        let mut g = Graph::new();
        let nodes = self.register(&mut g, false);
        let v = g.constant(views.clone());
        let out = forward_prototype(&mut g, &nodes, v, self.temperature)?;
        ProbMatrix::new(g.value(out).clone())
    }
}

/// Softmax over `τ · cosine(embed(view), prototypeₖ + vₖ)`; differentiable in
/// the offsets only (encoder and prototypes are constants).
pub fn forward_prototype(
    g: &mut Graph,
    nodes: &PrototypeTeacherNodes,
    views: NodeId,
    temperature: f64,
) -> Result<NodeId> {
    let embedded = g.matmul(views, nodes.encoder)?;
    let shifted = g.add(nodes.prototypes, nodes.offsets)?;

    let row_norms = |g: &mut Graph, m: NodeId| -> Result<NodeId> {
        let sq = g.mul(m, m)?;
        let sums = g.sum_axis(sq, Axis::Cols)?;
        let clamped = g.clamp_min(sums, NORM_FLOOR);
        g.sqrt(clamped)
    };

    let e_norm = row_norms(g, embedded)?;
    let w_norm = row_norms(g, shifted)?;
    let shifted_t = g.transpose(shifted)?;
    let dots = g.matmul(embedded, shifted_t)?;
    let w_norm_t = g.transpose(w_norm)?;
    let norm_outer = g.matmul(e_norm, w_norm_t)?;
    let cosine = g.div(dots, norm_outer)?;
    let logits = g.scale(cosine, temperature);
    g.softmax(logits)
}

// ---- caption teacher --------------------------------------------------------

/// Frozen map from a teacher view to a unit-norm "caption" embedding, plus
/// fixed unit-norm class-name embeddings to compare against.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionTeacher {
    pub embedder: Tensor,
    pub class_name_embeddings: Tensor,
    pub noise_level: f64,
}

impl CaptionTeacher {
    /// Build a teacher whose class-name embeddings are the embedded class
    /// means of its view, perturbed by a unit-relative `misalignment` offset
    /// (the same task-agnosticity device as the prototype teacher).
    pub fn from_class_means(
        class_means: &Tensor,
        embed_dim: usize,
        noise_level: f64,
        misalignment: f64,
        seed: u64,
    ) -> Result<Self> {
        let (k, view_dim) = (class_means.rows(), class_means.cols());
        let mut rng = Rng::stream(seed, "caption-teacher");
        let scale = 1.0 / (view_dim as f64).sqrt();
        let embedder = Tensor::from_fn(view_dim, embed_dim, |_, _| rng.normal() * scale);
        let embedded = normalize_rows(&matmul_plain(class_means, &embedder))?;
        let noise_scale = misalignment / (embed_dim as f64).sqrt();
        let mut rng_mis = Rng::stream(seed, "caption-misalign");
        let perturbed = Tensor::from_fn(k, embed_dim, |i, j| {
            embedded.at(i, j) + noise_scale * rng_mis.normal()
        });
        let class_name_embeddings = normalize_rows(&perturbed)?;
        Ok(CaptionTeacher {
            embedder,
            class_name_embeddings,
            noise_level,
        })
    }

    /// Unit-norm embeddings of a batch of views, Gaussian-perturbed at the
    /// configured noise level. Deterministic per (views, seed).
    pub fn caption_embed(&self, views: &Tensor, seed: u64) -> Result<Tensor> {
        let raw = matmul_plain(views, &self.embedder);
        let mut noisy = normalize_rows(&raw)?;
        if self.noise_level > 0.0 {
            let mut rng = Rng::stream(seed, "caption-noise");
            let (n, d) = (noisy.rows(), noisy.cols());
            let perturbed = Tensor::from_fn(n, d, |i, j| {
                noisy.at(i, j) + self.noise_level * rng.normal()
            });
            noisy = normalize_rows(&perturbed)?;
        }
        Ok(noisy)
    }

    /// Burn-in pseudo-labels: nearest class-name embedding by cosine.
    pub fn pseudo_labels(&self, views: &Tensor, seed: u64) -> Result<Vec<usize>> {
        let embeddings = self.caption_embed(views, seed)?;
        cosine_pseudo_labels(&embeddings, &self.class_name_embeddings)
    }
}

/// Per row, the class whose name embedding has the highest cosine similarity;
/// ties break toward the lowest index.
pub fn cosine_pseudo_labels(embeddings: &Tensor, class_names: &Tensor) -> Result<Vec<usize>> {
    if embeddings.cols() != class_names.cols() {
        return Err(Error::ShapeMismatch {
            op: "cosine_pseudo_labels",
            left: embeddings.shape().to_vec(),
            right: class_names.shape().to_vec(),
        });
    }
    let k = class_names.rows();
    let name_norms: Vec<f64> = (0..k)
        .map(|c| class_names.row(c).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut labels = Vec::with_capacity(embeddings.rows());
    for i in 0..embeddings.rows() {
        let row = embeddings.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormEmbedding { row: i });
        }
        let scores: Vec<f64> = (0..k)
            .map(|c| {
                let dot: f64 = row
                    .iter()
                    .zip(class_names.row(c).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                dot / (norm * name_norms[c])
            })
            .collect();
        labels.push(prob::argmax(&scores));
    }
    Ok(labels)
}

fn matmul_plain(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, k) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(m, b.rows());
    let mut out = Tensor::zeros(vec![n, k]);
    for i in 0..n {
        for l in 0..m {
            let v = a.at(i, l);
            for j in 0..k {
                let cur = out.at(i, j);
                out.set(i, j, cur + v * b.at(l, j));
            }
        }
    }
    out
}

fn normalize_rows(m: &Tensor) -> Result<Tensor> {
    let (n, d) = (m.rows(), m.cols());
    let mut out = Tensor::zeros(vec![n, d]);
    for i in 0..n {
        let norm: f64 = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormEmbedding { row: i });
        }
        for j in 0..d {
            out.set(i, j, m.at(i, j) / norm);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn tiny_config() -> ClassifierConfig {
        ClassifierConfig {
            input_dim: 6,
            hidden_dim: 5,
            bottleneck_dim: 4,
            classes: 3,
        }
    }

    #[test]
    fn zero_weights_predict_uniform() {
        let cfg = tiny_config();
        let mut rng = Rng::new(1);
        let mut params = ClassifierParams::init(cfg, &mut rng);
        for (_, t) in params.named_mut("m") {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let batch = Tensor::from_fn(4, 6, |i, j| (i + j) as f64);
        let pred = params.predict(&batch).unwrap();
        for i in 0..4 {
            for &v in pred.row(i) {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_head_predicts_its_class() {
        let cfg = tiny_config();
        let mut rng = Rng::new(2);
        let mut params = ClassifierParams::init(cfg, &mut rng);
        // huge bias toward class 1 regardless of features
        params.bc.data_mut()[1] = 50.0;
        let batch = Tensor::from_fn(3, 6, |_, _| rng.normal());
        let pred = params.predict(&batch).unwrap();
        for i in 0..3 {
            assert!(pred.row(i)[1] > 0.999);
        }
    }

    #[test]
    fn classifier_gradients_check_through_cross_entropy() {
        let cfg = tiny_config();
        let mut rng = Rng::new(3);
        let params = ClassifierParams::init(cfg, &mut rng);
        let batch = Tensor::from_fn(5, 6, |_, _| rng.normal());
        let labels = [0usize, 2, 1, 0, 2];

        let mut theta = Map::new();
        for (name, t) in params.named("m") {
            theta.insert(name, t.clone());
        }
        let err = crate::tensor::grad_check(
            |g, ids| {
                let nodes = ClassifierNodes {
                    w1: ids["m.w1"],
                    b1: ids["m.b1"],
                    w2: ids["m.w2"],
                    b2: ids["m.b2"],
                    wc: ids["m.wc"],
                    bc: ids["m.bc"],
                };
                let b = g.constant(batch.clone());
                let pred = forward_classifier(g, &nodes, b)?;
                // plain cross-entropy against one-hot labels
                let mut mask = Tensor::zeros(vec![5, 3]);
                for (i, &l) in labels.iter().enumerate() {
                    mask.set(i, l, 1.0);
                }
                let m = g.constant(mask);
                let clamped = g.clamp_min(pred, 1e-12);
                let lp = g.log(clamped)?;
                let picked = g.mul(m, lp)?;
                let total = g.sum_all(picked);
                Ok(g.scale(total, -1.0 / 5.0))
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn prototype_teacher_picks_matching_prototype() {
        let mut rng = Rng::new(4);
        let means = Tensor::from_fn(4, 7, |_, _| rng.normal());
        let teacher = PrototypeTeacher::from_class_means(&means, 5, 10.0, 0.0, 99).unwrap();
        // views equal to the class means embed exactly onto the prototypes
        let pred = teacher.predict(&means).unwrap();
        assert_eq!(pred.argmax_rows(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn offset_collision_makes_classes_indistinguishable() {
        let mut rng = Rng::new(5);
        let means = Tensor::from_fn(3, 6, |_, _| rng.normal());
        let mut teacher = PrototypeTeacher::from_class_means(&means, 4, 10.0, 0.0, 7).unwrap();
        // shift class 2's effective prototype onto class 0's
        for j in 0..4 {
            let delta = teacher.prototypes.at(0, j) - teacher.prototypes.at(2, j);
            teacher.prompt_offsets.set(2, j, delta);
        }
        let views = Tensor::from_fn(5, 6, |_, _| rng.normal());
        let pred = teacher.predict(&views).unwrap();
        for i in 0..5 {
            assert!((pred.row(i)[0] - pred.row(i)[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn prototype_gradient_flows_to_offsets_only() {
        let mut rng = Rng::new(6);
        let means = Tensor::from_fn(3, 6, |_, _| rng.normal());
        let teacher = PrototypeTeacher::from_class_means(&means, 4, 10.0, 0.0, 8).unwrap();
        let views = Tensor::from_fn(4, 6, |_, _| rng.normal());

        let mut g = Graph::new();
        let nodes = teacher.register(&mut g, true);
        let v = g.constant(views);
        let pred = forward_prototype(&mut g, &nodes, v, teacher.temperature).unwrap();
        let loss = g.mean_all(pred);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.keys().collect::<Vec<_>>(), vec![PROMPT_PARAM]);
    }

    #[test]
    fn prototype_argmax_invariant_to_temperature() {
        let mut rng = Rng::new(61);
        let means = Tensor::from_fn(5, 6, |_, _| rng.normal());
        let views = Tensor::from_fn(20, 6, |_, _| rng.normal());
        let cold = PrototypeTeacher::from_class_means(&means, 4, 2.0, 0.0, 8).unwrap();
        let hot = PrototypeTeacher {
            temperature: 40.0,
            ..cold.clone()
        };
        assert_eq!(
            cold.predict(&views).unwrap().argmax_rows(),
            hot.predict(&views).unwrap().argmax_rows()
        );
    }

    #[test]
    fn prototype_offset_gradients_check() {
        let mut rng = Rng::new(62);
        let means = Tensor::from_fn(3, 5, |_, _| rng.normal());
        let teacher = PrototypeTeacher::from_class_means(&means, 4, 10.0, 0.0, 12).unwrap();
        let views = Tensor::from_fn(4, 5, |_, _| rng.normal());

        let mut theta = Map::new();
        // non-zero offsets so the check probes a generic point
        theta.insert(
            PROMPT_PARAM.to_string(),
            Tensor::from_fn(3, 4, |_, _| rng.normal() * 0.1),
        );
        let (enc, prot, temp) = (
            teacher.encoder.clone(),
            teacher.prototypes.clone(),
            teacher.temperature,
        );
        let err = crate::tensor::grad_check(
            move |g, ids| {
                let nodes = PrototypeTeacherNodes {
                    encoder: g.constant(enc.clone()),
                    prototypes: g.constant(prot.clone()),
                    offsets: ids[PROMPT_PARAM],
                };
                let v = g.constant(views.clone());
                let pred = forward_prototype(g, &nodes, v, temp)?;
                let c = g.clamp_min(pred, 1e-12);
                let lp = g.log(c)?;
                let picked = g.mul(pred, lp)?;
                let s = g.sum_all(picked);
                Ok(g.neg(s))
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn caption_embed_is_deterministic_and_unit_norm() {
        let mut rng = Rng::new(7);
        let means = Tensor::from_fn(3, 6, |_, _| rng.normal());
        let teacher = CaptionTeacher::from_class_means(&means, 5, 0.3, 0.0, 21).unwrap();
        let views = Tensor::from_fn(8, 6, |_, _| rng.normal());
        let a = teacher.caption_embed(&views, 77).unwrap();
        let b = teacher.caption_embed(&views, 77).unwrap();
        assert_eq!(a, b);
        for i in 0..8 {
            let norm: f64 = a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_free_class_mean_maps_to_its_class_name() {
        let mut rng = Rng::new(8);
        let means = Tensor::from_fn(5, 7, |_, _| rng.normal() * 2.0);
        let teacher = CaptionTeacher::from_class_means(&means, 6, 0.0, 0.0, 33).unwrap();
        let labels = teacher.pseudo_labels(&means, 0).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn extreme_noise_degrades_labels_to_chance() {
        let mut rng = Rng::new(9);
        let k = 5;
        let means = Tensor::from_fn(k, 6, |_, _| rng.normal() * 2.0);
        let teacher = CaptionTeacher::from_class_means(&means, 6, 1e6, 0.0, 44).unwrap();
        // balanced batch: each class mean repeated
        let reps = 2000;
        let views = Tensor::from_fn(k * reps, 6, |i, j| means.at(i % k, j));
        let labels = teacher.pseudo_labels(&views, 5).unwrap();
        let correct = labels
            .iter()
            .enumerate()
            .filter(|(i, &l)| l == i % k)
            .count();
        let acc = correct as f64 / (k * reps) as f64;
        assert!((acc - 1.0 / k as f64).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn cosine_labels_match_bruteforce_scan() {
        let mut rng = Rng::new(10);
        let names = normalize_rows(&Tensor::from_fn(6, 5, |_, _| rng.normal())).unwrap();
        let embeddings = Tensor::from_fn(30, 5, |_, _| rng.normal());
        let labels = cosine_pseudo_labels(&embeddings, &names).unwrap();
        for i in 0..30 {
            let row = embeddings.row(i);
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..6 {
                let dot: f64 = row
                    .iter()
                    .zip(names.row(c).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let score = dot / norm;
                if score > best_score {
                    best_score = score;
                    best = c;
                }
            }
            assert_eq!(labels[i], best);
        }
    }

    #[test]
    fn zero_norm_embedding_errors() {
        let names = Tensor::from_fn(2, 3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.5 });
        let embeddings = Tensor::zeros(vec![1, 3]);
        assert!(matches!(
            cosine_pseudo_labels(&embeddings, &names),
            Err(Error::ZeroNormEmbedding { row: 0 })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut rng = Rng::new(11);
        let params = ClassifierParams::init(tiny_config(), &mut rng);
        params.save(&path).unwrap();
        let back = ClassifierParams::load(&path).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn fingerprint_detects_single_bit_changes() {
        let mut rng = Rng::new(12);
        let params = ClassifierParams::init(tiny_config(), &mut rng);
        let before = params_fingerprint(params.named("m").iter().map(|(_, t)| *t));
        let mut mutated = params.clone();
        mutated.w2.data_mut()[0] += 1e-12;
        let after = params_fingerprint(mutated.named("m").iter().map(|(_, t)| *t));
        assert_ne!(before, after);
    }
}
