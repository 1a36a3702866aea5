//! Deterministic synthetic domain-shift scenarios.
//!
//! Classes live on well-separated means in a feature space split into a
//! "global" and a "local" coordinate block. Source samples are Gaussian
//! clouds around the means; target samples are the same clouds pushed through
//! a fixed rotation in a random 2-plane, a translation, and inflated noise.
//! Teacher views are the per-block coordinates of each target sample in the
//! *unshifted* latent space plus observation noise, which is what makes the
//! teachers domain-robust while the classifiers see the shifted features.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{Container, KIND_BUNDLE};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    Closed,
    Partial { target_classes: usize },
    Open { extra_classes: usize },
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::Closed => "closed",
            Setting::Partial { .. } => "partial",
            Setting::Open { .. } => "open",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Rotation angle, degrees, applied in a seed-chosen 2-plane.
    pub rotation_angle_deg: f64,
    /// Norm of the added translation vector.
    pub translation_scale: f64,
    /// Source-domain sample noise (standard deviation per coordinate).
    pub noise_scale_source: f64,
    /// Target-domain sample noise.
    pub noise_scale_target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub classes: usize,
    pub dim_global: usize,
    pub dim_local: usize,
    pub samples_per_class: usize,
    /// Norm of every class mean (controls class separation).
    pub class_separation: f64,
    /// Observation noise on teacher views.
    pub teacher_view_noise: f64,
    pub shift: ShiftSpec,
    pub setting: Setting,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 classes, got {}",
                self.classes
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("zero samples per class".into()));
        }
        if self.dim_global == 0 || self.dim_local == 0 {
            return Err(Error::InvalidConfig(
                "feature blocks must be non-empty".into(),
            ));
        }
        match self.setting {
            Setting::Partial { target_classes } => {
                if target_classes == 0 || target_classes >= self.classes {
                    return Err(Error::InvalidConfig(format!(
                        "partial subset size {target_classes} must be in 1..{}",
                        self.classes
                    )));
                }
            }
            Setting::Open { extra_classes } => {
                if extra_classes == 0 {
                    return Err(Error::InvalidConfig(
                        "open setting needs at least one unknown class".into(),
                    ));
                }
            }
            Setting::Closed => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim_global + self.dim_local
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Deterministic disjoint split (shuffled by `seed`): the first part
    /// holds `fraction` of the samples. Supports non-transductive
    /// evaluation, where the adaptation pool and the test set are disjoint.
    pub fn split(&self, fraction: f64, seed: u64) -> (LabeledSet, LabeledSet) {
        let n = self.len();
        let cut = ((n as f64) * fraction).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        Rng::stream(seed, "labeled-set-split").shuffle(&mut order);
        let pick = |idx: &[usize]| {
            let dim = self.features.cols();
            let mut features = Tensor::zeros(vec![idx.len(), dim]);
            let mut labels = Vec::with_capacity(idx.len());
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..dim {
                    features.set(r, j, self.features.at(i, j));
                }
                labels.push(self.labels[i]);
            }
            LabeledSet { features, labels }
        };
        (pick(&order[..cut]), pick(&order[cut..]))
    }
}

/// A complete scenario: both domains, teacher views for the target samples
/// and the canonical class means each teacher view block was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub source: LabeledSet,
    /// Target features with ground-truth labels (held out for evaluation;
    /// adaptation never reads them).
    pub target: LabeledSet,
    pub target_views_global: Tensor,
    pub target_views_local: Tensor,
    /// Canonical-space class means, global block, known classes only.
    pub class_means_global: Tensor,
    /// Canonical-space class means, local block, known classes only.
    pub class_means_local: Tensor,
}

/// Sample unit vectors scaled to `separation`, rejecting means closer than
/// `separation` to any earlier one.
fn sample_means(
    rng: &mut Rng,
    count: usize,
    dim: usize,
    separation: f64,
    scale: f64,
    existing: &mut Vec<Vec<f64>>,
) {
    let min_dist = separation;
    for _ in 0..count {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            for x in v.iter_mut() {
                *x *= scale / norm;
            }
            let ok = existing.iter().all(|m| {
                let d2: f64 = m.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() >= min_dist
            });
            if ok || attempts > 10_000 {
                existing.push(v);
                break;
            }
        }
    }
}

struct PlaneRotation {
    u: Vec<f64>,
    v: Vec<f64>,
    cos: f64,
    sin: f64,
}

impl PlaneRotation {
    fn sample(rng: &mut Rng, dim: usize, angle_deg: f64) -> Self {
        let mut u: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in u.iter_mut() {
            *x /= nu;
        }
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        for (x, &ux) in v.iter_mut().zip(u.iter()) {
            *x -= dot * ux;
        }
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= nv;
        }
        let angle = angle_deg.to_radians();
        PlaneRotation {
            u,
            v,
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let cu: f64 = x.iter().zip(self.u.iter()).map(|(a, b)| a * b).sum();
        let cv: f64 = x.iter().zip(self.v.iter()).map(|(a, b)| a * b).sum();
        let du = (self.cos - 1.0) * cu - self.sin * cv;
        let dv = self.sin * cu + (self.cos - 1.0) * cv;
        for i in 0..x.len() {
            x[i] += du * self.u[i] + dv * self.v[i];
        }
    }
}

/// Generate a scenario deterministically from its config.
pub fn generate(config: &ScenarioConfig) -> Result<ScenarioBundle> {
    config.validate()?;
    let k = config.classes;
    let dim = config.dim();
    let seed = config.seed;

    // class means: known classes on the separation sphere, open-set unknowns
    // further out so they sit outside the hull of the known means
    let mut means: Vec<Vec<f64>> = Vec::new();
    let mut rng_means = Rng::stream(seed, "class-means");
    sample_means(
        &mut rng_means,
        k,
        dim,
        config.class_separation,
        config.class_separation,
        &mut means,
    );
    let unknown_classes = match config.setting {
        Setting::Open { extra_classes } => extra_classes,
        _ => 0,
    };
    sample_means(
        &mut rng_means,
        unknown_classes,
        dim,
        config.class_separation,
        1.5 * config.class_separation,
        &mut means,
    );

    // label pools per domain
    let source_classes: Vec<usize> = (0..k).collect();
    let target_classes: Vec<usize> = match config.setting {
        Setting::Closed => (0..k).collect(),
        Setting::Partial { target_classes } => {
            let mut rng = Rng::stream(seed, "partial-subset");
            rng.subset(k, target_classes)
        }
        Setting::Open { extra_classes } => (0..k + extra_classes).collect(),
    };

    let per_class = config.samples_per_class;
    let shift = &config.shift;
    let rotation = PlaneRotation::sample(
        &mut Rng::stream(seed, "shift-plane"),
        dim,
        shift.rotation_angle_deg,
    );
    let translation: Vec<f64> = {
        let mut rng = Rng::stream(seed, "shift-translation");
        let mut t: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n: f64 = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        t.iter_mut().for_each(|x| *x *= shift.translation_scale / n);
        t
    };

    // source domain
    let mut rng_src = Rng::stream(seed, "source-samples");
    let n_src = source_classes.len() * per_class;
    let mut src_features = Tensor::zeros(vec![n_src, dim]);
    let mut src_labels = Vec::with_capacity(n_src);
    for (row, idx) in (0..n_src).enumerate() {
        let class = source_classes[idx / per_class];
        for j in 0..dim {
            let v = means[class][j] + shift.noise_scale_source * rng_src.normal();
            src_features.set(row, j, v);
        }
        src_labels.push(class);
    }

    // target domain: latent cloud in canonical space, then shifted observation
    let mut rng_tgt = Rng::stream(seed, "target-samples");
    let mut rng_views = Rng::stream(seed, "teacher-views");
    let n_tgt = target_classes.len() * per_class;
    let mut tgt_features = Tensor::zeros(vec![n_tgt, dim]);
    let mut tgt_labels = Vec::with_capacity(n_tgt);
    let mut views_g = Tensor::zeros(vec![n_tgt, config.dim_global]);
    let mut views_l = Tensor::zeros(vec![n_tgt, config.dim_local]);
    for (row, idx) in (0..n_tgt).enumerate() {
        let class = target_classes[idx / per_class];
        let latent: Vec<f64> = (0..dim)
            .map(|j| means[class][j] + shift.noise_scale_target * rng_tgt.normal())
            .collect();
        let mut observed = latent.clone();
        rotation.apply(&mut observed);
        for j in 0..dim {
            tgt_features.set(row, j, observed[j] + translation[j]);
        }
        for j in 0..config.dim_global {
            views_g.set(
                row,
                j,
                latent[j] + config.teacher_view_noise * rng_views.normal(),
            );
        }
        for j in 0..config.dim_local {
            let v = latent[config.dim_global + j] + config.teacher_view_noise * rng_views.normal();
            views_l.set(row, j, v);
        }
        tgt_labels.push(class);
    }

    // teachers only ever know the K source classes
    let class_means_global = Tensor::from_fn(k, config.dim_global, |c, j| means[c][j]);
    let class_means_local =
        Tensor::from_fn(k, config.dim_local, |c, j| means[c][config.dim_global + j]);

    Ok(ScenarioBundle {
        config: *config,
        source: LabeledSet {
            features: src_features,
            labels: src_labels,
        },
        target: LabeledSet {
            features: tgt_features,
            labels: tgt_labels,
        },
        target_views_global: views_g,
        target_views_local: views_l,
        class_means_global,
        class_means_local,
    })
}

fn labels_to_u32(labels: &[usize]) -> Vec<u32> {
    labels.iter().map(|&l| l as u32).collect()
}

fn labels_from_u32(labels: &[u32]) -> Vec<usize> {
    labels.iter().map(|&l| l as usize).collect()
}

pub fn save_bundle(bundle: &ScenarioBundle, path: &Path) -> Result<()> {
    let mut c = Container::new(KIND_BUNDLE);
    c.meta
        .insert("config".into(), serde_json::to_string(&bundle.config)?);
    c.indices
        .insert("source.labels".into(), labels_to_u32(&bundle.source.labels));
    c.indices
        .insert("target.labels".into(), labels_to_u32(&bundle.target.labels));
    c.tensors
        .insert("source.features".into(), bundle.source.features.clone());
    c.tensors
        .insert("target.features".into(), bundle.target.features.clone());
    c.tensors.insert(
        "target.views_global".into(),
        bundle.target_views_global.clone(),
    );
    c.tensors.insert(
        "target.views_local".into(),
        bundle.target_views_local.clone(),
    );
    c.tensors.insert(
        "class_means.global".into(),
        bundle.class_means_global.clone(),
    );
    c.tensors
        .insert("class_means.local".into(), bundle.class_means_local.clone());
    c.write_to(path)
}

pub fn load_bundle(path: &Path) -> Result<ScenarioBundle> {
    let c = Container::read_from(path, KIND_BUNDLE)?;
    let config: ScenarioConfig = serde_json::from_str(c.meta_value("config")?)?;
    Ok(ScenarioBundle {
        config,
        source: LabeledSet {
            features: c.tensor("source.features")?.clone(),
            labels: labels_from_u32(c.index("source.labels")?),
        },
        target: LabeledSet {
            features: c.tensor("target.features")?.clone(),
            labels: labels_from_u32(c.index("target.labels")?),
        },
        target_views_global: c.tensor("target.views_global")?.clone(),
        target_views_local: c.tensor("target.views_local")?.clone(),
        class_means_global: c.tensor("class_means.global")?.clone(),
        class_means_local: c.tensor("class_means.local")?.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            classes: 6,
            dim_global: 5,
            dim_local: 5,
            samples_per_class: 10,
            class_separation: 4.0,
            teacher_view_noise: 0.5,
            shift: ShiftSpec {
                rotation_angle_deg: 30.0,
                translation_scale: 1.0,
                noise_scale_source: 1.0,
                noise_scale_target: 1.5,
            },
            setting: Setting::Closed,
            seed: 7,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        let mut cfg = small_config();
        cfg.classes = 2;
        assert!(generate(&cfg).is_err());
        let mut cfg = small_config();
        cfg.samples_per_class = 0;
        assert!(generate(&cfg).is_err());
        let mut cfg = small_config();
        cfg.setting = Setting::Partial { target_classes: 6 };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn closed_setting_has_equal_label_sets() {
        let b = generate(&small_config()).unwrap();
        let mut src: Vec<usize> = b.source.labels.clone();
        let mut tgt: Vec<usize> = b.target.labels.clone();
        src.sort_unstable();
        src.dedup();
        tgt.sort_unstable();
        tgt.dedup();
        assert_eq!(src, tgt);
    }

    #[test]
    fn partial_setting_is_strict_subset() {
        let mut cfg = small_config();
        cfg.setting = Setting::Partial { target_classes: 3 };
        let b = generate(&cfg).unwrap();
        let mut tgt: Vec<usize> = b.target.labels.clone();
        tgt.sort_unstable();
        tgt.dedup();
        assert_eq!(tgt.len(), 3);
        assert!(tgt.iter().all(|&l| l < cfg.classes));
    }

    #[test]
    fn open_setting_adds_unknowns_beyond_k() {
        let mut cfg = small_config();
        cfg.setting = Setting::Open { extra_classes: 2 };
        let b = generate(&cfg).unwrap();
        let unknown = b
            .target
            .labels
            .iter()
            .filter(|&&l| l >= cfg.classes)
            .count();
        assert_eq!(unknown, 2 * cfg.samples_per_class);
        // source stays on the known label space
        assert!(b.source.labels.iter().all(|&l| l < cfg.classes));
    }

    #[test]
    fn null_shift_keeps_domains_identical_in_distribution() {
        let mut cfg = small_config();
        cfg.shift = ShiftSpec {
            rotation_angle_deg: 0.0,
            translation_scale: 0.0,
            noise_scale_source: 1.0,
            noise_scale_target: 1.0,
        };
        let b = generate(&cfg).unwrap();
        // same per-class means within sampling error
        let k = cfg.classes;
        let dim = cfg.dim();
        for c in 0..k {
            for j in 0..dim {
                let mean_of = |set: &LabeledSet| {
                    let mut acc = 0.0;
                    let mut cnt = 0;
                    for (i, &l) in set.labels.iter().enumerate() {
                        if l == c {
                            acc += set.features.at(i, j);
                            cnt += 1;
                        }
                    }
                    acc / cnt as f64
                };
                let d = (mean_of(&b.source) - mean_of(&b.target)).abs();
                assert!(d < 1.5, "class {c} coord {j} differs by {d}");
            }
        }
    }

    #[test]
    fn teacher_views_alone_separate_classes_without_noise() {
        let mut cfg = small_config();
        cfg.teacher_view_noise = 0.0;
        cfg.shift.noise_scale_target = 0.0;
        let b = generate(&cfg).unwrap();
        // nearest class mean in each view block recovers the label exactly
        for (views, means) in [
            (&b.target_views_global, &b.class_means_global),
            (&b.target_views_local, &b.class_means_local),
        ] {
            let mut correct = 0;
            for i in 0..b.target.len() {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..cfg.classes {
                    let d: f64 = (0..views.cols())
                        .map(|j| (views.at(i, j) - means.at(c, j)).powi(2))
                        .sum();
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                if best == b.target.labels[i] {
                    correct += 1;
                }
            }
            let acc = correct as f64 / b.target.len() as f64;
            assert!(acc > 0.99, "view accuracy {acc}");
        }
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.bin");
        let b = generate(&small_config()).unwrap();
        save_bundle(&b, &path).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn bundle_bytes_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        save_bundle(&generate(&small_config()).unwrap(), &p1).unwrap();
        save_bundle(&generate(&small_config()).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
