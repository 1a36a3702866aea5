//! Plain-text experiment configuration.
//!
//! Line-oriented `key = value` pairs under bracketed section headers, `#`
//! comments, everything optional on top of the canonical defaults:
//!
//! ```text
//! name = my-experiment
//! seeds = 101, 102, 103
//!
//! [scenario]
//! classes = 26
//! setting = partial:8        # closed | partial:<count> | open:<count>
//!
//! [scenario.shift]
//! rotation_angle_deg = 30.0
//!
//! [adapt]
//! objective = dmi            # dmi | mi | kl
//! batch_size = 32
//!
//! [adapt.components]
//! mc = true
//!
//! [adapt.teachers]
//! caption_noise = 0.4
//!
//! [sweep]
//! axis = batch_objective     # none | batch_size | lambda | ablation
//!                            # | objective | setting | batch_objective
//! values = dmi:8, dmi:64, mi:8, mi:64
//! ```

use crate::adapt::{ComponentSet, Objective};
use crate::error::{Error, Result};
use crate::synthdata::Setting;

use super::{canonical_adapt, canonical_scenario, ExperimentSpec, SweepAxis, CANONICAL_SEEDS};

fn err(line: usize, detail: impl Into<String>) -> Error {
    Error::ConfigParse {
        line,
        detail: detail.into(),
    }
}

fn parse_setting(s: &str, line: usize) -> Result<Setting> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (s.trim(), None),
    };
    match (kind, arg) {
        ("closed", None) => Ok(Setting::Closed),
        ("partial", Some(a)) => Ok(Setting::Partial {
            target_classes: a
                .parse()
                .map_err(|e| err(line, format!("bad partial count: {e}")))?,
        }),
        ("open", Some(a)) => Ok(Setting::Open {
            extra_classes: a
                .parse()
                .map_err(|e| err(line, format!("bad open count: {e}")))?,
        }),
        _ => Err(err(
            line,
            format!("bad setting {s:?}; expected closed, partial:<n> or open:<n>"),
        )),
    }
}

fn parse_components(s: &str, line: usize) -> Result<ComponentSet> {
    let mut set = ComponentSet {
        mc: false,
        cd: false,
        ags: false,
        sim: false,
    };
    for part in s.split('+') {
        match part.trim() {
            "mc" => set.mc = true,
            "cd" => set.cd = true,
            "ags" => set.ags = true,
            "sim" => set.sim = true,
            other => return Err(err(line, format!("unknown loss component {other:?}"))),
        }
    }
    Ok(set)
}

fn parse_list<T, F>(s: &str, line: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(&str, usize) -> Result<T>,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| f(p, line))
        .collect()
}

macro_rules! parse_num {
    ($value:expr, $line:expr, $what:expr) => {
        $value
            .parse()
            .map_err(|e| err($line, format!(concat!("bad ", $what, ": {}"), e)))?
    };
}

fn parse_bool(value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(err(line, format!("expected true/false, got {other:?}"))),
    }
}

/// Parse a spec, starting from the canonical defaults so partial files work.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec {
        name: "experiment".to_string(),
        scenario: canonical_scenario(CANONICAL_SEEDS[0]),
        adapt: canonical_adapt(CANONICAL_SEEDS[0]),
        sweep: SweepAxis::None,
        seeds: CANONICAL_SEEDS.to_vec(),
        notes: Vec::new(),
    };
    let mut section = String::new();
    let mut sweep_axis: Option<(String, usize)> = None;
    let mut sweep_values: Option<(String, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, "expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());

        match (section.as_str(), key) {
            ("", "name") => spec.name = value.to_string(),
            ("", "seeds") => {
                spec.seeds = parse_list(value, line, |p, l| {
                    p.parse().map_err(|e| err(l, format!("bad seed: {e}")))
                })?;
            }
            ("", "note") => spec.notes.push(value.to_string()),

            ("scenario", "classes") => spec.scenario.classes = parse_num!(value, line, "classes"),
            ("scenario", "dim_global") => {
                spec.scenario.dim_global = parse_num!(value, line, "dim_global")
            }
            ("scenario", "dim_local") => {
                spec.scenario.dim_local = parse_num!(value, line, "dim_local")
            }
            ("scenario", "samples_per_class") => {
                spec.scenario.samples_per_class = parse_num!(value, line, "samples_per_class")
            }
            ("scenario", "class_separation") => {
                spec.scenario.class_separation = parse_num!(value, line, "class_separation")
            }
            ("scenario", "teacher_view_noise") => {
                spec.scenario.teacher_view_noise = parse_num!(value, line, "teacher_view_noise")
            }
            ("scenario", "setting") => spec.scenario.setting = parse_setting(value, line)?,
            ("scenario", "seed") => spec.scenario.seed = parse_num!(value, line, "seed"),

            ("scenario.shift", "rotation_angle_deg") => {
                spec.scenario.shift.rotation_angle_deg =
                    parse_num!(value, line, "rotation_angle_deg")
            }
            ("scenario.shift", "translation_scale") => {
                spec.scenario.shift.translation_scale = parse_num!(value, line, "translation_scale")
            }
            ("scenario.shift", "noise_scale_source") => {
                spec.scenario.shift.noise_scale_source =
                    parse_num!(value, line, "noise_scale_source")
            }
            ("scenario.shift", "noise_scale_target") => {
                spec.scenario.shift.noise_scale_target =
                    parse_num!(value, line, "noise_scale_target")
            }

            ("adapt", "alpha") => spec.adapt.alpha = parse_num!(value, line, "alpha"),
            ("adapt", "beta") => spec.adapt.beta = parse_num!(value, line, "beta"),
            ("adapt", "lambda") => spec.adapt.dmi_lambda = parse_num!(value, line, "lambda"),
            ("adapt", "epochs") => spec.adapt.epochs = parse_num!(value, line, "epochs"),
            ("adapt", "batch_size") => {
                spec.adapt.batch_size = parse_num!(value, line, "batch_size")
            }
            ("adapt", "hidden_dim") => {
                spec.adapt.hidden_dim = parse_num!(value, line, "hidden_dim")
            }
            ("adapt", "bottleneck_dim") => {
                spec.adapt.bottleneck_dim = parse_num!(value, line, "bottleneck_dim")
            }
            ("adapt", "lr_target") => spec.adapt.lr_target = parse_num!(value, line, "lr_target"),
            ("adapt", "lr_proxy") => spec.adapt.lr_proxy = parse_num!(value, line, "lr_proxy"),
            ("adapt", "lr_prompt") => spec.adapt.lr_prompt = parse_num!(value, line, "lr_prompt"),
            ("adapt", "momentum") => spec.adapt.momentum = parse_num!(value, line, "momentum"),
            ("adapt", "weight_decay") => {
                spec.adapt.weight_decay = parse_num!(value, line, "weight_decay")
            }
            ("adapt", "label_smoothing") => {
                spec.adapt.label_smoothing = parse_num!(value, line, "label_smoothing")
            }
            ("adapt", "pretrain_epochs") => {
                spec.adapt.pretrain_epochs = parse_num!(value, line, "pretrain_epochs")
            }
            ("adapt", "burn_in_epochs") => {
                spec.adapt.burn_in_epochs = parse_num!(value, line, "burn_in_epochs")
            }
            ("adapt", "objective") => {
                spec.adapt.objective =
                    Objective::parse(value).map_err(|e| err(line, e.to_string()))?
            }
            ("adapt", "symmetrize") => spec.adapt.symmetrize = parse_bool(value, line)?,
            ("adapt", "seed") => spec.adapt.seed = parse_num!(value, line, "seed"),

            ("adapt.components", "mc") => spec.adapt.components.mc = parse_bool(value, line)?,
            ("adapt.components", "cd") => spec.adapt.components.cd = parse_bool(value, line)?,
            ("adapt.components", "ags") => spec.adapt.components.ags = parse_bool(value, line)?,
            ("adapt.components", "sim") => spec.adapt.components.sim = parse_bool(value, line)?,

            ("adapt.teachers", "embed_dim") => {
                spec.adapt.teachers.embed_dim = parse_num!(value, line, "embed_dim")
            }
            ("adapt.teachers", "temperature") => {
                spec.adapt.teachers.temperature = parse_num!(value, line, "temperature")
            }
            ("adapt.teachers", "caption_noise") => {
                spec.adapt.teachers.caption_noise = parse_num!(value, line, "caption_noise")
            }
            ("adapt.teachers", "prototype_misalignment") => {
                spec.adapt.teachers.prototype_misalignment =
                    parse_num!(value, line, "prototype_misalignment")
            }
            ("adapt.teachers", "caption_misalignment") => {
                spec.adapt.teachers.caption_misalignment =
                    parse_num!(value, line, "caption_misalignment")
            }

            ("sweep", "axis") => sweep_axis = Some((value.to_string(), line)),
            ("sweep", "values") => sweep_values = Some((value.to_string(), line)),

            (section, key) => {
                return Err(err(
                    line,
                    format!("unknown key {key:?} in section [{section}]"),
                ))
            }
        }
    }

    spec.sweep = match sweep_axis {
        None => SweepAxis::None,
        Some((axis, axis_line)) => {
            let values = |what: &str| -> Result<(String, usize)> {
                sweep_values
                    .clone()
                    .ok_or_else(|| err(axis_line, format!("sweep axis {what} requires values")))
            };
            match axis.as_str() {
                "none" => SweepAxis::None,
                "batch_size" => {
                    let (v, l) = values("batch_size")?;
                    SweepAxis::BatchSize(parse_list(&v, l, |p, l| {
                        p.parse()
                            .map_err(|e| err(l, format!("bad batch size: {e}")))
                    })?)
                }
                "lambda" => {
                    let (v, l) = values("lambda")?;
                    SweepAxis::Lambda(parse_list(&v, l, |p, l| {
                        p.parse().map_err(|e| err(l, format!("bad lambda: {e}")))
                    })?)
                }
                "ablation" => {
                    let (v, l) = values("ablation")?;
                    SweepAxis::Ablation(parse_list(&v, l, parse_components)?)
                }
                "objective" => {
                    let (v, l) = values("objective")?;
                    SweepAxis::Objective(parse_list(&v, l, |p, l| {
                        Objective::parse(p).map_err(|e| err(l, e.to_string()))
                    })?)
                }
                "setting" => {
                    let (v, l) = values("setting")?;
                    SweepAxis::Setting(parse_list(&v, l, parse_setting)?)
                }
                "batch_objective" => {
                    let (v, l) = values("batch_objective")?;
                    SweepAxis::BatchObjective(parse_list(&v, l, |p, l| {
                        let (obj, batch) = p.split_once(':').ok_or_else(|| {
                            err(l, format!("expected objective:batch, got {p:?}"))
                        })?;
                        Ok((
                            Objective::parse(obj.trim()).map_err(|e| err(l, e.to_string()))?,
                            batch
                                .trim()
                                .parse()
                                .map_err(|e| err(l, format!("bad batch size: {e}")))?,
                        ))
                    })?)
                }
                other => return Err(err(axis_line, format!("unknown sweep axis {other:?}"))),
            }
        }
    };

    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_canonical_defaults() {
        let spec = parse_spec("").unwrap();
        assert_eq!(spec.scenario.classes, 26);
        assert_eq!(spec.adapt.batch_size, 32);
        assert_eq!(spec.seeds, CANONICAL_SEEDS.to_vec());
        assert_eq!(spec.sweep, SweepAxis::None);
    }

    #[test]
    fn full_spec_round_trips_fields() {
        let text = "
name = demo
seeds = 1, 2
note = hello

[scenario]
classes = 8
samples_per_class = 5
setting = partial:3

[scenario.shift]
rotation_angle_deg = 15.0

[adapt]
epochs = 4
objective = mi
lambda = 1.0

[adapt.components]
cd = false

[adapt.teachers]
caption_noise = 0.1

[sweep]
axis = batch_size
values = 8, 16
";
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.name, "demo");
        assert_eq!(spec.seeds, vec![1, 2]);
        assert_eq!(spec.notes, vec!["hello"]);
        assert_eq!(spec.scenario.classes, 8);
        assert_eq!(
            spec.scenario.setting,
            Setting::Partial { target_classes: 3 }
        );
        assert_eq!(spec.scenario.shift.rotation_angle_deg, 15.0);
        assert_eq!(spec.adapt.epochs, 4);
        assert_eq!(spec.adapt.objective, Objective::Mi);
        assert!(!spec.adapt.components.cd);
        assert_eq!(spec.adapt.teachers.caption_noise, 0.1);
        assert_eq!(spec.sweep, SweepAxis::BatchSize(vec![8, 16]));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "[scenario]\nclasses = many";
        match parse_spec(text) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_spec("[adapt]\nlearning = fast"),
            Err(Error::ConfigParse { .. })
        ));
    }

    #[test]
    fn ablation_and_batch_objective_values_parse() {
        let spec = parse_spec("[sweep]\naxis = ablation\nvalues = sim, sim+ags+mc+cd").unwrap();
        let SweepAxis::Ablation(sets) = spec.sweep else {
            panic!()
        };
        assert!(sets[0].sim && !sets[0].ags);
        assert!(sets[1].cd);

        let spec = parse_spec("[sweep]\naxis = batch_objective\nvalues = dmi:8, mi:64").unwrap();
        let SweepAxis::BatchObjective(pairs) = spec.sweep else {
            panic!()
        };
        assert_eq!(pairs, vec![(Objective::Dmi, 8), (Objective::Mi, 64)]);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let spec = parse_spec("# top\n\n[adapt]\nepochs = 7 # trailing\n").unwrap();
        assert_eq!(spec.adapt.epochs, 7);
    }
}
