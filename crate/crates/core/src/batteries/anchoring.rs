//! Sequence-length estimation with small or large numeric anchors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Battery, BatteryError, Design, ExperimentKind, Grouping};
use crate::promptgen::{render, templates, Bindings, PromptInstance, PromptTemplate};
use crate::stimuli::{anchor_sequence_with, sample_anchor, AnchorCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoringParams {
    pub experiment: u8,
    #[serde(default = "default_min")]
    pub min_length: usize,
    #[serde(default = "default_max")]
    pub max_length: usize,
    #[serde(default = "default_per_cell")]
    pub per_cell: usize,
    pub seed: u64,
}

fn default_min() -> usize {
    40
}
fn default_max() -> usize {
    60
}
fn default_per_cell() -> usize {
    20
}

impl AnchoringParams {
    pub fn new(experiment: u8, seed: u64) -> Self {
        Self { experiment, min_length: default_min(), max_length: default_max(), per_cell: default_per_cell(), seed }
    }
}

fn template(experiment: u8) -> Result<&'static PromptTemplate, BatteryError> {
    Ok(match experiment {
        1 => &templates::ANCHOR_ONE,
        2 => &templates::ANCHOR_TWO,
        3 => &templates::ANCHOR_SEQ_ONE,
        4 => &templates::ANCHOR_SEQ_TWO,
        n => return Err(BatteryError::InvalidExperiment(n)),
    })
}

/// For each length and anchor category, `per_cell` prompts with a fresh
/// sequence and fresh anchors. Experiments 2 and 4 draw both anchors from
/// the same category.
pub fn build_anchoring(params: &AnchoringParams) -> Result<Battery, BatteryError> {
    let template = template(params.experiment)?;
    if params.per_cell == 0 {
        return Err(BatteryError::InvalidParam("per_cell must be at least 1".into()));
    }
    if params.min_length == 0 || params.min_length > params.max_length {
        return Err(BatteryError::InvalidParam(format!(
            "length range [{}, {}] is empty",
            params.min_length, params.max_length
        )));
    }
    let two = matches!(params.experiment, 2 | 4);
    let with_sequences = matches!(params.experiment, 3 | 4);
    let experiment_id = format!("anchoring-{}", params.experiment);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut instances = Vec::new();
    for length in params.min_length..=params.max_length {
        for category in [AnchorCategory::Small, AnchorCategory::Large] {
            for replicate in 0..params.per_cell {
                let a1 = sample_anchor(category, &mut rng);
                let a2 = two.then(|| sample_anchor(category, &mut rng));
                let mut values = Bindings::new();
                values.insert("a1".into(), a1.to_string());
                if let Some(a2) = a2 {
                    values.insert("a2".into(), a2.to_string());
                }
                if with_sequences {
                    values.insert("aseq1".into(), anchor_sequence_with(a1 as usize, &mut rng));
                    if let Some(a2) = a2 {
                        values.insert("aseq2".into(), anchor_sequence_with(a2 as usize, &mut rng));
                    }
                }
                values.insert("seq".into(), anchor_sequence_with(length, &mut rng));
                let mut item_refs = vec![a1.to_string()];
                item_refs.extend(a2.map(|a| a.to_string()));

                instances.push(PromptInstance {
                    experiment_id: experiment_id.clone(),
                    template_id: template.template_id.to_string(),
                    rendered_text: render(template, &values)?,
                    condition: category.label().to_string(),
                    variation_coords: [("replicate".to_string(), replicate.to_string())].into_iter().collect(),
                    item_refs,
                    item_key: length.to_string(),
                    correct_answers: vec![length.to_string()],
                    relevant_answers: Vec::new(),
                    spacing_level: 0,
                    distance: None,
                    answer_rule: template.answer_rule,
                });
            }
        }
    }

    let n_lengths = params.max_length - params.min_length + 1;
    Ok(Battery {
        experiment_id,
        instances,
        design: Design {
            kind: ExperimentKind::Anchoring,
            label: params.experiment.to_string(),
            conditions: vec![AnchorCategory::Small.label().into(), AnchorCategory::Large.label().into()],
            grouping: Grouping::AnchorCategory,
            values_per_item: params.per_cell,
            expected_instances: n_lengths * 2 * params.per_cell,
            spacing: None,
            notes: if two { vec!["both anchors of a prompt share a category".into()] } else { Vec::new() },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgen::AnswerRule;
    use crate::stimuli::ANCHOR_ALPHABET;

    fn quoted(line: &str) -> &str {
        let start = line.find("('").unwrap() + 2;
        let end = line.rfind("')").unwrap();
        &line[start..end]
    }

    #[test]
    fn default_size() {
        for exp in 1..=4 {
            let b = build_anchoring(&AnchoringParams::new(exp, 7)).unwrap();
            assert_eq!(b.len(), 840);
            assert_eq!(b.design.expected_instances, 840);
            assert_eq!(b.design.expected_df(21), Some(838));
            assert!(b.instances.iter().all(|i| i.answer_rule == AnswerRule::Estimate));
        }
    }

    #[test]
    fn sequence_length_matches_key() {
        let b = build_anchoring(&AnchoringParams::new(1, 3)).unwrap();
        for i in &b.instances {
            let last = i.rendered_text.lines().last().unwrap();
            let seq = quoted(last);
            assert_eq!(seq.chars().count().to_string(), i.correct_answers[0]);
            assert!(seq.chars().all(|c| ANCHOR_ALPHABET.contains(&c)));
        }
    }

    #[test]
    fn anchors_in_category_range() {
        let b = build_anchoring(&AnchoringParams::new(2, 11)).unwrap();
        for i in &b.instances {
            let (lo, hi) = if i.condition == "small-anchor" { (10, 29) } else { (71, 90) };
            assert_eq!(i.item_refs.len(), 2);
            for a in &i.item_refs {
                let a: u32 = a.parse().unwrap();
                assert!((lo..=hi).contains(&a));
            }
            assert!(i.rendered_text.starts_with(&format!("a = {}\nb = {}\nz = len('", i.item_refs[0], i.item_refs[1])));
        }
    }

    #[test]
    fn anchor_sequences_have_anchor_length() {
        let b = build_anchoring(&AnchoringParams::new(4, 5)).unwrap();
        for i in &b.instances {
            let lines: Vec<&str> = i.rendered_text.lines().collect();
            assert_eq!(lines.len(), 3);
            for (line, anchor) in lines.iter().zip(&i.item_refs) {
                assert_eq!(quoted(line).chars().count().to_string(), *anchor);
                assert!(line.ends_with(&format!("# equals to {anchor}")));
            }
        }
    }

    #[test]
    fn seeded_and_reproducible() {
        let a = build_anchoring(&AnchoringParams::new(3, 42)).unwrap();
        let b = build_anchoring(&AnchoringParams::new(3, 42)).unwrap();
        let c = build_anchoring(&AnchoringParams::new(3, 43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.instances, c.instances);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(build_anchoring(&AnchoringParams::new(5, 0)), Err(BatteryError::InvalidExperiment(5))));
        let mut p = AnchoringParams::new(1, 0);
        p.per_cell = 0;
        assert!(build_anchoring(&p).is_err());
    }
}
