use serde::{Deserialize, Serialize};

use super::{answers, Battery, BatteryError, Design, ExperimentKind, Grouping, COND_CATCH, COND_RELATED, COND_UNRELATED, NO, YES};
use crate::promptgen::{self, coordinate_grid, expand, templates, Bindings, InstanceSpec, PromptInstance, PromptTemplate, VariationAxes};
use crate::stimuli::{generate_nonwords, PrimingTriple};

/// Spacing used for catch trials.
pub const CATCH_SPACING: u32 = 15;
pub const CATCH_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimingVariation {
    Question,
    Sentence,
    Simple,
}

impl PrimingVariation {
    pub fn template(self) -> &'static PromptTemplate {
        match self {
            PrimingVariation::Question => &templates::PRIMING_QUESTION,
            PrimingVariation::Sentence => &templates::PRIMING_SENTENCE,
            PrimingVariation::Simple => &templates::PRIMING_SIMPLE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrimingVariation::Question => "question",
            PrimingVariation::Sentence => "sentence",
            PrimingVariation::Simple => "simple",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimingParams {
    pub variation: PrimingVariation,
    pub lengths: Vec<usize>,
    pub spacings: Vec<u32>,
    pub catch_trials: usize,
    pub catch_seed: u64,
}

impl Default for PrimingParams {
    fn default() -> Self {
        Self {
            variation: PrimingVariation::Sentence,
            lengths: vec![4, 5, 6],
            spacings: vec![5, 10, 15],
            catch_trials: 100,
            catch_seed: 0,
        }
    }
}

fn bindings(prime: &str, target: &str) -> Bindings {
    [("prime", prime), ("target", target)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Lexical-decision battery: every selected target, at every spacing and
/// format combination, once after its related prime and once after its
/// unrelated prime; followed by vowel-free catch trials.
pub fn build_priming(params: &PrimingParams, triples: &[PrimingTriple]) -> Result<Battery, BatteryError> {
    if params.spacings.is_empty() {
        return Err(BatteryError::InvalidParam("priming needs at least one spacing".into()));
    }
    let targets: Vec<&PrimingTriple> = triples
        .iter()
        .filter(|t| params.lengths.contains(&t.target.chars().count()))
        .collect();
    if targets.is_empty() {
        return Err(BatteryError::EmptyTriples);
    }

    let lengths = params.lengths.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("+");
    let experiment_id = format!("priming-{lengths}-{}", params.variation.as_str());
    let template = params.variation.template();
    let axes = VariationAxes::priming();
    let combos = coordinate_grid(template, &axes)?.len();

    let mut instances = Vec::new();
    for triple in &targets {
        for &spacing in &params.spacings {
            let target = promptgen::apply_spacing(&triple.target, spacing as usize);
            for (condition, prime) in [(COND_RELATED, &triple.related_prime), (COND_UNRELATED, &triple.unrelated_prime)] {
                instances.extend(expand(&experiment_id, template, &axes, |_| InstanceSpec {
                    values: bindings(prime, &target),
                    condition: condition.to_string(),
                    item_refs: vec![triple.target.clone(), prime.clone()],
                    item_key: triple.target.clone(),
                    correct_answers: answers(&[YES]),
                    relevant_answers: answers(&[YES, NO]),
                    spacing_level: spacing,
                    distance: None,
                })?);
            }
        }
    }

    if params.catch_trials > 0 {
        let nonwords = generate_nonwords(params.catch_trials, CATCH_LENGTH, params.catch_seed)?;
        let catch_template = &templates::PRIMING_QUESTION;
        let grid = coordinate_grid(catch_template, &axes)?;
        for (i, nonword) in nonwords.iter().enumerate() {
            // cycle through the format combinations and the primes
            let row = &grid[i % grid.len()];
            let prime = &targets[i % targets.len()].related_prime;
            let spaced = promptgen::apply_spacing(&nonword.text, CATCH_SPACING as usize);
            let axis_binds: Vec<(String, String)> = row.iter().flat_map(|(_, v)| v.binds.clone()).collect();
            let inst = PromptInstance {
                experiment_id: experiment_id.clone(),
                template_id: catch_template.template_id.to_string(),
                rendered_text: promptgen::render_with(catch_template, &axis_binds, &bindings(prime, &spaced))?,
                condition: COND_CATCH.to_string(),
                variation_coords: row.iter().map(|(a, v)| (a.as_str().to_string(), v.key.clone())).collect(),
                item_refs: vec![nonword.text.clone(), prime.clone()],
                item_key: nonword.text.clone(),
                correct_answers: answers(&[NO]),
                relevant_answers: answers(&[YES, NO]),
                spacing_level: CATCH_SPACING,
                distance: None,
                answer_rule: catch_template.answer_rule,
            };
            instances.push(inst);
        }
    }

    let expected = targets.len() * params.spacings.len() * combos * 2 + params.catch_trials;
    Ok(Battery {
        experiment_id,
        instances,
        design: Design {
            kind: ExperimentKind::Priming,
            label: format!("{lengths}-{}", params.variation.as_str()),
            conditions: vec![COND_UNRELATED.into(), COND_RELATED.into(), COND_CATCH.into()],
            grouping: Grouping::PairedByItem,
            values_per_item: combos,
            expected_instances: expected,
            spacing: None,
            notes: vec![
                "unrelated prime: lowest-association qualifying unrelated word of each record".into(),
                "catch trials: vowel-free 5-letter nonwords, question format, 15 spaces; prime and format combination cycled".into(),
            ],
        },
    })
}
