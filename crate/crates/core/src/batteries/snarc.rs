//! Spatial-numerical association batteries (magnitude, implicit
//! association and parity classification), with escalating letter spacing.

use serde::{Deserialize, Serialize};

use super::{
    answers, Battery, BatteryError, Design, ExperimentKind, Grouping, SpacingSchedule, COND_CONGRUENT,
    COND_INCONGRUENT,
};
use crate::promptgen::{
    apply_spacing, coordinate_grid, expand, templates, Bindings, Coords, InstanceSpec, PromptTemplate, VariationAxes,
    RESPONSE_SYMBOLS, SNARC_IAT_X_NAMES, SNARC_SEPARATORS, SNARC_X_NAMES,
};

/// Number words used as targets; five is the reference and never shown.
pub const SNARC_DIGITS: [(&str, u32); 8] = [
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
];

pub const SPACING_RANGE: (u32, u32) = (2, 20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnarcAxis {
    Horizontal,
    Vertical,
}

impl SnarcAxis {
    /// (small side, large side).
    pub fn sides(self) -> (&'static str, &'static str) {
        match self {
            SnarcAxis::Horizontal => ("left", "right"),
            SnarcAxis::Vertical => ("down", "up"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SnarcAxis::Horizontal => "horizontal",
            SnarcAxis::Vertical => "vertical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnarcParams {
    pub experiment: u8,
    pub axis: SnarcAxis,
    #[serde(default)]
    pub schedule: SpacingSchedule,
    /// Overrides the X-name axis (experiments 1 and 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_names: Option<Vec<String>>,
    /// Overrides the response symbols (experiment 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<String>>,
}

impl SnarcParams {
    pub fn new(experiment: u8, axis: SnarcAxis) -> Self {
        Self { experiment, axis, schedule: SpacingSchedule::default(), x_names: None, symbols: None }
    }
}

fn template(experiment: u8) -> Result<&'static PromptTemplate, BatteryError> {
    Ok(match experiment {
        1 => &templates::SNARC_MAGNITUDE,
        2 => &templates::SNARC_IAT,
        3 => &templates::SNARC_PARITY,
        4 => &templates::SNARC_PARITY_ASK,
        5 => &templates::SNARC_PARITY_AFTER,
        n => return Err(BatteryError::InvalidExperiment(n)),
    })
}

fn axes(params: &SnarcParams) -> VariationAxes {
    let strs = |v: &Option<Vec<String>>, default: &[&'static str]| -> Vec<String> {
        v.clone().unwrap_or_else(|| default.iter().map(|s| (*s).to_string()).collect())
    };
    let mut axes = VariationAxes::snarc(&[], &[], &[]);
    match params.experiment {
        1 => axes.x_names = strs(&params.x_names, &SNARC_X_NAMES),
        2 => {
            axes.x_names = strs(&params.x_names, &SNARC_IAT_X_NAMES);
            axes.response_symbols = strs(&params.symbols, &RESPONSE_SYMBOLS);
        }
        _ => axes.separators = SNARC_SEPARATORS.iter().map(|s| (*s).to_string()).collect(),
    }
    axes
}

fn coord<'a>(coords: &'a Coords, axis: &str) -> &'a str {
    coords.get(axis).map(String::as_str).unwrap_or_default()
}

struct Answer {
    values: Bindings,
    correct: String,
    congruent: bool,
}

/// Resolves the rule text and the answer for one digit under one
/// coordinate tuple.
fn answer(experiment: u8, axis: SnarcAxis, value: u32, coords: &Coords) -> Answer {
    let (small_side, large_side) = axis.sides();
    let small = value < 5;
    let first = coord(coords, "rule-order") == "first";
    let direct = coord(coords, "mapping") == "direct";
    let mut values = Bindings::new();
    let mut put = |k: &str, v: &str| {
        values.insert(k.to_string(), v.to_string());
    };

    match experiment {
        1 => {
            // rule order picks which magnitude class is stated first; a direct
            // mapping sends smaller to the small side
            let (c1, c2) = if first { ("smaller", "larger") } else { ("larger", "smaller") };
            let side_of = |c: &str| match (c == "smaller", direct) {
                (true, true) | (false, false) => small_side,
                _ => large_side,
            };
            put("c1", c1);
            put("c2", c2);
            put("r1", side_of(c1));
            put("r2", side_of(c2));
            put("sep", ":");
            let class = if small { "smaller" } else { "larger" };
            Answer { values, correct: side_of(class).to_string(), congruent: direct }
        }
        2 => {
            let (c1, c2) = if first { ("smaller", "larger") } else { ("larger", "smaller") };
            let congruent_side = |c: &str| if c == "smaller" { small_side } else { large_side };
            let other = |s: &str| if s == small_side { large_side } else { small_side };
            let s1 = if direct { congruent_side(c1) } else { other(congruent_side(c1)) };
            put("c1", c1);
            put("c2", c2);
            put("s1", s1);
            put("s2", other(s1));
            put("sep", ":");
            let in_c1 = (c1 == "smaller") == small;
            let correct = coord(coords, "response-pair").chars().nth(usize::from(!in_c1)).unwrap_or_default();
            Answer { values, correct: correct.to_string(), congruent: direct }
        }
        _ => {
            let (p1, p2) = if first { ("even", "odd") } else { ("odd", "even") };
            let side_of = |p: &str| match (p == "even", direct) {
                (true, true) | (false, false) => large_side,
                _ => small_side,
            };
            put("p1", p1);
            put("p2", p2);
            put("r1", side_of(p1));
            put("r2", side_of(p2));
            let parity = if value.is_multiple_of(2) { "even" } else { "odd" };
            let response = side_of(parity);
            let magnitude_side = if small { small_side } else { large_side };
            Answer { values, correct: response.to_string(), congruent: response == magnitude_side }
        }
    }
}

/// Builds every spacing level of one SNARC experiment. The dispatch loop
/// walks the levels with [`super::apply_stop_rule`]; the full battery is an
/// upper bound on what is actually queried.
pub fn build_snarc(params: &SnarcParams) -> Result<Battery, BatteryError> {
    let template = template(params.experiment)?;
    params.schedule.validate(SPACING_RANGE)?;
    let axes = axes(params);
    let per_digit = coordinate_grid(template, &axes)?.len();
    let experiment_id = format!("snarc-{}-{}", params.experiment, params.axis.as_str());
    let (small_side, large_side) = params.axis.sides();
    let relevant = if params.experiment == 2 { axes.response_symbols.clone() } else { answers(&[small_side, large_side]) };

    let mut instances = Vec::new();
    for &(word, value) in &SNARC_DIGITS {
        for &level in &params.schedule.levels {
            let spaced = apply_spacing(word, level as usize);
            instances.extend(expand(&experiment_id, template, &axes, |coords| {
                let mut a = answer(params.experiment, params.axis, value, coords);
                a.values.insert("word".into(), spaced.clone());
                InstanceSpec {
                    values: a.values,
                    condition: if a.congruent { COND_CONGRUENT } else { COND_INCONGRUENT }.to_string(),
                    item_refs: vec![word.to_string()],
                    item_key: word.to_string(),
                    correct_answers: vec![a.correct],
                    relevant_answers: relevant.clone(),
                    spacing_level: level,
                    distance: None,
                }
            })?);
        }
    }

    let mut notes = vec!["analysis averages each (digit, variant) over its included spacing levels".to_string()];
    if params.experiment == 2 {
        notes.push(format!("{per_digit} variants per digit; response symbols form ordered distinct pairs"));
    }
    Ok(Battery {
        experiment_id,
        instances,
        design: Design {
            kind: ExperimentKind::Snarc,
            label: format!("{} {}", params.experiment, params.axis.as_str()),
            conditions: vec![COND_INCONGRUENT.into(), COND_CONGRUENT.into()],
            grouping: Grouping::PairedByItem,
            values_per_item: per_digit / 2,
            expected_instances: SNARC_DIGITS.len() * params.schedule.levels.len() * per_digit,
            spacing: Some(params.schedule.clone()),
            notes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn build(exp: u8, axis: SnarcAxis) -> Battery {
        build_snarc(&SnarcParams::new(exp, axis)).unwrap()
    }

    #[test]
    fn experiment_one_counts() {
        let b = build(1, SnarcAxis::Horizontal);
        assert_eq!(b.len(), 8 * 10 * 32);
        assert_eq!(b.len(), b.design.expected_instances);
        assert_eq!(b.design.values_per_item, 16);
        assert_eq!(b.design.expected_df(8), Some(254));
    }

    #[test]
    fn parity_counts_match_df() {
        let b = build(3, SnarcAxis::Horizontal);
        assert_eq!(b.design.values_per_item, 14);
        assert_eq!(b.design.expected_df(8), Some(222));
        assert_eq!(b.design.expected_df(7), Some(194));
    }

    #[test]
    fn five_never_appears() {
        for exp in 1..=5 {
            let b = build(exp, SnarcAxis::Vertical);
            assert!(b.instances.iter().all(|i| i.item_key != "five"));
            assert!(b.instances.iter().all(|i| !i.rendered_text.contains("Word: f i v e")));
        }
    }

    #[test]
    fn invalid_experiment_rejected() {
        assert!(matches!(build_snarc(&SnarcParams::new(6, SnarcAxis::Horizontal)), Err(BatteryError::InvalidExperiment(6))));
        let mut p = SnarcParams::new(1, SnarcAxis::Horizontal);
        p.schedule.levels = vec![0, 2];
        assert!(matches!(build_snarc(&p), Err(BatteryError::InvalidSchedule(_))));
    }

    #[test]
    fn magnitude_text_and_answer() {
        let mut p = SnarcParams::new(1, SnarcAxis::Horizontal);
        p.schedule.levels = vec![2];
        let b = build_snarc(&p).unwrap();
        let inst = b
            .instances
            .iter()
            .find(|i| {
                i.item_key == "three"
                    && i.variation_coords["x-name"] == "Y"
                    && i.variation_coords["rule-order"] == "first"
                    && i.variation_coords["mapping"] == "direct"
            })
            .unwrap();
        assert_eq!(
            inst.rendered_text,
            "In the following instructions, Y is equal to 5.\nA word is about to be presented to you.\nIf the word represents a number smaller than Y, respond with \"left\".\nIf the word represents a number larger than Y, respond with \"right\".\nWord: t  h  r  e  e\nResponse:"
        );
        assert_eq!(inst.correct_answers, vec!["left"]);
        assert_eq!(inst.condition, COND_CONGRUENT);
    }

    #[test]
    fn vertical_uses_down_up() {
        let b = build(1, SnarcAxis::Vertical);
        assert!(b.instances.iter().all(|i| !i.rendered_text.contains("left") && !i.rendered_text.contains("right")));
        assert!(b.instances.iter().all(|i| i.relevant_answers == vec!["down", "up"]));
        let nine = b.instances.iter().find(|i| i.item_key == "nine" && i.condition == COND_CONGRUENT).unwrap();
        assert_eq!(nine.correct_answers, vec!["up"]);
    }

    #[test]
    fn magnitude_correct_answer_matches_rule_text() {
        let b = build(1, SnarcAxis::Horizontal);
        for i in &b.instances {
            let value = SNARC_DIGITS.iter().find(|(w, _)| *w == i.item_key).unwrap().1;
            let class = if value < 5 { "smaller" } else { "larger" };
            let needle = format!("a number {class} than {}, respond with \"{}\"", i.variation_coords["x-name"], i.correct_answers[0]);
            assert!(i.rendered_text.contains(&needle), "{}", i.rendered_text);
        }
    }

    #[test]
    fn iat_answers() {
        let mut p = SnarcParams::new(2, SnarcAxis::Horizontal);
        p.schedule.levels = vec![2];
        let b = build_snarc(&p).unwrap();
        assert_eq!(b.len(), 8 * 160);
        for i in &b.instances {
            assert_eq!(i.relevant_answers, vec!["!", "@", "#", "$", "%"]);
            let value = SNARC_DIGITS.iter().find(|(w, _)| *w == i.item_key).unwrap().1;
            let class = if value < 5 { "smaller" } else { "larger" };
            let side = if value < 5 { "left" } else { "right" };
            let line = i
                .rendered_text
                .lines()
                .find(|l| l.contains(&format!("a number {class} than")))
                .unwrap();
            assert!(line.ends_with(&format!("respond with {}.", i.correct_answers[0])), "{line}");
            assert_eq!(line.contains(&format!("associated with {side}")), i.condition == COND_CONGRUENT);
        }
    }

    #[test]
    fn parity_congruency() {
        let mut p = SnarcParams::new(3, SnarcAxis::Horizontal);
        p.schedule.levels = vec![2];
        let b = build_snarc(&p).unwrap();
        let find = |word: &str, order: &str, mapping: &str| {
            b.instances
                .iter()
                .find(|i| {
                    i.item_key == word
                        && i.variation_coords["rule-order"] == order
                        && i.variation_coords["mapping"] == mapping
                        && i.variation_coords["separators"] == "|"
                })
                .unwrap()
        };
        // even -> right under a direct mapping
        let eight = find("eight", "first", "direct");
        assert_eq!(eight.correct_answers, vec!["right"]);
        assert_eq!(eight.condition, COND_CONGRUENT);
        assert!(eight.rendered_text.contains("an even number, respond with \"right\""));
        assert!(eight.rendered_text.ends_with("Word| e  i  g  h  t\nResponse|"));
        let two = find("two", "second", "direct");
        assert_eq!(two.correct_answers, vec!["right"]);
        assert_eq!(two.condition, COND_INCONGRUENT);
        assert_eq!(find("three", "first", "reversed").condition, COND_INCONGRUENT);
        assert_eq!(find("seven", "first", "reversed").condition, COND_CONGRUENT);
    }

    #[test]
    fn conditions_balanced_per_digit_and_level() {
        for exp in 1..=5 {
            let b = build(exp, SnarcAxis::Horizontal);
            let mut counts: BTreeMap<(&str, u32, &str), usize> = BTreeMap::new();
            for i in &b.instances {
                *counts.entry((i.item_key.as_str(), i.spacing_level, i.condition.as_str())).or_default() += 1;
            }
            assert!(counts.values().all(|&n| n == b.design.values_per_item), "experiment {exp}");
            assert_eq!(counts.len(), 8 * 10 * 2);
        }
    }

    #[test]
    fn custom_axes() {
        let mut p = SnarcParams::new(2, SnarcAxis::Vertical);
        p.x_names = Some(vec!["X".into()]);
        p.symbols = Some(vec!["!".into(), "@".into()]);
        p.schedule.levels = vec![4];
        let b = build_snarc(&p).unwrap();
        assert_eq!(b.len(), 8 * 2 * 2 * 2);
    }
}
