//! Pairwise comparison batteries: the distance effect and, with one
//! stimulus capitalized, the size congruity effect.

use serde::{Deserialize, Serialize};

use super::{answers, Battery, BatteryError, Design, ExperimentKind, Grouping, COND_CONGRUENT, COND_INCONGRUENT, NO, YES};
use crate::promptgen::{
    apply_case, apply_spacing, coordinate_grid, expand, pluralize, templates, Bindings, CaseStyle, Coords,
    InstanceSpec, PromptTemplate, VariationAxes,
};
use crate::stimuli::{builtin_sets, SetKind, StimulusItem, StimulusSet};

/// Sets whose names all have the same letter count.
pub const SPACEABLE_SETS: [&str; 4] = ["3-animals", "4-animals", "5-animals", "digits"];

fn lookup(name: &str) -> Result<StimulusSet, BatteryError> {
    builtin_sets().remove(name).ok_or_else(|| BatteryError::UnknownSet(name.to_string()))
}

fn check_spaced(set: &StimulusSet, spaced: bool) -> Result<(), BatteryError> {
    if spaced && !SPACEABLE_SETS.contains(&set.name.as_str()) {
        return Err(BatteryError::SpacedVariableLength(set.name.clone()));
    }
    Ok(())
}

/// Position of an item on the compared dimension.
fn scale(set: &StimulusSet, item: &StimulusItem) -> f64 {
    match set.kind {
        SetKind::NumberWord => item.magnitude.unwrap_or(f64::from(item.ordinal_rank)),
        _ => f64::from(item.ordinal_rank),
    }
}

fn bucket(set: &StimulusSet, a: &StimulusItem, b: &StimulusItem) -> u32 {
    (scale(set, a) - scale(set, b)).abs().round() as u32
}

fn pair_key(a: &StimulusItem, b: &StimulusItem) -> String {
    format!("{}|{}", a.text, b.text)
}

fn pairs(set: &StimulusSet) -> Vec<(&StimulusItem, &StimulusItem)> {
    let mut out = Vec::new();
    for (i, a) in set.items.iter().enumerate() {
        for b in &set.items[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

struct Task {
    template: &'static PromptTemplate,
    axes: VariationAxes,
    /// Comparison word that is true when first < second on the scale.
    lower_word: &'static str,
}

fn distance_task(set: &StimulusSet) -> Result<Task, BatteryError> {
    Ok(match set.kind {
        SetKind::Animal => Task {
            template: &templates::ANIMAL_SIZE,
            axes: VariationAxes::comparison(("smaller", "bigger")),
            lower_word: "smaller",
        },
        SetKind::NumberWord => Task {
            template: &templates::NUMBER_COMPARE,
            axes: VariationAxes::comparison(("less", "greater")),
            lower_word: "less",
        },
        SetKind::Month => Task {
            template: &templates::MONTH_ORDER,
            axes: VariationAxes::comparison(("before", "after")),
            lower_word: "before",
        },
        SetKind::Letter => Task {
            template: &templates::LETTER_ORDER,
            axes: VariationAxes::comparison(("before", "after")),
            lower_word: "before",
        },
        _ => return Err(BatteryError::WrongSetKind { set: set.name.clone(), task: "a comparison battery" }),
    })
}

/// Presentation of one pair under a coordinate tuple.
struct Presented<'a> {
    first: &'a StimulusItem,
    second: &'a StimulusItem,
    values: Bindings,
    correct: &'static str,
}

fn present<'a>(
    set: &StimulusSet,
    task: &Task,
    a: &'a StimulusItem,
    b: &'a StimulusItem,
    coords: &Coords,
    spacing: usize,
) -> Presented<'a> {
    let (first, second) = if coords.get("order-swap").map(String::as_str) == Some("ba") { (b, a) } else { (a, b) };
    let plural = coords.get("plural").map(String::as_str) == Some("plural");
    let upper = coords.get("case").map(|c| c.as_str());

    let word = |item: &StimulusItem, pos: &str| {
        let base = if plural { pluralize(&item.text) } else { item.text.clone() };
        let spaced = apply_spacing(&base, spacing);
        if upper == Some(pos) {
            apply_case(&spaced, CaseStyle::Upper)
        } else {
            spaced
        }
    };

    let mut values = Bindings::new();
    values.insert("first".into(), word(first, "upper-first"));
    values.insert("second".into(), word(second, "upper-second"));
    if task.template.body.contains("{verb}") {
        values.insert("verb".into(), if plural { "Are" } else { "Is" }.into());
    }
    if task.template.body.contains("{l1}") {
        let letter = |l: &str, pos: &str| if upper == Some(pos) { l.to_uppercase() } else { l.to_string() };
        values.insert("l1".into(), letter("x", "upper-first"));
        values.insert("l2".into(), letter("y", "upper-second"));
    }

    let first_lower = scale(set, first) < scale(set, second);
    let asks_lower = coords.get("comparison").map(String::as_str) == Some(task.lower_word);
    let correct = if first_lower == asks_lower { YES } else { NO };
    Presented { first, second, values, correct }
}

/// Distance-effect battery over every unordered pair of a built-in set.
pub fn build_distance(set_name: &str, spaced: bool) -> Result<Battery, BatteryError> {
    let set = lookup(set_name)?;
    check_spaced(&set, spaced)?;
    let task = distance_task(&set)?;
    let spacing = usize::from(spaced);
    let experiment_id = format!("distance-{set_name}{}", if spaced { "-spaced" } else { "" });
    let per_pair = coordinate_grid(task.template, &task.axes)?.len();

    let mut instances = Vec::new();
    let mut buckets: Vec<u32> = Vec::new();
    for (a, b) in pairs(&set) {
        let d = bucket(&set, a, b);
        buckets.push(d);
        instances.extend(expand(&experiment_id, task.template, &task.axes, |coords| {
            let p = present(&set, &task, a, b, coords, spacing);
            InstanceSpec {
                values: p.values,
                condition: format!("distance-{d}"),
                item_refs: vec![p.first.text.clone(), p.second.text.clone()],
                item_key: pair_key(a, b),
                correct_answers: answers(&[p.correct]),
                relevant_answers: answers(&[YES, NO]),
                spacing_level: spacing as u32,
                distance: Some(d),
            }
        })?);
    }
    buckets.sort_unstable();
    buckets.dedup();

    let n_pairs = pairs(&set).len();
    Ok(Battery {
        experiment_id,
        instances,
        design: Design {
            kind: ExperimentKind::Distance,
            label: format!("{}{set_name}", if spaced { "spaced " } else { "" }),
            conditions: buckets.iter().map(|d| format!("distance-{d}")).collect(),
            grouping: Grouping::DistanceBucket,
            values_per_item: per_pair,
            expected_instances: n_pairs * per_pair,
            spacing: None,
            notes: Vec::new(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeParams {
    /// `paivio`, `3-animals`, `4-animals`, `5-animals` or `numbers`.
    pub set: String,
    #[serde(default)]
    pub spaced: bool,
    /// Numbers only: 1 compares with less/greater, 2 with smaller/larger.
    #[serde(default = "default_variation")]
    pub number_variation: u8,
}

fn default_variation() -> u8 {
    1
}

/// Size-congruity battery: each comparison is shown twice, once with each
/// stimulus upper-cased. Congruent when the upper-cased stimulus is the
/// larger referent.
pub fn build_size_congruity(params: &SizeParams) -> Result<Battery, BatteryError> {
    let set_name = params.set.as_str();
    let (set, task, label) = match set_name {
        "numbers" => {
            let (lower, upper) = match params.number_variation {
                1 => ("less", "greater"),
                2 => ("smaller", "larger"),
                v => return Err(BatteryError::InvalidParam(format!("number variation must be 1 or 2, got {v}"))),
            };
            let task = Task {
                template: &templates::NUMBER_COMPARE_CASED,
                axes: VariationAxes::comparison((lower, upper)),
                lower_word: lower,
            };
            (lookup("digits")?, task, format!("numbers ({})", params.number_variation))
        }
        "paivio" | "3-animals" | "4-animals" | "5-animals" => {
            let task = Task {
                template: &templates::ANIMAL_SIZE_CASED,
                axes: VariationAxes::comparison(("smaller", "bigger")),
                lower_word: "smaller",
            };
            (lookup(set_name)?, task, set_name.to_string())
        }
        other => return Err(BatteryError::UnknownSet(other.to_string())),
    };
    check_spaced(&set, params.spaced)?;
    let spacing = usize::from(params.spaced);
    let suffix = if set_name == "numbers" { format!("-{}", params.number_variation) } else { String::new() };
    let experiment_id = format!("size-{set_name}{suffix}{}", if params.spaced { "-spaced" } else { "" });
    let per_pair = coordinate_grid(task.template, &task.axes)?.len();

    let mut instances = Vec::new();
    for (a, b) in pairs(&set) {
        let d = bucket(&set, a, b);
        instances.extend(expand(&experiment_id, task.template, &task.axes, |coords| {
            let p = present(&set, &task, a, b, coords, spacing);
            let upper_item = if coords.get("case").map(String::as_str) == Some("upper-first") { p.first } else { p.second };
            let congruent = scale(&set, upper_item) > scale(&set, if std::ptr::eq(upper_item, a) { b } else { a });
            InstanceSpec {
                values: p.values,
                condition: if congruent { COND_CONGRUENT } else { COND_INCONGRUENT }.to_string(),
                item_refs: vec![p.first.text.clone(), p.second.text.clone()],
                item_key: pair_key(a, b),
                correct_answers: answers(&[p.correct]),
                relevant_answers: answers(&[YES, NO]),
                spacing_level: spacing as u32,
                distance: Some(d),
            }
        })?);
    }

    let n_pairs = pairs(&set).len();
    Ok(Battery {
        experiment_id,
        instances,
        design: Design {
            kind: ExperimentKind::SizeCongruity,
            label: format!("{}{label}", if params.spaced { "spaced " } else { "" }),
            conditions: vec![COND_INCONGRUENT.into(), COND_CONGRUENT.into()],
            grouping: Grouping::PairedByItem,
            values_per_item: per_pair / 2,
            expected_instances: n_pairs * per_pair,
            spacing: None,
            notes: Vec::new(),
        },
    })
}
