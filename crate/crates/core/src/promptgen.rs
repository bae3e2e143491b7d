//! Prompt templates and the cartesian variation axes that stand in for
//! multiple participants.
//!
//! A template body holds `{name}` placeholders. Each axis value binds one or
//! more placeholders (a label pair binds `q` and `a`, a separator binds
//! `sep`, ...); the remaining placeholders come from the stimulus binder that
//! a battery passes to [`expand`]. Rendering is a byte-exact substitution.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("template {template}: placeholder {{{name}}} is unbound")]
    Unbound { template: String, name: String },
    #[error("template {template}: placeholder {{{name}}} is bound more than once")]
    DuplicateBinding { template: String, name: String },
    #[error("template {template}: unterminated placeholder")]
    Unterminated { template: String },
    #[error("template {template}: axis {axis} has no values")]
    EmptyAxis { template: String, axis: AxisName },
    #[error("axis value {0:?} contains a newline")]
    NewlineInAxis(String),
}

/// Variation axes, in the canonical enumeration order. The first axis varies
/// slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisName {
    Labels,
    Separators,
    OrderSwap,
    Comparison,
    Plural,
    Case,
    XName,
    RuleOrder,
    Mapping,
    ResponsePair,
}

impl AxisName {
    pub const ALL: [AxisName; 10] = [
        AxisName::Labels,
        AxisName::Separators,
        AxisName::OrderSwap,
        AxisName::Comparison,
        AxisName::Plural,
        AxisName::Case,
        AxisName::XName,
        AxisName::RuleOrder,
        AxisName::Mapping,
        AxisName::ResponsePair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::Labels => "labels",
            AxisName::Separators => "separators",
            AxisName::OrderSwap => "order-swap",
            AxisName::Comparison => "comparison",
            AxisName::Plural => "plural",
            AxisName::Case => "case",
            AxisName::XName => "x-name",
            AxisName::RuleOrder => "rule-order",
            AxisName::Mapping => "mapping",
            AxisName::ResponsePair => "response-pair",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One point on an axis: the coordinate label recorded on the instance and
/// the placeholders it binds (possibly none, when the stimulus binder reads
/// the coordinate instead).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisValue {
    pub key: String,
    pub binds: Vec<(String, String)>,
}

impl AxisValue {
    fn plain(key: impl Into<String>) -> Self {
        Self { key: key.into(), binds: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationAxes {
    pub qa_labels: Vec<(String, String)>,
    pub separators: Vec<String>,
    pub comparison_words: Vec<(String, String)>,
    pub response_symbols: Vec<String>,
    pub x_names: Vec<String>,
}

fn owned_pairs(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(a, b)| ((*a).to_string(), (*b).to_string())).collect()
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|x| (*x).to_string()).collect()
}

pub const COMPARISON_LABELS: [(&str, &str); 5] = [
    ("Q", "A"),
    ("Question", "Answer"),
    ("q", "a"),
    ("question", "answer"),
    ("QUESTION", "ANSWER"),
];
pub const COMPARISON_SEPARATORS: [&str; 6] = [":", ")", ".", "]", "}", ";"];
pub const PRIMING_LABELS: [(&str, &str); 2] = [("Q", "A"), ("Question", "Answer")];
pub const PRIMING_SEPARATORS: [&str; 3] = [":", ")", "."];
pub const SNARC_SEPARATORS: [&str; 7] = [":", ";", ")", ".", "|", "]", "}"];
pub const SNARC_X_NAMES: [&str; 8] = ["B", "C", "D", "E", "X", "Y", "W", "Z"];
pub const SNARC_IAT_X_NAMES: [&str; 2] = ["X", "Y"];
pub const RESPONSE_SYMBOLS: [&str; 5] = ["!", "@", "#", "$", "%"];

impl VariationAxes {
    /// Five label pairs and six separators, as used by every comparison task.
    pub fn comparison(words: (&str, &str)) -> Self {
        Self {
            qa_labels: owned_pairs(&COMPARISON_LABELS),
            separators: owned(&COMPARISON_SEPARATORS),
            comparison_words: vec![(words.0.to_string(), words.1.to_string())],
            response_symbols: Vec::new(),
            x_names: Vec::new(),
        }
    }

    /// Two label pairs and three separators for the lexical-decision task.
    pub fn priming() -> Self {
        Self {
            qa_labels: owned_pairs(&PRIMING_LABELS),
            separators: owned(&PRIMING_SEPARATORS),
            comparison_words: Vec::new(),
            response_symbols: Vec::new(),
            x_names: Vec::new(),
        }
    }

    pub fn snarc(separators: &[&str], x_names: &[&str], symbols: &[&str]) -> Self {
        Self {
            qa_labels: Vec::new(),
            separators: owned(separators),
            comparison_words: Vec::new(),
            response_symbols: owned(symbols),
            x_names: owned(x_names),
        }
    }

    /// Values along one axis in enumeration order.
    pub fn values(&self, axis: AxisName) -> Vec<AxisValue> {
        let bind1 = |name: &str, v: &str| AxisValue {
            key: v.to_string(),
            binds: vec![(name.to_string(), v.to_string())],
        };
        match axis {
            AxisName::Labels => self
                .qa_labels
                .iter()
                .map(|(q, a)| AxisValue {
                    key: format!("{q}&{a}"),
                    binds: vec![("q".into(), q.clone()), ("a".into(), a.clone())],
                })
                .collect(),
            AxisName::Separators => self.separators.iter().map(|s| bind1("sep", s)).collect(),
            AxisName::Comparison => self
                .comparison_words
                .iter()
                .flat_map(|(x, y)| [x, y])
                .map(|w| bind1("cmp", w))
                .collect(),
            AxisName::XName => self.x_names.iter().map(|x| bind1("x", x)).collect(),
            AxisName::ResponsePair => {
                let mut out = Vec::new();
                for r1 in &self.response_symbols {
                    for r2 in &self.response_symbols {
                        if r1 != r2 {
                            out.push(AxisValue {
                                key: format!("{r1}{r2}"),
                                binds: vec![("r1".into(), r1.clone()), ("r2".into(), r2.clone())],
                            });
                        }
                    }
                }
                out
            }
            AxisName::OrderSwap => vec![AxisValue::plain("ab"), AxisValue::plain("ba")],
            AxisName::Plural => vec![AxisValue::plain("singular"), AxisValue::plain("plural")],
            AxisName::Case => vec![AxisValue::plain("upper-first"), AxisValue::plain("upper-second")],
            AxisName::RuleOrder => vec![AxisValue::plain("first"), AxisValue::plain("second")],
            AxisName::Mapping => vec![AxisValue::plain("direct"), AxisValue::plain("reversed")],
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let all = self
            .qa_labels
            .iter()
            .flat_map(|(a, b)| [a, b])
            .chain(&self.separators)
            .chain(self.comparison_words.iter().flat_map(|(a, b)| [a, b]))
            .chain(&self.response_symbols)
            .chain(&self.x_names);
        for v in all {
            if v.contains('\n') {
                return Err(PromptError::NewlineInAxis(v.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerRule {
    /// Confidence on the correct answer among the relevant answers.
    Classify,
    /// Integer read from the greedy continuation.
    Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub template_id: &'static str,
    pub body: &'static str,
    pub axes_used: &'static [AxisName],
    pub answer_rule: AnswerRule,
}

/// Axis choices for one instance, keyed by axis name.
pub type Coords = BTreeMap<String, String>;

/// Placeholder values contributed by the stimulus side of a binding.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub experiment_id: String,
    pub template_id: String,
    pub rendered_text: String,
    pub condition: String,
    pub variation_coords: Coords,
    pub item_refs: Vec<String>,
    /// Analysis unit: target word, stimulus pair, digit or sequence length.
    pub item_key: String,
    pub correct_answers: Vec<String>,
    pub relevant_answers: Vec<String>,
    pub spacing_level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<u32>,
    pub answer_rule: AnswerRule,
}

impl PromptInstance {
    /// Variation coordinates flattened to a stable string.
    pub fn variant_key(&self) -> String {
        self.variation_coords
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// What the stimulus binder returns for one coordinate tuple.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSpec {
    pub values: Bindings,
    pub condition: String,
    pub item_refs: Vec<String>,
    pub item_key: String,
    pub correct_answers: Vec<String>,
    pub relevant_answers: Vec<String>,
    pub spacing_level: u32,
    pub distance: Option<u32>,
}

/// Inserts `n_spaces` spaces between every adjacent pair of characters.
/// Internal spaces count as characters and are spaced too.
pub fn apply_spacing(word: &str, n_spaces: usize) -> String {
    if n_spaces == 0 {
        return word.to_string();
    }
    let gap = " ".repeat(n_spaces);
    let mut out = String::with_capacity(word.len() * (n_spaces + 1));
    for (i, c) in word.chars().enumerate() {
        if i > 0 {
            out.push_str(&gap);
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseStyle {
    Upper,
    Lower,
}

pub fn apply_case(word: &str, style: CaseStyle) -> String {
    match style {
        CaseStyle::Upper => word.to_uppercase(),
        CaseStyle::Lower => word.to_lowercase(),
    }
}

const IRREGULAR_PLURALS: [(&str, &str); 7] = [
    ("goose", "geese"),
    ("wolf", "wolves"),
    ("mouse", "mice"),
    ("ox", "oxen"),
    ("sheep", "sheep"),
    ("deer", "deer"),
    ("moose", "moose"),
];

pub fn pluralize(noun: &str) -> String {
    IRREGULAR_PLURALS
        .iter()
        .find(|(s, _)| *s == noun)
        .map(|(_, p)| (*p).to_string())
        .unwrap_or_else(|| format!("{noun}s"))
}

/// Names of the `{placeholders}` in a template body, in order of appearance.
pub fn placeholders(template: &PromptTemplate) -> Result<Vec<String>, PromptError> {
    let mut names = Vec::new();
    let mut rest = template.body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| PromptError::Unterminated {
            template: template.template_id.to_string(),
        })?;
        names.push(after[..close].to_string());
        rest = &after[close + 1..];
    }
    Ok(names)
}

/// Substitutes every placeholder from `bindings`. Values are inserted
/// verbatim and never re-scanned.
pub fn render(template: &PromptTemplate, bindings: &Bindings) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.body.len() + 64);
    let mut rest = template.body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| PromptError::Unterminated {
            template: template.template_id.to_string(),
        })?;
        let name = &after[..close];
        let value = bindings.get(name).ok_or_else(|| PromptError::Unbound {
            template: template.template_id.to_string(),
            name: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders with axis coordinates and stimulus bindings merged; a placeholder
/// bound by both is an error.
pub fn render_with(
    template: &PromptTemplate,
    axis_binds: &[(String, String)],
    stimulus: &Bindings,
) -> Result<String, PromptError> {
    let mut all = stimulus.clone();
    for (k, v) in axis_binds {
        if all.insert(k.clone(), v.clone()).is_some() {
            return Err(PromptError::DuplicateBinding {
                template: template.template_id.to_string(),
                name: k.clone(),
            });
        }
    }
    render(template, &all)
}

/// Enumerates the cartesian product of the template's axes, first axis
/// slowest.
pub fn coordinate_grid(
    template: &PromptTemplate,
    axes: &VariationAxes,
) -> Result<Vec<Vec<(AxisName, AxisValue)>>, PromptError> {
    axes.validate()?;
    let mut used: Vec<AxisName> = template.axes_used.to_vec();
    used.sort();
    used.dedup();
    let mut grid: Vec<Vec<(AxisName, AxisValue)>> = vec![Vec::new()];
    for axis in used {
        let values = axes.values(axis);
        if values.is_empty() {
            return Err(PromptError::EmptyAxis { template: template.template_id.to_string(), axis });
        }
        let mut next = Vec::with_capacity(grid.len() * values.len());
        for prefix in &grid {
            for v in &values {
                let mut row = prefix.clone();
                row.push((axis, v.clone()));
                next.push(row);
            }
        }
        grid = next;
    }
    Ok(grid)
}

/// Expands one template over all axis combinations. `bind` maps each
/// coordinate tuple to its stimulus bindings and answer key.
pub fn expand<F>(
    experiment_id: &str,
    template: &PromptTemplate,
    axes: &VariationAxes,
    mut bind: F,
) -> Result<Vec<PromptInstance>, PromptError>
where
    F: FnMut(&Coords) -> InstanceSpec,
{
    let grid = coordinate_grid(template, axes)?;
    let mut out = Vec::with_capacity(grid.len());
    for row in grid {
        let coords: Coords = row.iter().map(|(a, v)| (a.as_str().to_string(), v.key.clone())).collect();
        let axis_binds: Vec<(String, String)> = row.iter().flat_map(|(_, v)| v.binds.clone()).collect();
        let bound = bind(&coords);
        let text = render_with(template, &axis_binds, &bound.values)?;
        out.push(PromptInstance {
            experiment_id: experiment_id.to_string(),
            template_id: template.template_id.to_string(),
            rendered_text: text,
            condition: bound.condition,
            variation_coords: coords,
            item_refs: bound.item_refs,
            item_key: bound.item_key,
            correct_answers: bound.correct_answers,
            relevant_answers: bound.relevant_answers,
            spacing_level: bound.spacing_level,
            distance: bound.distance,
            answer_rule: template.answer_rule,
        });
    }
    Ok(out)
}

pub mod templates {
    //! The battery templates. Bodies stop at the answer cue.

    use super::{AnswerRule, AxisName::*, PromptTemplate};

    const LS: &[super::AxisName] = &[Labels, Separators];
    const COMPARE: &[super::AxisName] = &[Labels, Separators, OrderSwap, Comparison];

    pub const PRIMING_QUESTION: PromptTemplate = PromptTemplate {
        template_id: "priming-question",
        body: "{q}{sep} Answer with an arbitrary word.\n{a}{sep} {prime}.\n{q}{sep} Can the letter sequence \"{target}\" form a word?\n{a}{sep}",
        axes_used: LS,
        answer_rule: AnswerRule::Classify,
    };
    pub const PRIMING_SENTENCE: PromptTemplate = PromptTemplate {
        template_id: "priming-sentence",
        body: "\"{prime}\" is a word.\n{q}{sep} Can the letter sequence \"{target}\" form a word?\n{a}{sep}",
        axes_used: LS,
        answer_rule: AnswerRule::Classify,
    };
    pub const PRIMING_SIMPLE: PromptTemplate = PromptTemplate {
        template_id: "priming-simple",
        body: "{prime}.\n{q}{sep} Can the letter sequence \"{target}\" form a word?\n{a}{sep}",
        axes_used: LS,
        answer_rule: AnswerRule::Classify,
    };
    pub const ANIMAL_SIZE: PromptTemplate = PromptTemplate {
        template_id: "animal-size",
        body: "{q}{sep} {verb} {first} {cmp} than {second}?\n{a}{sep}",
        axes_used: &[Labels, Separators, OrderSwap, Comparison, Plural],
        answer_rule: AnswerRule::Classify,
    };
    pub const ANIMAL_SIZE_CASED: PromptTemplate = PromptTemplate {
        template_id: "animal-size-cased",
        body: "{q}{sep} {verb} {first} {cmp} than {second}?\n{a}{sep}",
        axes_used: &[Labels, Separators, OrderSwap, Comparison, Plural, Case],
        answer_rule: AnswerRule::Classify,
    };
    pub const NUMBER_COMPARE: PromptTemplate = PromptTemplate {
        template_id: "number-compare",
        body: "{l1} is {first}\n{l2} is {second}\n{q}{sep} Is {l1} {cmp} than {l2}?\n{a}{sep}",
        axes_used: COMPARE,
        answer_rule: AnswerRule::Classify,
    };
    pub const NUMBER_COMPARE_CASED: PromptTemplate = PromptTemplate {
        template_id: "number-compare-cased",
        body: "{l1} is {first}\n{l2} is {second}\n{q}{sep} Is {l1} {cmp} than {l2}?\n{a}{sep}",
        axes_used: &[Labels, Separators, OrderSwap, Comparison, Case],
        answer_rule: AnswerRule::Classify,
    };
    pub const MONTH_ORDER: PromptTemplate = PromptTemplate {
        template_id: "month-order",
        body: "{q}{sep} Is {first} {cmp} {second}?\n{a}{sep}",
        axes_used: COMPARE,
        answer_rule: AnswerRule::Classify,
    };
    pub const LETTER_ORDER: PromptTemplate = PromptTemplate {
        template_id: "letter-order",
        body: "{q}{sep} In the alphabet, is {first} {cmp} {second}?\n{a}{sep}",
        axes_used: COMPARE,
        answer_rule: AnswerRule::Classify,
    };
    pub const SNARC_MAGNITUDE: PromptTemplate = PromptTemplate {
        template_id: "snarc-magnitude",
        body: "In the following instructions, {x} is equal to 5.\nA word is about to be presented to you.\nIf the word represents a number {c1} than {x}, respond with \"{r1}\".\nIf the word represents a number {c2} than {x}, respond with \"{r2}\".\nWord{sep} {word}\nResponse{sep}",
        axes_used: &[XName, RuleOrder, Mapping],
        answer_rule: AnswerRule::Classify,
    };
    pub const SNARC_IAT: PromptTemplate = PromptTemplate {
        template_id: "snarc-iat",
        body: "In the following instructions, {x} is equal to 5.\nA word is about to be presented to you.\nIf the word is a spatial word associated with {s1} or the word represents a number {c1} than {x}, respond with {r1}.\nIf the word is a spatial word associated with {s2} or the word represents a number {c2} than {x}, respond with {r2}.\nWord{sep} {word}\nResponse{sep}",
        axes_used: &[XName, RuleOrder, Mapping, ResponsePair],
        answer_rule: AnswerRule::Classify,
    };
    pub const SNARC_PARITY: PromptTemplate = PromptTemplate {
        template_id: "snarc-parity",
        body: "A word is about to be presented to you.\nIf the word represents an {p1} number, respond with \"{r1}\".\nIf the word represents an {p2} number, respond with \"{r2}\".\nWord{sep} {word}\nResponse{sep}",
        axes_used: &[Separators, RuleOrder, Mapping],
        answer_rule: AnswerRule::Classify,
    };
    pub const SNARC_PARITY_ASK: PromptTemplate = PromptTemplate {
        template_id: "snarc-parity-ask",
        body: "A word is about to be presented to you.\nIf the word represents an {p1} number, respond with \"{r1}\".\nIf the word represents an {p2} number, respond with \"{r2}\".\nIs the number greater than five?\nWord{sep} {word}\nResponse{sep}",
        axes_used: &[Separators, RuleOrder, Mapping],
        answer_rule: AnswerRule::Classify,
    };
    pub const SNARC_PARITY_AFTER: PromptTemplate = PromptTemplate {
        template_id: "snarc-parity-after",
        body: "A word is about to be presented to you.\nIf the word represents an {p1} number, respond with \"{r1}\".\nIf the word represents an {p2} number, respond with \"{r2}\".\nAfter responding, write whether or not the number is greater than five.\nWord{sep} {word}\nResponse{sep}",
        axes_used: &[Separators, RuleOrder, Mapping],
        answer_rule: AnswerRule::Classify,
    };
    pub const ANCHOR_ONE: PromptTemplate = PromptTemplate {
        template_id: "anchor-one",
        body: "a = {a1}\nlength = len('{seq}') # equals to",
        axes_used: &[],
        answer_rule: AnswerRule::Estimate,
    };
    pub const ANCHOR_TWO: PromptTemplate = PromptTemplate {
        template_id: "anchor-two",
        body: "a = {a1}\nb = {a2}\nz = len('{seq}') # equals to",
        axes_used: &[],
        answer_rule: AnswerRule::Estimate,
    };
    pub const ANCHOR_SEQ_ONE: PromptTemplate = PromptTemplate {
        template_id: "anchor-seq-one",
        body: "len('{aseq1}') # equals to {a1}\nlen('{seq}') # equals to",
        axes_used: &[],
        answer_rule: AnswerRule::Estimate,
    };
    pub const ANCHOR_SEQ_TWO: PromptTemplate = PromptTemplate {
        template_id: "anchor-seq-two",
        body: "len('{aseq1}') # equals to {a1}\nlen('{aseq2}') # equals to {a2}\nlen('{seq}') # equals to",
        axes_used: &[],
        answer_rule: AnswerRule::Estimate,
    };

    pub const ALL: [&PromptTemplate; 18] = [
        &PRIMING_QUESTION,
        &PRIMING_SENTENCE,
        &PRIMING_SIMPLE,
        &ANIMAL_SIZE,
        &ANIMAL_SIZE_CASED,
        &NUMBER_COMPARE,
        &NUMBER_COMPARE_CASED,
        &MONTH_ORDER,
        &LETTER_ORDER,
        &SNARC_MAGNITUDE,
        &SNARC_IAT,
        &SNARC_PARITY,
        &SNARC_PARITY_ASK,
        &SNARC_PARITY_AFTER,
        &ANCHOR_ONE,
        &ANCHOR_TWO,
        &ANCHOR_SEQ_ONE,
        &ANCHOR_SEQ_TWO,
    ];
}
