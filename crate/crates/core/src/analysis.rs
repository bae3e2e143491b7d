//! Scoring of token distributions and per-experiment aggregation into the
//! samples that feed the statistical tests.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::TokenDistribution;
use crate::batteries::{Battery, ExperimentKind, COND_CATCH};
use crate::promptgen::{AnswerRule, PromptInstance};
use crate::stats::{self, one_way_anova, t_quantile, t_test_pooled, t_test_welch, StatsError};
use crate::{Anova, TTest};

/// Every answer word any battery accepts.
pub const ANSWER_WORDS: [&str; 11] = ["yes", "no", "left", "right", "up", "down", "!", "@", "#", "$", "%"];

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid filter policy: {0}")]
    Policy(String),
    #[error("{observations} observations for {instances} instances")]
    Misaligned { observations: usize, instances: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One scored query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub experiment_id: String,
    pub item_key: String,
    pub condition: String,
    pub variant: String,
    pub spacing_level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<u32>,
    /// Confidence for classification queries, integer estimate otherwise.
    pub value: Option<f64>,
    pub relevant: bool,
}

impl Observation {
    /// An observation for a query that produced no usable completion.
    pub fn missing(inst: &PromptInstance) -> Self {
        Self::base(inst, None)
    }

    fn base(inst: &PromptInstance, value: Option<f64>) -> Self {
        Self {
            experiment_id: inst.experiment_id.clone(),
            item_key: inst.item_key.clone(),
            condition: inst.condition.clone(),
            variant: inst.variant_key(),
            spacing_level: inst.spacing_level,
            distance: inst.distance,
            relevant: value.is_some(),
            value,
        }
    }
}

/// Maps a raw token to an answer word: trimmed and lower-cased, then with
/// trailing punctuation and surrounding quotes removed if that is what it
/// takes to reach an answer word.
pub fn normalize_token(token: &str) -> Option<&'static str> {
    let t = token.trim().to_lowercase();
    let lookup = |s: &str| ANSWER_WORDS.iter().copied().find(|w| *w == s);
    if let Some(w) = lookup(&t) {
        return Some(w);
    }
    let stripped = t.trim_end_matches(|c: char| c.is_ascii_punctuation() && c != '"' && c != '\'');
    let stripped = stripped.trim_matches(|c| c == '"' || c == '\'');
    let stripped = stripped.trim_end_matches(|c: char| c.is_ascii_punctuation());
    lookup(stripped)
}

/// Probability on tokens normalizing to a correct answer over probability on
/// tokens normalizing to any relevant answer. `None` if no top-k token is
/// relevant.
pub fn confidence(dist: &TokenDistribution, correct: &[String], relevant: &[String]) -> Option<f64> {
    let mut on_correct = 0.0;
    let mut on_relevant = 0.0;
    for (tok, p) in dist.probabilities() {
        let Some(word) = normalize_token(tok) else {
            log::trace!("token {tok:?} is not an answer word");
            continue;
        };
        if relevant.iter().any(|r| r == word) {
            on_relevant += p;
            if correct.iter().any(|c| c == word) {
                on_correct += p;
            }
        }
    }
    (on_relevant > 0.0).then(|| on_correct / on_relevant)
}

/// Greedy continuation read as an integer: argmax tokens concatenated, then
/// the leading digit run after trimming.
pub fn numeric_estimate(dists: &[TokenDistribution]) -> Option<u64> {
    let text: String = dists.iter().filter_map(|d| d.argmax()).collect();
    let digits: String = text.trim_start().chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

pub fn score(inst: &PromptInstance, dists: &[TokenDistribution]) -> Observation {
    let value = match inst.answer_rule {
        AnswerRule::Classify => dists.first().and_then(|d| confidence(d, &inst.correct_answers, &inst.relevant_answers)),
        AnswerRule::Estimate => numeric_estimate(dists).map(|v| v as f64),
    };
    Observation::base(inst, value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterPolicy {
    pub high_cut: f64,
    pub low_cut: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self { high_cut: 0.99, low_cut: 0.6 }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if 0.0 < self.low_cut && self.low_cut < self.high_cut && self.high_cut < 1.0 {
            Ok(())
        } else {
            Err(AnalysisError::Policy(format!("need 0 < low_cut ({}) < high_cut ({}) < 1", self.low_cut, self.high_cut)))
        }
    }

    /// Why an item with these two condition means is omitted, if it is.
    pub fn omit_reason(&self, a: f64, b: f64) -> Option<&'static str> {
        if a > self.high_cut && b > self.high_cut {
            Some("ceiling")
        } else if a < self.low_cut && b < self.low_cut {
            Some("floor")
        } else {
            None
        }
    }

    pub fn keep_item(&self, a: f64, b: f64) -> bool {
        self.omit_reason(a, b).is_none()
    }

    /// A spacing level counts if at least one condition is below the high
    /// cut and at least one is above the low cut.
    pub fn include_spacing_level(&self, congruent: f64, incongruent: f64) -> bool {
        congruent.min(incongruent) < self.high_cut && congruent.max(incongruent) > self.low_cut
    }
}

/// Items retained under `policy`, given per-item (condition a, condition b)
/// means.
pub fn filter_items<'a>(means: &'a [(String, f64, f64)], policy: &FilterPolicy) -> Vec<&'a str> {
    means.iter().filter(|(_, a, b)| policy.keep_item(*a, *b)).map(|(k, _, _)| k.as_str()).collect()
}

/// Mean confidence over spacing levels for each (item, condition, variant).
/// Levels without a relevant observation are skipped.
pub fn average_over_spacing<'a>(
    observations: impl IntoIterator<Item = &'a Observation>,
) -> BTreeMap<(String, String, String), f64> {
    let mut acc: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for o in observations {
        if let Some(v) = o.value {
            let e = acc.entry((o.item_key.clone(), o.condition.clone(), o.variant.clone())).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Pooled,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default)]
    pub policy: FilterPolicy,
    #[serde(default = "default_test")]
    pub test: TestKind,
    /// Mean catch-trial confidence a valid run must exceed.
    #[serde(default = "default_catch_threshold")]
    pub catch_threshold: f64,
}

fn default_test() -> TestKind {
    TestKind::Pooled
}
fn default_catch_threshold() -> f64 {
    0.99
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { policy: FilterPolicy::default(), test: default_test(), catch_threshold: default_catch_threshold() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub item: String,
    /// Mean per condition.
    pub means: BTreeMap<String, f64>,
    pub retained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omitted: Option<String>,
    /// Spacing levels that entered the analysis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: u32,
    pub n: usize,
    pub mean: f64,
    /// Half-width of the 95% t-interval; zero when n < 2.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EffectTest {
    TTest(TTest),
    Anova { result: Anova, buckets: Vec<BucketSummary> },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchSummary {
    pub n: usize,
    pub mean: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentAnalysis {
    pub experiment_id: String,
    pub label: String,
    pub kind: ExperimentKind,
    /// Baseline condition first.
    pub conditions: Vec<String>,
    pub test: EffectTest,
    /// Items entering the test.
    pub n_items: usize,
    pub n_items_total: usize,
    pub scored: usize,
    pub not_relevant: usize,
    /// Items averaged over fewer spacing levels than were queried.
    pub partial_items: usize,
    pub expected_df: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catch: Option<CatchSummary>,
    pub items: Vec<ItemSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ExperimentAnalysis {
    pub fn ttest(&self) -> Option<&TTest> {
        match &self.test {
            EffectTest::TTest(t) => Some(t),
            _ => None,
        }
    }

    pub fn anova(&self) -> Option<&Anova> {
        match &self.test {
            EffectTest::Anova { result, .. } => Some(result),
            _ => None,
        }
    }
}

fn two_sample(a: &[f64], b: &[f64], kind: TestKind) -> EffectTest {
    let r = match kind {
        TestKind::Pooled => t_test_pooled(a, b),
        TestKind::Welch => t_test_welch(a, b),
    };
    match r {
        Ok(t) => EffectTest::TTest(t),
        Err(e) => EffectTest::Skipped { reason: e.to_string() },
    }
}

/// Analyzes the observations of one battery. `observations` are the scored
/// queries actually dispatched, in any order.
pub fn analyze(battery: &Battery, observations: &[Observation], opts: &AnalysisOptions) -> Result<ExperimentAnalysis, AnalysisError> {
    opts.policy.validate()?;
    let design = &battery.design;
    let scored = observations.iter().filter(|o| o.relevant).count();
    let mut out = ExperimentAnalysis {
        experiment_id: battery.experiment_id.clone(),
        label: design.label.clone(),
        kind: design.kind,
        conditions: design.conditions.clone(),
        test: EffectTest::Skipped { reason: "no data".into() },
        n_items: 0,
        n_items_total: 0,
        scored,
        not_relevant: observations.len() - scored,
        partial_items: 0,
        expected_df: None,
        catch: None,
        items: Vec::new(),
        notes: design.notes.clone(),
    };
    match design.kind {
        ExperimentKind::Distance => analyze_distance(observations, &mut out)?,
        ExperimentKind::Anchoring => analyze_anchoring(observations, opts, &mut out),
        ExperimentKind::Snarc => analyze_snarc(observations, opts, &mut out),
        ExperimentKind::Priming | ExperimentKind::SizeCongruity => analyze_paired(battery, observations, opts, &mut out),
    }
    if out.expected_df.is_none() {
        out.expected_df = design.expected_df(out.n_items).filter(|_| out.n_items > 0);
    }
    Ok(out)
}

/// Priming and size congruity: average over spacing per (item, condition,
/// variant), omit items at ceiling or floor in both conditions, then test
/// the retained values.
fn analyze_paired(battery: &Battery, observations: &[Observation], opts: &AnalysisOptions, out: &mut ExperimentAnalysis) {
    let (base, other) = (&out.conditions[0].clone(), &out.conditions[1].clone());
    let catch: Vec<f64> = observations.iter().filter(|o| o.condition == COND_CATCH).filter_map(|o| o.value).collect();
    if battery.instances.iter().any(|i| i.condition == COND_CATCH) {
        let mean = stats::mean(&catch);
        out.catch = Some(CatchSummary { n: catch.len(), mean, valid: mean.is_some_and(|m| m > opts.catch_threshold) });
    }

    let main: Vec<&Observation> = observations.iter().filter(|o| o.condition != COND_CATCH).collect();
    let averaged = average_over_spacing(main.iter().copied());

    let mut queried: Vec<u32> =
        battery.instances.iter().filter(|i| i.condition != COND_CATCH).map(|i| i.spacing_level).collect();
    queried.sort_unstable();
    queried.dedup();
    let levels_queried = queried.len();
    let mut levels_seen: BTreeMap<(&str, &str, &str), usize> = BTreeMap::new();
    for o in main.iter().filter(|o| o.relevant) {
        *levels_seen.entry((&o.item_key, &o.condition, &o.variant)).or_insert(0) += 1;
    }
    let mut partial: BTreeMap<&str, bool> = BTreeMap::new();
    for ((item, _, _), n) in &levels_seen {
        *partial.entry(item).or_insert(false) |= *n < levels_queried;
    }
    out.partial_items = partial.values().filter(|p| **p).count();

    let mut per_item: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for ((item, cond, _), v) in &averaged {
        per_item.entry(item).or_default().entry(cond).or_default().push(*v);
    }
    out.n_items_total = per_item.len();

    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (item, conds) in &per_item {
        let means: BTreeMap<String, f64> =
            conds.iter().filter_map(|(c, vs)| stats::mean(vs).map(|m| ((*c).to_string(), m))).collect();
        let omitted = match (means.get(base), means.get(other)) {
            (Some(ma), Some(mb)) => opts.policy.omit_reason(*ma, *mb).map(str::to_string),
            _ => Some("missing condition".to_string()),
        };
        if omitted.is_none() {
            a.extend(conds.get(base.as_str()).into_iter().flatten());
            b.extend(conds.get(other.as_str()).into_iter().flatten());
            out.n_items += 1;
        }
        out.items.push(ItemSummary { item: (*item).to_string(), retained: omitted.is_none(), omitted, means, levels: Vec::new() });
    }
    out.test = if out.n_items == 0 {
        EffectTest::Skipped { reason: "no items survived filtering".into() }
    } else {
        two_sample(&a, &b, opts.test)
    };
}

/// SNARC: per digit, keep the spacing levels passing the inclusion rule,
/// average each (digit, variant) over them, and test incongruent against
/// congruent.
fn analyze_snarc(observations: &[Observation], opts: &AnalysisOptions, out: &mut ExperimentAnalysis) {
    let (base, other) = (out.conditions[0].clone(), out.conditions[1].clone());
    let mut level_vals: BTreeMap<(&str, u32, &str), Vec<f64>> = BTreeMap::new();
    for o in observations {
        if let Some(v) = o.value {
            level_vals.entry((&o.item_key, o.spacing_level, &o.condition)).or_default().push(v);
        }
    }
    let mut digits: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    let mut all_levels: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for &(item, level, _) in level_vals.keys() {
        let e = all_levels.entry(item).or_default();
        if !e.contains(&level) {
            e.push(level);
        }
    }
    for (item, levels) in &all_levels {
        let included: Vec<u32> = levels
            .iter()
            .copied()
            .filter(|l| {
                let m = |c: &str| level_vals.get(&(*item, *l, c)).and_then(|v| stats::mean(v));
                match (m(&other), m(&base)) {
                    (Some(cong), Some(incong)) => opts.policy.include_spacing_level(cong, incong),
                    _ => false,
                }
            })
            .collect();
        digits.insert(item, included);
    }
    out.n_items_total = digits.len();

    let included_obs = observations
        .iter()
        .filter(|o| digits.get(o.item_key.as_str()).is_some_and(|ls| ls.contains(&o.spacing_level)));
    let averaged = average_over_spacing(included_obs);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut per_digit: BTreeMap<&str, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for ((item, cond, _), v) in &averaged {
        per_digit.entry(item.as_str()).or_default().entry(cond.clone()).or_default().push(*v);
        if *cond == base {
            a.push(*v);
        } else if *cond == other {
            b.push(*v);
        }
    }
    for (item, levels) in &digits {
        let means: BTreeMap<String, f64> = per_digit
            .get(item)
            .map(|m| m.iter().filter_map(|(c, vs)| stats::mean(vs).map(|x| (c.clone(), x))).collect())
            .unwrap_or_default();
        let retained = !levels.is_empty();
        if retained {
            out.n_items += 1;
        }
        out.items.push(ItemSummary {
            item: (*item).to_string(),
            means,
            retained,
            omitted: (!retained).then(|| "no spacing level passed the inclusion rule".to_string()),
            levels: levels.clone(),
        });
    }
    out.test = if out.n_items == 0 {
        EffectTest::Skipped { reason: "no digit had an included spacing level".into() }
    } else {
        two_sample(&a, &b, opts.test)
    };
}

/// Anchoring: every relevant estimate enters, small anchors against large.
fn analyze_anchoring(observations: &[Observation], opts: &AnalysisOptions, out: &mut ExperimentAnalysis) {
    let (base, other) = (&out.conditions[0], &out.conditions[1]);
    let pick = |c: &str| observations.iter().filter(|o| o.condition == c).filter_map(|o| o.value).collect::<Vec<_>>();
    let (a, b) = (pick(base), pick(other));
    let mut per_len: BTreeMap<&str, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for o in observations {
        if let Some(v) = o.value {
            per_len.entry(&o.item_key).or_default().entry(o.condition.clone()).or_default().push(v);
        }
    }
    for (item, conds) in &per_len {
        out.items.push(ItemSummary {
            item: (*item).to_string(),
            means: conds.iter().filter_map(|(c, v)| stats::mean(v).map(|m| (c.clone(), m))).collect(),
            retained: true,
            omitted: None,
            levels: Vec::new(),
        });
    }
    out.n_items_total = per_len.len();
    out.n_items = per_len.len();
    out.expected_df = (a.len() + b.len()).checked_sub(2).filter(|_| out.not_relevant == 0 && !a.is_empty());
    out.test = two_sample(&a, &b, opts.test);
}

/// Distance: one-way ANOVA of instance confidences across distance buckets.
fn analyze_distance(observations: &[Observation], out: &mut ExperimentAnalysis) -> Result<(), AnalysisError> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut items: BTreeMap<&str, (u32, Vec<f64>)> = BTreeMap::new();
    for o in observations {
        if let (Some(v), Some(d)) = (o.value, o.distance) {
            groups.entry(d).or_default().push(v);
            items.entry(&o.item_key).or_insert((d, Vec::new())).1.push(v);
        }
    }
    out.n_items_total = items.len();
    out.n_items = items.len();
    for (item, (d, vs)) in &items {
        let mut means = BTreeMap::new();
        if let Some(m) = stats::mean(vs) {
            means.insert(format!("distance-{d}"), m);
        }
        out.items.push(ItemSummary { item: (*item).to_string(), means, retained: true, omitted: None, levels: Vec::new() });
    }
    let buckets = groups
        .iter()
        .map(|(d, vs)| bucket_summary(*d, vs))
        .collect::<Result<Vec<_>, _>>()?;
    let vals: Vec<&Vec<f64>> = groups.values().collect();
    out.test = match one_way_anova(&vals) {
        Ok(result) => EffectTest::Anova { result, buckets },
        Err(e) => EffectTest::Skipped { reason: e.to_string() },
    };
    Ok(())
}

pub fn bucket_summary(bucket: u32, values: &[f64]) -> Result<BucketSummary, AnalysisError> {
    let n = values.len();
    let mean = stats::mean(values).unwrap_or(f64::NAN);
    let half_width = if n >= 2 {
        let se = stats::sample_std(values).unwrap_or(0.0) / (n as f64).sqrt();
        t_quantile(0.975, (n - 1) as f64)? * se
    } else {
        0.0
    };
    Ok(BucketSummary { bucket, n, mean, half_width })
}

/// Scores dispatched instances against their completions. `None` marks a
/// query that failed and is counted as not relevant.
pub fn score_all(instances: &[PromptInstance], completions: &[Option<Vec<TokenDistribution>>]) -> Result<Vec<Observation>, AnalysisError> {
    if instances.len() != completions.len() {
        return Err(AnalysisError::Misaligned { observations: completions.len(), instances: instances.len() });
    }
    Ok(instances
        .iter()
        .zip(completions)
        .map(|(i, c)| match c {
            Some(d) => score(i, d),
            None => Observation::missing(i),
        })
        .collect())
}

/// Writes observations as CSV: experiment, item, condition, variant,
/// spacing, value, relevant.
pub fn write_observations_csv<W: io::Write>(w: W, observations: &[Observation]) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["experiment", "item", "condition", "variant", "spacing", "value", "relevant"])?;
    for o in observations {
        out.write_record([
            o.experiment_id.as_str(),
            o.item_key.as_str(),
            o.condition.as_str(),
            o.variant.as_str(),
            &o.spacing_level.to_string(),
            &o.value.map(|v| v.to_string()).unwrap_or_default(),
            if o.relevant { "true" } else { "false" },
        ])?;
    }
    out.flush()?;
    Ok(())
}
