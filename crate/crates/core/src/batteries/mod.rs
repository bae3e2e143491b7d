//! Complete, condition-labelled prompt batteries for the five experiments.

mod anchoring;
mod distance;
mod priming;
mod snarc;

pub use anchoring::{build_anchoring, AnchoringParams};
pub use distance::{build_distance, build_size_congruity, SizeParams};
pub use priming::{build_priming, PrimingParams, PrimingVariation};
pub use snarc::{build_snarc, SnarcAxis, SnarcParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::{PromptError, PromptInstance};
use crate::stimuli::StimuliError;

pub const YES: &str = "yes";
pub const NO: &str = "no";

pub const COND_RELATED: &str = "related";
pub const COND_UNRELATED: &str = "unrelated";
pub const COND_CATCH: &str = "catch";
pub const COND_CONGRUENT: &str = "congruent";
pub const COND_INCONGRUENT: &str = "incongruent";

#[derive(Debug, Error)]
pub enum BatteryError {
    #[error("unknown stimulus set {0:?}")]
    UnknownSet(String),
    #[error("set {0:?} has variable-length names; letter spacing would confound the comparison")]
    SpacedVariableLength(String),
    #[error("set {set:?} cannot be used for {task}")]
    WrongSetKind { set: String, task: &'static str },
    #[error("invalid experiment number {0}")]
    InvalidExperiment(u8),
    #[error("priming battery needs at least one target triple")]
    EmptyTriples,
    #[error("invalid spacing schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Stimuli(#[from] StimuliError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Priming,
    Distance,
    Snarc,
    SizeCongruity,
    Anchoring,
}

/// How instances are grouped for the statistical test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    PairedByItem,
    DistanceBucket,
    AnchorCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub kind: ExperimentKind,
    /// Short row label for tables, e.g. `4-sentence` or `1 horizontal`.
    pub label: String,
    /// The condition set. For two-condition designs the first entry is the
    /// baseline column (unrelated, incongruent, small anchor).
    pub conditions: Vec<String>,
    pub grouping: Grouping,
    /// Values each analysis unit contributes per condition after averaging;
    /// drives the degrees-of-freedom audit.
    pub values_per_item: usize,
    pub expected_instances: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<SpacingSchedule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Design {
    /// Degrees of freedom the pooled t-test should report for `n_items`
    /// retained units, if no query was dropped as not relevant.
    pub fn expected_df(&self, n_items: usize) -> Option<usize> {
        match self.grouping {
            Grouping::DistanceBucket => None,
            _ => (2 * self.values_per_item * n_items).checked_sub(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub experiment_id: String,
    pub instances: Vec<PromptInstance>,
    pub design: Design,
}

impl Battery {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Instance counts per condition label.
    pub fn condition_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.condition.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn spacing_levels(&self) -> Vec<u32> {
        let mut levels: Vec<u32> = self.instances.iter().map(|i| i.spacing_level).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }
}

/// Escalating letter spacing with an early stop per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingSchedule {
    pub levels: Vec<u32>,
    #[serde(default = "default_stop_threshold")]
    pub stop_threshold: f64,
}

fn default_stop_threshold() -> f64 {
    0.6
}

impl Default for SpacingSchedule {
    fn default() -> Self {
        Self { levels: (1..=10).map(|k| 2 * k).collect(), stop_threshold: default_stop_threshold() }
    }
}

impl SpacingSchedule {
    pub fn validate(&self, range: (u32, u32)) -> Result<(), BatteryError> {
        if self.levels.is_empty() {
            return Err(BatteryError::InvalidSchedule("no levels".into()));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(BatteryError::InvalidSchedule(format!("levels {:?} not strictly increasing", self.levels)));
        }
        if let Some(l) = self.levels.iter().find(|l| **l < range.0 || **l > range.1) {
            return Err(BatteryError::InvalidSchedule(format!(
                "level {l} outside [{}, {}]",
                range.0, range.1
            )));
        }
        if !(0.0..=1.0).contains(&self.stop_threshold) {
            return Err(BatteryError::InvalidSchedule(format!("stop threshold {} outside [0, 1]", self.stop_threshold)));
        }
        Ok(())
    }
}

/// Outcome of the per-item stop rule after a spacing level has been scored.
#[derive(Debug, Clone, PartialEq)]
pub enum StopStep {
    Next { level: u32, instances: Vec<PromptInstance> },
    Done,
}

/// Instances at the battery's first spacing level; always dispatched.
pub fn first_level(battery: &Battery) -> Vec<PromptInstance> {
    match battery.spacing_levels().first() {
        Some(&level) => battery.instances.iter().filter(|i| i.spacing_level == level).cloned().collect(),
        None => Vec::new(),
    }
}

/// Given the scored results of one spacing level, emits the next level's
/// instances for items where at least one condition's mean confidence
/// reached the schedule's threshold. Items with no scored value in a
/// condition count as below threshold for it.
pub fn apply_stop_rule(battery: &Battery, scored: &[(&PromptInstance, Option<f64>)]) -> StopStep {
    let threshold = battery.design.spacing.as_ref().map_or(default_stop_threshold(), |s| s.stop_threshold);
    let Some(current) = scored.iter().map(|(i, _)| i.spacing_level).max() else {
        return StopStep::Done;
    };
    let levels = battery.spacing_levels();
    let Some(&next) = levels.iter().find(|l| **l > current) else {
        return StopStep::Done;
    };

    let mut sums: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for (inst, conf) in scored.iter().filter(|(i, _)| i.spacing_level == current) {
        if let Some(c) = conf {
            let e = sums.entry((inst.item_key.as_str(), inst.condition.as_str())).or_insert((0.0, 0));
            e.0 += c;
            e.1 += 1;
        }
    }
    let mut keep: Vec<&str> = Vec::new();
    for ((item, _), (sum, n)) in &sums {
        if sum / *n as f64 >= threshold && !keep.contains(item) {
            keep.push(item);
        }
    }

    let instances: Vec<PromptInstance> = battery
        .instances
        .iter()
        .filter(|i| i.spacing_level == next && keep.contains(&i.item_key.as_str()))
        .cloned()
        .collect();
    if instances.is_empty() {
        StopStep::Done
    } else {
        StopStep::Next { level: next, instances }
    }
}

pub(crate) fn answers(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| (*s).to_string()).collect()
}
