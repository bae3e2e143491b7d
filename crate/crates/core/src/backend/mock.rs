//! Deterministic offline backend with planted effects.
//!
//! For a classification prompt the probability of the correct answer is
//!
//! ```text
//! P = clamp(mu_item + delta * sign + slope * distance - decay * spacing + sigma * eta(prompt), lo, hi)
//! ```
//!
//! where `sign` is +1 for related/congruent prompts, -1 for
//! unrelated/incongruent ones and 0 otherwise, and `eta` is a standard
//! normal draw derived from a digest of the seed and prompt. Estimate prompts
//! answer `round(true_length + bias * sign + estimate_noise * eta)`, with
//! `sign` +1 for large anchors and -1 for small ones.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prompt_hash, BackendError, DecodeParams, TokenDistribution};
use crate::batteries::{COND_CATCH, COND_CONGRUENT, COND_INCONGRUENT, COND_RELATED, COND_UNRELATED};
use crate::promptgen::{AnswerRule, PromptInstance};
use crate::stimuli::AnchorCategory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Base probability of the correct answer.
    pub base: f64,
    /// Planted condition shift.
    #[serde(default)]
    pub shift: f64,
    /// Standard deviation of the per-prompt noise.
    #[serde(default)]
    pub noise: f64,
    /// Added per unit of comparison distance.
    #[serde(default)]
    pub distance_slope: f64,
    /// Subtracted per space inserted between letters.
    #[serde(default)]
    pub spacing_decay: f64,
    /// Probability of the correct answer for catch trials; `base` if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catch_base: Option<f64>,
    /// Per-item overrides of `base`, keyed by item key.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub item_base: BTreeMap<String, f64>,
    /// Shift of length estimates toward the anchor side.
    #[serde(default)]
    pub anchor_bias: f64,
    #[serde(default)]
    pub estimate_noise: f64,
    #[serde(default = "default_clamp")]
    pub clamp: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn default_clamp() -> (f64, f64) {
    (0.01, 0.99)
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            base: 0.8,
            shift: 0.0,
            noise: 0.0,
            distance_slope: 0.0,
            spacing_decay: 0.0,
            catch_base: None,
            item_base: BTreeMap::new(),
            anchor_bias: 0.0,
            estimate_noise: 0.0,
            clamp: default_clamp(),
            seed: 0,
        }
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        let (lo, hi) = self.clamp;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(BackendError::InvalidConfig(format!("mock clamp ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1")));
        }
        if self.noise < 0.0 || self.estimate_noise < 0.0 {
            return Err(BackendError::InvalidConfig("mock noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Short digest identifying this plant; part of the mock's model name so
    /// that cached mock completions never leak across plants.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("plant serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

/// What the mock needs to know about a prompt to answer it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cue {
    pub rule: AnswerRule,
    pub sign: f64,
    pub catch: bool,
    pub item_key: String,
    pub spacing_level: u32,
    pub distance: Option<u32>,
    pub correct: Vec<String>,
    pub relevant: Vec<String>,
}

impl Cue {
    pub fn from_instance(inst: &PromptInstance) -> Self {
        let c = inst.condition.as_str();
        let sign = if c == COND_RELATED || c == COND_CONGRUENT || c == AnchorCategory::Large.label() {
            1.0
        } else if c == COND_UNRELATED || c == COND_INCONGRUENT || c == AnchorCategory::Small.label() {
            -1.0
        } else {
            0.0
        };
        Self {
            rule: inst.answer_rule,
            sign,
            catch: c == COND_CATCH,
            item_key: inst.item_key.clone(),
            spacing_level: inst.spacing_level,
            distance: inst.distance,
            correct: inst.correct_answers.clone(),
            relevant: inst.relevant_answers.clone(),
        }
    }
}

/// Rendered prompt text to cue.
#[derive(Debug, Clone, Default)]
pub struct AnswerKey(HashMap<String, Cue>);

impl AnswerKey {
    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a PromptInstance>) -> Self {
        Self(instances.into_iter().map(|i| (i.rendered_text.clone(), Cue::from_instance(i))).collect())
    }

    pub fn extend<'a>(&mut self, instances: impl IntoIterator<Item = &'a PromptInstance>) {
        self.0.extend(instances.into_iter().map(|i| (i.rendered_text.clone(), Cue::from_instance(i))));
    }

    pub fn get(&self, prompt: &str) -> Option<&Cue> {
        self.0.get(prompt)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub struct MockBackend {
    plant: PlantSpec,
    key: AnswerKey,
    model: String,
}

impl MockBackend {
    pub fn new(plant: PlantSpec, key: AnswerKey) -> Result<Self, BackendError> {
        plant.validate()?;
        let model = format!("mock-{}", plant.digest());
        Ok(Self { plant, key, model })
    }

    pub fn model_name(&self) -> &str {
        &self.model
    }

    pub fn plant(&self) -> &PlantSpec {
        &self.plant
    }

    pub fn complete(&self, prompt: &str, params: DecodeParams) -> Result<Vec<TokenDistribution>, BackendError> {
        params.validate()?;
        let cue = self.key.get(prompt).ok_or_else(|| BackendError::UnknownPrompt(truncate(prompt)))?;
        mock_complete(prompt, cue, &self.plant, params.positions as usize)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(60).collect()
}

/// Standard normal draw from a digest of (seed, stream, prompt), via
/// Box-Muller.
pub fn eta(seed: u64, stream: u8, prompt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([stream]);
    h.update(prompt.as_bytes());
    let d = h.finalize();
    let word = |i: usize| u64::from_le_bytes(d[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
    // 53-bit uniforms; u1 in (0, 1] keeps the log finite
    let u1 = ((word(0) >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (word(1) >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Planted probability of the correct answer.
pub fn planted_probability(prompt: &str, cue: &Cue, plant: &PlantSpec) -> f64 {
    let base = if cue.catch {
        plant.catch_base.unwrap_or(plant.base)
    } else {
        plant.item_base.get(&cue.item_key).copied().unwrap_or(plant.base)
    };
    let p = base
        + plant.shift * cue.sign
        + plant.distance_slope * f64::from(cue.distance.unwrap_or(0))
        - plant.spacing_decay * f64::from(cue.spacing_level)
        + plant.noise * eta(plant.seed, 0, prompt);
    p.clamp(plant.clamp.0, plant.clamp.1)
}

/// Planted length estimate for an estimate prompt.
pub fn planted_estimate(prompt: &str, cue: &Cue, plant: &PlantSpec) -> Result<u64, BackendError> {
    let truth: f64 = cue
        .correct
        .first()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| BackendError::InvalidConfig(format!("estimate prompt without a numeric answer: {:?}", cue.correct)))?;
    let v = truth + plant.anchor_bias * cue.sign + plant.estimate_noise * eta(plant.seed, 1, prompt);
    Ok(v.round().max(0.0) as u64)
}

pub fn mock_complete(
    prompt: &str,
    cue: &Cue,
    plant: &PlantSpec,
    positions: usize,
) -> Result<Vec<TokenDistribution>, BackendError> {
    let hash = prompt_hash(prompt);
    let single = |tok: &str| TokenDistribution::new(vec![(tok.to_string(), 0.0)], hash.clone());
    let mut out = Vec::with_capacity(positions);
    match cue.rule {
        AnswerRule::Classify => {
            let correct = cue
                .correct
                .first()
                .ok_or_else(|| BackendError::InvalidConfig("classification prompt without a correct answer".into()))?;
            let other = cue.relevant.iter().find(|r| !cue.correct.contains(r)).map_or("the", String::as_str);
            let p = planted_probability(prompt, cue, plant);
            let mut entries = vec![(format!(" {correct}"), p.ln())];
            if p < 1.0 {
                entries.push((format!(" {other}"), (1.0 - p).ln()));
            }
            out.push(TokenDistribution::new(entries, hash.clone())?);
            while out.len() < positions {
                out.push(single("\n")?);
            }
        }
        AnswerRule::Estimate => {
            let digits = planted_estimate(prompt, cue, plant)?.to_string();
            let mut tokens: Vec<String> = digits.chars().map(|c| c.to_string()).collect();
            tokens[0] = format!(" {}", tokens[0]);
            tokens.push("\n".into());
            tokens.resize(positions.max(tokens.len()), "\n".into());
            for t in tokens.iter().take(positions) {
                out.push(single(t)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cue(sign: f64) -> Cue {
        Cue {
            rule: AnswerRule::Classify,
            sign,
            catch: false,
            item_key: "nurse".into(),
            spacing_level: 5,
            distance: None,
            correct: vec!["yes".into()],
            relevant: vec!["yes".into(), "no".into()],
        }
    }

    #[test]
    fn null_model_returns_base() {
        let plant = PlantSpec { base: 0.7, ..Default::default() };
        for sign in [-1.0, 0.0, 1.0] {
            assert_eq!(planted_probability("p", &cue(sign), &plant), 0.7);
        }
    }

    #[test]
    fn planted_shift() {
        let plant = PlantSpec { base: 0.7, shift: 0.1, ..Default::default() };
        assert!((planted_probability("p", &cue(1.0), &plant) - 0.8).abs() < 1e-12);
        assert!((planted_probability("p", &cue(-1.0), &plant) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn clamped() {
        let plant = PlantSpec { base: 0.98, shift: 0.1, ..Default::default() };
        assert_eq!(planted_probability("p", &cue(1.0), &plant), 0.99);
        let plant = PlantSpec { base: 0.995, clamp: (0.01, 0.999), ..Default::default() };
        assert_eq!(planted_probability("p", &cue(0.0), &plant), 0.995);
    }

    #[test]
    fn deterministic_output() {
        let plant = PlantSpec { base: 0.7, noise: 0.1, seed: 3, ..Default::default() };
        let a = mock_complete("prompt", &cue(1.0), &plant, 1).unwrap();
        let b = mock_complete("prompt", &cue(1.0), &plant, 1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = mock_complete("prompt", &cue(1.0), &PlantSpec { seed: 4, ..plant }, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn yes_no_distribution_shape() {
        let plant = PlantSpec { base: 0.7, ..Default::default() };
        let d = mock_complete("prompt", &cue(0.0), &plant, 1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].entries[0].0, " yes");
        assert_eq!(d[0].entries[1].0, " no");
        let total: f64 = d[0].probabilities().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_tokens() {
        let c = Cue {
            rule: AnswerRule::Estimate,
            sign: 1.0,
            correct: vec!["45".into()],
            relevant: vec![],
            ..cue(1.0)
        };
        let plant = PlantSpec { anchor_bias: 2.0, ..Default::default() };
        let d = mock_complete("p", &c, &plant, 3).unwrap();
        let toks: Vec<&str> = d.iter().map(|x| x.argmax().unwrap()).collect();
        assert_eq!(toks, vec![" 4", "7", "\n"]);
    }

    #[test]
    fn eta_is_roughly_standard_normal() {
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|i| eta(9, 0, &format!("prompt {i}"))).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard errors: 1/sqrt(n) = 0.007 for the mean, about 0.01 for the variance
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn model_name_tracks_spec() {
        let a = MockBackend::new(PlantSpec::default(), AnswerKey::default()).unwrap();
        let b = MockBackend::new(PlantSpec { shift: 0.1, ..Default::default() }, AnswerKey::default()).unwrap();
        assert_ne!(a.model_name(), b.model_name());
        assert!(matches!(a.complete("x", DecodeParams::new(1)), Err(BackendError::UnknownPrompt(_))));
    }

    #[test]
    fn bad_clamp_rejected() {
        assert!(PlantSpec { clamp: (0.5, 0.4), ..Default::default() }.validate().is_err());
        assert!(PlantSpec { clamp: (0.0, 0.9), ..Default::default() }.validate().is_err());
    }
}
