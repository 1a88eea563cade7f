//! Deterministic rule-based stand-in for a language model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{format_significant, Backend, BackendKind, LabelSet, Prompt, DEFAULT_TERMS};
use crate::error::Result;
use crate::features::FeatureVector;

const WINNER_SCORE: f64 = 0.8;

/// Calibration constants for the rules; not clinical thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockThresholds {
    /// A source counts as periodic when its periodicity strength exceeds this.
    pub periodic_strength: f64,
    pub fibrillation_rr_cv: f64,
    pub rhythm_disorder_rr_cv: f64,
    pub wheeze_burst_rate_per_s: f64,
    pub wheeze_max_freq_hz: f64,
    pub obstruction_max_centroid_hz: f64,
    pub obstruction_min_rms: f64,
}

impl Default for MockThresholds {
    fn default() -> Self {
        Self {
            periodic_strength: 0.3,
            fibrillation_rr_cv: 0.15,
            rhythm_disorder_rr_cv: 0.05,
            wheeze_burst_rate_per_s: 0.5,
            wheeze_max_freq_hz: 300.0,
            obstruction_max_centroid_hz: 200.0,
            obstruction_min_rms: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockVerdict {
    pub term: &'static str,
    /// Over the default term set: 0.8 to `term`, the rest shared equally.
    pub scores: BTreeMap<String, f64>,
}

fn spread(winner: &str, terms: &[&str]) -> BTreeMap<String, f64> {
    let others = terms.len().saturating_sub(1).max(1) as f64;
    terms
        .iter()
        .map(|t| {
            let p = if *t == winner { WINNER_SCORE } else { (1.0 - WINNER_SCORE) / others };
            (t.to_string(), p)
        })
        .collect()
}

/// Ordered rules, first match wins:
/// 1. periodic, rr_cv > 0.15 → atrial fibrillation
/// 2. periodic, 0.05 < rr_cv ≤ 0.15 → rhythm disorder
/// 3. aperiodic, burst rate > 0.5/s, dominant frequency < 300 Hz → wheezing
/// 4. aperiodic, centroid < 200 Hz, loud → airway obstruction
/// 5. normal
pub fn mock_rules(f: &FeatureVector, t: &MockThresholds) -> MockVerdict {
    let periodic = f.envelope_period_s > 0.0 && f.periodicity_strength > t.periodic_strength;
    let term = if periodic && f.rr_cv > t.fibrillation_rr_cv {
        "atrial fibrillation"
    } else if periodic && f.rr_cv > t.rhythm_disorder_rr_cv {
        "rhythm disorder"
    } else if !periodic && f.burst_rate_per_s > t.wheeze_burst_rate_per_s && f.dominant_freq_hz < t.wheeze_max_freq_hz {
        "wheezing"
    } else if !periodic
        && f.spectral_centroid_hz < t.obstruction_max_centroid_hz
        && f.rms_level >= t.obstruction_min_rms
    {
        "airway obstruction"
    } else {
        "normal"
    };
    MockVerdict { term, scores: spread(term, &DEFAULT_TERMS) }
}

/// Answers with a `term: score` list over its label set, or with the bare
/// rule term when the label set does not contain it.
#[derive(Debug, Clone)]
pub struct MockBackend {
    thresholds: MockThresholds,
    labels: LabelSet,
}

impl MockBackend {
    pub fn new(thresholds: MockThresholds, labels: LabelSet) -> Self {
        Self { thresholds, labels }
    }
}

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let verdict = mock_rules(&prompt.feature_snapshot, &self.thresholds);
        if !self.labels.contains(verdict.term) {
            return Ok(verdict.term.to_string());
        }
        let terms: Vec<&str> = self.labels.terms().iter().map(String::as_str).collect();
        let scores = spread(verdict.term, &terms);
        let items: Vec<String> = std::iter::once(verdict.term)
            .chain(terms.iter().copied().filter(|t| *t != verdict.term))
            .map(|t| format!("{t}: {}", format_significant(scores[t])))
            .collect();
        Ok(items.join(", "))
    }
}
