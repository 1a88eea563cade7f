//! Feature-to-text prompt rendering and mapping of backend replies onto a
//! closed set of diagnostic terms.
//!
//! A [`Backend`] turns prompt text into a free-text reply. The reply is
//! either a `term: score` list (soft prediction) or prose that is scanned for
//! the longest label-set term (discrete prediction). Anything else becomes
//! [`UNRECOGNIZED`].

mod mock;
mod remote;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::separation::SourceLabel;

pub use mock::{mock_rules, MockBackend, MockThresholds, MockVerdict};
pub use remote::{RemoteBackend, RemoteConfig, TOKEN_ENV_VAR};

pub const PROMPT_TEMPLATE_VERSION: &str = "biosep-prompt-v1";
pub const UNRECOGNIZED: &str = "unrecognized";

pub const DEFAULT_TERMS: [&str; 5] =
    ["wheezing", "airway obstruction", "atrial fibrillation", "rhythm disorder", "normal"];

/// Ordered, duplicate-free set of lowercase diagnostic terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    terms: Vec<String>,
}

impl LabelSet {
    /// Terms are trimmed and lowercased; empty or duplicate terms are rejected.
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for t in terms {
            let t = t.as_ref().trim().to_lowercase();
            if t.is_empty() {
                return Err(Error::InvalidConfig("empty label term".into()));
            }
            if t == UNRECOGNIZED {
                return Err(Error::InvalidConfig(format!("'{UNRECOGNIZED}' is reserved")));
            }
            if out.contains(&t) {
                return Err(Error::InvalidConfig(format!("duplicate label term '{t}'")));
            }
            out.push(t);
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("label set is empty".into()));
        }
        Ok(Self { terms: out })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.iter().any(|t| t == term)
    }

    fn position(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self::new(DEFAULT_TERMS).expect("default terms are valid")
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.terms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub feature_snapshot: FeatureVector,
    pub template_version: String,
}

/// Formats with four significant digits, e.g. `0.374 -> 0.3740`, `400 -> 400.0`.
pub fn format_significant(x: f64) -> String {
    const DIGITS: i32 = 4;
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", (DIGITS - 1) as usize, if x.is_finite() { 0.0 } else { x });
    }
    let magnitude = x.abs().log10().floor() as i32 + 1;
    let decimals = DIGITS - magnitude;
    if decimals >= 0 {
        let s = format!("{:.*}", decimals as usize, x);
        // rounding can carry into a new digit (9.9996 -> 10.000)
        let rounded: f64 = s.parse().unwrap_or(x);
        let carried = rounded.abs().log10().floor() as i32 + 1;
        if carried > magnitude && decimals > 0 {
            return format!("{:.*}", (decimals - 1) as usize, x);
        }
        s
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (x / unit).round() * unit)
    }
}

/// Renders the feature-to-text template. Pure: identical inputs give
/// byte-identical text.
pub fn format_prompt(features: &FeatureVector, labels: &LabelSet) -> Prompt {
    let mut text = String::new();
    let _ = writeln!(text, "You are assisting with auscultation of a separated body-sound source.");
    let _ = writeln!(text, "template={PROMPT_TEMPLATE_VERSION}");
    let _ = writeln!(text, "source={}", features.source_label);
    let _ = writeln!(text, "Features:");
    for (name, value) in FeatureVector::NUMERIC_NAMES.iter().zip(features.numeric()) {
        let _ = writeln!(text, "{name}={}", format_significant(value));
    }
    let _ = writeln!(text, "rr_interval_count={}", features.rr_intervals_s.len());
    let _ = writeln!(
        text,
        "Notes: envelope_period_s=0 means no rhythm was detected. rr_cv is the population \
         standard deviation of the beat-to-beat intervals divided by their mean. \
         burst_rate_per_s counts envelope peaks per second."
    );
    let _ = writeln!(text, "Answer with exactly one term from this list: {}.", labels.terms().join(", "));
    let _ = write!(
        text,
        "Alternatively answer with a comma-separated list of term: probability pairs using only those terms."
    );
    Prompt { text, feature_snapshot: features.clone(), template_version: PROMPT_TEMPLATE_VERSION.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

/// Anything that can answer a prompt with text.
pub trait Backend: Sync {
    fn kind(&self) -> BackendKind;

    fn complete(&self, prompt: &Prompt) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub source: SourceLabel,
    pub prediction: String,
    pub scores: Option<BTreeMap<String, f64>>,
    pub backend: BackendKind,
    pub prompt_template_version: String,
    pub prompt: String,
    pub raw_response: String,
}

/// Parses a reply of the form `term: p, term: p, ...` (also `=` and `;` or
/// newline separated). Every term must belong to `labels`, appear once, and
/// the probabilities must lie in [0, 1] and sum to at most 1.
pub fn parse_scores(reply: &str, labels: &LabelSet) -> Option<BTreeMap<String, f64>> {
    let mut scores = BTreeMap::new();
    for item in reply.split([',', ';', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
        let item = item.trim_end_matches('.');
        let (term, value) = item.split_once(':').or_else(|| item.split_once('='))?;
        let term = term.trim().to_lowercase();
        let value: f64 = value.trim().parse().ok()?;
        if !labels.contains(&term) || !(0.0..=1.0).contains(&value) {
            return None;
        }
        if scores.insert(term, value).is_some() {
            return None;
        }
    }
    let total: f64 = scores.values().sum();
    (!scores.is_empty() && total <= 1.0 + 1e-9).then_some(scores)
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric())
}

/// Longest label term occurring as a whole word (case-insensitive); ties go
/// to the earliest occurrence.
pub fn longest_match(reply: &str, labels: &LabelSet) -> Option<String> {
    let hay = reply.to_lowercase();
    let mut best: Option<(&str, usize)> = None;
    for term in labels.terms() {
        let found = hay.match_indices(term.as_str()).find(|(at, _)| {
            !is_word_char(hay[..*at].chars().next_back()) && !is_word_char(hay[at + term.len()..].chars().next())
        });
        if let Some((at, _)) = found {
            let better = match best {
                None => true,
                Some((b, bat)) => term.len() > b.len() || (term.len() == b.len() && at < bat),
            };
            if better {
                best = Some((term, at));
            }
        }
    }
    best.map(|(t, _)| t.to_string())
}

/// Maps a reply onto `labels ∪ {unrecognized}` plus optional scores.
pub fn parse_reply(reply: &str, labels: &LabelSet) -> (String, Option<BTreeMap<String, f64>>) {
    if let Some(scores) = parse_scores(reply, labels) {
        let mut best: Option<(&String, f64)> = None;
        for (term, &p) in &scores {
            let better = match best {
                None => true,
                Some((b, bp)) => p > bp || (p == bp && labels.position(term) < labels.position(b)),
            };
            if better {
                best = Some((term, p));
            }
        }
        let prediction = best.map(|(t, _)| t.clone()).unwrap_or_else(|| UNRECOGNIZED.into());
        return (prediction, Some(scores));
    }
    let prediction = longest_match(reply, labels).unwrap_or_else(|| UNRECOGNIZED.to_string());
    (prediction, None)
}

/// Sends the prompt to `backend` and maps the reply onto `labels`. Only
/// transport failures are errors; unusable replies yield [`UNRECOGNIZED`].
pub fn interpret(prompt: &Prompt, backend: &dyn Backend, labels: &LabelSet) -> Result<DiagnosticReport> {
    let raw = backend.complete(prompt)?;
    let (prediction, scores) = parse_reply(&raw, labels);
    Ok(DiagnosticReport {
        source: prompt.feature_snapshot.source_label,
        prediction,
        scores,
        backend: backend.kind(),
        prompt_template_version: prompt.template_version.clone(),
        prompt: prompt.text.clone(),
        raw_response: raw,
    })
}

/// Interprets several prompts with at most `max_inflight` requests at once;
/// results keep the input order.
pub fn interpret_all(
    prompts: &[Prompt],
    backend: &dyn Backend,
    labels: &LabelSet,
    max_inflight: usize,
) -> Vec<Result<DiagnosticReport>> {
    let width = max_inflight.max(1);
    let mut out = Vec::with_capacity(prompts.len());
    for chunk in prompts.chunks(width) {
        let results: Vec<Result<DiagnosticReport>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|p| s.spawn(move || interpret(p, backend, labels))).collect();
            handles.into_iter().map(|h| h.join().expect("interpret thread panicked")).collect()
        });
        out.extend(results);
    }
    out
}
