//! Structured features of one separated source: spectral location, envelope
//! rhythm, beat-interval irregularity, burst rate and level.

use serde::{Deserialize, Serialize};

use crate::audio_io::Signal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::separation::SourceLabel;
use crate::timefreq::Spectrogram;

/// Bumped whenever the feature set or its meaning changes.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Number of numeric features in [`FeatureVector::numeric`].
pub const FEATURE_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub envelope_frame_ms: f64,
    /// Lag window searched for the envelope period, seconds.
    pub period_min_s: f64,
    pub period_max_s: f64,
    /// Autocorrelation peaks below this are reported as aperiodic.
    pub min_periodicity: f64,
    /// Peak threshold is `mean + peak_threshold_std * std` of the envelope.
    pub peak_threshold_std: f64,
    pub min_peak_distance_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            envelope_frame_ms: 10.0,
            period_min_s: 0.29,
            period_max_s: 2.0,
            min_periodicity: 0.3,
            peak_threshold_std: 1.0,
            min_peak_distance_s: 0.25,
        }
    }
}

/// Feature vector of one separated source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema_version: u32,
    pub source_label: SourceLabel,
    pub dominant_freq_hz: f64,
    pub spectral_centroid_hz: f64,
    /// 0 when the envelope is aperiodic.
    pub envelope_period_s: f64,
    pub periodicity_strength: f64,
    pub rr_intervals_s: Vec<f64>,
    pub rr_cv: f64,
    pub burst_rate_per_s: f64,
    pub rms_level: f64,
}

impl FeatureVector {
    pub fn rr_mean_s(&self) -> f64 {
        mean(&self.rr_intervals_s)
    }

    /// The fixed-dimension numeric view, in [`FeatureVector::NUMERIC_NAMES`] order.
    pub fn numeric(&self) -> [f64; FEATURE_DIM] {
        [
            self.dominant_freq_hz,
            self.spectral_centroid_hz,
            self.envelope_period_s,
            self.periodicity_strength,
            self.rr_mean_s(),
            self.rr_cv,
            self.burst_rate_per_s,
            self.rms_level,
        ]
    }

    pub const NUMERIC_NAMES: [&'static str; FEATURE_DIM] = [
        "dominant_freq_hz",
        "spectral_centroid_hz",
        "envelope_period_s",
        "periodicity_strength",
        "rr_mean_s",
        "rr_cv",
        "burst_rate_per_s",
        "rms_level",
    ];

    pub fn csv_header() -> String {
        "schema_version,source_label,dominant_freq_hz,spectral_centroid_hz,envelope_period_s,\
         periodicity_strength,rr_cv,burst_rate_per_s,rms_level,rr_intervals_s"
            .to_string()
    }

    /// One CSV row matching [`FeatureVector::csv_header`]; intervals are `;`-joined.
    pub fn csv_row(&self) -> String {
        let intervals: Vec<String> = self.rr_intervals_s.iter().map(|x| x.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.schema_version,
            self.source_label,
            self.dominant_freq_hz,
            self.spectral_centroid_hz,
            self.envelope_period_s,
            self.periodicity_strength,
            self.rr_cv,
            self.burst_rate_per_s,
            self.rms_level,
            intervals.join(";")
        )
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Coefficient of variation with population standard deviation; 0 for fewer
/// than two intervals.
pub fn rr_cv(intervals: &[f64]) -> f64 {
    if intervals.len() < 2 {
        return 0.0;
    }
    let m = mean(intervals);
    let spread =
        intervals.iter().cloned().fold(f64::MIN, f64::max) - intervals.iter().cloned().fold(f64::MAX, f64::min);
    if m <= 0.0 || spread == 0.0 {
        return 0.0;
    }
    population_std(intervals) / m
}

/// Magnitude-weighted mean frequency of the time-averaged spectrum.
pub fn spectral_centroid<T: Scalar>(spec: &Spectrogram<T>) -> Result<f64> {
    let avg = spec.time_average();
    let total: f64 = avg.iter().map(|e| e.as_f64()).sum();
    if total <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let weighted: f64 = avg.iter().enumerate().map(|(i, e)| spec.bin_freq_hz(i) * e.as_f64()).sum();
    Ok(weighted / total)
}

fn dominant_freq<T: Scalar>(spec: &Spectrogram<T>) -> f64 {
    let avg = spec.time_average();
    let mut best = 0;
    for (i, e) in avg.iter().enumerate() {
        if *e > avg[best] {
            best = i;
        }
    }
    if avg[best] > T::zero() {
        spec.bin_freq_hz(best)
    } else {
        0.0
    }
}

/// RMS over non-overlapping frames of `frame_ms`; the result is sampled at
/// `1000 / frame_ms` Hz. A trailing partial frame is kept.
pub fn envelope<T: Scalar>(signal: &Signal<T>, frame_ms: f64) -> Result<Signal<f64>> {
    if !(frame_ms > 0.0 && frame_ms.is_finite()) {
        return Err(Error::InvalidConfig(format!("frame_ms {frame_ms} must be positive")));
    }
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let frame = ((signal.sample_rate_hz() as f64 * frame_ms / 1000.0).round() as usize).max(1);
    let values = signal
        .samples()
        .chunks(frame)
        .map(|c| (c.iter().map(|s| s.as_f64().powi(2)).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let rate = (1000.0 / frame_ms).round().max(1.0) as u32;
    Signal::new(values, rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Periodicity {
    pub period_s: f64,
    pub strength: f64,
}

impl Periodicity {
    pub const APERIODIC: Periodicity = Periodicity { period_s: 0.0, strength: 0.0 };

    pub fn is_periodic(&self) -> bool {
        self.period_s > 0.0
    }
}

/// Highest local maximum of the normalized autocorrelation of the
/// mean-removed `values` within lags `[min_s, max_s]`, without thresholding.
/// Lags before the first local minimum are not considered.
/// `rate_hz` is the sampling rate of `values`.
pub fn autocorrelation_peak(values: &[f64], rate_hz: f64, min_s: f64, max_s: f64) -> Periodicity {
    let n = values.len();
    if n < 4 {
        return Periodicity::APERIODIC;
    }
    let m = mean(values);
    let x: Vec<f64> = values.iter().map(|v| v - m).collect();
    let r0: f64 = x.iter().map(|v| v * v).sum();
    if r0 <= f64::MIN_POSITIVE {
        return Periodicity::APERIODIC;
    }
    let lo = ((min_s * rate_hz).ceil() as usize).max(1);
    let hi = ((max_s * rate_hz).floor() as usize).min(n - 2);
    if lo > hi {
        return Periodicity::APERIODIC;
    }
    let r: Vec<f64> = (0..=hi + 1).map(|k| x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / r0).collect();
    // skip the decay of the zero-lag lobe
    let Some(first_min) = (1..=hi).find(|&k| r[k] <= r[k + 1]) else {
        return Periodicity::APERIODIC;
    };
    let mut best: Option<(usize, f64)> = None;
    for k in lo.max(first_min + 1)..=hi {
        if r[k] > r[k - 1] && r[k] >= r[k + 1] && best.is_none_or(|(_, b)| r[k] > b) {
            best = Some((k, r[k]));
        }
    }
    match best {
        Some((lag, value)) if value > 0.0 => Periodicity { period_s: lag as f64 / rate_hz, strength: value.min(1.0) },
        _ => Periodicity::APERIODIC,
    }
}

/// Envelope period and strength; aperiodic when the best peak is below
/// `config.min_periodicity`.
pub fn periodicity_with(env: &[f64], rate_hz: f64, config: &FeatureConfig) -> Periodicity {
    let p = autocorrelation_peak(env, rate_hz, config.period_min_s, config.period_max_s);
    if p.strength < config.min_periodicity {
        Periodicity::APERIODIC
    } else {
        p
    }
}

/// `(period_s, strength)` of an envelope with the default search band.
pub fn periodicity(env: &Signal<f64>) -> Result<(f64, f64)> {
    if env.is_empty() {
        return Err(Error::EmptySignal);
    }
    let p = periodicity_with(env.samples(), env.sample_rate_hz() as f64, &FeatureConfig::default());
    Ok((p.period_s, p.strength))
}

/// Local maxima above `mean + k·std`, thinned so no two kept peaks are closer
/// than the minimum distance (taller peaks win). Times in seconds, increasing.
pub fn detect_peaks_with(env: &[f64], rate_hz: f64, config: &FeatureConfig) -> Vec<f64> {
    let n = env.len();
    if n == 0 {
        return Vec::new();
    }
    let threshold = mean(env) + config.peak_threshold_std * population_std(env);
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || env[i] > env[i - 1];
            let right = i + 1 == n || env[i] >= env[i + 1];
            left && right && env[i] > threshold
        })
        .collect();
    candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));

    let min_dist = (config.min_peak_distance_s * rate_hz).ceil() as usize;
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_dist) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| i as f64 / rate_hz).collect()
}

pub fn detect_peaks(env: &Signal<f64>) -> Vec<f64> {
    detect_peaks_with(env.samples(), env.sample_rate_hz() as f64, &FeatureConfig::default())
}

pub fn extract_features<T: Scalar>(
    source: &Signal<T>,
    spec: &Spectrogram<T>,
    label: SourceLabel,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    if source.is_empty() {
        return Err(Error::EmptySignal);
    }
    let env = envelope(source, config.envelope_frame_ms)?;
    let rate = env.sample_rate_hz() as f64;
    let p = periodicity_with(env.samples(), rate, config);
    let peaks = detect_peaks_with(env.samples(), rate, config);
    let intervals: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let centroid = match spectral_centroid(spec) {
        Ok(c) => c,
        Err(Error::ZeroEnergy) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(FeatureVector {
        schema_version: FEATURE_SCHEMA_VERSION,
        source_label: label,
        dominant_freq_hz: dominant_freq(spec),
        spectral_centroid_hz: centroid,
        envelope_period_s: p.period_s,
        periodicity_strength: p.strength,
        rr_cv: rr_cv(&intervals),
        rr_intervals_s: intervals,
        burst_rate_per_s: peaks.len() as f64 / source.duration_s(),
        rms_level: source.rms().as_f64(),
    })
}
