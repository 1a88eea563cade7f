//! Seeded synthetic heart and lung sounds with known structure, and mixing.
//!
//! Heart: pairs of exponentially decaying sinusoid pulses (S1 at the beat,
//! S2 at 0.3·RR after it). Irregular rhythm is modeled as a regular beat
//! where a fraction of intervals is disrupted, so the sequence keeps its
//! underlying cadence while the overall interval CV equals `rr_jitter_cv`.
//!
//! Lung: white noise brick-wall filtered to a band, gated into bursts whose
//! onsets follow a random renewal process at the requested mean rate.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::Signal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const PEAK_AMPLITUDE: f64 = 0.9;
const S2_AMPLITUDE: f64 = 0.6;
const S2_OFFSET_FRACTION: f64 = 0.3;
/// Pulses are truncated after this many decay constants.
const PULSE_SPAN_DECAYS: f64 = 10.0;
const GATE_RAMP_S: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeartParams {
    pub rr_mean_s: f64,
    /// Coefficient of variation of the RR intervals.
    pub rr_jitter_cv: f64,
    pub s1_freq_hz: f64,
    pub s2_freq_hz: f64,
    pub pulse_decay_s: f64,
    /// Share of intervals that deviate from `rr_mean_s` when jitter is on.
    pub disrupted_fraction: f64,
    pub seed: u64,
}

impl Default for HeartParams {
    fn default() -> Self {
        Self {
            rr_mean_s: 0.8,
            rr_jitter_cv: 0.0,
            s1_freq_hz: 60.0,
            s2_freq_hz: 120.0,
            pulse_decay_s: 0.04,
            disrupted_fraction: 1.0 / 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LungParams {
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// Mean burst onsets per second; 0 gives continuous noise.
    pub burst_rate_per_s: f64,
    /// Fraction of time spent inside bursts.
    pub burst_duty: f64,
    pub seed: u64,
}

impl Default for LungParams {
    fn default() -> Self {
        Self { center_freq_hz: 400.0, bandwidth_hz: 100.0, burst_rate_per_s: 1.2, burst_duty: 0.4, seed: 0 }
    }
}

fn check_duration(duration_s: f64, sample_rate_hz: u32) -> Result<usize> {
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParams(format!("duration {duration_s} s")));
    }
    if sample_rate_hz == 0 {
        return Err(Error::InvalidParams("sample rate must be positive".into()));
    }
    Ok((duration_s * sample_rate_hz as f64).round() as usize)
}

fn normalize_peak(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK_AMPLITUDE / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn to_signal<T: Scalar>(x: Vec<f64>, sample_rate_hz: u32) -> Result<Signal<T>> {
    Signal::new(x.into_iter().map(T::of).collect(), sample_rate_hz)
}

impl HeartParams {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(0.29..=2.0).contains(&self.rr_mean_s) {
            return bad(format!("rr_mean_s {} outside [0.29, 2.0]", self.rr_mean_s));
        }
        if !(self.rr_jitter_cv >= 0.0 && self.rr_jitter_cv.is_finite()) {
            return bad(format!("rr_jitter_cv {}", self.rr_jitter_cv));
        }
        if !(self.pulse_decay_s > 0.0 && self.pulse_decay_s.is_finite()) {
            return bad(format!("pulse_decay_s {}", self.pulse_decay_s));
        }
        for f in [self.s1_freq_hz, self.s2_freq_hz] {
            if !(f > 0.0 && f < nyquist) {
                return bad(format!("pulse frequency {f} Hz outside (0, {nyquist})"));
            }
        }
        if !(self.disrupted_fraction > 0.0 && self.disrupted_fraction <= 1.0) {
            return bad(format!("disrupted_fraction {}", self.disrupted_fraction));
        }
        Ok(())
    }

    /// Beat onset times in `[0, duration_s)` and the interval following each.
    pub fn beat_schedule(&self, duration_s: f64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // spread so the disrupted subset alone carries the requested CV
        let spread = self.rr_jitter_cv / self.disrupted_fraction.sqrt();
        let mut beats = Vec::new();
        let mut t = 0.0;
        while t < duration_s {
            let rr = if self.rr_jitter_cv > 0.0 && rng.gen::<f64>() < self.disrupted_fraction {
                loop {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let rr = self.rr_mean_s * (1.0 + spread * z);
                    // strictly positive, and no shorter than the S1-S2 gap
                    if rr > S2_OFFSET_FRACTION * self.rr_mean_s {
                        break rr;
                    }
                }
            } else {
                self.rr_mean_s
            };
            beats.push((t, rr));
            t += rr;
        }
        beats
    }
}

impl LungParams {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let lo = self.center_freq_hz - self.bandwidth_hz / 2.0;
        let hi = self.center_freq_hz + self.bandwidth_hz / 2.0;
        if !(self.bandwidth_hz > 0.0 && lo > 0.0 && hi < nyquist) {
            return Err(Error::InvalidParams(format!("band [{lo}, {hi}] Hz outside (0, {nyquist})")));
        }
        if !(self.burst_rate_per_s >= 0.0 && self.burst_rate_per_s.is_finite()) {
            return Err(Error::InvalidParams(format!("burst_rate_per_s {}", self.burst_rate_per_s)));
        }
        if !(self.burst_duty > 0.0 && self.burst_duty <= 1.0) {
            return Err(Error::InvalidParams(format!("burst_duty {}", self.burst_duty)));
        }
        Ok(())
    }
}

fn add_pulse(x: &mut [f64], fs: f64, onset_s: f64, freq_hz: f64, decay_s: f64, amplitude: f64) {
    let start = (onset_s * fs).round() as usize;
    let span = (PULSE_SPAN_DECAYS * decay_s * fs).ceil() as usize;
    for (i, slot) in x.iter_mut().skip(start).take(span).enumerate() {
        let d = i as f64 / fs;
        *slot += amplitude * (-d / decay_s).exp() * (2.0 * std::f64::consts::PI * freq_hz * d).sin();
    }
}

pub fn synth_heart<T: Scalar>(params: &HeartParams, duration_s: f64, sample_rate_hz: u32) -> Result<Signal<T>> {
    let n = check_duration(duration_s, sample_rate_hz)?;
    params.validate(sample_rate_hz)?;
    let fs = sample_rate_hz as f64;
    let mut x = vec![0.0; n];
    for (onset, rr) in params.beat_schedule(duration_s) {
        add_pulse(&mut x, fs, onset, params.s1_freq_hz, params.pulse_decay_s, 1.0);
        add_pulse(&mut x, fs, onset + S2_OFFSET_FRACTION * rr, params.s2_freq_hz, params.pulse_decay_s, S2_AMPLITUDE);
    }
    normalize_peak(&mut x);
    to_signal(x, sample_rate_hz)
}

fn band_noise(rng: &mut ChaCha8Rng, n: usize, fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        // frequency of bin k, folding the negative half
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn burst_gate(rng: &mut ChaCha8Rng, n: usize, fs: f64, params: &LungParams) -> Vec<f64> {
    if params.burst_rate_per_s == 0.0 || params.burst_duty >= 1.0 {
        return vec![1.0; n];
    }
    let burst_s = params.burst_duty / params.burst_rate_per_s;
    let gaps = Exp::new(params.burst_rate_per_s / (1.0 - params.burst_duty)).expect("positive rate");
    let ramp = (GATE_RAMP_S.min(burst_s / 4.0) * fs).round().max(1.0) as usize;
    let len = (burst_s * fs).round() as usize;
    let mut gate = vec![0.0; n];
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        let start = (t * fs).round() as usize;
        if start >= n {
            break;
        }
        for i in 0..len.min(n - start) {
            let edge = i.min(len - 1 - i);
            gate[start + i] =
                if edge < ramp { 0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos() } else { 1.0 };
        }
        t += burst_s;
    }
    gate
}

pub fn synth_lung<T: Scalar>(params: &LungParams, duration_s: f64, sample_rate_hz: u32) -> Result<Signal<T>> {
    let n = check_duration(duration_s, sample_rate_hz)?;
    params.validate(sample_rate_hz)?;
    if n == 0 {
        return Signal::new(Vec::new(), sample_rate_hz);
    }
    let fs = sample_rate_hz as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let half = params.bandwidth_hz / 2.0;
    let noise = band_noise(&mut rng, n, fs, params.center_freq_hz - half, params.center_freq_hz + half);
    let gate = burst_gate(&mut rng, n, fs, params);
    let mut x: Vec<f64> = noise.iter().zip(&gate).map(|(a, g)| a * g).collect();
    normalize_peak(&mut x);
    to_signal(x, sample_rate_hz)
}

/// Sample-wise `Σ gain_i · signal_i`, zero-padding shorter inputs.
pub fn mix<T: Scalar>(signals: &[&Signal<T>], gains: &[T]) -> Result<Signal<T>> {
    if signals.is_empty() || signals.len() != gains.len() {
        return Err(Error::InvalidParams(format!("{} signals with {} gains", signals.len(), gains.len())));
    }
    let rate = signals[0].sample_rate_hz();
    if let Some(other) = signals.iter().find(|s| s.sample_rate_hz() != rate) {
        return Err(Error::SampleRateMismatch(rate, other.sample_rate_hz()));
    }
    let len = signals.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut out = vec![T::zero(); len];
    for (s, &g) in signals.iter().zip(gains) {
        for (o, &x) in out.iter_mut().zip(s.samples()) {
            *o = *o + g * x;
        }
    }
    Signal::new(out, rate)
}

/// Gain for `interferer` such that `energy(target) / energy(gain·interferer)`
/// equals `snr_db`. Fails on a silent interferer.
pub fn snr_gain<T: Scalar>(target: &Signal<T>, interferer: &Signal<T>, snr_db: f64) -> Result<T> {
    let et = target.energy().as_f64();
    let ei = interferer.energy().as_f64();
    if ei <= 0.0 {
        return Err(Error::InvalidParams("interferer is silent".into()));
    }
    Ok(T::of((et / (ei * 10f64.powf(snr_db / 10.0))).sqrt()))
}

/// A mixture together with the exact scaled components that sum to it.
#[derive(Debug, Clone)]
pub struct SynthMixture<T> {
    pub mixture: Signal<T>,
    pub heart: Signal<T>,
    pub lung: Signal<T>,
}

/// Heart plus lung with the lung scaled to `snr_db` below the heart.
pub fn heart_lung_mixture<T: Scalar>(
    heart: &HeartParams,
    lung: &LungParams,
    snr_db: f64,
    duration_s: f64,
    sample_rate_hz: u32,
) -> Result<SynthMixture<T>> {
    let h: Signal<T> = synth_heart(heart, duration_s, sample_rate_hz)?;
    let l: Signal<T> = synth_lung(lung, duration_s, sample_rate_hz)?;
    let g = snr_gain(&h, &l, snr_db)?;
    let l = Signal::new(l.samples().iter().map(|&x| x * g).collect(), sample_rate_hz)?;
    let mixture = mix(&[&h, &l], &[T::one(), T::one()])?;
    Ok(SynthMixture { mixture, heart: h, lung: l })
}
