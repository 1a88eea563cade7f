//! Short-time Fourier transform, magnitude spectrogram and overlap-add inverse.

use ndarray::{Array2, Zip};
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::Signal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the overlap-add sum of the analysis window.
pub const COLA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 1024, hop: 512, fft_len: 1024, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn hann(window_len: usize, hop: usize) -> Self {
        Self { window_len, hop, fft_len: window_len, window: WindowKind::Hann }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::InvalidConfig(format!("window_len {} < 2", self.window_len)));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidConfig(format!("hop {} must be in 1..={}", self.hop, self.window_len)));
        }
        if self.fft_len < self.window_len {
            return Err(Error::InvalidConfig(format!("fft_len {} < window_len {}", self.fft_len, self.window_len)));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of frames needed to cover `len` samples, padding the tail.
    pub fn num_frames(&self, len: usize) -> usize {
        if len <= self.window_len {
            1
        } else {
            1 + (len - self.window_len).div_ceil(self.hop)
        }
    }

    /// Periodic window of length `window_len`.
    pub fn window<T: Scalar>(&self) -> Vec<T> {
        match self.window {
            WindowKind::Hann => {
                let n = self.window_len as f64;
                (0..self.window_len)
                    .map(|i| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos()))
                    .collect()
            }
        }
    }

    /// Relative spread of the overlap-added analysis window over one hop.
    pub fn cola_deviation(&self) -> f64 {
        let w: Vec<f64> = self.window();
        let sums: Vec<f64> = (0..self.hop).map(|phase| w.iter().skip(phase).step_by(self.hop).sum()).collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 {
            return f64::INFINITY;
        }
        (max - min) / mean
    }

    pub fn is_cola(&self) -> bool {
        self.cola_deviation() <= COLA_TOLERANCE
    }

    pub fn bin_freq_hz(&self, bin: usize, sample_rate_hz: u32) -> f64 {
        bin as f64 * sample_rate_hz as f64 / self.fft_len as f64
    }
}

/// Complex STFT, bins × frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    bins: Array2<Complex<T>>,
    config: StftConfig,
    sample_rate_hz: u32,
    signal_len: usize,
}

impl<T: Scalar> ComplexSpectrogram<T> {
    pub fn new(bins: Array2<Complex<T>>, config: StftConfig, sample_rate_hz: u32, signal_len: usize) -> Result<Self> {
        config.validate()?;
        if bins.nrows() != config.num_bins() {
            return Err(Error::ShapeMismatch(format!("{} rows, expected {} bins", bins.nrows(), config.num_bins())));
        }
        if bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidConfig("non-finite spectrogram entry".into()));
        }
        Ok(Self { bins, config, sample_rate_hz, signal_len })
    }

    pub fn bins(&self) -> &Array2<Complex<T>> {
        &self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Length of the signal the frames were computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn num_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.bins.ncols()
    }

    /// Scales every bin by a real, non-negative mask of the same shape; phase is kept.
    pub fn apply_mask(&self, mask: &Array2<T>) -> Result<Self> {
        if mask.dim() != self.bins.dim() {
            return Err(Error::ShapeMismatch(format!("mask {:?} vs spectrogram {:?}", mask.dim(), self.bins.dim())));
        }
        let bins = Zip::from(&self.bins).and(mask).map_collect(|&c, &m| c * m);
        Ok(Self { bins, ..self.clone() })
    }
}

/// Non-negative magnitude matrix, bins × frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    values: Array2<T>,
    config: StftConfig,
    sample_rate_hz: u32,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn new(values: Array2<T>, config: StftConfig, sample_rate_hz: u32) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!("empty spectrogram {:?}", values.dim())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidConfig("spectrogram entries must be finite and >= 0".into()));
        }
        Ok(Self { values, config, sample_rate_hz })
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn bin_freq_hz(&self, bin: usize) -> f64 {
        self.config.bin_freq_hz(bin, self.sample_rate_hz)
    }

    /// Frame rate in frames per second.
    pub fn frame_rate_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.config.hop as f64
    }

    /// Per-bin mean over frames.
    pub fn time_average(&self) -> Vec<T> {
        let n = T::of(self.values.ncols() as f64);
        self.values.rows().into_iter().map(|r| r.sum() / n).collect()
    }
}

/// Forward STFT. Frame `t` covers samples `[t*hop, t*hop + window_len)`; the
/// tail is zero-padded so every sample lands in at least one frame.
pub fn stft<T: Scalar>(signal: &Signal<T>, config: &StftConfig) -> Result<ComplexSpectrogram<T>> {
    config.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let x = signal.samples();
    let window: Vec<T> = config.window();
    let frames = config.num_frames(x.len());
    let nbins = config.num_bins();
    let fft = FftPlanner::<T>::new().plan_fft_forward(config.fft_len);

    let mut bins = Array2::<Complex<T>>::zeros((nbins, frames));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); config.fft_len];
    for t in 0..frames {
        let start = t * config.hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
        for (i, w) in window.iter().enumerate() {
            if let Some(&s) = x.get(start + i) {
                buf[i].re = s * *w;
            }
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(nbins).enumerate() {
            bins[[k, t]] = *c;
        }
    }
    ComplexSpectrogram::new(bins, *config, signal.sample_rate_hz(), x.len())
}

pub fn magnitude<T: Scalar>(cs: &ComplexSpectrogram<T>) -> Spectrogram<T> {
    Spectrogram { values: cs.bins.mapv(|c| c.norm()), config: cs.config, sample_rate_hz: cs.sample_rate_hz }
}

/// Weighted overlap-add inverse with window-squared normalization. Samples
/// whose accumulated squared window falls below 1e-3 of its peak (only the
/// first few samples of the signal) are tapered rather than amplified.
pub fn istft<T: Scalar>(cs: &ComplexSpectrogram<T>) -> Result<Signal<T>> {
    let config = cs.config;
    if !config.is_cola() {
        return Err(Error::InvalidConfig(format!(
            "window {} / hop {} violates constant overlap-add (deviation {:.3e})",
            config.window_len,
            config.hop,
            config.cola_deviation()
        )));
    }
    let window: Vec<T> = config.window();
    let frames = cs.num_frames();
    let padded_len = (frames - 1) * config.hop + config.window_len;
    let fft = FftPlanner::<T>::new().plan_fft_inverse(config.fft_len);
    let scale = T::one() / T::of(config.fft_len as f64);
    let nbins = cs.num_bins();

    let mut out = vec![T::zero(); padded_len];
    let mut norm = vec![T::zero(); padded_len];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); config.fft_len];
    for t in 0..frames {
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = if k < nbins { cs.bins[[k, t]] } else { cs.bins[[config.fft_len - k, t]].conj() };
        }
        fft.process(&mut buf);
        let start = t * config.hop;
        for (i, w) in window.iter().enumerate() {
            out[start + i] = out[start + i] + buf[i].re * scale * *w;
            norm[start + i] = norm[start + i] + *w * *w;
        }
    }
    let peak = norm.iter().cloned().fold(T::zero(), T::max);
    let floor = peak * T::of(1e-3);
    let samples = out.iter().zip(&norm).take(cs.signal_len).map(|(&y, &n)| y / n.max(floor)).collect();
    Signal::new(samples, cs.sample_rate_hz)
}

/// Sample range reconstructed with full frame overlap: excludes the leading
/// and trailing `window_len - hop` samples.
pub fn interior_range(config: &StftConfig, len: usize) -> std::ops::Range<usize> {
    let edge = config.window_len - config.hop;
    edge.min(len)..len.saturating_sub(edge).max(edge.min(len))
}
