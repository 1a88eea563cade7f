//! Assigns NMF components to physiological sources and reconstructs one
//! waveform per source through ratio masks on the mixture STFT.

use std::fmt;

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::audio_io::Signal;
use crate::error::{Error, Result};
use crate::features::autocorrelation_peak;
use crate::nmf::{factorize, NmfConfig, NmfModel};
use crate::scalar::Scalar;
use crate::timefreq::{istft, magnitude, stft, ComplexSpectrogram, Spectrogram, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Heart,
    Lung,
    Residual,
}

impl SourceLabel {
    pub const ALL: [SourceLabel; 3] = [SourceLabel::Heart, SourceLabel::Lung, SourceLabel::Residual];

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceLabel::Heart => "heart",
            SourceLabel::Lung => "lung",
            SourceLabel::Residual => "residual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for SourceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentGroup {
    pub label: SourceLabel,
    /// Sorted component indices.
    pub component_indices: Vec<usize>,
}

/// Thresholds for mapping components onto heart and lung.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingConfig {
    /// Beat-rate band of the activation rhythm, Hz.
    pub heart_rate_min_hz: f64,
    pub heart_rate_max_hz: f64,
    /// Autocorrelation peak at or above which an activation is heart in any band.
    pub min_periodicity: f64,
    /// Weaker rhythm still counts as heart when the basis peaks in the heart-sound band.
    pub weak_periodicity: f64,
    pub heart_max_peak_hz: f64,
    /// Components carrying less than this share of the modeled energy are residual.
    pub residual_energy_fraction: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            heart_rate_min_hz: 0.5,
            heart_rate_max_hz: 3.5,
            min_periodicity: 0.6,
            weak_periodicity: 0.2,
            heart_max_peak_hz: 150.0,
            residual_energy_fraction: 0.01,
        }
    }
}

/// What the grouping rule saw for one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentProfile {
    pub index: usize,
    pub centroid_hz: f64,
    /// Frequency of the largest basis entry.
    pub peak_hz: f64,
    pub period_s: f64,
    pub periodicity: f64,
    pub energy_share: f64,
    pub label: SourceLabel,
}

/// Centroid of each `W` column, rhythm of each `H` row and energy share per component.
pub fn profile_components<T: Scalar>(
    model: &NmfModel<T>,
    sample_rate_hz: u32,
    stft_config: &StftConfig,
    config: &GroupingConfig,
) -> Vec<ComponentProfile> {
    let frame_rate = sample_rate_hz as f64 / stft_config.hop as f64;
    let w_sums = model.w.sum_axis(Axis(0));
    let h_sums = model.h.sum_axis(Axis(1));
    let energies: Vec<f64> = (0..model.rank).map(|k| (w_sums[k] * h_sums[k]).as_f64()).collect();
    let total: f64 = energies.iter().sum();

    (0..model.rank)
        .map(|k| {
            let col = model.w.column(k);
            let mass: f64 = col.iter().map(|x| x.as_f64()).sum();
            let centroid_hz = if mass > 0.0 {
                col.iter()
                    .enumerate()
                    .map(|(i, x)| stft_config.bin_freq_hz(i, sample_rate_hz) * x.as_f64())
                    .sum::<f64>()
                    / mass
            } else {
                0.0
            };
            let peak_bin =
                col.iter().enumerate().fold((0, T::zero()), |best, (i, &x)| if x > best.1 { (i, x) } else { best }).0;
            let peak_hz = stft_config.bin_freq_hz(peak_bin, sample_rate_hz);
            let activation: Vec<f64> = model.h.row(k).iter().map(|x| x.as_f64()).collect();
            let peak = autocorrelation_peak(
                &activation,
                frame_rate,
                1.0 / config.heart_rate_max_hz,
                1.0 / config.heart_rate_min_hz,
            );
            let energy_share = if total > 0.0 { energies[k] / total } else { 0.0 };
            let label = if energy_share < config.residual_energy_fraction {
                SourceLabel::Residual
            } else if peak.strength >= config.min_periodicity
                || (peak.strength >= config.weak_periodicity && peak_hz <= config.heart_max_peak_hz)
            {
                SourceLabel::Heart
            } else {
                SourceLabel::Lung
            };
            ComponentProfile {
                index: k,
                centroid_hz,
                peak_hz,
                period_s: peak.period_s,
                periodicity: peak.strength,
                energy_share,
                label,
            }
        })
        .collect()
}

/// Partitions the components into heart / lung / residual groups (empty
/// groups omitted). Strongly periodic activations in the beat-rate band are
/// heart; weakly periodic ones are heart only when the basis peaks in the
/// heart-sound band; negligible components are residual; the rest is lung.
pub fn group_components<T: Scalar>(
    model: &NmfModel<T>,
    sample_rate_hz: u32,
    stft_config: &StftConfig,
    config: &GroupingConfig,
) -> Vec<ComponentGroup> {
    groups_from_profiles(&profile_components(model, sample_rate_hz, stft_config, config))
}

pub fn groups_from_profiles(profiles: &[ComponentProfile]) -> Vec<ComponentGroup> {
    SourceLabel::ALL
        .into_iter()
        .filter_map(|label| {
            let component_indices: Vec<usize> = profiles.iter().filter(|p| p.label == label).map(|p| p.index).collect();
            (!component_indices.is_empty()).then_some(ComponentGroup { label, component_indices })
        })
        .collect()
}

/// Ratio masks `Σ_{k∈g} W_k H_k / max(WH, ε)`, one per group.
pub fn group_masks<T: Scalar>(model: &NmfModel<T>, groups: &[ComponentGroup], epsilon: T) -> Result<Vec<Array2<T>>> {
    let denom = model.reconstruction().mapv(|x| x.max(epsilon));
    groups
        .iter()
        .map(|g| {
            let mut part = Array2::<T>::zeros(denom.dim());
            for &k in &g.component_indices {
                if k >= model.rank {
                    return Err(Error::ShapeMismatch(format!("component {k} >= rank {}", model.rank)));
                }
                part = part + model.component(k);
            }
            Zip::from(&mut part).and(&denom).for_each(|p, &d| *p = *p / d);
            Ok(part)
        })
        .collect()
}

/// Applies each group's mask to the mixture, keeping the mixture phase.
pub fn soft_mask<T: Scalar>(
    mixture: &ComplexSpectrogram<T>,
    model: &NmfModel<T>,
    groups: &[ComponentGroup],
    epsilon: T,
) -> Result<Vec<(SourceLabel, ComplexSpectrogram<T>)>> {
    let expected = (mixture.num_bins(), mixture.num_frames());
    if (model.w.nrows(), model.h.ncols()) != expected {
        return Err(Error::ShapeMismatch(format!(
            "model {}×{} vs mixture {:?}",
            model.w.nrows(),
            model.h.ncols(),
            expected
        )));
    }
    let masks = group_masks(model, groups, epsilon)?;
    groups.iter().zip(&masks).map(|(g, m)| Ok((g.label, mixture.apply_mask(m)?))).collect()
}

#[derive(Debug, Clone)]
pub struct SeparatedSource<T> {
    pub label: SourceLabel,
    pub signal: Signal<T>,
    pub spectrogram: Spectrogram<T>,
}

#[derive(Debug, Clone)]
pub struct SeparatedSources<T> {
    pub mixture: Signal<T>,
    pub mixture_spectrogram: Spectrogram<T>,
    pub model: NmfModel<T>,
    pub profiles: Vec<ComponentProfile>,
    pub groups: Vec<ComponentGroup>,
    pub sources: Vec<SeparatedSource<T>>,
}

impl<T: Scalar> SeparatedSources<T> {
    pub fn source(&self, label: SourceLabel) -> Option<&SeparatedSource<T>> {
        self.sources.iter().find(|s| s.label == label)
    }
}

/// STFT, magnitude, factorization, grouping, masking and inverse STFT.
pub fn separate<T: Scalar>(
    mixture: &Signal<T>,
    stft_config: &StftConfig,
    nmf_config: &NmfConfig,
    grouping: &GroupingConfig,
) -> Result<SeparatedSources<T>> {
    let cs = stft(mixture, stft_config)?;
    let spec = magnitude(&cs);
    let model = factorize(spec.values(), nmf_config)?;
    let profiles = profile_components(&model, mixture.sample_rate_hz(), stft_config, grouping);
    let groups = groups_from_profiles(&profiles);
    let sources = soft_mask(&cs, &model, &groups, T::of(nmf_config.epsilon))?
        .into_iter()
        .map(|(label, masked)| Ok(SeparatedSource { label, spectrogram: magnitude(&masked), signal: istft(&masked)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparatedSources { mixture: mixture.clone(), mixture_spectrogram: spec, model, profiles, groups, sources })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: u32 = 8000;

    fn config() -> StftConfig {
        StftConfig::default()
    }

    fn model(w: Array2<f64>, h: Array2<f64>) -> NmfModel<f64> {
        let rank = w.ncols();
        NmfModel { w, h, rank, divergence_trace: vec![], seed: 0 }
    }

    /// Activation rows at the default frame rate of 15.625 frames/s.
    fn pulse_row(n: usize, period_s: f64) -> Vec<f64> {
        let rate = FS as f64 / config().hop as f64;
        (0..n)
            .map(|j| {
                let phase = (j as f64 / rate / period_s).fract();
                if phase < 0.1 {
                    1.0
                } else {
                    0.01
                }
            })
            .collect()
    }

    fn noise_row(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect()
    }

    fn basis(bins: usize, lo: usize, hi: usize) -> Vec<f64> {
        (0..bins).map(|i| if (lo..hi).contains(&i) { 1.0 } else { 0.0 }).collect()
    }

    fn stack(cols: &[Vec<f64>]) -> Array2<f64> {
        Array2::from_shape_fn((cols[0].len(), cols.len()), |(i, k)| cols[k][i])
    }

    fn rows(rows: &[Vec<f64>]) -> Array2<f64> {
        Array2::from_shape_fn((rows.len(), rows[0].len()), |(k, j)| rows[k][j])
    }

    fn is_partition(groups: &[ComponentGroup], rank: usize) -> bool {
        let mut seen: Vec<usize> = groups.iter().flat_map(|g| g.component_indices.clone()).collect();
        seen.sort_unstable();
        seen == (0..rank).collect::<Vec<_>>()
    }

    #[test]
    fn pulse_train_is_heart_and_noise_is_lung() {
        let n = 160;
        // heart basis low (bins 5..15 ~ 40-117 Hz), lung basis at ~400 Hz
        let w = stack(&[basis(513, 5, 15), basis(513, 45, 58)]);
        let h = rows(&[pulse_row(n, 1.0), noise_row(n, 1)]);
        let groups = group_components(&model(w, h), FS, &config(), &GroupingConfig::default());
        assert_eq!(
            groups,
            vec![
                ComponentGroup { label: SourceLabel::Heart, component_indices: vec![0] },
                ComponentGroup { label: SourceLabel::Lung, component_indices: vec![1] },
            ]
        );
    }

    #[test]
    fn two_periodic_components_both_go_to_heart() {
        let n = 160;
        let w = stack(&[basis(513, 5, 15), basis(513, 45, 58)]);
        let h = rows(&[pulse_row(n, 1.0), pulse_row(n, 1.0)]);
        let groups = group_components(&model(w, h), FS, &config(), &GroupingConfig::default());
        assert_eq!(groups, vec![ComponentGroup { label: SourceLabel::Heart, component_indices: vec![0, 1] }]);
    }

    #[test]
    fn single_component_is_a_singleton_partition() {
        let w = stack(&[basis(513, 5, 15)]);
        let h = rows(&[pulse_row(100, 0.8)]);
        let groups = group_components(&model(w, h), FS, &config(), &GroupingConfig::default());
        assert_eq!(groups, vec![ComponentGroup { label: SourceLabel::Heart, component_indices: vec![0] }]);

        let h = rows(&[noise_row(100, 4)]);
        let w = stack(&[basis(513, 5, 15)]);
        let groups = group_components(&model(w, h), FS, &config(), &GroupingConfig::default());
        assert_eq!(groups, vec![ComponentGroup { label: SourceLabel::Lung, component_indices: vec![0] }]);
    }

    #[test]
    fn negligible_component_is_residual() {
        let n = 120;
        let tiny: Vec<f64> = noise_row(n, 2).iter().map(|x| x * 1e-6).collect();
        let w = stack(&[basis(513, 5, 15), basis(513, 45, 58), basis(513, 100, 110)]);
        let h = rows(&[pulse_row(n, 0.8), noise_row(n, 3), tiny]);
        let groups = group_components(&model(w, h), FS, &config(), &GroupingConfig::default());
        assert!(is_partition(&groups, 3));
        assert_eq!(groups.last().unwrap().label, SourceLabel::Residual);
        assert_eq!(groups.last().unwrap().component_indices, vec![2]);
    }

    #[test]
    fn disjoint_bases_give_indicator_masks() {
        let n = 8;
        let w = stack(&[basis(20, 0, 10), basis(20, 10, 20)]);
        let h = rows(&[noise_row(n, 5), noise_row(n, 6)]);
        let m = model(w, h);
        let groups = vec![
            ComponentGroup { label: SourceLabel::Heart, component_indices: vec![0] },
            ComponentGroup { label: SourceLabel::Lung, component_indices: vec![1] },
        ];
        let masks = group_masks(&m, &groups, 1e-12).unwrap();
        for ((i, _), &v) in masks[0].indexed_iter() {
            assert_eq!(v, if i < 10 { 1.0 } else { 0.0 });
        }
        for ((i, _), &v) in masks[1].indexed_iter() {
            assert_eq!(v, if i < 10 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn one_group_mask_passes_mixture_through() {
        let config = StftConfig::hann(64, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sig = Signal::new((0..640).map(|_| rng.gen_range(-1.0..1.0)).collect(), FS).unwrap();
        let cs = stft(&sig, &config).unwrap();
        let m =
            factorize(magnitude(&cs).values(), &NmfConfig { rank: 3, max_iters: 30, ..Default::default() }).unwrap();
        let all = vec![ComponentGroup { label: SourceLabel::Heart, component_indices: vec![0, 1, 2] }];
        let out = soft_mask(&cs, &m, &all, 1e-12).unwrap();
        let wh = m.reconstruction();
        Zip::from(out[0].1.bins()).and(cs.bins()).and(&wh).for_each(|o, c, &d: &f64| {
            if d > 1e-12 {
                assert!((o - c).norm() <= 1e-12 * c.norm().max(1.0f64));
            }
        });
    }

    #[test]
    fn mask_shape_mismatch() {
        let config = StftConfig::hann(64, 32);
        let sig = Signal::new(vec![0.1f64; 640], FS).unwrap();
        let cs = stft(&sig, &config).unwrap();
        let m = model(Array2::ones((10, 1)), Array2::ones((1, 3)));
        let g = vec![ComponentGroup { label: SourceLabel::Lung, component_indices: vec![0] }];
        assert!(matches!(soft_mask(&cs, &m, &g, 1e-12), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn silent_mixture_is_empty_input() {
        let sig = Signal::<f64>::zeros(4000, FS).unwrap();
        let err = separate(&sig, &config(), &NmfConfig::default(), &GroupingConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput));
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn masks_partition_unity(seed in 0u64..1000, rank in 1usize..6, split in 0usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = Array2::from_shape_fn((17, rank), |_| rng.gen::<f64>());
                let h = Array2::from_shape_fn((rank, 9), |_| rng.gen::<f64>());
                let m = model(w, h);
                let cut = split.min(rank);
                let groups: Vec<ComponentGroup> = [
                    (SourceLabel::Heart, (0..cut).collect::<Vec<_>>()),
                    (SourceLabel::Lung, (cut..rank).collect()),
                ]
                .into_iter()
                .filter(|(_, idx)| !idx.is_empty())
                .map(|(label, component_indices)| ComponentGroup { label, component_indices })
                .collect();
                let masks = group_masks(&m, &groups, 1e-12).unwrap();
                let wh = m.reconstruction();
                for ((i, j), &d) in wh.indexed_iter() {
                    if d > 1e-12 {
                        let s: f64 = masks.iter().map(|mk| mk[[i, j]]).sum();
                        prop_assert!((s - 1.0).abs() <= 1e-9);
                    }
                }
                prop_assert!(masks.iter().all(|mk| mk.iter().all(|&v| v >= 0.0)));
            }
        }
    }
}
