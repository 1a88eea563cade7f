use std::fs;
use std::path::{Path, PathBuf};

use biosep::audio_io::read_wav;
use biosep::features::{extract_features, FeatureVector};
use biosep::interpret::{
    format_prompt, format_significant, interpret_all, Backend, BackendKind, MockBackend, RemoteBackend,
};
use biosep::separation::{separate, SourceLabel};
use biosep::timefreq::{magnitude, stft};
use biosep::{Signal64, Spectrogram64};

use crate::config::RunConfig;
use crate::output::{ensure_dir, require_file, split_label, stem, write_json};
use crate::{out_dir, Failure};

struct Source {
    stem: String,
    label: SourceLabel,
    signal: Signal64,
    spectrogram: Spectrogram64,
}

/// One mixture is separated first; otherwise every input must already be a
/// labeled source.
fn load_sources(c: &RunConfig, inputs: &[PathBuf]) -> Result<Vec<Source>, Failure> {
    for p in inputs {
        require_file(p)?;
    }
    let labeled: Vec<Option<(String, SourceLabel)>> =
        inputs.iter().map(|p| split_label(&stem(p)).map(|(s, l)| (s.to_string(), l))).collect();
    if let [path] = inputs {
        if labeled[0].is_none() {
            let mixture: Signal64 = read_wav(path)?;
            let sep = separate(&mixture, &c.stft, &c.nmf, &c.grouping)?;
            let stem = stem(path);
            return Ok(sep
                .sources
                .into_iter()
                .map(|s| Source { stem: stem.clone(), label: s.label, signal: s.signal, spectrogram: s.spectrogram })
                .collect());
        }
    }
    inputs
        .iter()
        .zip(labeled)
        .map(|(path, name)| {
            let (stem, label) = name.ok_or_else(|| {
                Failure::Usage(format!(
                    "{}: expected a single mixture or files named <stem>.<heart|lung|residual>.wav",
                    path.display()
                ))
            })?;
            let signal: Signal64 = read_wav(path)?;
            let spectrogram = magnitude(&stft(&signal, &c.stft)?);
            Ok(Source { stem, label, signal, spectrogram })
        })
        .collect()
}

fn summary(f: &FeatureVector, prediction: &str) -> String {
    format!(
        "{}: {prediction} (period {} s, strength {}, rr_cv {}, dominant {} Hz, bursts {}/s)",
        f.source_label,
        format_significant(f.envelope_period_s),
        format_significant(f.periodicity_strength),
        format_significant(f.rr_cv),
        format_significant(f.dominant_freq_hz),
        format_significant(f.burst_rate_per_s),
    )
}

pub fn run(c: &RunConfig, inputs: &[PathBuf]) -> Result<(), Failure> {
    let backend: Box<dyn Backend> = match c.backend {
        BackendKind::Mock => Box::new(MockBackend::new(c.mock, c.labels.clone())),
        BackendKind::Remote => Box::new(RemoteBackend::from_env(c.remote()?)?),
    };
    let sources = load_sources(c, inputs)?;
    let out = out_dir(c, inputs.first().map(Path::new));
    ensure_dir(&out)?;

    let mut features = Vec::with_capacity(sources.len());
    for s in &sources {
        let f = extract_features(&s.signal, &s.spectrogram, s.label, &c.features)?;
        let base = format!("{}.{}", s.stem, s.label);
        write_json(&out.join(format!("{base}.features.json")), &f)?;
        fs::write(
            out.join(format!("{base}.features.csv")),
            format!("{}\n{}\n", FeatureVector::csv_header(), f.csv_row()),
        )?;
        features.push(f);
    }

    let prompts: Vec<_> = features.iter().map(|f| format_prompt(f, &c.labels)).collect();
    let reports = interpret_all(&prompts, backend.as_ref(), &c.labels, c.max_inflight)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    for ((s, f), report) in sources.iter().zip(&features).zip(&reports) {
        write_json(&out.join(format!("{}.{}.report.json", s.stem, s.label)), report)?;
        println!("{}", summary(f, &report.prediction));
    }
    Ok(())
}
