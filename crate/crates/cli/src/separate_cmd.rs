use std::path::{Path, PathBuf};

use biosep::audio_io::{read_wav, write_wav};
use biosep::separation::{separate, ComponentGroup, ComponentProfile, SourceLabel};
use biosep::Signal64;
use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{ensure_dir, stem, write_json};
use crate::{out_dir, Failure};

#[derive(Serialize)]
struct TraceSummary {
    iterations: usize,
    initial: f64,
    #[serde(rename = "final")]
    last: f64,
    /// Stopped on the tolerance rather than the iteration cap.
    converged: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    generated_at: String,
    command: &'static str,
    input: String,
    sample_rate_hz: u32,
    num_samples: usize,
    config: &'a RunConfig,
    groups: &'a [ComponentGroup],
    components: &'a [ComponentProfile],
    divergence: TraceSummary,
    outputs: Vec<String>,
}

pub fn run(c: &RunConfig, input: &Path, save_model: Option<Option<PathBuf>>) -> Result<(), Failure> {
    let mixture: Signal64 = read_wav(input)?;
    let sep = separate(&mixture, &c.stft, &c.nmf, &c.grouping)?;
    let out = out_dir(c, Some(input));
    ensure_dir(&out)?;
    let stem = stem(input);

    let mut outputs = Vec::new();
    for label in SourceLabel::ALL {
        let name = format!("{stem}.{label}.wav");
        match sep.source(label) {
            Some(s) => write_wav(out.join(&name), &s.signal)?,
            None => write_wav(out.join(&name), &Signal64::zeros(mixture.len(), mixture.sample_rate_hz())?)?,
        }
        outputs.push(name);
    }
    if let Some(path) = save_model {
        let path = path.unwrap_or_else(|| out.join(format!("{stem}.model.json")));
        write_json(&path, &sep.model.to_document())?;
        outputs.push(path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()));
    }

    let trace = &sep.model.divergence_trace;
    let manifest = Manifest {
        generated_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        command: "separate",
        input: input.display().to_string(),
        sample_rate_hz: mixture.sample_rate_hz(),
        num_samples: mixture.len(),
        config: c,
        groups: &sep.groups,
        components: &sep.profiles,
        divergence: TraceSummary {
            iterations: sep.model.iterations(),
            initial: trace.first().copied().unwrap_or(0.0),
            last: trace.last().copied().unwrap_or(0.0),
            converged: sep.model.iterations() < c.nmf.max_iters,
        },
        outputs,
    };
    write_json(&out.join(format!("{stem}.manifest.json")), &manifest)
}
