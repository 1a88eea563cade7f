use biosep::audio_io::write_wav;
use biosep::synth::{mix, snr_gain, synth_heart, synth_lung, HeartParams, LungParams};
use biosep::Signal64;
use serde::Serialize;

use crate::config::{RunConfig, Sources};
use crate::output::{ensure_dir, write_json};
use crate::{out_dir, Failure};

const FILES: [&str; 3] = ["mixture.wav", "heart.wav", "lung.wav"];

#[derive(Serialize)]
struct Sidecar<'a> {
    sources: Sources,
    sample_rate_hz: u32,
    duration_s: f64,
    snr_db: f64,
    /// Gain applied to the generated lung signal before mixing.
    lung_gain: f64,
    heart: &'a HeartParams,
    lung: &'a LungParams,
    files: [&'static str; 3],
}

pub fn run(c: &RunConfig) -> Result<(), Failure> {
    let s = &c.synth;
    let fs = s.sample_rate_hz;
    let usage = |e: biosep::Error| Failure::Usage(e.to_string());
    s.heart.validate(fs).map_err(usage)?;
    s.lung.validate(fs).map_err(usage)?;

    let heart: Signal64 = synth_heart(&s.heart, s.duration_s, fs).map_err(usage)?;
    let lung: Signal64 = synth_lung(&s.lung, s.duration_s, fs).map_err(usage)?;
    let silent = Signal64::zeros(heart.len(), fs)?;
    let (heart, lung, gain) = match s.sources {
        Sources::Heart => (heart, silent, 0.0),
        Sources::Lung => (silent, lung, 1.0),
        Sources::Both if heart.is_empty() => (heart, lung, 1.0),
        Sources::Both => {
            let g = snr_gain(&heart, &lung, s.snr_db)?;
            let scaled = Signal64::new(lung.samples().iter().map(|x| x * g).collect(), fs)?;
            (heart, scaled, g)
        }
    };
    let mixture = mix(&[&heart, &lung], &[1.0, 1.0])?;

    let out = out_dir(c, None);
    ensure_dir(&out)?;
    for (name, signal) in FILES.iter().zip([&mixture, &heart, &lung]) {
        write_wav(out.join(name), signal)?;
    }
    let sidecar = Sidecar {
        sources: s.sources,
        sample_rate_hz: fs,
        duration_s: s.duration_s,
        snr_db: s.snr_db,
        lung_gain: gain,
        heart: &s.heart,
        lung: &s.lung,
        files: FILES,
    };
    write_json(&out.join("params.json"), &sidecar)
}
