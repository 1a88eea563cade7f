use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use biosep::audio_io::read_wav;
use biosep::separation::SourceLabel;
use biosep::timefreq::{magnitude, stft, StftConfig};
use biosep::Signal64;
use ndarray::Array2;

use crate::config::RunConfig;
use crate::output::{ensure_dir, require_file, split_label, stem};
use crate::svg::{render, Panel};
use crate::{out_dir, Failure};

pub const FLOOR_DB: f64 = -80.0;

struct Rendered {
    name: String,
    signal: Signal64,
    db: Array2<f64>,
}

/// Magnitudes scaled so a full-scale sinusoid reads 0 dB, floored at [`FLOOR_DB`].
pub fn spectrogram_db(signal: &Signal64, config: &StftConfig) -> Result<Array2<f64>, Failure> {
    let spec = magnitude(&stft(signal, config)?);
    let gain = 2.0 / config.window::<f64>().iter().sum::<f64>();
    let floor = 10f64.powf(FLOOR_DB / 20.0);
    Ok(spec.values().mapv(|m| 20.0 * (m * gain).max(floor).log10()))
}

fn emit(c: &RunConfig, path: &Path, out: &Path) -> Result<Rendered, Failure> {
    let raw = read_wav::<f32>(path)?;
    let signal: Signal64 = raw.cast();
    let fs_hz = signal.sample_rate_hz();
    let name = stem(path);

    let mut wave = String::from("time_s,amplitude\n");
    for (i, x) in raw.samples().iter().enumerate() {
        let _ = writeln!(wave, "{},{x}", i as f64 / fs_hz as f64);
    }
    fs::write(out.join(format!("{name}.waveform.csv")), wave)?;

    let db = if signal.is_empty() { Array2::zeros((c.stft.num_bins(), 0)) } else { spectrogram_db(&signal, &c.stft)? };
    let mut spec = String::from("time_s,freq_hz,magnitude_db\n");
    let centre = c.stft.window_len as f64 / 2.0;
    for (j, column) in db.columns().into_iter().enumerate() {
        let t = (j as f64 * c.stft.hop as f64 + centre) / fs_hz as f64;
        for (i, v) in column.iter().enumerate() {
            let _ = writeln!(spec, "{t},{},{v:.4}", c.stft.bin_freq_hz(i, fs_hz));
        }
    }
    fs::write(out.join(format!("{name}.spectrogram.csv")), spec)?;

    let panel = Panel { title: &name, signal: &signal, db: &db, max_freq_hz: fs_hz as f64 / 2.0 };
    fs::write(out.join(format!("{name}.svg")), render(&[panel], FLOOR_DB))?;
    Ok(Rendered { name, signal, db })
}

/// Sources belonging to the mixture `stem`: `<stem>.<label>` or, for a
/// synth directory, `heart` and `lung` next to `mixture`.
fn figure_members<'a>(stem: &str, done: &'a [Rendered]) -> Vec<&'a Rendered> {
    let mut members: Vec<&Rendered> = SourceLabel::ALL
        .iter()
        .filter_map(|l| done.iter().find(|r| split_label(&r.name) == Some((stem, *l))))
        .collect();
    if members.is_empty() && stem == "mixture" {
        members = ["heart", "lung"].iter().filter_map(|n| done.iter().find(|r| r.name == *n)).collect();
    }
    members
}

fn wavs_in(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn run(c: &RunConfig, inputs: &[PathBuf]) -> Result<(), Failure> {
    for input in inputs {
        require_file(input)?;
    }
    for input in inputs {
        let dir_input = input.is_dir();
        let out = match (&c.out, dir_input) {
            (Some(o), _) => o.clone(),
            (None, true) => input.clone(),
            (None, false) => out_dir(c, Some(input)),
        };
        ensure_dir(&out)?;
        if !dir_input {
            emit(c, input, &out)?;
            continue;
        }
        let done = wavs_in(input)?.iter().map(|p| emit(c, p, &out)).collect::<Result<Vec<_>, _>>()?;
        for mixture in done.iter().filter(|r| split_label(&r.name).is_none()) {
            let members = figure_members(&mixture.name, &done);
            if members.is_empty() {
                continue;
            }
            let max_freq_hz = mixture.signal.sample_rate_hz() as f64 / 2.0;
            let panels: Vec<Panel> = std::iter::once(mixture)
                .chain(members)
                .map(|r| Panel { title: &r.name, signal: &r.signal, db: &r.db, max_freq_hz })
                .collect();
            fs::write(out.join(format!("{}.figure.svg", mixture.name)), render(&panels, FLOOR_DB))?;
        }
    }
    Ok(())
}
