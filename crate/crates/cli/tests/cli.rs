use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use biosep::audio_io::write_wav;
use biosep::Signal64;
use serde_json::Value;

fn biosep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biosep")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = biosep(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_references_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    ok(&["synth", "--rr-mean", "0.8", "--jitter-cv", "0.3", "--duration", "10", "--out", s(&out)]);
    for f in ["mixture.wav", "heart.wav", "lung.wav", "params.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let p = json(&out.join("params.json"));
    assert_eq!(p["heart"]["rr_mean_s"], 0.8);
    assert_eq!(p["heart"]["rr_jitter_cv"], 0.3);
    assert_eq!(p["duration_s"], 10.0);
    assert_eq!(p["sources"], "both");
    assert!(p["lung"]["seed"].is_u64());
}

#[test]
fn synth_rejects_negative_duration() {
    let dir = tempfile::tempdir().unwrap();
    let out = biosep(&["synth", "--duration", "-1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!dir.path().join("mixture.wav").exists());
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--jitter-cv", "0.3", "--duration", "3", "--seed", "4", "--out", s(d)]);
    }
    for f in ["mixture.wav", "heart.wav", "lung.wav", "params.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_single_source_leaves_the_other_silent() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--sources", "lung", "--duration", "2", "--out", s(dir.path())]);
    let heart: Signal64 = biosep::audio_io::read_wav(dir.path().join("heart.wav")).unwrap();
    let lung: Signal64 = biosep::audio_io::read_wav(dir.path().join("lung.wav")).unwrap();
    let mix: Signal64 = biosep::audio_io::read_wav(dir.path().join("mixture.wav")).unwrap();
    assert_eq!(heart.energy(), 0.0);
    assert_eq!(mix.samples(), lung.samples());
}

#[test]
fn separate_writes_sources_model_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--duration", "6", "--out", s(d)]);
    let mixture = d.join("mixture.wav");
    ok(&["separate", s(&mixture), "--rank", "4", "--seed", "7", "--save-model"]);
    for f in ["mixture.heart.wav", "mixture.lung.wav", "mixture.residual.wav", "mixture.model.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let m = json(&d.join("mixture.manifest.json"));
    assert_eq!(m["config"]["nmf"]["rank"], 4);
    assert_eq!(m["config"]["nmf"]["seed"], 7);
    assert!(m["divergence"]["iterations"].as_u64().unwrap() >= 1);
    assert!(m["divergence"]["final"].as_f64().unwrap() <= m["divergence"]["initial"].as_f64().unwrap());
    assert!(m["generated_at"].is_string());

    let first = m["divergence"].clone();
    ok(&["separate", s(&mixture), "--rank", "4", "--seed", "7"]);
    assert_eq!(json(&d.join("mixture.manifest.json"))["divergence"], first);
}

#[test]
fn separate_missing_input_is_file_not_found() {
    let out = biosep(&["separate", "/definitely/not/here.wav"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FileNotFound"));
}

#[test]
fn separate_silence_reports_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quiet.wav");
    write_wav(&path, &Signal64::zeros(8000, 8000).unwrap()).unwrap();
    let out = biosep(&["separate", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("EmptyInput"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--duration", "3", "--out", s(d)]);
    let config = d.join("run.json");
    fs::write(&config, r#"{"nmf": {"rank": 3, "max_iters": 50}, "seed": 2}"#).unwrap();
    let mixture = d.join("mixture.wav");

    ok(&["separate", s(&mixture), "--config", s(&config)]);
    let m = json(&d.join("mixture.manifest.json"));
    assert_eq!(m["config"]["nmf"]["rank"], 3);
    assert_eq!(m["config"]["nmf"]["max_iters"], 50);
    assert_eq!(m["config"]["nmf"]["seed"], 2);

    ok(&["separate", s(&mixture), "--config", s(&config), "--rank", "5", "--seed", "9"]);
    let m = json(&d.join("mixture.manifest.json"));
    assert_eq!(m["config"]["nmf"]["rank"], 5);
    assert_eq!(m["config"]["nmf"]["max_iters"], 50);
    assert_eq!(m["config"]["nmf"]["seed"], 9);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"nmf": {"rnak": 3}}"#).unwrap();
    let out = biosep(&["synth", "--config", s(&config), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&config, r#"{"stft": {"window_len": 1024, "hop": 700}}"#).unwrap();
    let out = biosep(&["synth", "--config", s(&config), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = biosep(&["analyze", "x.wav", "--max-inflight", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = biosep(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_irregular_heart_reports_fibrillation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--jitter-cv", "0.3", "--seed", "2", "--out", s(d)]);
    let stdout = ok(&["analyze", s(&d.join("mixture.wav")), "--backend", "mock"]);
    assert!(stdout.lines().any(|l| l.starts_with("heart: atrial fibrillation")), "{stdout}");
    let report = json(&d.join("mixture.heart.report.json"));
    assert_eq!(report["prediction"], "atrial fibrillation");
    assert_eq!(report["backend"], "mock");
    let features = json(&d.join("mixture.heart.features.json"));
    assert!(features["rr_cv"].as_f64().unwrap() > 0.15);
    let csv = fs::read_to_string(d.join("mixture.heart.features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn analyze_low_bursts_report_wheezing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--sources", "lung", "--lung-center", "220", "--lung-bandwidth", "80", "--out", s(d)]);
    ok(&["analyze", s(&d.join("mixture.wav"))]);
    assert_eq!(json(&d.join("mixture.lung.report.json"))["prediction"], "wheezing");
}

#[test]
fn analyze_accepts_separated_sources() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--duration", "6", "--out", s(d)]);
    ok(&["separate", s(&d.join("mixture.wav"))]);
    let stdout = ok(&["analyze", s(&d.join("mixture.heart.wav")), s(&d.join("mixture.lung.wav"))]);
    assert_eq!(stdout.lines().count(), 2);
    assert!(d.join("mixture.heart.report.json").is_file());
    assert!(d.join("mixture.lung.features.json").is_file());

    let out = biosep(&["analyze", s(&d.join("mixture.heart.wav")), s(&d.join("heart.wav"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_remote_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--duration", "3", "--out", s(d)]);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}/v1/complete");
    let out = biosep(&["analyze", s(&d.join("mixture.wav")), "--backend", "remote", "--llm-url", &url]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BackendUnreachable"));

    let out = biosep(&["analyze", s(&d.join("mixture.wav")), "--backend", "remote"]);
    assert_eq!(out.status.code(), Some(2));
}

fn spectrogram_rows(path: &Path) -> Vec<(f64, f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_s,freq_hz,magnitude_db"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

#[test]
fn plot_data_zero_signal_sits_on_floor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.wav");
    write_wav(&path, &Signal64::zeros(4000, 8000).unwrap()).unwrap();
    ok(&["plot-data", s(&path)]);
    let rows = spectrogram_rows(&dir.path().join("zero.spectrogram.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.2 == -80.0));
    let wave = fs::read_to_string(dir.path().join("zero.waveform.csv")).unwrap();
    assert_eq!(wave.lines().count(), 4001);
    assert!(fs::read_to_string(dir.path().join("zero.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn plot_data_tone_peaks_at_its_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let tone: Vec<f64> =
        (0..16000).map(|i| 0.5 * (2.0 * std::f64::consts::PI * 125.0 * i as f64 / 8000.0).sin()).collect();
    write_wav(&path, &Signal64::new(tone, 8000).unwrap()).unwrap();
    ok(&["plot-data", s(&path)]);
    let rows = spectrogram_rows(&dir.path().join("tone.spectrogram.csv"));
    let bin = 8000.0 / 1024.0;
    let mut frames = std::collections::BTreeMap::<u64, (f64, f64)>::new();
    for (t, f, db) in rows {
        let e = frames.entry(t.to_bits()).or_insert((f, db));
        if db > e.1 {
            *e = (f, db);
        }
    }
    assert!(frames.len() > 10);
    for (t, (f, db)) in &frames {
        assert!((f - 125.0).abs() <= bin, "peak at {f} Hz");
        // the zero-padded tail frame reads lower
        if f64::from_bits(*t) + 512.0 / 8000.0 <= 2.0 {
            assert!((db - 20.0 * 0.5f64.log10()).abs() < 0.1, "{db} dB");
        }
    }
}

#[test]
fn plot_data_directory_builds_figure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--duration", "4", "--out", s(d)]);
    ok(&["separate", s(&d.join("mixture.wav"))]);
    let plots = d.join("plots");
    ok(&["plot-data", s(d), "--out", s(&plots)]);
    let figure = fs::read_to_string(plots.join("mixture.figure.svg")).unwrap();
    let titles: Vec<usize> = ["mixture", "mixture.heart", "mixture.lung", "mixture.residual"]
        .iter()
        .map(|t| figure.find(&format!(">{t}</text>")).expect(t))
        .collect();
    assert!(titles.windows(2).all(|w| w[0] < w[1]), "mixture first, sources below");
    for f in ["mixture.waveform.csv", "mixture.lung.spectrogram.csv", "heart.svg"] {
        assert!(plots.join(f).is_file(), "{f}");
    }
}

#[test]
fn plot_data_missing_input() {
    let out = biosep(&["plot-data", "/no/such/file.wav"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FileNotFound"));
}
