//! Minimal SVG rendering: a waveform trace above a spectrogram heatmap per signal.

use std::fmt::Write;

use biosep::Signal64;
use ndarray::Array2;

const WIDTH: f64 = 800.0;
const LEFT: f64 = 70.0;
const WAVE_H: f64 = 100.0;
const SPEC_H: f64 = 160.0;
const TITLE_H: f64 = 24.0;
const GAP: f64 = 30.0;
const PANEL_H: f64 = TITLE_H + WAVE_H + 8.0 + SPEC_H + GAP;
const MAX_COLS: usize = 160;
const MAX_ROWS: usize = 96;

pub struct Panel<'a> {
    pub title: &'a str,
    pub signal: &'a Signal64,
    /// Bins × frames, in dB between `floor_db` and 0.
    pub db: &'a Array2<f64>,
    pub max_freq_hz: f64,
}

/// Stacks `panels` top to bottom; waveforms share the amplitude scale.
pub fn render(panels: &[Panel], floor_db: f64) -> String {
    let peak = panels.iter().flat_map(|p| p.signal.samples().iter().map(|x| x.abs())).fold(0.0, f64::max).max(1e-12);
    let height = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="11">"#,
        w = LEFT + WIDTH + 10.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let top = i as f64 * PANEL_H;
        let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.1}" font-size="14">{}</text>"#, top + 16.0, escape(p.title));
        waveform(&mut s, p.signal, peak, top + TITLE_H);
        heatmap(&mut s, p, floor_db, top + TITLE_H + WAVE_H + 8.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn waveform(s: &mut String, signal: &Signal64, peak: f64, top: f64) {
    let mid = top + WAVE_H / 2.0;
    let scale = WAVE_H / 2.0 / peak;
    let _ =
        writeln!(s, r##"<rect x="{LEFT}" y="{top:.1}" width="{WIDTH}" height="{WAVE_H}" fill="none" stroke="#ccc"/>"##);
    let x = signal.samples();
    let n = x.len();
    let cols = (WIDTH as usize).min(n);
    let mut d = String::new();
    for c in 0..cols {
        let chunk = &x[c * n / cols..((c + 1) * n / cols).max(c * n / cols + 1)];
        let lo = chunk.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let px = LEFT + (c as f64 + 0.5) * WIDTH / cols as f64;
        let _ = write!(d, "M{px:.1},{:.1}V{:.1}", mid - hi * scale, mid - lo * scale + 0.5);
    }
    let _ = writeln!(s, r##"<path d="{d}" stroke="#1f4e79" stroke-width="1" fill="none"/>"##);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#, LEFT - 4.0, top + 10.0, peak);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2} s</text>"#,
        LEFT + WIDTH,
        top + WAVE_H + 6.0,
        signal.duration_s()
    );
}

fn heatmap(s: &mut String, p: &Panel, floor_db: f64, top: f64) {
    let (bins, frames) = p.db.dim();
    if bins == 0 || frames == 0 {
        return;
    }
    let rows = bins.min(MAX_ROWS);
    let cols = frames.min(MAX_COLS);
    let (cw, rh) = (WIDTH / cols as f64, SPEC_H / rows as f64);
    for r in 0..rows {
        let (b0, b1) = (r * bins / rows, ((r + 1) * bins / rows).max(r * bins / rows + 1));
        for c in 0..cols {
            let (f0, f1) = (c * frames / cols, ((c + 1) * frames / cols).max(c * frames / cols + 1));
            let v = p.db.slice(ndarray::s![b0..b1, f0..f1]).iter().copied().fold(floor_db, f64::max);
            let y = top + SPEC_H - (r + 1) as f64 * rh;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + c as f64 * cw,
                cw + 0.05,
                rh + 0.05,
                color((v - floor_db) / -floor_db)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0} Hz</text>"#,
        LEFT - 4.0,
        top + 10.0,
        p.max_freq_hz
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0 Hz</text>"#, LEFT - 4.0, top + SPEC_H);
}

/// Dark-to-bright ramp over `t ∈ [0, 1]`.
fn color(t: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [0.0, 0.0, 4.0]),
        (0.25, [81.0, 18.0, 124.0]),
        (0.5, [183.0, 55.0, 121.0]),
        (0.75, [252.0, 137.0, 97.0]),
        (1.0, [252.0, 253.0, 191.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let i = STOPS.iter().position(|(p, _)| *p >= t).unwrap_or(STOPS.len() - 1).max(1);
    let ((p0, c0), (p1, c1)) = (STOPS[i - 1], STOPS[i]);
    let u = (t - p0) / (p1 - p0);
    let ch = |k: usize| (c0[k] + u * (c1[k] - c0[k])).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_ramp_ends() {
        assert_eq!(color(0.0), "#000004");
        assert_eq!(color(1.0), "#fcfdbf");
        assert_eq!(color(-3.0), color(0.0));
    }

    #[test]
    fn renders_one_group_per_panel() {
        let sig = Signal64::new((0..400).map(|i| (i as f64 * 0.1).sin()).collect(), 8000).unwrap();
        let db = Array2::from_elem((5, 3), -80.0);
        let p = Panel { title: "a<b", signal: &sig, db: &db, max_freq_hz: 4000.0 };
        let svg = render(&[p], -80.0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches(r##"fill="#000004""##).count(), 15);
    }
}
