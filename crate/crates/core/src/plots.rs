//! SVG figures and CSV tables built from the JSON-lines result files.

use crate::eval::{AttemptLog, HikeLog, SuiteRow, TraceLog};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: unrecognised record: {msg}")]
    Record { path: PathBuf, line: usize, msg: String },
    #[error("no result records found in {0}")]
    Empty(PathBuf),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ResultLine {
    Hike(HikeLog),
    Trace(TraceLog),
    Attempt(AttemptLog),
}

#[derive(Debug, Default)]
pub struct Results {
    pub hikes: Vec<HikeLog>,
    pub traces: Vec<TraceLog>,
    pub attempts: Vec<AttemptLog>,
}

impl Results {
    pub fn is_empty(&self) -> bool {
        self.hikes.is_empty() && self.traces.is_empty() && self.attempts.is_empty()
    }

    pub fn push_line(&mut self, line: &str) -> Result<(), serde_json::Error> {
        match serde_json::from_str::<ResultLine>(line)? {
            ResultLine::Hike(h) => self.hikes.push(h),
            ResultLine::Trace(t) => self.traces.push(t),
            ResultLine::Attempt(a) => self.attempts.push(a),
        }
        Ok(())
    }
}

/// Reads every `*.jsonl` file directly under `dir`, in name order.
pub fn read_results(dir: &Path) -> Result<Results, PlotError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PlotError::Io { path, source }
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Results::default();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(io(&f))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push_line(line).map_err(|e| PlotError::Record {
                path: f.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
    }
    Ok(out)
}

/// Writes all figures and tables for `results_dir` into `out_dir` and
/// returns the created paths.
pub fn emit_plots(results_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let res = read_results(results_dir)?;
    if res.is_empty() {
        log::warn!("no results in {}: nothing to plot", results_dir.display());
        return Err(PlotError::Empty(results_dir.to_path_buf()));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| PlotError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), PlotError> {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|source| PlotError::Io { path: p.clone(), source })?;
        written.push(p);
        Ok(())
    };
    let mut by_model: BTreeMap<&str, Vec<&HikeLog>> = BTreeMap::new();
    for h in &res.hikes {
        by_model.entry(&h.model).or_default().push(h);
    }
    for (model, hs) in &by_model {
        let mut hs = hs.clone();
        hs.sort_by_key(|h| h.course);
        let bars: Vec<(String, f64)> = hs.iter().map(|h| (format!("{}", h.course), h.completed as f64)).collect();
        put(format!("hike_{}.svg", file_stem(model)), bar_chart_svg(&format!("{model}: hike length per course"), &bars))?;
    }
    for (i, t) in res.traces.iter().enumerate() {
        let pts: Vec<(f64, f64, f64)> = t.trace.iter().map(|s| (s.state.position[0], s.state.position[1], s.state.body_velocity[0])).collect();
        put(format!("xy_{}_{i:03}.svg", file_stem(&t.model)), xy_trace_svg(&format!("{} {}", t.model, t.label), &pts))?;
    }
    if !res.attempts.is_empty() {
        put("success.csv".into(), success_table_csv(&res.attempts)?)?;
    }
    Ok(written)
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// One row per (model, suite, renderer, rate).
pub fn success_table_csv(logs: &[AttemptLog]) -> Result<String, csv::Error> {
    let mut groups: BTreeMap<(String, String, String, String), Vec<AttemptLog>> = BTreeMap::new();
    for l in logs {
        groups
            .entry((l.model.clone(), l.suite.clone(), l.renderer.name().to_string(), l.inference_hz.to_string()))
            .or_default()
            .push(l.clone());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "suite", "renderer", "inference_hz", "attempts", "success_rate", "red_rate", "blue_rate"])?;
    for ((model, suite, _, _), ls) in &groups {
        let r = SuiteRow::from_logs(model, ls[0].renderer, ls[0].inference_hz, ls);
        w.write_record([
            model.clone(),
            suite.clone(),
            r.renderer.name().to_string(),
            r.inference_hz.to_string(),
            r.attempts.to_string(),
            format!("{:.4}", r.success_rate),
            format!("{:.4}", r.red_rate),
            format!("{:.4}", r.blue_rate),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn bar_chart_svg(title: &str, bars: &[(String, f64)]) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (50.0, 20.0, 40.0, 40.0);
    let ymax = bars.iter().map(|b| b.1).fold(1.0f64, f64::max);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let slot = pw / bars.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, esc(title));
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let y = top + ph - ph * k as f64 / 4.0;
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, w - right);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{v:.0}</text>"#, left - 4.0, y + 3.0);
    }
    for (i, (label, v)) in bars.iter().enumerate() {
        let bh = ph * v / ymax;
        let x = left + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#4477aa"><title>{} = {v}</title></rect>"##,
            top + ph - bh,
            slot * 0.7,
            esc(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            x + slot * 0.35,
            h - bottom + 14.0,
            esc(label)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">course</text>"#, left + pw / 2.0, h - 8.0);
    s.push_str("</svg>\n");
    s
}

/// Piecewise-linear approximation of the viridis map on [0,1].
pub fn colormap(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Top-down path; each segment is colored by forward speed, with a colorbar.
pub fn xy_trace_svg(title: &str, pts: &[(f64, f64, f64)]) -> String {
    let (w, h) = (520.0, 460.0);
    let (left, top, size) = (40.0, 40.0, 380.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let (mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, v) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1, v0, v1) = (0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-6) * 1.1;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let px = |x: f64| left + size * ((x - cx) / span + 0.5);
    // north up: +y world maps to smaller SVG y
    let py = |y: f64| top + size * (0.5 - (y - cy) / span);
    let vspan = (v1 - v0).max(1e-9);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, esc(title));
    let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{size}" height="{size}" fill="none" stroke="#999"/>"##);
    for p in pts.windows(2) {
        let (r, g, b) = colormap(((p[0].2 + p[1].2) / 2.0 - v0) / vspan);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="rgb({r},{g},{b})" stroke-width="2.5" stroke-linecap="round"/>"#,
            px(p[0].0),
            py(p[0].1),
            px(p[1].0),
            py(p[1].1)
        );
    }
    if let Some(&(x, y, _)) = pts.first() {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="black"/>"#, px(x), py(y));
    }
    let bx = left + size + 30.0;
    let n = 32;
    for k in 0..n {
        let (r, g, b) = colormap(k as f64 / (n - 1) as f64);
        let seg = size / n as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{:.2}" width="16" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
            top + size - seg * (k + 1) as f64,
            seg + 0.5
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif">{v1:.2}</text>"#, bx + 20.0, top + 8.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif">{v0:.2}</text>"#, bx + 20.0, top + size);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">v_x [m/s]</text>"#, bx - 10.0, top + size + 20.0);
    s.push_str("</svg>\n");
    s
}
