//! Figure tables and their SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::Result;
use crate::pipeline::{max_r2_rows, LayerRecord, MaxR2Row};
use crate::stats::LadderEntry;

pub const DEPTH_BINS: usize = 10;

/// Mean ± standard error of one metric in one (multilingual, depth bin)
/// cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBinRow {
    pub multilingual: bool,
    pub depth_bin: usize,
    pub bin_start: f64,
    pub bin_end: f64,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FertilityRow {
    pub language: Language,
    pub multilingual: bool,
    pub word: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn depth_bin(depth: f64) -> usize {
    ((depth * DEPTH_BINS as f64).floor() as usize).min(DEPTH_BINS - 1)
}

/// Mean and standard error (sample sd / √n); the error is NaN for n = 1.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Rows per (multilingual, depth bin) over layer records where `metric`
/// is defined.
pub fn depth_profile(layers: &[LayerRecord], metric: impl Fn(&LayerRecord) -> Option<f64>) -> Vec<DepthBinRow> {
    let mut cells: BTreeMap<(bool, usize), Vec<f64>> = BTreeMap::new();
    for r in layers {
        if let Some(v) = metric(r) {
            cells.entry((r.multilingual, depth_bin(r.depth))).or_default().push(v);
        }
    }
    cells
        .into_iter()
        .map(|((multilingual, bin), v)| {
            let (mean, se) = mean_se(&v);
            DepthBinRow {
                multilingual,
                depth_bin: bin,
                bin_start: bin as f64 / DEPTH_BINS as f64,
                bin_end: (bin + 1) as f64 / DEPTH_BINS as f64,
                n: v.len(),
                mean,
                se,
            }
        })
        .collect()
}

pub fn fig1_max_r2_by_size(layers: &[LayerRecord]) -> Vec<MaxR2Row> {
    max_r2_rows(layers)
}

pub fn fig2a_isotropy_by_depth(layers: &[LayerRecord]) -> Vec<DepthBinRow> {
    depth_profile(layers, |r| r.mean_ci)
}

pub fn fig2b_attention_by_depth(layers: &[LayerRecord]) -> Vec<DepthBinRow> {
    depth_profile(layers, |r| r.max_attn)
}

/// Target and cue fertility per (language, multilingual), one value per
/// (model, dataset) cell.
pub fn fig4_token_fertility(layers: &[LayerRecord]) -> Vec<FertilityRow> {
    let mut first: BTreeMap<(&str, &str), &LayerRecord> = BTreeMap::new();
    for r in layers {
        let e = first.entry((&r.model_id, &r.dataset_id)).or_insert(r);
        if r.layer < e.layer {
            *e = r;
        }
    }
    let mut cells: BTreeMap<(Language, bool, &str), Vec<f64>> = BTreeMap::new();
    for r in first.values() {
        cells.entry((r.language, r.multilingual, "target")).or_default().push(r.mean_target_tokens);
        cells.entry((r.language, r.multilingual, "cue")).or_default().push(r.mean_cue_tokens);
    }
    cells
        .into_iter()
        .map(|((language, multilingual, word), v)| {
            let (mean, se) = mean_se(&v);
            FertilityRow { language, multilingual, word: word.to_string(), n: v.len(), mean, se }
        })
        .collect()
}

pub fn read_ladder_csv(bytes: &[u8]) -> Result<Vec<LadderEntry<f64>>> {
    crate::pipeline::records::from_csv(bytes)
}

// SVG.

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let bounds = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = bounds(&mut xs.clone());
        let (y0, y1) = bounds(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        H - PAD - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg(title: &str, x_label: &str, y_label: &str, frame: Option<&Frame>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 18.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
        escape(y_label),
        y = H / 2.0
    );
    if let Some(f) = frame {
        for k in 0..=4 {
            let v = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, PAD - 6.0, f.y(v) + 4.0);
            let u = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{u:.2}</text>"#, f.x(u), H - PAD + 16.0);
        }
    }
    s
}

fn legend(s: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = PAD + 16.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 120.0,
            y - 9.0,
            W - PAD - 105.0,
            y,
            escape(name)
        );
    }
}

/// Points per series, optionally joined by lines and with vertical error
/// bars.
pub fn xy_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64, f64)>)],
    lines: bool,
) -> String {
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let ys = series.iter().flat_map(|(_, p)| {
        p.iter().flat_map(|q| {
            let e = if q.2.is_finite() { q.2 } else { 0.0 };
            [q.1 - e, q.1 + e]
        })
    });
    let f = Frame::new(xs, ys);
    let mut s = open_svg(title, x_label, y_label, Some(&f));
    for (i, (_, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        if lines && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", f.x(p.0), f.y(p.1))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "));
        }
        for &(x, y, e) in pts {
            if e.is_finite() && e > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{c}"/>"#,
                    f.y(y - e),
                    f.y(y + e),
                    x = f.x(x)
                );
            }
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{c}"/>"#, f.x(x), f.y(y));
        }
    }
    legend(&mut s, &series.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// One vertical bar per entry, from zero.
pub fn bar_svg(title: &str, y_label: &str, bars: &[(String, f64, usize)], legend_names: &[String]) -> String {
    let ys = bars.iter().map(|b| b.1).chain(std::iter::once(0.0));
    let f = Frame::new([0.0, 1.0].into_iter(), ys);
    let mut s = open_svg(title, "", y_label, None);
    for k in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, PAD - 6.0, f.y(v) + 4.0);
    }
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    for (i, (label, v, color)) in bars.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.15;
        let (top, bottom) = if *v >= 0.0 { (f.y(*v), f.y(0.0)) } else { (f.y(0.0), f.y(*v)) };
        let c = COLORS[color % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{c}"/>"#,
            slot * 0.7,
            (bottom - top).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            x + slot * 0.35,
            H - PAD + 14.0,
            escape(label)
        );
    }
    legend(&mut s, legend_names);
    s.push_str("</svg>\n");
    s
}

fn status(multi: bool) -> String {
    if multi { "multilingual" } else { "monolingual" }.to_string()
}

pub fn fig1_svg(rows: &[MaxR2Row]) -> String {
    let series: Vec<(String, Vec<(f64, f64, f64)>)> = [false, true]
        .into_iter()
        .map(|m| {
            let pts = rows.iter().filter(|r| r.multilingual == m).map(|r| (r.log_params, r.max_r2, 0.0)).collect();
            (status(m), pts)
        })
        .collect();
    xy_svg("Maximal R\u{b2} by model size", "log parameter count", "max R\u{b2}", &series, false)
}

pub fn depth_svg(title: &str, y_label: &str, rows: &[DepthBinRow]) -> String {
    let series: Vec<(String, Vec<(f64, f64, f64)>)> = [false, true]
        .into_iter()
        .map(|m| {
            let pts = rows
                .iter()
                .filter(|r| r.multilingual == m)
                .map(|r| ((r.bin_start + r.bin_end) / 2.0, r.mean, r.se))
                .collect();
            (status(m), pts)
        })
        .collect();
    xy_svg(title, "layer depth", y_label, &series, true)
}

pub fn fig3_svg(entries: &[LadderEntry<f64>]) -> String {
    let bars: Vec<(String, f64, usize)> = entries.iter().map(|e| (e.label.clone(), e.delta_aic, 0)).collect();
    bar_svg("AIC relative to baseline", "\u{394}AIC", &bars, &[])
}

pub fn fig4_svg(rows: &[FertilityRow]) -> String {
    let bars: Vec<(String, f64, usize)> = rows
        .iter()
        .map(|r| (format!("{} {}", r.language, r.word), r.mean, usize::from(r.multilingual)))
        .collect();
    bar_svg("Tokens per word", "mean tokens", &bars, &[status(false), status(true)])
}
