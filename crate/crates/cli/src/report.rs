//! Batch summaries, CSV assembly and standalone SVG line plots.

use std::fmt::Write;

use qlma_core::optimizer::{format_f64, ConvergenceTrace};

pub const SUMMARY_HEADER: &str = "iteration,mean,best,worst,best_problem,worst_problem,backend";

/// Per-iteration mean over all runs plus the curves of the runs with the
/// lowest and highest cost at the last iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub backend: String,
    pub mean: Vec<f64>,
    pub best: Vec<f64>,
    pub worst: Vec<f64>,
    pub best_problem: String,
    pub worst_problem: String,
}

impl Summary {
    /// `runs` pairs a problem label with its trace; iterations `0..=iters`.
    pub fn new(runs: &[(String, ConvergenceTrace)], iters: usize) -> Summary {
        assert!(!runs.is_empty(), "summary of an empty batch");
        let curves: Vec<Vec<f64>> = runs
            .iter()
            .map(|(_, t)| (0..=iters).map(|k| t.cost_at(k)).collect())
            .collect();
        let last = |i: usize| curves[i][iters];
        let best = (0..runs.len())
            .min_by(|&a, &b| last(a).total_cmp(&last(b)))
            .unwrap();
        let worst = (0..runs.len())
            .max_by(|&a, &b| last(a).total_cmp(&last(b)))
            .unwrap();
        let mean = (0..=iters)
            .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / runs.len() as f64)
            .collect();
        Summary {
            backend: runs[0].1.backend.clone(),
            mean,
            best: curves[best].clone(),
            worst: curves[worst].clone(),
            best_problem: runs[best].0.clone(),
            worst_problem: runs[worst].0.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SUMMARY_HEADER);
        s.push('\n');
        for k in 0..self.mean.len() {
            writeln!(
                s,
                "{k},{},{},{},{},{},{}",
                format_f64(self.mean[k]),
                format_f64(self.best[k]),
                format_f64(self.worst[k]),
                self.best_problem,
                self.worst_problem,
                self.backend
            )
            .unwrap();
        }
        s
    }
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Line plot on a log10 cost axis (values are floored at 1e-12).
pub fn line_plot_svg(title: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let ln = |v: f64| v.max(1e-12).log10();
    let n = series
        .iter()
        .map(|s| s.values.len())
        .max()
        .unwrap_or(1)
        .max(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in series.iter().flat_map(|s| s.values.iter()) {
        lo = lo.min(ln(*v));
        hi = hi.max(ln(*v));
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let x = |i: usize| L + (W - L - R) * i as f64 / (n - 1) as f64;
    let y = |v: f64| T + (H - T - B) * (hi - ln(v)) / (hi - lo);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<path d="M{L},{T} V{} H{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    )
    .unwrap();
    for e in (lo as i64)..=(hi as i64) {
        let yy = y(10f64.powi(e as i32));
        writeln!(
            s,
            "<line x1=\"{}\" y1=\"{yy:.1}\" x2=\"{L}\" y2=\"{yy:.1}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">1e{e}</text>",
            L - 5.0,
            L - 8.0,
            yy + 4.0
        )
        .unwrap();
    }
    let step = ((n - 1) / 8).max(1);
    for i in (0..n).step_by(step) {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{i}</text>"#,
            x(i),
            H - B + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        (L + W - R) / 2.0,
        H - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">cost</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    )
    .unwrap();
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            ser.color,
            pts.join(" ")
        )
        .unwrap();
        let ly = T + 16.0 * k as f64 + 8.0;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - R - 150.0,
            W - R - 130.0,
            ser.color,
            W - R - 125.0,
            ly + 4.0,
            escape(ser.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
