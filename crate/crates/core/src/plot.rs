//! Minimal SVG line charts for CMC curves and training logs.

use std::fmt::Write;

use crate::evaluator::EvalReport;
use crate::trainer::{Stage, TrainingLog};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed y range; fitted to the data when absent.
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series>,
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = extent(all().map(|p| p.0));
        let (y0, y1) = self.y_range.unwrap_or_else(|| extent(all().map(|p| p.1)));
        let pw = WIDTH - 2.0 * MARGIN;
        let ph = HEIGHT - 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - MARGIN + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
                WIDTH - MARGIN,
                sy(yv),
                sy(yv)
            );
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, sy(yv) + 4.0, tick(yv));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
            let ly = MARGIN + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
                WIDTH - MARGIN - 8.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn cmc_chart(report: &EvalReport) -> Chart {
    let curve = |values: &[f64]| values.iter().enumerate().map(|(k, &v)| ((k + 1) as f64, v)).collect();
    let mut series = vec![Series { label: "mean".into(), points: curve(&report.cmc) }];
    if report.per_dataset.len() > 1 {
        series.extend(report.per_dataset.iter().map(|d| Series { label: d.dataset.clone(), points: curve(&d.cmc) }));
    }
    Chart {
        title: "CMC".into(),
        x_label: "rank".into(),
        y_label: "recognition rate".into(),
        y_range: Some((0.0, 1.0)),
        series,
    }
}

/// Global step index across stages, for plotting both stages on one axis.
fn global_steps(log: &TrainingLog) -> Vec<f64> {
    let stage1_end = log.records.iter().filter(|r| r.stage == Stage::One).map(|r| r.step).max().unwrap_or(0);
    log.records
        .iter()
        .map(|r| match r.stage {
            Stage::One => r.step as f64,
            Stage::Two => (stage1_end + r.step) as f64,
        })
        .collect()
}

pub fn train_rank1_chart(log: &TrainingLog) -> Chart {
    let steps = global_steps(log);
    let points =
        log.records.iter().zip(&steps).filter_map(|(r, &x)| r.cmc_rank1_train.map(|v| (x, v))).collect();
    Chart {
        title: "Training rank-1 CMC".into(),
        x_label: "step".into(),
        y_label: "rank-1".into(),
        y_range: Some((0.0, 1.0)),
        series: vec![Series { label: "train".into(), points }],
    }
}

pub fn center_loss_chart(log: &TrainingLog) -> Chart {
    let steps = global_steps(log);
    Chart {
        title: "Center loss".into(),
        x_label: "step".into(),
        y_label: "center loss".into(),
        y_range: None,
        series: vec![Series { label: "l_cs".into(), points: log.records.iter().zip(&steps).map(|(r, &x)| (x, r.l_cs)).collect() }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_and_deterministic() {
        let chart = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            y_range: None,
            series: vec![Series { label: "s".into(), points: vec![(1.0, 0.5), (2.0, 0.75), (3.0, 1.0)] }],
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg, chart.to_svg());
    }

    #[test]
    fn empty_series_still_render() {
        let chart = Chart { title: "t".into(), x_label: "x".into(), y_label: "y".into(), y_range: None, series: vec![] };
        assert!(chart.to_svg().contains("</svg>"));
    }
}
