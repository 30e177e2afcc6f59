//! Self-contained SVG boxplots, one file per (setting, metric).
//!
//! Each file has one panel per component. Inside a panel, boxes are grouped
//! by missing percentage and coloured by method. Whiskers reach the most
//! extreme values within 1.5 IQR of the box; anything beyond is drawn as a
//! point.

use filica_core::eval::EvalReport;
use filica_core::matrixio::format_f64;
use filica_core::stats::quantile_sorted;
use filica_core::Method;
use std::collections::BTreeMap;
use std::fmt::Write;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 70.0;
const GAP: f64 = 40.0;

fn colour(method: &str) -> &'static str {
    match method {
        "oracle" => "#4d4d4d",
        "filica" => "#1b9e77",
        "replace0" => "#d95f02",
        "completer" => "#7570b3",
        _ => "#e7298a",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let fence = 1.5 * (q3 - q1);
    let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= q1 - fence && x <= q3 + fence).collect();
    Some(BoxStats {
        q1,
        median: quantile_sorted(&v, 0.5),
        q3,
        lo_whisker: inside.first().copied().unwrap_or(q1),
        hi_whisker: inside.last().copied().unwrap_or(q3),
        outliers: v.into_iter().filter(|&x| x < q1 - fence || x > q3 + fence).collect(),
    })
}

type Panels = BTreeMap<usize, BTreeMap<u64, BTreeMap<(usize, String), Vec<f64>>>>;

fn method_rank(m: &str) -> usize {
    Method::ALL.iter().position(|x| x.as_str() == m).unwrap_or(Method::ALL.len())
}

/// File name and SVG text for every (setting, metric) in the report.
pub fn report_boxplots(report: &EvalReport) -> Vec<(String, String)> {
    let mut figures: BTreeMap<(String, String), Panels> = BTreeMap::new();
    for r in &report.rows {
        figures
            .entry((r.setting.clone(), r.metric.clone()))
            .or_default()
            .entry(r.component)
            .or_default()
            .entry(r.missing_pct.to_bits())
            .or_default()
            .entry((method_rank(&r.method), r.method.clone()))
            .or_default()
            .push(r.value);
    }
    figures
        .into_iter()
        .map(|((setting, metric), panels)| {
            let name = format!("boxplot_{setting}_{metric}.svg");
            (name, render(&format!("{setting}: {metric}"), &panels))
        })
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(title: &str, panels: &Panels) -> String {
    let all: Vec<f64> = panels
        .values()
        .flat_map(|g| g.values())
        .flat_map(|m| m.values())
        .flatten()
        .copied()
        .collect();
    let (mut lo, mut hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let y = |v: f64| MARGIN_T + PANEL_H * (hi - v) / (hi - lo);

    let methods: Vec<String> = {
        let mut m: Vec<(usize, String)> = panels
            .values()
            .flat_map(|g| g.values())
            .flat_map(|m| m.keys().cloned())
            .collect();
        m.sort();
        m.dedup();
        m.into_iter().map(|x| x.1).collect()
    };

    let n_panels = panels.len().max(1) as f64;
    let width = MARGIN_L + n_panels * (PANEL_W + GAP);
    let height = MARGIN_T + PANEL_H + MARGIN_B;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="15" text-anchor="middle">{}</text>"#, width / 2.0, esc(title));

    for (p, (component, groups)) in panels.iter().enumerate() {
        let x0 = MARGIN_L + p as f64 * (PANEL_W + GAP);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{MARGIN_T}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">component {component}</text>"#,
            x0 + PANEL_W / 2.0,
            MARGIN_T - 8.0
        );
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let yy = y(v);
            let _ = writeln!(s, r#"<line x1="{}" x2="{x0}" y1="{yy}" y2="{yy}" stroke="black"/>"#, x0 - 4.0);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
                x0 - 6.0,
                yy + 4.0,
                v
            );
        }
        let group_w = PANEL_W / groups.len().max(1) as f64;
        for (g, (pct_bits, by_method)) in groups.iter().enumerate() {
            let gx = x0 + g as f64 * group_w;
            let pct = f64::from_bits(*pct_bits);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}% missing</text>"#,
                gx + group_w / 2.0,
                MARGIN_T + PANEL_H + 18.0,
                format_f64(pct * 100.0).trim_end_matches(".0")
            );
            let slot = group_w / (methods.len() as f64 + 1.0);
            for ((_, method), values) in by_method {
                let Some(b) = box_stats(values) else { continue };
                let i = methods.iter().position(|m| m == method).unwrap_or(0);
                let cx = gx + slot * (i as f64 + 1.0);
                let half = slot * 0.35;
                let c = colour(method);
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx}" x2="{cx}" y1="{}" y2="{}" stroke="{c}"/>"#,
                    y(b.hi_whisker),
                    y(b.q3)
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx}" x2="{cx}" y1="{}" y2="{}" stroke="{c}"/>"#,
                    y(b.q1),
                    y(b.lo_whisker)
                );
                for w in [b.lo_whisker, b.hi_whisker] {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{}" x2="{}" y1="{}" y2="{}" stroke="{c}"/>"#,
                        cx - half / 2.0,
                        cx + half / 2.0,
                        y(w),
                        y(w)
                    );
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{c}" fill-opacity="0.35" stroke="{c}"><title>{} n={}</title></rect>"#,
                    cx - half,
                    y(b.q3),
                    2.0 * half,
                    (y(b.q1) - y(b.q3)).max(0.5),
                    esc(method),
                    values.len()
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{}" x2="{}" y1="{}" y2="{}" stroke="{c}" stroke-width="2"/>"#,
                    cx - half,
                    cx + half,
                    y(b.median),
                    y(b.median)
                );
                for o in &b.outliers {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{cx}" cy="{}" r="2.5" fill="none" stroke="{c}"/>"#,
                        y(*o)
                    );
                }
            }
        }
    }

    let ly = MARGIN_T + PANEL_H + 45.0;
    for (i, m) in methods.iter().enumerate() {
        let lx = MARGIN_L + i as f64 * 110.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            ly - 10.0,
            colour(m),
            lx + 16.0,
            ly,
            esc(m)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whiskers_stop_at_fences() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let b = box_stats(&v).unwrap();
        assert_eq!(b.q1, 3.25);
        assert_eq!(b.q3, 7.75);
        assert_eq!(b.hi_whisker, 9.0);
        assert_eq!(b.lo_whisker, 1.0);
        assert_eq!(b.outliers, vec![100.0]);
    }

    #[test]
    fn empty_box() {
        assert!(box_stats(&[]).is_none());
    }
}
