use crate::error::{Error, Result};

use super::result::RunResult;

pub fn percent(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn check_benchmarks(results: &[RunResult]) -> Result<&str> {
    let first = results.first().ok_or_else(|| Error::Usage("no results to compare".into()))?;
    if let Some(other) = results.iter().find(|r| r.benchmark != first.benchmark) {
        return Err(Error::Usage(format!(
            "results mix benchmarks `{}` and `{}`",
            first.benchmark, other.benchmark
        )));
    }
    Ok(&first.benchmark)
}

fn sorted(results: &[RunResult]) -> Vec<&RunResult> {
    let mut rows: Vec<&RunResult> = results.iter().collect();
    rows.sort_by_key(|r| r.method.rank());
    rows
}

/// Final accuracy per method as percentages, in the fixed method order.
pub fn compare(results: &[RunResult]) -> Result<String> {
    let bench = check_benchmarks(results)?;
    let rows = sorted(results);
    let width = rows.iter().map(|r| r.method.label().len()).max().unwrap_or(0).max(6);
    let mut out = format!("Final test accuracy (%) on {bench}\n");
    out.push_str(&format!("{:<width$}  {:>18}  {:>5}\n", "Method", "Accuracy", "Seeds"));
    for r in rows {
        let acc = format!("{} (± {})", percent(r.mean), percent(r.sem));
        out.push_str(&format!("{:<width$}  {:>18}  {:>5}\n", r.method.label(), acc, r.seeds.len()));
    }
    Ok(out)
}

pub fn compare_csv(results: &[RunResult]) -> Result<String> {
    let bench = check_benchmarks(results)?;
    let mut out = String::from("method,benchmark,mean_pct,sem_pct,seeds\n");
    for r in sorted(results) {
        out.push_str(&format!(
            "{},{bench},{},{},{}\n",
            r.method.as_str(),
            percent(r.mean),
            percent(r.sem),
            r.seeds.len()
        ));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 120.0;

fn frame(title: &str, body: &str, y_label: &str) -> String {
    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    s.push_str(&format!("<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    ));
    let (x0, y0, y1) = (LEFT, TOP, H - BOTTOM);
    s.push_str(&format!("<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"));
    s.push_str(&format!("<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{}\" y2=\"{y1}\" stroke=\"black\"/>\n", W - RIGHT));
    for k in 0..=5 {
        let v = k as f64 * 20.0;
        let y = y1 - (y1 - y0) * v / 100.0;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{x0}\" y2=\"{y:.1}\" stroke=\"black\"/>\n<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v}</text>\n",
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
    s.push_str(body);
    s.push_str("</svg>\n");
    s
}

fn y_of(acc: f64) -> f64 {
    let (y0, y1) = (TOP, H - BOTTOM);
    y1 - (y1 - y0) * (100.0 * acc).clamp(0.0, 100.0) / 100.0
}

/// Method against mean accuracy, with SEM whiskers.
pub fn bar_chart_svg(results: &[RunResult]) -> Result<String> {
    let bench = check_benchmarks(results)?;
    let rows = sorted(results);
    let slot = (W - LEFT - RIGHT) / rows.len() as f64;
    let mut body = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let bw = slot * 0.6;
        let top = y_of(r.mean);
        body.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{top:.1}\" width=\"{bw:.1}\" height=\"{:.1}\" fill=\"#4a7ab5\"/>\n",
            cx - bw / 2.0,
            (H - BOTTOM) - top
        ));
        let (hi, lo) = (y_of(r.mean + r.sem), y_of(r.mean - r.sem));
        body.push_str(&format!(
            "<line x1=\"{cx:.1}\" y1=\"{hi:.1}\" x2=\"{cx:.1}\" y2=\"{lo:.1}\" stroke=\"black\"/>\n<line x1=\"{:.1}\" y1=\"{hi:.1}\" x2=\"{:.1}\" y2=\"{hi:.1}\" stroke=\"black\"/>\n<line x1=\"{:.1}\" y1=\"{lo:.1}\" x2=\"{:.1}\" y2=\"{lo:.1}\" stroke=\"black\"/>\n",
            cx - 4.0,
            cx + 4.0,
            cx - 4.0,
            cx + 4.0
        ));
        body.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            top - 6.0,
            percent(r.mean)
        ));
        let ly = H - BOTTOM + 12.0;
        body.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" transform=\"rotate(-40 {cx:.1} {ly:.1})\">{}</text>\n",
            escape(r.method.label())
        ));
    }
    Ok(frame(&format!("Final test accuracy on {bench}"), &body, "accuracy (%)"))
}

/// Accuracy against the number of importance samples on a log axis.
pub fn sample_curve_svg(curve: &[(usize, f64, f64)]) -> Result<String> {
    if curve.is_empty() {
        return Err(Error::Usage("no importance-sample series to plot".into()));
    }
    let lmin = (curve.iter().map(|c| c.0).min().unwrap_or(1).max(1) as f64).log10().floor();
    let lmax = (curve.iter().map(|c| c.0).max().unwrap_or(1).max(1) as f64).log10().ceil().max(lmin + 1.0);
    let x_of = |s: usize| LEFT + 20.0 + (W - LEFT - RIGHT - 40.0) * ((s.max(1) as f64).log10() - lmin) / (lmax - lmin);
    let mut body = String::new();
    let pts: Vec<String> = curve.iter().map(|&(s, m, _)| format!("{:.1},{:.1}", x_of(s), y_of(m))).collect();
    body.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#b5524a\" stroke-width=\"2\"/>\n",
        pts.join(" ")
    ));
    for &(s, m, e) in curve {
        let x = x_of(s);
        body.push_str(&format!(
            "<circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#b5524a\"/>\n<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            y_of(m),
            y_of(m + e),
            y_of(m - e)
        ));
        body.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{s}</text>\n",
            H - BOTTOM + 16.0
        ));
    }
    body.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">importance samples S (log scale)</text>\n",
        W / 2.0,
        H - BOTTOM + 40.0
    ));
    Ok(frame("Accuracy against importance samples", &body, "accuracy (%)"))
}
