//! Minimal static SVG bar charts for ablation summaries.

use std::path::Path;

use anyhow::Result;

/// Render labeled bars to an SVG file. Values may be any finite numbers;
/// the y axis starts at 0 (or the minimum, if negative).
pub fn bar_chart(path: &Path, title: &str, labels: &[String], values: &[f64]) -> Result<()> {
    assert_eq!(labels.len(), values.len());
    let width = 160 + labels.len().max(1) * 90;
    let height = 420;
    let plot_h = 280.0;
    let base_y = 340.0;

    let vmax = values.iter().cloned().fold(f64::EPSILON, f64::max);
    let vmin = values.iter().cloned().fold(0.0, f64::min);
    let span = (vmax - vmin).max(1e-9);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        width / 2,
        title
    ));
    svg.push_str(&format!(
        "<line x1=\"60\" y1=\"{base_y}\" x2=\"{}\" y2=\"{base_y}\" stroke=\"black\"/>\n",
        width - 40
    ));
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = 80 + i * 90;
        let h = ((v - vmin) / span * plot_h).max(1.0);
        let y = base_y - h;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y:.1}\" width=\"60\" height=\"{h:.1}\" fill=\"#4477aa\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.4}</text>\n",
            x + 30,
            y - 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" transform=\"rotate(-35 {} {})\">{}</text>\n",
            x + 30,
            base_y + 16.0,
            x + 30,
            base_y + 16.0,
            label
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}
