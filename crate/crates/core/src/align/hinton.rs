//! Hinton diagrams of an importance matrix: factors on the y-axis, neurons
//! on the x-axis, square side proportional to importance / matrix max.
//! Aligned cells are outlined.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::write_atomic;
use crate::error::Result;
use crate::infotheory::ImportanceMatrix;

use super::Alignment;

const CELL: f64 = 40.0;
const LEFT: f64 = 90.0;
const TOP: f64 = 30.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG 1.1 document. Output is byte-identical for identical inputs.
pub fn hinton_svg(imp: &ImportanceMatrix, alignment: &Alignment, factor_names: Option<&[String]>) -> String {
    let (n, m) = (imp.num_factors(), imp.num_neurons());
    let max = imp.max();
    let width = LEFT + CELL * m as f64 + 10.0;
    let height = TOP + CELL * n as f64 + 10.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect class="background" x="{LEFT:.0}" y="{TOP:.0}" width="{:.0}" height="{:.0}" fill="#eeeeee"/>"##,
        CELL * m as f64,
        CELL * n as f64
    );
    for i in 0..m {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12" text-anchor="middle">z{i}</text>"#,
            LEFT + CELL * (i as f64 + 0.5),
            TOP - 10.0
        );
    }
    for j in 0..n {
        let label = factor_names
            .and_then(|names| names.get(j).cloned())
            .unwrap_or_else(|| format!("g{j}"));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            TOP + CELL * (j as f64 + 0.5) + 4.0,
            escape(&label)
        );
        for i in 0..m {
            let v = imp.get(j, i);
            if max > 0.0 && v > 0.0 {
                let side = 0.9 * CELL * v / max;
                let x = LEFT + CELL * i as f64 + (CELL - side) / 2.0;
                let y = TOP + CELL * j as f64 + (CELL - side) / 2.0;
                let _ = writeln!(
                    svg,
                    r##"<rect class="square" x="{x:.3}" y="{y:.3}" width="{side:.3}" height="{side:.3}" fill="#222222"><title>g{j} z{i}: {v:.4}</title></rect>"##
                );
            }
        }
    }
    for (j, &i) in alignment.assignment.iter().enumerate() {
        let _ = writeln!(
            svg,
            r##"<rect class="aligned" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
            LEFT + CELL * i as f64 + 1.0,
            TOP + CELL * j as f64 + 1.0,
            CELL - 2.0,
            CELL - 2.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Terminal rendering: each cell is up to eight `#`, aligned cells are
/// bracketed.
pub fn hinton_text(imp: &ImportanceMatrix, alignment: &Alignment, factor_names: Option<&[String]>) -> String {
    let (n, m) = (imp.num_factors(), imp.num_neurons());
    let max = imp.max();
    let names: Vec<String> = (0..n)
        .map(|j| {
            factor_names
                .and_then(|names| names.get(j).cloned())
                .unwrap_or_else(|| format!("g{j}"))
        })
        .collect();
    let label_w = names.iter().map(String::len).max().unwrap_or(0);
    let mut out = format!("{:label_w$} ", "");
    for i in 0..m {
        let _ = write!(out, " {:^10}", format!("z{i}"));
    }
    out.push('\n');
    for (j, name) in names.iter().enumerate() {
        let _ = write!(out, "{name:>label_w$} ");
        for i in 0..m {
            let level = if max > 0.0 {
                (8.0 * imp.get(j, i) / max).round() as usize
            } else {
                0
            };
            let blocks = format!("{:<8}", "#".repeat(level));
            if alignment.assignment.get(j) == Some(&i) {
                let _ = write!(out, " [{blocks}]");
            } else {
                let _ = write!(out, "  {blocks} ");
            }
        }
        out.push('\n');
    }
    out
}

/// Writes [`hinton_svg`] to `path`.
pub fn export_hinton(
    imp: &ImportanceMatrix,
    alignment: &Alignment,
    factor_names: Option<&[String]>,
    path: &Path,
) -> Result<()> {
    write_atomic(path, hinton_svg(imp, alignment, factor_names).as_bytes())
}
