//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export returns a JSON string; the plain `*_json` functions carry
//! the logic and are what the native tests exercise.

use detangle_core::align::{align, hinton_svg, AlignMode};
use detangle_core::metrics::{evaluate, MetricConfig, MetricReport};
use detangle_core::synth::{colour_shape_population, generate, GeneratorKind, GeneratorSpec};
use detangle_core::{ImportanceMatrix, RepresentationSet};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Rows echoed back for the scatter plot.
const MAX_POINTS: usize = 600;

fn mode(injective: bool) -> AlignMode {
    if injective {
        AlignMode::Injective
    } else {
        AlignMode::Greedy
    }
}

fn summarize(set: &RepresentationSet, injective: bool) -> Result<Value, String> {
    let config = MetricConfig {
        align: mode(injective),
        linear_probe: false,
        ..MetricConfig::default()
    };
    let report: MetricReport = evaluate(set, &config).map_err(|e| e.to_string())?;
    let names = report.factors.clone();
    let svg = hinton_svg(&report.importance, &report.alignment, Some(&names));
    let scores = &report.per_factor;
    Ok(json!({
        "factors": names,
        "assignment": report.alignment.assignment,
        "snc": scores.snc,
        "nk": scores.nk,
        "mig": scores.mig,
        "sap": scores.sap,
        "mlp": scores.mlp,
        "dci": { "d": report.dci.disentanglement, "c": report.dci.completeness, "i": report.dci.informativeness },
        "table": report.text_table(),
        "svg": svg,
    }))
}

fn points(set: &RepresentationSet, factor: usize) -> Vec<[f64; 3]> {
    let step = set.len().div_ceil(MAX_POINTS).max(1);
    (0..set.len())
        .step_by(step)
        .map(|i| [set.neuron(0)[i], set.neuron(1)[i], set.factor(factor)[i] as f64])
        .collect()
}

/// Colour/shape toy where `z1` matches shape in `agreement_percent` of rows.
pub fn colour_shape_json(agreement_percent: u32, injective: bool) -> Result<String, String> {
    if agreement_percent > 100 {
        return Err("agreement must be between 0 and 100".into());
    }
    let set = colour_shape_population(Some((agreement_percent as usize, 100)), 1).map_err(|e| e.to_string())?;
    let mut out = summarize(&set, injective)?;
    out["points"] = json!(points(&set, 1));
    Ok(out.to_string())
}

/// Parses one matrix row per line, entries split by commas or whitespace.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(r, line)| {
            line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| format!("row {}: `{t}` is not a number", r + 1)))
                .collect()
        })
        .collect()
}

/// Alignment and Hinton diagram of a factor × neuron matrix typed by the user.
pub fn hinton_json(matrix: &str, injective: bool) -> Result<String, String> {
    let rows = parse_matrix(matrix)?;
    let imp = ImportanceMatrix::from_rows(rows).map_err(|e| e.to_string())?;
    let alignment = align(&imp, mode(injective)).map_err(|e| e.to_string())?;
    Ok(json!({
        "assignment": alignment.assignment,
        "objective": alignment.objective_value,
        "svg": hinton_svg(&imp, &alignment, None),
    })
    .to_string())
}

/// Two-factor ideal code rotated by `angle_degrees`.
pub fn rotation_json(angle_degrees: f64, noise: f64, seed: u32) -> Result<String, String> {
    if !angle_degrees.is_finite() {
        return Err("angle must be finite".into());
    }
    let angle = angle_degrees.to_radians().rem_euclid(std::f64::consts::TAU);
    let spec = GeneratorSpec::new(GeneratorKind::Rotated { angle })
        .sampled(30)
        .with_noise(noise)
        .with_seed(seed as u64);
    let set = generate(&spec).map_err(|e| e.to_string())?;
    let mut out = summarize(&set, true)?;
    out["points"] = json!(points(&set, 0));
    Ok(out.to_string())
}

#[wasm_bindgen]
pub fn colour_shape(agreement_percent: u32, injective: bool) -> Result<String, JsError> {
    colour_shape_json(agreement_percent, injective).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn hinton(matrix: &str, injective: bool) -> Result<String, JsError> {
    hinton_json(matrix, injective).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rotation(angle_degrees: f64, noise: f64, seed: u32) -> Result<String, JsError> {
    rotation_json(angle_degrees, noise, seed).map_err(|e| JsError::new(&e))
}
