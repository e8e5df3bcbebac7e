//! Experiment configuration: model specification (builtin or JSON file),
//! deterministic seeding, and the config hash embedded in every output.

use glaubex_core::flip_model::{
    builtin_constant, builtin_demasi, builtin_theta, LocalRateTable, Model,
};
use serde::Deserialize;
use std::path::Path;

/// On-disk model description. `rates` is indexed by the canonical ball
/// order (bit j of the local-vector mask = spin at canonical offset j).
#[derive(Debug, Deserialize)]
pub struct ModelFile {
    pub d: u8,
    pub m: usize,
    pub kind: String,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
}

pub fn load_model(
    model: &str,
    gamma: Option<f64>,
    theta: Option<f64>,
    d: u8,
    m: usize,
) -> Result<Model, String> {
    match model {
        "demasi" => {
            let g = gamma.ok_or("--model demasi requires --gamma")?;
            Model::demasi(g).map_err(|e| e.to_string())
        }
        "theta" => {
            let th = theta.ok_or("--model theta requires --theta")?;
            Model::theta(th).map_err(|e| e.to_string())
        }
        "constant" => Model::constant(d, m).map_err(|e| e.to_string()),
        path => {
            let text = std::fs::read_to_string(Path::new(path))
                .map_err(|e| format!("cannot read model file {path}: {e}"))?;
            let file: ModelFile =
                serde_json::from_str(&text).map_err(|e| format!("bad model file {path}: {e}"))?;
            let table = match file.kind.as_str() {
                "demasi" => builtin_demasi(file.gamma.ok_or("model file: demasi needs gamma")?),
                "theta" => builtin_theta(file.theta.ok_or("model file: theta needs theta")?),
                "constant" => builtin_constant(file.d, file.m),
                "table" => LocalRateTable::new(
                    file.d,
                    file.m,
                    file.rates.ok_or("model file: table needs rates")?,
                ),
                other => return Err(format!("unknown model kind {other}")),
            }
            .map_err(|e| e.to_string())?;
            if file.kind == "demasi" {
                Model::demasi(file.gamma.unwrap()).map_err(|e| e.to_string())
            } else {
                Model::new(table).map_err(|e| e.to_string())
            }
        }
    }
}

/// FNV-1a 64 over the canonical config string; stable across platforms and
/// part of the output format contract.
pub fn config_hash(canonical: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn parse_times(spec: &str) -> Result<Vec<f64>, String> {
    let out: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let times = out.map_err(|e| format!("bad --times: {e}"))?;
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err("--times must be a sorted comma-separated list".into());
    }
    Ok(times)
}

pub fn parse_sides(spec: &str) -> Result<Vec<u32>, String> {
    let out: Result<Vec<u32>, _> = spec.split(',').map(|s| s.trim().parse::<u32>()).collect();
    out.map_err(|e| format!("bad --L: {e}"))
}
