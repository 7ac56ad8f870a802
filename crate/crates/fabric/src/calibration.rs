//! Calibration file loading.
//!
//! The format is flat `key = value` text, one entry per line, `#` comments.
//! Every (backend, collective) pair the model prices must provide `alpha_us`
//! and `beta_us_per_byte`; the saturation keys are optional but must appear as
//! a pair. Unknown keys are errors, as are missing required keys, so a stale
//! or typo'd file fails loudly instead of silently mispricing.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cost::{kind_slot, BackendProfile, CollectiveCost, CollectiveKind, CostModel, Saturation};
use crate::error::FabricError;

/// The calibration shipped with the crate: an NVLink-connected 8-GPU node
/// persona fit by `examples/fit_calibration.rs`.
pub const DEFAULT_CALIBRATION_TEXT: &str = include_str!("../calibration/default.txt");

/// Unpopulated PCIe-profile slot; loading it reports the first missing key.
pub const PCIE_TEMPLATE_TEXT: &str = include_str!("../calibration/pcie_like.txt");

/// Parses and validates the default calibration. Panics only if the embedded
/// file is broken, which the test suite would catch.
pub fn default_cost_model() -> CostModel {
    parse_calibration(DEFAULT_CALIBRATION_TEXT).expect("embedded default calibration is valid")
}

pub fn load_calibration(path: &Path) -> Result<CostModel, FabricError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FabricError::Calibration(format!("cannot read {}: {e}", path.display())))?;
    parse_calibration(&text)
        .map_err(|e| FabricError::Calibration(format!("{}: {e}", path.display())))
}

/// Pairs that must carry alpha/beta keys. one_sided.reduce_scatter is absent:
/// that cost is composed, and giving it keys is an unknown-key error.
fn required_pairs() -> Vec<(BackendProfile, CollectiveKind)> {
    let mut pairs = Vec::new();
    for kind in CollectiveKind::ALL {
        pairs.push((BackendProfile::CollectiveOptimized, kind));
    }
    for kind in &CollectiveKind::ALL[..4] {
        pairs.push((BackendProfile::OneSided, *kind));
    }
    pairs
}

pub fn parse_calibration(text: &str) -> Result<CostModel, FabricError> {
    let mut entries: BTreeMap<String, f64> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            FabricError::Calibration(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value: f64 = value.trim().parse().map_err(|_| {
            FabricError::Calibration(format!("line {}: `{key}` has a non-numeric value", lineno + 1))
        })?;
        if entries.insert(key.clone(), value).is_some() {
            return Err(FabricError::Calibration(format!("duplicate key `{key}`")));
        }
    }

    // Validate against the schema before assembling, so unknown keys are
    // reported even when all required keys are present.
    let mut known: Vec<String> = vec![
        "compute.mem_bw_bytes_per_us".into(),
        "compute.kernel_overhead_us".into(),
    ];
    for (backend, kind) in required_pairs() {
        for param in ["alpha_us", "beta_us_per_byte", "sat_knee_bytes", "sat_beta_us_per_byte"] {
            known.push(format!("{}.{}.{param}", backend.token(), kind.token()));
        }
    }
    for key in entries.keys() {
        if !known.contains(key) {
            return Err(FabricError::Calibration(format!("unknown key `{key}`")));
        }
    }

    let mut take = |key: &str| -> Result<f64, FabricError> {
        entries
            .get(key)
            .copied()
            .ok_or_else(|| FabricError::Calibration(format!("missing key `{key}`")))
    };

    let mut read_pair = |backend: BackendProfile, kind: CollectiveKind| -> Result<CollectiveCost, FabricError> {
        let prefix = format!("{}.{}", backend.token(), kind.token());
        let alpha_us = take(&format!("{prefix}.alpha_us"))?;
        let beta_us_per_byte = take(&format!("{prefix}.beta_us_per_byte"))?;
        let knee = entries.get(&format!("{prefix}.sat_knee_bytes")).copied();
        let sat_beta = entries.get(&format!("{prefix}.sat_beta_us_per_byte")).copied();
        let saturation = match (knee, sat_beta) {
            (None, None) => None,
            (Some(k), Some(b)) => {
                if !(k.is_finite() && k >= 0.0 && k.fract() == 0.0) {
                    return Err(FabricError::Calibration(format!(
                        "`{prefix}.sat_knee_bytes` must be a non-negative integer"
                    )));
                }
                Some(Saturation {
                    knee_bytes: k as u64,
                    beta_us_per_byte: b,
                })
            }
            _ => {
                return Err(FabricError::Calibration(format!(
                    "`{prefix}`: sat_knee_bytes and sat_beta_us_per_byte must be given together"
                )))
            }
        };
        Ok(CollectiveCost {
            alpha_us,
            beta_us_per_byte,
            saturation,
        })
    };

    let placeholder = CollectiveCost {
        alpha_us: 0.0,
        beta_us_per_byte: 1.0,
        saturation: None,
    };
    let mut collective_optimized = [placeholder; 5];
    let mut one_sided = [placeholder; 4];
    for kind in CollectiveKind::ALL {
        collective_optimized[kind_slot(kind)] = read_pair(BackendProfile::CollectiveOptimized, kind)?;
    }
    for kind in &CollectiveKind::ALL[..4] {
        one_sided[kind_slot(*kind)] = read_pair(BackendProfile::OneSided, *kind)?;
    }

    let model = CostModel {
        collective_optimized,
        one_sided,
        mem_bw_bytes_per_us: take("compute.mem_bw_bytes_per_us")?,
        kernel_overhead_us: take("compute.kernel_overhead_us")?,
    };
    model.validate()?;
    Ok(model)
}
