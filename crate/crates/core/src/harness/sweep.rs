use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_file, HarnessError, Result};
use crate::json;
use crate::photonic::{build_layout, visibility, DetectionDistribution, LayoutKind};

/// Optional sweep section of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub layout: String,
    pub points: usize,
    pub path: PathBuf,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.layout.parse::<LayoutKind>()?;
        check_points(self.points)
    }
}

fn check_points(points: usize) -> Result<()> {
    if points < 2 {
        return Err(HarnessError::Usage(format!(
            "a sweep needs at least 2 grid points, got {points}"
        )));
    }
    Ok(())
}

/// Detection probabilities over a φ grid.
///
/// `series` holds each detector's total over time bins. Layouts with more
/// than one arrival bin also get one `"{detector}@t{bin}"` series per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepResult {
    pub layout: String,
    pub points: usize,
    #[serde(serialize_with = "json::vec_f64_12")]
    pub phi: Vec<f64>,
    #[serde(serialize_with = "json::map_vec_f64_12")]
    pub series: BTreeMap<String, Vec<f64>>,
    #[serde(serialize_with = "json::vec_f64_12")]
    pub absorbed: Vec<f64>,
    #[serde(serialize_with = "json::map_f64_12")]
    pub visibility: BTreeMap<String, f64>,
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        json::to_pretty(self).expect("sweep serializes")
    }
}

/// `φ_k = 2πk/N` for `k = 0..N`, covering `[0, 2π)`.
pub fn phi_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * k as f64 / points as f64).collect()
}

pub fn sweep(kind: LayoutKind, points: usize) -> Result<SweepResult> {
    check_points(points)?;
    let phi = phi_grid(points);
    let dists: Vec<DetectionDistribution> = phi
        .par_iter()
        .map(|&p| build_layout(kind, p).run())
        .collect::<std::result::Result<_, _>>()?;

    let detectors: Vec<String> = dists
        .iter()
        .flat_map(|d| d.detectors().into_iter().map(str::to_string).collect::<Vec<_>>())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let bins: Vec<u32> = dists
        .iter()
        .flat_map(|d| d.time_bins())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut series = BTreeMap::new();
    for det in &detectors {
        series.insert(det.clone(), dists.iter().map(|d| d.detector_total(det)).collect());
        if bins.len() > 1 {
            for t in &bins {
                series.insert(
                    format!("{det}@t{t}"),
                    dists.iter().map(|d| d.prob(det, *t)).collect(),
                );
            }
        }
    }
    let visibility = series
        .iter()
        .map(|(k, v): (&String, &Vec<f64>)| (k.clone(), visibility(v)))
        .collect();
    Ok(SweepResult {
        layout: kind.name().to_string(),
        points,
        phi,
        series,
        absorbed: dists.iter().map(|d| d.absorbed).collect(),
        visibility,
    })
}

/// Sweeps the named layout and writes the result to `out`.
pub fn cmd_sweep(layout: &str, points: usize, out: &Path) -> Result<SweepResult> {
    let result = sweep(layout.parse()?, points)?;
    for (k, v) in &result.series {
        if v.iter().any(|p| !(-1e-12..=1.0 + 1e-12).contains(p)) {
            return Err(HarnessError::Invariant(format!("series {k} leaves [0, 1]")));
        }
    }
    write_file(out, &result.to_json())?;
    Ok(result)
}
