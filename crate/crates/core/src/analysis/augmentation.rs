use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cumulant::{cumulant_at, LambdaGrid};
use crate::error::Result;
use crate::loss_data::LossDataset;
use crate::SCHEMA_VERSION;

/// Allowed violation of `Ĵ_reduced ≤ Ĵ_flat` from round-off.
pub const JENSEN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaPoint {
    pub lambda: f64,
    pub j_flat: f64,
    pub j_reduced: f64,
    /// `j_flat − j_reduced`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaCheckReport {
    pub schema_version: u32,
    pub group_count: usize,
    pub equal_group_sizes: bool,
    pub warning: Option<String>,
    pub empirical_loss_flat: f64,
    pub empirical_loss_reduced: f64,
    /// Group means average to the grand mean (up to round-off).
    pub mean_preserved: bool,
    /// Every gap is at least `−JENSEN_SLACK`.
    pub jensen_holds: bool,
    pub points: Vec<DaPoint>,
}

fn mean_tolerance(scale: f64) -> f64 {
    1e-12 * scale.abs().max(1.0)
}

/// Compares the cumulant of the group-mean (augmented) loss against the
/// cumulant of the raw per-view losses on every grid λ.
///
/// Unequal group sizes do not abort the check: the reduced mean is then a
/// mean of group means and the report carries a warning.
pub fn da_inequality_check(ds_grouped: &LossDataset, grid: &LambdaGrid) -> Result<DaCheckReport> {
    let reduction = ds_grouped.reduce_augmented()?;
    let flat = ds_grouped.profile();
    let reduced = reduction.dataset.profile();
    let points = grid
        .values()
        .iter()
        .map(|&lambda| {
            let j_flat = cumulant_at(flat, lambda)?;
            let j_reduced = cumulant_at(reduced, lambda)?;
            Ok(DaPoint {
                lambda,
                j_flat,
                j_reduced,
                gap: j_flat - j_reduced,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let l_flat = ds_grouped.summarize().empirical_loss;
    let l_reduced = reduction.dataset.summarize().empirical_loss;
    let warning = (!reduction.equal_group_sizes).then(|| {
        format!(
            "group sizes differ ({:?}); reduced loss is a mean of group means",
            reduction.group_sizes
        )
    });
    Ok(DaCheckReport {
        schema_version: SCHEMA_VERSION,
        group_count: reduction.group_sizes.len(),
        equal_group_sizes: reduction.equal_group_sizes,
        warning,
        empirical_loss_flat: l_flat,
        empirical_loss_reduced: l_reduced,
        mean_preserved: (l_flat - l_reduced).abs() <= mean_tolerance(l_flat),
        jensen_holds: points.iter().all(|p| p.gap >= -JENSEN_SLACK),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainedPoint {
    pub lambda: f64,
    pub j_flat: f64,
    pub j_inner: f64,
    pub j_composed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedDaReport {
    pub schema_version: u32,
    pub inner: DaCheckReport,
    pub composed: DaCheckReport,
    /// `Ĵ_composed ≤ Ĵ_inner ≤ Ĵ_flat` at every λ, up to `JENSEN_SLACK`.
    pub ordered: bool,
    pub points: Vec<ChainedPoint>,
}

/// Runs the augmentation check for the inner grouping and for its
/// composition with `outer` (inner group id → outer group id).
pub fn chained_da_check(
    ds_grouped: &LossDataset,
    outer: &HashMap<String, String>,
    grid: &LambdaGrid,
) -> Result<ChainedDaReport> {
    let inner = da_inequality_check(ds_grouped, grid)?;
    let composed = da_inequality_check(&ds_grouped.compose_augmented(outer)?, grid)?;
    let points: Vec<ChainedPoint> = inner
        .points
        .iter()
        .zip(&composed.points)
        .map(|(i, c)| ChainedPoint {
            lambda: i.lambda,
            j_flat: i.j_flat,
            j_inner: i.j_reduced,
            j_composed: c.j_reduced,
        })
        .collect();
    let ordered = points
        .iter()
        .all(|p| p.j_composed <= p.j_inner + JENSEN_SLACK && p.j_inner <= p.j_flat + JENSEN_SLACK);
    Ok(ChainedDaReport {
        schema_version: SCHEMA_VERSION,
        inner,
        composed,
        ordered,
        points,
    })
}
