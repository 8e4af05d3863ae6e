use serde::{Deserialize, Serialize};

use super::{baseline_parameter_count, layer_plan, LayerKind};
use crate::error::{invalid, Result};
use crate::params::{ParamGroup, ParamStore};
use crate::search_space::{ArchitectureSpec, Role};

/// Sizes are reported as single-precision parameters.
pub const BYTES_PER_PARAMETER: u64 = 4;

/// Parameter and byte counts of a network, with a per-component breakdown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub parameters: u64,
    pub bytes: u64,
    pub breakdown: Vec<(String, u64)>,
}

impl SizeReport {
    pub fn from_breakdown(breakdown: Vec<(String, u64)>) -> Self {
        let parameters = breakdown.iter().map(|(_, n)| n).sum();
        Self {
            parameters,
            bytes: parameters * BYTES_PER_PARAMETER,
            breakdown,
        }
    }

    /// Counts the weight (not architecture) parameters of a store, grouped by
    /// `cells.<i>` or by the first name segment.
    pub fn from_store(store: &ParamStore) -> Self {
        let mut breakdown: Vec<(String, u64)> = Vec::new();
        for (_, p) in store.iter().filter(|(_, p)| p.group == ParamGroup::Weight) {
            let mut parts = p.name.split('.');
            let first = parts.next().unwrap_or_default();
            let key = if first == "cells" || first == "blocks" {
                format!("{first}.{}", parts.next().unwrap_or_default())
            } else {
                first.to_string()
            };
            match breakdown.last_mut() {
                Some((k, n)) if *k == key => *n += p.value.len() as u64,
                _ => breakdown.push((key, p.value.len() as u64)),
            }
        }
        Self::from_breakdown(breakdown)
    }

    pub fn megabytes(&self) -> f64 {
        self.bytes as f64 / 1e6
    }

    pub fn component(&self, name: &str) -> Option<u64> {
        self.breakdown.iter().find(|(k, _)| k == name).map(|(_, n)| *n)
    }
}

/// A family of networks whose size is determined by the hidden dimension.
pub trait HiddenScalable {
    fn size_at(&self, hidden: usize) -> Result<SizeReport>;
}

impl HiddenScalable for ArchitectureSpec {
    /// Size of the discrete network for this spec at `hidden`, RGB input.
    fn size_at(&self, hidden: usize) -> Result<SizeReport> {
        spec_size(self, hidden, 3)
    }
}

/// Exact size of the discrete network for `spec` without building it.
pub fn spec_size(spec: &ArchitectureSpec, hidden: usize, image_channels: usize) -> Result<SizeReport> {
    spec.validate()?;
    let plan = layer_plan(spec.role, spec.n_cells(), hidden, image_channels)?;
    let mut breakdown = Vec::with_capacity(plan.len() + 1);
    for (i, (cell, slots)) in spec.cells.iter().zip(&plan).enumerate() {
        let mut n = 0;
        for (op, sp) in cell.ops().into_iter().zip(slots) {
            n += LayerKind::for_operation(op, sp.action)?.parameter_count(sp.in_channels, sp.out_channels);
        }
        breakdown.push((format!("cells.{i}"), n as u64));
    }
    if spec.role == Role::Discriminator {
        breakdown.push(("head".to_string(), hidden as u64 + 1));
    }
    Ok(SizeReport::from_breakdown(breakdown))
}

/// The fixed reference generator, as a size family.
#[derive(Clone, Copy, Debug)]
pub struct BaselineFamily {
    pub image_channels: usize,
}

impl Default for BaselineFamily {
    fn default() -> Self {
        Self { image_channels: 3 }
    }
}

impl HiddenScalable for BaselineFamily {
    fn size_at(&self, hidden: usize) -> Result<SizeReport> {
        if hidden == 0 {
            return Err(invalid!("hidden dimension must be positive"));
        }
        Ok(SizeReport::from_breakdown(vec![(
            "generator".into(),
            baseline_parameter_count(hidden, self.image_channels) as u64,
        )]))
    }
}

const MAX_HIDDEN: usize = 1 << 16;

/// The hidden dimension whose size is closest to `target_bytes`, ties going
/// to the smaller dimension. Size is strictly increasing in the hidden
/// dimension, so the scan stops at the first size reaching the target.
pub fn scale_hidden_to_target(family: &dyn HiddenScalable, target_bytes: u64) -> Result<usize> {
    let smallest = family.size_at(1)?.bytes;
    if target_bytes < smallest {
        return Err(invalid!(
            "target of {target_bytes} bytes is below the minimum size of {smallest} bytes"
        ));
    }
    let mut previous = smallest;
    for hidden in 2..=MAX_HIDDEN {
        let bytes = family.size_at(hidden)?.bytes;
        if bytes >= target_bytes {
            let below = target_bytes - previous;
            let above = bytes - target_bytes;
            return Ok(if below <= above { hidden - 1 } else { hidden });
        }
        previous = bytes;
    }
    Err(invalid!("target of {target_bytes} bytes needs a hidden dimension above {MAX_HIDDEN}"))
}
