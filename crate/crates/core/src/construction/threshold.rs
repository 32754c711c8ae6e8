//! Threshold search: pick τ so the extracted set is a target fraction of the
//! validation split.

use serde::{Deserialize, Serialize};

use super::{score_dataset, BuildOptions, Toolkit};
use crate::error::{Error, Result};
use crate::model::{CandidatePool, Dataset, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub target_fraction: f64,
    pub tolerance: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.05
}

impl ThresholdSearch {
    pub fn new(target_fraction: f64, tolerance: f64) -> Result<Self> {
        let s = ThresholdSearch {
            target_fraction,
            tolerance,
            step: default_step(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target fraction {} outside (0, 1]",
                self.target_fraction
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be non-negative".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidConfig("grid step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub fraction: f64,
    /// `(τ, fraction)` for every grid point evaluated, in probe order.
    pub probes: Vec<(f64, f64)>,
}

/// `lo, lo + step, …, hi`, each rounded to 1e-9 so grid values print cleanly.
pub fn threshold_grid(scenario: Scenario, step: f64) -> Vec<f64> {
    let (lo, hi) = scenario.score_range();
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

/// Binary search over an ascending grid for a fraction function that is
/// non-increasing in τ.
///
/// Among grid points with `fraction ≥ target − tolerance`, returns the one
/// closest to `target`; ties go to the larger τ.
pub fn search_grid(
    grid: &[f64],
    target: f64,
    tolerance: f64,
    fraction: impl FnMut(f64) -> f64,
) -> Result<ThresholdResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    let mut probe = Probe {
        grid,
        fraction,
        memo: vec![None; grid.len()],
        order: Vec::new(),
    };
    let feasible_end = probe.partition_point(target - tolerance);
    if feasible_end == 0 {
        let best = probe.at(0);
        return Err(Error::Unreachable { target, best });
    }
    let above_end = probe.partition_point(target);

    // The last point at or above target is the closest from above. From
    // below, the closest is the first point under target, or the last point
    // sharing its fraction (ties go to the larger τ).
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |i: usize, f: f64| {
        let better = best.is_none_or(|(bi, bf)| {
            let (d, bd) = ((f - target).abs(), (bf - target).abs());
            d < bd || (d == bd && i > bi)
        });
        if better {
            best = Some((i, f));
        }
    };
    if above_end > 0 {
        let f = probe.at(above_end - 1);
        consider(above_end - 1, f);
    }
    if above_end < feasible_end {
        let f = probe.at(above_end);
        let i = probe.partition_point(f) - 1;
        consider(i, f);
    }
    let (i, f) = best.expect("feasible_end > 0 guarantees a candidate");
    Ok(ThresholdResult {
        threshold: grid[i],
        fraction: f,
        probes: probe.order,
    })
}

struct Probe<'g, F> {
    grid: &'g [f64],
    fraction: F,
    memo: Vec<Option<f64>>,
    order: Vec<(f64, f64)>,
}

impl<F: FnMut(f64) -> f64> Probe<'_, F> {
    fn at(&mut self, i: usize) -> f64 {
        if let Some(f) = self.memo[i] {
            return f;
        }
        let f = (self.fraction)(self.grid[i]);
        self.memo[i] = Some(f);
        self.order.push((self.grid[i], f));
        f
    }

    /// First index whose fraction is below `bound`.
    fn partition_point(&mut self, bound: f64) -> usize {
        let (mut lo, mut hi) = (0, self.grid.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.at(mid) >= bound {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Searches τ on the scenario's grid, scoring the dataset once.
///
/// The fraction at τ is the number of emitted counterfactuals divided by the
/// number of samples. `options.validation.threshold` is ignored.
pub fn search_threshold(
    dataset: &Dataset,
    pool: &CandidatePool,
    tools: &Toolkit<'_>,
    options: &BuildOptions,
    search: &ThresholdSearch,
) -> Result<ThresholdResult> {
    search.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scored = score_dataset(dataset, pool, tools, options)?;
    let n = dataset.len() as f64;
    let grid = threshold_grid(options.validation.scenario, search.step);
    search_grid(&grid, search.target_fraction, search.tolerance, |tau| {
        scored.materialize(tau).samples.len() as f64 / n
    })
}
