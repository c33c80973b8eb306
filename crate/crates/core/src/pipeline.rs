//! End-to-end helpers shared by the analysis tools and the command line.

use crate::cutoff::{cutoff_for_rate, greedy_gap_cutoff, CutoffEstimate, DepthProfile, ProfileSource};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Depth, Forest, ForestConfig};
use crate::spec1d::{merge_range_lists, tree_to_ranges};
use crate::specnd::build_pixel_grid;

/// Outcome of training, scoring and thresholding one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub forest: Forest,
    pub depths: Vec<Depth>,
    pub estimate: CutoffEstimate,
    /// `depth <= cutoff` per point.
    pub labels: Vec<bool>,
}

/// How the cutoff is chosen from the data's own depth profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffRule {
    /// Unsupervised greedy gap search.
    Greedy,
    /// The anomaly rate is known; the count follows from it.
    KnownRate(f64),
}

/// Builds a forest on `data`, estimates the cutoff from the data's own
/// depths with the greedy gap search and labels every point.
pub fn detect(data: &Dataset, config: &ForestConfig) -> Result<Detection> {
    detect_with(data, config, CutoffRule::Greedy)
}

pub fn detect_with(data: &Dataset, config: &ForestConfig, rule: CutoffRule) -> Result<Detection> {
    let forest = Forest::build(data, config)?;
    let depths = forest.score(data)?;
    let profile = DepthProfile::new(depths.clone(), ProfileSource::DataPoints)?;
    let estimate = match rule {
        CutoffRule::Greedy => greedy_gap_cutoff(&profile)?,
        CutoffRule::KnownRate(rate) => cutoff_for_rate(&profile, rate)?,
    };
    let labels = threshold(&depths, estimate.cutoff_depth);
    Ok(Detection {
        forest,
        depths,
        estimate,
        labels,
    })
}

pub fn threshold(depths: &[Depth], cutoff: Depth) -> Vec<bool> {
    depths.iter().map(|&d| d <= cutoff).collect()
}

/// Depth profile with one entry per merged range (1-D) or grid cell (n-D).
pub fn partition_profile(forest: &Forest, max_cells: u128) -> Result<DepthProfile> {
    let depths = if forest.dims() == 1 {
        let lists = forest
            .trees()
            .iter()
            .map(tree_to_ranges)
            .collect::<Result<Vec<_>>>()?;
        merge_range_lists(&lists)?
            .ranges()
            .iter()
            .map(|r| r.depth)
            .collect()
    } else {
        let grid = build_pixel_grid(forest, None)?;
        if grid.cell_count() > max_cells {
            return Err(Error::GridTooLarge {
                cells: grid.cell_count(),
                limit: max_cells,
            });
        }
        crate::specnd::compute_cell_depths(&grid, forest, max_cells)?
    };
    DepthProfile::new(depths, ProfileSource::Ranges)
}
