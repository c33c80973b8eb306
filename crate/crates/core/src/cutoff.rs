//! Unsupervised estimation of the depth separating anomalies from normal
//! points.
//!
//! Two cursors start at either end of the sorted depth profile. At each step
//! the cursor whose next move crosses the smaller depth difference advances;
//! on a tie both advance. The walk stops once the cursors are adjacent or
//! coincide, and the boundary is placed directly after the low cursor.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Depth, Forest, ForestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    /// One entry per range or pixel of the compiled partition.
    Ranges,
    /// One entry per observed data point.
    DataPoints,
}

/// Sorted multiset of cumulative depths.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthProfile {
    depths: Vec<Depth>,
    source: ProfileSource,
}

impl DepthProfile {
    pub fn new(mut depths: Vec<Depth>, source: ProfileSource) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::EmptyInput);
        }
        depths.sort_unstable();
        Ok(Self { depths, source })
    }

    pub fn depths(&self) -> &[Depth] {
        &self.depths
    }

    pub fn source(&self) -> ProfileSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutoffEstimate {
    /// Largest cumulative depth still deemed anomalous.
    pub cutoff_depth: Depth,
    /// Profile entries at or before the boundary.
    pub anomaly_count: usize,
    /// Final position of the low cursor.
    pub meeting_index: usize,
    pub confidence: Confidence,
}

pub fn greedy_gap_cutoff(profile: &DepthProfile) -> Result<CutoffEstimate> {
    let d = &profile.depths;
    if d.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 depths, got {}",
            d.len()
        )));
    }
    let (mut lo, mut hi) = (0usize, d.len() - 1);
    while lo + 1 < hi {
        let low_gap = d[lo + 1] - d[lo];
        let high_gap = d[hi] - d[hi - 1];
        if low_gap <= high_gap {
            lo += 1;
        }
        if high_gap <= low_gap {
            hi -= 1;
        }
    }
    Ok(CutoffEstimate {
        cutoff_depth: d[lo],
        anomaly_count: lo + 1,
        meeting_index: lo,
        confidence: confidence(d, lo),
    })
}

/// Cutoff for a known anomaly rate: the depth of the `round(rate × n)`-th
/// shallowest entry, kept within `1..n`.
pub fn cutoff_for_rate(profile: &DepthProfile, rate: f64) -> Result<CutoffEstimate> {
    let d = &profile.depths;
    if d.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 depths, got {}",
            d.len()
        )));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!("anomaly rate {rate} outside (0, 1)")));
    }
    let count = ((rate * d.len() as f64).round() as usize).clamp(1, d.len() - 1);
    Ok(CutoffEstimate {
        cutoff_depth: d[count - 1],
        anomaly_count: count,
        meeting_index: count - 1,
        confidence: confidence(d, count - 1),
    })
}

/// Low when the boundary falls inside a run of equal depths, or when no
/// adjacent gap exceeds twice the median adjacent gap.
fn confidence(d: &[Depth], lo: usize) -> Confidence {
    if d[lo] == d[lo + 1] {
        return Confidence::Low;
    }
    let mut gaps: Vec<Depth> = d.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let max = *gaps.last().unwrap();
    let n = gaps.len();
    let twice_median = if n % 2 == 1 {
        2 * u64::from(gaps[n / 2])
    } else {
        u64::from(gaps[n / 2 - 1]) + u64::from(gaps[n / 2])
    };
    if u64::from(max) <= twice_median {
        Confidence::Low
    } else {
        Confidence::High
    }
}

/// Drops the value farthest from the mean and returns the rounded mean of the
/// rest.
pub fn robust_mean_estimate(estimates: &[usize]) -> Result<usize> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 estimates".into()));
    }
    let mean = estimates.iter().sum::<usize>() as f64 / estimates.len() as f64;
    let (far, _) = estimates
        .iter()
        .enumerate()
        .map(|(i, &e)| (i, (e as f64 - mean).abs()))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    let kept: Vec<usize> = estimates
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != far)
        .map(|(_, &e)| e)
        .collect();
    Ok((kept.iter().sum::<usize>() as f64 / kept.len() as f64).round() as usize)
}

/// Estimated anomaly count from `runs` independently seeded forests.
///
/// Run `r` uses seed `config.seed + r`.
pub fn estimate_anomaly_count_repeated(
    data: &Dataset,
    config: &ForestConfig,
    runs: usize,
) -> Result<usize> {
    if runs < 2 {
        return Err(Error::InvalidArgument("runs must be at least 2".into()));
    }
    let estimates = (0..runs)
        .map(|r| {
            let cfg = config.clone().with_seed(config.seed.wrapping_add(r as u64));
            let forest = Forest::build(data, &cfg)?;
            let profile = DepthProfile::new(forest.score(data)?, ProfileSource::DataPoints)?;
            Ok(greedy_gap_cutoff(&profile)?.anomaly_count)
        })
        .collect::<Result<Vec<_>>>()?;
    robust_mean_estimate(&estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(d: &[Depth]) -> DepthProfile {
        DepthProfile::new(d.to_vec(), ProfileSource::DataPoints).unwrap()
    }

    /// Index after which the single largest adjacent gap sits.
    fn largest_gap_oracle(d: &[Depth]) -> usize {
        (0..d.len() - 1).max_by_key(|&i| (d[i + 1] - d[i], std::cmp::Reverse(i))).unwrap()
    }

    #[test]
    fn worked_example() {
        let est = greedy_gap_cutoff(&profile(&[3, 3, 4, 10, 11, 11, 12])).unwrap();
        assert_eq!(est.cutoff_depth, 4);
        assert_eq!(est.anomaly_count, 3);
        assert_eq!(largest_gap_oracle(&[3, 3, 4, 10, 11, 11, 12]), 2);
        assert_eq!(est.confidence, Confidence::High);
    }

    #[test]
    fn known_rate_takes_kth_shallowest() {
        let p = profile(&(0..200).rev().collect::<Vec<_>>());
        let est = cutoff_for_rate(&p, 0.01).unwrap();
        assert_eq!((est.cutoff_depth, est.anomaly_count), (1, 2));
        assert_eq!(cutoff_for_rate(&p, 0.0001).unwrap().anomaly_count, 1);
        assert_eq!(cutoff_for_rate(&p, 0.9999).unwrap().anomaly_count, 199);
        assert!(cutoff_for_rate(&p, 0.0).is_err());
        assert!(cutoff_for_rate(&p, 1.0).is_err());
    }

    #[test]
    fn all_equal_is_low_confidence() {
        let est = greedy_gap_cutoff(&profile(&[5, 5, 5, 5])).unwrap();
        assert!((1..=2).contains(&est.anomaly_count));
        assert_eq!(est.cutoff_depth, 5);
        assert_eq!(est.confidence, Confidence::Low);
    }

    #[test]
    fn two_entries() {
        let est = greedy_gap_cutoff(&profile(&[1, 100])).unwrap();
        assert_eq!((est.cutoff_depth, est.anomaly_count), (1, 1));
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(matches!(
            greedy_gap_cutoff(&profile(&[4])),
            Err(Error::InsufficientData(_))
        ));
        assert!(DepthProfile::new(vec![], ProfileSource::Ranges).is_err());
    }

    #[test]
    fn profile_is_sorted() {
        let p = DepthProfile::new(vec![9, 1, 5], ProfileSource::Ranges).unwrap();
        assert_eq!(p.depths(), &[1, 5, 9]);
    }

    #[test]
    fn estimate_invariants_on_random_profiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let n = rng.gen_range(2..60);
            let d: Vec<Depth> = (0..n).map(|_| rng.gen_range(0..40)).collect();
            let p = profile(&d);
            let est = greedy_gap_cutoff(&p).unwrap();
            assert!(est.anomaly_count >= 1 && est.anomaly_count < p.len());
            assert!(p.depths().contains(&est.cutoff_depth));
            if p.depths()[est.meeting_index] < p.depths()[est.meeting_index + 1] {
                let at_or_below = p.depths().iter().filter(|&&x| x <= est.cutoff_depth).count();
                assert_eq!(est.anomaly_count, at_or_below);
            }
        }
    }

    #[test]
    fn robust_mean_examples() {
        assert_eq!(robust_mean_estimate(&[50, 50, 50, 50, 50]).unwrap(), 50);
        assert_eq!(robust_mean_estimate(&[48, 50, 51, 52, 90]).unwrap(), 50);
        assert!(robust_mean_estimate(&[3]).is_err());
    }
}
