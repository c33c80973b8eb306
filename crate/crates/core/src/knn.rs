//! k-nearest-neighbour density outliers for 2-D data.
//!
//! A point's score is `max(d_k² / k)` over `1 <= k <= max_k`, where `d_k` is
//! the distance to its k-th nearest other point. Large scores mark sparse
//! neighbourhoods.

use crate::analysis::{average_ranks, f_measure, pearson_r};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Depth;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnRanking {
    pub scores: Vec<f64>,
    /// The `k` attaining each point's score, smallest on ties.
    pub best_k: Vec<usize>,
    /// Point indices by descending score, ties by index.
    pub order: Vec<usize>,
    pub max_k: usize,
}

pub fn knn_rank(data: &Dataset, max_k: usize) -> Result<KnnRanking> {
    if data.dims() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: data.dims(),
        });
    }
    let n = data.len();
    if max_k == 0 || max_k >= n {
        return Err(Error::InvalidArgument(format!(
            "max_k = {max_k} must be in 1..{n}"
        )));
    }
    let mut scores = Vec::with_capacity(n);
    let mut best_k = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n - 1);
    for i in 0..n {
        let p = data.point(i);
        dist.clear();
        dist.extend(data.points().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| {
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            dx * dx + dy * dy
        }));
        let nearest = if max_k < dist.len() {
            dist.select_nth_unstable_by(max_k - 1, f64::total_cmp).0.len() + 1
        } else {
            dist.len()
        };
        let nearest = &mut dist[..nearest];
        nearest.sort_unstable_by(f64::total_cmp);
        let (mut score, mut at) = (f64::NEG_INFINITY, 1);
        for (k, d2) in nearest.iter().enumerate() {
            let s = d2 / (k + 1) as f64;
            if s > score {
                score = s;
                at = k + 1;
            }
        }
        scores.push(score);
        best_k.push(at);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(KnnRanking {
        scores,
        best_k,
        order,
        max_k,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingComparison {
    /// Correlation of the forest ranking (shallowest first) with the k-NN
    /// ranking (highest score first).
    pub pearson_r: f64,
    pub best_f_measure: f64,
    /// Number of top k-NN outliers attaining `best_f_measure`.
    pub best_m: usize,
    /// Forest-detected anomalies among those top outliers.
    pub matched: usize,
}

pub fn compare_rankings(depths: &[Depth], detected: &[bool], knn: &KnnRanking) -> Result<RankingComparison> {
    let n = knn.scores.len();
    for len in [depths.len(), detected.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let forest_rank = average_ranks(&depths.iter().map(|&d| f64::from(d)).collect::<Vec<_>>());
    let knn_rank = average_ranks(&knn.scores.iter().map(|s| -s).collect::<Vec<_>>());
    let r = pearson_r(&forest_rank, &knn_rank)?;
    let positives = detected.iter().filter(|&&d| d).count();
    let (mut best_f, mut best_m, mut matched) = (0.0, 0, 0);
    let mut tp = 0;
    for (m, &i) in knn.order.iter().enumerate() {
        tp += usize::from(detected[i]);
        let m = m + 1;
        let f = if positives > 0 {
            f_measure(tp as f64 / m as f64, tp as f64 / positives as f64)
        } else {
            0.0
        };
        if f > best_f {
            (best_f, best_m, matched) = (f, m, tp);
        }
    }
    Ok(RankingComparison {
        pearson_r: r,
        best_f_measure: best_f,
        best_m,
        matched,
    })
}
