//! Evaluation metrics, depth-distribution theory, self-validation, contour
//! maps and time-series split detection.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cutoff::CutoffEstimate;
use crate::data::{format_float, Dataset};
use crate::error::{Error, Result};
use crate::forest::{Depth, Forest, ForestConfig};
use crate::pipeline::detect;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub spearman_rho: Option<f64>,
    pub pearson_r: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl EvalReport {
    /// `key=value` lines in a fixed order.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "precision={}", self.precision);
        let _ = writeln!(out, "recall={}", self.recall);
        let _ = writeln!(out, "f_measure={}", self.f_measure);
        if let Some(rho) = self.spearman_rho {
            let _ = writeln!(out, "spearman_rho={rho}");
        }
        if let Some(r) = self.pearson_r {
            let _ = writeln!(out, "pearson_r={r}");
        }
        let _ = writeln!(out, "tp={}", self.tp);
        let _ = writeln!(out, "fp={}", self.fp);
        let _ = writeln!(out, "fn={}", self.fn_);
        let _ = writeln!(out, "tn={}", self.tn);
        out
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Confusion-matrix metrics of `predicted` against `truth`.
///
/// With nothing predicted precision is 1 if nothing was missed, else 0;
/// recall is treated symmetrically. A prediction equal to the truth thus
/// always scores 1.
pub fn eval_labels(predicted: &[bool], truth: &[bool]) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize, other_err: usize| {
        if den > 0 {
            num as f64 / den as f64
        } else if other_err == 0 {
            1.0
        } else {
            0.0
        }
    };
    let precision = ratio(tp, tp + fp, fn_);
    let recall = ratio(tp, tp + fn_, fp);
    Ok(EvalReport {
        precision,
        recall,
        f_measure: f_measure(precision, recall),
        spearman_rho: None,
        pearson_r: None,
        tp,
        fp,
        fn_,
        tn,
    })
}

/// 1-based ranks, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 values".into()));
    }
    Ok(())
}

/// Sample correlation coefficient; 0 when either side is constant.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson_r(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthStats {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of the depth of the last of `n` random keys inserted
/// into a binary search tree, root at depth 0.
pub fn depth_distribution_stats(n: usize) -> Result<DepthStats> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let (mut mean, mut variance) = (0.0, 0.0);
    for i in 2..=n {
        let i = i as f64;
        mean += 2.0 / i;
        variance += (2.0 - 4.0 / i) / i;
    }
    Ok(DepthStats { mean, variance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyDistribution {
    /// A uniformly random permutation of `1..=n`.
    Permutation,
    Uniform,
    /// Unit-rate exponential.
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloDepths {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Trial count per depth.
    pub histogram: Vec<usize>,
}

/// Depth of the last key when `keys` are inserted in order into a binary
/// search tree where keys not less than a node go right.
///
/// An earlier key `y <= x` lies on the path to `x` exactly when no earlier
/// key sits in `(y, x]` before it, i.e. it is a running maximum among keys
/// `<= x`; symmetrically for keys above `x` with strict running minima.
pub fn last_insertion_depth(keys: &[f64]) -> Depth {
    let Some((&x, earlier)) = keys.split_last() else {
        return 0;
    };
    let mut below = f64::NEG_INFINITY;
    let mut above = f64::INFINITY;
    let mut depth = 0;
    for &y in earlier {
        if y <= x {
            if y >= below {
                below = y;
                depth += 1;
            }
        } else if y < above {
            above = y;
            depth += 1;
        }
    }
    depth
}

pub fn monte_carlo_last_depth(
    n: usize,
    trials: usize,
    distribution: KeyDistribution,
    seed: u64,
) -> Result<MonteCarloDepths> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<f64> = (1..=n).map(|k| k as f64).collect();
    let mut histogram: Vec<usize> = Vec::new();
    let mut depths = Vec::with_capacity(trials);
    for _ in 0..trials {
        match distribution {
            KeyDistribution::Permutation => keys.shuffle(&mut rng),
            KeyDistribution::Uniform => keys.iter_mut().for_each(|k| *k = rng.gen()),
            KeyDistribution::Exponential => keys
                .iter_mut()
                .for_each(|k| *k = -(1.0 - rng.gen::<f64>()).ln()),
        }
        let d = last_insertion_depth(&keys) as usize;
        if histogram.len() <= d {
            histogram.resize(d + 1, 0);
        }
        histogram[d] += 1;
        depths.push(d as f64);
    }
    let (mean, variance, skewness) = moments(&depths);
    Ok(MonteCarloDepths {
        mean,
        variance,
        skewness,
        histogram,
    })
}

/// Mean, unbiased variance and sample skewness.
fn moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let variance = if xs.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
    let pop_var = m2 / n;
    let skewness = if pop_var > 0.0 {
        (m3 / n) / pop_var.powf(1.5)
    } else {
        0.0
    };
    (mean, variance, skewness)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfValidation {
    /// Trial labels evaluated against control labels, with rank correlations
    /// of the two depth vectors.
    pub report: EvalReport,
    pub control: CutoffEstimate,
    pub trial: CutoffEstimate,
}

/// Runs detection twice with independent seeds and scores the second run
/// against the first.
pub fn self_validate(
    data: &Dataset,
    config: &ForestConfig,
    seed_a: u64,
    seed_b: u64,
) -> Result<SelfValidation> {
    let a = detect(data, &config.clone().with_seed(seed_a))?;
    let b = detect(data, &config.clone().with_seed(seed_b))?;
    let mut report = eval_labels(&b.labels, &a.labels)?;
    let da: Vec<f64> = a.depths.iter().map(|&d| f64::from(d)).collect();
    let db: Vec<f64> = b.depths.iter().map(|&d| f64::from(d)).collect();
    if da.len() >= 2 {
        report.spearman_rho = Some(spearman_rho(&da, &db)?);
        report.pearson_r = Some(pearson_r(&da, &db)?);
    }
    Ok(SelfValidation {
        report,
        control: a.estimate,
        trial: b.estimate,
    })
}

/// Percentile map over a 2-D data bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub width: usize,
    pub height: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Row-major with row 0 at the top (largest y).
    pub values: Vec<f64>,
}

impl ContourGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Binary 8-bit greyscale image, percentile scaled to 0..=255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        out
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let margin = if span > 0.0 { 0.1 * span } else { 1.0 };
    (lo - margin, hi + margin)
}

/// Fraction of data points whose cumulative depth is strictly below the
/// depth at each cell centre.
pub fn contour_grid(forest: &Forest, data: &Dataset, width: usize, height: usize) -> Result<ContourGrid> {
    if forest.dims() != 2 || data.dims() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: if forest.dims() != 2 { forest.dims() } else { data.dims() },
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    let bounds = data.bounds().ok_or(Error::EmptyInput)?;
    let x_range = padded(bounds[0].0, bounds[0].1);
    let y_range = padded(bounds[1].0, bounds[1].1);
    let mut sorted = forest.score(data)?;
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let dx = (x_range.1 - x_range.0) / width as f64;
    let dy = (y_range.1 - y_range.0) / height as f64;
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let y = y_range.1 - (row as f64 + 0.5) * dy;
        for col in 0..width {
            let x = x_range.0 + (col as f64 + 0.5) * dx;
            let depth = forest.cumulative_depth(&[x, y])?;
            values.push(sorted.partition_point(|&d| d < depth) as f64 / n);
        }
    }
    Ok(ContourGrid {
        width,
        height,
        x_range,
        y_range,
        values,
    })
}

/// Running least-squares line fit over points `(x, y)`.
#[derive(Debug, Clone, Copy, Default)]
struct LineFit {
    n: f64,
    mx: f64,
    my: f64,
    cxx: f64,
    cyy: f64,
    cxy: f64,
}

impl LineFit {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        let dx = x - self.mx;
        let dy = y - self.my;
        self.mx += dx / self.n;
        self.my += dy / self.n;
        self.cxx += dx * (x - self.mx);
        self.cyy += dy * (y - self.my);
        self.cxy += dx * (y - self.my);
    }

    /// Residual sum of squares of the fitted line.
    fn sse(&self) -> f64 {
        if self.cxx > 0.0 {
            (self.cyy - self.cxy * self.cxy / self.cxx).max(0.0)
        } else {
            self.cyy.max(0.0)
        }
    }

    fn slope_intercept(&self) -> (f64, f64) {
        let slope = if self.cxx > 0.0 { self.cxy / self.cxx } else { 0.0 };
        (slope, self.my - slope * self.mx)
    }
}

/// 0-based index `i` minimising the summed residuals of separate line fits
/// to `series[..i]` and `series[i + 1..]`, each side holding at least two
/// points. Sums within 1e-9 of the minimum, relative to the series' total
/// sum of squares, count as ties and the smallest index wins.
pub fn least_smooth_split(series: &[f64]) -> Result<usize> {
    let n = series.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "series of {n} values is too short to split"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    // prefix[i] fits series[..i]; suffix[i] fits series[i..].
    let mut prefix = vec![LineFit::default(); n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i];
        prefix[i + 1].push(i as f64, series[i]);
    }
    let mut suffix = vec![LineFit::default(); n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1];
        suffix[i].push(i as f64, series[i]);
    }
    let totals: Vec<f64> = (2..=n - 3)
        .map(|i| prefix[i].sse() + suffix[i + 1].sse())
        .collect();
    let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
    // Rounding noise scales with the series' total variation.
    let tolerance = 1e-9 * min.max(prefix[n].cyy);
    let first = totals.iter().position(|&t| t <= min + tolerance).unwrap_or(0);
    Ok(first + 2)
}

/// Share of the `k` points farthest from the global least-squares line that
/// are flagged in `anomalies`.
pub fn anomaly_outlier_overlap(series: &[f64], anomalies: &[bool], k: usize) -> Result<f64> {
    if series.len() != anomalies.len() {
        return Err(Error::DimensionMismatch {
            expected: series.len(),
            got: anomalies.len(),
        });
    }
    if k == 0 || k > series.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            series.len()
        )));
    }
    let mut fit = LineFit::default();
    for (i, &y) in series.iter().enumerate() {
        fit.push(i as f64, y);
    }
    let (slope, intercept) = fit.slope_intercept();
    let residual = |i: usize| (series[i] - (slope * i as f64 + intercept)).abs();
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&a, &b| residual(b).total_cmp(&residual(a)).then(a.cmp(&b)));
    let hits = order[..k].iter().filter(|&&i| anomalies[i]).count();
    Ok(hits as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_all_negative_predictions() {
        let truth = [true, false, true, false];
        let r = eval_labels(&truth, &truth).unwrap();
        assert_eq!((r.precision, r.recall, r.f_measure), (1.0, 1.0, 1.0));
        let r = eval_labels(&[false; 4], &truth).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f_measure, 0.0);
        let r = eval_labels(&[false; 4], &[false; 4]).unwrap();
        assert_eq!((r.precision, r.recall, r.f_measure), (1.0, 1.0, 1.0));
        assert!(eval_labels(&[true], &[true, false]).is_err());
    }

    #[test]
    fn random_confusion_matches_hand_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pred: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.3)).collect();
        let truth: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.2)).collect();
        let r = eval_labels(&pred, &truth).unwrap();
        let mut tp = 0;
        let mut predicted = 0;
        let mut actual = 0;
        for i in 0..1000 {
            tp += usize::from(pred[i] && truth[i]);
            predicted += usize::from(pred[i]);
            actual += usize::from(truth[i]);
        }
        assert_eq!(r.tp, tp);
        assert_eq!(r.fp, predicted - tp);
        assert_eq!(r.fn_, actual - tp);
        assert_eq!(r.tp + r.fp + r.fn_ + r.tn, 1000);
        let p = tp as f64 / predicted as f64;
        let rec = tp as f64 / actual as f64;
        assert!((r.precision - p).abs() < 1e-15);
        assert!((r.f_measure - 2.0 * p * rec / (p + rec)).abs() < 1e-15);
    }

    #[test]
    fn correlation_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert!((spearman_rho(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson_r(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson_r(&a, &a[..3]).is_err());
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ten_element_pair_matches_direct_formulas() {
        let a = [3.1, 0.4, 2.2, 9.0, 5.5, 5.5, 1.0, 7.3, 2.2, 6.6];
        let b = [2.0, 1.0, 4.0, 8.0, 5.0, 7.0, 0.5, 9.0, 3.0, 6.0];
        // Direct Pearson from raw sums.
        let n = 10.0;
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        let r = (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt());
        assert!((pearson_r(&a, &b).unwrap() - r).abs() < 1e-12);
        // Hand ranks of a (ties at 2.2 and 5.5 averaged).
        let ra = [5.0, 1.0, 3.5, 10.0, 6.5, 6.5, 2.0, 9.0, 3.5, 8.0];
        assert_eq!(average_ranks(&a), ra);
        let rb = [3.0, 2.0, 5.0, 9.0, 6.0, 8.0, 1.0, 10.0, 4.0, 7.0];
        let mean = 5.5;
        let num: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
        let da: f64 = ra.iter().map(|x| (x - mean) * (x - mean)).sum();
        let db: f64 = rb.iter().map(|y| (y - mean) * (y - mean)).sum();
        assert!((spearman_rho(&a, &b).unwrap() - num / (da * db).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_small_cases() {
        let s = depth_distribution_stats(2).unwrap();
        assert_eq!((s.mean, s.variance), (1.0, 0.0));
        let s = depth_distribution_stats(3).unwrap();
        assert!((s.mean - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.variance - 2.0 / 9.0).abs() < 1e-15);
        assert!(depth_distribution_stats(1).is_err());
    }

    /// Literal insertion into a binary search tree.
    fn bst_last_depth(keys: &[f64]) -> Depth {
        let mut nodes: Vec<(f64, Option<usize>, Option<usize>)> = Vec::new();
        let mut last = 0;
        for &k in keys {
            if nodes.is_empty() {
                nodes.push((k, None, None));
                last = 0;
                continue;
            }
            let (mut at, mut depth) = (0, 0);
            loop {
                depth += 1;
                let go_left = k < nodes[at].0;
                let next = if go_left { nodes[at].1 } else { nodes[at].2 };
                match next {
                    Some(c) => at = c,
                    None => {
                        let id = nodes.len();
                        nodes.push((k, None, None));
                        if go_left {
                            nodes[at].1 = Some(id);
                        } else {
                            nodes[at].2 = Some(id);
                        }
                        break;
                    }
                }
            }
            last = depth;
        }
        last
    }

    #[test]
    fn records_rule_matches_literal_insertion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let n = rng.gen_range(1..40);
            let keys: Vec<f64> = if rng.gen_bool(0.5) {
                (0..n).map(|_| rng.gen_range(0..6) as f64).collect()
            } else {
                (0..n).map(|_| rng.gen()).collect()
            };
            assert_eq!(last_insertion_depth(&keys), bst_last_depth(&keys), "{keys:?}");
        }
    }

    #[test]
    fn two_keys_always_depth_one() {
        for dist in [KeyDistribution::Permutation, KeyDistribution::Uniform, KeyDistribution::Exponential] {
            let mc = monte_carlo_last_depth(2, 50, dist, 1).unwrap();
            assert_eq!(mc.histogram, vec![0, 50]);
            assert_eq!(mc.mean, 1.0);
        }
    }

    #[test]
    fn monte_carlo_within_three_standard_errors() {
        for n in [100, 1000] {
            let theory = depth_distribution_stats(n).unwrap();
            let trials = 4000;
            let mc = monte_carlo_last_depth(n, trials, KeyDistribution::Permutation, n as u64).unwrap();
            let se = (theory.variance / trials as f64).sqrt();
            assert!((mc.mean - theory.mean).abs() < 3.0 * se, "n={n}: {} vs {}", mc.mean, theory.mean);
        }
    }

    // The last key's depth is a sum of independent indicators (key i is a
    // record with probability 2/i), so its cumulants are sums of Bernoulli
    // cumulants.
    #[test]
    fn monte_carlo_skewness_matches_bernoulli_cumulants() {
        let n = 10_000;
        let (mut k2, mut k3) = (0.0, 0.0);
        for i in 2..=n {
            let p = 2.0 / i as f64;
            k2 += p * (1.0 - p);
            k3 += p * (1.0 - p) * (1.0 - 2.0 * p);
        }
        let exact = k3 / k2.powf(1.5);
        let trials = 10_000;
        let mc = monte_carlo_last_depth(n, trials, KeyDistribution::Permutation, 3).unwrap();
        let se = (6.0 / trials as f64).sqrt();
        assert!((mc.skewness - exact).abs() < 4.0 * se, "{} vs {exact}", mc.skewness);
        assert!(mc.skewness.abs() < 0.35);
    }

    #[test]
    fn least_smooth_split_cases() {
        let linear: Vec<f64> = (0..30).map(|i| 2.0 * i as f64 + 1.0).collect();
        assert_eq!(least_smooth_split(&linear).unwrap(), 2);
        let step: Vec<f64> = (0..100).map(|i| if i < 50 { 0.0 } else { 10.0 }).collect();
        assert_eq!(least_smooth_split(&step).unwrap(), 49);
        assert!(least_smooth_split(&[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    /// Independent fit of one side by the normal equations.
    fn direct_sse(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let b = sxy / sxx;
        let a = my - b * mx;
        xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum()
    }

    #[test]
    fn least_smooth_split_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.gen_range(5..60);
            let series: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let sums: Vec<f64> = (2..=n - 3)
                .map(|i| direct_sse(&xs[..i], &series[..i]) + direct_sse(&xs[i + 1..], &series[i + 1..]))
                .collect();
            let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
            let got = least_smooth_split(&series).unwrap();
            assert!((sums[got - 2] - min).abs() <= 1e-9 * min.max(1.0), "{series:?}");
            let first = sums.iter().position(|&s| s - min <= 1e-9 * min.max(1.0)).unwrap() + 2;
            assert_eq!(got, first);
        }
    }

    #[test]
    fn outlier_overlap_extremes() {
        let mut series: Vec<f64> = (0..50).map(|i| i as f64).collect();
        series[10] += 30.0;
        series[40] -= 30.0;
        let mut flagged = vec![false; 50];
        flagged[10] = true;
        flagged[40] = true;
        assert_eq!(anomaly_outlier_overlap(&series, &flagged, 2).unwrap(), 1.0);
        let mut other = vec![false; 50];
        other[25] = true;
        other[26] = true;
        assert_eq!(anomaly_outlier_overlap(&series, &other, 2).unwrap(), 0.0);
        assert!(anomaly_outlier_overlap(&series, &other, 0).is_err());
    }

    #[test]
    fn contour_shape_and_range() {
        let g = crate::datagen::gen_experiment(3, 1000, 0.01, 2).unwrap();
        let forest = Forest::build(&g.data, &ForestConfig { tree_count: 20, ..Default::default() }).unwrap();
        let c = contour_grid(&forest, &g.data, 7, 3).unwrap();
        assert_eq!((c.width, c.height, c.values.len()), (7, 3, 21));
        assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let one = contour_grid(&forest, &g.data, 1, 1).unwrap();
        assert_eq!(one.values.len(), 1);
        assert!(one.values[0] > 0.5, "{}", one.values[0]);
        let pgm = c.to_pgm();
        assert!(pgm.starts_with(b"P5\n7 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n7 3\n255\n".len() + 21);
        assert_eq!(c.to_csv().lines().count(), 3);
    }
}
