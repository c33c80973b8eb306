//! Brute-force reference implementations and random workloads used to check
//! `isospec` from the outside. Nothing here shares code with the library's
//! fast paths.

use std::collections::BTreeMap;

use isospec::spec1d::{Range, RangeList};
use isospec::{AnomalySpec, Dataset, Depth, Forest, Provenance, Region};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Closed-form mean and variance of the depth of the last of `n` keys
/// inserted in random order into a binary search tree.
pub fn last_depth_moments(n: usize) -> (f64, f64) {
    let (mut mean, mut var) = (0.0, 0.0);
    for i in 2..=n {
        let i = i as f64;
        mean += 2.0 / i;
        var += (2.0 - 4.0 / i) / i;
    }
    (mean, var)
}

/// Index just past the widest adjacent gap, by exhaustive scan. The first of
/// equally wide gaps wins.
pub fn widest_gap_boundary(depths: &[Depth]) -> Option<usize> {
    let mut best: Option<(Depth, usize)> = None;
    for i in 1..depths.len() {
        let gap = depths[i] - depths[i - 1];
        if best.is_none_or(|(g, _)| gap > g) {
            best = Some((gap, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Sorted depths with one gap at least five times wider than any other,
/// placed after a prefix of at most 40% of the entries. Returns the profile
/// and the prefix length.
pub fn planted_gap_profile(rng: &mut ChaCha8Rng) -> (Vec<Depth>, usize) {
    let n: usize = rng.gen_range(5..600);
    let prefix = rng.gen_range(1..=(n * 2 / 5).max(1));
    let small_max: Depth = rng.gen_range(0..8);
    let mut gaps: Vec<Depth> = (0..n - 1).map(|_| rng.gen_range(0..=small_max)).collect();
    let largest_other = gaps.iter().copied().max().unwrap_or(0);
    gaps[prefix - 1] = (5 * largest_other).max(1) + rng.gen_range(0..20);
    let mut depths = vec![rng.gen_range(0..1000)];
    for g in &gaps {
        depths.push(depths.last().unwrap() + g);
    }
    (depths, prefix)
}

/// Contiguous cover of the real line with random breakpoints, half of them
/// on a small integer lattice so that two covers often share boundaries.
pub fn random_cover(rng: &mut ChaCha8Rng) -> RangeList {
    let cuts = rng.gen_range(0..40);
    let mut points: Vec<f64> = (0..cuts)
        .map(|_| {
            if rng.gen_bool(0.5) {
                f64::from(rng.gen_range(-20i32..20))
            } else {
                rng.gen_range(-20.0..20.0)
            }
        })
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(points);
    edges.push(f64::INFINITY);
    let ranges = edges
        .windows(2)
        .map(|w| Range::new(w[0], w[1], rng.gen_range(0..12)))
        .collect();
    RangeList::new(ranges).expect("edges are strictly increasing")
}

/// Probes uniform over the data's bounding box widened by half its extent,
/// plus every split value of every tree and both of its float neighbours.
pub fn equivalence_probes(
    forest: &Forest,
    data: &Dataset,
    uniform: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let bounds = data.bounds().expect("non-empty data");
    let mut probes: Vec<Vec<f64>> = (0..uniform)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    let pad = (hi - lo) * 0.5;
                    rng.gen_range(lo - pad..hi + pad)
                })
                .collect()
        })
        .collect();
    for tree in forest.trees() {
        for (dim, splits) in tree.splits_by_dim().iter().enumerate() {
            for &s in splits {
                for x in [s, s.next_down(), s.next_up()] {
                    let mut p = data.point(rng.gen_range(0..data.len())).to_vec();
                    p[dim] = x;
                    probes.push(p);
                }
            }
        }
    }
    probes
}

fn random_float(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..5) {
        0 => rng.gen_range(-1.0..1.0),
        1 => rng.gen_range(-1e6..1e6),
        2 => f64::from(rng.gen_range(-100i32..100)) / 8.0,
        3 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-300..300)),
        _ => f64::from_bits(rng.gen::<u64>() >> 2),
    }
}

/// Valid specification with 1 to 3 dimensions, extreme coordinates,
/// unbounded sides and random provenance.
pub fn random_spec(rng: &mut ChaCha8Rng) -> AnomalySpec {
    let dims = rng.gen_range(1..=3);
    let count = rng.gen_range(0..12);
    let regions: Vec<Region> = if dims == 1 {
        let mut edges: Vec<f64> = (0..2 * count).map(|_| random_float(rng)).collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        if edges.len() % 2 == 1 {
            edges.pop();
        }
        if !edges.is_empty() && rng.gen_bool(0.3) {
            edges[0] = f64::NEG_INFINITY;
        }
        if !edges.is_empty() && rng.gen_bool(0.3) {
            *edges.last_mut().unwrap() = f64::INFINITY;
        }
        edges
            .chunks(2)
            .map(|c| Region::new(vec![c[0]], vec![c[1]]).unwrap())
            .collect()
    } else {
        (0..count)
            .map(|_| {
                let (lo, hi): (Vec<f64>, Vec<f64>) = (0..dims)
                    .map(|_| {
                        let (a, b) = (random_float(rng), random_float(rng));
                        let (a, b) = match a.total_cmp(&b) {
                            std::cmp::Ordering::Less => (a, b),
                            std::cmp::Ordering::Greater => (b, a),
                            std::cmp::Ordering::Equal => (a, a + 1.0),
                        };
                        let a = if rng.gen_bool(0.1) { f64::NEG_INFINITY } else { a };
                        let b = if rng.gen_bool(0.1) { f64::INFINITY } else { b };
                        (a, b)
                    })
                    .unzip();
                Region::new(lo, hi).unwrap()
            })
            .collect()
    };
    let mut params = BTreeMap::new();
    for i in 0..rng.gen_range(0..3) {
        params.insert(format!("key{i}"), format!("v{}", rng.gen::<u16>()));
    }
    let provenance = Provenance {
        seed: rng.gen(),
        tree_count: rng.gen_range(1..500),
        sample_size: rng.gen_range(2..1000),
        source: rng.gen_bool(0.5).then(|| format!("{:016x}", rng.gen::<u64>())),
        params,
    };
    AnomalySpec::new(dims, rng.gen(), regions, provenance).unwrap()
}

/// Nearest-neighbour outlier scores by sorting every distance: per point
/// the maximum over `k <= max_k` of squared k-th neighbour distance over
/// `k`, the smallest such `k`, and the point order by descending score.
pub fn knn_oracle(points: &[[f64; 2]], max_k: usize) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut scores = Vec::with_capacity(points.len());
    let mut best = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut d2: Vec<f64> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]))
            .collect();
        d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut s = f64::NEG_INFINITY;
        let mut at = 0;
        for k in 1..=max_k.min(d2.len()) {
            let v = d2[k - 1] / k as f64;
            if v > s {
                s = v;
                at = k;
            }
        }
        scores.push(s);
        best.push(at);
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    (scores, best, order)
}
