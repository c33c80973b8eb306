//! Acceptance gate. Every criterion prints one `PASS`/`FAIL` line to stderr
//! (bypassing the test harness's capture) and then asserts its bar.

use std::io::Write;
use std::time::{Duration, Instant};

use isospec::analysis::{
    depth_distribution_stats, eval_labels, monte_carlo_last_depth, self_validate, KeyDistribution,
};
use isospec::cutoff::{cutoff_for_rate, estimate_anomaly_count_repeated};
use isospec::data::{write_dataset_csv, write_labels_csv};
use isospec::datagen::{gen_experiment, is_outside_normal};
use isospec::forest::build_tree;
use isospec::knn::{compare_rankings, knn_rank};
use isospec::pipeline::threshold;
use isospec::spec1d::merge_range_lists;
use isospec::specnd::tree_to_rects;
use isospec::{
    compile_spec, greedy_gap_cutoff, AnomalySpec, CompileOptions, Dataset, Depth, DepthProfile, Forest,
    ForestConfig, ProfileSource,
};
use isospec_validation::{
    equivalence_probes, knn_oracle, last_depth_moments, planted_gap_profile, random_cover, random_spec,
    widest_gap_boundary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[acceptance] {id:<3} {:<4} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn forest_for(data: &Dataset, seed: u64) -> Forest {
    Forest::build(data, &ForestConfig::default().with_seed(seed)).unwrap()
}

fn data_profile(forest: &Forest, data: &Dataset) -> (Vec<Depth>, DepthProfile) {
    let depths = forest.score(data).unwrap();
    let profile = DepthProfile::new(depths.clone(), ProfileSource::DataPoints).unwrap();
    (depths, profile)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn criterion_01_spec_forest_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0usize;
    let mut probes_total = 0usize;
    let mut uniform_total = 0usize;
    let mut notes = Vec::new();
    for (exp, seed) in [(1u8, 11u64), (3, 13)] {
        let set = gen_experiment(exp, 5000, 0.01, seed).unwrap();
        let forest = forest_for(&set.data, seed);
        let (_, profile) = data_profile(&forest, &set.data);
        let cutoff = cutoff_for_rate(&profile, 0.01).unwrap().cutoff_depth;
        let spec = compile_spec(&forest, cutoff, &CompileOptions::default()).unwrap();
        let probes = equivalence_probes(&forest, &set.data, 100_000, &mut rng);
        uniform_total += 100_000;
        probes_total += probes.len();
        for p in &probes {
            let direct = forest.cumulative_depth(p).unwrap() <= cutoff;
            if spec.is_anomalous(p).unwrap() != direct {
                mismatches += 1;
            }
        }
        notes.push(format!("{}-D {} regions", exp.min(2), spec.regions().len()));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = mismatches == 0 && secs < 30.0;
    report(
        "1",
        "spec/forest equivalence",
        pass,
        &format!(
            "{mismatches} mismatches over {probes_total} probes ({uniform_total} uniform), {}, {secs:.1}s (bar: 0 mismatches, <30s)",
            notes.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_experiment_one() {
    let start = Instant::now();
    let runs = 20u64;
    let mut within = 0usize;
    let mut single_within = 0usize;
    let mut counts = Vec::new();
    let mut union: Vec<AnomalySpec> = Vec::new();
    for seed in 0..runs {
        let set = gen_experiment(1, 5000, 0.01, seed).unwrap();
        let truth = set.labels.iter().filter(|&&l| l).count() as f64;
        let config = ForestConfig::default().with_seed(seed * 100);
        let count = estimate_anomaly_count_repeated(&set.data, &config, 5).unwrap();
        if (count as f64 - truth).abs() <= 0.3 * truth {
            within += 1;
        }
        counts.push(format!("{count}({truth})"));

        let forest = Forest::build(&set.data, &config).unwrap();
        let (_, profile) = data_profile(&forest, &set.data);
        let est = greedy_gap_cutoff(&profile).unwrap();
        if (est.anomaly_count as f64 - truth).abs() <= 0.3 * truth {
            single_within += 1;
        }
        union.push(compile_spec(&forest, est.cutoff_depth, &CompileOptions::default()).unwrap());
    }
    let steps = 320_000usize;
    let (mut flagged, mut correct) = (0usize, 0usize);
    for i in 0..=steps {
        let x = -1.6 + 3.2 * i as f64 / steps as f64;
        if union.iter().any(|s| s.is_anomalous(&[x]).unwrap()) {
            flagged += 1;
            if is_outside_normal(1, &[x]).unwrap() {
                correct += 1;
            }
        }
    }
    let precision = if flagged == 0 { 0.0 } else { correct as f64 / flagged as f64 };
    let secs = start.elapsed().as_secs_f64();
    let rate = within as f64 / runs as f64;
    let pass_a = rate >= 0.8;
    let pass_b = precision >= 0.85;
    report(
        "2a",
        "experiment 1 count estimate",
        pass_a,
        &format!(
            "repeated estimate within 30% in {within}/{runs} runs ({:.0}%), single run {single_within}/{runs}; estimate(truth): {} (bar: >=80%)",
            rate * 100.0,
            counts.join(" ")
        ),
    );
    report(
        "2b",
        "experiment 1 range union precision",
        pass_b && secs < 60.0,
        &format!("precision {precision:.4} over {} probes, {secs:.1}s (bar: >=0.85, <60s)", steps + 1),
    );
    assert!(secs < 60.0, "criterion 2 took {secs:.1}s");
    assert!(pass_b, "2b precision {precision:.4}");
    assert!(pass_a, "2a within-30% rate {rate:.2}");
}

/// Mean (precision, recall, f) of known-rate specifications over ten seeds.
fn spec_quality(exp: u8) -> (f64, f64, f64) {
    let (mut p, mut r, mut f) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let set = gen_experiment(exp, 5000, 0.01, seed).unwrap();
        let forest = forest_for(&set.data, seed);
        let (_, profile) = data_profile(&forest, &set.data);
        let cutoff = cutoff_for_rate(&profile, 0.01).unwrap().cutoff_depth;
        let spec = compile_spec(&forest, cutoff, &CompileOptions::default()).unwrap();
        let labels = spec.classify(&set.data).unwrap();
        let e = eval_labels(&labels, &set.labels).unwrap();
        p.push(e.precision);
        r.push(e.recall);
        f.push(e.f_measure);
    }
    (mean(&p), mean(&r), mean(&f))
}

#[test]
fn criterion_03_experiment_three_and_four() {
    let (p3, r3, f3) = spec_quality(3);
    let (p4, r4, f4) = spec_quality(4);
    let pass_p = p3 >= 0.80;
    let pass_r = r3 >= 0.70;
    let pass_rot = f4 >= f3;
    report(
        "3",
        "experiment 3/4 contrast",
        pass_p && pass_r && pass_rot,
        &format!(
            "exp3 p={p3:.3} r={r3:.3} f={f3:.3}; exp4 p={p4:.3} r={r4:.3} f={f4:.3} (bar: exp3 p>=0.80, r>=0.70, exp4 f>=exp3 f)"
        ),
    );
    assert!(pass_r, "exp3 recall {r3:.3}");
    assert!(pass_rot, "exp4 f {f4:.3} < exp3 f {f3:.3}");
    assert!(pass_p, "exp3 precision {p3:.3}");
}

#[test]
fn criterion_04_experiment_nine_ring() {
    let (p, r, f) = spec_quality(9);
    let pass = f <= 0.6;
    report(
        "4",
        "experiment 9 known failure",
        pass,
        &format!("p={p:.3} r={r:.3} f={f:.3} (bar: f<=0.6)"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_depth_distribution_theory() {
    let start = Instant::now();
    let n = 10_000;
    let mc = monte_carlo_last_depth(n, 10_000, KeyDistribution::Permutation, 5).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (mean_cf, var_cf) = last_depth_moments(n);
    let stats = depth_distribution_stats(n).unwrap();
    let mean_err = (mc.mean - mean_cf).abs() / mean_cf;
    let var_err = (mc.variance - var_cf).abs() / var_cf;
    let pass = mean_err <= 0.02 && var_err <= 0.05 && secs < 60.0;
    report(
        "5",
        "depth distribution theory",
        pass,
        &format!(
            "mean {:.4} vs {mean_cf:.4} ({:.2}%), variance {:.4} vs {var_cf:.4} ({:.2}%), skewness {:.3}, {secs:.1}s (bar: 2%, 5%, <60s)",
            mc.mean,
            mean_err * 100.0,
            mc.variance,
            var_err * 100.0,
            mc.skewness
        ),
    );
    assert!((stats.mean - mean_cf).abs() < 1e-9 && (stats.variance - var_cf).abs() < 1e-9);
    assert!(pass);
}

#[test]
fn criterion_06_cover_merge_and_leaf_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut merge_violations = 0usize;
    let mut sum_violations = 0usize;
    for _ in 0..1000 {
        let a = random_cover(&mut rng);
        let b = random_cover(&mut rng);
        let merged = merge_range_lists(&[a.clone(), b.clone()]).unwrap();
        if merged.len() > a.len() + b.len() {
            merge_violations += 1;
        }
        for r in merged.ranges() {
            let x = if r.from.is_finite() { r.from } else { r.to - 1.0 };
            if r.depth != a.depth_at(x) + b.depth_at(x) {
                sum_violations += 1;
            }
        }
    }
    let pass_a = merge_violations == 0 && sum_violations == 0;
    report(
        "6a",
        "merged cover size bound",
        pass_a,
        &format!("{merge_violations} size violations, {sum_violations} depth-sum violations over 1000 pairs (bar: 0)"),
    );

    let mut cover_violations = 0usize;
    let mut depth_violations = 0usize;
    for _ in 0..100 {
        let n = rng.gen_range(2..300);
        let lattice = rng.gen_bool(0.3);
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                if lattice {
                    [f64::from(rng.gen_range(0..6)), f64::from(rng.gen_range(0..6))]
                } else {
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-5.0..5.0)]
                }
            })
            .collect();
        let sample = Dataset::from_points(&points).unwrap();
        let tree = build_tree(&sample, &mut rng).unwrap();
        let rects = tree_to_rects(&tree);
        let bounds = sample.bounds().unwrap();
        let splits = tree.splits_by_dim();
        for _ in 0..10_000 {
            let mut p: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo - 1.0..hi + 1.0))
                .collect();
            // Land on a split value a quarter of the time.
            for (dim, s) in splits.iter().enumerate() {
                if !s.is_empty() && rng.gen_bool(0.25) {
                    p[dim] = s[rng.gen_range(0..s.len())];
                }
            }
            let hits: Vec<_> = rects.iter().filter(|r| r.region.contains(&p)).collect();
            if hits.len() != 1 {
                cover_violations += 1;
            } else if hits[0].depth != tree.path_depth(&p).unwrap() {
                depth_violations += 1;
            }
        }
    }
    let pass_b = cover_violations == 0 && depth_violations == 0;
    report(
        "6b",
        "leaf rectangles partition the plane",
        pass_b,
        &format!("{cover_violations} probes not in exactly one rectangle, {depth_violations} depth mismatches over 100 trees x 10000 probes (bar: 0)"),
    );
    assert!(pass_a);
    assert!(pass_b);
}

#[test]
fn criterion_07_planted_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cases = 1000;
    let mut located = 0usize;
    for _ in 0..cases {
        let (depths, prefix) = planted_gap_profile(&mut rng);
        let oracle = widest_gap_boundary(&depths).unwrap();
        assert_eq!(oracle, prefix);
        let profile = DepthProfile::new(depths, ProfileSource::DataPoints).unwrap();
        if greedy_gap_cutoff(&profile).unwrap().anomaly_count == oracle {
            located += 1;
        }
    }
    let rate = located as f64 / cases as f64;
    let pass = rate >= 0.99;
    report(
        "7",
        "greedy cutoff finds planted gap",
        pass,
        &format!("{located}/{cases} located ({:.1}%) (bar: >=99%)", rate * 100.0),
    );
    assert!(pass);
}

#[test]
fn criterion_08_self_validation() {
    let (mut rho, mut p, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..20u64 {
        let set = gen_experiment(1, 5000, 0.01, 800 + s).unwrap();
        let v = self_validate(&set.data, &ForestConfig::default(), 2 * s + 1, 2 * s + 2).unwrap();
        rho.push(v.report.spearman_rho.unwrap());
        p.push(v.report.precision);
        r.push(v.report.recall);
    }
    let (rho, p, r) = (mean(&rho), mean(&p), mean(&r));
    let pass_rho = rho >= 0.85;
    let pass_pr = p >= 0.70 && r >= 0.70;
    report(
        "8",
        "self-validation",
        pass_rho && pass_pr,
        &format!("mean rho={rho:.3} p={p:.3} r={r:.3} over 20 seed pairs (bar: rho>=0.85, p>=0.70, r>=0.70)"),
    );
    assert!(pass_pr, "p {p:.3} r {r:.3}");
    assert!(pass_rho, "rho {rho:.3}");
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

#[test]
fn criterion_09_speedup() {
    let set = gen_experiment(1, 1_000_000, 0.01, 9).unwrap();
    let forest = forest_for(&set.data, 9);
    let (depths, profile) = data_profile(&forest, &set.data);
    let cutoff = cutoff_for_rate(&profile, 0.01).unwrap().cutoff_depth;
    let spec = compile_spec(&forest, cutoff, &CompileOptions::default()).unwrap();
    let expected = threshold(&depths, cutoff);
    let (mut direct, mut lookup) = (Vec::new(), Vec::new());
    for _ in 0..3 {
        let t = Instant::now();
        let labels = threshold(&forest.score(&set.data).unwrap(), cutoff);
        direct.push(t.elapsed());
        assert_eq!(labels, expected);
        let t = Instant::now();
        let labels = spec.classify(&set.data).unwrap();
        lookup.push(t.elapsed());
        assert_eq!(labels, expected);
    }
    let (direct, lookup) = (median(direct), median(lookup));
    let speedup = direct.as_secs_f64() / lookup.as_secs_f64().max(1e-9);
    let pass = speedup >= 5.0;
    report(
        "9",
        "specification speedup",
        pass,
        &format!(
            "score {:.3}s vs detect {:.3}s on 1e6 points, {speedup:.1}x ({} ranges) (bar: >=5x)",
            direct.as_secs_f64(),
            lookup.as_secs_f64(),
            spec.regions().len()
        ),
    );
    assert!(pass);
}

/// Every artifact of one seeded generate/train/specify/detect run, as bytes.
fn pipeline_bytes(exp: u8, seed: u64) -> Vec<Vec<u8>> {
    let set = gen_experiment(exp, 3000, 0.01, seed).unwrap();
    let mut data_csv = Vec::new();
    write_dataset_csv(&mut data_csv, &set.data, Some(&set.labels)).unwrap();
    let forest = forest_for(&set.data, seed);
    let (_, profile) = data_profile(&forest, &set.data);
    let cutoff = greedy_gap_cutoff(&profile).unwrap().cutoff_depth;
    let spec = compile_spec(&forest, cutoff, &CompileOptions::default()).unwrap();
    let mut labels_csv = Vec::new();
    write_labels_csv(&mut labels_csv, &spec.classify(&set.data).unwrap()).unwrap();
    vec![
        data_csv,
        forest.to_text().into_bytes(),
        spec.to_text().into_bytes(),
        labels_csv,
    ]
}

#[test]
fn criterion_10_round_trip_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut failures = 0usize;
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let text = spec.to_text();
        match AnomalySpec::from_text(&text) {
            Ok(back) if back == spec && back.to_text() == text => {}
            _ => failures += 1,
        }
    }
    let mut nondeterministic = 0usize;
    for (exp, seed) in [(1u8, 3u64), (3, 4), (9, 5)] {
        if pipeline_bytes(exp, seed) != pipeline_bytes(exp, seed) {
            nondeterministic += 1;
        }
    }
    let pass = failures == 0 && nondeterministic == 0;
    report(
        "10",
        "round trip and determinism",
        pass,
        &format!("{failures}/1000 specs failed to round-trip, {nondeterministic}/3 pipelines differed on rerun (bar: 0)"),
    );
    assert!(pass);
}

#[test]
fn criterion_11_knn_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut mismatched = 0usize;
    for _ in 0..100 {
        let points: Vec<[f64; 2]> = (0..500)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    [f64::from(rng.gen_range(0..10)), f64::from(rng.gen_range(0..10))]
                } else {
                    [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]
                }
            })
            .collect();
        let max_k = rng.gen_range(1..=200);
        let ranking = knn_rank(&Dataset::from_points(&points).unwrap(), max_k).unwrap();
        let (scores, best, order) = knn_oracle(&points, max_k);
        let same_scores = ranking
            .scores
            .iter()
            .zip(&scores)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same_scores || ranking.best_k != best || ranking.order != order {
            mismatched += 1;
        }
    }
    let set = gen_experiment(3, 5000, 0.01, 0).unwrap();
    let forest = forest_for(&set.data, 0);
    let (depths, profile) = data_profile(&forest, &set.data);
    let cutoff = cutoff_for_rate(&profile, 0.01).unwrap().cutoff_depth;
    let ranking = knn_rank(&set.data, 200).unwrap();
    let cmp = compare_rankings(&depths, &threshold(&depths, cutoff), &ranking).unwrap();
    let pass = mismatched == 0 && cmp.pearson_r > 0.3;
    report(
        "11",
        "k-NN oracle and ranking agreement",
        pass,
        &format!(
            "{mismatched}/100 datasets differ from brute force; experiment 3 pearson r={:.3}, best f={:.3} at m={} (bar: 0, r>0.3)",
            cmp.pearson_r, cmp.best_f_measure, cmp.best_m
        ),
    );
    assert!(pass);
}
