use std::collections::BTreeMap;

use isospec::analysis::{eval_labels, f_measure, pearson_r, spearman_rho};
use isospec::data::format_float;
use isospec::spec1d::{merge_range_lists, tree_to_ranges};
use isospec::{
    compile_spec, greedy_gap_cutoff, AnomalySpec, CompileOptions, Dataset, DepthProfile, Forest, ForestConfig,
    ProfileSource, Provenance, Region,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn coordinate() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3..1e3f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        (-50i32..50).prop_map(|v| f64::from(v) / 4.0),
    ]
}

fn ranges_1d() -> impl Strategy<Value = Vec<Region>> {
    vec(coordinate(), 0..20).prop_map(|mut edges| {
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges
            .chunks_exact(2)
            .map(|c| Region::new(vec![c[0]], vec![c[1]]).unwrap())
            .collect()
    })
}

fn boxes(dims: usize) -> impl Strategy<Value = Vec<Region>> {
    vec(vec((coordinate(), 0.001..1e3f64), dims), 0..10).prop_map(|raw| {
        raw.into_iter()
            .map(|sides| {
                let lo: Vec<f64> = sides.iter().map(|s| s.0).collect();
                let hi: Vec<f64> = sides
                    .iter()
                    .map(|&(l, w)| if l + w > l { l + w } else { f64::INFINITY })
                    .collect();
                Region::new(lo, hi).unwrap()
            })
            .collect()
    })
}

fn provenance() -> impl Strategy<Value = Provenance> {
    (
        any::<u64>(),
        1usize..1000,
        2usize..5000,
        proptest::option::of("[0-9a-f]{16}"),
        proptest::collection::btree_map("[a-z_]{1,8}", "[a-z0-9.,]{1,8}", 0..3),
    )
        .prop_map(|(seed, tree_count, sample_size, source, params)| Provenance {
            seed,
            tree_count,
            sample_size,
            source,
            params: params.into_iter().collect::<BTreeMap<_, _>>(),
        })
}

fn spec() -> impl Strategy<Value = AnomalySpec> {
    (1usize..=3)
        .prop_flat_map(|dims| {
            let regions = if dims == 1 { ranges_1d().boxed() } else { boxes(dims).boxed() };
            (Just(dims), any::<u32>(), regions, provenance())
        })
        .prop_map(|(dims, cutoff, regions, prov)| AnomalySpec::new(dims, cutoff, regions, prov).unwrap())
}

proptest! {
    #[test]
    fn spec_text_round_trips(s in spec()) {
        let text = s.to_text();
        let back = AnomalySpec::from_text(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn float_formatting_is_lossless(v in any::<f64>().prop_filter("not nan", |v| !v.is_nan())) {
        let back: f64 = format_float(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn eval_metrics_stay_in_range(pairs in vec((any::<bool>(), any::<bool>()), 1..300)) {
        let (pred, truth): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let r = eval_labels(&pred, &truth).unwrap();
        for m in [r.precision, r.recall, r.f_measure] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        prop_assert_eq!(r.f_measure, f_measure(r.precision, r.recall));
        prop_assert_eq!(r.tp + r.fp + r.fn_ + r.tn, pred.len());
    }

    #[test]
    fn correlations_are_bounded(a in vec(-1e6..1e6f64, 2..100), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.5 + ((seed >> (i % 64)) & 1) as f64).collect();
        for r in [pearson_r(&a, &b).unwrap(), spearman_rho(&a, &b).unwrap()] {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn greedy_estimate_lies_on_the_profile(depths in vec(0u32..2000, 2..400)) {
        let profile = DepthProfile::new(depths, ProfileSource::DataPoints).unwrap();
        let e = greedy_gap_cutoff(&profile).unwrap();
        prop_assert!(e.anomaly_count >= 1 && e.anomaly_count < profile.len());
        prop_assert!(profile.depths().contains(&e.cutoff_depth));
        prop_assert_eq!(profile.depths()[e.anomaly_count - 1], e.cutoff_depth);
    }

    #[test]
    fn one_dimensional_spec_agrees_with_forest(
        xs in vec(-100.0..100.0f64, 20..200),
        seed in any::<u64>(),
        quantile in 0.0..1.0f64,
        probes in vec(-150.0..150.0f64, 200),
    ) {
        let data = Dataset::from_scalars(&xs).unwrap();
        let config = ForestConfig { tree_count: 10, sample_size: 32, seed, integer_keys: false };
        let forest = Forest::build(&data, &config).unwrap();
        let mut depths = forest.score(&data).unwrap();
        depths.sort_unstable();
        let cutoff = depths[((depths.len() - 1) as f64 * quantile) as usize];
        let spec = compile_spec(&forest, cutoff, &CompileOptions::default()).unwrap();
        for x in probes.iter().chain(&xs) {
            let direct = forest.cumulative_depth(&[*x]).unwrap() <= cutoff;
            prop_assert_eq!(spec.is_anomalous(&[*x]).unwrap(), direct);
        }
        let lists: Vec<_> = forest.trees().iter().map(|t| tree_to_ranges(t).unwrap()).collect();
        let boundaries: usize = lists.iter().map(|l| l.len() - 1).sum();
        prop_assert!(merge_range_lists(&lists).unwrap().len() <= boundaries + 1);
    }

    #[test]
    fn two_dimensional_spec_agrees_with_forest(
        pts in vec((-10.0..10.0f64, -10.0..10.0f64), 10..80),
        seed in any::<u64>(),
        quantile in 0.0..1.0f64,
        probes in vec((-15.0..15.0f64, -15.0..15.0f64), 200),
    ) {
        let points: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let data = Dataset::from_points(&points).unwrap();
        let config = ForestConfig { tree_count: 5, sample_size: 16, seed, integer_keys: false };
        let forest = Forest::build(&data, &config).unwrap();
        let mut depths = forest.score(&data).unwrap();
        depths.sort_unstable();
        let cutoff = depths[((depths.len() - 1) as f64 * quantile) as usize];
        let spec = compile_spec(&forest, cutoff, &CompileOptions::default()).unwrap();
        for p in probes.iter().chain(&pts).map(|&(x, y)| [x, y]) {
            let direct = forest.cumulative_depth(&p).unwrap() <= cutoff;
            prop_assert_eq!(spec.is_anomalous(&p).unwrap(), direct);
        }
    }

    #[test]
    fn model_text_round_trips(xs in vec((-5.0..5.0f64, -5.0..5.0f64), 2..60), seed in any::<u64>()) {
        let points: Vec<[f64; 2]> = xs.iter().map(|&(x, y)| [x, y]).collect();
        let data = Dataset::from_points(&points).unwrap();
        let config = ForestConfig { tree_count: 4, sample_size: 16, seed, integer_keys: false };
        let forest = Forest::build(&data, &config).unwrap();
        let text = forest.to_text();
        let back = Forest::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back.score(&data).unwrap(), forest.score(&data).unwrap());
    }
}
