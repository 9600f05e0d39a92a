mod common;

use std::path::Path;

use affinity_core::data::{
    apply_transform, load_adult, make_synthetic_two_group, merge_as_groups, AdultConfig, MissingPolicy, TransformSpec,
};
use affinity_core::runner::load_mnist;

fn header_count(path: &Path) -> usize {
    let bytes = std::fs::read(path).unwrap();
    u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize
}

fn have(dir: &str) -> bool {
    let ok = common::data_root().join(dir).exists();
    if !ok {
        eprintln!("skipping: {dir} files not found under {}", common::data_root().display());
    }
    ok
}

#[test]
fn digit_counts_follow_the_file_headers() {
    if !have("mnist") {
        return;
    }
    let dir = common::data_root().join("mnist");
    let (train, test) = load_mnist(&common::data_root()).unwrap();
    assert_eq!(train.len(), header_count(&dir.join("train-images-idx3-ubyte")));
    assert_eq!(train.len(), header_count(&dir.join("train-labels-idx1-ubyte")));
    assert_eq!(test.len(), header_count(&dir.join("t10k-images-idx3-ubyte")));
    assert_eq!(train.width(), 784);
    assert!(train.features.iter().all(|&p| (0.0..=1.0).contains(&p)));

    let merged = merge_as_groups(&train, &apply_transform(&train, &TransformSpec::Invert).unwrap()).unwrap();
    assert_eq!(merged.len(), 2 * train.len());
    assert_eq!(merged.group_counts(), [train.len(), train.len()]);
    let doubled: Vec<usize> = train.class_histogram().values().map(|c| 2 * c).collect();
    assert_eq!(merged.class_histogram().values().copied().collect::<Vec<_>>(), doubled);
}

#[test]
fn rotation_round_trip_loses_little() {
    if !have("mnist") {
        return;
    }
    let (_, test) = load_mnist(&common::data_root()).unwrap();
    let sample = test.take(100);
    let there = apply_transform(&sample, &TransformSpec::Rotate { degrees: 30.0 }).unwrap();
    let back = apply_transform(&there, &TransformSpec::Rotate { degrees: -30.0 }).unwrap();
    let err = (&back.features - &sample.features).mapv(f64::abs).mean().unwrap();
    assert!(err < 0.05, "mean abs error {err}");
    assert_eq!(back.targets, sample.targets);
}

#[test]
fn adult_split_sizes() {
    if !have("adult") {
        return;
    }
    let dir = common::data_root().join("adult");
    let splits = load_adult(&dir.join("adult.data"), &dir.join("adult.test"), &AdultConfig::default()).unwrap();
    assert_eq!(splits.test.len(), 16_281);
    assert_eq!(splits.train.len() + splits.validation.len(), 32_561);
    assert_eq!(splits.validation.len(), 6_512);
    assert_eq!(splits.train.n_classes, 2);

    let dropped = load_adult(
        &dir.join("adult.data"),
        &dir.join("adult.test"),
        &AdultConfig {
            missing: MissingPolicy::DropRow,
            ..AdultConfig::default()
        },
    )
    .unwrap();
    assert_eq!(dropped.test.len(), 15_060);
    assert_eq!(dropped.train.len() + dropped.validation.len(), 30_162);
}

/// Logistic regression by full-batch gradient descent, scored on held-out
/// rows.
fn reference_linear_accuracy(x: &ndarray::Array2<f64>, y: &[u8], xt: &ndarray::Array2<f64>, yt: &[u8]) -> f64 {
    let (n, d) = x.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for i in 0..n {
            let s: f64 = b + (0..d).map(|k| w[k] * x[[i, k]]).sum::<f64>();
            let err = 1.0 / (1.0 + (-s).exp()) - f64::from(y[i]);
            for k in 0..d {
                gw[k] += err * x[[i, k]] / n as f64;
            }
            gb += err / n as f64;
        }
        for k in 0..d {
            w[k] -= 0.5 * gw[k];
        }
        b -= 0.5 * gb;
    }
    let hits = (0..yt.len())
        .filter(|&i| {
            let s: f64 = b + (0..d).map(|k| w[k] * xt[[i, k]]).sum::<f64>();
            (s > 0.0) == (yt[i] == 1)
        })
        .count();
    hits as f64 / yt.len() as f64
}

#[test]
fn synthetic_leak_controls_group_separability() {
    let accuracy = |leak: f64| {
        let fit = make_synthetic_two_group(2000, 20, leak, 0).unwrap();
        let held_out = make_synthetic_two_group(2000, 20, leak, 1).unwrap();
        reference_linear_accuracy(&fit.features, &fit.groups, &held_out.features, &held_out.groups)
    };
    assert!(accuracy(1.0) > 0.95);
    let acc = accuracy(0.0);
    assert!((acc - 0.5).abs() < 0.05, "{acc}");
}
