//! Reference implementations shared by the integration tests. They are
//! written directly from the definitions and share no code with the library
//! beyond plain data types.

#![allow(dead_code)]

use std::path::PathBuf;

use affinity_core::affinity::{AffinityConfig, Direction, NeighborGradient, Normalization};
use affinity_core::data::{BatchSampler, Dataset};
use affinity_core::nn::{
    cross_entropy_from_logits, init_network, ArchitectureSpec, Network, Optimizer, OptimizerSettings,
};
use ndarray::{Array2, Axis};

pub fn data_root() -> PathBuf {
    match std::env::var_os("AFFINITY_DATA_ROOT") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

/// Exhaustive nearest-neighbor affinity loss and its subgradient.
pub fn oracle_affinity(reps: &Array2<f64>, labels: &[usize], groups: &[u8], cfg: &AffinityConfig) -> (f64, Array2<f64>) {
    let n = reps.nrows();
    let mut grad = Array2::zeros(reps.raw_dim());
    if !groups.contains(&0) || !groups.contains(&1) {
        return (0.0, grad);
    }
    let dist = |i: usize, j: usize| -> f64 { (0..reps.ncols()).map(|k| (reps[[i, k]] - reps[[j, k]]).abs()).sum() };
    let anchor_groups: Vec<(u8, f64)> = match cfg.direction {
        Direction::AnchorGroup0 => vec![(0, 1.0)],
        Direction::SymmetricMean => vec![(0, 0.5), (1, 0.5)],
    };
    let mut loss = 0.0;
    for (anchor, weight) in anchor_groups {
        let anchors: Vec<usize> = (0..n).filter(|&i| groups[i] == anchor).collect();
        let mut classes: Vec<usize> = anchors.iter().map(|&i| labels[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        for &i in &anchors {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if groups[j] == anchor || (cfg.class_conditional && labels[j] != labels[i]) {
                    continue;
                }
                let d = dist(i, j);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            let Some((j, d)) = best else { continue };
            let class_size = anchors.iter().filter(|&&a| labels[a] == labels[i]).count();
            let divisor = match cfg.normalization {
                Normalization::ClassesTimesAnchors => classes.len() * anchors.len(),
                Normalization::Anchors => anchors.len(),
                Normalization::ClassMean => classes.len() * class_size,
                Normalization::Classes => classes.len(),
            } as f64;
            loss += weight * d / divisor;
            for k in 0..reps.ncols() {
                let diff = reps[[i, k]] - reps[[j, k]];
                let s = if diff > 0.0 { 1.0 } else if diff < 0.0 { -1.0 } else { 0.0 };
                grad[[i, k]] += weight * s / divisor;
                if cfg.neighbor_gradient == NeighborGradient::BothSides {
                    grad[[j, k]] -= weight * s / divisor;
                }
            }
        }
    }
    (loss, grad)
}

/// Fairness numbers from a 2x2x2 confusion tensor `c[group][truth][prediction]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteMetrics {
    pub accuracy: f64,
    pub parity_gap: f64,
    pub equality_gap: f64,
    pub tnr_gap: f64,
    pub group_accuracy: [f64; 2],
}

pub fn confusion(p: &[usize], t: &[usize], g: &[u8]) -> [[[usize; 2]; 2]; 2] {
    let mut c = [[[0usize; 2]; 2]; 2];
    for i in 0..p.len() {
        c[g[i] as usize][t[i]][p[i]] += 1;
    }
    c
}

/// `None` when some stratum is empty.
pub fn brute_metrics(p: &[usize], t: &[usize], g: &[u8]) -> Option<BruteMetrics> {
    let c = confusion(p, t, g);
    let total: usize = c.iter().flatten().flatten().sum();
    let correct: usize = (0..2).map(|z| c[z][0][0] + c[z][1][1]).sum();
    let size = |z: usize| c[z][0][0] + c[z][0][1] + c[z][1][0] + c[z][1][1];
    let pos = |z: usize| c[z][1][1] + c[z][1][0];
    let neg = |z: usize| c[z][0][0] + c[z][0][1];
    if (0..2).any(|z| size(z) == 0 || pos(z) == 0 || neg(z) == 0) {
        return None;
    }
    let ppr = |z: usize| (c[z][0][1] + c[z][1][1]) as f64 / size(z) as f64;
    let tpr = |z: usize| c[z][1][1] as f64 / pos(z) as f64;
    let tnr = |z: usize| c[z][0][0] as f64 / neg(z) as f64;
    let acc = |z: usize| (c[z][0][0] + c[z][1][1]) as f64 / size(z) as f64;
    Some(BruteMetrics {
        accuracy: correct as f64 / total as f64,
        parity_gap: (ppr(0) - ppr(1)).abs(),
        equality_gap: (tpr(0) - tpr(1)).abs(),
        tnr_gap: (tnr(0) - tnr(1)).abs(),
        group_accuracy: [acc(0), acc(1)],
    })
}

/// Mini-batch cross-entropy training with no regularizer, written out by
/// hand from the network primitives.
pub fn plain_supervised(
    train: &Dataset,
    arch: &ArchitectureSpec,
    optimizer: OptimizerSettings,
    sampler: &BatchSampler,
    epochs: usize,
    seed: u64,
) -> Network {
    let mut net = init_network(arch, seed).unwrap();
    let mut opt = Optimizer::new(optimizer).unwrap();
    for epoch in 0..epochs {
        for idx in sampler.epoch(&train.groups, epoch).unwrap() {
            let x = train.features.select(Axis(0), &idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.targets[i]).collect();
            let trace = net.forward(&x).unwrap();
            let (_, g) = cross_entropy_from_logits(trace.logits(), &y).unwrap();
            let grads = net.backward(&trace, &g).unwrap();
            opt.apply_update(&mut net, &grads).unwrap();
        }
    }
    net
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
