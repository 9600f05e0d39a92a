use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema, Split};
use crate::{Error, Result};

/// Two balanced groups with binary Gaussian class clusters.
///
/// The first half of the coordinates carries the class signal
/// (`±class_separation` per coordinate), the second half a group offset of
/// `±group_offset * leak`. Unit-variance noise on every coordinate. With
/// `leak = 0` and `label_bias = 0` the two groups have identical
/// distributions. `label_bias` shifts `P(y = 1 | z)` to `0.5 ± bias / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub width: usize,
    pub leak: f64,
    pub label_bias: f64,
    pub class_separation: f64,
    pub group_offset: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            width: 20,
            leak: 0.0,
            label_bias: 0.0,
            class_separation: 1.0,
            group_offset: 1.5,
            seed: 0,
        }
    }
}

pub fn make_synthetic_two_group(n: usize, width: usize, leak: f64, seed: u64) -> Result<Dataset> {
    make_synthetic(&SyntheticSpec {
        n,
        width,
        leak,
        seed,
        ..SyntheticSpec::default()
    })
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n < 4 || spec.n % 2 != 0 {
        return Err(Error::Input(format!("n must be even and at least 4, got {}", spec.n)));
    }
    if spec.width == 0 {
        return Err(Error::Input("width must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.leak) || !(-1.0..=1.0).contains(&spec.label_bias) {
        return Err(Error::Input("leak must lie in [0, 1] and label_bias in [-1, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut groups: Vec<u8> = (0..spec.n).map(|i| u8::from(i >= spec.n / 2)).collect();
    groups.shuffle(&mut rng);
    let split = if spec.width == 1 { 1 } else { spec.width / 2 };
    let group_dims = if spec.width == 1 { 0..1 } else { split..spec.width };

    let mut features = Array2::zeros((spec.n, spec.width));
    let mut targets = Vec::with_capacity(spec.n);
    for (i, &z) in groups.iter().enumerate() {
        let z_sign = if z == 1 { 1.0 } else { -1.0 };
        let p_positive = 0.5 + z_sign * spec.label_bias / 2.0;
        let y = usize::from(rng.random::<f64>() < p_positive);
        let y_sign = if y == 1 { 1.0 } else { -1.0 };
        for k in 0..spec.width {
            let noise: f64 = rng.sample(StandardNormal);
            let mut v = noise;
            if k < split {
                v += y_sign * spec.class_separation;
            }
            if group_dims.contains(&k) {
                v += z_sign * spec.group_offset * spec.leak;
            }
            features[[i, k]] = v;
        }
        targets.push(y);
    }
    Dataset::new(
        features,
        targets,
        groups,
        2,
        Split::Train,
        FeatureSchema::Dense { width: spec.width },
    )
}
