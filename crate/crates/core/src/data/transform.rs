use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// `p -> 1 - p` per pixel.
    Invert,
    /// Counter-clockwise rotation about the image center.
    Rotate { degrees: f64 },
    /// Independent uniform angle in `[-range, range]` per image.
    RandomRotate { range_degrees: f64, seed: u64 },
}

fn image_shape(ds: &Dataset) -> Result<(usize, usize)> {
    match ds.schema {
        FeatureSchema::Image { height, width } => Ok((height, width)),
        _ => Err(Error::Input("transform needs image-shaped features".into())),
    }
}

pub fn apply_transform(ds: &Dataset, t: &TransformSpec) -> Result<Dataset> {
    let (h, w) = image_shape(ds)?;
    let mut out = ds.clone();
    match *t {
        TransformSpec::Invert => {
            if ds.features.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Input("invert needs pixel values in [0, 1]".into()));
            }
            out.features.mapv_inplace(|p| 1.0 - p);
        }
        TransformSpec::Rotate { degrees } => {
            check_angle(degrees)?;
            for mut row in out.features.rows_mut() {
                let rotated = rotate_image(row.as_slice().expect("standard layout"), h, w, degrees);
                row.assign(&ndarray::ArrayView1::from(&rotated));
            }
        }
        TransformSpec::RandomRotate {
            range_degrees,
            seed,
        } => {
            check_angle(range_degrees)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let range = range_degrees.abs();
            for mut row in out.features.rows_mut() {
                let angle = if range > 0.0 {
                    rng.random_range(-range..=range)
                } else {
                    0.0
                };
                let rotated = rotate_image(row.as_slice().expect("standard layout"), h, w, angle);
                row.assign(&ndarray::ArrayView1::from(&rotated));
            }
        }
    }
    Ok(out)
}

fn check_angle(degrees: f64) -> Result<()> {
    if degrees.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("rotation angle {degrees} is not finite")))
    }
}

/// Bilinear rotation with zero fill outside the source image.
pub fn rotate_image(pixels: &[f64], height: usize, width: usize, degrees: f64) -> Vec<f64> {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            0.0
        } else {
            pixels[y as usize * width + x as usize]
        }
    };
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // Inverse map: rows grow downward, so a visually counter-clockwise
            // rotation samples the source at R(theta) applied to (dx, dy).
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out[y * width + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// Concatenates two datasets, labelling rows of `ds0` with group 0 and rows
/// of `ds1` with group 1.
pub fn merge_as_groups(ds0: &Dataset, ds1: &Dataset) -> Result<Dataset> {
    if ds0.is_empty() || ds1.is_empty() {
        return Err(Error::Input("cannot merge an empty dataset".into()));
    }
    if ds0.width() != ds1.width() {
        return Err(Error::Input(format!(
            "feature widths differ: {} vs {}",
            ds0.width(),
            ds1.width()
        )));
    }
    ds0.clone().with_group(0).concat(&ds1.clone().with_group(1))
}
