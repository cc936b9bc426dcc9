use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SpatialIndex};

use super::Keypoint;

pub const SHELLS: usize = 4;
pub const ANGLE_BINS: usize = 8;
pub const LUMA_BINS: usize = 8;

/// L2-normalized histogram: radial shells × normal-deviation bins (uniform in
/// `sin(θ/2)`, so the first bin holds aligned normals), followed by
/// a luminance histogram when the cloud has colors. All-zero when the
/// neighborhood is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub Vec<f64>);

impl Descriptor {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Share of the shape histogram outside the first deviation bin.
    pub fn relief(&self) -> f64 {
        let shape = &self.0[..SHELLS * ANGLE_BINS];
        let total: f64 = shape.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let aligned: f64 = shape.chunks(ANGLE_BINS).map(|shell| shell[0]).sum();
        1.0 - aligned / total
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Describes `keypoint` from the neighbors within `radius`. `index` must be
/// built over `cloud.points()`.
pub fn describe(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoint: &Keypoint,
    radius: f64,
) -> Result<Descriptor> {
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::invalid("cloud", "descriptors need normals"))?;
    let colors = cloud.colors();
    let len = SHELLS * ANGLE_BINS + if colors.is_some() { LUMA_BINS } else { 0 };
    let mut hist = vec![0f64; len];

    let mut found = Vec::new();
    index.within(&keypoint.position, radius, &mut found);
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // Reference normal: mean over the neighborhood, steadier than the
    // keypoint's own normal when the keypoint sits on a curved feature.
    let kn = found
        .iter()
        .fold(normals[keypoint.index], |acc, &(_, j)| acc + normals[j as usize])
        .try_normalize(1e-12)
        .unwrap_or(normals[keypoint.index]);
    for &(d2, j) in &found {
        let j = j as usize;
        let shell = ((d2.sqrt() / radius * SHELLS as f64) as usize).min(SHELLS - 1);
        let cos = kn.dot(&normals[j]).clamp(-1.0, 1.0);
        // Uniform in sin(θ/2): fine resolution near zero deviation.
        let half_sin = ((1.0 - cos) * 0.5).sqrt();
        let bin = ((half_sin * ANGLE_BINS as f64) as usize).min(ANGLE_BINS - 1);
        hist[shell * ANGLE_BINS + bin] += 1.0;
        if let Some(c) = colors {
            let [r, g, b] = c[j];
            let luma = (0.299 * r + 0.587 * g + 0.114 * b) as f64;
            let lb = ((luma.clamp(0.0, 1.0) * LUMA_BINS as f64) as usize).min(LUMA_BINS - 1);
            hist[SHELLS * ANGLE_BINS + lb] += 1.0;
        }
    }
    let norm = hist.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        hist.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(Descriptor(hist))
}
