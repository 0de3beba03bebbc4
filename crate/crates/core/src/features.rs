//! Capacity vectors: color histograms, Gaussian noise and synthetic sequences.

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mot::{BBox, Detection};

/// Default bins per color channel (24 features in total).
pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("image region is empty")]
    EmptyRegion,
    #[error("bins per channel must be at least 1")]
    ZeroBins,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("object id {0} is used more than once")]
    DuplicateObject(u64),
}

/// Per-channel intensity histogram, each channel normalized to sum 1,
/// concatenated as R, G, B.
pub fn color_histogram(pixels: &[[u8; 3]], bins: usize) -> Result<Vec<f64>, FeatureError> {
    if bins == 0 {
        return Err(FeatureError::ZeroBins);
    }
    if pixels.is_empty() {
        return Err(FeatureError::EmptyRegion);
    }
    let mut counts = vec![0usize; 3 * bins];
    for px in pixels {
        for (ch, &v) in px.iter().enumerate() {
            counts[ch * bins + usize::from(v) * bins / 256] += 1;
        }
    }
    let n = pixels.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Reads a PNG, PPM or JPEG file as 8-bit RGB.
pub fn load_image(path: &std::path::Path) -> Result<RgbImage, image::ImageError> {
    Ok(image::open(path)?.to_rgb8())
}

/// Pixels of `img` inside `bbox`, clipped to the image.
pub fn region_pixels(img: &RgbImage, bbox: &BBox) -> Vec<[u8; 3]> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = bbox.left.max(0.0).floor() as u32;
    let y0 = bbox.top.max(0.0).floor() as u32;
    let x1 = (bbox.left + bbox.width).min(w).ceil().max(0.0) as u32;
    let y1 = (bbox.top + bbox.height).min(h).ceil().max(0.0) as u32;
    let mut out = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            out.push(img.get_pixel(x, y).0);
        }
    }
    out
}

pub fn box_histogram(img: &RgbImage, bbox: &BBox, bins: usize) -> Result<Vec<f64>, FeatureError> {
    color_histogram(&region_pixels(img, bbox), bins)
}

/// Adds i.i.d. N(0, sigma^2) noise to every feature entry and clamps at 0.
pub fn add_feature_noise(features: &[Vec<f64>], sigma: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    features
        .iter()
        .map(|f| {
            f.iter()
                .map(|&x| {
                    let z: f64 = rng.sample(StandardNormal);
                    (x + sigma * z).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Adds i.i.d. N(0, sigma^2) noise (intensity units) to every pixel
/// channel, rounding and clamping to [0, 255].
pub fn add_image_noise(img: &RgbImage, sigma: f64, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for px in out.pixels_mut() {
        for v in px.0.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = (f64::from(*v) + sigma * z).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Histogram intersection normalized by the smaller mass; 0 for zero mass.
pub fn histogram_intersection(a: &[f64], b: &[f64]) -> f64 {
    let inter: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
    let mass = a.iter().sum::<f64>().min(b.iter().sum());
    if mass <= 0.0 {
        0.0
    } else {
        (inter / mass).clamp(0.0, 1.0)
    }
}

/// One synthetic object moving on a straight line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    /// Ground-truth identity; defaults to the 1-based object index.
    #[serde(default)]
    pub id: Option<u64>,
    /// Box center at frame 1, pixels.
    pub start: [f64; 2],
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default = "default_size")]
    pub size: [f64; 2],
    /// Ground-truth feature; drawn uniformly from [0, 1) when absent.
    #[serde(default)]
    pub feature: Option<Vec<f64>>,
    /// Low-variance dimensions; drawn at random when absent.
    #[serde(default)]
    pub stable_dims: Option<Vec<usize>>,
}

fn default_size() -> [f64; 2] {
    [40.0, 80.0]
}

fn default_stable_scale() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub frames: u32,
    pub k: usize,
    pub objects: Vec<ObjectSpec>,
    /// Feature-space noise standard deviation.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Number of stable dimensions drawn per object when not listed.
    #[serde(default)]
    pub stable_dims_per_object: usize,
    /// Noise multiplier on stable dimensions.
    #[serde(default = "default_stable_scale")]
    pub stable_noise_scale: f64,
    /// When set, drawn ground-truth features are split into this many equal
    /// blocks, each normalized to sum 1 like a per-channel color histogram.
    /// Otherwise entries are uniform on [0, 1).
    #[serde(default)]
    pub histogram_channels: Option<usize>,
}

impl SyntheticSpec {
    /// Objects on crossing straight lines through a common center.
    pub fn crossing(objects: usize, frames: u32, k: usize, stable_dims: usize, sigma: f64, seed: u64) -> Self {
        let span = f64::from(frames.max(2) - 1);
        let objs = (0..objects)
            .map(|i| {
                let angle = std::f64::consts::PI * i as f64 / objects as f64;
                let (dx, dy) = (200.0 * angle.cos(), 200.0 * angle.sin());
                ObjectSpec {
                    id: None,
                    start: [480.0 - dx, 270.0 - dy],
                    velocity: [2.0 * dx / span, 2.0 * dy / span],
                    size: default_size(),
                    feature: None,
                    stable_dims: None,
                }
            })
            .collect();
        Self {
            frames,
            k,
            objects: objs,
            sigma,
            seed,
            stable_dims_per_object: stable_dims,
            stable_noise_scale: default_stable_scale(),
            histogram_channels: Some(if k.is_multiple_of(3) { 3 } else { 1 }),
        }
    }

    fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidSpec(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        if self.objects.is_empty() {
            return bad("at least one object is required");
        }
        if [self.sigma, self.stable_noise_scale]
            .iter()
            .any(|s| s.is_nan() || *s < 0.0)
        {
            return bad("noise levels must be non-negative");
        }
        if self
            .histogram_channels
            .is_some_and(|c| c == 0 || !self.k.is_multiple_of(c))
        {
            return bad("histogram channels must divide k");
        }
        if self.stable_dims_per_object > self.k {
            return bad("more stable dimensions than k");
        }
        for o in &self.objects {
            if let Some(f) = &o.feature {
                if f.len() != self.k || f.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return bad("object features must have k entries in [0, 1]");
                }
            }
            if o.stable_dims.as_ref().is_some_and(|s| s.iter().any(|&d| d >= self.k)) {
                return bad("stable dimension out of range");
            }
            if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return bad("box size must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub detections: Vec<Detection>,
    /// Ground-truth feature per object, in spec order.
    pub gt_features: Vec<Vec<f64>>,
    /// Stable dimensions per object, sorted.
    pub stable_dims: Vec<Vec<usize>>,
    /// Ground-truth identity per object.
    pub object_ids: Vec<u64>,
}

/// Generates a sequence; identical specs give identical output. Ground-truth
/// features and stable dimensions depend only on the seed, so a noise sweep
/// at a fixed seed shares them across noise levels.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSequence, FeatureError> {
    spec.validate()?;
    let mut ids = Vec::with_capacity(spec.objects.len());
    for (i, o) in spec.objects.iter().enumerate() {
        let id = o.id.unwrap_or(i as u64 + 1);
        if ids.contains(&id) {
            return Err(FeatureError::DuplicateObject(id));
        }
        ids.push(id);
    }

    let mut gt_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);

    let k = spec.k;
    let disjoint = spec.objects.len() * spec.stable_dims_per_object <= k;
    let mut pool: Vec<usize> = (0..k).collect();
    pool.shuffle(&mut gt_rng);
    let mut gt_features = Vec::with_capacity(spec.objects.len());
    let mut stable_dims = Vec::with_capacity(spec.objects.len());
    for (i, o) in spec.objects.iter().enumerate() {
        let mut drawn: Vec<f64> = (0..k).map(|_| gt_rng.random::<f64>()).collect();
        if let Some(c) = spec.histogram_channels {
            for block in drawn.chunks_mut(k / c) {
                let total: f64 = block.iter().sum();
                if total > 0.0 {
                    block.iter_mut().for_each(|x| *x /= total);
                }
            }
        }
        gt_features.push(o.feature.clone().unwrap_or(drawn));
        let mut dims = match &o.stable_dims {
            Some(s) => s.clone(),
            None if disjoint => {
                let n = spec.stable_dims_per_object;
                pool[i * n..(i + 1) * n].to_vec()
            }
            None => {
                let mut all: Vec<usize> = (0..k).collect();
                all.shuffle(&mut gt_rng);
                all.truncate(spec.stable_dims_per_object);
                all
            }
        };
        dims.sort_unstable();
        dims.dedup();
        stable_dims.push(dims);
    }

    let mut detections = Vec::with_capacity(spec.frames as usize * spec.objects.len());
    let mut next_id = 1;
    for frame in 1..=spec.frames {
        let t = f64::from(frame - 1);
        for (i, o) in spec.objects.iter().enumerate() {
            let feature = (0..k)
                .map(|dim| {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    let scale = if stable_dims[i].binary_search(&dim).is_ok() {
                        spec.stable_noise_scale
                    } else {
                        1.0
                    };
                    (gt_features[i][dim] + spec.sigma * scale * z).max(0.0)
                })
                .collect();
            let cx = o.start[0] + o.velocity[0] * t;
            let cy = o.start[1] + o.velocity[1] * t;
            detections.push(Detection {
                frame,
                id: next_id,
                bbox: BBox::new(cx - o.size[0] / 2.0, cy - o.size[1] / 2.0, o.size[0], o.size[1]),
                gt_id: Some(ids[i]),
                feature,
            });
            next_id += 1;
        }
    }
    Ok(SyntheticSequence {
        detections,
        gt_features,
        stable_dims,
        object_ids: ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn pure_red_histogram() {
        let px = vec![[255u8, 0, 0]; 12];
        assert_eq!(color_histogram(&px, 2).unwrap(), vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn channels_sum_to_one_and_length_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 7, 100] {
            let px: Vec<[u8; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let h = color_histogram(&px, DEFAULT_BINS).unwrap();
            assert_eq!(h.len(), 24);
            for ch in h.chunks(DEFAULT_BINS) {
                assert!((ch.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_color_split() {
        let px = [[0u8, 0, 0], [255, 255, 255]];
        assert_eq!(color_histogram(&px, 2).unwrap(), vec![0.5; 6]);
    }

    #[test]
    fn histogram_errors() {
        assert_eq!(color_histogram(&[], 8), Err(FeatureError::EmptyRegion));
        assert_eq!(color_histogram(&[[0, 0, 0]], 0), Err(FeatureError::ZeroBins));
    }

    #[test]
    fn box_histogram_clips_to_image() {
        let img = RgbImage::from_pixel(10, 10, Rgb([0, 255, 0]));
        let h = box_histogram(&img, &BBox::new(-5.0, -5.0, 8.0, 8.0), 2).unwrap();
        assert_eq!(h, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let outside = box_histogram(&img, &BBox::new(20.0, 20.0, 5.0, 5.0), 2);
        assert_eq!(outside, Err(FeatureError::EmptyRegion));
    }

    #[test]
    fn zero_noise_is_identity() {
        let f = vec![vec![0.2, 0.0, 1.0], vec![0.5, 0.5, 0.5]];
        assert_eq!(add_feature_noise(&f, 0.0, 9), f);
        let img = RgbImage::from_fn(4, 4, |x, y| Rgb([x as u8 * 60, y as u8 * 60, 7]));
        assert_eq!(add_image_noise(&img, 0.0, 9), img);
    }

    #[test]
    fn noise_clamps_at_zero() {
        let f = vec![vec![0.0; 200]];
        let noisy = add_feature_noise(&f, 0.3, 1);
        assert!(noisy[0].iter().all(|&x| x >= 0.0));
        assert!(noisy[0].contains(&0.0));
    }

    #[test]
    fn image_noise_drifts_histogram_more_with_sigma() {
        let img = RgbImage::from_fn(24, 24, |x, y| Rgb([(x * 10) as u8, (y * 10) as u8, 128]));
        let clean = color_histogram(&img.pixels().map(|p| p.0).collect::<Vec<_>>(), 8).unwrap();
        let mean_l1 = |sigma: f64| {
            (0..20)
                .map(|seed| {
                    let noisy = add_image_noise(&img, sigma, seed);
                    let px: Vec<_> = noisy.pixels().map(|p| p.0).collect();
                    let h = color_histogram(&px, 8).unwrap();
                    h.iter().zip(&clean).map(|(a, b)| (a - b).abs()).sum::<f64>()
                })
                .sum::<f64>()
                / 20.0
        };
        let drift: Vec<f64> = [0.0, 5.0, 20.0, 60.0].iter().map(|&s| mean_l1(s)).collect();
        assert_eq!(drift[0], 0.0);
        assert!(drift.windows(2).all(|w| w[0] < w[1]), "{drift:?}");
    }

    #[test]
    fn similarities() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((histogram_intersection(&[0.5, 0.5], &[1.0, 0.0]) - 0.5).abs() < 1e-12);
        assert_eq!(histogram_intersection(&[0.0], &[1.0]), 0.0);
    }

    #[test]
    fn clean_synthetic_features_equal_ground_truth() {
        let spec = SyntheticSpec::crossing(2, 5, 4, 1, 0.0, 11);
        let seq = generate_synthetic(&spec).unwrap();
        assert_eq!(seq.detections.len(), 10);
        for d in &seq.detections {
            let obj = seq.object_ids.iter().position(|&i| Some(i) == d.gt_id).unwrap();
            assert_eq!(d.feature, seq.gt_features[obj]);
        }
        assert_eq!(generate_synthetic(&spec).unwrap(), seq);
    }

    #[test]
    fn gt_features_shared_across_sigma() {
        let a = generate_synthetic(&SyntheticSpec::crossing(3, 4, 24, 6, 0.0, 5)).unwrap();
        let b = generate_synthetic(&SyntheticSpec::crossing(3, 4, 24, 6, 0.4, 5)).unwrap();
        assert_eq!(a.gt_features, b.gt_features);
        assert_eq!(a.stable_dims, b.stable_dims);
        // disjoint stable sets
        let mut all: Vec<usize> = a.stable_dims.concat();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 18);
        assert!(b.detections.iter().all(|d| d.feature.iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn duplicate_object_ids_are_rejected() {
        let mut spec = SyntheticSpec::crossing(2, 2, 2, 0, 0.0, 0);
        spec.objects[0].id = Some(4);
        spec.objects[1].id = Some(4);
        assert_eq!(generate_synthetic(&spec), Err(FeatureError::DuplicateObject(4)));
    }
}
