//! Seeded synthetic data: feature clusters, detection scenes and grids.
//!
//! Used by the tests, the benches and the end-to-end fixtures. Everything is
//! driven by a `ChaCha8Rng` so a seed reproduces the same data on every
//! platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{FeatureVector, Label, LabeledSample, LayerTag};
use crate::geometry::{BoundingBox, Detection};
use crate::grid::{GridSpec, ProbabilityGrid, RawBox};

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Two Gaussian clusters centered at `±separation/2` along the first axis
/// with isotropic noise `sigma`. Samples alternate passenger, other.
pub fn gaussian_clusters(
    per_class: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> Vec<LabeledSample> {
    gaussian_clusters_tagged(
        per_class,
        dim,
        separation,
        sigma,
        seed,
        LayerTag::Other,
        "s",
    )
}

pub fn gaussian_clusters_tagged(
    per_class: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
    layer: LayerTag,
    id_prefix: &str,
) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * per_class)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Passenger
            } else {
                Label::Other
            };
            let values: Vec<f32> = (0..dim)
                .map(|j| {
                    let shift = if j == 0 {
                        label.sign() * separation / 2.0
                    } else {
                        0.0
                    };
                    (shift + sigma * normal(&mut rng)) as f32
                })
                .collect();
            let f = FeatureVector::new(format!("{id_prefix}{i}"), layer, values)
                .expect("finite by construction");
            LabeledSample::new(f, label)
        })
        .collect()
}

/// Random detections inside a `width x height` image. Confidences are drawn
/// from `levels` evenly spaced values when `levels` is given (to force
/// ties), otherwise uniformly.
pub fn random_scene(
    rng: &mut impl Rng,
    n: usize,
    width: f64,
    height: f64,
    levels: Option<u32>,
) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let w = rng.gen_range(0.05..0.4) * width;
            let h = rng.gen_range(0.05..0.4) * height;
            let x = rng.gen_range(0.0..width - w);
            let y = rng.gen_range(0.0..height - h);
            let confidence = match levels {
                Some(k) => f64::from(rng.gen_range(1..=k)) / f64::from(k),
                None => rng.gen_range(0.0..1.0),
            };
            Detection::new(
                BoundingBox::new(x, y, x + w, y + h).expect("ordered corners"),
                confidence,
                0,
            )
            .expect("confidence in range")
        })
        .collect()
}

/// A grid with uniformly random box geometry, sparse objectness (about
/// `density` of boxes are non-zero) and random class probabilities.
pub fn random_grid(rng: &mut impl Rng, spec: GridSpec, density: f64) -> ProbabilityGrid {
    let mut grid = ProbabilityGrid::zeros(spec);
    for raw in grid.boxes.iter_mut() {
        *raw = RawBox {
            cx: rng.gen_range(0.0..=1.0),
            cy: rng.gen_range(0.0..=1.0),
            w: rng.gen_range(0.02..=0.3),
            h: rng.gen_range(0.02..=0.3),
            objectness: if rng.gen_bool(density) {
                rng.gen_range(0.0..=1.0)
            } else {
                0.0
            },
        };
    }
    for p in grid.class_probs.iter_mut() {
        *p = rng.gen_range(0.0..=1.0);
    }
    grid
}
