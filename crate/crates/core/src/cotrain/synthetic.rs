//! Seeded two-view datasets for exercising the engine.
//!
//! Each item has a latent binary label. Given the label, the two views are
//! drawn independently: Gaussian noise around a class mean that differs only
//! in the first `informative` coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Level;
use crate::features::{FeatureVector, ViewPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoViewSpec {
    pub n_seed: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub dim_metadata: usize,
    pub dim_content: usize,
    pub informative: usize,
    /// Distance between the class means along each informative coordinate,
    /// in units of the noise standard deviation.
    pub separation: f64,
    /// Probability that the positive class is drawn.
    pub positive_rate: f64,
    pub seed: u64,
}

impl Default for TwoViewSpec {
    fn default() -> Self {
        TwoViewSpec {
            n_seed: 40,
            n_unlabeled: 1000,
            n_test: 1000,
            dim_metadata: 20,
            dim_content: 20,
            informative: 4,
            separation: 1.0,
            positive_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoViewDataset {
    /// Seed items; the first half of them positive so that both classes are
    /// always present.
    pub seed: Vec<(ViewPair, Level)>,
    /// Unlabeled items with their hidden true labels.
    pub unlabeled: Vec<(ViewPair, Level)>,
    pub test: Vec<(ViewPair, Level)>,
}

fn draw_view(rng: &mut ChaCha8Rng, dim: usize, informative: usize, shift: f64) -> FeatureVector {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let values: Vec<f64> = (0..dim).map(|j| noise.sample(rng) + if j < informative { shift } else { 0.0 }).collect();
    FeatureVector::from_dense(&values)
}

fn draw_item(rng: &mut ChaCha8Rng, spec: &TwoViewSpec, id: String, positive: bool) -> (ViewPair, Level) {
    let shift = if positive { spec.separation / 2.0 } else { -spec.separation / 2.0 };
    let metadata_view = draw_view(rng, spec.dim_metadata, spec.informative, shift);
    let content_view = draw_view(rng, spec.dim_content, spec.informative, shift);
    (ViewPair { video_id: id, metadata_view, content_view }, Level::from_positive(positive))
}

pub fn two_view_dataset(spec: &TwoViewSpec) -> TwoViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let seed =
        (0..spec.n_seed).map(|i| draw_item(&mut rng, spec, format!("s{i:05}"), i < spec.n_seed.div_ceil(2))).collect();
    let draw = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Vec<(ViewPair, Level)> {
        (0..n)
            .map(|i| {
                let positive = rng.random_bool(spec.positive_rate);
                draw_item(rng, spec, format!("{prefix}{i:05}"), positive)
            })
            .collect()
    };
    let unlabeled = draw("u", spec.n_unlabeled, &mut rng);
    let test = draw("t", spec.n_test, &mut rng);
    TwoViewDataset { seed, unlabeled, test }
}
