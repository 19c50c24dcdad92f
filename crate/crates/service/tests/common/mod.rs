#![allow(dead_code)]

use std::collections::BTreeMap;

use vidcurate_core::corpus::{Dimension, Level};
use vidcurate_core::cotrain::synthetic::{two_view_dataset, TwoViewSpec};
use vidcurate_core::cotrain::{
    init_state, run, CoTrainConfig, CoTrainState, RunOptions, TranscriptEntry, TranscriptResolver,
};
use vidcurate_core::learners::ForestParams;

pub struct Fixture {
    pub states: BTreeMap<Dimension, CoTrainState>,
    pub transcript: Vec<TranscriptEntry>,
}

fn dimension_state(dimension: Dimension, seed: u64) -> (CoTrainState, Vec<TranscriptEntry>) {
    let data = two_view_dataset(&TwoViewSpec {
        n_seed: 12,
        n_unlabeled: 80,
        n_test: 20,
        dim_metadata: 4,
        dim_content: 4,
        informative: 2,
        separation: 1.5,
        seed,
        ..Default::default()
    });
    // Every third answer disagrees with the hidden truth.
    let transcript = data
        .unlabeled
        .iter()
        .enumerate()
        .map(|(i, (v, l))| TranscriptEntry {
            video_id: v.video_id.clone(),
            dimension,
            label: if i % 3 == 0 { Level::from_positive(!l.is_high()) } else { *l },
            resolver: format!("rater{}", i % 2),
        })
        .collect();
    let config = CoTrainConfig {
        target: dimension,
        k_pos: 20,
        k_neg: 20,
        tau: 0.75,
        seed,
        forest: ForestParams { n_trees: 15, ..Default::default() },
        ..Default::default()
    };
    let state = init_state(data.seed, data.unlabeled.into_iter().map(|p| p.0).collect(), data.test, config).unwrap();
    (state, transcript)
}

pub fn fixture() -> Fixture {
    let (med, mut t) = dimension_state(Dimension::Med, 3);
    let (und, t2) = dimension_state(Dimension::Und, 4);
    t.extend(t2);
    Fixture { states: [(Dimension::Med, med), (Dimension::Und, und)].into(), transcript: t }
}

/// Final states of an offline run of every dimension.
pub fn offline(fx: &Fixture) -> BTreeMap<Dimension, CoTrainState> {
    fx.states
        .iter()
        .map(|(d, s)| {
            let mut s = s.clone();
            let mut resolver = TranscriptResolver::new(fx.transcript.clone());
            run(&mut s, &mut resolver, &RunOptions::default()).unwrap();
            (*d, s)
        })
        .collect()
}

pub fn lookup(fx: &Fixture, dimension: Dimension, id: &str) -> (Level, String) {
    let e = fx
        .transcript
        .iter()
        .find(|e| e.dimension == dimension && e.video_id == id)
        .expect("transcript covers every item");
    (e.label, e.resolver.clone())
}
