mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;

use hypersgg::anticipation::{
    observed_frame_count, predict_future, split_by_fraction, AnticipationConfig, Horizon, PredictedGraph,
};
use hypersgg::ingest::{generate_synthetic, SynthConfig};
use hypersgg::model::{EntityId, PredicateId, VideoAnnotation};
use hypersgg::procedural::{build_procedural_graph, count_transitions, step_distribution, ProceduralGraph};

use common::{random_video, rng, vocab, Shape};

const SHAPE: Shape = Shape { max_videos: 1, max_frames: 12, max_pairs: 4, max_vocab: 5 };

fn setup(seed: u64) -> (VideoAnnotation, ProceduralGraph) {
    let mut r = rng(seed);
    let v = vocab(r.random_range(2..=5));
    let train: Vec<VideoAnnotation> = (0..3).map(|i| random_video(&mut r, &format!("t{i}"), &v, SHAPE)).collect();
    let mut video = random_video(&mut r, "x", &v, SHAPE);
    video.frame_count = video.frame_count.max(2);
    (video, build_procedural_graph(&count_transitions(&v, &train).unwrap()))
}

/// Dense score vector per pair.
fn dense(g: &PredictedGraph, v: usize) -> HashMap<(EntityId, EntityId), Vec<f64>> {
    let mut out: HashMap<(EntityId, EntityId), Vec<f64>> = HashMap::new();
    for c in &g.candidates {
        out.entry((c.subject, c.object)).or_insert_with(|| vec![0.0; v])[c.predicate.0] += c.score;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pair_scores_are_substochastic(seed in any::<u64>(), f in 0.05f64..0.95, persistence in any::<bool>()) {
        let (video, pg) = setup(seed);
        let (obs, _) = split_by_fraction(&video, f).unwrap();
        let mut cfg = AnticipationConfig::new(f).unwrap();
        cfg.persistence = persistence;
        for g in predict_future(&obs, &pg, &cfg, None).unwrap() {
            for (_, scores) in dense(&g, pg.len()) {
                prop_assert!(scores.iter().sum::<f64>() <= 1.0 + 1e-9);
                prop_assert!(scores.iter().all(|&s| s >= 0.0));
            }
            let sorted = g.candidates.windows(2).all(|w| w[0].score >= w[1].score);
            prop_assert!(sorted);
        }
    }

    #[test]
    fn next_frame_is_previous_pushed_through_weights(seed in any::<u64>(), f in 0.05f64..0.95) {
        let (video, pg) = setup(seed);
        let (obs, _) = split_by_fraction(&video, f).unwrap();
        let cfg = AnticipationConfig::new(f).unwrap();
        let graphs = predict_future(&obs, &pg, &cfg, None).unwrap();
        for w in graphs.windows(2) {
            prop_assert_eq!(w[1].frame_index, w[0].frame_index + 1);
            let (a, b) = (dense(&w[0], pg.len()), dense(&w[1], pg.len()));
            for (pair, prev) in &a {
                let expected = step_distribution(&pg, prev);
                let got = b.get(pair).cloned().unwrap_or_else(|| vec![0.0; pg.len()]);
                for (x, y) in got.iter().zip(&expected) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn future_frames_are_never_read(seed in any::<u64>(), f in 0.05f64..0.95) {
        let (video, pg) = setup(seed);
        let cfg = AnticipationConfig::new(f).unwrap();
        let (obs, future) = split_by_fraction(&video, f).unwrap();
        let mut scrambled = video.clone();
        let cut = obs.frames.len();
        for frame in &mut scrambled.frames[cut..] {
            for t in &mut frame.triplets {
                t.predicate = PredicateId((t.predicate.0 + 1) % pg.len());
            }
        }
        let (obs2, _) = split_by_fraction(&scrambled, f).unwrap();
        prop_assert_eq!(
            predict_future(&obs, &pg, &cfg, None).unwrap(),
            predict_future(&obs2, &pg, &cfg, None).unwrap()
        );
        prop_assert_eq!(obs.frames.len() + future.frames.len(), video.frames.len());
    }

    #[test]
    fn one_frame_horizon_predicts_one_frame(seed in any::<u64>(), f in 0.05f64..0.95) {
        let (video, pg) = setup(seed);
        let (obs, _) = split_by_fraction(&video, f).unwrap();
        let mut cfg = AnticipationConfig::new(f).unwrap();
        cfg.horizon = Horizon::Frames(1);
        let graphs = predict_future(&obs, &pg, &cfg, None).unwrap();
        prop_assert!(graphs.len() <= 1);
        if let (Some(g), Some(last)) = (graphs.first(), obs.frames.last()) {
            prop_assert_eq!(g.frame_index, last.frame_index + 1);
        }
    }

    #[test]
    fn observed_count_is_ceiling(t in 2usize..500, f in 0.01f64..0.99) {
        let n = observed_frame_count(t, f).unwrap();
        prop_assert!(n >= 1 && n < t);
        let exact = (f * t as f64).ceil() as usize;
        prop_assert!(n == exact.clamp(1, t - 1) || (f * t as f64 - (f * t as f64).round()).abs() < 1e-9);
    }
}

#[test]
fn split_rounds_up() {
    assert_eq!(observed_frame_count(10, 0.3).unwrap(), 3);
    assert_eq!(observed_frame_count(10, 0.25).unwrap(), 3);
    assert_eq!(observed_frame_count(100, 0.9).unwrap(), 90);
    assert!(observed_frame_count(10, 1.0).is_err());
    assert!(observed_frame_count(1, 0.5).is_err());
}

#[test]
fn synthetic_forecast_covers_every_unseen_frame() {
    let set = generate_synthetic(&SynthConfig { num_videos: 3, frames_per_video: 40, seed: 9, ..Default::default() })
        .unwrap();
    let pg = build_procedural_graph(&count_transitions(&set.vocab, &set.videos).unwrap());
    let cfg = AnticipationConfig::default();
    for v in &set.videos {
        let (obs, future) = split_by_fraction(v, cfg.fraction()).unwrap();
        let graphs = predict_future(&obs, &pg, &cfg, None).unwrap();
        let idx: Vec<usize> = graphs.iter().map(|g| g.frame_index).collect();
        let expected: Vec<usize> = future.frames.iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, expected);
    }
}
