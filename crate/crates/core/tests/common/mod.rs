#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hypersgg::model::{
    EntityId, EntityInstance, FrameSceneGraph, PredicateId, PredicateVocab, RelationshipTriplet, VideoAnnotation,
};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn vocab(n: usize) -> PredicateVocab {
    PredicateVocab::new((0..n).map(|i| format!("p{i}"))).unwrap()
}

/// Limits for a random annotation set.
#[derive(Clone, Copy)]
pub struct Shape {
    pub max_videos: usize,
    pub max_frames: usize,
    pub max_pairs: usize,
    pub max_vocab: usize,
}

pub const SMALL: Shape = Shape { max_videos: 5, max_frames: 10, max_pairs: 4, max_vocab: 5 };

/// Random valid videos. Frame indices have occasional gaps, pairs sometimes
/// hold two predicates, sometimes none.
pub fn random_videos(r: &mut impl Rng, shape: Shape) -> (PredicateVocab, Vec<VideoAnnotation>) {
    let vocab = vocab(r.random_range(2..=shape.max_vocab));
    let n_videos = r.random_range(1..=shape.max_videos);
    let videos = (0..n_videos).map(|i| random_video(r, &format!("v{i}"), &vocab, shape)).collect();
    (vocab, videos)
}

pub fn random_video(r: &mut impl Rng, id: &str, vocab: &PredicateVocab, shape: Shape) -> VideoAnnotation {
    let n_entities: u32 = r.random_range(2..=5);
    let mut pairs = Vec::new();
    for s in 0..n_entities {
        for o in 0..n_entities {
            if s != o {
                pairs.push((EntityId(s), EntityId(o)));
            }
        }
    }
    pairs.shuffle(r);
    pairs.truncate(r.random_range(1..=shape.max_pairs));

    let n_frames = r.random_range(1..=shape.max_frames);
    let mut idx = 0usize;
    let mut frames = Vec::new();
    for _ in 0..n_frames {
        let mut f = FrameSceneGraph::new(idx);
        f.entities = (0..n_entities)
            .map(|e| EntityInstance { entity_id: EntityId(e), category: format!("c{e}"), bbox: None, frame_index: idx })
            .collect();
        for &(s, o) in &pairs {
            let roll: f64 = r.random();
            let k = if roll < 0.15 { 0 } else if roll < 0.85 { 1 } else { 2 };
            let mut preds: Vec<usize> = (0..vocab.len()).collect();
            preds.shuffle(r);
            for &p in preds.iter().take(k) {
                f.triplets.push(RelationshipTriplet::new(s, o, PredicateId(p)));
            }
        }
        frames.push(f);
        idx += if r.random_bool(0.2) { 2 } else { 1 };
    }
    VideoAnnotation { video_id: id.to_string(), frame_count: idx + r.random_range(0..3), frames, vocab: vocab.clone() }
}

/// Row-major `W^n` by repeated dense multiplication.
pub fn matrix_power(w: &[f64], v: usize, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; v * v];
    for i in 0..v {
        acc[i * v + i] = 1.0;
    }
    for _ in 0..n {
        let mut next = vec![0.0; v * v];
        for i in 0..v {
            for k in 0..v {
                let a = acc[i * v + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..v {
                    next[i * v + j] += a * w[k * v + j];
                }
            }
        }
        acc = next;
    }
    acc
}
