//! Annotation files and the synthetic Markov scene-graph generator.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_annotation, BBox, EntityId, EntityInstance, FrameSceneGraph, PredicateId, PredicateVocab,
    RelationshipTriplet, VideoAnnotation,
};
use crate::rng::SeededRng;

/// JSON Schema of the annotation file format.
pub const ANNOTATION_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "hypersgg annotation file",
  "type": "object",
  "required": ["vocab", "videos"],
  "additionalProperties": false,
  "properties": {
    "vocab": {
      "description": "Predicate category names; triplets refer to them by 0-based index.",
      "type": "array",
      "items": { "type": "string", "minLength": 1 },
      "uniqueItems": true
    },
    "videos": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["video_id", "frame_count", "frames"],
        "additionalProperties": false,
        "properties": {
          "video_id": { "type": "string" },
          "frame_count": { "type": "integer", "minimum": 1 },
          "frames": {
            "description": "Annotated frames, strictly increasing frame_index, each below frame_count.",
            "type": "array",
            "items": {
              "type": "object",
              "required": ["frame_index", "entities", "triplets"],
              "additionalProperties": false,
              "properties": {
                "frame_index": { "type": "integer", "minimum": 0 },
                "entities": {
                  "type": "array",
                  "items": {
                    "type": "object",
                    "required": ["entity_id", "category"],
                    "additionalProperties": false,
                    "properties": {
                      "entity_id": { "type": "integer", "minimum": 0, "maximum": 4294967295 },
                      "category": { "type": "string" },
                      "bbox": {
                        "description": "[x, y, w, h] in pixels, w > 0 and h > 0.",
                        "type": "array",
                        "items": { "type": "number" },
                        "minItems": 4,
                        "maxItems": 4
                      }
                    }
                  }
                },
                "triplets": {
                  "description": "[subject_id, object_id, predicate_index]; subject != object, both present in the frame, no duplicates.",
                  "type": "array",
                  "items": {
                    "type": "array",
                    "items": { "type": "integer", "minimum": 0 },
                    "minItems": 3,
                    "maxItems": 3
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}
"#;

/// Deserialize JSON, reporting the line, column and field path of failures.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            location: format!("line {} column {}, field `{}`", inner.line(), inner.column(), path),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    Ok(value)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    vocab: Vec<String>,
    videos: Vec<VideoDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoDoc {
    video_id: String,
    frame_count: usize,
    frames: Vec<FrameDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    frame_index: usize,
    entities: Vec<EntityDoc>,
    triplets: Vec<(u32, u32, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    entity_id: u32,
    category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
}

/// Videos sharing one predicate vocabulary, as stored in one file.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub vocab: PredicateVocab,
    pub videos: Vec<VideoAnnotation>,
}

impl AnnotationSet {
    /// Parse and validate an annotation document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FileDoc = parse_json(text)?;
        let vocab = PredicateVocab::new(doc.vocab).map_err(|e| Error::Validation(vec![format!("vocab: {e}")]))?;
        let videos: Vec<VideoAnnotation> = doc.videos.into_iter().map(|v| video_from_doc(v, &vocab)).collect();
        let violations: Vec<String> = videos
            .iter()
            .flat_map(validate_annotation)
            .map(|v| match vocab_hint(&v.item, &vocab) {
                Some(hint) => format!("{v} ({hint})"),
                None => v.to_string(),
            })
            .collect();
        if violations.is_empty() {
            Ok(Self { vocab, videos })
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = FileDoc {
            vocab: self.vocab.names().to_vec(),
            videos: self.videos.iter().map(video_to_doc).collect(),
        };
        let mut s = crate::jsonfmt::to_string(&doc)?;
        s.push('\n');
        Ok(s)
    }
}

fn vocab_hint(item: &str, vocab: &PredicateVocab) -> Option<String> {
    // Triplet items render as "triplet (s, o, p)"; name the predicate index
    // against the vocabulary size when it is out of range.
    let inner = item.strip_prefix("triplet (")?.split(')').next()?;
    let p: usize = inner.rsplit(", ").next()?.parse().ok()?;
    (p >= vocab.len()).then(|| format!("unknown predicate index {p}; vocabulary has {} entries", vocab.len()))
}

fn video_from_doc(doc: VideoDoc, vocab: &PredicateVocab) -> VideoAnnotation {
    let frames = doc
        .frames
        .into_iter()
        .map(|f| FrameSceneGraph {
            frame_index: f.frame_index,
            entities: f
                .entities
                .into_iter()
                .map(|e| EntityInstance {
                    entity_id: EntityId(e.entity_id),
                    category: e.category,
                    bbox: e.bbox.map(|[x, y, w, h]| BBox::new(x, y, w, h)),
                    frame_index: f.frame_index,
                })
                .collect(),
            triplets: f
                .triplets
                .into_iter()
                .map(|(s, o, p)| RelationshipTriplet::new(EntityId(s), EntityId(o), PredicateId(p)))
                .collect(),
        })
        .collect();
    VideoAnnotation { video_id: doc.video_id, frame_count: doc.frame_count, frames, vocab: vocab.clone() }
}

fn video_to_doc(v: &VideoAnnotation) -> VideoDoc {
    VideoDoc {
        video_id: v.video_id.clone(),
        frame_count: v.frame_count,
        frames: v
            .frames
            .iter()
            .map(|f| FrameDoc {
                frame_index: f.frame_index,
                entities: f
                    .entities
                    .iter()
                    .map(|e| EntityDoc {
                        entity_id: e.entity_id.0,
                        category: e.category.clone(),
                        bbox: e.bbox.map(|b| [b.x, b.y, b.w, b.h]),
                    })
                    .collect(),
                triplets: f.triplets.iter().map(|t| (t.subject.0, t.object.0, t.predicate.0)).collect(),
            })
            .collect(),
    }
}

/// Read, parse and validate an annotation file.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path.as_ref())?;
    AnnotationSet::from_json(&text)
}

pub fn save_annotations(path: impl AsRef<Path>, set: &AnnotationSet) -> Result<()> {
    fs::write(path, set.to_json()?)?;
    Ok(())
}

fn default_dominant() -> f64 {
    0.7
}

/// Parameters of the synthetic generator.
///
/// Every pair's predicate is a Markov chain: with probability `p_stay` it keeps
/// its predicate, otherwise it moves according to the kernel row with the
/// self-transition removed and the rest renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub num_entities: usize,
    pub num_pairs: usize,
    pub vocab_size: usize,
    /// Row-stochastic `vocab_size x vocab_size` matrix. When absent a cyclic
    /// kernel with `dominant` mass on `m -> m + 1` is used.
    #[serde(default)]
    pub kernel: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_dominant")]
    pub dominant: f64,
    #[serde(default)]
    pub p_stay: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_videos: 20,
            frames_per_video: 100,
            num_entities: 6,
            num_pairs: 5,
            vocab_size: 6,
            kernel: None,
            dominant: default_dominant(),
            p_stay: 0.0,
            seed: 0,
        }
    }
}

/// Cyclic kernel: zero diagonal, `dominant` on `m -> (m + 1) % v`, the rest
/// spread evenly over the other off-diagonal entries.
pub fn dominant_kernel(vocab_size: usize, dominant: f64) -> Vec<Vec<f64>> {
    (0..vocab_size)
        .map(|m| {
            let mut row = vec![0.0; vocab_size];
            match vocab_size {
                0 => {}
                1 => row[0] = 1.0,
                2 => row[1 - m] = 1.0,
                v => {
                    let rest = (1.0 - dominant) / (v - 2) as f64;
                    for (n, w) in row.iter_mut().enumerate() {
                        if n != m {
                            *w = rest;
                        }
                    }
                    row[(m + 1) % v] = dominant;
                }
            }
            row
        })
        .collect()
}

impl SynthConfig {
    pub fn effective_kernel(&self) -> Vec<Vec<f64>> {
        self.kernel.clone().unwrap_or_else(|| dominant_kernel(self.vocab_size, self.dominant))
    }

    pub fn vocab(&self) -> PredicateVocab {
        PredicateVocab::new((0..self.vocab_size).map(|i| format!("pred{i}"))).expect("generated names are unique")
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab_size;
        let kernel = self.effective_kernel();
        if v == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if kernel.len() != v || kernel.iter().any(|r| r.len() != v) {
            return Err(Error::Config(format!("kernel must be {v} x {v}")));
        }
        for (m, row) in kernel.iter().enumerate() {
            if row.iter().any(|w| w.is_nan() || *w < 0.0) {
                return Err(Error::Config(format!("kernel row {m} has a negative or NaN entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("kernel row {m} sums to {sum}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return Err(Error::Config(format!("p_stay {} outside [0, 1]", self.p_stay)));
        }
        if self.frames_per_video == 0 {
            return Err(Error::Config("frames_per_video must be positive".into()));
        }
        let max_pairs = self.num_entities * self.num_entities.saturating_sub(1);
        if self.num_pairs > max_pairs {
            return Err(Error::Config(format!(
                "{} pairs requested but {} entities allow only {max_pairs}",
                self.num_pairs, self.num_entities
            )));
        }
        Ok(())
    }
}

/// Generate videos from a known transition kernel.
///
/// Video `i` draws from its own stream `(seed, i)`: first the pair selection,
/// then each pair's initial predicate, then one or two draws per pair per frame.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<AnnotationSet> {
    cfg.validate()?;
    let vocab = cfg.vocab();
    let kernel = cfg.effective_kernel();
    // Kernel rows with the self-transition removed.
    let moves: Vec<Vec<f64>> = kernel
        .iter()
        .enumerate()
        .map(|(m, row)| {
            let mut r = row.clone();
            r[m] = 0.0;
            r
        })
        .collect();

    let videos = (0..cfg.num_videos)
        .into_par_iter()
        .map(|i| synth_video(cfg, &vocab, &moves, i))
        .collect();
    Ok(AnnotationSet { vocab, videos })
}

fn synth_video(cfg: &SynthConfig, vocab: &PredicateVocab, moves: &[Vec<f64>], index: usize) -> VideoAnnotation {
    let mut rng = SeededRng::with_stream(cfg.seed, index as u64);
    let n = cfg.num_entities as u32;
    let mut all_pairs: Vec<(u32, u32)> = (0..n).flat_map(|s| (0..n).filter(move |&o| o != s).map(move |o| (s, o))).collect();
    // Partial Fisher-Yates: the first num_pairs slots are a uniform sample.
    for k in 0..cfg.num_pairs {
        let j = k + rng.index(all_pairs.len() - k);
        all_pairs.swap(k, j);
    }
    let pairs = &all_pairs[..cfg.num_pairs];
    let mut state: Vec<usize> = pairs.iter().map(|_| rng.index(cfg.vocab_size)).collect();

    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    for t in 0..cfg.frames_per_video {
        if t > 0 {
            for s in state.iter_mut() {
                let stay = cfg.p_stay > 0.0 && rng.unit() < cfg.p_stay;
                if !stay {
                    if let Some(next) = rng.weighted_index(&moves[*s]) {
                        *s = next;
                    }
                }
            }
        }
        frames.push(FrameSceneGraph {
            frame_index: t,
            entities: (0..n)
                .map(|e| EntityInstance {
                    entity_id: EntityId(e),
                    category: format!("object{e}"),
                    bbox: None,
                    frame_index: t,
                })
                .collect(),
            triplets: pairs
                .iter()
                .zip(&state)
                .map(|(&(s, o), &p)| RelationshipTriplet::new(EntityId(s), EntityId(o), PredicateId(p)))
                .collect(),
        });
    }
    VideoAnnotation {
        video_id: format!("synth_{index:04}"),
        frame_count: cfg.frames_per_video,
        frames,
        vocab: vocab.clone(),
    }
}
