//! Annotation domain types: predicate vocabularies, entities, relationship
//! triplets and per-frame scene graphs, plus structural validation.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a predicate category inside a [`PredicateVocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredicateId(pub usize);

impl PredicateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PredicateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Tracked object identifier, stable across the frames of one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered list of predicate-category names with a reverse index.
///
/// Names are unique and non-empty; ids are the positions `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PredicateVocab {
    categories: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, PredicateId>,
}

impl PredicateVocab {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let categories: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(categories.len());
        for (i, name) in categories.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Argument(format!("predicate name at index {i} is empty")));
            }
            if index.insert(name.clone(), PredicateId(i)).is_some() {
                return Err(Error::Argument(format!("duplicate predicate name {name:?}")));
            }
        }
        Ok(Self { categories, index })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<PredicateId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: PredicateId) -> Option<&str> {
        self.categories.get(id.0).map(String::as_str)
    }

    pub fn contains(&self, id: PredicateId) -> bool {
        id.0 < self.categories.len()
    }

    pub fn names(&self) -> &[String] {
        &self.categories
    }

    pub fn ids(&self) -> impl Iterator<Item = PredicateId> {
        (0..self.categories.len()).map(PredicateId)
    }
}

impl TryFrom<Vec<String>> for PredicateVocab {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        PredicateVocab::new(names)
    }
}

impl From<PredicateVocab> for Vec<String> {
    fn from(vocab: PredicateVocab) -> Self {
        vocab.categories
    }
}

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Intersection over union; 0 when either box is degenerate.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityInstance {
    pub entity_id: EntityId,
    pub category: String,
    pub bbox: Option<BBox>,
    pub frame_index: usize,
}

/// Directed `subject -predicate-> object` relationship.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationshipTriplet {
    pub subject: EntityId,
    pub object: EntityId,
    pub predicate: PredicateId,
    /// Confidence in `[0, 1]`; `None` is read as ground truth (1.0).
    pub score: Option<f64>,
}

impl RelationshipTriplet {
    pub fn new(subject: EntityId, object: EntityId, predicate: PredicateId) -> Self {
        Self { subject, object, predicate, score: None }
    }

    pub fn pair(&self) -> (EntityId, EntityId) {
        (self.subject, self.object)
    }

    pub fn confidence(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }
}

/// Scene graph of a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSceneGraph {
    pub frame_index: usize,
    pub entities: Vec<EntityInstance>,
    pub triplets: Vec<RelationshipTriplet>,
}

impl FrameSceneGraph {
    pub fn new(frame_index: usize) -> Self {
        Self { frame_index, entities: Vec::new(), triplets: Vec::new() }
    }

    pub fn entity(&self, id: EntityId) -> Option<&EntityInstance> {
        self.entities.iter().find(|e| e.entity_id == id)
    }

    /// Predicates held by each ordered pair, in first-appearance order.
    pub fn pair_predicates(&self) -> Vec<((EntityId, EntityId), Vec<PredicateId>)> {
        let mut order: Vec<((EntityId, EntityId), Vec<PredicateId>)> = Vec::new();
        let mut slot: HashMap<(EntityId, EntityId), usize> = HashMap::new();
        for t in &self.triplets {
            let i = *slot.entry(t.pair()).or_insert_with(|| {
                order.push((t.pair(), Vec::new()));
                order.len() - 1
            });
            if !order[i].1.contains(&t.predicate) {
                order[i].1.push(t.predicate);
            }
        }
        order
    }
}

/// All annotated frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotation {
    pub video_id: String,
    /// Video length `T`; every frame index is below it.
    pub frame_count: usize,
    /// Annotated frames sorted by `frame_index`.
    pub frames: Vec<FrameSceneGraph>,
    pub vocab: PredicateVocab,
}

impl VideoAnnotation {
    pub fn frame(&self, frame_index: usize) -> Option<&FrameSceneGraph> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| &self.frames[i])
    }
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    ZeroFrameCount,
    FrameOrder,
    FrameOutOfRange,
    EntityFrameMismatch,
    DuplicateEntity,
    NonPositiveBBox,
    SelfRelation,
    UnknownPredicate,
    MissingEntity,
    DuplicateTriplet,
    ScoreOutOfRange,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::ZeroFrameCount => "frame_count must be at least 1",
            Rule::FrameOrder => "frame indices must be strictly increasing",
            Rule::FrameOutOfRange => "frame index must be below frame_count",
            Rule::EntityFrameMismatch => "entity frame_index must match its frame",
            Rule::DuplicateEntity => "entity_id repeated within a frame",
            Rule::NonPositiveBBox => "bbox width and height must be positive",
            Rule::SelfRelation => "subject and object must differ",
            Rule::UnknownPredicate => "predicate id not in vocabulary",
            Rule::MissingEntity => "triplet references an entity absent from the frame",
            Rule::DuplicateTriplet => "duplicate (subject, object, predicate) triple",
            Rule::ScoreOutOfRange => "score must lie in [0, 1]",
        };
        f.write_str(s)
    }
}

/// One broken invariant, located by frame and item.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Violation {
    pub video_id: String,
    pub frame_index: Option<usize>,
    /// The offending entity, triplet or field, rendered for humans.
    pub item: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame_index {
            Some(t) => write!(f, "video {:?} frame {t}: {}: {}", self.video_id, self.item, self.rule),
            None => write!(f, "video {:?}: {}: {}", self.video_id, self.item, self.rule),
        }
    }
}

/// Check every structural invariant of an annotation.
///
/// Returns an empty list iff the annotation is well formed. Violations are
/// reported in frame order, entities before triplets.
pub fn validate_annotation(ann: &VideoAnnotation) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, item: String, rule: Rule| {
        out.push(Violation { video_id: ann.video_id.clone(), frame_index: frame, item, rule });
    };

    if ann.frame_count == 0 {
        push(None, "frame_count".into(), Rule::ZeroFrameCount);
    }

    let mut prev: Option<usize> = None;
    for frame in &ann.frames {
        let t = frame.frame_index;
        if let Some(p) = prev {
            if t <= p {
                push(Some(t), format!("frame_index {t} after {p}"), Rule::FrameOrder);
            }
        }
        prev = Some(t);
        if t >= ann.frame_count {
            push(Some(t), format!("frame_index {t} (frame_count {})", ann.frame_count), Rule::FrameOutOfRange);
        }

        let mut present = HashSet::new();
        for e in &frame.entities {
            let item = format!("entity {}", e.entity_id);
            if !present.insert(e.entity_id) {
                push(Some(t), item.clone(), Rule::DuplicateEntity);
            }
            if e.frame_index != t {
                push(Some(t), format!("{item} (frame_index {})", e.frame_index), Rule::EntityFrameMismatch);
            }
            if let Some(b) = e.bbox {
                // NaN fails both comparisons and is reported too.
                if !(b.w > 0.0 && b.h > 0.0) {
                    push(Some(t), item, Rule::NonPositiveBBox);
                }
            }
        }

        let mut seen = HashSet::new();
        for tr in &frame.triplets {
            let item = format!("triplet ({}, {}, {})", tr.subject, tr.object, tr.predicate);
            if tr.subject == tr.object {
                push(Some(t), item.clone(), Rule::SelfRelation);
            }
            if !ann.vocab.contains(tr.predicate) {
                push(Some(t), item.clone(), Rule::UnknownPredicate);
            }
            for id in [tr.subject, tr.object] {
                if !present.contains(&id) {
                    push(Some(t), format!("{item} entity {id}"), Rule::MissingEntity);
                }
            }
            if !seen.insert((tr.subject, tr.object, tr.predicate)) {
                push(Some(t), item.clone(), Rule::DuplicateTriplet);
            }
            if let Some(s) = tr.score {
                if !(0.0..=1.0).contains(&s) {
                    push(Some(t), item, Rule::ScoreOutOfRange);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> PredicateVocab {
        PredicateVocab::new(["hold", "play", "sit"]).unwrap()
    }

    fn entity(id: u32, t: usize) -> EntityInstance {
        EntityInstance { entity_id: EntityId(id), category: format!("c{id}"), bbox: None, frame_index: t }
    }

    fn two_frames() -> VideoAnnotation {
        let mut frames = Vec::new();
        for t in 0..2 {
            let mut f = FrameSceneGraph::new(t);
            f.entities = vec![entity(1, t), entity(2, t)];
            f.triplets = vec![RelationshipTriplet::new(EntityId(1), EntityId(2), PredicateId(t))];
            frames.push(f);
        }
        VideoAnnotation { video_id: "v".into(), frame_count: 2, frames, vocab: vocab() }
    }

    #[test]
    fn well_formed_is_clean() {
        assert!(validate_annotation(&two_frames()).is_empty());
    }

    #[test]
    fn absent_entity_is_reported_once() {
        let mut ann = two_frames();
        ann.frames[1].triplets[0].object = EntityId(9);
        let v = validate_annotation(&ann);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::MissingEntity);
        assert_eq!(v[0].frame_index, Some(1));
        assert!(v[0].to_string().contains('9'));
    }

    #[test]
    fn duplicate_triple_matches_set_scan() {
        let mut ann = two_frames();
        ann.frames.truncate(1);
        ann.frame_count = 1;
        let dup = ann.frames[0].triplets[0];
        ann.frames[0].triplets.push(dup);

        // Oracle: count triples that fail to insert into a set.
        let mut set = HashSet::new();
        let expected = ann.frames[0]
            .triplets
            .iter()
            .filter(|t| !set.insert((t.subject, t.object, t.predicate)))
            .count();
        let v = validate_annotation(&ann);
        assert_eq!(expected, 1);
        assert_eq!(v.len(), expected);
        assert_eq!(v[0].rule, Rule::DuplicateTriplet);
    }

    #[test]
    fn other_rules() {
        let mut ann = two_frames();
        ann.frames[0].entities[0].bbox = Some(BBox::new(0.0, 0.0, 0.0, 3.0));
        ann.frames[0].triplets.push(RelationshipTriplet::new(EntityId(1), EntityId(1), PredicateId(7)));
        ann.frames[1].frame_index = 0;
        ann.frames[1].entities.iter_mut().for_each(|e| e.frame_index = 0);
        let rules: Vec<Rule> = validate_annotation(&ann).into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::NonPositiveBBox));
        assert!(rules.contains(&Rule::SelfRelation));
        assert!(rules.contains(&Rule::UnknownPredicate));
        assert!(rules.contains(&Rule::FrameOrder));
    }

    #[test]
    fn validation_is_idempotent() {
        let mut ann = two_frames();
        ann.frames[0].triplets[0].predicate = PredicateId(42);
        let before = ann.clone();
        assert_eq!(validate_annotation(&ann), validate_annotation(&ann));
        assert_eq!(ann, before);
    }

    #[test]
    fn vocab_rejects_bad_names() {
        assert!(PredicateVocab::new(["a", "a"]).is_err());
        assert!(PredicateVocab::new(["a", ""]).is_err());
        let v = vocab();
        assert_eq!(v.id("play"), Some(PredicateId(1)));
        assert_eq!(v.name(PredicateId(2)), Some("sit"));
    }

    #[test]
    fn iou_basic() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(5.0, 5.0, 1.0, 1.0)), 0.0);
    }
}
