//! Scene graph anticipation: observe the first part of a video, forecast the
//! relationships of every still-related pair in the unseen frames.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EntityId, PredicateId, VideoAnnotation};
use crate::procedural::{step_distribution, ProceduralGraph};

/// Observed fraction used when none is given.
pub const DEFAULT_FRACTION: f64 = 0.9;

/// Slack applied before rounding `fraction * T` up, so that products such as
/// `0.3 * 10` that land a few ulps above an integer do not gain a frame.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Predict at most this many frames past the last observed one.
    Frames(usize),
    ToEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnticipationConfig {
    fraction: f64,
    pub horizon: Horizon,
    /// Keep the current predicate as a candidate, scored with the mass that
    /// did not transition away.
    pub persistence: bool,
    /// Per-pair candidate cap; `None` keeps every predicate.
    pub top_k_candidates: Option<usize>,
}

impl Default for AnticipationConfig {
    fn default() -> Self {
        Self { fraction: DEFAULT_FRACTION, horizon: Horizon::ToEnd, persistence: false, top_k_candidates: None }
    }
}

impl AnticipationConfig {
    pub fn new(fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        Ok(Self { fraction, ..Default::default() })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("observed fraction {fraction} must lie strictly between 0 and 1")))
    }
}

/// Number of observed frames for a video of `frame_count` frames:
/// `ceil(fraction * T)` clamped to `[1, T - 1]`.
pub fn observed_frame_count(frame_count: usize, fraction: f64) -> Result<usize> {
    check_fraction(fraction)?;
    if frame_count < 2 {
        return Err(Error::Argument(format!("cannot split a video of {frame_count} frame(s)")));
    }
    let cut = (fraction * frame_count as f64 - CEIL_SLACK).ceil() as usize;
    Ok(cut.clamp(1, frame_count - 1))
}

/// Split a video into its observed prefix and unseen remainder.
///
/// Frame indices and `frame_count` are preserved on both halves.
pub fn split_by_fraction(ann: &VideoAnnotation, fraction: f64) -> Result<(VideoAnnotation, VideoAnnotation)> {
    let cut = observed_frame_count(ann.frame_count, fraction)?;
    let (before, after): (Vec<_>, Vec<_>) = ann.frames.iter().cloned().partition(|f| f.frame_index < cut);
    let observed = VideoAnnotation { frames: before, ..ann.clone() };
    let future = VideoAnnotation { frames: after, ..ann.clone() };
    Ok((observed, future))
}

/// Frame indices forecast from `observed`: those after its last annotated
/// frame, below `frame_count`, limited by `horizon`.
pub fn target_frames(observed: &VideoAnnotation, horizon: Horizon) -> Vec<usize> {
    let Some(last) = observed.frames.last() else { return Vec::new() };
    let end = match horizon {
        Horizon::Frames(n) => (last.frame_index + n + 1).min(observed.frame_count),
        Horizon::ToEnd => observed.frame_count,
    };
    (last.frame_index + 1..end).collect()
}

/// One scored triplet guess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub subject: EntityId,
    pub object: EntityId,
    pub predicate: PredicateId,
    pub score: f64,
    /// Observed predicate the score was propagated from, when known.
    pub source: Option<PredicateId>,
}

/// Why a predicted frame carries no candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionNote {
    /// The last observed frame has no relationships to propagate.
    NoActivePairs,
    /// Every forecast distribution was absorbed before reaching this frame.
    MassAbsorbed,
}

/// Ranked candidates for one target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedGraph {
    pub frame_index: usize,
    /// Descending score; ties ordered by `(subject, object, predicate)`.
    pub candidates: Vec<Candidate>,
    pub note: Option<PredictionNote>,
}

impl PredictedGraph {
    pub fn new(frame_index: usize, mut candidates: Vec<Candidate>) -> Self {
        sort_candidates(&mut candidates);
        Self { frame_index, candidates, note: None }
    }
}

pub fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (a.subject, a.object, a.predicate).cmp(&(b.subject, b.object, b.predicate)))
    });
}

/// Per-candidate compatibility scores in `[0, 1]` for an ordered pair; the
/// `v` factor that multiplies transition weights.
pub trait Compatibility: Sync {
    fn scores(&self, pair: (EntityId, EntityId), vocab_len: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatMode {
    #[default]
    Uniform,
    /// How often the pair held each predicate in the observed frames,
    /// divided by the largest count.
    Frequency,
}

/// Built-in compatibility for `pair` over the observed segment.
///
/// Frequency mode returns all zeros for a pair with no history.
pub fn default_compatibility(
    observed: &VideoAnnotation,
    pair: (EntityId, EntityId),
    mode: CompatMode,
) -> Vec<f64> {
    let v = observed.vocab.len();
    match mode {
        CompatMode::Uniform => vec![1.0; v],
        CompatMode::Frequency => {
            let mut counts = vec![0u64; v];
            for f in &observed.frames {
                for t in f.triplets.iter().filter(|t| t.pair() == pair) {
                    if let Some(c) = counts.get_mut(t.predicate.0) {
                        *c += 1;
                    }
                }
            }
            let max = counts.iter().copied().max().unwrap_or(0);
            if max == 0 {
                vec![0.0; v]
            } else {
                counts.iter().map(|&c| c as f64 / max as f64).collect()
            }
        }
    }
}

/// [`Compatibility`] backed by [`default_compatibility`]; pairs without
/// history fall back to uniform scores.
#[derive(Debug, Clone)]
pub struct ObservedCompat<'a> {
    observed: &'a VideoAnnotation,
    mode: CompatMode,
}

impl<'a> ObservedCompat<'a> {
    pub fn new(observed: &'a VideoAnnotation, mode: CompatMode) -> Self {
        Self { observed, mode }
    }
}

impl Compatibility for ObservedCompat<'_> {
    fn scores(&self, pair: (EntityId, EntityId), vocab_len: usize) -> Vec<f64> {
        let s = default_compatibility(self.observed, pair, self.mode);
        if s.len() != vocab_len || s.iter().all(|x| *x == 0.0) {
            vec![1.0; vocab_len]
        } else {
            s
        }
    }
}

/// Forecast every target frame of `observed`.
///
/// Each ordered pair related in the last observed frame propagates its
/// current predicate through the procedural graph: the score of predicate `n`
/// at `k` frames ahead is the `k`-step marginal probability, times the
/// pair's compatibility score when `compat` is given. A pair holding several
/// predicates averages their forecasts. Pairs absent from the last observed
/// frame are not forecast.
pub fn predict_future(
    observed: &VideoAnnotation,
    pg: &ProceduralGraph,
    cfg: &AnticipationConfig,
    compat: Option<&dyn Compatibility>,
) -> Result<Vec<PredictedGraph>> {
    if &observed.vocab != pg.vocab() {
        return Err(Error::Config(format!(
            "video {:?} uses vocabulary {:?} but the procedural graph uses {:?}",
            observed.video_id,
            observed.vocab.names(),
            pg.vocab().names()
        )));
    }
    let targets = target_frames(observed, cfg.horizon);
    let Some(last) = observed.frames.last() else { return Ok(Vec::new()) };
    let pairs = last.pair_predicates();
    if pairs.is_empty() {
        return Ok(targets
            .into_iter()
            .map(|t| PredictedGraph { frame_index: t, candidates: Vec::new(), note: Some(PredictionNote::NoActivePairs) })
            .collect());
    }

    let v = pg.len();
    let compat_scores: HashMap<(EntityId, EntityId), Vec<f64>> = pairs
        .iter()
        .map(|(pair, _)| {
            let s = compat.map(|c| c.scores(*pair, v)).unwrap_or_else(|| vec![1.0; v]);
            (*pair, s)
        })
        .collect();
    // One running marginal per (pair, current predicate).
    let mut dists: Vec<Vec<Vec<f64>>> = pairs
        .iter()
        .map(|(_, preds)| {
            preds
                .iter()
                .map(|p| {
                    let mut d = vec![0.0; v];
                    d[p.0] = 1.0;
                    d
                })
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(targets.len());
    let mut step = 0;
    for t in targets {
        let k = t - last.frame_index;
        while step < k {
            for pair_dists in dists.iter_mut() {
                for d in pair_dists.iter_mut() {
                    *d = step_distribution(pg, d);
                }
            }
            step += 1;
        }
        let mut candidates = Vec::new();
        for ((pair, preds), pair_dists) in pairs.iter().zip(&dists) {
            let weight = 1.0 / preds.len() as f64;
            let mut scores = vec![0.0; v];
            let mut best_source = vec![(0.0f64, None::<PredicateId>); v];
            for (&r, d) in preds.iter().zip(pair_dists) {
                let mut contrib = d.clone();
                if cfg.persistence {
                    let mass: f64 = d.iter().sum();
                    contrib[r.0] += (1.0 - mass).max(0.0);
                }
                for n in 0..v {
                    let c = contrib[n] * weight;
                    scores[n] += c;
                    if c > best_source[n].0 {
                        best_source[n] = (c, Some(r));
                    }
                }
            }
            let cs = &compat_scores[pair];
            let mut pair_cands: Vec<Candidate> = (0..v)
                .filter_map(|n| {
                    let score = (scores[n] * cs.get(n).copied().unwrap_or(0.0)).clamp(0.0, 1.0);
                    (score > 0.0).then_some(Candidate {
                        subject: pair.0,
                        object: pair.1,
                        predicate: PredicateId(n),
                        score,
                        source: best_source[n].1,
                    })
                })
                .collect();
            sort_candidates(&mut pair_cands);
            if let Some(cap) = cfg.top_k_candidates {
                pair_cands.truncate(cap);
            }
            candidates.extend(pair_cands);
        }
        let mut g = PredictedGraph::new(t, candidates);
        if g.candidates.is_empty() {
            g.note = Some(PredictionNote::MassAbsorbed);
        }
        out.push(g);
    }
    Ok(out)
}

/// One line of the predictions JSON Lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub frame_index: usize,
    /// `[subject, object, predicate, score]`
    pub candidates: Vec<(EntityId, EntityId, PredicateId, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<PredictionNote>,
}

impl PredictionRecord {
    pub fn from_predicted(video_id: &str, g: &PredictedGraph) -> Self {
        Self {
            video_id: video_id.to_string(),
            frame_index: g.frame_index,
            candidates: g.candidates.iter().map(|c| (c.subject, c.object, c.predicate, c.score)).collect(),
            note: g.note,
        }
    }

    pub fn to_predicted(&self) -> PredictedGraph {
        let candidates = self
            .candidates
            .iter()
            .map(|&(subject, object, predicate, score)| Candidate { subject, object, predicate, score, source: None })
            .collect();
        let mut g = PredictedGraph::new(self.frame_index, candidates);
        g.note = self.note;
        g
    }
}

pub fn predictions_to_jsonl(records: &[PredictionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&crate::jsonfmt::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn predictions_from_jsonl(text: &str) -> Result<Vec<PredictionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            crate::ingest::parse_json(line).map_err(|e| match e {
                Error::Parse { location, message } => {
                    Error::Parse { location: format!("record on line {}: {location}", i + 1), message }
                }
                other => other,
            })
        })
        .collect()
}
