//! Procedural graph: a Markov chain over predicate categories estimated from
//! how relationships change between consecutive frames.
//!
//! For every ordered entity pair that is related in both frame `t` and frame
//! `t + 1`, each `(m, n)` combination of its predicates in the two frames is
//! one observed transition. Weights are the observed frequencies
//! `count(m -> n) / count(m -> *)` with self-transitions then removed and the
//! remaining mass rescaled so each row sums to one. A predicate whose only
//! observed successor is itself (or that was never seen transitioning) keeps
//! an all-zero row and is called *absorbing*.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EntityId, PredicateId, PredicateVocab, VideoAnnotation};

/// Tolerance on row sums of a normalized weight matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Consecutive-frame transition counts, row-major `|vocab| x |vocab|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    vocab: PredicateVocab,
    counts: Vec<u64>,
    from_totals: Vec<u64>,
}

impl TransitionCounts {
    pub fn zeros(vocab: PredicateVocab) -> Self {
        let v = vocab.len();
        Self { vocab, counts: vec![0; v * v], from_totals: vec![0; v] }
    }

    /// Build from a dense row-major matrix.
    pub fn from_matrix(vocab: PredicateVocab, counts: Vec<u64>) -> Result<Self> {
        let v = vocab.len();
        if counts.len() != v * v {
            return Err(Error::Argument(format!(
                "count matrix has {} entries, expected {}",
                counts.len(),
                v * v
            )));
        }
        let from_totals = counts.chunks(v.max(1)).take(v).map(|r| r.iter().sum()).collect();
        Ok(Self { vocab, counts, from_totals })
    }

    pub fn vocab(&self) -> &PredicateVocab {
        &self.vocab
    }

    pub fn get(&self, from: PredicateId, to: PredicateId) -> u64 {
        self.counts[from.0 * self.vocab.len() + to.0]
    }

    pub fn row(&self, from: PredicateId) -> &[u64] {
        let v = self.vocab.len();
        &self.counts[from.0 * v..(from.0 + 1) * v]
    }

    /// Row totals, diagonal included.
    pub fn from_totals(&self) -> &[u64] {
        &self.from_totals
    }

    pub fn total(&self) -> u64 {
        self.from_totals.iter().sum()
    }

    fn add(&mut self, from: PredicateId, to: PredicateId) {
        let v = self.vocab.len();
        self.counts[from.0 * v + to.0] += 1;
        self.from_totals[from.0] += 1;
    }

    /// Elementwise sum; both sides must share a vocabulary.
    pub fn merge(mut self, other: &TransitionCounts) -> Self {
        debug_assert_eq!(self.vocab, other.vocab);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.from_totals.iter_mut().zip(&other.from_totals) {
            *a += b;
        }
        self
    }
}

/// Count predicate transitions of every ordered pair between frames `t` and
/// `t + 1` over all `videos`.
///
/// Frames are adjacent when their `frame_index` values differ by exactly one.
/// A pair holding several predicates contributes every cross combination.
/// Videos are processed in parallel and merged by addition.
pub fn count_transitions(vocab: &PredicateVocab, videos: &[VideoAnnotation]) -> Result<TransitionCounts> {
    for video in videos {
        if &video.vocab != vocab {
            return Err(Error::Config(format!(
                "video {:?} uses vocabulary {:?}, expected {:?}",
                video.video_id,
                video.vocab.names(),
                vocab.names()
            )));
        }
    }
    let total = videos
        .par_iter()
        .map(|video| count_video(vocab, video))
        .reduce(|| TransitionCounts::zeros(vocab.clone()), |a, b| a.merge(&b));
    Ok(total)
}

fn count_video(vocab: &PredicateVocab, video: &VideoAnnotation) -> TransitionCounts {
    let mut counts = TransitionCounts::zeros(vocab.clone());
    for window in video.frames.windows(2) {
        let (cur, next) = (&window[0], &window[1]);
        if next.frame_index != cur.frame_index + 1 {
            continue;
        }
        let next_preds: HashMap<(EntityId, EntityId), Vec<PredicateId>> =
            next.pair_predicates().into_iter().collect();
        for (pair, preds) in cur.pair_predicates() {
            let Some(succ) = next_preds.get(&pair) else { continue };
            for &m in &preds {
                for &n in succ {
                    if vocab.contains(m) && vocab.contains(n) {
                        counts.add(m, n);
                    }
                }
            }
        }
    }
    counts
}

/// Normalized transition weights over a predicate vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProceduralGraph {
    vocab: PredicateVocab,
    weights: Vec<f64>,
    absorbing: Vec<PredicateId>,
}

/// Estimate the procedural graph from counts (no smoothing).
pub fn build_procedural_graph(counts: &TransitionCounts) -> ProceduralGraph {
    build_procedural_graph_smoothed(counts, 0.0)
}

/// Estimate the procedural graph with additive smoothing `alpha >= 0`.
///
/// Raw frequencies `(c[m][n] + alpha) / (total[m] + alpha * |V|)` are computed
/// first, the diagonal is zeroed and rows with mass left are rescaled to one.
pub fn build_procedural_graph_smoothed(counts: &TransitionCounts, alpha: f64) -> ProceduralGraph {
    let alpha = if alpha.is_finite() && alpha > 0.0 { alpha } else { 0.0 };
    let vocab = counts.vocab.clone();
    let v = vocab.len();
    let mut weights = vec![0.0; v * v];
    let mut absorbing = Vec::new();
    for m in 0..v {
        let row = &counts.counts[m * v..(m + 1) * v];
        let denom = counts.from_totals[m] as f64 + alpha * v as f64;
        let out = &mut weights[m * v..(m + 1) * v];
        if denom > 0.0 {
            for (w, &c) in out.iter_mut().zip(row) {
                *w = (c as f64 + alpha) / denom;
            }
        }
        out[m] = 0.0;
        let residual: f64 = out.iter().sum();
        if residual > 0.0 {
            out.iter_mut().for_each(|w| *w /= residual);
        } else {
            out.iter_mut().for_each(|w| *w = 0.0);
            absorbing.push(PredicateId(m));
        }
    }
    ProceduralGraph { vocab, weights, absorbing }
}

/// Result of a one-step query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextRelationship {
    Predicate { id: PredicateId, score: f64 },
    /// The current predicate has no outgoing transitions.
    Absorbing,
}

/// Query mode for [`anticipate_horizon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonMode {
    Greedy,
    Marginal,
}

/// Output of [`anticipate_horizon`].
#[derive(Debug, Clone, PartialEq)]
pub enum HorizonForecast {
    Greedy(Vec<PredicateId>),
    Marginal(MarginalForecast),
}

/// Distribution over predicates `n` steps ahead.
///
/// `raw` is row `current` of the `n`-th matrix power of the weights. Because
/// absorbing rows are zero, `raw` may be substochastic; `mass` is its sum.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalForecast {
    pub raw: Vec<f64>,
    pub mass: f64,
}

impl MarginalForecast {
    /// The distribution rescaled to sum to one, or `None` when all mass was
    /// absorbed.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        if self.mass > 0.0 {
            Some(self.raw.iter().map(|p| p / self.mass).collect())
        } else {
            None
        }
    }
}

impl ProceduralGraph {
    /// Assemble from a row-major matrix, checking every graph invariant.
    pub fn from_weights(vocab: PredicateVocab, weights: Vec<f64>) -> Result<Self> {
        let v = vocab.len();
        if weights.len() != v * v {
            return Err(Error::Argument(format!(
                "weight matrix has {} entries, expected {}",
                weights.len(),
                v * v
            )));
        }
        let mut absorbing = Vec::new();
        for m in 0..v {
            let row = &weights[m * v..(m + 1) * v];
            if row[m] != 0.0 {
                return Err(Error::Argument(format!("self-loop weight on predicate {m} must be 0")));
            }
            if let Some(bad) = row.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::Argument(format!("weight {bad} in row {m} is outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                absorbing.push(PredicateId(m));
            } else if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Argument(format!("row {m} sums to {sum}, expected 1 or 0")));
            }
        }
        Ok(Self { vocab, weights, absorbing })
    }

    pub fn vocab(&self) -> &PredicateVocab {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn weight(&self, from: PredicateId, to: PredicateId) -> f64 {
        self.weights[from.0 * self.len() + to.0]
    }

    pub fn row(&self, from: PredicateId) -> &[f64] {
        let v = self.len();
        &self.weights[from.0 * v..(from.0 + 1) * v]
    }

    /// Row-major weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Predicates with an all-zero row, ascending.
    pub fn absorbing(&self) -> &[PredicateId] {
        &self.absorbing
    }

    pub fn is_absorbing(&self, id: PredicateId) -> bool {
        self.absorbing.binary_search(&id).is_ok()
    }

    /// Positive-weight edges `(from, to, w)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (PredicateId, PredicateId, f64)> + '_ {
        let v = self.len();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(move |(i, w)| (PredicateId(i / v), PredicateId(i % v), *w))
    }

    fn check_id(&self, id: PredicateId) -> Result<()> {
        if self.vocab.contains(id) {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "predicate id {id} outside vocabulary of size {}",
                self.len()
            )))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(crate::jsonfmt::to_string_pretty(&ProceduralGraphDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProceduralGraphDoc = crate::ingest::parse_json(text)?;
        let pg = Self::from_weights(doc.vocab, doc.weights)?;
        if pg.absorbing != doc.absorbing {
            return Err(Error::Argument(format!(
                "absorbing list {:?} disagrees with zero rows {:?}",
                doc.absorbing, pg.absorbing
            )));
        }
        Ok(pg)
    }
}

/// Wire form: `{vocab: [names], weights: row-major, absorbing: [ids]}`.
#[derive(Debug, Serialize, Deserialize)]
struct ProceduralGraphDoc {
    vocab: PredicateVocab,
    weights: Vec<f64>,
    absorbing: Vec<PredicateId>,
}

impl From<&ProceduralGraph> for ProceduralGraphDoc {
    fn from(pg: &ProceduralGraph) -> Self {
        Self { vocab: pg.vocab.clone(), weights: pg.weights.clone(), absorbing: pg.absorbing.clone() }
    }
}

/// Most probable next predicate: `argmax_n w(current, n) * compat[n]` over
/// the successors of `current`. Ties go to the lowest predicate id.
pub fn anticipate_next(pg: &ProceduralGraph, current: PredicateId, compat: &[f64]) -> Result<NextRelationship> {
    pg.check_id(current)?;
    if compat.len() != pg.len() {
        return Err(Error::Argument(format!(
            "compatibility has {} scores, vocabulary has {}",
            compat.len(),
            pg.len()
        )));
    }
    if pg.is_absorbing(current) {
        return Ok(NextRelationship::Absorbing);
    }
    let mut best: Option<(PredicateId, f64)> = None;
    for (n, (&w, &c)) in pg.row(current).iter().zip(compat).enumerate() {
        if w <= 0.0 {
            continue;
        }
        let score = w * c;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((PredicateId(n), score));
        }
    }
    Ok(match best {
        Some((id, score)) => NextRelationship::Predicate { id, score },
        None => NextRelationship::Absorbing,
    })
}

/// Follow the single most probable transition up to `steps` times with uniform
/// compatibility, stopping early at an absorbing predicate.
pub fn anticipate_greedy(pg: &ProceduralGraph, current: PredicateId, steps: usize) -> Result<Vec<PredicateId>> {
    pg.check_id(current)?;
    if steps == 0 {
        return Err(Error::Argument("horizon must be at least 1".into()));
    }
    let uniform = vec![1.0; pg.len()];
    let mut path = Vec::with_capacity(steps);
    let mut at = current;
    for _ in 0..steps {
        match anticipate_next(pg, at, &uniform)? {
            NextRelationship::Predicate { id, .. } => {
                path.push(id);
                at = id;
            }
            NextRelationship::Absorbing => break,
        }
    }
    Ok(path)
}

/// Row `current` of the `steps`-th power of the weight matrix.
pub fn anticipate_marginal(pg: &ProceduralGraph, current: PredicateId, steps: usize) -> Result<MarginalForecast> {
    pg.check_id(current)?;
    if steps == 0 {
        return Err(Error::Argument("horizon must be at least 1".into()));
    }
    let mut dist = vec![0.0; pg.len()];
    dist[current.0] = 1.0;
    for _ in 0..steps {
        dist = step_distribution(pg, &dist);
    }
    let mass = dist.iter().sum();
    Ok(MarginalForecast { raw: dist, mass })
}

/// Push a (sub)distribution over predicates one transition forward:
/// `next[n] = sum_m dist[m] * w(m, n)`.
pub fn step_distribution(pg: &ProceduralGraph, dist: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; pg.len()];
    for (m, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (acc, &w) in next.iter_mut().zip(pg.row(PredicateId(m))) {
            *acc += p * w;
        }
    }
    next
}

/// Multi-step query in either mode.
pub fn anticipate_horizon(
    pg: &ProceduralGraph,
    current: PredicateId,
    steps: usize,
    mode: HorizonMode,
) -> Result<HorizonForecast> {
    match mode {
        HorizonMode::Greedy => anticipate_greedy(pg, current, steps).map(HorizonForecast::Greedy),
        HorizonMode::Marginal => anticipate_marginal(pg, current, steps).map(HorizonForecast::Marginal),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityInstance, FrameSceneGraph, RelationshipTriplet};

    const HOLD: PredicateId = PredicateId(0);
    const PLAY: PredicateId = PredicateId(1);
    const RELEASE: PredicateId = PredicateId(2);
    const SIT: PredicateId = PredicateId(3);

    fn vocab() -> PredicateVocab {
        PredicateVocab::new(["hold", "play", "release", "sit"]).unwrap()
    }

    /// One video; `seqs[k]` is the predicate sequence of pair `(2k, 2k+1)`.
    fn video(seqs: &[&[PredicateId]]) -> VideoAnnotation {
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let frames = (0..len)
            .map(|t| {
                let mut f = FrameSceneGraph::new(t);
                for (k, seq) in seqs.iter().enumerate() {
                    let (s, o) = (EntityId(2 * k as u32), EntityId(2 * k as u32 + 1));
                    for id in [s, o] {
                        f.entities.push(EntityInstance {
                            entity_id: id,
                            category: "x".into(),
                            bbox: None,
                            frame_index: t,
                        });
                    }
                    if let Some(&p) = seq.get(t) {
                        f.triplets.push(RelationshipTriplet::new(s, o, p));
                    }
                }
                f
            })
            .collect();
        VideoAnnotation { video_id: "v".into(), frame_count: len.max(1), frames, vocab: vocab() }
    }

    fn hold_graph() -> ProceduralGraph {
        // hold -> play 0.75, hold -> release 0.25; everything else absorbing.
        let mut c = vec![0; 16];
        c[1] = 3;
        c[2] = 1;
        build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap())
    }

    #[test]
    fn counts_single_pair_sequence() {
        let counts = count_transitions(&vocab(), &[video(&[&[HOLD, HOLD, PLAY]])]).unwrap();
        assert_eq!(counts.get(HOLD, HOLD), 1);
        assert_eq!(counts.get(HOLD, PLAY), 1);
        assert_eq!(counts.total(), 2);
    }

    #[test]
    fn counts_single_frame_is_zero() {
        let counts = count_transitions(&vocab(), &[video(&[&[HOLD]])]).unwrap();
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn counts_disjoint_pairs() {
        let counts = count_transitions(&vocab(), &[video(&[&[SIT, SIT], &[HOLD, PLAY]])]).unwrap();
        assert_eq!(counts.get(SIT, SIT), 1);
        assert_eq!(counts.get(HOLD, PLAY), 1);
        assert_eq!(counts.total(), 2);
    }

    #[test]
    fn counts_skip_non_adjacent_frames() {
        let mut v = video(&[&[HOLD, PLAY, RELEASE]]);
        v.frames.remove(1);
        v.frame_count = 3;
        assert_eq!(count_transitions(&vocab(), &[v]).unwrap().total(), 0);
    }

    #[test]
    fn counts_multi_predicate_cross_product() {
        let mut v = video(&[&[HOLD, PLAY]]);
        v.frames[0].triplets.push(RelationshipTriplet::new(EntityId(0), EntityId(1), SIT));
        let c = count_transitions(&vocab(), &[v]).unwrap();
        assert_eq!(c.get(HOLD, PLAY), 1);
        assert_eq!(c.get(SIT, PLAY), 1);
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn counts_reject_vocab_mismatch() {
        let mut v = video(&[&[HOLD, PLAY]]);
        v.vocab = PredicateVocab::new(["a", "b"]).unwrap();
        assert!(matches!(count_transitions(&vocab(), &[v]), Err(Error::Config(_))));
    }

    #[test]
    fn weights_from_counts() {
        let pg = hold_graph();
        assert_eq!(pg.weight(HOLD, PLAY), 0.75);
        assert_eq!(pg.weight(HOLD, RELEASE), 0.25);
        assert_eq!(pg.absorbing(), &[PLAY, RELEASE, SIT]);
    }

    #[test]
    fn self_only_row_is_absorbing() {
        let mut c = vec![0; 16];
        c[0] = 5;
        let pg = build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap());
        assert!(pg.is_absorbing(HOLD));
        assert_eq!(pg.row(HOLD).iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn diagonal_is_removed_before_rescaling() {
        // 2 self, 1 -> play, 1 -> sit: raw 0.5/0.25/0.25, rescaled 0.5/0.5.
        let c = vec![2, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let pg = build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap());
        assert_eq!(pg.row(HOLD), &[0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn all_zero_counts_all_absorbing() {
        let pg = build_procedural_graph(&TransitionCounts::zeros(vocab()));
        assert_eq!(pg.absorbing().len(), 4);
    }

    #[test]
    fn smoothing_fills_rows() {
        let pg = build_procedural_graph_smoothed(&TransitionCounts::zeros(vocab()), 1.0);
        assert!(pg.absorbing().is_empty());
        for m in vocab().ids() {
            assert_eq!(pg.weight(m, m), 0.0);
            assert!((pg.row(m).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn next_uniform_and_weighted() {
        let pg = hold_graph();
        let uniform = [1.0; 4];
        assert_eq!(
            anticipate_next(&pg, HOLD, &uniform).unwrap(),
            NextRelationship::Predicate { id: PLAY, score: 0.75 }
        );
        let compat = [1.0, 0.2, 0.9, 1.0];
        match anticipate_next(&pg, HOLD, &compat).unwrap() {
            NextRelationship::Predicate { id, score } => {
                assert_eq!(id, RELEASE);
                assert!((score - 0.225).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(anticipate_next(&pg, PLAY, &uniform).unwrap(), NextRelationship::Absorbing);
        assert!(anticipate_next(&pg, PredicateId(9), &uniform).is_err());
        assert!(anticipate_next(&pg, HOLD, &[1.0]).is_err());
    }

    #[test]
    fn ties_pick_lowest_id() {
        let c = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 0];
        let pg = build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap());
        let next = anticipate_next(&pg, SIT, &[1.0; 4]).unwrap();
        assert_eq!(next, NextRelationship::Predicate { id: PLAY, score: 0.5 });
    }

    #[test]
    fn greedy_stops_at_absorbing() {
        let mut c = vec![0; 16];
        c[1] = 1; // hold -> play
        let pg = build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap());
        assert_eq!(anticipate_greedy(&pg, HOLD, 2).unwrap(), vec![PLAY]);
        assert!(anticipate_greedy(&pg, HOLD, 0).is_err());
    }

    #[test]
    fn greedy_two_cycle() {
        let mut c = vec![0; 16];
        c[1] = 1; // hold -> play
        c[4] = 1; // play -> hold
        let pg = build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap());
        assert_eq!(anticipate_greedy(&pg, HOLD, 2).unwrap(), vec![PLAY, HOLD]);
    }

    #[test]
    fn marginal_first_power_is_row() {
        let pg = hold_graph();
        let m = anticipate_marginal(&pg, HOLD, 1).unwrap();
        assert_eq!(m.raw, pg.row(HOLD));
        assert_eq!(m.mass, 1.0);
        let m2 = anticipate_marginal(&pg, HOLD, 2).unwrap();
        assert_eq!(m2.mass, 0.0);
        assert_eq!(m2.normalized(), None);
        match anticipate_horizon(&pg, HOLD, 1, HorizonMode::Marginal).unwrap() {
            HorizonForecast::Marginal(f) => assert_eq!(f, m),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let c = vec![0, 1, 2, 0, 3, 0, 0, 0, 0, 0, 0, 0, 7, 0, 0, 0];
        let pg = build_procedural_graph(&TransitionCounts::from_matrix(vocab(), c).unwrap());
        let text = pg.to_json().unwrap();
        assert!(text.contains("0.33333333333333331"));
        let back = ProceduralGraph::from_json(&text).unwrap();
        assert_eq!(back, pg);
        assert!(back.weights().iter().zip(pg.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn from_weights_rejects_bad_rows() {
        let v = PredicateVocab::new(["a", "b"]).unwrap();
        assert!(ProceduralGraph::from_weights(v.clone(), vec![0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(ProceduralGraph::from_weights(v.clone(), vec![0.0, 0.5, 0.0, 0.0]).is_err());
        assert!(ProceduralGraph::from_weights(v, vec![0.0, 1.0, 0.0, 0.0]).is_ok());
    }
}
