//! Recall@K, mean Recall@K and negative log-likelihood scoring.
//!
//! Recall@K of a frame is the fraction of its ground-truth triplets found
//! among the K highest-scored candidates. Under the *with constraint* mode
//! only the best candidate of every `(subject, object)` pair is eligible
//! before truncation. Overall recall averages frames (or videos); mean recall
//! pools hits per predicate category over all frames and averages the
//! categories that occur in the ground truth, so rare categories weigh as
//! much as common ones.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::anticipation::{Candidate, PredictedGraph};
use crate::error::{Error, Result};
use crate::model::{BBox, EntityId, FrameSceneGraph, PredicateId, PredicateVocab};

pub const SGG_K_VALUES: [usize; 3] = [20, 50, 100];
pub const SGA_K_VALUES: [usize; 3] = [10, 20, 50];

/// Probability floor applied before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Distributions whose sum is further than this from one are renormalized.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sgg,
    Sga,
}

impl Task {
    pub fn default_k_values(self) -> Vec<usize> {
        match self {
            Task::Sgg => SGG_K_VALUES.to_vec(),
            Task::Sga => SGA_K_VALUES.to_vec(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Task::Sgg => "SGG",
            Task::Sga => "SGA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    #[default]
    With,
    No,
}

impl ConstraintMode {
    pub fn label(self) -> &'static str {
        match self {
            ConstraintMode::With => "with",
            ConstraintMode::No => "no",
        }
    }
}

/// How a candidate's entities are matched against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouMode {
    /// Subject and object ids must equal the ground-truth ids.
    #[default]
    Off,
    /// Subject and object boxes must each overlap the ground-truth boxes with
    /// at least this IoU.
    Iou(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of per-frame recall over scored frames.
    #[default]
    FrameAveraged,
    /// Hits and totals summed per video, then the per-video recalls averaged.
    VideoPooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallConfig {
    k_values: Vec<usize>,
    pub constraint: ConstraintMode,
    pub iou: IouMode,
    pub aggregation: Aggregation,
}

impl RecallConfig {
    /// `k_values` must be positive and strictly increasing.
    pub fn new(k_values: Vec<usize>, constraint: ConstraintMode) -> Result<Self> {
        if k_values.is_empty() || k_values[0] == 0 || k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!(
                "K values {k_values:?} must be positive and strictly increasing"
            )));
        }
        Ok(Self { k_values, constraint, iou: IouMode::Off, aggregation: Aggregation::FrameAveraged })
    }

    pub fn for_task(task: Task) -> Self {
        Self::new(task.default_k_values(), ConstraintMode::With).expect("defaults are valid")
    }

    pub fn k_values(&self) -> &[usize] {
        &self.k_values
    }
}

/// Hits among `total` ground-truth triplets of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecallCount {
    pub hits: usize,
    pub total: usize,
}

impl RecallCount {
    /// `None` for frames without ground truth, which are skipped.
    pub fn recall(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

/// The candidates eligible at cutoff `k`: under the constraint mode only the
/// first (highest-scored) candidate of each pair, then the first `k`.
pub fn filtered_top_k(pred: &PredictedGraph, k: usize, mode: ConstraintMode) -> Vec<&Candidate> {
    match mode {
        ConstraintMode::No => pred.candidates.iter().take(k).collect(),
        ConstraintMode::With => {
            let mut seen = HashSet::new();
            pred.candidates
                .iter()
                .filter(|c| seen.insert((c.subject, c.object)))
                .take(k)
                .collect()
        }
    }
}

/// Hit flag for each ground-truth triplet of `gt`, in order.
pub fn match_triplets(gt: &FrameSceneGraph, pred: &PredictedGraph, k: usize, mode: ConstraintMode) -> Vec<bool> {
    let top: HashSet<(EntityId, EntityId, PredicateId)> =
        filtered_top_k(pred, k, mode).into_iter().map(|c| (c.subject, c.object, c.predicate)).collect();
    gt.triplets.iter().map(|t| top.contains(&(t.subject, t.object, t.predicate))).collect()
}

/// Hit flags with box matching against externally detected entities.
/// Ground-truth entities without a box never match.
pub fn match_triplets_iou(
    gt: &FrameSceneGraph,
    pred: &PredictedGraph,
    pred_boxes: &HashMap<EntityId, BBox>,
    k: usize,
    mode: ConstraintMode,
    threshold: f64,
) -> Vec<bool> {
    let top = filtered_top_k(pred, k, mode);
    let overlaps = |gt_id: EntityId, pred_id: EntityId| -> bool {
        match (gt.entity(gt_id).and_then(|e| e.bbox), pred_boxes.get(&pred_id)) {
            (Some(a), Some(b)) => a.iou(b) >= threshold,
            _ => false,
        }
    };
    gt.triplets
        .iter()
        .map(|t| {
            top.iter()
                .any(|c| c.predicate == t.predicate && overlaps(t.subject, c.subject) && overlaps(t.object, c.object))
        })
        .collect()
}

/// Recall@K counts for one frame with id matching.
pub fn recall_at_k(gt: &FrameSceneGraph, pred: &PredictedGraph, k: usize, mode: ConstraintMode) -> RecallCount {
    let hits = match_triplets(gt, pred, k, mode).into_iter().filter(|h| *h).count();
    RecallCount { hits, total: gt.triplets.len() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRecall {
    pub predicate: PredicateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub hits: usize,
    pub total: usize,
    pub recall: f64,
}

/// Aggregates at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub recall: f64,
    pub mean_recall: f64,
    /// Categories with ground truth, ascending id.
    pub per_predicate: Vec<PredicateRecall>,
}

/// One frame to score.
#[derive(Debug, Clone, Copy)]
pub struct EvalFrame<'a> {
    pub video_id: &'a str,
    pub gt: &'a FrameSceneGraph,
    pub pred: &'a PredictedGraph,
    /// Detected boxes for the predicted entity ids (IoU mode only).
    pub pred_boxes: Option<&'a HashMap<EntityId, BBox>>,
}

fn frame_hits(f: &EvalFrame<'_>, k: usize, cfg: &RecallConfig) -> Vec<bool> {
    match cfg.iou {
        IouMode::Off => match_triplets(f.gt, f.pred, k, cfg.constraint),
        IouMode::Iou(tau) => {
            let empty = HashMap::new();
            match_triplets_iou(f.gt, f.pred, f.pred_boxes.unwrap_or(&empty), k, cfg.constraint, tau)
        }
    }
}

fn metrics_at_k(frames: &[EvalFrame<'_>], k: usize, cfg: &RecallConfig) -> KMetrics {
    let mut per_pred: BTreeMap<PredicateId, (usize, usize)> = BTreeMap::new();
    let mut frame_recalls = Vec::new();
    let mut per_video: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for f in frames {
        if f.gt.triplets.is_empty() {
            continue;
        }
        let hits = frame_hits(f, k, cfg);
        let mut n_hit = 0;
        for (t, hit) in f.gt.triplets.iter().zip(&hits) {
            let e = per_pred.entry(t.predicate).or_default();
            e.1 += 1;
            if *hit {
                e.0 += 1;
                n_hit += 1;
            }
        }
        frame_recalls.push(n_hit as f64 / hits.len() as f64);
        let v = per_video.entry(f.video_id).or_default();
        v.0 += n_hit;
        v.1 += hits.len();
    }
    let recall = match cfg.aggregation {
        Aggregation::FrameAveraged => mean(&frame_recalls),
        Aggregation::VideoPooled => {
            mean(&per_video.values().map(|(h, t)| *h as f64 / *t as f64).collect::<Vec<_>>())
        }
    };
    let per_predicate: Vec<PredicateRecall> = per_pred
        .into_iter()
        .map(|(predicate, (hits, total))| PredicateRecall {
            predicate,
            name: None,
            hits,
            total,
            recall: hits as f64 / total as f64,
        })
        .collect();
    let mean_recall = mean(&per_predicate.iter().map(|p| p.recall).collect::<Vec<_>>());
    KMetrics { k, recall, mean_recall, per_predicate }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Frame-averaged R@K and category-pooled mR@K over `(gt, pred)` pairs.
pub fn mean_recall_at_k(frames: &[(&FrameSceneGraph, &PredictedGraph)], k: usize, mode: ConstraintMode) -> KMetrics {
    let cfg = RecallConfig { k_values: vec![k], constraint: mode, iou: IouMode::Off, aggregation: Aggregation::FrameAveraged };
    let eval: Vec<EvalFrame<'_>> =
        frames.iter().map(|(gt, pred)| EvalFrame { video_id: "", gt, pred, pred_boxes: None }).collect();
    metrics_at_k(&eval, k, &cfg)
}

/// Mean negative log-likelihood of the ground-truth predicates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NllSummary {
    /// Sum of `-ln p` over scored triplets.
    pub total: f64,
    pub triplets: usize,
    /// Pair distributions rescaled because they did not sum to one.
    pub renormalized_pairs: usize,
    /// Ground-truth triplets whose pair had no distribution (scored at the floor).
    pub missing_pairs: usize,
}

impl NllSummary {
    pub fn mean(&self) -> Option<f64> {
        (self.triplets > 0).then(|| self.total / self.triplets as f64)
    }

    pub fn merge(mut self, other: NllSummary) -> Self {
        self.total += other.total;
        self.triplets += other.triplets;
        self.renormalized_pairs += other.renormalized_pairs;
        self.missing_pairs += other.missing_pairs;
        self
    }
}

/// Negative log-likelihood of one frame's ground truth under per-pair
/// predicate distributions: `-(1/|gt|) * sum ln p(gt predicate)` with the
/// probability floored at [`PROBABILITY_FLOOR`].
///
/// Distributions off by more than [`DISTRIBUTION_TOLERANCE`] from summing to
/// one are renormalized; empty or zero-mass distributions count as missing.
pub fn nll_objective(gt: &FrameSceneGraph, pair_distributions: &HashMap<(EntityId, EntityId), Vec<f64>>) -> NllSummary {
    let mut summary = NllSummary::default();
    let mut normalized: HashMap<(EntityId, EntityId), Option<Vec<f64>>> = HashMap::new();
    for t in &gt.triplets {
        let dist = normalized.entry(t.pair()).or_insert_with(|| {
            let d = pair_distributions.get(&t.pair())?;
            let sum: f64 = d.iter().sum();
            if sum.is_nan() || sum <= 0.0 {
                return None;
            }
            if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                summary.renormalized_pairs += 1;
                Some(d.iter().map(|p| p / sum).collect())
            } else {
                Some(d.clone())
            }
        });
        let p = match dist {
            Some(d) => d.get(t.predicate.0).copied().unwrap_or(0.0),
            None => {
                summary.missing_pairs += 1;
                0.0
            }
        };
        summary.total -= p.max(PROBABILITY_FLOOR).ln();
        summary.triplets += 1;
    }
    summary
}

/// Per-pair predicate distributions read off a candidate list (unnormalized).
pub fn pair_distributions(pred: &PredictedGraph, vocab_len: usize) -> HashMap<(EntityId, EntityId), Vec<f64>> {
    let mut out: HashMap<(EntityId, EntityId), Vec<f64>> = HashMap::new();
    for c in &pred.candidates {
        if c.predicate.0 < vocab_len {
            out.entry((c.subject, c.object)).or_insert_with(|| vec![0.0; vocab_len])[c.predicate.0] += c.score;
        }
    }
    out
}

/// Everything computed for one task under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub constraint: ConstraintMode,
    pub aggregation: Aggregation,
    pub per_k: Vec<KMetrics>,
    pub nll: Option<f64>,
    pub nll_details: NllSummary,
    pub frames_scored: usize,
    pub frames_skipped: usize,
}

/// Score all `frames` at every cutoff of `cfg`.
pub fn evaluate(frames: &[EvalFrame<'_>], task: Task, cfg: &RecallConfig, vocab: &PredicateVocab) -> MetricReport {
    let mut per_k: Vec<KMetrics> = cfg.k_values.iter().map(|&k| metrics_at_k(frames, k, cfg)).collect();
    for m in &mut per_k {
        for p in &mut m.per_predicate {
            p.name = vocab.name(p.predicate).map(str::to_string);
        }
    }
    let scored: Vec<&EvalFrame<'_>> = frames.iter().filter(|f| !f.gt.triplets.is_empty()).collect();
    let nll = scored
        .iter()
        .map(|f| nll_objective(f.gt, &pair_distributions(f.pred, vocab.len())))
        .fold(NllSummary::default(), NllSummary::merge);
    MetricReport {
        task,
        constraint: cfg.constraint,
        aggregation: cfg.aggregation,
        per_k,
        nll: nll.mean(),
        nll_details: nll,
        frames_scored: scored.len(),
        frames_skipped: frames.len() - scored.len(),
    }
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(crate::jsonfmt::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: &'static str = "task,k,mode,recall,mean_recall,frames_scored,frames_skipped";

    /// CSV rows (without header), one per cutoff.
    pub fn csv_rows(&self) -> Vec<String> {
        self.per_k
            .iter()
            .map(|m| {
                format!(
                    "{},{},{},{},{},{},{}",
                    self.task.label(),
                    m.k,
                    self.constraint.label(),
                    crate::jsonfmt::format_g17(m.recall),
                    crate::jsonfmt::format_g17(m.mean_recall),
                    self.frames_scored,
                    self.frames_skipped
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for row in self.csv_rows() {
            s.push_str(&row);
            s.push('\n');
        }
        s
    }

    /// Percentages laid out as `R / mR` per cutoff.
    pub fn to_table(&self) -> String {
        let mut header = format!("{:<6}{:<12}", "Task", "Constraint");
        let mut row = format!("{:<6}{:<12}", self.task.label(), self.constraint.label());
        for m in &self.per_k {
            write!(header, "{:>16}", format!("R/mR@{}", m.k)).unwrap();
            write!(row, "{:>16}", format!("{:.1} / {:.1}", 100.0 * m.recall, 100.0 * m.mean_recall)).unwrap();
        }
        let rule = "-".repeat(header.len());
        let mut out = format!("{header}\n{rule}\n{row}\n");
        match self.nll {
            Some(nll) => writeln!(out, "NLL {nll:.4}").unwrap(),
            None => out.push_str("NLL n/a\n"),
        }
        writeln!(out, "frames scored {}, skipped {}", self.frames_scored, self.frames_skipped).unwrap();
        out
    }
}
