mod common;

use std::collections::{BTreeMap, HashMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use hypersgg::anticipation::{Candidate, PredictedGraph};
use hypersgg::evaluation::{mean_recall_at_k, nll_objective, recall_at_k, ConstraintMode};
use hypersgg::model::{EntityId, FrameSceneGraph, PredicateId, RelationshipTriplet};

use common::rng;

type Triple = (u32, u32, usize);

struct Instance {
    gt: FrameSceneGraph,
    pred: PredictedGraph,
    raw: Vec<(Triple, f64)>,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n_ent: u32 = r.random_range(2..=6);
    let n_pred: usize = r.random_range(1..=5);
    let mut all: Vec<Triple> = Vec::new();
    for s in 0..n_ent {
        for o in (0..n_ent).filter(|&o| o != s) {
            for p in 0..n_pred {
                all.push((s, o, p));
            }
        }
    }
    all.shuffle(&mut r);
    let n_gt = r.random_range(0..=all.len().min(8));
    let mut gt = FrameSceneGraph::new(0);
    gt.triplets = all[..n_gt]
        .iter()
        .map(|&(s, o, p)| RelationshipTriplet::new(EntityId(s), EntityId(o), PredicateId(p)))
        .collect();

    all.shuffle(&mut r);
    let n_cand = r.random_range(0..=all.len());
    // Coarse scores so that ties are common.
    let raw: Vec<(Triple, f64)> = all[..n_cand].iter().map(|&t| (t, r.random_range(0..6) as f64 / 5.0)).collect();
    let candidates = raw
        .iter()
        .map(|&((s, o, p), score)| Candidate {
            subject: EntityId(s),
            object: EntityId(o),
            predicate: PredicateId(p),
            score,
            source: None,
        })
        .collect();
    Instance { gt, pred: PredictedGraph::new(0, candidates), raw }
}

/// Sort by score descending then (s, o, p), optionally keep each pair's best,
/// take `k`, intersect with the ground truth.
fn oracle(inst: &Instance, k: usize, mode: ConstraintMode) -> (usize, usize) {
    let mut ranked = inst.raw.clone();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept = Vec::new();
    let mut pairs = HashSet::new();
    for (t, _) in ranked {
        if mode == ConstraintMode::With && !pairs.insert((t.0, t.1)) {
            continue;
        }
        kept.push(t);
    }
    kept.truncate(k);
    let top: HashSet<Triple> = kept.into_iter().collect();
    let hits = inst
        .gt
        .triplets
        .iter()
        .filter(|t| top.contains(&(t.subject.0, t.object.0, t.predicate.0)))
        .count();
    (hits, inst.gt.triplets.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recall_matches_brute_force(seed in any::<u64>(), k in 1usize..30) {
        let inst = instance(seed);
        for mode in [ConstraintMode::With, ConstraintMode::No] {
            let got = recall_at_k(&inst.gt, &inst.pred, k, mode);
            prop_assert_eq!((got.hits, got.total), oracle(&inst, k, mode));
        }
    }

    #[test]
    fn recall_grows_with_k(seed in any::<u64>()) {
        let inst = instance(seed);
        let mut last = [0usize; 2];
        for k in 1..=40 {
            let with = recall_at_k(&inst.gt, &inst.pred, k, ConstraintMode::With).hits;
            let no = recall_at_k(&inst.gt, &inst.pred, k, ConstraintMode::No).hits;
            prop_assert!(with >= last[0] && no >= last[1]);
            last = [with, no];
        }
    }

    /// The filtered list is a subsequence of the full ranking, so its top `k`
    /// is covered by the unfiltered prefix that reaches its last element.
    #[test]
    fn constraint_hits_covered_by_unfiltered_prefix(seed in any::<u64>(), k in 1usize..30) {
        let inst = instance(seed);
        let kept = hypersgg::evaluation::filtered_top_k(&inst.pred, k, ConstraintMode::With);
        let depth = kept
            .last()
            .map(|c| inst.pred.candidates.iter().position(|x| std::ptr::eq(x, *c)).unwrap() + 1)
            .unwrap_or(0);
        let with = recall_at_k(&inst.gt, &inst.pred, k, ConstraintMode::With).hits;
        let no = recall_at_k(&inst.gt, &inst.pred, depth.max(1), ConstraintMode::No).hits;
        prop_assert!(with <= no);
        let all = recall_at_k(&inst.gt, &inst.pred, inst.pred.candidates.len().max(1), ConstraintMode::No).hits;
        prop_assert!(with <= all);
    }

    #[test]
    fn mean_recall_within_class_range(seeds in prop::collection::vec(any::<u64>(), 1..6), k in 1usize..20) {
        let insts: Vec<Instance> = seeds.iter().map(|&s| instance(s)).collect();
        let frames: Vec<(&FrameSceneGraph, &PredictedGraph)> = insts.iter().map(|i| (&i.gt, &i.pred)).collect();
        for mode in [ConstraintMode::With, ConstraintMode::No] {
            let m = mean_recall_at_k(&frames, k, mode);

            // Pool hits and totals per predicate with the oracle.
            let mut pooled: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
            let mut frame_recalls = Vec::new();
            for inst in &insts {
                let mut ranked = inst.raw.clone();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let mut pairs = HashSet::new();
                let top: HashSet<Triple> = ranked
                    .into_iter()
                    .map(|(t, _)| t)
                    .filter(|t| mode == ConstraintMode::No || pairs.insert((t.0, t.1)))
                    .take(k)
                    .collect();
                let mut hits = 0;
                for t in &inst.gt.triplets {
                    let e = pooled.entry(t.predicate.0).or_default();
                    e.1 += 1;
                    if top.contains(&(t.subject.0, t.object.0, t.predicate.0)) {
                        e.0 += 1;
                        hits += 1;
                    }
                }
                if !inst.gt.triplets.is_empty() {
                    frame_recalls.push(hits as f64 / inst.gt.triplets.len() as f64);
                }
            }
            let per_class: Vec<f64> = pooled.values().map(|&(h, t)| h as f64 / t as f64).collect();
            if per_class.is_empty() {
                prop_assert_eq!(m.mean_recall, 0.0);
                continue;
            }
            let expected_mr = per_class.iter().sum::<f64>() / per_class.len() as f64;
            let expected_r = frame_recalls.iter().sum::<f64>() / frame_recalls.len() as f64;
            prop_assert!((m.mean_recall - expected_mr).abs() <= 1e-12);
            prop_assert!((m.recall - expected_r).abs() <= 1e-12);
            let lo = per_class.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = per_class.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.mean_recall >= lo - 1e-12 && m.mean_recall <= hi + 1e-12);
            prop_assert_eq!(m.per_predicate.len(), per_class.len());
        }
    }
}

#[test]
fn constraint_can_beat_no_constraint_at_same_k() {
    // A pair holding the two best scores pushes the only correct triplet out
    // of the unfiltered top 2, while the filtered list keeps it.
    let mut gt = FrameSceneGraph::new(0);
    gt.triplets = vec![RelationshipTriplet::new(EntityId(2), EntityId(3), PredicateId(0))];
    let c = |s, o, p, score| Candidate { subject: EntityId(s), object: EntityId(o), predicate: PredicateId(p), score, source: None };
    let pred = PredictedGraph::new(0, vec![c(0, 1, 1, 0.9), c(0, 1, 2, 0.8), c(2, 3, 0, 0.7)]);
    assert_eq!(recall_at_k(&gt, &pred, 2, ConstraintMode::With).hits, 1);
    assert_eq!(recall_at_k(&gt, &pred, 2, ConstraintMode::No).hits, 0);
}

#[test]
fn uniform_four_way_nll_is_ln4() {
    let mut gt = FrameSceneGraph::new(0);
    gt.triplets = vec![
        RelationshipTriplet::new(EntityId(0), EntityId(1), PredicateId(2)),
        RelationshipTriplet::new(EntityId(1), EntityId(0), PredicateId(0)),
    ];
    let dists: HashMap<_, _> =
        [((EntityId(0), EntityId(1)), vec![0.25; 4]), ((EntityId(1), EntityId(0)), vec![0.25; 4])].into();
    let s = nll_objective(&gt, &dists);
    assert!((s.mean().unwrap() - 4f64.ln()).abs() <= 1e-12);
    assert_eq!(s.missing_pairs, 0);
}

#[test]
fn missing_pair_costs_the_floor() {
    let mut gt = FrameSceneGraph::new(0);
    gt.triplets = vec![RelationshipTriplet::new(EntityId(0), EntityId(1), PredicateId(0))];
    let s = nll_objective(&gt, &HashMap::new());
    assert!((s.mean().unwrap() + 1e-12f64.ln()).abs() <= 1e-9);
    assert_eq!(s.missing_pairs, 1);
}

#[test]
fn rare_class_halves_mean_recall() {
    // 100 hits of a common class and one missed rare triplet in one frame.
    let mut gt = FrameSceneGraph::new(0);
    let mut cands = Vec::new();
    for i in 0..100u32 {
        gt.triplets.push(RelationshipTriplet::new(EntityId(2 * i), EntityId(2 * i + 1), PredicateId(0)));
        cands.push(Candidate {
            subject: EntityId(2 * i),
            object: EntityId(2 * i + 1),
            predicate: PredicateId(0),
            score: 0.9,
            source: None,
        });
    }
    gt.triplets.push(RelationshipTriplet::new(EntityId(500), EntityId(501), PredicateId(1)));
    let pred = PredictedGraph::new(0, cands);
    let m = mean_recall_at_k(&[(&gt, &pred)], 200, ConstraintMode::With);
    assert_eq!(m.mean_recall, 0.5);
    assert_eq!(m.recall, 100.0 / 101.0);
}
