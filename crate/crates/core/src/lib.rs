//! Scene hypergraphs for video scene graph generation and anticipation.
//!
//! The crate turns per-frame relationship annotations into
//!
//! * a [procedural graph](procedural) of how relationship categories follow
//!   one another between consecutive frames,
//! * a [unified hypergraph](hypergraph) joining the frame scene graphs with
//!   the procedural graph, grown by random-walk sampled hyperedges,
//! * [forecasts](anticipation) of the relationships in unseen frames,
//!
//! and scores predictions with [Recall@K and mean Recall@K](evaluation).
//!
//! ```
//! use hypersgg::prelude::*;
//!
//! let set = generate_synthetic(&SynthConfig { num_videos: 4, frames_per_video: 30, seed: 1, ..Default::default() })?;
//! let counts = count_transitions(&set.vocab, &set.videos)?;
//! let pg = build_procedural_graph(&counts);
//! let h = unify_hypergraph(&set.videos, &pg)?;
//! let h2 = random_walk_construct(&h, &WalkConfig::default());
//! assert!(h2.edge_count() >= h.edge_count());
//! # Ok::<(), hypersgg::Error>(())
//! ```

pub mod anticipation;
pub mod error;
pub mod evaluation;
pub mod hypergraph;
pub mod ingest;
pub mod jsonfmt;
pub mod model;
pub mod procedural;
pub mod rng;

pub use error::{Error, Result};

/// Everything needed for the common pipeline.
pub mod prelude {
    pub use crate::anticipation::{
        default_compatibility, predict_future, split_by_fraction, target_frames, AnticipationConfig, Candidate,
        CompatMode, Compatibility, Horizon, ObservedCompat, PredictedGraph, PredictionRecord,
    };
    pub use crate::error::{Error, Result};
    pub use crate::evaluation::{
        evaluate, mean_recall_at_k, nll_objective, recall_at_k, ConstraintMode, EvalFrame, MetricReport,
        RecallConfig, Task,
    };
    pub use crate::hypergraph::{
        incident_hyperedges, random_walk_construct, random_walk_traced, unify_hypergraph, EdgeOrigin, HyperNode,
        Hypergraph, WalkConfig,
    };
    pub use crate::ingest::{generate_synthetic, load_annotations, AnnotationSet, SynthConfig};
    pub use crate::model::{
        validate_annotation, EntityId, EntityInstance, FrameSceneGraph, PredicateId, PredicateVocab,
        RelationshipTriplet, VideoAnnotation,
    };
    pub use crate::procedural::{
        anticipate_horizon, anticipate_next, build_procedural_graph, count_transitions, HorizonMode,
        NextRelationship, ProceduralGraph,
    };
}

/// Keeps the guide's snippets compiling.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/annotations.md")]
    mod annotations {}
    #[doc = include_str!("../../../book/src/procedural-graph.md")]
    mod procedural_graph {}
    #[doc = include_str!("../../../book/src/hypergraph.md")]
    mod hypergraph {}
    #[doc = include_str!("../../../book/src/anticipation.md")]
    mod anticipation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
