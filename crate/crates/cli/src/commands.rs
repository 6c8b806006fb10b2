use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use hypersgg::anticipation::{
    predict_future, predictions_from_jsonl, predictions_to_jsonl, split_by_fraction, target_frames,
    AnticipationConfig, CompatMode, Horizon, ObservedCompat, PredictedGraph, PredictionRecord, DEFAULT_FRACTION,
};
use hypersgg::evaluation::{evaluate as score, Aggregation, ConstraintMode, EvalFrame, MetricReport, RecallConfig, Task};
use hypersgg::hypergraph::{random_walk_traced, unify_hypergraph, WalkConfig, DEFAULT_NUM_WALKS, DEFAULT_WALK_LENGTH};
use hypersgg::ingest::{generate_synthetic, load_annotations, AnnotationSet, SynthConfig};
use hypersgg::model::{FrameSceneGraph, PredicateVocab, VideoAnnotation};
use hypersgg::procedural::{build_procedural_graph, build_procedural_graph_smoothed, count_transitions, ProceduralGraph};

use crate::config::{load_file_config, overlay, parse_horizon, read_text, resolve_seed};
use crate::output::{write_atomic, write_manifest, ManifestBuilder};
use crate::{
    AggregationArg, AnticipateArgs, BuildHgArgs, BuildPgArgs, CliError, CompatArg, ConstraintArg, EvaluateArgs,
    FormatArg, GenSynthArgs, TaskArg, ValidateArgs,
};

fn load_one(path: &Path) -> Result<AnnotationSet, CliError> {
    load_annotations(path).map_err(|e| match e {
        hypersgg::Error::Validation(items) => {
            CliError::Data(format!("{}: {} violation(s)\n  {}", path.display(), items.len(), items.join("\n  ")))
        }
        hypersgg::Error::Io(io) => CliError::Data(format!("reading {}: {io}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

/// Load every file and check they share one vocabulary and distinct video ids.
fn load_all(paths: &[PathBuf]) -> Result<(PredicateVocab, Vec<VideoAnnotation>), CliError> {
    let mut vocab: Option<(PredicateVocab, &Path)> = None;
    let mut videos = Vec::new();
    let mut ids = HashSet::new();
    for path in paths {
        let set = load_one(path)?;
        match &vocab {
            None => vocab = Some((set.vocab.clone(), path)),
            Some((v, first)) if *v != set.vocab => {
                return Err(CliError::Data(format!(
                    "vocabulary mismatch: {} has {:?} but {} has {:?}",
                    first.display(),
                    v.names(),
                    path.display(),
                    set.vocab.names()
                )))
            }
            Some(_) => {}
        }
        for v in set.videos {
            if !ids.insert(v.video_id.clone()) {
                return Err(CliError::Data(format!("video {:?} appears in more than one input", v.video_id)));
            }
            videos.push(v);
        }
    }
    let (vocab, _) = vocab.ok_or_else(|| CliError::Usage("at least one --input is required".into()))?;
    Ok((vocab, videos))
}

fn load_pg(path: &Path) -> Result<ProceduralGraph, CliError> {
    ProceduralGraph::from_json(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn check_fraction(f: f64) -> Result<f64, CliError> {
    AnticipationConfig::new(f).map(|c| c.fraction()).map_err(CliError::from)
}

fn paths(ps: &[PathBuf]) -> Vec<&Path> {
    ps.iter().map(PathBuf::as_path).collect()
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let mut failed = 0;
    for path in &args.input {
        match load_one(path) {
            Ok(set) => println!("ok {} ({} videos, {} predicates)", path.display(), set.videos.len(), set.vocab.len()),
            Err(e) => {
                failed += 1;
                eprintln!("{e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} file(s) failed validation", args.input.len())));
    }
    Ok(())
}

pub fn gen_synth(args: GenSynthArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start("gen-synth");
    let patch = match &args.config {
        Some(p) => serde_json::from_str::<Value>(&read_text(p)?)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?,
        None => Value::Null,
    };
    let file_seed = patch.get("seed").and_then(Value::as_u64);
    let seed = resolve_seed(args.seed, file_seed)?;
    let mut merged = overlay(&SynthConfig::default(), patch)?;
    let flags = [
        ("num_videos", args.num_videos.map(Value::from)),
        ("frames_per_video", args.frames.map(Value::from)),
        ("num_entities", args.entities.map(Value::from)),
        ("num_pairs", args.pairs.map(Value::from)),
        ("vocab_size", args.vocab_size.map(Value::from)),
        ("p_stay", args.p_stay.map(Value::from)),
        ("dominant", args.dominant.map(Value::from)),
    ];
    let obj = merged.as_object_mut().ok_or_else(|| CliError::Internal("config is not an object".into()))?;
    for (k, v) in flags {
        if let Some(v) = v {
            obj.insert(k.to_string(), v);
        }
    }
    obj.insert("seed".into(), Value::from(seed));
    let cfg: SynthConfig = hypersgg::ingest::parse_json(&merged.to_string()).map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let set = generate_synthetic(&cfg)?;
    write_atomic(&args.out, set.to_json()?.as_bytes())?;
    let inputs: Vec<&Path> = args.config.iter().map(PathBuf::as_path).collect();
    let m = manifest.finish(&cfg, vec![seed], &inputs, &[&args.out], Value::Null);
    write_manifest(&args.out, &m)?;
    eprintln!("wrote {} videos to {}", set.videos.len(), args.out.display());
    Ok(())
}

pub fn build_pg(args: BuildPgArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start("build-pg");
    let file = load_file_config(args.config.as_deref())?;
    let alpha = args.smoothing_alpha.or(file.smoothing_alpha);
    if let Some(a) = alpha {
        if !(a.is_finite() && a >= 0.0) {
            return Err(CliError::Usage(format!("--smoothing-alpha must be a non-negative number, got {a}")));
        }
    }
    let fraction = args.fraction.or(file.fraction).map(check_fraction).transpose()?;
    let (vocab, videos) = load_all(&args.input)?;
    let videos = match fraction {
        Some(f) => videos
            .iter()
            .map(|v| split_by_fraction(v, f).map(|(obs, _)| obs))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?,
        None => videos,
    };
    if videos.is_empty() {
        eprintln!("warning: no videos in input; every predicate is absorbing");
    }
    let counts = count_transitions(&vocab, &videos)?;
    let pg = match alpha {
        Some(a) if a > 0.0 => build_procedural_graph_smoothed(&counts, a),
        _ => build_procedural_graph(&counts),
    };
    if !pg.absorbing().is_empty() && !videos.is_empty() {
        let names: Vec<&str> = pg.absorbing().iter().filter_map(|&p| vocab.name(p)).collect();
        eprintln!("note: absorbing predicates (no observed outgoing transition): {}", names.join(", "));
    }
    write_atomic(&args.out, pg.to_json()?.as_bytes())?;
    let config = json!({ "smoothing_alpha": alpha, "fraction": fraction });
    let extra = json!({ "transitions": counts.total(), "videos": videos.len() });
    let m = manifest.finish(&config, vec![], &paths(&args.input), &[&args.out], extra);
    write_manifest(&args.out, &m)?;
    Ok(())
}

pub fn build_hg(args: BuildHgArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start("build-hg");
    let file = load_file_config(args.config.as_deref())?;
    let num_walks = args.num_walks.or(file.num_walks).unwrap_or(DEFAULT_NUM_WALKS);
    let walk_length = args.walk_length.or(file.walk_length).unwrap_or(DEFAULT_WALK_LENGTH);
    let seed = resolve_seed(args.seed, file.seed)?;
    let mut walk = WalkConfig::new(num_walks, walk_length, seed)?;
    walk.weight_transitions = args.weighted_walks || file.weighted_walks.unwrap_or(false);

    let (vocab, videos) = load_all(&args.input)?;
    let pg = load_pg(&args.pg)?;
    if pg.vocab() != &vocab {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: annotations have {:?} but {} has {:?}",
            vocab.names(),
            args.pg.display(),
            pg.vocab().names()
        )));
    }
    let base = unify_hypergraph(&videos, &pg)?;
    let outcome = random_walk_traced(&base, &walk);
    let sampled = outcome.added.len();
    write_atomic(&args.out, outcome.graph.to_json()?.as_bytes())?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(dot) = &args.dot {
        write_atomic(dot, outcome.graph.to_dot().as_bytes())?;
        outputs.push(dot);
    }
    println!(
        "nodes {} edges {} sampled {} (of {} walks)",
        outcome.graph.node_count(),
        outcome.graph.edge_count(),
        sampled,
        walk.num_walks()
    );
    let mut inputs = paths(&args.input);
    inputs.push(&args.pg);
    let extra = json!({
        "nodes": outcome.graph.node_count(),
        "edges": outcome.graph.edge_count(),
        "sampled_hyperedges": sampled,
    });
    let m = manifest.finish(&walk, vec![seed], &inputs, &outputs, extra);
    write_manifest(&args.out, &m)?;
    Ok(())
}

pub fn anticipate(args: AnticipateArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start("anticipate");
    let file = load_file_config(args.config.as_deref())?;
    let fraction = check_fraction(args.fraction.or(file.fraction).unwrap_or(DEFAULT_FRACTION))?;
    let horizon = match (&args.horizon, &file.horizon) {
        (Some(s), _) => parse_horizon(s)?,
        (None, Some(h)) => h.resolve()?,
        (None, None) => Horizon::ToEnd,
    };
    let mut cfg = AnticipationConfig::new(fraction)?;
    cfg.horizon = horizon;
    cfg.persistence = args.persistence || file.persistence.unwrap_or(false);
    cfg.top_k_candidates = args.top_k_candidates.or(file.top_k_candidates);
    if cfg.top_k_candidates == Some(0) {
        return Err(CliError::Usage("--top-k-candidates must be at least 1".into()));
    }
    let compat = args.compat.or(file.compat);

    let (vocab, videos) = load_all(&args.input)?;
    let pg = load_pg(&args.pg)?;
    if pg.vocab() != &vocab {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: annotations have {:?} but {} has {:?}",
            vocab.names(),
            args.pg.display(),
            pg.vocab().names()
        )));
    }
    let mut records = Vec::new();
    for v in &videos {
        let (observed, _) = split_by_fraction(v, fraction).map_err(|e| CliError::Data(format!("{}: {e}", v.video_id)))?;
        let oc;
        let c: Option<&dyn hypersgg::anticipation::Compatibility> = match compat {
            None | Some(CompatArg::Uniform) => None,
            Some(CompatArg::Frequency) => {
                oc = ObservedCompat::new(&observed, CompatMode::Frequency);
                Some(&oc)
            }
        };
        let graphs = predict_future(&observed, &pg, &cfg, c)?;
        records.extend(graphs.iter().map(|g| PredictionRecord::from_predicted(&v.video_id, g)));
    }
    write_atomic(&args.out, predictions_to_jsonl(&records)?.as_bytes())?;
    let horizon_value = match horizon {
        Horizon::Frames(n) => json!(n),
        Horizon::ToEnd => json!("end"),
    };
    let config = json!({
        "fraction": fraction,
        "horizon": horizon_value,
        "persistence": cfg.persistence,
        "top_k_candidates": cfg.top_k_candidates,
        "compat": compat,
    });
    let mut inputs = paths(&args.input);
    inputs.push(&args.pg);
    let m = manifest.finish(&config, vec![], &inputs, &[&args.out], json!({ "records": records.len() }));
    write_manifest(&args.out, &m)?;
    eprintln!("wrote {} prediction records to {}", records.len(), args.out.display());
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start("evaluate");
    let file = load_file_config(args.config.as_deref())?;
    let task = match args.task.or(file.task).unwrap_or(TaskArg::Sga) {
        TaskArg::Sgg => Task::Sgg,
        TaskArg::Sga => Task::Sga,
    };
    let constraint = match args.constraint.or(file.constraint).unwrap_or(ConstraintArg::With) {
        ConstraintArg::With => ConstraintMode::With,
        ConstraintArg::No => ConstraintMode::No,
    };
    let ks = args.k.clone().or(file.k.clone()).unwrap_or_else(|| task.default_k_values());
    let mut rc = RecallConfig::new(ks, constraint)?;
    rc.aggregation = match args.aggregation.or(file.aggregation).unwrap_or(AggregationArg::Frame) {
        AggregationArg::Frame => Aggregation::FrameAveraged,
        AggregationArg::Video => Aggregation::VideoPooled,
    };
    let format = args.format.or(file.format).unwrap_or(FormatArg::Json);
    let fraction = args.fraction.or(file.fraction).map(check_fraction).transpose()?;
    let horizon = match (&args.horizon, &file.horizon) {
        (Some(s), _) => parse_horizon(s)?,
        (None, Some(h)) => h.resolve()?,
        (None, None) => Horizon::ToEnd,
    };
    if fraction.is_none() && args.horizon.is_some() {
        return Err(CliError::Usage("--horizon needs --fraction when evaluating".into()));
    }

    let (vocab, videos) = load_all(&args.input)?;
    let records = predictions_from_jsonl(&read_text(&args.predictions)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.predictions.display())))?;
    let known: HashSet<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
    let mut preds: HashMap<(&str, usize), PredictedGraph> = HashMap::new();
    for r in &records {
        if !known.contains(r.video_id.as_str()) {
            return Err(CliError::Data(format!(
                "{}: prediction for unknown video {:?}",
                args.predictions.display(),
                r.video_id
            )));
        }
        if preds.insert((r.video_id.as_str(), r.frame_index), r.to_predicted()).is_some() {
            return Err(CliError::Data(format!(
                "{}: duplicate prediction for video {:?} frame {}",
                args.predictions.display(),
                r.video_id,
                r.frame_index
            )));
        }
    }

    let mut placeholders: HashMap<(&str, usize), PredictedGraph> = HashMap::new();
    let mut selected: Vec<(&str, &FrameSceneGraph)> = Vec::new();
    for v in &videos {
        let frames: Vec<&FrameSceneGraph> = match fraction {
            Some(f) => {
                let (observed, _) = split_by_fraction(v, f).map_err(|e| CliError::Data(format!("{}: {e}", v.video_id)))?;
                let targets: HashSet<usize> = target_frames(&observed, horizon).into_iter().collect();
                v.frames.iter().filter(|fr| targets.contains(&fr.frame_index)).collect()
            }
            None => v.frames.iter().collect(),
        };
        for fr in frames {
            if !preds.contains_key(&(v.video_id.as_str(), fr.frame_index)) {
                placeholders.insert((v.video_id.as_str(), fr.frame_index), PredictedGraph::new(fr.frame_index, vec![]));
            }
            selected.push((v.video_id.as_str(), fr));
        }
    }
    let eval_frames: Vec<EvalFrame<'_>> = selected
        .iter()
        .map(|&(vid, gt)| {
            let key = (vid, gt.frame_index);
            let pred = preds.get(&key).or_else(|| placeholders.get(&key)).expect("every selected frame has a prediction");
            EvalFrame { video_id: vid, gt, pred, pred_boxes: None }
        })
        .collect();
    let report: MetricReport = score(&eval_frames, task, &rc, &vocab);
    let text = match format {
        FormatArg::Json => report.to_json()?,
        FormatArg::Csv => report.to_csv(),
        FormatArg::Table => report.to_table(),
    };
    match &args.out {
        Some(out) => {
            write_atomic(out, text.as_bytes())?;
            let config = json!({
                "task": task,
                "k": rc.k_values(),
                "constraint": constraint,
                "aggregation": rc.aggregation,
                "format": format,
                "fraction": fraction,
            });
            let mut inputs = paths(&args.input);
            inputs.push(&args.predictions);
            let m = manifest.finish(&config, vec![], &inputs, &[out], Value::Null);
            write_manifest(out, &m)?;
            if format != FormatArg::Table {
                print!("{}", report.to_table());
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}
