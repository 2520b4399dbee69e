use std::collections::HashSet;
use std::path::Path;

use idmr_core::encoder::checkpoint::{load_checkpoint, save_checkpoint};
use idmr_core::encoder::{Encoder, ImageFeaturizer, TextFeaturizer};
use idmr_core::evalbench::{
    build_curated_tasks, build_instance_tasks, build_location_tasks, evaluate, read_sequences,
    tasks::read_curated_pairs, BenchConfig,
};
use idmr_core::index::{build_index, load_store, save_store, search_topk};
use idmr_core::jsonl::{read_json, read_jsonl, write_json, write_jsonl};
use idmr_core::manifest::{read_manifest, validate_manifest};
use idmr_core::raster::ImageRoot;
use idmr_core::synth::coco::load_coco;
use idmr_core::synth::{
    synthesize_split, CaptionProvider, FileProvider, FileScorer, Scorer, SynthConfig, SyntheticScorer,
    TemplateProvider,
};
use idmr_core::synthworld::{gen_world, write_world, WorldConfig};
use idmr_core::trainer::{featurize_triplets, train_with};
use idmr_core::{BBox, Error, ImageRef, Result, RetrievalTask, TrainerConfig};
use log::info;

use crate::args::*;

/// Parses a `BUILTIN` or `file:PATH` choice.
fn plugin_choice<'a>(choice: &'a str, builtin: &str, what: &str) -> Result<Option<&'a Path>> {
    if choice == builtin {
        return Ok(None);
    }
    match choice.strip_prefix("file:") {
        Some(p) if !p.is_empty() => Ok(Some(Path::new(p))),
        _ => Err(Error::Validation(format!("{what} must be `{builtin}` or `file:PATH`, got {choice:?}"))),
    }
}

fn caption_provider(choice: &str) -> Result<Box<dyn CaptionProvider>> {
    Ok(match plugin_choice(choice, "template", "--captions")? {
        None => Box::new(TemplateProvider),
        Some(p) => Box::new(FileProvider::open(p)?),
    })
}

fn encoder(checkpoint: &Path, image_root: &Path) -> Result<Encoder> {
    let params = load_checkpoint(checkpoint)?;
    Ok(Encoder::new(params, ImageFeaturizer::new(ImageRoot::new(image_root))))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let scorer: Box<dyn Scorer> = match plugin_choice(&a.scorer, "synthetic", "--scorer")? {
        None => Box::new(SyntheticScorer),
        Some(p) => Box::new(FileScorer::open(p)?),
    };
    let captions = caption_provider(&a.captions)?;
    let annotations = load_coco(&a.annotations, a.split)?;
    if !annotations.rejected.is_empty() {
        log::warn!("{} annotations rejected", annotations.rejected.len());
        for r in &annotations.rejected {
            log::debug!("annotation {}: {}", r.index, r.error);
        }
    }
    let config = SynthConfig {
        split: a.split,
        threshold: a.threshold,
        cap: a.cap,
        limit: a.limit,
        seed: a.seed,
        source: a.source,
    };
    let report = synthesize_split(
        &annotations.records,
        &config,
        scorer.as_ref(),
        captions.as_ref(),
        &ImageRoot::new(&a.image_root),
        &a.out,
    )?;
    info!(
        "{} records, {} scored, {} kept by filter, {} after balance, {} written to {}",
        report.input_records,
        report.scored,
        report.kept_after_filter,
        report.kept_after_balance,
        report.manifest.count,
        a.out.display()
    );
    if let Some(path) = a.report {
        write_json(&path, &report)?;
    }
    Ok(())
}

pub fn world(a: WorldArgs) -> Result<()> {
    let mut config: WorldConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => WorldConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let world = gen_world(&config)?;
    write_world(&world, &a.out_dir)?;
    info!(
        "{} images of {} instances written to {}",
        world.images.len(),
        config.n_instances,
        a.out_dir.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = TrainerConfig {
        temperature: a.temperature,
        lr0: a.lr,
        total_steps: a.total_steps,
        batch_size: a.batch,
        chunk_size: a.chunk,
        epochs: a.epochs,
        seed: a.seed,
        embed_dim: a.embed_dim,
        hidden_dim: a.hidden_dim,
        text_dim: a.text_dim,
    };
    config.validate()?;
    let triplets = read_manifest(&a.manifest)?;
    let examples = featurize_triplets(
        &triplets,
        &ImageFeaturizer::new(ImageRoot::new(&a.image_root)),
        &TextFeaturizer::new(config.text_dim),
    )?;
    info!("training on {} triplets", examples.len());
    let mut log_lines = Vec::new();
    let (params, log) = train_with(&config, &examples, |s| {
        if s.step % 50 == 0 {
            info!("step {} loss {:.4} lr {:.3e}", s.step, s.loss, s.lr);
        }
        log_lines.push(s.clone());
    })?;
    if let Some(last) = log.steps.last() {
        info!("finished {} steps, final loss {:.4}", log.steps.len(), last.loss);
    }
    save_checkpoint(&params, &a.checkpoint)?;
    if let Some(path) = a.log {
        write_jsonl(&path, &log_lines)?;
    }
    Ok(())
}

pub fn index(a: IndexArgs) -> Result<()> {
    let enc = encoder(&a.checkpoint, &a.image_root)?;
    let triplets = read_manifest(&a.manifest)?;
    let mut seen = HashSet::new();
    let candidates: Vec<&ImageRef> = triplets
        .iter()
        .map(|t| &t.positive_image)
        .filter(|r| seen.insert(r.key()))
        .collect();
    use rayon::prelude::*;
    let embeddings = candidates
        .par_iter()
        .map(|r| enc.encode_candidate(r))
        .collect::<Result<Vec<_>>>()?;
    let store = build_index(&embeddings, candidates.iter().map(|r| r.key()).collect())?;
    save_store(&store, &a.out)?;
    info!("indexed {} candidates into {}", store.len(), a.out.display());
    Ok(())
}

fn parse_query_ref(image: &str, bbox: Option<&str>) -> Result<ImageRef> {
    let base: ImageRef = if image.trim_start().starts_with('{') {
        serde_json::from_str(image).map_err(|e| Error::Validation(format!("--query-image: {e}")))?
    } else {
        ImageRef::full(image)
    };
    match (base, bbox) {
        (r, None) => Ok(r),
        (ImageRef::Full { image, features }, Some(b)) => Ok(ImageRef::Crop {
            image,
            bbox: BBox::parse_key(b)?,
            features,
        }),
        (_, Some(_)) => Err(Error::Validation("--query-bbox needs a full-image query".into())),
    }
}

pub fn search(a: SearchArgs) -> Result<()> {
    let store = load_store(&a.store)?;
    let enc = encoder(&a.checkpoint, &a.image_root)?;
    let query = parse_query_ref(&a.query_image, a.query_bbox.as_deref())?;
    let q = enc.encode_query(&query, &a.query_text)?;
    let hits = search_topk(&store, &q, a.k)?;
    for (rank, h) in hits.iter().enumerate() {
        println!(
            "{}",
            serde_json::json!({"rank": rank + 1, "id": h.id, "index": h.index, "score": h.score})
        );
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let config = BenchConfig {
        frames_per_object: a.frames,
        location_pool: a.pool,
        query_image_mode: a.mode,
        seed: a.seed,
    };
    let tasks: Vec<RetrievalTask> = if let Some(path) = &a.curated {
        build_curated_tasks(&read_curated_pairs(path)?, a.mode)?
    } else {
        let path = a.sequences.as_ref().expect("clap requires sequences or curated");
        let dataset = read_sequences(path)?;
        let mut tasks = Vec::new();
        for s in &a.subtasks {
            match s.as_str() {
                "instance" => tasks.extend(build_instance_tasks(&dataset, &config)?),
                "location" => {
                    let captions = caption_provider(&a.captions)?;
                    let (loc, skipped) = build_location_tasks(&dataset, captions.as_ref(), &config)?;
                    if !skipped.is_empty() {
                        log::warn!("{} location tasks skipped for missing captions", skipped.len());
                    }
                    tasks.extend(loc);
                }
                other => {
                    return Err(Error::Validation(format!(
                        "unknown subtask {other:?}; expected instance or location"
                    )))
                }
            }
        }
        tasks
    };
    if tasks.is_empty() {
        return Err(Error::Validation("no tasks were built".into()));
    }
    write_jsonl(&a.out, &tasks)?;
    info!("{} tasks written to {}", tasks.len(), a.out.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let tasks: Vec<RetrievalTask> = read_jsonl(&a.tasks)?;
    let enc = encoder(&a.checkpoint, &a.image_root)?;
    let ev = evaluate(&tasks, &enc, a.k)?;
    for (s, m) in &ev.report.subtasks {
        info!(
            "{s}: P@1 {:.4} R@{} {:.4} over {} tasks",
            m.precision_at_1, m.k, m.recall_at_k, m.n_tasks
        );
    }
    write_json(&a.report, &ev.report)?;
    if let Some(path) = a.dump_ranks {
        write_jsonl(&path, &ev.ranks)?;
    }
    Ok(())
}

/// Returns the number of violations found.
pub fn validate(a: ValidateArgs) -> Result<usize> {
    let violations = validate_manifest(&a.manifest)?;
    for v in &violations {
        println!("{v}");
    }
    Ok(violations.len())
}
