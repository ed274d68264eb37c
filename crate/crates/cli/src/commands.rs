use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use shotmem::config::RunConfig;
use shotmem::eval::{evaluate_story, MetricsReport};
use shotmem::manifest::{BankManifest, RunDir, CONFIG_FILE, ERROR_FILE};
use shotmem::script::{parse_script, StoryScript};
use shotmem::{Frame, Pipeline, StoryResult};

use crate::exit::{self, IndexOutOfRange, UsageConfig};
use crate::{EvaluateArgs, GenerateArgs, InspectArgs, ValidateArgs};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageConfig(msg.into()).into()
}

fn read_script(path: &Path) -> Result<StoryScript> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read script {}: {e}", path.display())))?;
    parse_script(&text).with_context(|| format!("in script {}", path.display()))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Base config for `generate`: `--config`, else the run's stored config when
/// resuming, else defaults. Flags are applied on top.
fn generate_config(a: &GenerateArgs) -> Result<RunConfig> {
    let stored = a
        .out
        .as_ref()
        .map(|o| o.join(CONFIG_FILE))
        .filter(|p| a.resume && p.exists());
    let mut cfg = match (&a.config, stored) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(p)) => RunConfig::load(&p).context("loading the run's stored config")?,
        (None, None) => RunConfig::default(),
    };
    if let Some(s) = &a.script {
        cfg.script = Some(s.clone());
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    if let Some(seed) = a.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(b) = &a.backend {
        cfg.backend.apply_flag(b)?;
    }
    if let Some(p) = &a.providers {
        cfg.providers.apply_flag(p)?;
    }
    if !a.refs.is_empty() {
        cfg.references = a.refs.clone();
    }
    if cfg.script.is_none() && a.resume {
        if let Some(o) = &cfg.out {
            cfg.script = Some(o.join(shotmem::manifest::SCRIPT_FILE));
        }
    }
    cfg.script = cfg.script.as_deref().map(absolute);
    cfg.out = cfg.out.as_deref().map(absolute);
    cfg.references = cfg.references.iter().map(|p| absolute(p)).collect();
    cfg.validate()?;
    Ok(cfg)
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = generate_config(&a)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| usage("no output directory (--out or `out` in config)"))?;
    let run = RunDir::new(&out);
    let result = generate_into(&a, &cfg, &run);
    if let Err(e) = &result {
        let record = exit::record(e);
        let mut bytes = serde_json::to_vec_pretty(&record).expect("error record serializes");
        bytes.push(b'\n');
        if let Err(w) = run.write(ERROR_FILE, &bytes) {
            log::warn!("could not write {}: {w}", out.join(ERROR_FILE).display());
        }
    }
    result
}

fn generate_into(a: &GenerateArgs, cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let script_path = cfg
        .script
        .as_ref()
        .ok_or_else(|| usage("no script (--script or `script` in config)"))?;
    let script = read_script(script_path)?;
    let references: Vec<Frame> = cfg
        .references
        .iter()
        .map(|p| Frame::load_png(p).map_err(|e| usage(format!("reference image: {e}"))))
        .collect::<Result<_>>()?;
    let backend = cfg.backend.build()?;
    let providers = cfg.providers.build()?;
    let pipeline = Pipeline::new(backend, providers, cfg.pipeline.clone())?;

    let state = if a.resume {
        let state = run.load().context("loading the run to resume")?;
        if state.is_complete() {
            info!("run in {} is already complete", run.root().display());
        }
        state
    } else {
        if run.exists() {
            return Err(usage(format!(
                "{} already holds a run; pass --resume to continue it",
                run.root().display()
            )));
        }
        let state = pipeline
            .start(&script, &references)
            .map_err(|f| anyhow::Error::new(f.error))?;
        run.write_script(&script)?;
        run.write_config(&cfg.to_toml())?;
        run.persist(&state)?;
        state
    };

    let total = state.total_shots;
    let outcome = if a.resume {
        pipeline.resume_with_observer(state, &script, &mut |s| observe(run, s, total))
    } else {
        pipeline.advance(state, &script, &mut |s| observe(run, s, total))
    };
    match outcome {
        Ok(story) => {
            run.persist(&story)?;
            println!("{} shots in {}", story.shots.len(), run.root().display());
            Ok(())
        }
        Err(failure) => {
            let err = anyhow::Error::new(failure.error);
            if let Some(partial) = failure.partial {
                run.persist_with_status(&partial, Some(exit::record(&err)))
                    .context("saving partial run")?;
                log::warn!(
                    "saved {} completed shots; continue with --resume",
                    partial.shots.len()
                );
            }
            Err(err)
        }
    }
}

fn observe(run: &RunDir, story: &StoryResult, total: usize) -> Result<(), String> {
    run.persist(story).map_err(|e| e.to_string())?;
    let shot = story.shots.last().expect("observer runs after a shot");
    info!(
        "shot {}/{}: {} frames, f_m={}, {} keyframes kept, bank {}",
        shot.shot_index + 1,
        total,
        shot.frames.len(),
        shot.plan.f_m,
        shot.keyframes_selected.len(),
        story.final_bank.len()
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let run = RunDir::new(&a.run);
    let story = run.load_complete()?;
    let script = match &a.script {
        Some(p) => read_script(p)?,
        None => run.load_script()?,
    };
    let stored = run.path(CONFIG_FILE);
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None if stored.exists() => RunConfig::load(&stored)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &a.providers {
        cfg.providers.apply_flag(p)?;
    }
    let providers = cfg.providers.build()?;
    let report = evaluate_story(&story, &script, &providers, &cfg.evaluation)?;

    let out = a.out.unwrap_or(a.run);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let metrics = out.join("metrics.json");
    std::fs::write(&metrics, report.to_json())
        .with_context(|| format!("writing {}", metrics.display()))?;
    let table = out.join("pair_table.csv");
    let file =
        std::fs::File::create(&table).with_context(|| format!("writing {}", table.display()))?;
    report.write_pair_csv(file)?;
    println!("{}", MetricsReport::summary_header());
    println!("{}", report.summary_row());
    Ok(())
}

pub fn inspect_memory(a: InspectArgs) -> Result<()> {
    let run = RunDir::new(&a.run);
    let index = run.load_index()?;
    if a.shot >= index.completed_shots {
        return Err(IndexOutOfRange {
            index: a.shot,
            len: index.completed_shots,
        }
        .into());
    }
    let bank = run.bank_after(a.shot)?;
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&BankManifest::from_bank(&bank))?
        );
        return Ok(());
    }
    let cfg = bank.config();
    println!(
        "bank after shot {}: {}/{} frames, {} sinks",
        a.shot,
        bank.len(),
        cfg.capacity,
        bank.sink_count()
    );
    println!("seq  sink  source          score   max_sim  digest");
    let frames = bank.frames();
    for (i, f) in frames.iter().enumerate() {
        let source = if f.source_shot < 0 {
            format!("ref {}", f.source_frame)
        } else {
            format!("shot {} frame {}", f.source_shot, f.source_frame)
        };
        let score = f
            .aesthetic_score
            .map_or("-".to_string(), |s| format!("{s:.3}"));
        let max_sim = frames
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| g.embedding.cosine(&f.embedding))
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))))
            .map_or("-".to_string(), |s| format!("{s:.4}"));
        println!(
            "{:<4} {:<5} {:<15} {:>6} {:>8}  {}",
            f.insertion_seq,
            if f.is_sink { "yes" } else { "no" },
            source,
            score,
            max_sim,
            f.frame.digest().short()
        );
    }
    Ok(())
}

pub fn validate_script(a: ValidateArgs) -> Result<()> {
    let script = read_script(&a.script)?;
    println!(
        "{}: {} scenes, {} shots",
        script.story_name,
        script.scenes.len(),
        script.shot_count()
    );
    for shot in script.flatten_shots() {
        let mut prompt: String = shot.prompt.chars().take(72).collect();
        if prompt.len() < shot.prompt.len() {
            prompt.push_str("...");
        }
        println!(
            "  [{}] scene {} {:<8} {}",
            shot.global_index,
            shot.scene_num,
            if shot.is_cut { "cut" } else { "continue" },
            prompt
        );
    }
    for w in script.warnings() {
        println!("warning: {w}");
    }
    Ok(())
}
