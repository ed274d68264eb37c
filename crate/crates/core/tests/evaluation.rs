//! Evaluation of generated stories.

use std::sync::Arc;

use shotmem::backend::MockBackend;
use shotmem::conditioning::LatentShape;
use shotmem::eval::{evaluate_story, EvalConfig, EvalError};
use shotmem::provider::Providers;
use shotmem::script::parse_script;
use shotmem::{Pipeline, PipelineConfig, StoryResult, StoryScript};

fn script(n: usize) -> StoryScript {
    let prompts: Vec<String> = (0..n)
        .map(|i| format!("shot {i}: the market at noon"))
        .collect();
    let cut = vec![true; n];
    parse_script(
        &serde_json::json!({"story_name": "market", "story_overview": "a day at the market",
            "scenes": [{"scene_num": 1, "video_prompts": prompts, "cut": cut}]})
        .to_string(),
    )
    .unwrap()
}

fn generate(s: &StoryScript) -> StoryResult {
    let cfg = PipelineConfig {
        shape: LatentShape {
            c: 4,
            f: 2,
            h: 4,
            w: 4,
            s: 4,
        },
        ..PipelineConfig::default()
    };
    Pipeline::new(Arc::new(MockBackend::default()), Providers::mock(), cfg)
        .unwrap()
        .run_story(s)
        .unwrap()
}

#[test]
fn identical_clips_are_fully_consistent() {
    let s = script(5);
    let mut story = generate(&s);
    let clip = story.shots[0].frames.clone();
    for shot in &mut story.shots {
        shot.frames = clip.clone();
    }
    let r = evaluate_story(&story, &s, &Providers::mock(), &EvalConfig::default()).unwrap();
    assert!((r.consistency_overall - 1.0).abs() < 1e-6);
    assert!((r.consistency_top10 - 1.0).abs() < 1e-6);
}

#[test]
fn report_is_in_range_and_reproducible() {
    let s = script(6);
    let story = generate(&s);
    let p = Providers::mock();
    let cfg = EvalConfig::default();
    let a = evaluate_story(&story, &s, &p, &cfg).unwrap();
    let b = evaluate_story(&story, &s, &p, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    for v in [
        a.prompt_following_global,
        a.prompt_following_single,
        a.consistency_overall,
        a.consistency_top10,
    ] {
        assert!((-1.0..=1.0).contains(&v), "{v}");
    }
    assert!((0.0..=1.0).contains(&a.aesthetic_quality));
    assert_eq!(a.pair_table.len(), 15);
    assert_eq!(a.pair_table.iter().filter(|r| r.in_top_k).count(), 10);

    let mut csv = Vec::new();
    a.write_pair_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(
        text.starts_with("shot_a,shot_b,video_similarity,prompt_similarity,prompt_rank,in_top_k\n")
    );
    assert_eq!(text.lines().count(), 16);
}

#[test]
fn script_and_story_must_align() {
    let story = generate(&script(3));
    let err = evaluate_story(
        &story,
        &script(4),
        &Providers::mock(),
        &EvalConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, EvalError::LengthMismatch { .. }));
    let one = script(1);
    let err = evaluate_story(
        &generate(&one),
        &one,
        &Providers::mock(),
        &EvalConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err, EvalError::TooFewShots(1));
}
