use noncomp_core::pipeline::{run_synthetic, Workspace, FILTERED, RATINGS_CSV};
use noncomp_core::synthetic::{AnnotatorParams, ModelParams, SynthParams};
use noncomp_core::PipelineConfig;

#[test]
fn synthetic_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path(), PipelineConfig::default()).unwrap();
    let summaries = run_synthetic(
        &ws,
        &SynthParams::default(),
        &AnnotatorParams::default(),
        &ModelParams::default(),
    )
    .unwrap();
    for s in &summaries {
        println!("{s}");
    }
    let filter = summaries.iter().find(|s| s["stage"] == "study filter").unwrap();
    assert_eq!(filter["survivors"], 259);
    let gen2 = summaries.iter().find(|s| s["stage"] == "study gen --phase 2").unwrap();
    assert_eq!(gen2["items"], 1813);
    assert!(ws.path(FILTERED).is_file());
    assert!(ws.path(RATINGS_CSV).is_file());
}
