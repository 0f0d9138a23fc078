mod common;

use std::fs;
use std::path::Path;

use common::*;
use varlab_core::runtime::{load_config, run, Config, RunError, RunReport};

fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    copy_fixture(&tmp.path().join("src"));
    tmp
}

fn config(dir: &Path, text: &str) -> Config {
    load_config(&format!("source_tree = src\noutput_dir = out\n{text}"), dir, &[]).unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/run_report.json")).unwrap()).unwrap()
}

const FE: &str = "analysis.preset = feature_effects\nbuild.extractor = kbuild\n";

#[test]
fn successful_run_reports_components_and_outputs() {
    let tmp = setup();
    let r: RunReport = run(&config(tmp.path(), &format!("{FE}analysis.output.intermediate_results = PcFinder\n"))).unwrap();
    assert_eq!((r.status.as_str(), r.exit_code), ("success", 0));
    assert_eq!(r.pipeline, "FeatureEffects(PcFinder(cmComponent(), bmComponent()))");
    assert_eq!((r.code_files, r.blocks), (12, 21));
    assert_eq!(r.extractor_invocations["code"], 12);
    assert_eq!(r.extractor_invocations["build"], 1);
    assert_eq!(r.extractor_invocations["vm"], 0);
    let names: Vec<&str> = r.components.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["FeatureEffects", "PcFinder", "bmComponent", "cmComponent"]);
    let cm = r.component("cmComponent").unwrap();
    assert_eq!((cm.source.as_str(), cm.items), ("extractor", 12));
    assert_eq!(r.component("PcFinder").unwrap().source, "analysis");
    assert_eq!(r.outputs, ["feature_effects.csv", "pc_finder.csv", "run.log", "run_report.json"]);

    let on_disk = report(tmp.path());
    assert_eq!(on_disk["status"], "success");
    assert_eq!(on_disk["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(on_disk["config_fingerprint"].as_str().unwrap().len(), 64);
    let log = fs::read_to_string(tmp.path().join("out/run.log")).unwrap();
    assert!(log.contains("pipeline FeatureEffects("), "{log}");
}

#[test]
fn json_output_carries_typed_columns() {
    let tmp = setup();
    run(&config(tmp.path(), "analysis.preset = metrics\nanalysis.output.format = json\n")).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/block_metrics.json")).unwrap()).unwrap();
    assert_eq!(doc["name"], "BlockMetrics");
    let kinds: Vec<&str> = doc["columns"].as_array().unwrap().iter().map(|c| c["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.len(), 4);
    assert_eq!(kinds[0], "text");
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[6], serde_json::json!(["src/driver.c", 7, 2, 20]));
}

#[test]
fn malformed_source_fails_extraction() {
    for jobs in [1, 4] {
        let tmp = setup();
        fs::write(tmp.path().join("src/src/bad.c"), "int a;\n#if (defined(CONFIG_NET)\n#endif\n").unwrap();
        let err = run(&config(tmp.path(), &format!("{FE}jobs = {jobs}\n"))).unwrap_err();
        assert!(matches!(err.error, RunError::Extraction { .. }), "{:?}", err.error);
        assert_eq!(err.error.exit_code(), 2);
        assert_eq!(err.error.component(), Some("cmComponent"));
        assert!(err.error.to_string().contains("src/bad.c"), "{}", err.error);
        let rep = err.report.expect("report written");
        assert_eq!((rep.status.as_str(), rep.exit_code), ("failed", 2));
        assert_eq!(rep.failing_component.as_deref(), Some("cmComponent"));
        assert!(result_files(&tmp.path().join("out")).is_empty());
        assert_eq!(report(tmp.path())["status"], "failed");
    }
}

#[test]
fn missing_cache_is_an_extraction_error() {
    let tmp = setup();
    let err = run(&config(tmp.path(), &format!("{FE}build.cache.read = true\n"))).unwrap_err();
    assert_eq!(err.error.exit_code(), 2);
    assert_eq!(err.error.component(), Some("bmComponent (cache)"));
}

#[test]
fn pipelines_mix_cached_and_fresh_inputs() {
    let tmp = setup();
    run(&config(tmp.path(), &format!("{FE}code.cache.write = true\n"))).unwrap();
    let first = result_files(&tmp.path().join("out"));
    let r = run(&config(tmp.path(), &format!("{FE}code.cache.read = true\n"))).unwrap();
    assert_eq!(r.extractor_invocations["code"], 0);
    assert_eq!(r.extractor_invocations["build"], 1);
    assert_eq!(r.component("cmComponent").unwrap().source, "cache");
    assert_eq!(r.component("bmComponent").unwrap().source, "extractor");
    assert_eq!(result_files(&tmp.path().join("out")), first);

    // An edited source invalidates the code cache.
    fs::write(tmp.path().join("src/net/core.c"), "int core;\n").unwrap();
    let err = run(&config(tmp.path(), &format!("{FE}code.cache.read = true\n"))).unwrap_err();
    assert_eq!(err.error.exit_code(), 2);
    assert!(err.error.to_string().contains("extracted from different inputs"), "{}", err.error);
    let r = run(&config(tmp.path(), &format!("{FE}code.cache.read = true\ncache.ignore_fingerprint = true\n"))).unwrap();
    assert_eq!(r.blocks, 21);
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = setup();
    let typo = run(&config(tmp.path(), "analysis.pipeline = FeatureEfects(PcFinder(cmComponent()))\n")).unwrap_err();
    assert!(matches!(typo.error, RunError::Dsl(_)));
    assert_eq!(typo.error.exit_code(), 1);
    assert_eq!(typo.error.to_string(), "pipeline: column 1: unknown component `FeatureEfects`");

    let arity = run(&config(tmp.path(), "analysis.pipeline = BlockMetrics(cmComponent(), cmComponent())\n")).unwrap_err();
    assert_eq!(arity.error.exit_code(), 1);

    let missing = run(&config(tmp.path(), "analysis.pipeline = DeadBlocks(cmComponent(), bmComponent(), vmComponent())\nbuild.extractor = kbuild\n")).unwrap_err();
    assert!(matches!(missing.error, RunError::MissingInput { .. }));
    assert_eq!(missing.error.exit_code(), 1);
    // Nothing runs, so nothing is written.
    assert!(!tmp.path().join("out").exists());

    let bad = load_config("source_tree = src\noutput_dir = out\nbuild.extractor = gnumake\n", tmp.path(), &[]);
    assert!(bad.is_err());
}

#[test]
fn unreadable_source_tree_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run(&config(tmp.path(), "analysis.preset = metrics\n")).unwrap_err();
    assert!(matches!(err.error, RunError::Io { .. }));
    assert_eq!(err.error.exit_code(), 4);
    assert_eq!(err.report.unwrap().exit_code, 4);
}

#[test]
fn dead_blocks_with_variability_model() {
    let tmp = setup();
    let r = run(&config(tmp.path(), "analysis.preset = dead_blocks\nbuild.extractor = kbuild\nvm.extractor = kconfig\njobs = 3\n")).unwrap();
    assert_eq!(r.extractor_invocations["vm"], 1);
    let csv = fs::read_to_string(tmp.path().join("out/dead_blocks.csv")).unwrap();
    let dead: Vec<&str> = csv.lines().filter(|l| l.contains(",\"Dead\",")).collect();
    assert_eq!(dead.len(), 1, "{csv}");
    assert!(dead[0].starts_with("\"usb/storage.c\",3"), "{csv}");
}
