//! Batch workflow through the public API: dataset on disk, inference,
//! outputs, reloading and evaluation.

use elseg_core::annotate::{parse_coco, COCO_FILE};
use elseg_core::autoenc::{build_model, decode_model, encode_model, Scale};
use elseg_core::config::PipelineConfig;
use elseg_core::evaluate::{evaluate, load_truth};
use elseg_core::pipeline::{discover_inputs, read_records, run_infer, write_outputs, TimingReport, TIMING_FILE};
use elseg_core::synthcell::{generate_dataset, write_dataset, CellSpec};

#[test]
fn infer_write_reload_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cells = generate_dataset(12, 0.5, &CellSpec::desk(0), 3).unwrap();
    write_dataset(&data, &cells, 3).unwrap();

    let inputs = discover_inputs(&data).unwrap();
    assert_eq!(inputs.len(), 12);
    assert_eq!(inputs[0].id, "cell_00000");

    // Untrained weights still exercise every stage.
    let model = build_model(Scale::Desk, 1);
    let mut cfg = PipelineConfig::desk();
    cfg.workers = 3;
    let report = run_infer(&model, &cfg, &inputs).unwrap();
    assert_eq!(report.timing.failures, 0);
    let ids: Vec<&str> = report.records.iter().map(|r| r.image_id.as_str()).collect();
    let expected: Vec<&str> = inputs.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, expected);

    let out = dir.path().join("out");
    write_outputs(&out, &report).unwrap();
    let back = read_records(&out).unwrap();
    assert_eq!(back, report.records);
    let timing = TimingReport::load(out.join(TIMING_FILE)).unwrap();
    assert_eq!(timing.images, 12);
    let (coco, _) = parse_coco(&std::fs::read_to_string(out.join(COCO_FILE)).unwrap()).unwrap();
    assert_eq!(coco.len(), 12);

    let eval = evaluate(&back, &load_truth(&data).unwrap()).unwrap();
    assert_eq!(eval.per_image.len(), 12);
    assert!((0.0..=1.0).contains(&eval.mean_iou));
    let with_cost = eval.with_cost(&timing, &cfg.cost).unwrap();
    assert_eq!(with_cost.cost.unwrap().n_images, 12);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cells = generate_dataset(8, 1.0, &CellSpec::desk(0), 4).unwrap();
    write_dataset(dir.path(), &cells, 4).unwrap();
    let inputs = discover_inputs(dir.path()).unwrap();
    let model = build_model(Scale::Desk, 2);
    let polygons = |workers| {
        let cfg = PipelineConfig { workers, ..PipelineConfig::desk() };
        run_infer(&model, &cfg, &inputs)
            .unwrap()
            .records
            .into_iter()
            .map(|r| r.polygons)
            .collect::<Vec<_>>()
    };
    assert_eq!(polygons(1), polygons(4));
}

#[test]
fn missing_images_are_per_image_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cells = generate_dataset(3, 0.0, &CellSpec::desk(0), 5).unwrap();
    write_dataset(dir.path(), &cells, 5).unwrap();
    std::fs::remove_file(dir.path().join("images/cell_00001.png")).unwrap();
    let inputs = discover_inputs(dir.path()).unwrap();
    let report = run_infer(&build_model(Scale::Desk, 0), &PipelineConfig::desk(), &inputs).unwrap();
    assert_eq!((report.timing.images, report.timing.failures), (3, 1));
    assert_eq!(report.records.len(), 2);
    assert!(!report.all_failed());
    assert!(report.timing.outcomes[1].error.is_some());
}

#[test]
fn saved_model_segments_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cells = generate_dataset(4, 1.0, &CellSpec::desk(0), 6).unwrap();
    write_dataset(dir.path(), &cells, 6).unwrap();
    let inputs = discover_inputs(dir.path()).unwrap();
    let model = build_model(Scale::Desk, 3);
    let reloaded = decode_model(&encode_model(&model)).unwrap();
    let cfg = PipelineConfig::desk();
    let a = run_infer(&model, &cfg, &inputs).unwrap().records;
    let b = run_infer(&reloaded, &cfg, &inputs).unwrap().records;
    assert_eq!(
        a.iter().map(|r| &r.polygons).collect::<Vec<_>>(),
        b.iter().map(|r| &r.polygons).collect::<Vec<_>>()
    );
}
