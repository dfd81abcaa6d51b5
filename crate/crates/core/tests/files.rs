use std::fs;

use lossrate_core::analysis::{generalization_bound, BudgetForm};
use lossrate_core::{
    load_dataset, save_dataset, DataFormat, Error, LossDataset, LossRecord, ModelMeta,
};

fn sample() -> LossDataset {
    let records = vec![
        LossRecord::new("a", 0.25)
            .with_group("x")
            .with_grad_norm_sq(1.5),
        LossRecord::new("b", 0.1 + 0.2)
            .with_group("x")
            .with_grad_norm_sq(0.5),
        LossRecord::new("c", 1.0 / 3.0)
            .with_group("y")
            .with_grad_norm_sq(2.0),
    ];
    LossDataset::new("sample", records).unwrap()
}

#[test]
fn csv_and_jsonl_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("d.csv", DataFormat::Csv), ("d.jsonl", DataFormat::Jsonl)] {
        let path = dir.path().join(name);
        save_dataset(&sample(), &path, format).unwrap();
        let back = load_dataset(&path, format).unwrap();
        assert_eq!(back.records(), sample().records());
        assert_eq!(back.model_id(), "d");
    }
}

#[test]
fn jsonl_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(
        &path,
        "{\"sample_id\":\"a\",\"loss\":0.1}\n\n{\"sample_id\":\"b\",\"loss\":-1}\n",
    )
    .unwrap();
    match load_dataset(&path, DataFormat::Jsonl) {
        Err(Error::Validation { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bound_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("val.csv");
    let losses: Vec<String> = (0..200)
        .map(|i| format!("s{i},{}", (i % 7) as f64 * 0.1))
        .collect();
    fs::write(&path, format!("sample_id,loss\n{}\n", losses.join("\n"))).unwrap();
    let ds = load_dataset(&path, DataFormat::Csv).unwrap();
    let meta = ModelMeta::new(10, 1000, 0.05, 0.0).unwrap();
    let r = generalization_bound(&ds, &meta, None, BudgetForm::Stated).unwrap();
    assert!((r.s - 0.036889).abs() < 1e-6);
    assert!(r.upper_bound >= r.empirical_loss && r.upper_bound <= 2.0 * r.empirical_loss);
}
