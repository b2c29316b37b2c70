use dconad::data::scoring_starts;
use dconad::data::{
    generate_synthetic, load_csv_dataset, write_csv_dataset, DiffOrder, Preprocessor, SynthSpec,
    WindowBatch,
};

#[test]
fn csv_round_trip_preserves_values_and_labels() {
    let (train, test, _) = generate_synthetic(&SynthSpec::default(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_csv_dataset(dir.path(), &train, &test).unwrap();
    let (train_back, test_back) = load_csv_dataset(dir.path()).unwrap();
    assert_eq!(train_back.values(), train.values());
    assert_eq!(test_back.values(), test.values());
    assert_eq!(test_back.labels(), test.labels());
}

#[test]
fn synthetic_data_depends_only_on_the_seed() {
    let spec = SynthSpec::default();
    let (a, b) = (
        generate_synthetic(&spec, 5).unwrap(),
        generate_synthetic(&spec, 5).unwrap(),
    );
    assert_eq!(a.1.values(), b.1.values());
    assert_eq!(a.2, b.2);
    assert_ne!(
        generate_synthetic(&spec, 6).unwrap().1.values(),
        a.1.values()
    );
}

/// Test windows are scaled with training statistics, and the differenced
/// stream matches the chosen order.
#[test]
fn test_split_uses_training_statistics() {
    let (train, test, _) = generate_synthetic(&SynthSpec::default(), 9).unwrap();
    for order in [DiffOrder::NormalizeThenDiff, DiffOrder::DiffThenNormalize] {
        let pre = Preprocessor::fit(&train, order).unwrap();
        let series = pre.prepare(&test).unwrap();
        for v in 0..test.dims() {
            let expected = (test.values()[v][17] - pre.original.mean[v]) / pre.original.scale[v];
            assert!((series.original[v][17] - expected).abs() <= 1e-12);
        }
        let starts = scoring_starts(series.len(), 32).unwrap();
        let batch = WindowBatch::from_starts(&series, &starts, 32).unwrap();
        assert_eq!(batch.windows.len(), starts.len());
        let w = &batch.windows[1];
        let dw = &batch.diff_windows[1];
        match order {
            DiffOrder::NormalizeThenDiff => {
                assert!((dw.get(0, 2) - (w.get(1, 2) - w.get(0, 2))).abs() <= 1e-12);
            }
            DiffOrder::DiffThenNormalize => {
                let stats = pre.differenced.as_ref().unwrap();
                let raw = test.values()[2][33] - test.values()[2][32];
                let expected = (raw - stats.mean[2]) / stats.scale[2];
                assert!((dw.get(0, 2) - expected).abs() <= 1e-12);
            }
        }
    }
}
