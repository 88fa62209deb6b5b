use detangle_core::classify::{accuracy, train_probe, ProbeKind, TrainConfig};
use detangle_core::dataset::{load_representation_set, write_representation_set};
use detangle_core::metrics::{evaluate, MetricConfig, MetricReport};
use detangle_core::synth::{generate, GeneratorKind, GeneratorSpec};
use detangle_core::FactorSchema;

#[test]
fn linear_probe_on_z0_reads_colour_at_three_quarters() {
    // replicated so the fixed epoch budget amounts to enough Adam steps
    let set = generate(&GeneratorSpec::new(GeneratorKind::ColourShapeA).exact(200)).unwrap();
    let features = set.feature_rows(&[0]);
    let model = train_probe(&features, set.factor(0), ProbeKind::Linear, &TrainConfig::default()).unwrap();
    let acc = accuracy(&model, &features, set.factor(0)).unwrap();
    // 6 of the 8 rows sit on the colour-consistent side of z0
    assert!((acc - 0.75).abs() <= 0.01, "accuracy {acc}");
}

#[test]
fn files_round_trip_through_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let set = generate(&GeneratorSpec::new(GeneratorKind::ColourShapeB)).unwrap();
    let (data, schema) = (dir.path().join("data.csv"), dir.path().join("schema.json"));
    write_representation_set(&set, &data, &schema).unwrap();
    let loaded = load_representation_set(&data, &schema).unwrap();
    assert_eq!(loaded.neurons(), set.neurons());
    assert_eq!(loaded.factors(), set.factors());

    let config = MetricConfig::default();
    let a = evaluate(&set, &config).unwrap();
    let b = evaluate(&loaded, &config).unwrap();
    assert_eq!(a, b);
    let back = MetricReport::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_representation_set(&dir.path().join("none.csv"), &dir.path().join("none.json")).unwrap_err();
    assert!(err.is_io(), "{err}");
}

#[test]
fn joint_code_leading_digit_is_single_neuron_readable() {
    let schema = FactorSchema::from_pairs([("size", 4), ("shape", 3)]).unwrap();
    let spec = GeneratorSpec::new(GeneratorKind::JointCode)
        .with_schema(schema)
        .exact(4)
        .with_noise(0.0);
    let set = generate(&spec).unwrap();
    let report = evaluate(&set, &MetricConfig { linear_probe: false, ..MetricConfig::default() }).unwrap();
    let snc = &report.per_factor.snc;
    // the leading factor carries the most information, takes z0, and its
    // values occupy contiguous runs of the cell index
    assert!((snc[0] - 1.0).abs() < 1e-12, "{snc:?}");
    assert!(snc[1].abs() < 1e-12, "{snc:?}");
    assert!(snc.iter().product::<f64>() < 1e-12);
}
