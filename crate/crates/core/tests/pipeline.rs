use std::collections::BTreeSet;

use insider_core::ae::{AeModel, TrainConfig};
use insider_core::detect::ThresholdPolicy;
use insider_core::ingest::{
    build_positions, derive_calendar, normalize_and_filter, parse_transactions, write_transactions, CalendarSpec,
    ColumnMap,
};
use insider_core::pca::PcaModel;
use insider_core::pipeline::{run, FittedModel, ModelFamily};
use insider_core::select::{scan_k, StabilityRule};
use insider_core::synth::{generate, ScenarioConfig, TruthLabel};
use insider_core::Error;

#[test]
fn csv_round_trip_feeds_the_pipeline() {
    let scenario = generate(&ScenarioConfig::small(2)).unwrap();
    let mut buf = Vec::new();
    write_transactions(&mut buf, &scenario.records).unwrap();
    let records = parse_transactions(buf.as_slice(), &ColumnMap::default()).unwrap();
    let spec = CalendarSpec {
        delta_days: scenario.calendar.delta().count(),
        ..CalendarSpec::default()
    };
    let calendar = derive_calendar(&records, &spec).unwrap();
    assert_eq!(calendar.days(), scenario.calendar.days());
    let pm = normalize_and_filter(&build_positions(&records, &calendar).unwrap()).unwrap();
    let direct = normalize_and_filter(&build_positions(&scenario.records, &scenario.calendar).unwrap()).unwrap();
    assert_eq!(pm.x, direct.x);
    assert_eq!(pm.investor_ids, direct.investor_ids);
    let policy = ThresholdPolicy::default();
    let (_, _, det) = run(&pm, ModelFamily::Pca, 4, &TrainConfig::default(), &policy).unwrap();
    let (_, _, det_direct) = run(&direct, ModelFamily::Pca, 4, &TrainConfig::default(), &policy).unwrap();
    assert_eq!(det.ranked, det_direct.ranked);
    let hard = scenario.ids_with(TruthLabel::Hard);
    let flagged: BTreeSet<String> = det.ranked.iter().cloned().collect();
    assert!(!hard.is_disjoint(&flagged));
}

#[test]
fn missing_column_is_a_schema_error() {
    let csv = "investor_id,date,sell_shares\na,2024-01-02,5\n";
    assert!(matches!(parse_transactions(csv.as_bytes(), &ColumnMap::default()), Err(Error::Schema(_))));
}

#[test]
fn model_files_round_trip() {
    let scenario = generate(&ScenarioConfig::small(3)).unwrap();
    let pm = normalize_and_filter(&build_positions(&scenario.records, &scenario.calendar).unwrap()).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    for family in [ModelFamily::Pca, "AE-3".parse().unwrap(), "lae".parse().unwrap()] {
        let (model, recon, _) = run(&pm, family, 3, &cfg, &ThresholdPolicy::default()).unwrap();
        let text = model.to_text();
        let back = match &model {
            FittedModel::Pca(_) => FittedModel::Pca(PcaModel::from_text(&text).unwrap()),
            FittedModel::Ae(_) => FittedModel::Ae(AeModel::from_text(&text).unwrap()),
        };
        assert_eq!(back.reconstruct(&pm.x).unwrap().x_hat, recon.x_hat);
    }
}

#[test]
fn k_scan_reports_every_k() {
    let scenario = generate(&ScenarioConfig::small(4)).unwrap();
    let pm = normalize_and_filter(&build_positions(&scenario.records, &scenario.calendar).unwrap()).unwrap();
    let ks: Vec<usize> = (2..=10).collect();
    let scan = scan_k(&pm, ModelFamily::Pca, &ks, &TrainConfig::default(), &ThresholdPolicy::default(), &StabilityRule::default()).unwrap();
    assert_eq!(scan.ks, ks);
    assert_eq!(scan.set_sizes.len(), ks.len());
    assert!(ks.contains(&scan.chosen_k));
    let mut out = Vec::new();
    scan.write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), ks.len() + 1);
}
