use majoraudit::audit::{bayes_report, emit_series, run_audit, build_client, AuditConfig, MetricKind, SeriesFile};
use majoraudit::demographics::{DemographicValue, Dimension, Gender};
use majoraudit::metrics::TopK;

fn decile_config(male: f64, female: f64, lgbtq: f64) -> AuditConfig {
    let mut c = AuditConfig::default();
    c.study.brackets = "deciles".into();
    c.study.values = Dimension::Gender.values();
    c.study.metrics = vec![MetricKind::Sds];
    c.study.n_per_cell = 40;
    c.stats.resamples = 200;
    c.backend.parallelism = 8;
    let model = &mut c.backend.synthetic;
    model.propensity.insert(DemographicValue::Gender(Gender::Male), male);
    model.propensity.insert(DemographicValue::Gender(Gender::Female), female);
    model.propensity.insert(DemographicValue::Gender(Gender::LgbtqPlus), lgbtq);
    c
}

#[test]
fn series_shape_ordering_and_json_round_trip() {
    let c = decile_config(0.9, 0.6, 0.3);
    let run = run_audit(&c, &build_client(&c).unwrap()).unwrap();
    let s = emit_series(&run.results, MetricKind::Sds, Dimension::Gender, &run.scheme, "h").unwrap();
    assert_eq!(s.series.len(), 3);
    for series in &s.series {
        let xs: Vec<u8> = series.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, (1..=10).map(|d| d * 10).collect::<Vec<u8>>());
    }
    assert_eq!(SeriesFile::from_json(&s.to_json()).unwrap(), s);
    // Injected ordering male > female > lgbtq+ at the middle deciles.
    for d in 3..7 {
        let y: Vec<f64> = s.series.iter().map(|ser| ser.points[d].mean).collect();
        assert!(y[0] > y[1] && y[1] > y[2], "decile {}: {y:?}", d + 1);
    }
    assert!(s.to_csv().lines().count() == 2 + 30);
}

#[test]
fn identical_groups_have_matching_posteriors() {
    let c = decile_config(0.6, 0.6, 0.6);
    let run = run_audit(&c, &build_client(&c).unwrap()).unwrap();
    let groups = [DemographicValue::Gender(Gender::Male), DemographicValue::Gender(Gender::Female)];
    let r = bayes_report(&run.cell_sets, &run.vocab.stem_flags(), &run.scheme, &groups, TopK::new(3).unwrap(), None).unwrap();
    assert_eq!(r.groups.len(), 2);
    for g in &r.groups {
        assert!((g.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    // Flat likelihood: posteriors stay close to the uniform prior and to each other.
    let gap: f64 = r.groups[0].posterior.iter().zip(&r.groups[1].posterior).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap < 0.25, "total variation x2 = {gap}");
    assert!((r.groups[0].posterior_mean - r.groups[1].posterior_mean).abs() < 5.0);
    assert!(r.summary().contains("P(STEM) ratio"));
}

#[test]
fn score_slope_raises_posterior_mean() {
    let mut c = decile_config(0.5, 0.5, 0.5);
    c.backend.synthetic.score_slope = 0.8;
    let run = run_audit(&c, &build_client(&c).unwrap()).unwrap();
    let g = [DemographicValue::Gender(Gender::Male)];
    let r = bayes_report(&run.cell_sets, &run.vocab.stem_flags(), &run.scheme, &g, TopK::new(3).unwrap(), None).unwrap();
    assert!(r.groups[0].posterior_mean > r.prior_mean);
}

#[test]
fn no_stem_evidence_is_reported() {
    let c = decile_config(0.0, 0.5, 0.5);
    let run = run_audit(&c, &build_client(&c).unwrap()).unwrap();
    let g = [DemographicValue::Gender(Gender::Male)];
    let err = bayes_report(&run.cell_sets, &run.vocab.stem_flags(), &run.scheme, &g, TopK::new(3).unwrap(), None).unwrap_err();
    assert!(err.to_string().contains("Male"), "{err}");
}
